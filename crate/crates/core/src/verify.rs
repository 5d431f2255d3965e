//! Self-check suites: constrained-core equivalences, gradient checks,
//! ranking checks and exact separation.
//!
//! Each suite compares the library against an independent direct
//! computation and reports pass/fail with its worst observed error.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Batch, Triple};
use crate::error::{Error, Result};
use crate::eval::filtered_rank;
use crate::expressiveness::{construct_full_expressive, random_world, verify_separation};
use crate::model::{
    build_complex_core, build_distmult_core, build_simple_core, init_model, rescal_score,
    DropoutRates, TuckerModel,
};
use crate::tensor::{DenseMatrix, DenseTensor3};
use crate::train::{forward_backward, sigmoid, GradientSet, TrainConfig};

pub const EQUIVALENCE_TOL: f64 = 1e-12;
pub const GRADIENT_REL_TOL: f64 = 1e-4;
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    DistMult,
    ComplEx,
    SimplE,
    Rescal,
    Gradients,
    Ranking,
    Expressiveness,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::DistMult,
        Suite::ComplEx,
        Suite::SimplE,
        Suite::Rescal,
        Suite::Gradients,
        Suite::Ranking,
        Suite::Expressiveness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::DistMult => "distmult",
            Suite::ComplEx => "complex",
            Suite::SimplE => "simple",
            Suite::Rescal => "rescal",
            Suite::Gradients => "gradients",
            Suite::Ranking => "ranking",
            Suite::Expressiveness => "expressiveness",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown suite '{s}'")))
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Run only this suite.
    pub suite: Option<Suite>,
    /// Random draws per equivalence suite.
    pub trials: usize,
    pub seed: u64,
    /// Negative control: perturb one entry of the ComplEx core.
    pub corrupt_core: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            suite: None,
            trials: 1000,
            seed: 0,
            corrupt_core: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub suite: Suite,
    pub passed: bool,
    pub checks: usize,
    pub detail: String,
}

impl fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:<15} {:>6} checks  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite.name(),
            self.checks,
            self.detail
        )
    }
}

pub fn run(opts: &VerifyOptions) -> Vec<SuiteResult> {
    let suites: Vec<Suite> = match opts.suite {
        Some(s) => vec![s],
        None => Suite::ALL.to_vec(),
    };
    suites.into_iter().map(|s| run_suite(s, opts)).collect()
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (suite as u64).wrapping_mul(0x9E37_79B9));
    let outcome = match suite {
        Suite::DistMult => distmult_suite(opts.trials, &mut rng),
        Suite::ComplEx => complex_suite(opts.trials, opts.corrupt_core, &mut rng),
        Suite::SimplE => simple_suite(opts.trials, &mut rng),
        Suite::Rescal => rescal_suite(opts.trials, &mut rng),
        Suite::Gradients => gradient_suite(opts.seed),
        Suite::Ranking => ranking_suite(200, &mut rng),
        Suite::Expressiveness => expressiveness_suite(50, &mut rng),
    };
    match outcome {
        Ok((passed, checks, detail)) => SuiteResult {
            suite,
            passed,
            checks,
            detail,
        },
        Err(e) => SuiteResult {
            suite,
            passed: false,
            checks: 0,
            detail: format!("error: {e}"),
        },
    }
}

type Outcome = Result<(bool, usize, String)>;

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Scores one triple through the general model path with the given core.
fn tucker_score(core: &DenseTensor3, es: &[f64], wr: &[f64], eo: &[f64]) -> Result<f64> {
    let model = TuckerModel::new(
        DenseMatrix::from_rows(&[es.to_vec(), eo.to_vec()])?,
        DenseMatrix::from_rows(&[wr.to_vec()])?,
        core.clone(),
    )?;
    model.score_triple(0, 0, 1)
}

fn equivalence(
    trials: usize,
    rng: &mut ChaCha8Rng,
    core: &DenseTensor3,
    width: usize,
    direct: impl Fn(&[f64], &[f64], &[f64]) -> f64,
) -> Outcome {
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let es = uniform_vec(rng, width);
        let wr = uniform_vec(rng, width);
        let eo = uniform_vec(rng, width);
        let err = (tucker_score(core, &es, &wr, &eo)? - direct(&es, &wr, &eo)).abs();
        worst = worst.max(err);
    }
    Ok((
        worst <= EQUIVALENCE_TOL,
        trials,
        format!("max |Δ| = {worst:.3e} (tol {EQUIVALENCE_TOL:e})"),
    ))
}

fn pick_dim(rng: &mut ChaCha8Rng) -> usize {
    rng.random_range(1..=6)
}

/// `⟨a, b, c⟩ = Σ a_i b_i c_i`.
fn trilinear(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    a.iter().zip(b).zip(c).map(|((x, y), z)| x * y * z).sum()
}

fn distmult_suite(trials: usize, rng: &mut ChaCha8Rng) -> Outcome {
    let d = pick_dim(rng);
    equivalence(trials, rng, &build_distmult_core(d), d, trilinear)
}

fn complex_suite(trials: usize, corrupt: bool, rng: &mut ChaCha8Rng) -> Outcome {
    let d = pick_dim(rng);
    let mut core = build_complex_core(d);
    if corrupt {
        // Move the negative entry onto the wrong diagonal.
        core.set(d, d, 0, 0.0);
        core.set(d, 0, 0, -1.0);
    }
    equivalence(trials, rng, &core, 2 * d, |es, wr, eo| {
        // Re(Σ a_i b_i conj(c_i)) with complex numbers packed as [Re; Im].
        let mut total = 0.0;
        for i in 0..d {
            let (ar, ai) = (es[i], es[d + i]);
            let (br, bi) = (wr[i], wr[d + i]);
            let (cr, ci) = (eo[i], -eo[d + i]);
            let (pr, pi) = (ar * br - ai * bi, ar * bi + ai * br);
            total += pr * cr - pi * ci;
        }
        total
    })
}

fn simple_suite(trials: usize, rng: &mut ChaCha8Rng) -> Outcome {
    let d = pick_dim(rng);
    equivalence(trials, rng, &build_simple_core(d), 2 * d, |es, wr, eo| {
        let (h_s, t_s) = es.split_at(d);
        let (h_o, t_o) = eo.split_at(d);
        let (w, w_inv) = wr.split_at(d);
        0.5 * (trilinear(h_s, w, t_o) + trilinear(h_o, w_inv, t_s))
    })
}

fn rescal_suite(trials: usize, rng: &mut ChaCha8Rng) -> Outcome {
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let d = pick_dim(rng);
        let n_r = rng.random_range(1..=3);
        let n_e = 3;
        let entity = DenseMatrix::from_fn(n_e, d, |_, _| rng.random_range(-1.0..1.0));
        let core = DenseTensor3::from_fn(d, n_r, d, |_, _, _| rng.random_range(-1.0..1.0));
        let (s, r, o) = (
            rng.random_range(0..n_e),
            rng.random_range(0..n_r),
            rng.random_range(0..n_e),
        );
        // Direct bilinear form e_sᵀ W_r e_o.
        let mut direct = 0.0;
        for i in 0..d {
            for k in 0..d {
                direct += entity.get(s, i) * core.get(i, r, k) * entity.get(o, k);
            }
        }
        let tucker = TuckerModel::new(entity.clone(), DenseMatrix::identity(n_r), core.clone())?;
        let a = rescal_score(&entity, &core, s, r, o)?;
        let b = tucker.score_triple(s, r, o)?;
        worst = worst.max((a - direct).abs()).max((b - direct).abs());
    }
    Ok((
        worst <= EQUIVALENCE_TOL,
        trials,
        format!("max |Δ| = {worst:.3e} (tol {EQUIVALENCE_TOL:e})"),
    ))
}

/// A single scalar parameter of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRef {
    Entity(usize, usize),
    Relation(usize, usize),
    Core(usize, usize, usize),
    BnInputScale(usize),
    BnInputShift(usize),
    BnHiddenScale(usize),
    BnHiddenShift(usize),
}

impl ParamRef {
    fn slot<'a>(&self, m: &'a mut TuckerModel) -> &'a mut f64 {
        match *self {
            ParamRef::Entity(i, j) => &mut m.entity.row_mut(i)[j],
            ParamRef::Relation(i, j) => &mut m.relation.row_mut(i)[j],
            ParamRef::Core(i, j, k) => {
                let idx = m.core.index(i, j, k);
                &mut m.core.data_mut()[idx]
            }
            ParamRef::BnInputScale(f) => {
                &mut m.bn_input.as_mut().expect("input batch norm").scale[f]
            }
            ParamRef::BnInputShift(f) => {
                &mut m.bn_input.as_mut().expect("input batch norm").shift[f]
            }
            ParamRef::BnHiddenScale(f) => {
                &mut m.bn_hidden.as_mut().expect("hidden batch norm").scale[f]
            }
            ParamRef::BnHiddenShift(f) => {
                &mut m.bn_hidden.as_mut().expect("hidden batch norm").shift[f]
            }
        }
    }

    pub fn get(&self, g: &GradientSet) -> f64 {
        match *self {
            ParamRef::Entity(i, j) => g.entity.get(i, j),
            ParamRef::Relation(i, j) => g.relation.get(i, j),
            ParamRef::Core(i, j, k) => g.core.get(i, j, k),
            ParamRef::BnInputScale(f) => g.bn_input.as_ref().map_or(0.0, |b| b.scale[f]),
            ParamRef::BnInputShift(f) => g.bn_input.as_ref().map_or(0.0, |b| b.shift[f]),
            ParamRef::BnHiddenScale(f) => g.bn_hidden.as_ref().map_or(0.0, |b| b.scale[f]),
            ParamRef::BnHiddenShift(f) => g.bn_hidden.as_ref().map_or(0.0, |b| b.shift[f]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub param: ParamRef,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps near-zero gradients from
/// dividing round-off by round-off.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares analytic gradients with central differences of step `h` for
/// each parameter in `params`. Every loss evaluation reseeds the dropout
/// stream with `seed`, so the masks are identical across perturbations.
pub fn gradient_check(
    model: &TuckerModel,
    batch: &Batch,
    cfg: &TrainConfig,
    seed: u64,
    params: &[ParamRef],
    h: f64,
) -> Result<Vec<GradCheck>> {
    let analytic = forward_backward(model, batch, cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let mut probe = model.clone();
    let loss_at = |p: ParamRef, delta: f64, probe: &mut TuckerModel| -> Result<f64> {
        let orig = *p.slot(probe);
        *p.slot(probe) = orig + delta;
        let out = forward_backward(probe, batch, cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        *p.slot(probe) = orig;
        Ok(out?.loss)
    };
    params
        .iter()
        .map(|&p| {
            let plus = loss_at(p, h, &mut probe)?;
            let minus = loss_at(p, -h, &mut probe)?;
            let numeric = (plus - minus) / (2.0 * h);
            let a = p.get(&analytic.grads);
            Ok(GradCheck {
                param: p,
                analytic: a,
                numeric,
                rel_error: relative_error(a, numeric),
            })
        })
        .collect()
}

/// Draws `per_class` parameters from every parameter class of `model`.
pub fn sample_params(model: &TuckerModel, per_class: usize, rng: &mut impl Rng) -> Vec<ParamRef> {
    let (n_e, d_e) = model.entity.shape();
    let (n_r, d_r) = model.relation.shape();
    let [p, q, r] = model.core.dims();
    let mut out = Vec::new();
    for _ in 0..per_class {
        out.push(ParamRef::Entity(
            rng.random_range(0..n_e),
            rng.random_range(0..d_e),
        ));
        out.push(ParamRef::Relation(
            rng.random_range(0..n_r),
            rng.random_range(0..d_r),
        ));
        out.push(ParamRef::Core(
            rng.random_range(0..p),
            rng.random_range(0..q),
            rng.random_range(0..r),
        ));
        if model.bn_input.is_some() {
            out.push(ParamRef::BnInputScale(rng.random_range(0..d_e)));
            out.push(ParamRef::BnInputShift(rng.random_range(0..d_e)));
        }
        if model.bn_hidden.is_some() {
            out.push(ParamRef::BnHiddenScale(rng.random_range(0..d_e)));
            out.push(ParamRef::BnHiddenShift(rng.random_range(0..d_e)));
        }
    }
    out
}

/// The tiny gradient-check fixture: 6 entities, `d_e = 4`, `d_r = 3`,
/// batch normalization on with randomized frozen statistics, dropout off.
pub fn gradient_fixture(seed: u64) -> Result<(TuckerModel, Batch, TrainConfig)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_e = 6;
    let mut model = init_model(n_e, 4, 4, 3, &mut rng)?;
    for bn in [model.bn_input.as_mut(), model.bn_hidden.as_mut()]
        .into_iter()
        .flatten()
    {
        for f in 0..bn.features() {
            bn.scale[f] = rng.random_range(0.5..1.5);
            bn.shift[f] = rng.random_range(-0.3..0.3);
            bn.running_mean[f] = rng.random_range(-0.2..0.2);
            bn.running_var[f] = rng.random_range(0.5..2.0);
        }
    }
    model.dropout = DropoutRates::default();
    let batch = Batch {
        pairs: vec![(0, 0), (3, 1), (5, 2), (2, 3)],
        objects: vec![vec![1, 2], vec![0], vec![4, 5, 1], vec![3]],
        n_entities: n_e,
    };
    let cfg = TrainConfig {
        label_smoothing: 0.1,
        freeze_bn_stats: true,
        ..TrainConfig::default()
    };
    Ok((model, batch, cfg))
}

fn gradient_suite(seed: u64) -> Outcome {
    let (model, batch, cfg) = gradient_fixture(seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let params = sample_params(&model, 5, &mut rng);
    let checks = gradient_check(&model, &batch, &cfg, seed, &params, FD_STEP)?;
    let worst = checks.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    Ok((
        worst < GRADIENT_REL_TOL,
        checks.len(),
        format!("max relative error {worst:.3e} (tol {GRADIENT_REL_TOL:e})"),
    ))
}

/// Sort-based rank: filtered competitors removed, true object placed first
/// among equal scores.
pub fn sort_rank(scores: &[f64], true_o: usize, filter: &[usize]) -> usize {
    let mut cands: Vec<usize> = (0..scores.len())
        .filter(|o| *o == true_o || !filter.contains(o))
        .collect();
    cands.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| (b == true_o).cmp(&(a == true_o)))
    });
    cands
        .iter()
        .position(|&o| o == true_o)
        .expect("true object kept")
        + 1
}

fn ranking_suite(queries: usize, rng: &mut ChaCha8Rng) -> Outcome {
    let mut mismatches = 0;
    for _ in 0..queries {
        let n = rng.random_range(1..60);
        // Coarse values so that ties occur.
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..12) as f64 * 0.25)
            .collect();
        let true_o = rng.random_range(0..n);
        let filter: Vec<usize> = (0..n)
            .filter(|&o| o == true_o || rng.random_bool(0.25))
            .collect();
        if filtered_rank(&scores, true_o, &filter)? != sort_rank(&scores, true_o, &filter) {
            mismatches += 1;
        }
    }
    Ok((mismatches == 0, queries, format!("{mismatches} mismatches")))
}

fn expressiveness_suite(worlds: usize, rng: &mut ChaCha8Rng) -> Outcome {
    let expected_margin = sigmoid(1.0) - 0.5;
    let mut errors = 0;
    let mut worst_margin_gap: f64 = 0.0;
    let mut triples = 0;
    for _ in 0..worlds {
        let n_e = rng.random_range(1..=8);
        let n_r = rng.random_range(1..=4);
        let density = rng.random_range(0.0..1.0);
        let world: Vec<Triple> = random_world(n_e, n_r, density, rng);
        let model = construct_full_expressive(&world, n_e, n_r)?;
        let report = verify_separation(&model, &world, 0.5)?;
        errors += report.total - report.correct;
        triples += report.total;
        worst_margin_gap = worst_margin_gap.max((report.margin - expected_margin).abs());
    }
    Ok((
        errors == 0 && worst_margin_gap < 1e-12,
        triples,
        format!("{errors} misclassified, margin deviation {worst_margin_gap:.1e}"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass_with_small_trials() {
        let opts = VerifyOptions {
            trials: 50,
            ..VerifyOptions::default()
        };
        for r in run(&opts) {
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn corrupted_core_fails_complex_suite() {
        let opts = VerifyOptions {
            suite: Some(Suite::ComplEx),
            trials: 20,
            corrupt_core: true,
            ..VerifyOptions::default()
        };
        let results = run(&opts);
        assert_eq!(results.len(), 1);
        assert!(!results[0].passed);
    }

    #[test]
    fn suite_names_parse() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!(relative_error(1e-12, 2e-12) < 1e-5);
    }
}
