//! The TuckER link-prediction model.
//!
//! A triple `(s, r, o)` is scored as `W ×₁ e_s ×₂ w_r ×₃ e_o`, where `e_s` and
//! `e_o` are rows of the shared entity matrix, `w_r` is a row of the relation
//! matrix and `W` is the `d_e × d_r × d_e` core tensor. The probability of a
//! triple being true is `σ(score)`.
//!
//! At train time the subject embedding passes through batch normalization and
//! dropout, is multiplied by the (dropped-out) relation matrix `W ×₂ w_r`, and
//! is normalized and dropped out again before being scored against every
//! entity at once.

mod batchnorm;
pub mod checkpoint;
pub mod cores;
pub(crate) mod forward;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal, Uniform};

pub use batchnorm::BatchNormState;
pub use cores::{
    build_complex_core, build_distmult_core, build_simple_core, constrained_model, rescal_score,
};

use crate::error::{check_index, Error, Result};
use crate::tensor::{dot, mode_n_vec_product, DenseMatrix, DenseTensor3, Mode};
use forward::{forward_batch, BnMode};

/// Dropout rates on the subject embedding, the relation matrix and the
/// transformed subject embedding, in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DropoutRates {
    pub input: f64,
    pub relation: f64,
    pub hidden: f64,
}

impl DropoutRates {
    pub fn new(input: f64, relation: f64, hidden: f64) -> Self {
        DropoutRates {
            input,
            relation,
            hidden,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("input dropout", self.input),
            ("relation dropout", self.relation),
            ("hidden dropout", self.hidden),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} {p} is outside [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Which parameter blocks the optimizer may update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trainable {
    pub relation: bool,
    pub core: bool,
}

impl Default for Trainable {
    fn default() -> Self {
        Trainable {
            relation: true,
            core: true,
        }
    }
}

/// The model family a parameter count or constrained core refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Tucker { d_e: usize, d_r: usize },
    DistMult { d: usize },
    ComplEx { d: usize },
    SimplE { d: usize },
    Rescal { d: usize },
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Tucker { .. } => "tucker",
            ModelKind::DistMult { .. } => "distmult",
            ModelKind::ComplEx { .. } => "complex",
            ModelKind::SimplE { .. } => "simple",
            ModelKind::Rescal { .. } => "rescal",
        }
    }

    /// Entity dimensionality of the underlying formula, before any doubling.
    pub fn base_dim(&self) -> usize {
        match *self {
            ModelKind::Tucker { d_e, .. } => d_e,
            ModelKind::DistMult { d }
            | ModelKind::ComplEx { d }
            | ModelKind::SimplE { d }
            | ModelKind::Rescal { d } => d,
        }
    }
}

/// Number of embedding and core reals for a model of the given kind.
///
/// Batch-normalization scale and shift are not counted.
pub fn param_count(n_e: usize, n_r_aug: usize, kind: ModelKind) -> usize {
    match kind {
        ModelKind::Tucker { d_e, d_r } => n_e * d_e + n_r_aug * d_r + d_e * d_e * d_r,
        ModelKind::DistMult { d } => n_e * d + n_r_aug * d,
        ModelKind::ComplEx { d } | ModelKind::SimplE { d } => n_e * 2 * d + n_r_aug * 2 * d,
        ModelKind::Rescal { d } => n_e * d + n_r_aug * d * d,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuckerModel {
    /// `n_e × d_e`, shared by subjects and objects.
    pub entity: DenseMatrix,
    /// `n_r_aug × d_r`, including reciprocal relations.
    pub relation: DenseMatrix,
    /// `d_e × d_r × d_e`.
    pub core: DenseTensor3,
    pub bn_input: Option<BatchNormState>,
    pub bn_hidden: Option<BatchNormState>,
    pub dropout: DropoutRates,
    pub trainable: Trainable,
}

impl TuckerModel {
    /// Assembles a model with batch normalization and dropout disabled.
    pub fn new(entity: DenseMatrix, relation: DenseMatrix, core: DenseTensor3) -> Result<Self> {
        let [p, q, r] = core.dims();
        if p != entity.cols() || r != entity.cols() {
            return Err(Error::shape(
                "TuckerModel::new",
                format!("entity matrix {entity}"),
                format!("core {core}"),
            ));
        }
        if q != relation.cols() {
            return Err(Error::shape(
                "TuckerModel::new",
                format!("relation matrix {relation}"),
                format!("core {core}"),
            ));
        }
        Ok(TuckerModel {
            entity,
            relation,
            core,
            bn_input: None,
            bn_hidden: None,
            dropout: DropoutRates::default(),
            trainable: Trainable::default(),
        })
    }

    pub fn n_entities(&self) -> usize {
        self.entity.rows()
    }

    pub fn n_relations(&self) -> usize {
        self.relation.rows()
    }

    pub fn entity_dim(&self) -> usize {
        self.entity.cols()
    }

    pub fn relation_dim(&self) -> usize {
        self.relation.cols()
    }

    /// Turns on batch normalization at both sites with fresh statistics.
    pub fn with_batch_norm(mut self) -> Self {
        let d = self.entity_dim();
        self.bn_input = Some(BatchNormState::new(d));
        self.bn_hidden = Some(BatchNormState::new(d));
        self
    }

    pub fn with_dropout(mut self, dropout: DropoutRates) -> Self {
        self.dropout = dropout;
        self
    }

    /// Count of stored embedding and core reals.
    pub fn num_params(&self) -> usize {
        self.entity.data().len() + self.relation.data().len() + self.core.data().len()
    }

    pub fn is_finite(&self) -> bool {
        self.entity.is_finite()
            && self.relation.is_finite()
            && self.core.is_finite()
            && self.bn_input.as_ref().is_none_or(BatchNormState::is_finite)
            && self
                .bn_hidden
                .as_ref()
                .is_none_or(BatchNormState::is_finite)
    }

    fn check_entity(&self, id: usize) -> Result<()> {
        check_index("entity", id, self.n_entities())
    }

    fn check_relation(&self, id: usize) -> Result<()> {
        check_index("relation", id, self.n_relations())
    }

    /// Evaluation-mode transformed subject vector for `(s, r)`; its dot
    /// product with an entity row is that triple's score.
    pub fn query_vector(&self, s: usize, r: usize) -> Result<Vec<f64>> {
        self.check_entity(s)?;
        self.check_relation(r)?;
        let cache = forward_batch(self, &[(s, r)], BnMode::Running, None);
        Ok(cache.output.into_vec())
    }

    /// Raw (pre-sigmoid) score of a triple in evaluation mode.
    pub fn score_triple(&self, s: usize, r: usize, o: usize) -> Result<f64> {
        self.check_entity(o)?;
        let h = self.query_vector(s, r)?;
        Ok(dot(&h, self.entity.row(o)))
    }

    /// 1-N scoring: scores of `(s, r, o)` for every entity `o`.
    ///
    /// With `training` set, dropout masks are drawn from `rng`; a single query
    /// has no batch, so batch normalization always uses running statistics here.
    pub fn score_all_objects<R: RngCore>(
        &self,
        s: usize,
        r: usize,
        training: bool,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        self.check_entity(s)?;
        self.check_relation(r)?;
        let rng: Option<&mut dyn RngCore> = if training { Some(rng) } else { None };
        let cache = forward_batch(self, &[(s, r)], BnMode::Running, rng);
        self.entity.mul_vec(cache.output.row(0))
    }

    /// Evaluation-mode 1-N scores for several queries at once.
    pub fn score_queries(&self, queries: &[(usize, usize)]) -> Result<DenseMatrix> {
        for &(s, r) in queries {
            self.check_entity(s)?;
            self.check_relation(r)?;
        }
        let cache = forward_batch(self, queries, BnMode::Running, None);
        let n_e = self.n_entities();
        let mut out = DenseMatrix::zeros(queries.len(), n_e);
        for b in 0..queries.len() {
            let h = cache.output.row(b);
            let dst = out.row_mut(b);
            for (o, v) in dst.iter_mut().enumerate() {
                *v = dot(h, self.entity.row(o));
            }
        }
        Ok(out)
    }

    /// The relation-specific `d_e × d_e` matrix `W ×₂ w_r`.
    pub fn relation_matrix(&self, r: usize) -> Result<DenseMatrix> {
        self.check_relation(r)?;
        mode_n_vec_product(&self.core, self.relation.row(r), Mode::Two)
    }
}

/// Relative antisymmetric part `‖M − Mᵀ‖_F / max(‖M‖_F, ε)`; 0 means exactly
/// symmetric, 2 means exactly antisymmetric.
pub fn symmetry_score(m: &DenseMatrix) -> Result<f64> {
    if m.rows() != m.cols() {
        return Err(Error::shape("symmetry_score", m, "a square matrix"));
    }
    let n = m.rows();
    let mut asym = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = m.get(i, j) - m.get(j, i);
            asym += d * d;
        }
    }
    let norm = m.frobenius_norm().max(f64::EPSILON);
    Ok(asym.sqrt() / norm)
}

/// Random initialization: Gaussian embeddings with standard deviation
/// `1/√d`, a uniform `[-1, 1]` core, and batch normalization enabled.
pub fn init_model<R: Rng + ?Sized>(
    n_e: usize,
    n_r_aug: usize,
    d_e: usize,
    d_r: usize,
    rng: &mut R,
) -> Result<TuckerModel> {
    if n_e == 0 || n_r_aug == 0 || d_e == 0 || d_r == 0 {
        return Err(Error::Config(format!(
            "model dimensions must be positive (n_e={n_e}, n_r={n_r_aug}, d_e={d_e}, d_r={d_r})"
        )));
    }
    let entity_dist = Normal::new(0.0, 1.0 / (d_e as f64).sqrt()).expect("positive std");
    let relation_dist = Normal::new(0.0, 1.0 / (d_r as f64).sqrt()).expect("positive std");
    let core_dist = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let entity = DenseMatrix::from_fn(n_e, d_e, |_, _| entity_dist.sample(rng));
    let relation = DenseMatrix::from_fn(n_r_aug, d_r, |_, _| relation_dist.sample(rng));
    let core = DenseTensor3::from_fn(d_e, d_r, d_e, |_, _, _| core_dist.sample(rng));
    Ok(TuckerModel::new(entity, relation, core)?.with_batch_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_model(seed: u64, n_e: usize, n_r: usize, d_e: usize, d_r: usize) -> TuckerModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = init_model(n_e, n_r, d_e, d_r, &mut rng).unwrap();
        m.bn_input = None;
        m.bn_hidden = None;
        m
    }

    fn brute_score(m: &TuckerModel, s: usize, r: usize, o: usize) -> f64 {
        let [p, q, k] = m.core.dims();
        let mut total = 0.0;
        for a in 0..p {
            for b in 0..q {
                for c in 0..k {
                    total += m.core.get(a, b, c)
                        * m.entity.get(s, a)
                        * m.relation.get(r, b)
                        * m.entity.get(o, c);
                }
            }
        }
        total
    }

    #[test]
    fn one_hot_embeddings_select_core_entry() {
        let core = DenseTensor3::from_fn(3, 2, 3, |i, j, k| (i * 100 + j * 10 + k) as f64);
        let m = TuckerModel::new(DenseMatrix::identity(3), DenseMatrix::identity(2), core).unwrap();
        for (i, j, k) in [(0, 0, 0), (2, 1, 0), (1, 1, 2)] {
            assert_eq!(
                m.score_triple(i, j, k).unwrap(),
                (i * 100 + j * 10 + k) as f64
            );
        }
    }

    #[test]
    fn zero_core_scores_zero() {
        let mut m = random_model(1, 4, 2, 3, 2);
        m.core = DenseTensor3::zeros(3, 2, 3);
        for s in 0..4 {
            for o in 0..4 {
                assert_eq!(m.score_triple(s, 1, o).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn score_matches_full_triple_sum() {
        let m = random_model(2, 4, 2, 5, 3);
        for s in 0..4 {
            for r in 0..2 {
                for o in 0..4 {
                    let got = m.score_triple(s, r, o).unwrap();
                    assert!((got - brute_score(&m, s, r, o)).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn out_of_range_ids_are_rejected() {
        let m = random_model(3, 4, 2, 3, 2);
        assert!(matches!(m.score_triple(4, 0, 0), Err(Error::Index { .. })));
        assert!(matches!(m.score_triple(0, 2, 0), Err(Error::Index { .. })));
        assert!(matches!(m.score_triple(0, 0, 9), Err(Error::Index { .. })));
        assert!(m.relation_matrix(2).is_err());
    }

    #[test]
    fn one_n_scores_equal_per_triple_scores_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // BN on with non-trivial running statistics, dropout configured but inactive at eval.
        let mut m = init_model(3, 2, 4, 3, &mut rng)
            .unwrap()
            .with_dropout(DropoutRates::new(0.2, 0.2, 0.3));
        for bn in [m.bn_input.as_mut().unwrap(), m.bn_hidden.as_mut().unwrap()] {
            for f in 0..4 {
                bn.running_mean[f] = 0.1 * f as f64;
                bn.running_var[f] = 0.5 + f as f64;
                bn.scale[f] = 1.0 + 0.25 * f as f64;
                bn.shift[f] = -0.1;
            }
        }
        for s in 0..3 {
            for r in 0..2 {
                let all = m.score_all_objects(s, r, false, &mut rng).unwrap();
                for (o, &v) in all.iter().enumerate() {
                    assert_eq!(v, m.score_triple(s, r, o).unwrap());
                }
            }
        }
    }

    #[test]
    fn one_n_scores_match_brute_force_without_bn_or_dropout() {
        let m = random_model(5, 6, 3, 4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let all = m.score_all_objects(2, 1, false, &mut rng).unwrap();
        for (o, v) in all.iter().enumerate() {
            assert!((v - brute_score(&m, 2, 1, o)).abs() <= 1e-12);
        }
        let batch = m.score_queries(&[(2, 1), (0, 2)]).unwrap();
        assert_eq!(batch.row(0), all.as_slice());
    }

    #[test]
    fn training_scores_are_deterministic_under_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = init_model(5, 2, 4, 3, &mut rng)
            .unwrap()
            .with_dropout(DropoutRates::new(0.3, 0.4, 0.5));
        let a = m
            .score_all_objects(1, 0, true, &mut ChaCha8Rng::seed_from_u64(11))
            .unwrap();
        let b = m
            .score_all_objects(1, 0, true, &mut ChaCha8Rng::seed_from_u64(11))
            .unwrap();
        assert_eq!(a, b);
        let eval = m.score_all_objects(1, 0, false, &mut rng).unwrap();
        assert_ne!(a, eval);
    }

    #[test]
    fn relation_matrix_cases() {
        let mut m = random_model(7, 5, 3, 4, 3);
        m.relation = DenseMatrix::identity(3);
        let slice = m.relation_matrix(1).unwrap();
        for i in 0..4 {
            for k in 0..4 {
                assert_eq!(slice.get(i, k), m.core.get(i, 1, k));
            }
        }
        m.relation = DenseMatrix::zeros(3, 3);
        assert!(m
            .relation_matrix(2)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn bilinear_identity_over_random_triples() {
        let m = random_model(8, 12, 4, 5, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let (s, r, o) = (
                rng.random_range(0..12),
                rng.random_range(0..4),
                rng.random_range(0..12),
            );
            let wr = m.relation_matrix(r).unwrap();
            let bilinear = dot(&wr.vec_mul(m.entity.row(s)).unwrap(), m.entity.row(o));
            assert!((m.score_triple(s, r, o).unwrap() - bilinear).abs() <= 1e-12);
        }
    }

    #[test]
    fn symmetric_relation_matrix_gives_symmetric_scores() {
        let mut m = random_model(10, 6, 2, 4, 2);
        // Symmetrize every lateral slice so that W_r is exactly symmetric for all r.
        let [p, q, _] = m.core.dims();
        for j in 0..q {
            for i in 0..p {
                for k in 0..i {
                    let v = m.core.get(i, j, k);
                    m.core.set(k, j, i, v);
                }
            }
        }
        let wr = m.relation_matrix(1).unwrap();
        assert_eq!(symmetry_score(&wr).unwrap(), 0.0);
        for s in 0..6 {
            for o in 0..6 {
                let a = m.score_triple(s, 1, o).unwrap();
                let b = m.score_triple(o, 1, s).unwrap();
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn symmetry_score_cases() {
        let sym = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 3.0]]).unwrap();
        assert_eq!(symmetry_score(&sym).unwrap(), 0.0);
        assert_eq!(symmetry_score(&DenseMatrix::zeros(3, 3)).unwrap(), 0.0);

        let anti = DenseMatrix::from_rows(&[
            vec![0.0, 1.5, -2.0],
            vec![-1.5, 0.0, 0.5],
            vec![2.0, -0.5, 0.0],
        ])
        .unwrap();
        // Direct oracle: for antisymmetric M, M − Mᵀ = 2M.
        let fro: f64 = anti.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        let expected = (2.0 * fro) / fro;
        let got = symmetry_score(&anti).unwrap();
        assert!((got - expected).abs() <= 1e-15);
        assert!((got - 2.0).abs() <= 1e-15);

        assert!(symmetry_score(&DenseMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn param_counts_reproduce_reported_sizes() {
        assert_eq!(
            param_count(40943, 22, ModelKind::Tucker { d_e: 200, d_r: 30 }),
            9_389_260
        );
        assert_eq!(
            param_count(40943, 22, ModelKind::ComplEx { d: 200 }),
            16_386_000
        );
        assert_eq!(
            param_count(14541, 474, ModelKind::Tucker { d_e: 100, d_r: 100 }),
            2_501_500
        );
        assert_eq!(
            param_count(14541, 474, ModelKind::SimplE { d: 100 }),
            3_003_000
        );
        assert_eq!(param_count(10, 4, ModelKind::DistMult { d: 3 }), 42);
        assert_eq!(param_count(10, 4, ModelKind::Rescal { d: 3 }), 66);
    }

    #[test]
    fn param_count_matches_stored_reals() {
        let m = random_model(11, 13, 6, 5, 4);
        assert_eq!(
            m.num_params(),
            param_count(13, 6, ModelKind::Tucker { d_e: 5, d_r: 4 })
        );
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let a = init_model(7, 4, 5, 3, &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
        let b = init_model(7, 4, 5, 3, &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.entity.shape(), (7, 5));
        assert_eq!(a.relation.shape(), (4, 3));
        assert_eq!(a.core.dims(), [5, 3, 5]);
        let bn = a.bn_input.as_ref().unwrap();
        assert!(bn.scale.iter().all(|&v| v == 1.0) && bn.shift.iter().all(|&v| v == 0.0));
        assert!(a.core.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(init_model(0, 4, 5, 3, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn init_entity_std_is_one_over_sqrt_dim() {
        let d_e = 50;
        let m = init_model(20_000, 1, d_e, 1, &mut ChaCha8Rng::seed_from_u64(13)).unwrap();
        let data = m.entity.data();
        assert_eq!(data.len(), 1_000_000);
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        let var = data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let target = 1.0 / (d_e as f64).sqrt();
        assert!((var.sqrt() - target).abs() / target < 0.05);
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let err = TuckerModel::new(
            DenseMatrix::zeros(3, 4),
            DenseMatrix::zeros(2, 2),
            DenseTensor3::zeros(4, 3, 4),
        );
        assert!(matches!(err, Err(Error::Shape { .. })));
    }
}
