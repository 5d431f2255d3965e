//! Fixed core tensors under which TuckER scoring reduces to earlier bilinear
//! models, plus a RESCAL scorer that uses the core directly as a stack of
//! relation matrices.
//!
//! Packing conventions for the doubled (`2d`) models:
//! - ComplEx: entity and relation vectors are `[Re; Im]`.
//! - SimplE: entity vectors are `[head; tail]`, relation vectors are
//!   `[w_r; w_r⁻¹]`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{ModelKind, Trainable, TuckerModel};
use crate::error::{check_index, Error, Result};
use crate::tensor::{dot, DenseMatrix, DenseTensor3};

/// Superdiagonal `d × d × d` core: ones where all three indices coincide.
pub fn build_distmult_core(d: usize) -> DenseTensor3 {
    let mut z = DenseTensor3::zeros(d, d, d);
    for i in 0..d {
        z.set(i, i, i, 1.0);
    }
    z
}

/// `2d × 2d × 2d` core realizing `Re(⟨e_s, w_r, conj(e_o)⟩)`.
pub fn build_complex_core(d: usize) -> DenseTensor3 {
    let mut z = DenseTensor3::zeros(2 * d, 2 * d, 2 * d);
    for i in 0..d {
        z.set(i, i, i, 1.0);
        z.set(i, d + i, d + i, 1.0);
        z.set(d + i, i, d + i, 1.0);
        z.set(d + i, d + i, i, -1.0);
    }
    z
}

/// `2d × 2d × 2d` core realizing the averaged SimplE score.
pub fn build_simple_core(d: usize) -> DenseTensor3 {
    let mut z = DenseTensor3::zeros(2 * d, 2 * d, 2 * d);
    for i in 0..d {
        z.set(i, i, d + i, 0.5);
        z.set(d + i, d + i, i, 0.5);
    }
    z
}

/// RESCAL score `e_sᵀ · core[:, r, :] · e_o`, i.e. Tucker with an identity
/// relation factor.
pub fn rescal_score(
    entity: &DenseMatrix,
    core: &DenseTensor3,
    s: usize,
    r: usize,
    o: usize,
) -> Result<f64> {
    let [p, q, k] = core.dims();
    if p != entity.cols() || k != entity.cols() {
        return Err(Error::shape("rescal_score", entity, core));
    }
    check_index("entity", s, entity.rows())?;
    check_index("entity", o, entity.rows())?;
    check_index("relation", r, q)?;
    let es = entity.row(s);
    let eo = entity.row(o);
    let mut total = 0.0;
    for (i, &a) in es.iter().enumerate() {
        let start = core.index(i, r, 0);
        total += a * dot(&core.data()[start..start + k], eo);
    }
    Ok(total)
}

/// A model whose core is fixed to the constrained form of `kind`, with
/// Gaussian-initialized embeddings of the matching (possibly doubled) width.
///
/// For RESCAL the relation factor is a frozen identity and the core, one
/// `d × d` slice per relation, is what gets learned.
pub fn constrained_model<R: Rng + ?Sized>(
    kind: ModelKind,
    n_e: usize,
    n_r_aug: usize,
    rng: &mut R,
) -> Result<TuckerModel> {
    let d = kind.base_dim();
    if d == 0 || n_e == 0 || n_r_aug == 0 {
        return Err(Error::Config("model dimensions must be positive".into()));
    }
    let (core, rel_dim, trainable) = match kind {
        ModelKind::Tucker { d_e, d_r } => {
            let mut m = super::init_model(n_e, n_r_aug, d_e, d_r, rng)?;
            m.bn_input = None;
            m.bn_hidden = None;
            return Ok(m);
        }
        ModelKind::DistMult { d } => (
            build_distmult_core(d),
            d,
            Trainable {
                relation: true,
                core: false,
            },
        ),
        ModelKind::ComplEx { d } => (
            build_complex_core(d),
            2 * d,
            Trainable {
                relation: true,
                core: false,
            },
        ),
        ModelKind::SimplE { d } => (
            build_simple_core(d),
            2 * d,
            Trainable {
                relation: true,
                core: false,
            },
        ),
        ModelKind::Rescal { d } => {
            let dist = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("positive std");
            let core = DenseTensor3::from_fn(d, n_r_aug, d, |_, _, _| dist.sample(rng));
            (
                core,
                n_r_aug,
                Trainable {
                    relation: false,
                    core: true,
                },
            )
        }
    };
    let ent_dim = core.dims()[0];
    let ent_dist = Normal::new(0.0, 1.0 / (ent_dim as f64).sqrt()).expect("positive std");
    let entity = DenseMatrix::from_fn(n_e, ent_dim, |_, _| ent_dist.sample(rng));
    let relation = if let ModelKind::Rescal { .. } = kind {
        DenseMatrix::identity(n_r_aug)
    } else {
        let rel_dist = Normal::new(0.0, 1.0 / (rel_dim as f64).sqrt()).expect("positive std");
        DenseMatrix::from_fn(n_r_aug, rel_dim, |_, _| rel_dist.sample(rng))
    };
    let mut model = TuckerModel::new(entity, relation, core)?;
    model.trainable = trainable;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn nonzeros(t: &DenseTensor3) -> Vec<f64> {
        t.data().iter().copied().filter(|&v| v != 0.0).collect()
    }

    fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn core_score(core: &DenseTensor3, es: &[f64], wr: &[f64], eo: &[f64]) -> f64 {
        let model = TuckerModel::new(
            DenseMatrix::from_rows(&[es.to_vec(), eo.to_vec()]).unwrap(),
            DenseMatrix::from_rows(&[wr.to_vec()]).unwrap(),
            core.clone(),
        )
        .unwrap();
        model.score_triple(0, 0, 1).unwrap()
    }

    #[test]
    fn distmult_core_structure() {
        let z = build_distmult_core(2);
        assert_eq!(nonzeros(&z).len(), 2);
        assert_eq!(z.get(0, 0, 0), 1.0);
        assert_eq!(z.get(1, 1, 1), 1.0);
    }

    #[test]
    fn distmult_core_is_trilinear_product_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = build_distmult_core(5);
        for _ in 0..50 {
            let (es, wr, eo) = (randn(&mut rng, 5), randn(&mut rng, 5), randn(&mut rng, 5));
            let direct: f64 = (0..5).map(|i| es[i] * wr[i] * eo[i]).sum();
            let got = core_score(&z, &es, &wr, &eo);
            assert!((got - direct).abs() <= 1e-12);
            let swapped = core_score(&z, &eo, &wr, &es);
            assert!((got - swapped).abs() <= 1e-12);
        }
    }

    #[test]
    fn complex_core_structure() {
        let z = build_complex_core(1);
        let nz = nonzeros(&z);
        assert_eq!(nz.len(), 4);
        assert_eq!(nz.iter().sum::<f64>(), 2.0);
        let z3 = build_complex_core(3);
        assert_eq!(nonzeros(&z3).iter().filter(|&&v| v == 1.0).count(), 9);
        assert_eq!(nonzeros(&z3).iter().filter(|&&v| v == -1.0).count(), 3);
    }

    #[test]
    fn complex_core_matches_complex_arithmetic() {
        let d = 4;
        let z = build_complex_core(d);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let (es, wr, eo) = (
                randn(&mut rng, 2 * d),
                randn(&mut rng, 2 * d),
                randn(&mut rng, 2 * d),
            );
            // Re(Σ a_i b_i conj(c_i)) with a = es[i] + i·es[d+i], etc.
            let mut re = 0.0;
            for i in 0..d {
                let (ar, ai) = (es[i], es[d + i]);
                let (br, bi) = (wr[i], wr[d + i]);
                let (cr, ci) = (eo[i], -eo[d + i]);
                let (abr, abi) = (ar * br - ai * bi, ar * bi + ai * br);
                re += abr * cr - abi * ci;
            }
            assert!((core_score(&z, &es, &wr, &eo) - re).abs() <= 1e-12);
        }
    }

    #[test]
    fn complex_with_real_entities_is_symmetric() {
        let d = 3;
        let z = build_complex_core(d);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut es = randn(&mut rng, 2 * d);
        let mut eo = randn(&mut rng, 2 * d);
        let wr = randn(&mut rng, 2 * d);
        es[d..].fill(0.0);
        eo[d..].fill(0.0);
        let a = core_score(&z, &es, &wr, &eo);
        let b = core_score(&z, &eo, &wr, &es);
        assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn simple_core_structure() {
        let z = build_simple_core(1);
        assert_eq!(nonzeros(&z), vec![0.5, 0.5]);
    }

    #[test]
    fn simple_core_matches_simple_formula() {
        let d = 4;
        let z = build_simple_core(d);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let (es, wr, eo) = (
                randn(&mut rng, 2 * d),
                randn(&mut rng, 2 * d),
                randn(&mut rng, 2 * d),
            );
            let (h_s, t_s) = es.split_at(d);
            let (h_o, t_o) = eo.split_at(d);
            let (w, w_inv) = wr.split_at(d);
            let tri = |a: &[f64], b: &[f64], c: &[f64]| -> f64 {
                (0..d).map(|i| a[i] * b[i] * c[i]).sum()
            };
            let direct = 0.5 * (tri(h_s, w, t_o) + tri(h_o, w_inv, t_s));
            assert!((core_score(&z, &es, &wr, &eo) - direct).abs() <= 1e-12);
        }
    }

    #[test]
    fn simple_zero_inverse_half_leaves_first_term() {
        let d = 3;
        let z = build_simple_core(d);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (es, mut wr, eo) = (
            randn(&mut rng, 2 * d),
            randn(&mut rng, 2 * d),
            randn(&mut rng, 2 * d),
        );
        wr[d..].fill(0.0);
        let first: f64 = (0..d).map(|i| es[i] * wr[i] * eo[d + i]).sum();
        assert!((core_score(&z, &es, &wr, &eo) - 0.5 * first).abs() <= 1e-12);
    }

    #[test]
    fn rescal_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let core = DenseTensor3::from_fn(3, 2, 3, |_, _, _| rng.random_range(-1.0..1.0));
        let one_hot = DenseMatrix::identity(3);
        assert_eq!(
            rescal_score(&one_hot, &core, 2, 1, 0).unwrap(),
            core.get(2, 1, 0)
        );

        let entity = DenseMatrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
        let tucker =
            TuckerModel::new(entity.clone(), DenseMatrix::identity(2), core.clone()).unwrap();
        for s in 0..5 {
            for o in 0..5 {
                for r in 0..2 {
                    let a = rescal_score(&entity, &core, s, r, o).unwrap();
                    let b = tucker.score_triple(s, r, o).unwrap();
                    assert!((a - b).abs() <= 1e-12);
                }
            }
        }
        assert!(rescal_score(&entity, &core, 0, 2, 0).is_err());
        assert!(rescal_score(&entity, &core, 5, 0, 0).is_err());
    }

    #[test]
    fn rescal_symmetric_slice_gives_symmetric_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut core = DenseTensor3::from_fn(3, 1, 3, |_, _, _| rng.random_range(-1.0..1.0));
        for i in 0..3 {
            for k in 0..i {
                let v = core.get(i, 0, k);
                core.set(k, 0, i, v);
            }
        }
        let entity = DenseMatrix::from_fn(4, 3, |_, _| rng.random_range(-1.0..1.0));
        for s in 0..4 {
            for o in 0..4 {
                let a = rescal_score(&entity, &core, s, 0, o).unwrap();
                let b = rescal_score(&entity, &core, o, 0, s).unwrap();
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn constrained_models_have_expected_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = constrained_model(ModelKind::ComplEx { d: 3 }, 10, 4, &mut rng).unwrap();
        assert_eq!(m.entity.shape(), (10, 6));
        assert_eq!(m.relation.shape(), (4, 6));
        assert_eq!(m.core, build_complex_core(3));
        assert!(!m.trainable.core);

        let m = constrained_model(ModelKind::Rescal { d: 3 }, 10, 4, &mut rng).unwrap();
        assert_eq!(m.core.dims(), [3, 4, 3]);
        assert_eq!(m.relation, DenseMatrix::identity(4));
        assert!(!m.trainable.relation && m.trainable.core);
    }
}
