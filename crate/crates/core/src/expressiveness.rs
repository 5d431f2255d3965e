//! Exact representation of an arbitrary truth assignment.
//!
//! With one-hot entity and relation embeddings (`d_e = n_e`, `d_r = n_r`) the
//! score of `(i, j, k)` is the core entry `W[i, j, k]`. Setting that entry to
//! `+1` for true facts and `-1` otherwise makes `σ(score)` fall on the correct
//! side of 0.5 for every possible triple.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::Rng;

use crate::data::Triple;
use crate::error::{check_index, Error, Result};
use crate::model::TuckerModel;
use crate::tensor::{DenseMatrix, DenseTensor3};
use crate::train::sigmoid;

/// Upper bound on `n_e² · n_r` for exhaustive verification.
pub const MAX_ENUMERATED_TRIPLES: usize = 1_000_000;

/// Builds the one-hot model that reproduces `world` exactly.
pub fn construct_full_expressive(world: &[Triple], n_e: usize, n_r: usize) -> Result<TuckerModel> {
    let mut core = DenseTensor3::from_vec(n_e, n_r, n_e, vec![-1.0; n_e * n_r * n_e])?;
    for &(s, r, o) in world {
        check_index("entity", s, n_e)?;
        check_index("relation", r, n_r)?;
        check_index("entity", o, n_e)?;
        core.set(s, r, o, 1.0);
    }
    TuckerModel::new(DenseMatrix::identity(n_e), DenseMatrix::identity(n_r), core)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationReport {
    pub correct: usize,
    pub total: usize,
    /// Smallest distance of any `σ(score)` from the threshold.
    pub margin: f64,
}

impl SeparationReport {
    pub fn is_exact(&self) -> bool {
        self.correct == self.total
    }

    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }

    pub fn to_text(&self) -> String {
        format!(
            "separation: {}/{} correct ({:.4}), margin {:.6}\n",
            self.correct,
            self.total,
            self.accuracy(),
            self.margin
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("correct,total,margin\n");
        let _ = writeln!(out, "{},{},{}", self.correct, self.total, self.margin);
        out
    }
}

/// Classifies every possible triple by `σ(score) > threshold` and compares
/// against `world`. A probability exactly at the threshold counts as false.
pub fn verify_separation(
    model: &TuckerModel,
    world: &[Triple],
    threshold: f64,
) -> Result<SeparationReport> {
    let n_e = model.n_entities();
    let n_r = model.n_relations();
    let total = n_e
        .checked_mul(n_e)
        .and_then(|v| v.checked_mul(n_r))
        .unwrap_or(usize::MAX);
    if total > MAX_ENUMERATED_TRIPLES {
        return Err(Error::WorldTooLarge {
            triples: total,
            limit: MAX_ENUMERATED_TRIPLES,
        });
    }
    let truth: HashSet<Triple> = world.iter().copied().collect();
    let mut correct = 0;
    let mut margin = f64::INFINITY;
    for r in 0..n_r {
        let queries: Vec<(usize, usize)> = (0..n_e).map(|s| (s, r)).collect();
        let scores = model.score_queries(&queries)?;
        for s in 0..n_e {
            for (o, &z) in scores.row(s).iter().enumerate() {
                let p = sigmoid(z);
                let predicted = p > threshold;
                if predicted == truth.contains(&(s, r, o)) {
                    correct += 1;
                }
                margin = margin.min((p - threshold).abs());
            }
        }
    }
    Ok(SeparationReport {
        correct,
        total,
        margin,
    })
}

/// A random truth assignment where each triple holds with probability `density`.
pub fn random_world<R: Rng + ?Sized>(
    n_e: usize,
    n_r: usize,
    density: f64,
    rng: &mut R,
) -> Vec<Triple> {
    let mut world = Vec::new();
    for s in 0..n_e {
        for r in 0..n_r {
            for o in 0..n_e {
                if rng.random_bool(density) {
                    world.push((s, r, o));
                }
            }
        }
    }
    world
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_world_scores_minus_one() {
        let m = construct_full_expressive(&[], 3, 2).unwrap();
        for s in 0..3 {
            for o in 0..3 {
                let z = m.score_triple(s, 1, o).unwrap();
                assert_eq!(z, -1.0);
                assert!((sigmoid(z) - 0.2689414213699951).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn full_world_scores_plus_one() {
        let world: Vec<Triple> = (0..2)
            .flat_map(|s| (0..2).flat_map(move |r| (0..2).map(move |o| (s, r, o))))
            .collect();
        let m = construct_full_expressive(&world, 2, 2).unwrap();
        for &(s, r, o) in &world {
            let z = m.score_triple(s, r, o).unwrap();
            assert_eq!(z, 1.0);
            assert!(sigmoid(z) > 0.7310);
        }
    }

    #[test]
    fn random_world_is_reproduced_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let world = random_world(8, 4, 0.3, &mut rng);
        let m = construct_full_expressive(&world, 8, 4).unwrap();
        assert_eq!(m.entity.shape(), (8, 8));
        assert_eq!(m.relation.shape(), (4, 4));
        let truth: HashSet<Triple> = world.iter().copied().collect();
        for s in 0..8 {
            for r in 0..4 {
                for o in 0..8 {
                    let z = m.score_triple(s, r, o).unwrap();
                    assert!(z == 1.0 || z == -1.0);
                    assert_eq!(sigmoid(z) > 0.5, truth.contains(&(s, r, o)));
                }
            }
        }
        let report = verify_separation(&m, &world, 0.5).unwrap();
        assert_eq!((report.correct, report.total), (256, 256));
        assert!((report.margin - (sigmoid(1.0) - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn zero_model_sits_on_the_boundary() {
        let mut m = construct_full_expressive(&[], 3, 1).unwrap();
        m.core.data_mut().fill(0.0);
        let world = vec![(0, 0, 1), (2, 0, 2)];
        let report = verify_separation(&m, &world, 0.5).unwrap();
        assert_eq!(report.margin, 0.0);
        assert_eq!(report.correct, 9 - world.len());
    }

    #[test]
    fn guards() {
        assert!(construct_full_expressive(&[(0, 0, 3)], 3, 1).is_err());
        assert!(construct_full_expressive(&[(0, 1, 0)], 3, 1).is_err());
        let big = TuckerModel::new(
            DenseMatrix::zeros(1001, 1),
            DenseMatrix::zeros(1, 1),
            DenseTensor3::zeros(1, 1, 1),
        )
        .unwrap();
        assert!(matches!(
            verify_separation(&big, &[], 0.5),
            Err(Error::WorldTooLarge { .. })
        ));
    }

    #[test]
    fn report_formats() {
        let r = SeparationReport {
            correct: 3,
            total: 4,
            margin: 0.25,
        };
        assert_eq!(r.to_csv(), "correct,total,margin\n3,4,0.25\n");
        assert!(r.to_text().contains("3/4"));
        assert!(!r.is_exact());
    }
}
