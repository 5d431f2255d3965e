//! Batched forward pass shared by scoring and training.
//!
//! Pipeline per `(s, r)` pair:
//! `e_s → bn_input → dropout(input) → ·(W ×₂ w_r ⊙ dropout(relation)) → bn_hidden → dropout(hidden)`.
//! The output row is the vector that gets dotted with every entity embedding.

use std::collections::BTreeMap;

use rand::{Rng, RngCore};

use super::{BatchNormState, TuckerModel};
use crate::tensor::{axpy, mode_n_vec_product, DenseMatrix, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BnMode {
    /// Normalize with the statistics of the current batch.
    Batch,
    /// Normalize with the stored running statistics.
    Running,
}

#[derive(Debug, Clone)]
pub(crate) struct BnCache {
    pub normalized: DenseMatrix,
    pub inv_std: Vec<f64>,
    /// Present only in `BnMode::Batch`: batch mean and unbiased variance.
    pub batch_stats: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone)]
pub(crate) struct ForwardCache {
    pub bn_input: Option<BnCache>,
    pub input_mask: Option<DenseMatrix>,
    /// Input to the relation transform (after normalization and dropout).
    pub x: DenseMatrix,
    pub relation_matrices: BTreeMap<usize, DenseMatrix>,
    /// Per pair, a scaled `d_e × d_e` mask over the relation matrix.
    pub relation_masks: Option<Vec<Vec<f64>>>,
    pub bn_hidden: Option<BnCache>,
    pub hidden_mask: Option<DenseMatrix>,
    pub output: DenseMatrix,
}

fn batch_norm(bn: &BatchNormState, x: &mut DenseMatrix, mode: BnMode) -> BnCache {
    let (batch, d) = x.shape();
    let (mean, inv_std, batch_stats) = match mode {
        BnMode::Batch => {
            let n = batch as f64;
            let mut mean = vec![0.0; d];
            for b in 0..batch {
                axpy(1.0, x.row(b), &mut mean);
            }
            mean.iter_mut().for_each(|m| *m /= n);
            let mut var = vec![0.0; d];
            for b in 0..batch {
                for (f, v) in x.row(b).iter().enumerate() {
                    var[f] += (v - mean[f]) * (v - mean[f]);
                }
            }
            var.iter_mut().for_each(|v| *v /= n);
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + bn.epsilon).sqrt()).collect();
            let unbiased: Vec<f64> = if batch > 1 {
                var.iter().map(|v| v * n / (n - 1.0)).collect()
            } else {
                var
            };
            (mean.clone(), inv_std, Some((mean, unbiased)))
        }
        BnMode::Running => {
            let inv_std = bn
                .running_var
                .iter()
                .map(|v| 1.0 / (v + bn.epsilon).sqrt())
                .collect();
            (bn.running_mean.clone(), inv_std, None)
        }
    };
    let mut normalized = DenseMatrix::zeros(batch, d);
    for b in 0..batch {
        let xn = normalized.row_mut(b);
        for f in 0..d {
            xn[f] = (x.get(b, f) - mean[f]) * inv_std[f];
        }
        let out = x.row_mut(b);
        for f in 0..d {
            out[f] = bn.scale[f] * xn[f] + bn.shift[f];
        }
    }
    BnCache {
        normalized,
        inv_std,
        batch_stats,
    }
}

fn dropout_mask(rng: &mut dyn RngCore, len: usize, p: f64) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect()
}

fn apply_mask(x: &mut DenseMatrix, rng: &mut dyn RngCore, p: f64) -> DenseMatrix {
    let (rows, cols) = x.shape();
    let mask =
        DenseMatrix::from_vec(rows, cols, dropout_mask(rng, rows * cols, p)).expect("mask shape");
    for (v, m) in x.data_mut().iter_mut().zip(mask.data()) {
        *v *= m;
    }
    mask
}

/// Runs the pipeline for `pairs`. Dropout is applied only when `rng` is given.
pub(crate) fn forward_batch(
    model: &TuckerModel,
    pairs: &[(usize, usize)],
    bn_mode: BnMode,
    mut rng: Option<&mut dyn RngCore>,
) -> ForwardCache {
    let d = model.entity_dim();
    let batch = pairs.len();
    let dropout = model.dropout;

    let mut x = DenseMatrix::zeros(batch, d);
    for (b, &(s, _)) in pairs.iter().enumerate() {
        x.row_mut(b).copy_from_slice(model.entity.row(s));
    }
    let bn_input = model
        .bn_input
        .as_ref()
        .map(|bn| batch_norm(bn, &mut x, bn_mode));
    let input_mask = match rng.as_deref_mut() {
        Some(rng) if dropout.input > 0.0 => Some(apply_mask(&mut x, rng, dropout.input)),
        _ => None,
    };

    let mut relation_matrices = BTreeMap::new();
    for &(_, r) in pairs {
        relation_matrices.entry(r).or_insert_with(|| {
            mode_n_vec_product(&model.core, model.relation.row(r), Mode::Two)
                .expect("core and relation dims agree")
        });
    }

    let relation_masks = match rng.as_deref_mut() {
        Some(rng) if dropout.relation > 0.0 => Some(
            (0..batch)
                .map(|_| dropout_mask(rng, d * d, dropout.relation))
                .collect::<Vec<_>>(),
        ),
        _ => None,
    };

    let mut hidden = DenseMatrix::zeros(batch, d);
    for (b, &(_, r)) in pairs.iter().enumerate() {
        let wr = &relation_matrices[&r];
        let h = hidden.row_mut(b);
        match &relation_masks {
            Some(masks) => {
                let mask = &masks[b];
                for (i, &xi) in x.row(b).iter().enumerate() {
                    let row = wr.row(i);
                    let mrow = &mask[i * d..(i + 1) * d];
                    for k in 0..d {
                        h[k] += xi * mrow[k] * row[k];
                    }
                }
            }
            None => {
                for (i, &xi) in x.row(b).iter().enumerate() {
                    axpy(xi, wr.row(i), h);
                }
            }
        }
    }

    let bn_hidden = model
        .bn_hidden
        .as_ref()
        .map(|bn| batch_norm(bn, &mut hidden, bn_mode));
    let hidden_mask = match rng {
        Some(rng) if dropout.hidden > 0.0 => Some(apply_mask(&mut hidden, rng, dropout.hidden)),
        _ => None,
    };

    ForwardCache {
        bn_input,
        input_mask,
        x,
        relation_matrices,
        relation_masks,
        bn_hidden,
        hidden_mask,
        output: hidden,
    }
}
