//! Loss and hand-derived gradients for one 1-N batch.
//!
//! Backward pass, per pair `b` with output vector `h_b` and scores
//! `z_b = E h_b`:
//!
//! ```text
//! ∂L/∂z_b[o]   = (σ(z_b[o]) − y'_b[o]) / (n_e · B)
//! ∂L/∂E[o]    += ∂L/∂z_b[o] · h_b
//! ∂L/∂h_b      = Eᵀ ∂L/∂z_b
//! ```
//!
//! then back through hidden dropout, hidden batch norm, the masked relation
//! matrix (`∂W[i,j,k] += w_r[j] · G_r[i,k]`, `∂w_r[j] += Σ W[i,j,k] G_r[i,k]`
//! with `G_r` the summed gradient of `W ×₂ w_r`), input dropout and input
//! batch norm into the subject rows of `E`.

use std::collections::BTreeMap;

use rand::RngCore;

use super::loss::{bce_term, sigmoid};
use super::TrainConfig;
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::model::forward::{forward_batch, BnCache, BnMode};
use crate::model::{BatchNormState, TuckerModel};
use crate::tensor::{axpy, dot, DenseMatrix, DenseTensor3};

#[derive(Debug, Clone, PartialEq)]
pub struct BnGradient {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

/// Gradients shaped like the parameters they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub entity: DenseMatrix,
    pub relation: DenseMatrix,
    pub core: DenseTensor3,
    pub bn_input: Option<BnGradient>,
    pub bn_hidden: Option<BnGradient>,
}

impl GradientSet {
    pub fn zeros_like(model: &TuckerModel) -> Self {
        let bn = |s: &Option<BatchNormState>| {
            s.as_ref().map(|s| BnGradient {
                scale: vec![0.0; s.features()],
                shift: vec![0.0; s.features()],
            })
        };
        let [p, q, r] = model.core.dims();
        GradientSet {
            entity: DenseMatrix::zeros(model.n_entities(), model.entity_dim()),
            relation: DenseMatrix::zeros(model.n_relations(), model.relation_dim()),
            core: DenseTensor3::zeros(p, q, r),
            bn_input: bn(&model.bn_input),
            bn_hidden: bn(&model.bn_hidden),
        }
    }

    pub fn is_finite(&self) -> bool {
        let bn_ok = |g: &Option<BnGradient>| {
            g.as_ref()
                .is_none_or(|g| g.scale.iter().chain(&g.shift).all(|v| v.is_finite()))
        };
        self.entity.is_finite()
            && self.relation.is_finite()
            && self.core.is_finite()
            && bn_ok(&self.bn_input)
            && bn_ok(&self.bn_hidden)
    }
}

/// Batch mean and unbiased variance observed at each normalization site.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BnBatchStats {
    pub input: Option<(Vec<f64>, Vec<f64>)>,
    pub hidden: Option<(Vec<f64>, Vec<f64>)>,
}

impl BnBatchStats {
    /// Folds the observed statistics into the model's running averages.
    pub fn apply(&self, model: &mut TuckerModel) {
        if let (Some(bn), Some((mean, var))) = (model.bn_input.as_mut(), &self.input) {
            bn.update_running(mean, var);
        }
        if let (Some(bn), Some((mean, var))) = (model.bn_hidden.as_mut(), &self.hidden) {
            bn.update_running(mean, var);
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    /// Mean over the batch's pairs of the per-pair Bernoulli loss.
    pub loss: f64,
    pub grads: GradientSet,
    pub bn_stats: BnBatchStats,
}

/// Backward through a batch-norm site. Returns the input gradient and the
/// scale/shift gradients.
fn bn_backward(
    bn: &BatchNormState,
    cache: &BnCache,
    grad_out: &DenseMatrix,
) -> (DenseMatrix, BnGradient) {
    let (batch, d) = grad_out.shape();
    let xhat = &cache.normalized;
    let mut scale = vec![0.0; d];
    let mut shift = vec![0.0; d];
    for b in 0..batch {
        for f in 0..d {
            let g = grad_out.get(b, f);
            scale[f] += g * xhat.get(b, f);
            shift[f] += g;
        }
    }
    let mut grad_in = DenseMatrix::zeros(batch, d);
    if cache.batch_stats.is_some() {
        // Σ_b ∂x̂ and Σ_b ∂x̂·x̂, with ∂x̂ = ∂y · scale.
        let n = batch as f64;
        for f in 0..d {
            let sum_g = shift[f] * bn.scale[f];
            let sum_gx = scale[f] * bn.scale[f];
            for b in 0..batch {
                let g_hat = grad_out.get(b, f) * bn.scale[f];
                let v = cache.inv_std[f] / n * (n * g_hat - sum_g - xhat.get(b, f) * sum_gx);
                grad_in.set(b, f, v);
            }
        }
    } else {
        for b in 0..batch {
            for f in 0..d {
                grad_in.set(b, f, grad_out.get(b, f) * bn.scale[f] * cache.inv_std[f]);
            }
        }
    }
    (grad_in, BnGradient { scale, shift })
}

fn mask_in_place(m: &mut DenseMatrix, mask: Option<&DenseMatrix>) {
    if let Some(mask) = mask {
        for (v, k) in m.data_mut().iter_mut().zip(mask.data()) {
            *v *= k;
        }
    }
}

/// Loss and exact gradients for `batch` under the model's dropout rates.
///
/// Dropout masks are drawn from `rng`. Batch normalization uses batch
/// statistics (and differentiates through them) unless
/// `cfg.freeze_bn_stats` is set, in which case running statistics are used
/// as constants.
pub fn forward_backward<R: RngCore>(
    model: &TuckerModel,
    batch: &Batch,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<StepOutput> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    if batch.n_entities != model.n_entities() {
        return Err(Error::shape(
            "forward_backward",
            format!("batch over {} entities", batch.n_entities),
            format!("model with {} entities", model.n_entities()),
        ));
    }
    for &(s, r) in &batch.pairs {
        crate::error::check_index("entity", s, model.n_entities())?;
        crate::error::check_index("relation", r, model.n_relations())?;
    }
    let bn_mode = if cfg.freeze_bn_stats {
        BnMode::Running
    } else {
        BnMode::Batch
    };
    let cache = forward_batch(model, &batch.pairs, bn_mode, Some(rng));

    let n_b = batch.len();
    let n_e = model.n_entities();
    let d = model.entity_dim();
    let ls = cfg.label_smoothing;
    let floor = ls / n_e as f64;
    let grad_scale = 1.0 / (n_e as f64 * n_b as f64);

    let mut grads = GradientSet::zeros_like(model);
    let mut grad_h = DenseMatrix::zeros(n_b, d);
    let mut loss = 0.0;
    let mut labels = vec![0.0; n_e];
    let mut dz = vec![0.0; n_e];
    for b in 0..n_b {
        labels.fill(floor);
        for &o in &batch.objects[b] {
            labels[o] += 1.0 - ls;
        }
        let h = cache.output.row(b);
        let mut pair_loss = 0.0;
        for o in 0..n_e {
            // Clamping only affects the loss value; the gradient uses the unclamped σ.
            let p = sigmoid(dot(h, model.entity.row(o)));
            pair_loss += bce_term(p, labels[o]);
            dz[o] = (p - labels[o]) * grad_scale;
        }
        loss += pair_loss / n_e as f64;
        let gh = grad_h.row_mut(b);
        for (o, &g) in dz.iter().enumerate() {
            axpy(g, model.entity.row(o), gh);
            axpy(g, h, grads.entity.row_mut(o));
        }
    }
    loss /= n_b as f64;

    mask_in_place(&mut grad_h, cache.hidden_mask.as_ref());
    let grad_hidden_pre = match (&model.bn_hidden, &cache.bn_hidden) {
        (Some(bn), Some(c)) => {
            let (g, bg) = bn_backward(bn, c, &grad_h);
            grads.bn_hidden = Some(bg);
            g
        }
        _ => grad_h,
    };

    // Gradients of the per-relation matrices, summed over pairs.
    let mut grad_wr: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut grad_x = DenseMatrix::zeros(n_b, d);
    for (b, &(_, r)) in batch.pairs.iter().enumerate() {
        let wr = &cache.relation_matrices[&r];
        let gh = grad_hidden_pre.row(b);
        let x = cache.x.row(b);
        let acc = grad_wr.entry(r).or_insert_with(|| vec![0.0; d * d]);
        let gx = grad_x.row_mut(b);
        match &cache.relation_masks {
            Some(masks) => {
                let mask = &masks[b];
                for i in 0..d {
                    let row = wr.row(i);
                    let mrow = &mask[i * d..(i + 1) * d];
                    let arow = &mut acc[i * d..(i + 1) * d];
                    let mut s = 0.0;
                    for k in 0..d {
                        s += mrow[k] * row[k] * gh[k];
                        arow[k] += mrow[k] * x[i] * gh[k];
                    }
                    gx[i] = s;
                }
            }
            None => {
                for i in 0..d {
                    gx[i] = dot(wr.row(i), gh);
                    axpy(x[i], gh, &mut acc[i * d..(i + 1) * d]);
                }
            }
        }
    }
    let [_, d_r, _] = model.core.dims();
    for (&r, g) in &grad_wr {
        let w_r = model.relation.row(r);
        let core = model.core.data();
        let mut d_rel = vec![0.0; d_r];
        let d_core = grads.core.data_mut();
        for i in 0..d {
            let grow = &g[i * d..(i + 1) * d];
            for (j, &wj) in w_r.iter().enumerate() {
                let start = (i * d_r + j) * d;
                d_rel[j] += dot(&core[start..start + d], grow);
                axpy(wj, grow, &mut d_core[start..start + d]);
            }
        }
        axpy(1.0, &d_rel, grads.relation.row_mut(r));
    }

    mask_in_place(&mut grad_x, cache.input_mask.as_ref());
    let grad_e = match (&model.bn_input, &cache.bn_input) {
        (Some(bn), Some(c)) => {
            let (g, bg) = bn_backward(bn, c, &grad_x);
            grads.bn_input = Some(bg);
            g
        }
        _ => grad_x,
    };
    for (b, &(s, _)) in batch.pairs.iter().enumerate() {
        axpy(1.0, grad_e.row(b), grads.entity.row_mut(s));
    }

    let bn_stats = BnBatchStats {
        input: cache.bn_input.and_then(|c| c.batch_stats),
        hidden: cache.bn_hidden.and_then(|c| c.batch_stats),
    };
    Ok(StepOutput {
        loss,
        grads,
        bn_stats,
    })
}
