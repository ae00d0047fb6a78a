//! The regularized training loss and its exact gradients.
//!
//! Total loss = mean cross-entropy over the batch
//!            + c_W * sum |W_ij|
//!            + c_N * sum over iterations l >= 1 and samples of |N^(l)|
//!            + c_syn * sum D_ij |W_ij|,
//! where `D` is the symmetric synaptic distance-weight matrix. The
//! regularizer terms are not divided by the batch size; the activity term
//! sums over the samples of the batch. Gradients are computed by
//! backpropagation through the unrolled `I`-step recursion, with the
//! residual variants' identity paths carried across iterations. The L1
//! subgradient at exactly zero is taken as zero.

use crate::error::{Result, UrnError};
use crate::geometry::{NeuronGeometry, DEFAULT_DISTANCE_MATRIX_BUDGET};
use crate::math::{Matrix, Vector};
use crate::model::{ActivationFn, BatchTrace, ForwardTrace, UrnParams, UrnVariant};

/// Regularizer strengths. `geometry` is required whenever `synaptic > 0`.
#[derive(Debug, Clone)]
pub struct LossConfig {
    pub weight_l1: f64,
    pub activity_l1: f64,
    pub synaptic: f64,
    pub gamma: f64,
    pub geometry: Option<NeuronGeometry>,
}

impl LossConfig {
    pub fn unregularized() -> Self {
        LossConfig {
            weight_l1: 0.0,
            activity_l1: 0.0,
            synaptic: 0.0,
            gamma: 1.0,
            geometry: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c_w", self.weight_l1),
            ("c_n", self.activity_l1),
            ("c_syn", self.synaptic),
        ] {
            if !(v >= 0.0) {
                return Err(UrnError::Config(format!(
                    "regularizer strength {name} must be >= 0, got {v}"
                )));
            }
        }
        if self.synaptic > 0.0 {
            match &self.geometry {
                Some(g) if g.dims().is_some() => {}
                _ => {
                    return Err(UrnError::Config(
                        "synaptic length regularization (c_syn > 0) requires a Grid3D geometry"
                            .into(),
                    ))
                }
            }
        }
        Ok(())
    }

    /// Validates and precomputes the distance-weight matrix when it fits the
    /// memory budget; otherwise synaptic weights are computed on the fly.
    pub fn prepare(self) -> Result<PreparedLoss> {
        self.validate()?;
        let distance_weights = if self.synaptic > 0.0 {
            let g = self.geometry.as_ref().unwrap();
            let s = g.size();
            if s.saturating_mul(s) <= DEFAULT_DISTANCE_MATRIX_BUDGET {
                Some(g.distance_weight_matrix(self.gamma)?)
            } else {
                None
            }
        } else {
            None
        };
        Ok(PreparedLoss {
            config: self,
            distance_weights,
        })
    }
}

/// A validated loss configuration, with the synaptic distance weights
/// materialized when affordable.
#[derive(Debug, Clone)]
pub struct PreparedLoss {
    pub config: LossConfig,
    distance_weights: Option<Matrix>,
}

/// Loss value split into its terms. `total` is always the sum of the parts.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossBreakdown {
    pub cross_entropy: f64,
    pub weight_l1: f64,
    pub activity_l1: f64,
    pub synaptic_length: f64,
    pub total: f64,
}

/// Gradient of the total loss with respect to the URN parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub d_weights: Matrix,
    pub d_bias: Vector,
}

/// Minimum-norm L1 subgradient.
#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Numerically stabilized softmax cross-entropy for one sample.
/// Returns the loss and its gradient with respect to the logits
/// (softmax minus one-hot).
pub fn softmax_xent(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if logits.len() < 2 {
        return Err(UrnError::Config(format!(
            "cross-entropy needs at least 2 classes, got {}",
            logits.len()
        )));
    }
    if label >= logits.len() {
        return Err(UrnError::Config(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut denom = 0.0;
    for &l in logits {
        denom += (l - max).exp();
    }
    let loss = denom.ln() + max - logits[label];
    let mut grad: Vec<f64> = logits.iter().map(|&l| (l - max).exp() / denom).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

fn weight_terms(params: &UrnParams, prepared: &PreparedLoss) -> (f64, f64) {
    let cfg = &prepared.config;
    let w = &params.weights;
    let mut l1 = 0.0;
    let mut syn = 0.0;
    if cfg.synaptic > 0.0 {
        if let Some(d) = &prepared.distance_weights {
            for (wv, dv) in w.data().iter().zip(d.data()) {
                let a = wv.abs();
                l1 += a;
                syn += dv * a;
            }
        } else {
            let g = cfg.geometry.as_ref().unwrap();
            let s = params.size;
            for i in 0..s {
                for (j, wv) in w.row(i).iter().enumerate() {
                    let a = wv.abs();
                    l1 += a;
                    syn += g.distance_pow(i, j, cfg.gamma) * a;
                }
            }
        }
    } else {
        l1 = w.data().iter().map(|v| v.abs()).sum();
    }
    (cfg.weight_l1 * l1, cfg.synaptic * syn)
}

/// The three regularizer terms for a single sample's trace, already scaled
/// by their strengths.
pub fn regularizer_terms(
    params: &UrnParams,
    trace: &ForwardTrace,
    cfg: &LossConfig,
) -> Result<(f64, f64, f64)> {
    cfg.validate()?;
    let prepared = PreparedLoss {
        config: cfg.clone(),
        distance_weights: None,
    };
    let (weight_l1, synaptic) = weight_terms(params, &prepared);
    // Activity covers N^(1)..N^(I); the embedded input N^(0) is excluded.
    let activity: f64 = trace.activations[1..]
        .iter()
        .map(|n| n.iter().map(|v| v.abs()).sum::<f64>())
        .sum();
    Ok((weight_l1, cfg.activity_l1 * activity, synaptic))
}

fn breakdown_and_logit_grads(
    params: &UrnParams,
    trace: &BatchTrace,
    labels: &[usize],
    prepared: &PreparedLoss,
) -> Result<(LossBreakdown, Matrix)> {
    let batch = trace.batch_size();
    if batch == 0 || labels.len() != batch {
        return Err(UrnError::Config(format!(
            "batch of {batch} traces with {} labels",
            labels.len()
        )));
    }
    let logits = crate::model::extract_logits_batch(params, trace);
    let d_out = params.output_dim;
    let mut xe_sum = 0.0;
    let mut logit_grads = Matrix::zeros(d_out, batch);
    let mut col = vec![0.0; d_out];
    for b in 0..batch {
        for k in 0..d_out {
            col[k] = logits.get(k, b);
        }
        let (loss, grad) = softmax_xent(&col, labels[b])?;
        xe_sum += loss;
        for k in 0..d_out {
            logit_grads.set(k, b, grad[k] / batch as f64);
        }
    }
    let cross_entropy = xe_sum / batch as f64;

    let (weight_l1, synaptic_length) = weight_terms(params, prepared);
    let c_n = prepared.config.activity_l1;
    let activity_l1 = c_n
        * trace.activations[1..]
            .iter()
            .map(|m| m.data().iter().map(|v| v.abs()).sum::<f64>())
            .sum::<f64>();

    let total = cross_entropy + weight_l1 + activity_l1 + synaptic_length;
    Ok((
        LossBreakdown {
            cross_entropy,
            weight_l1,
            activity_l1,
            synaptic_length,
            total,
        },
        logit_grads,
    ))
}

/// Loss of a batch without gradients (used by finite-difference probes and
/// evaluation).
pub fn batch_loss(
    params: &UrnParams,
    trace: &BatchTrace,
    labels: &[usize],
    prepared: &PreparedLoss,
) -> Result<LossBreakdown> {
    breakdown_and_logit_grads(params, trace, labels, prepared).map(|(b, _)| b)
}

/// Exact subgradient of the total loss for one batch.
///
/// Cross-entropy is averaged over the batch; regularizers are not. The
/// residual-output identity path carries the output-slot error across
/// iterations; the residual-input path re-injects a constant and therefore
/// adds nothing to the gradient. Accumulation across the batch happens in
/// fixed sample order.
pub fn backward(
    params: &UrnParams,
    trace: &BatchTrace,
    labels: &[usize],
    prepared: &PreparedLoss,
    act: ActivationFn,
) -> Result<(LossBreakdown, Gradients)> {
    let (breakdown, logit_grads) = breakdown_and_logit_grads(params, trace, labels, prepared)?;
    let size = params.size;
    let batch = trace.batch_size();
    let iterations = params.iterations;
    if trace.activations.len() != iterations + 1 || trace.pre_activations.len() != iterations {
        return Err(UrnError::shape(
            "backward",
            format!(
                "trace has {} states / {} pre-activations, expected {} / {}",
                trace.activations.len(),
                trace.pre_activations.len(),
                iterations + 1,
                iterations
            ),
        ));
    }

    let c_n = prepared.config.activity_l1;
    let boundary = size - params.output_dim;
    let w_t = params.weights.transpose();

    // Seed with the cross-entropy path: logit k sits at neuron S - 1 - k.
    let mut delta = Matrix::zeros(size, batch);
    for k in 0..params.output_dim {
        let row = size - 1 - k;
        delta.row_mut(row).copy_from_slice(logit_grads.row(k));
    }

    let mut d_weights = Matrix::zeros(size, size);
    let mut d_bias = Vector::zeros(size);

    for l in (1..=iterations).rev() {
        // Activity L1 on N^(l).
        if c_n != 0.0 {
            for (d, n) in delta
                .data_mut()
                .iter_mut()
                .zip(trace.activations[l].data())
            {
                *d += c_n * sign(*n);
            }
        }
        // Through the nonlinearity.
        let mut p = delta.clone();
        for (pv, pre) in p
            .data_mut()
            .iter_mut()
            .zip(trace.pre_activations[l - 1].data())
        {
            *pv *= act.derivative(*pre);
        }
        // Parameter contributions of this step.
        let dw_step = p.matmul_bt(&trace.activations[l - 1])?;
        for (acc, v) in d_weights.data_mut().iter_mut().zip(dw_step.data()) {
            *acc += v;
        }
        for i in 0..size {
            d_bias[i] += p.row(i).iter().sum::<f64>();
        }
        // Error for the previous state.
        let mut next_delta = w_t.matmul(&p)?;
        if params.variant == UrnVariant::ResidualOutput {
            for i in boundary..size {
                let (next_row, delta_row) = (i, i);
                for b in 0..batch {
                    let v = next_delta.get(next_row, b) + delta.get(delta_row, b);
                    next_delta.set(next_row, b, v);
                }
            }
        }
        delta = next_delta;
    }

    // Weight L1 and synaptic length act directly on W.
    let cfg = &prepared.config;
    if cfg.weight_l1 != 0.0 || cfg.synaptic != 0.0 {
        if cfg.synaptic > 0.0 {
            if let Some(d) = &prepared.distance_weights {
                for ((g, wv), dv) in d_weights
                    .data_mut()
                    .iter_mut()
                    .zip(params.weights.data())
                    .zip(d.data())
                {
                    *g += (cfg.weight_l1 + cfg.synaptic * dv) * sign(*wv);
                }
            } else {
                let geom = cfg.geometry.as_ref().unwrap();
                for i in 0..size {
                    let g_row = d_weights.row_mut(i);
                    for (j, (g, wv)) in g_row.iter_mut().zip(params.weights.row(i)).enumerate() {
                        *g += (cfg.weight_l1 + cfg.synaptic * geom.distance_pow(i, j, cfg.gamma))
                            * sign(*wv);
                    }
                }
            }
        } else {
            for (g, wv) in d_weights.data_mut().iter_mut().zip(params.weights.data()) {
                *g += cfg.weight_l1 * sign(*wv);
            }
        }
    }

    Ok((
        breakdown,
        Gradients {
            d_weights,
            d_bias,
        },
    ))
}
