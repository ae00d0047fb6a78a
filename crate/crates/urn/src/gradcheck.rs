//! Central finite-difference probing of the analytic gradients.
//!
//! Builds a seeded instance, computes the analytic gradient of the full
//! regularized loss, then probes random weight coordinates with central
//! differences of the loss. Coordinates with |W| <= 1e-6 are skipped: the
//! probe step would straddle the L1 kink there.

use serde::Serialize;

use crate::error::{Result, UrnError};
use crate::geometry::{GridDims, NeuronGeometry};
use crate::loss::{backward, batch_loss, LossConfig};
use crate::math::{he_normal_init, Rng, Vector};
use crate::model::{forward_batch, ActivationFn, UrnParams, UrnVariant};

/// Weight magnitudes at or below this are never probed.
pub const KINK_GUARD: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradcheckSpec {
    pub size: usize,
    pub iterations: usize,
    pub variant: UrnVariant,
    pub input_dim: usize,
    pub output_dim: usize,
    pub grid: Option<GridDims>,
    pub beta: f64,
    pub gamma: f64,
    pub c_w: f64,
    pub c_n: f64,
    pub c_syn: f64,
    pub batch: usize,
    pub probes: usize,
    pub step: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub probed: usize,
    pub max_rel_err: f64,
    pub worst_coordinate: (usize, usize),
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

pub fn run_gradcheck(spec: &GradcheckSpec) -> Result<GradcheckReport> {
    if spec.input_dim + spec.output_dim > spec.size {
        return Err(UrnError::Config(format!(
            "gradcheck dims {} + {} exceed size {}",
            spec.input_dim, spec.output_dim, spec.size
        )));
    }
    let act = ActivationFn::Relu;
    let mut rng = Rng::new(spec.seed);
    let weights = he_normal_init(&mut rng, spec.size, spec.size);
    let bias = Vector::from(
        (0..spec.size)
            .map(|_| rng.next_normal() * 0.1)
            .collect::<Vec<_>>(),
    );
    let params = UrnParams::new(
        weights,
        bias,
        spec.variant,
        spec.iterations,
        spec.input_dim,
        spec.output_dim,
    )?;
    let geometry = match spec.grid {
        Some(dims) => Some(NeuronGeometry::grid3d(dims, spec.beta, spec.output_dim)?),
        None => None,
    };
    let prepared = LossConfig {
        weight_l1: spec.c_w,
        activity_l1: spec.c_n,
        synaptic: spec.c_syn,
        gamma: spec.gamma,
        geometry,
    }
    .prepare()?;

    let inputs: Vec<Vector> = (0..spec.batch)
        .map(|_| {
            Vector::from(
                (0..spec.input_dim)
                    .map(|_| rng.next_normal())
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let labels: Vec<usize> = (0..spec.batch)
        .map(|_| rng.next_below(spec.output_dim))
        .collect();
    let refs: Vec<&Vector> = inputs.iter().collect();

    let trace = forward_batch(&params, &refs, act)?;
    let (_, grads) = backward(&params, &trace, &labels, &prepared, act)?;

    let mut report = GradcheckReport {
        probed: 0,
        max_rel_err: 0.0,
        worst_coordinate: (0, 0),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    let h = spec.step;
    let mut attempts = 0usize;
    while report.probed < spec.probes {
        attempts += 1;
        if attempts > spec.probes * 100 {
            return Err(UrnError::Numeric(
                "could not find enough probe coordinates away from the L1 kink".into(),
            ));
        }
        let i = rng.next_below(spec.size);
        let j = rng.next_below(spec.size);
        if params.weights.get(i, j).abs() <= KINK_GUARD {
            continue;
        }
        let mut plus = params.clone();
        plus.weights.set(i, j, plus.weights.get(i, j) + h);
        let mut minus = params.clone();
        minus.weights.set(i, j, minus.weights.get(i, j) - h);
        let l_plus = batch_loss(&plus, &forward_batch(&plus, &refs, act)?, &labels, &prepared)?;
        let l_minus = batch_loss(
            &minus,
            &forward_batch(&minus, &refs, act)?,
            &labels,
            &prepared,
        )?;
        let numeric = (l_plus.total - l_minus.total) / (2.0 * h);
        let analytic = grads.d_weights.get(i, j);
        let rel = if analytic.abs().max(numeric.abs()) < 1e-10 {
            0.0
        } else {
            (analytic - numeric).abs() / analytic.abs().max(numeric.abs())
        };
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst_coordinate = (i, j);
            report.worst_analytic = analytic;
            report.worst_numeric = numeric;
        }
        report.probed += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_variants_pass_at_spec_scale() {
        for (variant, seed) in [
            (UrnVariant::Plain, 1u64),
            (UrnVariant::ResidualOutput, 2),
            (UrnVariant::ResidualInput, 3),
        ] {
            let spec = GradcheckSpec {
                size: 12,
                iterations: 3,
                variant,
                input_dim: 4,
                output_dim: 2,
                grid: Some(GridDims { x: 2, y: 2, z: 3 }),
                beta: 1.0,
                gamma: 1.0,
                c_w: 1e-4,
                c_n: 1e-4,
                c_syn: 1e-4,
                batch: 6,
                probes: 50,
                step: 1e-5,
                seed,
            };
            let report = run_gradcheck(&spec).unwrap();
            assert!(
                report.max_rel_err < 1e-5,
                "{variant:?}: rel err {} at {:?} (analytic {}, numeric {})",
                report.max_rel_err,
                report.worst_coordinate,
                report.worst_analytic,
                report.worst_numeric
            );
        }
    }
}
