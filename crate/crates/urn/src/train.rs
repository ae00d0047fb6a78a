//! Minibatch Adam training with periodic snapshotting and a newline-delimited
//! JSON metrics log.
//!
//! Everything is deterministic given the config's two seeds: `seed_init`
//! drives the He initialization, `seed_data` drives dataset generation and
//! the per-epoch shuffle. Gradient accumulation and parameter updates happen
//! in fixed order, so identical runs produce bit-identical snapshots.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::ActivityProfile;
use crate::config::ExperimentConfig;
use crate::data::LabeledDataset;
use crate::error::{Result, UrnError};
use crate::loss::{backward, LossBreakdown, PreparedLoss};
use crate::math::rng::derive_seed;
use crate::math::{he_normal_init, AdamState, Rng, Vector};
use crate::model::{forward_batch, ActivationFn, UrnParams};
use crate::snapshot::save_snapshot;

const SHUFFLE_STREAM: u64 = 0x51;
const INIT_STREAM: u64 = 0x1255;

/// Networks up to this size keep an end-of-epoch parameter copy so a
/// divergence abort can still write a last-good snapshot.
const LAST_GOOD_MAX_SIZE: usize = 4096;

/// One line of the metrics log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean of the per-batch loss breakdowns seen during the epoch.
    pub loss: LossBreakdown,
    /// Running accuracy over the epoch's training batches, measured on the
    /// forward passes used for the updates.
    pub train_accuracy: f64,
    /// Exact accuracy on the test set at the end of the epoch.
    pub test_accuracy: f64,
    /// Active neurons on the test set at the configured activity threshold.
    pub active_count: usize,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub params: UrnParams,
    pub metrics: Vec<EpochMetrics>,
    pub final_snapshot: Option<PathBuf>,
}

/// Fraction of correct argmax predictions.
pub fn evaluate_accuracy(
    params: &UrnParams,
    data: &LabeledDataset,
    act: ActivationFn,
) -> Result<f64> {
    if data.is_empty() {
        return Err(UrnError::Config("empty evaluation set".into()));
    }
    let mut correct = 0usize;
    for (chunk_inputs, chunk_labels) in data
        .inputs
        .chunks(256)
        .zip(data.labels.chunks(256))
    {
        let refs: Vec<&Vector> = chunk_inputs.iter().collect();
        let trace = forward_batch(params, &refs, act)?;
        let logits = crate::model::extract_logits_batch(params, &trace);
        for (b, &label) in chunk_labels.iter().enumerate() {
            let mut best = (f64::NEG_INFINITY, 0usize);
            for k in 0..params.output_dim {
                let v = logits.get(k, b);
                if v > best.0 {
                    best = (v, k);
                }
            }
            if best.1 == label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

fn argmax_correct(logits: &crate::math::Matrix, labels: &[usize]) -> usize {
    let mut correct = 0;
    for (b, &label) in labels.iter().enumerate() {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for k in 0..logits.rows() {
            let v = logits.get(k, b);
            if v > best.0 {
                best = (v, k);
            }
        }
        if best.1 == label {
            correct += 1;
        }
    }
    correct
}

/// Initial parameters for a config: He-normal weights, zero bias.
pub fn init_params(cfg: &ExperimentConfig) -> Result<UrnParams> {
    let mut rng = Rng::derive(cfg.seed_init, INIT_STREAM);
    UrnParams::new(
        he_normal_init(&mut rng, cfg.size, cfg.size),
        Vector::zeros(cfg.size),
        cfg.variant,
        cfg.iterations,
        cfg.input_dim(),
        cfg.output_dim(),
    )
}

fn record_traces(
    params: &UrnParams,
    data: &LabeledDataset,
    n: usize,
    act: ActivationFn,
) -> Result<Option<Vec<f64>>> {
    if n == 0 {
        return Ok(None);
    }
    let n = n.min(data.len());
    let refs: Vec<&Vector> = data.inputs[..n].iter().collect();
    let trace = forward_batch(params, &refs, act)?;
    let mut flat = Vec::with_capacity(n * (params.iterations + 1) * params.size);
    for b in 0..n {
        for m in &trace.activations {
            for i in 0..params.size {
                flat.push(m.get(i, b));
            }
        }
    }
    Ok(Some(flat))
}

/// Trains a URN per the config. When `out_dir` is given, snapshots and a
/// `metrics.jsonl` log are written there; a non-finite loss aborts with the
/// last good snapshot retained on disk.
pub fn train(
    cfg: &ExperimentConfig,
    train_set: &LabeledDataset,
    test_set: &LabeledDataset,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let act = ActivationFn::Relu;
    let mut params = init_params(cfg)?;
    let prepared: PreparedLoss = cfg.loss_config()?.prepare()?;

    let mut adam_w = AdamState::new(cfg.size * cfg.size, cfg.learning_rate);
    let mut adam_b = AdamState::new(cfg.size, cfg.learning_rate);
    let mut shuffle_rng = Rng::derive(cfg.seed_data, SHUFFLE_STREAM);

    let mut metrics_writer = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(BufWriter::new(File::create(dir.join("metrics.jsonl"))?))
        }
        None => None,
    };

    let batch_size = if cfg.batch_size == 0 {
        train_set.len()
    } else {
        cfg.batch_size
    };
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut metrics_log = Vec::with_capacity(cfg.epochs);
    let mut last_good: Option<UrnParams> = None;
    let keep_last_good = cfg.size <= LAST_GOOD_MAX_SIZE;

    for epoch in 1..=cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = LossBreakdown {
            cross_entropy: 0.0,
            weight_l1: 0.0,
            activity_l1: 0.0,
            synaptic_length: 0.0,
            total: 0.0,
        };
        let mut batches = 0usize;
        let mut train_correct = 0usize;

        for batch_idx in order.chunks(batch_size) {
            let inputs: Vec<&Vector> = batch_idx.iter().map(|&i| &train_set.inputs[i]).collect();
            let labels: Vec<usize> = batch_idx.iter().map(|&i| train_set.labels[i]).collect();
            let trace = forward_batch(&params, &inputs, act)?;
            let (breakdown, grads) = backward(&params, &trace, &labels, &prepared, act)?;
            if !breakdown.total.is_finite() {
                let retained = abort_snapshot(cfg, out_dir, epoch, last_good.as_ref())?;
                return Err(UrnError::Numeric(format!(
                    "loss diverged to {} in epoch {epoch}{}",
                    breakdown.total,
                    retained.map_or(String::new(), |p| {
                        format!("; last good snapshot retained at {}", p.display())
                    })
                )));
            }
            train_correct +=
                argmax_correct(&crate::model::extract_logits_batch(&params, &trace), &labels);
            loss_sum.cross_entropy += breakdown.cross_entropy;
            loss_sum.weight_l1 += breakdown.weight_l1;
            loss_sum.activity_l1 += breakdown.activity_l1;
            loss_sum.synaptic_length += breakdown.synaptic_length;
            loss_sum.total += breakdown.total;
            batches += 1;

            adam_w.step(params.weights.data_mut(), grads.d_weights.data())?;
            adam_b.step(params.bias.as_mut_slice(), grads.d_bias.as_slice())?;
        }

        let n_batches = batches.max(1) as f64;
        let loss = LossBreakdown {
            cross_entropy: loss_sum.cross_entropy / n_batches,
            weight_l1: loss_sum.weight_l1 / n_batches,
            activity_l1: loss_sum.activity_l1 / n_batches,
            synaptic_length: loss_sum.synaptic_length / n_batches,
            total: loss_sum.total / n_batches,
        };

        let test_accuracy = evaluate_accuracy(&params, test_set, act)?;
        let profile = ActivityProfile::collect(&params, &test_set.inputs, act)?;
        let active_count = crate::analysis::find_active(&profile, cfg.tau_activity).count();
        let entry = EpochMetrics {
            epoch,
            loss,
            train_accuracy: train_correct as f64 / train_set.len() as f64,
            test_accuracy,
            active_count,
        };
        if let Some(w) = metrics_writer.as_mut() {
            serde_json::to_writer(&mut *w, &entry)
                .map_err(|e| UrnError::Format(e.to_string()))?;
            w.write_all(b"\n")?;
        }
        metrics_log.push(entry);

        if keep_last_good {
            last_good = Some(params.clone());
        }
        if let Some(dir) = out_dir {
            if cfg.snapshot_every > 0 && epoch % cfg.snapshot_every == 0 && epoch != cfg.epochs {
                let traces = record_traces(&params, test_set, cfg.snapshot_trace_samples, act)?;
                save_snapshot(
                    &dir.join(format!("snapshot_epoch_{epoch:04}.urn")),
                    cfg,
                    epoch,
                    metrics_log.last(),
                    &params,
                    traces.as_deref(),
                )?;
            }
        }
    }

    if let Some(w) = metrics_writer.as_mut() {
        w.flush()?;
    }

    let final_snapshot = match out_dir {
        Some(dir) => {
            let traces = record_traces(&params, test_set, cfg.snapshot_trace_samples, act)?;
            let path = dir.join("snapshot_final.urn");
            save_snapshot(
                &path,
                cfg,
                cfg.epochs,
                metrics_log.last(),
                &params,
                traces.as_deref(),
            )?;
            Some(path)
        }
        None => None,
    };

    Ok(TrainOutcome {
        params,
        metrics: metrics_log,
        final_snapshot,
    })
}

fn abort_snapshot(
    cfg: &ExperimentConfig,
    out_dir: Option<&Path>,
    epoch: usize,
    last_good: Option<&UrnParams>,
) -> Result<Option<PathBuf>> {
    let (Some(dir), Some(good)) = (out_dir, last_good) else {
        return Ok(None);
    };
    let path = dir.join("snapshot_last_good.urn");
    save_snapshot(&path, cfg, epoch.saturating_sub(1), None, good, None)?;
    Ok(Some(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn tiny_config(extra: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(&format!(
            r#"
            size = 40
            iterations = 3
            dataset = "spheres"
            sphere_dim = 6
            train_per_class = 24
            test_per_class = 12
            epochs = 3
            batch_size = 16
            {extra}
        "#
        ))
        .unwrap()
    }

    #[test]
    fn zero_epoch_run_returns_initialization() {
        let mut cfg = tiny_config("");
        cfg.epochs = 0;
        let (train_set, test_set) = cfg.build_datasets().unwrap();
        let out = train(&cfg, &train_set, &test_set, None).unwrap();
        let init = init_params(&cfg).unwrap();
        assert_eq!(out.params.weights, init.weights);
        assert_eq!(out.params.bias, init.bias);
    }

    #[test]
    fn identical_seeds_give_bit_identical_snapshots() {
        let cfg = tiny_config("");
        let (train_set, test_set) = cfg.build_datasets().unwrap();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        train(&cfg, &train_set, &test_set, Some(dir_a.path())).unwrap();
        train(&cfg, &train_set, &test_set, Some(dir_b.path())).unwrap();
        let a = std::fs::read(dir_a.path().join("snapshot_final.urn")).unwrap();
        let b = std::fs::read(dir_b.path().join("snapshot_final.urn")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_init_seed_changes_the_outcome() {
        let cfg_a = tiny_config("seed_init = 1");
        let cfg_b = tiny_config("seed_init = 2");
        let (train_set, test_set) = cfg_a.build_datasets().unwrap();
        let a = train(&cfg_a, &train_set, &test_set, None).unwrap();
        let b = train(&cfg_b, &train_set, &test_set, None).unwrap();
        assert_ne!(a.params.weights, b.params.weights);
    }

    #[test]
    fn divergence_guard_aborts_with_numeric_error() {
        let cfg = tiny_config("learning_rate = 1e18");
        let (train_set, test_set) = cfg.build_datasets().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let err = train(&cfg, &train_set, &test_set, Some(dir.path()));
        match err {
            Err(UrnError::Numeric(msg)) => {
                assert!(msg.contains("diverged"), "{msg}");
            }
            other => panic!("expected numeric divergence error, got {other:?}"),
        }
    }

    #[test]
    fn logged_final_accuracy_matches_independent_evaluation() {
        let cfg = tiny_config("epochs = 2");
        let (train_set, test_set) = cfg.build_datasets().unwrap();
        let out = train(&cfg, &train_set, &test_set, None).unwrap();
        let logged = out.metrics.last().unwrap().test_accuracy;
        let fresh = evaluate_accuracy(&out.params, &test_set, ActivationFn::Relu).unwrap();
        assert_eq!(logged, fresh);
    }

    #[test]
    fn metrics_log_is_newline_delimited_json() {
        let cfg = tiny_config("");
        let (train_set, test_set) = cfg.build_datasets().unwrap();
        let dir = tempfile::tempdir().unwrap();
        train(&cfg, &train_set, &test_set, Some(dir.path())).unwrap();
        let text = std::fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
        let lines: Vec<&str> = text.trim_end().lines().collect();
        assert_eq!(lines.len(), 3);
        for line in lines {
            let parsed: EpochMetrics = serde_json::from_str(line).unwrap();
            assert!(parsed.epoch >= 1);
        }
    }

    #[test]
    fn snapshot_cadence_writes_periodic_files() {
        let cfg = tiny_config("snapshot_every = 1\nepochs = 3");
        let (train_set, test_set) = cfg.build_datasets().unwrap();
        let dir = tempfile::tempdir().unwrap();
        train(&cfg, &train_set, &test_set, Some(dir.path())).unwrap();
        assert!(dir.path().join("snapshot_epoch_0001.urn").exists());
        assert!(dir.path().join("snapshot_epoch_0002.urn").exists());
        // The final epoch is covered by snapshot_final.
        assert!(!dir.path().join("snapshot_epoch_0003.urn").exists());
        assert!(dir.path().join("snapshot_final.urn").exists());
    }
}
