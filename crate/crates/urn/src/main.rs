//! Command-line interface: dataset generation, training, structure analysis,
//! verification, connectome export, and gradient checking.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 IO/format error, 4 numeric error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use urn::analysis::{
    effective_depth, extract_structure, locality_stats, verify_equivalence, StructureReport,
};
use urn::config::ExperimentConfig;
use urn::connectome::export_connectome;
use urn::error::UrnError;
use urn::gradcheck::{run_gradcheck, GradcheckSpec};
use urn::model::{ActivationFn, UrnVariant};
use urn::snapshot::{load_snapshot, save_dataset, save_mask, Snapshot};

#[derive(Parser)]
#[command(name = "urn", version, about = "Train recursive networks and analyze their emergent structure")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ThresholdOverrides {
    /// Activity threshold override.
    #[arg(long)]
    tau_activity: Option<f64>,
    /// Weight threshold override.
    #[arg(long)]
    tau_weight: Option<f64>,
    /// Verification tolerance override.
    #[arg(long)]
    verify_tolerance: Option<f64>,
}

impl ThresholdOverrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = self.tau_activity {
            cfg.tau_activity = v;
        }
        if let Some(v) = self.tau_weight {
            cfg.tau_weight = v;
        }
        if let Some(v) = self.verify_tolerance {
            cfg.verify_tolerance = v;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the config's datasets and write them as containers.
    GenData {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a network, writing snapshots and a metrics log.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        seed_init: Option<u64>,
        #[arg(long)]
        seed_data: Option<u64>,
    },
    /// Extract, verify, and report the emergent structure of a snapshot.
    Analyze {
        #[arg(long)]
        snapshot: PathBuf,
        /// Report path (defaults to `report.json` beside the snapshot).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also write the retained-weight mask as a container.
        #[arg(long)]
        mask_out: Option<PathBuf>,
        #[command(flatten)]
        thresholds: ThresholdOverrides,
    },
    /// Run only the zero-out equivalence check; fails (exit 1) if the
    /// masked network is not equivalent.
    Verify {
        #[arg(long)]
        snapshot: PathBuf,
        #[command(flatten)]
        thresholds: ThresholdOverrides,
    },
    /// Write the retained-weight edge list.
    ExportConnectome {
        #[arg(long)]
        snapshot: PathBuf,
        /// Output file (defaults to `connectome.csv` beside the snapshot).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        tau_weight: Option<f64>,
    },
    /// Compare analytic gradients against central finite differences.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        /// Random probe coordinates per seed.
        #[arg(long, default_value_t = 200)]
        probes: usize,
        /// Number of seeded instances to check.
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        /// Central-difference step.
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        /// Maximum acceptable relative error.
        #[arg(long, default_value_t = 1e-5)]
        threshold: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successes, anything else is a usage error.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                UrnError::Config(_) | UrnError::ShapeMismatch { .. } => 2,
                UrnError::Io(_) | UrnError::Format(_) => 3,
                UrnError::Numeric(_) => 4,
            })
        }
    }
}

fn run(cli: Cli) -> urn::Result<ExitCode> {
    match cli.command {
        Command::GenData { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
            let (train_set, test_set) = cfg.build_datasets()?;
            std::fs::create_dir_all(&dir)?;
            save_dataset(&dir.join("train.urn"), &train_set)?;
            save_dataset(&dir.join("test.urn"), &test_set)?;
            println!(
                "wrote {} train / {} test samples to {}",
                train_set.len(),
                test_set.len(),
                dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Train {
            config,
            out,
            epochs,
            batch_size,
            seed_init,
            seed_data,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(b) = batch_size {
                cfg.batch_size = b;
            }
            if let Some(s) = seed_init {
                cfg.seed_init = s;
            }
            if let Some(s) = seed_data {
                cfg.seed_data = s;
            }
            cfg.validate()?;
            let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
            let (train_set, test_set) = cfg.build_datasets()?;
            let outcome = urn::train::train(&cfg, &train_set, &test_set, Some(&dir))?;
            if let Some(m) = outcome.metrics.last() {
                println!(
                    "epoch {}: loss {:.6}, train acc {:.4}, test acc {:.4}, active {}",
                    m.epoch, m.loss.total, m.train_accuracy, m.test_accuracy, m.active_count
                );
            }
            if let Some(path) = outcome.final_snapshot {
                println!("final snapshot: {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze {
            snapshot,
            report,
            mask_out,
            thresholds,
        } => {
            let snap = load_snapshot(&snapshot)?;
            let mut cfg = snap.meta.config.clone();
            thresholds.apply(&mut cfg);
            let full = analyze_snapshot(&snap, &cfg)?;
            let path = report
                .unwrap_or_else(|| snapshot.with_file_name("report.json"));
            std::fs::write(
                &path,
                serde_json::to_string_pretty(&full.report)
                    .map_err(|e| UrnError::Format(e.to_string()))?,
            )?;
            if let Some(mask_path) = mask_out {
                save_mask(
                    &mask_path,
                    snap.params.size,
                    &full.mask_values,
                    full.report.mask_retained,
                )?;
            }
            println!(
                "active {}/{} ({:.1}%), hidden widths {:?}, {}, verified: {}",
                full.report.active_count,
                full.report.size,
                100.0 * full.report.active_fraction,
                full.report.hidden_widths,
                if full.report.is_mlp {
                    "MLP structure".to_string()
                } else {
                    format!("non-MLP ({} off-block edges)", full.report.off_block_edge_count)
                },
                full.report.verification.verified
            );
            println!("report: {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            snapshot,
            thresholds,
        } => {
            let snap = load_snapshot(&snapshot)?;
            let mut cfg = snap.meta.config.clone();
            thresholds.apply(&mut cfg);
            let full = analyze_snapshot(&snap, &cfg)?;
            let v = full.report.verification;
            println!(
                "max deviation {:.3e}, agreement {:.4}, verified: {}",
                v.max_deviation, v.agreement, v.verified
            );
            Ok(if v.verified {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::ExportConnectome {
            snapshot,
            out,
            tau_weight,
        } => {
            let snap = load_snapshot(&snapshot)?;
            let cfg = &snap.meta.config;
            let tau = tau_weight.unwrap_or(cfg.tau_weight);
            let geometry = cfg.geometry()?;
            let path = out.unwrap_or_else(|| snapshot.with_file_name("connectome.csv"));
            let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
            let n = export_connectome(&snap.params, geometry.as_ref(), tau, &mut file)?;
            if let Some(g) = &geometry {
                let stats = locality_stats(&snap.params, g, tau)?;
                println!(
                    "{} edges (mean length {:.3}; {} forward / {} backward / {} lateral) -> {}",
                    n,
                    stats.mean_length,
                    stats.forward_count,
                    stats.backward_count,
                    stats.lateral_count,
                    path.display()
                );
            } else {
                println!("{} edges -> {}", n, path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck {
            config,
            probes,
            seeds,
            step,
            threshold,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let grid = if cfg.has_grid() {
                Some(urn::geometry::GridDims {
                    x: cfg.grid_x,
                    y: cfg.grid_y,
                    z: cfg.grid_z,
                })
            } else {
                None
            };
            let mut worst = 0.0f64;
            for seed in 0..seeds {
                let spec = GradcheckSpec {
                    size: cfg.size,
                    iterations: cfg.iterations,
                    variant: cfg.variant,
                    input_dim: cfg.input_dim(),
                    output_dim: cfg.output_dim(),
                    grid,
                    beta: cfg.beta,
                    gamma: cfg.gamma,
                    c_w: cfg.c_w,
                    c_n: cfg.c_n,
                    c_syn: cfg.c_syn,
                    batch: 6,
                    probes,
                    step,
                    seed: cfg.seed_init.wrapping_add(seed),
                };
                let report = run_gradcheck(&spec)?;
                println!(
                    "seed {seed}: {} probes, max rel err {:.3e} at {:?}",
                    report.probed, report.max_rel_err, report.worst_coordinate
                );
                worst = worst.max(report.max_rel_err);
            }
            if worst >= threshold {
                return Err(UrnError::Numeric(format!(
                    "gradient check failed: max relative error {worst:.3e} >= {threshold:.3e}"
                )));
            }
            println!("gradient check passed (max rel err {worst:.3e})");
            Ok(ExitCode::SUCCESS)
        }
    }
}

struct FullAnalysis {
    report: StructureReport,
    mask_values: Vec<f64>,
}

/// Shared analyze/verify pipeline: rebuild the evaluation set from the
/// snapshot's own config, extract structure, verify, and measure depth for
/// the residual-output variant.
fn analyze_snapshot(snap: &Snapshot, cfg: &ExperimentConfig) -> urn::Result<FullAnalysis> {
    let act = ActivationFn::Relu;
    let (_, test_set) = cfg.build_datasets()?;
    let thresholds = cfg.analysis_thresholds();
    let structure = extract_structure(&snap.params, &test_set.inputs, act, &thresholds)?;
    let verification = verify_equivalence(
        &snap.params,
        &structure.mask,
        &test_set.inputs,
        thresholds.verify_tolerance,
        act,
    )?;
    let depth = if snap.params.variant == UrnVariant::ResidualOutput {
        Some(effective_depth(
            &snap.params,
            &test_set.inputs,
            act,
            cfg.depth_tau,
        )?)
    } else {
        None
    };
    let report = StructureReport::new(&snap.params, &structure, &thresholds, verification, depth);
    Ok(FullAnalysis {
        report,
        mask_values: structure.mask.to_f64(),
    })
}
