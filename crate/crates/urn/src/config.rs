//! Experiment configuration: a flat key-value (TOML) file whose keys mirror
//! the `ExperimentConfig` fields one to one. Unknown keys and type errors are
//! rejected with messages naming the offending key; cross-field rules are
//! checked by [`ExperimentConfig::validate`] before any compute starts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{gen_local_patches_split, gen_spheres, load_cifar10_mono, LabeledDataset, SphereSpec};
use crate::error::{Result, UrnError};
use crate::geometry::{GridDims, NeuronGeometry};
use crate::loss::LossConfig;
use crate::math::rng::derive_seed;
use crate::model::UrnVariant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Spheres,
    Patches,
    Cifar10,
}

/// All hyperparameters of one experiment. Serialized into every snapshot for
/// provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    // Network.
    pub size: usize,
    pub iterations: usize,
    #[serde(default = "default_variant")]
    pub variant: UrnVariant,

    // Dataset.
    pub dataset: DatasetKind,
    #[serde(default = "default_sphere_dim")]
    pub sphere_dim: usize,
    #[serde(default = "default_r_inner")]
    pub sphere_r_inner: f64,
    #[serde(default = "default_r_outer")]
    pub sphere_r_outer: f64,
    #[serde(default = "default_half_width")]
    pub sphere_half_width: f64,
    #[serde(default = "default_train_per_class")]
    pub train_per_class: usize,
    #[serde(default = "default_test_per_class")]
    pub test_per_class: usize,
    #[serde(default = "default_patch_classes")]
    pub patch_classes: usize,
    #[serde(default = "default_patch_noise")]
    pub patch_noise: f64,
    #[serde(default)]
    pub cifar_dir: Option<String>,

    // Training.
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// 0 selects full-batch training.
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_c_w")]
    pub c_w: f64,
    #[serde(default = "default_c_n")]
    pub c_n: f64,
    #[serde(default)]
    pub c_syn: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,

    // Geometry; all zero means unstructured.
    #[serde(default)]
    pub grid_x: usize,
    #[serde(default)]
    pub grid_y: usize,
    #[serde(default)]
    pub grid_z: usize,

    // Seeds.
    #[serde(default)]
    pub seed_init: u64,
    #[serde(default)]
    pub seed_data: u64,

    // Output.
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    /// Epochs between periodic snapshots; 0 writes only the final one.
    #[serde(default)]
    pub snapshot_every: usize,
    /// Number of evaluation traces embedded in each snapshot.
    #[serde(default)]
    pub snapshot_trace_samples: usize,

    // Analysis thresholds.
    #[serde(default = "default_tau_activity")]
    pub tau_activity: f64,
    #[serde(default = "default_tau_weight")]
    pub tau_weight: f64,
    #[serde(default = "default_verify_tolerance")]
    pub verify_tolerance: f64,
    /// Output-increment threshold for the effective-depth measurement.
    #[serde(default = "default_depth_tau")]
    pub depth_tau: f64,
}

fn default_variant() -> UrnVariant {
    UrnVariant::Plain
}
fn default_sphere_dim() -> usize {
    10
}
fn default_r_inner() -> f64 {
    1.0
}
fn default_r_outer() -> f64 {
    1.4
}
fn default_half_width() -> f64 {
    0.05
}
fn default_train_per_class() -> usize {
    2000
}
fn default_test_per_class() -> usize {
    500
}
fn default_patch_classes() -> usize {
    4
}
fn default_patch_noise() -> f64 {
    0.25
}
fn default_epochs() -> usize {
    200
}
fn default_batch_size() -> usize {
    32
}
fn default_learning_rate() -> f64 {
    7e-4
}
fn default_c_w() -> f64 {
    5e-7
}
fn default_c_n() -> f64 {
    2e-5
}
fn default_gamma() -> f64 {
    1.0
}
fn default_beta() -> f64 {
    1.0
}
fn default_out_dir() -> String {
    "runs/default".into()
}
fn default_tau_activity() -> f64 {
    1e-6
}
fn default_tau_weight() -> f64 {
    1e-5
}
fn default_verify_tolerance() -> f64 {
    1e-6
}
fn default_depth_tau() -> f64 {
    1e-3
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| UrnError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            UrnError::Io(std::io::Error::new(
                e.kind(),
                format!("cannot read config {}: {e}", path.display()),
            ))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn input_dim(&self) -> usize {
        match self.dataset {
            DatasetKind::Spheres => self.sphere_dim,
            DatasetKind::Patches | DatasetKind::Cifar10 => self.grid_x * self.grid_y,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self.dataset {
            DatasetKind::Spheres => 2,
            DatasetKind::Patches => self.patch_classes,
            DatasetKind::Cifar10 => 10,
        }
    }

    pub fn has_grid(&self) -> bool {
        self.grid_x > 0 && self.grid_y > 0 && self.grid_z > 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(UrnError::Config("key `size` must be positive".into()));
        }
        if self.iterations == 0 {
            return Err(UrnError::Config("key `iterations` must be positive".into()));
        }
        if self.grid_x > 0 || self.grid_y > 0 || self.grid_z > 0 {
            if !self.has_grid() {
                return Err(UrnError::Config(
                    "keys `grid_x`, `grid_y`, `grid_z` must all be set or all be zero".into(),
                ));
            }
            let product = self.grid_x * self.grid_y * self.grid_z;
            if product != self.size {
                return Err(UrnError::Config(format!(
                    "grid {}x{}x{} = {} does not match key `size` = {}",
                    self.grid_x, self.grid_y, self.grid_z, product, self.size
                )));
            }
        }
        if self.c_syn > 0.0 && !self.has_grid() {
            return Err(UrnError::Config(
                "key `c_syn` is positive but no grid geometry is configured".into(),
            ));
        }
        if matches!(self.dataset, DatasetKind::Patches | DatasetKind::Cifar10) && !self.has_grid() {
            return Err(UrnError::Config(format!(
                "dataset {:?} needs `grid_x`/`grid_y` to define the input plane",
                self.dataset
            )));
        }
        let d_in = self.input_dim();
        let d_out = self.output_dim();
        if d_in + d_out > self.size {
            return Err(UrnError::Config(format!(
                "input dim {} + output dim {} exceeds `size` = {}",
                d_in, d_out, self.size
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(UrnError::Config(format!(
                "key `learning_rate` must be positive, got {}",
                self.learning_rate
            )));
        }
        for (key, v) in [
            ("c_w", self.c_w),
            ("c_n", self.c_n),
            ("c_syn", self.c_syn),
            ("gamma", self.gamma),
            ("tau_activity", self.tau_activity),
            ("tau_weight", self.tau_weight),
            ("verify_tolerance", self.verify_tolerance),
            ("depth_tau", self.depth_tau),
            ("patch_noise", self.patch_noise),
        ] {
            if !(v >= 0.0) {
                return Err(UrnError::Config(format!(
                    "key `{key}` must be >= 0, got {v}"
                )));
            }
        }
        if !(self.beta > 0.0) {
            return Err(UrnError::Config(format!(
                "key `beta` must be positive, got {}",
                self.beta
            )));
        }
        if self.dataset == DatasetKind::Spheres {
            self.sphere_spec(0, 0).validate()?;
        }
        if self.dataset == DatasetKind::Cifar10 {
            if self.cifar_dir.is_none() {
                return Err(UrnError::Config(
                    "dataset `cifar10` requires key `cifar_dir`".into(),
                ));
            }
            if self.grid_x != self.grid_y {
                return Err(UrnError::Config(
                    "cifar10 resizing requires a square input plane (`grid_x` == `grid_y`)".into(),
                ));
            }
        }
        Ok(())
    }

    fn sphere_spec(&self, n_per_class: usize, stream: u64) -> SphereSpec {
        SphereSpec {
            dim: self.sphere_dim,
            r_inner: self.sphere_r_inner,
            r_outer: self.sphere_r_outer,
            half_width: self.sphere_half_width,
            n_per_class,
            seed: derive_seed(self.seed_data, stream),
        }
    }

    /// Geometry described by the grid keys, if any.
    pub fn geometry(&self) -> Result<Option<NeuronGeometry>> {
        if !self.has_grid() {
            return Ok(None);
        }
        Ok(Some(NeuronGeometry::grid3d(
            GridDims {
                x: self.grid_x,
                y: self.grid_y,
                z: self.grid_z,
            },
            self.beta,
            self.output_dim(),
        )?))
    }

    pub fn loss_config(&self) -> Result<LossConfig> {
        Ok(LossConfig {
            weight_l1: self.c_w,
            activity_l1: self.c_n,
            synaptic: self.c_syn,
            gamma: self.gamma,
            geometry: self.geometry()?,
        })
    }

    /// Builds the train and test sets. Generated datasets draw train and test
    /// from disjoint seed streams.
    pub fn build_datasets(&self) -> Result<(LabeledDataset, LabeledDataset)> {
        match self.dataset {
            DatasetKind::Spheres => {
                let train = gen_spheres(&self.sphere_spec(self.train_per_class, 0));
                let test = gen_spheres(&self.sphere_spec(self.test_per_class, 1));
                Ok((train, test))
            }
            DatasetKind::Patches => {
                let train = gen_local_patches_split(
                    self.grid_x,
                    self.grid_y,
                    self.patch_classes,
                    self.train_per_class,
                    self.patch_noise,
                    self.seed_data,
                    0,
                )?;
                let test = gen_local_patches_split(
                    self.grid_x,
                    self.grid_y,
                    self.patch_classes,
                    self.test_per_class,
                    self.patch_noise,
                    self.seed_data,
                    1,
                )?;
                Ok((train, test))
            }
            DatasetKind::Cifar10 => {
                let dir = self.cifar_dir.as_ref().expect("validated");
                load_cifar10_mono(Path::new(dir), self.grid_x)
            }
        }
    }

    pub fn analysis_thresholds(&self) -> crate::analysis::AnalysisThresholds {
        crate::analysis::AnalysisThresholds {
            tau_activity: self.tau_activity,
            tau_weight: self.tau_weight,
            verify_tolerance: self.verify_tolerance,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        size = 64
        iterations = 4
        dataset = "spheres"
    "#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(cfg.learning_rate, 7e-4);
        assert_eq!(cfg.c_w, 5e-7);
        assert_eq!(cfg.c_n, 2e-5);
        assert_eq!(cfg.variant, UrnVariant::Plain);
        assert_eq!(cfg.input_dim(), 10);
        assert_eq!(cfg.output_dim(), 2);
    }

    #[test]
    fn unknown_key_error_names_the_key() {
        let err = ExperimentConfig::from_toml_str(&format!("{MINIMAL}\nbogus_key = 3\n"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("bogus_key"), "{err}");
    }

    #[test]
    fn wrong_type_error_names_the_key() {
        let bad = r#"
            size = 64
            iterations = 4
            dataset = "spheres"
            learning_rate = "fast"
        "#;
        let err = ExperimentConfig::from_toml_str(bad).unwrap_err().to_string();
        assert!(err.contains("learning_rate"), "{err}");
    }

    #[test]
    fn grid_product_must_match_size() {
        let bad = r#"
            size = 64
            iterations = 3
            dataset = "spheres"
            grid_x = 4
            grid_y = 4
            grid_z = 3
        "#;
        let err = ExperimentConfig::from_toml_str(bad).unwrap_err().to_string();
        assert!(err.contains("4x4x3"), "{err}");
    }

    #[test]
    fn synaptic_regularizer_requires_grid() {
        let bad = format!("{MINIMAL}\nc_syn = 1e-4\n");
        let err = ExperimentConfig::from_toml_str(&bad).unwrap_err().to_string();
        assert!(err.contains("c_syn"), "{err}");
    }

    #[test]
    fn blocks_overflowing_network_are_rejected() {
        let bad = r#"
            size = 10
            iterations = 2
            dataset = "spheres"
            sphere_dim = 9
        "#;
        assert!(ExperimentConfig::from_toml_str(bad).is_err());
    }

    #[test]
    fn sphere_datasets_are_disjoint_and_reproducible() {
        let cfg = ExperimentConfig::from_toml_str(&format!(
            "{MINIMAL}\ntrain_per_class = 20\ntest_per_class = 10\n"
        ))
        .unwrap();
        let (train_a, test_a) = cfg.build_datasets().unwrap();
        let (train_b, _) = cfg.build_datasets().unwrap();
        assert_eq!(train_a.len(), 40);
        assert_eq!(test_a.len(), 20);
        for (x, y) in train_a.inputs.iter().zip(&train_b.inputs) {
            assert_eq!(x.as_slice(), y.as_slice());
        }
        // Train and test come from different streams: no shared samples.
        for tr in train_a.inputs.iter().take(5) {
            for te in test_a.inputs.iter() {
                assert_ne!(tr.as_slice(), te.as_slice());
            }
        }
    }

    #[test]
    fn patch_datasets_share_templates_across_splits() {
        let toml = r#"
            size = 576
            iterations = 3
            dataset = "patches"
            grid_x = 12
            grid_y = 12
            grid_z = 4
            patch_classes = 4
            train_per_class = 8
            test_per_class = 4
            patch_noise = 0.0
        "#;
        let cfg = ExperimentConfig::from_toml_str(toml).unwrap();
        let (train, test) = cfg.build_datasets().unwrap();
        assert_eq!(train.n_classes, 4);
        assert_eq!(test.len(), 16);
        // Noise-free samples embed the class template verbatim, so the same
        // template values must appear in both splits.
        let templates = crate::data::patch_templates(4, cfg.seed_data);
        let contains_template = |img: &crate::math::Vector, t: &[f64]| {
            (0..=12 - 3).any(|oy| {
                (0..=12 - 3).any(|ox| {
                    (0..9).all(|k| img[(oy + k / 3) * 12 + ox + k % 3] == t[k])
                })
            })
        };
        for (img, &label) in train.inputs.iter().zip(&train.labels).take(8) {
            assert!(contains_template(img, &templates[label]));
        }
        for (img, &label) in test.inputs.iter().zip(&test.labels).take(8) {
            assert!(contains_template(img, &templates[label]));
        }
    }
}
