//! Seeded dataset generators and CIFAR-10 ingestion.

mod cifar;

pub use cifar::{load_cifar10_mono, resize_bilinear, rgb_to_luminance};

use crate::error::{Result, UrnError};
use crate::math::{Rng, Vector};

/// Immutable labeled classification data.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub inputs: Vec<Vector>,
    pub labels: Vec<usize>,
    pub input_dim: usize,
    pub n_classes: usize,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Two concentric spherical shells in `dim` dimensions: class 0 is the inner
/// shell, class 1 the outer.
#[derive(Debug, Clone, Copy)]
pub struct SphereSpec {
    pub dim: usize,
    pub r_inner: f64,
    pub r_outer: f64,
    /// Radii are drawn uniformly from `[r - half_width, r + half_width]`.
    pub half_width: f64,
    pub n_per_class: usize,
    pub seed: u64,
}

impl SphereSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(UrnError::Config("sphere dimension must be positive".into()));
        }
        if !(self.r_inner > 0.0 && self.r_outer > 0.0) || self.r_inner == self.r_outer {
            return Err(UrnError::Config(format!(
                "shell radii must be positive and distinct, got {} and {}",
                self.r_inner, self.r_outer
            )));
        }
        let gap = (self.r_outer - self.r_inner).abs();
        if !(self.half_width >= 0.0) || self.half_width >= gap / 2.0 {
            return Err(UrnError::Config(format!(
                "shell half-width {} must be in [0, {}) so the shells stay separated",
                self.half_width,
                gap / 2.0
            )));
        }
        Ok(())
    }
}

/// Uniform point on the unit sphere: normalized Gaussian direction.
fn unit_direction(rng: &mut Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.next_normal()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Samples both shells with exactly `n_per_class` points each. Samples are
/// ordered class 0 first; training shuffles per epoch.
pub fn gen_spheres(spec: &SphereSpec) -> LabeledDataset {
    spec.validate().expect("invalid sphere spec");
    let mut rng = Rng::new(spec.seed);
    let mut inputs = Vec::with_capacity(2 * spec.n_per_class);
    let mut labels = Vec::with_capacity(2 * spec.n_per_class);
    for (class, r) in [(0usize, spec.r_inner), (1, spec.r_outer)] {
        for _ in 0..spec.n_per_class {
            let dir = unit_direction(&mut rng, spec.dim);
            let radius = r - spec.half_width + 2.0 * spec.half_width * rng.next_f64();
            inputs.push(Vector::from(
                dir.into_iter().map(|d| d * radius).collect::<Vec<_>>(),
            ));
            labels.push(class);
        }
    }
    LabeledDataset {
        inputs,
        labels,
        input_dim: spec.dim,
        n_classes: 2,
    }
}

/// Patch template side length.
pub const PATCH_SIDE: usize = 3;

/// The class templates used by [`gen_local_patches`]: mutually orthonormal
/// 3x3 patterns obtained by Gram-Schmidt over seeded Gaussian draws.
pub fn patch_templates(n_classes: usize, seed: u64) -> Vec<Vec<f64>> {
    let k = PATCH_SIDE * PATCH_SIDE;
    assert!(
        n_classes <= k,
        "at most {k} orthogonal templates exist for {PATCH_SIDE}x{PATCH_SIDE} patches"
    );
    let mut rng = Rng::derive(seed, 0xA11C);
    let mut templates: Vec<Vec<f64>> = Vec::with_capacity(n_classes);
    while templates.len() < n_classes {
        let mut t: Vec<f64> = (0..k).map(|_| rng.next_normal()).collect();
        for prev in &templates {
            let dot: f64 = t.iter().zip(prev).map(|(a, b)| a * b).sum();
            for (tv, pv) in t.iter_mut().zip(prev) {
                *tv -= dot * pv;
            }
        }
        let norm = t.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        for tv in &mut t {
            *tv /= norm;
        }
        templates.push(t);
    }
    templates
}

/// A spatially local classification task for grid experiments: each sample is
/// a `d_x x d_y` image of Gaussian background noise (standard deviation
/// `noise`) with the class's 3x3 template stamped at a uniformly random
/// position. Inputs are flattened row-major, matching the grid geometry's
/// `z = 0` plane ordering. The full generative recipe is deterministic in
/// `(n_classes, noise, seed)`.
pub fn gen_local_patches(
    d_x: usize,
    d_y: usize,
    n_classes: usize,
    n_per_class: usize,
    noise: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    gen_local_patches_split(d_x, d_y, n_classes, n_per_class, noise, seed, 0)
}

/// [`gen_local_patches`] with a separate sample stream per split: the class
/// templates depend only on `seed`, so distinct `stream` values share the
/// task but draw disjoint noise and stamp positions.
pub fn gen_local_patches_split(
    d_x: usize,
    d_y: usize,
    n_classes: usize,
    n_per_class: usize,
    noise: f64,
    seed: u64,
    stream: u64,
) -> Result<LabeledDataset> {
    if d_x * d_y < 16 {
        return Err(UrnError::Config(format!(
            "patch task needs a plane of at least 16 pixels, got {d_x}x{d_y}"
        )));
    }
    if d_x < PATCH_SIDE || d_y < PATCH_SIDE {
        return Err(UrnError::Config(format!(
            "plane {d_x}x{d_y} cannot hold a {PATCH_SIDE}x{PATCH_SIDE} template"
        )));
    }
    if n_classes < 2 || n_classes > PATCH_SIDE * PATCH_SIDE {
        return Err(UrnError::Config(format!(
            "patch task supports 2..={} classes, got {n_classes}",
            PATCH_SIDE * PATCH_SIDE
        )));
    }
    let templates = patch_templates(n_classes, seed);
    let mut rng = Rng::derive(seed, 0x5A3 ^ stream.wrapping_mul(0x1000_0001));
    let mut inputs = Vec::with_capacity(n_classes * n_per_class);
    let mut labels = Vec::with_capacity(n_classes * n_per_class);
    for (class, template) in templates.iter().enumerate() {
        for _ in 0..n_per_class {
            let mut img: Vec<f64> = (0..d_x * d_y).map(|_| rng.next_normal() * noise).collect();
            let ox = rng.next_below(d_x - PATCH_SIDE + 1);
            let oy = rng.next_below(d_y - PATCH_SIDE + 1);
            for ty in 0..PATCH_SIDE {
                for tx in 0..PATCH_SIDE {
                    img[(oy + ty) * d_x + (ox + tx)] = template[ty * PATCH_SIDE + tx];
                }
            }
            inputs.push(Vector::from(img));
            labels.push(class);
        }
    }
    Ok(LabeledDataset {
        inputs,
        labels,
        input_dim: d_x * d_y,
        n_classes,
    })
}
