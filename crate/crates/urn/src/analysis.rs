//! Extraction and verification of the emergent topology of a trained URN.
//!
//! The pipeline follows the training-free procedure: measure activity over an
//! evaluation set, discard neurons that never activate, group the survivors
//! by the iteration at which they first activate, check the weight matrix for
//! the block structure of a feed-forward network, and confirm the extracted
//! structure by zeroing every non-retained weight and comparing outputs.

use serde::{Deserialize, Serialize};

use crate::error::{Result, UrnError};
use crate::geometry::NeuronGeometry;
use crate::math::{Matrix, Vector};
use crate::model::{forward_batch, ActivationFn, ForwardTrace, UrnParams, UrnVariant};

/// Evaluation chunk size for batched forward passes.
const EVAL_CHUNK: usize = 256;

/// Histogram bin width for synapse lengths, in grid units.
const LENGTH_BIN_WIDTH: f64 = 0.5;

/// Thresholds of the extraction pipeline. Plain gradient descent on L1 terms
/// leaves near-zero rather than exactly zero values, so both activity and
/// weight cutoffs are mandatory and configurable.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AnalysisThresholds {
    /// A neuron is active if some |N^(l)|, l >= 1, exceeds this.
    pub tau_activity: f64,
    /// A weight is retained if its magnitude exceeds this.
    pub tau_weight: f64,
    /// Maximum output deviation allowed by the zero-out verification.
    pub verify_tolerance: f64,
}

impl Default for AnalysisThresholds {
    fn default() -> Self {
        AnalysisThresholds {
            tau_activity: 1e-6,
            tau_weight: 1e-5,
            verify_tolerance: 1e-6,
        }
    }
}

/// Per-neuron, per-iteration activity maxima over an evaluation set.
#[derive(Debug, Clone)]
pub struct ActivityProfile {
    /// `max_abs[l - 1][i]` = max over samples of `|N^(l)_i|`, l = 1..=I.
    pub max_abs: Vec<Vec<f64>>,
    pub samples: usize,
}

impl ActivityProfile {
    /// Runs the network over `inputs` in chunks and folds activity maxima.
    pub fn collect(
        params: &UrnParams,
        inputs: &[Vector],
        act: ActivationFn,
    ) -> Result<ActivityProfile> {
        if inputs.is_empty() {
            return Err(UrnError::Config(
                "activity profile needs a non-empty evaluation set".into(),
            ));
        }
        let mut max_abs = vec![vec![0.0f64; params.size]; params.iterations];
        for chunk in inputs.chunks(EVAL_CHUNK) {
            let refs: Vec<&Vector> = chunk.iter().collect();
            let trace = forward_batch(params, &refs, act)?;
            for l in 1..=params.iterations {
                let m = &trace.activations[l];
                let slot = &mut max_abs[l - 1];
                for i in 0..params.size {
                    for &v in m.row(i) {
                        let a = v.abs();
                        if a > slot[i] {
                            slot[i] = a;
                        }
                    }
                }
            }
        }
        Ok(ActivityProfile {
            max_abs,
            samples: inputs.len(),
        })
    }

    /// Builds a profile from explicit per-sample traces.
    pub fn from_traces(traces: &[ForwardTrace]) -> Result<ActivityProfile> {
        let first = traces.first().ok_or_else(|| {
            UrnError::Config("activity profile needs a non-empty evaluation set".into())
        })?;
        let iterations = first.pre_activations.len();
        let size = first.activations[0].len();
        let mut max_abs = vec![vec![0.0f64; size]; iterations];
        for t in traces {
            for l in 1..=iterations {
                for (slot, v) in max_abs[l - 1].iter_mut().zip(t.activations[l].iter()) {
                    let a = v.abs();
                    if a > *slot {
                        *slot = a;
                    }
                }
            }
        }
        Ok(ActivityProfile {
            max_abs,
            samples: traces.len(),
        })
    }
}

/// Pruning result: which neurons ever activate, and when first.
#[derive(Debug, Clone)]
pub struct ActiveSet {
    pub active: Vec<bool>,
    /// Smallest iteration `l >= 1` at which the neuron exceeded the
    /// threshold; `None` for inactive neurons.
    pub first_activation: Vec<Option<usize>>,
}

impl ActiveSet {
    pub fn count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

/// Applies the activity threshold to a profile.
pub fn find_active(profile: &ActivityProfile, tau_activity: f64) -> ActiveSet {
    let size = profile.max_abs.first().map_or(0, |v| v.len());
    let mut active = vec![false; size];
    let mut first = vec![None; size];
    for (l_minus_1, per_neuron) in profile.max_abs.iter().enumerate() {
        for (i, &m) in per_neuron.iter().enumerate() {
            if m > tau_activity {
                active[i] = true;
                if first[i].is_none() {
                    first[i] = Some(l_minus_1 + 1);
                }
            }
        }
    }
    ActiveSet {
        active,
        first_activation: first,
    }
}

/// Layer chain of the emergent network: the input block, hidden groups in
/// first-activation order, then the output block. Input neurons are reported
/// as layer 0 and never counted as hidden; output neurons form the final
/// group regardless of when they activate.
#[derive(Debug, Clone)]
pub struct LayerPartition {
    pub chain: Vec<Vec<usize>>,
    /// First-activation iteration of each hidden group, parallel to
    /// `chain[1..chain.len() - 1]`.
    pub hidden_iterations: Vec<usize>,
    pub input_dim: usize,
    pub output_dim: usize,
    pub size: usize,
}

impl LayerPartition {
    pub fn hidden_widths(&self) -> Vec<usize> {
        self.chain[1..self.chain.len() - 1]
            .iter()
            .map(|g| g.len())
            .collect()
    }

    /// Chain layer of each neuron; `None` for pruned neurons.
    fn layer_of(&self) -> Vec<Option<usize>> {
        let mut layer = vec![None; self.size];
        for (k, group) in self.chain.iter().enumerate() {
            for &i in group {
                layer[i] = Some(k);
            }
        }
        layer
    }
}

/// Groups active neurons into the layer chain.
pub fn infer_layers(params: &UrnParams, active: &ActiveSet) -> LayerPartition {
    let size = params.size;
    let d_in = params.input_dim;
    let d_out = params.output_dim;
    let out_start = size - d_out;

    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in d_in..out_start {
        if active.active[i] {
            let l = active.first_activation[i].expect("active neurons have a first activation");
            groups.entry(l).or_default().push(i);
        }
    }
    let mut chain = Vec::with_capacity(groups.len() + 2);
    chain.push((0..d_in).collect::<Vec<_>>());
    let mut hidden_iterations = Vec::with_capacity(groups.len());
    for (l, group) in groups {
        hidden_iterations.push(l);
        chain.push(group);
    }
    chain.push((out_start..size).collect::<Vec<_>>());
    LayerPartition {
        chain,
        hidden_iterations,
        input_dim: d_in,
        output_dim: d_out,
        size,
    }
}

/// Boolean weight mask.
#[derive(Debug, Clone)]
pub struct Mask {
    size: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn all_true(size: usize) -> Self {
        Mask {
            size,
            data: vec![true; size * size],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.size + j]
    }

    pub fn retained(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// `W` with masked entries set to zero.
    pub fn apply(&self, weights: &Matrix) -> Matrix {
        let mut out = weights.clone();
        for (v, &keep) in out.data_mut().iter_mut().zip(&self.data) {
            if !keep {
                *v = 0.0;
            }
        }
        out
    }

    /// Stored as 0.0 / 1.0 for the container format.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// Retains `W[i][j]` only when the weight is above threshold and `j -> i`
/// connects consecutive layers of the chain.
pub fn build_mask(params: &UrnParams, partition: &LayerPartition, tau_weight: f64) -> Mask {
    let size = params.size;
    let layer = partition.layer_of();
    let mut data = vec![false; size * size];
    for i in 0..size {
        let li = layer[i];
        for j in 0..size {
            if params.weights.get(i, j).abs() <= tau_weight {
                continue;
            }
            if let (Some(b), Some(a)) = (li, layer[j]) {
                if b == a + 1 {
                    data[i * size + j] = true;
                }
            }
        }
    }
    Mask { size, data }
}

/// A retained weight that violates the feed-forward block structure.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OffBlockEdge {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
    pub source_layer: usize,
    pub target_layer: usize,
}

/// Finds retained weights between chain neurons that do not connect
/// consecutive layers. Edges into input neurons count only when that input
/// neuron re-activates at some iteration l >= 1 (otherwise the weight feeds a
/// permanently silent slot and carries no structure).
pub fn off_block_edges(
    params: &UrnParams,
    partition: &LayerPartition,
    active: &ActiveSet,
    tau_weight: f64,
) -> Vec<OffBlockEdge> {
    let layer = partition.layer_of();
    let mut edges = Vec::new();
    for i in 0..params.size {
        let Some(target_layer) = layer[i] else {
            continue;
        };
        let target_is_input = i < partition.input_dim;
        if target_is_input && !active.active[i] {
            continue;
        }
        for j in 0..params.size {
            let w = params.weights.get(i, j);
            if w.abs() <= tau_weight {
                continue;
            }
            let Some(source_layer) = layer[j] else {
                continue;
            };
            if target_layer != source_layer + 1 {
                edges.push(OffBlockEdge {
                    source: j,
                    target: i,
                    weight: w,
                    source_layer,
                    target_layer,
                });
            }
        }
    }
    edges
}

/// The full extracted topology.
#[derive(Debug, Clone)]
pub struct EmergentStructure {
    pub active: ActiveSet,
    pub partition: LayerPartition,
    pub mask: Mask,
    pub hidden_widths: Vec<usize>,
    /// True when every retained weight between chain neurons respects the
    /// consecutive-layer block structure.
    pub is_mlp: bool,
    pub off_block: Vec<OffBlockEdge>,
}

/// Runs find-active, layer inference, and masking in one pass.
pub fn extract_structure(
    params: &UrnParams,
    eval_inputs: &[Vector],
    act: ActivationFn,
    thresholds: &AnalysisThresholds,
) -> Result<EmergentStructure> {
    let profile = ActivityProfile::collect(params, eval_inputs, act)?;
    let active = find_active(&profile, thresholds.tau_activity);
    let partition = infer_layers(params, &active);
    let mask = build_mask(params, &partition, thresholds.tau_weight);
    let off_block = off_block_edges(params, &partition, &active, thresholds.tau_weight);
    let hidden_widths = partition.hidden_widths();
    Ok(EmergentStructure {
        is_mlp: off_block.is_empty(),
        active,
        partition,
        mask,
        hidden_widths,
        off_block,
    })
}

/// Result of the zero-out equivalence check.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VerificationReport {
    pub max_deviation: f64,
    pub agreement: f64,
    pub verified: bool,
}

/// Runs the network with `W` and with `W` masked, over every evaluation
/// sample, and reports the largest output deviation and the argmax-class
/// agreement. Verified means perfect agreement and deviation within
/// tolerance.
pub fn verify_equivalence(
    params: &UrnParams,
    mask: &Mask,
    eval_inputs: &[Vector],
    tolerance: f64,
    act: ActivationFn,
) -> Result<VerificationReport> {
    if eval_inputs.is_empty() {
        return Err(UrnError::Config(
            "verification needs a non-empty evaluation set".into(),
        ));
    }
    let mut masked = params.clone();
    masked.weights = mask.apply(&params.weights);

    let mut max_deviation = 0.0f64;
    let mut agree = 0usize;
    for chunk in eval_inputs.chunks(EVAL_CHUNK) {
        let refs: Vec<&Vector> = chunk.iter().collect();
        let full = crate::model::extract_logits_batch(params, &forward_batch(params, &refs, act)?);
        let cut = crate::model::extract_logits_batch(&masked, &forward_batch(&masked, &refs, act)?);
        for b in 0..refs.len() {
            let mut best_full = (f64::NEG_INFINITY, 0usize);
            let mut best_cut = (f64::NEG_INFINITY, 0usize);
            for k in 0..params.output_dim {
                let f = full.get(k, b);
                let c = cut.get(k, b);
                max_deviation = max_deviation.max((f - c).abs());
                if f > best_full.0 {
                    best_full = (f, k);
                }
                if c > best_cut.0 {
                    best_cut = (c, k);
                }
            }
            if best_full.1 == best_cut.1 {
                agree += 1;
            }
        }
    }
    let agreement = agree as f64 / eval_inputs.len() as f64;
    Ok(VerificationReport {
        max_deviation,
        agreement,
        verified: agreement == 1.0 && max_deviation <= tolerance,
    })
}

/// Effective depth of a residual-output network: the largest iteration whose
/// output-slot increment exceeds `tau` anywhere on the evaluation set.
pub fn effective_depth(
    params: &UrnParams,
    eval_inputs: &[Vector],
    act: ActivationFn,
    tau: f64,
) -> Result<usize> {
    if params.variant != UrnVariant::ResidualOutput {
        return Err(UrnError::Config(format!(
            "effective depth is defined for the residual-output variant, got {:?}",
            params.variant
        )));
    }
    if eval_inputs.is_empty() {
        return Err(UrnError::Config(
            "effective depth needs a non-empty evaluation set".into(),
        ));
    }
    let out_start = params.size - params.output_dim;
    let mut max_inc = vec![0.0f64; params.iterations];
    for chunk in eval_inputs.chunks(EVAL_CHUNK) {
        let refs: Vec<&Vector> = chunk.iter().collect();
        let trace = forward_batch(params, &refs, act)?;
        for l in 1..=params.iterations {
            let pre = &trace.pre_activations[l - 1];
            for i in out_start..params.size {
                for &p in pre.row(i) {
                    let inc = act.apply(p).abs();
                    if inc > max_inc[l - 1] {
                        max_inc[l - 1] = inc;
                    }
                }
            }
        }
    }
    Ok(max_inc
        .iter()
        .rposition(|&m| m > tau)
        .map_or(0, |idx| idx + 1))
}

/// Geometry statistics of retained weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalityStats {
    pub retained: usize,
    pub mean_length: f64,
    pub bin_width: f64,
    pub length_histogram: Vec<usize>,
    /// Source z below target z.
    pub forward_count: usize,
    /// Source z above target z.
    pub backward_count: usize,
    pub lateral_count: usize,
}

/// Synapse-length statistics over all weights above threshold, under the
/// uplift metric. Direction is the sign of the z change from source to
/// target.
pub fn locality_stats(
    params: &UrnParams,
    geometry: &NeuronGeometry,
    tau_weight: f64,
) -> Result<LocalityStats> {
    if geometry.dims().is_none() {
        return Err(UrnError::Config(
            "locality statistics require a Grid3D geometry".into(),
        ));
    }
    if geometry.size() != params.size {
        return Err(UrnError::Config(format!(
            "geometry has {} sites, network has {} neurons",
            geometry.size(),
            params.size
        )));
    }
    let mut retained = 0usize;
    let mut total_len = 0.0f64;
    let mut hist: Vec<usize> = Vec::new();
    let mut forward_count = 0usize;
    let mut backward_count = 0usize;
    let mut lateral_count = 0usize;
    for i in 0..params.size {
        let (_, _, zi) = geometry.neuron_coords(i)?;
        for j in 0..params.size {
            if params.weights.get(i, j).abs() <= tau_weight {
                continue;
            }
            retained += 1;
            let d = geometry.distance(i, j)?;
            total_len += d;
            let bin = (d / LENGTH_BIN_WIDTH).floor() as usize;
            if bin >= hist.len() {
                hist.resize(bin + 1, 0);
            }
            hist[bin] += 1;
            let (_, _, zj) = geometry.neuron_coords(j)?;
            match zi.cmp(&zj) {
                std::cmp::Ordering::Greater => forward_count += 1,
                std::cmp::Ordering::Less => backward_count += 1,
                std::cmp::Ordering::Equal => lateral_count += 1,
            }
        }
    }
    Ok(LocalityStats {
        retained,
        mean_length: if retained == 0 {
            0.0
        } else {
            total_len / retained as f64
        },
        bin_width: LENGTH_BIN_WIDTH,
        length_histogram: hist,
        forward_count,
        backward_count,
        lateral_count,
    })
}

/// JSON-facing summary of a full analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureReport {
    pub size: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub active_count: usize,
    pub active_fraction: f64,
    pub hidden_widths: Vec<usize>,
    pub hidden_iterations: Vec<usize>,
    pub is_mlp: bool,
    pub off_block_edge_count: usize,
    pub off_block_edges: Vec<OffBlockEdge>,
    pub mask_retained: usize,
    pub thresholds: AnalysisThresholds,
    pub verification: VerificationReport,
    pub effective_depth: Option<usize>,
}

/// Maximum number of offending edges listed verbatim in a report.
const MAX_REPORTED_EDGES: usize = 64;

impl StructureReport {
    pub fn new(
        params: &UrnParams,
        structure: &EmergentStructure,
        thresholds: &AnalysisThresholds,
        verification: VerificationReport,
        effective_depth: Option<usize>,
    ) -> Self {
        let active_count = structure.active.count();
        StructureReport {
            size: params.size,
            input_dim: params.input_dim,
            output_dim: params.output_dim,
            active_count,
            active_fraction: active_count as f64 / params.size as f64,
            hidden_widths: structure.hidden_widths.clone(),
            hidden_iterations: structure.partition.hidden_iterations.clone(),
            is_mlp: structure.is_mlp,
            off_block_edge_count: structure.off_block.len(),
            off_block_edges: structure
                .off_block
                .iter()
                .take(MAX_REPORTED_EDGES)
                .copied()
                .collect(),
            mask_retained: structure.mask.retained(),
            thresholds: *thresholds,
            verification,
            effective_depth,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddedMlp;
    use crate::math::{he_normal_init, Rng};
    use crate::model::forward;

    fn sample_inputs(dim: usize, n: usize, seed: u64) -> Vec<Vector> {
        let mut rng = Rng::new(seed);
        (0..n)
            .map(|_| Vector::from((0..dim).map(|_| rng.next_normal()).collect::<Vec<_>>()))
            .collect()
    }

    #[test]
    fn neuron_with_no_inflow_and_zero_bias_is_inactive() {
        let size = 6;
        let mut rng = Rng::new(4);
        let mut w = he_normal_init(&mut rng, size, size);
        for j in 0..size {
            w.set(3, j, 0.0);
        }
        let params = UrnParams::new(w, Vector::zeros(size), UrnVariant::Plain, 3, 2, 2).unwrap();
        let inputs = sample_inputs(2, 20, 5);
        let profile = ActivityProfile::collect(&params, &inputs, ActivationFn::Relu).unwrap();
        let active = find_active(&profile, 1e-6);
        assert!(!active.active[3]);
        assert_eq!(active.first_activation[3], None);
    }

    #[test]
    fn empty_evaluation_set_is_an_error() {
        let params = UrnParams::new(
            Matrix::zeros(4, 4),
            Vector::zeros(4),
            UrnVariant::Plain,
            1,
            1,
            2,
        )
        .unwrap();
        assert!(ActivityProfile::collect(&params, &[], ActivationFn::Relu).is_err());
    }

    fn embedded_fixture() -> (EmbeddedMlp, UrnParams, Vec<Vector>) {
        let mlp = EmbeddedMlp::random(&[4, 7, 5, 3], 60);
        let params = mlp.urn_params();
        let inputs = sample_inputs(4, 64, 61);
        (mlp, params, inputs)
    }

    #[test]
    fn embedded_mlp_active_set_matches_layers() {
        let (mlp, params, inputs) = embedded_fixture();
        let profile = ActivityProfile::collect(&params, &inputs, ActivationFn::Relu).unwrap();
        let active = find_active(&profile, 1e-9);
        let offsets = mlp.block_offsets();
        // Hidden-layer neurons first activate at their layer index. (With He
        // init and 64 probe inputs every hidden unit fires somewhere.)
        for layer in 1..mlp.widths.len() - 1 {
            for i in offsets[layer]..offsets[layer] + mlp.widths[layer] {
                assert!(active.active[i], "hidden neuron {i} should be active");
                assert_eq!(active.first_activation[i], Some(layer), "neuron {i}");
            }
        }
    }

    #[test]
    fn embedded_mlp_layer_widths_recovered_exactly() {
        let (mlp, params, inputs) = embedded_fixture();
        let structure = extract_structure(
            &params,
            &inputs,
            ActivationFn::Relu,
            &AnalysisThresholds {
                tau_activity: 1e-9,
                tau_weight: 1e-9,
                verify_tolerance: 1e-9,
            },
        )
        .unwrap();
        assert_eq!(structure.hidden_widths, vec![7, 5]);
        assert!(structure.is_mlp, "off-block: {:?}", structure.off_block);
    }

    #[test]
    fn all_inactive_means_zero_hidden_layers() {
        let params = UrnParams::new(
            Matrix::zeros(6, 6),
            Vector::zeros(6),
            UrnVariant::Plain,
            2,
            2,
            2,
        )
        .unwrap();
        let inputs = sample_inputs(2, 10, 9);
        let profile = ActivityProfile::collect(&params, &inputs, ActivationFn::Relu).unwrap();
        let active = find_active(&profile, 1e-6);
        let partition = infer_layers(&params, &active);
        assert!(partition.hidden_widths().is_empty());
        assert_eq!(partition.chain.len(), 2);
    }

    #[test]
    fn embedded_mlp_mask_retains_exactly_the_blocks() {
        let (mlp, params, inputs) = embedded_fixture();
        let structure = extract_structure(
            &params,
            &inputs,
            ActivationFn::Relu,
            &AnalysisThresholds {
                tau_activity: 1e-9,
                tau_weight: 1e-12,
                verify_tolerance: 0.0,
            },
        )
        .unwrap();
        // Every nonzero weight of the embedded matrix sits between
        // consecutive blocks, so mask membership must equal nonzero-ness.
        let _ = mlp;
        for i in 0..params.size {
            for j in 0..params.size {
                let nonzero = params.weights.get(i, j) != 0.0;
                assert_eq!(
                    structure.mask.get(i, j),
                    nonzero,
                    "mask mismatch at ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn infinite_threshold_empties_the_mask() {
        let (_, params, inputs) = embedded_fixture();
        let structure = extract_structure(
            &params,
            &inputs,
            ActivationFn::Relu,
            &AnalysisThresholds {
                tau_activity: 1e-9,
                tau_weight: f64::INFINITY,
                verify_tolerance: 0.0,
            },
        )
        .unwrap();
        assert_eq!(structure.mask.retained(), 0);
    }

    #[test]
    fn mask_is_block_subdiagonal_in_layer_order() {
        let (_, params, inputs) = embedded_fixture();
        let structure = extract_structure(
            &params,
            &inputs,
            ActivationFn::Relu,
            &AnalysisThresholds::default(),
        )
        .unwrap();
        let layer = structure.partition.layer_of();
        for i in 0..params.size {
            for j in 0..params.size {
                if structure.mask.get(i, j) {
                    assert_eq!(layer[i].unwrap(), layer[j].unwrap() + 1);
                }
            }
        }
    }

    #[test]
    fn all_true_mask_verifies_with_exactly_zero_deviation() {
        let (_, params, inputs) = embedded_fixture();
        let report = verify_equivalence(
            &params,
            &Mask::all_true(params.size),
            &inputs,
            0.0,
            ActivationFn::Relu,
        )
        .unwrap();
        assert_eq!(report.max_deviation, 0.0);
        assert_eq!(report.agreement, 1.0);
        assert!(report.verified);
    }

    #[test]
    fn embedded_mlp_masked_network_is_equivalent() {
        let (_, params, inputs) = embedded_fixture();
        let structure = extract_structure(
            &params,
            &inputs,
            ActivationFn::Relu,
            &AnalysisThresholds {
                tau_activity: 1e-9,
                tau_weight: 1e-12,
                verify_tolerance: 0.0,
            },
        )
        .unwrap();
        let report = verify_equivalence(
            &params,
            &structure.mask,
            &inputs,
            0.0,
            ActivationFn::Relu,
        )
        .unwrap();
        assert_eq!(report.max_deviation, 0.0);
        assert!(report.verified);
    }

    #[test]
    fn pruning_is_monotone_in_the_activity_threshold() {
        let mut rng = Rng::new(14);
        let w = he_normal_init(&mut rng, 12, 12);
        let params = UrnParams::new(w, Vector::zeros(12), UrnVariant::Plain, 3, 4, 2).unwrap();
        let inputs = sample_inputs(4, 32, 15);
        let profile = ActivityProfile::collect(&params, &inputs, ActivationFn::Relu).unwrap();
        let mut last = usize::MAX;
        for tau in [0.0, 1e-6, 1e-3, 1e-1, 1.0, 10.0] {
            let count = find_active(&profile, tau).count();
            assert!(count <= last, "tau {tau} grew the active set");
            last = count;
        }
    }

    #[test]
    fn effective_depth_zero_when_output_rows_are_zero() {
        let size = 6;
        let mut rng = Rng::new(16);
        let mut w = he_normal_init(&mut rng, size, size);
        for i in 4..6 {
            for j in 0..size {
                w.set(i, j, 0.0);
            }
        }
        let params =
            UrnParams::new(w, Vector::zeros(size), UrnVariant::ResidualOutput, 4, 2, 2).unwrap();
        let inputs = sample_inputs(2, 16, 17);
        let depth = effective_depth(&params, &inputs, ActivationFn::Relu, 1e-9).unwrap();
        assert_eq!(depth, 0);
    }

    #[test]
    fn effective_depth_requires_residual_output() {
        let params = UrnParams::new(
            Matrix::zeros(4, 4),
            Vector::zeros(4),
            UrnVariant::Plain,
            2,
            1,
            2,
        )
        .unwrap();
        assert!(effective_depth(&params, &sample_inputs(1, 4, 0), ActivationFn::Relu, 1e-6).is_err());
    }

    #[test]
    fn locality_stats_empty_for_zero_weights() {
        use crate::geometry::{GridDims, NeuronGeometry};
        let g = NeuronGeometry::grid3d(GridDims { x: 2, y: 2, z: 2 }, 1.0, 2).unwrap();
        let params = UrnParams::new(
            Matrix::zeros(8, 8),
            Vector::zeros(8),
            UrnVariant::Plain,
            2,
            4,
            2,
        )
        .unwrap();
        let stats = locality_stats(&params, &g, 1e-6).unwrap();
        assert_eq!(stats.retained, 0);
        assert_eq!(stats.mean_length, 0.0);
    }

    #[test]
    fn single_z_neighbor_weight_has_unit_mean_length() {
        use crate::geometry::{GridDims, NeuronGeometry};
        let g = NeuronGeometry::grid3d(GridDims { x: 2, y: 2, z: 2 }, 1.0, 0).unwrap();
        let a = g.index_of(0, 0, 0).unwrap();
        let b = g.index_of(0, 0, 1).unwrap();
        let mut w = Matrix::zeros(8, 8);
        w.set(b, a, 0.5); // source below target: forward
        let params = UrnParams::new(w, Vector::zeros(8), UrnVariant::Plain, 2, 4, 2).unwrap();
        let stats = locality_stats(&params, &g, 1e-6).unwrap();
        assert_eq!(stats.retained, 1);
        assert!((stats.mean_length - 1.0).abs() < 1e-12);
        assert_eq!(stats.forward_count, 1);
        assert_eq!(stats.backward_count, 0);
    }

    #[test]
    fn layer_widths_invariant_under_hidden_relabeling() {
        // Permuting hidden indices consistently in W, b must not change the
        // inferred widths.
        let mut rng = Rng::new(31);
        let size = 10;
        let d_in = 3;
        let d_out = 2;
        let w = he_normal_init(&mut rng, size, size);
        let b = Vector::from((0..size).map(|_| rng.next_normal() * 0.1).collect::<Vec<_>>());
        let params = UrnParams::new(w, b, UrnVariant::Plain, 3, d_in, d_out).unwrap();
        let inputs = sample_inputs(d_in, 40, 32);

        // Permutation fixing input and output blocks.
        let mut hidden: Vec<usize> = (d_in..size - d_out).collect();
        rng.shuffle(&mut hidden);
        let mut perm: Vec<usize> = (0..size).collect();
        for (slot, &target) in (d_in..size - d_out).zip(&hidden) {
            perm[slot] = target;
        }

        let mut w2 = Matrix::zeros(size, size);
        let mut b2 = Vector::zeros(size);
        for i in 0..size {
            b2[perm[i]] = params.bias[i];
            for j in 0..size {
                w2.set(perm[i], perm[j], params.weights.get(i, j));
            }
        }
        let params2 = UrnParams::new(w2, b2, UrnVariant::Plain, 3, d_in, d_out).unwrap();

        let t = AnalysisThresholds::default();
        let s1 = extract_structure(&params, &inputs, ActivationFn::Relu, &t).unwrap();
        let s2 = extract_structure(&params2, &inputs, ActivationFn::Relu, &t).unwrap();
        assert_eq!(s1.hidden_widths, s2.hidden_widths);
        assert_eq!(s1.active.count(), s2.active.count());
    }
}
