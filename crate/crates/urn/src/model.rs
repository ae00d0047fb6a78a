//! The unstructured recursive network: input embedding, the iterative update
//! rules, output extraction, and forward passes that keep every intermediate
//! activation for analysis and backprop.
//!
//! A single dense `S x S` weight matrix and bias are applied `I` times to a
//! neuron vector. The input occupies the first `d_in` slots of the initial
//! state; the output is read from the last `d_out` slots of the final state,
//! in reverse index order.

use serde::{Deserialize, Serialize};

use crate::error::{Result, UrnError};
use crate::math::{Matrix, Vector};

/// Update rule selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UrnVariant {
    /// Every neuron is overwritten each iteration.
    Plain,
    /// Output neurons accumulate their activation across iterations, letting
    /// the network stop changing the output after fewer than `I` steps.
    ResidualOutput,
    /// The raw input is re-added to the input neurons at every iteration.
    ResidualInput,
}

/// Pointwise nonlinearity. Every provided activation maps 0 to 0, which is
/// what makes "zero activation" pruning meaningful downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationFn {
    Relu,
}

impl ActivationFn {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationFn::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative as a function of the pre-activation. At the ReLU kink the
    /// subgradient 0 is used, matching the L1-at-zero convention.
    #[inline]
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            ActivationFn::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Full parameter set of a URN.
#[derive(Debug, Clone)]
pub struct UrnParams {
    pub weights: Matrix,
    pub bias: Vector,
    pub variant: UrnVariant,
    pub size: usize,
    pub iterations: usize,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl UrnParams {
    pub fn new(
        weights: Matrix,
        bias: Vector,
        variant: UrnVariant,
        iterations: usize,
        input_dim: usize,
        output_dim: usize,
    ) -> Result<Self> {
        let size = weights.rows();
        let p = UrnParams {
            weights,
            bias,
            variant,
            size,
            iterations,
            input_dim,
            output_dim,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.rows() != self.size || self.weights.cols() != self.size {
            return Err(UrnError::Config(format!(
                "weight matrix is {}x{}, expected {}x{}",
                self.weights.rows(),
                self.weights.cols(),
                self.size,
                self.size
            )));
        }
        if self.bias.len() != self.size {
            return Err(UrnError::Config(format!(
                "bias has length {}, expected {}",
                self.bias.len(),
                self.size
            )));
        }
        if self.iterations < 1 {
            return Err(UrnError::Config("iteration count must be >= 1".into()));
        }
        if self.input_dim + self.output_dim > self.size {
            return Err(UrnError::Config(format!(
                "d_in + d_out = {} exceeds network size {}",
                self.input_dim + self.output_dim,
                self.size
            )));
        }
        Ok(())
    }
}

/// All intermediate state of one forward pass on one sample:
/// `activations[l]` is the neuron state after `l` update steps (so index 0 is
/// the embedded input) and `pre_activations[l - 1]` is the argument of the
/// nonlinearity that produced `activations[l]`.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub activations: Vec<Vector>,
    pub pre_activations: Vec<Vector>,
}

/// Batched counterpart of [`ForwardTrace`]: each entry is `S x B` with one
/// column per sample. Column `b` is bit-identical to the single-sample trace
/// of sample `b`.
#[derive(Debug, Clone)]
pub struct BatchTrace {
    pub activations: Vec<Matrix>,
    pub pre_activations: Vec<Matrix>,
}

impl BatchTrace {
    pub fn batch_size(&self) -> usize {
        self.activations[0].cols()
    }

    /// Extracts sample `b` as a per-sample trace.
    pub fn sample(&self, b: usize) -> ForwardTrace {
        let column = |m: &Matrix| {
            Vector::from((0..m.rows()).map(|i| m.get(i, b)).collect::<Vec<f64>>())
        };
        ForwardTrace {
            activations: self.activations.iter().map(column).collect(),
            pre_activations: self.pre_activations.iter().map(column).collect(),
        }
    }
}

/// Places `x` in the first `d_in` slots of a length-`size` state, zeros
/// elsewhere.
pub fn embed_input(x: &Vector, size: usize) -> Result<Vector> {
    if x.len() > size {
        return Err(UrnError::Config(format!(
            "input dimension {} exceeds network size {}",
            x.len(),
            size
        )));
    }
    let mut state = vec![0.0; size];
    state[..x.len()].copy_from_slice(x.as_slice());
    Ok(Vector::from(state))
}

fn affine(params: &UrnParams, state: &Vector) -> Result<Vector> {
    let mut pre = params.weights.matvec(state)?;
    for (p, b) in pre.as_mut_slice().iter_mut().zip(params.bias.iter()) {
        *p += b;
    }
    Ok(pre)
}

/// One plain update step: `phi(W n + b)` elementwise.
pub fn step_plain(params: &UrnParams, state: &Vector, act: ActivationFn) -> Result<Vector> {
    let pre = affine(params, state)?;
    Ok(Vector::from(
        pre.iter().map(|&p| act.apply(p)).collect::<Vec<f64>>(),
    ))
}

/// Residual-output step: output slots accumulate, everything else is plain.
pub fn step_residual_output(
    params: &UrnParams,
    state: &Vector,
    act: ActivationFn,
) -> Result<Vector> {
    let pre = affine(params, state)?;
    let boundary = params.size - params.output_dim;
    let mut next = Vec::with_capacity(params.size);
    for (i, &p) in pre.iter().enumerate() {
        let v = act.apply(p);
        next.push(if i >= boundary { state[i] + v } else { v });
    }
    Ok(Vector::from(next))
}

/// Residual-input step: the raw input is re-added to the input slots.
pub fn step_residual_input(
    params: &UrnParams,
    x: &Vector,
    state: &Vector,
    act: ActivationFn,
) -> Result<Vector> {
    if x.len() != params.input_dim {
        return Err(UrnError::shape(
            "step_residual_input",
            format!("input has length {}, d_in is {}", x.len(), params.input_dim),
        ));
    }
    let pre = affine(params, state)?;
    let mut next = Vec::with_capacity(params.size);
    for (i, &p) in pre.iter().enumerate() {
        let v = act.apply(p);
        next.push(if i < params.input_dim { x[i] + v } else { v });
    }
    Ok(Vector::from(next))
}

/// Runs the full `I`-step recursion on one sample, keeping every state and
/// pre-activation. Pure in `(params, x, act)`.
pub fn forward(params: &UrnParams, x: &Vector, act: ActivationFn) -> Result<ForwardTrace> {
    if x.len() != params.input_dim {
        return Err(UrnError::shape(
            "forward",
            format!("input has length {}, d_in is {}", x.len(), params.input_dim),
        ));
    }
    let mut activations = Vec::with_capacity(params.iterations + 1);
    let mut pre_activations = Vec::with_capacity(params.iterations);
    activations.push(embed_input(x, params.size)?);
    for _ in 0..params.iterations {
        let state = activations.last().unwrap();
        let pre = affine(params, state)?;
        let boundary = params.size - params.output_dim;
        let mut next = Vec::with_capacity(params.size);
        for (i, &p) in pre.iter().enumerate() {
            let v = act.apply(p);
            let v = match params.variant {
                UrnVariant::Plain => v,
                UrnVariant::ResidualOutput if i >= boundary => state[i] + v,
                UrnVariant::ResidualOutput => v,
                UrnVariant::ResidualInput if i < params.input_dim => x[i] + v,
                UrnVariant::ResidualInput => v,
            };
            next.push(v);
        }
        pre_activations.push(pre);
        activations.push(Vector::from(next));
    }
    Ok(ForwardTrace {
        activations,
        pre_activations,
    })
}

/// Stacks samples into an `S x B` state matrix with the embedding rule
/// applied to each column.
pub fn embed_batch(inputs: &[&Vector], size: usize) -> Result<Matrix> {
    let batch = inputs.len();
    let mut m = Matrix::zeros(size, batch);
    for (b, x) in inputs.iter().enumerate() {
        if x.len() > size {
            return Err(UrnError::Config(format!(
                "input dimension {} exceeds network size {}",
                x.len(),
                size
            )));
        }
        for (i, &v) in x.iter().enumerate() {
            m.set(i, b, v);
        }
    }
    Ok(m)
}

/// Batched forward pass over a set of samples (one column each).
pub fn forward_batch(params: &UrnParams, inputs: &[&Vector], act: ActivationFn) -> Result<BatchTrace> {
    for x in inputs {
        if x.len() != params.input_dim {
            return Err(UrnError::shape(
                "forward_batch",
                format!("input has length {}, d_in is {}", x.len(), params.input_dim),
            ));
        }
    }
    let batch = inputs.len();
    let size = params.size;
    let boundary = size - params.output_dim;
    let mut activations = Vec::with_capacity(params.iterations + 1);
    let mut pre_activations = Vec::with_capacity(params.iterations);
    activations.push(embed_batch(inputs, size)?);
    for _ in 0..params.iterations {
        let state = activations.last().unwrap();
        let mut pre = params.weights.matmul(state)?;
        for i in 0..size {
            let b_i = params.bias[i];
            for p in pre.row_mut(i) {
                *p += b_i;
            }
        }
        let mut next = Matrix::zeros(size, batch);
        for i in 0..size {
            let pre_row = pre.row(i);
            let next_row = next.row_mut(i);
            match params.variant {
                UrnVariant::ResidualOutput if i >= boundary => {
                    let state_row = state.row(i);
                    for ((n, &p), &s) in next_row.iter_mut().zip(pre_row).zip(state_row) {
                        *n = s + act.apply(p);
                    }
                }
                UrnVariant::ResidualInput if i < params.input_dim => {
                    for (b, (n, &p)) in next_row.iter_mut().zip(pre_row).enumerate() {
                        *n = inputs[b][i] + act.apply(p);
                    }
                }
                _ => {
                    for (n, &p) in next_row.iter_mut().zip(pre_row) {
                        *n = act.apply(p);
                    }
                }
            }
        }
        pre_activations.push(pre);
        activations.push(next);
    }
    Ok(BatchTrace {
        activations,
        pre_activations,
    })
}

/// Reads the output off a completed trace: the final state's last `d_out`
/// entries in reverse index order.
pub fn extract_output(params: &UrnParams, trace: &ForwardTrace) -> Vector {
    let last = trace.activations.last().expect("trace is never empty");
    extract_from_state(last, params.output_dim)
}

/// Same read-off rule applied directly to a state vector.
pub fn extract_from_state(state: &Vector, output_dim: usize) -> Vector {
    let s = state.len();
    Vector::from(
        (0..output_dim)
            .map(|k| state[s - 1 - k])
            .collect::<Vec<f64>>(),
    )
}

/// Batched read-off: returns a `d_out x B` matrix of logits.
pub fn extract_logits_batch(params: &UrnParams, trace: &BatchTrace) -> Matrix {
    let last = trace.activations.last().expect("trace is never empty");
    let s = params.size;
    let batch = last.cols();
    let mut out = Matrix::zeros(params.output_dim, batch);
    for k in 0..params.output_dim {
        let src = last.row(s - 1 - k);
        out.row_mut(k).copy_from_slice(src);
    }
    out
}
