//! Embedding a conventional multi-layer perceptron into a recursive weight
//! matrix.
//!
//! Concatenating the layers of an MLP into one neuron vector and placing each
//! layer's weights one block below the diagonal yields a recursive network
//! that reproduces the MLP exactly when stepped once per layer. This is the
//! reference construction the structure-analysis pipeline is validated
//! against: it gives a network whose emergent structure is known by
//! construction.

use crate::error::Result;
use crate::math::{he_normal_init, Matrix, Rng, Vector};
use crate::model::{ActivationFn, UrnParams, UrnVariant};

/// One dense layer: `out = phi(weights * in + bias)`.
#[derive(Debug, Clone)]
pub struct MlpLayer {
    pub weights: Matrix,
    pub bias: Vector,
}

/// An MLP together with its block embedding into a URN.
#[derive(Debug, Clone)]
pub struct EmbeddedMlp {
    pub layers: Vec<MlpLayer>,
    pub widths: Vec<usize>,
}

impl EmbeddedMlp {
    /// He-initialized MLP with the given layer widths (input first).
    pub fn random(widths: &[usize], seed: u64) -> Self {
        assert!(widths.len() >= 2, "need at least input and output widths");
        let mut rng = Rng::new(seed);
        let layers = widths
            .windows(2)
            .map(|w| MlpLayer {
                weights: he_normal_init(&mut rng, w[1], w[0]),
                bias: Vector::from(
                    (0..w[1]).map(|_| rng.next_normal() * 0.1).collect::<Vec<_>>(),
                ),
            })
            .collect();
        EmbeddedMlp {
            layers,
            widths: widths.to_vec(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn urn_size(&self) -> usize {
        self.widths.iter().sum()
    }

    /// Block offsets of each layer's neurons inside the concatenated vector.
    pub fn block_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.widths.len());
        let mut acc = 0;
        for w in &self.widths {
            offsets.push(acc);
            acc += w;
        }
        offsets
    }

    /// Builds the URN whose iterated update reproduces this MLP.
    ///
    /// Layer `k`'s weights land at block row `k + 1`, block column `k`. The
    /// final block's rows are stored in reverse so the URN's reversed tail
    /// read-off returns outputs in the MLP's own order.
    pub fn urn_params(&self) -> UrnParams {
        let size = self.urn_size();
        let offsets = self.block_offsets();
        let n_layers = self.layers.len();
        let mut w = Matrix::zeros(size, size);
        let mut b = Vector::zeros(size);
        for (k, layer) in self.layers.iter().enumerate() {
            let row_off = offsets[k + 1];
            let col_off = offsets[k];
            let rows = layer.weights.rows();
            let last = k + 1 == n_layers;
            for r in 0..rows {
                let dest = if last {
                    // row r of the output layer -> URN index size - 1 - r
                    size - 1 - r
                } else {
                    row_off + r
                };
                for c in 0..layer.weights.cols() {
                    w.set(dest, col_off + c, layer.weights.get(r, c));
                }
                b[dest] = layer.bias[r];
            }
        }
        UrnParams::new(
            w,
            b,
            UrnVariant::Plain,
            n_layers,
            self.input_dim(),
            self.output_dim(),
        )
        .expect("embedded MLP dimensions are valid by construction")
    }
}

/// Direct MLP forward pass, the independent reference the URN is checked
/// against. Plain per-layer loops; shares no code with the URN update.
pub fn mlp_forward(layers: &[MlpLayer], x: &Vector) -> Vector {
    let mut h: Vec<f64> = x.as_slice().to_vec();
    for layer in layers {
        let rows = layer.weights.rows();
        let mut next = vec![0.0; rows];
        for (i, slot) in next.iter_mut().enumerate() {
            let mut acc = layer.bias[i];
            for (j, &v) in h.iter().enumerate() {
                acc += layer.weights.get(i, j) * v;
            }
            *slot = ActivationFn::Relu.apply(acc);
        }
        h = next;
    }
    Vector::from(h)
}

/// Convenience check used by tests: URN output equals MLP output for `n`
/// seeded random inputs, within `tol`.
pub fn check_equivalence(mlp: &EmbeddedMlp, n: usize, seed: u64, tol: f64) -> Result<f64> {
    let params = mlp.urn_params();
    let mut rng = Rng::new(seed);
    let mut max_dev: f64 = 0.0;
    for _ in 0..n {
        let x = Vector::from(
            (0..mlp.input_dim())
                .map(|_| rng.next_normal())
                .collect::<Vec<_>>(),
        );
        let trace = crate::model::forward(&params, &x, ActivationFn::Relu)?;
        let urn_out = crate::model::extract_output(&params, &trace);
        let ref_out = mlp_forward(&mlp.layers, &x);
        for (u, m) in urn_out.iter().zip(ref_out.iter()) {
            max_dev = max_dev.max((u - m).abs());
        }
    }
    if max_dev > tol {
        return Err(crate::error::UrnError::Numeric(format!(
            "embedding deviation {max_dev} exceeds {tol}"
        )));
    }
    Ok(max_dev)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_blocks_sit_below_diagonal() {
        let mlp = EmbeddedMlp::random(&[2, 3, 2], 1);
        let params = mlp.urn_params();
        // Block pattern for widths (2,3,2): rows 2..5 x cols 0..2 hold W1,
        // rows 5..7 (reversed) x cols 2..5 hold W2, everything else zero.
        for i in 0..7 {
            for j in 0..7 {
                let in_w1 = (2..5).contains(&i) && (0..2).contains(&j);
                let in_w2 = (5..7).contains(&i) && (2..5).contains(&j);
                if !(in_w1 || in_w2) {
                    assert_eq!(params.weights.get(i, j), 0.0, "({i},{j})");
                }
            }
        }
    }

    #[test]
    fn equivalence_holds_for_random_mlps() {
        for seed in 0..5 {
            let mlp = EmbeddedMlp::random(&[5, 8, 4, 3], seed);
            let dev = check_equivalence(&mlp, 50, seed + 100, 1e-12).unwrap();
            assert!(dev <= 1e-12);
        }
    }
}
