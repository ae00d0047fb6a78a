//! Edge-list export of retained weights for external plotting.
//!
//! Comma-delimited text: one header line, then one record per weight with
//! magnitude above the threshold, ordered by (target, source). With a grid
//! geometry each record also carries both endpoints' lattice coordinates and
//! a direction tag: `forward` when the target sits at larger z than the
//! source, `backward` when smaller, `lateral` when equal.

use std::io::Write;

use crate::error::Result;
use crate::geometry::NeuronGeometry;
use crate::model::UrnParams;

/// Writes the edge list; returns the number of records.
pub fn export_connectome<W: Write>(
    params: &UrnParams,
    geometry: Option<&NeuronGeometry>,
    tau_weight: f64,
    out: &mut W,
) -> Result<usize> {
    let spatial = match geometry {
        Some(g) if g.dims().is_some() => true,
        _ => false,
    };
    if spatial {
        writeln!(
            out,
            "source,target,weight,source_x,source_y,source_z,target_x,target_y,target_z,direction"
        )?;
    } else {
        writeln!(out, "source,target,weight")?;
    }
    let mut count = 0usize;
    for i in 0..params.size {
        for j in 0..params.size {
            let w = params.weights.get(i, j);
            if w.abs() <= tau_weight {
                continue;
            }
            count += 1;
            if spatial {
                let g = geometry.unwrap();
                let (sx, sy, sz) = g.neuron_coords(j)?;
                let (tx, ty, tz) = g.neuron_coords(i)?;
                let direction = match tz.cmp(&sz) {
                    std::cmp::Ordering::Greater => "forward",
                    std::cmp::Ordering::Less => "backward",
                    std::cmp::Ordering::Equal => "lateral",
                };
                writeln!(
                    out,
                    "{j},{i},{w},{sx},{sy},{sz},{tx},{ty},{tz},{direction}"
                )?;
            } else {
                writeln!(out, "{j},{i},{w}")?;
            }
        }
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GridDims, NeuronGeometry};
    use crate::math::{Matrix, Vector};
    use crate::model::UrnVariant;

    fn grid_params(weights: Matrix) -> (UrnParams, NeuronGeometry) {
        let size = weights.rows();
        let g = NeuronGeometry::grid3d(GridDims { x: 2, y: 2, z: 2 }, 1.0, 2).unwrap();
        let p = UrnParams::new(weights, Vector::zeros(size), UrnVariant::Plain, 2, 4, 2).unwrap();
        (p, g)
    }

    #[test]
    fn zero_matrix_exports_header_only() {
        let (p, g) = grid_params(Matrix::zeros(8, 8));
        let mut buf = Vec::new();
        let n = export_connectome(&p, Some(&g), 1e-6, &mut buf).unwrap();
        assert_eq!(n, 0);
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("source,target,weight"));
    }

    #[test]
    fn single_weight_gets_correct_direction_tag() {
        let g = NeuronGeometry::grid3d(GridDims { x: 2, y: 2, z: 2 }, 1.0, 2).unwrap();
        let low = g.index_of(0, 0, 0).unwrap();
        let high = g.index_of(0, 0, 1).unwrap();
        let mut w = Matrix::zeros(8, 8);
        w.set(high, low, 0.25); // source at z=0, target at z=1
        let p = UrnParams::new(w, Vector::zeros(8), UrnVariant::Plain, 2, 4, 2).unwrap();
        let mut buf = Vec::new();
        let n = export_connectome(&p, Some(&g), 1e-6, &mut buf).unwrap();
        assert_eq!(n, 1);
        let text = String::from_utf8(buf).unwrap();
        let record = text.lines().nth(1).unwrap();
        assert!(record.starts_with(&format!("{low},{high},0.25")), "{record}");
        assert!(record.ends_with("forward"), "{record}");
    }

    #[test]
    fn record_count_matches_mask_population_on_embedded_mlp() {
        // On the block-embedded network every nonzero weight lies between
        // consecutive layers, so magnitude retention and the structural mask
        // must agree exactly.
        use crate::analysis::{extract_structure, AnalysisThresholds};
        use crate::embedding::EmbeddedMlp;
        use crate::math::Rng;

        let mlp = EmbeddedMlp::random(&[3, 5, 4, 2], 9);
        let params = mlp.urn_params();
        let mut rng = Rng::new(10);
        let inputs: Vec<Vector> = (0..32)
            .map(|_| Vector::from((0..3).map(|_| rng.next_normal()).collect::<Vec<_>>()))
            .collect();
        let tau = 1e-9;
        let structure = extract_structure(
            &params,
            &inputs,
            crate::model::ActivationFn::Relu,
            &AnalysisThresholds {
                tau_activity: 1e-9,
                tau_weight: tau,
                verify_tolerance: 0.0,
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        let n = export_connectome(&params, None, tau, &mut buf).unwrap();
        assert_eq!(n, structure.mask.retained());
    }
}
