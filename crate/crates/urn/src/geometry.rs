//! Spatial layout of neurons and the synaptic distance it induces.
//!
//! A `Grid3D` geometry arranges the `S` neurons on a `d_x x d_y x d_z`
//! lattice. The input plane is `z = 0` and is indexed first, row-major, so a
//! flattened 2D input embeds directly onto it. The `d_out` lattice sites
//! closest to the centroid of the top plane are assigned the trailing neuron
//! indices, where the output read-off lives. Distances use the product
//! metric: the input plane's Euclidean metric extended by a perpendicular
//! `z` direction weighted by `beta`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, UrnError};
use crate::math::Matrix;

/// Largest `S * S` a materialized distance-weight matrix may occupy
/// (entries, not bytes): 2^25 entries is 256 MiB of f64.
pub const DEFAULT_DISTANCE_MATRIX_BUDGET: usize = 1 << 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDims {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layout {
    Unstructured,
    Grid3D(GridDims),
}

/// Neuron coordinates plus the metric weight `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronGeometry {
    pub layout: Layout,
    pub beta: f64,
    /// Per-neuron lattice site, Grid3D only.
    coords: Vec<[u32; 3]>,
    /// Canonical site id (z * dx * dy + y * dx + x) -> neuron index.
    site_to_index: Vec<usize>,
}

impl NeuronGeometry {
    pub fn unstructured() -> Self {
        NeuronGeometry {
            layout: Layout::Unstructured,
            beta: 1.0,
            coords: Vec::new(),
            site_to_index: Vec::new(),
        }
    }

    /// Builds the lattice bijection. `output_dim` sites nearest the top-plane
    /// centroid (ties broken by row-major order) are moved to the tail of the
    /// index range.
    pub fn grid3d(dims: GridDims, beta: f64, output_dim: usize) -> Result<Self> {
        if dims.x == 0 || dims.y == 0 || dims.z == 0 {
            return Err(UrnError::Config("grid dimensions must be positive".into()));
        }
        if !(beta > 0.0) {
            return Err(UrnError::Config(format!(
                "metric weight beta must be positive, got {beta}"
            )));
        }
        let plane = dims.x * dims.y;
        let size = plane * dims.z;
        if output_dim > plane {
            return Err(UrnError::Config(format!(
                "output dimension {} exceeds top-plane size {}",
                output_dim, plane
            )));
        }

        // Rank top-plane sites by squared distance to the plane centroid,
        // row-major order breaking ties.
        let cx = (dims.x as f64 - 1.0) / 2.0;
        let cy = (dims.y as f64 - 1.0) / 2.0;
        let mut top_sites: Vec<(f64, usize, u32, u32)> = Vec::with_capacity(plane);
        for y in 0..dims.y {
            for x in 0..dims.x {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                top_sites.push((d2, y * dims.x + x, x as u32, y as u32));
            }
        }
        top_sites.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let center: Vec<(u32, u32)> = top_sites[..output_dim]
            .iter()
            .map(|&(_, _, x, y)| (x, y))
            .collect();
        let mut center_sorted = center.clone();
        // Tail block keeps row-major order among the selected sites.
        center_sorted.sort_by_key(|&(x, y)| (y, x));

        let top_z = (dims.z - 1) as u32;
        let is_center = |x: u32, y: u32| center.iter().any(|&(cx, cy)| cx == x && cy == y);

        let mut coords: Vec<[u32; 3]> = Vec::with_capacity(size);
        for z in 0..dims.z as u32 {
            for y in 0..dims.y as u32 {
                for x in 0..dims.x as u32 {
                    if z == top_z && is_center(x, y) {
                        continue;
                    }
                    coords.push([x, y, z]);
                }
            }
        }
        for &(x, y) in &center_sorted {
            coords.push([x, y, top_z]);
        }
        debug_assert_eq!(coords.len(), size);

        let mut site_to_index = vec![usize::MAX; size];
        for (idx, c) in coords.iter().enumerate() {
            let site = c[2] as usize * plane + c[1] as usize * dims.x + c[0] as usize;
            site_to_index[site] = idx;
        }

        Ok(NeuronGeometry {
            layout: Layout::Grid3D(dims),
            beta,
            coords,
            site_to_index,
        })
    }

    pub fn size(&self) -> usize {
        self.coords.len()
    }

    pub fn dims(&self) -> Option<GridDims> {
        match self.layout {
            Layout::Grid3D(d) => Some(d),
            Layout::Unstructured => None,
        }
    }

    fn require_grid(&self) -> Result<GridDims> {
        self.dims().ok_or_else(|| {
            UrnError::Config("operation requires a Grid3D geometry, layout is unstructured".into())
        })
    }

    /// Lattice site of neuron `i`.
    pub fn neuron_coords(&self, i: usize) -> Result<(usize, usize, usize)> {
        self.require_grid()?;
        let c = self.coords.get(i).ok_or_else(|| {
            UrnError::Config(format!("neuron index {i} out of range {}", self.size()))
        })?;
        Ok((c[0] as usize, c[1] as usize, c[2] as usize))
    }

    /// Inverse of [`neuron_coords`](Self::neuron_coords).
    pub fn index_of(&self, x: usize, y: usize, z: usize) -> Result<usize> {
        let dims = self.require_grid()?;
        if x >= dims.x || y >= dims.y || z >= dims.z {
            return Err(UrnError::Config(format!(
                "site ({x},{y},{z}) outside {}x{}x{} grid",
                dims.x, dims.y, dims.z
            )));
        }
        Ok(self.site_to_index[z * dims.x * dims.y + y * dims.x + x])
    }

    /// Uplift distance between neurons `i` and `j`:
    /// `sqrt(dx^2 + dy^2 + beta * dz^2)`.
    pub fn distance(&self, i: usize, j: usize) -> Result<f64> {
        self.require_grid()?;
        let a = &self.coords[i];
        let b = &self.coords[j];
        Ok(self.distance_between(a, b))
    }

    #[inline]
    fn distance_between(&self, a: &[u32; 3], b: &[u32; 3]) -> f64 {
        let dx = a[0] as f64 - b[0] as f64;
        let dy = a[1] as f64 - b[1] as f64;
        let dz = a[2] as f64 - b[2] as f64;
        (dx * dx + dy * dy + self.beta * dz * dz).sqrt()
    }

    /// `distance(i, j)^gamma` computed on the fly, 0 on the diagonal.
    #[inline]
    pub fn distance_pow(&self, i: usize, j: usize, gamma: f64) -> f64 {
        if i == j {
            return 0.0;
        }
        let d = self.distance_between(&self.coords[i], &self.coords[j]);
        if gamma == 1.0 {
            d
        } else {
            d.powf(gamma)
        }
    }

    /// Materializes `D[i][j] = distance(i, j)^gamma` with a zero diagonal,
    /// under the default memory budget.
    pub fn distance_weight_matrix(&self, gamma: f64) -> Result<Matrix> {
        self.distance_weight_matrix_with_budget(gamma, DEFAULT_DISTANCE_MATRIX_BUDGET)
    }

    pub fn distance_weight_matrix_with_budget(
        &self,
        gamma: f64,
        budget_entries: usize,
    ) -> Result<Matrix> {
        self.require_grid()?;
        if gamma < 0.0 {
            return Err(UrnError::Config(format!(
                "distance power gamma must be >= 0, got {gamma}"
            )));
        }
        let s = self.size();
        if s.saturating_mul(s) > budget_entries {
            return Err(UrnError::Config(format!(
                "distance matrix for S = {s} needs {} entries, over the budget of {}; \
                 use the on-the-fly distance_pow accessor instead",
                s * s,
                budget_entries
            )));
        }
        let mut d = Matrix::zeros(s, s);
        for i in 0..s {
            for j in 0..s {
                d.set(i, j, self.distance_pow(i, j, gamma));
            }
        }
        Ok(d)
    }

    /// Permutation sending each neuron to its image under a 90-degree
    /// rotation about the z axis: (x, y) -> (y, d - 1 - x). Square planes
    /// only. Used to check the residual symmetry of the metric.
    pub fn rotation_z_permutation(&self) -> Result<Vec<usize>> {
        let dims = self.require_grid()?;
        if dims.x != dims.y {
            return Err(UrnError::Config(
                "z-rotation symmetry requires a square x/y plane".into(),
            ));
        }
        (0..self.size())
            .map(|i| {
                let (x, y, z) = self.neuron_coords(i)?;
                self.index_of(y, dims.x - 1 - x, z)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Rng;

    fn grid(x: usize, y: usize, z: usize, beta: f64, d_out: usize) -> NeuronGeometry {
        NeuronGeometry::grid3d(GridDims { x, y, z }, beta, d_out).unwrap()
    }

    #[test]
    fn two_cube_is_bijective_over_corners() {
        let g = grid(2, 2, 2, 1.0, 0);
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..8 {
            let (x, y, z) = g.neuron_coords(i).unwrap();
            assert!(x < 2 && y < 2 && z < 2);
            seen.insert((x, y, z));
        }
        assert_eq!(seen.len(), 8);
    }

    #[test]
    fn full_scale_grid_has_expected_size() {
        let g = grid(60, 60, 6, 1.0, 10);
        assert_eq!(g.size(), 21_600);
    }

    #[test]
    fn coords_index_round_trip() {
        let g = grid(4, 3, 5, 2.0, 6);
        for i in 0..g.size() {
            let (x, y, z) = g.neuron_coords(i).unwrap();
            assert_eq!(g.index_of(x, y, z).unwrap(), i);
        }
    }

    #[test]
    fn input_plane_is_indexed_first_row_major() {
        let g = grid(3, 2, 2, 1.0, 2);
        for i in 0..6 {
            let (x, y, z) = g.neuron_coords(i).unwrap();
            assert_eq!(z, 0);
            assert_eq!(y * 3 + x, i);
        }
    }

    #[test]
    fn output_neurons_occupy_top_plane_center() {
        let g = grid(4, 4, 3, 1.0, 4);
        let s = g.size();
        // The four center sites of a 4x4 plane are (1,1),(2,1),(1,2),(2,2).
        let mut tail: Vec<(usize, usize, usize)> = (s - 4..s)
            .map(|i| g.neuron_coords(i).unwrap())
            .collect();
        tail.sort();
        assert_eq!(tail, vec![(1, 1, 2), (1, 2, 2), (2, 1, 2), (2, 2, 2)]);
    }

    #[test]
    fn distance_of_identical_indices_is_zero() {
        let g = grid(3, 3, 3, 4.0, 0);
        for i in 0..g.size() {
            assert_eq!(g.distance(i, i).unwrap(), 0.0);
        }
    }

    #[test]
    fn neighbor_distances_close_the_metric_by_hand() {
        let g = grid(3, 3, 3, 4.0, 0);
        let a = g.index_of(0, 0, 0).unwrap();
        let bx = g.index_of(1, 0, 0).unwrap();
        let bz = g.index_of(0, 0, 1).unwrap();
        assert!((g.distance(a, bx).unwrap() - 1.0).abs() < 1e-15);
        // beta = 4 makes a unit z-hop cost sqrt(4) = 2.
        assert!((g.distance(a, bz).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn distance_is_symmetric_on_random_pairs() {
        let g = grid(5, 4, 3, 2.5, 5);
        let mut rng = Rng::new(8);
        for _ in 0..1000 {
            let i = rng.next_below(g.size());
            let j = rng.next_below(g.size());
            assert_eq!(g.distance(i, j).unwrap(), g.distance(j, i).unwrap());
        }
    }

    #[test]
    fn triangle_inequality_on_sampled_triples() {
        let g = grid(6, 5, 4, 3.0, 8);
        let mut rng = Rng::new(9);
        for _ in 0..10_000 {
            let i = rng.next_below(g.size());
            let j = rng.next_below(g.size());
            let k = rng.next_below(g.size());
            let dij = g.distance(i, j).unwrap();
            let djk = g.distance(j, k).unwrap();
            let dik = g.distance(i, k).unwrap();
            assert!(dik <= dij + djk + 1e-12);
            if i != j {
                assert!(dij > 0.0);
            }
        }
    }

    #[test]
    fn distance_invariant_under_quarter_turn() {
        let g = grid(5, 5, 3, 2.0, 5);
        let perm = g.rotation_z_permutation().unwrap();
        let mut rng = Rng::new(10);
        for _ in 0..2000 {
            let i = rng.next_below(g.size());
            let j = rng.next_below(g.size());
            let d = g.distance(i, j).unwrap();
            let dr = g.distance(perm[i], perm[j]).unwrap();
            assert!((d - dr).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_zero_recovers_plain_l1_off_diagonal() {
        let g = grid(2, 2, 2, 1.0, 0);
        let d = g.distance_weight_matrix(0.0).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let want = if i == j { 0.0 } else { 1.0 };
                assert_eq!(d.get(i, j), want);
            }
        }
    }

    #[test]
    fn small_grid_squared_distances_enumerated_by_hand() {
        // 2x1x2 grid, beta = 1, gamma = 2: sites (0,0,0),(1,0,0),(0,0,1),(1,0,1).
        let g = grid(2, 1, 2, 1.0, 0);
        let d = g.distance_weight_matrix(2.0).unwrap();
        let idx = |x, z| g.index_of(x, 0, z).unwrap();
        assert_eq!(d.get(idx(0, 0), idx(1, 0)), 1.0);
        assert_eq!(d.get(idx(0, 0), idx(0, 1)), 1.0);
        assert!((d.get(idx(0, 0), idx(1, 1)) - 2.0).abs() < 1e-12);
        assert!((d.get(idx(1, 0), idx(0, 1)) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn distance_matrix_is_symmetric_with_zero_diagonal() {
        let g = grid(3, 3, 2, 1.7, 3);
        let d = g.distance_weight_matrix(1.3).unwrap();
        for i in 0..g.size() {
            assert_eq!(d.get(i, i), 0.0);
            for j in 0..g.size() {
                assert_eq!(d.get(i, j), d.get(j, i));
            }
        }
    }

    #[test]
    fn memory_guard_refuses_oversized_matrix() {
        let g = grid(10, 10, 2, 1.0, 0);
        let err = g
            .distance_weight_matrix_with_budget(1.0, 100)
            .unwrap_err()
            .to_string();
        assert!(err.contains("on-the-fly"), "{err}");
    }

    #[test]
    fn unstructured_layout_has_no_coordinates() {
        let g = NeuronGeometry::unstructured();
        assert!(g.neuron_coords(0).is_err());
        assert!(g.distance_weight_matrix(1.0).is_err());
    }
}
