use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::SymTensor;

/// Shape metadata shared by a mesh and every field living on it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshShape {
    pub dim: usize,
    pub n: usize,
    #[serde(rename = "L")]
    pub length: f64,
}

impl std::fmt::Display for MeshShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(dim={}, n={}, L={})", self.dim, self.n, self.length)
    }
}

/// Per-quadrature-point data of the reference Q1 cell, already scaled to
/// the physical cell size.
#[derive(Debug, Clone)]
pub(crate) struct RefPoint {
    /// `N_a` at the point, one per local node.
    pub shape: Vec<f64>,
    /// Strain `sym(e_c ⊗ ∇N_a)` of local basis function `(a, c)` at slot `a*d + c`.
    pub strain: Vec<SymTensor>,
    /// Reference coordinates in `[0, 1]^d`.
    pub xi: [f64; 3],
}

/// Uniform Q1 mesh of `[0, L]^d` with `n` cells per side.
///
/// Nodes are numbered lexicographically with the x index fastest; boundary
/// nodes carry homogeneous Dirichlet conditions.
#[derive(Debug, Clone)]
pub struct Mesh {
    shape: MeshShape,
    h: f64,
    n_nodes: usize,
    boundary: Vec<bool>,
    interior_of: Vec<Option<usize>>,
    interior_nodes: Vec<usize>,
    cells: Vec<[usize; 8]>,
    quad: Vec<RefPoint>,
    center: RefPoint,
    weight: f64,
}

pub fn build_mesh(dim: usize, n: usize, length: f64) -> Result<Mesh> {
    Mesh::new(dim, n, length)
}

impl Mesh {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::domain("dim", dim as f64, "must be 2 or 3"));
        }
        if n < 2 {
            return Err(Error::domain("n", n as f64, "need at least 2 cells per side"));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::domain("L", length, "must be finite and positive"));
        }
        let side = n + 1;
        let n_nodes = side.pow(dim as u32);
        let mut boundary = vec![false; n_nodes];
        let mut interior_of = vec![None; n_nodes];
        let mut interior_nodes = Vec::new();
        for node in 0..n_nodes {
            let idx = multi_index(node, side, dim);
            let on_bdry = idx[..dim].iter().any(|&i| i == 0 || i == n);
            boundary[node] = on_bdry;
            if !on_bdry {
                interior_of[node] = Some(interior_nodes.len());
                interior_nodes.push(node);
            }
        }
        let n_cells = n.pow(dim as u32);
        let n_local = 1 << dim;
        let mut cells = Vec::with_capacity(n_cells);
        for cell in 0..n_cells {
            let base = multi_index(cell, n, dim);
            let mut nodes = [0usize; 8];
            for (a, slot) in nodes.iter_mut().enumerate().take(n_local) {
                let mut idx = [0usize; 3];
                for k in 0..dim {
                    idx[k] = base[k] + ((a >> k) & 1);
                }
                *slot = linear_index(&idx, side, dim);
            }
            cells.push(nodes);
        }
        let h = length / n as f64;
        let g = 0.5 / 3.0_f64.sqrt();
        let gauss = [0.5 - g, 0.5 + g];
        let quad = (0..n_local)
            .map(|q| {
                let mut xi = [0.0; 3];
                for k in 0..dim {
                    xi[k] = gauss[(q >> k) & 1];
                }
                ref_point(dim, h, xi)
            })
            .collect();
        let center = ref_point(dim, h, [0.5; 3]);
        let weight = h.powi(dim as i32) / n_local as f64;
        Ok(Mesh {
            shape: MeshShape { dim, n, length },
            h,
            n_nodes,
            boundary,
            interior_of,
            interior_nodes,
            cells,
            quad,
            center,
            weight,
        })
    }

    pub fn shape(&self) -> MeshShape {
        self.shape
    }
    pub fn dim(&self) -> usize {
        self.shape.dim
    }
    pub fn n(&self) -> usize {
        self.shape.n
    }
    pub fn length(&self) -> f64 {
        self.shape.length
    }
    /// Cell edge length `L/n`.
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }
    pub fn n_interior(&self) -> usize {
        self.interior_nodes.len()
    }
    /// Unknowns: `dim` components per interior node.
    pub fn n_dofs(&self) -> usize {
        self.interior_nodes.len() * self.shape.dim
    }
    pub fn nodes_per_cell(&self) -> usize {
        1 << self.shape.dim
    }
    pub fn n_quad(&self) -> usize {
        self.quad.len()
    }
    pub fn volume(&self) -> f64 {
        self.shape.length.powi(self.shape.dim as i32)
    }
    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }
    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }
    pub fn interior_index(&self, node: usize) -> Option<usize> {
        self.interior_of[node]
    }
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior_nodes
    }
    pub fn cell_nodes(&self, cell: usize) -> &[usize] {
        &self.cells[cell][..self.nodes_per_cell()]
    }
    /// Quadrature weights, identical on every cell.
    pub fn quad_weights(&self) -> Vec<f64> {
        vec![self.weight; self.quad.len()]
    }
    pub(crate) fn weight(&self) -> f64 {
        self.weight
    }
    pub(crate) fn quad_point(&self, qp: usize) -> &RefPoint {
        &self.quad[qp]
    }
    pub(crate) fn center_point(&self) -> &RefPoint {
        &self.center
    }

    pub fn node_index(&self, idx: &[usize]) -> usize {
        linear_index(idx, self.shape.n + 1, self.shape.dim)
    }

    pub fn node_multi_index(&self, node: usize) -> [usize; 3] {
        multi_index(node, self.shape.n + 1, self.shape.dim)
    }

    pub fn cell_multi_index(&self, cell: usize) -> [usize; 3] {
        multi_index(cell, self.shape.n, self.shape.dim)
    }

    pub fn cell_index(&self, idx: &[usize]) -> usize {
        linear_index(idx, self.shape.n, self.shape.dim)
    }

    pub fn node_coords(&self, node: usize) -> [f64; 3] {
        let idx = self.node_multi_index(node);
        let mut x = [0.0; 3];
        for k in 0..self.shape.dim {
            x[k] = idx[k] as f64 * self.h;
        }
        x
    }

    /// Physical coordinates of quadrature point `qp` in `cell`.
    pub fn quad_coords(&self, cell: usize, qp: usize) -> [f64; 3] {
        let base = self.cell_multi_index(cell);
        let xi = self.quad[qp].xi;
        let mut x = [0.0; 3];
        for k in 0..self.shape.dim {
            x[k] = (base[k] as f64 + xi[k]) * self.h;
        }
        x
    }

    /// Graph distance (in index steps) from a node to the nearest boundary face.
    pub fn boundary_distance(&self, node: usize) -> usize {
        let idx = self.node_multi_index(node);
        idx[..self.shape.dim]
            .iter()
            .map(|&i| i.min(self.shape.n - i))
            .min()
            .unwrap_or(0)
    }

    pub(crate) fn check_shape(&self, other: MeshShape) -> Result<()> {
        if other != self.shape {
            return Err(Error::MeshMismatch {
                expected: self.shape.to_string(),
                found: other.to_string(),
            });
        }
        Ok(())
    }
}

fn multi_index(mut lin: usize, side: usize, dim: usize) -> [usize; 3] {
    let mut idx = [0usize; 3];
    for slot in idx.iter_mut().take(dim) {
        *slot = lin % side;
        lin /= side;
    }
    idx
}

fn linear_index(idx: &[usize], side: usize, dim: usize) -> usize {
    let mut lin = 0;
    for k in (0..dim).rev() {
        lin = lin * side + idx[k];
    }
    lin
}

fn ref_point(dim: usize, h: f64, xi: [f64; 3]) -> RefPoint {
    let n_local = 1 << dim;
    let mut shape = vec![0.0; n_local];
    let mut grads = vec![[0.0; 3]; n_local];
    for a in 0..n_local {
        let mut value = 1.0;
        for k in 0..dim {
            let bit = (a >> k) & 1;
            value *= if bit == 1 { xi[k] } else { 1.0 - xi[k] };
        }
        shape[a] = value;
        for k in 0..dim {
            let mut g = if (a >> k) & 1 == 1 { 1.0 } else { -1.0 };
            for m in 0..dim {
                if m != k {
                    let bit = (a >> m) & 1;
                    g *= if bit == 1 { xi[m] } else { 1.0 - xi[m] };
                }
            }
            grads[a][k] = g / h;
        }
    }
    let mut strain = Vec::with_capacity(n_local * dim);
    let mut full = vec![0.0; dim * dim];
    for grad in grads.iter() {
        for c in 0..dim {
            full.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..dim {
                full[c * dim + j] = grad[j];
            }
            strain.push(SymTensor::sym_part(dim, &full));
        }
    }
    RefPoint { shape, strain, xi }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn node_counts() {
        for (dim, n, nodes, interior) in [(2, 2, 9, 1), (2, 4, 25, 9), (3, 2, 27, 1), (3, 3, 64, 8)] {
            let m = build_mesh(dim, n, 1.0).unwrap();
            assert_eq!(m.n_nodes(), nodes);
            assert_eq!(m.n_interior(), interior);
            assert_eq!(m.boundary_mask().iter().filter(|b| !**b).count(), interior);
        }
    }

    #[test]
    fn weights_sum_to_cell_volume() {
        let m = build_mesh(3, 4, 2.0).unwrap();
        let s: f64 = m.quad_weights().iter().sum();
        assert_relative_eq!(s, 0.5_f64.powi(3), max_relative = 1e-15);
        assert!(m.quad_weights().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn boundary_mask_matches_coordinates() {
        let m = build_mesh(2, 5, 3.0).unwrap();
        for node in 0..m.n_nodes() {
            let x = m.node_coords(node);
            let on = x[..2].iter().any(|&c| c == 0.0 || (c - 3.0).abs() < 1e-12);
            assert_eq!(on, m.is_boundary(node));
        }
    }

    #[test]
    fn shape_functions_partition_unity() {
        let m = build_mesh(3, 2, 1.0).unwrap();
        for qp in 0..m.n_quad() {
            let s: f64 = m.quad_point(qp).shape.iter().sum();
            assert_relative_eq!(s, 1.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(build_mesh(1, 4, 1.0).is_err());
        assert!(build_mesh(2, 1, 1.0).is_err());
        assert!(build_mesh(2, 4, 0.0).is_err());
    }
}
