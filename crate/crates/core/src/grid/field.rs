use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mesh::{Mesh, MeshShape};
use crate::error::{Error, Result};

/// Nodal vector field: `dim` components per node, node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    shape: MeshShape,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FieldFile {
    dim: usize,
    n: usize,
    #[serde(rename = "L")]
    length: f64,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(mesh: &Mesh) -> Self {
        Field {
            shape: mesh.shape(),
            values: vec![0.0; mesh.n_nodes() * mesh.dim()],
        }
    }

    pub fn from_values(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        let expected = mesh.n_nodes() * mesh.dim();
        if values.len() != expected {
            return Err(Error::MeshMismatch {
                expected: format!("{expected} nodal values"),
                found: format!("{} values", values.len()),
            });
        }
        Ok(Field {
            shape: mesh.shape(),
            values,
        })
    }

    /// Samples `g(x)` at every node (components beyond `dim` are ignored).
    pub fn from_fn<G: Fn([f64; 3]) -> [f64; 3]>(mesh: &Mesh, g: G) -> Self {
        let d = mesh.dim();
        let mut values = vec![0.0; mesh.n_nodes() * d];
        for node in 0..mesh.n_nodes() {
            let v = g(mesh.node_coords(node));
            values[node * d..node * d + d].copy_from_slice(&v[..d]);
        }
        Field {
            shape: mesh.shape(),
            values,
        }
    }

    /// Like [`Field::from_fn`] but forces zero on boundary nodes.
    pub fn from_fn_dirichlet<G: Fn([f64; 3]) -> [f64; 3]>(mesh: &Mesh, g: G) -> Self {
        let mut f = Field::from_fn(mesh, g);
        f.apply_dirichlet(mesh);
        f
    }

    pub fn shape(&self) -> MeshShape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn node_value(&self, node: usize) -> &[f64] {
        let d = self.shape.dim;
        &self.values[node * d..node * d + d]
    }

    pub fn apply_dirichlet(&mut self, mesh: &Mesh) {
        let d = self.shape.dim;
        for node in 0..mesh.n_nodes() {
            if mesh.is_boundary(node) {
                self.values[node * d..node * d + d].iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    pub fn is_dirichlet_conforming(&self, mesh: &Mesh) -> bool {
        (0..mesh.n_nodes())
            .filter(|&node| mesh.is_boundary(node))
            .all(|node| self.node_value(node).iter().all(|&v| v == 0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |self − other|` over all nodal components.
    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn axpy(&mut self, alpha: f64, other: &Field) {
        for (a, b) in self.values.iter_mut().zip(other.values.iter()) {
            *a += alpha * b;
        }
    }

    /// Interior unknowns in dof order.
    pub fn to_dofs(&self, mesh: &Mesh) -> Vec<f64> {
        let mut out = Vec::with_capacity(mesh.n_dofs());
        for &node in mesh.interior_nodes() {
            out.extend_from_slice(self.node_value(node));
        }
        out
    }

    /// Field with the given interior unknowns and zero boundary values.
    pub fn from_dofs(mesh: &Mesh, dofs: &[f64]) -> Self {
        let d = mesh.dim();
        let mut f = Field::zeros(mesh);
        for (i, &node) in mesh.interior_nodes().iter().enumerate() {
            f.values[node * d..node * d + d].copy_from_slice(&dofs[i * d..i * d + d]);
        }
        f
    }

    pub fn to_json(&self) -> String {
        let file = FieldFile {
            dim: self.shape.dim,
            n: self.shape.n,
            length: self.shape.length,
            values: self.values.clone(),
        };
        serde_json::to_string(&file).expect("field serialization cannot fail")
    }

    /// Parses a field and checks it against `mesh`.
    pub fn from_json(mesh: &Mesh, text: &str) -> Result<Self> {
        let file: FieldFile = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("field JSON at line {}, column {}: {e}", e.line(), e.column())))?;
        let shape = MeshShape {
            dim: file.dim,
            n: file.n,
            length: file.length,
        };
        mesh.check_shape(shape)?;
        Field::from_values(mesh, file.values)
    }

    pub fn read_json(mesh: &Mesh, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Field::from_json(mesh, &text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_mesh;

    #[test]
    fn dof_round_trip_keeps_interior() {
        let m = build_mesh(2, 4, 1.0).unwrap();
        let f = Field::from_fn_dirichlet(&m, |x| [x[0] + 1.0, x[1] * 2.0, 0.0]);
        let back = Field::from_dofs(&m, &f.to_dofs(&m));
        assert_eq!(back, f);
        assert!(back.is_dirichlet_conforming(&m));
    }

    #[test]
    fn json_rejects_shape_mismatch() {
        let m = build_mesh(2, 4, 1.0).unwrap();
        let other = build_mesh(2, 5, 1.0).unwrap();
        let f = Field::zeros(&other);
        let err = Field::from_json(&m, &f.to_json()).unwrap_err();
        assert!(matches!(err, Error::MeshMismatch { .. }));
        assert!(err.to_string().contains("n=4"));
        let ok = Field::from_json(&m, &Field::zeros(&m).to_json()).unwrap();
        assert_eq!(ok, Field::zeros(&m));
    }

    #[test]
    fn json_rejects_wrong_value_count() {
        let m = build_mesh(2, 2, 1.0).unwrap();
        let text = r#"{"dim":2,"n":2,"L":1.0,"values":[1.0,2.0]}"#;
        assert!(Field::from_json(&m, text).is_err());
        assert!(matches!(Field::from_json(&m, "{"), Err(Error::Parse(_))));
    }
}
