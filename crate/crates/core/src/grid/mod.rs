//! Uniform Q1 discretization of vector fields on `[0, L]^d` with homogeneous
//! Dirichlet conditions.

mod assembly;
mod diagnostics;
mod field;
mod mesh;

pub use assembly::{
    assemble_energy, assemble_gradient, assemble_hessian, assemble_linear_stiffness,
    energy_increment, load_vector, lumped_mass, sym_gradient_at,
};
pub(crate) use assembly::{energy_increment_values, energy_values, for_each_qp, gradient_values, hessian_values};
pub use diagnostics::{cell_center_strains, cell_difference_seminorm_sq, quasinorm_report, Diagnostics};
pub use field::Field;
pub use mesh::{build_mesh, Mesh, MeshShape};
