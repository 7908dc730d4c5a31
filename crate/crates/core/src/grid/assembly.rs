//! Energy, gradient and Hessian of `u ↦ ∫ ω^A(|Du|) − f·u` on a Q1 mesh.
//!
//! Cells are visited in index order and contributions are added in that
//! fixed order, so every assembled quantity is bitwise reproducible.

use super::field::Field;
use super::mesh::{Mesh, RefPoint};
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::numerics::{gauss3_span, CompensatedSum};
use crate::operator::{AApprox, Variant};
use crate::tensor::SymTensor;

/// Local nodal values of one cell, `[a*d + c]`.
pub(crate) fn gather_cell(mesh: &Mesh, values: &[f64], cell: usize, out: &mut [f64]) {
    let d = mesh.dim();
    for (a, &node) in mesh.cell_nodes(cell).iter().enumerate() {
        out[a * d..a * d + d].copy_from_slice(&values[node * d..node * d + d]);
    }
}

#[inline]
pub(crate) fn strain_at(rp: &RefPoint, local: &[f64], dim: usize) -> SymTensor {
    let mut s = SymTensor::zeros(dim);
    for (b, &v) in rp.strain.iter().zip(local) {
        if v != 0.0 {
            s += b.scale(v);
        }
    }
    s
}

#[inline]
pub(crate) fn value_at(rp: &RefPoint, local: &[f64], dim: usize) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (a, &n) in rp.shape.iter().enumerate() {
        for c in 0..dim {
            out[c] += n * local[a * dim + c];
        }
    }
    out
}

/// Symmetric gradient of `u` at quadrature point `qp` of `cell`.
pub fn sym_gradient_at(mesh: &Mesh, u: &Field, cell: usize, qp: usize) -> Result<SymTensor> {
    mesh.check_shape(u.shape())?;
    if cell >= mesh.n_cells() {
        return Err(Error::Index(format!("cell {cell} >= {}", mesh.n_cells())));
    }
    if qp >= mesh.n_quad() {
        return Err(Error::Index(format!("quadrature point {qp} >= {}", mesh.n_quad())));
    }
    let mut local = vec![0.0; mesh.nodes_per_cell() * mesh.dim()];
    gather_cell(mesh, u.values(), cell, &mut local);
    Ok(strain_at(mesh.quad_point(qp), &local, mesh.dim()))
}

/// Calls `visit(cell, qp, Du, u, f)` for every quadrature point in order.
pub(crate) fn for_each_qp<V>(mesh: &Mesh, u: &[f64], f: Option<&[f64]>, mut visit: V)
where
    V: FnMut(usize, usize, &SymTensor, [f64; 3], [f64; 3]),
{
    let d = mesh.dim();
    let nl = mesh.nodes_per_cell() * d;
    let mut ul = vec![0.0; nl];
    let mut fl = vec![0.0; nl];
    for cell in 0..mesh.n_cells() {
        gather_cell(mesh, u, cell, &mut ul);
        if let Some(f) = f {
            gather_cell(mesh, f, cell, &mut fl);
        }
        for qp in 0..mesh.n_quad() {
            let rp = mesh.quad_point(qp);
            let du = strain_at(rp, &ul, d);
            let uq = value_at(rp, &ul, d);
            let fq = if f.is_some() { value_at(rp, &fl, d) } else { [0.0; 3] };
            visit(cell, qp, &du, uq, fq);
        }
    }
}

fn check_fields(mesh: &Mesh, fields: &[&Field]) -> Result<()> {
    for f in fields {
        mesh.check_shape(f.shape())?;
    }
    Ok(())
}

pub fn assemble_energy(mesh: &Mesh, ap: &AApprox, u: &Field, f: &Field) -> Result<f64> {
    check_fields(mesh, &[u, f])?;
    Ok(energy_values(mesh, ap, u.values(), f.values()))
}

pub(crate) fn energy_values(mesh: &Mesh, ap: &AApprox, u: &[f64], f: &[f64]) -> f64 {
    let w = mesh.weight();
    let d = mesh.dim();
    let mut sum = CompensatedSum::new();
    for_each_qp(mesh, u, Some(f), |_, _, du, uq, fq| {
        let load: f64 = (0..d).map(|c| fq[c] * uq[c]).sum();
        sum.add(w * ap.value(du.norm()));
        sum.add(-w * load);
    });
    sum.value()
}

/// `ω^A(t1) − ω^A(t0)` given an accurately computed `t1 − t0`.
fn potential_increment(ap: &AApprox, t0: f64, t1: f64, dt: f64) -> f64 {
    if dt == 0.0 {
        return 0.0;
    }
    let scale = t0.max(t1);
    if t0 == 0.0 || t1 == 0.0 || dt.abs() > 1e-3 * scale {
        ap.value(t1) - ap.value(t0)
    } else {
        gauss3_span(|s| ap.d1(s), t0, dt)
    }
}

/// `E(u + d) − E(u)` evaluated from per-point increments, so that its sign
/// stays reliable when the increment is far below the rounding level of `E`.
pub(crate) fn energy_increment_values(mesh: &Mesh, ap: &AApprox, u: &[f64], step: &[f64], f: &[f64]) -> f64 {
    let w = mesh.weight();
    let d = mesh.dim();
    let nl = mesh.nodes_per_cell() * d;
    let mut ul = vec![0.0; nl];
    let mut sl = vec![0.0; nl];
    let mut fl = vec![0.0; nl];
    let mut sum = CompensatedSum::new();
    for cell in 0..mesh.n_cells() {
        gather_cell(mesh, step, cell, &mut sl);
        if sl.iter().all(|&v| v == 0.0) {
            continue;
        }
        gather_cell(mesh, u, cell, &mut ul);
        gather_cell(mesh, f, cell, &mut fl);
        for qp in 0..mesh.n_quad() {
            let rp = mesh.quad_point(qp);
            let du = strain_at(rp, &ul, d);
            let dd = strain_at(rp, &sl, d);
            let t0 = du.norm();
            let t1 = (du + dd).norm();
            let dt = if t0 + t1 > 0.0 {
                (2.0 * du.dot(&dd) + dd.norm_sq()) / (t0 + t1)
            } else {
                0.0
            };
            sum.add(w * potential_increment(ap, t0, t1, dt));
            let sq = value_at(rp, &sl, d);
            let fq = value_at(rp, &fl, d);
            let load: f64 = (0..d).map(|c| fq[c] * sq[c]).sum();
            sum.add(-w * load);
        }
    }
    sum.value()
}

pub fn energy_increment(mesh: &Mesh, ap: &AApprox, u: &Field, step: &Field, f: &Field) -> Result<f64> {
    check_fields(mesh, &[u, step, f])?;
    Ok(energy_increment_values(mesh, ap, u.values(), step.values(), f.values()))
}

/// Scatters a local cell vector into interior-dof numbering.
fn scatter_local(mesh: &Mesh, cell: usize, local: &[f64], out: &mut [f64]) {
    let d = mesh.dim();
    for (a, &node) in mesh.cell_nodes(cell).iter().enumerate() {
        if let Some(i) = mesh.interior_index(node) {
            for c in 0..d {
                out[i * d + c] += local[a * d + c];
            }
        }
    }
}

/// `∫ S^A(Du)·Dφ_i − f·φ_i` for every interior dof `i`.
pub fn assemble_gradient(mesh: &Mesh, ap: &AApprox, u: &Field, f: &Field) -> Result<Vec<f64>> {
    check_fields(mesh, &[u, f])?;
    Ok(gradient_values(mesh, ap, u.values(), f.values()))
}

pub(crate) fn gradient_values(mesh: &Mesh, ap: &AApprox, u: &[f64], f: &[f64]) -> Vec<f64> {
    let d = mesh.dim();
    let w = mesh.weight();
    let nl = mesh.nodes_per_cell() * d;
    let mut ul = vec![0.0; nl];
    let mut fl = vec![0.0; nl];
    let mut rl = vec![0.0; nl];
    let mut out = vec![0.0; mesh.n_dofs()];
    for cell in 0..mesh.n_cells() {
        gather_cell(mesh, u, cell, &mut ul);
        gather_cell(mesh, f, cell, &mut fl);
        rl.iter_mut().for_each(|v| *v = 0.0);
        for qp in 0..mesh.n_quad() {
            let rp = mesh.quad_point(qp);
            let s = ap.stress(&strain_at(rp, &ul, d), Variant::Approx);
            let fq = value_at(rp, &fl, d);
            for (j, b) in rp.strain.iter().enumerate() {
                let (a, c) = (j / d, j % d);
                rl[j] += w * (s.dot(b) - fq[c] * rp.shape[a]);
            }
        }
        scatter_local(mesh, cell, &rl, &mut out);
    }
    out
}

/// `∫ f·φ_i` for every interior dof.
pub fn load_vector(mesh: &Mesh, f: &Field) -> Result<Vec<f64>> {
    check_fields(mesh, &[f])?;
    let d = mesh.dim();
    let w = mesh.weight();
    let nl = mesh.nodes_per_cell() * d;
    let mut fl = vec![0.0; nl];
    let mut rl = vec![0.0; nl];
    let mut out = vec![0.0; mesh.n_dofs()];
    for cell in 0..mesh.n_cells() {
        gather_cell(mesh, f.values(), cell, &mut fl);
        rl.iter_mut().for_each(|v| *v = 0.0);
        for qp in 0..mesh.n_quad() {
            let rp = mesh.quad_point(qp);
            let fq = value_at(rp, &fl, d);
            for (a, &n) in rp.shape.iter().enumerate() {
                for c in 0..d {
                    rl[a * d + c] += w * fq[c] * n;
                }
            }
        }
        scatter_local(mesh, cell, &rl, &mut out);
    }
    Ok(out)
}

/// Row-sum lumped mass per interior dof.
pub fn lumped_mass(mesh: &Mesh) -> Vec<f64> {
    let d = mesh.dim();
    let w = mesh.weight();
    let mut out = vec![0.0; mesh.n_dofs()];
    for cell in 0..mesh.n_cells() {
        for (a, &node) in mesh.cell_nodes(cell).iter().enumerate() {
            if let Some(i) = mesh.interior_index(node) {
                let m: f64 = (0..mesh.n_quad()).map(|qp| w * mesh.quad_point(qp).shape[a]).sum();
                for c in 0..d {
                    out[i * d + c] += m;
                }
            }
        }
    }
    out
}

/// Node-adjacency sparsity pattern on interior dofs.
pub(crate) fn dof_pattern(mesh: &Mesh) -> CsrMatrix {
    let d = mesh.dim();
    let n = mesh.n();
    let mut rows = Vec::with_capacity(mesh.n_dofs());
    for &node in mesh.interior_nodes() {
        let idx = mesh.node_multi_index(node);
        let mut neighbours = Vec::new();
        let offsets = 3usize.pow(d as u32);
        for o in 0..offsets {
            let mut nidx = [0usize; 3];
            let mut ok = true;
            let mut code = o;
            for k in 0..d {
                let shift = (code % 3) as isize - 1;
                code /= 3;
                let v = idx[k] as isize + shift;
                if v < 0 || v > n as isize {
                    ok = false;
                }
                nidx[k] = v.max(0) as usize;
            }
            if !ok {
                continue;
            }
            if let Some(j) = mesh.interior_index(mesh.node_index(&nidx[..d])) {
                neighbours.push(j);
            }
        }
        neighbours.sort_unstable();
        for _c in 0..d {
            let row: Vec<usize> = neighbours
                .iter()
                .flat_map(|&j| (0..d).map(move |e| j * d + e))
                .collect();
            rows.push(row);
        }
    }
    CsrMatrix::from_pattern(rows)
}

/// Adds a symmetric local matrix (upper triangle given, mirrored) into `mat`.
fn scatter_matrix(mesh: &Mesh, cell: usize, local: &[f64], nl: usize, mat: &mut CsrMatrix) {
    let d = mesh.dim();
    let nodes = mesh.cell_nodes(cell);
    let global: Vec<Option<usize>> = (0..nl)
        .map(|j| mesh.interior_index(nodes[j / d]).map(|i| i * d + j % d))
        .collect();
    for i in 0..nl {
        let Some(gi) = global[i] else { continue };
        for j in i..nl {
            let Some(gj) = global[j] else { continue };
            let v = local[i * nl + j];
            mat.add(gi, gj, v);
            if gi != gj {
                mat.add(gj, gi, v);
            }
        }
    }
}

/// Hessian `∫ ∂S^A(Du)[Dφ_j]·Dφ_i` on interior dofs.
pub fn assemble_hessian(mesh: &Mesh, ap: &AApprox, u: &Field) -> Result<CsrMatrix> {
    check_fields(mesh, &[u])?;
    if ap.delta() == 0.0 && ap.p() < 2.0 {
        return Err(Error::Singular("Hessian assembly requires delta > 0"));
    }
    hessian_values(mesh, ap, u.values())
}

pub(crate) fn hessian_values(mesh: &Mesh, ap: &AApprox, u: &[f64]) -> Result<CsrMatrix> {
    let d = mesh.dim();
    let w = mesh.weight();
    let nl = mesh.nodes_per_cell() * d;
    let mut mat = dof_pattern(mesh);
    let mut ul = vec![0.0; nl];
    let mut kl = vec![0.0; nl * nl];
    let mut tb = vec![SymTensor::zeros(d); nl];
    for cell in 0..mesh.n_cells() {
        gather_cell(mesh, u, cell, &mut ul);
        kl.iter_mut().for_each(|v| *v = 0.0);
        for qp in 0..mesh.n_quad() {
            let rp = mesh.quad_point(qp);
            let tangent = ap.tangent(&strain_at(rp, &ul, d))?;
            for (j, b) in rp.strain.iter().enumerate() {
                tb[j] = tangent.apply(b);
            }
            for i in 0..nl {
                for j in i..nl {
                    kl[i * nl + j] += w * tb[j].dot(&rp.strain[i]);
                }
            }
        }
        scatter_matrix(mesh, cell, &kl, nl, &mut mat);
    }
    Ok(mat)
}

/// Constant bilinear form `∫ Dφ_j·Dφ_i`.
pub fn assemble_linear_stiffness(mesh: &Mesh) -> CsrMatrix {
    let d = mesh.dim();
    let w = mesh.weight();
    let nl = mesh.nodes_per_cell() * d;
    let mut mat = dof_pattern(mesh);
    let mut kl = vec![0.0; nl * nl];
    for qp in 0..mesh.n_quad() {
        let rp = mesh.quad_point(qp);
        for i in 0..nl {
            for j in i..nl {
                kl[i * nl + j] += w * rp.strain[j].dot(&rp.strain[i]);
            }
        }
    }
    for cell in 0..mesh.n_cells() {
        scatter_matrix(mesh, cell, &kl, nl, &mut mat);
    }
    mat
}
