use serde::Serialize;

use super::assembly::{for_each_qp, gather_cell, strain_at};
use super::field::Field;
use super::mesh::Mesh;
use crate::error::Result;
use crate::nfunc::conjugate_eval;
use crate::numerics::CompensatedSum;
use crate::operator::{AApprox, Variant};
use crate::tensor::SymTensor;

/// Quadrature-based quasi-norm quantities of a discrete state `(u, f)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostics {
    /// `‖F^A(Du)‖₂²`
    #[serde(rename = "F_A_sq")]
    pub f_a_sq: f64,
    /// `‖F(Du)‖₂²`
    #[serde(rename = "F_sq")]
    pub f_sq: f64,
    /// `∫ ω^A(|Du|)`
    pub modular: f64,
    /// cell-center difference surrogate of `‖∇F^A(Du)‖₂²`
    #[serde(rename = "grad_F_A_sq")]
    pub grad_f_a_sq: f64,
    #[serde(rename = "grad_F_sq")]
    pub grad_f_sq: f64,
    /// `‖Du‖_p^p`
    #[serde(rename = "Du_p")]
    pub du_p: f64,
    /// `‖Du‖₂²`
    #[serde(rename = "Du_sq")]
    pub du_sq: f64,
    /// `‖Du‖_{3p}^{3p}`
    #[serde(rename = "Du_3p")]
    pub du_3p: f64,
    /// `‖u‖₂²`
    pub u_sq: f64,
    /// `∫ ω*(|f|)`
    pub dual_force: f64,
    /// `∫ |f|²/a^A(|Du|)`
    pub dual_weighted: f64,
    /// `‖f‖_{p'}^{p'}`
    pub f_pprime: f64,
    /// `‖f‖₂²`
    pub f_sq_l2: f64,
    /// `max |Du|` over quadrature points
    #[serde(rename = "max_Du")]
    pub max_du: f64,
}

impl Diagnostics {
    /// Column names, in CSV order.
    pub const COLUMNS: [&'static str; 14] = [
        "F_A_sq",
        "F_sq",
        "modular",
        "grad_F_A_sq",
        "grad_F_sq",
        "Du_p",
        "Du_sq",
        "Du_3p",
        "u_sq",
        "dual_force",
        "dual_weighted",
        "f_pprime",
        "f_sq_l2",
        "max_Du",
    ];

    pub fn values(&self) -> [f64; 14] {
        [
            self.f_a_sq,
            self.f_sq,
            self.modular,
            self.grad_f_a_sq,
            self.grad_f_sq,
            self.du_p,
            self.du_sq,
            self.du_3p,
            self.u_sq,
            self.dual_force,
            self.dual_weighted,
            self.f_pprime,
            self.f_sq_l2,
            self.max_du,
        ]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Self::COLUMNS
            .iter()
            .position(|&c| c == name)
            .map(|i| self.values()[i])
    }

    pub fn all_finite_nonneg(&self) -> bool {
        self.values().iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

pub fn quasinorm_report(mesh: &Mesh, ap: &AApprox, u: &Field, f: &Field) -> Result<Diagnostics> {
    mesh.check_shape(u.shape())?;
    mesh.check_shape(f.shape())?;
    let params = ap.params;
    let p = params.p;
    let pp = params.p_conjugate();
    let w = mesh.weight();
    let d = mesh.dim();

    let mut f_a_sq = CompensatedSum::new();
    let mut f_sq = CompensatedSum::new();
    let mut modular = CompensatedSum::new();
    let mut du_p = CompensatedSum::new();
    let mut du_sq = CompensatedSum::new();
    let mut du_3p = CompensatedSum::new();
    let mut u_sq = CompensatedSum::new();
    let mut dual_force = CompensatedSum::new();
    let mut dual_weighted = CompensatedSum::new();
    let mut f_pprime = CompensatedSum::new();
    let mut f_l2 = CompensatedSum::new();
    let mut max_du: f64 = 0.0;
    let mut failure = None;

    for_each_qp(mesh, u.values(), Some(f.values()), |_, _, du, uq, fq| {
        let t = du.norm();
        let t2 = t * t;
        f_a_sq.add(w * ap.a_approx(t) * t2);
        if t > 0.0 {
            f_sq.add(w * params.a(t) * t2);
        }
        modular.add(w * ap.value(t));
        du_p.add(w * t.powf(p));
        du_sq.add(w * t2);
        du_3p.add(w * t.powf(3.0 * p));
        u_sq.add(w * (0..d).map(|c| uq[c] * uq[c]).sum::<f64>());
        max_du = max_du.max(t);
        let fn2: f64 = (0..d).map(|c| fq[c] * fq[c]).sum();
        let fnorm = fn2.sqrt();
        match conjugate_eval(&params, fnorm) {
            Ok(v) => dual_force.add(w * v),
            Err(e) => failure = Some(e),
        }
        if fn2 > 0.0 {
            dual_weighted.add(w * fn2 / ap.a_approx(t));
        }
        f_pprime.add(w * fnorm.powf(pp));
        f_l2.add(w * fn2);
    });
    if let Some(e) = failure {
        return Err(e);
    }

    let (grad_f_a_sq, grad_f_sq) = grad_f_surrogates(mesh, ap, u);

    Ok(Diagnostics {
        f_a_sq: f_a_sq.value(),
        f_sq: f_sq.value(),
        modular: modular.value(),
        grad_f_a_sq,
        grad_f_sq,
        du_p: du_p.value(),
        du_sq: du_sq.value(),
        du_3p: du_3p.value(),
        u_sq: u_sq.value(),
        dual_force: dual_force.value(),
        dual_weighted: dual_weighted.value(),
        f_pprime: f_pprime.value(),
        f_sq_l2: f_l2.value(),
        max_du,
    })
}

/// `Du` at every cell center, in cell order.
pub fn cell_center_strains(mesh: &Mesh, u: &Field) -> Vec<SymTensor> {
    let d = mesh.dim();
    let mut local = vec![0.0; mesh.nodes_per_cell() * d];
    (0..mesh.n_cells())
        .map(|cell| {
            gather_cell(mesh, u.values(), cell, &mut local);
            strain_at(mesh.center_point(), &local, d)
        })
        .collect()
}

/// Discrete `Σ_cells Σ_k |∂_k G|² h^d` for tensors `G` given at cell centers:
/// central differences inside, one-sided differences on the outer layer.
pub fn cell_difference_seminorm_sq(mesh: &Mesh, values: &[SymTensor]) -> f64 {
    let d = mesh.dim();
    let n = mesh.n();
    let h = mesh.h();
    let vol = h.powi(d as i32);
    let mut sum = CompensatedSum::new();
    for cell in 0..mesh.n_cells() {
        let idx = mesh.cell_multi_index(cell);
        for k in 0..d {
            let mut lo = idx;
            let mut hi = idx;
            let span;
            if idx[k] > 0 && idx[k] + 1 < n {
                lo[k] -= 1;
                hi[k] += 1;
                span = 2.0 * h;
            } else if idx[k] == 0 {
                hi[k] += 1;
                span = h;
            } else {
                lo[k] -= 1;
                span = h;
            }
            let a = values[mesh.cell_index(&lo[..d])];
            let b = values[mesh.cell_index(&hi[..d])];
            sum.add((b - a).norm_sq() / (span * span) * vol);
        }
    }
    sum.value()
}

fn grad_f_surrogates(mesh: &Mesh, ap: &AApprox, u: &Field) -> (f64, f64) {
    let centers = cell_center_strains(mesh, u);
    let fa: Vec<SymTensor> = centers.iter().map(|g| ap.f_map(g, Variant::Approx)).collect();
    let fe: Vec<SymTensor> = centers.iter().map(|g| ap.f_map(g, Variant::Exact)).collect();
    (
        cell_difference_seminorm_sq(mesh, &fa),
        cell_difference_seminorm_sq(mesh, &fe),
    )
}
