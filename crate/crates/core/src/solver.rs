//! Damped Newton minimization of the discrete energy
//! `E(u) = ∫ ω^A(|Du|) − f·u` over Dirichlet-conforming Q1 fields.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    assemble_linear_stiffness, energy_increment_values, energy_values, gradient_values, hessian_values,
    load_vector, quasinorm_report, Diagnostics, Field, Mesh,
};
use crate::linalg::{cg_jacobi, dot, norm2, BandCholesky, CsrMatrix};
use crate::operator::AApprox;

/// Meshes with at most this many cells per side default to the direct solver.
pub const DIRECT_SOLVER_MAX_N: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolverKind {
    /// Direct for `n ≤ 64`, CG above.
    Auto,
    DirectSpd,
    CgJacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_newton: usize,
    pub armijo_sigma: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    pub linear_solver: LinearSolverKind,
    pub cg_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_abs: 1e-10,
            tol_rel: 1e-10,
            max_newton: 100,
            armijo_sigma: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 40,
            linear_solver: LinearSolverKind::Auto,
            cg_tol: 1e-12,
        }
    }
}

impl SolverOptions {
    /// Field-addressed validation messages; empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [("solver.tol_abs", self.tol_abs), ("solver.tol_rel", self.tol_rel), ("solver.cg_tol", self.cg_tol)] {
            if !(v > 0.0) {
                out.push(format!("{name}: must be > 0 (got {v})"));
            }
        }
        for (name, v) in [("solver.armijo_sigma", self.armijo_sigma), ("solver.backtrack_factor", self.backtrack_factor)] {
            if !(v > 0.0 && v < 1.0) {
                out.push(format!("{name}: must lie in (0, 1) (got {v})"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    fn use_direct(&self, mesh: &Mesh) -> bool {
        match self.linear_solver {
            LinearSolverKind::DirectSpd => true,
            LinearSolverKind::CgJacobi => false,
            LinearSolverKind::Auto => mesh.n() <= DIRECT_SOLVER_MAX_N,
        }
    }
}

/// Smooth convex objective on interior-dof vectors.
pub(crate) trait ConvexObjective {
    fn mesh(&self) -> &Mesh;
    fn energy(&self, u: &[f64]) -> f64;
    /// `E(u + step) − E(u)`, accurate in sign for tiny steps.
    fn increment(&self, u: &[f64], step: &[f64]) -> f64;
    fn gradient(&self, u: &[f64]) -> Vec<f64>;
    fn hessian(&self, u: &[f64]) -> Result<CsrMatrix>;
}

pub(crate) struct SteadyObjective<'a> {
    pub mesh: &'a Mesh,
    pub ap: &'a AApprox,
    pub f: &'a Field,
}

impl SteadyObjective<'_> {
    fn nodal(&self, dofs: &[f64]) -> Field {
        Field::from_dofs(self.mesh, dofs)
    }
}

impl ConvexObjective for SteadyObjective<'_> {
    fn mesh(&self) -> &Mesh {
        self.mesh
    }
    fn energy(&self, u: &[f64]) -> f64 {
        energy_values(self.mesh, self.ap, self.nodal(u).values(), self.f.values())
    }
    fn increment(&self, u: &[f64], step: &[f64]) -> f64 {
        energy_increment_values(
            self.mesh,
            self.ap,
            self.nodal(u).values(),
            self.nodal(step).values(),
            self.f.values(),
        )
    }
    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        gradient_values(self.mesh, self.ap, self.nodal(u).values(), self.f.values())
    }
    fn hessian(&self, u: &[f64]) -> Result<CsrMatrix> {
        hessian_values(self.mesh, self.ap, self.nodal(u).values())
    }
}

/// Outcome of a Newton minimization on interior dofs.
#[derive(Debug, Clone)]
pub(crate) struct NewtonTrace {
    pub u: Vec<f64>,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub energy_history: Vec<f64>,
    pub energy_decrements: Vec<f64>,
    pub gradient_history: Vec<f64>,
}

pub(crate) fn solve_spd(mesh: &Mesh, opts: &SolverOptions, a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if opts.use_direct(mesh) {
        Ok(BandCholesky::factor(a)?.solve(b))
    } else {
        cg_jacobi(a, b, opts.cg_tol)
    }
}

pub(crate) fn newton_minimize<O: ConvexObjective>(
    obj: &O,
    mut u: Vec<f64>,
    load_norm: f64,
    opts: &SolverOptions,
) -> Result<NewtonTrace> {
    opts.validate()?;
    let tol = opts.tol_abs + opts.tol_rel * load_norm;
    let mut energy_history = vec![obj.energy(&u)];
    let mut energy_decrements = Vec::new();
    let mut gradient_history = Vec::new();
    let mut iteration = 0;
    loop {
        let g = obj.gradient(&u);
        let gnorm = norm2(&g);
        gradient_history.push(gnorm);
        if !gnorm.is_finite() {
            return Err(Error::LinearSolveFailure("non-finite gradient".into()));
        }
        if gnorm <= tol {
            return Ok(NewtonTrace {
                u,
                iterations: iteration,
                final_gradient_norm: gnorm,
                energy_history,
                energy_decrements,
                gradient_history,
            });
        }
        if iteration == opts.max_newton {
            return Err(Error::MaxIterations {
                iterations: iteration,
                last: gnorm,
                residuals: gradient_history,
            });
        }
        let h = obj.hessian(&u)?;
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let dir = solve_spd(obj.mesh(), opts, &h, &rhs)?;
        let slope = dot(&g, &dir);
        if !(slope < 0.0) {
            return Err(Error::LinearSolveFailure(format!(
                "Newton direction is not a descent direction (slope {slope:e})"
            )));
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let step: Vec<f64> = dir.iter().map(|v| alpha * v).collect();
            let de = obj.increment(&u, &step);
            if de < 0.0 && de <= opts.armijo_sigma * alpha * slope {
                accepted = Some((step, de));
                break;
            }
            alpha *= opts.backtrack_factor;
        }
        log::debug!("newton {iteration}: slope = {slope:.3e}, tol = {tol:.3e}, alpha = {alpha:e}");
        let Some((step, de)) = accepted else {
            return Err(Error::LineSearchFailure {
                iteration,
                backtracks: opts.max_backtracks,
            });
        };
        for (ui, si) in u.iter_mut().zip(&step) {
            *ui += si;
        }
        iteration += 1;
        energy_history.push(obj.energy(&u));
        energy_decrements.push(de);
        log::debug!("newton {iteration}: |g| = {gnorm:.3e}, alpha = {alpha}, dE = {de:.3e}");
    }
}

/// Converged steady state `u^A` with its Newton history.
#[derive(Debug, Clone)]
pub struct Solution {
    pub u: Field,
    pub newton_iters: usize,
    pub final_gradient_norm: f64,
    /// `E(u_k)` after every accepted Newton step, starting at the initial iterate.
    pub energy_history: Vec<f64>,
    /// `E(u_{k+1}) − E(u_k)` evaluated from per-point increments.
    pub energy_decrements: Vec<f64>,
    pub gradient_history: Vec<f64>,
    pub load_norm: f64,
    pub diagnostics: Diagnostics,
}

impl Solution {
    /// Every Newton step lowered the energy.
    pub fn strictly_descending(&self) -> bool {
        self.energy_decrements.iter().all(|&d| d < 0.0)
    }
}

pub fn solve_steady(mesh: &Mesh, ap: &AApprox, f: &Field, opts: &SolverOptions) -> Result<Solution> {
    solve_steady_from(mesh, ap, f, &Field::zeros(mesh), opts)
}

/// Newton from a given Dirichlet-conforming initial iterate.
pub fn solve_steady_from(
    mesh: &Mesh,
    ap: &AApprox,
    f: &Field,
    initial: &Field,
    opts: &SolverOptions,
) -> Result<Solution> {
    ap.params.require_solver_ready()?;
    mesh.check_shape(f.shape())?;
    mesh.check_shape(initial.shape())?;
    if !f.is_finite() {
        return Err(Error::domain("f", f64::NAN, "load must be finite"));
    }
    if !initial.is_dirichlet_conforming(mesh) {
        return Err(Error::domain("initial", f64::NAN, "initial iterate must vanish on the boundary"));
    }
    let load_norm = norm2(&load_vector(mesh, f)?);
    let obj = SteadyObjective { mesh, ap, f };
    let trace = newton_minimize(&obj, initial.to_dofs(mesh), load_norm, opts)?;
    let u = Field::from_dofs(mesh, &trace.u);
    let diagnostics = quasinorm_report(mesh, ap, &u, f)?;
    Ok(Solution {
        u,
        newton_iters: trace.iterations,
        final_gradient_norm: trace.final_gradient_norm,
        energy_history: trace.energy_history,
        energy_decrements: trace.energy_decrements,
        gradient_history: trace.gradient_history,
        load_norm,
        diagnostics,
    })
}

/// Solves `∫ Du·Dφ = ∫ f·φ` with one SPD solve.
pub fn linear_oracle(mesh: &Mesh, f: &Field) -> Result<Field> {
    let k = assemble_linear_stiffness(mesh);
    let b = load_vector(mesh, f)?;
    let opts = SolverOptions::default();
    let x = solve_spd(mesh, &opts, &k, &b)?;
    Ok(Field::from_dofs(mesh, &x))
}

/// Builtin loads and, for the `p = 2` manufactured case, exact solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    /// `f = 0`.
    Zero,
    /// `u* = (s, …, s)`, `s = Π sin(π x_k / L)`, with `f = −div Du*`.
    Manufactured,
    /// Smooth non-symmetric load of moderate size for the nonlinear runs.
    Smooth,
}

impl Builtin {
    pub fn parse(id: &str) -> Result<Builtin> {
        match id {
            "zero" => Ok(Builtin::Zero),
            "manufactured" | "sine" => Ok(Builtin::Manufactured),
            "smooth" => Ok(Builtin::Smooth),
            other => Err(Error::UnknownBuiltin(other.to_string())),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Builtin::Zero => "zero",
            Builtin::Manufactured => "manufactured",
            Builtin::Smooth => "smooth",
        }
    }
}

/// Amplitude of the `smooth` builtin load.
pub const SMOOTH_LOAD_AMPLITUDE: f64 = 10.0;

/// Builtin load sampled at the nodes.
pub fn builtin_load(mesh: &Mesh, which: Builtin) -> Field {
    let d = mesh.dim();
    let k = PI / mesh.length();
    match which {
        Builtin::Zero => Field::zeros(mesh),
        Builtin::Manufactured => manufactured_parts(mesh).1,
        Builtin::Smooth => Field::from_fn(mesh, |x| {
            let mut out = [0.0; 3];
            let bump: f64 = (0..d).map(|j| (k * x[j]).sin()).product();
            out[0] = SMOOTH_LOAD_AMPLITUDE * (1.0 + 0.5 * (k * x[1]).cos()) * bump;
            out[1] = SMOOTH_LOAD_AMPLITUDE * 0.5 * (2.0 * k * x[0]).sin() * (k * x[1]).sin();
            if d == 3 {
                out[2] = SMOOTH_LOAD_AMPLITUDE * 0.25 * bump;
            }
            out
        }),
    }
}

fn manufactured_parts(mesh: &Mesh) -> (Field, Field) {
    let d = mesh.dim();
    let k = PI / mesh.length();
    let u = Field::from_fn_dirichlet(mesh, |x| {
        let s: f64 = (0..d).map(|j| (k * x[j]).sin()).product();
        [s; 3]
    });
    // −div Du* for u* = s(1,…,1): f_i = ½((d+1) k² s − Σ_{j≠i} ∂_i∂_j s)
    let f = Field::from_fn(mesh, |x| {
        let sin: Vec<f64> = (0..d).map(|j| (k * x[j]).sin()).collect();
        let cos: Vec<f64> = (0..d).map(|j| (k * x[j]).cos()).collect();
        let s: f64 = sin.iter().product();
        let mut out = [0.0; 3];
        for i in 0..d {
            let mut mixed = 0.0;
            for j in 0..d {
                if j == i {
                    continue;
                }
                let mut term = k * k * cos[i] * cos[j];
                for m in 0..d {
                    if m != i && m != j {
                        term *= sin[m];
                    }
                }
                mixed += term;
            }
            out[i] = 0.5 * ((d as f64 + 1.0) * k * k * s - mixed);
        }
        out
    });
    (u, f)
}

/// Exact `u*` and load `f = −div Du*` of a builtin `p = 2` problem.
pub fn manufactured_load_p2(mesh: &Mesh, which: Builtin) -> Result<(Field, Field)> {
    match which {
        Builtin::Zero => Ok((Field::zeros(mesh), Field::zeros(mesh))),
        Builtin::Manufactured => Ok(manufactured_parts(mesh)),
        Builtin::Smooth => Err(Error::UnknownBuiltin(
            "smooth has no closed-form p = 2 solution".into(),
        )),
    }
}

/// Nodal L² error `(Σ_nodes h^d |u − v|²)^{1/2}`.
pub fn nodal_l2_error(mesh: &Mesh, u: &Field, v: &Field) -> f64 {
    let vol = mesh.h().powi(mesh.dim() as i32);
    let s: f64 = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    (s * vol).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_mesh;
    use crate::nfunc::PDeltaParams;

    fn ap(p: f64, delta: f64, a: f64) -> AApprox {
        AApprox::new(PDeltaParams::new(p, delta, 2).unwrap(), a).unwrap()
    }

    #[test]
    fn zero_load_needs_no_iterations() {
        let m = build_mesh(2, 6, 1.0).unwrap();
        let s = solve_steady(&m, &ap(1.5, 0.1, 10.0), &Field::zeros(&m), &SolverOptions::default()).unwrap();
        assert_eq!(s.newton_iters, 0);
        assert_eq!(s.u.max_abs(), 0.0);
        assert_eq!(linear_oracle(&m, &Field::zeros(&m)).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn quadratic_energy_converges_in_one_or_two_steps() {
        let m = build_mesh(2, 8, 1.0).unwrap();
        let f = builtin_load(&m, Builtin::Smooth);
        let s = solve_steady(&m, &ap(2.0, 0.7, 3.0), &f, &SolverOptions::default()).unwrap();
        assert!(s.newton_iters <= 2);
        let oracle = linear_oracle(&m, &f).unwrap();
        assert!(s.u.max_abs_diff(&oracle) < 1e-10);
    }

    #[test]
    fn nonlinear_solve_descends_and_is_deterministic() {
        let m = build_mesh(2, 8, 1.0).unwrap();
        let f = builtin_load(&m, Builtin::Smooth);
        let a = ap(1.5, 0.1, 10.0);
        let s1 = solve_steady(&m, &a, &f, &SolverOptions::default()).unwrap();
        let s2 = solve_steady(&m, &a, &f, &SolverOptions::default()).unwrap();
        assert!(s1.strictly_descending());
        assert!(s1.energy_history.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(s1.u, s2.u);
        assert!(s1.final_gradient_norm <= 1e-10 + 1e-10 * s1.load_norm);
    }

    #[test]
    fn cg_path_matches_direct_path() {
        let m = build_mesh(2, 8, 1.0).unwrap();
        let f = builtin_load(&m, Builtin::Smooth);
        let a = ap(1.5, 0.1, 10.0);
        let direct = solve_steady(&m, &a, &f, &SolverOptions::default()).unwrap();
        let opts = SolverOptions {
            linear_solver: LinearSolverKind::CgJacobi,
            ..SolverOptions::default()
        };
        let cg = solve_steady(&m, &a, &f, &opts).unwrap();
        assert!(direct.u.max_abs_diff(&cg.u) < 1e-9);
    }

    #[test]
    fn solver_errors() {
        let m = build_mesh(2, 4, 1.0).unwrap();
        let f = builtin_load(&m, Builtin::Smooth);
        assert!(solve_steady(&m, &ap(1.5, 0.0, 10.0), &f, &SolverOptions::default()).is_err());
        let opts = SolverOptions {
            max_newton: 0,
            ..SolverOptions::default()
        };
        assert!(matches!(
            solve_steady(&m, &ap(1.5, 0.1, 10.0), &f, &opts),
            Err(Error::MaxIterations { .. })
        ));
        let bad = SolverOptions {
            backtrack_factor: 1.5,
            ..SolverOptions::default()
        };
        assert!(matches!(solve_steady(&m, &ap(1.5, 0.1, 10.0), &f, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn manufactured_boundary_and_zero_cases() {
        let m = build_mesh(2, 8, 1.0).unwrap();
        let (u, _) = manufactured_load_p2(&m, Builtin::Manufactured).unwrap();
        for node in 0..m.n_nodes() {
            if m.is_boundary(node) {
                assert!(u.node_value(node).iter().all(|v| v.abs() < 1e-15));
            }
        }
        let (u0, f0) = manufactured_load_p2(&m, Builtin::Zero).unwrap();
        assert_eq!(u0.max_abs() + f0.max_abs(), 0.0);
        assert!(Builtin::parse("nope").is_err());
        assert!(manufactured_load_p2(&m, Builtin::Smooth).is_err());
    }
}
