//! Implicit Euler for `∂ₜu − div S^A(Du) = f` with a lumped mass matrix, and
//! the capped initial-data approximation `u₀^A`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::export::{fmt_real, CsvTable};
use crate::grid::{
    assemble_linear_stiffness, energy_values, for_each_qp, load_vector, lumped_mass,
    quasinorm_report, Diagnostics, Field, Mesh,
};
use crate::linalg::{norm2, CsrMatrix};
use crate::nfunc::PDeltaParams;
use crate::numerics::CompensatedSum;
use crate::operator::AApprox;
use crate::solver::{newton_minimize, solve_spd, ConvexObjective, SolverOptions, SteadyObjective};

/// Builtin initial data `u0 = amp·(s², sin(2πx₁/L)·s, s²)` with
/// `s = Π sin(πx_k/L)`; the third component is present only in 3D.
pub fn bump_initial(mesh: &Mesh, amplitude: f64) -> Field {
    let d = mesh.dim();
    let k = std::f64::consts::PI / mesh.length();
    Field::from_fn(mesh, |x| {
        let s: f64 = (0..d).map(|j| (k * x[j]).sin()).product();
        let mut out = [amplitude * s * s, amplitude * (2.0 * k * x[0]).sin() * s, 0.0];
        if d == 3 {
            out[2] = amplitude * s * s;
        }
        out
    })
}

/// Largest quadrature-point `|Du|` of a nodal field.
pub fn max_strain(mesh: &Mesh, u: &Field) -> f64 {
    let mut m: f64 = 0.0;
    for_each_qp(mesh, u.values(), None, |_, _, du, _, _| m = m.max(du.norm()));
    m
}

/// Nodal `L²` norm `(Σ h^d |u|²)^{1/2}`.
fn nodal_l2(mesh: &Mesh, values: &[f64]) -> f64 {
    let vol = mesh.h().powi(mesh.dim() as i32);
    (values.iter().map(|v| v * v).sum::<f64>() * vol).sqrt()
}

/// Result of the capped smoothing search.
#[derive(Debug, Clone)]
pub struct Mollified {
    pub u: Field,
    /// Width of the zeroed boundary band in graph distance.
    pub band: usize,
    /// Number of averaging passes.
    pub passes: usize,
    pub max_du: f64,
    /// Nodal `L²` distance to the input.
    pub deviation: f64,
}

fn average_pass(mesh: &Mesh, values: &[f64]) -> Vec<f64> {
    let d = mesh.dim();
    let n = mesh.n();
    let mut out = vec![0.0; values.len()];
    let count = 3usize.pow(d as u32) as f64;
    for &node in mesh.interior_nodes() {
        let idx = mesh.node_multi_index(node);
        let mut acc = [0.0; 3];
        for off in 0..3usize.pow(d as u32) {
            let mut nb = [0usize; 3];
            let mut rem = off;
            for k in 0..d {
                nb[k] = idx[k] + rem % 3 - 1;
                rem /= 3;
                debug_assert!(nb[k] <= n);
            }
            let j = mesh.node_index(&nb[..d]);
            for c in 0..d {
                acc[c] += values[j * d + c];
            }
        }
        for c in 0..d {
            out[node * d + c] = acc[c] / count;
        }
    }
    out
}

/// Searches every band width `m ≤ n/2` and pass count `k ≤ 2n`, zeroing the
/// nodes within graph distance `m` of the boundary and then applying `k`
/// passes of `3^d` averaging. Among the pairs meeting `max|Du| ≤ A`, the one
/// closest to `u0` in nodal `L²` wins; ties go to the smaller `m + k`, then
/// the smaller `m`. The feasible set only grows with `A`, so the distance to
/// `u0` is non-increasing in `A`.
pub fn mollify_with_report(mesh: &Mesh, u0: &Field, cap: f64) -> Result<Mollified> {
    mesh.check_shape(u0.shape())?;
    if !(cap >= 1.0) || !cap.is_finite() {
        return Err(Error::domain("A", cap, "must be finite and >= 1"));
    }
    if !u0.is_finite() {
        return Err(Error::domain("u0", f64::NAN, "initial data must be finite"));
    }
    let d = mesh.dim();
    let n = mesh.n();
    let mut best: Option<(f64, usize, usize, Vec<f64>, f64)> = None;
    let mut best_achieved = f64::INFINITY;
    for m in 0..=n / 2 {
        let mut vals = u0.values().to_vec();
        for node in 0..mesh.n_nodes() {
            if mesh.boundary_distance(node) <= m {
                vals[node * d..(node + 1) * d].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        for k in 0..=2 * n {
            if k > 0 {
                vals = average_pass(mesh, &vals);
            }
            let field = Field::from_values(mesh, vals.clone())?;
            let md = max_strain(mesh, &field);
            best_achieved = best_achieved.min(md);
            if md > cap {
                continue;
            }
            let diff: Vec<f64> = vals.iter().zip(u0.values()).map(|(a, b)| a - b).collect();
            let dev = nodal_l2(mesh, &diff);
            let better = match &best {
                None => true,
                Some((bd, bm, bk, _, _)) => (dev, m + k, m) < (*bd, bm + bk, *bm),
            };
            if better {
                best = Some((dev, m, k, vals.clone(), md));
            }
        }
    }
    let Some((deviation, band, passes, vals, max_du)) = best else {
        return Err(Error::MollifyCap {
            cap,
            achieved: best_achieved,
        });
    };
    log::debug!("mollify: A = {cap}, band {band}, passes {passes}, max|Du| = {max_du:.6e}");
    Ok(Mollified {
        u: Field::from_values(mesh, vals)?,
        band,
        passes,
        max_du,
        deviation,
    })
}

/// Dirichlet-conforming approximation of `u0` with `max|Du| ≤ A` at every
/// quadrature point; see [`mollify_with_report`].
pub fn mollify_initial(mesh: &Mesh, u0: &Field, cap: f64) -> Result<Field> {
    Ok(mollify_with_report(mesh, u0, cap)?.u)
}

/// `u ↦ ‖u − u_prev‖²_M/(2dt) + E(u)` with the lumped mass `M`.
struct StepObjective<'a> {
    steady: SteadyObjective<'a>,
    mass: &'a [f64],
    prev: &'a [f64],
    dt: f64,
}

impl ConvexObjective for StepObjective<'_> {
    fn mesh(&self) -> &Mesh {
        self.steady.mesh
    }
    fn energy(&self, u: &[f64]) -> f64 {
        let mut s = CompensatedSum::new();
        for i in 0..u.len() {
            let r = u[i] - self.prev[i];
            s.add(self.mass[i] * r * r);
        }
        s.value() / (2.0 * self.dt) + self.steady.energy(u)
    }
    fn increment(&self, u: &[f64], step: &[f64]) -> f64 {
        let mut s = CompensatedSum::new();
        for i in 0..u.len() {
            let r = u[i] - self.prev[i];
            s.add(self.mass[i] * step[i] * (2.0 * r + step[i]));
        }
        s.value() / (2.0 * self.dt) + self.steady.increment(u, step)
    }
    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut g = self.steady.gradient(u);
        for i in 0..u.len() {
            g[i] += self.mass[i] * (u[i] - self.prev[i]) / self.dt;
        }
        g
    }
    fn hessian(&self, u: &[f64]) -> Result<CsrMatrix> {
        let mut h = self.steady.hessian(u)?;
        let shift: Vec<f64> = self.mass.iter().map(|m| m / self.dt).collect();
        h.add_diagonal(&shift);
        Ok(h)
    }
}

/// One implicit Euler step with its Newton bookkeeping.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub u: Field,
    pub newton_iters: usize,
    pub energy_decrements: Vec<f64>,
    /// Step objective at the new state minus its value at `u_prev`.
    pub objective_change: f64,
}

/// Minimizes `‖u − u_prev‖²_M/(2dt) + ∫ω^A(|Du|) − f_now·u`, starting at `u_prev`.
pub fn step_implicit_report(
    mesh: &Mesh,
    ap: &AApprox,
    u_prev: &Field,
    dt: f64,
    f_now: &Field,
    opts: &SolverOptions,
) -> Result<StepOutcome> {
    ap.params.require_solver_ready()?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::domain("dt", dt, "must be finite and > 0"));
    }
    mesh.check_shape(u_prev.shape())?;
    mesh.check_shape(f_now.shape())?;
    if !u_prev.is_dirichlet_conforming(mesh) {
        return Err(Error::domain("u_prev", f64::NAN, "must vanish on the boundary"));
    }
    let mass = lumped_mass(mesh);
    let prev = u_prev.to_dofs(mesh);
    let mut rhs = load_vector(mesh, f_now)?;
    for i in 0..rhs.len() {
        rhs[i] += mass[i] * prev[i] / dt;
    }
    let obj = StepObjective {
        steady: SteadyObjective { mesh, ap, f: f_now },
        mass: &mass,
        prev: &prev,
        dt,
    };
    let trace = newton_minimize(&obj, prev.clone(), norm2(&rhs), opts)?;
    let step: Vec<f64> = trace.u.iter().zip(&prev).map(|(a, b)| a - b).collect();
    let objective_change = obj.increment(&prev, &step);
    Ok(StepOutcome {
        u: Field::from_dofs(mesh, &trace.u),
        newton_iters: trace.iterations,
        energy_decrements: trace.energy_decrements,
        objective_change,
    })
}

pub fn step_implicit(
    mesh: &Mesh,
    ap: &AApprox,
    u_prev: &Field,
    dt: f64,
    f_now: &Field,
    opts: &SolverOptions,
) -> Result<Field> {
    Ok(step_implicit_report(mesh, ap, u_prev, dt, f_now, opts)?.u)
}

/// Time grid `t_k = k·dt` for `k = 1..=ceil(T/dt)`; the last step lands on `T`.
pub fn time_grid(t_final: f64, dt: f64) -> Result<Vec<f64>> {
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(Error::domain("T", t_final, "must be finite and > 0"));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::domain("dt", dt, "must be finite and > 0"));
    }
    let steps = (t_final / dt - 1e-12).ceil().max(1.0) as usize;
    Ok((1..=steps).map(|k| (k as f64 * dt).min(t_final)).collect())
}

/// Per-step record of a parabolic run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeStepRecord {
    pub t: f64,
    pub newton_iters: usize,
    /// `E(u_k)` with load `f(t_k)`.
    pub energy: f64,
    /// `‖u_k − u_{k−1}‖₂` in the lumped mass norm.
    pub increment_norm: f64,
    /// `E(u_{k−1}) − E(u_k) − ‖u_k − u_{k−1}‖²/(2dt)`, both energies with load `f(t_k)`.
    pub dissipation_slack: f64,
    pub descending: bool,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParabolicRun {
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub steps: usize,
    #[serde(rename = "A")]
    pub threshold: f64,
    pub delta: f64,
    pub p: f64,
    pub initial: Diagnostics,
    pub records: Vec<TimeStepRecord>,
    pub sup_u_sq: f64,
    #[serde(rename = "sup_F_A_sq")]
    pub sup_f_a_sq: f64,
    pub time_derivative_sq: f64,
    pub data_quantity: f64,
    pub bound_ratio: f64,
    pub mollify_band: usize,
    pub mollify_passes: usize,
    #[serde(skip)]
    pub trajectory: Vec<Field>,
}

impl ParabolicRun {
    /// The energy inequality of every step holds.
    pub fn dissipation_holds(&self) -> bool {
        self.records.iter().all(|r| r.dissipation_slack >= 0.0)
    }

    pub fn all_descending(&self) -> bool {
        self.records.iter().all(|r| r.descending)
    }

    pub fn csv_table(&self) -> CsvTable {
        let mut header: Vec<&str> = vec!["step", "t", "newton_iters", "energy", "increment_norm", "dissipation_slack"];
        header.extend(Diagnostics::COLUMNS);
        let mut table = CsvTable::new(&header);
        for (k, r) in self.records.iter().enumerate() {
            let mut row = vec![
                (k + 1).to_string(),
                fmt_real(r.t),
                r.newton_iters.to_string(),
                fmt_real(r.energy),
                fmt_real(r.increment_norm),
                fmt_real(r.dissipation_slack),
            ];
            row.extend(r.diagnostics.values().iter().map(|&v| fmt_real(v)));
            table.push(row);
        }
        table
    }

    pub fn to_csv(&self) -> String {
        self.csv_table().render()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run is serializable")
    }
}

/// Whether [`run_parabolic`] should smooth the initial data first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialData {
    /// Apply [`mollify_initial`] with the run's `A`.
    Raw,
    /// Use as given; must be Dirichlet-conforming.
    Prepared,
}

fn data_quantity<L: Fn(f64) -> Field>(
    mesh: &Mesh,
    params: &PDeltaParams,
    u0: &Field,
    load: &L,
    times: &[f64],
    dt: f64,
) -> Result<f64> {
    let p = params.p;
    let pp = params.p_conjugate();
    let w = mesh.weight();
    let d = mesh.dim();
    let mut total = CompensatedSum::new();
    for_each_qp(mesh, u0.values(), None, |_, _, du, uq, _| {
        let u2: f64 = (0..d).map(|c| uq[c] * uq[c]).sum();
        total.add(w * (u2 + du.norm().powf(p)));
    });
    for &t in times {
        let f = load(t);
        mesh.check_shape(f.shape())?;
        let zero = Field::zeros(mesh);
        for_each_qp(mesh, zero.values(), Some(f.values()), |_, _, _, _, fq| {
            let f2: f64 = (0..d).map(|c| fq[c] * fq[c]).sum();
            total.add(dt * w * (f2.sqrt().powf(pp) + f2));
        });
    }
    Ok(total.value())
}

/// Implicit Euler from `u0` to `T` with `f` sampled at the end of each step.
#[allow(clippy::too_many_arguments)]
pub fn run_parabolic<L: Fn(f64) -> Field>(
    mesh: &Mesh,
    params: PDeltaParams,
    threshold: f64,
    u0: &Field,
    initial: InitialData,
    load: L,
    t_final: f64,
    dt: f64,
    opts: &SolverOptions,
) -> Result<ParabolicRun> {
    params.require_solver_ready()?;
    let ap = AApprox::new(params, threshold)?;
    let times = time_grid(t_final, dt)?;
    mesh.check_shape(u0.shape())?;
    let (start, band, passes) = match initial {
        InitialData::Raw => {
            let m = mollify_with_report(mesh, u0, threshold)?;
            (m.u, m.band, m.passes)
        }
        InitialData::Prepared => {
            if !u0.is_dirichlet_conforming(mesh) {
                return Err(Error::domain("u0", f64::NAN, "prepared initial data must vanish on the boundary"));
            }
            (u0.clone(), 0, 0)
        }
    };
    let mass = lumped_mass(mesh);
    let initial_diag = quasinorm_report(mesh, &ap, &start, &load(0.0))?;
    let mut records = Vec::with_capacity(times.len());
    let mut trajectory = vec![start.clone()];
    let mut prev = start;
    let mut sup_u_sq = initial_diag.u_sq;
    let mut sup_f_a_sq = initial_diag.f_a_sq;
    let mut time_derivative = CompensatedSum::new();
    let mut t_prev = 0.0;
    for (k, &t) in times.iter().enumerate() {
        let f = load(t);
        let out = step_implicit_report(mesh, &ap, &prev, t - t_prev, &f, opts)
            .map_err(|e| Error::TimeStep {
                step: k + 1,
                source: Box::new(e),
            })?;
        let h = t - t_prev;
        let prev_dofs = prev.to_dofs(mesh);
        let step: Vec<f64> = out.u.to_dofs(mesh).iter().zip(&prev_dofs).map(|(a, b)| a - b).collect();
        let mut inc2 = CompensatedSum::new();
        for i in 0..step.len() {
            inc2.add(mass[i] * step[i] * step[i]);
        }
        let inc2 = inc2.value();
        time_derivative.add(inc2 / h);
        let diagnostics = quasinorm_report(mesh, &ap, &out.u, &f)?;
        sup_u_sq = sup_u_sq.max(diagnostics.u_sq);
        sup_f_a_sq = sup_f_a_sq.max(diagnostics.f_a_sq);
        let energy = energy_values(mesh, &ap, out.u.values(), f.values());
        records.push(TimeStepRecord {
            t,
            newton_iters: out.newton_iters,
            energy,
            increment_norm: inc2.sqrt(),
            dissipation_slack: -out.objective_change,
            descending: out.energy_decrements.iter().all(|&x| x < 0.0),
            diagnostics,
        });
        trajectory.push(out.u.clone());
        prev = out.u;
        t_prev = t;
    }
    let data_quantity = data_quantity(mesh, &params, u0, &load, &times, dt)?;
    let time_derivative_sq = time_derivative.value();
    let denom = params.delta.powf(params.p) * mesh.volume() + data_quantity;
    let bound_ratio = (sup_u_sq + sup_f_a_sq + time_derivative_sq) / denom;
    Ok(ParabolicRun {
        dt,
        t_final,
        steps: times.len(),
        threshold,
        delta: params.delta,
        p: params.p,
        initial: initial_diag,
        records,
        sup_u_sq,
        sup_f_a_sq,
        time_derivative_sq,
        data_quantity,
        bound_ratio,
        mollify_band: band,
        mollify_passes: passes,
        trajectory,
    })
}

/// Linear implicit Euler `(M + dt K) u_k = M u_{k−1} + dt b(t_k)`.
pub fn linear_parabolic_oracle<L: Fn(f64) -> Field>(
    mesh: &Mesh,
    u0: &Field,
    load: L,
    t_final: f64,
    dt: f64,
) -> Result<Vec<Field>> {
    mesh.check_shape(u0.shape())?;
    let times = time_grid(t_final, dt)?;
    let mass = lumped_mass(mesh);
    let stiffness = assemble_linear_stiffness(mesh);
    let opts = SolverOptions::default();
    let mut out = vec![u0.clone()];
    let mut prev = u0.to_dofs(mesh);
    let mut t_prev = 0.0;
    for &t in &times {
        let h = t - t_prev;
        let mut a = stiffness.clone();
        a.scale_values(h);
        a.add_diagonal(&mass);
        let b = load_vector(mesh, &load(t))?;
        let rhs: Vec<f64> = (0..b.len()).map(|i| mass[i] * prev[i] + h * b[i]).collect();
        let x = solve_spd(mesh, &opts, &a, &rhs)?;
        out.push(Field::from_dofs(mesh, &x));
        prev = x;
        t_prev = t;
    }
    Ok(out)
}
