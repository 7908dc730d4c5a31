//! Parameter ladders: solve across an increasing `A` schedule or a
//! decreasing `δ` schedule and check the diagnostics for uniformity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::{fmt_real, CsvTable};
use crate::grid::{Diagnostics, Field, Mesh};
use crate::nfunc::{PDeltaParams, DELTA_MIN};
use crate::operator::AApprox;
use crate::solver::{solve_steady_from, Solution, SolverOptions};

/// Default growth factor flagged between consecutive δ-ladder steps.
pub const DEFAULT_GROWTH_TOL: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LadderKind {
    A,
    Delta,
}

/// Threshold used at each step of a δ-ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum APolicy {
    Fixed(f64),
    /// `A = max(1, c/δ)`.
    InverseDelta(f64),
}

impl APolicy {
    pub fn threshold(&self, delta: f64) -> f64 {
        match *self {
            APolicy::Fixed(a) => a,
            APolicy::InverseDelta(c) => (c / delta).max(1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderOptions {
    pub solver: SolverOptions,
    /// Start each step from the previous solution.
    pub warm_start: bool,
    pub stabilization_tol: f64,
    pub growth_tol: f64,
}

impl Default for LadderOptions {
    fn default() -> Self {
        LadderOptions {
            solver: SolverOptions::default(),
            warm_start: true,
            stabilization_tol: 1e-8,
            growth_tol: DEFAULT_GROWTH_TOL,
        }
    }
}

/// Scalar record of one ladder solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepSummary {
    pub threshold: f64,
    pub delta: f64,
    pub newton_iters: usize,
    pub final_gradient_norm: f64,
    pub energy: f64,
    pub strictly_descending: bool,
}

impl StepSummary {
    fn of(sol: &Solution, ap: &AApprox) -> Self {
        StepSummary {
            threshold: ap.threshold,
            delta: ap.delta(),
            newton_iters: sol.newton_iters,
            final_gradient_norm: sol.final_gradient_norm,
            energy: *sol.energy_history.last().expect("history holds the initial energy"),
            strictly_descending: sol.strictly_descending(),
        }
    }
}

/// A diagnostic that grew by more than the tolerated factor between steps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthFlag {
    pub step: usize,
    pub quantity: String,
    pub factor: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LadderReport {
    pub kind: LadderKind,
    pub p: f64,
    pub schedule: Vec<f64>,
    pub diagnostics: Vec<Diagnostics>,
    pub steps: Vec<StepSummary>,
    /// `‖u_{k+1} − u_k‖∞`, one entry per consecutive pair.
    pub consecutive_delta: Vec<f64>,
    pub stabilization_index: Option<usize>,
    pub growth_flags: Vec<GrowthFlag>,
    #[serde(skip)]
    pub solutions: Vec<Field>,
}

impl LadderReport {
    pub fn len(&self) -> usize {
        self.schedule.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schedule.is_empty()
    }

    /// Every Newton step of every solve lowered the energy.
    pub fn all_descending(&self) -> bool {
        self.steps.iter().all(|s| s.strictly_descending)
    }

    pub fn series(&self, name: &str) -> Option<Vec<f64>> {
        self.diagnostics.iter().map(|d| d.get(name)).collect()
    }

    pub fn csv_table(&self) -> CsvTable {
        let mut header: Vec<&str> = vec![
            "step",
            "parameter",
            "A",
            "delta",
            "newton_iters",
            "final_gradient_norm",
            "energy",
            "consecutive_delta",
        ];
        header.extend(Diagnostics::COLUMNS);
        let mut table = CsvTable::new(&header);
        for (k, (s, d)) in self.steps.iter().zip(&self.diagnostics).enumerate() {
            let mut row = vec![
                k.to_string(),
                fmt_real(self.schedule[k]),
                fmt_real(s.threshold),
                fmt_real(s.delta),
                s.newton_iters.to_string(),
                fmt_real(s.final_gradient_norm),
                fmt_real(s.energy),
                self.consecutive_delta.get(k).map(|&v| fmt_real(v)).unwrap_or_default(),
            ];
            row.extend(d.values().iter().map(|&v| fmt_real(v)));
            table.push(row);
        }
        table
    }

    pub fn to_csv(&self) -> String {
        self.csv_table().render()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }
}

fn check_schedule(name: &'static str, values: &[f64], increasing: bool) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Config(vec![format!("{name}: empty schedule")]));
    }
    let ordered = values.windows(2).all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] });
    if !ordered {
        let dir = if increasing { "increasing" } else { "decreasing" };
        return Err(Error::Config(vec![format!("{name}: not strictly {dir}")]));
    }
    Ok(())
}

fn max_abs_diff(a: &Field, b: &Field) -> f64 {
    a.max_abs_diff(b)
}

struct LadderRun {
    diagnostics: Vec<Diagnostics>,
    steps: Vec<StepSummary>,
    solutions: Vec<Field>,
}

fn run_steps<I>(mesh: &Mesh, f: &Field, aps: I, opts: &LadderOptions, kind: LadderKind) -> Result<LadderRun>
where
    I: IntoIterator<Item = Result<(f64, AApprox)>>,
{
    let mut out = LadderRun {
        diagnostics: Vec::new(),
        steps: Vec::new(),
        solutions: Vec::new(),
    };
    let zero = Field::zeros(mesh);
    for item in aps {
        let (value, ap) = item?;
        let start = match out.solutions.last() {
            Some(prev) if opts.warm_start => prev,
            _ => &zero,
        };
        let sol = solve_steady_from(mesh, &ap, f, start, &opts.solver).map_err(|e| Error::LadderStep {
            parameter: match kind {
                LadderKind::A => "A",
                LadderKind::Delta => "delta",
            },
            value,
            source: Box::new(e),
        })?;
        log::info!(
            "ladder {:?} = {value:e}: {} Newton steps, max|Du| = {:.6e}",
            kind,
            sol.newton_iters,
            sol.diagnostics.max_du
        );
        out.steps.push(StepSummary::of(&sol, &ap));
        out.diagnostics.push(sol.diagnostics);
        out.solutions.push(sol.u);
    }
    Ok(out)
}

fn consecutive(solutions: &[Field]) -> Vec<f64> {
    solutions.windows(2).map(|w| max_abs_diff(&w[1], &w[0])).collect()
}

/// Solves for every `A` in an increasing schedule.
///
/// The stabilization index is the first step `k` with `max|Du_k| ≤ A_k`
/// after which every consecutive difference is at most `stabilization_tol`.
pub fn run_a_ladder(
    mesh: &Mesh,
    params: PDeltaParams,
    f: &Field,
    schedule: &[f64],
    opts: &LadderOptions,
) -> Result<LadderReport> {
    params.require_solver_ready()?;
    check_schedule("A_schedule", schedule, true)?;
    if schedule[0] < 1.0 {
        return Err(Error::Config(vec![format!("A_schedule: values must be >= 1 (got {})", schedule[0])]));
    }
    let aps = schedule.iter().map(|&a| AApprox::new(params, a).map(|ap| (a, ap)));
    let run = run_steps(mesh, f, aps, opts, LadderKind::A)?;
    let consecutive_delta = consecutive(&run.solutions);
    let stabilization_index = (0..schedule.len().saturating_sub(1)).find(|&k| {
        run.diagnostics[k].max_du <= schedule[k]
            && consecutive_delta[k..].iter().all(|&d| d <= opts.stabilization_tol)
    });
    Ok(LadderReport {
        kind: LadderKind::A,
        p: params.p,
        schedule: schedule.to_vec(),
        diagnostics: run.diagnostics,
        steps: run.steps,
        consecutive_delta,
        stabilization_index,
        growth_flags: Vec::new(),
        solutions: run.solutions,
    })
}

/// Quantities watched for growth along a δ-ladder.
pub const GROWTH_WATCHED: [&str; 3] = ["F_sq", "grad_F_sq", "Du_p"];

/// Solves for every `δ` in a decreasing schedule and flags any of
/// [`GROWTH_WATCHED`] that grows by more than `growth_tol` in one step.
pub fn run_delta_ladder(
    mesh: &Mesh,
    p: f64,
    f: &Field,
    schedule: &[f64],
    policy: APolicy,
    opts: &LadderOptions,
) -> Result<LadderReport> {
    check_schedule("delta_schedule", schedule, false)?;
    let last = *schedule.last().expect("non-empty");
    if last < DELTA_MIN {
        return Err(Error::Config(vec![format!(
            "delta_schedule: values must be >= {DELTA_MIN:e} (got {last:e})"
        )]));
    }
    let aps = schedule.iter().map(|&delta| {
        let params = PDeltaParams::new(p, delta, mesh.dim())?;
        params.require_solver_ready()?;
        AApprox::new(params, policy.threshold(delta)).map(|ap| (delta, ap))
    });
    let run = run_steps(mesh, f, aps, opts, LadderKind::Delta)?;
    let consecutive_delta = consecutive(&run.solutions);
    let mut growth_flags = Vec::new();
    for k in 1..run.diagnostics.len() {
        for name in GROWTH_WATCHED {
            let prev = run.diagnostics[k - 1].get(name).expect("known column");
            let now = run.diagnostics[k].get(name).expect("known column");
            let factor = if prev > 0.0 {
                now / prev
            } else if now > 0.0 {
                f64::INFINITY
            } else {
                1.0
            };
            if !(factor <= opts.growth_tol) {
                growth_flags.push(GrowthFlag {
                    step: k,
                    quantity: name.to_string(),
                    factor,
                });
            }
        }
    }
    Ok(LadderReport {
        kind: LadderKind::Delta,
        p,
        schedule: schedule.to_vec(),
        diagnostics: run.diagnostics,
        steps: run.steps,
        consecutive_delta,
        stabilization_index: None,
        growth_flags,
        solutions: run.solutions,
    })
}

/// Max/min spread of one quantity over a range of ladder steps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioEntry {
    pub quantity: String,
    pub min: f64,
    pub max: f64,
    pub ratio: f64,
    pub pass: bool,
}

impl RatioEntry {
    pub fn from_series(quantity: &str, values: &[f64], ratio_tol: f64) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ratio = if max == 0.0 {
            1.0
        } else if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        };
        RatioEntry {
            quantity: quantity.to_string(),
            min,
            max,
            ratio,
            pass: ratio <= ratio_tol,
        }
    }
}

/// Outcome of [`check_uniform_bounds`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformVerdict {
    /// First step counted as post-stabilization.
    pub from_step: usize,
    pub ratio_tol: f64,
    /// Spreads of `F_A_sq`, `F_sq`, `grad_F_sq`, `grad_F_A_sq` and `Du_3p`
    /// over the post-stabilization steps.
    pub entries: Vec<RatioEntry>,
    /// Spread of `F_A_sq / dual_force` over all steps.
    pub force_constant: RatioEntry,
    /// `max_k dual_weighted / (‖f‖_{p'}^{p'} + δ^p|Ω| + F_sq)` over all steps.
    pub dual_weighted_constant: f64,
    /// Provable cap `2^p/(p−1)` for [`Self::dual_weighted_constant`].
    pub dual_weighted_cap: f64,
    pub pass: bool,
}

impl UniformVerdict {
    pub fn entry(&self, quantity: &str) -> Option<&RatioEntry> {
        self.entries.iter().find(|e| e.quantity == quantity)
    }

    /// Fixed-format summary table.
    pub fn summary(&self) -> String {
        let mut out = format!("{:<22} {:>24} {:>24} {:>24}  verdict\n", "quantity", "min", "max", "ratio");
        for e in self.entries.iter().chain(std::iter::once(&self.force_constant)) {
            out.push_str(&format!(
                "{:<22} {:>24} {:>24} {:>24}  {}\n",
                e.quantity,
                fmt_real(e.min),
                fmt_real(e.max),
                fmt_real(e.ratio),
                if e.pass { "pass" } else { "FAIL" }
            ));
        }
        out.push_str(&format!(
            "{:<22} {:>24} {:>24} {:>24}  {}\n",
            "dual_weighted_const",
            "",
            fmt_real(self.dual_weighted_constant),
            fmt_real(self.dual_weighted_cap),
            if self.dual_weighted_constant <= self.dual_weighted_cap { "pass" } else { "FAIL" }
        ));
        out
    }
}

/// Quantities whose post-stabilization spread is checked.
pub const UNIFORM_WATCHED: [&str; 5] = ["F_A_sq", "F_sq", "grad_F_sq", "grad_F_A_sq", "Du_3p"];

/// Spread of the watched diagnostics over the post-stabilization part of a
/// ladder (all steps when no stabilization index is set).
pub fn check_uniform_bounds(report: &LadderReport, mesh_volume: f64, ratio_tol: f64) -> Result<UniformVerdict> {
    if report.len() < 3 {
        return Err(Error::TooFewSteps(report.len()));
    }
    let from_step = report.stabilization_index.unwrap_or(0);
    let entries: Vec<RatioEntry> = UNIFORM_WATCHED
        .iter()
        .map(|&q| {
            let series = report.series(q).expect("known column");
            RatioEntry::from_series(q, &series[from_step..], ratio_tol)
        })
        .collect();
    let force: Vec<f64> = report
        .diagnostics
        .iter()
        .map(|d| if d.dual_force > 0.0 { d.f_a_sq / d.dual_force } else { 0.0 })
        .collect();
    let force_constant = RatioEntry::from_series("F_A_sq/dual_force", &force, ratio_tol);
    let p = report.p;
    let dual_weighted_constant = report
        .diagnostics
        .iter()
        .zip(&report.steps)
        .map(|(d, s)| {
            let rhs = d.f_pprime + s.delta.powf(p) * mesh_volume + d.f_sq;
            if rhs > 0.0 {
                d.dual_weighted / rhs
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    let dual_weighted_cap = 2f64.powf(p) / (p - 1.0);
    let pass = entries.iter().all(|e| e.pass) && force_constant.pass && dual_weighted_constant <= dual_weighted_cap;
    Ok(UniformVerdict {
        from_step,
        ratio_tol,
        entries,
        force_constant,
        dual_weighted_constant,
        dual_weighted_cap,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_mesh;
    use crate::solver::{builtin_load, Builtin};

    fn setup() -> (Mesh, Field) {
        let m = build_mesh(2, 6, 1.0).unwrap();
        let f = builtin_load(&m, Builtin::Smooth);
        (m, f)
    }

    #[test]
    fn quadratic_ladder_is_flat() {
        let (m, f) = setup();
        let params = PDeltaParams::new(2.0, 0.3, 2).unwrap();
        let r = run_a_ladder(&m, params, &f, &[1.0, 2.0, 4.0, 8.0], &LadderOptions::default()).unwrap();
        assert!(r.consecutive_delta.iter().all(|&d| d <= 1e-10));
        assert_eq!(r.len(), 4);
        let v = check_uniform_bounds(&r, m.volume(), 1.0 + 1e-9).unwrap();
        assert!(v.pass, "{}", v.summary());
        let d = run_delta_ladder(&m, 2.0, &f, &[1.0, 0.1, 0.01], APolicy::Fixed(10.0), &LadderOptions::default())
            .unwrap();
        assert!(d.consecutive_delta.iter().all(|&x| x <= 1e-10));
        assert!(d.growth_flags.is_empty());
    }

    #[test]
    fn schedule_validation() {
        let (m, f) = setup();
        let params = PDeltaParams::new(1.5, 0.1, 2).unwrap();
        let o = LadderOptions::default();
        let err = run_a_ladder(&m, params, &f, &[4.0, 2.0], &o).unwrap_err();
        assert!(err.to_string().contains("not strictly increasing"));
        assert!(run_a_ladder(&m, params, &f, &[0.5, 2.0], &o).is_err());
        assert!(run_delta_ladder(&m, 1.5, &f, &[0.1, 1.0], APolicy::Fixed(10.0), &o).is_err());
        assert!(run_delta_ladder(&m, 1.5, &f, &[1.0, 1e-9], APolicy::Fixed(10.0), &o).is_err());
    }

    #[test]
    fn too_few_steps_and_constant_series() {
        let (m, f) = setup();
        let params = PDeltaParams::new(1.5, 0.1, 2).unwrap();
        let r = run_a_ladder(&m, params, &f, &[1.0, 2.0], &LadderOptions::default()).unwrap();
        assert!(matches!(check_uniform_bounds(&r, 1.0, 2.0), Err(Error::TooFewSteps(2))));
        let e = RatioEntry::from_series("x", &[3.0, 3.0, 3.0], 1.0);
        assert_eq!(e.ratio, 1.0);
        assert!(e.pass);
    }

    #[test]
    fn csv_has_one_row_per_step() {
        let (m, f) = setup();
        let params = PDeltaParams::new(1.5, 0.1, 2).unwrap();
        let r = run_a_ladder(&m, params, &f, &[1.0, 4.0, 16.0], &LadderOptions::default()).unwrap();
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("step,parameter,A,delta"));
        assert!(r.to_json().contains("\"stabilization_index\""));
    }

    #[test]
    fn inverse_delta_policy() {
        assert_eq!(APolicy::InverseDelta(2.0).threshold(0.1), 20.0);
        assert_eq!(APolicy::InverseDelta(0.01).threshold(0.1), 1.0);
    }
}
