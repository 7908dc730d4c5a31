//! Rendering of solve, ladder and parabolic outputs.

use serde::Serialize;

use crate::continuation::{LadderReport, UniformVerdict};
use crate::export::{fmt_real, CsvTable};
use crate::grid::Diagnostics;
use crate::solver::Solution;

/// Scalars of one steady solve, emitted as a single CSV row.
#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub p: f64,
    pub delta: f64,
    #[serde(rename = "A")]
    pub threshold: f64,
    pub dim: usize,
    pub n: usize,
    pub load: String,
    pub newton_iters: usize,
    pub final_gradient_norm: f64,
    pub energy: f64,
    pub strictly_descending: bool,
    /// Max-norm distance to the solve started from a random iterate.
    pub uniqueness_distance: Option<f64>,
    /// Nodal L² error against the closed-form solution, when known.
    pub l2_error_exact: Option<f64>,
    /// Nodal L² distance to the linear solve, for `p = 2`.
    pub l2_error_linear_oracle: Option<f64>,
    pub diagnostics: Diagnostics,
}

pub const SOLVE_COLUMNS: [&str; 13] = [
    "p",
    "delta",
    "A",
    "dim",
    "n",
    "load",
    "newton_iters",
    "final_gradient_norm",
    "energy",
    "strictly_descending",
    "uniqueness_distance",
    "l2_error_exact",
    "l2_error_linear_oracle",
];

fn opt_real(x: Option<f64>) -> String {
    x.map(fmt_real).unwrap_or_default()
}

impl SolveSummary {
    pub fn new(h: SolveHeader, solution: &Solution) -> Self {
        SolveSummary {
            p: h.p,
            delta: h.delta,
            threshold: h.threshold,
            dim: h.dim,
            n: h.n,
            load: h.load,
            newton_iters: solution.newton_iters,
            final_gradient_norm: solution.final_gradient_norm,
            energy: *solution.energy_history.last().expect("history starts with the initial energy"),
            strictly_descending: solution.strictly_descending(),
            uniqueness_distance: None,
            l2_error_exact: None,
            l2_error_linear_oracle: None,
            diagnostics: solution.diagnostics,
        }
    }

    pub fn csv_table(&self) -> CsvTable {
        let mut header: Vec<&str> = SOLVE_COLUMNS.to_vec();
        header.extend(Diagnostics::COLUMNS);
        let mut table = CsvTable::new(&header);
        let mut row = vec![
            fmt_real(self.p),
            fmt_real(self.delta),
            fmt_real(self.threshold),
            self.dim.to_string(),
            self.n.to_string(),
            self.load.clone(),
            self.newton_iters.to_string(),
            fmt_real(self.final_gradient_norm),
            fmt_real(self.energy),
            self.strictly_descending.to_string(),
            opt_real(self.uniqueness_distance),
            opt_real(self.l2_error_exact),
            opt_real(self.l2_error_linear_oracle),
        ];
        row.extend(self.diagnostics.values().iter().map(|&v| fmt_real(v)));
        table.push(row);
        table
    }
}

/// Problem identification shared by every solve row.
#[derive(Debug, Clone)]
pub struct SolveHeader {
    pub p: f64,
    pub delta: f64,
    pub threshold: f64,
    pub dim: usize,
    pub n: usize,
    pub load: String,
}

/// Solve summary plus the nodal solution, as written to `solution.json`.
#[derive(Serialize)]
pub struct SolutionFile<'a> {
    pub summary: &'a SolveSummary,
    pub energy_history: &'a [f64],
    pub gradient_history: &'a [f64],
    pub solution: serde_json::Value,
}

pub fn solution_json(summary: &SolveSummary, solution: &Solution) -> String {
    let field: serde_json::Value =
        serde_json::from_str(&solution.u.to_json()).expect("field JSON round-trips");
    let file = SolutionFile {
        summary,
        energy_history: &solution.energy_history,
        gradient_history: &solution.gradient_history,
        solution: field,
    };
    serde_json::to_string_pretty(&file).expect("solution is serializable")
}

/// Ladder report plus its verdict, as written to `ladder_*.json`.
#[derive(Serialize)]
struct LadderFile<'a> {
    report: &'a LadderReport,
    verdict: Option<&'a UniformVerdict>,
}

pub fn ladder_json(report: &LadderReport, verdict: Option<&UniformVerdict>) -> String {
    serde_json::to_string_pretty(&LadderFile { report, verdict }).expect("ladder is serializable")
}

/// Fixed-format text summary of a ladder.
pub fn ladder_summary(name: &str, report: &LadderReport, verdict: Option<&UniformVerdict>) -> String {
    let mut out = format!("{name}: {} steps, all descending: {}\n", report.len(), report.all_descending());
    if let Some(k) = report.stabilization_index {
        out.push_str(&format!("  stabilized at step {k} (parameter {})\n", fmt_real(report.schedule[k])));
    }
    for g in &report.growth_flags {
        out.push_str(&format!(
            "  growth flag: step {} {} x{}\n",
            g.step,
            g.quantity,
            fmt_real(g.factor)
        ));
    }
    if let Some(v) = verdict {
        for line in v.summary().lines() {
            out.push_str("  ");
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}
