//! JSON run configuration with field-addressed validation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::continuation::{APolicy, LadderOptions, DEFAULT_GROWTH_TOL};
use crate::error::{Error, Result};
use crate::grid::{build_mesh, Field, Mesh};
use crate::nfunc::{PDeltaParams, DELTA_MIN};
use crate::solver::{Builtin, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    Steady,
    Parabolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub p: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub dim: usize,
    pub n: usize,
    #[serde(rename = "L", default = "unit_length")]
    pub length: f64,
}

fn unit_length() -> f64 {
    1.0
}

/// A builtin field by name or a field JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Source {
    Builtin(String),
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LadderSection {
    pub stabilization_tol: f64,
    pub growth_tol: f64,
    pub ratio_tol: f64,
    pub warm_start: bool,
}

impl Default for LadderSection {
    fn default() -> Self {
        LadderSection {
            stabilization_tol: 1e-8,
            growth_tol: DEFAULT_GROWTH_TOL,
            ratio_tol: 2.0,
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    #[serde(rename = "T")]
    pub t_final: f64,
    pub dt: f64,
    /// Amplitude of the builtin `bump` initial data.
    pub amplitude: f64,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection {
            t_final: 0.1,
            dt: 0.002,
            amplitude: 1.0,
        }
    }
}

/// Configuration file layout; every section except `problem`, `params`
/// and `mesh` has defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub problem: Problem,
    pub params: ParamsSection,
    pub mesh: MeshSection,
    #[serde(rename = "A", default = "default_a")]
    pub threshold: f64,
    #[serde(rename = "A_schedule", default)]
    pub a_schedule: Option<Vec<f64>>,
    #[serde(default)]
    pub delta_schedule: Option<Vec<f64>>,
    #[serde(rename = "A_policy", default = "default_policy")]
    pub a_policy: APolicy,
    #[serde(default = "default_load")]
    pub load: Source,
    #[serde(default = "default_initial")]
    pub initial: Source,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub ladder: LadderSection,
    #[serde(default)]
    pub time: TimeSection,
    /// Also solve from a seeded random initial iterate and report the distance.
    #[serde(default)]
    pub uniqueness_probe: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(skip)]
    base_dir: PathBuf,
}

fn default_a() -> f64 {
    1024.0
}

fn default_policy() -> APolicy {
    APolicy::Fixed(1e6)
}

fn default_load() -> Source {
    Source::Builtin("smooth".into())
}

fn default_initial() -> Source {
    Source::Builtin("bump".into())
}

fn default_output() -> PathBuf {
    PathBuf::from("pdelta-out")
}

/// Default A-ladder `{2^0, …, 2^10}`.
pub fn default_a_schedule() -> Vec<f64> {
    (0..=10).map(|k| 2f64.powi(k)).collect()
}

fn check_ordered(name: &str, values: &[f64], increasing: bool, problems: &mut Vec<String>) {
    if values.is_empty() {
        problems.push(format!("{name}: must not be empty"));
        return;
    }
    if values.iter().any(|v| !v.is_finite()) {
        problems.push(format!("{name}: entries must be finite"));
    }
    let ok = values.windows(2).all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] });
    if !ok {
        let dir = if increasing { "increasing" } else { "decreasing" };
        problems.push(format!("{name}: not strictly {dir}"));
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Config> {
        let mut cfg: Config = serde_json::from_str(text).map_err(|e| {
            Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        cfg.base_dir = PathBuf::from(".");
        let problems = cfg.problems();
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Every validation problem, each prefixed by its field path.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let (p, delta) = (self.params.p, self.params.delta);
        if !(p > 1.0 && p <= 2.0) {
            out.push(format!("params.p: must lie in (1, 2] (got {p})"));
        }
        if !(delta >= DELTA_MIN) || !delta.is_finite() {
            out.push(format!("params.delta: must be finite and >= {DELTA_MIN:e} (got {delta})"));
        }
        if self.mesh.dim != 2 && self.mesh.dim != 3 {
            out.push(format!("mesh.dim: must be 2 or 3 (got {})", self.mesh.dim));
        }
        if self.mesh.n < 2 {
            out.push(format!("mesh.n: need at least 2 cells per side (got {})", self.mesh.n));
        }
        if !(self.mesh.length > 0.0) || !self.mesh.length.is_finite() {
            out.push(format!("mesh.L: must be finite and > 0 (got {})", self.mesh.length));
        }
        if !(self.threshold >= 1.0) || !self.threshold.is_finite() {
            out.push(format!("A: must be finite and >= 1 (got {})", self.threshold));
        }
        if let Some(s) = &self.a_schedule {
            check_ordered("A_schedule", s, true, &mut out);
            if s.first().is_some_and(|&a| a < 1.0) {
                out.push("A_schedule: entries must be >= 1".into());
            }
        }
        if let Some(s) = &self.delta_schedule {
            check_ordered("delta_schedule", s, false, &mut out);
            if s.last().is_some_and(|&d| d < DELTA_MIN) {
                out.push(format!("delta_schedule: entries must be >= {DELTA_MIN:e}"));
            }
        }
        match self.a_policy {
            APolicy::Fixed(a) if !(a >= 1.0) || !a.is_finite() => {
                out.push(format!("A_policy.fixed: must be finite and >= 1 (got {a})"))
            }
            APolicy::InverseDelta(c) if !(c > 0.0) || !c.is_finite() => {
                out.push(format!("A_policy.inverse_delta: must be finite and > 0 (got {c})"))
            }
            _ => {}
        }
        out.extend(self.solver.problems());
        let l = &self.ladder;
        if !(l.stabilization_tol > 0.0) {
            out.push(format!("ladder.stabilization_tol: must be > 0 (got {})", l.stabilization_tol));
        }
        if !(l.growth_tol > 1.0) {
            out.push(format!("ladder.growth_tol: must be > 1 (got {})", l.growth_tol));
        }
        if !(l.ratio_tol >= 1.0) {
            out.push(format!("ladder.ratio_tol: must be >= 1 (got {})", l.ratio_tol));
        }
        let t = &self.time;
        if !(t.t_final > 0.0) || !t.t_final.is_finite() {
            out.push(format!("time.T: must be finite and > 0 (got {})", t.t_final));
        }
        if !(t.dt > 0.0) || !t.dt.is_finite() {
            out.push(format!("time.dt: must be finite and > 0 (got {})", t.dt));
        }
        if !t.amplitude.is_finite() {
            out.push("time.amplitude: must be finite".into());
        }
        if let Source::Builtin(id) = &self.load {
            if Builtin::parse(id).is_err() {
                out.push(format!("load.builtin: unknown builtin `{id}` (expected zero, manufactured or smooth)"));
            }
        }
        if let Source::Builtin(id) = &self.initial {
            if id != "bump" && id != "zero" {
                out.push(format!("initial.builtin: unknown builtin `{id}` (expected bump or zero)"));
            }
        }
        out
    }

    pub fn pdelta(&self) -> Result<PDeltaParams> {
        PDeltaParams::new(self.params.p, self.params.delta, self.mesh.dim)
    }

    pub fn build_mesh(&self) -> Result<Mesh> {
        build_mesh(self.mesh.dim, self.mesh.n, self.mesh.length)
    }

    pub fn a_schedule_or_default(&self) -> Vec<f64> {
        self.a_schedule.clone().unwrap_or_else(default_a_schedule)
    }

    pub fn ladder_options(&self) -> LadderOptions {
        LadderOptions {
            solver: self.solver,
            warm_start: self.ladder.warm_start,
            stabilization_tol: self.ladder.stabilization_tol,
            growth_tol: self.ladder.growth_tol,
        }
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Builtin id of the load, if it is one.
    pub fn load_builtin(&self) -> Option<Builtin> {
        match &self.load {
            Source::Builtin(id) => Builtin::parse(id).ok(),
            Source::File(_) => None,
        }
    }

    pub fn load_field(&self, mesh: &Mesh) -> Result<Field> {
        match &self.load {
            Source::Builtin(id) => Ok(crate::solver::builtin_load(mesh, Builtin::parse(id)?)),
            Source::File(path) => Field::read_json(mesh, &self.resolve(path)),
        }
    }

    pub fn initial_field(&self, mesh: &Mesh) -> Result<Field> {
        match &self.initial {
            Source::Builtin(id) if id == "zero" => Ok(Field::zeros(mesh)),
            Source::Builtin(_) => Ok(crate::parabolic::bump_initial(mesh, self.time.amplitude)),
            Source::File(path) => Field::read_json(mesh, &self.resolve(path)),
        }
    }
}

/// Reads, parses and validates a configuration file. Referenced field
/// files are resolved relative to the configuration's directory and must
/// parse against the configured mesh.
pub fn load_config(path: &Path) -> Result<Config> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(vec![format!("config: cannot read {}: {e}", path.display())]))?;
    let mut cfg = Config::from_json(&text)?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mesh = cfg.build_mesh()?;
    let mut problems = Vec::new();
    for (name, source) in [("load", &cfg.load), ("initial", &cfg.initial)] {
        if let Source::File(p) = source {
            let needed = name == "load" || cfg.problem == Problem::Parabolic;
            if needed {
                if let Err(e) = Field::read_json(&mesh, &cfg.resolve(p)) {
                    problems.push(format!("{name}.file: {e}"));
                }
            }
        }
    }
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(problems))
    }
}
