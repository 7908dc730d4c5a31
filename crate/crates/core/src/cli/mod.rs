//! Command-line front end: `check`, `solve`, `ladder` and `parabolic`.

pub mod config;
pub mod report;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::certify::{random_field, rng_stream, run_all};
use crate::continuation::{check_uniform_bounds, run_a_ladder, run_delta_ladder};
use crate::error::{Error, Result};
use crate::export::write_atomic;
use crate::grid::Mesh;
use crate::operator::AApprox;
use crate::parabolic::{run_parabolic, InitialData};
use crate::solver::{linear_oracle, manufactured_load_p2, nodal_l2_error, solve_steady, solve_steady_from, Builtin};

pub use config::{load_config, Config, Problem, Source};
use report::{ladder_json, ladder_summary, solution_json, SolveHeader, SolveSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

/// RNG stream reserved for the uniqueness probe's initial iterate.
const UNIQUENESS_STREAM: u64 = 1 << 32;

#[derive(Debug, Parser)]
#[command(name = "pdelta", about = "Solvers and property checks for (p, delta)-structure systems", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every property suite and print a pass/fail report.
    Check(Common),
    /// Solve one steady problem.
    Solve(Common),
    /// Run the A-ladder and, when configured, the delta-ladder.
    Ladder(Common),
    /// Run an implicit Euler trajectory.
    Parabolic(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory overriding the configuration.
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Runs the CLI against the process's standard streams.
pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_cli_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Runs the CLI with injected output streams; returns the exit code.
pub fn run_cli_with<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    let body = json!({"error": "usage", "message": e.kind().to_string()});
                    let _ = writeln!(err, "{body}");
                    EXIT_CONFIG
                }
            };
        }
    };
    let result = match cli.command {
        Command::Check(c) => run_check(&c, out),
        Command::Solve(c) => with_config(&c, Problem::Steady).and_then(|cfg| run_solve(&cfg, out)),
        Command::Ladder(c) => with_config(&c, Problem::Steady).and_then(|cfg| run_ladders(&cfg, out)),
        Command::Parabolic(c) => with_config(&c, Problem::Parabolic).and_then(|cfg| run_time(&cfg, out)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let code = if e.is_solver_failure() { EXIT_SOLVER } else { EXIT_CONFIG };
            let mut body = json!({"error": e.kind(), "message": e.to_string(), "exit_code": code});
            if let Error::Config(problems) = &e {
                body["problems"] = json!(problems);
            }
            let _ = writeln!(err, "{body}");
            code
        }
    }
}

fn with_config(common: &Common, expected: Problem) -> Result<Config> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| Error::Config(vec!["--config: required for this subcommand".into()]))?;
    let mut cfg = load_config(path)?;
    if cfg.problem != expected {
        let want = match expected {
            Problem::Steady => "steady",
            Problem::Parabolic => "parabolic",
        };
        return Err(Error::Config(vec![format!("problem: this subcommand needs `{want}`")]));
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(output) = &common.output {
        cfg.output = output.clone();
    }
    Ok(cfg)
}

fn run_check(common: &Common, out: &mut dyn Write) -> Result<i32> {
    let mut seed = 0;
    let mut output = common.output.clone();
    if let Some(path) = &common.config {
        let cfg = load_config(path)?;
        seed = cfg.seed;
        output = output.or(Some(cfg.output));
    }
    if let Some(s) = common.seed {
        seed = s;
    }
    let report = run_all(seed);
    let text = report.render();
    if let Some(dir) = output {
        write_atomic(&dir.join("check_report.txt"), &text)?;
    }
    out.write_all(text.as_bytes())?;
    Ok(if report.passed() { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn write_outputs(dir: &Path, files: &[(&str, String)]) -> Result<()> {
    for (name, contents) in files {
        write_atomic(&dir.join(name), contents)?;
    }
    Ok(())
}

fn run_solve(cfg: &Config, out: &mut dyn Write) -> Result<i32> {
    let mesh = cfg.build_mesh()?;
    let params = cfg.pdelta()?;
    let ap = AApprox::new(params, cfg.threshold)?;
    let f = cfg.load_field(&mesh)?;
    let solution = solve_steady(&mesh, &ap, &f, &cfg.solver)?;
    let header = SolveHeader {
        p: params.p,
        delta: params.delta,
        threshold: cfg.threshold,
        dim: mesh.dim(),
        n: mesh.n(),
        load: match &cfg.load {
            Source::Builtin(id) => id.clone(),
            Source::File(p) => p.display().to_string(),
        },
    };
    let mut summary = SolveSummary::new(header, &solution);
    if cfg.uniqueness_probe {
        let start = random_field(&mesh, 1.0, &mut rng_stream(cfg.seed, UNIQUENESS_STREAM));
        let other = solve_steady_from(&mesh, &ap, &f, &start, &cfg.solver)?;
        summary.uniqueness_distance = Some(other.u.max_abs_diff(&solution.u));
    }
    if params.p == 2.0 {
        let lin = linear_oracle(&mesh, &f)?;
        summary.l2_error_linear_oracle = Some(nodal_l2_error(&mesh, &solution.u, &lin));
        if let Some(b @ (Builtin::Zero | Builtin::Manufactured)) = cfg.load_builtin() {
            let (exact, _) = manufactured_load_p2(&mesh, b)?;
            summary.l2_error_exact = Some(nodal_l2_error(&mesh, &solution.u, &exact));
        }
    }
    write_outputs(
        &cfg.output,
        &[
            ("solve.csv", summary.csv_table().render()),
            ("solution.json", solution_json(&summary, &solution)),
        ],
    )?;
    writeln!(
        out,
        "solve: {} Newton iterations, gradient norm {:.3e}, output in {}",
        summary.newton_iters,
        summary.final_gradient_norm,
        cfg.output.display()
    )?;
    Ok(EXIT_OK)
}

fn run_ladders(cfg: &Config, out: &mut dyn Write) -> Result<i32> {
    let mesh: Mesh = cfg.build_mesh()?;
    let params = cfg.pdelta()?;
    let f = cfg.load_field(&mesh)?;
    let opts = cfg.ladder_options();
    let schedule = cfg.a_schedule_or_default();
    let a_report = run_a_ladder(&mesh, params, &f, &schedule, &opts)?;
    let verdict = if a_report.len() >= 3 {
        Some(check_uniform_bounds(&a_report, mesh.volume(), cfg.ladder.ratio_tol)?)
    } else {
        None
    };
    let mut summary = ladder_summary("A-ladder", &a_report, verdict.as_ref());
    let mut files = vec![
        ("ladder_A.csv", a_report.to_csv()),
        ("ladder_A.json", ladder_json(&a_report, verdict.as_ref())),
    ];
    if let Some(deltas) = &cfg.delta_schedule {
        let d_report = run_delta_ladder(&mesh, params.p, &f, deltas, cfg.a_policy, &opts)?;
        summary.push_str(&ladder_summary("delta-ladder", &d_report, None));
        files.push(("ladder_delta.csv", d_report.to_csv()));
        files.push(("ladder_delta.json", ladder_json(&d_report, None)));
    }
    files.push(("ladder_summary.txt", summary.clone()));
    write_outputs(&cfg.output, &files)?;
    out.write_all(summary.as_bytes())?;
    Ok(EXIT_OK)
}

fn run_time(cfg: &Config, out: &mut dyn Write) -> Result<i32> {
    let mesh = cfg.build_mesh()?;
    let params = cfg.pdelta()?;
    let f = cfg.load_field(&mesh)?;
    let u0 = cfg.initial_field(&mesh)?;
    let run = run_parabolic(
        &mesh,
        params,
        cfg.threshold,
        &u0,
        InitialData::Raw,
        |_| f.clone(),
        cfg.time.t_final,
        cfg.time.dt,
        &cfg.solver,
    )?;
    write_outputs(
        &cfg.output,
        &[("parabolic.csv", run.to_csv()), ("parabolic.json", run.to_json())],
    )?;
    writeln!(
        out,
        "parabolic: {} steps, dissipation holds: {}, bound ratio {:.6e}, output in {}",
        run.steps,
        run.dissipation_holds(),
        run.bound_ratio,
        cfg.output.display()
    )?;
    Ok(EXIT_OK)
}
