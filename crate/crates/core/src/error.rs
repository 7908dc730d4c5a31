use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {what} = {value} ({reason})")]
    Domain {
        what: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("singularity: {0}")]
    Singular(&'static str),

    #[error("sample grid is empty")]
    EmptyGrid,

    #[error("invalid sample grid: {0}")]
    InvalidGrid(String),

    #[error("degenerate pair: P and Q coincide")]
    DegeneratePair,

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("mesh mismatch: expected {expected}, found {found}")]
    MeshMismatch { expected: String, found: String },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("unknown builtin load `{0}`")]
    UnknownBuiltin(String),

    #[error("Newton reached {iterations} iterations without convergence (last gradient norm {last:.3e})")]
    MaxIterations {
        iterations: usize,
        last: f64,
        residuals: Vec<f64>,
    },

    #[error("line search failed at Newton iteration {iteration} after {backtracks} backtracks")]
    LineSearchFailure { iteration: usize, backtracks: usize },

    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),

    #[error("ladder step failed at {parameter} = {value}: {source}")]
    LadderStep {
        parameter: &'static str,
        value: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("time step {step} failed: {source}")]
    TimeStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("mollification cannot reach gradient cap {cap} (best achieved {achieved})")]
    MollifyCap { cap: f64, achieved: f64 },

    #[error("too few ladder steps: {0} (need at least 3)")]
    TooFewSteps(usize),

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(what: &'static str, value: f64, reason: &'static str) -> Self {
        Error::Domain {
            what,
            value,
            reason,
        }
    }

    /// Short machine-readable tag used in the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain { .. } => "domain",
            Error::Singular(_) => "singular",
            Error::EmptyGrid | Error::InvalidGrid(_) => "grid",
            Error::DegeneratePair => "degenerate_pair",
            Error::Certification(_) => "certification",
            Error::MeshMismatch { .. } => "mesh_mismatch",
            Error::Index(_) => "index",
            Error::UnknownBuiltin(_) => "unknown_builtin",
            Error::MaxIterations { .. } => "max_iterations",
            Error::LineSearchFailure { .. } => "line_search_failure",
            Error::LinearSolveFailure(_) => "linear_solve_failure",
            Error::LadderStep { source, .. } | Error::TimeStep { source, .. } => source.kind(),
            Error::MollifyCap { .. } => "mollify_cap",
            Error::TooFewSteps(_) => "too_few_steps",
            Error::Config(_) => "config",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }

    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::MaxIterations { .. }
                | Error::LineSearchFailure { .. }
                | Error::LinearSolveFailure(_)
                | Error::LadderStep { .. }
                | Error::TimeStep { .. }
                | Error::MollifyCap { .. }
        )
    }
}
