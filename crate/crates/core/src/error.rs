use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-positive extent: {0}")]
    NonPositiveExtent(&'static str),
    #[error("bad point count for {what}: {got} (minimum {min})")]
    BadCount {
        what: &'static str,
        got: usize,
        min: usize,
    },
    #[error("initializer produced a non-finite value at node {index}")]
    NonFiniteSample { index: usize },
    #[error("degenerate density or temperature (n = {n}, T = {temperature})")]
    DegenerateDensity { n: f64, temperature: f64 },
    #[error("f is proportional to M at interface {interface}; L2 form undefined")]
    EquilibriumSingularity { interface: usize },
    #[error("stencil needs at least {min} velocity nodes, got {got}")]
    StencilTooSmall { got: usize, min: usize },
    #[error("stage count must be at least 2, got {0}")]
    BadStageCount(usize),
    #[error("state became non-finite or diverged at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("step size fell below dt_min at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("velocity displacement {displacement} exceeds domain width {width}")]
    DisplacementTooLarge { displacement: f64, width: f64 },
    #[error("need at least {needed} peaks in the fit window, found {found}")]
    TooFewPeaks { found: usize, needed: usize },
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed file {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable name, printed by the CLI on failure.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NonPositiveExtent(_) => "NonPositiveExtent",
            Error::BadCount { .. } => "BadCount",
            Error::NonFiniteSample { .. } => "NonFiniteSample",
            Error::DegenerateDensity { .. } => "DegenerateDensity",
            Error::EquilibriumSingularity { .. } => "EquilibriumSingularity",
            Error::StencilTooSmall { .. } => "StencilTooSmall",
            Error::BadStageCount(_) => "BadStageCount",
            Error::NonFiniteState { .. } => "NonFiniteState",
            Error::StepUnderflow { .. } => "StepUnderflow",
            Error::DisplacementTooLarge { .. } => "DisplacementTooLarge",
            Error::TooFewPeaks { .. } => "TooFewPeaks",
            Error::UnknownScenario(_) => "UnknownScenario",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Parse { .. } => "ParseFailure",
            Error::IoFailure { .. } => "IoFailure",
        }
    }
}

impl Error {
    /// Attaches the simulation time to time-stamped variants.
    pub fn at_time(self, t: f64) -> Self {
        match self {
            Error::NonFiniteState { .. } => Error::NonFiniteState { t },
            Error::StepUnderflow { .. } => Error::StepUnderflow { t },
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
