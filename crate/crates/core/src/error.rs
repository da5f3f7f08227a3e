use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// Variants are grouped by what went wrong rather than by module so that the
/// CLI can map them onto exit codes: input validation, numerical failure, or
/// I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),

    #[error("dates not increasing at line {line}: {date} follows {previous}")]
    NonMonotoneDates {
        line: usize,
        date: NaiveDate,
        previous: NaiveDate,
    },

    #[error("missing fraction {fraction:.4} exceeds the permitted {limit:.2}")]
    TooManyMissing { fraction: f64, limit: f64 },

    #[error("cannot fill gap at {date}: {reason}")]
    GapFill { date: NaiveDate, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("base regime level {level:e} at t={t} is below the guard {epsilon:e}")]
    DegenerateLevel { t: usize, level: f64, epsilon: f64 },

    #[error("both regime densities vanish at t={0}")]
    ZeroLikelihood(usize),

    #[error("regime {regime} received zero posterior weight")]
    RegimeCollapse { regime: usize },

    #[error("log-likelihood decreased from {previous} to {current} at iteration {iteration}")]
    LikelihoodDecrease {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("EM stopped at iteration {iteration}: {source}")]
    EmAborted {
        iteration: usize,
        /// Last parameter set whose E-step completed.
        last_valid: Box<crate::regime::RegimeModel>,
        #[source]
        source: Box<Error>,
    },

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("quadrature did not converge (achieved error estimate {achieved:e}, requested {requested:e})")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("unstable base regime: |1 + kappa| = {0} >= 1 (set allow_unstable to override)")]
    Unstable(f64),

    #[error("report section `{0}` is missing")]
    MissingSection(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Broad failure category used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Validation(_)
            | Error::Parse { .. }
            | Error::DuplicateDate(_)
            | Error::NonMonotoneDates { .. }
            | Error::TooManyMissing { .. }
            | Error::GapFill { .. }
            | Error::Unstable(_)
            | Error::MissingSection(_)
            | Error::Json(_) => ErrorKind::Validation,
            Error::Csv(e) if e.is_io_error() => ErrorKind::Io,
            Error::Csv(_) => ErrorKind::Validation,
            Error::Io { .. } => ErrorKind::Io,
            Error::Stage { source, .. } | Error::EmAborted { source, .. } => source.kind(),
            Error::Domain(_)
            | Error::RankDeficient(_)
            | Error::DegenerateLevel { .. }
            | Error::ZeroLikelihood(_)
            | Error::RegimeCollapse { .. }
            | Error::LikelihoodDecrease { .. }
            | Error::NonConvergence(_)
            | Error::Quadrature { .. } => ErrorKind::Numerical,
        }
    }

    /// Suggested remedy, shown by the command-line front end.
    pub fn hint(&self) -> Option<&'static str> {
        Some(match self {
            Error::Stage { source, .. } | Error::EmAborted { source, .. } => return source.hint(),
            Error::TooManyMissing { .. } => "supply a longer or more complete record",
            Error::Parse { .. } | Error::Csv(_) => "check the file against the `date,tmax,tmin` schema",
            Error::DuplicateDate(_) | Error::NonMonotoneDates { .. } => "sort the file by date and remove repeated days",
            Error::DegenerateLevel { .. } => "use the floor level guard or deseasonalize with mode sinusoid-only",
            Error::Unstable(_) => "pass --allow-unstable to simulate an explosive base regime",
            Error::ZeroLikelihood(_) | Error::RegimeCollapse { .. } | Error::LikelihoodDecrease { .. } => {
                "try more EM starts or a different seed"
            }
            Error::NonConvergence(_) | Error::Quadrature { .. } => "check the input scale or relax tolerances",
            Error::Json(_) => "check the JSON file against the documented config format",
            Error::Io { .. } => "check the path and its permissions",
            _ => return None,
        })
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
