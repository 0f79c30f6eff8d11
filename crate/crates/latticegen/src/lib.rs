//! File formats, the editing workspace, the command line and the inspection
//! service around [`latticegen_core`].

use std::path::PathBuf;

use latticegen_core::network::ValidationReport;
use latticegen_core::suite::SuiteReport;

pub mod cli;
pub mod files;
pub mod io;
pub mod service;
pub mod workspace;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("PARSE-ERROR: {}:{line}:{column}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    #[error("VALIDATION-FAILED: {}", summary(.0))]
    ValidationFailed(ValidationReport),
    #[error("{message}")]
    Resource { code: &'static str, message: String },
    #[error("EMPTY-PATCH: there are no pending edits")]
    EmptyPatch,
    #[error("STALE-PATCH: patch `{patch}` expected a different `{name}` ({kind})")]
    StalePatch { patch: String, kind: String, name: String },
    #[error("UNKNOWN-OBJECT: no {kind} named `{name}`")]
    UnknownObject { kind: String, name: String },
    #[error("AMBIGUOUS-OBJECT: {kind} `{name}` has several language variants; edit the language files separately")]
    AmbiguousObject { kind: String, name: String },
    #[error("SUITE-REQUIRED: patch `{patch}` replaces region `{region}` and needs a suite run to be accepted")]
    SuiteRequired { patch: String, region: String },
    #[error("SUITE-REGRESSION: {} of {} examples no longer pass", .0.rows.len() - .0.count(latticegen_core::suite::Verdict::Pass), .0.rows.len())]
    SuiteRegression(SuiteReport),
}

fn summary(report: &ValidationReport) -> String {
    report.errors.iter().map(|d| format!("{} {}", d.code, d.object)).collect::<Vec<_>>().join("; ")
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "IO-ERROR",
            Error::Parse { .. } => "PARSE-ERROR",
            Error::ValidationFailed(_) => "VALIDATION-FAILED",
            Error::Resource { code, .. } => code,
            Error::EmptyPatch => "EMPTY-PATCH",
            Error::StalePatch { .. } => "STALE-PATCH",
            Error::UnknownObject { .. } => "UNKNOWN-OBJECT",
            Error::AmbiguousObject { .. } => "AMBIGUOUS-OBJECT",
            Error::SuiteRequired { .. } => "SUITE-REQUIRED",
            Error::SuiteRegression(_) => "SUITE-REGRESSION",
        }
    }

    /// Wraps an error of the core crate, keeping its code.
    pub fn core<E: CoreError>(e: E) -> Self {
        Error::Resource { code: e.code(), message: e.to_string() }
    }
}

/// The shape shared by the core crate's error enums.
pub trait CoreError: std::fmt::Display {
    fn code(&self) -> &'static str;
}

macro_rules! core_errors {
    ($($t:path),* $(,)?) => {
        $(
            impl CoreError for $t {
                fn code(&self) -> &'static str {
                    <$t>::code(self)
                }
            }
            impl From<$t> for Error {
                fn from(e: $t) -> Self {
                    Error::core(e)
                }
            }
        )*
    };
}

core_errors!(
    latticegen_core::multilingual::MultilingualError,
    latticegen_core::network::NetworkError,
    latticegen_core::regions::RegionError,
    latticegen_core::resources::ResourceError,
    latticegen_core::spl::SplError,
    latticegen_core::suite::SuiteError,
    latticegen_core::trace::TraceError,
);
