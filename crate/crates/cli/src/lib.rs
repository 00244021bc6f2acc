//! Command-line driver: typed run configuration, subcommand execution and
//! the reproduction report.

mod artifacts;
mod commands;
mod config;
mod reproduce;

use serde_json::{json, Value};
use thiserror::Error;

pub use config::*;
pub use reproduce::{reproduce_paper, Report, RowResult};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or arguments, detected before any computation.
    #[error("{message}")]
    Validation { message: String, context: Value },
    /// Unusable output location.
    #[error("{message}")]
    Io { message: String, context: Value },
    /// Solver or estimator failure (no convergence, degenerate fit, ...).
    #[error("{message}")]
    Numerical {
        code: &'static str,
        message: String,
        context: Value,
    },
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self::Validation {
            message: message.into(),
            context: Value::Null,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation { .. } | Self::Io { .. } => 2,
            Self::Numerical { .. } => 3,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Self::Validation { .. } => "validation",
            Self::Io { .. } => "io",
            Self::Numerical { code, .. } => code,
        }
    }

    /// `{code, message, context}`.
    pub fn to_json(&self) -> Value {
        let context = match self {
            Self::Validation { context, .. } | Self::Io { context, .. } | Self::Numerical { context, .. } => {
                context.clone()
            }
        };
        json!({ "code": self.code(), "message": self.to_string(), "context": context })
    }
}

impl From<meyers_core::fem::FemError> for CliError {
    fn from(e: meyers_core::fem::FemError) -> Self {
        use meyers_core::fem::FemError;
        match e {
            FemError::NoConvergence(report) => Self::Numerical {
                code: "no-convergence",
                message: e.to_string(),
                context: serde_json::to_value(report).unwrap_or(Value::Null),
            },
            FemError::Mesh(meyers_core::mesh::MeshError::InvalidArgument(m)) | FemError::InvalidArgument(m) => {
                Self::validation(m)
            }
            other => Self::Numerical {
                code: "numerical-failure",
                message: other.to_string(),
                context: Value::Null,
            },
        }
    }
}

impl From<meyers_core::mesh::MeshError> for CliError {
    fn from(e: meyers_core::mesh::MeshError) -> Self {
        meyers_core::fem::FemError::from(e).into()
    }
}

impl From<meyers_core::coeff::CoeffError> for CliError {
    fn from(e: meyers_core::coeff::CoeffError) -> Self {
        use meyers_core::coeff::CoeffError;
        match e {
            CoeffError::InvalidMu(_) | CoeffError::InvalidArgument(_) => Self::validation(e.to_string()),
            other => Self::Numerical {
                code: "numerical-failure",
                message: other.to_string(),
                context: Value::Null,
            },
        }
    }
}

impl From<meyers_core::analysis::AnalysisError> for CliError {
    fn from(e: meyers_core::analysis::AnalysisError) -> Self {
        use meyers_core::analysis::AnalysisError as A;
        match e {
            A::Fem(f) => f.into(),
            A::Coeff(c) => c.into(),
            A::InvalidArgument(m) => Self::validation(m),
            other => {
                let code = match other {
                    A::DegenerateFit(_) => "degenerate-fit",
                    A::EmptyRegion => "empty-region",
                    A::NoDivergence => "no-divergence",
                    A::ZeroRhs => "zero-rhs",
                    A::RegionTooSmall { .. } => "region-too-small",
                    _ => "numerical-failure",
                };
                Self::Numerical {
                    code,
                    message: other.to_string(),
                    context: Value::Null,
                }
            }
        }
    }
}

/// Validates `config`, runs the command and returns the process exit status
/// (0, or 1 when a reproduction row fails).
pub fn run(config: &RunConfig) -> Result<i32, CliError> {
    config.validate()?;
    commands::execute(config)
}
