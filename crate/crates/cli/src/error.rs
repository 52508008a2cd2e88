use conewalk::model::ModelError;
use conewalk::montecarlo::McError;
use conewalk::oracle_dp::OracleError;
use conewalk::rate::RateError;
use serde::Serialize;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub hypotheses: Vec<&'static str>,
    #[serde(skip)]
    pub code: u8,
}

impl CliError {
    pub fn new(kind: &'static str, code: u8, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
            line: None,
            hypotheses: Vec::new(),
            code,
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new("UsageError", EXIT_USAGE, message)
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let message = e.to_string();
        match e {
            ModelError::Io { .. } => Self::new("IoError", EXIT_USAGE, message),
            ModelError::Parse { line, .. } => CliError {
                line,
                ..Self::new("ParseError", EXIT_VALIDATION, message)
            },
            ModelError::Invalid(_) => Self::new("InvalidModel", EXIT_VALIDATION, message),
        }
    }
}

impl From<RateError> for CliError {
    fn from(e: RateError) -> Self {
        let message = e.to_string();
        match e {
            RateError::HypothesisViolation(failed) => CliError {
                hypotheses: failed,
                ..Self::new("HypothesisViolation", EXIT_VALIDATION, message)
            },
            RateError::DimensionMismatch { .. } | RateError::Geometry(_) => {
                Self::new("InvalidModel", EXIT_VALIDATION, message)
            }
            RateError::NoConvergence { .. } => Self::new("NoConvergence", EXIT_NUMERIC, message),
            _ => Self::new("NumericFailure", EXIT_NUMERIC, message),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        let message = e.to_string();
        match e {
            OracleError::NotLattice(_) => Self::new("NotLattice", EXIT_VALIDATION, message),
            OracleError::StartOutsideCone(_) => Self::new("InvalidModel", EXIT_VALIDATION, message),
            OracleError::HorizonTooLarge(_) => Self::usage(message),
            OracleError::CapacityExceeded { .. } => {
                Self::new("CapacityExceeded", EXIT_NUMERIC, message)
            }
            OracleError::Degenerate(_) => Self::new("NumericFailure", EXIT_NUMERIC, message),
        }
    }
}

impl From<McError> for CliError {
    fn from(e: McError) -> Self {
        let message = e.to_string();
        match e {
            McError::DimensionMismatch { .. } => {
                Self::new("InvalidModel", EXIT_VALIDATION, message)
            }
            McError::NoChains | McError::ZeroHorizon => Self::usage(message),
        }
    }
}
