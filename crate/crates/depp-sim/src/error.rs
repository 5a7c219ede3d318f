use thiserror::Error;

use crate::fock::ModeId;

/// Errors produced by state construction, circuit application and reporting.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("duplicate mode {0} in basis")]
    DuplicateMode(ModeId),

    #[error("mode {0} is not part of the basis")]
    UnknownMode(ModeId),

    #[error("spatial label {spatial} belongs to party {actual}, not {claimed}")]
    PartyMismatch {
        spatial: String,
        claimed: String,
        actual: String,
    },

    #[error("operands are defined on different mode bases")]
    BasisMismatch,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("occupancy precondition violated: {0}")]
    Occupancy(String),

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("state has zero norm")]
    ZeroState,

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;
