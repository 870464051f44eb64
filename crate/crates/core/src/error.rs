use std::fmt;

use thiserror::Error;

/// A single well-formedness problem found in a [`NetworkSpec`](crate::arch::NetworkSpec).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Position of the offending layer, when the problem is layer-local.
    pub index: Option<usize>,
    pub layer_id: Option<String>,
    pub message: String,
}

impl Violation {
    pub(crate) fn network(message: impl Into<String>) -> Self {
        Self { index: None, layer_id: None, message: message.into() }
    }

    pub(crate) fn layer(index: usize, id: &str, message: impl Into<String>) -> Self {
        Self { index: Some(index), layer_id: Some(id.to_string()), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.index, &self.layer_id) {
            (Some(i), Some(id)) => write!(f, "layers[{i}] ({id}): {}", self.message),
            _ => write!(f, "{}", self.message),
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network spec: {}", join_violations(.0))]
    InvalidSpec(Vec<Violation>),

    #[error("descriptor parse error: {0}")]
    Parse(String),

    #[error("layer {layer_id}: {message}")]
    Layer { layer_id: String, message: String },

    #[error("cannot compute receptive field for unresolved kernels (layer {0})")]
    UnresolvedKernel(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible MAC budget {budget}: minimal achievable cost is {min_macs} MACs")]
    InfeasibleBudget { budget: u64, min_macs: u64 },

    #[error("receptive-field floor {floor} unreachable: largest achievable final receptive field is {max_achievable}")]
    RfFloorUnreachable { floor: u64, max_achievable: u64 },

    #[error("receptive-field floor {floor} not met: selected kernels give {achieved} (reachable up to {max_achievable})")]
    RfFloorNotMet { floor: u64, achieved: u64, max_achievable: u64 },

    #[error("unknown {what} '{name}' (valid: {valid})")]
    UnknownName { what: &'static str, name: String, valid: String },

    #[error("oracle refused: {0}")]
    OracleRefused(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Constraint failures that no well-formed input change within the same
    /// configuration can fix.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::InfeasibleBudget { .. } | Error::RfFloorUnreachable { .. } | Error::RfFloorNotMet { .. }
        )
    }

    pub fn is_invalid_spec(&self) -> bool {
        matches!(self, Error::InvalidSpec(_) | Error::Parse(_) | Error::Layer { .. } | Error::UnresolvedKernel(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
