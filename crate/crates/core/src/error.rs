use std::fmt;

use thiserror::Error;

/// Parameter block named in numerical failures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlockId {
    Eta,
    Alpha,
    Zeta0,
    /// Penalized block, by index into the design cache's block list.
    Penalized(usize),
    Other(String),
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockId::Eta => write!(f, "eta"),
            BlockId::Alpha => write!(f, "alpha"),
            BlockId::Zeta0 => write!(f, "zeta0"),
            BlockId::Penalized(b) => write!(f, "penalized block {b}"),
            BlockId::Other(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("basis integrity violated: {0}")]
    BasisIntegrity(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid distribution parameter: {0}")]
    Parameter(String),
    #[error("numerical degeneracy in {block}{}", sweep.map(|s| format!(" at sweep {s}")).unwrap_or_default())]
    Degenerate { block: BlockId, sweep: Option<usize> },
    #[error("invalid state: {0}")]
    State(String),
    #[error("chain has no retained draws")]
    EmptyChain,
    #[error("diagnostic error: {0}")]
    Diagnostic(String),
    #[error("data ingestion failed: {0}")]
    Ingestion(String),
    #[error("infeasible simulation spec: {0}")]
    Spec(String),
    #[error("unknown block: {0}")]
    Identifier(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn degenerate(block: BlockId) -> Self {
        Error::Degenerate { block, sweep: None }
    }

    /// Attach the sweep index to a degeneracy error; other errors pass through.
    pub fn at_sweep(self, sweep: usize) -> Self {
        match self {
            Error::Degenerate { block, .. } => Error::Degenerate { block, sweep: Some(sweep) },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
