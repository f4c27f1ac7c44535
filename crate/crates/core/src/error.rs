use thiserror::Error;

use crate::qp::QpError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("network is disconnected: bus {bus} cannot be reached from bus 0")]
    Disconnected { bus: usize },

    #[error("reduced susceptance matrix is singular")]
    SingularSusceptance,

    #[error("injections are unbalanced (sum = {sum:e})")]
    UnbalancedInjections { sum: f64 },

    #[error("{what}: expected length {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("at least two prosumers are required, found {count}")]
    TooFewProsumers { count: usize },

    #[error("prosumer {prosumer} has {resources} resources, not divisible into {blocks} blocks")]
    PartitionMismatch {
        prosumer: usize,
        resources: usize,
        blocks: usize,
    },

    #[error("best-response dynamics failed in round {round}: {source}")]
    Dynamics {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no feasible scenario after {attempts} draws")]
    DrawsExhausted { attempts: usize },

    #[error(transparent)]
    Qp(#[from] QpError),
}

impl Error {
    /// True when the underlying cause is an infeasible optimization model.
    pub fn is_infeasible(&self) -> bool {
        match self {
            Error::Qp(QpError::Infeasible { .. }) => true,
            Error::Dynamics { source, .. } => source.is_infeasible(),
            _ => false,
        }
    }
}
