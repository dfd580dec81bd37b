use thiserror::Error;

use crate::alloc_perfect::WaterfillState;
use crate::alloc_stat::ChernoffState;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("ill-conditioned Gram matrix (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("iterative waterfilling did not converge after {} sweeps", .0.iteration)]
    WaterfillNotConverged(Box<WaterfillState>),

    #[error("Chernoff minimization did not converge after {sweeps} sweeps")]
    ChernoffNotConverged {
        sweeps: usize,
        state: Box<ChernoffState>,
    },

    #[error("rate balancing infeasible: users {users:?} have zero gain at every BS")]
    BalancingInfeasible { users: Vec<usize> },

    #[error("insufficient data for diversity fit: {qualifying} qualifying points, need at least {required}")]
    InsufficientData { qualifying: usize, required: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
