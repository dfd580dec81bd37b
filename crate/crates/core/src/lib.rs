//! Outage-driven transmission for the multi-cell MISO downlink with partial
//! CSIT: distributed zero-forcing at each BS, power allocation at the
//! central station under perfect or statistical channel knowledge,
//! distributed diversity scheduling, and a Monte Carlo engine to measure
//! outage probabilities and diversity orders.

pub mod alloc_perfect;
pub mod alloc_stat;
pub mod channel;
pub mod error;
pub mod linalg;
pub mod rates;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod scheduler;
pub mod sim;
pub mod stats;
pub mod validate;

pub use error::{Error, Result};
