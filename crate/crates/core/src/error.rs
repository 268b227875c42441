use thiserror::Error;

/// Errors raised by the simulator and planner.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A covariance matrix (or a quantity derived from one) violates the
    /// uncertainty principle beyond numerical tolerance.
    #[error("non-physical state: {0}")]
    NonPhysical(String),

    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// The parametric gain reaches or exceeds the total cavity loss rate.
    #[error("OPO above threshold: chi = {chi:.6e} >= k1 = {k1:.6e}")]
    AboveThreshold { chi: f64, k1: f64 },

    /// The comb spacing is finer than the waveshaper can demultiplex.
    #[error("InfeasibleSpacing: fsr {fsr_hz:.4e} Hz < waveshaper minimum spacing {min_spacing_hz:.4e} Hz")]
    InfeasibleSpacing { fsr_hz: f64, min_spacing_hz: f64 },

    /// Not enough EPR instances for a fully connected network.
    #[error("insufficient entangled pairs: pairs_needed = {needed} > pairs_available = {available}")]
    BudgetExceeded { needed: usize, available: usize },

    /// Exhaustive search found no valid comb-tooth assignment.
    #[error("allocation failed: {0}")]
    AllocationFailed(String),

    /// Invalid or unreadable run configuration.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
