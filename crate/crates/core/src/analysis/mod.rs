//! Power-law scaling fits, correlation suite, similarity-gain analysis and
//! pareto frontiers. Everything here is generic over [`Scalar`].
//!
//! [`Scalar`]: crate::scalar::Scalar

mod chart;
mod correlation;
mod gains;
mod pareto;
mod power_law;

pub use chart::{Chart, Series, SeriesStyle};
pub use correlation::{
    CorrelationError, CorrelationResult, average_ranks, correlations, kendall_tau_b, pearson,
};
pub use gains::{GainAnalysis, GainPoint, GainRow, gain_analysis};
pub use pareto::pareto_frontier;
pub use power_law::{FitError, PowerLawFit, fit_power_law};
