//! Stochastic cost: EM reformulation, moments, expected cost and Monte Carlo.

pub mod em;
pub mod expected;
pub mod moments;
pub mod montecarlo;
pub mod rng;

pub use em::{em_reformulate, em_reformulate_capped, EmParts, EmReformulation, DEFAULT_DIM_CAP};
pub use expected::{em_noise_trace, expected_cost, propagate_covariance};
pub use moments::{cost_moments, streaming_moments, Moments};
pub use montecarlo::{monte_carlo, simulate, McSummary, StreamStats};
