//! Discrete-time equivalents of continuous-time linear-quadratic optimal
//! control problems.
//!
//! Three routes produce the same [`DiscreteLqModel`]: fixed-step Runge–Kutta
//! integration of the matrix ODEs ([`disc_ode`]), block matrix exponentials
//! ([`disc_expm`]) and step-doubling ([`disc_sqr`]). The [`stochastic`] module
//! rewrites the stochastic cost as a Gaussian quadratic form and checks its
//! moments by Monte Carlo.

pub mod butcher;
pub mod cli;
pub mod densela;
pub mod disc_expm;
pub mod disc_ode;
pub mod disc_sqr;
pub mod error;
pub mod lqsolve;
pub mod method;
pub mod model;
pub mod oracle;
pub mod stochastic;

pub use butcher::Scheme;
pub use densela::Matrix;
pub use error::{Error, Result};
pub use method::{discretize, Method};
pub use model::{ContinuousLqModel, DiscreteLqModel, TrackingSpec, Vector};
