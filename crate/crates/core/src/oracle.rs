//! Brute-force references: fine-grid cost quadrature and very fine RK4.

use crate::butcher::Scheme;
use crate::densela::{expm, Matrix};
use crate::disc_ode::discretize_ode;
use crate::error::{Error, Result};
use crate::model::{stack, ContinuousLqModel, DiscreteLqModel, Vector};

pub const MIN_GRID_POINTS: usize = 1 << 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleConfig {
    /// Number of sub-intervals; a power of two, at least 256.
    pub grid_points: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { grid_points: 1 << 14 }
    }
}

impl OracleConfig {
    pub fn new(grid_points: usize) -> Result<Self> {
        if grid_points < MIN_GRID_POINTS || !grid_points.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "oracle grid must be a power of two >= {MIN_GRID_POINTS}, got {grid_points}"
            )));
        }
        Ok(OracleConfig { grid_points })
    }
}

/// Composite-trapezoid value of `integral_0^T_s l_c(ztilde(t)) dt` on one
/// interval, with the state advanced exactly between nodes.
pub fn oracle_cost(model: &ContinuousLqModel, x0: &Vector, u0: &Vector, zbar0: &Vector, cfg: OracleConfig) -> Result<f64> {
    let n = cfg.grid_points;
    let dt = model.t_s / n as f64;
    let step: Matrix = expm(&(model.h_ext() * dt))?;
    let h_out = model.h_out();
    let mut y = stack(x0, u0);
    let integrand = |y: &Vector| {
        let zt = &h_out * y - zbar0;
        0.5 * zt.dot(&(&model.q_c * &zt))
    };
    let mut acc = 0.5 * integrand(&y);
    for i in 1..=n {
        y = &step * y;
        let w = if i == n { 0.5 } else { 1.0 };
        acc += w * integrand(&y);
    }
    Ok(acc * dt)
}

/// Classic RK4 with `grid_points` steps.
pub fn oracle_discretize(model: &ContinuousLqModel, cfg: OracleConfig) -> Result<DiscreteLqModel> {
    discretize_ode(model, Scheme::ClassicRk4, cfg.grid_points)
}
