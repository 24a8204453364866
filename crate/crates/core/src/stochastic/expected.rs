//! Certainty-equivalent expected cost with covariance corrections.

use crate::densela::{self, trace_product, Matrix};
use crate::error::{Error, Result};
use crate::model::{ContinuousLqModel, DiscreteLqModel, Vector};

/// `P_0..P_n` from `P_{k+1} = A P_k A' + R_ww`.
pub fn propagate_covariance(disc: &DiscreteLqModel, p0: &Matrix, n: usize) -> Vec<Matrix> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(p0.clone());
    for k in 0..n {
        let mut next = &disc.a * &out[k] * disc.a.transpose() + &disc.r_ww;
        densela::symmetrize_mut(&mut next);
        out.push(next);
    }
    out
}

/// `sum_k l_k(xbar_k, u_k) + 1/2 (tr(Q_xx P_k) + s)` with `s = disc.noise_trace`.
pub fn expected_cost(model: &ContinuousLqModel, disc: &DiscreteLqModel, p0: &Matrix) -> Result<f64> {
    let nx = disc.nx();
    if p0.shape() != (nx, nx) {
        return Err(Error::Dimension(format!("P0 is {}x{}, expected {nx}x{nx}", p0.nrows(), p0.ncols())));
    }
    let horizon = disc.horizon();
    if model.inputs.len() < horizon {
        return Err(Error::Dimension(format!("{} inputs for horizon {horizon}", model.inputs.len())));
    }
    let covs = propagate_covariance(disc, p0, horizon);
    let q_xx = disc.q_xx();
    let mut x: Vector = model.x0_mean.clone();
    let mut psi = 0.0;
    for k in 0..horizon {
        let u = &model.inputs[k];
        psi += disc.stage_cost(k, &x, u) + 0.5 * (trace_product(&q_xx, &covs[k]) + disc.noise_trace);
        x = &disc.a * &x + &disc.b * u;
    }
    Ok(psi)
}

/// The noise-trace integral evaluated on the EM grid with `n_sub` steps:
/// `R_i = E R_{i-1} E' + dt G G'`, `s = sum_i dt tr(Q_ww R_i)`.
pub fn em_noise_trace(model: &ContinuousLqModel, n_sub: usize) -> Result<f64> {
    if n_sub == 0 {
        return Err(Error::InvalidArgument("sub-steps per interval must be at least 1".into()));
    }
    let nx = model.nx();
    let dt = model.t_s / n_sub as f64;
    let e = Matrix::identity(nx, nx) + &model.a_c * dt;
    let ggt = &model.g_c * model.g_c.transpose() * dt;
    let q_ww = model.q_ww();
    let mut r = Matrix::zeros(nx, nx);
    let mut s = 0.0;
    for _ in 0..n_sub {
        r = &e * &r * e.transpose() + &ggt;
        s += dt * trace_product(&q_ww, &r);
    }
    Ok(s)
}
