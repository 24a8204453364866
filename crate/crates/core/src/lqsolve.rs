//! Finite-horizon discrete LQ solver with cross and affine cost terms.

use nalgebra::Cholesky;

use crate::densela::{block, Matrix};
use crate::error::{Error, Result};
use crate::model::{stack, DiscreteLqModel, Vector};

#[derive(Debug, Clone)]
pub struct LqSolution {
    pub u_seq: Vec<Vector>,
    pub x_seq: Vec<Vector>,
    pub value: f64,
    /// `u_k = K_k x_k + k_k`
    pub gains: Vec<Matrix>,
    pub feedforward: Vec<Vector>,
}

/// Minimize `sum_k 1/2 [x;u]' Q [x;u] + q_k' [x;u] + rho_k` subject to
/// `x_{k+1} = A x_k + B u_k`, with no terminal cost.
pub fn solve_finite_horizon(disc: &DiscreteLqModel, x0: &Vector) -> Result<LqSolution> {
    let (nx, nu) = (disc.nx(), disc.nu());
    let n = disc.horizon();
    if n == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if x0.len() != nx {
        return Err(Error::Dimension(format!("x0 has length {}, expected {nx}", x0.len())));
    }
    let q_xx = disc.q_xx();
    let q_ux = block(&disc.q, nx, 0, nu, nx);
    let q_uu = disc.q_uu();
    if nu > 0 && Cholesky::new(q_uu.clone()).is_none() {
        return Err(Error::NotConvex { step: 0 });
    }

    let (a, b) = (&disc.a, &disc.b);
    let mut p = Matrix::zeros(nx, nx);
    let mut pv = Vector::zeros(nx);
    let mut r = 0.0;
    let mut gains = vec![Matrix::zeros(nu, nx); n];
    let mut ff = vec![Vector::zeros(nu); n];

    for k in (0..n).rev() {
        let qk = &disc.q_k_seq[k];
        let (q_x, q_u) = (qk.rows(0, nx).into_owned(), qk.rows(nx, nu).into_owned());
        let pa = &p * a;
        let pb = &p * b;
        let h_xx = &q_xx + a.transpose() * &pa;
        let h_ux = &q_ux + b.transpose() * &pa;
        let h_uu = &q_uu + b.transpose() * &pb;
        let h_x = q_x + a.transpose() * &pv;
        let h_u = q_u + b.transpose() * &pv;

        let chol = Cholesky::new(h_uu).ok_or(Error::NotConvex { step: k })?;
        let k_gain = -chol.solve(&h_ux);
        let k_ff = -chol.solve(&h_u);

        // value function after minimizing over u
        p = &h_xx + h_ux.transpose() * &k_gain;
        p = (&p + p.transpose()) * 0.5;
        pv = &h_x + h_ux.transpose() * &k_ff;
        r += disc.rho_k_seq[k] + 0.5 * h_u.dot(&k_ff);
        gains[k] = k_gain;
        ff[k] = k_ff;
    }
    let value = 0.5 * x0.dot(&(&p * x0)) + pv.dot(x0) + r;

    let mut x_seq = Vec::with_capacity(n + 1);
    let mut u_seq = Vec::with_capacity(n);
    x_seq.push(x0.clone());
    for k in 0..n {
        let u = &gains[k] * &x_seq[k] + &ff[k];
        x_seq.push(a * &x_seq[k] + b * &u);
        u_seq.push(u);
    }
    if !value.is_finite() {
        return Err(Error::Divergence { step: 0 });
    }
    Ok(LqSolution { u_seq, x_seq, value, gains, feedforward: ff })
}

/// Cost of an input sequence under the discrete dynamics from `x0`.
pub fn rollout_cost(disc: &DiscreteLqModel, x0: &Vector, u_seq: &[Vector]) -> f64 {
    let mut x = x0.clone();
    let mut total = 0.0;
    for (k, u) in u_seq.iter().enumerate() {
        let xu = stack(&x, u);
        total += 0.5 * xu.dot(&(&disc.q * &xu)) + disc.q_k_seq[k].dot(&xu) + disc.rho_k_seq[k];
        x = &disc.a * &x + &disc.b * u;
    }
    total
}
