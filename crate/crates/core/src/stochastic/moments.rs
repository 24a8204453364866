//! Mean and variance of the generalized chi-squared cost.

use super::em::{EmParts, EmReformulation};
use crate::densela::{trace_product, Matrix};
use crate::model::Vector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

/// Moments of `1/2 xi' Q xi + q' xi + rho` for `xi ~ N(m_bar, P_bar)`.
pub fn cost_moments(r: &EmReformulation) -> Moments {
    let q = &r.q_big;
    let m = &r.m_bar;
    let nx = r.parts.nx();
    let d = r.dim();
    let dt = r.dt();
    let p0 = r.p0();

    // Q P_bar: scale columns, then fix the leading block column.
    let mut qp = q * dt;
    let head = q.columns(0, nx) * p0;
    qp.columns_mut(0, nx).copy_from(&head);

    let qm = q * m;
    let pq = r.p_bar_mul(&r.q_vec);
    let pqm = r.p_bar_mul(&qm);
    let tr_qp: f64 = (0..d).map(|i| qp[(i, i)]).sum();
    let mean = 0.5 * m.dot(&qm) + r.q_vec.dot(m) + r.rho + 0.5 * tr_qp;
    let variance = r.q_vec.dot(&pq) + 2.0 * qm.dot(&pq) + qm.dot(&pqm) + 0.5 * trace_product(&qp, &qp);
    Moments { mean, variance }
}

/// Same moments accumulated interval by interval, without forming `Q_N`.
///
/// Memory is `O(N n_x^2 + (n n_w)^2)` and time `O(N^2 n_x^3)`.
pub fn streaming_moments(parts: &EmParts) -> Moments {
    let nx = parts.nx();
    let p = parts.block_len();
    let horizon = parts.horizon();
    let dt = parts.dt;
    let a = &parts.disc.a;
    let q_xx = parts.disc.q_xx();
    let omega_x = parts.omega_x();
    let g_n = &parts.g_n;

    let gqg = g_n * &parts.q_w * g_n.transpose();
    let gox_t = &omega_x * g_n.transpose(); // Omega_x G_n'
    let tr_qw: f64 = parts.q_w.diagonal().sum();
    let tr_qw2 = trace_product(&parts.q_w, &parts.q_w);
    let ggt = g_n * g_n.transpose() * dt;

    let mut a_pow = vec![Matrix::identity(nx, nx)];
    for m in 1..=horizon {
        let next = a * &a_pow[m - 1];
        a_pow.push(next);
    }

    let mut covs: Vec<Matrix> = Vec::with_capacity(horizon);
    let mut ax: Vec<Vector> = Vec::with_capacity(horizon);
    let mut gaw: Vec<Vector> = Vec::with_capacity(horizon);
    let mut p_k = parts.x0_cov.clone();
    let mut mean = 0.0;
    let mut variance = 0.0;

    for k in 0..horizon {
        let xbar = &parts.x_mean[k];
        let g = &parts.g_lin[k];
        let gx = g.rows(0, nx);
        let a_x = &q_xx * xbar + gx;
        let a_w = omega_x.transpose() * xbar + g.rows(nx, p);
        let qp = &q_xx * &p_k;

        mean += 0.5 * xbar.dot(&(&q_xx * xbar)) + gx.dot(xbar) + parts.r_const[k] + 0.5 * (qp.trace() + dt * tr_qw);
        variance += 0.5 * (trace_product(&qp, &qp) + 2.0 * dt * trace_product(&omega_x.transpose(), &(&p_k * &omega_x)) + dt * dt * tr_qw2)
            + a_x.dot(&(&p_k * &a_x))
            + dt * a_w.norm_squared();

        let ga = g_n * &a_w;
        for l in 0..k {
            let m = k - l;
            let u = &a_pow[m] * &covs[l];
            let phi = &a_pow[m - 1];
            let qu = &q_xx * &u;
            let quad = trace_product(&qu, &(&q_xx * u.transpose()))
                + 2.0 * dt * trace_product(&qu, &(&gox_t * phi.transpose()))
                + dt * dt * trace_product(&q_xx, &(phi * &gqg * phi.transpose()));
            let lin = a_x.dot(&(&u * &ax[l] + phi * &gaw[l] * dt));
            variance += 2.0 * (0.5 * quad + lin);
        }

        covs.push(p_k.clone());
        ax.push(a_x);
        gaw.push(ga);
        p_k = a * &p_k * a.transpose() + &ggt;
        crate::densela::symmetrize_mut(&mut p_k);
    }
    Moments { mean, variance }
}
