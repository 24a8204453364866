//! Euler–Maruyama reformulation of the stochastic cost as a quadratic form in
//! the Gaussian vector `xi = [x_0; omega_0; ...; omega_{N-1}]`, where
//! `omega_k` stacks the `n_sub` Brownian increments of interval `k`.
//!
//! The noise-free part of each interval is kept exact (the discrete weights from
//! the exponential method); only the noise contribution is sub-sampled:
//! `w_i = E w_{i-1} + G dW_i` with `E = I + dt A_c`, and the stage cost is
//! evaluated at the right endpoint of every sub-step.

use crate::densela::{self, block, expm, put_block, Matrix};
use crate::disc_expm::discretize_expm;
use crate::error::{Error, Result};
use crate::model::{ContinuousLqModel, DiscreteLqModel, Vector};

pub const DEFAULT_DIM_CAP: usize = 4096;

/// Per-interval pieces shared by the materialized and streaming paths.
///
/// With `y_k = [x_k; omega_k]` the cost of interval `k` is
/// `1/2 y_k' W y_k + g_k' y_k + r_k`, `W = [[Q_xx, Omega_x], [Omega_x', Q_w]]`,
/// and `x_{k+1} = A x_k + B u_k + G_n omega_k`.
#[derive(Debug, Clone)]
pub struct EmParts {
    pub n_sub: usize,
    pub dt: f64,
    /// Exact discrete model of the noise-free part.
    pub disc: DiscreteLqModel,
    pub inputs: Vec<Vector>,
    pub targets: Vec<Vector>,
    /// `I + dt A_c`
    pub e: Matrix,
    pub g_c: Matrix,
    /// `[E^{n-1} G, ..., E G, G]`, maps `omega_k` to the end-of-interval noise.
    pub g_n: Matrix,
    /// `[C_c D_c] e^{H t_i}` at the sub-step nodes `t_i = i dt`, `i = 1..n`.
    pub gamma_nodes: Vec<Matrix>,
    /// Cross weight between `[x; u]` and `omega`.
    pub omega: Matrix,
    /// Noise-quadratic weight.
    pub q_w: Matrix,
    /// Target-to-noise linear map; enters as `-(Psi zbar)' omega`.
    pub psi: Matrix,
    /// Noise-free state means `xbar_0..xbar_N`.
    pub x_mean: Vec<Vector>,
    /// Linear terms over `y_k`.
    pub g_lin: Vec<Vector>,
    pub r_const: Vec<f64>,
    pub x0_cov: Matrix,
}

impl EmParts {
    pub fn new(model: &ContinuousLqModel, n_sub: usize) -> Result<Self> {
        if n_sub == 0 {
            return Err(Error::InvalidArgument("sub-steps per interval must be at least 1".into()));
        }
        let disc = discretize_expm(model)?;
        Self::with_discrete(model, disc, n_sub)
    }

    pub fn with_discrete(model: &ContinuousLqModel, disc: DiscreteLqModel, n_sub: usize) -> Result<Self> {
        let (nx, nu, nw) = (model.nx(), model.nu(), model.nw());
        let n = n_sub;
        let p = n * nw;
        let dt = model.t_s / n as f64;
        let e = Matrix::identity(nx, nx) + &model.a_c * dt;
        let g = &model.g_c;
        let q_ww = model.q_ww();
        let cq = model.c_c.transpose() * &model.q_c; // C' Q_c

        // epow[m] = E^m G
        let mut epow: Vec<Matrix> = Vec::with_capacity(n);
        epow.push(g.clone());
        for m in 1..n {
            let next = &e * &epow[m - 1];
            epow.push(next);
        }
        let mut g_n = Matrix::zeros(nx, p);
        for j in 0..n {
            put_block(&mut g_n, 0, j * nw, &epow[n - 1 - j]);
        }

        let h_ext = model.h_ext();
        let h_out = model.h_out();
        let mut gamma_nodes = Vec::with_capacity(n);
        for i in 1..=n {
            gamma_nodes.push(&h_out * expm(&(&h_ext * (i as f64 * dt)))?);
        }

        // Node j (1-based) collects sum_{i>=j} of E^{i-j}; run the sums backwards.
        let n_ext = nx + nu;
        let mut omega = Matrix::zeros(n_ext, p);
        let mut psi = Matrix::zeros(p, model.nz());
        let mut u_acc = Matrix::zeros(n_ext, nx);
        let mut y_acc = Matrix::zeros(nx, model.nz());
        for j in (1..=n).rev() {
            u_acc = gamma_nodes[j - 1].transpose() * &cq.transpose() + &u_acc * &e;
            y_acc = &cq + e.transpose() * &y_acc;
            put_block(&mut omega, 0, (j - 1) * nw, &(&u_acc * g * dt));
            put_block(&mut psi, (j - 1) * nw, 0, &(g.transpose() * &y_acc * dt));
        }

        // Q_w block (a, b), a <= b: dt (E^{b-a} G)' W_{n-b} G with W_m = sum_{t<=m} E^t' Q_ww E^t.
        let mut q_w = Matrix::zeros(p, p);
        let mut w_acc = Matrix::zeros(nx, nx);
        for b in (1..=n).rev() {
            w_acc = &q_ww + e.transpose() * &w_acc * &e;
            let v = &w_acc * g;
            for a in 1..=b {
                let blk = epow[b - a].transpose() * &v * dt;
                put_block(&mut q_w, (a - 1) * nw, (b - 1) * nw, &blk);
                if a != b {
                    put_block(&mut q_w, (b - 1) * nw, (a - 1) * nw, &blk.transpose());
                }
            }
        }
        densela::symmetrize_mut(&mut q_w);

        let q_xu = disc.q_xu();
        let q_uu = disc.q_uu();
        let omega_u = block(&omega, nx, 0, nu, p);
        let horizon = model.horizon();
        let mut x_mean = Vec::with_capacity(horizon + 1);
        let mut g_lin = Vec::with_capacity(horizon);
        let mut r_const = Vec::with_capacity(horizon);
        x_mean.push(model.x0_mean.clone());
        for k in 0..horizon {
            let u = &model.inputs[k];
            let z = &model.targets[k];
            let mz = &disc.q_k_seq[k];
            let gx = &q_xu * u + mz.rows(0, nx);
            let gw = omega_u.transpose() * u - &psi * z;
            g_lin.push(Vector::from_iterator(nx + p, gx.iter().chain(gw.iter()).copied()));
            r_const.push(0.5 * u.dot(&(&q_uu * u)) + mz.rows(nx, nu).dot(u) + disc.rho_k_seq[k]);
            let next = &disc.a * &x_mean[k] + &disc.b * u;
            x_mean.push(next);
        }

        Ok(EmParts {
            n_sub,
            dt,
            inputs: model.inputs.clone(),
            targets: model.targets.clone(),
            e,
            g_c: model.g_c.clone(),
            g_n,
            gamma_nodes,
            omega,
            q_w,
            psi,
            x_mean,
            g_lin,
            r_const,
            x0_cov: model.x0_cov.clone(),
            disc,
        })
    }

    pub fn nx(&self) -> usize {
        self.disc.nx()
    }
    pub fn nw(&self) -> usize {
        self.g_c.ncols()
    }
    pub fn horizon(&self) -> usize {
        self.g_lin.len()
    }
    /// Noise variables per interval, `n_sub * n_w`.
    pub fn block_len(&self) -> usize {
        self.g_n.ncols()
    }
    /// Length of `xi`.
    pub fn dim(&self) -> usize {
        self.nx() + self.horizon() * self.block_len()
    }
    pub fn omega_x(&self) -> Matrix {
        block(&self.omega, 0, 0, self.nx(), self.block_len())
    }
}

/// The cost as `1/2 xi' Q xi + q' xi + rho` with `xi ~ N(m_bar, P_bar)`,
/// `m_bar = [x0_mean; 0]`, `P_bar = blockdiag(P_0, dt I)`.
#[derive(Debug, Clone)]
pub struct EmReformulation {
    pub parts: EmParts,
    pub q_big: Matrix,
    pub q_vec: Vector,
    pub rho: f64,
    pub m_bar: Vector,
}

impl EmReformulation {
    pub fn n_sub(&self) -> usize {
        self.parts.n_sub
    }
    pub fn dt(&self) -> f64 {
        self.parts.dt
    }
    pub fn p0(&self) -> &Matrix {
        &self.parts.x0_cov
    }
    pub fn dim(&self) -> usize {
        self.q_vec.len()
    }

    /// Dense `P_bar`, for tests and small problems.
    pub fn p_bar(&self) -> Matrix {
        let d = self.dim();
        let mut p = Matrix::identity(d, d) * self.dt();
        put_block(&mut p, 0, 0, self.p0());
        p
    }

    /// `P_bar v` without forming `P_bar`.
    pub fn p_bar_mul(&self, v: &Vector) -> Vector {
        let nx = self.parts.nx();
        let mut out = v * self.dt();
        let head = self.p0() * v.rows(0, nx);
        out.rows_mut(0, nx).copy_from(&head);
        out
    }

    pub fn value(&self, xi: &Vector) -> f64 {
        0.5 * xi.dot(&(&self.q_big * xi)) + self.q_vec.dot(xi) + self.rho
    }
}

pub fn em_reformulate(model: &ContinuousLqModel, n_sub: usize) -> Result<EmReformulation> {
    em_reformulate_capped(model, n_sub, DEFAULT_DIM_CAP)
}

pub fn em_reformulate_capped(model: &ContinuousLqModel, n_sub: usize, cap: usize) -> Result<EmReformulation> {
    let dim = model
        .nw()
        .checked_mul(n_sub)
        .and_then(|p| p.checked_mul(model.horizon()))
        .and_then(|v| v.checked_add(model.nx()))
        .unwrap_or(usize::MAX);
    if dim > cap {
        return Err(Error::SizeCap { dim, cap });
    }
    let parts = EmParts::new(model, n_sub)?;
    Ok(materialize(parts))
}

pub fn materialize(parts: EmParts) -> EmReformulation {
    let nx = parts.nx();
    let p = parts.block_len();
    let horizon = parts.horizon();
    let d = parts.dim();
    let a = &parts.disc.a;
    let b = &parts.disc.b;
    let q_xx = parts.disc.q_xx();
    let omega_x = parts.omega_x();

    let mut q_big = Matrix::zeros(d, d);
    let mut q_vec = Vector::zeros(d);
    let mut rho = 0.0;
    let mut x_k = Matrix::zeros(nx, d);
    put_block(&mut x_k, 0, 0, &Matrix::identity(nx, nx));
    let mut c_k = Vector::zeros(nx);

    for k in 0..horizon {
        let w = nx + k * p; // columns of x_k that can be nonzero
        let col = nx + k * p; // first column of omega_k
        let xk = x_k.columns(0, w);
        let qx = &q_xx * xk;
        q_big.view_mut((0, 0), (w, w)).gemm_tr(1.0, &xk, &qx, 1.0);
        let z = xk.transpose() * &omega_x;
        let mut top = q_big.view_mut((0, col), (w, p));
        top += &z;
        let mut left = q_big.view_mut((col, 0), (p, w));
        left += z.transpose();
        let mut diag = q_big.view_mut((col, col), (p, p));
        diag += &parts.q_w;

        let g = &parts.g_lin[k];
        let gx = g.rows(0, nx);
        let gw = g.rows(nx, p);
        let lin_x = &q_xx * &c_k + gx;
        let mut head = q_vec.rows_mut(0, w);
        head += xk.transpose() * &lin_x;
        let mut tail = q_vec.rows_mut(col, p);
        tail += omega_x.transpose() * &c_k + gw;
        rho += 0.5 * c_k.dot(&(&q_xx * &c_k)) + gx.dot(&c_k) + parts.r_const[k];

        // advance the affine state map
        let mut next = Matrix::zeros(nx, d);
        next.view_mut((0, 0), (nx, w)).copy_from(&(a * xk));
        put_block(&mut next, 0, col, &parts.g_n);
        x_k = next;
        c_k = a * &c_k + b * &parts.inputs[k];
    }
    densela::symmetrize_mut(&mut q_big);

    let mut m_bar = Vector::zeros(d);
    m_bar.rows_mut(0, nx).copy_from(&parts.x_mean[0]);
    EmReformulation { parts, q_big, q_vec, rho, m_bar }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;

    #[test]
    fn dimensions_and_cap() {
        let m = stiff_plant();
        let r = em_reformulate(&m, 8).unwrap();
        assert_eq!(r.dim(), 2 + 4 * 8 * 2);
        assert_eq!(densela::asymmetry(&r.q_big), 0.0);
        match em_reformulate(&m, 1024) {
            Err(Error::SizeCap { dim, cap }) => assert_eq!((dim, cap), (2 + 4 * 1024 * 2, DEFAULT_DIM_CAP)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(em_reformulate(&m, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn p_bar_is_block_diagonal() {
        let r = em_reformulate(&stiff_plant(), 4).unwrap();
        let p = r.p_bar();
        assert_eq!(block(&p, 0, 0, 2, 2), Matrix::identity(2, 2) * 0.1);
        assert_eq!(p[(5, 5)], 0.25);
        assert_eq!(p[(0, 5)], 0.0);
        let v = Vector::from_fn(r.dim(), |i, _| i as f64 - 3.0);
        assert!((r.p_bar_mul(&v) - &p * &v).amax() < 1e-15);
    }

    #[test]
    fn structured_sums_match_direct_node_sums() {
        let m = stiff_plant();
        let parts = EmParts::new(&m, 6).unwrap();
        let (nx, nw, n) = (2, 2, 6);
        let p = n * nw;
        let dt = parts.dt;
        let q_ww = m.q_ww();
        let mut omega = Matrix::zeros(4, p);
        let mut q_w = Matrix::zeros(p, p);
        let mut psi = Matrix::zeros(p, 3);
        for i in 1..=n {
            // G_i = [E^{i-1} G, ..., G, 0, ..., 0]
            let mut gi = Matrix::zeros(nx, p);
            for j in 1..=i {
                let mut ej = m.g_c.clone();
                for _ in 0..(i - j) {
                    ej = &parts.e * ej;
                }
                put_block(&mut gi, 0, (j - 1) * nw, &ej);
            }
            omega += parts.gamma_nodes[i - 1].transpose() * &m.q_c * &m.c_c * &gi * dt;
            q_w += gi.transpose() * &q_ww * &gi * dt;
            psi += gi.transpose() * m.c_c.transpose() * &m.q_c * dt;
        }
        assert!(densela::max_abs_diff(&omega, &parts.omega) < 1e-13);
        assert!(densela::max_abs_diff(&q_w, &parts.q_w) < 1e-13);
        assert!(densela::max_abs_diff(&psi, &parts.psi) < 1e-13);
    }

    #[test]
    fn noise_free_limit_is_deterministic_cost() {
        let mut m = stiff_plant();
        m.g_c = Matrix::zeros(2, 2);
        m.x0_cov = Matrix::zeros(2, 2);
        let r = em_reformulate(&m, 16).unwrap();
        let nx = 2;
        assert_eq!(block(&r.q_big, nx, nx, r.dim() - nx, r.dim() - nx), Matrix::zeros(r.dim() - nx, r.dim() - nx));
        let det: f64 = (0..m.horizon())
            .map(|k| r.parts.disc.stage_cost(k, &r.parts.x_mean[k], &m.inputs[k]))
            .sum();
        assert!((r.value(&r.m_bar) - det).abs() <= 1e-8 * det.abs());
    }
}
