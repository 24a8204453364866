//! Discretization by block matrix exponentials.

use crate::densela::{self, block, expm, put_block, Matrix};
use crate::error::{Error, Result};
use crate::model::{assemble, ContinuousLqModel, DiscreteLqModel};

/// Augmented matrices and their exponentials. `h_ext` is the drift of `[x; u]`.
#[derive(Debug, Clone)]
pub struct ExpmBlocks {
    pub h_ext: Matrix,
    pub m_bar_c: Matrix,
    pub q_bar_c: Matrix,
    pub g_bar_c: Matrix,
    pub phi1: Matrix,
    pub phi2: Matrix,
    pub phi3: Matrix,
}

impl ExpmBlocks {
    pub fn new(model: &ContinuousLqModel) -> Result<Self> {
        let nx = model.nx();
        let h_ext = model.h_ext();
        let n = h_ext.nrows();
        let h_out = model.h_out();
        let m_bar_c = -(h_out.transpose() * &model.q_c);
        let q_bar_c = -(&m_bar_c * &h_out);
        let g_bar_c = &model.g_c * model.g_c.transpose();
        let t = model.t_s;

        let mut z1 = Matrix::zeros(2 * n, 2 * n);
        put_block(&mut z1, 0, 0, &(-h_ext.transpose()));
        put_block(&mut z1, 0, n, &q_bar_c);
        put_block(&mut z1, n, n, &h_ext);

        let mut z2 = Matrix::zeros(2 * n, 2 * n);
        put_block(&mut z2, 0, n, &Matrix::identity(n, n));
        put_block(&mut z2, n, n, &h_ext.transpose());

        let mut z3 = Matrix::zeros(2 * nx, 2 * nx);
        put_block(&mut z3, 0, 0, &(-&model.a_c));
        put_block(&mut z3, 0, nx, &g_bar_c);
        put_block(&mut z3, nx, nx, &model.a_c.transpose());

        let ex = |z: Matrix, what: &str| {
            expm(&(z * t)).map_err(|e| match e {
                Error::Overflow(_) | Error::NonFinite(_) => Error::Overflow(what.into()),
                other => other,
            })
        };
        Ok(ExpmBlocks {
            phi1: ex(z1, "the cost exponential")?,
            phi2: ex(z2, "the affine-term exponential")?,
            phi3: ex(z3, "the noise exponential")?,
            h_ext,
            m_bar_c,
            q_bar_c,
            g_bar_c,
        })
    }

    fn half(&self) -> usize {
        self.h_ext.nrows()
    }

    pub fn phi1_12(&self) -> Matrix {
        let n = self.half();
        block(&self.phi1, 0, n, n, n)
    }
    pub fn phi1_22(&self) -> Matrix {
        let n = self.half();
        block(&self.phi1, n, n, n, n)
    }
    pub fn phi2_11(&self) -> Matrix {
        let n = self.half();
        block(&self.phi2, 0, 0, n, n)
    }
    pub fn phi2_12(&self) -> Matrix {
        let n = self.half();
        block(&self.phi2, 0, n, n, n)
    }
    pub fn phi3_12(&self) -> Matrix {
        let nx = self.phi3.nrows() / 2;
        block(&self.phi3, 0, nx, nx, nx)
    }
    pub fn phi3_22(&self) -> Matrix {
        let nx = self.phi3.nrows() / 2;
        block(&self.phi3, nx, nx, nx, nx)
    }
}

/// `integral_0^T tr(Q_ww R(t)) dt` with `R' = A R + R A' + G G'`, `R(0) = 0`,
/// from one exponential of the vectorized system `[vec R; s; 1]`.
pub fn exact_noise_trace(model: &ContinuousLqModel) -> Result<f64> {
    let nx = model.nx();
    let n2 = nx * nx;
    let ident = Matrix::identity(nx, nx);
    let k = ident.kronecker(&model.a_c) + model.a_c.kronecker(&ident);
    let gg = &model.g_c * model.g_c.transpose();
    let qww = model.q_ww();

    let mut z = Matrix::zeros(n2 + 2, n2 + 2);
    put_block(&mut z, 0, 0, &k);
    for (i, v) in gg.iter().enumerate() {
        z[(i, n2 + 1)] = *v;
    }
    // s' = tr(Q_ww R) = vec(Q_ww')' vec(R)
    let qt = qww.transpose();
    for (i, v) in qt.iter().enumerate() {
        z[(n2, i)] = *v;
    }
    let e = expm(&(z * model.t_s)).map_err(|_| Error::Overflow("the noise-trace exponential".into()))?;
    Ok(e[(n2, n2 + 1)])
}

pub fn discretize_expm(model: &ContinuousLqModel) -> Result<DiscreteLqModel> {
    let nx = model.nx();
    let nu = model.nu();
    let blk = ExpmBlocks::new(model)?;
    let g22 = blk.phi1_22();
    let a = block(&g22, 0, 0, nx, nx);
    let b = block(&g22, 0, nx, nx, nu);
    let q = g22.transpose() * blk.phi1_12();
    let m = blk.phi2_12() * &blk.m_bar_c;
    let r = blk.phi3_22().transpose() * blk.phi3_12();
    let s = exact_noise_trace(model)?;
    let out = assemble(model, a, b, q, m, r, s);
    if ![&out.q, &out.m, &out.r_ww].iter().all(|x| densela::all_finite(x)) {
        return Err(Error::Overflow("extracted weights".into()));
    }
    Ok(out)
}
