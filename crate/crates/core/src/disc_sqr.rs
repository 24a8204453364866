//! Step-doubling: `j` doubling iterations reproduce `2^j` fixed steps.

use crate::butcher::{precompute, tableau, PrecomputedCoefficients, Scheme};
use crate::densela::{self, trace_product, Matrix};
use crate::error::{Error, Result};
use crate::model::{assemble, ContinuousLqModel, DiscreteLqModel};

/// Accumulators after `i` doublings, i.e. for `n = 2^i` steps.
#[derive(Debug, Clone)]
pub struct DoublingState {
    pub i: usize,
    /// `Lambda^n`
    pub a_t: Matrix,
    /// `sum_{k<n} Lambda^k`
    pub b_t: Matrix,
    /// `Omega^n`
    pub gamma_t: Matrix,
    /// `sum_{k<n} (Omega')^k`
    pub m_t: Matrix,
    /// `sum_{k<n} (Omega^k)' Qbar Omega^k`
    pub q_t: Matrix,
    /// `sum_{k<n} Lambda^k Rbar (Lambda^k)'`
    pub r_t: Matrix,
    /// `sum_{k<n} r_t(k)`, needed for the noise trace.
    pub s_t: Matrix,
}

impl DoublingState {
    pub fn initial(p: &PrecomputedCoefficients) -> Self {
        let nx = p.lambda.nrows();
        let n = p.omega.nrows();
        DoublingState {
            i: 0,
            a_t: p.lambda.clone(),
            b_t: Matrix::identity(nx, nx),
            gamma_t: p.omega.clone(),
            m_t: Matrix::identity(n, n),
            q_t: p.q_bar_c.clone(),
            r_t: p.r_bar_c.clone(),
            s_t: Matrix::zeros(nx, nx),
        }
    }

    pub fn steps(&self) -> usize {
        1usize << self.i
    }

    pub fn double(&mut self) -> Result<()> {
        let n = self.steps() as f64;
        let a_tt = self.a_t.transpose();

        self.s_t = &self.s_t + &self.r_t * n + &self.a_t * &self.s_t * &a_tt;
        densela::symmetrize_mut(&mut self.s_t);
        self.m_t = &self.m_t * (Matrix::identity(self.gamma_t.nrows(), self.gamma_t.ncols()) + self.gamma_t.transpose());
        self.q_t = &self.q_t + self.gamma_t.transpose() * &self.q_t * &self.gamma_t;
        densela::symmetrize_mut(&mut self.q_t);
        self.r_t = &self.r_t + &self.a_t * &self.r_t * &a_tt;
        densela::symmetrize_mut(&mut self.r_t);
        self.gamma_t = &self.gamma_t * &self.gamma_t;

        let nx = self.a_t.nrows();
        self.b_t = &self.b_t * (Matrix::identity(nx, nx) + &self.a_t);
        self.a_t = &self.a_t * &self.a_t;
        self.i += 1;

        let finite = [&self.a_t, &self.b_t, &self.gamma_t, &self.m_t, &self.q_t, &self.r_t, &self.s_t]
            .iter()
            .all(|m| densela::all_finite(m));
        if !finite {
            return Err(Error::Divergence { step: self.steps() });
        }
        Ok(())
    }

    /// Map the accumulators to `(A, B, Q, M, R_ww)` and the noise trace.
    pub fn finish(&self, model: &ContinuousLqModel, p: &PrecomputedCoefficients) -> DiscreteLqModel {
        let a = self.a_t.clone();
        let b = &p.theta * &self.b_t * &p.b_bar_c;
        let m = &self.m_t * &p.m_bar_c;
        let r = p.stage_sandwich(&self.r_t);
        let h = p.h;
        let s = h * trace_product(&p.q_ww, &p.stage_sandwich(&self.s_t)) + h * trace_product(&p.xi, &self.r_t);
        assemble(model, a, b, self.q_t.clone(), m, r, s)
    }
}

/// Run `j` doublings and return the final accumulator state.
pub fn doubling_state(p: &PrecomputedCoefficients, j: usize) -> Result<DoublingState> {
    let mut st = DoublingState::initial(p);
    for _ in 0..j {
        st.double()?;
    }
    Ok(st)
}

pub const MAX_DOUBLINGS: usize = 40;

pub fn discretize_step_doubling(model: &ContinuousLqModel, scheme: Scheme, j: usize) -> Result<DiscreteLqModel> {
    if j > MAX_DOUBLINGS {
        return Err(Error::InvalidArgument(format!("doubling count {j} exceeds {MAX_DOUBLINGS}")));
    }
    let p = precompute(model, &tableau(scheme), 1usize << j)?;
    let st = doubling_state(&p, j)?;
    debug_assert_eq!(st.i, j);
    Ok(st.finish(model, &p))
}
