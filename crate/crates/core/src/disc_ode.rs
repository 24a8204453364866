//! Fixed-step integration of the discretization ODEs with precomputed coefficients.

use crate::butcher::{precompute, tableau, PrecomputedCoefficients, Scheme};
use crate::densela::{self, trace_product, Matrix};
use crate::error::{Error, Result};
use crate::model::{assemble, ContinuousLqModel, DiscreteLqModel};

/// Iterate state after `k` steps. `gamma_k` is the transition of `[x; u]`.
#[derive(Debug, Clone)]
pub struct OdeState {
    pub k: usize,
    pub a_k: Matrix,
    pub b_k: Matrix,
    pub gamma_k: Matrix,
    pub q_k: Matrix,
    pub m_k: Matrix,
    pub r_k: Matrix,
    /// Running value of `integral tr(Q_ww R_ww(t)) dt`.
    pub s_k: f64,
}

impl OdeState {
    pub fn initial(nx: usize, nu: usize, nz: usize) -> Self {
        let n = nx + nu;
        OdeState {
            k: 0,
            a_k: Matrix::identity(nx, nx),
            b_k: Matrix::zeros(nx, nu),
            gamma_k: Matrix::identity(n, n),
            q_k: Matrix::zeros(n, n),
            m_k: Matrix::zeros(n, nz),
            r_k: Matrix::zeros(nx, nx),
            s_k: 0.0,
        }
    }

    pub fn step(&mut self, p: &PrecomputedCoefficients) -> Result<()> {
        let h = p.h;
        let s = &self.a_k * &p.r_bar_c * self.a_k.transpose();
        self.s_k += h * trace_product(&p.q_ww, &self.r_k) + h * trace_product(&p.xi, &s);
        self.r_k += p.stage_sandwich(&s);
        densela::symmetrize_mut(&mut self.r_k);

        self.m_k += self.gamma_k.transpose() * &p.m_bar_c;
        self.q_k += self.gamma_k.transpose() * &p.q_bar_c * &self.gamma_k;
        densela::symmetrize_mut(&mut self.q_k);
        self.gamma_k = &p.omega * &self.gamma_k;

        self.b_k += &p.theta * &self.a_k * &p.b_bar_c;
        self.a_k = &p.lambda * &self.a_k;
        self.k += 1;

        let finite = [&self.a_k, &self.b_k, &self.gamma_k, &self.q_k, &self.m_k, &self.r_k]
            .iter()
            .all(|m| densela::all_finite(m))
            && self.s_k.is_finite();
        if !finite {
            return Err(Error::Divergence { step: self.k });
        }
        Ok(())
    }
}

pub fn discretize_ode(model: &ContinuousLqModel, scheme: Scheme, n_steps: usize) -> Result<DiscreteLqModel> {
    let p = precompute(model, &tableau(scheme), n_steps)?;
    let mut st = OdeState::initial(model.nx(), model.nu(), model.nz());
    for _ in 0..n_steps {
        st.step(&p)?;
    }
    Ok(assemble(model, st.a_k, st.b_k, st.q_k, st.m_k, st.r_k, st.s_k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densela::{expm, max_abs_diff};
    use crate::model::fixtures::*;
    use proptest::prelude::*;

    #[test]
    fn integrator_closed_form() {
        let d = discretize_ode(&integrator(), Scheme::ClassicRk4, 64).unwrap();
        assert!((d.a[(0, 0)] - 1.0).abs() < 1e-10);
        assert!((d.b[(0, 0)] - 1.0).abs() < 1e-10);
        let q = mat(2, 2, &[1.0, 0.5, 0.5, 1.0 / 3.0]);
        assert!(max_abs_diff(&d.q, &q) < 1e-10);
        assert!(max_abs_diff(&d.m, &mat(2, 1, &[-1.0, -0.5])) < 1e-10);
        assert_eq!(d.c, integrator().c_c);
        assert_eq!(d.d, integrator().d_c);
    }

    #[test]
    fn white_noise_integrates_to_sample_time() {
        let mut m = integrator();
        m.b_c = mat(1, 1, &[0.0]);
        m.g_c = mat(1, 1, &[1.0]);
        m.t_s = 0.7;
        for sc in Scheme::ALL {
            let d = discretize_ode(&m, sc, 5).unwrap();
            assert!((d.r_ww[(0, 0)] - 0.7).abs() < 1e-15, "{sc}");
            // integral of tr(Q_ww t) = T^2 / 2, exact for any consistent scheme with a quadratic integrand
            if sc.order() >= 2 {
                assert!((d.noise_trace - 0.245).abs() < 1e-14, "{sc}");
            }
        }
    }

    #[test]
    fn affine_terms_follow_targets() {
        let m = stiff_plant();
        let d = discretize_ode(&m, Scheme::ClassicRk4, 16).unwrap();
        assert_eq!(d.q_k_seq.len(), 4);
        assert_eq!(d.q_k_seq[0], &d.m * &m.targets[0]);
        assert_eq!(d.rho_k_seq[0], 4.5);
    }

    #[test]
    fn gamma_keeps_identity_rows() {
        let m = stiff_plant();
        let p = precompute(&m, &tableau(Scheme::Esdirk34), 32).unwrap();
        let mut st = OdeState::initial(2, 2, 3);
        for _ in 0..32 {
            st.step(&p).unwrap();
            assert_eq!(densela::block(&st.gamma_k, 2, 0, 2, 2), Matrix::zeros(2, 2));
            assert_eq!(densela::block(&st.gamma_k, 2, 2, 2, 2), Matrix::identity(2, 2));
            assert_eq!(densela::asymmetry(&st.q_k), 0.0);
        }
    }

    #[test]
    fn blow_up_reports_step() {
        let mut m = integrator();
        m.a_c = mat(1, 1, &[-1e200]);
        match discretize_ode(&m, Scheme::ExplicitEuler, 4) {
            Err(Error::Divergence { step }) => assert!((1..=4).contains(&step)),
            other => panic!("{other:?}"),
        }
    }

    fn random_model(v: &[f64]) -> ContinuousLqModel {
        let mut m = integrator();
        let a = Matrix::from_row_slice(3, 3, &v[0..9]);
        m.a_c = a - Matrix::identity(3, 3) * 2.0;
        m.b_c = Matrix::from_row_slice(3, 1, &v[9..12]);
        m.g_c = Matrix::from_row_slice(3, 1, &v[12..15]);
        m.c_c = Matrix::from_row_slice(1, 3, &v[15..18]);
        m.x0_mean = nalgebra::DVector::zeros(3);
        m.x0_cov = Matrix::zeros(3, 3);
        m
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn rk4_state_transition_is_exact(v in proptest::collection::vec(-1.0f64..1.0, 18)) {
            let m = random_model(&v);
            let d = discretize_ode(&m, Scheme::ClassicRk4, 256).unwrap();
            prop_assert!(densela::norm_inf(&(&d.a - expm(&m.a_c).unwrap())) <= 1e-9);
        }

        #[test]
        fn semigroup(v in proptest::collection::vec(-1.0f64..1.0, 18)) {
            let m = random_model(&v);
            let mut m2 = m.clone();
            m2.t_s = 2.0;
            let one = discretize_ode(&m, Scheme::ClassicRk4, 64).unwrap();
            let two = discretize_ode(&m2, Scheme::ClassicRk4, 128).unwrap();
            prop_assert!(max_abs_diff(&two.a, &(&one.a * &one.a)) <= 1e-10);
            prop_assert!(max_abs_diff(&two.b, &(&one.a * &one.b + &one.b)) <= 1e-10);
        }

        #[test]
        fn weights_are_psd(v in proptest::collection::vec(-1.0f64..1.0, 18), n in 1usize..40) {
            let m = random_model(&v);
            for sc in Scheme::ALL {
                let d = discretize_ode(&m, sc, n).unwrap();
                if crate::butcher::tableau(sc).b.iter().all(|&b| b >= 0.0) {
                    prop_assert!(densela::is_psd(&d.q, 1e-10).unwrap());
                    prop_assert!(densela::is_psd(&d.r_ww, 1e-10).unwrap());
                }
            }
        }
    }
}
