//! Runge–Kutta tableaus and the step-independent coefficient matrices of the
//! fixed-step discretization.

use std::fmt;
use std::str::FromStr;

use crate::densela::{self, Lu, Matrix};
use crate::error::{Error, Result};
use crate::model::ContinuousLqModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    ExplicitEuler,
    ImplicitEuler,
    ExplicitTrapezoidal,
    ImplicitTrapezoidal,
    Esdirk34,
    ClassicRk4,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::ExplicitEuler,
        Scheme::ImplicitEuler,
        Scheme::ExplicitTrapezoidal,
        Scheme::ImplicitTrapezoidal,
        Scheme::Esdirk34,
        Scheme::ClassicRk4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::ExplicitEuler => "explicit_euler",
            Scheme::ImplicitEuler => "implicit_euler",
            Scheme::ExplicitTrapezoidal => "explicit_trapezoidal",
            Scheme::ImplicitTrapezoidal => "implicit_trapezoidal",
            Scheme::Esdirk34 => "esdirk34",
            Scheme::ClassicRk4 => "classic_rk4",
        }
    }

    /// Classical order of the propagator.
    pub fn order(self) -> u32 {
        match self {
            Scheme::ExplicitEuler | Scheme::ImplicitEuler => 1,
            Scheme::ExplicitTrapezoidal | Scheme::ImplicitTrapezoidal => 2,
            Scheme::Esdirk34 => 3,
            Scheme::ClassicRk4 => 4,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scheme '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableauKind {
    Explicit,
    DiagonallyImplicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    pub s: usize,
    pub a: Matrix,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub kind: TableauKind,
}

/// Diagonal of the ESDIRK34 tableau, the root of `1/6 - 3g/2 + 3g^2 - g^3` near 0.436.
pub const ESDIRK_GAMMA: f64 = 0.435_866_521_508_458_999_42;

pub fn tableau(scheme: Scheme) -> ButcherTableau {
    let (s, a, b, kind): (usize, Vec<f64>, Vec<f64>, TableauKind) = match scheme {
        Scheme::ExplicitEuler => (1, vec![0.0], vec![1.0], TableauKind::Explicit),
        Scheme::ImplicitEuler => (1, vec![1.0], vec![1.0], TableauKind::DiagonallyImplicit),
        Scheme::ExplicitTrapezoidal => (2, vec![0.0, 0.0, 1.0, 0.0], vec![0.5, 0.5], TableauKind::Explicit),
        Scheme::ImplicitTrapezoidal => (2, vec![0.0, 0.0, 0.5, 0.5], vec![0.5, 0.5], TableauKind::DiagonallyImplicit),
        Scheme::ClassicRk4 => (
            4,
            vec![
                0.0, 0.0, 0.0, 0.0, //
                0.5, 0.0, 0.0, 0.0, //
                0.0, 0.5, 0.0, 0.0, //
                0.0, 0.0, 1.0, 0.0,
            ],
            vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
            TableauKind::Explicit,
        ),
        Scheme::Esdirk34 => {
            // Stiffly accurate, first stage explicit, c = [0, 2g, c3, 1].
            let g = ESDIRK_GAMMA;
            let a31 = 0.140_737_774_724_706_196_21;
            let a32 = -0.108_365_551_381_320_799_98;
            let b1 = 0.102_399_400_619_910_997_7;
            let b2 = -0.376_878_452_255_556_106_12;
            let b3 = 0.838_612_530_127_186_109;
            (
                4,
                vec![
                    0.0, 0.0, 0.0, 0.0, //
                    g, g, 0.0, 0.0, //
                    a31, a32, g, 0.0, //
                    b1, b2, b3, g,
                ],
                vec![b1, b2, b3, g],
                TableauKind::DiagonallyImplicit,
            )
        }
    };
    let a = Matrix::from_row_slice(s, s, &a);
    let c = (0..s).map(|i| a.row(i).sum()).collect();
    ButcherTableau { s, a, b, c, kind }
}

/// Step-independent matrices of the fixed-step scheme.
///
/// `h_out = [C_c D_c]`; the `omega` matrices act on the extended state `[x; u]`.
#[derive(Debug, Clone)]
pub struct PrecomputedCoefficients {
    pub h: f64,
    pub b: Vec<f64>,
    pub lambda_i: Vec<Matrix>,
    pub theta_i: Vec<Matrix>,
    pub omega_i: Vec<Matrix>,
    pub lambda: Matrix,
    pub theta: Matrix,
    pub omega: Matrix,
    pub b_bar_c: Matrix,
    pub m_bar_c: Matrix,
    pub q_bar_c: Matrix,
    pub r_bar_c: Matrix,
    /// `C_c' Q_c C_c`.
    pub q_ww: Matrix,
    /// `sum_j (sum_i b_i a_ij) Lambda_j' Q_ww Lambda_j`, the stage weight of the
    /// noise-trace quadrature.
    pub xi: Matrix,
}

impl PrecomputedCoefficients {
    /// `sum_i b_i Lambda_i S Lambda_i'`.
    pub fn stage_sandwich(&self, s: &Matrix) -> Matrix {
        let mut acc = Matrix::zeros(s.nrows(), s.ncols());
        for (bi, li) in self.b.iter().zip(&self.lambda_i) {
            acc += (li * s * li.transpose()) * *bi;
        }
        acc
    }
}

fn extended(lambda: &Matrix, theta_bbar: &Matrix) -> Matrix {
    let nx = lambda.nrows();
    let nu = theta_bbar.ncols();
    let mut om = Matrix::identity(nx + nu, nx + nu);
    densela::put_block(&mut om, 0, 0, lambda);
    densela::put_block(&mut om, 0, nx, theta_bbar);
    om
}

pub fn precompute(model: &ContinuousLqModel, tab: &ButcherTableau, n_steps: usize) -> Result<PrecomputedCoefficients> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("number of steps must be at least 1".into()));
    }
    let nx = model.nx();
    let h = model.t_s / n_steps as f64;
    let a_c = &model.a_c;
    let ident = Matrix::identity(nx, nx);

    // one factorization per distinct nonzero diagonal entry
    let mut factors: Vec<(f64, Lu)> = Vec::new();
    let mut lambda_i: Vec<Matrix> = Vec::with_capacity(tab.s);
    for i in 0..tab.s {
        let mut rhs = ident.clone();
        for j in 0..i {
            let aij = tab.a[(i, j)];
            if aij != 0.0 {
                rhs += (a_c * &lambda_i[j]) * (h * aij);
            }
        }
        let aii = tab.a[(i, i)];
        let li = if aii == 0.0 {
            rhs
        } else {
            let pos = match factors.iter().position(|(d, _)| *d == aii) {
                Some(p) => p,
                None => {
                    let lhs = &ident - a_c * (h * aii);
                    let lu = Lu::factor(&lhs).map_err(|e| match e {
                        Error::Singular { step } => Error::StiffStage { stage: i + 1, pivot: step },
                        other => other,
                    })?;
                    factors.push((aii, lu));
                    factors.len() - 1
                }
            };
            factors[pos].1.solve(&rhs)?
        };
        lambda_i.push(li);
    }

    let theta_i: Vec<Matrix> = (0..tab.s)
        .map(|i| {
            let mut t = Matrix::zeros(nx, nx);
            for j in 0..tab.s {
                let aij = tab.a[(i, j)];
                if aij != 0.0 {
                    t += &lambda_i[j] * aij;
                }
            }
            t
        })
        .collect();

    let mut sum = Matrix::zeros(nx, nx);
    let mut theta = Matrix::zeros(nx, nx);
    for (bi, li) in tab.b.iter().zip(&lambda_i) {
        sum += (a_c * li) * *bi;
        theta += li * *bi;
    }
    let lambda = &ident + sum * h;

    let b_bar_c = &model.b_c * h;
    let omega_i: Vec<Matrix> = lambda_i
        .iter()
        .zip(&theta_i)
        .map(|(l, t)| extended(l, &(t * &b_bar_c)))
        .collect();
    let omega = extended(&lambda, &(&theta * &b_bar_c));

    let h_out = model.h_out();
    let hq = h_out.transpose() * &model.q_c;
    let n_ext = omega.nrows();
    let mut m_bar_c = Matrix::zeros(n_ext, model.nz());
    let mut q_bar_c = Matrix::zeros(n_ext, n_ext);
    for (bi, om) in tab.b.iter().zip(&omega_i) {
        let om_t = om.transpose();
        m_bar_c += (&om_t * &hq) * *bi;
        let g = &h_out * om;
        q_bar_c += (g.transpose() * &model.q_c * g) * *bi;
    }
    let m_bar_c = m_bar_c * (-h);
    let mut q_bar_c = q_bar_c * h;
    densela::symmetrize_mut(&mut q_bar_c);
    let r_bar_c = &model.g_c * model.g_c.transpose() * h;

    let q_ww = model.q_ww();
    let mut xi = Matrix::zeros(nx, nx);
    for j in 0..tab.s {
        let ct: f64 = (0..tab.s).map(|i| tab.b[i] * tab.a[(i, j)]).sum();
        if ct != 0.0 {
            xi += (lambda_i[j].transpose() * &q_ww * &lambda_i[j]) * ct;
        }
    }
    densela::symmetrize_mut(&mut xi);

    let out = PrecomputedCoefficients {
        h,
        b: tab.b.clone(),
        lambda_i,
        theta_i,
        omega_i,
        lambda,
        theta,
        omega,
        b_bar_c,
        m_bar_c,
        q_bar_c,
        r_bar_c,
        q_ww,
        xi,
    };
    if !densela::all_finite(&out.omega) || !densela::all_finite(&out.q_bar_c) {
        return Err(Error::Divergence { step: 0 });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use proptest::prelude::*;

    #[test]
    fn canonical_tableaus() {
        let t = tableau(Scheme::ExplicitEuler);
        assert_eq!((t.s, t.a[(0, 0)], t.b.clone()), (1, 0.0, vec![1.0]));
        let t = tableau(Scheme::ImplicitEuler);
        assert_eq!((t.s, t.a[(0, 0)], t.b.clone()), (1, 1.0, vec![1.0]));
        let t = tableau(Scheme::ClassicRk4);
        assert_eq!(t.s, 4);
        assert_eq!(t.b, vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0]);
        assert_eq!(t.c, vec![0.0, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn tableau_structure() {
        for sc in Scheme::ALL {
            let t = tableau(sc);
            assert!((t.b.iter().sum::<f64>() - 1.0).abs() < 1e-15, "{sc}");
            for i in 0..t.s {
                for j in i..t.s {
                    let v = t.a[(i, j)];
                    match t.kind {
                        TableauKind::Explicit => assert_eq!(v, 0.0),
                        TableauKind::DiagonallyImplicit if j > i => assert_eq!(v, 0.0),
                        _ => {}
                    }
                }
            }
        }
    }

    #[test]
    fn esdirk_order_conditions() {
        let t = tableau(Scheme::Esdirk34);
        let (a, b, c) = (&t.a, &t.b, &t.c);
        let dot = |x: &dyn Fn(usize) -> f64| (0..4).map(|i| b[i] * x(i)).sum::<f64>();
        assert!((dot(&|i| c[i]) - 0.5).abs() < 1e-15);
        assert!((dot(&|i| c[i] * c[i]) - 1.0 / 3.0).abs() < 1e-15);
        let ac = |i: usize| (0..4).map(|j| a[(i, j)] * c[j]).sum::<f64>();
        assert!((dot(&ac) - 1.0 / 6.0).abs() < 1e-15);
        assert!((c[1] - 2.0 * ESDIRK_GAMMA).abs() < 1e-16);
        assert!((c[3] - 1.0).abs() < 1e-15);
        let g = ESDIRK_GAMMA;
        assert!((1.0 / 6.0 - 1.5 * g + 3.0 * g * g - g * g * g).abs() < 1e-16);
    }

    fn scalar_model(a: f64) -> ContinuousLqModel {
        let mut m = integrator();
        m.a_c = mat(1, 1, &[a]);
        m
    }

    #[test]
    fn explicit_euler_coefficients() {
        let m = stiff_plant();
        let p = precompute(&m, &tableau(Scheme::ExplicitEuler), 16).unwrap();
        let h = 1.0 / 16.0;
        assert_eq!(p.lambda, Matrix::identity(2, 2) + &m.a_c * h);
        assert_eq!(p.theta, Matrix::identity(2, 2));
    }

    #[test]
    fn explicit_trapezoidal_coefficients() {
        let m = stiff_plant();
        let h = 1.0 / 32.0;
        let p = precompute(&m, &tableau(Scheme::ExplicitTrapezoidal), 32).unwrap();
        let a = &m.a_c;
        let want_l = Matrix::identity(2, 2) + a * h + a * a * (0.5 * h * h);
        let want_t = Matrix::identity(2, 2) + a * (0.5 * h);
        assert!(densela::max_abs_diff(&p.lambda, &want_l) < 1e-14);
        assert!(densela::max_abs_diff(&p.theta, &want_t) < 1e-15);
    }

    #[test]
    fn classic_rk4_is_taylor_quartic() {
        let m = stiff_plant();
        let h = 1.0 / 64.0;
        let p = precompute(&m, &tableau(Scheme::ClassicRk4), 64).unwrap();
        let a = &m.a_c * h;
        let a2 = &a * &a;
        let a3 = &a2 * &a;
        let want = Matrix::identity(2, 2) + &a + &a2 * 0.5 + &a3 * (1.0 / 6.0) + &a3 * &a * (1.0 / 24.0);
        assert!(densela::max_abs_diff(&p.lambda, &want) < 1e-14);
    }

    #[test]
    fn implicit_rows_are_matrix_identities() {
        let m = stiff_plant();
        let h = 0.25;
        let ident = Matrix::identity(2, 2);
        let p = precompute(&m, &tableau(Scheme::ImplicitEuler), 4).unwrap();
        let inv = densela::solve_linear(&(&ident - &m.a_c * h), &ident).unwrap();
        assert!(densela::max_abs_diff(&p.lambda, &inv) < 1e-14);
        assert!(densela::max_abs_diff(&p.theta, &p.lambda) < 1e-14);

        let p = precompute(&m, &tableau(Scheme::ImplicitTrapezoidal), 4).unwrap();
        let l = &ident - &m.a_c * (0.5 * h);
        let r = &ident + &m.a_c * (0.5 * h);
        let cayley = densela::solve_linear(&l, &r).unwrap();
        let theta = densela::solve_linear(&l, &ident).unwrap();
        assert!(densela::max_abs_diff(&p.lambda, &cayley) < 1e-13);
        assert!(densela::max_abs_diff(&p.theta, &theta) < 1e-14);
    }

    #[test]
    fn esdirk_rational_factors_round_to_printed_digits() {
        // Lambda(z) (1 - g z)^3 and Theta(z) (1 - g z)^3 are quadratics in z = h a.
        let g = ESDIRK_GAMMA;
        let numer = |z: f64| {
            let p = precompute(&scalar_model(z), &tableau(Scheme::Esdirk34), 1).unwrap();
            let d = (1.0 - g * z).powi(3);
            (p.lambda[(0, 0)] * d, p.theta[(0, 0)] * d)
        };
        let (l1, t1) = numer(1.0);
        let (lm, tm) = numer(-1.0);
        let coef = |p1: f64, pm: f64| ((p1 - pm) / 2.0, (p1 + pm) / 2.0 - 1.0);
        let (l_lin, l_quad) = coef(l1, lm);
        let (t_lin, t_quad) = coef(t1, tm);
        let r2 = |v: f64| (v * 100.0).round() / 100.0;
        assert_eq!((r2(l_lin), r2(l_quad)), (-0.31, -0.24));
        assert_eq!((r2(t_lin), r2(t_quad)), (-0.81, 0.08));
        assert_eq!(r2(g), 0.44);
    }

    #[test]
    fn omega_blocks_are_exact() {
        let m = stiff_plant();
        for sc in Scheme::ALL {
            let p = precompute(&m, &tableau(sc), 8).unwrap();
            assert_eq!(densela::block(&p.omega, 0, 0, 2, 2), p.lambda);
            assert_eq!(densela::block(&p.omega, 0, 2, 2, 2), &p.theta * &p.b_bar_c);
            assert_eq!(densela::block(&p.omega, 2, 0, 2, 2), Matrix::zeros(2, 2));
            assert_eq!(densela::block(&p.omega, 2, 2, 2, 2), Matrix::identity(2, 2));
            for (om, (l, t)) in p.omega_i.iter().zip(p.lambda_i.iter().zip(&p.theta_i)) {
                assert_eq!(&densela::block(om, 0, 0, 2, 2), l);
                assert_eq!(densela::block(om, 0, 2, 2, 2), t * &p.b_bar_c);
            }
            if p.b.iter().all(|&b| b >= 0.0) {
                assert!(densela::is_psd(&p.q_bar_c, 1e-10).unwrap(), "{sc}");
            }
        }
    }

    #[test]
    fn singular_implicit_stage_is_reported() {
        // h * a_ii * a = 1 makes (1 - h a) vanish
        let m = scalar_model(4.0);
        match precompute(&m, &tableau(Scheme::ImplicitEuler), 4) {
            Err(Error::StiffStage { stage: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(precompute(&m, &tableau(Scheme::ImplicitEuler), 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn scheme_names_round_trip() {
        for sc in Scheme::ALL {
            assert_eq!(sc.name().parse::<Scheme>().unwrap(), sc);
        }
        assert!("rk45".parse::<Scheme>().is_err());
    }

    fn stable_matrix() -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-1.0f64..1.0, 9).prop_map(|v| {
            let a = Matrix::from_row_slice(3, 3, &v);
            // rescale so h * spectral radius <= 0.5 at h = 1/4
            a * (2.0 / densela::norm_inf(&Matrix::from_row_slice(3, 3, &v)).max(1e-9))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn local_error_order(a in stable_matrix()) {
            let mut m = integrator();
            m.a_c = a.clone();
            m.b_c = Matrix::zeros(3, 1);
            m.g_c = Matrix::zeros(3, 1);
            m.c_c = Matrix::zeros(1, 3);
            m.x0_mean = nalgebra::DVector::zeros(3);
            m.x0_cov = Matrix::zeros(3, 3);
            for sc in Scheme::ALL {
                let err = |n: usize| {
                    let p = precompute(&m, &tableau(sc), n).unwrap();
                    let truth = densela::expm(&(&a * (1.0 / n as f64))).unwrap();
                    densela::max_abs_diff(&p.lambda, &truth)
                };
                let (e1, e2, e3) = (err(4), err(8), err(16));
                let q = 2f64.powi(sc.order() as i32 + 1);
                // skip cases where the error is already at rounding level
                if e3 > 1e-13 {
                    let r1 = e1 / e2;
                    let r2 = e2 / e3;
                    prop_assert!(r2 >= 0.7 * q && r2 <= 1.4 * q, "{} ratios {} {}", sc, r1, r2);
                }
            }
        }
    }
}
