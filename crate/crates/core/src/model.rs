//! Continuous and discrete LQ problem data.

use std::fmt;

use nalgebra::DVector;

use crate::densela::{self, Matrix};
use crate::error::{Error, Result};

pub type Vector = DVector<f64>;

/// Absolute symmetry tolerance on user-supplied weights, scaled by `max(1, max|entry|)`.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Relative eigenvalue tolerance for PSD checks.
pub const PSD_TOL: f64 = 1e-10;

/// Continuous-time stochastic LQ problem in stacked output form.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousLqModel {
    pub a_c: Matrix,
    pub b_c: Matrix,
    pub g_c: Matrix,
    pub c_c: Matrix,
    pub d_c: Matrix,
    pub q_c: Matrix,
    pub t_s: f64,
    pub x0_mean: Vector,
    pub x0_cov: Matrix,
    /// Piecewise-constant inputs, one per sample interval.
    pub inputs: Vec<Vector>,
    /// Stacked output targets, one per sample interval.
    pub targets: Vec<Vector>,
}

impl ContinuousLqModel {
    pub fn nx(&self) -> usize {
        self.a_c.nrows()
    }
    pub fn nu(&self) -> usize {
        self.b_c.ncols()
    }
    pub fn nw(&self) -> usize {
        self.g_c.ncols()
    }
    pub fn nz(&self) -> usize {
        self.c_c.nrows()
    }
    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    /// `[C_c D_c]`, the output map of the extended state `[x; u]`.
    pub fn h_out(&self) -> Matrix {
        let mut h = Matrix::zeros(self.nz(), self.nx() + self.nu());
        densela::put_block(&mut h, 0, 0, &self.c_c);
        densela::put_block(&mut h, 0, self.nx(), &self.d_c);
        h
    }

    /// `[[A_c, B_c], [0, 0]]`, the drift of the extended state `[x; u]`.
    pub fn h_ext(&self) -> Matrix {
        let n = self.nx() + self.nu();
        let mut h = Matrix::zeros(n, n);
        densela::put_block(&mut h, 0, 0, &self.a_c);
        densela::put_block(&mut h, 0, self.nx(), &self.b_c);
        h
    }

    /// Noise weight `C_c' Q_c C_c`. Noise enters through the state rows only,
    /// so the feedthrough part of the stacked output does not contribute.
    pub fn q_ww(&self) -> Matrix {
        self.c_c.transpose() * &self.q_c * &self.c_c
    }

    /// Continuous stage cost `1/2 ztilde' Q_c ztilde`.
    pub fn stage_cost(&self, x: &Vector, u: &Vector, zbar: &Vector) -> f64 {
        let zt = &self.c_c * x + &self.d_c * u - zbar;
        0.5 * zt.dot(&(&self.q_c * &zt))
    }

    pub fn validate(&self) -> ValidationReport {
        let mut rep = ValidationReport::default();
        let (nx, nu, nz) = (self.nx(), self.nu(), self.nz());

        let shapes: [(&str, &Matrix, usize, Option<usize>); 6] = [
            ("A_c", &self.a_c, nx, Some(nx)),
            ("B_c", &self.b_c, nx, None),
            ("G_c", &self.g_c, nx, None),
            ("C_c", &self.c_c, nz, Some(nx)),
            ("D_c", &self.d_c, nz, Some(nu)),
            ("Q_c", &self.q_c, nz, Some(nz)),
        ];
        for (name, m, rows, cols) in shapes {
            let cols = cols.unwrap_or(m.ncols());
            if m.shape() != (rows, cols) {
                rep.push(Violation::Dimension(format!(
                    "{name} is {}x{}, expected {rows}x{cols}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if !densela::all_finite(m) {
                rep.push(Violation::NonFinite(name.into()));
            }
        }
        if nx == 0 {
            rep.push(Violation::Dimension("state dimension is zero".into()));
        }
        if self.x0_mean.len() != nx {
            rep.push(Violation::Dimension(format!("x0_mean has length {}, expected {nx}", self.x0_mean.len())));
        }
        if self.x0_cov.shape() != (nx, nx) {
            rep.push(Violation::Dimension(format!(
                "x0_cov is {}x{}, expected {nx}x{nx}",
                self.x0_cov.nrows(),
                self.x0_cov.ncols()
            )));
        }
        if !self.x0_mean.iter().all(|v| v.is_finite()) {
            rep.push(Violation::NonFinite("x0_mean".into()));
        }
        if !densela::all_finite(&self.x0_cov) {
            rep.push(Violation::NonFinite("x0_cov".into()));
        }
        if !(self.t_s > 0.0 && self.t_s.is_finite()) {
            rep.push(Violation::NonPositive { name: "T_s".into(), value: self.t_s });
        }
        if self.inputs.is_empty() {
            rep.push(Violation::Dimension("horizon N must be at least 1".into()));
        }
        if self.targets.len() != self.inputs.len() {
            rep.push(Violation::Dimension(format!(
                "{} targets for {} inputs",
                self.targets.len(),
                self.inputs.len()
            )));
        }
        check_sequence(&mut rep, "u", &self.inputs, nu);
        check_sequence(&mut rep, "zbar", &self.targets, nz);

        if self.q_c.shape() == (nz, nz) && densela::all_finite(&self.q_c) {
            check_sym_psd(&mut rep, "Q_c", &self.q_c);
        }
        if self.x0_cov.shape() == (nx, nx) && densela::all_finite(&self.x0_cov) {
            check_sym_psd(&mut rep, "x0_cov", &self.x0_cov);
        }
        rep
    }

    /// Returns the model if admissible, else the validation report as an error.
    pub fn checked(self) -> Result<Self> {
        let rep = self.validate();
        if rep.is_empty() {
            Ok(self)
        } else {
            Err(Error::Validation(rep))
        }
    }
}

fn check_sequence(rep: &mut ValidationReport, name: &str, seq: &[Vector], dim: usize) {
    for (k, v) in seq.iter().enumerate() {
        if v.len() != dim {
            rep.push(Violation::Dimension(format!("{name}[{k}] has length {}, expected {dim}", v.len())));
            return;
        }
        if !v.iter().all(|x| x.is_finite()) {
            rep.push(Violation::NonFinite(format!("{name}[{k}]")));
            return;
        }
    }
}

fn check_sym_psd(rep: &mut ValidationReport, name: &str, m: &Matrix) {
    let asym = densela::asymmetry(m);
    if asym > SYMMETRY_TOL * densela::max_abs(m).max(1.0) {
        rep.push(Violation::Asymmetric { name: name.into(), asymmetry: asym });
    } else if let Ok(ev) = densela::sym_eigenvalues(m) {
        if let (Some(&lo), Some(&hi)) = (ev.first(), ev.last()) {
            if lo < -PSD_TOL * hi.max(1.0) {
                rep.push(Violation::NotPsd { name: name.into(), min_eigenvalue: lo });
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Dimension(String),
    NonFinite(String),
    Asymmetric { name: String, asymmetry: f64 },
    NotPsd { name: String, min_eigenvalue: f64 },
    NonPositive { name: String, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimension(s) => write!(f, "{s}"),
            Violation::NonFinite(s) => write!(f, "{s} has non-finite entries"),
            Violation::Asymmetric { name, asymmetry } => write!(f, "{name} is not symmetric (max asymmetry {asymmetry:e})"),
            Violation::NotPsd { name, min_eigenvalue } => {
                write!(f, "{name} is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")
            }
            Violation::NonPositive { name, value } => write!(f, "{name} must be positive, got {value}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
    fn push(&mut self, v: Violation) {
        self.violations.push(v);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Output-tracking and input-regularization weights, stacked into `Q_c` by
/// [`build_stacked_model`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingSpec {
    pub c_plant: Matrix,
    pub d_plant: Matrix,
    pub q_zz: Matrix,
    pub q_uu: Matrix,
    /// Output targets per step; a single entry is broadcast.
    pub zbar: Vec<Vector>,
    /// Input targets per step; a single entry is broadcast.
    pub ubar: Vec<Vector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub a_c: Matrix,
    pub b_c: Matrix,
    pub g_c: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Horizon {
    pub t_s: f64,
    pub x0_mean: Vector,
    pub x0_cov: Matrix,
    /// Inputs per step; its length sets N.
    pub inputs: Vec<Vector>,
}

/// Repeat a length-one sequence `n` times; longer sequences must already have length `n`.
pub fn broadcast(seq: &[Vector], n: usize, name: &str) -> Result<Vec<Vector>> {
    match seq.len() {
        1 => Ok(vec![seq[0].clone(); n]),
        len if len == n => Ok(seq.to_vec()),
        len => Err(Error::Dimension(format!("{name} has {len} entries, expected 1 or {n}"))),
    }
}

/// Stack output tracking and input regularization into one output:
/// `C_c = [C; 0]`, `D_c = [D; I]`, `Q_c = blockdiag(Q_zz, Q_uu)`, targets `[zbar; ubar]`.
pub fn build_stacked_model(spec: &TrackingSpec, plant: &Plant, horizon: &Horizon) -> Result<ContinuousLqModel> {
    let nx = plant.a_c.nrows();
    let nu = plant.b_c.ncols();
    let ny = spec.c_plant.nrows();
    let n = horizon.inputs.len();

    let dims = [
        ("tracking C", spec.c_plant.shape(), (ny, nx)),
        ("tracking D", spec.d_plant.shape(), (ny, nu)),
        ("Q_zz", spec.q_zz.shape(), (ny, ny)),
        ("Q_uu", spec.q_uu.shape(), (nu, nu)),
    ];
    for (name, got, want) in dims {
        if got != want {
            return Err(Error::Dimension(format!(
                "{name} is {}x{}, expected {}x{}",
                got.0, got.1, want.0, want.1
            )));
        }
    }
    let mut rep = ValidationReport::default();
    check_sym_psd(&mut rep, "Q_zz", &spec.q_zz);
    check_sym_psd(&mut rep, "Q_uu", &spec.q_uu);
    if !rep.is_empty() {
        return Err(Error::Validation(rep));
    }

    let zbar = broadcast(&spec.zbar, n, "zbar")?;
    let ubar = broadcast(&spec.ubar, n, "ubar")?;

    let nz = ny + nu;
    let mut c_c = Matrix::zeros(nz, nx);
    densela::put_block(&mut c_c, 0, 0, &spec.c_plant);
    let mut d_c = Matrix::zeros(nz, nu);
    densela::put_block(&mut d_c, 0, 0, &spec.d_plant);
    densela::put_block(&mut d_c, ny, 0, &Matrix::identity(nu, nu));
    let mut q_c = Matrix::zeros(nz, nz);
    densela::put_block(&mut q_c, 0, 0, &spec.q_zz);
    densela::put_block(&mut q_c, ny, ny, &spec.q_uu);

    let mut targets = Vec::with_capacity(n);
    for (z, u) in zbar.iter().zip(&ubar) {
        if z.len() != ny || u.len() != nu {
            return Err(Error::Dimension(format!(
                "targets have lengths ({}, {}), expected ({ny}, {nu})",
                z.len(),
                u.len()
            )));
        }
        targets.push(Vector::from_iterator(nz, z.iter().chain(u.iter()).copied()));
    }

    ContinuousLqModel {
        a_c: plant.a_c.clone(),
        b_c: plant.b_c.clone(),
        g_c: plant.g_c.clone(),
        c_c,
        d_c,
        q_c,
        t_s: horizon.t_s,
        x0_mean: horizon.x0_mean.clone(),
        x0_cov: horizon.x0_cov.clone(),
        inputs: horizon.inputs.clone(),
        targets,
    }
    .checked()
}

/// Discrete-time equivalent: dynamics `(A, B, R_ww)`, outputs `(C, D)` and
/// stage cost `1/2 [x;u]' Q [x;u] + q_k' [x;u] + rho_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLqModel {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    pub q: Matrix,
    pub m: Matrix,
    pub r_ww: Matrix,
    pub t_s: f64,
    pub q_k_seq: Vec<Vector>,
    pub rho_k_seq: Vec<f64>,
    /// `integral_0^T_s tr(Q_ww R_ww(t)) dt`, the per-interval noise cost term.
    pub noise_trace: f64,
}

impl DiscreteLqModel {
    pub fn nx(&self) -> usize {
        self.a.nrows()
    }
    pub fn nu(&self) -> usize {
        self.b.ncols()
    }
    pub fn horizon(&self) -> usize {
        self.q_k_seq.len()
    }

    /// Discrete stage cost at step `k`.
    pub fn stage_cost(&self, k: usize, x: &Vector, u: &Vector) -> f64 {
        let xu = stack(x, u);
        0.5 * xu.dot(&(&self.q * &xu)) + self.q_k_seq[k].dot(&xu) + self.rho_k_seq[k]
    }

    pub fn q_xx(&self) -> Matrix {
        densela::block(&self.q, 0, 0, self.nx(), self.nx())
    }
    pub fn q_xu(&self) -> Matrix {
        densela::block(&self.q, 0, self.nx(), self.nx(), self.nu())
    }
    pub fn q_uu(&self) -> Matrix {
        densela::block(&self.q, self.nx(), self.nx(), self.nu(), self.nu())
    }
}

pub(crate) fn stack(x: &Vector, u: &Vector) -> Vector {
    Vector::from_iterator(x.len() + u.len(), x.iter().chain(u.iter()).copied())
}

pub(crate) fn assemble(
    model: &ContinuousLqModel,
    a: Matrix,
    b: Matrix,
    mut q: Matrix,
    m: Matrix,
    mut r_ww: Matrix,
    noise_trace: f64,
) -> DiscreteLqModel {
    densela::symmetrize_mut(&mut q);
    densela::symmetrize_mut(&mut r_ww);
    let (q_k_seq, rho_k_seq) = affine_terms(model, &m);
    DiscreteLqModel {
        a,
        b,
        c: model.c_c.clone(),
        d: model.d_c.clone(),
        q,
        m,
        r_ww,
        t_s: model.t_s,
        q_k_seq,
        rho_k_seq,
        noise_trace,
    }
}

/// Fill `q_k = M zbar_k` and `rho_k = 1/2 zbar_k' Q_c zbar_k T_s`.
pub(crate) fn affine_terms(model: &ContinuousLqModel, m: &Matrix) -> (Vec<Vector>, Vec<f64>) {
    let q = model.targets.iter().map(|z| m * z).collect();
    let rho = model
        .targets
        .iter()
        .map(|z| 0.5 * z.dot(&(&model.q_c * z)) * model.t_s)
        .collect();
    (q, rho)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn mat(rows: usize, cols: usize, v: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, cols, v)
    }

    pub fn vec(v: &[f64]) -> Vector {
        Vector::from_column_slice(v)
    }

    /// The stiff two-state plant used throughout the tests.
    pub fn stiff_plant() -> ContinuousLqModel {
        let spec = TrackingSpec {
            c_plant: mat(1, 2, &[1.0, 1.0]),
            d_plant: mat(1, 2, &[0.0, 0.0]),
            q_zz: mat(1, 1, &[1.0]),
            q_uu: Matrix::identity(2, 2),
            zbar: vec![vec(&[3.0])],
            ubar: vec![vec(&[0.0, 0.0])],
        };
        let plant = Plant {
            a_c: mat(2, 2, &[-49.0, 24.0, -64.0, 31.0]),
            b_c: mat(2, 2, &[2.0, 0.5, 1.0, 3.0]),
            g_c: Matrix::identity(2, 2) * 0.1,
        };
        let horizon = Horizon {
            t_s: 1.0,
            x0_mean: vec(&[0.0, 1.0]),
            x0_cov: Matrix::identity(2, 2) * 0.1,
            inputs: vec![vec(&[1.0, 1.0]); 4],
        };
        build_stacked_model(&spec, &plant, &horizon).unwrap()
    }

    /// Scalar integrator `xdot = u`, `z = x`, unit weight.
    pub fn integrator() -> ContinuousLqModel {
        ContinuousLqModel {
            a_c: mat(1, 1, &[0.0]),
            b_c: mat(1, 1, &[1.0]),
            g_c: mat(1, 1, &[0.0]),
            c_c: mat(1, 1, &[1.0]),
            d_c: mat(1, 1, &[0.0]),
            q_c: mat(1, 1, &[1.0]),
            t_s: 1.0,
            x0_mean: vec(&[0.0]),
            x0_cov: mat(1, 1, &[0.0]),
            inputs: vec![vec(&[0.0])],
            targets: vec![vec(&[0.0])],
        }
    }

    /// Scalar Brownian motion, `z = x`, no input.
    pub fn pure_noise() -> ContinuousLqModel {
        ContinuousLqModel {
            a_c: mat(1, 1, &[0.0]),
            b_c: Matrix::zeros(1, 0),
            g_c: mat(1, 1, &[1.0]),
            c_c: mat(1, 1, &[1.0]),
            d_c: Matrix::zeros(1, 0),
            q_c: mat(1, 1, &[1.0]),
            t_s: 1.0,
            x0_mean: vec(&[0.0]),
            x0_cov: mat(1, 1, &[0.0]),
            inputs: vec![Vector::zeros(0)],
            targets: vec![vec(&[0.0])],
        }
    }
}
