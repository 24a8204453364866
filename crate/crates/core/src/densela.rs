//! Dense kernels: matrix exponential, LU solves, symmetrization and PSD tests.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

// Padé(13,13) numerator coefficients and the matching one-norm threshold
// (Higham 2005).
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn require_square(m: &Matrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    Ok(m.nrows())
}

pub fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn norm1(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn norm_inf(m: &Matrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest absolute entry; zero for empty matrices.
pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Largest absolute elementwise difference.
pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(m: &Matrix) -> Result<Matrix> {
    let n = require_square(m)?;
    if !all_finite(m) {
        return Err(Error::NonFinite("expm input".into()));
    }
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }

    let nrm = norm1(m);
    let s = if nrm > THETA13 { (nrm / THETA13).log2().ceil().max(0.0) as i32 } else { 0 };
    let a = if s > 0 { m * 2f64.powi(-s) } else { m.clone() };

    let ident = Matrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];

    let p = &v + &u;
    let q = &v - &u;
    let mut r = solve_linear(&q, &p)?;
    for _ in 0..s {
        r = &r * &r;
    }
    if !all_finite(&r) {
        return Err(Error::Overflow("matrix exponential".into()));
    }
    Ok(r)
}

/// LU factorization with partial pivoting, stored compactly.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    /// Factor a square matrix. A pivot whose magnitude is at most
    /// `eps * n * max|entry|` is treated as singular.
    pub fn factor(m: &Matrix) -> Result<Self> {
        let n = require_square(m)?;
        if !all_finite(m) {
            return Err(Error::NonFinite("linear system matrix".into()));
        }
        let mut lu = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let thresh = f64::EPSILON * n as f64 * max_abs(m);

        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for i in k + 1..n {
                let v = lu[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= thresh || best == 0.0 {
                return Err(Error::Singular { step: k });
            }
            if p != k {
                lu.swap_rows(p, k);
                perm.swap(p, k);
            }
            let piv = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / piv;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        let t = lu[(k, j)];
                        lu[(i, j)] -= f * t;
                    }
                }
            }
        }
        Ok(Lu { lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, rhs: &Matrix) -> Result<Matrix> {
        let n = self.dim();
        if rhs.nrows() != n {
            return Err(Error::Dimension(format!(
                "right-hand side has {} rows, system has dimension {}",
                rhs.nrows(),
                n
            )));
        }
        let mut x = Matrix::zeros(n, rhs.ncols());
        for (i, &p) in self.perm.iter().enumerate() {
            x.row_mut(i).copy_from(&rhs.row(p));
        }
        for c in 0..x.ncols() {
            // forward substitution with unit lower factor
            for i in 0..n {
                let mut acc = x[(i, c)];
                for j in 0..i {
                    acc -= self.lu[(i, j)] * x[(j, c)];
                }
                x[(i, c)] = acc;
            }
            for i in (0..n).rev() {
                let mut acc = x[(i, c)];
                for j in i + 1..n {
                    acc -= self.lu[(i, j)] * x[(j, c)];
                }
                x[(i, c)] = acc / self.lu[(i, i)];
            }
        }
        Ok(x)
    }
}

/// Solve `l * X = rhs`.
pub fn solve_linear(l: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    let n = require_square(l)?;
    if rhs.nrows() != n {
        return Err(Error::Dimension(format!(
            "right-hand side has {} rows, system has dimension {}",
            rhs.nrows(),
            n
        )));
    }
    Lu::factor(l)?.solve(rhs)
}

pub fn symmetrize(m: &Matrix) -> Result<Matrix> {
    require_square(m)?;
    let mut out = m.clone();
    symmetrize_mut(&mut out);
    Ok(out)
}

/// In-place `(m + m')/2` for a square matrix.
pub(crate) fn symmetrize_mut(m: &mut Matrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Largest asymmetry `max |m_ij - m_ji|`.
pub fn asymmetry(m: &Matrix) -> f64 {
    let n = m.nrows().min(m.ncols());
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Eigenvalues of the symmetric part, ascending.
pub fn sym_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    let s = symmetrize(m)?;
    if s.nrows() == 0 {
        return Ok(Vec::new());
    }
    if !all_finite(&s) {
        return Err(Error::NonFinite("symmetric eigenproblem".into()));
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// True iff the smallest eigenvalue is at least `-tol * max(1, largest)`.
pub fn is_psd(m: &Matrix, tol: f64) -> Result<bool> {
    let ev = sym_eigenvalues(m)?;
    let (Some(&lo), Some(&hi)) = (ev.first(), ev.last()) else {
        return Ok(true);
    };
    Ok(lo >= -tol * hi.max(1.0))
}

/// Symmetric square root `V sqrt(max(D,0)) V'`, used for sampling.
pub fn psd_sqrt(m: &Matrix) -> Result<Matrix> {
    let s = symmetrize(m)?;
    if s.nrows() == 0 {
        return Ok(s);
    }
    let eig = SymmetricEigen::new(s);
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * Matrix::from_diagonal(&d) * eig.eigenvectors.transpose())
}

pub fn trace_product(a: &Matrix, b: &Matrix) -> f64 {
    // tr(AB) without forming AB
    assert_eq!(a.ncols(), b.nrows());
    assert_eq!(a.nrows(), b.ncols());
    let mut t = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            t += a[(i, k)] * b[(k, i)];
        }
    }
    t
}

/// Copy `src` into `dst` at offset `(r, c)`.
pub(crate) fn put_block(dst: &mut Matrix, r: usize, c: usize, src: &Matrix) {
    dst.view_mut((r, c), src.shape()).copy_from(src);
}

pub(crate) fn block(src: &Matrix, r: usize, c: usize, nr: usize, nc: usize) -> Matrix {
    src.view((r, c), (nr, nc)).into_owned()
}
