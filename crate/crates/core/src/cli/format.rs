//! Model files and discrete-model JSON.
//!
//! Matrices are row-major arrays of arrays. Floats are written in shortest
//! round-trip form, so a written discrete model reads back bit for bit.

use serde::{Deserialize, Serialize};

use crate::densela::Matrix;
use crate::error::{Error, Result};
use crate::model::{broadcast, build_stacked_model, ContinuousLqModel, DiscreteLqModel, Horizon, Plant, TrackingSpec, Vector};

/// Largest accepted horizon `N`.
pub const MAX_HORIZON: usize = 100_000;

/// A single vector (broadcast over the horizon) or one vector per step.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum VecOrList {
    One(Vec<f64>),
    Many(Vec<Vec<f64>>),
}

impl VecOrList {
    fn vectors(&self) -> Vec<Vector> {
        match self {
            VecOrList::One(v) => vec![Vector::from_column_slice(v)],
            VecOrList::Many(vs) => vs.iter().map(|v| Vector::from_column_slice(v)).collect(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingFile {
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
    #[serde(rename = "Q_zz")]
    pub q_zz: Vec<Vec<f64>>,
    #[serde(rename = "Q_uu")]
    pub q_uu: Vec<Vec<f64>>,
    pub zbar: VecOrList,
    pub ubar: Option<VecOrList>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(rename = "A_c")]
    pub a_c: Vec<Vec<f64>>,
    #[serde(rename = "B_c")]
    pub b_c: Vec<Vec<f64>>,
    #[serde(rename = "G_c")]
    pub g_c: Vec<Vec<f64>>,
    #[serde(rename = "C_c")]
    pub c_c: Option<Vec<Vec<f64>>>,
    #[serde(rename = "D_c")]
    pub d_c: Option<Vec<Vec<f64>>>,
    #[serde(rename = "Q_c")]
    pub q_c: Option<Vec<Vec<f64>>>,
    pub zbar: Option<VecOrList>,
    pub tracking: Option<TrackingFile>,
    #[serde(rename = "T_s")]
    pub t_s: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub u: VecOrList,
    pub x0_mean: Vec<f64>,
    pub x0_cov: Option<Vec<Vec<f64>>>,
}

/// Rows of equal length; `[]` is 0x0 and `[[]]` is 1x0.
pub fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> Result<Matrix> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::ModelFormat(format!(
            "{name}: row {bad} has {} entries, expected {ncols}",
            rows[bad].len()
        )));
    }
    Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ModelFile {
    pub fn into_model(self) -> Result<ContinuousLqModel> {
        if self.n == 0 {
            return Err(Error::ModelFormat("N must be at least 1".into()));
        }
        if self.n > MAX_HORIZON {
            return Err(Error::SizeCap { dim: self.n, cap: MAX_HORIZON });
        }
        let a_c = matrix_from_rows(&self.a_c, "A_c")?;
        let nx = a_c.nrows();
        let b_c = matrix_from_rows(&self.b_c, "B_c")?;
        let g_c = matrix_from_rows(&self.g_c, "G_c")?;
        let inputs = broadcast(&self.u.vectors(), self.n, "u")?;
        let x0_mean = Vector::from_column_slice(&self.x0_mean);
        let x0_cov = match &self.x0_cov {
            Some(rows) => matrix_from_rows(rows, "x0_cov")?,
            None => Matrix::zeros(nx, nx),
        };

        let stacked = [self.c_c.is_some(), self.d_c.is_some(), self.q_c.is_some(), self.zbar.is_some()];
        match (self.tracking, stacked) {
            (Some(t), [false, false, false, false]) => {
                let spec = TrackingSpec {
                    c_plant: matrix_from_rows(&t.c, "tracking.C")?,
                    d_plant: matrix_from_rows(&t.d, "tracking.D")?,
                    q_zz: matrix_from_rows(&t.q_zz, "tracking.Q_zz")?,
                    q_uu: matrix_from_rows(&t.q_uu, "tracking.Q_uu")?,
                    zbar: t.zbar.vectors(),
                    ubar: match t.ubar {
                        Some(u) => u.vectors(),
                        None => vec![Vector::zeros(b_c.ncols())],
                    },
                };
                let plant = Plant { a_c, b_c, g_c };
                let horizon = Horizon { t_s: self.t_s, x0_mean, x0_cov, inputs };
                build_stacked_model(&spec, &plant, &horizon)
            }
            (None, [true, true, true, true]) => {
                let targets = broadcast(&self.zbar.unwrap().vectors(), self.n, "zbar")?;
                ContinuousLqModel {
                    a_c,
                    b_c,
                    g_c,
                    c_c: matrix_from_rows(&self.c_c.unwrap(), "C_c")?,
                    d_c: matrix_from_rows(&self.d_c.unwrap(), "D_c")?,
                    q_c: matrix_from_rows(&self.q_c.unwrap(), "Q_c")?,
                    t_s: self.t_s,
                    x0_mean,
                    x0_cov,
                    inputs,
                    targets,
                }
                .checked()
            }
            (Some(_), _) => Err(Error::ModelFormat("give either \"tracking\" or C_c/D_c/Q_c/zbar, not both".into())),
            (None, _) => Err(Error::ModelFormat("stacked form needs all of C_c, D_c, Q_c and zbar".into())),
        }
    }
}

pub fn parse_model_file(text: &str) -> Result<ContinuousLqModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
    file.into_model()
}

pub fn read_model_file(path: &str) -> Result<ContinuousLqModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), reason: e.to_string() })?;
    parse_model_file(&text)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteFile {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub method: Option<String>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "M")]
    pub m: Vec<Vec<f64>>,
    #[serde(rename = "R_ww")]
    pub r_ww: Vec<Vec<f64>>,
    pub q_k: Vec<Vec<f64>>,
    pub rho_k: Vec<f64>,
    #[serde(rename = "T_s")]
    pub t_s: f64,
    pub noise_trace: f64,
}

impl DiscreteFile {
    pub fn from_model(d: &DiscreteLqModel, method: Option<String>) -> Self {
        DiscreteFile {
            method,
            a: matrix_to_rows(&d.a),
            b: matrix_to_rows(&d.b),
            c: matrix_to_rows(&d.c),
            d: matrix_to_rows(&d.d),
            q: matrix_to_rows(&d.q),
            m: matrix_to_rows(&d.m),
            r_ww: matrix_to_rows(&d.r_ww),
            q_k: d.q_k_seq.iter().map(|v| v.iter().copied().collect()).collect(),
            rho_k: d.rho_k_seq.clone(),
            t_s: d.t_s,
            noise_trace: d.noise_trace,
        }
    }

    pub fn into_model(self) -> Result<DiscreteLqModel> {
        let a = matrix_from_rows(&self.a, "A")?;
        let nx = a.nrows();
        let b = matrix_from_rows(&self.b, "B")?;
        let nu = if self.b.is_empty() { 0 } else { b.ncols() };
        let c = matrix_from_rows(&self.c, "C")?;
        let nz = c.nrows();
        let d = matrix_from_rows(&self.d, "D")?;
        let q = matrix_from_rows(&self.q, "Q")?;
        let m = matrix_from_rows(&self.m, "M")?;
        let r_ww = matrix_from_rows(&self.r_ww, "R_ww")?;
        let n = nx + nu;
        let shapes = [
            ("A", a.shape(), (nx, nx)),
            ("B", b.shape(), (nx, nu)),
            ("C", c.shape(), (nz, nx)),
            ("D", d.shape(), (nz, nu)),
            ("Q", q.shape(), (n, n)),
            ("M", m.shape(), (n, nz)),
            ("R_ww", r_ww.shape(), (nx, nx)),
        ];
        for (name, got, want) in shapes {
            // 0-column matrices written as [[], ...] and 0-row ones as [] are both fine
            let empty_ok = (got.0 == 0 || got.1 == 0) && (want.0 == 0 || want.1 == 0);
            if got != want && !empty_ok {
                return Err(Error::ModelFormat(format!("{name} is {}x{}, expected {}x{}", got.0, got.1, want.0, want.1)));
            }
        }
        if self.q_k.len() != self.rho_k.len() {
            return Err(Error::ModelFormat(format!(
                "q_k has {} entries but rho_k has {}",
                self.q_k.len(),
                self.rho_k.len()
            )));
        }
        if let Some(bad) = self.q_k.iter().position(|v| v.len() != n) {
            return Err(Error::ModelFormat(format!("q_k[{bad}] has length {}, expected {n}", self.q_k[bad].len())));
        }
        Ok(DiscreteLqModel {
            a,
            b: Matrix::from_iterator(nx, nu, b.iter().copied()),
            c,
            d: Matrix::from_iterator(nz, nu, d.iter().copied()),
            q,
            m: Matrix::from_iterator(n, nz, m.iter().copied()),
            r_ww,
            t_s: self.t_s,
            q_k_seq: self.q_k.iter().map(|v| Vector::from_column_slice(v)).collect(),
            rho_k_seq: self.rho_k,
            noise_trace: self.noise_trace,
        })
    }
}

pub fn parse_discrete_model(text: &str) -> Result<DiscreteLqModel> {
    let file: DiscreteFile = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
    file.into_model()
}

pub fn discrete_to_json(d: &DiscreteLqModel, method: Option<String>) -> String {
    let mut s = serde_json::to_string_pretty(&DiscreteFile::from_model(d, method)).expect("plain data serializes");
    s.push('\n');
    s
}
