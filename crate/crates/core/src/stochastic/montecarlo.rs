//! Monte Carlo evaluation of three cost streams on shared noise samples.
//!
//! * `continuous`: state advanced exactly between sub-steps with the EM noise
//!   increment added at each node; cost integrated exactly on every sub-step.
//! * `discrete`: discrete stage costs `l_k` plus the sub-sampled noise terms.
//! * `em_form`: the quadratic form `1/2 xi' Q xi + q' xi + rho`.

use rayon::prelude::*;
use serde::Serialize;

use super::em::EmReformulation;
use super::moments::cost_moments;
use super::rng::NormalStream;
use crate::densela::{psd_sqrt, Matrix};
use crate::disc_expm::discretize_expm;
use crate::error::{Error, Result};
use crate::model::{ContinuousLqModel, DiscreteLqModel, Vector};

pub const HISTOGRAM_BINS: usize = 64;
pub const STREAM_NAMES: [&str; 3] = ["continuous", "discrete", "em_form"];
const CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamStats {
    pub name: String,
    pub sample_mean: f64,
    pub sample_var: f64,
    /// Standard error of `sample_mean`.
    pub mean_std_err: f64,
    /// Standard error of `sample_var`, from the fourth central moment.
    pub var_std_err: f64,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub n_sims: usize,
    pub seed: u64,
    pub n_sub: usize,
    pub analytic_mean: f64,
    pub analytic_var: f64,
    pub bin_edges: Vec<f64>,
    pub streams: Vec<StreamStats>,
    /// Pairwise sample correlations: continuous/discrete, continuous/em_form, discrete/em_form.
    pub correlations: [f64; 3],
}

/// Everything a replicate needs, precomputed once.
struct Plan<'a> {
    model: &'a ContinuousLqModel,
    disc: &'a DiscreteLqModel,
    form: &'a EmReformulation,
    nx: usize,
    nw: usize,
    n_sub: usize,
    x0_sqrt: Matrix,
    sqrt_dt: f64,
    // continuous stream, per sub-step of length dt
    sub_a: Matrix,
    sub_q_xx: Matrix,
    sub_in: Vec<Vector>,
    sub_lin: Vec<Vector>,
    sub_const: Vec<f64>,
    // discrete stream
    e: Matrix,
    node_l: Vec<Matrix>,
    z_term: Vec<Vector>,
    q_ww_dt: Matrix,
}

impl<'a> Plan<'a> {
    fn new(model: &'a ContinuousLqModel, disc: &'a DiscreteLqModel, form: &'a EmReformulation) -> Result<Self> {
        let nx = model.nx();
        let nu = model.nu();
        let horizon = model.horizon();
        if disc.horizon() != horizon || disc.nx() != nx || form.parts.horizon() != horizon || form.parts.nx() != nx {
            return Err(Error::Dimension("model, discrete model and reformulation disagree".into()));
        }
        let n_sub = form.n_sub();
        let dt = form.dt();
        let mut fine = model.clone();
        fine.t_s = dt;
        let sub = discretize_expm(&fine)?;
        let sub_q_xx = sub.q_xx();
        let sub_q_xu = sub.q_xu();
        let sub_q_uu = sub.q_uu();
        let mut sub_in = Vec::with_capacity(horizon);
        let mut sub_lin = Vec::with_capacity(horizon);
        let mut sub_const = Vec::with_capacity(horizon);
        for k in 0..horizon {
            let u = &model.inputs[k];
            let mz = &sub.q_k_seq[k];
            sub_in.push(&sub.b * u);
            sub_lin.push(&sub_q_xu * u + mz.rows(0, nx));
            sub_const.push(0.5 * u.dot(&(&sub_q_uu * u)) + mz.rows(nx, nu).dot(u) + sub.rho_k_seq[k]);
        }

        let qc_c = &model.q_c * &model.c_c;
        let node_l = form.parts.gamma_nodes.iter().map(|g| g.transpose() * &qc_c * dt).collect();
        let z_term = model.targets.iter().map(|z| qc_c.transpose() * z * dt).collect();
        Ok(Plan {
            model,
            disc,
            form,
            nx,
            nw: model.nw(),
            n_sub,
            x0_sqrt: psd_sqrt(&model.x0_cov)?,
            sqrt_dt: dt.sqrt(),
            sub_a: sub.a.clone(),
            sub_q_xx,
            sub_in,
            sub_lin,
            sub_const,
            e: form.parts.e.clone(),
            node_l,
            z_term,
            q_ww_dt: model.q_ww() * dt,
        })
    }

    /// `xi` for replicate `r`: `x_0` first, then the increments in time order.
    fn sample(&self, seed: u64, r: u64) -> Vector {
        let d = self.form.dim();
        let mut rng = NormalStream::new(seed, r);
        let mut z = vec![0.0; d];
        rng.fill(&mut z);
        let mut xi = Vector::from_vec(z);
        let x0 = &self.model.x0_mean + &self.x0_sqrt * xi.rows(0, self.nx);
        xi.rows_mut(0, self.nx).copy_from(&x0);
        let mut tail = xi.rows_mut(self.nx, d - self.nx);
        tail *= self.sqrt_dt;
        xi
    }

    fn increment<'v>(&self, xi: &'v Vector, k: usize, i: usize) -> nalgebra::DVectorView<'v, f64> {
        let off = self.nx + (k * self.n_sub + i) * self.nw;
        xi.rows(off, self.nw)
    }

    fn continuous(&self, xi: &Vector) -> f64 {
        let g = &self.model.g_c;
        let mut x = xi.rows(0, self.nx).into_owned();
        let mut tmp = Vector::zeros(self.nx);
        let mut cost = 0.0;
        for k in 0..self.model.horizon() {
            for i in 0..self.n_sub {
                tmp.gemv(1.0, &self.sub_q_xx, &x, 0.0);
                cost += 0.5 * x.dot(&tmp) + self.sub_lin[k].dot(&x) + self.sub_const[k];
                tmp.gemv(1.0, &self.sub_a, &x, 0.0);
                tmp += &self.sub_in[k];
                tmp.gemv(1.0, g, &self.increment(xi, k, i), 1.0);
                std::mem::swap(&mut x, &mut tmp);
            }
        }
        cost
    }

    fn discrete(&self, xi: &Vector) -> f64 {
        let g = &self.model.g_c;
        let nu = self.model.nu();
        let mut x = xi.rows(0, self.nx).into_owned();
        let mut y = Vector::zeros(self.nx + nu);
        let mut w = Vector::zeros(self.nx);
        let mut tmp = Vector::zeros(self.nx);
        let mut cost = 0.0;
        for k in 0..self.model.horizon() {
            let u = &self.model.inputs[k];
            cost += self.disc.stage_cost(k, &x, u);
            y.rows_mut(0, self.nx).copy_from(&x);
            y.rows_mut(self.nx, nu).copy_from(u);
            w.fill(0.0);
            for i in 0..self.n_sub {
                tmp.gemv(1.0, &self.e, &w, 0.0);
                tmp.gemv(1.0, g, &self.increment(xi, k, i), 1.0);
                std::mem::swap(&mut w, &mut tmp);
                tmp.gemv_tr(1.0, &self.node_l[i], &y, 0.0);
                tmp -= &self.z_term[k];
                cost += tmp.dot(&w);
                tmp.gemv(1.0, &self.q_ww_dt, &w, 0.0);
                cost += 0.5 * w.dot(&tmp);
            }
            tmp.gemv(1.0, &self.disc.a, &x, 0.0);
            tmp.gemv(1.0, &self.disc.b, u, 1.0);
            tmp += &w;
            std::mem::swap(&mut x, &mut tmp);
        }
        cost
    }

    /// All three streams for replicates `start..start + len`.
    fn chunk(&self, seed: u64, start: usize, len: usize) -> Vec<[f64; 3]> {
        let d = self.form.dim();
        let mut xs = Matrix::zeros(d, len);
        let mut out = Vec::with_capacity(len);
        for j in 0..len {
            let xi = self.sample(seed, (start + j) as u64);
            out.push([self.continuous(&xi), self.discrete(&xi), 0.0]);
            xs.set_column(j, &xi);
        }
        let qx = &self.form.q_big * &xs;
        for (j, row) in out.iter_mut().enumerate() {
            let col = xs.column(j);
            row[2] = 0.5 * col.dot(&qx.column(j)) + self.form.q_vec.dot(&col) + self.form.rho;
        }
        out
    }
}

/// Per-replicate costs `[continuous, discrete, em_form]` in replicate order.
pub fn simulate(
    model: &ContinuousLqModel,
    disc: &DiscreteLqModel,
    form: &EmReformulation,
    n_sims: usize,
    seed: u64,
) -> Result<Vec<[f64; 3]>> {
    if n_sims == 0 {
        return Err(Error::InvalidArgument("number of simulations must be at least 1".into()));
    }
    let plan = Plan::new(model, disc, form)?;
    let chunks: Vec<usize> = (0..n_sims.div_ceil(CHUNK)).collect();
    let parts: Vec<Vec<[f64; 3]>> = chunks
        .par_iter()
        .map(|&c| {
            let start = c * CHUNK;
            plan.chunk(seed, start, CHUNK.min(n_sims - start))
        })
        .collect();
    Ok(parts.into_iter().flatten().collect())
}

/// Runs on the current rayon pool; results do not depend on its size.
pub fn monte_carlo(
    model: &ContinuousLqModel,
    disc: &DiscreteLqModel,
    form: &EmReformulation,
    n_sims: usize,
    seed: u64,
) -> Result<McSummary> {
    let samples = simulate(model, disc, form, n_sims, seed)?;
    let analytic = cost_moments(form);
    Ok(summarize(&samples, analytic.mean, analytic.variance, seed, form.n_sub()))
}

pub fn summarize(samples: &[[f64; 3]], analytic_mean: f64, analytic_var: f64, seed: u64, n_sub: usize) -> McSummary {
    let n = samples.len();
    let sigma = analytic_var.max(0.0).sqrt();
    let half = if sigma > 0.0 { 6.0 * sigma } else { 1.0 };
    let lo = analytic_mean - half;
    let width = 2.0 * half / HISTOGRAM_BINS as f64;
    let bin_edges: Vec<f64> = (0..=HISTOGRAM_BINS).map(|i| lo + i as f64 * width).collect();

    let column = |s: usize| -> Vec<f64> { samples.iter().map(|r| r[s]).collect() };
    let cols: Vec<Vec<f64>> = (0..3).map(column).collect();
    let means: Vec<f64> = cols.iter().map(|c| pairwise_sum(c) / n as f64).collect();
    let centered: Vec<Vec<f64>> = cols.iter().zip(&means).map(|(c, m)| c.iter().map(|v| v - m).collect()).collect();

    let streams = (0..3)
        .map(|s| {
            let c = &centered[s];
            let m2 = pairwise_sum(&c.iter().map(|v| v * v).collect::<Vec<_>>()) / n as f64;
            let m4 = pairwise_sum(&c.iter().map(|v| v.powi(4)).collect::<Vec<_>>()) / n as f64;
            let var = if n > 1 { m2 * n as f64 / (n - 1) as f64 } else { 0.0 };
            let mut counts = vec![0u64; HISTOGRAM_BINS];
            for v in &cols[s] {
                let b = ((v - lo) / width).floor();
                let idx = if b.is_nan() { 0 } else { b.clamp(0.0, (HISTOGRAM_BINS - 1) as f64) as usize };
                counts[idx] += 1;
            }
            StreamStats {
                name: STREAM_NAMES[s].to_string(),
                sample_mean: means[s],
                sample_var: var,
                mean_std_err: (var / n as f64).sqrt(),
                var_std_err: ((m4 - m2 * m2).max(0.0) / n as f64).sqrt(),
                counts,
            }
        })
        .collect();

    let corr = |i: usize, j: usize| {
        let cross: Vec<f64> = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).collect();
        let sq = |c: &Vec<f64>| pairwise_sum(&c.iter().map(|v| v * v).collect::<Vec<_>>());
        let den = (sq(&centered[i]) * sq(&centered[j])).sqrt();
        if den > 0.0 { pairwise_sum(&cross) / den } else { 1.0 }
    };

    McSummary {
        n_sims: n,
        seed,
        n_sub,
        analytic_mean,
        analytic_var,
        bin_edges,
        streams,
        correlations: [corr(0, 1), corr(0, 2), corr(1, 2)],
    }
}

/// Fixed-topology pairwise summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        v.iter().sum()
    } else {
        let mid = v.len() / 2;
        pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::stochastic::em::em_reformulate;

    fn setup(m: &ContinuousLqModel, n_sub: usize) -> (DiscreteLqModel, EmReformulation) {
        (discretize_expm(m).unwrap(), em_reformulate(m, n_sub).unwrap())
    }

    #[test]
    fn noise_free_streams_agree() {
        let mut m = stiff_plant();
        m.g_c = Matrix::zeros(2, 2);
        m.x0_cov = Matrix::zeros(2, 2);
        let (d, r) = setup(&m, 16);
        let det: f64 = {
            let mut x = m.x0_mean.clone();
            let mut c = 0.0;
            for k in 0..m.horizon() {
                c += d.stage_cost(k, &x, &m.inputs[k]);
                x = &d.a * &x + &d.b * &m.inputs[k];
            }
            c
        };
        let s = simulate(&m, &d, &r, 1, 3).unwrap();
        for v in s[0] {
            assert!((v - det).abs() <= 1e-8 * det, "{v} vs {det}");
        }
    }

    #[test]
    fn discrete_stream_equals_quadratic_form() {
        let m = stiff_plant();
        let (d, r) = setup(&m, 16);
        for row in simulate(&m, &d, &r, 100, 11).unwrap() {
            assert!((row[1] - row[2]).abs() <= 1e-8 * row[2].abs());
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let m = stiff_plant();
        let (d, r) = setup(&m, 8);
        let run = |w| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(w).build().unwrap();
            pool.install(|| monte_carlo(&m, &d, &r, 100, 5).unwrap())
        };
        let a = run(1);
        assert_eq!(a, run(3));
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&run(2)).unwrap());
    }

    #[test]
    fn histogram_counts_every_sample() {
        let m = stiff_plant();
        let (d, r) = setup(&m, 4);
        let s = monte_carlo(&m, &d, &r, 70, 1).unwrap();
        assert_eq!(s.bin_edges.len(), HISTOGRAM_BINS + 1);
        for st in &s.streams {
            assert_eq!(st.counts.iter().sum::<u64>(), 70);
            assert!(st.sample_var >= 0.0);
        }
        assert!(simulate(&m, &d, &r, 0, 1).is_err());
    }

    #[test]
    fn pure_noise_sample_mean() {
        let m = pure_noise();
        let (d, r) = setup(&m, 64);
        let s = monte_carlo(&m, &d, &r, 30_000, 2024).unwrap();
        let c = &s.streams[2];
        // exact mean at this grid is dt^2 n(n+1)/4
        assert!((c.sample_mean - s.analytic_mean).abs() <= 3.0 * c.mean_std_err);
        assert!((c.sample_mean - 0.25).abs() <= 3.0 * c.mean_std_err + 0.25 / 64.0);
    }

    #[test]
    fn pairwise_sum_is_exact_on_integers() {
        let v: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 500500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }
}
