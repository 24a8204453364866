//! Error and timing table against the exponential-method truth.

use std::time::Instant;

use crate::butcher::Scheme;
use crate::densela::max_abs_diff;
use crate::error::{Error, Result};
use crate::method::{discretize, Method};
use crate::model::{ContinuousLqModel, DiscreteLqModel};

pub const CSV_HEADER: &str = "scheme,method,N,e_A,e_B,e_Rww,e_M,e_Q,cpu_seconds";

#[derive(Debug, Clone, Copy)]
pub struct BenchConfig {
    pub max_exp: u32,
    pub reps: usize,
    pub warmups: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { max_exp: 8, reps: 9, warmups: 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub scheme: String,
    /// `ode`, `sqr` or `expm`
    pub method: &'static str,
    pub steps: usize,
    /// Max-abs errors of A, B, R_ww, M, Q; NaN when the run diverged.
    pub errors: [f64; 5],
    pub cpu_seconds: f64,
}

impl BenchRow {
    pub fn csv(&self) -> String {
        let e = &self.errors;
        format!(
            "{},{},{},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.scheme, self.method, self.steps, e[0], e[1], e[2], e[3], e[4], self.cpu_seconds
        )
    }
}

pub fn errors_against(truth: &DiscreteLqModel, d: &DiscreteLqModel) -> [f64; 5] {
    [
        max_abs_diff(&truth.a, &d.a),
        max_abs_diff(&truth.b, &d.b),
        max_abs_diff(&truth.r_ww, &d.r_ww),
        max_abs_diff(&truth.m, &d.m),
        max_abs_diff(&truth.q, &d.q),
    ]
}

/// Median wall time of `reps` runs after `warmups` discarded runs.
pub fn median_seconds<T>(reps: usize, warmups: usize, mut f: impl FnMut() -> T) -> f64 {
    for _ in 0..warmups {
        std::hint::black_box(f());
    }
    let mut times: Vec<f64> = (0..reps.max(1))
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(f());
            t.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let n = times.len();
    if n % 2 == 1 {
        times[n / 2]
    } else {
        0.5 * (times[n / 2 - 1] + times[n / 2])
    }
}

fn timed_row(model: &ContinuousLqModel, truth: &DiscreteLqModel, method: Method, steps: usize, cfg: &BenchConfig) -> Result<BenchRow> {
    let (scheme, kind) = match method {
        Method::Ode(s) => (s.name().to_string(), "ode"),
        Method::Sqr(s) => (s.name().to_string(), "sqr"),
        Method::Expm => ("expm".to_string(), "expm"),
    };
    match discretize(model, method, steps) {
        Ok(d) => {
            let cpu = median_seconds(cfg.reps, cfg.warmups, || discretize(model, method, steps));
            Ok(BenchRow { scheme, method: kind, steps, errors: errors_against(truth, &d), cpu_seconds: cpu })
        }
        Err(e) if e.exit_code() == 4 => Ok(BenchRow { scheme, method: kind, steps, errors: [f64::NAN; 5], cpu_seconds: f64::NAN }),
        Err(e) => Err(e),
    }
}

/// Rows for every scheme, both fixed-step methods and `N = 2^0..2^max_exp`,
/// followed by one exponential-method row (`N = 0`).
pub fn run_benchmark(model: &ContinuousLqModel, schemes: &[Scheme], cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.max_exp > 20 {
        return Err(Error::InvalidArgument(format!("max-exp {} is above 20", cfg.max_exp)));
    }
    let truth = discretize(model, Method::Expm, 1)?;
    let mut rows = Vec::new();
    for &s in schemes {
        for method in [Method::Ode(s), Method::Sqr(s)] {
            for j in 0..=cfg.max_exp {
                rows.push(timed_row(model, &truth, method, 1usize << j, cfg)?);
            }
        }
    }
    rows.push(timed_row(model, &truth, Method::Expm, 0, cfg)?);
    Ok(rows)
}
