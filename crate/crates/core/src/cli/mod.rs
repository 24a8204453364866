//! `lqdisc` command line.
//!
//! Exit codes: 0 success, 2 argument or I/O error, 3 invalid model,
//! 4 numerical failure, 5 size cap. Errors go to standard error as one line
//! starting with `lqdisc:`.

pub mod bench;
pub mod format;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::butcher::Scheme;
use crate::error::{Error, Result};
use crate::lqsolve::solve_finite_horizon;
use crate::method::{discretize, Method};
use crate::stochastic::{em_noise_trace, em_reformulate, expected_cost, monte_carlo, McSummary};

pub use format::{discrete_to_json, parse_discrete_model, parse_model_file, read_model_file};

pub const WORKERS_ENV: &str = "LQDISC_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "lqdisc", version, about = "Discrete-time equivalents of continuous-time LQ problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Discretize a model and write the discrete model as JSON.
    Discretize {
        #[arg(long)]
        model: PathBuf,
        /// ode:<scheme>, expm or sqr:<scheme>
        #[arg(long, default_value = "expm")]
        method: String,
        /// Fixed steps per sample interval.
        #[arg(long, default_value_t = 1)]
        steps: usize,
        /// Step-doubling iterations; sets steps to 2^J.
        #[arg(long, value_name = "J")]
        doubling: Option<u32>,
        #[arg(long, default_value = "discrete.json")]
        out: PathBuf,
    },
    /// Error and CPU-time table of the fixed-step methods.
    Benchmark {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated scheme names, or "all".
        #[arg(long, default_value = "all")]
        schemes: String,
        #[arg(long, value_name = "J", default_value_t = 8)]
        max_exp: u32,
        #[arg(long, default_value_t = 9)]
        reps: usize,
        #[arg(long, default_value_t = 2)]
        warmups: usize,
        #[arg(long, default_value = "benchmark.csv")]
        out: PathBuf,
    },
    /// Monte Carlo of the three cost streams against the analytic moments.
    Montecarlo {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 30_000)]
        sims: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// EM sub-steps per sample interval.
        #[arg(long, default_value_t = 256)]
        subdiv: usize,
        /// Thread count; falls back to LQDISC_WORKERS.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value = "histogram.csv")]
        hist: PathBuf,
        #[arg(long, default_value = "summary.json")]
        summary: PathBuf,
    },
    /// Certainty-equivalent expected cost.
    ExpectedCost {
        #[arg(long)]
        model: PathBuf,
        /// Method for the discrete weights and noise trace.
        #[arg(long, default_value = "expm")]
        method: String,
        #[arg(long, default_value_t = 1)]
        steps: usize,
        /// EM sub-steps for the second trace route.
        #[arg(long, default_value_t = 256)]
        subdiv: usize,
    },
    /// Solve the discrete problem and write the optimal trajectory.
    Solve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "expm")]
        method: String,
        #[arg(long, default_value_t = 1)]
        steps: usize,
        #[arg(long, default_value = "trajectory.csv")]
        out: PathBuf,
    },
}

/// Parse arguments, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("lqdisc: {}", line.trim_start_matches("error: "));
            return 2;
        }
    };
    match execute(cli.command) {
        Ok(msg) => {
            print!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("lqdisc: {}", e.to_string().replace('\n', " "));
            e.exit_code()
        }
    }
}

fn path_str(p: &std::path::Path) -> String {
    p.display().to_string()
}

fn write_file(path: &std::path::Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io { path: path_str(path), reason: e.to_string() })
}

fn load(path: &std::path::Path) -> Result<crate::model::ContinuousLqModel> {
    read_model_file(&path_str(path))
}

pub fn parse_schemes(list: &str) -> Result<Vec<Scheme>> {
    if list == "all" {
        return Ok(Scheme::ALL.to_vec());
    }
    list.split(',').map(|s| s.trim().parse()).collect()
}

/// `--workers`, else `LQDISC_WORKERS`, else the rayon default.
pub fn resolve_workers(flag: Option<usize>) -> Result<Option<usize>> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(WORKERS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidArgument(format!("{WORKERS_ENV}='{v}' is not a positive integer")))?,
            ),
            Err(_) => None,
        },
    };
    if n == Some(0) {
        return Err(Error::InvalidArgument("worker count must be at least 1".into()));
    }
    Ok(n)
}

pub fn histogram_csv(s: &McSummary) -> String {
    let mut out = String::from("bin_lo,bin_hi");
    for st in &s.streams {
        let _ = write!(out, ",{}", st.name);
    }
    out.push('\n');
    for b in 0..s.bin_edges.len() - 1 {
        let _ = write!(out, "{},{}", s.bin_edges[b], s.bin_edges[b + 1]);
        for st in &s.streams {
            let _ = write!(out, ",{}", st.counts[b]);
        }
        out.push('\n');
    }
    out
}

fn execute(cmd: Command) -> Result<String> {
    match cmd {
        Command::Discretize { model, method, steps, doubling, out } => {
            let m = load(&model)?;
            let method: Method = method.parse()?;
            let steps = match doubling {
                Some(j) if j > 40 => return Err(Error::InvalidArgument(format!("--doubling {j} is above 40"))),
                Some(j) => 1usize << j,
                None => steps,
            };
            let d = discretize(&m, method, steps)?;
            write_file(&out, &discrete_to_json(&d, Some(method.to_string())))?;
            Ok(format!(
                "method={method} steps={steps} n_x={} n_u={} N={} noise_trace={} wrote {}\n",
                d.nx(),
                d.nu(),
                d.horizon(),
                d.noise_trace,
                path_str(&out)
            ))
        }
        Command::Benchmark { model, schemes, max_exp, reps, warmups, out } => {
            let m = load(&model)?;
            let schemes = parse_schemes(&schemes)?;
            let cfg = bench::BenchConfig { max_exp, reps, warmups };
            let rows = bench::run_benchmark(&m, &schemes, &cfg)?;
            let mut csv = String::from(bench::CSV_HEADER);
            csv.push('\n');
            let mut diverged = 0;
            for r in &rows {
                csv.push_str(&r.csv());
                csv.push('\n');
                diverged += usize::from(r.errors[0].is_nan());
            }
            write_file(&out, &csv)?;
            Ok(format!("{} rows ({diverged} diverged) wrote {}\n", rows.len(), path_str(&out)))
        }
        Command::Montecarlo { model, sims, seed, subdiv, workers, hist, summary } => {
            let m = load(&model)?;
            let workers = resolve_workers(workers)?;
            let disc = discretize(&m, Method::Expm, 1)?;
            let form = em_reformulate(&m, subdiv)?;
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(n) = workers {
                builder = builder.num_threads(n);
            }
            let pool = builder.build().map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            let s = pool.install(|| monte_carlo(&m, &disc, &form, sims, seed))?;
            write_file(&hist, &histogram_csv(&s))?;
            let mut json = serde_json::to_string_pretty(&s).expect("plain data serializes");
            json.push('\n');
            write_file(&summary, &json)?;
            let mut msg = format!("analytic mean={} var={}\n", s.analytic_mean, s.analytic_var);
            for st in &s.streams {
                let _ = writeln!(msg, "{} mean={} (se {}) var={}", st.name, st.sample_mean, st.mean_std_err, st.sample_var);
            }
            Ok(msg)
        }
        Command::ExpectedCost { model, method, steps, subdiv } => {
            let m = load(&model)?;
            let method: Method = method.parse()?;
            let mut d = discretize(&m, method, steps)?;
            let psi = expected_cost(&m, &d, &m.x0_cov)?;
            let trace = d.noise_trace;
            d.noise_trace = em_noise_trace(&m, subdiv)?;
            let psi_em = expected_cost(&m, &d, &m.x0_cov)?;
            Ok(format!(
                "route={method} noise_trace={trace} psi={psi}\nroute=em:{subdiv} noise_trace={} psi={psi_em}\n",
                d.noise_trace
            ))
        }
        Command::Solve { model, method, steps, out } => {
            let m = load(&model)?;
            let method: Method = method.parse()?;
            let d = discretize(&m, method, steps)?;
            let sol = solve_finite_horizon(&d, &m.x0_mean)?;
            let (nx, nu) = (d.nx(), d.nu());
            let mut csv = String::from("k");
            for i in 0..nx {
                let _ = write!(csv, ",x{i}");
            }
            for i in 0..nu {
                let _ = write!(csv, ",u{i}");
            }
            csv.push('\n');
            for (k, x) in sol.x_seq.iter().enumerate() {
                let _ = write!(csv, "{k}");
                for v in x.iter() {
                    let _ = write!(csv, ",{v}");
                }
                match sol.u_seq.get(k) {
                    Some(u) => u.iter().for_each(|v| {
                        let _ = write!(csv, ",{v}");
                    }),
                    None => (0..nu).for_each(|_| csv.push(',')),
                }
                csv.push('\n');
            }
            write_file(&out, &csv)?;
            Ok(format!("value={} wrote {}\n", sol.value, path_str(&out)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_lists() {
        assert_eq!(parse_schemes("all").unwrap().len(), 6);
        assert_eq!(parse_schemes("classic_rk4, explicit_euler").unwrap(), vec![Scheme::ClassicRk4, Scheme::ExplicitEuler]);
        assert!(parse_schemes("rk5").is_err());
    }

    #[test]
    fn explicit_worker_flag_wins() {
        assert_eq!(resolve_workers(Some(3)).unwrap(), Some(3));
        assert!(resolve_workers(Some(0)).is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["lqdisc", "discretize"]), 2);
        assert_eq!(run(["lqdisc", "frobnicate"]), 2);
        assert_eq!(run(["lqdisc", "--help"]), 0);
        assert_eq!(run(["lqdisc", "discretize", "--model", "/nonexistent/model.json"]), 2);
    }
}
