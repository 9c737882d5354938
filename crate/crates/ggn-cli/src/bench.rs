//! `bench`: per-iteration wall time of the Riccati-based step against the horizon.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use ggn::dense_ref::{dense_ggn_step_from_model, SIZE_GUARD};
use ggn::solver::{backward_pass, rollout_lqr};

use crate::config::{load_config, ExperimentConfig};
use crate::error::CliError;
use crate::run::num;
use crate::setup::build_setup;

pub const BENCH_COLUMNS: [&str; 7] = [
    "path",
    "horizon",
    "samples",
    "median_ms",
    "min_ms",
    "max_ms",
    "median_us_per_stage",
];
/// Regularization used for the timed step; the timing does not depend on it.
const BENCH_NU: f64 = 1.0;

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub path: &'static str,
    pub horizon: usize,
    pub samples: usize,
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// least squares `median_ms = slope·τ + intercept` over the Riccati rows
    pub fit: Option<LinearFit>,
    /// `t(2τ)/t(τ)` for each horizon pair that differs by a factor two
    pub doubling_ratios: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub horizons: Vec<usize>,
    pub repetitions: usize,
    /// timed steps per repetition
    pub steps: usize,
    pub dense: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            horizons: vec![8, 16, 32, 64, 128],
            repetitions: 5,
            steps: 3,
            dense: false,
        }
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

fn validate(opts: &BenchOptions) -> Result<(), CliError> {
    if opts.horizons.len() < 3 {
        return Err(CliError::config("", "bench needs at least three horizons"));
    }
    if let Some(h) = opts.horizons.iter().find(|&&h| h < 8) {
        return Err(CliError::config("", format!("horizon {h} is below the minimum of 8")));
    }
    if opts.repetitions < 5 {
        return Err(CliError::config("", "bench needs at least five repetitions"));
    }
    if opts.steps == 0 {
        return Err(CliError::config("", "steps must be at least 1"));
    }
    Ok(())
}

/// Times one full iteration (forward pass, backward pass, roll-out, trial
/// evaluation) per sample. Runs sequentially so workers do not compete.
pub fn bench_config(cfg: &ExperimentConfig, opts: &BenchOptions) -> Result<BenchReport, CliError> {
    validate(opts)?;
    let mut rows = Vec::new();
    for &tau in &opts.horizons {
        let mut c = cfg.clone();
        c.problem.horizon = tau;
        c.problem.init = None;
        c.solver.eta = Some(0.0);
        let setup = build_setup(&c)?;
        let (problem, u) = (&setup.problem, &setup.init);
        let numerical = |e: ggn::solver::SolverError| CliError::Numerical(e.to_string());

        let mut samples = Vec::new();
        // one untimed warm-up
        for rep in 0..=opts.repetitions {
            for _ in 0..opts.steps {
                let t = Instant::now();
                let (_, _, model) = problem.forward_pass(u).map_err(numerical)?;
                let pol = backward_pass(&model, BENCH_NU).map_err(numerical)?;
                let v = rollout_lqr(&pol, &model);
                let trial = problem.objective(&u.plus(&v)).map_err(numerical)?;
                std::hint::black_box(trial);
                if rep > 0 {
                    samples.push(t.elapsed().as_secs_f64() * 1e3);
                }
            }
        }
        rows.push(row("riccati", tau, samples));

        let (n_x, n_u) = (problem.dynamic.state_dim(), problem.dynamic.control_dim());
        if opts.dense && tau * (n_x + n_u) <= SIZE_GUARD {
            let mut samples = Vec::new();
            for rep in 0..=opts.repetitions {
                let t = Instant::now();
                let (_, _, model) = problem.forward_pass(u).map_err(numerical)?;
                let v = dense_ggn_step_from_model(&model, BENCH_NU).map_err(|e| CliError::Numerical(e.to_string()))?;
                std::hint::black_box(v);
                if rep > 0 {
                    samples.push(t.elapsed().as_secs_f64() * 1e3);
                }
            }
            rows.push(row("dense", tau, samples));
        }
    }

    let riccati: Vec<&BenchRow> = rows.iter().filter(|r| r.path == "riccati").collect();
    let xs: Vec<f64> = riccati.iter().map(|r| r.horizon as f64).collect();
    let ys: Vec<f64> = riccati.iter().map(|r| r.median_ms).collect();
    let fit = linear_fit(&xs, &ys);
    let doubling_ratios = riccati
        .iter()
        .filter_map(|a| {
            riccati
                .iter()
                .find(|b| b.horizon == 2 * a.horizon)
                .map(|b| (a.horizon, b.median_ms / a.median_ms))
        })
        .collect();
    Ok(BenchReport {
        rows,
        fit,
        doubling_ratios,
    })
}

fn row(path: &'static str, horizon: usize, mut samples: Vec<f64>) -> BenchRow {
    let n = samples.len();
    let min_ms = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max_ms = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    BenchRow {
        path,
        horizon,
        samples: n,
        median_ms: median(&mut samples),
        min_ms,
        max_ms,
    }
}

pub fn bench_csv(report: &BenchReport) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(BENCH_COLUMNS)?;
    for r in &report.rows {
        w.write_record([
            r.path.to_string(),
            r.horizon.to_string(),
            r.samples.to_string(),
            num(r.median_ms),
            num(r.min_ms),
            num(r.max_ms),
            num(r.median_ms * 1e3 / r.horizon as f64),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

pub fn bench_path(config_path: &Path, opts: &BenchOptions, out: Option<&Path>) -> Result<BenchReport, CliError> {
    let cfg = load_config(config_path)?;
    let report = bench_config(&cfg, opts)?;
    let csv = bench_csv(&report)?;
    match out {
        Some(p) => std::fs::write(p, csv)?,
        None => print!("{csv}"),
    }
    Ok(report)
}
