//! `run`: solve one configured problem, write the trace CSV and the report JSON.

use std::path::Path;

use serde::Serialize;

use ggn::analysis::{
    iteration_bound, label_phases, quadratic_radius, theorem5_nu_bar, theorem6_factors, BoundExtras, Phase,
    PhaseLabeledTrace, Theorem,
};
use ggn::solver::{solve, Algorithm, ConvergenceTrace, IterationRecord, Schedule, SolveStatus};

use crate::config::{load_config, ExperimentConfig};
use crate::error::CliError;
use crate::setup::{build_setup, ConstantsReport, Setup};

pub const ARTIFACT_VERSION: &str = concat!("ggn-cli ", env!("CARGO_PKG_VERSION"));
pub const TRACE_SCHEMA: &str = "ggn-trace/1";
pub const TRACE_COLUMNS: [&str; 12] = [
    "iter",
    "objective",
    "gap",
    "grad_obj_norm",
    "grad_cost_norm",
    "newton_decrement",
    "nu",
    "step_norm",
    "expected_decrease",
    "accepted",
    "phase",
    "time_ms",
];
/// Gap target for the bound-versus-observed comparison.
pub const BOUND_EPSILON: f64 = 1e-6;

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_MAX_ITERS: i32 = 2;

#[derive(Debug, Clone, Serialize)]
pub struct PhaseSegment {
    pub phase: &'static str,
    pub first_iter: usize,
    pub last_iter: usize,
    pub rate: Option<f64>,
    pub order: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseSummary {
    pub lambda_bar: f64,
    pub nu_bar: f64,
    /// "theorem5" when the schedule's own bound is used, "observed" for max ν_k/λ_k
    pub nu_bar_source: &'static str,
    pub gap_threshold: f64,
    pub decrement_only: bool,
    pub segments: Vec<PhaseSegment>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub theorem: &'static str,
    pub epsilon: f64,
    pub delta0: f64,
    pub certified: f64,
    pub delta_bar: Option<f64>,
    /// double-logarithmic tail, an estimate rather than a certified count
    pub tail_estimate: Option<f64>,
    pub predicted: f64,
    pub observed_iterations: Option<usize>,
    pub consistent: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub iteration: usize,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub artifact_version: &'static str,
    pub trace_schema: &'static str,
    pub algorithm: &'static str,
    pub status: &'static str,
    pub exit_code: i32,
    pub error: Option<ErrorReport>,
    pub iterations: usize,
    pub final_objective: Option<f64>,
    pub final_grad_norm: Option<f64>,
    pub final_gap: Option<f64>,
    pub wall_time_ms: f64,
    pub phases: Option<PhaseSummary>,
    pub constants: ConstantsReport,
    pub bound: Option<BoundReport>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub setup: Setup,
    pub records: Vec<IterationRecord>,
    pub trace: Option<ConvergenceTrace>,
    pub phases: Option<PhaseLabeledTrace>,
    pub report: RunReport,
    pub trace_csv: String,
    pub exit_code: i32,
}

/// Non-finite values become `None` so the report holds finite numbers or nulls only.
fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::GradTol => "grad_tol",
        SolveStatus::GapTol => "gap_tol",
        SolveStatus::MaxIters => "max_iters",
    }
}

pub fn run_config(cfg: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    let setup = build_setup(cfg)?;
    let started = std::time::Instant::now();
    let result = solve(&setup.problem, &setup.solver, &setup.init);
    let wall_time_ms = started.elapsed().as_secs_f64() * 1e3;

    let (records, trace, error) = match result {
        Ok(t) => (t.records.clone(), Some(t), None),
        Err(f) => (
            f.records,
            None,
            Some(ErrorReport {
                iteration: f.iteration,
                message: f.error.to_string(),
            }),
        ),
    };
    let (status, exit_code) = match (&trace, &error) {
        (Some(t), _) if t.status.converged() => (status_name(t.status), EXIT_CONVERGED),
        (Some(t), _) => (status_name(t.status), EXIT_MAX_ITERS),
        _ => ("solver_error", 3),
    };

    let phases = phase_labels(&setup, &records);
    let bound = bound_report(&setup, &records);
    let last = records.last();
    let report = RunReport {
        artifact_version: ARTIFACT_VERSION,
        trace_schema: TRACE_SCHEMA,
        algorithm: setup.solver.algorithm.name(),
        status,
        exit_code,
        error,
        iterations: records.len().saturating_sub(1),
        final_objective: last.and_then(|r| finite(r.objective)),
        final_grad_norm: last.and_then(|r| finite(r.grad_obj_norm)),
        final_gap: last.and_then(|r| r.gap).and_then(finite),
        wall_time_ms,
        phases: phases.as_ref().map(|(p, nu_bar, src)| PhaseSummary {
            lambda_bar: p.lambda_bar,
            nu_bar: *nu_bar,
            nu_bar_source: src,
            gap_threshold: p.gap_threshold,
            decrement_only: p.decrement_only,
            segments: p
                .stats
                .iter()
                .map(|s| PhaseSegment {
                    phase: s.phase.name(),
                    first_iter: s.first_iter,
                    last_iter: s.last_iter,
                    rate: s.rate.and_then(finite),
                    order: s.order.and_then(finite),
                })
                .collect(),
        }),
        constants: setup.constants_report(),
        bound,
        config: cfg.clone(),
    };
    let phases = phases.map(|(p, _, _)| p);
    let trace_csv = trace_csv(
        &records,
        phases.as_ref().map(|p| p.phases.as_slice()),
        cfg.output.timing,
    )?;
    Ok(RunOutcome {
        setup,
        records,
        trace,
        phases,
        report,
        trace_csv,
        exit_code,
    })
}

fn phase_labels(setup: &Setup, records: &[IterationRecord]) -> Option<(PhaseLabeledTrace, f64, &'static str)> {
    let cn = setup.condition.as_ref()?;
    let (nu_bar, source) = match setup.solver.schedule {
        Schedule::Theorem5 => (theorem5_nu_bar(&setup.schedule_constants), "theorem5"),
        _ => {
            let observed = records
                .iter()
                .filter_map(|r| match (r.nu, r.newton_decrement) {
                    (Some(nu), Some(l)) if l > 0.0 => Some(nu / l),
                    _ => None,
                })
                .fold(0.0, f64::max);
            (observed, "observed")
        }
    };
    let trace = ConvergenceTrace {
        records: records.to_vec(),
        status: SolveStatus::MaxIters,
        final_command: setup.init.clone(),
    };
    Some((label_phases(&trace, cn, nu_bar), nu_bar, source))
}

fn bound_report(setup: &Setup, records: &[IterationRecord]) -> Option<BoundReport> {
    let cn = setup.condition.as_ref()?;
    let delta0 = records.first()?.gap?;
    let cc = &setup.cost_constants;
    let strongly_convex = cc.r == 0.5 && cc.mu_h() > 0.0 && setup.problem.cost.is_convex();
    let (theorem, name) = match setup.solver.algorithm {
        Algorithm::Gd => return None,
        Algorithm::Ilqr if strongly_convex => (Theorem::T5, "T5"),
        Algorithm::Iddp if strongly_convex => {
            let (theta_beta, theta_chi) = theorem6_factors(cn, &setup.schedule_constants);
            (Theorem::T6 { theta_beta, theta_chi }, "T6")
        }
        Algorithm::Iddp => return None,
        Algorithm::Ilqr if cc.r == 0.5 => (Theorem::T3Half, "T3"),
        Algorithm::Ilqr => (Theorem::T3General { r: cc.r }, "T3_general"),
    };
    let observed = records.iter().position(|r| r.gap.is_some_and(|g| g <= BOUND_EPSILON));
    if delta0 <= BOUND_EPSILON {
        return Some(BoundReport {
            theorem: name,
            epsilon: BOUND_EPSILON,
            delta0,
            certified: 0.0,
            delta_bar: None,
            tail_estimate: None,
            predicted: 0.0,
            observed_iterations: observed,
            consistent: observed.map(|o| o == 0),
        });
    }
    let lambda_bar = quadratic_radius(cn, theorem5_nu_bar(&setup.schedule_constants));
    let extras = BoundExtras {
        lambda_bar: Some(lambda_bar),
        // near the optimum the gap is about λ²/2
        precision: Some((2.0 * BOUND_EPSILON).sqrt()),
    };
    let b = iteration_bound(theorem, delta0, BOUND_EPSILON, cn, &extras).ok()?;
    let predicted = b.total();
    Some(BoundReport {
        theorem: name,
        epsilon: BOUND_EPSILON,
        delta0,
        certified: b.certified,
        delta_bar: b.delta_bar.and_then(finite),
        tail_estimate: b.tail_estimate,
        predicted,
        observed_iterations: observed,
        consistent: observed.map(|o| o as f64 <= predicted),
    })
}

/// Shortest round-trip form in scientific notation.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Trace CSV in the fixed column order of [`TRACE_COLUMNS`].
pub fn trace_csv(records: &[IterationRecord], phases: Option<&[Phase]>, timing: bool) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_COLUMNS)?;
    for (i, r) in records.iter().enumerate() {
        w.write_record([
            r.iter.to_string(),
            num(r.objective),
            opt(r.gap),
            num(r.grad_obj_norm),
            num(r.grad_cost_norm),
            opt(r.newton_decrement),
            opt(r.nu),
            opt(r.step_norm),
            opt(r.expected_decrease),
            u8::from(r.accepted).to_string(),
            phases
                .and_then(|p| p.get(i))
                .map(|p| p.name())
                .unwrap_or("")
                .to_string(),
            if timing { num(r.time_ms) } else { String::new() },
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

/// Runs a config file; explicit paths override the config's output section.
pub fn run_path(
    config_path: &Path,
    trace_path: Option<&Path>,
    report_path: Option<&Path>,
) -> Result<RunOutcome, CliError> {
    let cfg = load_config(config_path)?;
    let outcome = run_config(&cfg)?;
    let trace_target = trace_path
        .map(Path::to_path_buf)
        .or(cfg.output.trace_path.as_ref().map(Into::into));
    let report_target = report_path
        .map(Path::to_path_buf)
        .or(cfg.output.report_path.as_ref().map(Into::into));
    if let Some(p) = trace_target {
        std::fs::write(p, &outcome.trace_csv)?;
    }
    if let Some(p) = report_target {
        let json = serde_json::to_string_pretty(&outcome.report).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(p, json + "\n")?;
    }
    Ok(outcome)
}
