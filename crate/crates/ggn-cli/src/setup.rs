//! Turns a validated config into a problem, its constants and a solver configuration.

use nalgebra::DVector;
use serde::Serialize;

use ggn::analysis::{
    condition_numbers, estimate_eta, schedule_constants, trajectory_constants, ConditionNumbers, TrajectoryConstants,
};
use ggn::cost::CostConstants;
use ggn::dynamics::{sample_constants, DynamicConstants, Provenance, SamplingBox};
use ggn::solver::{Algorithm, Command, Problem, ScheduleConstants, SolverConfig, Stopping};

use crate::config::{build_cost, build_dynamic, sampling_box, ConstantsMode, ExperimentConfig};
use crate::error::CliError;

/// Regularizations and gradient scalings used to estimate the DDP proximity constant.
pub const ETA_NUS: [f64; 5] = [1e-3, 1e-1, 1.0, 10.0, 1e3];
pub const ETA_SCALINGS: [f64; 7] = [1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625];
/// Offset of the second probe command, away from points where curvature may vanish.
const ETA_PROBE_OFFSET: f64 = 0.1;

#[derive(Debug, Clone, Serialize)]
pub struct EtaReport {
    pub value: f64,
    /// "configured" or "empirical"
    pub provenance: &'static str,
}

#[derive(Debug, Clone)]
pub struct Setup {
    pub problem: Problem,
    pub init: Command,
    pub dynamic_constants: DynamicConstants,
    pub cost_constants: CostConstants,
    pub trajectory: TrajectoryConstants,
    /// absent when the cost is not strongly convex or `σ_g = 0`
    pub condition: Option<ConditionNumbers>,
    pub schedule_constants: ScheduleConstants,
    pub eta: Option<EtaReport>,
    pub solver: SolverConfig,
    pub region: Option<SamplingBox>,
}

pub fn build_setup(cfg: &ExperimentConfig) -> Result<Setup, CliError> {
    let p = &cfg.problem;
    let dynamic = build_dynamic(&p.dynamic)?;
    let cost = build_cost(&p.cost, p.horizon)?;
    let (n_x, n_u) = (dynamic.state_dim(), dynamic.control_dim());

    let (dc, region) = match &cfg.constants_mode {
        ConstantsMode::Analytic => {
            let dc = dynamic.analytic_constants().ok_or_else(|| {
                CliError::config(
                    "/constants_mode",
                    "this dynamic has no analytic constants; use sampled mode",
                )
            })?;
            (dc, None)
        }
        ConstantsMode::Sampled { region, n_samples } => {
            let b = sampling_box(region, n_x, n_u)?;
            let dc = sample_constants(dynamic.as_ref(), &b, *n_samples, cfg.seed)
                .map_err(|e| CliError::config("/constants_mode", e.to_string()))?;
            (dc, Some(b))
        }
    };
    let cc = cost.constants();
    let tc = trajectory_constants(&dc, p.horizon).map_err(|e| CliError::config("/problem/horizon", e.to_string()))?;
    let cn = condition_numbers(&tc, &cc).ok();

    // With surjective per-step dynamics every stage minimum is reachable.
    let optimal_value = p
        .optimal_value
        .or_else(|| (n_u >= n_x && dc.sigma_f > 0.0).then(|| cost.min_value()).flatten());
    let problem = Problem::new(dynamic, cost, DVector::from_column_slice(&p.x0))
        .map_err(|e| CliError::config("/problem", e.to_string()))?
        .with_optimal_value(optimal_value);
    let init = match &p.init {
        Some(rows) => Command {
            controls: rows.iter().map(|r| DVector::from_column_slice(r)).collect(),
        },
        None => problem.zero_command(),
    };

    let eta = match cfg.solver.eta {
        Some(v) => Some(EtaReport {
            value: v,
            provenance: "configured",
        }),
        None => empirical_eta(&problem, &init).map(|value| EtaReport {
            value,
            provenance: "empirical",
        }),
    };
    let sc = schedule_constants(&tc, &cc, eta.as_ref().map(|e| e.value));

    let s = &cfg.solver;
    let solver = SolverConfig {
        algorithm: Algorithm::from(s.algorithm),
        schedule: s.schedule.to_schedule(),
        constants: Some(sc.clone()),
        stopping: Stopping {
            max_iters: s.max_iters,
            grad_tol: s.grad_tol,
            gap_tol: s.gap_tol,
        },
        decrease_tol: s.decrease_tol,
        max_doublings: s.max_doublings,
    };
    solver
        .validate()
        .map_err(|e| CliError::config("/solver", e.to_string()))?;

    Ok(Setup {
        problem,
        init,
        dynamic_constants: dc,
        cost_constants: cc,
        trajectory: tc,
        condition: cn,
        schedule_constants: sc,
        eta,
        solver,
        region,
    })
}

/// Largest DDP/LQR proximity ratio at the initial command and at a shifted copy.
fn empirical_eta(problem: &Problem, init: &Command) -> Option<f64> {
    let shifted = Command {
        controls: init.controls.iter().map(|c| c.add_scalar(ETA_PROBE_OFFSET)).collect(),
    };
    [init, &shifted]
        .iter()
        .filter_map(|u| estimate_eta(problem, u, &ETA_NUS, &ETA_SCALINGS).ok())
        .map(|e| e.eta)
        .reduce(f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct DynamicConstantsReport {
    pub sigma_f: f64,
    pub l_f_x: f64,
    pub l_f_u: f64,
    pub l_f_xx: f64,
    pub l_f_uu: f64,
    pub l_f_xu: f64,
    pub provenance: &'static str,
    pub n_samples: Option<usize>,
    pub seed: Option<u64>,
}

impl From<&DynamicConstants> for DynamicConstantsReport {
    fn from(d: &DynamicConstants) -> Self {
        let (n_samples, seed) = match &d.provenance {
            Provenance::Analytic => (None, None),
            Provenance::Sampled { n_samples, seed, .. } => (Some(*n_samples), Some(*seed)),
        };
        DynamicConstantsReport {
            sigma_f: d.sigma_f,
            l_f_x: d.l_f_x,
            l_f_u: d.l_f_u,
            l_f_xx: d.l_f_xx,
            l_f_uu: d.l_f_uu,
            l_f_xu: d.l_f_xu,
            provenance: d.provenance.label(),
            n_samples,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantsReport {
    pub dynamic: DynamicConstantsReport,
    pub trajectory: TrajectoryReport,
    pub cost: CostReport,
    pub condition: Option<ConditionReport>,
    pub eta: Option<EtaReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryReport {
    pub s: f64,
    pub sigma_g: f64,
    pub l_g: f64,
    pub big_l_g: f64,
    /// derived from the dynamic constants
    pub provenance: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    pub mu_h: f64,
    pub l_h: f64,
    pub m_h: f64,
    pub r: f64,
    pub mu: f64,
    pub provenance: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub rho_h: f64,
    pub rho_g: f64,
    pub theta_h: f64,
    pub theta_g: f64,
    pub alpha: f64,
    pub alpha_flagged: bool,
    pub vartheta_h: f64,
    pub vartheta_g: f64,
    pub varrho: f64,
    pub sigma: f64,
    pub provenance: &'static str,
}

impl Setup {
    pub fn constants_report(&self) -> ConstantsReport {
        let derived = self.dynamic_constants.provenance.label();
        let cc = &self.cost_constants;
        ConstantsReport {
            dynamic: DynamicConstantsReport::from(&self.dynamic_constants),
            trajectory: TrajectoryReport {
                s: self.trajectory.s,
                sigma_g: self.trajectory.sigma_g,
                l_g: self.trajectory.l_g,
                big_l_g: self.trajectory.big_l_g,
                provenance: derived,
            },
            cost: CostReport {
                mu_h: cc.mu_h(),
                l_h: cc.l_h,
                m_h: cc.m_h,
                r: cc.r,
                mu: cc.mu,
                provenance: "analytic",
            },
            condition: self.condition.as_ref().map(|c| ConditionReport {
                rho_h: c.rho_h,
                rho_g: c.rho_g,
                theta_h: c.theta_h,
                theta_g: c.theta_g,
                alpha: c.alpha,
                alpha_flagged: c.alpha_flagged,
                vartheta_h: c.vartheta_h,
                vartheta_g: c.vartheta_g,
                varrho: c.varrho,
                sigma: c.sigma,
                provenance: derived,
            }),
            eta: self.eta.clone(),
        }
    }
}
