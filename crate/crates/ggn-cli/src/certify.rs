//! `certify`: feedback-linearization checks for chain systems and the
//! numeric check of the whole-trajectory surjectivity bound.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use ggn::dense_ref::{dense_jacobian, sigma_min_traj, Assembly};
use ggn::dynamics::SamplingBox;
use ggn::feedlin::{brunovsky_transform, chain_certificate, multirate_sigma_min_samples, verify_brunovsky};
use ggn::solver::Command;

use crate::config::{chain_of, load_config, ExperimentConfig};
use crate::error::CliError;
use crate::setup::build_setup;

pub const SIMILARITY_TOL: f64 = 1e-12;
pub const DEVIATION_TOL: f64 = 1e-9;
pub const SHIFT_TOL: f64 = 1e-10;
pub const TRAJECTORY_SLACK: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct CertifyOptions {
    pub commands: usize,
    pub points: usize,
    pub steps: usize,
    pub n_samples: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            commands: 20,
            points: 100,
            steps: 50,
            n_samples: 500,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BrunovskyCheck {
    pub similarity_residual: f64,
    pub max_deviation: f64,
    pub canonical_shift_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SurjectivityCheck {
    pub steps: usize,
    pub bound: f64,
    pub sigma_a: f64,
    pub l_a: f64,
    pub sigma_b: f64,
    pub l_b_y: f64,
    pub measured_min: f64,
    pub points: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryCheck {
    pub sigma_f: f64,
    pub l_f_x: f64,
    pub provenance: &'static str,
    pub lower_bound: f64,
    pub measured_min: f64,
    pub commands: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertifyReport {
    pub brunovsky: Option<BrunovskyCheck>,
    pub surjectivity: Option<SurjectivityCheck>,
    pub trajectory: TrajectoryCheck,
    pub pass: bool,
}

impl CertifyReport {
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            3
        }
    }
}

pub fn certify_config(cfg: &ExperimentConfig, opts: &CertifyOptions) -> Result<CertifyReport, CliError> {
    let setup = build_setup(cfg)?;
    let problem = &setup.problem;
    let (n_x, n_u) = (problem.dynamic.state_dim(), problem.dynamic.control_dim());
    let region = setup
        .region
        .clone()
        .unwrap_or_else(|| SamplingBox::cube(n_x, n_u, 1.0, 1.0));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dc = &setup.dynamic_constants;
    let lower_bound = dc.sigma_f / (1.0 + dc.l_f_x);
    let mut measured_min = f64::INFINITY;
    for _ in 0..opts.commands {
        let u = Command {
            controls: (0..problem.horizon())
                .map(|_| region.sample_control(&mut rng))
                .collect(),
        };
        let jac = dense_jacobian(problem.dynamic.as_ref(), &problem.x0, &u, Assembly::ChainRule)
            .map_err(|e| CliError::Numerical(e.to_string()))?;
        measured_min = measured_min.min(sigma_min_traj(&jac));
    }
    let trajectory = TrajectoryCheck {
        sigma_f: dc.sigma_f,
        l_f_x: dc.l_f_x,
        provenance: dc.provenance.label(),
        lower_bound,
        measured_min,
        commands: opts.commands,
        pass: measured_min >= lower_bound - TRAJECTORY_SLACK,
    };

    let (brunovsky, surjectivity) = match chain_of(&cfg.problem.dynamic) {
        None => (None, None),
        Some((chain, _)) => {
            let err = |e: ggn::feedlin::FeedlinError| CliError::Numerical(e.to_string());
            let tr = brunovsky_transform(&chain).map_err(err)?;
            let rep = verify_brunovsky(&tr, &chain, opts.steps, cfg.seed);
            let b = BrunovskyCheck {
                similarity_residual: rep.similarity_residual,
                max_deviation: rep.max_deviation,
                canonical_shift_error: rep.canonical_shift_error,
                pass: rep.similarity_residual <= SIMILARITY_TOL
                    && rep.max_deviation <= DEVIATION_TOL
                    && rep.canonical_shift_error <= SHIFT_TOL,
            };
            // the chain's own box: the state bounds and the first control slice
            let chain_box = SamplingBox {
                state_lo: region.state_lo.clone(),
                state_hi: region.state_hi.clone(),
                control_lo: vec![region.control_lo[0]],
                control_hi: vec![region.control_hi[0]],
            };
            let cert = chain_certificate(&chain, &chain_box, opts.n_samples, cfg.seed).map_err(err)?;
            let k = chain.n_x;
            let measured = multirate_sigma_min_samples(&chain, k, &chain_box, opts.points, cfg.seed.wrapping_add(1));
            let measured_min = measured.iter().copied().fold(f64::INFINITY, f64::min);
            let s = SurjectivityCheck {
                steps: k,
                bound: cert.bound,
                sigma_a: cert.sigma_a,
                l_a: cert.l_a,
                sigma_b: cert.sigma_b,
                l_b_y: cert.l_b_y,
                measured_min,
                points: measured.len(),
                pass: measured_min >= cert.bound,
            };
            (Some(b), Some(s))
        }
    };
    let pass =
        trajectory.pass && brunovsky.as_ref().is_none_or(|b| b.pass) && surjectivity.as_ref().is_none_or(|s| s.pass);
    Ok(CertifyReport {
        brunovsky,
        surjectivity,
        trajectory,
        pass,
    })
}

pub fn certify_path(config_path: &Path, opts: &CertifyOptions, out: Option<&Path>) -> Result<CertifyReport, CliError> {
    let cfg = load_config(config_path)?;
    let report = certify_config(&cfg, opts)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))? + "\n";
    match out {
        Some(p) => std::fs::write(p, json)?,
        None => print!("{json}"),
    }
    Ok(report)
}
