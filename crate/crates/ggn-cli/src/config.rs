//! Experiment configuration: JSON schema, validation and problem assembly.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use ggn::cost::{QuadraticTracking, SmoothPerturbed, StageCost};
use ggn::dynamics::{brunovsky, ChainSystem, Dynamic, LinearDynamic, MultiRate, Pendulum, Psi, SamplingBox};
use ggn::solver::{Algorithm, Schedule, Stopping};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub constants_mode: ConstantsMode,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub dynamic: DynamicSpec,
    pub cost: CostSpec,
    pub x0: Vec<f64>,
    pub horizon: usize,
    /// `J*` when known by other means; otherwise inferred for surjective dynamics
    #[serde(default)]
    pub optimal_value: Option<f64>,
    /// initial command, one row per stage; zeros when absent
    #[serde(default)]
    pub init: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DynamicSpec {
    /// row-major matrices
    Linear {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
    },
    Brunovsky {
        n_x: usize,
    },
    Chain {
        n_x: usize,
        delta: f64,
        psi: PsiSpec,
    },
    Multirate {
        k: usize,
        base: Box<DynamicSpec>,
    },
    Pendulum {
        dt: f64,
        stiffness: f64,
        damping: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PsiSpec {
    Identity,
    Affine {
        gain: f64,
        state_gains: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    TanhMargin {
        margin: f64,
        #[serde(default)]
        state_gains: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSpec {
    /// diagonal weights, same target at every stage
    QuadraticTracking {
        target: Vec<f64>,
        weights: Vec<f64>,
    },
    IsoQuadratic {
        target: Vec<f64>,
        mu: f64,
    },
    SmoothPerturbed {
        target: Vec<f64>,
        mu: f64,
        l_h: f64,
        m_h: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmSpec {
    Ilqr,
    Iddp,
    Gd,
}

impl From<AlgorithmSpec> for Algorithm {
    fn from(a: AlgorithmSpec) -> Self {
        match a {
            AlgorithmSpec::Ilqr => Algorithm::Ilqr,
            AlgorithmSpec::Iddp => Algorithm::Iddp,
            AlgorithmSpec::Gd => Algorithm::Gd,
        }
    }
}

impl AlgorithmSpec {
    pub fn parse(name: &str) -> Option<Self> {
        match name.trim() {
            "ilqr" => Some(AlgorithmSpec::Ilqr),
            "iddp" => Some(AlgorithmSpec::Iddp),
            "gd" => Some(AlgorithmSpec::Gd),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Theorem3,
    Theorem5,
    Theorem6,
    LineSearch {
        #[serde(default = "default_nu_bar0")]
        nu_bar0: f64,
        #[serde(default = "default_growth")]
        growth_factor: f64,
        #[serde(default = "default_true")]
        halving: bool,
    },
}

fn default_nu_bar0() -> f64 {
    1e-3
}
fn default_growth() -> f64 {
    2.0
}
fn default_true() -> bool {
    true
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec::LineSearch {
            nu_bar0: default_nu_bar0(),
            growth_factor: default_growth(),
            halving: true,
        }
    }
}

impl ScheduleSpec {
    pub fn to_schedule(&self) -> Schedule {
        match *self {
            ScheduleSpec::Theorem3 => Schedule::Theorem3,
            ScheduleSpec::Theorem5 => Schedule::Theorem5,
            ScheduleSpec::Theorem6 => Schedule::Theorem6,
            ScheduleSpec::LineSearch {
                nu_bar0,
                growth_factor,
                halving,
            } => Schedule::LineSearch {
                nu_bar0,
                growth_factor,
                halving,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_algorithm")]
    pub algorithm: AlgorithmSpec,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default)]
    pub gap_tol: Option<f64>,
    #[serde(default = "default_decrease_tol")]
    pub decrease_tol: f64,
    #[serde(default = "default_max_doublings")]
    pub max_doublings: usize,
    /// DDP proximity constant; estimated from the problem when absent
    #[serde(default)]
    pub eta: Option<f64>,
}

fn default_algorithm() -> AlgorithmSpec {
    AlgorithmSpec::Ilqr
}
fn default_max_iters() -> usize {
    Stopping::default().max_iters
}
fn default_grad_tol() -> f64 {
    Stopping::default().grad_tol
}
fn default_decrease_tol() -> f64 {
    1e-12
}
fn default_max_doublings() -> usize {
    60
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            algorithm: default_algorithm(),
            schedule: ScheduleSpec::default(),
            max_iters: default_max_iters(),
            grad_tol: default_grad_tol(),
            gap_tol: None,
            decrease_tol: default_decrease_tol(),
            max_doublings: default_max_doublings(),
            eta: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstantsMode {
    #[default]
    Analytic,
    Sampled {
        #[serde(rename = "box")]
        region: BoxSpec,
        #[serde(default = "default_n_samples")]
        n_samples: usize,
    },
}

fn default_n_samples() -> usize {
    200
}

/// Sampling region: a cube given by radii, or explicit bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    #[serde(default)]
    pub state_radius: Option<f64>,
    #[serde(default)]
    pub control_radius: Option<f64>,
    #[serde(default)]
    pub state_lo: Option<Vec<f64>>,
    #[serde(default)]
    pub state_hi: Option<Vec<f64>>,
    #[serde(default)]
    pub control_lo: Option<Vec<f64>>,
    #[serde(default)]
    pub control_hi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub trace_path: Option<String>,
    #[serde(default)]
    pub report_path: Option<String>,
    /// fill the `time_ms` column; off by default so traces are reproducible byte for byte
    #[serde(default)]
    pub timing: bool,
}

/// Parses a config, reporting the JSON pointer of the offending value.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = pointer_from_path(e.path());
        CliError::config(pointer, e.into_inner().to_string())
    })?;
    validate(&cfg)?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config("", format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

fn pointer_from_path(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

fn positive(v: f64, pointer: &str) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(
            pointer,
            format!("expected a positive finite number, got {v}"),
        ))
    }
}

fn finite_all(v: &[f64], pointer: &str) -> Result<(), CliError> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(CliError::config(format!("{pointer}/{i}"), "value must be finite")),
        None => Ok(()),
    }
}

fn dynamic_dims(spec: &DynamicSpec, pointer: &str) -> Result<(usize, usize), CliError> {
    match spec {
        DynamicSpec::Linear { a, b } => {
            let n = a.len();
            if n == 0 {
                return Err(CliError::config(format!("{pointer}/a"), "matrix must be non-empty"));
            }
            if let Some(i) = a.iter().position(|row| row.len() != n) {
                return Err(CliError::config(
                    format!("{pointer}/a/{i}"),
                    format!("expected {n} columns"),
                ));
            }
            if b.len() != n {
                return Err(CliError::config(format!("{pointer}/b"), format!("expected {n} rows")));
            }
            let m = b[0].len();
            if m == 0 {
                return Err(CliError::config(format!("{pointer}/b/0"), "need at least one control"));
            }
            if let Some(i) = b.iter().position(|row| row.len() != m) {
                return Err(CliError::config(
                    format!("{pointer}/b/{i}"),
                    format!("expected {m} columns"),
                ));
            }
            for (i, row) in a.iter().enumerate() {
                finite_all(row, &format!("{pointer}/a/{i}"))?;
            }
            for (i, row) in b.iter().enumerate() {
                finite_all(row, &format!("{pointer}/b/{i}"))?;
            }
            Ok((n, m))
        }
        DynamicSpec::Brunovsky { n_x } => {
            if *n_x == 0 {
                return Err(CliError::config(format!("{pointer}/n_x"), "must be at least 1"));
            }
            Ok((*n_x, 1))
        }
        DynamicSpec::Chain { n_x, delta, psi } => {
            if *n_x == 0 {
                return Err(CliError::config(format!("{pointer}/n_x"), "must be at least 1"));
            }
            positive(*delta, &format!("{pointer}/delta"))?;
            let gains = match psi {
                PsiSpec::Identity => None,
                PsiSpec::Affine {
                    gain,
                    state_gains,
                    offset,
                } => {
                    if !(gain.is_finite() && offset.is_finite()) {
                        return Err(CliError::config(format!("{pointer}/psi"), "values must be finite"));
                    }
                    Some(state_gains)
                }
                PsiSpec::TanhMargin { margin, state_gains } => {
                    if !(margin.is_finite() && *margin > -1.0) {
                        return Err(CliError::config(
                            format!("{pointer}/psi/margin"),
                            "margin must exceed -1",
                        ));
                    }
                    state_gains.as_ref()
                }
            };
            if let Some(g) = gains {
                if g.len() != *n_x {
                    return Err(CliError::config(
                        format!("{pointer}/psi/state_gains"),
                        format!("expected {n_x} entries, got {}", g.len()),
                    ));
                }
                finite_all(g, &format!("{pointer}/psi/state_gains"))?;
            }
            Ok((*n_x, 1))
        }
        DynamicSpec::Multirate { k, base } => {
            if *k == 0 {
                return Err(CliError::config(format!("{pointer}/k"), "must be at least 1"));
            }
            let (n, m) = dynamic_dims(base, &format!("{pointer}/base"))?;
            Ok((n, m * k))
        }
        DynamicSpec::Pendulum { dt, stiffness, damping } => {
            positive(*dt, &format!("{pointer}/dt"))?;
            if !(stiffness.is_finite() && damping.is_finite()) {
                return Err(CliError::config(pointer, "stiffness and damping must be finite"));
            }
            Ok((2, 1))
        }
    }
}

fn validate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let p = &cfg.problem;
    let (n_x, n_u) = dynamic_dims(&p.dynamic, "/problem/dynamic")?;
    if p.horizon == 0 {
        return Err(CliError::config("/problem/horizon", "must be at least 1"));
    }
    if p.x0.len() != n_x {
        return Err(CliError::config(
            "/problem/x0",
            format!("expected {n_x} entries, got {}", p.x0.len()),
        ));
    }
    finite_all(&p.x0, "/problem/x0")?;
    let target_len = match &p.cost {
        CostSpec::QuadraticTracking { target, weights } => {
            if weights.len() != target.len() {
                return Err(CliError::config("/problem/cost/weights", "length must match target"));
            }
            if let Some(i) = weights.iter().position(|w| !(*w >= 0.0 && w.is_finite())) {
                return Err(CliError::config(
                    format!("/problem/cost/weights/{i}"),
                    "weights must be non-negative",
                ));
            }
            target.len()
        }
        CostSpec::IsoQuadratic { target, mu } => {
            positive(*mu, "/problem/cost/mu")?;
            target.len()
        }
        CostSpec::SmoothPerturbed { target, mu, l_h, m_h } => {
            positive(*mu, "/problem/cost/mu")?;
            if !(*l_h >= *mu && l_h.is_finite()) {
                return Err(CliError::config("/problem/cost/l_h", "must be finite and at least mu"));
            }
            if *l_h > *mu {
                positive(*m_h, "/problem/cost/m_h")?;
            }
            target.len()
        }
    };
    if target_len != n_x {
        return Err(CliError::config(
            "/problem/cost/target",
            format!("expected {n_x} entries, got {target_len}"),
        ));
    }
    if let Some(init) = &p.init {
        if init.len() != p.horizon {
            return Err(CliError::config(
                "/problem/init",
                format!("expected {} rows", p.horizon),
            ));
        }
        if let Some(i) = init.iter().position(|row| row.len() != n_u) {
            return Err(CliError::config(
                format!("/problem/init/{i}"),
                format!("expected {n_u} entries"),
            ));
        }
    }
    if let Some(v) = p.optimal_value {
        if !v.is_finite() {
            return Err(CliError::config("/problem/optimal_value", "must be finite"));
        }
    }

    let s = &cfg.solver;
    if !(s.grad_tol >= 0.0) {
        return Err(CliError::config("/solver/grad_tol", "must be non-negative"));
    }
    if let Some(g) = s.gap_tol {
        positive(g, "/solver/gap_tol")?;
    }
    if !(s.decrease_tol >= 0.0) {
        return Err(CliError::config("/solver/decrease_tol", "must be non-negative"));
    }
    if let Some(e) = s.eta {
        if !(e >= 0.0 && e.is_finite()) {
            return Err(CliError::config("/solver/eta", "must be non-negative"));
        }
    }
    if let ScheduleSpec::LineSearch {
        nu_bar0, growth_factor, ..
    } = s.schedule
    {
        positive(nu_bar0, "/solver/schedule/nu_bar0")?;
        if !(growth_factor > 1.0 && growth_factor.is_finite()) {
            return Err(CliError::config("/solver/schedule/growth_factor", "must exceed 1"));
        }
    }

    if let ConstantsMode::Sampled { region, n_samples } = &cfg.constants_mode {
        if *n_samples == 0 {
            return Err(CliError::config("/constants_mode/n_samples", "must be at least 1"));
        }
        sampling_box(region, n_x, n_u)?;
    }
    Ok(())
}

/// Resolves a [`BoxSpec`] against the problem dimensions.
pub fn sampling_box(spec: &BoxSpec, n_x: usize, n_u: usize) -> Result<SamplingBox, CliError> {
    let side = |radius: Option<f64>,
                lo: &Option<Vec<f64>>,
                hi: &Option<Vec<f64>>,
                n: usize,
                name: &str|
     -> Result<(Vec<f64>, Vec<f64>), CliError> {
        match (radius, lo, hi) {
            (Some(r), None, None) => {
                positive(r, &format!("/constants_mode/box/{name}_radius"))?;
                Ok((vec![-r; n], vec![r; n]))
            }
            (None, Some(lo), Some(hi)) => {
                for (v, which) in [(lo, "lo"), (hi, "hi")] {
                    if v.len() != n {
                        return Err(CliError::config(
                            format!("/constants_mode/box/{name}_{which}"),
                            format!("expected {n} entries"),
                        ));
                    }
                    finite_all(v, &format!("/constants_mode/box/{name}_{which}"))?;
                }
                if let Some(i) = (0..n).find(|&i| lo[i] > hi[i]) {
                    return Err(CliError::config(
                        format!("/constants_mode/box/{name}_lo/{i}"),
                        "lower bound exceeds upper",
                    ));
                }
                Ok((lo.clone(), hi.clone()))
            }
            _ => Err(CliError::config(
                "/constants_mode/box",
                format!("give either {name}_radius or both {name}_lo and {name}_hi"),
            )),
        }
    };
    let (state_lo, state_hi) = side(spec.state_radius, &spec.state_lo, &spec.state_hi, n_x, "state")?;
    let (control_lo, control_hi) = side(spec.control_radius, &spec.control_lo, &spec.control_hi, n_u, "control")?;
    Ok(SamplingBox {
        state_lo,
        state_hi,
        control_lo,
        control_hi,
    })
}

fn psi_from(spec: &PsiSpec, n_x: usize) -> Psi {
    match spec {
        PsiSpec::Identity => Psi::Identity,
        PsiSpec::Affine {
            gain,
            state_gains,
            offset,
        } => Psi::Affine {
            gain: *gain,
            state_gains: DVector::from_column_slice(state_gains),
            offset: *offset,
        },
        PsiSpec::TanhMargin { margin, state_gains } => Psi::TanhMargin {
            margin: *margin,
            state_gains: state_gains
                .as_ref()
                .map(|g| DVector::from_column_slice(g))
                .unwrap_or_else(|| DVector::zeros(n_x)),
        },
    }
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let (r, c) = (rows.len(), rows.first().map_or(0, Vec::len));
    DMatrix::from_fn(r, c, |i, j| rows[i][j])
}

/// The chain underneath a chain or multi-rate chain spec, with its rate.
pub fn chain_of(spec: &DynamicSpec) -> Option<(ChainSystem, usize)> {
    match spec {
        DynamicSpec::Chain { n_x, delta, psi } => {
            ChainSystem::new(*n_x, *delta, psi_from(psi, *n_x)).ok().map(|c| (c, 1))
        }
        DynamicSpec::Multirate { k, base } => chain_of(base).map(|(c, j)| (c, j * k)),
        _ => None,
    }
}

pub fn build_dynamic(spec: &DynamicSpec) -> Result<Arc<dyn Dynamic>, CliError> {
    let err = |e: ggn::DynError| CliError::config("/problem/dynamic", e.to_string());
    Ok(match spec {
        DynamicSpec::Linear { a, b } => {
            Arc::new(LinearDynamic::new(rows_to_matrix(a), rows_to_matrix(b)).map_err(err)?)
        }
        DynamicSpec::Brunovsky { n_x } => Arc::new(brunovsky(*n_x).map_err(err)?),
        DynamicSpec::Chain { n_x, delta, psi } => {
            Arc::new(ChainSystem::new(*n_x, *delta, psi_from(psi, *n_x)).map_err(err)?)
        }
        DynamicSpec::Multirate { k, base } => Arc::new(MultiRate::new(build_dynamic(base)?, *k).map_err(err)?),
        DynamicSpec::Pendulum { dt, stiffness, damping } => Arc::new(Pendulum {
            dt: *dt,
            stiffness: *stiffness,
            damping: *damping,
        }),
    })
}

pub fn build_cost(spec: &CostSpec, horizon: usize) -> Result<Arc<dyn StageCost>, CliError> {
    let err = |e: ggn::CostError| CliError::config("/problem/cost", e.to_string());
    Ok(match spec {
        CostSpec::QuadraticTracking { target, weights } => {
            Arc::new(QuadraticTracking::diagonal(DVector::from_column_slice(target), weights, horizon).map_err(err)?)
        }
        CostSpec::IsoQuadratic { target, mu } => {
            Arc::new(QuadraticTracking::isotropic(DVector::from_column_slice(target), *mu, horizon).map_err(err)?)
        }
        CostSpec::SmoothPerturbed { target, mu, l_h, m_h } => Arc::new(
            SmoothPerturbed::new(*mu, *l_h, *m_h, vec![DVector::from_column_slice(target); horizon]).map_err(err)?,
        ),
    })
}
