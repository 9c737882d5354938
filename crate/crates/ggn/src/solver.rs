//! Forward/backward passes, LQR and DDP roll-outs, the adjoint gradient,
//! regularization schedules and the outer ILQR / IDDP / GD loops.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::cost::{self, CostError, StageCost};
use crate::dynamics::{DynError, Dynamic};
use crate::linalg::{stack, symmetrize, unstack};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("non-finite state at t = {t}")]
    Divergence { t: usize },
    #[error("regularization too small: νI + BᵀJB not positive definite at t = {t}")]
    RegularizationTooSmall { t: usize },
    #[error("line search failed after {doublings} doublings")]
    LineSearchFailure { doublings: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("missing constants: {0}")]
    MissingConstants(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Dyn(#[from] DynError),
}

/// Control sequence `u = (u_0; …; u_{τ−1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Command {
    pub controls: Vec<DVector<f64>>,
}

impl Command {
    pub fn zeros(horizon: usize, n_u: usize) -> Self {
        Command {
            controls: vec![DVector::zeros(n_u); horizon],
        }
    }

    pub fn from_stacked(v: &DVector<f64>, horizon: usize, n_u: usize) -> Self {
        assert_eq!(v.len(), horizon * n_u, "stacked command has the wrong length");
        Command {
            controls: unstack(v, horizon, n_u),
        }
    }

    pub fn stacked(&self) -> DVector<f64> {
        stack(&self.controls)
    }

    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    pub fn norm(&self) -> f64 {
        self.controls.iter().map(|c| c.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Command) -> f64 {
        self.controls.iter().zip(&other.controls).map(|(a, b)| a.dot(b)).sum()
    }

    pub fn plus(&self, other: &Command) -> Command {
        Command {
            controls: self.controls.iter().zip(&other.controls).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Command {
        Command {
            controls: self.controls.iter().map(|c| c * s).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.controls.iter().all(|c| c.iter().all(|x| x.is_finite()))
    }
}

/// `x̄_0` and the rolled states `x_1, …, x_τ` (`states[i]` is `x_{i+1}`).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x0: DVector<f64>,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    /// `x_t` for `t ∈ 0..=τ`.
    pub fn state(&self, t: usize) -> &DVector<f64> {
        if t == 0 {
            &self.x0
        } else {
            &self.states[t - 1]
        }
    }
}

/// Linearized dynamics and quadratic cost expansion along a trajectory.
/// `a[t], b[t]` for `t ∈ 0..τ`; `hess[t−1], grad[t−1]` hold `P_t, p_t` for `t ∈ 1..=τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinQuadModel {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub hess: Vec<DMatrix<f64>>,
    pub grad: Vec<DVector<f64>>,
}

impl LinQuadModel {
    pub fn horizon(&self) -> usize {
        self.a.len()
    }
    pub fn state_dim(&self) -> usize {
        self.a[0].nrows()
    }
    pub fn control_dim(&self) -> usize {
        self.b[0].ncols()
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let tau = self.a.len();
        if tau == 0 {
            return Err(SolverError::Dimension("empty model".into()));
        }
        if self.b.len() != tau || self.hess.len() != tau || self.grad.len() != tau {
            return Err(SolverError::Dimension("per-step sequences differ in length".into()));
        }
        let (n, m) = (self.state_dim(), self.control_dim());
        for t in 0..tau {
            if self.a[t].shape() != (n, n) || self.b[t].shape() != (n, m) {
                return Err(SolverError::Dimension(format!("dynamics block at t = {t}")));
            }
            if self.hess[t].shape() != (n, n) || self.grad[t].len() != n {
                return Err(SolverError::Dimension(format!("cost block at t = {}", t + 1)));
            }
        }
        Ok(())
    }

    /// `‖∇h(g(u))‖`.
    pub fn cost_grad_norm(&self) -> f64 {
        self.grad.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt()
    }

    /// Same model with every `p_t` multiplied by `eps`.
    pub fn with_scaled_gradient(&self, eps: f64) -> LinQuadModel {
        LinQuadModel {
            grad: self.grad.iter().map(|g| g * eps).collect(),
            ..self.clone()
        }
    }
}

/// Affine policies `v_t = K_t y_t + k_t` and the quadratic cost-to-go
/// `c_t(y) = ½ yᵀJ_t y + j_tᵀ y + const_t` for `t ∈ 0..=τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySequence {
    pub gains: Vec<DMatrix<f64>>,
    pub offsets: Vec<DVector<f64>>,
    pub value_hess: Vec<DMatrix<f64>>,
    pub value_grad: Vec<DVector<f64>>,
    pub value_const: Vec<f64>,
}

impl PolicySequence {
    /// Optimal value of the LQR subproblem, equal to `½∇J(u)ᵀv`.
    pub fn const0(&self) -> f64 {
        self.value_const[0]
    }

    pub fn cost_to_go(&self, t: usize, y: &DVector<f64>) -> f64 {
        0.5 * y.dot(&(&self.value_hess[t] * y)) + self.value_grad[t].dot(y) + self.value_const[t]
    }
}

/// Rolls the dynamic from `x0`; states only.
pub fn rollout_states(dynamic: &dyn Dynamic, x0: &DVector<f64>, u: &Command) -> Result<Trajectory, SolverError> {
    check_problem_dims(dynamic, x0, u)?;
    let mut states = Vec::with_capacity(u.horizon());
    let mut x = x0.clone();
    for (t, ut) in u.controls.iter().enumerate() {
        x = dynamic.eval(&x, ut);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(SolverError::Divergence { t: t + 1 });
        }
        states.push(x.clone());
    }
    Ok(Trajectory { x0: x0.clone(), states })
}

fn check_problem_dims(dynamic: &dyn Dynamic, x0: &DVector<f64>, u: &Command) -> Result<(), SolverError> {
    if x0.len() != dynamic.state_dim() {
        return Err(SolverError::Dimension(format!(
            "x0 has length {}, dynamic expects {}",
            x0.len(),
            dynamic.state_dim()
        )));
    }
    if u.horizon() == 0 {
        return Err(SolverError::Dimension("command is empty".into()));
    }
    if let Some((t, c)) = u
        .controls
        .iter()
        .enumerate()
        .find(|(_, c)| c.len() != dynamic.control_dim())
    {
        return Err(SolverError::Dimension(format!(
            "u_{t} has length {}, dynamic expects {}",
            c.len(),
            dynamic.control_dim()
        )));
    }
    Ok(())
}

/// `J(u) = h(g(u))`.
pub fn objective(
    dynamic: &dyn Dynamic,
    cost: &dyn StageCost,
    x0: &DVector<f64>,
    u: &Command,
) -> Result<f64, SolverError> {
    let traj = rollout_states(dynamic, x0, u)?;
    Ok(cost::total_cost(cost, &traj.states)?)
}

/// Rolls the dynamic, evaluates the objective and instantiates the LQR model.
pub fn forward_pass(
    dynamic: &dyn Dynamic,
    cost: &dyn StageCost,
    x0: &DVector<f64>,
    u: &Command,
) -> Result<(Trajectory, f64, LinQuadModel), SolverError> {
    let traj = rollout_states(dynamic, x0, u)?;
    let value = cost::total_cost(cost, &traj.states)?;
    let tau = u.horizon();
    let mut a = Vec::with_capacity(tau);
    let mut b = Vec::with_capacity(tau);
    for (t, ut) in u.controls.iter().enumerate() {
        let (at, bt) = dynamic.jacobians(traj.state(t), ut);
        a.push(at);
        b.push(bt);
    }
    let hess = (1..=tau).map(|t| cost.hess(t, traj.state(t))).collect();
    let grad = (1..=tau).map(|t| cost.grad(t, traj.state(t))).collect();
    Ok((traj, value, LinQuadModel { a, b, hess, grad }))
}

/// Riccati-style recursion from `J_τ = P_τ, j_τ = p_τ` down to `t = 0`.
pub fn backward_pass(model: &LinQuadModel, nu: f64) -> Result<PolicySequence, SolverError> {
    model.validate()?;
    if !(nu >= 0.0 && nu.is_finite()) {
        return Err(SolverError::InvalidConfig(format!(
            "regularization {nu} must be finite and nonnegative"
        )));
    }
    let tau = model.horizon();
    let (n, m) = (model.state_dim(), model.control_dim());

    let mut gains = vec![DMatrix::zeros(m, n); tau];
    let mut offsets = vec![DVector::zeros(m); tau];
    let mut value_hess = vec![DMatrix::zeros(n, n); tau + 1];
    let mut value_grad = vec![DVector::zeros(n); tau + 1];
    let mut value_const = vec![0.0; tau + 1];
    value_hess[tau] = model.hess[tau - 1].clone();
    symmetrize(&mut value_hess[tau]);
    value_grad[tau] = model.grad[tau - 1].clone();

    for t in (0..tau).rev() {
        let (a, b) = (&model.a[t], &model.b[t]);
        let jn = &value_hess[t + 1];
        let jv = &value_grad[t + 1];

        let jb = jn * b;
        let mut gram = b.transpose() * &jb;
        for i in 0..m {
            gram[(i, i)] += nu;
        }
        symmetrize(&mut gram);
        let chol = gram.cholesky().ok_or(SolverError::RegularizationTooSmall { t })?;

        let bja = jb.transpose() * a; // BᵀJA
        let bj = b.transpose() * jv; // Bᵀj
        let k_gain = -chol.solve(&bja);
        let k_off = -chol.solve(&bj);

        let (mut jt, mut jvt) = if t >= 1 {
            (model.hess[t - 1].clone(), model.grad[t - 1].clone())
        } else {
            (DMatrix::zeros(n, n), DVector::zeros(n))
        };
        jt += a.transpose() * (jn * a) + bja.transpose() * &k_gain;
        jvt += a.transpose() * jv + bja.transpose() * &k_off;
        symmetrize(&mut jt);

        value_const[t] = value_const[t + 1] + 0.5 * bj.dot(&k_off);
        value_hess[t] = jt;
        value_grad[t] = jvt;
        gains[t] = k_gain;
        offsets[t] = k_off;
    }
    Ok(PolicySequence {
        gains,
        offsets,
        value_hess,
        value_grad,
        value_const,
    })
}

/// Applies the policies along the linearized dynamics from `y_0 = 0`.
pub fn rollout_lqr(policies: &PolicySequence, model: &LinQuadModel) -> Command {
    let n = model.state_dim();
    let mut y = DVector::zeros(n);
    let mut controls = Vec::with_capacity(model.horizon());
    for t in 0..model.horizon() {
        let v = &policies.gains[t] * &y + &policies.offsets[t];
        y = &model.a[t] * &y + &model.b[t] * &v;
        controls.push(v);
    }
    Command { controls }
}

/// Applies the policies along the exact dynamics:
/// `y_{t+1} = f(x_t + y_t, u_t + v_t) − f(x_t, u_t)`.
pub fn rollout_ddp(
    policies: &PolicySequence,
    dynamic: &dyn Dynamic,
    nominal: &Trajectory,
    u: &Command,
) -> Result<Command, SolverError> {
    let mut y = DVector::zeros(dynamic.state_dim());
    let mut controls = Vec::with_capacity(u.horizon());
    for t in 0..u.horizon() {
        let v = &policies.gains[t] * &y + &policies.offsets[t];
        let next = dynamic.eval(&(nominal.state(t) + &y), &(&u.controls[t] + &v));
        y = next - &nominal.states[t];
        if !(y.iter().all(|x| x.is_finite()) && v.iter().all(|x| x.is_finite())) {
            return Err(SolverError::Divergence { t: t + 1 });
        }
        controls.push(v);
    }
    Ok(Command { controls })
}

/// `∇J(u)` from a model by the adjoint sweep
/// `λ_τ = p_τ, λ_t = A_tᵀλ_{t+1} + p_t`, `∇_{u_t}J = B_tᵀλ_{t+1}`.
pub fn model_gradient(model: &LinQuadModel) -> Command {
    let tau = model.horizon();
    let mut controls = vec![DVector::zeros(model.control_dim()); tau];
    let mut lambda = model.grad[tau - 1].clone();
    for t in (0..tau).rev() {
        controls[t] = model.b[t].transpose() * &lambda;
        if t >= 1 {
            lambda = model.a[t].transpose() * &lambda + &model.grad[t - 1];
        }
    }
    Command { controls }
}

/// Stacked `∇J(u)`.
pub fn objective_gradient(
    dynamic: &dyn Dynamic,
    cost: &dyn StageCost,
    x0: &DVector<f64>,
    u: &Command,
) -> Result<DVector<f64>, SolverError> {
    let (_, _, model) = forward_pass(dynamic, cost, x0, u)?;
    Ok(model_gradient(&model).stacked())
}

/// Trajectory-level constants consumed by the regularization schedules.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleConstants {
    /// Lipschitz bound of `g`
    pub l_g: f64,
    /// Lipschitz bound of `∇g`
    pub big_l_g: f64,
    /// surjectivity modulus of `g`
    pub sigma_g: f64,
    pub mu_h: f64,
    pub l_h: f64,
    pub m_h: f64,
    /// DDP proximity constant, when estimated
    pub eta: Option<f64>,
}

/// A regularization value and whether it came from a degenerate branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularization {
    pub nu: f64,
    pub flagged: bool,
}

/// `ν = (a₁ + √(a₁² + 4a₂))/2` with `a₁ = L_g x`, `a₂ = a₀ l_g x`,
/// `a₀ = M_h l_g³/3 + L_g L_h l_g`, `x = ‖∇h(g(u))‖`.
pub fn schedule_theorem3(grad_norm: f64, c: &ScheduleConstants) -> Regularization {
    let a0 = c.m_h * c.l_g.powi(3) / 3.0 + c.big_l_g * c.l_h * c.l_g;
    let a1 = c.big_l_g * grad_norm;
    let a2 = a0 * c.l_g * grad_norm;
    let nu = 0.5 * (a1 + (a1 * a1 + 4.0 * a2).sqrt());
    Regularization {
        nu,
        flagged: nu == 0.0 && grad_norm > 0.0,
    }
}

/// `ν = L_g x + 2 l_g² (M_h l_g²/3 + L_g L_h) x / (L_g x + σ_g l_g μ_h)`.
pub fn schedule_theorem5(grad_norm: f64, c: &ScheduleConstants) -> Result<f64, SolverError> {
    if !(c.mu_h > 0.0) {
        return Err(SolverError::MissingConstants(
            "strong convexity modulus must be positive",
        ));
    }
    if !(c.sigma_g > 0.0) {
        return Err(SolverError::MissingConstants(
            "trajectory surjectivity modulus must be positive",
        ));
    }
    if grad_norm == 0.0 {
        return Ok(0.0);
    }
    let x = grad_norm;
    let num = 2.0 * c.l_g * c.l_g * (c.m_h * c.l_g * c.l_g / 3.0 + c.big_l_g * c.l_h) * x;
    let den = c.big_l_g * x + c.sigma_g * c.l_g * c.mu_h;
    Ok(c.big_l_g * x + num / den)
}

/// `ν = L_g β x + ρ_h σ_g² θ_g² χ² x²`, evaluated in a form where every
/// `1/L_g` cancels so that `L_g = 0` stays finite (then flagged when `η > 0`).
pub fn schedule_theorem6(grad_norm: f64, c: &ScheduleConstants) -> Result<Regularization, SolverError> {
    if !(c.mu_h > 0.0 && c.sigma_g > 0.0) {
        return Err(SolverError::MissingConstants(
            "the IDDP schedule needs positive mu_h and sigma_g",
        ));
    }
    let eta = c
        .eta
        .ok_or(SolverError::MissingConstants("the IDDP schedule needs an eta estimate"))?;
    let x = grad_norm;
    let rho_h = c.l_h / c.mu_h;
    let rho_g = c.l_g / c.sigma_g;
    let theta_h = c.m_h / (2.0 * c.mu_h.powf(1.5));
    let sq = c.sigma_g * c.sigma_g * c.mu_h.sqrt();
    // L_g·β
    let lg_beta = (1.0 + rho_h * rho_g) * (c.big_l_g + 2.0 * c.l_g * eta) + 2.0 / 3.0 * rho_g.powi(3) * theta_h * sq;
    // θ_g·χ
    let theta_chi = c.l_g * eta / sq;
    Ok(Regularization {
        nu: lg_beta * x + rho_h * c.sigma_g * c.sigma_g * theta_chi * theta_chi * x * x,
        flagged: c.big_l_g == 0.0 && eta > 0.0,
    })
}

/// `ν = ν̄·‖∇h(g(u))‖`.
pub fn schedule_linesearch(grad_norm: f64, nu_bar: f64) -> f64 {
    nu_bar * grad_norm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Ilqr,
    Iddp,
    Gd,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Ilqr => "ilqr",
            Algorithm::Iddp => "iddp",
            Algorithm::Gd => "gd",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Theorem3,
    Theorem5,
    Theorem6,
    LineSearch {
        nu_bar0: f64,
        growth_factor: f64,
        /// halve ν̄ once after each accepted step, never below `nu_bar0`
        halving: bool,
    },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::LineSearch {
            nu_bar0: 1e-3,
            growth_factor: 2.0,
            halving: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stopping {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub gap_tol: Option<f64>,
}

impl Default for Stopping {
    fn default() -> Self {
        Stopping {
            max_iters: 500,
            grad_tol: 1e-9,
            gap_tol: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub schedule: Schedule,
    pub constants: Option<ScheduleConstants>,
    pub stopping: Stopping,
    /// acceptance slack relative to `max(1, |J|)`, absorbs rounding in `J`
    pub decrease_tol: f64,
    pub max_doublings: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            algorithm: Algorithm::Ilqr,
            schedule: Schedule::default(),
            constants: None,
            stopping: Stopping::default(),
            decrease_tol: 1e-12,
            max_doublings: 60,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if let Schedule::LineSearch {
            nu_bar0, growth_factor, ..
        } = self.schedule
        {
            if !(growth_factor > 1.0) {
                return Err(SolverError::InvalidConfig("growth_factor must exceed 1".into()));
            }
            if !(nu_bar0 > 0.0 && nu_bar0.is_finite()) {
                return Err(SolverError::InvalidConfig("nu_bar0 must be positive".into()));
            }
        }
        if !(self.stopping.grad_tol >= 0.0) || self.stopping.gap_tol.is_some_and(|g| !(g > 0.0)) {
            return Err(SolverError::InvalidConfig("tolerances must be positive".into()));
        }
        let needs_constants = !matches!(self.schedule, Schedule::LineSearch { .. }) || self.algorithm == Algorithm::Gd;
        if needs_constants && self.constants.is_none() {
            return Err(SolverError::MissingConstants(
                "schedule or algorithm requires trajectory constants",
            ));
        }
        Ok(())
    }
}

/// Dynamic, cost, initial state and (when known) the optimal value `J*`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub dynamic: Arc<dyn Dynamic>,
    pub cost: Arc<dyn StageCost>,
    pub x0: DVector<f64>,
    pub optimal_value: Option<f64>,
}

impl Problem {
    pub fn new(dynamic: Arc<dyn Dynamic>, cost: Arc<dyn StageCost>, x0: DVector<f64>) -> Result<Self, SolverError> {
        if x0.len() != dynamic.state_dim() || cost.state_dim() != dynamic.state_dim() {
            return Err(SolverError::Dimension("x0, dynamic and cost disagree on n_x".into()));
        }
        if cost.horizon() == 0 {
            return Err(SolverError::Dimension("horizon must be at least 1".into()));
        }
        Ok(Problem {
            dynamic,
            cost,
            x0,
            optimal_value: None,
        })
    }

    pub fn with_optimal_value(mut self, v: Option<f64>) -> Self {
        self.optimal_value = v;
        self
    }

    pub fn horizon(&self) -> usize {
        self.cost.horizon()
    }

    pub fn zero_command(&self) -> Command {
        Command::zeros(self.horizon(), self.dynamic.control_dim())
    }

    pub fn objective(&self, u: &Command) -> Result<f64, SolverError> {
        objective(self.dynamic.as_ref(), self.cost.as_ref(), &self.x0, u)
    }

    pub fn forward_pass(&self, u: &Command) -> Result<(Trajectory, f64, LinQuadModel), SolverError> {
        forward_pass(self.dynamic.as_ref(), self.cost.as_ref(), &self.x0, u)
    }
}

/// One regularized Gauss-Newton direction at `u` with fixed `ν`.
pub fn oracle_step(problem: &Problem, u: &Command, nu: f64) -> Result<Command, SolverError> {
    let (_, _, model) = problem.forward_pass(u)?;
    let policies = backward_pass(&model, nu)?;
    Ok(rollout_lqr(&policies, &model))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    pub gap: Option<f64>,
    pub grad_obj_norm: f64,
    pub grad_cost_norm: f64,
    pub newton_decrement: Option<f64>,
    /// regularization of the step taken from this iterate
    pub nu: Option<f64>,
    pub step_norm: Option<f64>,
    /// `½∇Jᵀv` for ILQR/IDDP, `−(η/2)‖∇J‖²` for GD
    pub expected_decrease: Option<f64>,
    /// value of the unregularized model `q∘ℓ(v)` at the ILQR step
    pub model_value: Option<f64>,
    /// `J(u) + expected − J(u + step)`; nonnegative up to the acceptance tolerance
    pub decrease_slack: Option<f64>,
    pub accepted: bool,
    /// candidate steps evaluated, including the accepted one
    pub trials: usize,
    /// the schedule hit a degenerate branch
    pub flagged: bool,
    pub time_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    GradTol,
    GapTol,
    MaxIters,
}

impl SolveStatus {
    pub fn converged(&self) -> bool {
        !matches!(self, SolveStatus::MaxIters)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub records: Vec<IterationRecord>,
    pub status: SolveStatus,
    pub final_command: Command,
}

/// Failure inside the outer loop, with the iterations completed so far.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("iteration {iteration}: {error}")]
pub struct SolveFailure {
    pub iteration: usize,
    pub error: SolverError,
    pub records: Vec<IterationRecord>,
}

struct Candidate {
    step: Command,
    nu: Option<f64>,
    expected: f64,
    model_value: Option<f64>,
    next_value: f64,
    trials: usize,
    flagged: bool,
}

/// Runs ILQR, IDDP or GD from `init` until a stopping rule fires.
pub fn solve(problem: &Problem, config: &SolverConfig, init: &Command) -> Result<ConvergenceTrace, SolveFailure> {
    let fail = |iteration: usize, error: SolverError, records: &[IterationRecord]| SolveFailure {
        iteration,
        error,
        records: records.to_vec(),
    };
    config.validate().map_err(|e| fail(0, e, &[]))?;
    if init.horizon() != problem.horizon() {
        return Err(fail(0, SolverError::Dimension("initial command horizon".into()), &[]));
    }

    let start = Instant::now();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut u = init.clone();
    let mut nu_bar = match config.schedule {
        Schedule::LineSearch { nu_bar0, .. } => nu_bar0,
        _ => 0.0,
    };
    let mut gd_step = config
        .constants
        .as_ref()
        .map(|c| 1.0 / (c.l_h * c.l_g * c.l_g))
        .unwrap_or(0.0);

    for k in 0.. {
        let (traj, value, model) = problem.forward_pass(&u).map_err(|e| fail(k, e, &records))?;
        let grad = model_gradient(&model);
        let grad_obj_norm = grad.norm();
        let grad_cost_norm = model.cost_grad_norm();
        let gap = problem.optimal_value.map(|j| value - j);
        let mut rec = IterationRecord {
            iter: k,
            objective: value,
            gap,
            grad_obj_norm,
            grad_cost_norm,
            newton_decrement: cost::newton_decrement(problem.cost.as_ref(), &traj.states).ok(),
            nu: None,
            step_norm: None,
            expected_decrease: None,
            model_value: None,
            decrease_slack: None,
            accepted: false,
            trials: 0,
            flagged: false,
            time_ms: 0.0,
        };

        let status = if grad_obj_norm <= config.stopping.grad_tol {
            Some(SolveStatus::GradTol)
        } else if matches!((gap, config.stopping.gap_tol), (Some(g), Some(tol)) if g <= tol) {
            Some(SolveStatus::GapTol)
        } else if k >= config.stopping.max_iters {
            Some(SolveStatus::MaxIters)
        } else {
            None
        };
        if let Some(status) = status {
            rec.time_ms = start.elapsed().as_secs_f64() * 1e3;
            records.push(rec);
            return Ok(ConvergenceTrace {
                records,
                status,
                final_command: u,
            });
        }

        let cand = match config.algorithm {
            Algorithm::Gd => gd_candidate(problem, config, &u, value, &grad, &mut gd_step),
            _ => gn_candidate(problem, config, &u, value, &traj, &model, &mut nu_bar),
        }
        .map_err(|e| fail(k, e, &records))?;

        rec.nu = cand.nu;
        rec.step_norm = Some(cand.step.norm());
        rec.expected_decrease = Some(cand.expected);
        rec.model_value = cand.model_value;
        rec.decrease_slack = Some(value + cand.expected - cand.next_value);
        rec.accepted = true;
        rec.trials = cand.trials;
        rec.flagged = cand.flagged;
        rec.time_ms = start.elapsed().as_secs_f64() * 1e3;
        records.push(rec);
        u = u.plus(&cand.step);
    }
    unreachable!()
}

fn accepts(config: &SolverConfig, value: f64, expected: f64, next: f64) -> bool {
    next.is_finite() && next <= value + expected + config.decrease_tol * value.abs().max(1.0)
}

/// ILQR / IDDP step with the configured schedule. Theorem schedules are
/// safeguarded: if the condition fails (e.g. sampled constants are
/// optimistic) `ν` is doubled within the iteration.
fn gn_candidate(
    problem: &Problem,
    config: &SolverConfig,
    u: &Command,
    value: f64,
    traj: &Trajectory,
    model: &LinQuadModel,
    nu_bar: &mut f64,
) -> Result<Candidate, SolverError> {
    let x = model.cost_grad_norm();
    let (mut nu, flagged) = match (&config.schedule, config.constants.as_ref()) {
        (Schedule::LineSearch { .. }, _) => (schedule_linesearch(x, *nu_bar), false),
        (Schedule::Theorem3, Some(c)) => {
            let r = schedule_theorem3(x, c);
            (r.nu, r.flagged)
        }
        (Schedule::Theorem5, Some(c)) => (schedule_theorem5(x, c)?, false),
        (Schedule::Theorem6, Some(c)) => {
            let r = schedule_theorem6(x, c)?;
            (r.nu, r.flagged)
        }
        _ => return Err(SolverError::MissingConstants("schedule requires trajectory constants")),
    };
    let growth = match config.schedule {
        Schedule::LineSearch { growth_factor, .. } => growth_factor,
        _ => 2.0,
    };

    for trial in 0..=config.max_doublings {
        let attempt = backward_pass(model, nu).and_then(|pol| {
            let expected = pol.const0();
            let step = match config.algorithm {
                Algorithm::Iddp => rollout_ddp(&pol, problem.dynamic.as_ref(), traj, u)?,
                _ => rollout_lqr(&pol, model),
            };
            Ok((pol, expected, step))
        });
        if let Ok((_, expected, step)) = attempt {
            let next_value = problem.objective(&u.plus(&step)).unwrap_or(f64::INFINITY);
            if accepts(config, value, expected, next_value) {
                if let Schedule::LineSearch {
                    nu_bar0, halving: true, ..
                } = config.schedule
                {
                    *nu_bar = (*nu_bar / 2.0).max(nu_bar0);
                }
                let model_value =
                    (config.algorithm == Algorithm::Ilqr).then(|| expected - 0.5 * nu * step.norm().powi(2));
                return Ok(Candidate {
                    step,
                    nu: Some(nu),
                    expected,
                    model_value,
                    next_value,
                    trials: trial + 1,
                    flagged,
                });
            }
        }
        if nu == 0.0 {
            nu = 1e-12 * (1.0 + x);
        } else {
            nu *= growth;
        }
        if matches!(config.schedule, Schedule::LineSearch { .. }) {
            *nu_bar *= growth;
        }
    }
    Err(SolverError::LineSearchFailure {
        doublings: config.max_doublings,
    })
}

/// Gradient step `−η∇J` with `η = 1/(L_h l_g²)`, halved until
/// `J(u − η∇J) ≤ J(u) − (η/2)‖∇J‖²`.
fn gd_candidate(
    problem: &Problem,
    config: &SolverConfig,
    u: &Command,
    value: f64,
    grad: &Command,
    step_size: &mut f64,
) -> Result<Candidate, SolverError> {
    if !(*step_size > 0.0 && step_size.is_finite()) {
        return Err(SolverError::MissingConstants(
            "gradient descent needs positive L_h and l_g",
        ));
    }
    let g2 = grad.norm().powi(2);
    for trial in 0..=config.max_doublings {
        let step = grad.scaled(-*step_size);
        let expected = -0.5 * *step_size * g2;
        let next_value = problem.objective(&u.plus(&step)).unwrap_or(f64::INFINITY);
        if accepts(config, value, expected, next_value) {
            return Ok(Candidate {
                step,
                nu: None,
                expected,
                model_value: None,
                next_value,
                trials: trial + 1,
                flagged: false,
            });
        }
        *step_size *= 0.5;
    }
    Err(SolverError::LineSearchFailure {
        doublings: config.max_doublings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::QuadraticTracking;
    use crate::dynamics::LinearDynamic;

    fn scalar_model() -> LinQuadModel {
        let one = DMatrix::from_element(1, 1, 1.0);
        LinQuadModel {
            a: vec![one.clone()],
            b: vec![one.clone()],
            hess: vec![one],
            grad: vec![DVector::from_element(1, 1.0)],
        }
    }

    #[test]
    fn scalar_backward_pass_by_hand() {
        let pol = backward_pass(&scalar_model(), 1.0).unwrap();
        assert!((pol.gains[0][(0, 0)] + 0.5).abs() < 1e-15);
        assert!((pol.offsets[0][0] + 0.5).abs() < 1e-15);
        // there is no stage cost at t = 0, so J₀ = 0 + 1 − 1·½·1
        assert!((pol.value_hess[0][(0, 0)] - 0.5).abs() < 1e-15);
        assert!((pol.const0() + 0.25).abs() < 1e-15);
        let v = rollout_lqr(&pol, &scalar_model());
        assert!((v.controls[0][0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_linear_terms_give_zero_offsets() {
        let mut m = scalar_model();
        m.grad[0][0] = 0.0;
        let pol = backward_pass(&m, 1.0).unwrap();
        assert_eq!(pol.offsets[0][0], 0.0);
        assert_eq!(pol.const0(), 0.0);
        assert_eq!(rollout_lqr(&pol, &m).norm(), 0.0);
    }

    #[test]
    fn indefinite_regularized_gram_reports_step() {
        let mut m = scalar_model();
        m.hess[0][(0, 0)] = -2.0;
        assert_eq!(
            backward_pass(&m, 1.0),
            Err(SolverError::RegularizationTooSmall { t: 0 })
        );
    }

    #[test]
    fn scalar_forward_pass_and_gradient() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let dynamic = LinearDynamic::new(one.clone(), one).unwrap();
        let cost = QuadraticTracking::isotropic(DVector::zeros(1), 1.0, 1).unwrap();
        let u = Command {
            controls: vec![DVector::from_element(1, 1.0)],
        };
        let (traj, value, model) = forward_pass(&dynamic, &cost, &DVector::zeros(1), &u).unwrap();
        assert_eq!(traj.states[0][0], 1.0);
        assert_eq!(value, 0.5);
        assert_eq!(model, scalar_model());
        let g = objective_gradient(&dynamic, &cost, &DVector::zeros(1), &u).unwrap();
        assert_eq!(g[0], 1.0);
    }

    #[derive(Debug)]
    struct ZeroDynamic;
    impl Dynamic for ZeroDynamic {
        fn state_dim(&self) -> usize {
            2
        }
        fn control_dim(&self) -> usize {
            1
        }
        fn eval(&self, _: &DVector<f64>, _: &DVector<f64>) -> DVector<f64> {
            DVector::zeros(2)
        }
        fn jacobians(&self, _: &DVector<f64>, _: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
            (DMatrix::zeros(2, 2), DMatrix::zeros(2, 1))
        }
    }

    #[test]
    fn zero_dynamic_objective_sums_costs_at_origin() {
        let cost = QuadraticTracking::isotropic(DVector::from_vec(vec![1.0, 1.0]), 2.0, 3).unwrap();
        let u = Command::zeros(3, 1);
        let (traj, value, _) = forward_pass(&ZeroDynamic, &cost, &DVector::from_vec(vec![4.0, 4.0]), &u).unwrap();
        assert!(traj.states.iter().all(|x| x.norm() == 0.0));
        assert_eq!(value, 3.0 * 2.0);
    }

    #[test]
    fn schedule_spot_values() {
        let c = ScheduleConstants {
            l_g: 1.0,
            big_l_g: 1.0,
            sigma_g: 1.0,
            mu_h: 1.0,
            l_h: 1.0,
            m_h: 0.0,
            eta: Some(0.0),
        };
        assert_eq!(schedule_theorem5(1.0, &c).unwrap(), 2.0);
        assert_eq!(schedule_theorem5(0.0, &c).unwrap(), 0.0);
        assert_eq!(schedule_theorem3(0.0, &c).nu, 0.0);
        assert_eq!(schedule_theorem6(0.0, &c).unwrap().nu, 0.0);
        assert_eq!(schedule_linesearch(0.0, 5.0), 0.0);
    }

    #[test]
    fn theorem3_closed_form() {
        // L_g = 2, x = 1 and a₀ l_g = 3 give ν = (2 + 4)/2
        let c = ScheduleConstants {
            l_g: 1.0,
            big_l_g: 2.0,
            sigma_g: 1.0,
            mu_h: 1.0,
            l_h: 1.5,
            m_h: 0.0,
            eta: None,
        };
        let r = schedule_theorem3(1.0, &c);
        assert!((r.nu - 3.0).abs() < 1e-15);
        assert!(!r.flagged);
        let zero = ScheduleConstants { big_l_g: 0.0, ..c };
        assert!(schedule_theorem3(1.0, &zero).flagged);
    }

    #[test]
    fn theorem5_without_curvature_of_g() {
        let c = ScheduleConstants {
            l_g: 2.0,
            big_l_g: 0.0,
            sigma_g: 0.5,
            mu_h: 3.0,
            l_h: 4.0,
            m_h: 1.5,
            eta: None,
        };
        let expected = 2.0 * 4.0 * (1.5 * 4.0 / 3.0) * 0.7 / (0.5 * 2.0 * 3.0);
        assert!((schedule_theorem5(0.7, &c).unwrap() - expected).abs() < 1e-14);
        assert!(schedule_theorem5(0.7, &ScheduleConstants { mu_h: 0.0, ..c.clone() }).is_err());
        assert!(schedule_theorem5(0.7, &ScheduleConstants { sigma_g: 0.0, ..c }).is_err());
    }

    #[test]
    fn theorem6_unit_condition_numbers() {
        // ρ_h = ρ_g = θ_h = θ_g = χ = 1
        let c = ScheduleConstants {
            l_g: 1.0,
            big_l_g: 1.0,
            sigma_g: 1.0,
            mu_h: 1.0,
            l_h: 1.0,
            m_h: 2.0,
            eta: Some(1.0),
        };
        let r = schedule_theorem6(1.0, &c).unwrap();
        assert!((r.nu - (20.0 / 3.0 + 1.0)).abs() < 1e-14);
        // η = 0 leaves L_g β₀ x with β₀ = (1 + ρ_hρ_g) + ρ_g³ 2θ_h/(3θ_g)
        let r0 = schedule_theorem6(
            1.0,
            &ScheduleConstants {
                eta: Some(0.0),
                ..c.clone()
            },
        )
        .unwrap();
        assert!((r0.nu - (2.0 + 2.0 / 3.0)).abs() < 1e-14);
        let flat = schedule_theorem6(1.0, &ScheduleConstants { big_l_g: 0.0, ..c }).unwrap();
        assert!(flat.flagged && flat.nu.is_finite());
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig {
            schedule: Schedule::LineSearch {
                nu_bar0: 1e-3,
                growth_factor: 1.0,
                halving: true,
            },
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.schedule = Schedule::Theorem5;
        assert!(matches!(cfg.validate(), Err(SolverError::MissingConstants(_))));
    }
}
