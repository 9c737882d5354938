//! Stage costs `h_t`, totals over a trajectory, the Newton decrement and the
//! gradient-dominance aggregation of per-stage moduli.
//!
//! Stages are indexed `t = 1..=τ`; there is no cost on `x_0` or on controls.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::linalg::stack;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("trajectory has {got} states, cost horizon is {expected}")]
    Horizon { expected: usize, got: usize },
    #[error("state {t} has dimension {got}, expected {expected}")]
    Dimension { t: usize, expected: usize, got: usize },
    #[error("Hessian block at t = {t} is not positive definite (min eigenvalue {min_eig:e})")]
    NotPositiveDefinite { t: usize, min_eig: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Smoothness and dominance parameters of a cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CostConstants {
    /// strong convexity modulus of each stage, `0` when merely convex
    pub mu_h_t: Vec<f64>,
    pub l_h: f64,
    pub m_h: f64,
    /// dominance exponent in `[1/2, 1)`
    pub r: f64,
    /// dominance modulus of the total cost
    pub mu: f64,
}

impl CostConstants {
    /// Strong convexity modulus of the total cost.
    pub fn mu_h(&self) -> f64 {
        self.mu_h_t.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub trait StageCost: Send + Sync + fmt::Debug {
    fn state_dim(&self) -> usize;
    fn horizon(&self) -> usize;
    /// `h_t(x)` for `t ∈ 1..=τ`.
    fn eval(&self, t: usize, x: &DVector<f64>) -> f64;
    fn grad(&self, t: usize, x: &DVector<f64>) -> DVector<f64>;
    fn hess(&self, t: usize, x: &DVector<f64>) -> DMatrix<f64>;
    /// `min_x h_t(x)` when known.
    fn stage_minimum(&self, _t: usize) -> Option<f64> {
        None
    }
    fn is_convex(&self) -> bool {
        true
    }
    fn constants(&self) -> CostConstants;

    /// `h* = Σ_t min h_t` when every stage minimum is known.
    fn min_value(&self) -> Option<f64> {
        (1..=self.horizon()).map(|t| self.stage_minimum(t)).sum()
    }
}

fn check_states(cost: &dyn StageCost, states: &[DVector<f64>]) -> Result<(), CostError> {
    if states.len() != cost.horizon() {
        return Err(CostError::Horizon {
            expected: cost.horizon(),
            got: states.len(),
        });
    }
    for (i, x) in states.iter().enumerate() {
        if x.len() != cost.state_dim() {
            return Err(CostError::Dimension {
                t: i + 1,
                expected: cost.state_dim(),
                got: x.len(),
            });
        }
    }
    Ok(())
}

/// `h(x) = Σ_{t=1}^{τ} h_t(x_t)`; `states[i]` is `x_{i+1}`.
pub fn total_cost(cost: &dyn StageCost, states: &[DVector<f64>]) -> Result<f64, CostError> {
    check_states(cost, states)?;
    Ok(states.iter().enumerate().map(|(i, x)| cost.eval(i + 1, x)).sum())
}

/// Stacked gradient and the `τ` Hessian blocks.
pub fn total_grad_hess(
    cost: &dyn StageCost,
    states: &[DVector<f64>],
) -> Result<(DVector<f64>, Vec<DMatrix<f64>>), CostError> {
    check_states(cost, states)?;
    let grads: Vec<_> = states.iter().enumerate().map(|(i, x)| cost.grad(i + 1, x)).collect();
    let hess = states.iter().enumerate().map(|(i, x)| cost.hess(i + 1, x)).collect();
    Ok((stack(&grads), hess))
}

/// Smallest eigenvalue accepted as positive definite.
pub const PD_THRESHOLD: f64 = 1e-12;

/// `λ_h(x) = √(Σ_t ∇h_tᵀ (∇²h_t)⁻¹ ∇h_t)`, block by block.
pub fn newton_decrement(cost: &dyn StageCost, states: &[DVector<f64>]) -> Result<f64, CostError> {
    check_states(cost, states)?;
    let mut acc = 0.0;
    for (i, x) in states.iter().enumerate() {
        let t = i + 1;
        let g = cost.grad(t, x);
        let h = cost.hess(t, x);
        acc += decrement_block(&h, &g).map_err(|min_eig| CostError::NotPositiveDefinite { t, min_eig })?;
    }
    Ok(acc.sqrt())
}

/// `gᵀ H⁻¹ g`, or the offending smallest eigenvalue.
pub(crate) fn decrement_block(h: &DMatrix<f64>, g: &DVector<f64>) -> Result<f64, f64> {
    let min_eig = SymmetricEigen::new(h.clone()).eigenvalues.min();
    if !(min_eig > PD_THRESHOLD) {
        return Err(min_eig);
    }
    let chol = h.clone().cholesky().ok_or(min_eig)?;
    Ok(g.dot(&chol.solve(g)))
}

/// Dominance modulus of `h = Σ h_t` from per-stage moduli: the minimum for
/// `r = 1/2`, otherwise `(Σ μ_t^{-q})^{-1/q}` with `q = 2r/(2r−1)`.
pub fn mu_total(mu_t: &[f64], r: f64) -> Result<f64, CostError> {
    if !(0.5..1.0).contains(&r) {
        return Err(CostError::InvalidArgument(format!(
            "dominance exponent {r} outside [1/2, 1)"
        )));
    }
    if mu_t.is_empty() || mu_t.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
        return Err(CostError::InvalidArgument("moduli must be positive and finite".into()));
    }
    if r == 0.5 {
        return Ok(mu_t.iter().copied().fold(f64::INFINITY, f64::min));
    }
    let q = 2.0 * r / (2.0 * r - 1.0);
    // factor out the smallest modulus so large q cannot overflow
    let m0 = mu_t.iter().copied().fold(f64::INFINITY, f64::min);
    let s: f64 = mu_t.iter().map(|&m| (m0 / m).powf(q)).sum();
    Ok(m0 * s.powf(-1.0 / q))
}

fn symmetric_extremes(w: &DMatrix<f64>) -> (f64, f64) {
    let e = SymmetricEigen::new(w.clone()).eigenvalues;
    (e.min(), e.max())
}

/// `h_t(x) = ½ (x − r_t)ᵀ W_t (x − r_t)` with `W_t` symmetric positive definite.
#[derive(Debug, Clone)]
pub struct QuadraticTracking {
    targets: Vec<DVector<f64>>,
    weights: Vec<DMatrix<f64>>,
}

impl QuadraticTracking {
    pub fn new(targets: Vec<DVector<f64>>, weights: Vec<DMatrix<f64>>) -> Result<Self, CostError> {
        if targets.is_empty() || targets.len() != weights.len() {
            return Err(CostError::InvalidArgument(
                "need one target and one weight per stage".into(),
            ));
        }
        let n = targets[0].len();
        for (i, (r, w)) in targets.iter().zip(&weights).enumerate() {
            if r.len() != n || w.nrows() != n || w.ncols() != n {
                return Err(CostError::Dimension {
                    t: i + 1,
                    expected: n,
                    got: r.len().max(w.nrows()),
                });
            }
            if (w - w.transpose()).amax() > 1e-12 {
                return Err(CostError::InvalidArgument(format!(
                    "weight at t = {} is not symmetric",
                    i + 1
                )));
            }
            let (lo, _) = symmetric_extremes(w);
            if lo < 0.0 {
                return Err(CostError::InvalidArgument(format!(
                    "weight at t = {} is not PSD",
                    i + 1
                )));
            }
        }
        Ok(QuadraticTracking { targets, weights })
    }

    /// Same diagonal weight and target at every stage.
    pub fn diagonal(target: DVector<f64>, diag: &[f64], horizon: usize) -> Result<Self, CostError> {
        if diag.len() != target.len() {
            return Err(CostError::InvalidArgument("weights and target lengths differ".into()));
        }
        let w = DMatrix::from_diagonal(&DVector::from_column_slice(diag));
        Self::new(vec![target; horizon], vec![w; horizon])
    }

    /// `h_t(x) = (μ/2)‖x − target‖²`.
    pub fn isotropic(target: DVector<f64>, mu: f64, horizon: usize) -> Result<Self, CostError> {
        if !(mu > 0.0) {
            return Err(CostError::InvalidArgument("mu must be positive".into()));
        }
        let n = target.len();
        Self::new(vec![target; horizon], vec![DMatrix::identity(n, n) * mu; horizon])
    }

    pub fn target(&self, t: usize) -> &DVector<f64> {
        &self.targets[t - 1]
    }
}

impl StageCost for QuadraticTracking {
    fn state_dim(&self) -> usize {
        self.targets[0].len()
    }
    fn horizon(&self) -> usize {
        self.targets.len()
    }
    fn eval(&self, t: usize, x: &DVector<f64>) -> f64 {
        let d = x - &self.targets[t - 1];
        0.5 * d.dot(&(&self.weights[t - 1] * &d))
    }
    fn grad(&self, t: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.weights[t - 1] * (x - &self.targets[t - 1])
    }
    fn hess(&self, t: usize, _x: &DVector<f64>) -> DMatrix<f64> {
        self.weights[t - 1].clone()
    }
    fn stage_minimum(&self, _t: usize) -> Option<f64> {
        Some(0.0)
    }
    fn constants(&self) -> CostConstants {
        let ext: Vec<_> = self.weights.iter().map(symmetric_extremes).collect();
        let mu_h_t: Vec<f64> = ext.iter().map(|e| e.0.max(0.0)).collect();
        let l_h = ext.iter().map(|e| e.1).fold(0.0, f64::max);
        let mu = mu_h_t.iter().copied().fold(f64::INFINITY, f64::min);
        CostConstants {
            mu_h_t,
            l_h,
            m_h: 0.0,
            r: 0.5,
            mu,
        }
    }
}

/// Largest value of `|d/ds sech²(s)|`, reached at `tanh s = 1/√3`.
pub const SECH2_SLOPE: f64 = 0.769_800_358_919_501_4;

/// Quadratic plus a smooth convex perturbation:
/// `h_t(x) = (μ/2)‖d‖² + c Σ_i w² log cosh(d_i / w)` with `d = x − r_t`.
///
/// The Hessian `μI + c·diag(sech²(d/w))` has spectrum in `[μ, μ + c]` and is
/// Lipschitz with constant `c·SECH2_SLOPE/w`, so `(μ, L, M)` are realized exactly.
#[derive(Debug, Clone)]
pub struct SmoothPerturbed {
    mu: f64,
    curvature: f64,
    width: f64,
    targets: Vec<DVector<f64>>,
}

impl SmoothPerturbed {
    /// Builds the cost with strong convexity `mu`, gradient Lipschitz `l_h`
    /// and Hessian Lipschitz `m_h`.
    pub fn new(mu: f64, l_h: f64, m_h: f64, targets: Vec<DVector<f64>>) -> Result<Self, CostError> {
        if !(mu > 0.0 && l_h >= mu && l_h.is_finite()) {
            return Err(CostError::InvalidArgument("need 0 < mu <= L".into()));
        }
        if targets.is_empty() {
            return Err(CostError::InvalidArgument("need at least one stage".into()));
        }
        let curvature = l_h - mu;
        let width = if curvature == 0.0 {
            1.0
        } else if m_h > 0.0 && m_h.is_finite() {
            curvature * SECH2_SLOPE / m_h
        } else {
            return Err(CostError::InvalidArgument("M must be positive when L > mu".into()));
        };
        let n = targets[0].len();
        if targets.iter().any(|r| r.len() != n) {
            return Err(CostError::InvalidArgument("targets have different lengths".into()));
        }
        Ok(SmoothPerturbed {
            mu,
            curvature,
            width,
            targets,
        })
    }
}

fn log_cosh(s: f64) -> f64 {
    let a = s.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl StageCost for SmoothPerturbed {
    fn state_dim(&self) -> usize {
        self.targets[0].len()
    }
    fn horizon(&self) -> usize {
        self.targets.len()
    }
    fn eval(&self, t: usize, x: &DVector<f64>) -> f64 {
        let d = x - &self.targets[t - 1];
        let w = self.width;
        0.5 * self.mu * d.norm_squared() + self.curvature * w * w * d.iter().map(|&di| log_cosh(di / w)).sum::<f64>()
    }
    fn grad(&self, t: usize, x: &DVector<f64>) -> DVector<f64> {
        let d = x - &self.targets[t - 1];
        let w = self.width;
        d.map(|di| self.mu * di + self.curvature * w * (di / w).tanh())
    }
    fn hess(&self, t: usize, x: &DVector<f64>) -> DMatrix<f64> {
        let d = x - &self.targets[t - 1];
        let w = self.width;
        let diag = d.map(|di| {
            let c = (di / w).cosh();
            self.mu + self.curvature / (c * c)
        });
        DMatrix::from_diagonal(&diag)
    }
    fn stage_minimum(&self, _t: usize) -> Option<f64> {
        Some(0.0)
    }
    fn constants(&self) -> CostConstants {
        CostConstants {
            mu_h_t: vec![self.mu; self.targets.len()],
            l_h: self.mu + self.curvature,
            m_h: if self.curvature == 0.0 {
                0.0
            } else {
                self.curvature * SECH2_SLOPE / self.width
            },
            r: 0.5,
            mu: self.mu,
        }
    }
}
