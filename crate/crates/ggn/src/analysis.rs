//! Trajectory-level constants, condition numbers, iteration-count bounds,
//! the quadratic-convergence radius, policy norm bounds, phase labels and an
//! empirical estimate of the DDP proximity constant.

use thiserror::Error;

use crate::cost::CostConstants;
use crate::dynamics::DynamicConstants;
use crate::solver::{
    backward_pass, rollout_ddp, rollout_lqr, Command, ConvergenceTrace, Problem, ScheduleConstants, SolverError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Constants of the whole-trajectory map `g = f^{[τ]}(x̄_0, ·)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryConstants {
    pub horizon: usize,
    /// `Σ_{t<τ} (l_f^x)^t`
    pub s: f64,
    pub sigma_g: f64,
    pub l_g: f64,
    pub big_l_g: f64,
}

pub fn trajectory_constants(dc: &DynamicConstants, tau: usize) -> Result<TrajectoryConstants, AnalysisError> {
    if tau == 0 {
        return Err(AnalysisError::InvalidArgument("horizon must be at least 1".into()));
    }
    // 0⁰ = 1 by the loop's starting term
    let mut s = 0.0;
    let mut p = 1.0;
    for _ in 0..tau {
        s += p;
        p *= dc.l_f_x;
    }
    let l_g = dc.l_f_u * s;
    let big_l_g = s * (dc.l_f_xx * s * l_g * l_g + 2.0 * dc.l_f_xu * l_g + dc.l_f_uu);
    Ok(TrajectoryConstants {
        horizon: tau,
        s,
        sigma_g: dc.sigma_f / (1.0 + dc.l_f_x),
        l_g,
        big_l_g,
    })
}

/// Condition numbers for dominance exponent `r`, plus the strongly convex
/// estimates `l, L, σ, ϱ, ϑ_g, ϑ_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionNumbers {
    pub r: f64,
    pub rho_h: f64,
    pub rho_g: f64,
    pub theta_h: f64,
    pub theta_g: f64,
    /// `α`, infinite when `θ_g = 0 < θ_h`
    pub alpha: f64,
    /// `α·θ_g`, finite in all cases
    pub alpha_theta_g: f64,
    /// `θ_g = 0` made `α` a limit value
    pub alpha_flagged: bool,
    pub l: f64,
    pub big_l: f64,
    pub sigma: f64,
    pub varrho: f64,
    pub vartheta_g: f64,
    pub vartheta_h: f64,
}

pub fn condition_numbers(tc: &TrajectoryConstants, cc: &CostConstants) -> Result<ConditionNumbers, AnalysisError> {
    let mu_h = cc.mu_h();
    if !(mu_h > 0.0) {
        return Err(AnalysisError::InvalidArgument(
            "strong convexity modulus must be positive".into(),
        ));
    }
    if !(tc.sigma_g > 0.0) {
        return Err(AnalysisError::InvalidArgument("sigma_g must be positive".into()));
    }
    let r = cc.r;
    let mu = if r == 0.5 { mu_h } else { cc.mu };
    let rho_h = cc.l_h / mu.powf(2.0 * r);
    let rho_g = tc.l_g / tc.sigma_g;
    let theta_h = cc.m_h / (2.0 * mu.powf(3.0 * r));
    let theta_g = tc.big_l_g / (tc.sigma_g * tc.sigma_g * mu.powf(r));
    let alpha_theta_g = 4.0 * rho_g * rho_g * (2.0 * rho_g * rho_g * theta_h / 3.0 + rho_h * theta_g);
    let (alpha, alpha_flagged) = if theta_g > 0.0 {
        (alpha_theta_g / theta_g, false)
    } else if theta_h == 0.0 {
        (4.0 * rho_g * rho_g * rho_h, true)
    } else {
        (f64::INFINITY, true)
    };

    let sq_lh = cc.l_h.sqrt();
    let l = sq_lh * tc.l_g;
    let big_l = sq_lh * tc.big_l_g;
    let sigma = mu_h.sqrt() * tc.sigma_g;
    // Hypothesis-2 estimates always use the strongly convex (r = 1/2) scaling
    let theta_h_half = cc.m_h / (2.0 * mu_h.powf(1.5));
    Ok(ConditionNumbers {
        r,
        rho_h,
        rho_g,
        theta_h,
        theta_g,
        alpha,
        alpha_theta_g,
        alpha_flagged,
        l,
        big_l,
        sigma,
        varrho: l / sigma,
        vartheta_g: big_l / (sigma * sigma),
        vartheta_h: theta_h_half,
    })
}

/// Gathers the raw constants a regularization schedule needs.
pub fn schedule_constants(tc: &TrajectoryConstants, cc: &CostConstants, eta: Option<f64>) -> ScheduleConstants {
    ScheduleConstants {
        l_g: tc.l_g,
        big_l_g: tc.big_l_g,
        sigma_g: tc.sigma_g,
        mu_h: cc.mu_h(),
        l_h: cc.l_h,
        m_h: cc.m_h,
        eta,
    }
}

/// `θ_g β` and `θ_g χ` of the IDDP schedule, in forms finite at `L_g = 0`.
pub fn theorem6_factors(cn: &ConditionNumbers, sc: &ScheduleConstants) -> (f64, f64) {
    let eta = sc.eta.unwrap_or(0.0);
    let theta_chi = sc.l_g * eta / (sc.sigma_g * sc.sigma_g * sc.mu_h.sqrt());
    let theta_beta =
        (1.0 + cn.rho_h * cn.rho_g) * (cn.theta_g + 2.0 * theta_chi) + cn.rho_g.powi(3) * 2.0 * cn.theta_h / 3.0;
    (theta_beta, theta_chi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Theorem {
    /// ILQR, gradient dominance with `r = 1/2`
    T3Half,
    /// ILQR, gradient dominance with `r ∈ (1/2, 1)`
    T3General { r: f64 },
    /// ILQR, strongly convex cost
    T5,
    /// IDDP, strongly convex cost; `θ_g β` and `θ_g χ` from [`theorem6_factors`]
    T6 { theta_beta: f64, theta_chi: f64 },
}

/// Inputs for the labeled double-logarithmic tail estimate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundExtras {
    pub lambda_bar: Option<f64>,
    pub precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationBound {
    /// the closed-form bound
    pub certified: f64,
    /// gap threshold of the quadratic phase (T5/T6)
    pub delta_bar: Option<f64>,
    /// `⌈log₂ log₂(λ̄/precision)⌉`, an estimate only
    pub tail_estimate: Option<f64>,
}

impl IterationBound {
    pub fn total(&self) -> f64 {
        self.certified + self.tail_estimate.unwrap_or(0.0)
    }
}

/// `γ(x) = 1 + √(1 + 1/x)`.
pub fn gamma(x: f64) -> f64 {
    1.0 + (1.0 + 1.0 / x).sqrt()
}

/// `2α ln((θ_g a + ρ_g)/(θ_g b + ρ_g))`, continuous at `θ_g = 0`.
fn alpha_log_term(cn: &ConditionNumbers, a: f64, b: f64) -> f64 {
    if cn.theta_g == 0.0 {
        return 2.0 * cn.alpha_theta_g * (a - b) / cn.rho_g;
    }
    let x = cn.theta_g / cn.rho_g;
    2.0 * cn.alpha * ((x * a).ln_1p() - (x * b).ln_1p())
}

/// At least one step: the target lies strictly inside the quadratic region.
/// With `λ̄ = ∞` the model is exact and one step lands on the minimum.
fn tail(extras: &BoundExtras) -> Option<f64> {
    let (lb, p) = (extras.lambda_bar?, extras.precision?);
    if !(p > 0.0) || lb.is_nan() {
        return None;
    }
    if lb.is_infinite() {
        return Some(1.0);
    }
    let ratio = lb / p;
    Some(if ratio > 2.0 {
        ratio.log2().log2().ceil().max(1.0)
    } else {
        1.0
    })
}

pub fn iteration_bound(
    theorem: Theorem,
    delta0: f64,
    epsilon: f64,
    cn: &ConditionNumbers,
    extras: &BoundExtras,
) -> Result<IterationBound, AnalysisError> {
    if !(epsilon > 0.0 && delta0 > epsilon) {
        return Err(AnalysisError::InvalidArgument("need delta0 > epsilon > 0".into()));
    }
    match theorem {
        Theorem::T3Half => {
            let first = 2.0 * cn.rho_h * (delta0 / epsilon).ln();
            let second = if cn.theta_g == 0.0 {
                0.0
            } else {
                // 4θ_g√δ₀ γ(θ_g√δ₀/α) = 4(θ_g√δ₀ + √(θ_g²δ₀ + αθ_g√δ₀))
                let t = cn.theta_g * delta0.sqrt();
                4.0 * (t + (t * t + cn.alpha_theta_g * delta0.sqrt()).sqrt())
            };
            Ok(IterationBound {
                certified: first + second,
                delta_bar: None,
                tail_estimate: None,
            })
        }
        Theorem::T3General { r } => {
            if !(r > 0.5 && r < 1.0) {
                return Err(AnalysisError::InvalidArgument(format!("exponent {r} outside (1/2, 1)")));
            }
            let first = 2.0 / (2.0 * r - 1.0) * cn.rho_h / epsilon.powf(2.0 * r - 1.0);
            let mut rest = 0.0;
            if cn.theta_g > 0.0 {
                rest += 2.0 / (1.0 - r) * cn.theta_g * delta0.powf(1.0 - r);
                let a = cn.alpha / cn.theta_g;
                let top = a.powf(1.0 / r);
                let s = 1.0 - 1.5 * r;
                // ∫_ε^{top} δ^{−3r/2} dδ, clamped at zero when ε ≥ top
                let integral = if epsilon >= top {
                    0.0
                } else if s.abs() < 1e-9 {
                    (top / epsilon).ln()
                } else {
                    (top.powf(s) - epsilon.powf(s)) / s
                };
                rest += (2.0 * cn.theta_g * cn.alpha).sqrt() * integral;
            }
            Ok(IterationBound {
                certified: first + rest,
                delta_bar: None,
                tail_estimate: None,
            })
        }
        Theorem::T5 => {
            let sr = cn.rho_h.sqrt();
            let inner =
                cn.theta_h * (1.0 + sr * cn.rho_g.powi(3) / 3.0) + sr * cn.theta_g * (1.0 + cn.rho_g * cn.rho_h);
            let delta_bar = 1.0 / (32.0 * cn.rho_h * inner * inner);
            let stop = delta_bar.max(epsilon).min(delta0);
            let certified = 2.0 * cn.rho_h * (delta0 / stop).ln()
                + 4.0 * cn.theta_g * (delta0.sqrt() - stop.sqrt())
                + alpha_log_term(cn, delta0.sqrt(), stop.sqrt());
            Ok(IterationBound {
                certified,
                delta_bar: Some(delta_bar),
                tail_estimate: if epsilon < delta_bar { tail(extras) } else { None },
            })
        }
        Theorem::T6 { theta_beta, theta_chi } => {
            let sr = cn.rho_h.sqrt();
            let inner = sr * (2.0 * cn.theta_g + 2.0 * theta_beta + sr * theta_chi) + 4.0 * cn.theta_h;
            let delta_bar = 1.0 / (32.0 * cn.rho_h * inner * inner);
            let stop = delta_bar.max(epsilon).min(delta0);
            let certified = 2.0 * cn.rho_h * (delta0 / stop).ln()
                + 4.0 * theta_beta * (delta0.sqrt() - stop.sqrt())
                + 2.0 * cn.rho_h * theta_chi * theta_chi * (delta0 - stop);
            Ok(IterationBound {
                certified,
                delta_bar: Some(delta_bar),
                tail_estimate: if epsilon < delta_bar { tail(extras) } else { None },
            })
        }
    }
}

/// `λ̄ = 1/max{4ϑ_h + 3ϑ_g + 2ν̄/σ², 2ϱϑ_h}`; infinite when both vanish.
pub fn quadratic_radius(cn: &ConditionNumbers, nu_bar: f64) -> f64 {
    let a = 4.0 * cn.vartheta_h + 3.0 * cn.vartheta_g + 2.0 * nu_bar / (cn.sigma * cn.sigma);
    let b = 2.0 * cn.varrho * cn.vartheta_h;
    let m = a.max(b);
    if m > 0.0 {
        1.0 / m
    } else {
        f64::INFINITY
    }
}

/// Upper bound on `ν/λ_h` along the strongly convex ILQR schedule, i.e. the
/// `ν̄` that makes the schedule an instance of the radius formula.
pub fn theorem5_nu_bar(sc: &ScheduleConstants) -> f64 {
    sc.l_h.sqrt()
        * (sc.big_l_g + 2.0 * sc.l_g * (sc.m_h * sc.l_g * sc.l_g / 3.0 + sc.big_l_g * sc.l_h) / (sc.sigma_g * sc.mu_h))
}

/// Bounds on `‖K‖` and on `‖k‖/‖∇h‖` for the policies of a backward pass,
/// as stated with `‖J_t‖ ≤ L_h`. That premise fails once `ν` is large enough
/// for `J_t` to pick up the propagated curvature; see
/// [`policy_norm_bounds_propagated`].
pub fn policy_norm_bounds(dc: &DynamicConstants, cc: &CostConstants, nu: f64, tau: usize) -> (f64, f64) {
    policy_bounds_given_value(dc, cc, cc.l_h, nu, tau)
}

/// Upper bound on `max_t ‖J_t‖` from `Ĵ_τ = L_h`,
/// `Ĵ_t = L_h + (l_f^x)²/(1/Ĵ_{t+1} + σ_f²/ν)`.
pub fn value_hessian_bound(dc: &DynamicConstants, cc: &CostConstants, nu: f64, tau: usize) -> f64 {
    let mut j = cc.l_h;
    for _ in 1..tau {
        j = cc.l_h + dc.l_f_x * dc.l_f_x / (1.0 / j + dc.sigma_f * dc.sigma_f / nu);
    }
    j
}

/// Same shape as [`policy_norm_bounds`] with `L_h` replaced by [`value_hessian_bound`].
pub fn policy_norm_bounds_propagated(dc: &DynamicConstants, cc: &CostConstants, nu: f64, tau: usize) -> (f64, f64) {
    policy_bounds_given_value(dc, cc, value_hessian_bound(dc, cc, nu, tau), nu, tau)
}

fn policy_bounds_given_value(dc: &DynamicConstants, cc: &CostConstants, j: f64, nu: f64, tau: usize) -> (f64, f64) {
    let mu_h = cc.mu_h();
    let damp = 1.0 + nu / (dc.l_f_u * dc.l_f_u * mu_h);
    let gain = dc.l_f_x * j / (dc.sigma_f * mu_h) / damp;
    let ratio = j / mu_h * dc.l_f_x / (1.0 + dc.sigma_f * dc.sigma_f * j / nu);
    let mut sum = 0.0;
    let mut p = 1.0;
    for _ in 0..tau {
        sum += p;
        p *= ratio;
    }
    (gain, sum / (dc.sigma_f * mu_h * damp))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Slow,
    Linear,
    Quadratic,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::Slow => "slow",
            Phase::Linear => "linear",
            Phase::Quadratic => "quadratic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseStats {
    pub phase: Phase,
    pub first_iter: usize,
    pub last_iter: usize,
    /// `exp` of the least-squares slope of `ln λ_k` against `k`
    pub rate: Option<f64>,
    /// least-squares slope of `ln λ_{k+1}` against `ln λ_k`
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseLabeledTrace {
    pub phases: Vec<Phase>,
    pub stats: Vec<PhaseStats>,
    pub lambda_bar: f64,
    pub gap_threshold: f64,
    /// no gap data: only the decrement was used
    pub decrement_only: bool,
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
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
    Some(sxy / sxx)
}

/// Labels each iteration slow / linear / quadratic; labels never move
/// backwards along the trace.
pub fn label_phases(trace: &ConvergenceTrace, cn: &ConditionNumbers, nu_bar: f64) -> PhaseLabeledTrace {
    let lambda_bar = quadratic_radius(cn, nu_bar);
    let gap_threshold = if cn.theta_g > 0.0 {
        1.0 / (cn.theta_g * cn.theta_g)
    } else {
        f64::INFINITY
    };
    let decrement_only = trace.records.iter().any(|r| r.gap.is_none());
    let mut phases = Vec::with_capacity(trace.records.len());
    let mut floor = Phase::Slow;
    for rec in &trace.records {
        let raw = if rec.newton_decrement.is_some_and(|l| l < lambda_bar) {
            Phase::Quadratic
        } else if rec.gap.is_some_and(|g| g < gap_threshold) {
            Phase::Linear
        } else {
            Phase::Slow
        };
        floor = floor.max(raw);
        phases.push(floor);
    }

    let mut stats = Vec::new();
    let mut i = 0;
    while i < phases.len() {
        let ph = phases[i];
        let mut j = i;
        while j + 1 < phases.len() && phases[j + 1] == ph {
            j += 1;
        }
        let pts: Vec<(f64, f64)> = (i..=j)
            .filter_map(|k| {
                trace.records[k]
                    .newton_decrement
                    .filter(|l| *l > 0.0)
                    .map(|l| (k as f64, l.ln()))
            })
            .collect();
        let (ks, ls): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
        let rate = ls_slope(&ks, &ls).map(f64::exp);
        let order = if ls.len() >= 3 {
            ls_slope(&ls[..ls.len() - 1], &ls[1..])
        } else {
            None
        };
        stats.push(PhaseStats {
            phase: ph,
            first_iter: i,
            last_iter: j,
            rate,
            order,
        });
        i = j + 1;
    }
    PhaseLabeledTrace {
        phases,
        stats,
        lambda_bar,
        gap_threshold,
        decrement_only,
    }
}

/// Pairs `(k, λ_{k+1}, λ̄⁻¹λ_k²)` for consecutive iterations with `λ_k < λ̄`.
pub fn quadratic_contraction_pairs(trace: &ConvergenceTrace, lambda_bar: f64) -> Vec<(usize, f64, f64)> {
    trace
        .records
        .windows(2)
        .filter_map(|w| {
            let (a, b) = (w[0].newton_decrement?, w[1].newton_decrement?);
            (a < lambda_bar).then(|| (w[0].iter, b, a * a / lambda_bar))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtaEstimate {
    /// largest observed `‖DDP − LQR‖/‖LQR‖²`
    pub eta: f64,
    /// `(ν, gradient scale, ratio)` samples
    pub samples: Vec<(f64, f64, f64)>,
}

/// Empirical DDP proximity constant at `u`: the largest ratio
/// `‖DDP_ν − LQR_ν‖/‖LQR_ν‖²` over the given regularizations and gradient
/// scalings.
pub fn estimate_eta(
    problem: &Problem,
    u: &Command,
    nus: &[f64],
    scalings: &[f64],
) -> Result<EtaEstimate, AnalysisError> {
    let (traj, _, model) = problem.forward_pass(u)?;
    let mut samples = Vec::new();
    let mut eta: f64 = 0.0;
    for &nu in nus {
        for &eps in scalings {
            let scaled = model.with_scaled_gradient(eps);
            let pol = backward_pass(&scaled, nu)?;
            let lqr = rollout_lqr(&pol, &scaled);
            let ddp = rollout_ddp(&pol, problem.dynamic.as_ref(), &traj, u)?;
            let n = lqr.norm();
            if n == 0.0 {
                continue;
            }
            let ratio = ddp.plus(&lqr.scaled(-1.0)).norm() / (n * n);
            eta = eta.max(ratio);
            samples.push((nu, eps, ratio));
        }
    }
    Ok(EtaEstimate { eta, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Provenance;

    fn dc(l_f_x: f64) -> DynamicConstants {
        DynamicConstants {
            sigma_f: 1.0,
            l_f_x,
            l_f_u: 1.0,
            l_f_xx: 0.0,
            l_f_uu: 0.0,
            l_f_xu: 0.0,
            provenance: Provenance::Analytic,
        }
    }

    fn cc(mu: f64, l_h: f64, m_h: f64) -> CostConstants {
        CostConstants {
            mu_h_t: vec![mu],
            l_h,
            m_h,
            r: 0.5,
            mu,
        }
    }

    #[test]
    fn geometric_sum_edge_cases() {
        assert_eq!(trajectory_constants(&dc(0.0), 7).unwrap().s, 1.0);
        assert_eq!(trajectory_constants(&dc(1.0), 5).unwrap().s, 5.0);
        assert_eq!(trajectory_constants(&dc(0.5), 3).unwrap().big_l_g, 0.0);
        assert!(trajectory_constants(&dc(0.5), 0).is_err());
    }

    #[test]
    fn unit_condition_numbers() {
        let tc = TrajectoryConstants {
            horizon: 1,
            s: 1.0,
            sigma_g: 2.0,
            l_g: 2.0,
            big_l_g: 0.5,
        };
        let cn = condition_numbers(&tc, &cc(3.0, 3.0, 0.0)).unwrap();
        assert_eq!((cn.rho_h, cn.rho_g, cn.theta_h), (1.0, 1.0, 0.0));
        assert!((cn.alpha - 4.0).abs() < 1e-15);
    }

    #[test]
    fn radius_examples() {
        let mut cn = condition_numbers(
            &TrajectoryConstants {
                horizon: 1,
                s: 1.0,
                sigma_g: 1.0,
                l_g: 1.0,
                big_l_g: 1.0,
            },
            &cc(1.0, 1.0, 2.0),
        )
        .unwrap();
        assert_eq!((cn.vartheta_h, cn.vartheta_g, cn.varrho), (1.0, 1.0, 1.0));
        assert!((quadratic_radius(&cn, 0.0) - 1.0 / 7.0).abs() < 1e-15);
        cn.vartheta_h = 0.0;
        assert!((quadratic_radius(&cn, 0.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!(quadratic_radius(&cn, 1.0) < quadratic_radius(&cn, 0.5));
    }

    #[test]
    fn t3_half_without_curvature() {
        let mut cn = condition_numbers(
            &TrajectoryConstants {
                horizon: 1,
                s: 1.0,
                sigma_g: 1.0,
                l_g: 1.0,
                big_l_g: 0.0,
            },
            &cc(1.0, 10.0, 0.0),
        )
        .unwrap();
        let b = iteration_bound(Theorem::T3Half, 1.0, 0.01, &cn, &BoundExtras::default()).unwrap();
        assert!((b.certified - 20.0 * 100f64.ln()).abs() < 1e-12);
        assert!((b.certified - 92.10).abs() < 0.01);
        // γ(1/3) = 3 inside the second term: 4θ_g√δ₀·γ(θ_g√δ₀/α)
        cn.theta_g = 1.0;
        cn.alpha = 3.0;
        cn.alpha_theta_g = 3.0;
        let b = iteration_bound(Theorem::T3Half, 1.0, 0.01, &cn, &BoundExtras::default()).unwrap();
        assert!((gamma(1.0 / 3.0) - 3.0).abs() < 1e-15);
        assert!((b.certified - (20.0 * 100f64.ln() + 4.0 * 3.0)).abs() < 1e-12);
    }

    #[test]
    fn policy_bounds_unit_case_and_limit() {
        let d = dc(1.0);
        let c = cc(1.0, 1.0, 0.0);
        let (k, off) = policy_norm_bounds(&d, &c, 1.0, 1);
        assert_eq!(k, 0.5);
        assert_eq!(off, 0.5);
        let (k, off) = policy_norm_bounds(&d, &c, 1e300, 3);
        assert!(k < 1e-290 && off < 1e-290);
    }
}
