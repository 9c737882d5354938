//! Discrete-time dynamics `x⁺ = f(x, u)`, a small model zoo, the multi-rate
//! wrapper and sampling-based estimation of smoothness constants.
//!
//! Jacobians are returned in "apply to a perturbation" form: `A` is
//! `n_x × n_x`, `B` is `n_x × n_u`, so that `δx⁺ ≈ A δx + B δu`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{sigma_max, sigma_min};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynError {
    #[error("dimension mismatch for `{arg}`: expected {expected}, got {got}")]
    Dimension {
        arg: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// A discrete-time dynamic. Implementations are immutable and pure.
pub trait Dynamic: Send + Sync + fmt::Debug {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    /// Next state. Inputs are assumed to have the right sizes; use [`step`]
    /// for a checked call.
    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    /// `(A, B)` at `(x, u)`.
    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>);

    fn has_analytic_jacobians(&self) -> bool {
        true
    }

    /// Closed-form constants when the model has them.
    fn analytic_constants(&self) -> Option<DynamicConstants> {
        None
    }
}

fn check_dims(model: &dyn Dynamic, x: &DVector<f64>, u: &DVector<f64>) -> Result<(), DynError> {
    if x.len() != model.state_dim() {
        return Err(DynError::Dimension {
            arg: "x",
            expected: model.state_dim(),
            got: x.len(),
        });
    }
    if u.len() != model.control_dim() {
        return Err(DynError::Dimension {
            arg: "u",
            expected: model.control_dim(),
            got: u.len(),
        });
    }
    Ok(())
}

/// Checked evaluation of `f(x, u)`.
pub fn step(model: &dyn Dynamic, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, DynError> {
    check_dims(model, x, u)?;
    Ok(model.eval(x, u))
}

/// Checked evaluation of `(A, B)`.
pub fn jacobians(
    model: &dyn Dynamic,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>), DynError> {
    check_dims(model, x, u)?;
    Ok(model.jacobians(x, u))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Analytic,
    Sampled {
        region: SamplingBox,
        n_samples: usize,
        seed: u64,
    },
}

impl Provenance {
    pub fn label(&self) -> &'static str {
        match self {
            Provenance::Analytic => "analytic",
            Provenance::Sampled { .. } => "sampled",
        }
    }
}

/// Smoothness and surjectivity constants of a dynamic.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicConstants {
    pub sigma_f: f64,
    pub l_f_x: f64,
    pub l_f_u: f64,
    pub l_f_xx: f64,
    pub l_f_uu: f64,
    pub l_f_xu: f64,
    pub provenance: Provenance,
}

impl DynamicConstants {
    /// Constants of a model whose Jacobians do not depend on `(x, u)`.
    pub fn from_constant_jacobians(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Self {
        DynamicConstants {
            sigma_f: sigma_min(b),
            l_f_x: sigma_max(a),
            l_f_u: sigma_max(b),
            l_f_xx: 0.0,
            l_f_uu: 0.0,
            l_f_xu: 0.0,
            provenance: Provenance::Analytic,
        }
    }

    fn has_zero_curvature(&self) -> bool {
        self.l_f_xx == 0.0 && self.l_f_uu == 0.0 && self.l_f_xu == 0.0
    }
}

/// Axis-aligned sampling region in `(x, u)` space.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingBox {
    pub state_lo: Vec<f64>,
    pub state_hi: Vec<f64>,
    pub control_lo: Vec<f64>,
    pub control_hi: Vec<f64>,
}

impl SamplingBox {
    pub fn cube(n_x: usize, n_u: usize, state_radius: f64, control_radius: f64) -> Self {
        SamplingBox {
            state_lo: vec![-state_radius; n_x],
            state_hi: vec![state_radius; n_x],
            control_lo: vec![-control_radius; n_u],
            control_hi: vec![control_radius; n_u],
        }
    }

    fn is_valid(&self) -> bool {
        let ok = |lo: &[f64], hi: &[f64]| {
            lo.len() == hi.len() && lo.iter().zip(hi).all(|(l, h)| l.is_finite() && h.is_finite() && l <= h)
        };
        ok(&self.state_lo, &self.state_hi) && ok(&self.control_lo, &self.control_hi)
    }

    pub fn sample_state<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        sample_in(&self.state_lo, &self.state_hi, rng)
    }

    pub fn sample_control<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        sample_in(&self.control_lo, &self.control_hi, rng)
    }

    fn width(&self) -> f64 {
        self.state_lo
            .iter()
            .zip(&self.state_hi)
            .chain(self.control_lo.iter().zip(&self.control_hi))
            .map(|(l, h)| h - l)
            .fold(0.0, f64::max)
    }
}

fn sample_in<R: Rng>(lo: &[f64], hi: &[f64], rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(
        lo.len(),
        lo.iter()
            .zip(hi)
            .map(|(&l, &h)| if h > l { rng.gen_range(l..=h) } else { l }),
    )
}

/// Returns analytic constants when the model has them, otherwise samples.
pub fn estimate_constants(
    model: &dyn Dynamic,
    region: &SamplingBox,
    n_samples: usize,
    seed: u64,
) -> Result<DynamicConstants, DynError> {
    if let Some(c) = model.analytic_constants() {
        return Ok(c);
    }
    sample_constants(model, region, n_samples, seed)
}

/// Sampled constants: extreme singular values of the Jacobians over the box,
/// second-order constants from Jacobian differences at nearby points.
pub fn sample_constants(
    model: &dyn Dynamic,
    region: &SamplingBox,
    n_samples: usize,
    seed: u64,
) -> Result<DynamicConstants, DynError> {
    if n_samples == 0 {
        return Err(DynError::InvalidArgument("n_samples must be at least 1".into()));
    }
    if region.state_lo.len() != model.state_dim() || region.control_lo.len() != model.control_dim() {
        return Err(DynError::InvalidArgument(
            "sampling box dimensions do not match the model".into(),
        ));
    }
    if !region.is_valid() {
        return Err(DynError::InvalidArgument("sampling box is empty or not finite".into()));
    }
    let (n_x, n_u) = (model.state_dim(), model.control_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-4 * region.width().max(1e-3);

    let mut sigma_f = f64::INFINITY;
    let (mut l_x, mut l_u, mut l_xx, mut l_uu, mut l_xu) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..n_samples {
        let x = region.sample_state(&mut rng);
        let u = region.sample_control(&mut rng);
        let (a, b) = model.jacobians(&x, &u);
        sigma_f = sigma_f.min(sigma_min(&b));
        l_x = l_x.max(sigma_max(&a));
        l_u = l_u.max(sigma_max(&b));

        for dx in probe_directions(n_x, &mut rng) {
            let (a2, b2) = model.jacobians(&(&x + &dx * h), &u);
            l_xx = l_xx.max(sigma_max(&(a2 - &a)) / h);
            l_xu = l_xu.max(sigma_max(&(b2 - &b)) / h);
        }
        for du in probe_directions(n_u, &mut rng) {
            let (a2, b2) = model.jacobians(&x, &(&u + &du * h));
            l_uu = l_uu.max(sigma_max(&(b2 - &b)) / h);
            l_xu = l_xu.max(sigma_max(&(a2 - &a)) / h);
        }
    }
    Ok(DynamicConstants {
        sigma_f: sigma_f.min(l_u),
        l_f_x: l_x,
        l_f_u: l_u,
        l_f_xx: l_xx,
        l_f_uu: l_uu,
        l_f_xu: l_xu,
        provenance: Provenance::Sampled {
            region: region.clone(),
            n_samples,
            seed,
        },
    })
}

/// Unit coordinate directions plus one random unit direction.
fn probe_directions<R: Rng>(n: usize, rng: &mut R) -> Vec<DVector<f64>> {
    let mut dirs: Vec<DVector<f64>> = (0..n)
        .map(|i| {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            e
        })
        .collect();
    if n > 1 {
        let r = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let norm = r.norm();
        if norm > 1e-3 {
            dirs.push(r / norm);
        }
    }
    dirs
}

/// `f(x, u) = A x + B u`.
#[derive(Debug, Clone)]
pub struct LinearDynamic {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LinearDynamic {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self, DynError> {
        if !a.is_square() {
            return Err(DynError::InvalidArgument("A must be square".into()));
        }
        if b.nrows() != a.nrows() {
            return Err(DynError::Dimension {
                arg: "B",
                expected: a.nrows(),
                got: b.nrows(),
            });
        }
        Ok(LinearDynamic { a, b })
    }
}

impl Dynamic for LinearDynamic {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn control_dim(&self) -> usize {
        self.b.ncols()
    }
    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }
    fn jacobians(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.a.clone(), self.b.clone())
    }
    fn analytic_constants(&self) -> Option<DynamicConstants> {
        Some(DynamicConstants::from_constant_jacobians(&self.a, &self.b))
    }
}

/// Upper shift matrix `D` (ones on the superdiagonal).
pub fn shift_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if j == i + 1 { 1.0 } else { 0.0 })
}

/// Last canonical vector `e`.
pub fn last_unit(n: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[n - 1] = 1.0;
    e
}

/// Brunovsky canonical form `z⁺ = D z + e w`.
pub fn brunovsky(n_x: usize) -> Result<LinearDynamic, DynError> {
    if n_x == 0 {
        return Err(DynError::InvalidArgument("n_x must be positive".into()));
    }
    LinearDynamic::new(
        shift_matrix(n_x),
        DMatrix::from_column_slice(n_x, 1, last_unit(n_x).as_slice()),
    )
}

/// Scalar driving term of a chain system.
#[derive(Debug, Clone, PartialEq)]
pub enum Psi {
    /// `ψ(y, v) = v`
    Identity,
    /// `ψ(y, v) = gain·v + ⟨state_gains, y⟩ + offset`
    Affine {
        gain: f64,
        state_gains: DVector<f64>,
        offset: f64,
    },
    /// `ψ(y, v) = v + margin·tanh(v) − ⟨state_gains, y⟩`. The linear state
    /// feedback lets the chain be stabilized while `∂_v ψ` stays in
    /// `[1, 1 + margin]`.
    TanhMargin { margin: f64, state_gains: DVector<f64> },
}

impl Psi {
    pub fn value(&self, y: &DVector<f64>, v: f64) -> f64 {
        match self {
            Psi::Identity => v,
            Psi::Affine {
                gain,
                state_gains,
                offset,
            } => gain * v + state_gains.dot(y) + offset,
            Psi::TanhMargin { margin, state_gains } => v + margin * v.tanh() - state_gains.dot(y),
        }
    }

    pub fn dv(&self, _y: &DVector<f64>, v: f64) -> f64 {
        match self {
            Psi::Identity => 1.0,
            Psi::Affine { gain, .. } => *gain,
            Psi::TanhMargin { margin, .. } => {
                let c = v.cosh();
                1.0 + margin / (c * c)
            }
        }
    }

    pub fn dy(&self, n: usize) -> DVector<f64> {
        match self {
            Psi::Identity => DVector::zeros(n),
            Psi::Affine { state_gains, .. } => state_gains.clone(),
            Psi::TanhMargin { state_gains, .. } => -state_gains,
        }
    }

    /// Global lower bound on `|∂_v ψ|`.
    pub fn dv_lower(&self) -> f64 {
        match self {
            Psi::Identity => 1.0,
            Psi::Affine { gain, .. } => gain.abs(),
            Psi::TanhMargin { margin, .. } => (1.0 + margin.min(0.0)).max(0.0),
        }
    }

    pub fn is_affine(&self) -> bool {
        !matches!(self, Psi::TanhMargin { margin, .. } if *margin != 0.0)
    }

    /// Solves `ψ(y, v) = target` for `v`. Exact for affine maps, safeguarded
    /// Newton otherwise.
    pub fn solve_control(&self, y: &DVector<f64>, target: f64) -> Option<f64> {
        match self {
            Psi::Identity => Some(target),
            Psi::Affine { gain, .. } => {
                if *gain == 0.0 {
                    None
                } else {
                    Some((target - self.value(y, 0.0)) / gain)
                }
            }
            Psi::TanhMargin { margin, .. } => {
                if self.dv_lower() <= 0.0 {
                    return None;
                }
                // ψ is increasing in v with slope in [1+min(m,0), 1+max(m,0)],
                // so a bracket of half-width |target - ψ(y,0)|/slope_lo + 1 holds the root.
                let r0 = target - self.value(y, 0.0);
                let half = r0.abs() / self.dv_lower() + 1.0;
                let (mut lo, mut hi) = (-half, half);
                let mut v = r0 / (1.0 + margin.max(0.0));
                for _ in 0..200 {
                    let r = self.value(y, v) - target;
                    if r.abs() <= 1e-15 * (1.0 + target.abs()) {
                        return Some(v);
                    }
                    if r > 0.0 {
                        hi = v;
                    } else {
                        lo = v;
                    }
                    let newton = v - r / self.dv(y, v);
                    v = if newton > lo && newton < hi {
                        newton
                    } else {
                        0.5 * (lo + hi)
                    };
                }
                Some(v)
            }
        }
    }
}

/// Euler-discretized chain of integrators driven through its last coordinate:
/// `y⁺_i = y_i + Δ y_{i+1}` for `i < n`, `y⁺_n = y_n + Δ ψ(y, v)`.
#[derive(Debug, Clone)]
pub struct ChainSystem {
    pub n_x: usize,
    pub delta: f64,
    pub psi: Psi,
}

impl ChainSystem {
    pub fn new(n_x: usize, delta: f64, psi: Psi) -> Result<Self, DynError> {
        if n_x == 0 {
            return Err(DynError::InvalidArgument("chain length must be positive".into()));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(DynError::InvalidArgument("delta must be positive".into()));
        }
        let gains_len = match &psi {
            Psi::Identity => n_x,
            Psi::Affine { state_gains, .. } | Psi::TanhMargin { state_gains, .. } => state_gains.len(),
        };
        if gains_len != n_x {
            return Err(DynError::Dimension {
                arg: "state_gains",
                expected: n_x,
                got: gains_len,
            });
        }
        Ok(ChainSystem { n_x, delta, psi })
    }

    pub fn psi_dv_lower(&self) -> f64 {
        self.psi.dv_lower()
    }
}

impl Dynamic for ChainSystem {
    fn state_dim(&self) -> usize {
        self.n_x
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn eval(&self, y: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let n = self.n_x;
        let mut next = y.clone();
        for i in 0..n - 1 {
            next[i] += self.delta * y[i + 1];
        }
        next[n - 1] += self.delta * self.psi.value(y, u[0]);
        next
    }
    fn jacobians(&self, y: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.n_x;
        let mut a = DMatrix::identity(n, n) + shift_matrix(n) * self.delta;
        let dy = self.psi.dy(n);
        for j in 0..n {
            a[(n - 1, j)] += self.delta * dy[j];
        }
        let mut b = DMatrix::zeros(n, 1);
        b[(n - 1, 0)] = self.delta * self.psi.dv(y, u[0]);
        (a, b)
    }
    fn analytic_constants(&self) -> Option<DynamicConstants> {
        if !self.psi.is_affine() {
            return None;
        }
        let (a, b) = self.jacobians(&DVector::zeros(self.n_x), &DVector::zeros(1));
        Some(DynamicConstants::from_constant_jacobians(&a, &b))
    }
}

/// Damped pendulum, explicit Euler: state `(angle, rate)`, torque input.
#[derive(Debug, Clone)]
pub struct Pendulum {
    pub dt: f64,
    /// gravity / length
    pub stiffness: f64,
    pub damping: f64,
}

impl Dynamic for Pendulum {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let (th, om) = (x[0], x[1]);
        DVector::from_vec(vec![
            th + self.dt * om,
            om + self.dt * (-self.stiffness * th.sin() - self.damping * om + u[0]),
        ])
    }
    fn jacobians(&self, x: &DVector<f64>, _u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[
                1.0,
                self.dt,
                -self.dt * self.stiffness * x[0].cos(),
                1.0 - self.dt * self.damping,
            ],
        );
        let b = DMatrix::from_column_slice(2, 1, &[0.0, self.dt]);
        (a, b)
    }
}

/// `k` steps of a base dynamic, the `j`-th control slice feeding inner step `j`.
#[derive(Debug, Clone)]
pub struct MultiRate {
    base: Arc<dyn Dynamic>,
    k: usize,
}

impl MultiRate {
    pub fn new(base: Arc<dyn Dynamic>, k: usize) -> Result<Self, DynError> {
        if k == 0 {
            return Err(DynError::InvalidArgument(
                "multirate factor k must be at least 1".into(),
            ));
        }
        Ok(MultiRate { base, k })
    }

    pub fn base(&self) -> &Arc<dyn Dynamic> {
        &self.base
    }

    pub fn factor(&self) -> usize {
        self.k
    }

    fn slice(&self, u: &DVector<f64>, j: usize) -> DVector<f64> {
        let m = self.base.control_dim();
        u.rows(j * m, m).into_owned()
    }
}

impl Dynamic for MultiRate {
    fn state_dim(&self) -> usize {
        self.base.state_dim()
    }
    fn control_dim(&self) -> usize {
        self.k * self.base.control_dim()
    }
    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut y = x.clone();
        for j in 0..self.k {
            y = self.base.eval(&y, &self.slice(u, j));
        }
        y
    }
    fn jacobians(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let (n, m) = (self.base.state_dim(), self.base.control_dim());
        let mut a_acc = DMatrix::identity(n, n);
        let mut b_acc = DMatrix::zeros(n, self.k * m);
        let mut y = x.clone();
        for j in 0..self.k {
            let uj = self.slice(u, j);
            let (a, b) = self.base.jacobians(&y, &uj);
            // earlier blocks are pushed through this step's state Jacobian
            let pushed = &a * b_acc.columns(0, j * m);
            b_acc.columns_mut(0, j * m).copy_from(&pushed);
            b_acc.columns_mut(j * m, m).copy_from(&b);
            a_acc = &a * a_acc;
            y = self.base.eval(&y, &uj);
        }
        (a_acc, b_acc)
    }
    fn has_analytic_jacobians(&self) -> bool {
        self.base.has_analytic_jacobians()
    }
    fn analytic_constants(&self) -> Option<DynamicConstants> {
        let base = self.base.analytic_constants()?;
        if !base.has_zero_curvature() {
            return None;
        }
        let (a, b) = self.jacobians(&DVector::zeros(self.state_dim()), &DVector::zeros(self.control_dim()));
        Some(DynamicConstants::from_constant_jacobians(&a, &b))
    }
}

/// Convenience wrapper matching the functional form `multirate(base, k)`.
pub fn multirate(base: Arc<dyn Dynamic>, k: usize) -> Result<MultiRate, DynError> {
    MultiRate::new(base, k)
}
