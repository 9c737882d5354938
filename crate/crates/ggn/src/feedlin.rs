//! Static feedback linearization of chain systems into Brunovsky form and the
//! quantitative surjectivity bound for multi-rate controls.
//!
//! With `z = Q y` and `w = cᵀQ y + Δψ(y, v)` the chain becomes
//! `z⁺ = D z + e w`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dynamics::{last_unit, shift_matrix, ChainSystem, Dynamic, MultiRate, SamplingBox};
use crate::linalg::{sigma_max, sigma_min};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeedlinError {
    #[error("Pascal matrix size {0} outside 1..=30")]
    SizeOutOfRange(usize),
    #[error("chain is not linearizable: lower bound on |∂_v ψ| is {0}")]
    NotLinearizable(f64),
    #[error("certificate inputs must be positive (got {0})")]
    NonPositive(&'static str),
}

/// Lower-triangular Pascal matrix, entry `(i, j) = binom(i, j)` (0-based),
/// built by the additive recurrence.
pub fn pascal_matrix(n: usize) -> Result<DMatrix<f64>, FeedlinError> {
    if !(1..=30).contains(&n) {
        return Err(FeedlinError::SizeOutOfRange(n));
    }
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        p[(i, 0)] = 1.0;
        for j in 1..=i {
            p[(i, j)] = p[(i - 1, j - 1)] + if j < i { p[(i - 1, j)] } else { 0.0 };
        }
    }
    Ok(p)
}

#[derive(Debug, Clone)]
pub struct BrunovskyTransform {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub delta: f64,
    chain: ChainSystem,
}

impl BrunovskyTransform {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    /// `w = cᵀQ y + Δ ψ(y, v)`.
    pub fn b_map(&self, y: &DVector<f64>, v: f64) -> f64 {
        self.c.dot(&(&self.q * y)) + self.delta * self.chain.psi.value(y, v)
    }

    /// `v` with `b_map(y, v) = w`.
    pub fn b_inverse(&self, y: &DVector<f64>, w: f64) -> Option<f64> {
        let target = (w - self.c.dot(&(&self.q * y))) / self.delta;
        self.chain.psi.solve_control(y, target)
    }

    /// `∂_v b = Δ ∂_v ψ`.
    pub fn b_dv(&self, y: &DVector<f64>, v: f64) -> f64 {
        self.delta * self.chain.psi.dv(y, v)
    }

    /// `∇_y b = Qᵀc + Δ ∇_y ψ`.
    pub fn b_dy(&self, _y: &DVector<f64>, _v: f64) -> DVector<f64> {
        self.q.transpose() * &self.c + self.chain.psi.dy(self.n()) * self.delta
    }

    /// Chain matrix `A = I + ΔD`.
    pub fn chain_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::identity(n, n) + shift_matrix(n) * self.delta
    }

    /// Closed-loop matrix `B = D + e cᵀ`.
    pub fn companion_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        shift_matrix(n) + last_unit(n) * self.c.transpose()
    }

    /// `max |BQ − QA| / max(1, max |QA|)`.
    pub fn similarity_residual(&self) -> f64 {
        let qa = &self.q * self.chain_matrix();
        let bq = self.companion_matrix() * &self.q;
        (bq - &qa).amax() / qa.amax().max(1.0)
    }
}

/// `Q = P_n diag(Δ^{i−n})`, `c_i = (−1)^{n−i} binom(n, i−1)` (1-based `i`).
pub fn brunovsky_transform(chain: &ChainSystem) -> Result<BrunovskyTransform, FeedlinError> {
    if !(chain.psi_dv_lower() > 0.0) {
        return Err(FeedlinError::NotLinearizable(chain.psi_dv_lower()));
    }
    let n = chain.n_x;
    let p = pascal_matrix(n)?;
    let scale = DVector::from_fn(n, |i, _| chain.delta.powi(i as i32 + 1 - n as i32));
    let q = p * DMatrix::from_diagonal(&scale);
    // row n of the (n+1)-Pascal matrix holds binom(n, ·)
    let row = pascal_matrix(n + 1)?.row(n).into_owned();
    let c = DVector::from_fn(n, |i, _| {
        let sign = if (n - 1 - i).is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * row[i]
    });
    Ok(BrunovskyTransform {
        q,
        c,
        delta: chain.delta,
        chain: chain.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrunovskyReport {
    /// `max_t ‖z_t − Q y_t‖ / max(1, ‖Q y_t‖)` between the canonical and the original runs
    pub max_deviation: f64,
    /// `max_i |z_n^{(i)} − w_{i−1}|` after `n` steps, relative to `max(1, |w|)`
    pub canonical_shift_error: f64,
    pub similarity_residual: f64,
}

/// Simulates random controls through the chain and through the canonical
/// form driven by `w_t = b(y_t, v_t)`.
pub fn verify_brunovsky(
    transform: &BrunovskyTransform,
    chain: &ChainSystem,
    n_steps: usize,
    seed: u64,
) -> BrunovskyReport {
    let n = chain.n_x;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let mut z = &transform.q * &y;
    let d = shift_matrix(n);
    let e = last_unit(n);
    let mut ws = Vec::with_capacity(n_steps);
    let mut max_dev: f64 = 0.0;
    let mut shift_err: f64 = 0.0;
    for t in 0..n_steps {
        let v: f64 = rng.gen_range(-1.0..1.0);
        let w = transform.b_map(&y, v);
        ws.push(w);
        y = chain.eval(&y, &DVector::from_element(1, v));
        z = &d * &z + &e * w;
        let qy = &transform.q * &y;
        max_dev = max_dev.max((&z - &qy).norm() / qy.norm().max(1.0));
        if t + 1 == n {
            for i in 0..n {
                shift_err = shift_err.max((qy[i] - ws[i]).abs() / ws[i].abs().max(1.0));
            }
        }
    }
    BrunovskyReport {
        max_deviation: max_dev,
        canonical_shift_error: shift_err,
        similarity_residual: transform.similarity_residual(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurjectivityCertificate {
    pub sigma_a: f64,
    pub l_a: f64,
    pub sigma_b: f64,
    pub l_b_y: f64,
    pub r: usize,
    pub bound: f64,
}

/// `(σ_b/l_a) / (1 + (r−1) l_b^y/σ_a)`.
pub fn surjectivity_bound(
    sigma_a: f64,
    l_a: f64,
    sigma_b: f64,
    l_b_y: f64,
    r: usize,
) -> Result<SurjectivityCertificate, FeedlinError> {
    for (name, v) in [("sigma_a", sigma_a), ("l_a", l_a), ("sigma_b", sigma_b)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(FeedlinError::NonPositive(name));
        }
    }
    if !(l_b_y >= 0.0 && l_b_y.is_finite()) {
        return Err(FeedlinError::NonPositive("l_b_y"));
    }
    if r == 0 {
        return Err(FeedlinError::NonPositive("r"));
    }
    let bound = (sigma_b / l_a) / (1.0 + (r as f64 - 1.0) * l_b_y / sigma_a);
    Ok(SurjectivityCertificate {
        sigma_a,
        l_a,
        sigma_b,
        l_b_y,
        r,
        bound,
    })
}

/// Certificate for a chain: `σ_a, l_a` from `Q` exactly, `σ_b, l_b^y`
/// sampled from `b`'s partial derivatives over the box.
pub fn chain_certificate(
    chain: &ChainSystem,
    region: &SamplingBox,
    n_samples: usize,
    seed: u64,
) -> Result<SurjectivityCertificate, FeedlinError> {
    let tr = brunovsky_transform(chain)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sigma_b = f64::INFINITY;
    let mut l_b_y: f64 = 0.0;
    for _ in 0..n_samples.max(1) {
        let y = region.sample_state(&mut rng);
        let v = region.sample_control(&mut rng)[0];
        sigma_b = sigma_b.min(tr.b_dv(&y, v).abs());
        l_b_y = l_b_y.max(tr.b_dy(&y, v).norm());
    }
    surjectivity_bound(sigma_min(&tr.q), sigma_max(&tr.q), sigma_b, l_b_y, chain.n_x)
}

/// Measured `σ_min` of the `k`-step control Jacobian at random points.
pub fn multirate_sigma_min_samples(
    chain: &ChainSystem,
    k: usize,
    region: &SamplingBox,
    n_points: usize,
    seed: u64,
) -> Vec<f64> {
    let base: Arc<dyn Dynamic> = Arc::new(chain.clone());
    let wrapped = MultiRate::new(base, k).expect("k >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_points)
        .map(|_| {
            let y = region.sample_state(&mut rng);
            let v = DVector::from_fn(k, |_, _| rng.gen_range(region.control_lo[0]..=region.control_hi[0]));
            sigma_min(&wrapped.jacobians(&y, &v).1)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Psi;

    #[test]
    fn pascal_rows() {
        assert_eq!(pascal_matrix(1).unwrap(), DMatrix::from_element(1, 1, 1.0));
        assert_eq!(
            pascal_matrix(3).unwrap(),
            DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 2.0, 1.0])
        );
        let p5 = pascal_matrix(5).unwrap();
        assert_eq!(
            p5.row(4).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 4.0, 6.0, 4.0, 1.0]
        );
        assert!(pascal_matrix(0).is_err() && pascal_matrix(31).is_err());
    }

    #[test]
    fn two_dimensional_transform() {
        let chain = ChainSystem::new(2, 0.1, Psi::Identity).unwrap();
        let tr = brunovsky_transform(&chain).unwrap();
        assert!((&tr.q - DMatrix::from_row_slice(2, 2, &[10.0, 0.0, 10.0, 1.0])).amax() < 1e-12);
        assert_eq!(tr.c, DVector::from_vec(vec![-1.0, 2.0]));
        assert!(tr.similarity_residual() < 1e-12);
    }

    #[test]
    fn one_dimensional_transform() {
        let chain = ChainSystem::new(1, 0.3, Psi::Identity).unwrap();
        let tr = brunovsky_transform(&chain).unwrap();
        assert_eq!(tr.q, DMatrix::from_element(1, 1, 1.0));
        assert_eq!(tr.c, DVector::from_element(1, 1.0));
        assert_eq!(tr.similarity_residual(), 0.0);
    }

    #[test]
    fn degenerate_psi_is_rejected() {
        let chain = ChainSystem::new(
            2,
            0.1,
            Psi::Affine {
                gain: 0.0,
                state_gains: DVector::zeros(2),
                offset: 0.0,
            },
        )
        .unwrap();
        assert!(matches!(
            brunovsky_transform(&chain),
            Err(FeedlinError::NotLinearizable(_))
        ));
    }

    #[test]
    fn bound_arithmetic() {
        assert_eq!(surjectivity_bound(2.0, 4.0, 1.0, 3.0, 1).unwrap().bound, 0.25);
        assert_eq!(surjectivity_bound(1.0, 1.0, 1.0, 1.0, 2).unwrap().bound, 0.5);
        assert!(surjectivity_bound(0.0, 1.0, 1.0, 1.0, 2).is_err());
    }

    #[test]
    fn zero_run_stays_at_origin() {
        let chain = ChainSystem::new(3, 0.2, Psi::Identity).unwrap();
        let tr = brunovsky_transform(&chain).unwrap();
        let mut y = DVector::zeros(3);
        let mut z = DVector::zeros(3);
        for _ in 0..10 {
            let w = tr.b_map(&y, 0.0);
            y = chain.eval(&y, &DVector::zeros(1));
            z = shift_matrix(3) * z + last_unit(3) * w;
        }
        assert_eq!(y.norm() + z.norm(), 0.0);
    }

    #[test]
    fn shift_matrix_is_nilpotent() {
        for n in 1..8 {
            let d = shift_matrix(n);
            assert_eq!(d.pow(n as u32).amax(), 0.0);
        }
    }
}
