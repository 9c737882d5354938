//! Dense brute-force oracles for tests and certification. Nothing here is on
//! the solver's hot path.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dynamics::Dynamic;
use crate::linalg::{sigma_min, stack};
use crate::solver::{rollout_states, Command, LinQuadModel, SolverError};

/// Largest `τ(n_x + n_u)` accepted for dense work.
pub const SIZE_GUARD: usize = 512;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DenseError {
    #[error("problem too large for dense work: τ(n_x+n_u) = {size} > {SIZE_GUARD}")]
    TooLarge { size: usize },
    #[error("dense system is singular")]
    Singular,
    #[error(transparent)]
    Solver(#[from] SolverError),
}

fn guard(tau: usize, n_x: usize, n_u: usize) -> Result<(), DenseError> {
    let size = tau * (n_x + n_u);
    if size > SIZE_GUARD {
        Err(DenseError::TooLarge { size })
    } else {
        Ok(())
    }
}

/// `G = ∇_u f^{[τ]}(x̄_0, u)` of shape `τn_u × τn_x`; block `(s, t)` is
/// `(∂x_{t+1}/∂u_s)ᵀ`, zero for `s > t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseJacobian {
    pub g: DMatrix<f64>,
    pub horizon: usize,
    pub n_x: usize,
    pub n_u: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assembly {
    /// forward accumulation `∂x_{t+1}/∂u_s = A_t ∂x_t/∂u_s`
    ChainRule,
    /// `G = ∇_uF (I − ∇_xF)⁻¹` with one dense LU solve
    Resolvent,
}

/// `(∂f/∂x, ∂f/∂u)` at one step.
type StepJacobian = (DMatrix<f64>, DMatrix<f64>);

/// Per-step Jacobians along the rolled trajectory.
fn step_jacobians(dynamic: &dyn Dynamic, x0: &DVector<f64>, u: &Command) -> Result<Vec<StepJacobian>, DenseError> {
    let traj = rollout_states(dynamic, x0, u)?;
    Ok(u.controls
        .iter()
        .enumerate()
        .map(|(t, ut)| dynamic.jacobians(traj.state(t), ut))
        .collect())
}

pub fn dense_jacobian(
    dynamic: &dyn Dynamic,
    x0: &DVector<f64>,
    u: &Command,
    assembly: Assembly,
) -> Result<DenseJacobian, DenseError> {
    let (n, m, tau) = (dynamic.state_dim(), dynamic.control_dim(), u.horizon());
    guard(tau, n, m)?;
    let jac = step_jacobians(dynamic, x0, u)?;
    let g = match assembly {
        Assembly::ChainRule => {
            // sens[s] = ∂x_{t+1}/∂u_s, updated in place as t advances
            let mut gt = DMatrix::zeros(tau * n, tau * m);
            let mut sens: Vec<DMatrix<f64>> = Vec::with_capacity(tau);
            for (t, (a, b)) in jac.iter().enumerate() {
                for s_mat in sens.iter_mut() {
                    *s_mat = a * &*s_mat;
                }
                sens.push(b.clone());
                for (s, s_mat) in sens.iter().enumerate() {
                    gt.view_mut((t * n, s * m), (n, m)).copy_from(s_mat);
                }
            }
            gt.transpose()
        }
        Assembly::Resolvent => {
            // transpose convention: ∇_xF has block (i, i+1) = A_iᵀ, ∇_uF has block (s, s) = B_sᵀ
            let mut dxf = DMatrix::zeros(tau * n, tau * n);
            let mut duf = DMatrix::zeros(tau * m, tau * n);
            for (t, (a, b)) in jac.iter().enumerate() {
                if t >= 1 {
                    dxf.view_mut(((t - 1) * n, t * n), (n, n)).copy_from(&a.transpose());
                }
                duf.view_mut((t * m, t * n), (m, n)).copy_from(&b.transpose());
            }
            let resolvent = DMatrix::identity(tau * n, tau * n) - dxf;
            // G (I − ∇_xF) = ∇_uF  ⇔  (I − ∇_xF)ᵀ Gᵀ = ∇_uFᵀ
            let gt = resolvent
                .transpose()
                .lu()
                .solve(&duf.transpose())
                .ok_or(DenseError::Singular)?;
            gt.transpose()
        }
    };
    Ok(DenseJacobian {
        g,
        horizon: tau,
        n_x: n,
        n_u: m,
    })
}

/// Block-diagonal assembly of the Hessian blocks.
pub fn block_diagonal(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        out.view_mut((off, off), b.shape()).copy_from(b);
        off += b.nrows();
    }
    out
}

/// `v = −(G H Gᵀ + νI)⁻¹ G ∇h`.
pub fn dense_ggn_step(
    jac: &DenseJacobian,
    hess: &[DMatrix<f64>],
    grad: &DVector<f64>,
    nu: f64,
) -> Result<Command, DenseError> {
    let h = block_diagonal(hess);
    let mut sys = &jac.g * h * jac.g.transpose();
    for i in 0..sys.nrows() {
        sys[(i, i)] += nu;
    }
    let sys = (&sys + sys.transpose()) * 0.5;
    let rhs = &jac.g * grad;
    let chol = sys.cholesky().ok_or(DenseError::Singular)?;
    let v = -chol.solve(&rhs);
    Ok(Command::from_stacked(&v, jac.horizon, jac.n_u))
}

/// Convenience: the dense step from a linear-quadratic model.
pub fn dense_ggn_step_from_model(model: &LinQuadModel, nu: f64) -> Result<Command, DenseError> {
    let jac = model_jacobian(model)?;
    dense_ggn_step(&jac, &model.hess, &stack(&model.grad), nu)
}

/// `G` assembled from the model's `(A_t, B_t)`.
pub fn model_jacobian(model: &LinQuadModel) -> Result<DenseJacobian, DenseError> {
    let (n, m, tau) = (model.state_dim(), model.control_dim(), model.horizon());
    guard(tau, n, m)?;
    let mut gt = DMatrix::zeros(tau * n, tau * m);
    let mut sens: Vec<DMatrix<f64>> = Vec::with_capacity(tau);
    for t in 0..tau {
        for s_mat in sens.iter_mut() {
            *s_mat = &model.a[t] * &*s_mat;
        }
        sens.push(model.b[t].clone());
        for (s, s_mat) in sens.iter().enumerate() {
            gt.view_mut((t * n, s * m), (n, m)).copy_from(s_mat);
        }
    }
    Ok(DenseJacobian {
        g: gt.transpose(),
        horizon: tau,
        n_x: n,
        n_u: m,
    })
}

pub fn sigma_min_traj(jac: &DenseJacobian) -> f64 {
    sigma_min(&jac.g)
}

/// Exact minimum of the tail problem from `y_t` at time `t`:
/// `Σ_{s=t}^{τ} ½z_sᵀP_s z_s + p_sᵀz_s + (ν/2)Σ_{s=t}^{τ−1}‖v_s‖²`, `z_t = y_t`,
/// with no stage cost at `s = 0`. Returns the value and `v_t, …, v_{τ−1}`.
pub fn tail_lqr_qp(
    model: &LinQuadModel,
    nu: f64,
    t: usize,
    y_t: &DVector<f64>,
) -> Result<(f64, Vec<DVector<f64>>), DenseError> {
    let (n, m, tau) = (model.state_dim(), model.control_dim(), model.horizon());
    guard(tau, n, m)?;
    assert!(t <= tau, "tail start beyond horizon");
    let stage = |s: usize| -> (DMatrix<f64>, DVector<f64>) {
        if s == 0 {
            (DMatrix::zeros(n, n), DVector::zeros(n))
        } else {
            (model.hess[s - 1].clone(), model.grad[s - 1].clone())
        }
    };
    let (p_t, q_t) = stage(t);
    let mut value0 = 0.5 * y_t.dot(&(&p_t * y_t)) + q_t.dot(y_t);
    let k = tau - t;
    if k == 0 {
        return Ok((value0, Vec::new()));
    }
    // z_{t+i} = free[i] + lin[i] v, i = 1..=k
    let mut free = y_t.clone();
    let mut lin = DMatrix::<f64>::zeros(n, k * m);
    let mut hess = DMatrix::<f64>::identity(k * m, k * m) * nu;
    let mut grad = DVector::<f64>::zeros(k * m);
    for i in 0..k {
        let s = t + i;
        free = &model.a[s] * free;
        lin = &model.a[s] * lin;
        lin.view_mut((0, i * m), (n, m)).copy_from(&model.b[s]);
        let (ps, qs) = stage(s + 1);
        hess += lin.transpose() * &ps * &lin;
        grad += lin.transpose() * (&ps * &free + &qs);
        value0 += 0.5 * free.dot(&(&ps * &free)) + qs.dot(&free);
    }
    let hess = (&hess + hess.transpose()) * 0.5;
    let chol = hess.cholesky().ok_or(DenseError::Singular)?;
    let v = -chol.solve(&grad);
    let value = value0 + 0.5 * grad.dot(&v);
    Ok((value, (0..k).map(|i| v.rows(i * m, m).into_owned()).collect()))
}

/// Central differences with per-coordinate step `h`.
pub fn fd_gradient<F: Fn(&DVector<f64>) -> f64>(func: F, point: &DVector<f64>, h: f64) -> DVector<f64> {
    let mut g = DVector::zeros(point.len());
    let mut p = point.clone();
    for i in 0..point.len() {
        let xi = point[i];
        p[i] = xi + h;
        let fp = func(&p);
        p[i] = xi - h;
        let fm = func(&p);
        p[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// The default step `1e−6·(1 + ‖arg‖)`.
pub fn fd_step(point: &DVector<f64>) -> f64 {
    1e-6 * (1.0 + point.norm())
}

/// Central-difference Jacobian of a vector map, `out × in`.
pub fn fd_jacobian<F: Fn(&DVector<f64>) -> DVector<f64>>(func: F, point: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let f0 = func(point);
    let mut jac = DMatrix::zeros(f0.len(), point.len());
    let mut p = point.clone();
    for i in 0..point.len() {
        let xi = point[i];
        p[i] = xi + h;
        let fp = func(&p);
        p[i] = xi - h;
        let fm = func(&p);
        p[i] = xi;
        jac.set_column(i, &((fp - fm) / (2.0 * h)));
    }
    jac
}

/// Finite-difference `(A, B)` of a dynamic.
pub fn fd_dynamics_jacobians(
    dynamic: &dyn Dynamic,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let a = fd_jacobian(|xx| dynamic.eval(xx, u), x, fd_step(x));
    let b = fd_jacobian(|uu| dynamic.eval(x, uu), u, fd_step(u));
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::LinearDynamic;

    fn scalar_linear(a: f64, b: f64) -> LinearDynamic {
        LinearDynamic::new(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, b)).unwrap()
    }

    #[test]
    fn two_step_scalar_jacobian() {
        let (a, b) = (0.7, 1.3);
        let dynamic = scalar_linear(a, b);
        let u = Command::zeros(2, 1);
        for asm in [Assembly::ChainRule, Assembly::Resolvent] {
            let j = dense_jacobian(&dynamic, &DVector::zeros(1), &u, asm).unwrap();
            let gt = j.g.transpose();
            let expected = DMatrix::from_row_slice(2, 2, &[b, 0.0, a * b, b]);
            assert!((gt - expected).amax() < 1e-15);
        }
    }

    #[test]
    fn unit_chain_sigma_min() {
        let j = dense_jacobian(
            &scalar_linear(1.0, 1.0),
            &DVector::zeros(1),
            &Command::zeros(2, 1),
            Assembly::ChainRule,
        )
        .unwrap();
        assert!((sigma_min_traj(&j) - ((3.0 - 5f64.sqrt()) / 2.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn no_state_memory_gives_block_diagonal() {
        let dynamic = LinearDynamic::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2)).unwrap();
        let j = dense_jacobian(&dynamic, &DVector::zeros(2), &Command::zeros(3, 2), Assembly::Resolvent).unwrap();
        assert_eq!(j.g, DMatrix::identity(6, 6));
        assert!((sigma_min_traj(&j) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn scalar_ggn_step() {
        let jac = DenseJacobian {
            g: DMatrix::from_element(1, 1, 1.0),
            horizon: 1,
            n_x: 1,
            n_u: 1,
        };
        let v = dense_ggn_step(
            &jac,
            &[DMatrix::from_element(1, 1, 1.0)],
            &DVector::from_element(1, 1.0),
            1.0,
        )
        .unwrap();
        assert!((v.controls[0][0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn identity_jacobian_gives_newton_step() {
        let jac = DenseJacobian {
            g: DMatrix::identity(2, 2),
            horizon: 1,
            n_x: 2,
            n_u: 2,
        };
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let g = DVector::from_vec(vec![1.0, -1.0]);
        let v = dense_ggn_step(&jac, std::slice::from_ref(&h), &g, 0.0).unwrap();
        let newton = -h.lu().solve(&g).unwrap();
        assert!((v.stacked() - newton).norm() < 1e-14);
    }

    #[test]
    fn scalar_tail_value() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let model = LinQuadModel {
            a: vec![one.clone()],
            b: vec![one.clone()],
            hess: vec![one],
            grad: vec![DVector::from_element(1, 1.0)],
        };
        let (val, v) = tail_lqr_qp(&model, 1.0, 0, &DVector::zeros(1)).unwrap();
        assert!((val + 0.25).abs() < 1e-15);
        assert!((v[0][0] + 0.5).abs() < 1e-15);
        let zero = LinQuadModel {
            grad: vec![DVector::zeros(1)],
            ..model
        };
        let (val, v) = tail_lqr_qp(&zero, 1.0, 0, &DVector::zeros(1)).unwrap();
        assert_eq!(val, 0.0);
        assert_eq!(v[0][0], 0.0);
    }

    #[test]
    fn fd_of_constant_and_half_square() {
        let p = DVector::from_vec(vec![0.3, -2.0, 1.5]);
        assert_eq!(fd_gradient(|_| 4.0, &p, 1e-6).norm(), 0.0);
        let g = fd_gradient(|x| 0.5 * x.norm_squared(), &p, 1e-5);
        assert!((g - &p).amax() < 1e-9);
    }

    #[test]
    fn size_guard() {
        let dynamic = scalar_linear(1.0, 1.0);
        let err = dense_jacobian(
            &dynamic,
            &DVector::zeros(1),
            &Command::zeros(300, 1),
            Assembly::ChainRule,
        );
        assert!(matches!(err, Err(DenseError::TooLarge { size: 600 })));
    }
}
