mod common;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use common::*;
use ggn::analysis::{schedule_constants, trajectory_constants};
use ggn::cost::QuadraticTracking;
use ggn::dense_ref::{
    block_diagonal, dense_ggn_step_from_model, fd_gradient, fd_step, model_jacobian, sigma_min_traj, tail_lqr_qp,
};
use ggn::dynamics::LinearDynamic;
use ggn::linalg::stack;
use ggn::solver::{
    backward_pass, model_gradient, oracle_step, rollout_ddp, rollout_lqr, schedule_linesearch, schedule_theorem3,
    schedule_theorem5, schedule_theorem6, solve, Algorithm, Command, Problem, Schedule, ScheduleConstants, SolveStatus,
    SolverConfig, SolverError, Stopping,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    /// The dynamic-programming direction equals the dense regularized GGN step.
    #[test]
    fn riccati_direction_is_the_ggn_step(
        seed in 0u64..100_000, tau in 1usize..=10, n in 1usize..=4, m in 1usize..=4, nu_pick in 0usize..3,
    ) {
        let nu = [1e-3, 1.0, 1e3][nu_pick];
        let model = random_model(&mut rng(seed), tau, n, m);
        let v = rollout_lqr(&backward_pass(&model, nu).unwrap(), &model).stacked();
        let w = dense_ggn_step_from_model(&model, nu).unwrap().stacked();
        prop_assert!((&v - &w).norm() <= 1e-8 * w.norm().max(1e-300));
    }

    /// `½y ᵀJ_t y + j_tᵀy + c_t` is the optimal tail value.
    #[test]
    fn cost_to_go_is_exact(seed in 0u64..100_000, tau in 1usize..=8, n in 1usize..=3, m in 1usize..=3) {
        let mut r = rng(seed);
        let model = random_model(&mut r, tau, n, m);
        let nu = 0.5;
        let pol = backward_pass(&model, nu).unwrap();
        let t = rand::Rng::gen_range(&mut r, 0..=tau);
        let y = rand_vec(&mut r, n, 2.0);
        let (value, _) = tail_lqr_qp(&model, nu, t, &y).unwrap();
        let got = pol.cost_to_go(t, &y);
        prop_assert!((got - value).abs() <= 1e-8 * value.abs().max(1.0));
    }

    /// `const₀ = ½∇J ᵀv`, the model decrease used by the acceptance test.
    #[test]
    fn expected_decrease_identity(seed in 0u64..100_000, tau in 1usize..=10, n in 1usize..=4, m in 1usize..=4) {
        let model = random_model(&mut rng(seed), tau, n, m);
        let pol = backward_pass(&model, 0.1).unwrap();
        let v = rollout_lqr(&pol, &model);
        let half = 0.5 * model_gradient(&model).dot(&v);
        prop_assert!((pol.const0() - half).abs() <= 1e-8 * half.abs().max(1e-12));
        prop_assert!(pol.const0() <= 0.0);
    }

    /// `‖v‖ ≤ ‖G∇h‖/(μσ² + ν)` when the stage Hessians are at least `μI`.
    #[test]
    fn oracle_norm_bound(seed in 0u64..100_000, tau in 1usize..=6, n in 1usize..=3, nu in 1e-3f64..1e3) {
        let mut r = rng(seed);
        let mut model = random_model(&mut r, tau, n, n);
        let mu = 0.3;
        for h in model.hess.iter_mut() {
            *h += DMatrix::identity(n, n) * mu;
        }
        let jac = model_jacobian(&model).unwrap();
        let sigma = sigma_min_traj(&jac);
        let g_grad = (&jac.g * stack(&model.grad)).norm();
        let v = rollout_lqr(&backward_pass(&model, nu).unwrap(), &model);
        prop_assert!(v.norm() <= g_grad / (mu * sigma * sigma + nu) * (1.0 + 1e-9));
    }

    /// With linear dynamics the two roll-outs coincide.
    #[test]
    fn ddp_equals_lqr_for_linear_dynamics(seed in 0u64..100_000, tau in 1usize..=10) {
        let mut r = rng(seed);
        let lin = LinearDynamic::new(rand_mat(&mut r, 3, 3, 0.8), rand_mat(&mut r, 3, 2, 1.0)).unwrap();
        let cost = QuadraticTracking::isotropic(rand_vec(&mut r, 3, 1.0), 1.0, tau).unwrap();
        let p = Problem::new(Arc::new(lin), Arc::new(cost), rand_vec(&mut r, 3, 1.0)).unwrap();
        let u = random_command(&mut r, tau, 2, 1.0);
        let (traj, _, model) = p.forward_pass(&u).unwrap();
        let pol = backward_pass(&model, 0.7).unwrap();
        let a = rollout_lqr(&pol, &model).stacked();
        let b = rollout_ddp(&pol, p.dynamic.as_ref(), &traj, &u).unwrap().stacked();
        prop_assert!((&a - &b).amax() <= 1e-10 * (1.0 + a.amax()));
    }

    /// Linear dynamics and a quadratic cost make the model exact:
    /// `J(u + v) = J(u) + ∇Jᵀv + ½vᵀGᵀHGv`.
    #[test]
    fn model_is_exact_for_linear_quadratic(seed in 0u64..100_000, tau in 1usize..=6) {
        let mut r = rng(seed);
        let lin = LinearDynamic::new(rand_mat(&mut r, 2, 2, 0.8), rand_mat(&mut r, 2, 2, 1.0)).unwrap();
        let cost = QuadraticTracking::diagonal(rand_vec(&mut r, 2, 1.0), &[1.0, 2.0], tau).unwrap();
        let p = Problem::new(Arc::new(lin), Arc::new(cost), rand_vec(&mut r, 2, 1.0)).unwrap();
        let u = random_command(&mut r, tau, 2, 1.0);
        let v = random_command(&mut r, tau, 2, 1.0);
        let (_, value, model) = p.forward_pass(&u).unwrap();
        let jac = model_jacobian(&model).unwrap();
        let gv = jac.g.transpose() * v.stacked();
        let quad = 0.5 * gv.dot(&(block_diagonal(&model.hess) * &gv));
        let predicted = value + model_gradient(&model).dot(&v) + quad;
        let actual = p.objective(&u.plus(&v)).unwrap();
        prop_assert!((predicted - actual).abs() <= 1e-10 * actual.abs().max(1.0));
    }
}

#[test]
fn adjoint_gradient_matches_finite_differences() {
    let mut r = rng(21);
    for (name, p) in zoo(20) {
        let m = p.dynamic.control_dim();
        for _ in 0..3 {
            let u = random_command(&mut r, 20, m, 0.5);
            let (_, _, model) = p.forward_pass(&u).unwrap();
            let g = model_gradient(&model).stacked();
            let point = u.stacked();
            let fd = fd_gradient(
                |z| p.objective(&Command::from_stacked(z, 20, m)).unwrap(),
                &point,
                fd_step(&point),
            );
            let err = (&g - &fd).norm() / g.norm().max(1e-12);
            assert!(err <= 1e-5, "{name}: relative gradient error {err}");
        }
    }
}

#[test]
fn oracle_step_agrees_with_dense_path() {
    for (name, p) in zoo(6) {
        let u = p.zero_command();
        let v = oracle_step(&p, &u, 0.3).unwrap().stacked();
        let (_, _, model) = p.forward_pass(&u).unwrap();
        let w = dense_ggn_step_from_model(&model, 0.3).unwrap().stacked();
        assert!((&v - &w).norm() <= 1e-9 * w.norm().max(1e-12), "{name}");
    }
}

#[test]
fn regularization_must_be_positive_when_model_is_singular() {
    let model = ggn::solver::LinQuadModel {
        a: vec![DMatrix::zeros(1, 1)],
        b: vec![DMatrix::zeros(1, 1)],
        hess: vec![DMatrix::zeros(1, 1)],
        grad: vec![DVector::from_element(1, 1.0)],
    };
    assert!(matches!(
        backward_pass(&model, 0.0),
        Err(SolverError::RegularizationTooSmall { .. })
    ));
    assert!(backward_pass(&model, 1e-9).is_ok());
}

fn fixture_constants(p: &Problem, tau: usize) -> ScheduleConstants {
    let dc = ggn::dynamics::estimate_constants(
        p.dynamic.as_ref(),
        &ggn::dynamics::SamplingBox::cube(p.dynamic.state_dim(), p.dynamic.control_dim(), 3.0, 3.0),
        300,
        1,
    )
    .unwrap();
    let tc = trajectory_constants(&dc, tau).unwrap();
    schedule_constants(&tc, &p.cost.constants(), Some(1e-3))
}

#[test]
fn every_accepted_step_satisfies_sufficient_decrease() {
    let tau = 12;
    for (name, p) in zoo(tau) {
        let sc = fixture_constants(&p, tau);
        let surjective = p.dynamic.control_dim() >= p.dynamic.state_dim();
        let mut configs = vec![
            (Algorithm::Ilqr, Schedule::default()),
            (Algorithm::Iddp, Schedule::default()),
            (Algorithm::Gd, Schedule::default()),
        ];
        if surjective {
            configs.push((Algorithm::Ilqr, Schedule::Theorem5));
            configs.push((Algorithm::Ilqr, Schedule::Theorem3));
            configs.push((Algorithm::Iddp, Schedule::Theorem6));
        }
        for (algorithm, schedule) in configs {
            let cfg = SolverConfig {
                algorithm,
                schedule: schedule.clone(),
                constants: Some(sc.clone()),
                stopping: Stopping {
                    max_iters: 300,
                    grad_tol: 1e-8,
                    gap_tol: None,
                },
                ..SolverConfig::default()
            };
            let trace = solve(&p, &cfg, &p.zero_command()).unwrap_or_else(|f| panic!("{name}: {}", f.error));
            for w in trace.records.windows(2) {
                assert!(
                    w[1].objective <= w[0].objective + 1e-12 * w[0].objective.abs().max(1.0),
                    "{name}: not monotone"
                );
            }
            for rec in trace.records.iter().filter(|r| r.accepted) {
                assert!(
                    rec.decrease_slack.unwrap() >= -1e-10,
                    "{name} {schedule:?}: slack {:?}",
                    rec.decrease_slack
                );
                assert!(rec.expected_decrease.unwrap() <= 0.0);
            }
            if algorithm != Algorithm::Gd {
                assert!(
                    trace.status.converged(),
                    "{name} {algorithm:?} {schedule:?}: {:?}",
                    trace.status
                );
            }
        }
    }
}

#[test]
fn max_iters_zero_records_only_the_start() {
    let (_, p) = zoo(5).remove(0);
    let cfg = SolverConfig {
        stopping: Stopping {
            max_iters: 0,
            grad_tol: 0.0,
            gap_tol: None,
        },
        ..SolverConfig::default()
    };
    let t = solve(&p, &cfg, &p.zero_command()).unwrap();
    assert_eq!(t.records.len(), 1);
    assert_eq!(t.status, SolveStatus::MaxIters);
    assert!(!t.records[0].accepted);
}

#[test]
fn gap_tolerance_stops_early() {
    let (_, p) = zoo(5).remove(3);
    let p = p.clone().with_optimal_value(p.cost.min_value());
    let cfg = SolverConfig {
        stopping: Stopping {
            max_iters: 200,
            grad_tol: 0.0,
            gap_tol: Some(1e-4),
        },
        ..SolverConfig::default()
    };
    let t = solve(&p, &cfg, &p.zero_command()).unwrap();
    assert_eq!(t.status, SolveStatus::GapTol);
    assert!(t.records.last().unwrap().gap.unwrap() <= 1e-4);
}

#[test]
fn theorem_schedules_need_constants() {
    let (_, p) = zoo(3).remove(0);
    let cfg = SolverConfig {
        schedule: Schedule::Theorem5,
        ..SolverConfig::default()
    };
    assert!(matches!(
        solve(&p, &cfg, &p.zero_command()).unwrap_err().error,
        SolverError::MissingConstants(_)
    ));
}

#[test]
fn schedules_reduce_to_closed_forms() {
    let c = ScheduleConstants {
        l_g: 1.0,
        big_l_g: 1.0,
        sigma_g: 1.0,
        mu_h: 1.0,
        l_h: 1.0,
        m_h: 0.0,
        eta: Some(0.0),
    };
    assert_eq!(schedule_linesearch(3.0, 0.5), 1.5);
    // T5 with unit constants and M_h = 0: ν = x + 2x/(x + 1)
    assert!((schedule_theorem5(1.0, &c).unwrap() - 2.0).abs() < 1e-15);
    // T6 with η = 0 reduces to T5's first order part: x(1 + 1)(1) = 2x
    assert!((schedule_theorem6(1.0, &c).unwrap().nu - 2.0).abs() < 1e-15);
    assert!(schedule_theorem3(0.0, &c).nu == 0.0);
    for x in [0.1, 1.0, 10.0] {
        assert!(schedule_theorem3(2.0 * x, &c).nu >= schedule_theorem3(x, &c).nu);
        assert!(schedule_theorem5(2.0 * x, &c).unwrap() >= schedule_theorem5(x, &c).unwrap());
    }
}
