mod common;

use std::sync::Arc;

use nalgebra::DVector;
use proptest::prelude::*;

use common::*;
use ggn::dense_ref::fd_dynamics_jacobians;
use ggn::dynamics::{
    estimate_constants, sample_constants, step, ChainSystem, Dynamic, LinearDynamic, MultiRate, Psi, SamplingBox,
};

fn max_rel_diff(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    (a - b).amax() / a.amax().max(1.0)
}

#[test]
fn zoo_jacobians_match_finite_differences() {
    let mut r = rng(3);
    for (name, p) in zoo(4) {
        let d = p.dynamic.as_ref();
        for _ in 0..20 {
            let x = rand_vec(&mut r, d.state_dim(), 2.0);
            let u = rand_vec(&mut r, d.control_dim(), 2.0);
            let (a, b) = d.jacobians(&x, &u);
            let (fa, fb) = fd_dynamics_jacobians(d, &x, &u);
            assert!(max_rel_diff(&fa, &a) < 1e-6, "{name}: A mismatch");
            assert!(max_rel_diff(&fb, &b) < 1e-6, "{name}: B mismatch");
        }
    }
}

#[test]
fn checked_step_rejects_wrong_sizes() {
    let d = stabilized_chain(2);
    assert!(step(&d, &DVector::zeros(3), &DVector::zeros(1)).is_err());
    assert!(step(&d, &DVector::zeros(2), &DVector::zeros(2)).is_err());
    assert!(step(&d, &DVector::zeros(2), &DVector::zeros(1)).is_ok());
}

#[test]
fn single_rate_wrapper_is_the_base() {
    let base: Arc<dyn Dynamic> = Arc::new(stabilized_chain(2));
    let once = MultiRate::new(base.clone(), 1).unwrap();
    let x = DVector::from_vec(vec![0.3, -0.7]);
    let u = DVector::from_vec(vec![1.1]);
    assert_eq!(once.eval(&x, &u), base.eval(&x, &u));
    assert_eq!(once.jacobians(&x, &u), base.jacobians(&x, &u));
}

#[test]
fn chain_is_euler_integrator_chain() {
    let c = ChainSystem::new(3, 0.25, Psi::Identity).unwrap();
    let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
    let next = c.eval(&y, &DVector::from_vec(vec![4.0]));
    assert_eq!(next, DVector::from_vec(vec![1.5, 2.75, 4.0]));
}

#[test]
fn sampled_constants_of_linear_model_are_exact() {
    let mut r = rng(5);
    let a = rand_mat(&mut r, 3, 3, 1.0);
    let b = rand_mat(&mut r, 3, 3, 1.0);
    let lin = LinearDynamic::new(a, b).unwrap();
    let analytic = lin.analytic_constants().unwrap();
    let region = SamplingBox::cube(3, 3, 2.0, 2.0);
    let sampled = sample_constants(&lin, &region, 50, 9).unwrap();
    assert!(rel(sampled.sigma_f, analytic.sigma_f) < 1e-12);
    assert!(rel(sampled.l_f_x, analytic.l_f_x) < 1e-12);
    assert!(rel(sampled.l_f_u, analytic.l_f_u) < 1e-12);
    assert!(sampled.l_f_xx < 1e-8 && sampled.l_f_uu < 1e-8 && sampled.l_f_xu < 1e-8);
    assert_eq!(sampled.provenance.label(), "sampled");
    assert_eq!(
        estimate_constants(&lin, &region, 50, 9).unwrap().provenance.label(),
        "analytic"
    );
}

#[test]
fn sampled_constants_are_deterministic_per_seed() {
    let c = stabilized_chain(2);
    let region = SamplingBox::cube(2, 1, 1.0, 1.0);
    let a = sample_constants(&c, &region, 30, 4).unwrap();
    let b = sample_constants(&c, &region, 30, 4).unwrap();
    assert_eq!(a, b);
    assert!(sample_constants(&c, &region, 0, 4).is_err());
}

#[test]
fn tanh_chain_curvature_is_bounded_by_margin() {
    // ∂²ψ/∂v² = −2m·sech²·tanh, largest magnitude 4m/(3√3); the step scales it by Δ
    let c = stabilized_chain(2);
    let region = SamplingBox::cube(2, 1, 2.0, 2.0);
    let k = sample_constants(&c, &region, 400, 1).unwrap();
    let exact = 0.5 * 0.1 * 4.0 / (3.0 * 3f64.sqrt());
    assert!(k.l_f_uu <= exact * (1.0 + 1e-3));
    assert!(k.l_f_uu >= 0.5 * exact);
    assert!(k.l_f_xx < 1e-12 && k.l_f_xu < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// `k₁·k₂` steps in one wrapper equal `k₁` wrapped steps of a `k₂` wrapper.
    #[test]
    fn multirate_composes(k1 in 1usize..4, k2 in 1usize..4, seed in 0u64..1000) {
        let mut r = rng(seed);
        let base: Arc<dyn Dynamic> = Arc::new(stabilized_chain(2));
        let flat = MultiRate::new(base.clone(), k1 * k2).unwrap();
        let inner: Arc<dyn Dynamic> = Arc::new(MultiRate::new(base, k2).unwrap());
        let nested = MultiRate::new(inner, k1).unwrap();
        let x = rand_vec(&mut r, 2, 1.0);
        let u = rand_vec(&mut r, k1 * k2, 1.0);
        let (fa, fb) = flat.jacobians(&x, &u);
        let (na, nb) = nested.jacobians(&x, &u);
        prop_assert!((flat.eval(&x, &u) - nested.eval(&x, &u)).amax() < 1e-13);
        prop_assert!((fa - na).amax() < 1e-12);
        prop_assert!((fb - nb).amax() < 1e-12);
    }

    #[test]
    fn multirate_jacobian_matches_fd(k in 1usize..5, seed in 0u64..1000) {
        let mut r = rng(seed);
        let d = MultiRate::new(Arc::new(stabilized_chain(3)), k).unwrap();
        let x = rand_vec(&mut r, 3, 1.0);
        let u = rand_vec(&mut r, k, 1.0);
        let (a, b) = d.jacobians(&x, &u);
        let (fa, fb) = fd_dynamics_jacobians(&d, &x, &u);
        prop_assert!(max_rel_diff(&fa, &a) < 1e-6);
        prop_assert!(max_rel_diff(&fb, &b) < 1e-6);
    }

    #[test]
    fn tanh_margin_inverse(margin in 0.0f64..2.0, target in -50.0f64..50.0, y0 in -3.0f64..3.0) {
        let psi = Psi::TanhMargin { margin, state_gains: DVector::from_vec(vec![0.4, -1.0]) };
        let y = DVector::from_vec(vec![y0, 0.5]);
        let v = psi.solve_control(&y, target).unwrap();
        prop_assert!((psi.value(&y, v) - target).abs() <= 1e-12 * (1.0 + target.abs()));
    }
}
