#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ggn::cost::{QuadraticTracking, SmoothPerturbed, StageCost};
use ggn::dynamics::{brunovsky, ChainSystem, Dynamic, LinearDynamic, MultiRate, Pendulum, Psi};
use ggn::solver::{Command, LinQuadModel, Problem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_mat<R: Rng>(rng: &mut R, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-scale..scale))
}

pub fn rand_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-scale..scale))
}

/// `LLᵀ` with a random rank between 0 and `n`, so some weights are singular.
pub fn rand_psd<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let rank = rng.gen_range(0..=n);
    let l = rand_mat(rng, n, rank, 1.0);
    let w = &l * l.transpose();
    (&w + w.transpose()) * 0.5
}

pub fn random_model<R: Rng>(rng: &mut R, tau: usize, n: usize, m: usize) -> LinQuadModel {
    LinQuadModel {
        a: (0..tau).map(|_| rand_mat(rng, n, n, 0.8)).collect(),
        b: (0..tau).map(|_| rand_mat(rng, n, m, 1.0)).collect(),
        hess: (0..tau).map(|_| rand_psd(rng, n)).collect(),
        grad: (0..tau).map(|_| rand_vec(rng, n, 1.0)).collect(),
    }
}

pub fn random_command<R: Rng>(rng: &mut R, tau: usize, m: usize, scale: f64) -> Command {
    Command {
        controls: (0..tau).map(|_| rand_vec(rng, m, scale)).collect(),
    }
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn stabilized_chain(n_x: usize) -> ChainSystem {
    let gains = match n_x {
        2 => vec![3.2, 3.6],
        3 => vec![1.0, 2.5, 2.5],
        _ => vec![0.5; n_x],
    };
    ChainSystem::new(
        n_x,
        0.5,
        Psi::TanhMargin {
            margin: 0.1,
            state_gains: DVector::from_vec(gains),
        },
    )
    .unwrap()
}

/// Named problems covering every dynamic and cost in the zoo.
pub fn zoo(tau: usize) -> Vec<(&'static str, Problem)> {
    let mut r = rng(11);
    let mut out: Vec<(&'static str, Problem)> = Vec::new();

    let lin: Arc<dyn Dynamic> =
        Arc::new(LinearDynamic::new(rand_mat(&mut r, 3, 3, 0.6), rand_mat(&mut r, 3, 2, 1.0)).unwrap());
    let cost: Arc<dyn StageCost> =
        Arc::new(QuadraticTracking::diagonal(DVector::from_vec(vec![1.0, -1.0, 0.5]), &[1.0, 2.0, 0.5], tau).unwrap());
    out.push((
        "linear",
        Problem::new(lin, cost, DVector::from_vec(vec![0.1, 0.2, -0.3])).unwrap(),
    ));

    let bru: Arc<dyn Dynamic> = Arc::new(brunovsky(3).unwrap());
    let cost: Arc<dyn StageCost> =
        Arc::new(QuadraticTracking::isotropic(DVector::from_vec(vec![1.0, 0.0, 0.0]), 1.0, tau).unwrap());
    out.push(("brunovsky", Problem::new(bru, cost, DVector::zeros(3)).unwrap()));

    let chain: Arc<dyn Dynamic> = Arc::new(stabilized_chain(2));
    let cost: Arc<dyn StageCost> =
        Arc::new(SmoothPerturbed::new(1.0, 3.0, 2.0, vec![DVector::from_vec(vec![0.5, -0.2]); tau]).unwrap());
    out.push((
        "chain",
        Problem::new(chain.clone(), cost, DVector::from_vec(vec![0.3, 0.1])).unwrap(),
    ));

    let mr: Arc<dyn Dynamic> = Arc::new(MultiRate::new(chain, 2).unwrap());
    let cost: Arc<dyn StageCost> =
        Arc::new(QuadraticTracking::isotropic(DVector::from_vec(vec![1.0, 0.0]), 1.0, tau).unwrap());
    out.push(("multirate_chain", Problem::new(mr, cost, DVector::zeros(2)).unwrap()));

    let pend: Arc<dyn Dynamic> = Arc::new(Pendulum {
        dt: 0.1,
        stiffness: 9.81,
        damping: 0.2,
    });
    let cost: Arc<dyn StageCost> = Arc::new(
        SmoothPerturbed::new(
            0.5,
            2.0,
            1.0,
            vec![DVector::from_vec(vec![std::f64::consts::PI, 0.0]); tau],
        )
        .unwrap(),
    );
    out.push((
        "pendulum",
        Problem::new(pend, cost, DVector::from_vec(vec![0.2, 0.0])).unwrap(),
    ));
    out
}

/// Adaptive Simpson on `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, m, fm, whole, tol, 40)
}
