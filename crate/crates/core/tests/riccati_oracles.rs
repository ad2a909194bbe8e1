mod common;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wavefilter::filters::{
    chandrasekhar_integrate, kalman_step_ito, kalman_step_whitenoise, riccati_integrate, riccati_path,
    ChandrasekharState, KalmanState, RiccatiState,
};
use wavefilter::{LinearObservation, LinearizedOperator};

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

/// Closed-form solution of `ṗ = 2ap − h²p² + q` through its two roots.
fn scalar_riccati(a: f64, h: f64, q: f64, p0: f64, t: f64) -> f64 {
    let disc = (a * a + h * h * q).sqrt();
    let (hi, lo) = ((a + disc) / (h * h), (a - disc) / (h * h));
    let c = (p0 - hi) / (p0 - lo);
    let e = (-2.0 * disc * t).exp();
    (hi - c * lo * e) / (1.0 - c * e)
}

#[test]
fn scalar_riccati_matches_closed_form() {
    let (a, h, q) = (0.3, 1.5, 0.4);
    let am = LinearizedOperator::from_matrix(scalar(a)).unwrap();
    let obs = LinearObservation::new(scalar(h));
    for p0 in [0.0, 0.5, 3.0] {
        for t in [0.1, 0.7, 2.0] {
            let got = riccati_integrate(&scalar(p0), &am, &obs, &scalar(q), t, 1e-3).unwrap().p[(0, 0)];
            let want = scalar_riccati(a, h, q, p0, t);
            assert!((got - want).abs() < 1e-8, "p0={p0} t={t}: {got} vs {want}");
        }
    }
}

#[test]
fn scalar_riccati_reaches_quadratic_root() {
    let (a, h, q) = (-0.5f64, 1.0, 0.2);
    let p_star = (a + (a * a + h * h * q).sqrt()) / (h * h);
    let am = LinearizedOperator::from_matrix(scalar(a)).unwrap();
    let obs = LinearObservation::new(scalar(h));
    let p = riccati_integrate(&scalar(1.0), &am, &obs, &scalar(q), 20.0, 1e-2).unwrap();
    assert!((p.p[(0, 0)] - p_star).abs() < 1e-8);
}

/// `e^{At} P0 e^{Aᵀt} + ∫₀ᵗ e^{As} F e^{Aᵀs} ds`, the integral from the
/// block exponential of `[[−A, F], [0, Aᵀ]]`.
fn lyapunov_oracle(a: &DMatrix<f64>, f: &DMatrix<f64>, p0: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(-a));
    block.view_mut((0, n), (n, n)).copy_from(f);
    block.view_mut((n, n), (n, n)).copy_from(&a.transpose());
    let e = (block * t).exp();
    let phi22 = e.view((n, n), (n, n)).into_owned();
    let phi12 = e.view((0, n), (n, n)).into_owned();
    let s = (a * t).exp();
    &s * p0 * s.transpose() + phi22.transpose() * phi12
}

#[test]
fn unobserved_riccati_is_lyapunov_flow() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for n in [2, 5, 8] {
        let a = common::random_matrix(&mut rng, n, n, 0.5);
        let f = common::random_spd(&mut rng, n, 0.1);
        let p0 = common::random_spd(&mut rng, n, 0.2);
        let am = LinearizedOperator::from_matrix(a.clone()).unwrap();
        let obs = LinearObservation::new(DMatrix::zeros(1, n));
        let got = riccati_integrate(&p0, &am, &obs, &f, 1.0, 1e-3).unwrap().p;
        let want = lyapunov_oracle(&a, &f, &p0, 1.0);
        assert!((&got - &want).amax() < 1e-8 * want.amax().max(1.0), "n={n}");
    }
}

#[test]
fn every_riccati_step_stays_symmetric_and_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let n = 6;
    let am = LinearizedOperator::from_matrix(common::random_matrix(&mut rng, n, n, 0.0)).unwrap();
    let obs = LinearObservation::new(common::random_matrix(&mut rng, 2, n, 0.0));
    let f = common::random_spd(&mut rng, n, 0.0);
    let path = riccati_path(&DMatrix::zeros(n, n), &am, &obs, &f, 3.0, 1e-2, 1).unwrap();
    assert_eq!(path.p.len(), 301);
    for p in &path.p {
        RiccatiState { p: p.clone(), f: f.clone() }.check().unwrap();
        assert_eq!(p, &p.transpose());
    }
}

#[test]
fn chandrasekhar_agrees_with_riccati_up_to_sixteen() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for n in [2, 8, 16] {
        let am = LinearizedOperator::from_matrix(common::random_matrix(&mut rng, n, n, 2.5)).unwrap();
        let obs = LinearObservation::new(common::random_matrix(&mut rng, 3, n, 0.0));
        let f = common::random_spd(&mut rng, n, 0.05);
        let p0 = common::random_spd(&mut rng, n, 0.1);
        let (t, dt) = (1.0, 1e-4);
        let cs = ChandrasekharState::new(&p0, &am, &obs, &f).unwrap();
        assert_eq!(cs.l, DMatrix::identity(n, n));
        let path = chandrasekhar_integrate(&cs, &am, &obs, t, dt, usize::MAX).unwrap();
        let direct = riccati_integrate(&p0, &am, &obs, &f, t, dt).unwrap().p;
        let gap = (path.p.last().unwrap() - &direct).amax() / direct.amax();
        assert!(gap < 1e-6, "n={n}: {gap}");
        let gain = &direct * obs.h.transpose();
        assert!((path.k.last().unwrap() - gain).amax() < 1e-8 * direct.amax());
    }
}

#[test]
fn scalar_steady_state_filter_has_constant_gain() {
    let (a, h, q) = (-0.5f64, 1.0, 0.2);
    let disc = (a * a + h * h * q).sqrt();
    let p_star = (a + disc) / (h * h);
    let am = LinearizedOperator::from_matrix(scalar(a)).unwrap();
    let obs = LinearObservation::new(scalar(h));
    let cov = RiccatiState::new(scalar(p_star), scalar(q)).unwrap();
    let mut k = KalmanState::new(nalgebra::DVector::from_element(1, 1.0), cov, 0.0).unwrap();
    let dt = 0.01;
    // With Y ≡ 0 the mean contracts at rate a − p* h² = −sqrt(a² + h² q).
    let g = -disc;
    let factor = (1.0 + 0.5 * dt * g) / (1.0 - 0.5 * dt * g);
    for n in 1..=100 {
        k = kalman_step_whitenoise(&k, &[0.0], dt, &am, &obs).unwrap();
        assert!((k.cov.p[(0, 0)] - p_star).abs() < 1e-14);
        assert!((k.mean[0] - factor.powi(n)).abs() < 1e-12);
    }
    assert!((k.mean[0] - (g * 1.0).exp()).abs() < 1e-5);
}

#[test]
fn unobserved_kalman_mean_follows_free_flow() {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 3.0, -3.0, 0.0]);
    let am = LinearizedOperator::from_matrix(a.clone()).unwrap();
    let obs = LinearObservation::new(DMatrix::zeros(1, 2));
    let cov = RiccatiState::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 2)).unwrap();
    let x0 = nalgebra::DVector::from_vec(vec![1.0, 0.0]);
    let mut k = KalmanState::new(x0.clone(), cov, 0.0).unwrap();
    for _ in 0..1000 {
        k = kalman_step_ito(&k, &[0.3], 1e-3, &am, &obs).unwrap();
    }
    let want = a.exp() * x0;
    assert!((k.mean - want).amax() < 1e-5);
}
