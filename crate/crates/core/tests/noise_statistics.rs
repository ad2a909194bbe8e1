use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use wavefilter::{sample_jump_increment, sample_wiener_increment, JumpLaw, JumpSpec, StreamFamily, StreamKey, WienerSpec};

const SAMPLES: usize = 100_000;

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

#[test]
fn wiener_modes_have_trace_class_variances() {
    let spec = WienerSpec { lambdas: vec![1.0, 0.25, 0.04, 0.0] };
    let dt = 0.01;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let draws: Vec<_> = (0..SAMPLES).map(|_| sample_wiener_increment(&spec, dt, &mut rng).unwrap()).collect();
    for (i, &lam) in spec.lambdas.iter().enumerate() {
        let sq: Vec<f64> = draws.iter().map(|d| d[i].norm_sqr()).collect();
        let (m, _) = mean_var(&sq);
        if lam == 0.0 {
            assert_eq!(m, 0.0);
        } else {
            assert!((m / (lam * dt) - 1.0).abs() < 0.05, "mode {i}: {m}");
        }
    }
    // Cross-covariance of Re parts of modes 0 and 1, within 3 standard errors of 0.
    let prod: Vec<f64> = draws.iter().map(|d| d[0].re * d[1].re).collect();
    let (m, v) = mean_var(&prod);
    assert!(m.abs() < 3.0 * (v / SAMPLES as f64).sqrt());
}

#[test]
fn compensated_poisson_is_centered() {
    let (mu, a, dt) = (5.0, 0.7, 0.01);
    let spec = JumpSpec::fixed(vec![mu], vec![a]);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x: Vec<f64> = (0..SAMPLES).map(|_| sample_jump_increment(&spec, dt, &mut rng).unwrap()[0].re).collect();
    let (m, v) = mean_var(&x);
    assert!(m.abs() < 3.0 * (v / SAMPLES as f64).sqrt());
    assert!((v / (mu * a * a * dt) - 1.0).abs() < 0.05);
}

#[test]
fn normal_marks_add_their_spread() {
    let (mu, dt) = (3.0, 0.02);
    let spec = JumpSpec { rates: vec![mu], law: JumpLaw::Normal { mean: vec![0.5], std: vec![0.3] } };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x: Vec<f64> = (0..SAMPLES).map(|_| sample_jump_increment(&spec, dt, &mut rng).unwrap()[0].re).collect();
    let (m, v) = mean_var(&x);
    assert!(m.abs() < 3.0 * (v / SAMPLES as f64).sqrt());
    assert!((v / (mu * (0.25 + 0.09) * dt) - 1.0).abs() < 0.05);
    assert!((spec.lambda_matrix()[(0, 0)] - mu * 0.34).abs() < 1e-12);
}

#[test]
fn stream_windows_are_independent() {
    let spec = WienerSpec { lambdas: vec![1.0] };
    let key = StreamKey::new(4, StreamFamily::Signal);
    let pairs: Vec<(f64, f64)> = (1..=20_000u64)
        .map(|n| {
            let a = sample_wiener_increment(&spec, 1.0, &mut key.rng_at(n)).unwrap()[0].re;
            let b = sample_wiener_increment(&spec, 1.0, &mut key.rng_at(n + 1)).unwrap()[0].re;
            (a, b)
        })
        .collect();
    let prod: Vec<f64> = pairs.iter().map(|(a, b)| a * b).collect();
    let (m, v) = mean_var(&prod);
    assert!(m.abs() < 3.0 * (v / prod.len() as f64).sqrt());
    let again = sample_wiener_increment(&spec, 1.0, &mut key.rng_at(5)).unwrap()[0].re;
    assert_eq!(again, pairs[4].0);
}
