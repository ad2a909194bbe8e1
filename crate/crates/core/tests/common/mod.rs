#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use wavefilter::filters::GaussianPrior;
use wavefilter::{
    build_basis, Component, Functional, LinearObservation, ModelSpec, NoiseCoupling, NoiseSpec, ObservationOperator,
    Part, SignalModel, WienerSpec,
};

/// Four-mode linear paraxial model with additive noise, observed through the
/// real part of the field at grid point 0 and the imaginary part of mode 1.
pub struct LinearBenchmark {
    pub model: SignalModel,
    pub op: ObservationOperator,
    pub prior: GaussianPrior,
}

impl LinearBenchmark {
    pub fn new() -> Self {
        let spec = ModelSpec { linear: true, ..ModelSpec::paraxial(1, 4) };
        let basis = build_basis(&spec).unwrap();
        let m = basis.num_modes();
        let noise = NoiseSpec {
            wiener: WienerSpec { lambdas: vec![0.4; m] },
            coupling: NoiseCoupling::Additive { scale: vec![1.0; m] },
            ..NoiseSpec::silent(m)
        };
        let op = ObservationOperator::new(
            vec![
                Functional::GridPoint { component: Component::Primary, point: 0, part: Part::Re },
                Functional::Mode { component: Component::Primary, index: 1, part: Part::Im },
            ],
            &basis,
        )
        .unwrap();
        let mean = DVector::from_vec(vec![1.0, -0.5, 0.8, 0.3, -0.4, 0.6, 0.2, -0.9]);
        let prior = GaussianPrior::isotropic(mean, 0.25);
        Self { model: SignalModel::new(basis, noise).unwrap(), op, prior }
    }

    pub fn linear(&self) -> LinearObservation {
        self.op.linear().unwrap()
    }

    pub fn forcing(&self) -> DMatrix<f64> {
        self.model.forcing_matrix(&wavefilter::FieldState::zeros(&self.model.basis))
    }
}

/// Random matrix with entries uniform in `[-1, 1)`, shifted by `-shift·I`.
pub fn random_matrix(rng: &mut impl rand::Rng, rows: usize, cols: usize, shift: f64) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
    for i in 0..rows.min(cols) {
        m[(i, i)] -= shift;
    }
    m
}

pub fn random_spd(rng: &mut impl rand::Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let b = random_matrix(rng, n, n, 0.0);
    &b * b.transpose() / n as f64 + DMatrix::identity(n, n) * floor
}
