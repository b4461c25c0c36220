#![allow(dead_code)]

use std::f64::consts::PI;

use demailly::homotopy::Problem;
use demailly::model::{BundleSpec, CurvaturePerturbation, ParamsInput};
use demailly::{Grid, ScalarField};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random trigonometric polynomial with |k| ≤ `kmax` and sup-norm exactly `amplitude`.
pub fn smooth_field(grid: &Grid, rng: &mut ChaCha8Rng, kmax: i64, amplitude: f64) -> ScalarField {
    let mut acc = ScalarField::zeros(grid);
    for kx in -kmax..=kmax {
        for ky in 0..=kmax {
            let a: f64 = rng.gen_range(-1.0..1.0);
            let phase: f64 = rng.gen_range(0.0..2.0 * PI);
            let mode = ScalarField::from_fn(grid, |x, y| {
                (2.0 * PI * (kx as f64 * x + ky as f64 * y) + phase).cos()
            });
            acc.axpy(a, &mode);
        }
    }
    let sup = acc.sup_norm();
    acc.scale(amplitude / sup)
}

pub fn params(lambda: Option<f64>, alpha0: Option<f64>) -> ParamsInput {
    ParamsInput {
        lambda,
        alpha0,
        ..ParamsInput::default()
    }
}

/// r = 2, d = (1, 3), α0 = 10, λ = 8 with the given perturbation.
pub fn reference_problem(perturbation: CurvaturePerturbation, n: usize) -> Problem {
    let spec = BundleSpec::new(vec![1, 3], perturbation).unwrap();
    Problem::new(&spec, &params(Some(8.0), Some(10.0)), n).unwrap()
}

/// `(1/λ) ln(Π(d_i/d + (1−t)α0) / Π(d_i/d + α0))`, evaluated directly.
pub fn closed_form_f(degrees: &[i64], lambda: f64, alpha0: f64, t: f64) -> f64 {
    let d: i64 = degrees.iter().sum();
    let mut num = 1.0;
    let mut den = 1.0;
    for &di in degrees {
        let share = di as f64 / d as f64;
        num *= share + (1.0 - t) * alpha0;
        den *= share + alpha0;
    }
    (num / den).ln() / lambda
}
