#![allow(dead_code)]

use nalgebra::DMatrix;
use sabre_core::rng::{Purpose, StreamKey};
use sabre_core::{Dataset, Model};

/// Draws `x ~ N(0, I)`, `z ~ U(0, 1)` and `y` from `model` at
/// `ν = xᵀβ + m(z)`. Each observation has its own stream.
pub fn simulate(
    model: &Model,
    beta: &[f64],
    m: impl Fn(f64) -> f64,
    phi: f64,
    n: usize,
    seed: u64,
) -> Dataset {
    let p = beta.len();
    let mut x = DMatrix::zeros(n, p);
    let mut z = vec![0.0; n];
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = StreamKey::new(seed, Purpose::MonteCarlo, 0, i as u64).stream();
        for j in 0..p {
            x[(i, j)] = s.standard_normal();
        }
        z[i] = s.uniform();
        let nu: f64 = (0..p).map(|j| x[(i, j)] * beta[j]).sum::<f64>() + m(z[i]);
        y[i] = model.sample(nu, phi, &mut s).unwrap();
    }
    Dataset::new(x, z, y).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
