//! Seeded generators of random spaces, measures, kernels and models.

use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gaussian::{GaussianEOTModel, Mat, Vector};
use crate::measure::{DiscreteSpace, Kernel, Measure};
use crate::sinkhorn::TransportModel;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` increasing points on the line with random positive weights.
pub fn space<R: Rng>(rng: &mut R, n: usize) -> Arc<DiscreteSpace> {
    let mut x = 0.0;
    let xs: Vec<f64> = (0..n)
        .map(|_| {
            x += rng.random_range(0.1..1.0);
            x
        })
        .collect();
    let ws = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
    DiscreteSpace::from_1d(xs, ws).expect("increasing points")
}

/// Probability measure with every point charged.
pub fn probability<R: Rng>(rng: &mut R, space: &Arc<DiscreteSpace>) -> Measure {
    let masses: Vec<f64> = (0..space.len()).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = masses.iter().sum();
    let masses: Vec<f64> = masses.iter().map(|m| m / total).collect();
    Measure::from_masses(space.clone(), &masses).expect("positive masses")
}

/// Probability measure that vanishes on roughly a third of the points (never all).
pub fn sparse_probability<R: Rng>(rng: &mut R, space: &Arc<DiscreteSpace>) -> Measure {
    let n = space.len();
    let keep = rng.random_range(0..n);
    let masses: Vec<f64> = (0..n)
        .map(|i| if i != keep && rng.random_bool(1.0 / 3.0) { 0.0 } else { rng.random_range(0.05..1.0) })
        .collect();
    let total: f64 = masses.iter().sum();
    let masses: Vec<f64> = masses.iter().map(|m| m / total).collect();
    Measure::from_masses(space.clone(), &masses).expect("nonnegative masses")
}

/// Markov kernel with strictly positive entries (or, if `sparse`, some zeros).
pub fn kernel<R: Rng>(rng: &mut R, source: &Arc<DiscreteSpace>, target: &Arc<DiscreteSpace>, sparse: bool) -> Kernel {
    let (n, m) = (source.len(), target.len());
    let table = Array2::from_shape_fn((n, m), |(_, j)| {
        if sparse && j > 0 && rng.random_bool(0.25) {
            0.0
        } else {
            rng.random_range(0.01..1.0)
        }
    });
    Kernel::normalized_rows(source.clone(), target.clone(), table).expect("rows have mass")
}

/// Full-support model with potentials in `[-1, 1]` and costs in `[0, w_max]`.
pub fn model<R: Rng>(rng: &mut R, n: usize, m: usize, w_max: f64) -> TransportModel {
    let x = space(rng, n);
    let y = space(rng, m);
    let u = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w = Array2::from_shape_fn((n, m), |_| rng.random_range(0.0..w_max));
    TransportModel::new(x, y, u, v, w).expect("finite model")
}

/// Symmetric positive definite `d x d` matrix with eigenvalues at least `floor`.
pub fn spd<R: Rng>(rng: &mut R, d: usize, floor: f64) -> Mat {
    let a = Mat::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    (&a * a.transpose()) / d as f64 + Mat::identity(d, d) * floor
}

/// Gaussian model with moderate conditioning; `beta = I + B` with `|B| < 1` in norm.
pub fn gaussian_model<R: Rng>(rng: &mut R, d: usize) -> GaussianEOTModel {
    let vec = |rng: &mut R| Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    let m = vec(rng);
    let m_bar = vec(rng);
    let alpha = vec(rng);
    let sigma = spd(rng, d, 0.3);
    let sigma_bar = spd(rng, d, 0.3);
    let tau = spd(rng, d, 0.3);
    let beta = Mat::identity(d, d) + Mat::from_fn(d, d, |_, _| rng.random_range(-0.3..0.3)) / (d as f64).sqrt();
    GaussianEOTModel::new(m, sigma, m_bar, sigma_bar, alpha, beta, tau).expect("well-conditioned model")
}
