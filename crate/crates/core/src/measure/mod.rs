//! Discrete measures and Markov kernels on quadrature grids, with the divergence,
//! metric and contraction-coefficient toolbox used by the rest of the crate.
//!
//! Densities are always taken with respect to the base weights of the underlying
//! [`DiscreteSpace`]: a measure with density `d` puts mass `d[i] * w[i]` on point `i`,
//! and a kernel row `k(x_i, .)` integrates to one against the target weights.

mod coefficients;
mod metrics;
mod phi;
mod transport;

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{domain, Result};

pub use coefficients::{
    birkhoff_coefficient, dobrushin_coefficient, dobrushin_weighted, hbar, jmath, Dobrushin,
    WeightedDobrushin,
};
pub use metrics::{hilbert_metric, total_variation, weighted_tv, WeightedTv};
pub use phi::{phi_entropy, renyi_divergence, PhiSpec};
pub use transport::{
    transport_exhaustive, transport_network_flow, transport_oracle, wasserstein_1d,
    EXHAUSTIVE_LIMIT, ORACLE_LIMIT,
};

/// Densities below this value count as exact zeros in support tests.
pub const SUPPORT_TOL: f64 = 1e-300;

/// Tolerance on the mass of a probability measure.
pub const MASS_TOL: f64 = 1e-12;

/// Tolerance on kernel row sums.
pub const ROW_TOL: f64 = 1e-10;

/// Finite set of points in R^d with positive quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSpace {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteSpace {
    /// Builds a space from points (all of the same dimension) and weights.
    pub fn new(points: &[Vec<f64>], weights: Vec<f64>) -> Result<Arc<Self>> {
        if points.is_empty() {
            return domain("empty point set");
        }
        let dim = points[0].len();
        if dim == 0 {
            return domain("points must have dimension >= 1");
        }
        if points.iter().any(|p| p.len() != dim) {
            return domain("points have inconsistent dimensions");
        }
        let coords = points.iter().flatten().copied().collect();
        Self::from_flat(dim, coords, weights)
    }

    /// One-dimensional space from coordinates and weights.
    pub fn from_1d(xs: Vec<f64>, weights: Vec<f64>) -> Result<Arc<Self>> {
        Self::from_flat(1, xs, weights)
    }

    /// Points `0, 1, ..., n-1` with unit weights.
    pub fn unit(n: usize) -> Arc<Self> {
        Self::from_1d((0..n).map(|i| i as f64).collect(), vec![1.0; n])
            .expect("unit grid is valid")
    }

    fn from_flat(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Arc<Self>> {
        let n = coords.len() / dim;
        if n == 0 || coords.len() != n * dim {
            return domain("coordinate array does not match dimension");
        }
        if weights.len() != n {
            return domain(format!("{} weights for {} points", weights.len(), n));
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return domain(format!("base weight {} at point {} is not positive and finite", weights[i], i));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return domain("non-finite coordinate");
        }
        let space = DiscreteSpace { dim, coords, weights };
        space.check_distinct()?;
        Ok(Arc::new(space))
    }

    fn check_distinct(&self) -> Result<()> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.point(a)
                .iter()
                .zip(self.point(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for pair in idx.windows(2) {
            if self.point(pair[0]) == self.point(pair[1]) {
                return domain(format!("points {} and {} coincide", pair[0], pair[1]));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// First coordinate of point `i`; the coordinate itself for 1-D spaces.
    pub fn coord(&self, i: usize) -> f64 {
        self.coords[i * self.dim]
    }

    /// First coordinates of all points.
    pub fn coords_1d(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.coord(i)).collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Same space when identical by pointer or by content.
    pub fn same_as(&self, other: &DiscreteSpace) -> bool {
        std::ptr::eq(self, other) || self == other
    }

    /// Copy of the space with every base weight multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Result<Arc<Self>> {
        Self::from_flat(
            self.dim,
            self.coords.clone(),
            self.weights.iter().map(|w| w * factor).collect(),
        )
    }
}

fn check_same(a: &DiscreteSpace, b: &DiscreteSpace, what: &str) -> Result<()> {
    if a.same_as(b) {
        Ok(())
    } else {
        domain(format!("{what}: spaces differ"))
    }
}

/// Nonnegative measure given by its density with respect to the base weights.
#[derive(Debug, Clone)]
pub struct Measure {
    space: Arc<DiscreteSpace>,
    density: Array1<f64>,
}

impl Measure {
    pub fn new(space: Arc<DiscreteSpace>, density: Vec<f64>) -> Result<Self> {
        if density.len() != space.len() {
            return domain(format!(
                "density has {} entries, space has {} points",
                density.len(),
                space.len()
            ));
        }
        if let Some(i) = density.iter().position(|d| !(d.is_finite() && *d >= 0.0)) {
            return domain(format!("density {} at point {} is not finite and nonnegative", density[i], i));
        }
        Ok(Measure { space, density: Array1::from(density) })
    }

    /// Measure from point masses.
    pub fn from_masses(space: Arc<DiscreteSpace>, masses: &[f64]) -> Result<Self> {
        if masses.len() != space.len() {
            return domain("mass vector length does not match space");
        }
        let density = masses.iter().zip(space.weights()).map(|(m, w)| m / w).collect();
        Self::new(space, density)
    }

    /// Unit point mass at point `i`.
    pub fn dirac(space: Arc<DiscreteSpace>, i: usize) -> Self {
        let mut density = vec![0.0; space.len()];
        density[i] = 1.0 / space.weights()[i];
        Measure { space, density: Array1::from(density) }
    }

    /// Probability measure with density proportional to `exp(-potential)`.
    pub fn gibbs(space: Arc<DiscreteSpace>, potential: &[f64]) -> Result<Self> {
        if potential.len() != space.len() {
            return domain("potential length does not match space");
        }
        let min = potential.iter().copied().fold(f64::INFINITY, f64::min);
        if !min.is_finite() {
            return domain("Gibbs measure has zero or infinite mass");
        }
        let raw: Vec<f64> = potential.iter().map(|u| (min - u).exp()).collect();
        let z: f64 = raw.iter().zip(space.weights()).map(|(a, w)| a * w).sum();
        Self::new(space, raw.iter().map(|a| a / z).collect())
    }

    pub fn space(&self) -> &Arc<DiscreteSpace> {
        &self.space
    }

    pub fn density(&self) -> ArrayView1<'_, f64> {
        self.density.view()
    }

    pub fn density_vec(&self) -> Vec<f64> {
        self.density.to_vec()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.density.iter().zip(self.space.weights()).map(|(d, w)| d * w).collect()
    }

    pub fn mass(&self) -> f64 {
        self.density.iter().zip(self.space.weights()).map(|(d, w)| d * w).sum()
    }

    pub fn is_probability(&self, tol: f64) -> bool {
        (self.mass() - 1.0).abs() <= tol
    }

    /// Integral of `f` (values per point).
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.density
            .iter()
            .zip(self.space.weights())
            .zip(f)
            .map(|((d, w), v)| if *d == 0.0 { 0.0 } else { d * w * v })
            .sum()
    }

    pub fn normalized(&self) -> Result<Self> {
        let m = self.mass();
        if !(m.is_finite() && m > 0.0) {
            return domain("cannot normalize a measure of zero or infinite mass");
        }
        Ok(Measure { space: self.space.clone(), density: &self.density / m })
    }
}

/// Markov kernel between two discrete spaces; rows are densities with respect to the
/// target base weights.
#[derive(Debug, Clone)]
pub struct Kernel {
    source: Arc<DiscreteSpace>,
    target: Arc<DiscreteSpace>,
    density: Array2<f64>,
}

impl Kernel {
    /// Builds a kernel, checking that every row integrates to one within [`ROW_TOL`].
    pub fn new(source: Arc<DiscreteSpace>, target: Arc<DiscreteSpace>, density: Array2<f64>) -> Result<Self> {
        let k = Self::unchecked(source, target, density)?;
        for i in 0..k.source.len() {
            let s = k.row_mass(i);
            if (s - 1.0).abs() > ROW_TOL {
                return domain(format!("kernel row {i} integrates to {s}, not 1"));
            }
        }
        Ok(k)
    }

    /// Builds a kernel from nonnegative row shapes, normalizing each row.
    pub fn normalized_rows(
        source: Arc<DiscreteSpace>,
        target: Arc<DiscreteSpace>,
        mut density: Array2<f64>,
    ) -> Result<Self> {
        for (i, mut row) in density.rows_mut().into_iter().enumerate() {
            let s: f64 = row.iter().zip(target.weights()).map(|(k, w)| k * w).sum();
            if !(s.is_finite() && s > 0.0) {
                return domain(format!("kernel row {i} has zero or infinite mass"));
            }
            row /= s;
        }
        Self::new(source, target, density)
    }

    fn unchecked(source: Arc<DiscreteSpace>, target: Arc<DiscreteSpace>, density: Array2<f64>) -> Result<Self> {
        if density.dim() != (source.len(), target.len()) {
            return domain(format!(
                "kernel table is {:?}, spaces are {}x{}",
                density.dim(),
                source.len(),
                target.len()
            ));
        }
        if density.iter().any(|k| !(k.is_finite() && *k >= 0.0)) {
            return domain("kernel entries must be finite and nonnegative");
        }
        Ok(Kernel { source, target, density })
    }

    pub(crate) fn from_parts_unchecked(
        source: Arc<DiscreteSpace>,
        target: Arc<DiscreteSpace>,
        density: Array2<f64>,
    ) -> Self {
        Kernel { source, target, density }
    }

    pub fn source(&self) -> &Arc<DiscreteSpace> {
        &self.source
    }

    pub fn target(&self) -> &Arc<DiscreteSpace> {
        &self.target
    }

    pub fn density(&self) -> &Array2<f64> {
        &self.density
    }

    pub fn row_mass(&self, i: usize) -> f64 {
        self.density.row(i).iter().zip(self.target.weights()).map(|(k, w)| k * w).sum()
    }

    /// Row `i` as a measure on the target space.
    pub fn row_measure(&self, i: usize) -> Measure {
        Measure { space: self.target.clone(), density: self.density.row(i).to_owned() }
    }

    /// `K(f)(x) = sum_j k(x, y_j) w_j f(y_j)`.
    pub fn apply_function(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.target.len() {
            return domain("function length does not match kernel target");
        }
        let wf: Vec<f64> = f.iter().zip(self.target.weights()).map(|(v, w)| v * w).collect();
        Ok(self
            .density
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(&wf).map(|(k, v)| k * v).sum())
            .collect())
    }
}

/// `(mu K)(y_j) = sum_i d_i w_i k(x_i, y_j)`, as a density on the target space.
pub fn apply_kernel(mu: &Measure, k: &Kernel) -> Result<Measure> {
    check_same(&mu.space, &k.source, "apply_kernel")?;
    let masses = Array1::from(mu.masses());
    let density = masses.dot(&k.density);
    Ok(Measure { space: k.target.clone(), density })
}

/// `(K1 K2)(x, z) = sum_j k1(x, y_j) w_j k2(y_j, z)`.
pub fn kernel_compose(k1: &Kernel, k2: &Kernel) -> Result<Kernel> {
    check_same(&k1.target, &k2.source, "kernel_compose")?;
    let mut left = k1.density.clone();
    for (mut col, w) in left.columns_mut().into_iter().zip(k1.target.weights()) {
        col *= *w;
    }
    Ok(Kernel {
        source: k1.source.clone(),
        target: k2.target.clone(),
        density: left.dot(&k2.density),
    })
}

/// Shifted log-sum-exp; `-inf` entries are skipped and an all-`-inf` input gives `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub(crate) fn same_space(a: &Measure, b: &Measure, what: &str) -> Result<()> {
    check_same(&a.space, &b.space, what)
}
