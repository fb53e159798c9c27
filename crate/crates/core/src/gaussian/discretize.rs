use ndarray::Array2;
use statrs::function::erf::erfc;

use super::{flow, gaussian_tv, GaussianEOTModel};
use crate::error::{domain, Result};
use crate::measure::{total_variation, DiscreteSpace, Measure};
use crate::sinkhorn::{marginal_even, marginal_odd, step, SinkhornState, TransportModel};

/// Tail mass above which [`discretize`] attaches a warning.
pub const TAIL_WARNING: f64 = 1e-8;

/// Uniform grid over `mean +- k sd` for each marginal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Odd number of points, endpoints included.
    pub points: usize,
    pub k: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { points: 801, k: 8.0 }
    }
}

#[derive(Debug, Clone)]
pub struct Discretized {
    pub model: TransportModel,
    /// Mass of `lambda_U` and `nu_V` outside their grids, summed.
    pub tail_mass: f64,
    pub warning: Option<String>,
}

fn grid(mean: f64, var: f64, spec: &GridSpec) -> Result<std::sync::Arc<DiscreteSpace>> {
    let half = spec.k * var.sqrt();
    let h = 2.0 * half / (spec.points - 1) as f64;
    let xs = (0..spec.points).map(|i| mean - half + i as f64 * h).collect();
    DiscreteSpace::from_1d(xs, vec![h; spec.points])
}

/// Gaussian potentials and the quadratic cost `(y - alpha - beta x)^2 / (2 tau)` on
/// uniform grids (1-D models only).
pub fn discretize(model: &GaussianEOTModel, spec: &GridSpec) -> Result<Discretized> {
    if model.dim() != 1 {
        return domain(format!("discretize supports d = 1 only, got d = {}", model.dim()));
    }
    if spec.points < 3 || spec.points % 2 == 0 {
        return domain(format!("grid point count must be odd and at least 3, got {}", spec.points));
    }
    if !(spec.k > 0.0 && spec.k.is_finite()) {
        return domain(format!("grid half-width must be positive, got {} sd", spec.k));
    }
    let (m, s) = (model.m()[0], model.sigma()[(0, 0)]);
    let (mb, sb) = (model.m_bar()[0], model.sigma_bar()[(0, 0)]);
    let (a, b, t) = (model.alpha()[0], model.beta()[(0, 0)], model.tau()[(0, 0)]);
    let x = grid(m, s, spec)?;
    let y = grid(mb, sb, spec)?;
    let xs = x.coords_1d();
    let ys = y.coords_1d();
    let u = xs.iter().map(|v| (v - m) * (v - m) / (2.0 * s)).collect();
    let v = ys.iter().map(|v| (v - mb) * (v - mb) / (2.0 * sb)).collect();
    let w = Array2::from_shape_fn((xs.len(), ys.len()), |(i, j)| {
        let r = ys[j] - a - b * xs[i];
        r * r / (2.0 * t)
    });
    let tail_mass = 2.0 * erfc(spec.k / std::f64::consts::SQRT_2);
    let warning = (tail_mass > TAIL_WARNING)
        .then(|| format!("marginal mass outside the grid is {tail_mass:e}; widen the grid"));
    Ok(Discretized { model: TransportModel::new(x, y, u, v, w)?, tail_mass, warning })
}

/// Mean and variance of a measure on a 1-D space.
pub fn moments_1d(mu: &Measure) -> (f64, f64) {
    let xs = mu.space().coords_1d();
    let mean = mu.integrate(&xs) / mu.mass();
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    (mean, mu.integrate(&sq) / mu.mass())
}

/// Largest gaps between the discretized engine and the closed form over `cycles` cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub cycles: usize,
    /// Over the even marginals `pi_{2n}`.
    pub max_mean_error: f64,
    pub max_var_error: f64,
    /// Over both `TV(pi_{2n}, nu_V)` and `TV(lambda_U, pi_{2n+1})`.
    pub max_tv_gap: f64,
    pub tail_mass: f64,
    /// `(|mean error|, |variance error|)` of `pi_{2n}` for each cycle.
    pub per_cycle: Vec<(f64, f64)>,
}

pub fn cross_validate(model: &GaussianEOTModel, spec: &GridSpec, cycles: usize) -> Result<CrossValidation> {
    if cycles == 0 {
        return domain("cross validation needs at least one cycle");
    }
    let disc = discretize(model, spec)?;
    let tm = &disc.model;
    let states = flow(model, 2 * cycles - 1)?;
    let (m, s) = (model.m()[0], model.sigma()[(0, 0)]);
    let (mb, sb) = (model.m_bar()[0], model.sigma_bar()[(0, 0)]);
    let mut out =
        CrossValidation { cycles, max_mean_error: 0.0, max_var_error: 0.0, max_tv_gap: 0.0, tail_mass: disc.tail_mass, per_cycle: Vec::new() };
    let mut state = SinkhornState::initial(tm);
    for n in 0..cycles {
        let (even, odd) = (&states[2 * n], &states[2 * n + 1]);
        let pi_even = marginal_even(tm, &state)?;
        let pi_odd = marginal_odd(tm, &state)?;
        let (mean, var) = moments_1d(&pi_even);
        let (em, ev) = ((mean - even.mean[0]).abs(), (var - even.cov[(0, 0)]).abs());
        out.max_mean_error = out.max_mean_error.max(em);
        out.max_var_error = out.max_var_error.max(ev);
        out.per_cycle.push((em, ev));
        let tv_e = total_variation(&pi_even, tm.nu_v())?;
        let tv_o = total_variation(tm.lambda_u(), &pi_odd)?;
        let ce = gaussian_tv(even.mean[0], even.cov[(0, 0)], mb, sb)?;
        let co = gaussian_tv(m, s, odd.mean[0], odd.cov[(0, 0)])?;
        out.max_tv_gap = out.max_tv_gap.max((tv_e - ce).abs()).max((tv_o - co).abs());
        if n + 1 < cycles {
            state = step(tm, &state)?;
        }
    }
    Ok(out)
}
