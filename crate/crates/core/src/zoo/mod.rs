//! Example models on 1-D state spaces and numerical probes for the integrability and
//! growth conditions behind weighted-norm stability.
//!
//! [`build`] discretizes a named model on midpoint grids and keeps the analytic
//! potentials and cost beside the [`TransportModel`], because the probes evaluate
//! them beyond the grid.

mod drift;
mod mixture;
mod models;
mod probe;


use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::gaussian::GaussianEOTModel;
use crate::measure::DiscreteSpace;
use crate::sinkhorn::TransportModel;

pub use drift::{drift_minorization_probe, DriftPoint, DriftProbe, MinorizationPoint};
pub use mixture::{mixture_check, MixtureComponent, MixtureVerdict};
pub use models::{Domain, KernelSpec, Marginal, WINDOW_TAIL};
pub use probe::{
    check_h_delta, check_h_prime, default_deltas, diagnose, lyapunov_profile, Condition, ConditionProbe,
    ConditionReport, DiagnosePoint, EndGrowth, Growth, GrowthReport, IntegralReport, IntegralStatus, LyapunovProfile,
    Verdict,
};

/// Names accepted by [`build`].
pub const MODEL_NAMES: &[&str] = &[
    "beta_uniform",
    "triangular",
    "energy_barrier",
    "beta_semicircle",
    "weibull",
    "exponential",
    "bilaplace",
    "cauchy",
    "gaussian",
    "gaussian_mixture",
    "kde",
];

/// A model parameter: a number or a list of numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Scalar(f64),
    List(Vec<f64>),
}

pub type Params = BTreeMap<String, Param>;

struct Reader<'a> {
    params: &'a Params,
    used: Vec<&'static str>,
}

impl<'a> Reader<'a> {
    fn new(params: &'a Params) -> Self {
        Reader { params, used: Vec::new() }
    }

    fn scalar(&mut self, key: &'static str, default: f64) -> Result<f64> {
        self.used.push(key);
        match self.params.get(key) {
            None => Ok(default),
            Some(Param::Scalar(v)) if v.is_finite() => Ok(*v),
            Some(_) => domain(format!("parameter `{key}` must be a finite number")),
        }
    }

    fn list(&mut self, key: &'static str, default: &[f64]) -> Result<Vec<f64>> {
        self.used.push(key);
        match self.params.get(key) {
            None => Ok(default.to_vec()),
            Some(Param::List(v)) if !v.is_empty() && v.iter().all(|x| x.is_finite()) => Ok(v.clone()),
            Some(Param::Scalar(v)) if v.is_finite() => Ok(vec![*v]),
            Some(_) => domain(format!("parameter `{key}` must be a nonempty list of finite numbers")),
        }
    }

    fn points(&mut self, default: usize) -> Result<usize> {
        let n = self.scalar("n", default as f64)?;
        if n.fract() != 0.0 || !(4.0..=4096.0).contains(&n) {
            return domain(format!("grid size `n` must be an integer in [4, 4096], got {n}"));
        }
        Ok(n as usize)
    }

    fn finish(self, name: &str) -> Result<()> {
        if let Some(k) = self.params.keys().find(|k| !self.used.contains(&k.as_str())) {
            return domain(format!("unknown parameter `{k}` for model `{name}`; expected one of {:?}", self.used));
        }
        Ok(())
    }
}

/// Analytic description of a zoo model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialSpec {
    pub name: String,
    pub marginal_u: Marginal,
    pub marginal_v: Marginal,
    pub kernel: KernelSpec,
    /// Grid points per axis.
    pub points: usize,
    pub x_window: (f64, f64),
    pub y_window: (f64, f64),
}

impl PotentialSpec {
    pub fn x_domain(&self) -> Domain {
        self.marginal_u.domain()
    }

    pub fn y_domain(&self) -> Domain {
        self.marginal_v.domain()
    }

    pub fn u(&self, x: f64) -> f64 {
        self.marginal_u.potential(x)
    }

    pub fn v(&self, y: f64) -> f64 {
        self.marginal_v.potential(y)
    }

    pub fn w(&self, x: f64, y: f64) -> f64 {
        self.kernel.cost(x, y)
    }
}

/// Range of the grid quadrature of the kernel normalizer `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalizerCheck {
    pub min: f64,
    pub max: f64,
    pub bounds: (f64, f64),
    /// Largest gap between the grid quadrature and the exact normalizer.
    pub max_error: f64,
}

#[derive(Debug, Clone)]
pub struct ZooModel {
    pub spec: PotentialSpec,
    pub model: TransportModel,
    pub normalizer: Option<NormalizerCheck>,
    /// Scalar Gaussian pieces `(model, weight)` for Gaussian and mixture models.
    pub gaussian_components: Vec<(GaussianEOTModel, f64)>,
    pub notes: Vec<String>,
}

fn midpoint_grid(window: (f64, f64), n: usize) -> Result<std::sync::Arc<DiscreteSpace>> {
    let h = (window.1 - window.0) / n as f64;
    let xs = (0..n).map(|i| window.0 + (i as f64 + 0.5) * h).collect();
    DiscreteSpace::from_1d(xs, vec![h; n])
}

fn beta_marginals(r: &mut Reader, default: [f64; 4], floor: f64) -> Result<(Marginal, Marginal)> {
    let a_u = r.scalar("a_u", default[0])?;
    let b_u = r.scalar("b_u", default[1])?;
    let a_v = r.scalar("a_v", default[2])?;
    let b_v = r.scalar("b_v", default[3])?;
    if [a_u, b_u, a_v, b_v].iter().any(|e| *e <= floor) {
        return domain(format!("Beta exponents must exceed {floor}, got ({a_u}, {b_u}), ({a_v}, {b_v})"));
    }
    Ok((Marginal::Beta { a: a_u, b: b_u }, Marginal::Beta { a: a_v, b: b_v }))
}

fn gaussian_marginals(r: &mut Reader) -> Result<(Marginal, Marginal)> {
    Ok((
        Marginal::Gaussian { mean: r.scalar("m_u", 0.0)?, var: r.scalar("var_u", 1.0)? },
        Marginal::Gaussian { mean: r.scalar("m_v", 0.0)?, var: r.scalar("var_v", 1.0)? },
    ))
}

fn gaussian_kernel(r: &mut Reader, tau_key: &'static str, tau_default: f64) -> Result<KernelSpec> {
    Ok(KernelSpec::Gaussian { alpha: r.scalar("alpha", 0.0)?, beta: r.scalar("beta", 1.0)?, tau: r.scalar(tau_key, tau_default)? })
}

fn mixture(means: Vec<f64>, vars: Vec<f64>, weights: Option<Vec<f64>>) -> Result<Marginal> {
    let k = means.len();
    let vars = if vars.len() == 1 { vec![vars[0]; k] } else { vars };
    let weights = weights.unwrap_or_else(|| vec![1.0 / k as f64; k]);
    let m = Marginal::Mixture { means, vars, weights };
    m.validate()?;
    Ok(m)
}

/// Pairwise scalar Gaussian components of a mixture model with a Gaussian kernel.
fn mixture_components(u: &Marginal, v: &Marginal, kernel: &KernelSpec) -> Result<Vec<(GaussianEOTModel, f64)>> {
    let parts = |m: &Marginal| match m {
        Marginal::Gaussian { mean, var } => vec![(*mean, *var, 1.0)],
        Marginal::Mixture { means, vars, weights } => {
            means.iter().zip(vars).zip(weights).map(|((m, v), w)| (*m, *v, *w)).collect()
        }
        _ => Vec::new(),
    };
    let KernelSpec::Gaussian { alpha, beta, tau } = kernel else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for (m, s, wu) in parts(u) {
        for (mb, sb, wv) in parts(v) {
            out.push((GaussianEOTModel::scalar(m, s, mb, sb, *alpha, *beta, *tau)?, wu * wv));
        }
    }
    Ok(out)
}

/// Builds a named model. Parameter names per model (defaults in brackets):
///
/// - `beta_uniform`, `triangular`, `energy_barrier`: `n` [64], `a_u, b_u, a_v, b_v`
///   [2, 3, 3, 2], Beta exponents of `x^a (1-x)^b`, each > 0
/// - `beta_semicircle`: `n` [128], `a_u, b_u, a_v, b_v` [2, 2, 2, 2], each > 1
/// - `weibull`: `n` [256], `a_u, b_u, a_v, b_v` [1, 1, 1, 1], `varsigma` [0.2];
///   bi-Laplace kernel on the half-line. `a < 0` (shape below one) is accepted and
///   always reported outside the theory.
/// - `exponential`: `n` [400], `tau_u, tau_v` [1, 1], `varsigma` [0.2]
/// - `bilaplace` (`varsigma` [1]), `cauchy` (`a` [1]), `gaussian` (`alpha, beta` [0, 1],
///   `tau` [3]): `n` [401], Gaussian marginals `m_u, var_u, m_v, var_v` [0, 1, 0, 1]
/// - `gaussian_mixture`: `n` [401], lists `means_u, vars_u, weights_u` and the `_v`
///   analogues, Gaussian kernel `alpha, beta, tau`
/// - `kde`: `n` [401], lists `samples_u, samples_v`, `bandwidth` [0.25] (component
///   variance), `horizon` [10] (kernel variance), `alpha, beta` [0, 1]
pub fn build(name: &str, params: &Params) -> Result<ZooModel> {
    let mut r = Reader::new(params);
    let mut notes = Vec::new();
    let (points, mu, nu, kernel) = match name {
        "beta_uniform" | "triangular" | "energy_barrier" => {
            let n = r.points(64)?;
            let (mu, nu) = beta_marginals(&mut r, [2.0, 3.0, 3.0, 2.0], 0.0)?;
            let kernel = match name {
                "beta_uniform" => KernelSpec::Uniform,
                "triangular" => KernelSpec::Triangular,
                _ => KernelSpec::EnergyBarrier,
            };
            (n, mu, nu, kernel)
        }
        "beta_semicircle" => {
            let n = r.points(128)?;
            let (mu, nu) = beta_marginals(&mut r, [2.0; 4], 1.0)?;
            (n, mu, nu, KernelSpec::Semicircle)
        }
        "weibull" => {
            let n = r.points(256)?;
            let mu = Marginal::Weibull { a: r.scalar("a_u", 1.0)?, b: r.scalar("b_u", 1.0)? };
            let nu = Marginal::Weibull { a: r.scalar("a_v", 1.0)?, b: r.scalar("b_v", 1.0)? };
            let varsigma = r.scalar("varsigma", 0.2)?;
            (n, mu, nu, KernelSpec::BiLaplace { varsigma, half_line: true })
        }
        "exponential" => {
            let n = r.points(400)?;
            let (tau_u, tau_v) = (r.scalar("tau_u", 1.0)?, r.scalar("tau_v", 1.0)?);
            let varsigma = r.scalar("varsigma", 0.2)?;
            if varsigma >= 0.5 * tau_u.min(tau_v) {
                notes.push(format!("varsigma = {varsigma} is not below min(tau_u, tau_v) / 2"));
            }
            (n, Marginal::Exponential { tau: tau_u }, Marginal::Exponential { tau: tau_v }, KernelSpec::BiLaplace {
                varsigma,
                half_line: true,
            })
        }
        "bilaplace" | "cauchy" | "gaussian" => {
            let n = r.points(401)?;
            let (mu, nu) = gaussian_marginals(&mut r)?;
            let kernel = match name {
                "bilaplace" => KernelSpec::BiLaplace { varsigma: r.scalar("varsigma", 1.0)?, half_line: false },
                "cauchy" => KernelSpec::Cauchy { a: r.scalar("a", 1.0)? },
                _ => gaussian_kernel(&mut r, "tau", 3.0)?,
            };
            (n, mu, nu, kernel)
        }
        "gaussian_mixture" => {
            let n = r.points(401)?;
            let mu = mixture(r.list("means_u", &[-1.0, 1.0])?, r.list("vars_u", &[0.5])?, Some(r.list("weights_u", &[0.5, 0.5])?))?;
            let nu = mixture(r.list("means_v", &[-1.0, 1.0])?, r.list("vars_v", &[0.5])?, Some(r.list("weights_v", &[0.5, 0.5])?))?;
            (n, mu, nu, gaussian_kernel(&mut r, "tau", 3.0)?)
        }
        "kde" => {
            let n = r.points(401)?;
            let bw = r.scalar("bandwidth", 0.25)?;
            let mu = mixture(r.list("samples_u", &[-1.0, 0.0, 1.5])?, vec![bw], None)?;
            let nu = mixture(r.list("samples_v", &[-0.5, 0.5])?, vec![bw], None)?;
            (n, mu, nu, gaussian_kernel(&mut r, "horizon", 10.0)?)
        }
        _ => return domain(format!("unknown model `{name}`; known models: {}", MODEL_NAMES.join(", "))),
    };
    r.finish(name)?;
    mu.validate()?;
    nu.validate()?;
    kernel.validate()?;
    if let Marginal::Weibull { a, .. } = &mu {
        if *a < 0.0 {
            notes.push(format!("Weibull shape {} < 1: U has no compact sub-level sets; outside the theory", a + 1.0));
        }
    }
    if let Marginal::Weibull { a, .. } = &nu {
        if *a < 0.0 {
            notes.push(format!("Weibull shape {} < 1: V has no compact sub-level sets; outside the theory", a + 1.0));
        }
    }

    let spec = PotentialSpec {
        name: name.to_string(),
        x_window: mu.window(),
        y_window: nu.window(),
        marginal_u: mu,
        marginal_v: nu,
        kernel,
        points,
    };
    let x = midpoint_grid(spec.x_window, points)?;
    let y = midpoint_grid(spec.y_window, points)?;
    let xs = x.coords_1d();
    let ys = y.coords_1d();
    let u: Vec<f64> = xs.iter().map(|&p| spec.u(p)).collect();
    let v: Vec<f64> = ys.iter().map(|&p| spec.v(p)).collect();
    for (side, pot, domain, open) in [("U", &u, spec.x_domain(), spec.x_domain().open_ends()), ("V", &v, spec.y_domain(), spec.y_domain().open_ends())] {
        if let Some(i) = pot.iter().position(|p| !p.is_finite()) {
            return Err(Error::Numerical(format!("{side} is not finite at grid point {i}")));
        }
        let argmin = (0..pot.len()).fold(0, |b, i| if pot[i] < pot[b] { i } else { b });
        if (argmin == 0 && open.0) || (argmin + 1 == pot.len() && open.1) {
            notes.push(format!("grid minimum of {side} sits on the truncation boundary ({domain:?} domain)"));
        }
    }
    let w = Array2::from_shape_fn((xs.len(), ys.len()), |(i, j)| spec.w(xs[i], ys[j]));
    if let Some(((i, j), _)) = w.indexed_iter().find(|(_, c)| c.is_nan() || **c == f64::NEG_INFINITY) {
        return Err(Error::Numerical(format!("cost is undefined at grid point ({}, {})", xs[i], ys[j])));
    }

    let normalizer = match spec.kernel.normalizer_bounds() {
        None => None,
        Some(bounds) => {
            let h = y.weights()[0];
            let mut check = NormalizerCheck { min: f64::INFINITY, max: f64::NEG_INFINITY, bounds, max_error: 0.0 };
            for &xi in &xs {
                let q: f64 = ys.iter().map(|&yj| h * spec.kernel.shape(xi, yj)).sum();
                check.min = check.min.min(q);
                check.max = check.max.max(q);
                check.max_error = check.max_error.max((q - spec.kernel.normalizer(xi)).abs());
            }
            let tol = 1.0 / (points * points) as f64;
            if check.min < bounds.0 - tol || check.max > bounds.1 + tol {
                return Err(Error::Numerical(format!(
                    "kernel normalizer range [{}, {}] leaves the bounds [{}, {}]",
                    check.min, check.max, bounds.0, bounds.1
                )));
            }
            Some(check)
        }
    };
    let gaussian_components = mixture_components(&spec.marginal_u, &spec.marginal_v, &spec.kernel)?;
    let model = TransportModel::new(x, y, u, v, w)?;
    Ok(ZooModel { spec, model, normalizer, gaussian_components, notes })
}

/// Integrated costs on the grids, masked pairs excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratedCosts {
    /// `W_U(y) = int lambda_U(dx) W(x, y)` on the Y grid.
    pub w_u: Vec<f64>,
    /// `W^V(x) = int nu_V(dy) W(x, y)` on the X grid.
    pub w_v: Vec<f64>,
    /// Smallest fraction of marginal mass over which a value was integrated.
    pub coverage_u: f64,
    pub coverage_v: f64,
}

/// `sum_j mass_j f(j)` over the finite terms, renormalized; returns the value and coverage.
pub(crate) fn masked_average(masses: &[f64], f: impl Fn(usize) -> f64) -> (f64, f64) {
    let (mut acc, mut cover) = (0.0, 0.0);
    for (j, m) in masses.iter().enumerate() {
        let c = f(j);
        if c.is_finite() {
            acc += m * c;
            cover += m;
        }
    }
    (acc / cover, cover)
}

pub fn integrated_costs(zoo: &ZooModel) -> Result<IntegratedCosts> {
    let tm = &zoo.model;
    let xs = tm.x().coords_1d();
    let ys = tm.y().coords_1d();
    let lam = tm.lambda_u().masses();
    let nu = tm.nu_v().masses();
    let (sl, sn): (f64, f64) = (lam.iter().sum(), nu.iter().sum());
    let lam: Vec<f64> = lam.iter().map(|m| m / sl).collect();
    let nu: Vec<f64> = nu.iter().map(|m| m / sn).collect();
    let mut out = IntegratedCosts { w_u: Vec::new(), w_v: Vec::new(), coverage_u: 1.0, coverage_v: 1.0 };
    for (i, &x) in xs.iter().enumerate() {
        let (val, cover) = masked_average(&nu, |j| zoo.spec.w(x, ys[j]));
        if cover <= 0.0 {
            return domain(format!("every cost entry in row {i} (x = {x}) is masked"));
        }
        out.w_v.push(val);
        out.coverage_v = out.coverage_v.min(cover);
    }
    for (j, &y) in ys.iter().enumerate() {
        let (val, cover) = masked_average(&lam, |i| zoo.spec.w(xs[i], y));
        if cover <= 0.0 {
            return domain(format!("every cost entry in column {j} (y = {y}) is masked"));
        }
        out.w_u.push(val);
        out.coverage_u = out.coverage_u.min(cover);
    }
    Ok(out)
}

/// Lyapunov pair `(phi, psi) = (e^{delta (U - U*)}, e^{delta (V - V*)})` on the grids,
/// with `U*`, `V*` the grid minima.
pub fn lyapunov_pair(model: &TransportModel, delta: f64) -> (Vec<f64>, Vec<f64>) {
    let lift = |p: &[f64]| {
        let min = p.iter().copied().fold(f64::INFINITY, f64::min);
        p.iter().map(|x| (delta * (x - min)).exp()).collect()
    };
    (lift(model.u()), lift(model.v()))
}
