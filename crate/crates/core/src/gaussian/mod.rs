//! Closed-form Sinkhorn flow of the linear-Gaussian model
//!
//! ```text
//! lambda_U = N(m, sigma),   nu_V = N(mbar, sigmabar),   Q(x, dy) = N(alpha + beta x, tau)(dy).
//! ```
//!
//! Every transition stays linear-Gaussian, `S_n(x, dy) = N(a_n + beta_n x, tau_n)`, and
//! `tau_n` is carried by the normalized matrices `upsilon_n`, which follow the Riccati
//! recursions
//!
//! ```text
//! upsilon_0 = sigmabar^{-1/2} tau sigmabar^{-1/2}
//! upsilon_{2n+1}^{-1} = I + gamma' upsilon_{2n} gamma
//! upsilon_{2n+2}^{-1} = I + gamma upsilon_{2n+1} gamma'
//! ```
//!
//! with `gamma = sigmabar^{1/2} tau^{-1} beta sigma^{1/2}`. Marginals are `pi_n = N(m_n, sigma_n)`.

mod discretize;
#[cfg(test)]
mod tests;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;

use crate::diagnostics::{DivergenceTrace, Metric, Side};
use crate::error::{domain, Error, Result};
use crate::measure::PhiSpec;
use crate::quadrature::integrate_with_breaks;

pub use discretize::{cross_validate, discretize, moments_1d, CrossValidation, Discretized, GridSpec};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub const MAX_DIM: usize = 8;

/// Eigenvalue slack for Löwner comparisons.
pub const LOWNER_SLACK: f64 = 1e-10;

/// Relative size of the Riccati consistency residual treated as a numerical failure.
pub const CONSISTENCY_FAILURE: f64 = 1e-9;

/// Largest condition number accepted when inverting or taking square roots.
const MAX_CONDITION: f64 = 1e14;

fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of `a`.
pub fn lambda_min(a: &Mat) -> f64 {
    symmetrize(a).symmetric_eigenvalues().min()
}

fn spd_map(a: &Mat, what: &str, f: impl Fn(f64) -> f64) -> Result<Mat> {
    let e = symmetrize(a).symmetric_eigen();
    let (lo, hi) = (e.eigenvalues.min(), e.eigenvalues.max());
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        return Err(Error::Numerical(format!(
            "{what}: matrix is not safely positive definite (eigenvalues in [{lo:e}, {hi:e}], condition number {:e})",
            hi / lo
        )));
    }
    let d = e.eigenvalues.map(f);
    Ok(symmetrize(&(&e.eigenvectors * Mat::from_diagonal(&d) * e.eigenvectors.transpose())))
}

pub fn spd_sqrt(a: &Mat) -> Result<Mat> {
    spd_map(a, "square root", f64::sqrt)
}

pub fn spd_inv(a: &Mat) -> Result<Mat> {
    spd_map(a, "inverse", f64::recip)
}

pub fn spd_inv_sqrt(a: &Mat) -> Result<Mat> {
    spd_map(a, "inverse square root", |x| 1.0 / x.sqrt())
}

/// `Ricc_w(v) = (I + (w + v)^{-1})^{-1}`, increasing in `v` for the Löwner order.
pub fn ricc_map(varpi: &Mat, v: &Mat) -> Result<Mat> {
    if varpi.shape() != v.shape() || !varpi.is_square() {
        return domain("ricc_map needs square matrices of equal size");
    }
    if lambda_min(varpi) <= 0.0 {
        return domain("ricc_map: varpi is not positive definite");
    }
    if lambda_min(v) < -1e-12 * (1.0 + v.amax()) {
        return domain("ricc_map: v is not positive semidefinite");
    }
    let d = v.nrows();
    let inner = spd_inv(&(varpi + v))?;
    spd_inv(&(Mat::identity(d, d) + inner))
}

fn check_spd(a: &Mat, name: &str) -> Result<()> {
    if !a.is_square() {
        return domain(format!("{name} is not square"));
    }
    if (a - a.transpose()).amax() > 1e-12 * (1.0 + a.amax()) {
        return domain(format!("{name} is not symmetric"));
    }
    if Cholesky::new(a.clone()).is_none() {
        return domain(format!("{name} is not positive definite (Cholesky factorization failed)"));
    }
    Ok(())
}

/// Parameters `(m, sigma, mbar, sigmabar, alpha, beta, tau)` plus derived matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEOTModel {
    m: Vector,
    sigma: Mat,
    m_bar: Vector,
    sigma_bar: Mat,
    alpha: Vector,
    beta: Mat,
    tau: Mat,
    sigma_sqrt: Mat,
    sigma_bar_sqrt: Mat,
    sigma_inv: Mat,
    sigma_bar_inv: Mat,
    tau_inv: Mat,
    gamma: Mat,
    varpi: Mat,
    varpi_bar: Mat,
}

impl GaussianEOTModel {
    pub fn new(m: Vector, sigma: Mat, m_bar: Vector, sigma_bar: Mat, alpha: Vector, beta: Mat, tau: Mat) -> Result<Self> {
        let d = m.len();
        if d == 0 || d > MAX_DIM {
            return domain(format!("dimension must be between 1 and {MAX_DIM}, got {d}"));
        }
        if m_bar.len() != d || alpha.len() != d {
            return domain("mean vectors have mismatched lengths");
        }
        for (a, name) in [(&sigma, "sigma"), (&sigma_bar, "sigma_bar"), (&beta, "beta"), (&tau, "tau")] {
            if a.shape() != (d, d) {
                return domain(format!("{name} must be {d}x{d}, got {:?}", a.shape()));
            }
        }
        if m.iter().chain(&m_bar).chain(&alpha).chain(&beta).any(|v| !v.is_finite()) {
            return domain("model parameters must be finite");
        }
        check_spd(&sigma, "sigma")?;
        check_spd(&sigma_bar, "sigma_bar")?;
        check_spd(&tau, "tau")?;
        let sv = beta.clone().svd(false, false).singular_values;
        if !(sv.min() > 1e-12 * sv.max()) {
            return domain("beta is not invertible");
        }
        let sigma_sqrt = spd_sqrt(&sigma)?;
        let sigma_bar_sqrt = spd_sqrt(&sigma_bar)?;
        let sigma_inv = spd_inv(&sigma)?;
        let sigma_bar_inv = spd_inv(&sigma_bar)?;
        let tau_inv = spd_inv(&tau)?;
        let gamma = &sigma_bar_sqrt * &tau_inv * &beta * &sigma_sqrt;
        let varpi = spd_inv(&symmetrize(&(&gamma * gamma.transpose())))?;
        let varpi_bar = spd_inv(&symmetrize(&(gamma.transpose() * &gamma)))?;
        Ok(GaussianEOTModel {
            m,
            sigma,
            m_bar,
            sigma_bar,
            alpha,
            beta,
            tau,
            sigma_sqrt,
            sigma_bar_sqrt,
            sigma_inv,
            sigma_bar_inv,
            tau_inv,
            gamma,
            varpi,
            varpi_bar,
        })
    }

    /// One-dimensional model; variances, not standard deviations.
    pub fn scalar(m: f64, sigma: f64, m_bar: f64, sigma_bar: f64, alpha: f64, beta: f64, tau: f64) -> Result<Self> {
        let v = |x: f64| Vector::from_element(1, x);
        let s = |x: f64| Mat::from_element(1, 1, x);
        Self::new(v(m), s(sigma), v(m_bar), s(sigma_bar), v(alpha), s(beta), s(tau))
    }

    /// The same bridge problem read from Y to X, with the Bayes reversal of `Q` under
    /// `lambda_U` as reference kernel. Its even flow is the odd flow of `self`:
    /// `pi'_{2n} = pi_{2n+1}`.
    pub fn reversed(&self) -> Result<Self> {
        let bt = self.beta.transpose() * &self.tau_inv;
        let tau_r = spd_inv(&symmetrize(&(&self.sigma_inv + &bt * &self.beta)))?;
        let beta_r = &tau_r * &bt;
        let alpha_r = &tau_r * (&self.sigma_inv * &self.m - &bt * &self.alpha);
        Self::new(
            self.m_bar.clone(),
            self.sigma_bar.clone(),
            self.m.clone(),
            self.sigma.clone(),
            alpha_r,
            beta_r,
            tau_r,
        )
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }
    pub fn m(&self) -> &Vector {
        &self.m
    }
    pub fn sigma(&self) -> &Mat {
        &self.sigma
    }
    pub fn m_bar(&self) -> &Vector {
        &self.m_bar
    }
    pub fn sigma_bar(&self) -> &Mat {
        &self.sigma_bar
    }
    pub fn alpha(&self) -> &Vector {
        &self.alpha
    }
    pub fn beta(&self) -> &Mat {
        &self.beta
    }
    pub fn tau(&self) -> &Mat {
        &self.tau
    }
    pub fn gamma(&self) -> &Mat {
        &self.gamma
    }
    /// `varpi = (gamma gamma')^{-1}`, driving the even indices.
    pub fn varpi(&self) -> &Mat {
        &self.varpi
    }
    /// `varpibar = (gamma' gamma)^{-1}`, driving the odd indices.
    pub fn varpi_bar(&self) -> &Mat {
        &self.varpi_bar
    }

    /// Lower and upper Löwner bounds on `tau_n` (and `tau°_n`) for `n >= 2`.
    pub fn tau_bounds(&self, n: usize) -> Result<(Mat, Mat)> {
        let d = self.dim();
        let (root, w, upper) = if n % 2 == 0 {
            (&self.sigma_bar_sqrt, &self.varpi, &self.sigma_bar)
        } else {
            (&self.sigma_sqrt, &self.varpi_bar, &self.sigma)
        };
        let floor = spd_inv(&(Mat::identity(d, d) + spd_inv(w)?))?;
        Ok((symmetrize(&(root * floor * root)), upper.clone()))
    }

    /// Smallest eigenvalue margin of `lower <= t <= upper`; `None` for `n < 2`, where
    /// the bounds are not guaranteed.
    pub fn lowner_margin(&self, n: usize, t: &Mat) -> Result<Option<f64>> {
        if n < 2 {
            return Ok(None);
        }
        let (lo, hi) = self.tau_bounds(n)?;
        Ok(Some(lambda_min(&(t - lo)).min(lambda_min(&(hi - t)))))
    }
}

/// Parameters of `S_n` and `pi_n` at half-step `n` (even: forward, odd: backward).
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiState {
    pub n: usize,
    pub upsilon: Mat,
    pub tau: Mat,
    pub beta: Mat,
    /// Mean `m_n` of `pi_n`.
    pub mean: Vector,
    /// Covariance `sigma_n` of `pi_n`.
    pub cov: Mat,
    /// Sup-norm of `upsilon_n - Ricc(upsilon_{n-2})`, for `n >= 2`.
    pub consistency: Option<f64>,
    before: Option<Mat>,
}

pub fn initial_state(model: &GaussianEOTModel) -> Result<RiccatiState> {
    let inv_sqrt = spd_inv_sqrt(&model.sigma_bar)?;
    let upsilon = symmetrize(&(&inv_sqrt * &model.tau * &inv_sqrt));
    let b = &model.beta;
    Ok(RiccatiState {
        n: 0,
        upsilon,
        tau: model.tau.clone(),
        beta: b.clone(),
        mean: &model.alpha + b * &model.m,
        cov: symmetrize(&(b * &model.sigma * b.transpose() + &model.tau)),
        consistency: None,
        before: None,
    })
}

/// Advances one half-step and checks the result against the Riccati map two
/// half-steps back.
pub fn riccati_step(model: &GaussianEOTModel, state: &RiccatiState) -> Result<RiccatiState> {
    let d = model.dim();
    let id = Mat::identity(d, d);
    let g = &model.gamma;
    let k = state.n + 1;
    let (inner, root, w) = if k % 2 == 1 {
        (g.transpose() * &state.upsilon * g, &model.sigma_sqrt, &model.varpi_bar)
    } else {
        (g * &state.upsilon * g.transpose(), &model.sigma_bar_sqrt, &model.varpi)
    };
    let upsilon = spd_inv(&symmetrize(&(id + inner))).map_err(|e| Error::Numerical(format!("half-step {k}: {e}")))?;
    let tau = symmetrize(&(root * &upsilon * root));
    let (beta, mean, cov) = if k % 2 == 1 {
        let beta = &tau * model.beta.transpose() * &model.tau_inv;
        let mean = &model.m + &beta * (&model.m_bar - &state.mean);
        let cov = symmetrize(&(&beta * &model.sigma_bar * beta.transpose() + &tau));
        (beta, mean, cov)
    } else {
        let beta = &tau * &model.tau_inv * &model.beta;
        let mean = &model.m_bar + &beta * (&model.m - &state.mean);
        let cov = symmetrize(&(&beta * &model.sigma * beta.transpose() + &tau));
        (beta, mean, cov)
    };
    let consistency = match &state.before {
        Some(prev) => {
            let r = (&upsilon - ricc_map(w, prev)?).amax();
            if r > CONSISTENCY_FAILURE * (1.0 + upsilon.amax()) {
                return Err(Error::Numerical(format!("Riccati consistency residual {r:e} at half-step {k}")));
            }
            Some(r)
        }
        None => None,
    };
    Ok(RiccatiState { n: k, upsilon, tau, beta, mean, cov, consistency, before: Some(state.upsilon.clone()) })
}

/// States `0..=n_max`.
pub fn flow(model: &GaussianEOTModel, n_max: usize) -> Result<Vec<RiccatiState>> {
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(initial_state(model)?);
    for _ in 0..n_max {
        let next = riccati_step(model, out.last().expect("nonempty"))?;
        out.push(next);
    }
    Ok(out)
}

/// `(m_n, beta_n, tau_n, sigma_n)` at half-step `n`.
pub fn sinkhorn_params(model: &GaussianEOTModel, n: usize) -> Result<RiccatiState> {
    Ok(flow(model, n)?.pop().expect("nonempty"))
}

/// `S°_n = S_{n-1} S_n = N(a°_n + beta°_n x, tau°_n)`; invariant measure `nu_V` for even
/// `n`, `lambda_U` for odd `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsLoopParams {
    pub n: usize,
    pub beta: Mat,
    pub tau: Mat,
    /// Löwner margin of `tau°_n` (present for `n >= 2`).
    pub lowner_margin: Option<f64>,
    /// Sup-norm of `s - beta° s beta°' - tau°` with `s` the invariant covariance.
    pub fixed_point_residual: f64,
}

fn loop_params(model: &GaussianEOTModel, prev: &RiccatiState, cur: &RiccatiState) -> Result<GibbsLoopParams> {
    let beta = &cur.beta * &prev.beta;
    let tau = symmetrize(&(&cur.tau + &cur.beta * &prev.tau * cur.beta.transpose()));
    let s = if cur.n % 2 == 0 { &model.sigma_bar } else { &model.sigma };
    let fixed_point_residual = (s - &beta * s * beta.transpose() - &tau).amax();
    let lowner_margin = model.lowner_margin(cur.n, &tau)?;
    if let Some(mg) = lowner_margin {
        if mg < -LOWNER_SLACK {
            return Err(Error::Numerical(format!("Löwner bound on tau°_{} violated by {:e}", cur.n, -mg)));
        }
    }
    Ok(GibbsLoopParams { n: cur.n, beta, tau, lowner_margin, fixed_point_residual })
}

/// `(beta°_n, tau°_n)` for `n >= 1`.
pub fn gibbs_loop_params(model: &GaussianEOTModel, n: usize) -> Result<GibbsLoopParams> {
    if n == 0 {
        return Err(Error::Precondition("the Gibbs loop starts at n = 1".into()));
    }
    let states = flow(model, n)?;
    loop_params(model, &states[n - 1], &states[n])
}

/// Loop parameters for every `n` in `1..=n_max`, from a single flow.
pub fn gibbs_loop_flow(model: &GaussianEOTModel, n_max: usize) -> Result<Vec<GibbsLoopParams>> {
    let states = flow(model, n_max)?;
    states.windows(2).map(|w| loop_params(model, &w[0], &w[1])).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoreticalRate {
    /// `Delta = varpi/2 + (varpi + varpi^2/4)^{1/2}`
    pub delta: Mat,
    pub lambda_min: f64,
    /// `1 / (1 + lambda_min(Delta))`
    pub rho: f64,
}

pub fn theoretical_rate(model: &GaussianEOTModel) -> Result<TheoreticalRate> {
    let w = &model.varpi;
    let delta = symmetrize(&(w * 0.5 + spd_sqrt(&(w + w * w * 0.25))?));
    let lambda_min = lambda_min(&delta);
    Ok(TheoreticalRate { delta, lambda_min, rho: 1.0 / (1.0 + lambda_min) })
}

/// Verdict of the analytic condition `beta' tau^{-1} beta < c sigma^{-1}` and
/// `tau^{-1} < c sigmabar^{-1}` with `c = min(delta, 1 - delta)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CcVerdict {
    pub delta: f64,
    pub satisfied: bool,
    /// `lambda_min(c sigma^{-1} - beta' tau^{-1} beta)`
    pub kernel_margin: f64,
    /// `lambda_min(c sigmabar^{-1} - tau^{-1})`
    pub target_margin: f64,
}

impl CcVerdict {
    pub fn margin(&self) -> f64 {
        self.kernel_margin.min(self.target_margin)
    }
}

pub fn check_cc(model: &GaussianEOTModel, delta: f64) -> Result<CcVerdict> {
    if !(delta > 0.0 && delta < 1.0) {
        return domain(format!("delta must lie in (0, 1), got {delta}"));
    }
    let c = delta.min(1.0 - delta);
    let btb = model.beta.transpose() * &model.tau_inv * &model.beta;
    let kernel_margin = lambda_min(&(&model.sigma_inv * c - btb));
    let target_margin = lambda_min(&(&model.sigma_bar_inv * c - &model.tau_inv));
    Ok(CcVerdict { delta, satisfied: kernel_margin > 0.0 && target_margin > 0.0, kernel_margin, target_margin })
}

fn normal_pdf(x: f64, m: f64, v: f64) -> f64 {
    (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
}

/// Points where the two 1-D Gaussian densities cross.
fn crossings(m1: f64, v1: f64, m2: f64, v2: f64) -> Vec<f64> {
    let a = 0.5 / v2 - 0.5 / v1;
    let b = m1 / v1 - m2 / v2;
    let c = m2 * m2 / (2.0 * v2) - m1 * m1 / (2.0 * v1) + 0.5 * (v2 / v1).ln();
    if a.abs() < 1e-14 * (1.0 / v1 + 1.0 / v2) {
        return if b != 0.0 { vec![-c / b] } else { Vec::new() };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let mut r = vec![q / a];
    if q != 0.0 {
        r.push(c / q);
    }
    r
}

/// Total variation between `N(m1, v1)` and `N(m2, v2)` on the line, by adaptive
/// quadrature of half the absolute density difference split at the crossings.
pub fn gaussian_tv(m1: f64, v1: f64, m2: f64, v2: f64) -> Result<f64> {
    if !(v1 > 0.0 && v2 > 0.0) || !m1.is_finite() || !m2.is_finite() {
        return domain("gaussian_tv needs finite means and positive variances");
    }
    let s = v1.max(v2).sqrt();
    let (a, b) = (m1.min(m2) - 40.0 * s, m1.max(m2) + 40.0 * s);
    let f = |x: f64| 0.5 * (normal_pdf(x, m1, v1) - normal_pdf(x, m2, v2)).abs();
    let mut breaks = crossings(m1, v1, m2, v2);
    breaks.extend([m1, m2]);
    Ok(integrate_with_breaks(f, a, b, &breaks, 1e-17, 1e-13).min(1.0))
}

/// `KL(N(m1, s1) | N(m2, s2))`.
pub fn gaussian_kl(m1: &Vector, s1: &Mat, m2: &Vector, s2: &Mat) -> Result<f64> {
    let d = m1.len() as f64;
    let inv2 = spd_inv(s2)?;
    let dm = m2 - m1;
    let tr = (&inv2 * s1).trace();
    let quad = (dm.transpose() * &inv2 * &dm)[(0, 0)];
    let ld = log_det(s2)? - log_det(s1)?;
    Ok((0.5 * (tr + quad - d + ld)).max(0.0))
}

/// `1 - BC` with `BC` the Bhattacharyya coefficient, matching `(sqrt u - sqrt v)^2 / 2`.
pub fn gaussian_hellinger2(m1: &Vector, s1: &Mat, m2: &Vector, s2: &Mat) -> Result<f64> {
    let avg = symmetrize(&((s1 + s2) * 0.5));
    let dm = m2 - m1;
    let quad = (dm.transpose() * spd_inv(&avg)? * &dm)[(0, 0)];
    let log_bc = 0.25 * log_det(s1)? + 0.25 * log_det(s2)? - 0.5 * log_det(&avg)? - quad / 8.0;
    Ok((-log_bc.exp_m1()).max(0.0))
}

fn log_det(a: &Mat) -> Result<f64> {
    let ev = symmetrize(a).symmetric_eigenvalues();
    if !(ev.min() > 0.0) {
        return Err(Error::Numerical("log-determinant of a matrix that is not positive definite".into()));
    }
    Ok(ev.iter().map(|x| x.ln()).sum())
}

/// Metrics with closed forms: TV (1-D only), KL and Hellinger2.
pub fn default_metrics(d: usize) -> Vec<Metric> {
    let mut v = Vec::new();
    if d == 1 {
        v.push(Metric::Phi(PhiSpec::Tv));
    }
    v.extend([Metric::Phi(PhiSpec::Kl), Metric::Phi(PhiSpec::Hellinger2)]);
    v
}

fn gaussian_divergence(metric: &Metric, m1: &Vector, s1: &Mat, m2: &Vector, s2: &Mat) -> Result<f64> {
    match metric {
        Metric::Phi(PhiSpec::Tv) if m1.len() == 1 => gaussian_tv(m1[0], s1[(0, 0)], m2[0], s2[(0, 0)]),
        Metric::Phi(PhiSpec::Kl) => gaussian_kl(m1, s1, m2, s2),
        Metric::Phi(PhiSpec::Hellinger2) => gaussian_hellinger2(m1, s1, m2, s2),
        other => domain(format!("no closed form for metric {other} in dimension {}", m1.len())),
    }
}

/// Divergences of the closed-form flow for cycles `0..cycles`: `D(pi_{2n}, nu_V)` (even)
/// and `D(lambda_U, pi_{2n+1})` (odd).
pub fn closed_form_trace(model: &GaussianEOTModel, cycles: usize, metrics: &[Metric]) -> Result<DivergenceTrace> {
    if cycles == 0 {
        return domain("closed_form_trace needs at least one cycle");
    }
    let states = flow(model, 2 * cycles - 1)?;
    let mut trace = DivergenceTrace::new("gaussian");
    trace.metadata.insert("dimension".into(), model.dim().to_string());
    trace.metadata.insert("iterations".into(), cycles.to_string());
    for n in 0..cycles {
        let (even, odd) = (&states[2 * n], &states[2 * n + 1]);
        for metric in metrics {
            let name = metric.to_string();
            let e = gaussian_divergence(metric, &even.mean, &even.cov, &model.m_bar, &model.sigma_bar)?;
            let o = gaussian_divergence(metric, &model.m, &model.sigma, &odd.mean, &odd.cov)?;
            trace.push(n, Side::Even, &name, e)?;
            trace.push(n, Side::Odd, &name, o)?;
        }
    }
    Ok(trace)
}
