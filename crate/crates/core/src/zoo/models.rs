use std::f64::consts::PI;

use serde::Serialize;
use statrs::function::beta::ln_beta;
use statrs::function::erf::erfc_inv;

use crate::error::{domain, Result};
use crate::measure::log_sum_exp;

/// Mass left outside a quantile window, split evenly between the two tails.
pub const WINDOW_TAIL: f64 = 1e-10;

/// State space of a 1-D zoo model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// The open unit interval `(0, 1)`.
    Interval,
    /// `(0, inf)`; both ends are open.
    OpenHalfLine,
    /// `[0, inf)`; only the upper end is open.
    HalfLine,
    Line,
}

impl Domain {
    /// Whether the lower and upper ends are open (sub-level sets must stay away from them).
    pub fn open_ends(self) -> (bool, bool) {
        match self {
            Domain::HalfLine => (false, true),
            _ => (true, true),
        }
    }
}

/// Marginal `e^{-U}` with respect to the Lebesgue measure on its domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    /// Density proportional to `x^a (1-x)^b` on `(0, 1)`.
    Beta { a: f64, b: f64 },
    /// Shape `a + 1`, scale `b` on `(0, inf)`.
    Weibull { a: f64, b: f64 },
    /// Rate `tau` on `[0, inf)`.
    Exponential { tau: f64 },
    Gaussian { mean: f64, var: f64 },
    Mixture { means: Vec<f64>, vars: Vec<f64>, weights: Vec<f64> },
}

fn gaussian_quantile_z() -> f64 {
    std::f64::consts::SQRT_2 * erfc_inv(WINDOW_TAIL)
}

fn log_normal_pdf(x: f64, m: f64, v: f64) -> f64 {
    -(x - m) * (x - m) / (2.0 * v) - 0.5 * (2.0 * PI * v).ln()
}

impl Marginal {
    pub fn validate(&self) -> Result<()> {
        let ok = |c: bool, msg: String| if c { Ok(()) } else { domain(msg) };
        let finite = match self {
            Marginal::Beta { a, b } | Marginal::Weibull { a, b } => a.is_finite() && b.is_finite(),
            Marginal::Exponential { tau } => tau.is_finite(),
            Marginal::Gaussian { var, .. } => var.is_finite(),
            Marginal::Mixture { vars, .. } => vars.iter().all(|v| v.is_finite()),
        };
        ok(finite, "marginal parameters must be finite".into())?;
        match self {
            Marginal::Beta { a, b } => ok(*a > -1.0 && *b > -1.0, format!("Beta exponents must exceed -1, got ({a}, {b})")),
            Marginal::Weibull { a, b } => {
                ok(*a > -1.0 && *b > 0.0, format!("Weibull needs a > -1 (shape a + 1 > 0) and b > 0, got ({a}, {b})"))
            }
            Marginal::Exponential { tau } => ok(*tau > 0.0, format!("exponential rate must be positive, got {tau}")),
            Marginal::Gaussian { mean, var } => {
                ok(mean.is_finite() && *var > 0.0, format!("Gaussian needs a finite mean and positive variance, got ({mean}, {var})"))
            }
            Marginal::Mixture { means, vars, weights } => {
                if means.is_empty() || means.len() != vars.len() || means.len() != weights.len() {
                    return domain("mixture needs equally long, nonempty means, vars and weights");
                }
                if means.iter().any(|m| !m.is_finite()) || vars.iter().any(|v| !(*v > 0.0)) {
                    return domain("mixture components need finite means and positive variances");
                }
                if weights.iter().any(|w| !(*w > 0.0)) {
                    return domain("mixture weights must be positive");
                }
                let s: f64 = weights.iter().sum();
                ok((s - 1.0).abs() < 1e-9, format!("mixture weights sum to {s}, not 1"))
            }
        }
    }

    pub fn domain(&self) -> Domain {
        match self {
            Marginal::Beta { .. } => Domain::Interval,
            Marginal::Weibull { .. } => Domain::OpenHalfLine,
            Marginal::Exponential { .. } => Domain::HalfLine,
            Marginal::Gaussian { .. } | Marginal::Mixture { .. } => Domain::Line,
        }
    }

    /// Normalized potential `U(x)`, so that `e^{-U}` integrates to one.
    pub fn potential(&self, x: f64) -> f64 {
        match self {
            Marginal::Beta { a, b } => -a * x.ln() - b * (1.0 - x).ln() + ln_beta(a + 1.0, b + 1.0),
            Marginal::Weibull { a, b } => {
                let c = (b / (a + 1.0)).ln() + a * b.ln();
                c + (x / b).powf(a + 1.0) - a * x.ln()
            }
            Marginal::Exponential { tau } => tau * x - tau.ln(),
            Marginal::Gaussian { mean, var } => -log_normal_pdf(x, *mean, *var),
            Marginal::Mixture { means, vars, weights } => {
                let terms: Vec<f64> =
                    means.iter().zip(vars).zip(weights).map(|((m, v), w)| w.ln() + log_normal_pdf(x, *m, *v)).collect();
                -log_sum_exp(&terms)
            }
        }
    }

    /// Truncation window. Interval models use the whole interval; the others cover
    /// `1 - WINDOW_TAIL` of the mass, with half-lines cut at zero.
    pub fn window(&self) -> (f64, f64) {
        let upper = -(0.5 * WINDOW_TAIL).ln();
        match self {
            Marginal::Beta { .. } => (0.0, 1.0),
            Marginal::Weibull { a, b } => (0.0, b * upper.powf(1.0 / (a + 1.0))),
            Marginal::Exponential { tau } => (0.0, upper / tau),
            Marginal::Gaussian { mean, var } => {
                let z = gaussian_quantile_z() * var.sqrt();
                (mean - z, mean + z)
            }
            Marginal::Mixture { means, vars, .. } => {
                let z = gaussian_quantile_z();
                let lo = means.iter().zip(vars).map(|(m, v)| m - z * v.sqrt()).fold(f64::INFINITY, f64::min);
                let hi = means.iter().zip(vars).map(|(m, v)| m + z * v.sqrt()).fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
        }
    }
}

/// Reference transition `Q(x, dy) = e^{-W(x, y)} dy`; `W` includes the normalizer.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `Q(x, dy) = dy` on `(0, 1)`, so `W = 0`.
    Uniform,
    /// Density `(1 - |x - y|) / q(x)` on `(0, 1)`, `q(x) = 1/2 + x(1-x)`.
    Triangular,
    /// Density `|x - y| / q(x)` on `(0, 1)`, `q(x) = 1/2 - x(1-x)`; `W = +inf` on the diagonal.
    EnergyBarrier,
    /// Density `sqrt(1 - (x-y)^2) / q(x)` on `(0, 1)`.
    Semicircle,
    /// Density proportional to `e^{-varsigma |x - y|}` on the line or on the half-line.
    BiLaplace { varsigma: f64, half_line: bool },
    Cauchy { a: f64 },
    /// `y ~ N(alpha + beta x, tau)`.
    Gaussian { alpha: f64, beta: f64, tau: f64 },
}

/// `int_0^s sqrt(1 - u^2) du`.
fn semicircle_area(s: f64) -> f64 {
    0.5 * (s * (1.0 - s * s).max(0.0).sqrt() + s.clamp(-1.0, 1.0).asin())
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::BiLaplace { varsigma, .. } if !(*varsigma > 0.0 && varsigma.is_finite()) => {
                domain(format!("bi-Laplace rate must be positive, got {varsigma}"))
            }
            KernelSpec::Cauchy { a } if !(*a > 0.0 && a.is_finite()) => domain(format!("Cauchy scale must be positive, got {a}")),
            KernelSpec::Gaussian { alpha, beta, tau } if !(alpha.is_finite() && beta.is_finite() && *beta != 0.0) => {
                domain(format!("Gaussian kernel needs finite alpha and nonzero beta, got ({alpha}, {beta}), tau {tau}"))
            }
            KernelSpec::Gaussian { tau, .. } if !(*tau > 0.0 && tau.is_finite()) => {
                domain(format!("Gaussian kernel variance must be positive, got {tau}"))
            }
            _ => Ok(()),
        }
    }

    /// Exact normalizer `q(x)` of the unnormalized density, where one is used.
    pub fn normalizer(&self, x: f64) -> f64 {
        match self {
            KernelSpec::Uniform => 1.0,
            KernelSpec::Triangular => 0.5 + x * (1.0 - x),
            KernelSpec::EnergyBarrier => 0.5 - x * (1.0 - x),
            KernelSpec::Semicircle => semicircle_area(x) + semicircle_area(1.0 - x),
            KernelSpec::BiLaplace { varsigma, half_line: false } => 2.0 / varsigma,
            KernelSpec::BiLaplace { varsigma, half_line: true } => (2.0 - (-varsigma * x).exp()) / varsigma,
            KernelSpec::Cauchy { a } => PI * a,
            KernelSpec::Gaussian { tau, .. } => (2.0 * PI * tau).sqrt(),
        }
    }

    /// Unnormalized density `k(x, y)`, so that `Q(x, dy) = k(x, y) dy / q(x)`.
    pub fn shape(&self, x: f64, y: f64) -> f64 {
        match self {
            KernelSpec::Uniform => 1.0,
            KernelSpec::Triangular => 1.0 - (x - y).abs(),
            KernelSpec::EnergyBarrier => (x - y).abs(),
            KernelSpec::Semicircle => (1.0 - (x - y) * (x - y)).max(0.0).sqrt(),
            _ => (-self.cost(x, y) + self.normalizer(x).ln()).exp(),
        }
    }

    /// `W(x, y)`; may be `+inf` (energy barrier on the diagonal).
    pub fn cost(&self, x: f64, y: f64) -> f64 {
        match self {
            KernelSpec::Uniform => 0.0,
            KernelSpec::Triangular => -(1.0 - (x - y).abs()).ln() + self.normalizer(x).ln(),
            KernelSpec::EnergyBarrier => -(x - y).abs().ln() + self.normalizer(x).ln(),
            KernelSpec::Semicircle => -0.5 * (1.0 - (x - y) * (x - y)).ln() + self.normalizer(x).ln(),
            KernelSpec::BiLaplace { varsigma, .. } => varsigma * (x - y).abs() + self.normalizer(x).ln(),
            KernelSpec::Cauchy { a } => {
                let r = (x - y) / a;
                (PI * a).ln() + r.mul_add(r, 1.0).ln()
            }
            KernelSpec::Gaussian { alpha, beta, tau } => {
                let r = y - alpha - beta * x;
                r * r / (2.0 * tau) + 0.5 * (2.0 * PI * tau).ln()
            }
        }
    }

    /// Bounds on `q(x)` over the domain, for kernels whose normalizer is checked on the grid.
    pub fn normalizer_bounds(&self) -> Option<(f64, f64)> {
        match self {
            KernelSpec::Triangular => Some((0.5, 0.75)),
            KernelSpec::EnergyBarrier => Some((0.25, 0.5)),
            KernelSpec::Semicircle => Some((1.0 / 3.0, 1.0)),
            _ => None,
        }
    }
}
