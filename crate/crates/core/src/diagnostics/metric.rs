use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::measure::{hilbert_metric, phi_entropy, renyi_divergence, weighted_tv, Measure, PhiSpec};

/// A quantity recorded along a Sinkhorn run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Phi(PhiSpec),
    /// Rényi divergence of the given order.
    Renyi(f64),
    Hilbert,
    /// Weighted total variation with weight `e^{delta (V - V_*)}` (even side) or
    /// `e^{delta (U - U_*)}` (odd side).
    WeightedTv(f64),
    /// Dobrushin coefficient of the transition producing the marginal.
    Chi,
}

impl Metric {
    pub fn validate(&self) -> Result<()> {
        match self {
            Metric::Phi(p) => p.validate(),
            Metric::Renyi(a) if !(a.is_finite() && *a > 0.0) => {
                Err(Error::Domain(format!("renyi order must be positive, got {a}")))
            }
            Metric::WeightedTv(d) if !(d.is_finite() && *d > 0.0) => {
                Err(Error::Domain(format!("wtv exponent must be positive, got {d}")))
            }
            _ => Ok(()),
        }
    }

    /// Divergence of `a` from `b`; `weight` is used only by [`Metric::WeightedTv`].
    pub fn divergence(&self, a: &Measure, b: &Measure, weight: Option<&[f64]>) -> Result<f64> {
        match self {
            Metric::Phi(p) => phi_entropy(*p, a, b),
            Metric::Renyi(alpha) => renyi_divergence(*alpha, a, b),
            Metric::Hilbert => hilbert_metric(a, b),
            Metric::WeightedTv(_) => {
                let w = weight.ok_or_else(|| Error::Precondition("wtv needs a weight function".into()))?;
                Ok(weighted_tv(a, b, w)?.value)
            }
            Metric::Chi => Err(Error::Precondition("chi is a kernel coefficient, not a divergence".into())),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Phi(p) => write!(f, "{p}"),
            Metric::Renyi(a) => write!(f, "renyi({a})"),
            Metric::Hilbert => write!(f, "hilbert"),
            Metric::WeightedTv(d) => write!(f, "wtv({d})"),
            Metric::Chi => write!(f, "chi"),
        }
    }
}

fn parenthesized<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    s.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')')
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let m = if s == "hilbert" {
            Metric::Hilbert
        } else if s == "chi" {
            Metric::Chi
        } else if let Some(a) = parenthesized(s, "renyi") {
            Metric::Renyi(a.parse().map_err(|_| Error::Parse(format!("bad renyi order in {s:?}")))?)
        } else if let Some(d) = parenthesized(s, "wtv") {
            Metric::WeightedTv(d.parse().map_err(|_| Error::Parse(format!("bad wtv exponent in {s:?}")))?)
        } else {
            Metric::Phi(s.parse()?)
        };
        m.validate()?;
        Ok(m)
    }
}
