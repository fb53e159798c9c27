use std::fmt;
use std::str::FromStr;

use super::{same_space, Measure, SUPPORT_TOL};
use crate::error::{domain, Error, Result};

/// Jointly convex, degree-one homogeneous divergence generators with `Phi(1,1) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhiSpec {
    /// `|u - v| / 2`
    Tv,
    /// `u log(u/v)`, evaluated as `v phi(u/v)` with `phi(t) = t log t - t + 1`.
    Kl,
    /// `(sqrt u - sqrt v)^2 / 2`
    Hellinger2,
    /// `(u^a v^(1-a) - a u - (1-a) v) / (a (a-1))`, `a` not in {0, 1}.
    AlphaDiv(f64),
    /// `KL(u | m)/2 + KL(v | m)/2` with `m = (u+v)/2`.
    JensenShannon,
    /// `(u - v) log(u/v)`
    Jeffreys,
}

impl PhiSpec {
    /// Every generator implemented, with a few representative alpha values.
    pub fn all() -> Vec<PhiSpec> {
        vec![
            PhiSpec::Tv,
            PhiSpec::Kl,
            PhiSpec::Hellinger2,
            PhiSpec::AlphaDiv(0.5),
            PhiSpec::AlphaDiv(2.0),
            PhiSpec::AlphaDiv(-0.5),
            PhiSpec::JensenShannon,
            PhiSpec::Jeffreys,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PhiSpec::AlphaDiv(a) if !a.is_finite() || a == 0.0 || a == 1.0 => {
                domain(format!("alpha-divergence needs a finite alpha outside {{0, 1}}, got {a}"))
            }
            _ => Ok(()),
        }
    }

    /// Pointwise generator `Phi(u, v)`.
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        let u = if u < SUPPORT_TOL { 0.0 } else { u };
        let v = if v < SUPPORT_TOL { 0.0 } else { v };
        match *self {
            PhiSpec::Tv => 0.5 * (u - v).abs(),
            PhiSpec::Kl => {
                if u == 0.0 {
                    v
                } else if v == 0.0 {
                    f64::INFINITY
                } else {
                    v * xlogx_shifted(u / v)
                }
            }
            PhiSpec::Hellinger2 => {
                let d = u.sqrt() - v.sqrt();
                0.5 * d * d
            }
            PhiSpec::AlphaDiv(a) => alpha_gen(a, u, v),
            PhiSpec::JensenShannon => {
                let m = 0.5 * (u + v);
                if m == 0.0 {
                    return 0.0;
                }
                0.5 * m * (xlogx_shifted(u / m) + xlogx_shifted(v / m))
            }
            PhiSpec::Jeffreys => {
                if u == v {
                    0.0
                } else if u == 0.0 || v == 0.0 {
                    f64::INFINITY
                } else {
                    (u - v) * ((u - v) / v).ln_1p()
                }
            }
        }
    }
}

/// `t log t - t + 1`, accurate near `t = 1`.
pub(crate) fn xlogx_shifted(t: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let s = t - 1.0;
    if s.abs() < 1e-3 {
        // sum_{k>=2} (-1)^k s^k / (k (k-1))
        let mut term = s * s;
        let mut acc = 0.0;
        for k in 2..12 {
            let kf = k as f64;
            acc += term / (kf * (kf - 1.0));
            term *= -s;
        }
        acc
    } else {
        t * t.ln() - s
    }
}

fn alpha_gen(a: f64, u: f64, v: f64) -> f64 {
    let denom = a * (a - 1.0);
    if u == 0.0 && v == 0.0 {
        return 0.0;
    }
    if v == 0.0 {
        // u * lim_{t -> inf} f(t)/t
        return if a > 1.0 { f64::INFINITY } else { u / (1.0 - a) };
    }
    if u == 0.0 {
        return if a < 0.0 { f64::INFINITY } else { v / a };
    }
    let ls = (u / v).ln();
    // u^a v^(1-a) - a u - (1-a) v = v (expm1(a ls) - a expm1(ls))
    v * ((a * ls).exp_m1() - a * ls.exp_m1()) / denom
}

impl fmt::Display for PhiSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhiSpec::Tv => write!(f, "TV"),
            PhiSpec::Kl => write!(f, "KL"),
            PhiSpec::Hellinger2 => write!(f, "Hellinger2"),
            PhiSpec::AlphaDiv(a) => write!(f, "alpha({a})"),
            PhiSpec::JensenShannon => write!(f, "JS"),
            PhiSpec::Jeffreys => write!(f, "Jeffreys"),
        }
    }
}

impl FromStr for PhiSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let spec = match s {
            "TV" => PhiSpec::Tv,
            "KL" => PhiSpec::Kl,
            "Hellinger2" => PhiSpec::Hellinger2,
            "JS" => PhiSpec::JensenShannon,
            "Jeffreys" => PhiSpec::Jeffreys,
            _ => {
                let inner = s
                    .strip_prefix("alpha(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::Parse(format!("unknown divergence '{s}'")))?;
                let a: f64 = inner
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad alpha in '{s}'")))?;
                PhiSpec::AlphaDiv(a)
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// `D_Phi(mu1, mu2) = sum_i Phi(d1_i, d2_i) w_i`.
pub fn phi_entropy(spec: PhiSpec, mu1: &Measure, mu2: &Measure) -> Result<f64> {
    spec.validate()?;
    same_space(mu1, mu2, "phi_entropy")?;
    let w = mu1.space().weights();
    let mut acc = 0.0;
    for ((u, v), wi) in mu1.density().iter().zip(mu2.density().iter()).zip(w) {
        let p = spec.eval(*u, *v);
        if p == f64::INFINITY {
            return Ok(f64::INFINITY);
        }
        acc += p * wi;
    }
    Ok(acc.max(0.0))
}

/// Renyi divergence of order `alpha`: `log(sum d1^a d2^(1-a) w) / (a - 1)`.
///
/// Returns infinity when `alpha > 1` and `mu1` charges a point where `mu2` vanishes.
pub fn renyi_divergence(alpha: f64, mu1: &Measure, mu2: &Measure) -> Result<f64> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return domain(format!("Renyi order must be positive, got {alpha}"));
    }
    if alpha == 1.0 {
        return domain("Renyi order 1 is the KL divergence; use PhiSpec::Kl");
    }
    same_space(mu1, mu2, "renyi_divergence")?;
    let w = mu1.space().weights();
    let mut s = 0.0;
    for ((u, v), wi) in mu1.density().iter().zip(mu2.density().iter()).zip(w) {
        let (u, v) = (*u, *v);
        if u < SUPPORT_TOL {
            continue;
        }
        if v < SUPPORT_TOL {
            if alpha > 1.0 {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        s += v * (alpha * (u / v).ln()).exp() * wi;
    }
    if s == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(s.ln() / (alpha - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{total_variation, DiscreteSpace};
    use proptest::prelude::*;

    fn pair(a: [f64; 2], b: [f64; 2]) -> (Measure, Measure) {
        let s = DiscreteSpace::unit(2);
        (Measure::new(s.clone(), a.to_vec()).unwrap(), Measure::new(s, b.to_vec()).unwrap())
    }

    #[test]
    fn kl_reference_value() {
        let (p, q) = pair([0.9, 0.1], [0.5, 0.5]);
        let expected = 0.9 * 1.8f64.ln() + 0.1 * 0.2f64.ln();
        let got = phi_entropy(PhiSpec::Kl, &p, &q).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.3680642071684971).abs() < 1e-15);
    }

    #[test]
    fn kl_conventions() {
        let (p, q) = pair([1.0, 0.0], [0.5, 0.5]);
        assert!((phi_entropy(PhiSpec::Kl, &p, &q).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(phi_entropy(PhiSpec::Kl, &q, &p).unwrap(), f64::INFINITY);
        assert_eq!(phi_entropy(PhiSpec::Kl, &p, &p).unwrap(), 0.0);
    }

    #[test]
    fn tv_generator_matches_tv() {
        let (p, q) = pair([0.9, 0.1], [0.2, 0.8]);
        let d = phi_entropy(PhiSpec::Tv, &p, &q).unwrap();
        assert!((d - 0.7).abs() < 1e-15);
        assert!((d - total_variation(&p, &q).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn renyi_reference_value() {
        let (p, q) = pair([0.9, 0.1], [0.5, 0.5]);
        assert!((renyi_divergence(2.0, &p, &q).unwrap() - 1.64f64.ln()).abs() < 1e-14);
        assert!(renyi_divergence(1.0, &p, &q).is_err());
        assert!(renyi_divergence(0.0, &p, &q).is_err());
        assert!(renyi_divergence(0.5, &p, &p).unwrap().abs() < 1e-15);
    }

    #[test]
    fn renyi_tends_to_kl() {
        let (p, q) = pair([0.3, 0.7], [0.6, 0.4]);
        let kl = phi_entropy(PhiSpec::Kl, &p, &q).unwrap();
        for a in [1.0 - 1e-4, 1.0 + 1e-4] {
            assert!((renyi_divergence(a, &p, &q).unwrap() - kl).abs() < 1e-4);
        }
    }

    #[test]
    fn alpha_validation_and_names() {
        assert!(PhiSpec::AlphaDiv(1.0).validate().is_err());
        assert!(PhiSpec::AlphaDiv(0.0).validate().is_err());
        for spec in PhiSpec::all() {
            let back: PhiSpec = spec.to_string().parse().unwrap();
            assert_eq!(back, spec);
        }
        assert!("alpha(1)".parse::<PhiSpec>().is_err());
        assert!("nope".parse::<PhiSpec>().is_err());
    }

    #[test]
    fn hellinger_alpha_half_relation() {
        // alpha(1/2) generator is 2 (sqrt u - sqrt v)^2
        for (u, v) in [(0.3, 0.9), (2.0, 0.1), (1.0, 1.0)] {
            let h = PhiSpec::Hellinger2.eval(u, v);
            let a = PhiSpec::AlphaDiv(0.5).eval(u, v);
            assert!((a - 4.0 * h).abs() < 1e-14);
        }
    }

    #[test]
    fn shifted_xlogx_is_smooth_across_branch() {
        for t in [1.0 - 1.1e-3, 1.0 - 0.9e-3, 1.0 + 0.9e-3, 1.0 + 1.1e-3] {
            let direct = t * f64::ln(t) - (t - 1.0);
            assert!((xlogx_shifted(t) - direct).abs() < 1e-15);
        }
        assert_eq!(xlogx_shifted(1.0), 0.0);
    }

    proptest! {
        #[test]
        fn homogeneous_and_zero_on_diagonal(u in 0.0f64..10.0, v in 0.0f64..10.0, a in 0.01f64..100.0) {
            for spec in PhiSpec::all() {
                prop_assert_eq!(spec.eval(1.0, 1.0), 0.0);
                let lhs = spec.eval(a * u, a * v);
                let rhs = a * spec.eval(u, v);
                if lhs.is_finite() || rhs.is_finite() {
                    prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()), "{} {} {}", spec, lhs, rhs);
                }
                prop_assert!(spec.eval(u, v) >= -1e-15);
            }
        }
    }
}
