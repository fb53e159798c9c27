use super::{same_space, Measure, MASS_TOL, SUPPORT_TOL};
use crate::error::{domain, Result};

/// `||mu1 - mu2||_tv = sum_i |d1_i - d2_i| w_i / 2` for probability measures.
pub fn total_variation(mu1: &Measure, mu2: &Measure) -> Result<f64> {
    same_space(mu1, mu2, "total_variation")?;
    for (name, m) in [("first", mu1), ("second", mu2)] {
        if !m.is_probability(1e3 * MASS_TOL) {
            return domain(format!("total_variation: {name} measure has mass {}", m.mass()));
        }
    }
    let w = mu1.space().weights();
    let s: f64 = mu1
        .density()
        .iter()
        .zip(mu2.density().iter())
        .zip(w)
        .map(|((a, b), wi)| (a - b).abs() * wi)
        .sum();
    Ok(0.5 * s)
}

/// Hilbert projective metric `log(max d1/d2 * max d2/d1)` over the common support,
/// infinite when the supports differ.
pub fn hilbert_metric(mu1: &Measure, mu2: &Measure) -> Result<f64> {
    same_space(mu1, mu2, "hilbert_metric")?;
    let mut log_max = f64::NEG_INFINITY;
    let mut log_max_inv = f64::NEG_INFINITY;
    let mut any = false;
    for (a, b) in mu1.density().iter().zip(mu2.density().iter()) {
        let (za, zb) = (*a < SUPPORT_TOL, *b < SUPPORT_TOL);
        match (za, zb) {
            (true, true) => continue,
            (false, false) => {
                let r = a.ln() - b.ln();
                log_max = log_max.max(r);
                log_max_inv = log_max_inv.max(-r);
                any = true;
            }
            _ => return Ok(f64::INFINITY),
        }
    }
    if !any {
        return Ok(0.0);
    }
    Ok((log_max + log_max_inv).max(0.0))
}

/// Value of the weighted total variation `|mu1 - mu2|(phi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedTv {
    pub value: f64,
    /// Factor applied to `phi` so that its minimum is at least 1/2; 1 when untouched.
    pub phi_scale: f64,
}

/// `|mu1 - mu2|(phi) = sum_i |d1_i - d2_i| phi_i w_i`.
///
/// When `min phi < 1/2` the weight is rescaled to have minimum 1/2 and the factor is
/// reported; the returned value uses the rescaled weight.
pub fn weighted_tv(mu1: &Measure, mu2: &Measure, phi: &[f64]) -> Result<WeightedTv> {
    same_space(mu1, mu2, "weighted_tv")?;
    if phi.len() != mu1.space().len() {
        return domain("weight function length does not match space");
    }
    if let Some(p) = phi.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return domain(format!("weight function must be positive and finite, found {p}"));
    }
    let min = phi.iter().copied().fold(f64::INFINITY, f64::min);
    let phi_scale = if min < 0.5 { 0.5 / min } else { 1.0 };
    let w = mu1.space().weights();
    let value = mu1
        .density()
        .iter()
        .zip(mu2.density().iter())
        .zip(w)
        .zip(phi)
        .map(|(((a, b), wi), p)| (a - b).abs() * p * phi_scale * wi)
        .sum();
    Ok(WeightedTv { value, phi_scale })
}
