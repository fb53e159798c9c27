use serde::Serialize;

use super::{check_h_delta, Verdict, ZooModel};
use crate::error::{domain, Result};
use crate::gaussian::{check_cc, GaussianEOTModel};

/// One `(i, j)` pair of a mixture model.
#[derive(Debug, Clone)]
pub enum MixtureComponent {
    /// Checked in closed form.
    Gaussian(GaussianEOTModel),
    /// Checked numerically.
    Generic(Box<ZooModel>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureVerdict {
    pub delta: f64,
    pub verdict: Verdict,
    pub components: Vec<Verdict>,
}

/// Condition H_delta for every component pair: violated if any pair is violated,
/// satisfied if all pairs are.
pub fn mixture_check(components: &[MixtureComponent], weights: &[f64], delta: f64) -> Result<MixtureVerdict> {
    if components.is_empty() {
        return domain("mixture has no components");
    }
    if weights.len() != components.len() {
        return domain(format!("{} weights for {} components", weights.len(), components.len()));
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return domain("mixture weights must be positive");
    }
    let s: f64 = weights.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return domain(format!("mixture weights sum to {s}, not 1"));
    }
    let verdicts = components
        .iter()
        .map(|c| match c {
            MixtureComponent::Gaussian(m) => {
                Ok(if check_cc(m, delta)?.satisfied { Verdict::Satisfied } else { Verdict::Violated })
            }
            MixtureComponent::Generic(z) => Ok(check_h_delta(z, delta)?.verdict),
        })
        .collect::<Result<Vec<_>>>()?;
    let verdict = if verdicts.contains(&Verdict::Violated) {
        Verdict::Violated
    } else if verdicts.iter().all(|v| *v == Verdict::Satisfied) {
        Verdict::Satisfied
    } else {
        Verdict::Inconclusive
    };
    Ok(MixtureVerdict { delta, verdict, components: verdicts })
}
