use super::{marginal_even, marginal_odd, step, SinkhornState, TransportModel};
use crate::error::{Error, Result};
use crate::measure::{phi_entropy, total_variation, PhiSpec};

/// Summands below this end the tail series.
pub const SERIES_TERM_FLOOR: f64 = 1e-15;

/// `Ent(P | P_{2n})` computed two ways.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyToBridge {
    pub n: usize,
    /// `lambda_U(U_{2n} - U_inf) + nu_V(V_{2n} - V_inf)`
    pub direct: f64,
    /// `sum_{p >= n} Ent(lambda_U | pi_{2p+1}) + Ent(nu_V | pi_{2p})`, truncated.
    pub series: f64,
    pub terms: usize,
    /// Geometric estimate of the neglected tail; infinite if the terms were not shrinking.
    pub truncation_bound: f64,
}

/// Compares the potential gap to the limit with the tail sum of marginal entropies.
///
/// `limit` must come from a run that reached `TV(pi_{2N}, nu_V) < 1e-12`.
pub fn entropy_to_bridge(
    model: &TransportModel,
    state: &SinkhornState,
    limit: &SinkhornState,
    max_terms: usize,
) -> Result<EntropyToBridge> {
    let tv = total_variation(&marginal_even(model, limit)?, model.nu_v())?;
    if !(tv < 1e-12) {
        return Err(Error::Precondition(format!("limit state is not converged: TV = {tv:e}")));
    }
    let lam = model.lambda_u();
    let nu = model.nu_v();
    let du: Vec<f64> = state.u.iter().zip(&limit.u).map(|(a, b)| a - b).collect();
    let dv: Vec<f64> = state.v.iter().zip(&limit.v).map(|(a, b)| a - b).collect();
    let direct = lam.integrate(&du) + nu.integrate(&dv);

    let mut s = state.clone();
    let mut series = 0.0;
    let mut terms = 0;
    let mut last = f64::INFINITY;
    let mut before = f64::INFINITY;
    while terms < max_terms {
        let term = phi_entropy(PhiSpec::Kl, lam, &marginal_odd(model, &s)?)?
            + phi_entropy(PhiSpec::Kl, nu, &marginal_even(model, &s)?)?;
        series += term;
        terms += 1;
        before = last;
        last = term;
        if term < SERIES_TERM_FLOOR {
            break;
        }
        s = step(model, &s)?;
    }
    let r = last / before;
    let truncation_bound = if r < 1.0 { last * r / (1.0 - r) } else { f64::INFINITY };
    Ok(EntropyToBridge { n: state.n, direct, series, terms, truncation_bound })
}
