use serde::Serialize;

use crate::error::{domain, Result};
use crate::measure::Kernel;
use crate::sinkhorn::{backward_transition, forward_transition, SinkhornState, TransportModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftPoint {
    pub epsilon: f64,
    /// `max_x (S_{2n}(psi) - epsilon phi)_+`.
    pub c_even: f64,
    /// `max_y (S_{2n+1}(phi) - epsilon psi)_+`.
    pub c_odd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinorizationPoint {
    pub r: f64,
    /// Sizes of the sub-level sets `{phi <= r}` and `{psi <= r}`.
    pub x_points: usize,
    pub y_points: usize,
    /// One minus the largest TV distance between rows started in the sub-level sets.
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftProbe {
    pub frontier: Vec<DriftPoint>,
    pub minorization: Vec<MinorizationPoint>,
    pub notes: Vec<String>,
}

fn drift_constant(k: &Kernel, target: &[f64], source: &[f64], eps: f64) -> Result<f64> {
    let image = k.apply_function(target)?;
    Ok(image.iter().zip(source).map(|(s, p)| (s - eps * p).max(0.0)).fold(0.0, f64::max))
}

/// Largest TV distance between rows of `k` indexed by `rows`.
fn max_row_tv(k: &Kernel, rows: &[usize]) -> f64 {
    let d = k.density();
    let w = k.target().weights();
    let mut worst: f64 = 0.0;
    for (a, &i) in rows.iter().enumerate() {
        for &j in &rows[a + 1..] {
            let tv: f64 = d.row(i).iter().zip(d.row(j)).zip(w).map(|((p, q), w)| (p - q).abs() * w).sum();
            worst = worst.max(0.5 * tv);
        }
    }
    worst
}

/// Drift constants `c(epsilon)` for the transitions of `state` and minorization
/// constants `epsilon(r)` on the sub-level sets of `phi` (on X) and `psi` (on Y).
pub fn drift_minorization_probe(
    model: &TransportModel,
    state: &SinkhornState,
    phi: &[f64],
    psi: &[f64],
    eps_grid: &[f64],
    r_grid: &[f64],
) -> Result<DriftProbe> {
    if phi.len() != model.x().len() || psi.len() != model.y().len() {
        return domain("phi and psi must be sampled on the X and Y grids");
    }
    if phi.iter().chain(psi).any(|v| !(*v >= 1.0) || !v.is_finite()) {
        return domain("phi and psi must be finite and at least 1");
    }
    if let Some(e) = eps_grid.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
        return domain(format!("epsilon grid values must be finite and nonnegative, got {e}"));
    }
    let even = forward_transition(model, state);
    let odd = backward_transition(model, state)?;
    let frontier = eps_grid
        .iter()
        .map(|&epsilon| {
            Ok(DriftPoint {
                epsilon,
                c_even: drift_constant(&even, psi, phi, epsilon)?,
                c_odd: drift_constant(&odd, phi, psi, epsilon)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut minorization = Vec::new();
    let mut notes = Vec::new();
    for &r in r_grid {
        let cx: Vec<usize> = (0..phi.len()).filter(|&i| phi[i] <= r).collect();
        let cy: Vec<usize> = (0..psi.len()).filter(|&j| psi[j] <= r).collect();
        if cx.is_empty() || cy.is_empty() {
            notes.push(format!("sub-level set at r = {r} is empty; skipped"));
            continue;
        }
        let worst = max_row_tv(&even, &cx).max(max_row_tv(&odd, &cy));
        minorization.push(MinorizationPoint { r, x_points: cx.len(), y_points: cy.len(), epsilon: 1.0 - worst });
    }
    Ok(DriftProbe { frontier, minorization, notes })
}
