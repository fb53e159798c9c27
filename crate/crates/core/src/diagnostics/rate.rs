use crate::error::{Error, Result};

/// Values below this are treated as noise and left out of rate fits.
pub const FIT_FLOOR: f64 = 1e-14;

pub const DEFAULT_BURN_IN: usize = 5;

/// Least-squares fit `log value ~ intercept + n log rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub rate: f64,
    pub intercept: f64,
    /// Root-mean-square misfit in log units.
    pub residual: f64,
    pub points: usize,
    /// Post-burn-in points left out for being below [`FIT_FLOOR`] or infinite.
    pub dropped: usize,
}

/// Fits a geometric rate to the points with `n >= burn_in`.
pub fn fit_rate(series: &[(usize, f64)], burn_in: usize) -> Result<RateFit> {
    let mut dropped = 0;
    let mut pts = Vec::new();
    for &(n, v) in series.iter().filter(|p| p.0 >= burn_in) {
        if v >= FIT_FLOOR && v.is_finite() {
            pts.push((n as f64, v.ln()));
        } else {
            dropped += 1;
        }
    }
    if pts.len() < 4 {
        return Err(Error::Precondition(format!(
            "rate fit needs 4 usable points after burn-in {burn_in}, found {} ({dropped} dropped)",
            pts.len()
        )));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / k).sqrt();
    Ok(RateFit { rate: slope.exp(), intercept, residual, points: pts.len(), dropped })
}

/// Like [`fit_rate`], but lowers the burn-in (never below 0) when fewer than
/// 4 usable points would remain. Returns the fit and the burn-in used.
pub fn fit_rate_adaptive(series: &[(usize, f64)], burn_in: usize) -> Result<(RateFit, usize)> {
    let usable: Vec<usize> = series.iter().filter(|p| p.1 >= FIT_FLOOR && p.1.is_finite()).map(|p| p.0).collect();
    let mut b = burn_in;
    while b > 0 && usable.iter().filter(|n| **n >= b).count() < 4 {
        b -= 1;
    }
    fit_rate(series, b).map(|f| (f, b))
}
