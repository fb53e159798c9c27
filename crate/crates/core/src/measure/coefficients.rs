use ndarray::Array2;

use super::{Kernel, SUPPORT_TOL};
use crate::error::{domain, Result};

/// Column indices charged by row 0, or `None` if some row has a different support.
fn common_support(k: &Kernel) -> Option<Vec<usize>> {
    let d = k.density();
    let support: Vec<usize> = (0..d.ncols()).filter(|&j| d[[0, j]] >= SUPPORT_TOL).collect();
    for row in d.rows() {
        for (j, v) in row.iter().enumerate() {
            let charged = *v >= SUPPORT_TOL;
            if charged != support.binary_search(&j).is_ok() {
                return None;
            }
        }
    }
    Some(support)
}

fn log_table(k: &Kernel, support: &[usize]) -> Array2<f64> {
    let d = k.density();
    Array2::from_shape_fn((d.nrows(), support.len()), |(i, c)| d[[i, support[c]]].ln())
}

/// Cross-ratio coefficient
/// `inf K(x1,y1) K(x2,y2) / (K(x1,y2) K(x2,y1))` over all `(x1, x2, y1, y2)`.
///
/// For fixed `(x1, x2)` the infimum over `(y1, y2)` is `min r / max r` with
/// `r(y) = K(x1,y)/K(x2,y)`, which keeps the search at `O(n^2 m)`. Rows with
/// different supports give 0.
pub fn hbar(k: &Kernel) -> f64 {
    let Some(support) = common_support(k) else {
        return 0.0;
    };
    if support.is_empty() {
        return 0.0;
    }
    let l = log_table(k, &support);
    let n = l.nrows();
    let mut worst = 0.0f64;
    for a in 0..n {
        for b in (a + 1)..n {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (x, y) in l.row(a).iter().zip(l.row(b).iter()) {
                let r = x - y;
                lo = lo.min(r);
                hi = hi.max(r);
            }
            worst = worst.max(hi - lo);
        }
    }
    (-worst).exp()
}

/// `inf K(x1,y) / K(x2,y)` over `(x1, x2, y)`; 0 when rows have different supports.
pub fn jmath(k: &Kernel) -> f64 {
    let Some(support) = common_support(k) else {
        return 0.0;
    };
    if support.is_empty() {
        return 0.0;
    }
    let d = k.density();
    support
        .iter()
        .map(|&j| {
            let col = d.column(j);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(0.0, f64::max);
            lo / hi
        })
        .fold(1.0, f64::min)
}

/// Birkhoff contraction coefficient `(1 - sqrt(hbar)) / (1 + sqrt(hbar))`.
pub fn birkhoff_coefficient(k: &Kernel) -> f64 {
    let s = hbar(k).sqrt();
    (1.0 - s) / (1.0 + s)
}

/// Dobrushin coefficient and its complement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dobrushin {
    /// `chi(K) = max_{x1,x2} ||K(x1,.) - K(x2,.)||_tv`
    pub chi: f64,
    /// `epsilon(K) = 1 - chi(K)`
    pub epsilon: f64,
}

/// Maximum total variation between two rows of `k`.
pub fn dobrushin_coefficient(k: &Kernel) -> Dobrushin {
    let chi = max_row_distance(k, None, |_, _| 2.0).min(1.0);
    Dobrushin { chi, epsilon: 1.0 - chi }
}

/// `max_{a<b} sum_j |k_aj - k_bj| psi_j w_j / norm(a, b)`.
fn max_row_distance(k: &Kernel, psi: Option<&[f64]>, norm: impl Fn(usize, usize) -> f64) -> f64 {
    let d = k.density();
    let w = k.target().weights();
    let scale: Vec<f64> = match psi {
        Some(p) => p.iter().zip(w).map(|(a, b)| a * b).collect(),
        None => w.to_vec(),
    };
    let n = d.nrows();
    let mut best = 0.0f64;
    for a in 0..n {
        let ra = d.row(a);
        for b in (a + 1)..n {
            let rb = d.row(b);
            let s: f64 = ra
                .iter()
                .zip(rb.iter())
                .zip(&scale)
                .map(|((x, y), c)| (x - y).abs() * c)
                .sum();
            best = best.max(s / norm(a, b));
        }
    }
    best
}

/// Weighted Dobrushin coefficient computed over Dirac pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDobrushin {
    pub value: f64,
    /// Always `"Dirac-pair estimator"`.
    pub estimator: &'static str,
    /// Factors applied to `phi` and `psi` to bring their minima up to 1.
    pub phi_scale: f64,
    pub psi_scale: f64,
    pub warnings: Vec<String>,
}

/// `max_{x1 != x2} |K(x1,.) - K(x2,.)|(psi) / (phi(x1) + phi(x2))`.
///
/// On a finite space this sup over Dirac pairs equals the sup over all pairs of
/// probability measures: by the coupling form of the weighted norm, any
/// `nu1 - nu2` is a mixture of `delta_x1 - delta_x2` with cost `phi(x1) + phi(x2)`.
pub fn dobrushin_weighted(k: &Kernel, phi: &[f64], psi: &[f64]) -> Result<WeightedDobrushin> {
    if phi.len() != k.source().len() || psi.len() != k.target().len() {
        return domain("weight lengths do not match kernel spaces");
    }
    let mut warnings = Vec::new();
    let mut rescale = |f: &[f64], name: &str| -> Result<(Vec<f64>, f64)> {
        if f.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return domain(format!("{name} must be positive and finite"));
        }
        let min = f.iter().copied().fold(f64::INFINITY, f64::min);
        if min < 1.0 {
            warnings.push(format!("{name} rescaled by {} to have minimum 1", 1.0 / min));
            Ok((f.iter().map(|v| v / min).collect(), 1.0 / min))
        } else {
            Ok((f.to_vec(), 1.0))
        }
    };
    let (phi, phi_scale) = rescale(phi, "phi")?;
    let (psi, psi_scale) = rescale(psi, "psi")?;
    let value = max_row_distance(k, Some(&psi), |a, b| phi[a] + phi[b]);
    Ok(WeightedDobrushin {
        value,
        estimator: "Dirac-pair estimator",
        phi_scale,
        psi_scale,
        warnings,
    })
}
