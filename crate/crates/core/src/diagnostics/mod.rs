//! Divergence traces, rate fits, the sandwich audit and run reports.

mod audit;
mod metric;
mod rate;
mod trace;

pub use audit::{sandwich_audit, AuditStep, SandwichAudit, AUDIT_FLOOR, AUDIT_SLACK};
pub use metric::Metric;
pub use rate::{fit_rate, fit_rate_adaptive, RateFit, DEFAULT_BURN_IN, FIT_FLOOR};
pub use trace::{format_value, write_atomic, DivergenceTrace, Side, TraceRecord, CSV_HEADER};

use std::fmt::Write as _;

/// Plain-text summary of a trace: per-series last value and fitted rate
/// (burn-in lowered when the series reaches the round-off floor early).
pub fn report(trace: &DivergenceTrace, burn_in: usize, theoretical_rate: Option<f64>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "model: {}", trace.model);
    for (k, v) in &trace.metadata {
        let _ = writeln!(out, "{k}: {v}");
    }
    if let Some(rho) = theoretical_rate {
        let _ = writeln!(out, "theoretical rate: {rho:.9}");
    }
    for (metric, side) in trace.series_keys() {
        let series = trace.series(&metric, side);
        let last = series.last().map(|p| p.1).unwrap_or(f64::NAN);
        let fit = if metric == "chi" {
            String::new()
        } else {
            match fit_rate_adaptive(&series, burn_in) {
                Ok((f, b)) if b < burn_in => {
                    format!("rate {:.6} (residual {:.2e}, {} points, burn-in lowered to {b})", f.rate, f.residual, f.points)
                }
                Ok((f, _)) => format!("rate {:.6} (residual {:.2e}, {} points)", f.rate, f.residual, f.points),
                Err(e) => format!("rate unavailable: {e}"),
            }
        };
        let _ = writeln!(out, "{}", format!("{metric:>12} {side:<4} last {last:.6e}  {fit}").trim_end());
    }
    out
}
