use super::{DivergenceTrace, Side};
use crate::error::{Error, Result};

/// Multiplicative slack allowed on each inequality.
pub const AUDIT_SLACK: f64 = 1.0 + 1e-8;

/// Steps whose right-hand side is below this sit at the round-off floor and are skipped.
pub const AUDIT_FLOOR: f64 = 1e-14;

/// One step of the chain
/// `D(pi_{2n+2}, nu_V) <= chi D(lambda_U, pi_{2n+1}) <= chi^2 D(pi_{2n}, nu_V)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditStep {
    pub n: usize,
    /// `D(pi_{2n+2}, nu_V)`
    pub next_even: f64,
    /// `D(lambda_U, pi_{2n+1})`
    pub odd: f64,
    /// `D(pi_{2n}, nu_V)`
    pub even: f64,
    /// `next_even / (chi odd)`
    pub outer_ratio: f64,
    /// `odd / (chi even)`
    pub inner_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichAudit {
    pub metric: String,
    pub chi: f64,
    pub steps: Vec<AuditStep>,
    /// Largest ratio over audited steps (0 if none).
    pub worst_ratio: f64,
    pub violations: usize,
    /// Steps skipped because a right-hand side was below [`AUDIT_FLOOR`].
    pub skipped: usize,
}

impl SandwichAudit {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Audits both inequalities of the chain at every step present in the trace.
///
/// `chi` defaults to the largest value of the trace's `chi` series (both sides),
/// i.e. the worst Dobrushin coefficient among the computed transitions.
pub fn sandwich_audit(trace: &DivergenceTrace, metric: &str, chi: Option<f64>) -> Result<SandwichAudit> {
    let even = trace.series(metric, Side::Even);
    let odd = trace.series(metric, Side::Odd);
    if even.is_empty() || odd.is_empty() {
        return Err(Error::Precondition(format!("trace lacks even and odd {metric} series")));
    }
    let chi = match chi {
        Some(c) => c,
        None => {
            let c: Vec<f64> = trace
                .series("chi", Side::Even)
                .into_iter()
                .chain(trace.series("chi", Side::Odd))
                .map(|p| p.1)
                .collect();
            if c.is_empty() {
                return Err(Error::Precondition("trace lacks a chi series".into()));
            }
            c.into_iter().fold(0.0, f64::max)
        }
    };
    let lookup = |s: &[(usize, f64)], n: usize| s.iter().find(|p| p.0 == n).map(|p| p.1);
    let ratio = |lhs: f64, rhs: f64| if lhs == 0.0 { 0.0 } else { lhs / rhs };

    let mut audit =
        SandwichAudit { metric: metric.to_string(), chi, steps: Vec::new(), worst_ratio: 0.0, violations: 0, skipped: 0 };
    for &(n, e) in &even {
        let (Some(o), Some(next)) = (lookup(&odd, n), lookup(&even, n + 1)) else {
            continue;
        };
        let (outer_rhs, inner_rhs) = (chi * o, chi * e);
        if outer_rhs < AUDIT_FLOOR || inner_rhs < AUDIT_FLOOR {
            audit.skipped += 1;
            continue;
        }
        let step = AuditStep {
            n,
            next_even: next,
            odd: o,
            even: e,
            outer_ratio: ratio(next, outer_rhs),
            inner_ratio: ratio(o, inner_rhs),
        };
        let worst = step.outer_ratio.max(step.inner_ratio);
        audit.worst_ratio = audit.worst_ratio.max(worst);
        if worst > AUDIT_SLACK {
            audit.violations += 1;
        }
        audit.steps.push(step);
    }
    Ok(audit)
}
