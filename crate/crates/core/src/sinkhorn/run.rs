use super::{backward_from, forward_transition, next_v, step_with, SinkhornState, TransportModel};
use crate::diagnostics::{DivergenceTrace, Metric, Side};
use crate::error::{Error, Result};
use crate::measure::{apply_kernel, dobrushin_coefficient, total_variation};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub maxiter: usize,
    /// Stop once `TV(pi_{2n}, nu_V) < stop_tol`; `None` or `+inf` disables early stopping.
    pub stop_tol: Option<f64>,
    pub metrics: Vec<Metric>,
    pub label: String,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { maxiter: 100, stop_tol: Some(1e-10), metrics: Vec::new(), label: "model".into() }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// State of the last recorded cycle.
    pub state: SinkhornState,
    pub trace: DivergenceTrace,
    pub converged: bool,
    /// `TV(pi_{2n}, nu_V)` at the last recorded cycle.
    pub final_tv: f64,
}

fn weight(model: &TransportModel, side: Side, delta: f64) -> Vec<f64> {
    let p = match side {
        Side::Even => model.v(),
        Side::Odd => model.u(),
    };
    let min = p.iter().copied().fold(f64::INFINITY, f64::min);
    p.iter().map(|x| (delta * (x - min)).exp()).collect()
}

/// Iterates from `(U, 0)` recording, for each cycle `n`, every metric on
/// `(pi_{2n}, nu_V)` (side even) and `(lambda_U, pi_{2n+1})` (side odd).
pub fn run(model: &TransportModel, opts: &RunOptions) -> Result<RunOutcome> {
    if opts.maxiter == 0 {
        return Err(Error::Domain("maxiter must be at least 1".into()));
    }
    for m in &opts.metrics {
        m.validate()?;
    }
    let stop = match opts.stop_tol {
        Some(t) if t.is_nan() || t < 0.0 => return Err(Error::Domain(format!("stop_tol must be nonnegative, got {t}"))),
        Some(t) if t.is_finite() => t,
        _ => f64::NEG_INFINITY,
    };
    let weights: Vec<(Vec<f64>, Vec<f64>)> = opts
        .metrics
        .iter()
        .map(|m| match m {
            Metric::WeightedTv(d) => (weight(model, Side::Even, *d), weight(model, Side::Odd, *d)),
            _ => (Vec::new(), Vec::new()),
        })
        .collect();

    let mut trace = DivergenceTrace::new(opts.label.clone());
    trace.metadata.insert("x_points".into(), model.x().len().to_string());
    trace.metadata.insert("y_points".into(), model.y().len().to_string());
    let lam = model.lambda_u();
    let nu = model.nu_v();
    let mut state = SinkhornState::initial(model);
    loop {
        let s_even = forward_transition(model, &state);
        let v_next = next_v(model, &state)?;
        let s_odd = backward_from(model, &state.u, &v_next);
        let pi_even = apply_kernel(lam, &s_even)?;
        let pi_odd = apply_kernel(nu, &s_odd)?;
        for (m, (we, wo)) in opts.metrics.iter().zip(&weights) {
            let name = m.to_string();
            let (e, o) = match m {
                Metric::Chi => (dobrushin_coefficient(&s_even).chi, dobrushin_coefficient(&s_odd).chi),
                _ => (m.divergence(&pi_even, nu, Some(we))?, m.divergence(lam, &pi_odd, Some(wo))?),
            };
            trace.push(state.n, Side::Even, &name, e)?;
            trace.push(state.n, Side::Odd, &name, o)?;
        }
        let tv = total_variation(&pi_even, nu)?;
        let converged = tv < stop;
        if converged || state.n + 1 >= opts.maxiter {
            trace.metadata.insert("iterations".into(), (state.n + 1).to_string());
            trace.metadata.insert("converged".into(), converged.to_string());
            return Ok(RunOutcome { state, trace, converged, final_tv: tv });
        }
        state = step_with(model, &state, v_next)?;
    }
}
