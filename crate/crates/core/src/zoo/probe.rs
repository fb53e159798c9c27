use serde::Serialize;

use super::models::Domain;
use super::{integrated_costs, masked_average, mixture_check, MixtureComponent, ZooModel};
use crate::error::{domain, Error, Result};
use crate::measure::log_sum_exp;

/// Intervals in the base probe window.
const BASE_STEPS: usize = 200;
/// Nested windows, each twice as wide as the previous one.
const LEVELS: usize = 6;
/// Largest `|t|` for the logit map of the unit interval (`1 - x` keeps a few digits).
const LOGIT_CAP: f64 = 30.0;
/// Largest `|log x|` on the open half-line.
const LOG_CAP: f64 = 100.0;
const X_CAP: f64 = 1e6;
/// Relative change tolerated between nested windows and under a 2x refinement.
pub const STABLE_CHANGE: f64 = 0.01;
/// The end of the window may carry at most this fraction of the integral.
const TAIL_FRACTION: f64 = 1e-3;
/// Fraction of points per end inspected by the growth flag.
const OUTER_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Satisfied,
    Violated,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Satisfied => "satisfied",
            Verdict::Violated => "violated",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralStatus {
    Finite,
    Divergent,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    Growing,
    NotGrowing,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Condition {
    #[serde(rename = "H_delta")]
    H,
    #[serde(rename = "H_prime")]
    HPrime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegralReport {
    /// Log of the quadrature value on the widest window.
    pub log_value: f64,
    /// Relative change between the two widest windows.
    pub window_change: f64,
    /// Relative change under a 2x refinement of the widest window.
    pub refinement_change: f64,
    /// Whether the integrand at the open ends carries a negligible share.
    pub tail_decaying: bool,
    pub status: IntegralStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EndGrowth {
    /// `"lower"` or `"upper"`.
    pub end: &'static str,
    /// Flag on the grid window and on the doubled window.
    pub base: bool,
    pub doubled: bool,
    pub growth: Growth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub ends: Vec<EndGrowth>,
    pub growth: Growth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub delta: f64,
    /// `lambda_{(1-delta)U}(e^{W^V})` for H, `lambda_{(1-2 delta)U}(1)` for H'.
    pub integral_u: IntegralReport,
    /// `nu_{(1-delta)V}(e^{W_U})` for H, `nu_{(1-2 delta)V}(1)` for H'.
    pub integral_v: IntegralReport,
    /// Boundary growth of `delta U - W^V` and `delta V - W_U`.
    pub growth_u: GrowthReport,
    pub growth_v: GrowthReport,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

/// Samples of one axis on a window of the probe variable `t`.
#[derive(Debug, Clone)]
struct Window {
    h: f64,
    log_jac: Vec<f64>,
    potential: Vec<f64>,
    cost: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Axis {
    open: (bool, bool),
    /// Nested windows, then the widest one refined 2x.
    levels: Vec<Window>,
    refined: Window,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Point and log-Jacobian `log dx/dt` of the probe variable.
fn to_x(d: Domain, t: f64) -> (f64, f64) {
    match d {
        Domain::Interval => (1.0 / (1.0 + (-t).exp()), -softplus(t) - softplus(-t)),
        Domain::OpenHalfLine => (t.exp(), t),
        Domain::HalfLine | Domain::Line => (t, 0.0),
    }
}

fn to_t(d: Domain, x: f64) -> f64 {
    match d {
        Domain::Interval => (x / (1.0 - x)).ln(),
        Domain::OpenHalfLine => x.ln(),
        Domain::HalfLine | Domain::Line => x,
    }
}

fn clip(d: Domain, (a, b): (f64, f64)) -> (f64, f64) {
    let cap = match d {
        Domain::Interval => LOGIT_CAP,
        Domain::OpenHalfLine => LOG_CAP,
        Domain::HalfLine | Domain::Line => X_CAP,
    };
    (a.max(-cap), b.min(cap))
}

impl Axis {
    /// `pot` is the axis potential and `cost(x)` the integrated cost at `x`.
    fn new(d: Domain, grid: &[f64], pot: impl Fn(f64) -> f64, cost: impl Fn(f64) -> f64) -> Result<Self> {
        let (t0, t1) = (to_t(d, grid[0]), to_t(d, grid[grid.len() - 1]));
        let h = (t1 - t0) / BASE_STEPS as f64;
        let sample = |(a, b): (f64, f64), h: f64| -> Result<Window> {
            let steps = ((b - a) / h).round().max(1.0) as usize;
            let h = (b - a) / steps as f64;
            let mut w = Window { h, log_jac: Vec::new(), potential: Vec::new(), cost: Vec::new() };
            for i in 0..=steps {
                let (x, lj) = to_x(d, a + i as f64 * h);
                let (p, c) = (pot(x), cost(x));
                if p.is_nan() || c.is_nan() || c == f64::INFINITY {
                    return Err(Error::Numerical(format!("potential or integrated cost undefined at x = {x}")));
                }
                w.log_jac.push(lj);
                w.potential.push(p);
                w.cost.push(c);
            }
            Ok(w)
        };
        let mut levels = Vec::with_capacity(LEVELS);
        let mut last = None;
        for k in 0..LEVELS {
            let scale = (1u64 << k) as f64;
            let win = match d {
                Domain::HalfLine => (0.0, t1 * scale),
                _ => {
                    let (c, r) = (0.5 * (t0 + t1), 0.5 * (t1 - t0));
                    (c - scale * r, c + scale * r)
                }
            };
            let win = clip(d, win);
            if last == Some(win) {
                let prev: &Window = levels.last().expect("first level is always sampled");
                levels.push(prev.clone());
            } else {
                levels.push(sample(win, h)?);
            }
            last = Some(win);
        }
        let refined = sample(last.expect("LEVELS > 0"), 0.5 * h)?;
        Ok(Axis { open: d.open_ends(), levels, refined })
    }
}

/// Trapezoid rule in the log domain.
fn log_integral(w: &Window, g: &[f64]) -> f64 {
    let n = g.len();
    let terms: Vec<f64> = g
        .iter()
        .enumerate()
        .map(|(i, v)| if i == 0 || i + 1 == n { v + (0.5 * w.h).ln() } else { v + w.h.ln() })
        .collect();
    log_sum_exp(&terms)
}

fn outer_count(n: usize) -> usize {
    ((OUTER_FRACTION * n as f64).ceil() as usize).clamp(3, n)
}

/// Values over the outer part of one end, ordered outward.
fn outward(values: &[f64], upper: bool) -> Vec<f64> {
    let m = outer_count(values.len());
    if upper {
        values[values.len() - m..].to_vec()
    } else {
        values[..m].iter().rev().copied().collect()
    }
}

fn nondecreasing(seq: &[f64]) -> bool {
    seq.windows(2).all(|p| p[1] >= p[0] - 1e-12 * (1.0 + p[0].abs()))
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn rel_change(from: f64, to: f64) -> f64 {
    if from == to {
        0.0
    } else {
        ((to - from).exp() - 1.0).abs()
    }
}

fn classify(axis: &Axis, integrand: impl Fn(&Window) -> Vec<f64>) -> IntegralReport {
    let logs: Vec<f64> = axis.levels.iter().map(|w| log_integral(w, &integrand(w))).collect();
    let last_w = axis.levels.last().expect("LEVELS > 0");
    let g = integrand(last_w);
    let k = logs.len() - 1;
    let l = logs[k];
    let window_change = rel_change(logs[k - 1], l);
    let refinement_change = rel_change(l, log_integral(&axis.refined, &integrand(&axis.refined)));
    let extent = (last_w.h * (g.len() - 1) as f64).ln();
    let mut tail_decaying = true;
    let mut rising = false;
    for (open, upper) in [(axis.open.0, false), (axis.open.1, true)] {
        if !open {
            continue;
        }
        let seq = outward(&g, upper);
        let heavy = seq[seq.len() - 1] + extent > l + TAIL_FRACTION.ln();
        tail_decaying &= !heavy;
        rising |= heavy && nondecreasing(&seq);
    }
    let (d1, d0) = (logs[k] - logs[k - 1], logs[k - 1] - logs[k - 2]);
    let increments_grow = d1 > STABLE_CHANGE.ln_1p() && d1 >= 0.9 * d0;
    let status = if l == f64::INFINITY || rising || increments_grow {
        IntegralStatus::Divergent
    } else if window_change <= STABLE_CHANGE && refinement_change <= STABLE_CHANGE && tail_decaying && l.is_finite() {
        IntegralStatus::Finite
    } else {
        IntegralStatus::Inconclusive
    };
    IntegralReport { log_value: l, window_change, refinement_change, tail_decaying, status }
}

fn end_flag(profile: &[f64], upper: bool) -> bool {
    let seq = outward(profile, upper);
    let end = seq[seq.len() - 1];
    let med = median(profile);
    nondecreasing(&seq) && end > med + 1e-9 * (1.0 + med.abs())
}

fn growth(axis: &Axis, delta: f64) -> GrowthReport {
    let profile = |w: &Window| -> Vec<f64> { w.potential.iter().zip(&w.cost).map(|(p, c)| delta * p - c).collect() };
    let (p0, p1) = (profile(&axis.levels[0]), profile(&axis.levels[1]));
    let mut ends = Vec::new();
    for (open, upper, name) in [(axis.open.0, false, "lower"), (axis.open.1, true, "upper")] {
        if !open {
            continue;
        }
        let (base, doubled) = (end_flag(&p0, upper), end_flag(&p1, upper));
        let growth = match (base, doubled) {
            (true, true) => Growth::Growing,
            (false, false) => Growth::NotGrowing,
            _ => Growth::Inconclusive,
        };
        ends.push(EndGrowth { end: name, base, doubled, growth });
    }
    let growth = if ends.iter().any(|e| e.growth == Growth::NotGrowing) {
        Growth::NotGrowing
    } else if ends.iter().all(|e| e.growth == Growth::Growing) {
        Growth::Growing
    } else {
        Growth::Inconclusive
    };
    GrowthReport { ends, growth }
}

/// Probe samples of a zoo model, reusable across `delta` values.
#[derive(Debug, Clone)]
pub struct ConditionProbe {
    u: Axis,
    v: Axis,
    out_of_theory: Vec<String>,
}

impl ConditionProbe {
    pub fn new(zoo: &ZooModel) -> Result<Self> {
        let tm = &zoo.model;
        let xs = tm.x().coords_1d();
        let ys = tm.y().coords_1d();
        let norm = |m: Vec<f64>| {
            let s: f64 = m.iter().sum();
            m.into_iter().map(|v| v / s).collect::<Vec<f64>>()
        };
        let lam = norm(tm.lambda_u().masses());
        let nu = norm(tm.nu_v().masses());
        let spec = &zoo.spec;
        let u = Axis::new(spec.x_domain(), &xs, |x| spec.u(x), |x| masked_average(&nu, |j| spec.w(x, ys[j])).0)?;
        let v = Axis::new(spec.y_domain(), &ys, |y| spec.v(y), |y| masked_average(&lam, |i| spec.w(xs[i], y)).0)?;
        let out_of_theory = zoo.notes.iter().filter(|n| n.contains("outside the theory")).cloned().collect();
        Ok(ConditionProbe { u, v, out_of_theory })
    }

    pub fn check(&self, condition: Condition, delta: f64) -> Result<ConditionReport> {
        if delta.is_nan() {
            return domain("delta is NaN");
        }
        let mut notes = self.out_of_theory.clone();
        let upper = match condition {
            Condition::H => 1.0,
            Condition::HPrime => 0.5,
        };
        if !(delta > 0.0 && delta < upper) {
            notes.push(format!("delta = {delta} lies outside (0, {upper})"));
        }
        let (c, e) = match condition {
            Condition::H => (1.0 - delta, 1.0),
            Condition::HPrime => (1.0 - 2.0 * delta, 0.0),
        };
        let integrand = |w: &Window| -> Vec<f64> {
            w.potential.iter().zip(&w.cost).zip(&w.log_jac).map(|((p, k), j)| -c * p + e * k + j).collect()
        };
        let integral_u = classify(&self.u, integrand);
        let integral_v = classify(&self.v, integrand);
        let growth_u = growth(&self.u, delta);
        let growth_v = growth(&self.v, delta);
        let statuses = [integral_u.status, integral_v.status];
        let flags = [growth_u.growth, growth_v.growth];
        let verdict = if !notes.is_empty()
            || statuses.contains(&IntegralStatus::Divergent)
            || flags.contains(&Growth::NotGrowing)
        {
            Verdict::Violated
        } else if statuses.iter().all(|s| *s == IntegralStatus::Finite) && flags.iter().all(|g| *g == Growth::Growing) {
            Verdict::Satisfied
        } else {
            Verdict::Inconclusive
        };
        Ok(ConditionReport { condition, delta, integral_u, integral_v, growth_u, growth_v, verdict, notes })
    }
}

/// Numeric check of condition H_delta.
pub fn check_h_delta(zoo: &ZooModel, delta: f64) -> Result<ConditionReport> {
    ConditionProbe::new(zoo)?.check(Condition::H, delta)
}

/// Numeric check of condition H'_delta; `delta` outside `(0, 1/2)` is reported violated.
pub fn check_h_prime(zoo: &ZooModel, delta: f64) -> Result<ConditionReport> {
    ConditionProbe::new(zoo)?.check(Condition::HPrime, delta)
}

/// `delta U - W^V` and `delta V - W_U` on the model grids, with the boundary flags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovProfile {
    pub delta: f64,
    pub x: Vec<f64>,
    pub u_profile: Vec<f64>,
    pub y: Vec<f64>,
    pub v_profile: Vec<f64>,
    pub growth_u: GrowthReport,
    pub growth_v: GrowthReport,
}

pub fn lyapunov_profile(zoo: &ZooModel, delta: f64) -> Result<LyapunovProfile> {
    if !(0.0..1.0).contains(&delta) {
        return domain(format!("delta must lie in [0, 1), got {delta}"));
    }
    let costs = integrated_costs(zoo)?;
    let x = zoo.model.x().coords_1d();
    let y = zoo.model.y().coords_1d();
    let u_profile = x.iter().zip(&costs.w_v).map(|(&p, c)| delta * zoo.spec.u(p) - c).collect();
    let v_profile = y.iter().zip(&costs.w_u).map(|(&p, c)| delta * zoo.spec.v(p) - c).collect();
    let probe = ConditionProbe::new(zoo)?;
    Ok(LyapunovProfile {
        delta,
        x,
        u_profile,
        y,
        v_profile,
        growth_u: growth(&probe.u, delta),
        growth_v: growth(&probe.v, delta),
    })
}

/// `k / 22` for `k = 1..=21`.
pub fn default_deltas() -> Vec<f64> {
    (1..=21).map(|k| k as f64 / 22.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosePoint {
    pub delta: f64,
    pub h: ConditionReport,
    pub h_prime: ConditionReport,
    /// Closed-form verdict of H_delta for Gaussian and Gaussian-mixture models.
    pub analytic: Option<Verdict>,
}

/// Runs both numeric checks (and the closed-form check where one exists) over `deltas`.
pub fn diagnose(zoo: &ZooModel, deltas: &[f64]) -> Result<Vec<DiagnosePoint>> {
    if deltas.is_empty() {
        return domain("delta sweep is empty");
    }
    let probe = ConditionProbe::new(zoo)?;
    let (components, weights): (Vec<MixtureComponent>, Vec<f64>) = zoo
        .gaussian_components
        .iter()
        .map(|(m, w)| (MixtureComponent::Gaussian(m.clone()), *w))
        .unzip();
    deltas
        .iter()
        .map(|&delta| {
            let h = probe.check(Condition::H, delta)?;
            let h_prime = probe.check(Condition::HPrime, delta)?;
            let analytic = if components.is_empty() || !(delta > 0.0 && delta < 1.0) {
                None
            } else {
                Some(mixture_check(&components, &weights, delta)?.verdict)
            };
            Ok(DiagnosePoint { delta, h, h_prime, analytic })
        })
        .collect()
}
