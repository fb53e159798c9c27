//! Log-domain Sinkhorn iterations between two discrete marginals.
//!
//! With `lambda_U = e^{-U} lambda`, `nu_V = e^{-V} nu` and the reference kernel
//! `Q(x, dy) = e^{-W(x,y)} nu(dy)`, the potentials follow
//!
//! ```text
//! U_{2n} = U + log Q(e^{-V_{2n}}),     V_{2n+2} = V + log R(e^{-U_{2n}}),
//! ```
//!
//! with `R(y, dx) = e^{-W(x,y)} lambda(dx)` and `(U_0, V_0) = (U, 0)`. All integrals
//! are evaluated as shifted log-sum-exps over the base weights, so costs spanning
//! hundreds of orders of magnitude are handled without underflow.

mod entropy;
mod run;

use std::sync::Arc;

use ndarray::Array2;

use crate::error::{domain, Error, Result};
use crate::measure::{apply_kernel, kernel_compose, log_sum_exp, DiscreteSpace, Kernel, Measure, SUPPORT_TOL};

pub use entropy::{entropy_to_bridge, EntropyToBridge, SERIES_TERM_FLOOR};
pub use run::{run, RunOptions, RunOutcome};

/// Marginals, potentials and cost of a discretized transport problem.
///
/// On construction `U` and `V` are shifted so that `e^{-U}`, `e^{-V}` have unit mass,
/// and each row of `W` is shifted so that `Q` is Markov on the grid.
#[derive(Debug, Clone)]
pub struct TransportModel {
    x: Arc<DiscreteSpace>,
    y: Arc<DiscreteSpace>,
    u: Vec<f64>,
    v: Vec<f64>,
    w: Array2<f64>,
    row_shift: Vec<f64>,
    log_wx: Vec<f64>,
    log_wy: Vec<f64>,
    lambda_u: Measure,
    nu_v: Measure,
}

impl TransportModel {
    /// `w` may contain `+inf` (masked pairs); all other entries must be finite.
    pub fn new(
        x: Arc<DiscreteSpace>,
        y: Arc<DiscreteSpace>,
        u: Vec<f64>,
        v: Vec<f64>,
        mut w: Array2<f64>,
    ) -> Result<Self> {
        if u.len() != x.len() || v.len() != y.len() {
            return domain("potential lengths do not match the spaces");
        }
        if w.dim() != (x.len(), y.len()) {
            return domain(format!("cost table is {:?}, spaces are {}x{}", w.dim(), x.len(), y.len()));
        }
        if let Some(i) = u.iter().chain(&v).position(|p| !p.is_finite()) {
            return domain(format!("potential value {i} is not finite"));
        }
        if w.iter().any(|c| c.is_nan() || *c == f64::NEG_INFINITY) {
            return domain("cost table contains NaN or -inf");
        }
        let log_wx: Vec<f64> = x.weights().iter().map(|w| w.ln()).collect();
        let log_wy: Vec<f64> = y.weights().iter().map(|w| w.ln()).collect();

        let mut row_shift = Vec::with_capacity(x.len());
        for (i, mut row) in w.rows_mut().into_iter().enumerate() {
            let terms: Vec<f64> = row.iter().zip(&log_wy).map(|(c, lw)| -c + lw).collect();
            let lz = log_sum_exp(&terms);
            if lz == f64::NEG_INFINITY {
                return Err(Error::DegenerateMass { side: "Q", index: i, coord: x.coord(i) });
            }
            row += lz;
            row_shift.push(lz);
        }
        for (j, col) in w.columns().into_iter().enumerate() {
            if col.iter().all(|c| *c == f64::INFINITY) {
                return Err(Error::DegenerateMass { side: "R", index: j, coord: y.coord(j) });
            }
        }
        let u = normalize_potential(&u, &log_wx);
        let v = normalize_potential(&v, &log_wy);
        let lambda_u = Measure::new(x.clone(), u.iter().map(|p| (-p).exp()).collect())?;
        let nu_v = Measure::new(y.clone(), v.iter().map(|p| (-p).exp()).collect())?;
        Ok(TransportModel { x, y, u, v, w, row_shift, log_wx, log_wy, lambda_u, nu_v })
    }

    pub fn x(&self) -> &Arc<DiscreteSpace> {
        &self.x
    }

    pub fn y(&self) -> &Arc<DiscreteSpace> {
        &self.y
    }

    /// Normalized potential `U`.
    pub fn u(&self) -> &[f64] {
        &self.u
    }

    /// Normalized potential `V`.
    pub fn v(&self) -> &[f64] {
        &self.v
    }

    /// Row-normalized cost table.
    pub fn w(&self) -> &Array2<f64> {
        &self.w
    }

    /// Log normalizers added to each row of the input cost.
    pub fn row_shift(&self) -> &[f64] {
        &self.row_shift
    }

    pub fn lambda_u(&self) -> &Measure {
        &self.lambda_u
    }

    pub fn nu_v(&self) -> &Measure {
        &self.nu_v
    }

    /// Smallest unmasked cost entry.
    pub fn w_star(&self) -> f64 {
        self.w.iter().copied().filter(|c| c.is_finite()).fold(f64::INFINITY, f64::min)
    }

    /// Whether some cost entries are masked.
    pub fn has_mask(&self) -> bool {
        self.w.iter().any(|c| *c == f64::INFINITY)
    }

    /// Reference kernel `Q(x, dy) = e^{-W(x,y)} nu(dy)`.
    pub fn reference_kernel(&self) -> Kernel {
        let density = self.w.mapv(|c| (-c).exp());
        Kernel::from_parts_unchecked(self.x.clone(), self.y.clone(), density)
    }

    /// `log Q(e^{-v})(x_i)` for every `i`.
    pub fn log_q(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.x.len());
        let mut buf = vec![0.0; self.y.len()];
        for (i, row) in self.w.rows().into_iter().enumerate() {
            for ((b, c), (vj, lw)) in buf.iter_mut().zip(row.iter()).zip(v.iter().zip(&self.log_wy)) {
                *b = -c - vj + lw;
            }
            let l = log_sum_exp(&buf);
            if !l.is_finite() {
                return Err(Error::DegenerateMass { side: "Q", index: i, coord: self.x.coord(i) });
            }
            out.push(l);
        }
        Ok(out)
    }

    /// `log R(e^{-u})(y_j)` for every `j`.
    pub fn log_r(&self, u: &[f64]) -> Result<Vec<f64>> {
        let (n, m) = self.w.dim();
        let mut max = vec![f64::NEG_INFINITY; m];
        for i in 0..n {
            let a = -u[i] + self.log_wx[i];
            for (mx, c) in max.iter_mut().zip(self.w.row(i).iter()) {
                *mx = mx.max(a - c);
            }
        }
        let mut sum = vec![0.0; m];
        for i in 0..n {
            let a = -u[i] + self.log_wx[i];
            for ((s, c), mx) in sum.iter_mut().zip(self.w.row(i).iter()).zip(&max) {
                if *mx > f64::NEG_INFINITY {
                    *s += (a - c - mx).exp();
                }
            }
        }
        let mut out = Vec::with_capacity(m);
        for j in 0..m {
            let l = max[j] + sum[j].ln();
            if !l.is_finite() {
                return Err(Error::DegenerateMass { side: "R", index: j, coord: self.y.coord(j) });
            }
            out.push(l);
        }
        Ok(out)
    }
}

fn normalize_potential(p: &[f64], logw: &[f64]) -> Vec<f64> {
    let terms: Vec<f64> = p.iter().zip(logw).map(|(a, lw)| -a + lw).collect();
    let lz = log_sum_exp(&terms);
    p.iter().map(|a| a + lz).collect()
}

/// Potentials `(U_{2n}, V_{2n})` at cycle `n`, plus those of cycle `n - 1` when known.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornState {
    pub n: usize,
    /// `U_{2n}` (equal to `U_{2n+1}`).
    pub u: Vec<f64>,
    /// `V_{2n}` (equal to `V_{2n-1}`).
    pub v: Vec<f64>,
    prev: Option<(Vec<f64>, Vec<f64>)>,
}

impl SinkhornState {
    /// `(U_0, V_0) = (U, 0)`.
    pub fn initial(model: &TransportModel) -> Self {
        SinkhornState { n: 0, u: model.u.clone(), v: vec![0.0; model.y.len()], prev: None }
    }

    /// Potentials `(U_{2n-2}, V_{2n-2})` of the previous cycle.
    pub fn previous(&self) -> Option<(&[f64], &[f64])> {
        self.prev.as_ref().map(|(u, v)| (u.as_slice(), v.as_slice()))
    }

    /// Same state with `c` added to `U_{2n}` and subtracted from `V_{2n}`.
    pub fn regauged(&self, c: f64) -> Self {
        SinkhornState {
            n: self.n,
            u: self.u.iter().map(|a| a + c).collect(),
            v: self.v.iter().map(|b| b - c).collect(),
            prev: self.prev.as_ref().map(|(u, v)| (u.iter().map(|a| a + c).collect(), v.iter().map(|b| b - c).collect())),
        }
    }
}

/// `V_{2n+2} = V + log R(e^{-U_{2n}})`.
pub fn next_v(model: &TransportModel, state: &SinkhornState) -> Result<Vec<f64>> {
    Ok(model.log_r(&state.u)?.iter().zip(&model.v).map(|(l, v)| v + l).collect())
}

/// `U + log Q(e^{-v})`.
fn u_from_v(model: &TransportModel, v: &[f64]) -> Result<Vec<f64>> {
    Ok(model.log_q(v)?.iter().zip(&model.u).map(|(l, u)| u + l).collect())
}

/// One full cycle: `(U_{2n}, V_{2n}) -> (U_{2n+2}, V_{2n+2})`.
pub fn step(model: &TransportModel, state: &SinkhornState) -> Result<SinkhornState> {
    let v = next_v(model, state)?;
    step_with(model, state, v)
}

pub(crate) fn step_with(model: &TransportModel, state: &SinkhornState, v: Vec<f64>) -> Result<SinkhornState> {
    let u = u_from_v(model, &v)?;
    Ok(SinkhornState { n: state.n + 1, u, v, prev: Some((state.u.clone(), state.v.clone())) })
}

fn forward_from(model: &TransportModel, u: &[f64], v: &[f64]) -> Kernel {
    let density = Array2::from_shape_fn(model.w.dim(), |(i, j)| {
        (-model.w[[i, j]] - v[j] - (u[i] - model.u[i])).exp()
    });
    Kernel::from_parts_unchecked(model.x.clone(), model.y.clone(), density)
}

fn backward_from(model: &TransportModel, u: &[f64], v_next: &[f64]) -> Kernel {
    let (n, m) = model.w.dim();
    let density = Array2::from_shape_fn((m, n), |(j, i)| {
        (-model.w[[i, j]] - u[i] - (v_next[j] - model.v[j])).exp()
    });
    Kernel::from_parts_unchecked(model.y.clone(), model.x.clone(), density)
}

/// `S_{2n}(x, dy) = Q(x, dy) e^{-V_{2n}(y)} / Q(e^{-V_{2n}})(x)`, a kernel from X to Y.
pub fn forward_transition(model: &TransportModel, state: &SinkhornState) -> Kernel {
    forward_from(model, &state.u, &state.v)
}

/// `S_{2n+1}(y, dx) = R(y, dx) e^{-U_{2n}(x)} / R(e^{-U_{2n}})(y)`, a kernel from Y to X.
pub fn backward_transition(model: &TransportModel, state: &SinkhornState) -> Result<Kernel> {
    let v_next = next_v(model, state)?;
    Ok(backward_from(model, &state.u, &v_next))
}

/// `pi_{2n} = lambda_U S_{2n}`.
pub fn marginal_even(model: &TransportModel, state: &SinkhornState) -> Result<Measure> {
    apply_kernel(&model.lambda_u, &forward_transition(model, state))
}

/// `pi_{2n+1} = nu_V S_{2n+1}`.
pub fn marginal_odd(model: &TransportModel, state: &SinkhornState) -> Result<Measure> {
    apply_kernel(&model.nu_v, &backward_transition(model, state)?)
}

/// The two Gibbs-loop kernels built from consecutive transitions.
#[derive(Debug, Clone)]
pub struct GibbsLoop {
    /// `S°_{2n+1} = S_{2n} S_{2n+1}`, from X to X; leaves `lambda_U` invariant.
    pub odd: Kernel,
    /// `S°_{2n+2} = S_{2n+1} S_{2n+2}`, from Y to Y; leaves `nu_V` invariant.
    pub even: Kernel,
}

pub fn gibbs_loop(model: &TransportModel, state: &SinkhornState) -> Result<GibbsLoop> {
    let s_even = forward_transition(model, state);
    let v_next = next_v(model, state)?;
    let s_odd = backward_from(model, &state.u, &v_next);
    let u_next = u_from_v(model, &v_next)?;
    let s_even_next = forward_from(model, &u_next, &v_next);
    Ok(GibbsLoop { odd: kernel_compose(&s_even, &s_odd)?, even: kernel_compose(&s_odd, &s_even_next)? })
}

/// `S°_{2n} = S_{2n-1} S_{2n}` for `n >= 1`, from Y to Y.
pub fn gibbs_loop_current(model: &TransportModel, state: &SinkhornState) -> Result<Kernel> {
    let (pu, _) = state
        .previous()
        .ok_or_else(|| Error::Precondition("S°_{2n} needs the previous cycle (n >= 1)".into()))?;
    let s_prev_odd = backward_from(model, pu, &state.v);
    kernel_compose(&s_prev_odd, &forward_transition(model, state))
}

/// Parity of a bridge index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// Joint masses of the bridge `P_{2n}` (even) or `P_{2n+1}` (odd) on X x Y:
/// `e^{-W(x_i,y_j)} e^{-U(x_i)} e^{-V(y_j)} w_i w_j` with the potentials of that index.
pub fn bridge(model: &TransportModel, state: &SinkhornState, parity: Parity) -> Result<Array2<f64>> {
    let v_owned;
    let v = match parity {
        Parity::Even => &state.v,
        Parity::Odd => {
            v_owned = next_v(model, state)?;
            &v_owned
        }
    };
    Ok(Array2::from_shape_fn(model.w.dim(), |(i, j)| {
        (-model.w[[i, j]] - state.u[i] - v[j] + model.log_wx[i] + model.log_wy[j]).exp()
    }))
}

/// `(lambda_U(U_{2n}), nu_V(V_{2n}))`; both are nonincreasing in `n`.
pub fn potential_means(model: &TransportModel, state: &SinkhornState) -> (f64, f64) {
    (model.lambda_u.integrate(&state.u), model.nu_v.integrate(&state.v))
}

/// Sup-norm residuals of the four commutation identities at cycle `n >= 1`:
///
/// 1. `S_{2n}(dnu_V/dpi_{2n}) = dpi_{2n+1}/dlambda_U`
/// 2. `S_{2n+2}(dpi_{2n}/dnu_V) = dlambda_U/dpi_{2n+1}`
/// 3. `S_{2n-1}(dlambda_U/dpi_{2n-1}) = dpi_{2n}/dnu_V`
/// 4. `S_{2n+1}(dpi_{2n-1}/dlambda_U) = dnu_V/dpi_{2n}`
#[derive(Debug, Clone, PartialEq)]
pub struct CommutationReport {
    pub n: usize,
    pub residuals: [f64; 4],
}

impl CommutationReport {
    pub fn max(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

fn ratio(a: &Measure, b: &Measure) -> Vec<f64> {
    a.density()
        .iter()
        .zip(b.density().iter())
        .map(|(x, y)| if *y < SUPPORT_TOL { f64::NAN } else { x / y })
        .collect()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn apply_guarded(k: &Kernel, f: &[f64]) -> Result<Vec<f64>> {
    let cleaned: Vec<f64> = f.iter().map(|v| if v.is_finite() { *v } else { 0.0 }).collect();
    k.apply_function(&cleaned)
}

pub fn check_commutation(model: &TransportModel, state: &SinkhornState) -> Result<CommutationReport> {
    let (pu, _) = state
        .previous()
        .ok_or_else(|| Error::Precondition("commutation check needs n >= 1".into()))?;
    let lam = &model.lambda_u;
    let nu = &model.nu_v;
    let s_prev_odd = backward_from(model, pu, &state.v);
    let s_even = forward_transition(model, state);
    let v_next = next_v(model, state)?;
    let s_odd = backward_from(model, &state.u, &v_next);
    let u_next = u_from_v(model, &v_next)?;
    let s_even_next = forward_from(model, &u_next, &v_next);

    let pi_prev_odd = apply_kernel(nu, &s_prev_odd)?;
    let pi_even = apply_kernel(lam, &s_even)?;
    let pi_odd = apply_kernel(nu, &s_odd)?;

    let r1 = sup_diff(&apply_guarded(&s_even, &ratio(nu, &pi_even))?, &ratio(&pi_odd, lam));
    let r2 = sup_diff(&apply_guarded(&s_even_next, &ratio(&pi_even, nu))?, &ratio(lam, &pi_odd));
    let r3 = sup_diff(&apply_guarded(&s_prev_odd, &ratio(lam, &pi_prev_odd))?, &ratio(&pi_even, nu));
    let r4 = sup_diff(&apply_guarded(&s_odd, &ratio(&pi_prev_odd, lam))?, &ratio(nu, &pi_even));
    Ok(CommutationReport { n: state.n, residuals: [r1, r2, r3, r4] })
}
