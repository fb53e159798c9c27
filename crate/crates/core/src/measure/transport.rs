use std::collections::HashMap;

use super::{Measure, SUPPORT_TOL};
use crate::error::{domain, Result};

/// Largest side handled by exhaustive search.
pub const EXHAUSTIVE_LIMIT: usize = 8;
/// Largest side accepted by [`transport_oracle`].
pub const ORACLE_LIMIT: usize = 30;

/// `W_p` between two probability measures on 1-D spaces via the quantile coupling.
///
/// Points need not be sorted. The two measures may live on different grids.
pub fn wasserstein_1d(mu1: &Measure, mu2: &Measure, p: f64) -> Result<f64> {
    if !(p.is_finite() && p >= 1.0) {
        return domain(format!("Wasserstein order must be >= 1, got {p}"));
    }
    if mu1.space().dim() != 1 || mu2.space().dim() != 1 {
        return domain("wasserstein_1d needs one-dimensional spaces");
    }
    let atoms = |mu: &Measure| -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = mu
            .masses()
            .into_iter()
            .enumerate()
            .filter(|(_, m)| *m > SUPPORT_TOL)
            .map(|(i, m)| (mu.space().coord(i), m))
            .collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    };
    let a = atoms(mu1);
    let b = atoms(mu2);
    let (ma, mb) = (mass(&a), mass(&b));
    if (ma - mb).abs() > 1e-9 * ma.max(mb) {
        return domain(format!("measures have different masses {ma} and {mb}"));
    }
    let tol = 1e-15 * ma;
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut acc = 0.0;
    while i < a.len() && j < b.len() {
        let t = ra.min(rb);
        acc += t * (a[i].0 - b[j].0).abs().powf(p);
        ra -= t;
        rb -= t;
        if ra <= tol {
            i += 1;
            ra = a.get(i).map_or(0.0, |x| x.1);
        }
        if rb <= tol {
            j += 1;
            rb = b.get(j).map_or(0.0, |x| x.1);
        }
    }
    Ok(acc.powf(1.0 / p))
}

fn mass(atoms: &[(f64, f64)]) -> f64 {
    atoms.iter().map(|a| a.1).sum()
}

fn check_problem(a: &[f64], b: &[f64], cost: &[Vec<f64>], limit: usize) -> Result<Vec<f64>> {
    if a.is_empty() || b.is_empty() {
        return domain("empty marginal");
    }
    if a.len() > limit || b.len() > limit {
        return domain(format!("transport oracle limited to {limit} points per side, got {}x{}", a.len(), b.len()));
    }
    if cost.len() != a.len() || cost.iter().any(|r| r.len() != b.len()) {
        return domain("cost table shape does not match marginals");
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return domain("cost table must be finite");
    }
    if a.iter().chain(b).any(|m| !(m.is_finite() && *m >= 0.0)) {
        return domain("marginal masses must be finite and nonnegative");
    }
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if !(sa > 0.0) || (sa - sb).abs() > 1e-9 * sa.max(sb) {
        return domain(format!("marginals have different masses {sa} and {sb}"));
    }
    Ok(b.iter().map(|v| v * sa / sb).collect())
}

/// Exact optimal transport cost between point masses `mu1`, `mu2` for a cost table.
///
/// Up to [`EXHAUSTIVE_LIMIT`] points per side the optimum is found by exhaustive
/// search over basic feasible plans; larger problems (up to [`ORACLE_LIMIT`]) use
/// a min-cost-flow solve.
pub fn transport_oracle(mu1: &Measure, mu2: &Measure, cost: &[Vec<f64>]) -> Result<f64> {
    let (a, b) = (mu1.masses(), mu2.masses());
    if a.len() <= EXHAUSTIVE_LIMIT && b.len() <= EXHAUSTIVE_LIMIT {
        transport_exhaustive(&a, &b, cost)
    } else {
        transport_network_flow(&a, &b, cost)
    }
}

/// Exhaustive search over the vertices of the transport polytope.
///
/// Every vertex is a forest plan and can be peeled leaf by leaf: each leaf edge
/// `(i, j)` carries `min(r_i, s_j)` of the current residuals and exhausts its leaf.
/// The search branches over all such moves, pruned by a dual lower bound and a
/// residual-state memo; pruning never discards a plan cheaper than the incumbent.
pub fn transport_exhaustive(a: &[f64], b: &[f64], cost: &[Vec<f64>]) -> Result<f64> {
    exhaustive_search(a, b, cost, true)
}

fn exhaustive_search(a: &[f64], b: &[f64], cost: &[Vec<f64>], use_flow: bool) -> Result<f64> {
    let b = check_problem(a, b, cost, EXHAUSTIVE_LIMIT)?;
    let total: f64 = a.iter().sum();
    let eps = 1e-13 * total;
    let greedy = greedy_plan_cost(a, &b, cost, eps);
    // A min-cost-flow plan only supplies the initial bound and the dual weights;
    // the returned cost is always that of a plan found by the search itself.
    let plan = if use_flow { flow_plan(a, &b, cost).ok() } else { None };
    let (phi, psi) = dual_weights(cost, plan.as_deref(), eps);
    let mut bounds = Vec::new();
    if let Some(p) = &plan {
        let f: f64 = p.iter().zip(cost).map(|(r, c)| r.iter().zip(c).map(|(x, y)| x * y).sum::<f64>()).sum();
        bounds.push(f + 1e-9 * (1.0 + f.abs()));
    }
    bounds.push(greedy + 1e-9 * (1.0 + greedy.abs()));
    let rows: u32 = (0..a.len()).filter(|&i| a[i] > eps).fold(0, |m, i| m | 1 << i);
    let cols: u32 = (0..b.len()).filter(|&j| b[j] > eps).fold(0, |m, j| m | 1 << j);
    for bound in bounds {
        let mut search =
            Exhaustive { cost, phi: &phi, psi: &psi, eps, total, best: bound, found: false, memo: HashMap::new() };
        search.dfs(&mut a.to_vec(), &mut b.clone(), rows, cols, 0.0);
        if search.found {
            return Ok(search.best);
        }
    }
    Err(crate::Error::Numerical("exhaustive transport search found no plan".into()))
}

fn greedy_plan_cost(a: &[f64], b: &[f64], cost: &[Vec<f64>], eps: f64) -> f64 {
    let mut cells: Vec<(usize, usize)> = (0..a.len()).flat_map(|i| (0..b.len()).map(move |j| (i, j))).collect();
    cells.sort_by(|x, y| cost[x.0][x.1].total_cmp(&cost[y.0][y.1]));
    let (mut r, mut s) = (a.to_vec(), b.to_vec());
    let mut acc = 0.0;
    for (i, j) in cells {
        let t = r[i].min(s[j]);
        if t > eps {
            acc += t * cost[i][j];
            r[i] -= t;
            s[j] -= t;
        }
    }
    acc
}

/// Dual-feasible weights with `phi_i + psi_j <= c_ij`, tight on the edges of `plan`
/// when the plan is optimal. Feasibility is enforced by a final c-transform, so the
/// weak-duality bound they give is valid whatever plan is passed in.
fn dual_weights(cost: &[Vec<f64>], plan: Option<&[Vec<f64>]>, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let (n, m) = (cost.len(), cost[0].len());
    let mut d = vec![0.0; n + m];
    if let Some(plan) = plan {
        // shortest distances in the residual graph from a virtual root joined to every node
        for _ in 0..(n + m) {
            let mut changed = false;
            for i in 0..n {
                for j in 0..m {
                    if d[i] + cost[i][j] < d[n + j] - 1e-15 {
                        d[n + j] = d[i] + cost[i][j];
                        changed = true;
                    }
                    if plan[i][j] > eps && d[n + j] - cost[i][j] < d[i] - 1e-15 {
                        d[i] = d[n + j] - cost[i][j];
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
    }
    let phi: Vec<f64> = d[..n].iter().map(|x| -x).collect();
    let psi = (0..m).map(|j| (0..n).map(|i| cost[i][j] - phi[i]).fold(f64::INFINITY, f64::min)).collect();
    (phi, psi)
}

struct Exhaustive<'a> {
    cost: &'a [Vec<f64>],
    phi: &'a [f64],
    psi: &'a [f64],
    eps: f64,
    total: f64,
    best: f64,
    found: bool,
    memo: HashMap<(u32, u32, Vec<i64>), f64>,
}

impl Exhaustive<'_> {
    fn lower_bound(&self, r: &[f64], s: &[f64], rows: u32, cols: u32) -> f64 {
        let active = |mask: u32, len: usize| (0..len).filter(move |k| mask & (1 << k) != 0);
        let by_rows: f64 = active(rows, r.len())
            .map(|i| r[i] * active(cols, s.len()).map(|j| self.cost[i][j]).fold(f64::INFINITY, f64::min))
            .sum();
        let by_cols: f64 = active(cols, s.len())
            .map(|j| s[j] * active(rows, r.len()).map(|i| self.cost[i][j]).fold(f64::INFINITY, f64::min))
            .sum();
        let dual: f64 = active(rows, r.len()).map(|i| r[i] * self.phi[i]).sum::<f64>()
            + active(cols, s.len()).map(|j| s[j] * self.psi[j]).sum::<f64>();
        by_rows.max(by_cols).max(dual)
    }

    fn key(&self, r: &[f64], s: &[f64], rows: u32, cols: u32) -> (u32, u32, Vec<i64>) {
        let q = |v: f64| (v / self.total * 2f64.powi(40)).round() as i64;
        let mut res = Vec::with_capacity(r.len() + s.len());
        res.extend(r.iter().enumerate().filter(|(i, _)| rows & (1 << i) != 0).map(|(_, v)| q(*v)));
        res.extend(s.iter().enumerate().filter(|(j, _)| cols & (1 << j) != 0).map(|(_, v)| q(*v)));
        (rows, cols, res)
    }

    fn dfs(&mut self, r: &mut [f64], s: &mut [f64], rows: u32, cols: u32, acc: f64) {
        if rows == 0 || cols == 0 {
            if acc < self.best {
                self.best = acc;
                self.found = true;
            }
            return;
        }
        let slack = 1e-12 * (1.0 + self.best.abs());
        if acc + self.lower_bound(r, s, rows, cols) >= self.best - slack {
            return;
        }
        let key = self.key(r, s, rows, cols);
        match self.memo.get(&key) {
            Some(&seen) if seen <= acc + slack => return,
            _ => {
                self.memo.insert(key, acc);
            }
        }
        let mut moves: Vec<(usize, usize)> = Vec::new();
        for i in (0..r.len()).filter(|i| rows & (1 << i) != 0) {
            for j in (0..s.len()).filter(|j| cols & (1 << j) != 0) {
                moves.push((i, j));
            }
        }
        moves.sort_by(|x, y| self.cost[x.0][x.1].total_cmp(&self.cost[y.0][y.1]));
        for (i, j) in moves {
            let t = r[i].min(s[j]);
            let (ri, sj) = (r[i], s[j]);
            r[i] -= t;
            s[j] -= t;
            let mut nrows = rows;
            let mut ncols = cols;
            if r[i] <= self.eps {
                nrows &= !(1 << i);
            }
            if s[j] <= self.eps {
                ncols &= !(1 << j);
            }
            self.dfs(r, s, nrows, ncols, acc + t * self.cost[i][j]);
            r[i] = ri;
            s[j] = sj;
        }
    }
}

/// Min-cost flow by successive shortest paths (Bellman-Ford on the residual graph).
pub fn transport_network_flow(a: &[f64], b: &[f64], cost: &[Vec<f64>]) -> Result<f64> {
    let plan = flow_plan(a, b, cost)?;
    Ok(plan.iter().zip(cost).map(|(p, c)| p.iter().zip(c).map(|(x, y)| x * y).sum::<f64>()).sum())
}

fn flow_plan(a: &[f64], b: &[f64], cost: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let b = check_problem(a, b, cost, ORACLE_LIMIT)?;
    let (n, m) = (a.len(), b.len());
    let total: f64 = a.iter().sum();
    let eps = 1e-14 * total;
    let source = 0;
    let sink = n + m + 1;
    let mut g = FlowGraph::new(n + m + 2);
    for (i, ai) in a.iter().enumerate() {
        g.add_edge(source, 1 + i, *ai, 0.0);
    }
    let mut middle = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            middle.push(g.add_edge(1 + i, 1 + n + j, f64::INFINITY, cost[i][j]));
        }
    }
    for (j, bj) in b.iter().enumerate() {
        g.add_edge(1 + n + j, sink, *bj, 0.0);
    }
    let mut sent = 0.0;
    let max_rounds = 10 * (n + m + 2) * (n + m + 2);
    for _ in 0..max_rounds {
        if total - sent <= eps {
            break;
        }
        let Some(path) = g.shortest_path(source, sink, eps) else {
            break;
        };
        let push = path.iter().map(|&e| g.cap[e]).fold(f64::INFINITY, f64::min);
        for &e in &path {
            g.cap[e] -= push;
            g.cap[e ^ 1] += push;
        }
        sent += push;
    }
    if total - sent > 1e-9 * total {
        return Err(crate::Error::Numerical(format!(
            "flow solver stalled with {} of {} mass unrouted",
            total - sent,
            total
        )));
    }
    // flow on a forward edge equals the capacity of its reverse edge
    Ok(middle.chunks(m).map(|row| row.iter().map(|&e| g.cap[e ^ 1]).collect()).collect())
}

struct FlowGraph {
    head: Vec<usize>,
    to: Vec<usize>,
    cap: Vec<f64>,
    cost: Vec<f64>,
    adj: Vec<Vec<usize>>,
}

impl FlowGraph {
    fn new(nodes: usize) -> Self {
        FlowGraph { head: Vec::new(), to: Vec::new(), cap: Vec::new(), cost: Vec::new(), adj: vec![Vec::new(); nodes] }
    }

    fn add_edge(&mut self, u: usize, v: usize, cap: f64, cost: f64) -> usize {
        let e = self.to.len();
        self.head.extend([u, v]);
        self.to.extend([v, u]);
        self.cap.extend([cap, 0.0]);
        self.cost.extend([cost, -cost]);
        self.adj[u].push(e);
        self.adj[v].push(e + 1);
        e
    }

    fn shortest_path(&self, s: usize, t: usize, eps: f64) -> Option<Vec<usize>> {
        let n = self.adj.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut via: Vec<Option<usize>> = vec![None; n];
        dist[s] = 0.0;
        for _ in 0..n {
            let mut changed = false;
            for e in 0..self.to.len() {
                let u = self.head[e];
                if self.cap[e] > eps && dist[u] < f64::INFINITY {
                    let d = dist[u] + self.cost[e];
                    if d < dist[self.to[e]] - 1e-15 * (1.0 + d.abs()) {
                        dist[self.to[e]] = d;
                        via[self.to[e]] = Some(e);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if dist[t] == f64::INFINITY {
            return None;
        }
        let mut path = Vec::new();
        let mut v = t;
        while v != s {
            let e = via[v]?;
            path.push(e);
            v = self.head[e];
            if path.len() > n {
                return None;
            }
        }
        path.reverse();
        Some(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::DiscreteSpace;
    use rand::{Rng, SeedableRng};

    fn on_line(xs: &[f64], masses: &[f64]) -> Measure {
        let s = DiscreteSpace::from_1d(xs.to_vec(), vec![1.0; xs.len()]).unwrap();
        Measure::from_masses(s, masses).unwrap()
    }

    #[test]
    fn quantile_basic_cases() {
        let d0 = on_line(&[0.0, 1.0], &[1.0, 0.0]);
        let d1 = on_line(&[0.0, 1.0], &[0.0, 1.0]);
        let u = on_line(&[0.0, 1.0], &[0.5, 0.5]);
        assert_eq!(wasserstein_1d(&d0, &d0, 1.0).unwrap(), 0.0);
        assert_eq!(wasserstein_1d(&d0, &d1, 1.0).unwrap(), 1.0);
        assert_eq!(wasserstein_1d(&u, &d0, 1.0).unwrap(), 0.5);
        assert!((wasserstein_1d(&u, &d0, 2.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn quantile_sorts_internally() {
        let a = on_line(&[2.0, 0.0, 1.0], &[0.2, 0.5, 0.3]);
        let b = on_line(&[0.0, 1.0, 2.0], &[0.5, 0.3, 0.2]);
        assert!(wasserstein_1d(&a, &b, 1.0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn oracles_on_tiny_problems() {
        let cost = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(transport_exhaustive(&[0.5, 0.5], &[1.0, 0.0], &cost).unwrap(), 0.5);
        assert_eq!(transport_network_flow(&[0.5, 0.5], &[1.0, 0.0], &cost).unwrap(), 0.5);
        assert!(transport_exhaustive(&[0.5, 0.5], &[0.2, 0.2], &cost).is_err());
        let big = vec![vec![0.0; 31]; 31];
        assert!(transport_network_flow(&[1.0 / 31.0; 31], &[1.0 / 31.0; 31], &big).is_err());
    }

    // Permutation oracle: with equal uniform masses the optimum is an assignment.
    fn best_assignment(cost: &[Vec<f64>]) -> f64 {
        fn rec(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == cost.len() {
                *best = best.min(acc);
                return;
            }
            for j in 0..cost.len() {
                if !used[j] {
                    used[j] = true;
                    rec(cost, row + 1, used, acc + cost[row][j], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, 0, &mut vec![false; cost.len()], 0.0, &mut best);
        best / cost.len() as f64
    }

    #[test]
    fn oracles_agree_with_assignment_on_uniform_masses() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let n = rng.random_range(2..7);
            let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
            let u = vec![1.0 / n as f64; n];
            let want = best_assignment(&cost);
            assert!((transport_exhaustive(&u, &u, &cost).unwrap() - want).abs() < 1e-12);
            assert!((transport_network_flow(&u, &u, &cost).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn exhaustive_and_flow_agree_on_general_costs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let n = rng.random_range(1..=EXHAUSTIVE_LIMIT);
            let m = rng.random_range(1..=EXHAUSTIVE_LIMIT);
            let mut a: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
            let mut b: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..1.0)).collect();
            let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
            a.iter_mut().for_each(|v| *v /= sa);
            b.iter_mut().for_each(|v| *v /= sb);
            let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.random_range(0.0..3.0)).collect()).collect();
            let ex = transport_exhaustive(&a, &b, &cost).unwrap();
            let nf = transport_network_flow(&a, &b, &cost).unwrap();
            assert!((ex - nf).abs() < 1e-10, "{ex} vs {nf}");
        }
    }

    #[test]
    fn search_without_flow_hint_agrees() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let n = rng.random_range(1..=5);
            let m = rng.random_range(1..=5);
            let mut a: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
            let mut b: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..1.0)).collect();
            let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
            a.iter_mut().for_each(|v| *v /= sa);
            b.iter_mut().for_each(|v| *v /= sb);
            let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.random_range(0.0..3.0)).collect()).collect();
            let bare = exhaustive_search(&a, &b, &cost, false).unwrap();
            let hinted = transport_exhaustive(&a, &b, &cost).unwrap();
            assert!((bare - hinted).abs() < 1e-10, "{bare} vs {hinted}");
        }
    }

    #[test]
    fn flow_matches_quantile_up_to_thirty_points() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let n = 30;
            let xs: Vec<f64> = (0..n).map(|i| i as f64 / 7.0).collect();
            let mut a: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
            let mut b: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
            let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
            a.iter_mut().for_each(|v| *v /= sa);
            b.iter_mut().for_each(|v| *v /= sb);
            let cost: Vec<Vec<f64>> = xs.iter().map(|x| xs.iter().map(|y| (x - y).abs()).collect()).collect();
            let w = wasserstein_1d(&on_line(&xs, &a), &on_line(&xs, &b), 1.0).unwrap();
            let f = transport_oracle(&on_line(&xs, &a), &on_line(&xs, &b), &cost).unwrap();
            assert!((w - f).abs() < 1e-10);
        }
    }
}
