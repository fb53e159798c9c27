use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use sinkstab::diagnostics::{report, sandwich_audit, write_atomic, DivergenceTrace, Metric};
use sinkstab::gaussian::{
    check_cc, closed_form_trace, cross_validate, default_metrics, discretize, theoretical_rate, GaussianEOTModel,
    GridSpec,
};
use sinkstab::measure::DiscreteSpace;
use sinkstab::random;
use sinkstab::sinkhorn::{run as run_sinkhorn, step, RunOptions, SinkhornState, TransportModel};
use sinkstab::zoo::{self, diagnose as zoo_diagnose, drift_minorization_probe, lyapunov_pair, Param, Params, ZooModel};

use crate::config::{self, Config, GridTables, ModelBlock};
use crate::CliError;

const DEFAULT_METRICS: &[&str] = &["TV", "KL", "Hellinger2", "hilbert"];

pub struct Context {
    pub config: Config,
    pub base: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub refine: usize,
}

pub fn prepare(path: &Path, out: PathBuf, seed: Option<u64>, refine: usize) -> Result<Context, CliError> {
    let loaded = config::load(path)?;
    if refine == 0 {
        return Err(CliError::config("--refine must be at least 1"));
    }
    if !out.is_dir() {
        return Err(CliError::runtime(format!("i/o error: output directory {} does not exist", out.display())));
    }
    let seed = seed.unwrap_or(loaded.config.seed);
    Ok(Context { config: loaded.config, base: loaded.base, out, seed, refine })
}

fn write(ctx: &Context, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let path = ctx.out.join(name);
    write_atomic(&path, bytes)?;
    Ok(path)
}

/// Builds a zoo model, scaling its grid size by the refinement factor.
fn build_zoo(name: &str, params: &Params, refine: usize) -> Result<ZooModel, CliError> {
    let z = zoo::build(name, params)?;
    if refine == 1 {
        return Ok(z);
    }
    let mut params = params.clone();
    params.insert("n".into(), Param::Scalar((z.model.x().len() * refine) as f64));
    Ok(zoo::build(name, &params)?)
}

fn grid_spec(ctx: &Context) -> GridSpec {
    let g = ctx.config.grid.unwrap_or_default();
    GridSpec { points: (g.points.max(1) - 1) * ctx.refine + 1, k: g.k }
}

fn grid_model(t: &GridTables, base: &Path, refine: usize) -> Result<TransportModel, CliError> {
    if refine != 1 {
        return Err(CliError::config("--refine does not apply to explicit grids"));
    }
    let uniform = |n: usize| vec![1.0 / n as f64; n];
    let x = DiscreteSpace::from_1d(t.x.clone(), t.x_weights.clone().unwrap_or_else(|| uniform(t.x.len())))?;
    let y = DiscreteSpace::from_1d(t.y.clone(), t.y_weights.clone().unwrap_or_else(|| uniform(t.y.len())))?;
    let rows = t.w.load(base)?;
    if rows.len() != t.x.len() || rows.iter().any(|r| r.len() != t.y.len()) {
        return Err(CliError::config(format!("cost table must be {}x{}", t.x.len(), t.y.len())));
    }
    let w = Array2::from_shape_fn((t.x.len(), t.y.len()), |(i, j)| rows[i][j]);
    Ok(TransportModel::new(x, y, t.u.clone(), t.v.clone(), w)?)
}

struct Prepared {
    model: TransportModel,
    theoretical: Option<f64>,
    notes: Vec<String>,
}

fn transport_model(ctx: &Context) -> Result<Prepared, CliError> {
    match &ctx.config.model {
        ModelBlock::Zoo { name, params } => {
            let z = build_zoo(name, params, ctx.refine)?;
            Ok(Prepared { model: z.model, theoretical: None, notes: z.notes })
        }
        ModelBlock::Gaussian(g) => {
            let gm = g.build()?;
            let d = discretize(&gm, &grid_spec(ctx))?;
            Ok(Prepared {
                model: d.model,
                theoretical: Some(theoretical_rate(&gm)?.rho),
                notes: d.warning.into_iter().collect(),
            })
        }
        ModelBlock::Grid(t) => {
            Ok(Prepared { model: grid_model(t, &ctx.base, ctx.refine)?, theoretical: None, notes: Vec::new() })
        }
        ModelBlock::Random { n, m, w_max } => {
            if *n == 0 || *m == 0 || !(w_max.is_finite() && *w_max >= 0.0) {
                return Err(CliError::config("random model needs n, m >= 1 and a finite w_max >= 0"));
            }
            let model = random::model(&mut random::rng(ctx.seed), *n, *m, *w_max);
            Ok(Prepared { model, theoretical: None, notes: vec![format!("seed: {}", ctx.seed)] })
        }
    }
}

fn metrics(c: &Config) -> Result<Vec<Metric>, CliError> {
    let names: Vec<String> = match &c.metrics {
        Some(m) if m.is_empty() => return Err(CliError::config("metrics list is empty")),
        Some(m) => m.clone(),
        None => DEFAULT_METRICS.iter().map(|s| s.to_string()).collect(),
    };
    Ok(names.iter().map(|s| s.parse()).collect::<sinkstab::Result<Vec<Metric>>>()?)
}

pub fn run(ctx: &Context) -> Result<String, CliError> {
    let metrics = metrics(&ctx.config)?;
    let prepared = transport_model(ctx)?;
    let opts = RunOptions {
        maxiter: ctx.config.maxiter,
        stop_tol: ctx.config.stop_tol,
        metrics: metrics.clone(),
        label: ctx.config.model.label(),
    };
    let outcome = run_sinkhorn(&prepared.model, &opts)?;
    let trace = &outcome.trace;

    let mut text = report(trace, ctx.config.burn_in, prepared.theoretical);
    let _ = writeln!(text, "final TV: {:.6e}", outcome.final_tv);
    if metrics.contains(&Metric::Chi) {
        for m in metrics.iter().filter(|m| matches!(m, Metric::Phi(_))) {
            let audit = sandwich_audit(trace, &m.to_string(), None)?;
            let _ = writeln!(
                text,
                "audit {m}: {} (chi {:.6}, worst ratio {:.6}, {} steps, {} skipped)",
                if audit.passed() { "passed" } else { "VIOLATED" },
                audit.chi,
                audit.worst_ratio,
                audit.steps.len(),
                audit.skipped
            );
        }
    }
    for note in &prepared.notes {
        let _ = writeln!(text, "note: {note}");
    }
    write(ctx, &ctx.config.outputs.trace, trace.to_csv_string().as_bytes())?;
    write(ctx, &ctx.config.outputs.report, text.as_bytes())?;
    Ok(text)
}

fn gaussian_as_zoo(g: &GaussianEOTModel) -> Params {
    let mut p = Params::new();
    for (k, v) in [
        ("m_u", g.m()[0]),
        ("var_u", g.sigma()[(0, 0)]),
        ("m_v", g.m_bar()[0]),
        ("var_v", g.sigma_bar()[(0, 0)]),
        ("alpha", g.alpha()[0]),
        ("beta", g.beta()[(0, 0)]),
        ("tau", g.tau()[(0, 0)]),
    ] {
        p.insert(k.into(), Param::Scalar(v));
    }
    p
}

pub fn diagnose(ctx: &Context) -> Result<String, CliError> {
    let deltas = ctx.config.deltas.clone().unwrap_or_else(zoo::default_deltas);
    let (name, z) = match &ctx.config.model {
        ModelBlock::Zoo { name, params } => (name.clone(), build_zoo(name, params, ctx.refine)?),
        ModelBlock::Gaussian(g) => {
            let gm = g.build()?;
            if gm.dim() != 1 {
                return diagnose_analytic(ctx, &gm, &deltas);
            }
            ("gaussian".to_string(), build_zoo("gaussian", &gaussian_as_zoo(&gm), ctx.refine)?)
        }
        _ => return Err(CliError::config("diagnose needs a zoo or gaussian model")),
    };
    let points = zoo_diagnose(&z, &deltas)?;
    let drift = match &ctx.config.drift {
        Some(d) => {
            let mut state = SinkhornState::initial(&z.model);
            for _ in 0..d.cycles {
                state = step(&z.model, &state)?;
            }
            let (phi, psi) = lyapunov_pair(&z.model, d.delta);
            Some(drift_minorization_probe(&z.model, &state, &phi, &psi, &d.eps, &d.r)?)
        }
        None => None,
    };
    let doc = serde_json::json!({ "model": name, "notes": z.notes, "points": points, "drift": drift });
    let mut json = serde_json::to_string_pretty(&doc).map_err(|e| CliError::runtime(e.to_string()))?;
    json.push('\n');
    write(ctx, &ctx.config.outputs.diagnose, json.as_bytes())?;

    let mut text = format!("model: {name}\n{:>8}  {:<13} {:<13} {}\n", "delta", "H_delta", "H_prime", "analytic");
    for p in &points {
        let analytic = p.analytic.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            text,
            "{:>8.4}  {:<13} {:<13} {analytic}",
            p.delta,
            p.h.verdict.to_string(),
            p.h_prime.verdict.to_string()
        );
    }
    for note in &z.notes {
        let _ = writeln!(text, "note: {note}");
    }
    Ok(text)
}

/// Multivariate Gaussian models have only the closed-form check.
fn diagnose_analytic(ctx: &Context, g: &GaussianEOTModel, deltas: &[f64]) -> Result<String, CliError> {
    let verdicts = deltas.iter().map(|&d| check_cc(g, d)).collect::<sinkstab::Result<Vec<_>>>()?;
    let doc = serde_json::json!({ "model": "gaussian", "dimension": g.dim(), "points": verdicts });
    let mut json = serde_json::to_string_pretty(&doc).map_err(|e| CliError::runtime(e.to_string()))?;
    json.push('\n');
    write(ctx, &ctx.config.outputs.diagnose, json.as_bytes())?;
    let mut text = format!("model: gaussian (d = {})\n{:>8}  {:<13} {}\n", g.dim(), "delta", "analytic", "margin");
    for v in &verdicts {
        let verdict = if v.satisfied { "satisfied" } else { "violated" };
        let _ = writeln!(text, "{:>8.4}  {verdict:<13} {:.6}", v.delta, v.margin());
    }
    Ok(text)
}

pub fn gaussian(ctx: &Context) -> Result<String, CliError> {
    let ModelBlock::Gaussian(block) = &ctx.config.model else {
        return Err(CliError::config("the gaussian command needs a gaussian model block"));
    };
    let g = block.build()?;
    let trace = closed_form_trace(&g, ctx.config.cycles, &default_metrics(g.dim()))?;
    let rho = theoretical_rate(&g)?.rho;
    let mut text = report(&trace, ctx.config.burn_in, Some(rho));
    if ctx.config.cross_validate {
        if g.dim() != 1 {
            return Err(CliError::config("cross-validation needs a one-dimensional model"));
        }
        let spec = grid_spec(ctx);
        let cv = cross_validate(&g, &spec, ctx.config.cycles)?;
        let _ = writeln!(text, "cross-validation: {} points, +-{} sd, {} cycles", spec.points, spec.k, cv.cycles);
        let _ = writeln!(text, "  max mean error {:.6e}", cv.max_mean_error);
        let _ = writeln!(text, "  max variance error {:.6e}", cv.max_var_error);
        let _ = writeln!(text, "  max TV gap {:.6e}", cv.max_tv_gap);
        let _ = writeln!(text, "  tail mass {:.3e}", cv.tail_mass);
    }
    write(ctx, &ctx.config.outputs.trace, trace.to_csv_string().as_bytes())?;
    write(ctx, &ctx.config.outputs.report, text.as_bytes())?;
    Ok(text)
}

pub fn rates(path: &Path, burn_in: usize, theoretical: Option<f64>) -> Result<String, CliError> {
    let trace = DivergenceTrace::read_csv(path)?;
    Ok(report(&trace, burn_in, theoretical))
}
