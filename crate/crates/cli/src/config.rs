use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sinkstab::gaussian::{GaussianEOTModel, Mat, Vector};
use sinkstab::zoo::Params;

use crate::CliError;

/// One JSON document describing a model and what to do with it.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelBlock,
    #[serde(default = "default_maxiter")]
    pub maxiter: usize,
    /// `null` disables early stopping.
    #[serde(default = "default_stop_tol")]
    pub stop_tol: Option<f64>,
    #[serde(default)]
    pub metrics: Option<Vec<String>>,
    #[serde(default)]
    pub deltas: Option<Vec<f64>>,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub seed: u64,
    /// Cycles of the closed-form Gaussian flow.
    #[serde(default = "default_cycles")]
    pub cycles: usize,
    #[serde(default)]
    pub cross_validate: bool,
    /// Grid used to discretize a Gaussian model.
    #[serde(default)]
    pub grid: Option<GridBlock>,
    #[serde(default)]
    pub drift: Option<DriftBlock>,
    #[serde(default)]
    pub outputs: Outputs,
}

fn default_maxiter() -> usize {
    50
}

fn default_stop_tol() -> Option<f64> {
    Some(1e-10)
}

fn default_burn_in() -> usize {
    sinkstab::diagnostics::DEFAULT_BURN_IN
}

fn default_cycles() -> usize {
    20
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelBlock {
    Zoo {
        name: String,
        #[serde(default)]
        params: Params,
    },
    Gaussian(GaussianBlock),
    Grid(GridTables),
    Random {
        n: usize,
        m: usize,
        #[serde(default = "default_w_max")]
        w_max: f64,
    },
}

fn default_w_max() -> f64 {
    3.0
}

impl ModelBlock {
    pub fn label(&self) -> String {
        match self {
            ModelBlock::Zoo { name, .. } => name.clone(),
            ModelBlock::Gaussian(_) => "gaussian".into(),
            ModelBlock::Grid(_) => "grid".into(),
            ModelBlock::Random { .. } => "random".into(),
        }
    }
}

/// Scalars stand for 1-vectors and 1x1 matrices.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Numeric {
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

impl Numeric {
    fn vector(&self, name: &str) -> Result<Vector, CliError> {
        match self {
            Numeric::Scalar(x) => Ok(Vector::from_element(1, *x)),
            Numeric::Vector(v) => Ok(Vector::from_column_slice(v)),
            Numeric::Matrix(_) => Err(CliError::config(format!("{name} must be a number or a list of numbers"))),
        }
    }

    fn matrix(&self, name: &str) -> Result<Mat, CliError> {
        match self {
            Numeric::Scalar(x) => Ok(Mat::from_element(1, 1, *x)),
            Numeric::Matrix(rows) => {
                let d = rows.len();
                if rows.iter().any(|r| r.len() != d) {
                    return Err(CliError::config(format!("{name} must be a square list of rows")));
                }
                Ok(Mat::from_fn(d, d, |i, j| rows[i][j]))
            }
            Numeric::Vector(_) => Err(CliError::config(format!("{name} must be a number or a list of rows"))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianBlock {
    pub m: Numeric,
    pub sigma: Numeric,
    pub m_bar: Numeric,
    pub sigma_bar: Numeric,
    #[serde(default)]
    pub alpha: Option<Numeric>,
    #[serde(default)]
    pub beta: Option<Numeric>,
    pub tau: Numeric,
}

impl GaussianBlock {
    pub fn build(&self) -> Result<GaussianEOTModel, CliError> {
        let m = self.m.vector("m")?;
        let d = m.len();
        let alpha = match &self.alpha {
            Some(a) => a.vector("alpha")?,
            None => Vector::zeros(d),
        };
        let beta = match &self.beta {
            Some(b) => b.matrix("beta")?,
            None => Mat::identity(d, d),
        };
        Ok(GaussianEOTModel::new(
            m,
            self.sigma.matrix("sigma")?,
            self.m_bar.vector("m_bar")?,
            self.sigma_bar.matrix("sigma_bar")?,
            alpha,
            beta,
            self.tau.matrix("tau")?,
        )?)
    }
}

/// A table given inline or as a headerless CSV side file (relative to the config).
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Table {
    Inline(Vec<Vec<f64>>),
    File(String),
}

impl Table {
    pub fn load(&self, base: &Path) -> Result<Vec<Vec<f64>>, CliError> {
        let path = match self {
            Table::Inline(rows) => return Ok(rows.clone()),
            Table::File(p) => base.join(p),
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(&path)
            .map_err(|e| CliError::config(format!("cannot read table {}: {e}", path.display())))?;
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            let row = rec
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::config(format!("{} row {}: {e}", path.display(), i + 1)))?;
            rows.push(row);
        }
        Ok(rows)
    }
}

/// Explicit 1-D grids with potentials and a cost table.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridTables {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Quadrature weights; uniform `1/n` when omitted.
    #[serde(default)]
    pub x_weights: Option<Vec<f64>>,
    #[serde(default)]
    pub y_weights: Option<Vec<f64>>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Table,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_k")]
    pub k: f64,
}

fn default_points() -> usize {
    801
}

fn default_k() -> f64 {
    8.0
}

impl Default for GridBlock {
    fn default() -> Self {
        GridBlock { points: default_points(), k: default_k() }
    }
}

/// Drift and minorization probe at a fixed Sinkhorn cycle.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftBlock {
    pub delta: f64,
    #[serde(default = "default_drift_cycles")]
    pub cycles: usize,
    pub eps: Vec<f64>,
    pub r: Vec<f64>,
}

fn default_drift_cycles() -> usize {
    5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default = "default_trace")]
    pub trace: String,
    #[serde(default = "default_report")]
    pub report: String,
    #[serde(default = "default_diagnose")]
    pub diagnose: String,
}

fn default_trace() -> String {
    "trace.csv".into()
}

fn default_report() -> String {
    "report.txt".into()
}

fn default_diagnose() -> String {
    "diagnose.json".into()
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs { trace: default_trace(), report: default_report(), diagnose: default_diagnose() }
    }
}

/// A parsed config and the directory side files are resolved against.
pub struct Loaded {
    pub config: Config,
    pub base: PathBuf,
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let config: Config =
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    validate(&config)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, base })
}

fn validate(c: &Config) -> Result<(), CliError> {
    if c.maxiter == 0 {
        return Err(CliError::config("maxiter must be at least 1"));
    }
    if let Some(t) = c.stop_tol {
        if !(t >= 0.0) {
            return Err(CliError::config(format!("stop_tol must be nonnegative, got {t}")));
        }
    }
    if c.cycles == 0 {
        return Err(CliError::config("cycles must be at least 1"));
    }
    if let Some(d) = &c.deltas {
        if d.is_empty() {
            return Err(CliError::config("deltas is an empty sweep"));
        }
        if let Some(x) = d.iter().find(|x| !x.is_finite()) {
            return Err(CliError::config(format!("delta {x} is not finite")));
        }
    }
    for name in [&c.outputs.trace, &c.outputs.report, &c.outputs.diagnose] {
        let p = Path::new(name);
        if p.is_absolute() || p.components().count() != 1 {
            return Err(CliError::config(format!("output name {name:?} must be a plain file name")));
        }
    }
    Ok(())
}
