use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which marginal sequence a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// `pi_{2n}` against `nu_V`.
    Even,
    /// `lambda_U` against `pi_{2n+1}`.
    Odd,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Side::Even => "even",
            Side::Odd => "odd",
        })
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "even" => Ok(Side::Even),
            "odd" => Ok(Side::Odd),
            _ => Err(Error::Parse(format!("side must be even or odd, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub n: usize,
    pub side: Side,
    pub metric: String,
    pub value: f64,
}

/// Per-iteration divergence values of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DivergenceTrace {
    pub model: String,
    pub metadata: BTreeMap<String, String>,
    records: Vec<TraceRecord>,
}

pub const CSV_HEADER: &str = "n,side,metric,value";

impl DivergenceTrace {
    pub fn new(model: impl Into<String>) -> Self {
        DivergenceTrace { model: model.into(), ..Default::default() }
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends a record; `n` must increase within each (metric, side) series and the
    /// value must be nonnegative (NaN is rejected, `+inf` is kept).
    pub fn push(&mut self, n: usize, side: Side, metric: &str, value: f64) -> Result<()> {
        if value.is_nan() || value < 0.0 {
            return Err(Error::Numerical(format!("{metric} ({side}) at n={n} is {value}")));
        }
        if let Some(last) = self.records.iter().rev().find(|r| r.side == side && r.metric == metric) {
            if last.n >= n {
                return Err(Error::Precondition(format!("{metric} ({side}): n={n} after n={}", last.n)));
            }
        }
        self.records.push(TraceRecord { n, side, metric: metric.to_string(), value });
        Ok(())
    }

    /// Distinct (metric, side) pairs in order of first appearance.
    pub fn series_keys(&self) -> Vec<(String, Side)> {
        let mut keys: Vec<(String, Side)> = Vec::new();
        for r in &self.records {
            if !keys.iter().any(|(m, s)| *m == r.metric && *s == r.side) {
                keys.push((r.metric.clone(), r.side));
            }
        }
        keys
    }

    pub fn series(&self, metric: &str, side: Side) -> Vec<(usize, f64)> {
        self.records
            .iter()
            .filter(|r| r.side == side && r.metric == metric)
            .map(|r| (r.n, r.value))
            .collect()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(32 * (self.records.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!("{},{},{},{}\n", r.n, r.side, r.metric, format_value(r.value)));
        }
        out
    }

    /// Writes the CSV through a temporary file in the same directory, then renames it.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv_string().as_bytes())
    }

    pub fn from_csv_str(model: &str, text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
            return Err(Error::Parse(format!("expected header {CSV_HEADER:?}")));
        }
        let mut trace = DivergenceTrace::new(model);
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let bad = |what: &str| Error::Parse(format!("row {}: bad {what}", line + 2));
            let n = rec[0].parse().map_err(|_| bad("n"))?;
            let side = rec[1].parse().map_err(|_| bad("side"))?;
            let value = rec[3].parse().map_err(|_| bad("value"))?;
            trace.push(n, side, &rec[2], value)?;
        }
        Ok(trace)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let model = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::from_csv_str(&model, &text)
    }
}

/// 17 significant digits, which round-trips every finite double.
pub fn format_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "inf".to_string()
    }
}

/// Write `bytes` to `path` via a sibling temporary file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::Precondition(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_trace_is_header_only() {
        assert_eq!(DivergenceTrace::new("m").to_csv_string(), "n,side,metric,value\n");
    }

    #[test]
    fn push_rejects_bad_values_and_order() {
        let mut t = DivergenceTrace::new("m");
        t.push(0, Side::Even, "KL", 1.0).unwrap();
        t.push(0, Side::Odd, "KL", 1.0).unwrap();
        assert!(t.push(0, Side::Even, "KL", 0.5).is_err());
        assert!(t.push(1, Side::Even, "KL", -0.5).is_err());
        assert!(t.push(1, Side::Even, "KL", f64::NAN).is_err());
        t.push(1, Side::Even, "KL", f64::INFINITY).unwrap();
        assert_eq!(t.series("KL", Side::Even).len(), 2);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut t = DivergenceTrace::new("m");
        let vals = [0.1, 1.0 / 3.0, 5e-324, 1.7976931348623157e308, 0.0, f64::INFINITY];
        for (n, v) in vals.iter().enumerate() {
            t.push(n, Side::Even, "TV", *v).unwrap();
            t.push(n, Side::Odd, "alpha(0.5)", v * 0.5).unwrap();
        }
        let back = DivergenceTrace::from_csv_str("m", &t.to_csv_string()).unwrap();
        assert_eq!(back.records(), t.records());
    }

    #[test]
    fn atomic_write_leaves_no_temp_file() {
        let dir = std::env::temp_dir().join(format!("sinkstab-trace-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.csv");
        let mut t = DivergenceTrace::new("m");
        t.push(0, Side::Even, "KL", 0.25).unwrap();
        t.write_csv(&path).unwrap();
        assert_eq!(DivergenceTrace::read_csv(&path).unwrap().records(), t.records());
        assert_eq!(fs::read_dir(&dir).unwrap().count(), 1);
        assert!(t.write_csv(&dir.join("missing").join("t.csv")).is_err());
        fs::remove_dir_all(&dir).unwrap();
    }
}
