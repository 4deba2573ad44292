//! Time-series containers, CSV/JSON persistence, and seeded observation noise.
//!
//! Reals are always written with the shortest decimal string that parses
//! back to the identical `f64`, so every artifact round-trips exactly and
//! repeated runs produce byte-identical files.
//!
//! Observation noise is drawn from ChaCha20 (`rand_chacha::ChaCha20Rng`,
//! seeded with `seed_from_u64`) pushed through the ziggurat normal sampler
//! of `rand_distr`. Both are portable, so a seed reproduces the same noise
//! on every platform.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{DefError, Result};

/// Uniformly sampled scalar series `y[0..N]` with sampling period `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    samples: Vec<f64>,
    dt: f64,
    #[serde(default)]
    name: String,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, dt: f64) -> Result<Self> {
        Self::with_name(samples, dt, String::new())
    }

    pub fn with_name(samples: Vec<f64>, dt: f64, name: impl Into<String>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(DefError::TooShort(samples.len()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(DefError::InvalidDt(dt));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(DefError::NonFiniteSample(i));
        }
        Ok(Self {
            samples,
            dt,
            name: name.into(),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false: a valid series holds at least two samples.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Series with the sample mean subtracted.
    pub fn demeaned(&self) -> TimeSeries {
        let mean = self.samples.iter().sum::<f64>() / self.len() as f64;
        TimeSeries {
            samples: self.samples.iter().map(|v| v - mean).collect(),
            dt: self.dt,
            name: self.name.clone(),
        }
    }
}

/// `m` exogenous input channels sampled on the same grid as a [`TimeSeries`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSeries {
    channels: Vec<Vec<f64>>,
    dt: f64,
}

impl InputSeries {
    pub fn new(channels: Vec<Vec<f64>>, dt: f64) -> Result<Self> {
        let Some(first) = channels.first() else {
            return Err(DefError::InvalidArgument(
                "input needs at least one channel".into(),
            ));
        };
        let n = first.len();
        if let Some((c, ch)) = channels.iter().enumerate().find(|(_, ch)| ch.len() != n) {
            return Err(DefError::Shape(format!(
                "input channel {c} has {} samples, channel 0 has {n}",
                ch.len()
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(DefError::InvalidDt(dt));
        }
        for ch in &channels {
            if let Some(i) = ch.iter().position(|v| !v.is_finite()) {
                return Err(DefError::NonFiniteSample(i));
            }
        }
        Ok(Self { channels, dt })
    }

    pub fn single(values: Vec<f64>, dt: f64) -> Result<Self> {
        Self::new(vec![values], dt)
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Input vector `u[n]` (one entry per channel).
    pub fn at(&self, n: usize) -> impl Iterator<Item = f64> + '_ {
        self.channels.iter().map(move |ch| ch[n])
    }
}

/// Which CSV column holds the samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnSelector {
    Index(usize),
    Name(String),
}

impl Default for ColumnSelector {
    fn default() -> Self {
        ColumnSelector::Index(0)
    }
}

impl FromStr for ColumnSelector {
    type Err = std::convert::Infallible;

    /// Digits select by zero-based index, anything else by header name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => ColumnSelector::Index(i),
            Err(_) => ColumnSelector::Name(s.to_string()),
        })
    }
}

impl fmt::Display for ColumnSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnSelector::Index(i) => write!(f, "{i}"),
            ColumnSelector::Name(n) => f.write_str(n),
        }
    }
}

fn header_dt(text: &str) -> Option<f64> {
    text.lines()
        .filter_map(|l| l.trim().strip_prefix('#'))
        .filter_map(|l| {
            let (key, value) = l.split_once('=')?;
            (key.trim() == "dt").then(|| value.trim().parse().ok())?
        })
        .next()
}

/// Load one column of a CSV file as a series.
///
/// Lines starting with `#` are comments; a `# dt=<value>` comment supplies
/// the sampling period when `dt` is `None`. A first row whose selected cell
/// is not numeric is taken as the header.
pub fn load_series(path: impl AsRef<Path>, column: &ColumnSelector, dt: Option<f64>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| DefError::io(path, e))?;
    let (samples, _) = parse_columns(path, &text, std::slice::from_ref(column))?;
    let samples = samples.into_iter().next().unwrap_or_default();
    if samples.len() < 2 {
        return Err(DefError::TooShort(samples.len()));
    }
    let dt = dt.or_else(|| header_dt(&text)).ok_or(DefError::MissingDt)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    TimeSeries::with_name(samples, dt, name)
}

/// Load `m` input channels from a CSV file (one column per channel).
pub fn load_inputs(path: impl AsRef<Path>, columns: &[ColumnSelector], dt: f64) -> Result<InputSeries> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| DefError::io(path, e))?;
    let (channels, _) = parse_columns(path, &text, columns)?;
    InputSeries::new(channels, dt)
}

/// Selected columns plus the header, when the file has one.
type Columns = (Vec<Vec<f64>>, Option<Vec<String>>);

fn parse_columns(path: &Path, text: &str, columns: &[ColumnSelector]) -> Result<Columns> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = vec![Vec::new(); columns.len()];
    let mut header: Option<Vec<String>> = None;
    let mut indices: Vec<usize> = Vec::with_capacity(columns.len());
    let mut first = true;
    for record in reader.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        if first {
            first = false;
            let needs_header = columns.iter().any(|c| matches!(c, ColumnSelector::Name(_)))
                || columns.iter().any(|c| match c {
                    ColumnSelector::Index(i) => record.get(*i).is_some_and(|v| v.parse::<f64>().is_err()),
                    ColumnSelector::Name(_) => false,
                });
            if needs_header {
                let names: Vec<String> = record.iter().map(str::to_string).collect();
                for c in columns {
                    let idx = match c {
                        ColumnSelector::Index(i) => *i,
                        ColumnSelector::Name(n) => names.iter().position(|h| h == n).ok_or_else(|| {
                            DefError::MissingColumn {
                                path: path.to_path_buf(),
                                column: n.clone(),
                            }
                        })?,
                    };
                    indices.push(idx);
                }
                header = Some(names);
                continue;
            }
            indices = columns
                .iter()
                .map(|c| match c {
                    ColumnSelector::Index(i) => *i,
                    ColumnSelector::Name(_) => unreachable!(),
                })
                .collect();
        }
        for (slot, &idx) in out.iter_mut().zip(&indices) {
            let cell = record.get(idx).ok_or_else(|| DefError::MissingColumn {
                path: path.to_path_buf(),
                column: idx.to_string(),
            })?;
            let value: f64 = cell.parse().map_err(|_| DefError::Parse {
                path: path.to_path_buf(),
                row,
                cell: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(DefError::Parse {
                    path: path.to_path_buf(),
                    row,
                    cell: cell.to_string(),
                });
            }
            slot.push(value);
        }
    }
    Ok((out, header))
}

/// Shortest decimal rendering that parses back to exactly `x`.
pub fn fmt_real(x: f64) -> String {
    if x == 0.0 || (1e-5..1e16).contains(&x.abs()) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Write a series as CSV with header `y` and a `# dt=` comment line.
pub fn write_series(series: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    write_columns(path, &[("y", series.samples())], Some(series.dt()))
}

/// Write equal-length columns side by side.
pub fn write_columns(path: impl AsRef<Path>, columns: &[(&str, &[f64])], dt: Option<f64>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| DefError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| DefError::io(path, e);
    if let Some(dt) = dt {
        writeln!(w, "# dt={}", fmt_real(dt)).map_err(io)?;
    }
    let header: Vec<&str> = columns.iter().map(|c| c.0).collect();
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    let n = columns.iter().map(|c| c.1.len()).max().unwrap_or(0);
    for i in 0..n {
        let row: Vec<String> = columns
            .iter()
            .map(|c| c.1.get(i).map(|&v| fmt_real(v)).unwrap_or_default())
            .collect();
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Add i.i.d. zero-mean Gaussian noise of the given variance.
///
/// Deterministic in `(series, variance, seed)`; `variance == 0` returns an
/// exact copy.
pub fn add_gaussian_noise(series: &TimeSeries, variance: f64, seed: u64) -> Result<TimeSeries> {
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(DefError::InvalidArgument(format!(
            "noise variance must be finite and >= 0, got {variance}"
        )));
    }
    if variance == 0.0 {
        return Ok(series.clone());
    }
    let normal = Normal::new(0.0, variance.sqrt()).map_err(|e| DefError::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let samples = series.samples().iter().map(|&y| y + normal.sample(&mut rng)).collect();
    TimeSeries::with_name(samples, series.dt(), series.name())
}

/// Output format for [`write_result`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = DefError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(DefError::UnsupportedFormat(s.to_string())),
        }
    }
}

impl Format {
    /// Guess from a file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        path.extension()
            .and_then(|e| e.to_str())
            .ok_or_else(|| DefError::UnsupportedFormat(path.display().to_string()))?
            .parse()
    }
}

/// Run-level metadata stored under `"meta"` in every JSON result.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultMeta {
    pub d_star: Option<usize>,
    #[serde(rename = "L")]
    pub l_horizon: Option<usize>,
    pub sigma2: Option<f64>,
    pub dt: f64,
    #[serde(rename = "N")]
    pub n_samples: usize,
}

/// An analysis product that can be persisted by [`write_result`].
pub trait Artifact {
    /// Short human-readable name used in error messages.
    fn kind(&self) -> &'static str;

    /// CSV header and rows; `None` if the product has no tabular form.
    fn csv_table(&self) -> Option<(Vec<&'static str>, Vec<Vec<String>>)> {
        None
    }

    /// Operation-specific JSON payload.
    fn json_payload(&self) -> serde_json::Value;
}

pub fn write_result<A: Artifact + ?Sized>(result: &A, meta: &ResultMeta, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let path = path.as_ref();
    match format {
        Format::Csv => {
            let (header, rows) = result.csv_table().ok_or(DefError::UnsupportedArtifact {
                what: result.kind(),
                format: "csv",
            })?;
            let file = File::create(path).map_err(|e| DefError::io(path, e))?;
            let mut w = csv::Writer::from_writer(BufWriter::new(file));
            w.write_record(&header)?;
            for row in rows {
                w.write_record(&row)?;
            }
            w.flush().map_err(|e| DefError::io(path, e))?;
        }
        Format::Json => {
            let doc = serde_json::json!({
                "meta": meta,
                "payload": result.json_payload(),
            });
            write_json(&doc, path)?;
        }
    }
    Ok(())
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| DefError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|e| DefError::io(path, e))?;
    w.flush().map_err(|e| DefError::io(path, e))
}

/// Read a CSV written by [`write_result`] back as named numeric columns.
pub fn read_table(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| DefError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut columns = vec![Vec::new(); header.len()];
    for record in reader.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        for (col, cell) in columns.iter_mut().zip(record.iter()) {
            col.push(cell.parse().map_err(|_| DefError::Parse {
                path: path.to_path_buf(),
                row,
                cell: cell.to_string(),
            })?);
        }
    }
    Ok((header, columns))
}

pub(crate) fn take_column(path: &Path, header: &[String], columns: &mut [Vec<f64>], name: &str) -> Result<Vec<f64>> {
    let idx = header.iter().position(|h| h == name).ok_or_else(|| DefError::MissingColumn {
        path: path.to_path_buf(),
        column: name.to_string(),
    })?;
    Ok(std::mem::take(&mut columns[idx]))
}
