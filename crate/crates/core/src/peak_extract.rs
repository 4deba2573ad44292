//! Dominant-peak extraction on a (time constant, amplitude) spectrum.
//!
//! Amplitudes are compared in `x = log T`. Each mode gets a prominence over
//! a running-median baseline and an isolation score against the RMS
//! amplitude of the surrounding annulus `w/2 <= |Δx| <= w`; their product
//! ranks the local maxima.

use serde::{Deserialize, Serialize};

use crate::def_spectrum::AmplitudeSpectrum;
use crate::error::{DefError, Result};
use crate::series_io::{fmt_real, Artifact};

/// Relative tolerance under which two time constants count as equal.
const TIE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakParams {
    /// Window width in natural-log units of `T`.
    pub w: f64,
    /// Stabilizer; `None` means `1e-12 * max amplitude`.
    pub eps: Option<f64>,
    pub theta: f64,
    pub k_top: usize,
    /// Drop candidates with score below `theta` before taking the top `k_top`.
    pub apply_theta: bool,
}

impl Default for PeakParams {
    fn default() -> Self {
        Self {
            w: 0.25,
            eps: None,
            theta: 0.0,
            k_top: 6,
            apply_theta: false,
        }
    }
}

impl PeakParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.w.is_finite() && self.w > 0.0) {
            return Err(DefError::InvalidArgument(format!("window width w must be > 0, got {}", self.w)));
        }
        if let Some(e) = self.eps {
            if !(e.is_finite() && e >= 0.0) {
                return Err(DefError::InvalidArgument(format!("eps must be >= 0, got {e}")));
            }
        }
        if !(self.theta.is_finite() && self.theta >= 0.0) {
            return Err(DefError::InvalidArgument(format!("theta must be >= 0, got {}", self.theta)));
        }
        if self.k_top == 0 {
            return Err(DefError::InvalidArgument("k_top must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-mode scoring terms, in ascending `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakDiagnostics {
    pub mode: usize,
    pub time_constant: f64,
    pub amplitude: f64,
    pub baseline: f64,
    pub prominence: f64,
    pub background: f64,
    pub isolation: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub mode: usize,
    pub time_constant: f64,
    pub amplitude: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakReport {
    pub n: usize,
    /// Parameters with the stabilizer resolved to a number.
    pub params: PeakParams,
    pub diagnostics: Vec<PeakDiagnostics>,
    /// Local score maxima, by score descending.
    pub candidates: Vec<Peak>,
    /// Candidates with score at least `theta`.
    pub all_peaks: Vec<Peak>,
    pub reported: Vec<Peak>,
}

/// Centered running median: element `i` is the lower median of the values
/// whose key lies within `window/2` of `keys[i]`. Keys must be sorted.
pub fn running_median(values: &[f64], keys: &[f64], window: f64) -> Result<Vec<f64>> {
    if values.len() != keys.len() {
        return Err(DefError::Shape(format!(
            "running median: {} values but {} keys",
            values.len(),
            keys.len()
        )));
    }
    if keys.windows(2).any(|k| k[1] < k[0]) {
        return Err(DefError::InvalidArgument("running median keys must be sorted ascending".into()));
    }
    let half = window / 2.0;
    let (mut lo, mut hi) = (0, 0);
    let mut buf = Vec::new();
    let mut out = Vec::with_capacity(values.len());
    for &k in keys {
        while keys[lo] < k - half {
            lo += 1;
        }
        while hi < keys.len() && keys[hi] <= k + half {
            hi += 1;
        }
        buf.clear();
        buf.extend_from_slice(&values[lo..hi]);
        buf.sort_by(f64::total_cmp);
        out.push(buf[(buf.len() - 1) / 2]);
    }
    Ok(out)
}

/// Sorted `(mode, T, |a|)` with equal-`T` entries merged.
fn merged_entries(spectrum: &AmplitudeSpectrum) -> Result<Vec<(usize, f64, f64)>> {
    let mut rows: Vec<(usize, f64, f64)> = Vec::with_capacity(spectrum.entries.len());
    for e in &spectrum.entries {
        if !e.time_constant.is_finite() {
            continue;
        }
        if e.time_constant <= 0.0 {
            return Err(DefError::InvalidArgument(format!(
                "mode {} has non-positive time constant {}",
                e.mode, e.time_constant
            )));
        }
        rows.push((e.mode, e.time_constant, e.magnitude));
    }
    if rows.is_empty() {
        return Err(DefError::Insufficient("spectrum has no finite time constants".into()));
    }
    rows.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut merged: Vec<(usize, f64, f64)> = Vec::with_capacity(rows.len());
    for r in rows {
        match merged.last_mut() {
            Some(last) if (r.1 - last.1).abs() <= TIE_RTOL * r.1 => {
                if r.2 > last.2 {
                    *last = r;
                }
            }
            _ => merged.push(r),
        }
    }
    Ok(merged)
}

pub fn extract_peaks(spectrum: &AmplitudeSpectrum, params: &PeakParams) -> Result<PeakReport> {
    params.validate()?;
    let rows = merged_entries(spectrum)?;
    let x: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
    let a: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let a_max = a.iter().copied().fold(0.0, f64::max);
    let eps = params.eps.unwrap_or(1e-12 * a_max);
    let w = params.w;

    let baseline = running_median(&a, &x, w)?;
    let m = rows.len();
    let mut diagnostics = Vec::with_capacity(m);
    for i in 0..m {
        let p = (a[i] - baseline[i]).max(0.0);
        let (mut sum, mut count) = (0.0, 0usize);
        for j in 0..m {
            let dx = (x[j] - x[i]).abs();
            if j != i && dx >= w / 2.0 && dx <= w {
                sum += a[j] * a[j];
                count += 1;
            }
        }
        let e = if count > 0 { (sum / count as f64).sqrt() } else { 0.0 };
        let s = if p == 0.0 { 0.0 } else { p / (eps + e) };
        diagnostics.push(PeakDiagnostics {
            mode: rows[i].0,
            time_constant: rows[i].1,
            amplitude: a[i],
            baseline: baseline[i],
            prominence: p,
            background: e,
            isolation: s,
            score: p * s,
        });
    }

    let q: Vec<f64> = diagnostics.iter().map(|d| d.score).collect();
    let mut candidates: Vec<Peak> = (0..m)
        .filter(|&i| q[i] > 0.0 && (0..m).all(|j| (x[j] - x[i]).abs() > w || q[j] <= q[i]))
        .map(|i| Peak {
            mode: rows[i].0,
            time_constant: rows[i].1,
            amplitude: a[i],
            score: q[i],
        })
        .collect();
    // stable: equal scores keep ascending-T order
    candidates.sort_by(|p, r| r.score.total_cmp(&p.score));

    let all_peaks: Vec<Peak> = candidates.iter().filter(|p| p.score >= params.theta).cloned().collect();
    let pool = if params.apply_theta { &all_peaks } else { &candidates };
    let reported = pool.iter().take(params.k_top).cloned().collect();

    Ok(PeakReport {
        n: spectrum.time_index,
        params: PeakParams {
            eps: Some(eps),
            ..*params
        },
        diagnostics,
        candidates,
        all_peaks,
        reported,
    })
}

fn peak_json(p: &Peak) -> serde_json::Value {
    let score = if p.score.is_finite() {
        serde_json::json!(p.score)
    } else {
        serde_json::Value::Null
    };
    serde_json::json!({
        "mode": p.mode,
        "time_constant": p.time_constant,
        "amplitude": p.amplitude,
        "score": score,
    })
}

impl Artifact for PeakReport {
    fn kind(&self) -> &'static str {
        "peak report"
    }

    fn csv_table(&self) -> Option<(Vec<&'static str>, Vec<Vec<String>>)> {
        let rows = self
            .reported
            .iter()
            .map(|p| {
                vec![
                    p.mode.to_string(),
                    fmt_real(p.time_constant),
                    fmt_real(p.amplitude),
                    fmt_real(p.score),
                ]
            })
            .collect();
        Some((vec!["mode", "time_constant", "amplitude", "score"], rows))
    }

    fn json_payload(&self) -> serde_json::Value {
        serde_json::json!({
            "n": self.n,
            "params": self.params,
            "candidates": self.candidates.iter().map(peak_json).collect::<Vec<_>>(),
            "all_peaks": self.all_peaks.iter().map(peak_json).collect::<Vec<_>>(),
            "reported": self.reported.iter().map(peak_json).collect::<Vec<_>>(),
        })
    }
}
