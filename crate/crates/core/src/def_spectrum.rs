//! Exponential mode decomposition of the identified delay operator.
//!
//! Each eigenvector of `Ã_d` is fitted with a discrete exponential
//! `b * exp(nu * (d-1-k) * dt)`, `k = 0..d`. The continuous exponent `nu`
//! gives the mode's time constant `T = 1/|Re nu|`, and the mode's amplitude
//! at time `n` measures how strongly the subsequence ending at `n` carries
//! that exponential.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::path::Path;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{DefError, Result, StageExt};
use crate::linear_model::{self, ForcedModel, IdentifiedModel, OrderSelection};
use crate::series_io::{self, fmt_real, Artifact, InputSeries, TimeSeries};

/// Eigenvalues closer than this are reported as non-distinct.
pub const DISTINCT_TOL: f64 = 1e-12;

/// Normalized residual above which the ratio estimate is refined.
pub const REFINE_THRESHOLD: f64 = 1e-3;

/// Eigenpairs of an operator, unit-norm vectors with their largest
/// component real and positive, sorted by modulus (descending) then angle.
#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub values: Vec<Complex64>,
    pub vectors: Vec<Vec<Complex64>>,
    /// Smallest distance between two eigenvalues (`+inf` for `d = 1`).
    pub min_pair_distance: f64,
}

impl Eigenpairs {
    pub fn non_distinct(&self) -> bool {
        self.min_pair_distance < DISTINCT_TOL
    }
}

pub(crate) fn eigen_of(a: &Mat<f64>) -> Result<Eigenpairs> {
    let d = a.nrows();
    if let Some(bad) = a.col_iter().flat_map(|c| c.iter().copied()).find(|v| !v.is_finite()) {
        return Err(DefError::Numerical(format!("operator has non-finite entry {bad}")));
    }
    let evd = a.eigen().map_err(|e| {
        DefError::Numerical(format!(
            "eigensolver did not converge ({e:?}); operator norm {:.3e}",
            a.norm_l2()
        ))
    })?;
    let u = evd.U();
    let s = evd.S().column_vector();
    let mut pairs: Vec<(Complex64, Vec<Complex64>)> = (0..d)
        .map(|i| {
            let v: Vec<Complex64> = (0..d).map(|r| u[(r, i)]).collect();
            (s[i], normalize_phase(v))
        })
        .collect();
    pairs.sort_by(|a, b| cmp_eigen(a.0, b.0));

    let values: Vec<Complex64> = pairs.iter().map(|p| p.0).collect();
    let min_pair_distance = min_pair_distance(&values);
    if min_pair_distance < DISTINCT_TOL {
        log::warn!("non-distinct eigenvalues (min pairwise distance {min_pair_distance:.3e})");
    }
    Ok(Eigenpairs {
        values,
        vectors: pairs.into_iter().map(|p| p.1).collect(),
        min_pair_distance,
    })
}

fn cmp_eigen(a: Complex64, b: Complex64) -> Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then_with(|| a.arg().total_cmp(&b.arg()))
}

fn min_pair_distance(values: &[Complex64]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in values.iter().enumerate() {
        for b in &values[i + 1..] {
            best = best.min((a - b).norm());
        }
    }
    best
}

/// Unit 2-norm with the largest-magnitude component rotated onto the
/// positive real axis (first such component on ties).
fn normalize_phase(mut v: Vec<Complex64>) -> Vec<Complex64> {
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v;
    }
    let (mut idx, mut best) = (0, -1.0);
    for (i, c) in v.iter().enumerate() {
        let m = c.norm();
        if m > best {
            best = m;
            idx = i;
        }
    }
    let phase = v[idx].conj() / v[idx].norm();
    for c in &mut v {
        *c = *c * phase / norm;
    }
    v[idx] = Complex64::new(v[idx].norm(), 0.0);
    v
}

pub fn eigendecompose(model: &IdentifiedModel) -> Result<Eigenpairs> {
    eigen_of(&model.a_tilde)
}

/// Fitted discrete exponential `scale * exp(nu * (d-1-k) * dt)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub nu: Complex64,
    pub scale: Complex64,
    /// `Σ|v_k - fit_k|² / Σ|v_k|²`.
    pub residual: f64,
}

/// Nearest representative of `theta + 2πm` to `reference`.
fn unwrap_near(theta: f64, reference: f64) -> f64 {
    theta + 2.0 * PI * ((reference - theta) / (2.0 * PI)).round()
}

/// Magnitude-weighted mean of the consecutive log-ratios `log(v_k / v_{k+1})`
/// (per sample), with the phase of each ratio unwrapped toward the running
/// estimate. `None` when no consecutive pair is non-zero.
fn ratio_estimate(v: &[Complex64]) -> Option<Complex64> {
    let (mut wsum, mut re, mut im) = (0.0, 0.0, 0.0);
    for pair in v.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let w = a.norm() * b.norm();
        if w == 0.0 || !w.is_finite() {
            continue;
        }
        let r = a / b;
        let theta = r.arg();
        let theta = if wsum > 0.0 { unwrap_near(theta, im / wsum) } else { theta };
        re += w * r.norm().ln();
        im += w * theta;
        wsum += w;
    }
    (wsum > 0.0).then(|| Complex64::new(re / wsum, im / wsum))
}

/// Basis `exp(z * (d-1-k) - shift)` with the shift keeping the largest
/// entry at unit modulus; `z` is the per-sample exponent.
fn scaled_basis(z: Complex64, d: usize) -> (Vec<Complex64>, f64) {
    let top = z.re * (d - 1) as f64;
    let shift = top.max(0.0);
    let basis = (0..d)
        .map(|k| (z * (d - 1 - k) as f64 - shift).exp())
        .collect();
    (basis, shift)
}

/// Least-squares scale against a fixed basis and the normalized residual.
fn project_scale(v: &[Complex64], basis: &[Complex64], v_norm2: f64) -> (Complex64, f64) {
    let den: f64 = basis.iter().map(|e| e.norm_sqr()).sum();
    if den == 0.0 {
        return (Complex64::new(0.0, 0.0), 1.0);
    }
    let num: Complex64 = basis.iter().zip(v).map(|(e, x)| e.conj() * x).sum();
    let scale = num / den;
    let res: f64 = basis.iter().zip(v).map(|(e, x)| (x - scale * e).norm_sqr()).sum();
    (scale, res / v_norm2)
}

/// Levenberg-Marquardt on `(z, c)` for `v_k ≈ c * exp(z (d-1-k) - shift)`.
/// The residual is holomorphic in both parameters, so the complex normal
/// equations give the real Gauss-Newton step.
fn refine(v: &[Complex64], z0: Complex64, v_norm2: f64) -> (Complex64, Complex64, f64) {
    let d = v.len();
    let (basis, shift) = scaled_basis(z0, d);
    let (c0, r0) = project_scale(v, &basis, v_norm2);
    let cost = |z: Complex64, c: Complex64| -> f64 {
        (0..d)
            .map(|k| (v[k] - c * (z * (d - 1 - k) as f64 - shift).exp()).norm_sqr())
            .sum::<f64>()
            / v_norm2
    };
    let (mut z, mut c, mut best) = (z0, c0, r0);
    let mut mu = 1e-3;
    for _ in 0..200 {
        // J = [∂r/∂z, ∂r/∂c], r_k = v_k - c e_k
        let (mut jzz, mut jzc, mut jcc) = (0.0, Complex64::new(0.0, 0.0), 0.0);
        let (mut gz, mut gc) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for k in 0..d {
            let t = (d - 1 - k) as f64;
            let e = (z * t - shift).exp();
            let r = v[k] - c * e;
            let dz = -c * t * e;
            let dc = -e;
            jzz += dz.norm_sqr();
            jcc += dc.norm_sqr();
            jzc += dz.conj() * dc;
            gz += dz.conj() * r;
            gc += dc.conj() * r;
        }
        let mut improved = false;
        for _ in 0..20 {
            let (a11, a22) = (jzz * (1.0 + mu), jcc * (1.0 + mu));
            let det = a11 * a22 - jzc.norm_sqr();
            if det <= 0.0 || !det.is_finite() {
                mu *= 10.0;
                continue;
            }
            // solve [[a11, jzc], [conj(jzc), a22]] δ = -g
            let dz = -(a22 * gz - jzc * gc) / det;
            let dc = -(a11 * gc - jzc.conj() * gz) / det;
            let (zn, cn) = (z + dz, c + dc);
            let fc = cost(zn, cn);
            if fc.is_finite() && fc < best {
                let gain = best - fc;
                z = zn;
                c = cn;
                best = fc;
                mu = (mu * 0.3).max(1e-12);
                improved = gain > 1e-15 * best.max(1e-300);
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (z, c * (-shift).exp(), best)
}

/// Fit `v_k ≈ b * exp(nu * (d-1-k) * dt)`.
///
/// The exponent comes from consecutive-ratio averaging; when that leaves a
/// normalized residual above [`REFINE_THRESHOLD`] (or no ratio is
/// available because of zero entries) a nonlinear least-squares refinement
/// takes over.
pub fn fit_exponential(v: &[Complex64], dt: f64) -> Result<ExpFit> {
    let d = v.len();
    if d < 2 {
        return Err(DefError::InvalidArgument("exponential fit needs d >= 2".into()));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(DefError::InvalidDt(dt));
    }
    let v_norm2: f64 = v.iter().map(|c| c.norm_sqr()).sum();
    if v_norm2 == 0.0 {
        return Err(DefError::InvalidArgument("cannot fit an exponential to a zero vector".into()));
    }
    if !v_norm2.is_finite() {
        return Err(DefError::Numerical("eigenvector has non-finite entries".into()));
    }
    let ratio = ratio_estimate(v);
    let z0 = ratio.unwrap_or_default();
    let (basis, shift) = scaled_basis(z0, d);
    let (scaled, residual) = project_scale(v, &basis, v_norm2);
    let (z, scale, residual) = if ratio.is_none() || residual > REFINE_THRESHOLD {
        let (zr, cr, rr) = refine(v, z0, v_norm2);
        if rr < residual || ratio.is_none() {
            (zr, cr, rr)
        } else {
            (z0, scaled * (-shift).exp(), residual)
        }
    } else {
        (z0, scaled * (-shift).exp(), residual)
    };
    Ok(ExpFit {
        nu: z / dt,
        scale,
        residual,
    })
}

/// One exponential mode of the delay operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub eigenvalue: Complex64,
    pub eigenvector: Vec<Complex64>,
    pub nu: Complex64,
    /// Fitted scale `b` of the exponential.
    pub scale: Complex64,
    pub fit_residual: f64,
    /// `1/|Re nu|`, or `+inf` below the decay floor.
    pub time_constant: f64,
    /// Sign of `Re nu`: -1 when the eigenvector decays toward older
    /// samples, +1 when it grows, 0 below the decay floor.
    pub decay_sign: i8,
    /// False when `fit_residual` exceeds the configured threshold.
    pub well_fit: bool,
}

impl Mode {
    pub fn has_finite_time_constant(&self) -> bool {
        self.time_constant.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeOptions {
    /// Modes whose fit residual exceeds this are flagged (not dropped).
    pub residual_threshold: f64,
}

impl Default for ModeOptions {
    fn default() -> Self {
        Self {
            residual_threshold: REFINE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSet {
    pub modes: Vec<Mode>,
    pub d: usize,
    pub dt: f64,
    pub n_samples: usize,
    pub min_pair_distance: f64,
}

impl ModeSet {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// `|Re nu|` below this maps to an infinite time constant.
    pub fn decay_floor(&self) -> f64 {
        decay_floor(self.n_samples, self.dt)
    }

    pub fn non_distinct(&self) -> bool {
        self.min_pair_distance < DISTINCT_TOL
    }

    pub fn time_constants(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.time_constant).collect()
    }
}

pub fn decay_floor(n_samples: usize, dt: f64) -> f64 {
    1.0 / (100.0 * n_samples as f64 * dt)
}

fn mode_from_pair(lambda: Complex64, vector: Vec<Complex64>, dt: f64, floor: f64, opts: &ModeOptions) -> Result<Mode> {
    let fit = if vector.len() >= 2 {
        fit_exponential(&vector, dt)?
    } else {
        // d = 1: the only consistent exponent is the eigenvalue's own
        ExpFit {
            nu: lambda.ln() / dt,
            scale: vector[0],
            residual: 0.0,
        }
    };
    let sigma = fit.nu.re;
    let (time_constant, decay_sign) = if sigma.abs() >= floor && sigma.is_finite() {
        (1.0 / sigma.abs(), if sigma < 0.0 { -1 } else { 1 })
    } else {
        (f64::INFINITY, 0)
    };
    Ok(Mode {
        eigenvalue: lambda,
        eigenvector: vector,
        nu: fit.nu,
        scale: fit.scale,
        fit_residual: fit.residual,
        time_constant,
        decay_sign,
        well_fit: fit.residual <= opts.residual_threshold,
    })
}

/// Eigenpairs plus per-mode exponential fits for an arbitrary operator.
pub fn build_mode_set_for(a_tilde: &Mat<f64>, dt: f64, n_samples: usize, opts: &ModeOptions) -> Result<ModeSet> {
    let pairs = eigen_of(a_tilde)?;
    let floor = decay_floor(n_samples, dt);
    let min_pair_distance = pairs.min_pair_distance;
    let modes = pairs
        .values
        .into_iter()
        .zip(pairs.vectors)
        .map(|(l, v)| mode_from_pair(l, v, dt, floor, opts))
        .collect::<Result<Vec<_>>>()?;
    let poor = modes.iter().filter(|m| !m.well_fit).count();
    if poor > 0 {
        log::warn!(
            "{poor} of {} modes have exponential-fit residual above {:.1e}",
            modes.len(),
            opts.residual_threshold
        );
    }
    Ok(ModeSet {
        modes,
        d: a_tilde.nrows(),
        dt,
        n_samples,
        min_pair_distance,
    })
}

pub fn build_mode_set(model: &IdentifiedModel) -> Result<ModeSet> {
    build_mode_set_with(model, &ModeOptions::default())
}

pub fn build_mode_set_with(model: &IdentifiedModel, opts: &ModeOptions) -> Result<ModeSet> {
    build_mode_set_for(&model.a_tilde, model.dt, model.n_samples, opts)
}

/// How the per-mode amplitude is computed from a subsequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmplitudeEstimator {
    /// `Σ_k y[n-k] exp(nu k dt)`: projection onto the fitted exponential.
    #[default]
    Exponential,
    /// `x_d[n]^T V_i`: projection onto the raw eigenvector.
    EigenvectorProjection,
}

impl std::str::FromStr for AmplitudeEstimator {
    type Err = DefError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exponential" | "exp" => Ok(Self::Exponential),
            "projection" | "eigenvector" => Ok(Self::EigenvectorProjection),
            _ => Err(DefError::InvalidArgument(format!(
                "unknown amplitude estimator {s:?} (expected exponential or projection)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    /// Index into the mode set.
    pub mode: usize,
    pub time_constant: f64,
    pub amplitude: Complex64,
    pub magnitude: f64,
}

/// Per-mode amplitudes at one time index, sorted by time constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeSpectrum {
    pub time_index: usize,
    pub d: usize,
    pub estimator: AmplitudeEstimator,
    /// Finite-time-constant modes only.
    pub entries: Vec<SpectrumEntry>,
    /// Modes left out (infinite time constant or non-finite amplitude).
    pub excluded: usize,
}

impl AmplitudeSpectrum {
    /// Entry with the largest magnitude (first on ties).
    pub fn argmax(&self) -> Option<&SpectrumEntry> {
        self.entries
            .iter()
            .fold(None, |best: Option<&SpectrumEntry>, e| match best {
                Some(b) if b.magnitude >= e.magnitude => Some(b),
                _ => Some(e),
            })
    }
}

fn amplitude_of(window: impl Fn(usize) -> f64, mode: &Mode, d: usize, dt: f64, estimator: AmplitudeEstimator) -> Complex64 {
    match estimator {
        AmplitudeEstimator::Exponential => (0..d)
            .map(|k| window(k) * (mode.nu * (k as f64 * dt)).exp())
            .sum(),
        AmplitudeEstimator::EigenvectorProjection => {
            mode.eigenvector.iter().enumerate().map(|(k, v)| window(k) * v).sum()
        }
    }
}

fn spectrum_from(modes: &ModeSet, n: usize, estimator: AmplitudeEstimator, window: impl Fn(usize) -> f64) -> AmplitudeSpectrum {
    let d = modes.d;
    let mut entries = Vec::with_capacity(modes.len());
    let mut excluded = 0;
    for (i, mode) in modes.modes.iter().enumerate() {
        if !mode.has_finite_time_constant() {
            excluded += 1;
            continue;
        }
        let amplitude = amplitude_of(&window, mode, d, modes.dt, estimator);
        let magnitude = amplitude.norm();
        if !magnitude.is_finite() {
            log::warn!("mode {i} (T={}) has a non-finite amplitude at n={n}; excluded", mode.time_constant);
            excluded += 1;
            continue;
        }
        entries.push(SpectrumEntry {
            mode: i,
            time_constant: mode.time_constant,
            amplitude,
            magnitude,
        });
    }
    entries.sort_by(|a, b| a.time_constant.total_cmp(&b.time_constant).then(a.mode.cmp(&b.mode)));
    AmplitudeSpectrum {
        time_index: n,
        d,
        estimator,
        entries,
        excluded,
    }
}

/// Amplitude of every finite-time-constant mode in the subsequence ending at `n`.
pub fn amplitude_at(series: &TimeSeries, modes: &ModeSet, n: usize, estimator: AmplitudeEstimator) -> Result<AmplitudeSpectrum> {
    let d = modes.d;
    if n + 1 < d || n >= series.len() {
        return Err(DefError::OutOfRange(format!(
            "amplitude at n={n} needs d-1 <= n < N (d={d}, N={})",
            series.len()
        )));
    }
    let y = series.samples();
    Ok(spectrum_from(modes, n, estimator, |k| y[n - k]))
}

/// Forced-model amplitudes: the input contribution `B̃ u_d[n]` is removed
/// from `x_d[n+1]` before projecting.
pub fn amplitude_forced(
    series: &TimeSeries,
    input: &InputSeries,
    model: &ForcedModel,
    modes: &ModeSet,
    n: usize,
    estimator: AmplitudeEstimator,
) -> Result<AmplitudeSpectrum> {
    let d = modes.d;
    if model.d != d {
        return Err(DefError::Shape(format!("forced model order {} differs from mode set order {d}", model.d)));
    }
    if input.len() != series.len() || input.n_channels() != model.m {
        return Err(DefError::Shape(format!(
            "input ({} samples, {} channels) misaligned with series ({} samples) / model ({} channels)",
            input.len(),
            input.n_channels(),
            series.len(),
            model.m
        )));
    }
    if n + 1 < d || n + 1 >= series.len() {
        return Err(DefError::OutOfRange(format!(
            "forced amplitude at n={n} needs d-1 <= n and n+1 < N (d={d}, N={})",
            series.len()
        )));
    }
    let y = series.samples();
    let u = crate::hankel::input_delay_vector(input, n, d)?;
    let z: Vec<f64> = (0..d)
        .map(|r| {
            let bu: f64 = (0..u.len()).map(|c| model.b_tilde[(r, c)] * u[c]).sum();
            y[n + 1 - r] - bu
        })
        .collect();
    Ok(spectrum_from(modes, n, estimator, |k| z[k]))
}

/// Settings of an end-to-end run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub candidates: Vec<usize>,
    #[serde(rename = "L")]
    pub l_horizon: usize,
    pub sigma2: f64,
    pub query_indices: Vec<usize>,
    pub estimator: AmplitudeEstimator,
    pub mode_options: ModeOptions,
}

/// Operator summary carried in analysis output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub d: usize,
    pub fit_error: f64,
    pub rank: usize,
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefAnalysis {
    pub selection: OrderSelection,
    pub model: ModelSummary,
    pub modes: ModeSet,
    pub spectra: Vec<AmplitudeSpectrum>,
}

/// Select the order, identify, decompose, and evaluate spectra at every
/// query index.
pub fn analyze(series: &TimeSeries, config: &AnalysisConfig) -> Result<DefAnalysis> {
    let selection = linear_model::select_order(series, &config.candidates, config.l_horizon, config.sigma2)
        .stage("order selection")?;
    let model = linear_model::identify_series(series, selection.d_star).stage("identification")?;
    let modes = build_mode_set_with(&model, &config.mode_options).stage("mode decomposition")?;
    let spectra = config
        .query_indices
        .iter()
        .map(|&n| amplitude_at(series, &modes, n, config.estimator))
        .collect::<Result<Vec<_>>>()
        .stage("amplitude evaluation")?;
    if model.rank_deficient() {
        log::warn!(
            "identified operator is rank-deficient (rank {} of {}); spectra may be degenerate",
            model.rank,
            model.d
        );
    }
    Ok(DefAnalysis {
        selection,
        model: ModelSummary {
            d: model.d,
            fit_error: model.fit_error,
            rank: model.rank,
            rank_deficient: model.rank_deficient(),
        },
        modes,
        spectra,
    })
}

fn finite_or_null(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::json!(x)
    } else {
        serde_json::Value::Null
    }
}

impl Artifact for AmplitudeSpectrum {
    fn kind(&self) -> &'static str {
        "amplitude spectrum"
    }

    fn csv_table(&self) -> Option<(Vec<&'static str>, Vec<Vec<String>>)> {
        let rows = self
            .entries
            .iter()
            .map(|e| {
                vec![
                    fmt_real(e.time_constant),
                    fmt_real(e.magnitude),
                    fmt_real(e.amplitude.re),
                    fmt_real(e.amplitude.im),
                ]
            })
            .collect();
        Some((vec!["time_constant", "amplitude_abs", "amplitude_re", "amplitude_im"], rows))
    }

    fn json_payload(&self) -> serde_json::Value {
        serde_json::json!({
            "n": self.time_index,
            "d": self.d,
            "estimator": self.estimator,
            "excluded": self.excluded,
            "entries": self.entries.iter().map(|e| serde_json::json!({
                "mode": e.mode,
                "time_constant": e.time_constant,
                "amplitude_abs": e.magnitude,
                "amplitude_re": e.amplitude.re,
                "amplitude_im": e.amplitude.im,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Read a spectrum CSV; mode indices become row numbers.
pub fn read_spectrum(path: impl AsRef<Path>, time_index: usize) -> Result<AmplitudeSpectrum> {
    let path = path.as_ref();
    let (header, mut cols) = series_io::read_table(path)?;
    let t = series_io::take_column(path, &header, &mut cols, "time_constant")?;
    let re = series_io::take_column(path, &header, &mut cols, "amplitude_re")?;
    let im = series_io::take_column(path, &header, &mut cols, "amplitude_im")?;
    let entries = t
        .into_iter()
        .zip(re.into_iter().zip(im))
        .enumerate()
        .map(|(i, (t, (re, im)))| {
            let amplitude = Complex64::new(re, im);
            SpectrumEntry {
                mode: i,
                time_constant: t,
                amplitude,
                magnitude: amplitude.norm(),
            }
        })
        .collect();
    Ok(AmplitudeSpectrum {
        time_index,
        d: 0,
        estimator: AmplitudeEstimator::default(),
        entries,
        excluded: 0,
    })
}

impl Artifact for ModeSet {
    fn kind(&self) -> &'static str {
        "mode set"
    }

    fn csv_table(&self) -> Option<(Vec<&'static str>, Vec<Vec<String>>)> {
        let rows = self
            .modes
            .iter()
            .enumerate()
            .map(|(i, m)| {
                vec![
                    i.to_string(),
                    fmt_real(m.eigenvalue.re),
                    fmt_real(m.eigenvalue.im),
                    fmt_real(m.nu.re),
                    fmt_real(m.nu.im),
                    fmt_real(m.time_constant),
                    fmt_real(m.fit_residual),
                ]
            })
            .collect();
        Some((
            vec!["mode", "re_lambda", "im_lambda", "re_nu", "im_nu", "time_constant", "fit_residual"],
            rows,
        ))
    }

    fn json_payload(&self) -> serde_json::Value {
        serde_json::json!({
            "d": self.d,
            "dt": self.dt,
            "min_pair_distance": finite_or_null(self.min_pair_distance),
            "modes": self.modes.iter().map(|m| serde_json::json!({
                "re_lambda": m.eigenvalue.re,
                "im_lambda": m.eigenvalue.im,
                "re_nu": m.nu.re,
                "im_nu": m.nu.im,
                "time_constant": finite_or_null(m.time_constant),
                "decay_sign": m.decay_sign,
                "fit_residual": m.fit_residual,
                "well_fit": m.well_fit,
            })).collect::<Vec<_>>(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_model::identify_series;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn model_from(a: Mat<f64>, n_samples: usize) -> IdentifiedModel {
        let d = a.nrows();
        IdentifiedModel {
            a_tilde: a,
            d,
            dt: 1.0,
            fit_error: 0.0,
            rank: d,
            n_samples,
        }
    }

    fn pure_exp(nu: Complex64, d: usize, dt: f64) -> Vec<Complex64> {
        (0..d).map(|k| (nu * ((d - 1 - k) as f64 * dt)).exp()).collect()
    }

    #[test]
    fn diagonal_operator() {
        let a = Mat::from_fn(2, 2, |i, j| if i == j { [0.5, 0.9][i] } else { 0.0 });
        let p = eigendecompose(&model_from(a, 100)).unwrap();
        assert!((p.values[0] - c(0.9, 0.0)).norm() < 1e-14);
        assert!((p.values[1] - c(0.5, 0.0)).norm() < 1e-14);
        assert!((p.vectors[0][1] - c(1.0, 0.0)).norm() < 1e-14 && p.vectors[0][0].norm() < 1e-14);
        assert!((p.vectors[1][0] - c(1.0, 0.0)).norm() < 1e-14 && p.vectors[1][1].norm() < 1e-14);
    }

    #[test]
    fn rotation_spectrum() {
        let th: f64 = 0.1;
        let a = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) | (1, 1) => th.cos(),
            (0, 1) => -th.sin(),
            _ => th.sin(),
        });
        let p = eigendecompose(&model_from(a, 100)).unwrap();
        for v in &p.values {
            assert!((v.norm() - 1.0).abs() < 1e-14);
            assert!((v.arg().abs() - 0.1).abs() < 1e-14);
        }
        assert!((p.values[0] - p.values[1].conj()).norm() < 1e-14);
    }

    #[test]
    fn eigen_residual_and_normalization() {
        let a = Mat::from_fn(6, 6, |i, j| ((i * 7 + j * 3) as f64).sin() * 0.4);
        let p = eigendecompose(&model_from(a.clone(), 100)).unwrap();
        let anorm = a.norm_l2();
        for (l, v) in p.values.iter().zip(&p.vectors) {
            let norm: f64 = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
            let big = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
            let lead = v.iter().find(|x| x.norm() == big).unwrap();
            assert!(lead.im == 0.0 && lead.re > 0.0);
            for r in 0..6 {
                let av: Complex64 = (0..6).map(|k| v[k] * a[(r, k)]).sum();
                assert!((av - l * v[r]).norm() <= 1e-8 * anorm);
            }
        }
        // sorted by modulus, descending
        for w in p.values.windows(2) {
            assert!(w[0].norm() >= w[1].norm());
        }
    }

    #[test]
    fn fit_pure_exponential() {
        let nu0 = c(-0.01, 0.3);
        let f = fit_exponential(&pure_exp(nu0, 50, 1.0), 1.0).unwrap();
        assert!((f.nu - nu0).norm() < 1e-10, "{:?}", f.nu);
        assert!(f.residual <= 1e-16);
        assert!((f.scale - c(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn fit_constant_vector() {
        let f = fit_exponential(&vec![c(1.0, 0.0); 30], 1.0).unwrap();
        assert!(f.nu.norm() < 1e-15);
        assert!((f.scale - c(1.0, 0.0)).norm() < 1e-15);
        assert!(f.residual <= 1e-16);
    }

    #[test]
    fn fit_scale_equivariance() {
        let nu0 = c(-0.02, 0.7);
        let b0 = Complex64::from_polar(2.0, PI / 4.0);
        let v: Vec<Complex64> = pure_exp(nu0, 40, 0.5).into_iter().map(|x| x * b0).collect();
        let f = fit_exponential(&v, 0.5).unwrap();
        assert!((f.scale - b0).norm() < 1e-10);
        assert!((f.nu - nu0).norm() < 1e-10);
    }

    #[test]
    fn fit_errors_and_fallback() {
        assert!(fit_exponential(&[c(0.0, 0.0); 5], 1.0).is_err());
        assert!(fit_exponential(&[c(1.0, 0.0)], 1.0).is_err());
        // alternating zeros defeat the ratio path; the regression fallback runs
        let v = vec![c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)];
        let f = fit_exponential(&v, 1.0).unwrap();
        assert!(f.residual.is_finite());
    }

    #[test]
    fn refinement_improves_noisy_fit() {
        let nu0 = c(-0.05, 0.4);
        let mut v = pure_exp(nu0, 60, 1.0);
        // a perturbation concentrated in the tail inflates the ratio residual
        for (k, x) in v.iter_mut().enumerate().skip(50) {
            *x += c(0.05 * ((k * 13 % 7) as f64 - 3.0), 0.02);
        }
        let f = fit_exponential(&v, 1.0).unwrap();
        let (basis, shift) = scaled_basis(ratio_estimate(&v).unwrap(), 60);
        let vn: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        let (_, ratio_res) = project_scale(&v, &basis, vn);
        let _ = shift;
        assert!(f.residual <= ratio_res + 1e-15);
    }

    #[test]
    fn near_nyquist_phase() {
        let nu0 = c(-0.001, PI - 1e-3);
        let f = fit_exponential(&pure_exp(nu0, 64, 1.0), 1.0).unwrap();
        assert!((f.nu - nu0).norm() < 1e-9, "{:?}", f.nu);
    }

    #[test]
    fn geometric_mode_time_constant() {
        let s = TimeSeries::new((0..60).map(|i| 0.9f64.powi(i)).collect(), 1.0).unwrap();
        let m = identify_series(&s, 2).unwrap();
        let set = build_mode_set(&m).unwrap();
        let lead = &set.modes[0];
        assert!((lead.eigenvalue.re - 0.9).abs() < 1e-10 && lead.eigenvalue.im.abs() < 1e-12);
        assert!((lead.nu.re - 0.9f64.ln()).abs() < 1e-6 && lead.nu.im.abs() < 1e-9);
        assert!((lead.time_constant - 1.0 / 0.9f64.ln().abs()).abs() < 1e-6);
        assert!((lead.time_constant - 9.49).abs() < 0.01);
    }

    #[test]
    fn rotation_has_infinite_time_constant() {
        let th: f64 = 0.2;
        let a = Mat::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) | (1, 1) => th.cos(),
            (0, 1) => -th.sin(),
            _ => th.sin(),
        });
        let set = build_mode_set(&model_from(a, 500)).unwrap();
        assert!(set.modes.iter().all(|m| m.time_constant.is_infinite()));
        let s = TimeSeries::new((0..500).map(|i| (i as f64 * 0.2).cos()).collect(), 1.0).unwrap();
        let spec = amplitude_at(&s, &set, 100, AmplitudeEstimator::Exponential).unwrap();
        assert!(spec.entries.is_empty());
        assert_eq!(spec.excluded, 2);
    }

    #[test]
    fn conjugate_modes_are_conjugate() {
        let y: Vec<f64> = (0..300)
            .map(|i| {
                let t = i as f64;
                0.99f64.powf(t) * (0.3 * t).cos() + 0.97f64.powf(t) * (0.8 * t).sin()
            })
            .collect();
        let s = TimeSeries::new(y, 1.0).unwrap();
        let set = build_mode_set(&identify_series(&s, 4).unwrap()).unwrap();
        let vals: Vec<Complex64> = set.modes.iter().map(|m| m.eigenvalue).collect();
        for m in &set.modes {
            assert!(vals.iter().any(|v| (v - m.eigenvalue.conj()).norm() < 1e-10));
            if m.eigenvalue.im.abs() > 1e-8 {
                let partner = set
                    .modes
                    .iter()
                    .min_by(|a, b| {
                        (a.eigenvalue - m.eigenvalue.conj())
                            .norm()
                            .total_cmp(&(b.eigenvalue - m.eigenvalue.conj()).norm())
                    })
                    .unwrap();
                assert!((partner.nu - m.nu.conj()).norm() < 1e-8);
            }
        }
    }

    fn two_mode_set(nu0: Complex64, d: usize, n_samples: usize) -> ModeSet {
        let mk = |nu: Complex64| Mode {
            eigenvalue: nu.exp(),
            eigenvector: pure_exp(nu, d, 1.0),
            nu,
            scale: c(1.0, 0.0),
            fit_residual: 0.0,
            time_constant: 1.0 / nu.re.abs(),
            decay_sign: -1,
            well_fit: true,
        };
        ModeSet {
            modes: vec![mk(nu0), mk(nu0.conj()), mk(c(-0.05, 1.3)), mk(c(-0.05, -1.3)), mk(c(-0.2, 0.0))],
            d,
            dt: 1.0,
            n_samples,
            min_pair_distance: 0.1,
        }
    }

    #[test]
    fn zero_signal_zero_amplitudes() {
        let set = two_mode_set(c(-0.01, 0.2), 20, 100);
        let s = TimeSeries::new(vec![0.0; 100], 1.0).unwrap();
        for est in [AmplitudeEstimator::Exponential, AmplitudeEstimator::EigenvectorProjection] {
            let spec = amplitude_at(&s, &set, 50, est).unwrap();
            assert!(spec.entries.iter().all(|e| e.magnitude == 0.0));
        }
        assert!(amplitude_at(&s, &set, 18, AmplitudeEstimator::Exponential).is_err());
        assert!(amplitude_at(&s, &set, 100, AmplitudeEstimator::Exponential).is_err());
    }

    #[test]
    fn matching_mode_dominates() {
        // y[n] = Re[exp(nu0 n)]; a real signal gives conjugate amplitudes on
        // the matching pair, so the comparison is against the other modes
        let nu0 = c(-0.01, 0.2);
        let d = 200;
        let set = two_mode_set(nu0, d, 400);
        let y: Vec<f64> = (0..400).map(|t| (nu0 * t as f64).exp().re).collect();
        let s = TimeSeries::new(y, 1.0).unwrap();
        let spec = amplitude_at(&s, &set, 300, AmplitudeEstimator::Exponential).unwrap();
        let top = spec.argmax().unwrap();
        assert!(top.mode == 0 || top.mode == 1);
        let pair: Vec<_> = spec.entries.iter().filter(|e| e.mode < 2).collect();
        assert!((pair[0].amplitude - pair[1].amplitude.conj()).norm() <= 1e-12 * top.magnitude);
        let unrelated = spec
            .entries
            .iter()
            .filter(|e| e.mode >= 2)
            .map(|e| e.magnitude)
            .fold(0.0, f64::max);
        assert!(top.magnitude >= 10.0 * unrelated, "{} vs {unrelated}", top.magnitude);
    }

    #[test]
    fn argmax_survives_noise() {
        let nu0 = c(-0.01, 0.2);
        let d = 60;
        let set = two_mode_set(nu0, d, 400);
        let n = 300;
        let clean: Vec<f64> = (0..400)
            .map(|t| if t <= n { (-nu0 * (n - t) as f64).exp().re } else { 0.0 })
            .collect();
        let power = clean[n + 1 - d..=n].iter().map(|v| v * v).sum::<f64>() / d as f64;
        // 40 dB SNR
        let var = power * 1e-4;
        for seed in 0..10 {
            let s = series_io::add_gaussian_noise(&TimeSeries::new(clean.clone(), 1.0).unwrap(), var, seed).unwrap();
            let spec = amplitude_at(&s, &set, n, AmplitudeEstimator::Exponential).unwrap();
            let top = spec.argmax().unwrap();
            assert!(top.mode == 0 || top.mode == 1, "seed {seed}: mode {}", top.mode);
        }
    }

    #[test]
    fn spectrum_sorted_by_time_constant() {
        let set = two_mode_set(c(-0.01, 0.2), 20, 100);
        let s = TimeSeries::new((0..100).map(|i| (i as f64).sin()).collect(), 1.0).unwrap();
        let spec = amplitude_at(&s, &set, 60, AmplitudeEstimator::Exponential).unwrap();
        for w in spec.entries.windows(2) {
            assert!(w[0].time_constant <= w[1].time_constant);
        }
    }

    fn pwc(n: usize) -> Vec<f64> {
        (0..n).map(|i| [0.0, 1.0, -0.4, 0.8][(i / 13) % 4] + if i % 7 == 0 { 0.3 } else { 0.0 }).collect()
    }

    #[test]
    fn forced_zero_input_matches_projection() {
        let y: Vec<f64> = (0..200).map(|i| (i as f64 * 0.17).sin() + 0.5 * (i as f64 * 0.05).cos()).collect();
        let s = TimeSeries::new(y, 1.0).unwrap();
        let input = InputSeries::single(vec![0.0; 200], 1.0).unwrap();
        let fm = linear_model::identify_forced_series(&s, &input, 4).unwrap();
        let modes = build_mode_set(&fm.autonomous()).unwrap();
        let forced = amplitude_forced(&s, &input, &fm, &modes, 100, AmplitudeEstimator::EigenvectorProjection).unwrap();
        let plain = amplitude_at(&s, &modes, 101, AmplitudeEstimator::EigenvectorProjection).unwrap();
        assert_eq!(forced.entries.len(), plain.entries.len());
        for (a, b) in forced.entries.iter().zip(&plain.entries) {
            assert!((a.amplitude - b.amplitude).norm() <= 1e-12 * b.magnitude.max(1.0));
        }
    }

    #[test]
    fn forced_amplitude_removes_input() {
        // x[n+1] = 0.95 x[n] + 0.5 u[n]; the forced amplitude of x_d[n+1]
        // equals the unforced amplitude of the homogeneous step Ã x_d[n]
        let u = pwc(400);
        let mut x = vec![0.0; 400];
        x[0] = 1.0;
        for n in 0..399 {
            x[n + 1] = 0.95 * x[n] + 0.5 * u[n];
        }
        let s = TimeSeries::new(x.clone(), 1.0).unwrap();
        let input = InputSeries::single(u, 1.0).unwrap();
        let fm = linear_model::identify_forced_series(&s, &input, 1).unwrap();
        let modes = build_mode_set_for(&fm.a_tilde, 1.0, 400, &ModeOptions::default()).unwrap();
        let n = 250;
        let forced = amplitude_forced(&s, &input, &fm, &modes, n, AmplitudeEstimator::EigenvectorProjection).unwrap();
        let homogeneous = TimeSeries::new(vec![0.0, 0.95 * x[n]], 1.0).unwrap();
        let plain = amplitude_at(&homogeneous, &modes, 1, AmplitudeEstimator::EigenvectorProjection).unwrap();
        assert!((forced.entries[0].amplitude - plain.entries[0].amplitude).norm() < 1e-10);
    }

    #[test]
    fn forced_constant_input_matches_demeaned() {
        // on a single plateau a constant input is an intercept; the forced
        // spectrum peaks where the unforced spectrum of the demeaned data does
        let y: Vec<f64> = (0..400)
            .map(|i| {
                let t = i as f64;
                2.0 + 0.995f64.powf(t) * (0.1 * t).cos() + 0.6 * 0.98f64.powf(t) * (0.45 * t).sin()
            })
            .collect();
        let s = TimeSeries::new(y, 1.0).unwrap();
        let input = InputSeries::single(vec![1.0; 400], 1.0).unwrap();
        let d = 4;
        let fm = linear_model::identify_forced_series(&s, &input, d).unwrap();
        let fmodes = build_mode_set(&fm.autonomous()).unwrap();
        let demeaned = TimeSeries::new(s.samples().iter().map(|v| v - 2.0).collect(), 1.0).unwrap();
        let um = identify_series(&demeaned, d).unwrap();
        let umodes = build_mode_set(&um).unwrap();
        let n = 200;
        let f = amplitude_forced(&s, &input, &fm, &fmodes, n, AmplitudeEstimator::Exponential).unwrap();
        let p = amplitude_at(&demeaned, &umodes, n + 1, AmplitudeEstimator::Exponential).unwrap();
        let (ft, pt) = (f.argmax().unwrap().time_constant, p.argmax().unwrap().time_constant);
        assert!((ft - pt).abs() <= 1e-6 * pt, "{ft} vs {pt}");
    }

    #[test]
    fn analyze_constant_series_is_degenerate() {
        let s = TimeSeries::new(vec![1.0; 200], 1.0).unwrap();
        let cfg = AnalysisConfig {
            candidates: vec![5],
            l_horizon: 5,
            sigma2: 1e-6,
            query_indices: vec![100],
            estimator: AmplitudeEstimator::Exponential,
            mode_options: ModeOptions::default(),
        };
        let out = analyze(&s, &cfg).unwrap();
        assert!(out.model.rank_deficient);
        assert!(out.spectra[0].entries.iter().all(|e| e.time_constant.is_finite()));
        // the constant mode (λ = 1) has an infinite time constant
        assert!(out.modes.modes.iter().any(|m| m.time_constant.is_infinite()));
    }

    #[test]
    fn analyze_is_deterministic_and_annotated() {
        let y: Vec<f64> = (0..300).map(|i| ((i as f64) * 0.05).sin() * (1.0 + 0.001 * i as f64)).collect();
        let s = TimeSeries::new(y, 1.0).unwrap();
        let cfg = AnalysisConfig {
            candidates: vec![10, 20, 30],
            l_horizon: 5,
            sigma2: 1e-6,
            query_indices: vec![100, 250],
            estimator: AmplitudeEstimator::Exponential,
            mode_options: ModeOptions::default(),
        };
        let a = serde_json::to_string(&analyze(&s, &cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&analyze(&s, &cfg).unwrap()).unwrap();
        assert_eq!(a, b);

        let bad = AnalysisConfig { query_indices: vec![5], ..cfg };
        let err = analyze(&s, &bad).unwrap_err();
        assert!(err.to_string().starts_with("amplitude evaluation"), "{err}");
    }

    #[test]
    fn spectrum_csv_roundtrip() {
        let set = two_mode_set(c(-0.01, 0.2), 20, 100);
        let s = TimeSeries::new((0..100).map(|i| (i as f64 * 0.3).cos()).collect(), 1.0).unwrap();
        let spec = amplitude_at(&s, &set, 60, AmplitudeEstimator::Exponential).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("spec.csv");
        series_io::write_result(&spec, &Default::default(), &p, series_io::Format::Csv).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("time_constant,amplitude_abs,amplitude_re,amplitude_im\n"));
        let back = read_spectrum(&p, 60).unwrap();
        for (a, b) in spec.entries.iter().zip(&back.entries) {
            assert_eq!(a.time_constant, b.time_constant);
            assert_eq!(a.amplitude, b.amplitude);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn exponential_fit_recovers_nu(sigma in -0.1f64..0.1, omega in -3.0f64..3.0, d in 20usize..200, scale_re in -3.0f64..3.0, scale_im in -3.0f64..3.0) {
            let nu = c(sigma, omega);
            let b = c(scale_re, scale_im);
            prop_assume!(b.norm() > 1e-3);
            let v: Vec<Complex64> = pure_exp(nu, d, 1.0).into_iter().map(|x| x * b).collect();
            let f = fit_exponential(&v, 1.0).unwrap();
            prop_assert!((f.nu - nu).norm() <= 1e-8 * nu.norm().max(1e-3), "{:?} vs {:?}", f.nu, nu);
        }

        #[test]
        fn amplitude_is_linear(
            y1 in proptest::collection::vec(-1.0f64..1.0, 40),
            y2 in proptest::collection::vec(-1.0f64..1.0, 40),
            alpha in -2.0f64..2.0,
            beta in -2.0f64..2.0,
        ) {
            let set = two_mode_set(c(-0.01, 0.2), 20, 40);
            let mix: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| alpha * a + beta * b).collect();
            let s1 = TimeSeries::new(y1, 1.0).unwrap();
            let s2 = TimeSeries::new(y2, 1.0).unwrap();
            let sm = TimeSeries::new(mix, 1.0).unwrap();
            for est in [AmplitudeEstimator::Exponential, AmplitudeEstimator::EigenvectorProjection] {
                let a1 = amplitude_at(&s1, &set, 30, est).unwrap();
                let a2 = amplitude_at(&s2, &set, 30, est).unwrap();
                let am = amplitude_at(&sm, &set, 30, est).unwrap();
                for ((e1, e2), em) in a1.entries.iter().zip(&a2.entries).zip(&am.entries) {
                    let want = e1.amplitude * alpha + e2.amplitude * beta;
                    let scale = (e1.magnitude * alpha.abs() + e2.magnitude * beta.abs()).max(1e-12);
                    prop_assert!((em.amplitude - want).norm() <= 1e-10 * scale);
                }
            }
        }
    }
}
