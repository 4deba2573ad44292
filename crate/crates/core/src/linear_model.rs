//! Least-squares identification of the discrete delay operator, L-step-ahead
//! AIC, and delay-order selection (plus the input-lag variant).
//!
//! `Y = A X` is solved as the transposed least-squares problem
//! `X^T A^T = Y^T` with a Householder QR. When the QR diagonal reveals rank
//! deficiency (or the QR solve is non-finite) the solve falls back to a
//! truncated SVD, discarding singular values below
//! `max_dim * eps * sigma_max`, and returns the minimum-norm solution.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use faer::linalg::solvers::SolveLstsq;
use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{DefError, Result};
use crate::hankel::{self, DelayMatrices, InputDelayMatrices};
use crate::series_io::{self, fmt_real, Artifact, InputSeries, TimeSeries};

/// Default prediction horizon.
pub const DEFAULT_HORIZON: usize = 5;

/// Identified one-step operator `Ã_d`.
#[derive(Debug, Clone)]
pub struct IdentifiedModel {
    pub a_tilde: Mat<f64>,
    pub d: usize,
    pub dt: f64,
    /// Squared Frobenius norm of the one-step residual `Y - Ã X`.
    pub fit_error: f64,
    /// Numerical rank of the regressor.
    pub rank: usize,
    /// Number of samples of the series the model came from.
    pub n_samples: usize,
}

impl IdentifiedModel {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.d
    }
}

/// Identified forced operator pair `(Ã_d, B̃_d)`.
#[derive(Debug, Clone)]
pub struct ForcedModel {
    pub a_tilde: Mat<f64>,
    /// `d x dm` input operator.
    pub b_tilde: Mat<f64>,
    pub d: usize,
    pub m: usize,
    pub dt: f64,
    pub fit_error: f64,
    pub rank: usize,
    pub n_samples: usize,
}

impl ForcedModel {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.d * (1 + self.m)
    }

    /// The autonomous part as an [`IdentifiedModel`].
    pub fn autonomous(&self) -> IdentifiedModel {
        IdentifiedModel {
            a_tilde: self.a_tilde.clone(),
            d: self.d,
            dt: self.dt,
            fit_error: self.fit_error,
            rank: self.rank.min(self.d),
            n_samples: self.n_samples,
        }
    }
}

pub(crate) struct LstsqSolution {
    /// `p x k` coefficients minimizing `||a * coef - b||_F`.
    pub coef: Mat<f64>,
    pub rank: usize,
}

/// Least squares `a * coef ≈ b` for tall `a` (`m x p`).
pub(crate) fn solve_lstsq(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<LstsqSolution> {
    let (m, p) = (a.nrows(), a.ncols());
    if b.nrows() != m {
        return Err(DefError::Shape(format!(
            "regressor has {m} rows, target has {}",
            b.nrows()
        )));
    }
    if m >= p {
        let qr = a.qr();
        let r = qr.thin_R();
        let diag_max = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        let tol = m.max(p) as f64 * f64::EPSILON * diag_max;
        let resolved = diag_max > 0.0 && (0..p).all(|i| r[(i, i)].abs() > tol);
        if resolved {
            let coef = qr.solve_lstsq(b);
            if coef.col_iter().all(|c| c.iter().all(|v| v.is_finite())) {
                return Ok(LstsqSolution { coef, rank: p });
            }
        }
    }
    min_norm_lstsq(a, b)
}

fn min_norm_lstsq(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<LstsqSolution> {
    let (m, p) = (a.nrows(), a.ncols());
    let svd = a
        .thin_svd()
        .map_err(|e| DefError::Numerical(format!("SVD did not converge: {e:?}")))?;
    let s: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    let s_max = s.first().copied().unwrap_or(0.0);
    let tol = m.max(p) as f64 * f64::EPSILON * s_max;
    let rank = s.iter().take_while(|&&v| v > tol && v > 0.0).count();
    let u = svd.U().get(.., ..rank);
    let v = svd.V().get(.., ..rank);
    let mut utb = u.transpose() * b;
    for (i, &si) in s.iter().take(rank).enumerate() {
        for j in 0..utb.ncols() {
            utb[(i, j)] /= si;
        }
    }
    let coef = v * &utb;
    Ok(LstsqSolution { coef, rank })
}

fn frobenius_sq_residual(a: MatRef<'_, f64>, coef: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    let pred = a * coef;
    let mut acc = 0.0;
    for j in 0..b.ncols() {
        for i in 0..b.nrows() {
            let e = b[(i, j)] - pred[(i, j)];
            acc += e * e;
        }
    }
    acc
}

fn check_finite(m: &Mat<f64>, what: &str) -> Result<()> {
    if m.col_iter().all(|c| c.iter().all(|v| v.is_finite())) {
        Ok(())
    } else {
        Err(DefError::Numerical(format!("{what} has non-finite entries")))
    }
}

fn identify_transposed(xt: MatRef<'_, f64>, yt: MatRef<'_, f64>, d: usize, dt: f64, n_samples: usize) -> Result<IdentifiedModel> {
    let sol = solve_lstsq(xt, yt)?;
    let fit_error = frobenius_sq_residual(xt, sol.coef.as_ref(), yt);
    let a_tilde = sol.coef.transpose().to_owned();
    check_finite(&a_tilde, "identified operator")?;
    if sol.rank < d {
        log::warn!(
            "rank-deficient regressor at d={d} (rank {} of {d}); using the minimum-norm solution; add data or reduce d",
            sol.rank
        );
    }
    Ok(IdentifiedModel {
        a_tilde,
        d,
        dt,
        fit_error,
        rank: sol.rank,
        n_samples,
    })
}

/// Least-squares one-step operator for the given snapshot pair.
pub fn identify(matrices: &DelayMatrices) -> Result<IdentifiedModel> {
    let xt = matrices.x.transpose();
    let yt = matrices.y.transpose();
    // the source length is not recoverable from the matrices; m2 is the
    // tightest bound they carry
    identify_transposed(xt, yt, matrices.d, matrices.dt, matrices.m2)
}

/// Identify on the default range `(d, N)` without materializing the
/// untransposed matrices.
pub fn identify_series(series: &TimeSeries, d: usize) -> Result<IdentifiedModel> {
    let n = series.len();
    hankel::check_range(d, d, n, n)?;
    let (xt, yt) = hankel::transposed_blocks(series.samples(), d, d, n);
    identify_transposed(xt.as_ref(), yt.as_ref(), d, series.dt(), n)
}

/// Jointly identify `(Ã_d, B̃_d)` from the stacked regressor `[X; U]`.
pub fn identify_forced(matrices: &DelayMatrices, inputs: &InputDelayMatrices) -> Result<ForcedModel> {
    let d = matrices.d;
    if inputs.d != d || inputs.m1 != matrices.m1 || inputs.m2 != matrices.m2 {
        return Err(DefError::Shape(format!(
            "input matrices (d={}, range {}..{}) do not match state matrices (d={d}, range {}..{})",
            inputs.d, inputs.m1, inputs.m2, matrices.m1, matrices.m2
        )));
    }
    let cols = matrices.n_cols();
    let dm = inputs.u.nrows();
    let regressor = Mat::from_fn(cols, d + dm, |j, r| {
        if r < d {
            matrices.x[(r, j)]
        } else {
            inputs.u[(r - d, j)]
        }
    });
    let yt = matrices.y.transpose();
    let sol = solve_lstsq(regressor.as_ref(), yt)?;
    let fit_error = frobenius_sq_residual(regressor.as_ref(), sol.coef.as_ref(), yt);
    let theta = sol.coef.transpose().to_owned();
    check_finite(&theta, "identified forced operator")?;
    if sol.rank < d + dm {
        log::warn!(
            "rank-deficient stacked regressor at d={d} (rank {} of {}); using the minimum-norm solution",
            sol.rank,
            d + dm
        );
    }
    Ok(ForcedModel {
        a_tilde: theta.get(.., ..d).to_owned(),
        b_tilde: theta.get(.., d..).to_owned(),
        d,
        m: inputs.m,
        dt: matrices.dt,
        fit_error,
        rank: sol.rank,
        n_samples: matrices.m2,
    })
}

fn matvec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum())
        .collect()
}

/// `Ã^steps x0`.
pub fn predict(model: &IdentifiedModel, x0: &[f64], steps: usize) -> Result<Vec<f64>> {
    if x0.len() != model.d {
        return Err(DefError::Shape(format!(
            "initial state has length {}, model order is {}",
            x0.len(),
            model.d
        )));
    }
    let mut x = x0.to_vec();
    for _ in 0..steps {
        x = matvec(&model.a_tilde, &x);
    }
    Ok(x)
}

/// `x_L = Ã^L x0 + Σ_{i=1..L} Ã^{L-i} B̃ u_{i-1}`, one input-lag vector per step.
pub fn predict_forced(model: &ForcedModel, x0: &[f64], input_cols: &[Vec<f64>], steps: usize) -> Result<Vec<f64>> {
    if x0.len() != model.d {
        return Err(DefError::Shape(format!(
            "initial state has length {}, model order is {}",
            x0.len(),
            model.d
        )));
    }
    if input_cols.len() != steps {
        return Err(DefError::Shape(format!(
            "{} input vectors supplied for {steps} steps",
            input_cols.len()
        )));
    }
    let dm = model.b_tilde.ncols();
    let mut x = x0.to_vec();
    for u in input_cols {
        if u.len() != dm {
            return Err(DefError::Shape(format!("input lag vector has length {}, expected {dm}", u.len())));
        }
        let ax = matvec(&model.a_tilde, &x);
        let bu = matvec(&model.b_tilde, u);
        x = ax.iter().zip(&bu).map(|(a, b)| a + b).collect();
    }
    Ok(x)
}

/// Rows `e_0^T Ã^k` for `k = 0..=l`.
fn newest_row_powers(a: &Mat<f64>, l: usize) -> Vec<Vec<f64>> {
    let d = a.nrows();
    let mut rows = Vec::with_capacity(l + 1);
    let mut r = vec![0.0; d];
    r[0] = 1.0;
    rows.push(r.clone());
    for _ in 0..l {
        let next: Vec<f64> = (0..d).map(|j| (0..d).map(|i| r[i] * a[(i, j)]).sum()).collect();
        r = next;
        rows.push(r.clone());
    }
    rows
}

fn check_aic_feasible(n: usize, d: usize, l: usize) -> Result<()> {
    if l == 0 {
        return Err(DefError::InvalidArgument("prediction horizon L must be >= 1".into()));
    }
    if d == 0 || n <= d + l {
        return Err(DefError::Insufficient(format!(
            "AIC needs N - d - L > 0, got N={n}, d={d}, L={l}"
        )));
    }
    Ok(())
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if sigma2 >= 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        Err(DefError::InvalidArgument(format!("sigma2 must be finite and >= 0, got {sigma2}")))
    }
}

/// AIC of an already identified model.
///
/// Only the newest-sample row is compared: the residual is
/// `y[d+L-1+j] - e_0^T Ã^L x_d[d-1+j]` for `j = 0..N-d-L`.
pub fn aic_of_model(series: &TimeSeries, model: &IdentifiedModel, l_horizon: usize, sigma2: f64) -> Result<f64> {
    let n = series.len();
    let d = model.d;
    check_aic_feasible(n, d, l_horizon)?;
    check_sigma2(sigma2)?;
    let y = series.samples();
    let row = newest_row_powers(&model.a_tilde, l_horizon).pop().unwrap();
    let cols = n - d - l_horizon + 1;
    let mut sq = 0.0;
    for j in 0..cols {
        let base = d - 1 + j;
        let pred: f64 = row.iter().enumerate().map(|(r, c)| c * y[base - r]).sum();
        let e = y[d + l_horizon - 1 + j] - pred;
        sq += e * e;
    }
    Ok(aic_value(sq, d, n, l_horizon, sigma2))
}

fn aic_value(sq: f64, d: usize, n: usize, l: usize, sigma2: f64) -> f64 {
    let denom = (n - d - l) as f64;
    sq / denom + 2.0 * d as f64 * sigma2 / denom
}

/// L-step-ahead AIC for delay order `d`.
pub fn aic(series: &TimeSeries, d: usize, l_horizon: usize, sigma2: f64) -> Result<f64> {
    check_aic_feasible(series.len(), d, l_horizon)?;
    check_sigma2(sigma2)?;
    let model = identify_series(series, d)?;
    aic_of_model(series, &model, l_horizon, sigma2)
}

fn check_input_alignment(series: &TimeSeries, input: &InputSeries, d: usize) -> Result<()> {
    if input.len() != series.len() {
        return Err(DefError::Shape(format!(
            "input has {} samples, series has {}",
            input.len(),
            series.len()
        )));
    }
    if d == 0 {
        return Err(DefError::InvalidArgument("delay order must be >= 1".into()));
    }
    Ok(())
}

/// AIC of an identified forced model, with the input terms of the L-step
/// prediction included.
pub fn aic_of_forced(series: &TimeSeries, input: &InputSeries, model: &ForcedModel, l_horizon: usize, sigma2: f64) -> Result<f64> {
    let n = series.len();
    let d = model.d;
    check_input_alignment(series, input, d)?;
    check_aic_feasible(n, d, l_horizon)?;
    check_sigma2(sigma2)?;
    let y = series.samples();
    let rows = newest_row_powers(&model.a_tilde, l_horizon);
    // g_i = e_0^T Ã^{L-i} B̃ for i = 1..=L
    let gains: Vec<Vec<f64>> = (1..=l_horizon)
        .map(|i| {
            let r = &rows[l_horizon - i];
            (0..model.b_tilde.ncols())
                .map(|c| (0..d).map(|k| r[k] * model.b_tilde[(k, c)]).sum())
                .collect()
        })
        .collect();
    let m = input.n_channels();
    let ch = input.channels();
    let cols = n - d - l_horizon + 1;
    let mut sq = 0.0;
    for j in 0..cols {
        let base = d - 1 + j;
        let mut pred: f64 = rows[l_horizon].iter().enumerate().map(|(r, c)| c * y[base - r]).sum();
        for (i, g) in gains.iter().enumerate() {
            // u_d[d + i - 2 + j] with i counted from 1
            let t = d + i - 1 + j;
            for (idx, gv) in g.iter().enumerate() {
                let (lag, c) = (idx / m, idx % m);
                pred += gv * ch[c][t - lag];
            }
        }
        let e = y[d + l_horizon - 1 + j] - pred;
        sq += e * e;
    }
    Ok(aic_value(sq, d, n, l_horizon, sigma2))
}

/// Forced-model AIC: identify `(Ã_d, B̃_d)` on `(d, N)` and score the
/// L-step prediction.
pub fn aic_forced(series: &TimeSeries, input: &InputSeries, d: usize, l_horizon: usize, sigma2: f64) -> Result<f64> {
    check_input_alignment(series, input, d)?;
    check_aic_feasible(series.len(), d, l_horizon)?;
    check_sigma2(sigma2)?;
    let model = identify_forced_series(series, input, d)?;
    aic_of_forced(series, input, &model, l_horizon, sigma2)
}

/// Forced identification on the default range `(d, N)`.
pub fn identify_forced_series(series: &TimeSeries, input: &InputSeries, d: usize) -> Result<ForcedModel> {
    check_input_alignment(series, input, d)?;
    let n = series.len();
    let mats = hankel::build_default(series, d)?;
    let inputs = hankel::build_input_matrices(input, d, d, n)?;
    let mut model = identify_forced(&mats, &inputs)?;
    model.n_samples = n;
    Ok(model)
}

/// Candidate delay orders, parsed from `start:stop:step` (stop included
/// when on the grid) or a comma-separated list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateGrid(pub Vec<usize>);

impl FromStr for CandidateGrid {
    type Err = DefError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || DefError::InvalidArgument(format!("cannot parse candidate set {s:?}"));
        let s = s.trim();
        if s.contains(':') {
            let parts: Vec<usize> = s
                .split(':')
                .map(|p| p.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad())?;
            let (start, stop, step) = match parts.as_slice() {
                [a, b] => (*a, *b, 1),
                [a, b, c] => (*a, *b, *c),
                _ => return Err(bad()),
            };
            if step == 0 || start > stop {
                return Err(bad());
            }
            Ok(CandidateGrid((start..=stop).step_by(step).collect()))
        } else {
            let v = s
                .split(',')
                .filter(|p| !p.trim().is_empty())
                .map(|p| p.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad())?;
            if v.is_empty() {
                return Err(bad());
            }
            Ok(CandidateGrid(v))
        }
    }
}

impl fmt::Display for CandidateGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// One evaluated candidate; `aic` is `None` when the candidate was
/// infeasible for this series length and horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AicEntry {
    pub d: usize,
    pub aic: Option<f64>,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSelection {
    pub entries: Vec<AicEntry>,
    pub d_star: usize,
    #[serde(rename = "L")]
    pub l_horizon: usize,
    pub sigma2: f64,
}

impl OrderSelection {
    pub fn candidates(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.d).collect()
    }

    /// AIC per candidate (NaN for infeasible ones).
    pub fn aic_values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.aic.unwrap_or(f64::NAN)).collect()
    }

    /// The feasible part of the curve.
    pub fn curve(&self) -> AicCurve {
        AicCurve {
            points: self.entries.iter().filter_map(|e| e.aic.map(|a| (e.d, a))).collect(),
        }
    }

    pub fn min_aic(&self) -> f64 {
        self.entries
            .iter()
            .find(|e| e.d == self.d_star)
            .and_then(|e| e.aic)
            .unwrap_or(f64::NAN)
    }
}

/// Argmin with ties going to the smaller `d`.
fn argmin(points: &[(usize, f64)]) -> Option<(usize, f64)> {
    points.iter().copied().fold(None, |best, (d, a)| match best {
        Some((bd, ba)) if a > ba || (a == ba && d > bd) => Some((bd, ba)),
        _ => Some((d, a)),
    })
}

fn feasible(n: usize, d: usize, l: usize) -> bool {
    d >= 1 && n > d + l
}

/// Identify once per feasible `d` and evaluate the AIC for every horizon.
fn aic_sweep(series: &TimeSeries, grid: &[usize], l_list: &[usize], sigma2: f64) -> Result<Vec<(usize, Option<Vec<f64>>)>> {
    check_sigma2(sigma2)?;
    let n = series.len();
    let l_max = l_list.iter().copied().max().unwrap_or(0);
    let mut out = Vec::with_capacity(grid.len());
    for &d in grid {
        if !feasible(n, d, l_max) {
            log::warn!("candidate d={d} is infeasible for N={n}, L={l_max} (needs N - d - L > 0); skipped");
            out.push((d, None));
            continue;
        }
        log::debug!("identifying d={d}");
        let model = identify_series(series, d)?;
        let values = l_list
            .iter()
            .map(|&l| aic_of_model(series, &model, l, sigma2))
            .collect::<Result<Vec<_>>>()?;
        out.push((d, Some(values)));
    }
    Ok(out)
}

/// Evaluate the AIC over `candidates` and pick the minimizer.
pub fn select_order(series: &TimeSeries, candidates: &[usize], l_horizon: usize, sigma2: f64) -> Result<OrderSelection> {
    if candidates.is_empty() {
        return Err(DefError::InvalidArgument("candidate set is empty".into()));
    }
    if l_horizon == 0 {
        return Err(DefError::InvalidArgument("prediction horizon L must be >= 1".into()));
    }
    let sweep = aic_sweep(series, candidates, &[l_horizon], sigma2)?;
    let entries: Vec<AicEntry> = sweep
        .into_iter()
        .map(|(d, v)| AicEntry {
            d,
            aic: v.map(|v| v[0]),
            feasible: true,
        })
        .map(|mut e| {
            e.feasible = e.aic.is_some();
            e
        })
        .collect();
    let points: Vec<(usize, f64)> = entries.iter().filter_map(|e| e.aic.map(|a| (e.d, a))).collect();
    let (d_star, _) = argmin(&points).ok_or_else(|| {
        DefError::Insufficient(format!(
            "no feasible candidate for N={} and L={l_horizon}",
            series.len()
        ))
    })?;
    Ok(OrderSelection {
        entries,
        d_star,
        l_horizon,
        sigma2,
    })
}

/// `(d, AIC)` pairs persisted as CSV `d,aic`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AicCurve {
    pub points: Vec<(usize, f64)>,
}

impl Artifact for AicCurve {
    fn kind(&self) -> &'static str {
        "AIC curve"
    }

    fn csv_table(&self) -> Option<(Vec<&'static str>, Vec<Vec<String>>)> {
        let rows = self.points.iter().map(|(d, a)| vec![d.to_string(), fmt_real(*a)]).collect();
        Some((vec!["d", "aic"], rows))
    }

    fn json_payload(&self) -> serde_json::Value {
        serde_json::json!({ "curve": self.points.iter().map(|(d, a)| serde_json::json!({"d": d, "aic": a})).collect::<Vec<_>>() })
    }
}

impl Artifact for OrderSelection {
    fn kind(&self) -> &'static str {
        "order selection"
    }

    fn csv_table(&self) -> Option<(Vec<&'static str>, Vec<Vec<String>>)> {
        self.curve().csv_table()
    }

    fn json_payload(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or_default()
    }
}

pub fn read_aic_curve(path: impl AsRef<Path>) -> Result<AicCurve> {
    let path = path.as_ref();
    let (header, mut cols) = series_io::read_table(path)?;
    let d = series_io::take_column(path, &header, &mut cols, "d")?;
    let a = series_io::take_column(path, &header, &mut cols, "aic")?;
    Ok(AicCurve {
        points: d.into_iter().map(|d| d as usize).zip(a).collect(),
    })
}

/// `AIC_rel(d; L) = AIC(d; L) - min_d AIC(d; L)` for each horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeAicCurves {
    pub curves: BTreeMap<usize, Vec<(usize, f64)>>,
    pub sigma2: f64,
}

impl RelativeAicCurves {
    /// Grid point where the curve for horizon `l` reaches zero.
    pub fn argmin(&self, l: usize) -> Option<usize> {
        let curve = self.curves.get(&l)?;
        argmin(curve).map(|(d, _)| d)
    }
}

impl Artifact for RelativeAicCurves {
    fn kind(&self) -> &'static str {
        "relative AIC curves"
    }

    fn csv_table(&self) -> Option<(Vec<&'static str>, Vec<Vec<String>>)> {
        let rows = self
            .curves
            .iter()
            .flat_map(|(l, c)| c.iter().map(move |(d, a)| vec![l.to_string(), d.to_string(), fmt_real(*a)]))
            .collect();
        Some((vec!["L", "d", "aic_rel"], rows))
    }

    fn json_payload(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or_default()
    }
}

pub fn relative_aic_curves(series: &TimeSeries, d_grid: &[usize], l_list: &[usize], sigma2: f64) -> Result<RelativeAicCurves> {
    if d_grid.is_empty() || l_list.is_empty() {
        return Err(DefError::InvalidArgument("empty d grid or horizon list".into()));
    }
    let n = series.len();
    for &l in l_list {
        check_aic_feasible(n, 1, l)?;
        if let Some(&d) = d_grid.iter().find(|&&d| !feasible(n, d, l)) {
            return Err(DefError::Insufficient(format!(
                "d={d} infeasible for L={l} (needs N - d - L > 0, N={n})"
            )));
        }
    }
    let sweep = aic_sweep(series, d_grid, l_list, sigma2)?;
    let mut curves = BTreeMap::new();
    for (k, &l) in l_list.iter().enumerate() {
        let raw: Vec<(usize, f64)> = sweep.iter().map(|(d, v)| (*d, v.as_ref().unwrap()[k])).collect();
        let min = raw.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        curves.insert(l, raw.into_iter().map(|(d, a)| (d, a - min)).collect());
    }
    Ok(RelativeAicCurves { curves, sigma2 })
}
