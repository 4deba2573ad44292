//! Hankel-based comparison methods: singular spectrum analysis and
//! delay-embedded dynamic mode decomposition.

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::def_spectrum::eigen_of;
use crate::error::{DefError, Result};
use crate::hankel::DelayMatrices;
use crate::series_io::{fmt_real, Artifact, TimeSeries};

/// Default fraction of squared singular-value energy kept by DMD.
pub const DEFAULT_ENERGY: f64 = 0.999;
/// Upper bound on the energy-selected DMD rank.
pub const DEFAULT_RANK_CAP: usize = 200;

/// SVD of the `d x K` trajectory matrix, `K = N - d + 1`.
#[derive(Debug, Clone)]
pub struct SsaDecomposition {
    pub window: usize,
    pub n_samples: usize,
    pub dt: f64,
    /// Descending.
    pub singular_values: Vec<f64>,
    /// `d x d`, column `i` is `u_i`.
    pub left: Mat<f64>,
    /// `K x d`, column `i` is `v_i`.
    pub right: Mat<f64>,
}

impl SsaDecomposition {
    pub fn n_components(&self) -> usize {
        self.singular_values.len()
    }
}

/// Trajectory matrix with entry `(r, c) = y[r + c]`.
pub fn trajectory_matrix(series: &TimeSeries, window: usize) -> Result<Mat<f64>> {
    let n = series.len();
    if window < 2 || window >= n {
        return Err(DefError::InvalidArgument(format!(
            "SSA window must satisfy 2 <= d <= N-1, got d={window}, N={n}"
        )));
    }
    let y = series.samples();
    Ok(Mat::from_fn(window, n - window + 1, |r, c| y[r + c]))
}

pub fn ssa_decompose(series: &TimeSeries, window: usize) -> Result<SsaDecomposition> {
    let x = trajectory_matrix(series, window)?;
    let svd = x
        .thin_svd()
        .map_err(|e| DefError::Numerical(format!("SSA singular value decomposition failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let k = s.nrows();
    Ok(SsaDecomposition {
        window,
        n_samples: series.len(),
        dt: series.dt(),
        singular_values: (0..k).map(|i| s[i]).collect(),
        left: svd.U().to_owned(),
        right: svd.V().to_owned(),
    })
}

/// Diagonally averaged sum of the selected rank-one terms.
pub fn ssa_reconstruct(decomp: &SsaDecomposition, components: &[usize]) -> Result<TimeSeries> {
    let d = decomp.window;
    let k = decomp.right.nrows();
    let n = decomp.n_samples;
    let mut acc = vec![0.0; n];
    let mut seen = vec![false; decomp.n_components()];
    for &i in components {
        if i >= decomp.n_components() {
            return Err(DefError::OutOfRange(format!(
                "SSA component {i} out of range (have {})",
                decomp.n_components()
            )));
        }
        if std::mem::replace(&mut seen[i], true) {
            continue;
        }
        let s = decomp.singular_values[i];
        let u = decomp.left.col(i);
        let v = decomp.right.col(i);
        for r in 0..d {
            let su = s * u[r];
            for (c, slot) in acc[r..r + k].iter_mut().enumerate() {
                *slot += su * v[c];
            }
        }
    }
    // anti-diagonal t holds min(t+1, d, K, N-t) entries
    for (t, v) in acc.iter_mut().enumerate() {
        let count = (t + 1).min(d).min(k).min(n - t);
        *v /= count as f64;
    }
    TimeSeries::new(acc, decomp.dt)
}

/// Reconstructed components keyed by component index.
#[derive(Debug, Clone)]
pub struct SsaComponents {
    pub indices: Vec<usize>,
    pub singular_values: Vec<f64>,
    pub components: Vec<TimeSeries>,
}

/// One reconstructed series per requested index.
pub fn ssa_components(decomp: &SsaDecomposition, indices: &[usize]) -> Result<SsaComponents> {
    let components = indices
        .iter()
        .map(|&i| ssa_reconstruct(decomp, &[i]))
        .collect::<Result<Vec<_>>>()?;
    Ok(SsaComponents {
        indices: indices.to_vec(),
        singular_values: indices.iter().map(|&i| decomp.singular_values[i]).collect(),
        components,
    })
}

impl Artifact for SsaComponents {
    fn kind(&self) -> &'static str {
        "SSA components"
    }

    /// Long form; components are numbered from 1.
    fn csv_table(&self) -> Option<(Vec<&'static str>, Vec<Vec<String>>)> {
        let rows = self
            .indices
            .iter()
            .zip(&self.components)
            .flat_map(|(&i, rc)| rc.samples().iter().map(move |&v| vec![(i + 1).to_string(), fmt_real(v)]))
            .collect();
        Some((vec!["component", "value"], rows))
    }

    fn json_payload(&self) -> serde_json::Value {
        serde_json::json!({
            "components": self.indices.iter().zip(&self.singular_values).zip(&self.components).map(|((i, s), rc)| serde_json::json!({
                "component": i + 1,
                "singular_value": s,
                "values": rc.samples(),
            })).collect::<Vec<_>>(),
        })
    }
}

/// How many singular directions DMD keeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DmdRank {
    Fixed(usize),
    /// Smallest rank whose squared singular values reach `fraction` of the
    /// total, at most `cap`.
    Energy { fraction: f64, cap: usize },
}

impl Default for DmdRank {
    fn default() -> Self {
        DmdRank::Energy {
            fraction: DEFAULT_ENERGY,
            cap: DEFAULT_RANK_CAP,
        }
    }
}

impl std::str::FromStr for DmdRank {
    type Err = DefError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "energy" || s == "auto" {
            return Ok(DmdRank::default());
        }
        match s.parse::<usize>() {
            Ok(r) if r >= 1 => Ok(DmdRank::Fixed(r)),
            _ => Err(DefError::InvalidArgument(format!(
                "DMD rank must be a positive integer or \"energy\", got {s:?}"
            ))),
        }
    }
}

impl std::fmt::Display for DmdRank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DmdRank::Fixed(r) => write!(f, "{r}"),
            DmdRank::Energy { .. } => f.write_str("energy"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmdMode {
    pub eigenvalue: Complex64,
    /// `log(λ)/dt`, principal branch: `alpha + i omega`.
    pub nu: Complex64,
    /// `2π/|omega|`, `None` for non-oscillatory modes.
    pub period: Option<f64>,
    pub contribution: f64,
    pub mode: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmdDecomposition {
    pub rank: usize,
    pub d: usize,
    pub dt: f64,
    pub modes: Vec<DmdMode>,
}

impl DmdDecomposition {
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.modes.iter().map(|m| m.eigenvalue).collect()
    }

    pub fn oscillatory(&self) -> impl Iterator<Item = &DmdMode> {
        self.modes.iter().filter(|m| m.period.is_some())
    }

    /// Oscillatory mode with the largest contribution (first on ties).
    pub fn dominant_oscillatory(&self) -> Option<&DmdMode> {
        self.oscillatory().fold(None, |best: Option<&DmdMode>, m| match best {
            Some(b) if b.contribution >= m.contribution => Some(b),
            _ => Some(m),
        })
    }
}

fn choose_rank(s: &[f64], rank: DmdRank, max_dim: usize) -> Result<usize> {
    let s1 = s.first().copied().unwrap_or(0.0);
    let tol = max_dim as f64 * f64::EPSILON * s1;
    let numerical = s.iter().take_while(|&&v| v > tol).count();
    match rank {
        DmdRank::Fixed(r) => {
            if r == 0 || r > s.len() {
                return Err(DefError::InvalidArgument(format!(
                    "DMD rank must satisfy 1 <= r <= min(d, columns) = {}, got {r}",
                    s.len()
                )));
            }
            if r > numerical {
                return Err(DefError::Numerical(format!(
                    "singular value {r} is zero to working precision ({:.3e} <= {tol:.3e})",
                    s[r - 1]
                )));
            }
            Ok(r)
        }
        DmdRank::Energy { fraction, cap } => {
            if !(fraction > 0.0 && fraction <= 1.0) || cap == 0 {
                return Err(DefError::InvalidArgument(format!(
                    "energy rank needs 0 < fraction <= 1 and cap >= 1, got {fraction}, {cap}"
                )));
            }
            if numerical == 0 {
                return Err(DefError::Numerical("snapshot matrix is zero".into()));
            }
            let total: f64 = s.iter().map(|v| v * v).sum();
            let mut acc = 0.0;
            let mut r = s.len();
            for (i, v) in s.iter().enumerate() {
                acc += v * v;
                if acc >= fraction * total {
                    r = i + 1;
                    break;
                }
            }
            Ok(r.min(cap).min(numerical))
        }
    }
}

/// `|φ^H x_j|²` summed over columns, over `‖φ‖² ‖X‖²_F`, for every mode.
fn contributions(phis: &[Vec<Complex64>], x: &Mat<f64>) -> Result<Vec<f64>> {
    let d = x.nrows();
    let r = phis.len();
    let x_norm2 = x.norm_l2().powi(2);
    if x_norm2 == 0.0 {
        return Err(DefError::Numerical("snapshot matrix is zero".into()));
    }
    for (i, p) in phis.iter().enumerate() {
        if p.len() != d {
            return Err(DefError::Shape(format!("mode {i} has length {}, snapshots have {d} rows", p.len())));
        }
    }
    let re = Mat::from_fn(r, d, |i, k| phis[i][k].re);
    let im = Mat::from_fn(r, d, |i, k| phis[i][k].im);
    let pre = &re * x;
    let pim = &im * x;
    phis.iter()
        .enumerate()
        .map(|(i, p)| {
            let pn: f64 = p.iter().map(|c| c.norm_sqr()).sum();
            if pn == 0.0 {
                return Err(DefError::Numerical(format!("DMD mode {i} has zero norm")));
            }
            let num: f64 = (0..x.ncols()).map(|j| pre[(i, j)].powi(2) + pim[(i, j)].powi(2)).sum();
            Ok((num / (pn * x_norm2)).clamp(0.0, 1.0))
        })
        .collect()
}

/// Frobenius-norm share of the snapshots captured by each mode's span.
pub fn dmd_contribution(decomp: &DmdDecomposition, matrices: &DelayMatrices) -> Result<Vec<f64>> {
    let phis: Vec<Vec<Complex64>> = decomp.modes.iter().map(|m| m.mode.clone()).collect();
    contributions(&phis, &matrices.x)
}

pub fn dmd_decompose(matrices: &DelayMatrices, rank: DmdRank) -> Result<DmdDecomposition> {
    let (x, y, dt) = (&matrices.x, &matrices.y, matrices.dt);
    let d = x.nrows();
    let svd = x
        .thin_svd()
        .map_err(|e| DefError::Numerical(format!("DMD singular value decomposition failed: {e:?}")))?;
    let sv = svd.S().column_vector();
    let s: Vec<f64> = (0..sv.nrows()).map(|i| sv[i]).collect();
    let r = choose_rank(&s, rank, d.max(x.ncols()))?;

    let u_r = svd.U().get(.., ..r);
    let v_r = svd.V().get(.., ..r);
    // Y V_r Σ_r^{-1}
    let mut yv = y * v_r;
    for j in 0..r {
        let inv = 1.0 / s[j];
        for i in 0..d {
            yv[(i, j)] *= inv;
        }
    }
    let a = u_r.transpose() * &yv;
    let pairs = eigen_of(&a)?;

    let cutoff = 1e-10 / dt;
    let phis: Vec<Vec<Complex64>> = pairs
        .vectors
        .iter()
        .map(|w| {
            (0..d)
                .map(|i| (0..r).map(|k| w[k] * yv[(i, k)]).sum::<Complex64>())
                .collect()
        })
        .collect();
    let contrib = contributions(&phis, x)?;
    let modes = pairs
        .values
        .iter()
        .zip(phis)
        .zip(contrib)
        .map(|((&lambda, mode), contribution)| {
            let nu = lambda.ln() / dt;
            let period = (nu.im.abs() >= cutoff).then(|| 2.0 * PI / nu.im.abs());
            DmdMode {
                eigenvalue: lambda,
                nu,
                period,
                contribution,
                mode,
            }
        })
        .collect();
    Ok(DmdDecomposition { rank: r, d, dt, modes })
}

impl Artifact for DmdDecomposition {
    fn kind(&self) -> &'static str {
        "DMD decomposition"
    }

    /// Oscillatory modes only.
    fn csv_table(&self) -> Option<(Vec<&'static str>, Vec<Vec<String>>)> {
        let rows = self
            .oscillatory()
            .map(|m| {
                vec![
                    fmt_real(m.period.unwrap_or(f64::NAN)),
                    fmt_real(m.contribution),
                    fmt_real(m.eigenvalue.re),
                    fmt_real(m.eigenvalue.im),
                    fmt_real(m.nu.re),
                    fmt_real(m.nu.im),
                ]
            })
            .collect();
        Some((vec!["period", "contribution", "re_lambda", "im_lambda", "alpha", "omega"], rows))
    }

    fn json_payload(&self) -> serde_json::Value {
        serde_json::json!({
            "rank": self.rank,
            "d": self.d,
            "modes": self.modes.iter().map(|m| serde_json::json!({
                "period": m.period,
                "contribution": m.contribution,
                "re_lambda": m.eigenvalue.re,
                "im_lambda": m.eigenvalue.im,
                "alpha": m.nu.re,
                "omega": m.nu.im,
            })).collect::<Vec<_>>(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hankel::build_default;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_series(n: usize, seed: u64) -> TimeSeries {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        TimeSeries::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), 1.0).unwrap()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn ssa_constant_is_rank_one() {
        let s = TimeSeries::new(vec![2.5; 80], 1.0).unwrap();
        let dec = ssa_decompose(&s, 10).unwrap();
        let s1 = dec.singular_values[0];
        assert!(s1 > 0.0);
        assert!(dec.singular_values[1..].iter().all(|&v| v <= 1e-10 * s1));
    }

    #[test]
    fn ssa_sinusoid_is_rank_two() {
        let s = TimeSeries::new((0..400).map(|n| (2.0 * PI * n as f64 / 50.0).sin()).collect(), 1.0).unwrap();
        let dec = ssa_decompose(&s, 100).unwrap();
        let sv = &dec.singular_values;
        assert!(sv[1] > 0.5 * sv[0]);
        assert!(sv[2] / sv[0] <= 1e-8, "{}", sv[2] / sv[0]);
    }

    #[test]
    fn ssa_boundary_window() {
        let s = random_series(30, 1);
        let dec = ssa_decompose(&s, 29).unwrap();
        assert_eq!(dec.right.nrows(), 2);
        assert_eq!(dec.n_components(), 2);
        let all: Vec<usize> = (0..2).collect();
        let rec = ssa_reconstruct(&dec, &all).unwrap();
        assert!(rel_err(rec.samples(), s.samples()) <= 1e-10);
        assert!(ssa_decompose(&s, 30).is_err());
        assert!(ssa_decompose(&s, 1).is_err());
    }

    #[test]
    fn ssa_factorization_and_orthonormality() {
        let s = random_series(120, 2);
        let dec = ssa_decompose(&s, 20).unwrap();
        let x = trajectory_matrix(&s, 20).unwrap();
        let sig = Mat::from_fn(20, 20, |i, j| if i == j { dec.singular_values[i] } else { 0.0 });
        let rebuilt = &dec.left * &sig * dec.right.transpose();
        assert!((&rebuilt - &x).norm_l2() <= 1e-8 * x.norm_l2());
        let utu = dec.left.transpose() * &dec.left;
        let vtv = dec.right.transpose() * &dec.right;
        for i in 0..20 {
            for j in 0..20 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((utu[(i, j)] - e).abs() <= 1e-8);
                assert!((vtv[(i, j)] - e).abs() <= 1e-8);
            }
        }
        for w in dec.singular_values.windows(2) {
            assert!(w[0] >= w[1] && w[1] >= 0.0);
        }
        let energy: f64 = dec.singular_values.iter().map(|v| v * v).sum();
        assert!((energy - x.norm_l2().powi(2)).abs() <= 1e-8 * energy);
    }

    #[test]
    fn ssa_completeness_and_empty() {
        let s = random_series(300, 3);
        let dec = ssa_decompose(&s, 40).unwrap();
        let all: Vec<usize> = (0..40).collect();
        let rec = ssa_reconstruct(&dec, &all).unwrap();
        assert!(rel_err(rec.samples(), s.samples()) <= 1e-8);
        let zero = ssa_reconstruct(&dec, &[]).unwrap();
        assert!(zero.samples().iter().all(|&v| v == 0.0));
        assert!(ssa_reconstruct(&dec, &[40]).is_err());
    }

    #[test]
    fn ssa_csv_is_long_form() {
        let s = random_series(20, 4);
        let dec = ssa_decompose(&s, 5).unwrap();
        let comps = ssa_components(&dec, &[0, 1]).unwrap();
        let (header, rows) = comps.csv_table().unwrap();
        assert_eq!(header, vec!["component", "value"]);
        assert_eq!(rows.len(), 40);
        assert_eq!(rows[0][0], "1");
        assert_eq!(rows[20][0], "2");
    }

    fn state_matrices(lams: [f64; 2], m: usize) -> DelayMatrices {
        // x_{n+1} = diag(λ) x_n from x_0 = (1, 1)
        let x = Mat::from_fn(2, m, |i, j| lams[i].powi(j as i32));
        let y = Mat::from_fn(2, m, |i, j| lams[i].powi(j as i32 + 1));
        DelayMatrices { x, y, d: 2, m1: 2, m2: 2 + m, dt: 1.0 }
    }

    #[test]
    fn dmd_diagonal_system() {
        let dec = dmd_decompose(&state_matrices([0.9, 0.5], 30), DmdRank::Fixed(2)).unwrap();
        let l = dec.eigenvalues();
        assert!((l[0] - Complex64::new(0.9, 0.0)).norm() < 1e-8);
        assert!((l[1] - Complex64::new(0.5, 0.0)).norm() < 1e-8);
        assert!(dec.oscillatory().next().is_none());
    }

    #[test]
    fn dmd_cosine_period() {
        let s = TimeSeries::new((0..500).map(|n| (2.0 * PI * n as f64 / 100.0).cos()).collect(), 1.0).unwrap();
        let m = build_default(&s, 4).unwrap();
        let dec = dmd_decompose(&m, DmdRank::Fixed(2)).unwrap();
        for mode in &dec.modes {
            assert!((mode.eigenvalue.norm() - 1.0).abs() < 1e-6);
            let t = mode.period.unwrap();
            assert!((t / 100.0 - 1.0).abs() < 1e-3, "{t}");
        }
        assert!((dec.modes[0].contribution - dec.modes[1].contribution).abs() < 1e-8);
    }

    #[test]
    fn dmd_rank_errors() {
        let m = state_matrices([0.9, 0.5], 10);
        assert!(dmd_decompose(&m, DmdRank::Fixed(3)).is_err());
        assert!(dmd_decompose(&m, DmdRank::Fixed(0)).is_err());
        // a single exponential has rank one; the second direction is empty
        let s = TimeSeries::new((0..50).map(|n| 0.9f64.powi(n)).collect(), 1.0).unwrap();
        let err = dmd_decompose(&build_default(&s, 3).unwrap(), DmdRank::Fixed(2)).unwrap_err();
        assert!(err.is_numerical());
        let dec = dmd_decompose(&build_default(&s, 3).unwrap(), DmdRank::default()).unwrap();
        assert_eq!(dec.rank, 1);
    }

    #[test]
    fn dmd_recurrence_exactness() {
        // roots 0.95, 0.9 e^{±0.3i}
        let r = [Complex64::new(0.95, 0.0), Complex64::from_polar(0.9, 0.3), Complex64::from_polar(0.9, -0.3)];
        let y: Vec<f64> = (0..200)
            .map(|n| (r[0].powi(n) * 1.0 + r[1].powi(n) * Complex64::new(0.5, 0.2) + r[2].powi(n) * Complex64::new(0.5, -0.2)).re)
            .collect();
        let s = TimeSeries::new(y, 1.0).unwrap();
        let dec = dmd_decompose(&build_default(&s, 6).unwrap(), DmdRank::Fixed(3)).unwrap();
        for root in r {
            assert!(dec.eigenvalues().iter().any(|l| (l - root).norm() < 1e-6));
        }
        assert!(dec.modes.iter().all(|m| (0.0..=1.0).contains(&m.contribution)));
    }

    #[test]
    fn contribution_cases() {
        let phi = vec![Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0)];
        let parallel = Mat::from_fn(2, 5, |i, j| (j as f64 + 1.0) * [1.0, 2.0][i]);
        assert!((contributions(std::slice::from_ref(&phi), &parallel).unwrap()[0] - 1.0).abs() < 1e-14);
        let orth = Mat::from_fn(2, 5, |i, j| (j as f64 + 1.0) * [2.0, -1.0][i]);
        assert!(contributions(&[phi], &orth).unwrap()[0].abs() < 1e-14);
        assert!(contributions(&[vec![Complex64::new(0.0, 0.0); 2]], &orth).is_err());
    }

    #[test]
    fn contribution_brute_force() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let x = Mat::from_fn(5, 20, |_, _| rng.random_range(-1.0..1.0));
        let raw: Vec<Complex64> = (0..5).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let norm = raw.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let phi: Vec<Complex64> = raw.iter().map(|c| c / norm).collect();
        let got = contributions(std::slice::from_ref(&phi), &x).unwrap()[0];
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..20 {
            let dot: Complex64 = (0..5).map(|i| phi[i].conj() * x[(i, j)]).sum();
            num += dot.norm_sqr();
            den += (0..5).map(|i| x[(i, j)].powi(2)).sum::<f64>();
        }
        assert!((got - num / den).abs() <= 1e-12);
    }

    #[test]
    fn rank_parsing() {
        assert_eq!("12".parse::<DmdRank>().unwrap(), DmdRank::Fixed(12));
        assert_eq!("energy".parse::<DmdRank>().unwrap(), DmdRank::default());
        assert!("0".parse::<DmdRank>().is_err());
        assert!("x".parse::<DmdRank>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn ssa_additivity(seed in 0u64..1000, split in 1usize..9) {
            let s = random_series(60, seed);
            let dec = ssa_decompose(&s, 10).unwrap();
            let (a, b): (Vec<usize>, Vec<usize>) = (0..10).partition(|i| i % split == 0);
            let ra = ssa_reconstruct(&dec, &a).unwrap();
            let rb = ssa_reconstruct(&dec, &b).unwrap();
            let rall = ssa_reconstruct(&dec, &(0..10).collect::<Vec<_>>()).unwrap();
            for ((x, y), z) in ra.samples().iter().zip(rb.samples()).zip(rall.samples()) {
                prop_assert!((x + y - z).abs() <= 1e-10);
            }
        }

        #[test]
        fn dmd_contributions_bounded_and_paired(seed in 0u64..1000) {
            let s = random_series(200, seed);
            let m = build_default(&s, 12).unwrap();
            let dec = dmd_decompose(&m, DmdRank::Fixed(8)).unwrap();
            for mode in &dec.modes {
                prop_assert!((0.0..=1.0).contains(&mode.contribution));
                if mode.eigenvalue.im.abs() > 1e-8 {
                    let partner = dec.modes.iter().find(|o| (o.eigenvalue - mode.eigenvalue.conj()).norm() < 1e-10);
                    prop_assert!(partner.is_some());
                    prop_assert!((partner.unwrap().contribution - mode.contribution).abs() <= 1e-8);
                }
            }
            let again = dmd_contribution(&dec, &m).unwrap();
            for (a, b) in again.iter().zip(&dec.modes) {
                prop_assert!((a - b.contribution).abs() <= 1e-14);
            }
        }
    }
}
