//! Delay-coordinate vectors and the paired snapshot matrices used for
//! identification.
//!
//! Index convention: for a range `(m1, m2)` the explanatory matrix holds the
//! delay vectors `x_d[m1-1] .. x_d[m2-2]` and the target matrix the vectors
//! one step later, `x_d[m1] .. x_d[m2-1]`. The default identification range is
//! `(d, N)`.

use faer::Mat;

use crate::error::{DefError, Result};
use crate::series_io::{InputSeries, TimeSeries};

/// `x_d[n] = [y[n], y[n-1], ..., y[n-d+1]]`.
pub fn delay_vector(series: &TimeSeries, n: usize, d: usize) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(DefError::InvalidArgument("delay order must be >= 1".into()));
    }
    if n + 1 < d || n >= series.len() {
        return Err(DefError::OutOfRange(format!(
            "delay vector at n={n} with d={d} needs d-1 <= n < N={}",
            series.len()
        )));
    }
    let y = series.samples();
    Ok((0..d).map(|r| y[n - r]).collect())
}

/// Paired Hankel snapshot matrices for delay order `d` over `(m1, m2)`.
#[derive(Debug, Clone)]
pub struct DelayMatrices {
    /// `d x (m2-m1)`, column `j` is `x_d[m1-1+j]`.
    pub x: Mat<f64>,
    /// `d x (m2-m1)`, column `j` is `x_d[m1+j]`.
    pub y: Mat<f64>,
    pub d: usize,
    pub m1: usize,
    pub m2: usize,
    pub dt: f64,
}

impl DelayMatrices {
    pub fn n_cols(&self) -> usize {
        self.m2 - self.m1
    }
}

pub(crate) fn check_range(d: usize, m1: usize, m2: usize, n: usize) -> Result<()> {
    if d == 0 {
        return Err(DefError::InvalidArgument("delay order must be >= 1".into()));
    }
    if !(d <= m1 && m1 < m2 && m2 <= n) {
        return Err(DefError::OutOfRange(format!(
            "snapshot range needs d <= m1 < m2 <= N, got d={d}, m1={m1}, m2={m2}, N={n}"
        )));
    }
    Ok(())
}

pub fn build_matrices(series: &TimeSeries, d: usize, m1: usize, m2: usize) -> Result<DelayMatrices> {
    check_range(d, m1, m2, series.len())?;
    let y = series.samples();
    let cols = m2 - m1;
    let x = Mat::from_fn(d, cols, |r, j| y[m1 - 1 + j - r]);
    let yy = Mat::from_fn(d, cols, |r, j| y[m1 + j - r]);
    Ok(DelayMatrices {
        x,
        y: yy,
        d,
        m1,
        m2,
        dt: series.dt(),
    })
}

/// Matrices over the default identification range `(d, N)`.
pub fn build_default(series: &TimeSeries, d: usize) -> Result<DelayMatrices> {
    build_matrices(series, d, d, series.len())
}

/// Transposed snapshot blocks `(X^T, Y^T)` built straight from the series.
pub(crate) fn transposed_blocks(y: &[f64], d: usize, m1: usize, m2: usize) -> (Mat<f64>, Mat<f64>) {
    let cols = m2 - m1;
    let xt = Mat::from_fn(cols, d, |j, r| y[m1 - 1 + j - r]);
    let yt = Mat::from_fn(cols, d, |j, r| y[m1 + j - r]);
    (xt, yt)
}

/// Input-lag snapshot matrix: column `j` stacks `u[m1-1+j], u[m1-2+j], ...,
/// u[m1-d+j]`, each an `m`-vector, giving `d*m` rows.
#[derive(Debug, Clone)]
pub struct InputDelayMatrices {
    pub u: Mat<f64>,
    pub d: usize,
    pub m: usize,
    pub m1: usize,
    pub m2: usize,
}

/// `u_d[n]`: the input delay vector (lag-major, channel-minor).
pub fn input_delay_vector(input: &InputSeries, n: usize, d: usize) -> Result<Vec<f64>> {
    if d == 0 || n + 1 < d || n >= input.len() {
        return Err(DefError::OutOfRange(format!(
            "input delay vector at n={n} with d={d} needs d-1 <= n < N={}",
            input.len()
        )));
    }
    let mut v = Vec::with_capacity(d * input.n_channels());
    for r in 0..d {
        v.extend(input.at(n - r));
    }
    Ok(v)
}

pub fn build_input_matrices(input: &InputSeries, d: usize, m1: usize, m2: usize) -> Result<InputDelayMatrices> {
    check_range(d, m1, m2, input.len())?;
    let m = input.n_channels();
    let ch = input.channels();
    let u = Mat::from_fn(d * m, m2 - m1, |row, j| {
        let (r, c) = (row / m, row % m);
        ch[c][m1 - 1 + j - r]
    });
    Ok(InputDelayMatrices { u, d, m, m1, m2 })
}
