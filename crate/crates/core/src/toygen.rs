//! Switched-mass harmonic oscillator driven by a five-level
//! piecewise-constant force.
//!
//! The force `0 → kA/2 → kA → kA/2 → 0` lifts the oscillator to `A` with a
//! half-sine of half-period `τ₀`, holds it there, and returns it to rest with
//! a half-sine of half-period `τ₁`. The mass is `m0` before `T₁` and `m1`
//! from `T₁` on. Each constant-coefficient segment is integrated in closed
//! form.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{DefError, Result};
use crate::series_io::{add_gaussian_noise, TimeSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub k: f64,
    pub m0: f64,
    pub m1: f64,
    #[serde(rename = "A")]
    pub amplitude: f64,
    pub t0: f64,
    pub t1: f64,
    pub n_samples: usize,
    pub dt: f64,
    pub noise_variance: f64,
    pub seed: u64,
}

/// Seed used by the reference preset.
pub const DEFAULT_SEED: u64 = 20240917;

impl ToyConfig {
    /// Masses giving the half-periods `tau0` (rise) and `tau1` (fall).
    pub fn from_half_periods(k: f64, tau0: f64, tau1: f64) -> (f64, f64) {
        (k * (tau0 / PI).powi(2), k * (tau1 / PI).powi(2))
    }

    /// `A = 1`, `τ₀ = 1000`, `τ₁ = 100`, `N = 15000`, `T₀ = 5000`,
    /// `T₁ = 10000`, `Δt = 1`, noise variance `1e-6`, `k = 1`.
    pub fn reference() -> Self {
        let (m0, m1) = Self::from_half_periods(1.0, 1000.0, 100.0);
        Self {
            k: 1.0,
            m0,
            m1,
            amplitude: 1.0,
            t0: 5000.0,
            t1: 10000.0,
            n_samples: 15000,
            dt: 1.0,
            noise_variance: 1e-6,
            seed: DEFAULT_SEED,
        }
    }

    pub fn tau0(&self) -> f64 {
        PI * (self.m0 / self.k).sqrt()
    }

    pub fn tau1(&self) -> f64 {
        PI * (self.m1 / self.k).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(DefError::InvalidArgument(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        positive("k", self.k)?;
        positive("m0", self.m0)?;
        positive("m1", self.m1)?;
        positive("dt", self.dt)?;
        if !self.amplitude.is_finite() {
            return Err(DefError::InvalidArgument("A must be finite".into()));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(DefError::InvalidArgument(format!(
                "noise variance must be >= 0, got {}",
                self.noise_variance
            )));
        }
        if self.n_samples < 2 {
            return Err(DefError::TooShort(self.n_samples));
        }
        if !(self.t0.is_finite() && self.t0 >= 0.0) {
            return Err(DefError::InvalidArgument(format!("T0 must be >= 0, got {}", self.t0)));
        }
        if self.t0 + self.tau0() > self.t1 {
            return Err(DefError::InvalidArgument(format!(
                "rise ends at T0 + tau0 = {} after T1 = {}",
                self.t0 + self.tau0(),
                self.t1
            )));
        }
        let span = self.n_samples as f64 * self.dt;
        if self.t1 + self.tau1() > span {
            return Err(DefError::InvalidArgument(format!(
                "fall ends at T1 + tau1 = {} beyond N*dt = {span}",
                self.t1 + self.tau1()
            )));
        }
        Ok(())
    }

    /// Switching times `T₀, T₀+τ₀, T₁, T₁+τ₁`.
    pub fn breakpoints(&self) -> [f64; 4] {
        [self.t0, self.t0 + self.tau0(), self.t1, self.t1 + self.tau1()]
    }

    pub fn mass_at(&self, t: f64) -> f64 {
        if t < self.t1 {
            self.m0
        } else {
            self.m1
        }
    }
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self::reference()
    }
}

/// The designed force at time `t`.
pub fn designed_input(cfg: &ToyConfig, t: f64) -> f64 {
    let [a, b, c, e] = cfg.breakpoints();
    let full = cfg.k * cfg.amplitude;
    if t < a {
        0.0
    } else if t < b {
        full / 2.0
    } else if t < c {
        full
    } else if t < e {
        full / 2.0
    } else {
        0.0
    }
}

/// Exact state after `s` time units under constant force `u` and mass `m`.
pub fn propagate(x0: f64, v0: f64, u: f64, m: f64, k: f64, s: f64) -> (f64, f64) {
    let w = (k / m).sqrt();
    let eq = u / k;
    let (sin, cos) = (w * s).sin_cos();
    let x = eq + (x0 - eq) * cos + v0 / w * sin;
    let v = -(x0 - eq) * w * sin + v0 * cos;
    (x, v)
}

#[derive(Debug, Clone)]
pub struct ToySimulation {
    pub config: ToyConfig,
    /// With observation noise when the configured variance is positive.
    pub position: TimeSeries,
    pub clean_position: TimeSeries,
    pub velocity: TimeSeries,
    pub input: TimeSeries,
}

/// Segment boundaries with the state at each one, starting from rest at 0.
fn segment_states(cfg: &ToyConfig) -> Vec<(f64, f64, f64)> {
    let mut states = vec![(0.0, 0.0, 0.0)];
    let (mut x, mut v, mut t) = (0.0, 0.0, 0.0);
    for b in cfg.breakpoints() {
        if b > t {
            (x, v) = propagate(x, v, designed_input(cfg, t), cfg.mass_at(t), cfg.k, b - t);
            t = b;
        }
        states.push((t, x, v));
    }
    states
}

/// Noise-free position and velocity at time `t >= 0`.
pub fn state_at(cfg: &ToyConfig, t: f64) -> (f64, f64) {
    state_from(&segment_states(cfg), cfg, t)
}

fn state_from(states: &[(f64, f64, f64)], cfg: &ToyConfig, t: f64) -> (f64, f64) {
    let &(ts, x, v) = states.iter().rev().find(|s| s.0 <= t).unwrap_or(&states[0]);
    propagate(x, v, designed_input(cfg, ts), cfg.mass_at(ts), cfg.k, t - ts)
}

pub fn simulate(cfg: &ToyConfig) -> Result<ToySimulation> {
    cfg.validate()?;
    let states = segment_states(cfg);
    let n = cfg.n_samples;
    let (mut pos, mut vel, mut inp) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let t = i as f64 * cfg.dt;
        let (x, v) = state_from(&states, cfg, t);
        pos.push(x);
        vel.push(v);
        inp.push(designed_input(cfg, t));
    }
    let clean = TimeSeries::with_name(pos, cfg.dt, "position")?;
    let position = if cfg.noise_variance > 0.0 {
        add_gaussian_noise(&clean, cfg.noise_variance, cfg.seed)?
    } else {
        clean.clone()
    };
    Ok(ToySimulation {
        config: cfg.clone(),
        position,
        clean_position: clean,
        velocity: TimeSeries::with_name(vel, cfg.dt, "velocity")?,
        input: TimeSeries::with_name(inp, cfg.dt, "input")?,
    })
}
