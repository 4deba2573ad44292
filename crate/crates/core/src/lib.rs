//! Data-driven exponential framing of scalar time series.
//!
//! A linear delay-coordinate model `x_d[n+1] ≈ Ã_d x_d[n]` is identified by
//! least squares, its order chosen by a prediction-based information
//! criterion, and its eigenvectors interpreted as discrete exponentials.
//! The resulting per-mode amplitudes form a spectrum over time constants.

pub mod baselines;
pub mod def_spectrum;
pub mod error;
pub mod hankel;
pub mod linear_model;
pub mod peak_extract;
pub mod series_io;
pub mod toygen;

pub use baselines::{dmd_decompose, ssa_decompose, ssa_reconstruct, DmdDecomposition, DmdRank, SsaDecomposition};
pub use def_spectrum::{
    amplitude_at, amplitude_forced, analyze, build_mode_set, eigendecompose, fit_exponential, AmplitudeEstimator,
    AmplitudeSpectrum, AnalysisConfig, DefAnalysis, ExpFit, Mode, ModeSet,
};
pub use error::{DefError, Result};
pub use hankel::{build_default, build_matrices, delay_vector, DelayMatrices};
pub use linear_model::{
    aic, identify, identify_forced, identify_series, predict, select_order, CandidateGrid, ForcedModel,
    IdentifiedModel, OrderSelection,
};
pub use peak_extract::{extract_peaks, PeakParams, PeakReport};
pub use series_io::{load_series, ColumnSelector, Format, InputSeries, TimeSeries};
pub use toygen::{simulate, ToyConfig, ToySimulation};
