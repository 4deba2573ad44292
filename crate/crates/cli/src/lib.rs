//! Argument definitions and command dispatch for the `def` binary.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use def_core::baselines::{self, DmdRank};
use def_core::def_spectrum::{self, AmplitudeEstimator, AmplitudeSpectrum, ModeOptions, ModeSet};
use def_core::linear_model::{self, CandidateGrid, OrderSelection};
use def_core::peak_extract::{self, PeakParams, PeakReport};
use def_core::series_io::{self, write_json, write_result, ResultMeta};
use def_core::toygen::{self, ToyConfig};
use def_core::{ColumnSelector, DefError, Result, TimeSeries};
use serde::Serialize;
use serde_json::json;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "def", version, about = "Exponential time-scale analysis of scalar time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the switched-mass oscillator benchmark
    Generate(GenerateArgs),
    /// Evaluate the AIC over candidate orders and report the minimizer
    SelectOrder(SelectOrderArgs),
    /// Identify the delay model and compute amplitude spectra
    Analyze(AnalyzeArgs),
    /// Extract dominant peaks from a stored spectrum
    Peaks(PeaksArgs),
    /// Singular spectrum analysis reconstructed components
    Ssa(SsaArgs),
    /// Delay-embedded dynamic mode decomposition
    Dmd(DmdArgs),
    /// Relative AIC curves for several prediction horizons
    AicCurves(AicCurvesArgs),
    /// Run analyze, ssa and dmd on one series and join the results
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutFormat {
    Csv,
    Json,
}

impl OutFormat {
    fn core(self) -> series_io::Format {
        match self {
            OutFormat::Csv => series_io::Format::Csv,
            OutFormat::Json => series_io::Format::Json,
        }
    }

    fn ext(self) -> &'static str {
        match self {
            OutFormat::Csv => "csv",
            OutFormat::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// A=1, tau0=1000, tau1=100, N=15000, T0=5000, T1=10000, dt=1, noise variance 1e-6
    #[value(alias = "toy-sec3")]
    Toy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// Projection onto the fitted exponential
    Exponential,
    /// Projection onto the raw eigenvector
    Projection,
}

impl From<Estimator> for AmplitudeEstimator {
    fn from(e: Estimator) -> Self {
        match e {
            Estimator::Exponential => AmplitudeEstimator::Exponential,
            Estimator::Projection => AmplitudeEstimator::EigenvectorProjection,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    /// Input series CSV
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Column to read: header name or 0-based index
    #[arg(long, default_value = "0")]
    pub column: String,
    /// Sampling period; required unless the file has a `# dt=` line
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    /// Output directory (created if missing)
    #[arg(long, env = "DEF_OUT_DIR", default_value = ".")]
    pub out: PathBuf,
    /// Output format for result tables
    #[arg(long, value_enum, default_value_t = OutFormat::Csv)]
    pub format: OutFormat,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AicArgs {
    /// Candidate orders: start:stop:step (stop inclusive) or a comma list
    #[arg(long, default_value = "100:2000:100")]
    pub omega: String,
    /// Prediction horizon of the AIC
    #[arg(long = "L", default_value_t = linear_model::DEFAULT_HORIZON)]
    pub l_horizon: usize,
    /// Noise variance in the AIC penalty
    #[arg(long, default_value_t = 5e-6)]
    pub sigma2: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PeakArgs {
    /// Log-period window width (natural-log units)
    #[arg(long, default_value_t = 0.25)]
    pub w: f64,
    /// Isolation stabilizer; defaults to 1e-12 times the largest amplitude
    #[arg(long)]
    pub eps: Option<f64>,
    /// Dominance threshold on the score
    #[arg(long, default_value_t = 0.0)]
    pub theta: f64,
    /// Number of peaks to report
    #[arg(long, default_value_t = 6)]
    pub k_top: usize,
    /// Drop candidates scoring below --theta before taking the top --k-top
    #[arg(long)]
    pub apply_theta: bool,
}

impl PeakArgs {
    fn params(&self) -> PeakParams {
        PeakParams {
            w: self.w,
            eps: self.eps,
            theta: self.theta,
            k_top: self.k_top,
            apply_theta: self.apply_theta,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    /// Parameter preset
    #[arg(long, value_enum, default_value_t = Preset::Toy)]
    pub preset: Preset,
    /// Noise seed
    #[arg(long, default_value_t = toygen::DEFAULT_SEED)]
    pub seed: u64,
    /// Observation noise variance; defaults to the preset's value
    #[arg(long)]
    pub noise_variance: Option<f64>,
    /// File name stem of the outputs
    #[arg(long, default_value = "toy")]
    pub name: String,
    /// Also write velocity and input series
    #[arg(long)]
    pub all: bool,
    /// Output directory (created if missing)
    #[arg(long, env = "DEF_OUT_DIR", default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SelectOrderArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub aic: AicArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OrderArgs {
    /// Fixed delay order; without it the order is selected over --omega
    #[arg(long)]
    pub d: Option<usize>,
    #[command(flatten)]
    pub aic: AicArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub order: OrderArgs,
    /// Time index of a spectrum (repeatable)
    #[arg(long = "at", required = true, value_name = "N")]
    pub at: Vec<usize>,
    /// Amplitude estimator
    #[arg(long, value_enum, default_value_t = Estimator::Exponential)]
    pub estimator: Estimator,
    /// Exponential-fit residual above which a mode is flagged
    #[arg(long, default_value_t = def_spectrum::REFINE_THRESHOLD)]
    pub residual_threshold: f64,
    #[command(flatten)]
    pub peaks: PeakArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PeaksArgs {
    /// Spectrum CSV written by `analyze`
    #[arg(long, value_name = "PATH")]
    pub spectrum: PathBuf,
    /// Time index recorded in the report
    #[arg(long, default_value_t = 0)]
    pub n: usize,
    #[command(flatten)]
    pub peaks: PeakArgs,
    /// Output directory (created if missing)
    #[arg(long, env = "DEF_OUT_DIR", default_value = ".")]
    pub out: PathBuf,
    /// Output format of the report
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    pub format: OutFormat,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SsaArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub order: OrderArgs,
    /// Components to reconstruct, 1-based, comma separated
    #[arg(long, default_value = "1,2", value_delimiter = ',')]
    pub components: Vec<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DmdArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub order: OrderArgs,
    /// Truncation rank, or "energy" for 99.9% energy capped at 200
    #[arg(long, default_value = "energy")]
    pub rank: String,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AicCurvesArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Candidate orders: start:stop:step (stop inclusive) or a comma list
    #[arg(long, default_value = "100:2000:100")]
    pub omega: String,
    /// Prediction horizons, comma separated
    #[arg(long, default_value = "1,5,20", value_delimiter = ',')]
    pub horizons: Vec<usize>,
    /// Noise variance in the AIC penalty
    #[arg(long, default_value_t = 5e-6)]
    pub sigma2: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub order: OrderArgs,
    /// Time index of a DEF spectrum (repeatable)
    #[arg(long = "at", required = true, value_name = "N")]
    pub at: Vec<usize>,
    /// SSA components to reconstruct, 1-based, comma separated
    #[arg(long, default_value = "1,2", value_delimiter = ',')]
    pub components: Vec<usize>,
    /// DMD truncation rank, or "energy"
    #[arg(long, default_value = "energy")]
    pub rank: String,
    #[command(flatten)]
    pub peaks: PeakArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Parse `argv`, run the command and return the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    match dispatch(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERIC
            } else {
                EXIT_USAGE
            }
        }
    }
}

pub fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Generate(a) => generate(a),
        Command::SelectOrder(a) => select_order(a),
        Command::Analyze(a) => analyze(a),
        Command::Peaks(a) => peaks(a),
        Command::Ssa(a) => ssa(a),
        Command::Dmd(a) => dmd(a),
        Command::AicCurves(a) => aic_curves(a),
        Command::Compare(a) => compare(a),
    }
}

fn out_dir(dir: &Path) -> Result<&Path> {
    fs::create_dir_all(dir).map_err(|e| DefError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(dir)
}

fn load(input: &InputArgs) -> Result<TimeSeries> {
    let column: ColumnSelector = input.column.parse().unwrap_or_else(|e| match e {});
    series_io::load_series(&input.input, &column, input.dt)
}

/// Resolved run configuration written next to the outputs.
fn write_sidecar(dir: &Path, command: &str, args: &impl Serialize, resolved: serde_json::Value) -> Result<()> {
    let doc = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "args": args,
        "resolved": resolved,
    });
    write_json(&doc, dir.join(format!("{command}.config.json")))
}

fn meta(series: &TimeSeries, d: Option<usize>, aic: Option<&AicArgs>) -> ResultMeta {
    ResultMeta {
        d_star: d,
        l_horizon: aic.map(|a| a.l_horizon),
        sigma2: aic.map(|a| a.sigma2),
        dt: series.dt(),
        n_samples: series.len(),
    }
}

fn run_selection(series: &TimeSeries, aic: &AicArgs) -> Result<OrderSelection> {
    let grid: CandidateGrid = aic.omega.parse()?;
    linear_model::select_order(series, &grid.0, aic.l_horizon, aic.sigma2)
}

/// The fixed `--d`, or the AIC minimizer (written to `aic.<ext>`).
fn resolve_order(series: &TimeSeries, order: &OrderArgs, dir: &Path, format: OutFormat) -> Result<(usize, Option<OrderSelection>)> {
    if let Some(d) = order.d {
        return Ok((d, None));
    }
    let sel = run_selection(series, &order.aic)?;
    write_result(
        &sel,
        &meta(series, Some(sel.d_star), Some(&order.aic)),
        dir.join(format!("aic.{}", format.ext())),
        format.core(),
    )?;
    println!("d* = {}", sel.d_star);
    Ok((sel.d_star, Some(sel)))
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let dir = out_dir(&a.out)?;
    let mut cfg = match a.preset {
        Preset::Toy => ToyConfig::reference(),
    };
    cfg.seed = a.seed;
    if let Some(v) = a.noise_variance {
        cfg.noise_variance = v;
    }
    let sim = toygen::simulate(&cfg)?;
    series_io::write_series(&sim.position, dir.join(format!("{}.csv", a.name)))?;
    if a.all {
        series_io::write_series(&sim.velocity, dir.join(format!("{}_velocity.csv", a.name)))?;
        series_io::write_series(&sim.input, dir.join(format!("{}_input.csv", a.name)))?;
    }
    write_sidecar(
        dir,
        "generate",
        a,
        json!({ "config": cfg, "tau0": cfg.tau0(), "tau1": cfg.tau1() }),
    )?;
    println!("wrote {} samples to {}", sim.position.len(), dir.join(format!("{}.csv", a.name)).display());
    Ok(())
}

fn select_order(a: &SelectOrderArgs) -> Result<()> {
    let dir = out_dir(&a.output.out)?;
    let series = load(&a.input)?;
    let sel = run_selection(&series, &a.aic)?;
    write_result(
        &sel,
        &meta(&series, Some(sel.d_star), Some(&a.aic)),
        dir.join(format!("aic.{}", a.output.format.ext())),
        a.output.format.core(),
    )?;
    write_sidecar(dir, "select-order", a, json!({ "d_star": sel.d_star, "min_aic": sel.min_aic() }))?;
    println!("d* = {}", sel.d_star);
    Ok(())
}

struct DefRun {
    d: usize,
    modes: ModeSet,
    spectra: Vec<AmplitudeSpectrum>,
    reports: Vec<PeakReport>,
}

fn run_def(
    series: &TimeSeries,
    order: &OrderArgs,
    at: &[usize],
    estimator: AmplitudeEstimator,
    residual_threshold: f64,
    peaks: &PeakArgs,
    output: &OutputArgs,
) -> Result<DefRun> {
    let dir = out_dir(&output.out)?;
    let fmt = output.format;
    let (d, _) = resolve_order(series, order, dir, fmt)?;
    let model = linear_model::identify_series(series, d)?;
    if model.rank_deficient() {
        log::warn!("regressor rank {} < d = {d}", model.rank);
    }
    let modes = def_spectrum::build_mode_set_with(&model, &ModeOptions { residual_threshold })?;
    let m = meta(series, Some(d), Some(&order.aic));
    write_result(&modes, &m, dir.join(format!("modes.{}", fmt.ext())), fmt.core())?;
    let params = peaks.params();
    let mut spectra = Vec::new();
    let mut reports = Vec::new();
    for &n in at {
        let spec = def_spectrum::amplitude_at(series, &modes, n, estimator)?;
        write_result(&spec, &m, dir.join(format!("spectrum_n{n}.{}", fmt.ext())), fmt.core())?;
        let report = peak_extract::extract_peaks(&spec, &params)?;
        write_result(&report, &m, dir.join(format!("peaks_n{n}.{}", fmt.ext())), fmt.core())?;
        if let Some(top) = report.reported.first() {
            println!("n = {n}: top peak T = {} (|A| = {})", top.time_constant, top.amplitude);
        }
        spectra.push(spec);
        reports.push(report);
    }
    Ok(DefRun {
        d,
        modes,
        spectra,
        reports,
    })
}

fn analyze(a: &AnalyzeArgs) -> Result<()> {
    let series = load(&a.input)?;
    let run = run_def(
        &series,
        &a.order,
        &a.at,
        a.estimator.into(),
        a.residual_threshold,
        &a.peaks,
        &a.output,
    )?;
    write_sidecar(
        &a.output.out,
        "analyze",
        a,
        json!({
            "d": run.d,
            "n_modes": run.modes.len(),
            "min_pair_distance": finite(run.modes.min_pair_distance),
            "peak_params": run.reports.first().map(|r| r.params),
        }),
    )
}

fn finite(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        serde_json::Value::Null
    }
}

fn peaks(a: &PeaksArgs) -> Result<()> {
    let dir = out_dir(&a.out)?;
    let spec = def_spectrum::read_spectrum(&a.spectrum, a.n)?;
    let report = peak_extract::extract_peaks(&spec, &a.peaks.params())?;
    let m = ResultMeta::default();
    write_result(&report, &m, dir.join(format!("peaks.{}", a.format.ext())), a.format.core())?;
    write_sidecar(dir, "peaks", a, json!({ "params": report.params }))?;
    for p in &report.reported {
        println!("T = {}  |A| = {}  q = {}", p.time_constant, p.amplitude, p.score);
    }
    Ok(())
}

fn zero_based(components: &[usize]) -> Result<Vec<usize>> {
    components
        .iter()
        .map(|&c| {
            c.checked_sub(1)
                .ok_or_else(|| DefError::InvalidArgument("components are numbered from 1".into()))
        })
        .collect()
}

fn run_ssa(series: &TimeSeries, d: usize, components: &[usize], output: &OutputArgs, m: &ResultMeta) -> Result<baselines::SsaComponents> {
    let idx = zero_based(components)?;
    let dec = baselines::ssa_decompose(series, d)?;
    let comps = baselines::ssa_components(&dec, &idx)?;
    let fmt = output.format;
    write_result(&comps, m, output.out.join(format!("ssa.{}", fmt.ext())), fmt.core())?;
    Ok(comps)
}

fn ssa(a: &SsaArgs) -> Result<()> {
    let dir = out_dir(&a.output.out)?;
    let series = load(&a.input)?;
    let (d, _) = resolve_order(&series, &a.order, dir, a.output.format)?;
    let comps = run_ssa(&series, d, &a.components, &a.output, &meta(&series, Some(d), Some(&a.order.aic)))?;
    write_sidecar(dir, "ssa", a, json!({ "d": d, "singular_values": comps.singular_values }))
}

fn run_dmd(series: &TimeSeries, d: usize, rank: &str, output: &OutputArgs, m: &ResultMeta) -> Result<baselines::DmdDecomposition> {
    let rank: DmdRank = rank.parse()?;
    let matrices = def_core::hankel::build_default(series, d)?;
    let dec = baselines::dmd_decompose(&matrices, rank)?;
    let fmt = output.format;
    write_result(&dec, m, output.out.join(format!("dmd.{}", fmt.ext())), fmt.core())?;
    Ok(dec)
}

fn dmd(a: &DmdArgs) -> Result<()> {
    let dir = out_dir(&a.output.out)?;
    let series = load(&a.input)?;
    let (d, _) = resolve_order(&series, &a.order, dir, a.output.format)?;
    let dec = run_dmd(&series, d, &a.rank, &a.output, &meta(&series, Some(d), Some(&a.order.aic)))?;
    if let Some(top) = dec.dominant_oscillatory() {
        println!("rank {}: largest-contribution period {}", dec.rank, top.period.unwrap_or(f64::NAN));
    }
    write_sidecar(dir, "dmd", a, json!({ "d": d, "rank": dec.rank }))
}

fn aic_curves(a: &AicCurvesArgs) -> Result<()> {
    let dir = out_dir(&a.output.out)?;
    let series = load(&a.input)?;
    let grid: CandidateGrid = a.omega.parse()?;
    let curves = linear_model::relative_aic_curves(&series, &grid.0, &a.horizons, a.sigma2)?;
    let m = ResultMeta {
        sigma2: Some(a.sigma2),
        ..meta(&series, None, None)
    };
    write_result(&curves, &m, dir.join(format!("aic_curves.{}", a.output.format.ext())), a.output.format.core())?;
    let argmins: Vec<_> = a.horizons.iter().map(|&l| json!({ "L": l, "argmin": curves.argmin(l) })).collect();
    for &l in &a.horizons {
        println!("L = {l}: argmin d = {}", curves.argmin(l).unwrap_or(0));
    }
    write_sidecar(dir, "aic-curves", a, json!({ "argmin": argmins }))
}

fn compare(a: &CompareArgs) -> Result<()> {
    let dir = out_dir(&a.output.out)?;
    let series = load(&a.input)?;
    let (d, sel) = resolve_order(&series, &a.order, dir, a.output.format)?;
    let fixed = OrderArgs {
        d: Some(d),
        aic: a.order.aic.clone(),
    };
    let def = run_def(
        &series,
        &fixed,
        &a.at,
        AmplitudeEstimator::Exponential,
        def_spectrum::REFINE_THRESHOLD,
        &a.peaks,
        &a.output,
    )?;
    let m = meta(&series, Some(d), Some(&a.order.aic));
    let ssa = run_ssa(&series, d, &a.components, &a.output, &m)?;
    let dmd = run_dmd(&series, d, &a.rank, &a.output, &m)?;

    let y = series.samples();
    let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut dmd_top: Vec<_> = dmd.oscillatory().collect();
    dmd_top.sort_by(|p, q| q.contribution.total_cmp(&p.contribution));
    let report = json!({
        "d": d,
        "aic_min": sel.as_ref().map(|s| s.min_aic()),
        "def": def.reports.iter().zip(&def.spectra).map(|(r, s)| json!({
            "n": s.time_index,
            "argmax_time_constant": s.argmax().map(|e| e.time_constant),
            "peaks": r.reported.iter().map(|p| json!({"time_constant": p.time_constant, "amplitude": p.amplitude, "score": finite(p.score)})).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "ssa": ssa.indices.iter().zip(&ssa.singular_values).zip(&ssa.components).map(|((i, s), rc)| {
            let err = rc.samples().iter().zip(y).map(|(r, v)| (r - v).powi(2)).sum::<f64>().sqrt();
            json!({"component": i + 1, "singular_value": s, "relative_error_to_input": err / y_norm})
        }).collect::<Vec<_>>(),
        "dmd": {
            "rank": dmd.rank,
            "oscillatory": dmd_top.iter().take(10).map(|m| json!({
                "period": m.period,
                "contribution": m.contribution,
            })).collect::<Vec<_>>(),
        },
    });
    write_json(&report, dir.join("compare.json"))?;
    write_sidecar(dir, "compare", a, json!({ "d": d, "dmd_rank": dmd.rank }))
}
