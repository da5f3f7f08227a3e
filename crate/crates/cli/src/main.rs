use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use tml_core::ghdist::{Family, FitOptions};
use tml_core::indices::{self, IndexSpec, Innovation, SimulatedPath, SimulatedPaths, SimulationSpec};
use tml_core::ingest::{self, CsvOptions};
use tml_core::io::{read_column, read_first_date, write_atomic};
use tml_core::pipeline::{self, DistributionFit, EmSettings, PipelineConfig, Report, SeasonalitySection, Table, TmlFit};
use tml_core::regime::{self, EmConfig, InitialProbs, LevelGuard, RegimeModel, ShiftedLaw};
use tml_core::seasonal::{self, DeseasonalizeMode};
use tml_core::stats;
use tml_core::{Error, ErrorKind, Execution, Result};

/// Two-regime daily temperature toolkit.
#[derive(Parser)]
#[command(name = "tml", version, about)]
struct Cli {
    /// Run every batch step on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a station file, fill gaps and print descriptive statistics.
    Ingest(IngestArgs),
    /// Fit the seasonal model and remove it.
    Deseasonalize(DeseasonalizeArgs),
    /// Calibrate the regime model by EM.
    Calibrate(CalibrateArgs),
    /// Fit distribution families by maximum likelihood.
    Fitdist(FitdistArgs),
    /// Normality, ARCH, Hurst and goodness-of-fit diagnostics.
    Gof(GofArgs),
    /// Simulate temperature paths from a calibrated model.
    Simulate(SimulateArgs),
    /// CAT or GDD index of a series or of simulated paths.
    Indices(IndicesArgs),
    /// Render tables from a report.
    Report(ReportArgs),
    /// Run the full workflow from a JSON config.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Station CSV with columns date,tmax,tmin[,tavg].
    #[arg(long)]
    input: PathBuf,
    /// Filled series in the `date,tmax,tmin,tavg` schema.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    station: Option<String>,
    #[arg(long, default_value_t = 7)]
    gap_window: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    SinusoidOnly,
}

impl From<ModeArg> for DeseasonalizeMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Full => DeseasonalizeMode::Full,
            ModeArg::SinusoidOnly => DeseasonalizeMode::SinusoidOnly,
        }
    }
}

#[derive(Args)]
struct DeseasonalizeArgs {
    /// Complete series, e.g. the output of `ingest`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "tavg")]
    column: String,
    #[arg(long, value_enum, default_value_t = ModeArg::Full)]
    mode: ModeArg,
    /// CSV `date,t,deseasonalized`.
    #[arg(long)]
    output: PathBuf,
    /// Seasonal coefficients as JSON.
    #[arg(long)]
    params: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum GuardArg {
    Floor,
    Error,
}

#[derive(Clone, Copy, ValueEnum)]
enum LawArg {
    Gaussian,
    Hyperbolic,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "deseasonalized")]
    column: String,
    /// Deseasonalization mode that produced the input, for the record.
    #[arg(long, value_enum, default_value_t = ModeArg::Full)]
    mode: ModeArg,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 4)]
    starts: usize,
    #[arg(long, value_enum, default_value_t = GuardArg::Floor)]
    guard: GuardArg,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, value_enum, default_value_t = LawArg::Gaussian)]
    shifted_law: LawArg,
    /// Estimate first-day regime probabilities instead of using the
    /// stationary law.
    #[arg(long)]
    estimate_initial: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.8)]
    threshold: f64,
    /// Model and fit summary as JSON.
    #[arg(long)]
    output: PathBuf,
    /// Regime labels CSV `date,prob_extreme,label`.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Pooled regime residuals CSV `residual`.
    #[arg(long)]
    residuals: Option<PathBuf>,
}

#[derive(Args)]
struct FitdistArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "residual")]
    column: String,
    /// Families to fit (GH, NIG, HYP, VG, Normal); all when omitted.
    #[arg(long, value_delimiter = ',')]
    families: Vec<String>,
    #[arg(long, default_value_t = 8)]
    starts: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct GofArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "residual")]
    column: String,
    /// Fits written by `fitdist`, tested against the same samples.
    #[arg(long)]
    fits: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    chi2_bins: usize,
    #[arg(long, default_value_t = 12)]
    arch_lags: usize,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum InnovationArg {
    Gaussian,
    /// The hyperbolic law stored in the calibration, if any.
    Model,
}

#[derive(Args)]
struct SimulateArgs {
    /// Output of `calibrate`.
    #[arg(long)]
    calibration: PathBuf,
    /// Output of `deseasonalize --params`.
    #[arg(long)]
    seasonal: PathBuf,
    #[arg(long)]
    days: usize,
    #[arg(long, default_value_t = 100)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Temperature on day 0.
    #[arg(long)]
    initial_value: f64,
    /// Seasonal time of day 0.
    #[arg(long, default_value_t = 0)]
    t0: usize,
    #[arg(long, value_enum, default_value_t = InnovationArg::Gaussian)]
    innovation: InnovationArg,
    #[arg(long)]
    allow_unstable: bool,
    /// CSV `path_id,day,regime,t_tilde,temperature`.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Cat,
    Gdd,
}

#[derive(Args)]
struct IndicesArgs {
    /// A series CSV, or a paths CSV from `simulate`.
    #[arg(long)]
    input: PathBuf,
    /// Temperature column of a series file.
    #[arg(long, default_value = "tavg")]
    column: String,
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long)]
    tau1: usize,
    #[arg(long)]
    tau2: usize,
    /// Required for GDD.
    #[arg(long)]
    t_optimal: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    report: PathBuf,
    /// seasonality, distributions, tml or gof; all when omitted.
    #[arg(long)]
    table: Option<String>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config; `TML_OUTPUT_DIR` applies when neither is set.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct SeasonalFile {
    mode: DeseasonalizeMode,
    #[serde(flatten)]
    seasonality: SeasonalitySection,
}

#[derive(Serialize, Deserialize)]
struct CalibrationFile {
    model: RegimeModel,
    tml_fit: TmlFit,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let options = CsvOptions { station_id: a.station.clone(), ..CsvOptions::default() };
    let raw = ingest::load_station_csv(&a.input, &options)?;
    let filled = ingest::fill_missing(&raw, a.gap_window)?;
    ingest::write_station_csv(&filled, &a.output)?;
    let stats = ingest::descriptive_stats(&filled.complete_values()?)?;
    print_json(&serde_json::json!({
        "station": filled.station_id,
        "start_date": filled.start_date,
        "filled_days": raw.missing_count(),
        "stats": stats,
    }))
}

fn deseasonalize(a: &DeseasonalizeArgs) -> Result<()> {
    let values = read_column(&a.input, &a.column)?;
    let start = read_first_date(&a.input)?
        .ok_or_else(|| Error::Validation(format!("{} has no `date` column", a.input.display())))?;
    let raw = seasonal::fit_seasonal(&values)?;
    let params = seasonal::to_amplitude_phase(&raw);
    let mode = a.mode.into();
    let des = seasonal::deseasonalize_values(&values, &params, mode);
    let mut csv = String::from("date,t,deseasonalized\n");
    for (i, v) in des.iter().enumerate() {
        csv.push_str(&format!("{},{},{v}\n", ingest::nth_day(start, i), i + 1));
    }
    write_atomic(&a.output, csv.as_bytes())?;
    let file = SeasonalFile {
        mode,
        seasonality: SeasonalitySection {
            origin_date: start,
            period_days: seasonal::PERIOD_DAYS,
            raw,
            normalized: params,
            signed_phase: seasonal::to_signed_phase(&raw),
        },
    };
    write_json(&a.params, &file)?;
    print_json(&file)
}

fn calibrate(a: &CalibrateArgs, exec: Execution) -> Result<()> {
    let values = read_column(&a.input, &a.column)?;
    let guard = match a.guard {
        GuardArg::Floor => LevelGuard::Floor(a.epsilon),
        GuardArg::Error => LevelGuard::Error(a.epsilon),
    };
    let settings = EmSettings {
        config: EmConfig {
            tol: a.tol,
            max_iter: a.max_iter,
            guard,
            shifted_law: match a.shifted_law {
                LawArg::Gaussian => ShiftedLaw::Gaussian,
                LawArg::Hyperbolic => ShiftedLaw::Hyperbolic,
            },
            initial_probs: if a.estimate_initial { InitialProbs::Estimated } else { InitialProbs::Stationary },
            ..EmConfig::default()
        },
        starts: a.starts,
    };
    let em = regime::em_calibrate_multistart(&values, &settings.config, settings.starts, a.seed, exec)?;
    let (tml_fit, prob, labels) = pipeline::summarize_em(&em, a.mode.into(), &settings, a.threshold)?;
    if let Some(path) = &a.labels {
        let start = read_first_date(&a.input)?.unwrap_or_default();
        write_atomic(path, pipeline::labels_csv(start, &prob, &labels).as_bytes())?;
    }
    if let Some(path) = &a.residuals {
        let r = regime::extract_regime_residuals(&values, &em.model, &em.filter.smoothed, guard)?;
        let mut csv = String::from("residual\n");
        for v in &r.pooled {
            csv.push_str(&format!("{v}\n"));
        }
        write_atomic(path, csv.as_bytes())?;
    }
    let file = CalibrationFile { model: em.model.canonical(), tml_fit };
    write_json(&a.output, &file)?;
    print_json(&file.tml_fit.params)
}

fn parse_families(names: &[String]) -> Result<Vec<Family>> {
    if names.is_empty() {
        return Ok(Family::ALL.to_vec());
    }
    names.iter().map(|n| n.parse()).collect()
}

fn fitdist(a: &FitdistArgs, exec: Execution) -> Result<()> {
    let samples = read_column(&a.input, &a.column)?;
    let families = parse_families(&a.families)?;
    let options = FitOptions { starts: a.starts, execution: exec, ..FitOptions::default() };
    let (fits, gof) = pipeline::fit_distributions(&samples, &families, &options)?;
    write_json(&a.output, &fits)?;
    print_json(&serde_json::json!({ "distribution_fits": fits, "distribution_gof": gof }))
}

fn gof(a: &GofArgs) -> Result<()> {
    let x = read_column(&a.input, &a.column)?;
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut out = serde_json::json!({
        "normality_tests": {
            "chi2": stats::pearson_chi2_normal(&x, a.chi2_bins)?,
            "jarque_bera": stats::jarque_bera(&x)?,
            "anderson_darling": stats::anderson_darling(&x, stats::normal_cdf(mean, sd), true)?,
            "kolmogorov_smirnov": stats::kolmogorov_smirnov(&x, stats::normal_cdf(mean, sd))?,
        },
        "arch_test": stats::engle_arch(&x, a.arch_lags)?,
        "hurst": stats::hurst_rs(&x)?,
    });
    if let Some(path) = &a.fits {
        let fits: Vec<DistributionFit> = read_json(path)?;
        let mut rows = Vec::new();
        for f in &fits {
            let cdf = f.params.density()?.cdf_many(&x)?;
            rows.push(serde_json::json!({
                "family": f.family,
                "kolmogorov_smirnov": stats::kolmogorov_smirnov_from_cdf(&cdf)?,
                "anderson_darling": stats::anderson_darling_from_cdf(&cdf, true)?,
            }));
        }
        out["distribution_gof"] = serde_json::Value::Array(rows);
    }
    if let Some(path) = &a.output {
        write_json(path, &out)?;
    }
    print_json(&out)
}

fn simulate(a: &SimulateArgs, exec: Execution) -> Result<()> {
    let cal: CalibrationFile = read_json(&a.calibration)?;
    let seasonal: SeasonalFile = read_json(&a.seasonal)?;
    let innovation = match a.innovation {
        InnovationArg::Gaussian => Innovation::Gaussian,
        InnovationArg::Model => Innovation::from_model(&cal.model),
    };
    let spec = SimulationSpec {
        model: RegimeModel { shifted_hyp: None, ..cal.model },
        seasonal: seasonal.seasonality.normalized,
        mode: seasonal.mode,
        innovation,
        n_days: a.days,
        n_paths: a.paths,
        seed: a.seed,
        initial_value: a.initial_value,
        t0: a.t0,
        initial_regime: None,
        allow_unstable: a.allow_unstable,
    };
    let paths = indices::simulate_paths(&spec, exec)?;
    indices::write_paths_csv(&paths, &a.output)?;
    print_json(&serde_json::json!({ "paths": paths.paths.len(), "days": paths.n_days, "output": a.output }))
}

/// Paths back from the CSV written by `simulate`.
fn read_paths(path: &Path) -> Result<SimulatedPaths> {
    let ids = read_column(path, "path_id")?;
    let regime = read_column(path, "regime")?;
    let t_tilde = read_column(path, "t_tilde")?;
    let temperature = read_column(path, "temperature")?;
    let mut paths: Vec<SimulatedPath> = Vec::new();
    for i in 0..ids.len() {
        let k = ids[i] as usize;
        if k == paths.len() {
            paths.push(SimulatedPath { regime: Vec::new(), t_tilde: Vec::new(), temperature: Vec::new() });
        } else if k + 1 != paths.len() {
            return Err(Error::Validation(format!("{}: path ids must be contiguous from 0", path.display())));
        }
        let p = paths.last_mut().expect("pushed above");
        p.regime.push(regime[i] as u8);
        p.t_tilde.push(t_tilde[i]);
        p.temperature.push(temperature[i]);
    }
    let n_days = paths.first().map_or(0, |p| p.temperature.len());
    Ok(SimulatedPaths { n_days, t0: 0, paths })
}

fn index(a: &IndicesArgs) -> Result<()> {
    let spec = match (a.kind, a.t_optimal) {
        (KindArg::Cat, _) => IndexSpec::cat(a.tau1, a.tau2),
        (KindArg::Gdd, Some(t)) => IndexSpec::gdd(a.tau1, a.tau2, t),
        (KindArg::Gdd, None) => return Err(Error::Validation("GDD needs --t-optimal".into())),
    };
    if read_column(&a.input, "path_id").is_ok() {
        let paths = read_paths(&a.input)?;
        print_json(&indices::index_distribution(&paths, &spec)?)
    } else {
        let series = read_column(&a.input, &a.column)?;
        print_json(&serde_json::json!({ "spec": spec, "value": spec.evaluate(&series)? }))
    }
}

fn report(a: &ReportArgs) -> Result<()> {
    let report: Report = read_json(&a.report)?;
    let text = match &a.table {
        Some(t) => pipeline::render_tables(&report, t.parse::<Table>()?)?,
        None => pipeline::render_all_tables(&report)?,
    };
    print!("{text}");
    Ok(())
}

fn run_pipeline(a: &PipelineArgs, sequential: bool) -> Result<()> {
    let mut config = PipelineConfig::load(&a.config)?;
    if let Some(dir) = &a.output_dir {
        config.output_dir = Some(dir.clone());
    }
    if config.output_dir.is_none() {
        config.output_dir = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
    }
    if config.output_dir.is_none() {
        return Err(Error::Validation(format!("no output directory: pass --output-dir, set it in the config or set {OUTPUT_DIR_ENV}")));
    }
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if sequential {
        config.execution = Execution::Sequential;
    }
    let out = pipeline::run_pipeline(&config)?;
    print_json(&serde_json::json!({
        "complete": out.report.complete,
        "report_sha256": out.report.digest()?,
        "written": out.written,
    }))
}

const OUTPUT_DIR_ENV: &str = "TML_OUTPUT_DIR";

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Validation => 2,
        ErrorKind::Numerical => 3,
        ErrorKind::Io => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    let result = match &cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Deseasonalize(a) => deseasonalize(a),
        Command::Calibrate(a) => calibrate(a, exec),
        Command::Fitdist(a) => fitdist(a, exec),
        Command::Gof(a) => gof(a),
        Command::Simulate(a) => simulate(a, exec),
        Command::Indices(a) => index(a),
        Command::Report(a) => report(a),
        Command::Pipeline(a) => run_pipeline(a, cli.sequential),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(hint) = e.hint() {
                eprintln!("hint: {hint}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
