//! End-to-end station workflow: ingest and gap filling, seasonality,
//! residual diagnostics, regime calibration, distribution fitting, indices
//! and report emission.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ghdist::{self, Family, FitOptions, GHParams};
use crate::indices::{self, IndexSpec, IndexSummary, Innovation, SimulationSpec};
use crate::ingest::{self, CsvOptions, DescriptiveStats, TemperatureSeries};
use crate::io::write_atomic;
use crate::par::{self, Execution};
use crate::regime::{self, EmConfig, EmResult, RegimeLabel, RegimeModel, ShiftedLaw};
use crate::seasonal::{self, DeseasonalizeMode, SeasonalFitRaw, SeasonalParams, SignedPhaseParams};
use crate::special::std_normal_quantile;
use crate::stats::{self, TestResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationInput {
    pub id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmSettings {
    #[serde(flatten)]
    pub config: EmConfig,
    /// Jittered initialisations; the best log-likelihood wins.
    pub starts: usize,
}

impl Default for EmSettings {
    fn default() -> Self {
        Self { config: EmConfig::default(), starts: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSettings {
    pub families: Vec<Family>,
    pub starts: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self { families: Family::ALL.to_vec(), starts: FitOptions::default().starts }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestSettings {
    pub arch_lags: usize,
    pub chi2_bins: usize,
    /// Days with smoothed shifted-regime probability above this are labelled
    /// extreme.
    pub regime_threshold: f64,
}

impl Default for TestSettings {
    fn default() -> Self {
        Self { arch_lags: stats::DEFAULT_ARCH_LAGS, chi2_bins: 50, regime_threshold: 0.8 }
    }
}

/// Shifted-regime innovations for simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationInnovation {
    #[default]
    Gaussian,
    /// The hyperbolic law fitted to the pooled residuals, standardized.
    FittedHyperbolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSettings {
    pub n_days: usize,
    pub n_paths: usize,
    #[serde(default)]
    pub innovation: SimulationInnovation,
    #[serde(default)]
    pub allow_unstable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub stations: Vec<StationInput>,
    /// Days on either side used by gap filling.
    #[serde(default = "default_gap_window")]
    pub gap_window: usize,
    #[serde(default)]
    pub deseasonalize_mode: DeseasonalizeMode,
    #[serde(default)]
    pub em: EmSettings,
    #[serde(default)]
    pub fit: FitSettings,
    #[serde(default)]
    pub tests: TestSettings,
    #[serde(default)]
    pub indices: Vec<IndexSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub execution: Execution,
}

fn default_gap_window() -> usize {
    7
}

impl PipelineConfig {
    pub fn new(stations: Vec<StationInput>) -> Self {
        Self {
            stations,
            gap_window: default_gap_window(),
            deseasonalize_mode: DeseasonalizeMode::default(),
            em: EmSettings::default(),
            fit: FitSettings::default(),
            tests: TestSettings::default(),
            indices: Vec::new(),
            simulation: None,
            output_dir: None,
            seed: 0,
            execution: Execution::default(),
        }
    }

    /// Read a JSON config; relative station paths resolve against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: Self = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        for s in &mut config.stations {
            if s.path.is_relative() {
                s.path = base.join(&s.path);
            }
        }
        Ok(config)
    }

    /// Check settings ranges and that every input file exists.
    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::Validation(m));
        if self.stations.is_empty() {
            return invalid("config lists no stations".into());
        }
        let mut ids = BTreeSet::new();
        for s in &self.stations {
            if s.id.is_empty() || !s.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return invalid(format!("station id `{}` must be non-empty ASCII letters, digits, `-` or `_`", s.id));
            }
            if !ids.insert(s.id.as_str()) {
                return invalid(format!("station id `{}` appears twice", s.id));
            }
            if !s.path.is_file() {
                return invalid(format!("input file {} for station `{}` does not exist", s.path.display(), s.id));
            }
        }
        if self.gap_window == 0 {
            return invalid("gap_window must be at least 1".into());
        }
        let em = &self.em;
        if !(em.config.tol > 0.0) || em.config.max_iter == 0 || em.starts == 0 {
            return invalid("em needs tol > 0, max_iter >= 1 and starts >= 1".into());
        }
        if !(em.config.guard.epsilon() > 0.0) {
            return invalid("level guard epsilon must be positive".into());
        }
        if self.fit.starts == 0 {
            return invalid("fit.starts must be at least 1".into());
        }
        let families: BTreeSet<&str> = self.fit.families.iter().map(|f| f.name()).collect();
        if families.len() != self.fit.families.len() {
            return invalid("fit.families lists a family twice".into());
        }
        let t = &self.tests;
        if t.arch_lags == 0 || t.chi2_bins < 4 || !(t.regime_threshold > 0.0 && t.regime_threshold < 1.0) {
            return invalid("tests need arch_lags >= 1, chi2_bins >= 4 and regime_threshold in (0, 1)".into());
        }
        for spec in &self.indices {
            if spec.tau1 > spec.tau2 {
                return invalid(format!("index period [{}, {}] is reversed", spec.tau1, spec.tau2));
            }
            if let indices::IndexKind::Gdd { t_optimal } = spec.kind {
                if !t_optimal.is_finite() {
                    return invalid("GDD optimal temperature must be finite".into());
                }
            }
        }
        if let Some(sim) = &self.simulation {
            if sim.n_days == 0 || sim.n_paths == 0 {
                return invalid("simulation needs n_days >= 1 and n_paths >= 1".into());
            }
        }
        Ok(())
    }

    /// SHA-256 of the config with paths and the execution mode blanked, so
    /// it identifies the analysis rather than where or how it ran.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(&self.sanitized()).unwrap_or_default()))
    }

    fn sanitized(&self) -> Self {
        let mut c = self.clone();
        for s in &mut c.stations {
            s.path = PathBuf::new();
        }
        c.output_dir = None;
        c.execution = Execution::default();
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub station: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub crate_version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
    /// Config snapshot (paths blanked) that produced every section.
    pub config: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatSummary {
    pub stats: DescriptiveStats,
    pub hurst: f64,
    pub chi2: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalitySection {
    /// Calendar date of `t = 1`.
    pub origin_date: NaiveDate,
    pub period_days: f64,
    pub raw: SeasonalFitRaw,
    pub normalized: SeasonalParams,
    pub signed_phase: SignedPhaseParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalitySection {
    /// Series the tests ran on.
    pub series: String,
    pub residual_stats: DescriptiveStats,
    pub chi2: TestResult,
    pub jarque_bera: TestResult,
    pub anderson_darling: TestResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurstSection {
    pub dat: f64,
    pub residuals: f64,
}

/// Regime parameters in the base-first labelling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TmlParams {
    pub sigma_1: f64,
    pub kappa: f64,
    pub mu: f64,
    pub sigma_2: f64,
    pub p11: f64,
    pub p22: f64,
}

impl From<&RegimeModel> for TmlParams {
    fn from(m: &RegimeModel) -> Self {
        let c = m.canonical();
        Self {
            sigma_1: c.sigma_m,
            kappa: c.kappa,
            mu: c.mu_l,
            sigma_2: c.sigma_l,
            p11: c.trans.p11,
            p22: c.trans.p22,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub loglik: f64,
    #[serde(flatten)]
    pub params: TmlParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TmlFit {
    #[serde(flatten)]
    pub params: TmlParams,
    pub deseasonalize_mode: DeseasonalizeMode,
    pub shifted_law: ShiftedLaw,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shifted_hyp: Option<GHParams>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub starts: usize,
    pub floored_levels: usize,
    pub initial_probs: [f64; 2],
    pub regime_threshold: f64,
    pub extreme_days: usize,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionFit {
    pub family: Family,
    pub params: GHParams,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionGof {
    pub family: Family,
    pub kolmogorov_smirnov: TestResult,
    pub anderson_darling: TestResult,
}

/// Observed and simulated values of one index. Observed periods count days
/// from the first observation; simulated periods count days from the first
/// simulated day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub spec: IndexSpec,
    pub observed: Option<f64>,
    pub simulated: Option<IndexSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationReport {
    pub station: String,
    pub n_days: usize,
    pub filled_days: usize,
    pub descriptive: DatSummary,
    pub seasonality: SeasonalitySection,
    pub normality_tests: NormalitySection,
    pub arch_test: TestResult,
    pub hurst: HurstSection,
    pub tml_fit: TmlFit,
    /// Series the distributions were fitted to.
    pub fit_series: String,
    pub distribution_fits: Vec<DistributionFit>,
    pub distribution_gof: Vec<DistributionGof>,
    pub indices: Vec<IndexReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationFailure {
    pub station: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub provenance: Provenance,
    /// False when some station failed; see `failures`.
    pub complete: bool,
    pub stations: Vec<StationReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<StationFailure>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// SHA-256 of the serialized report.
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }
}

/// Everything a station run produces before it is written out.
struct StationRun {
    report: StationReport,
    artifacts: Vec<(String, String)>,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

fn run_station(input: &StationInput, config: &PipelineConfig) -> Result<StationRun> {
    let exec = config.execution;
    let mut artifacts = Vec::new();

    // ingest and fill
    let (series, raw_missing) = stage("ingest", {
        let options = CsvOptions { station_id: Some(input.id.clone()), ..CsvOptions::default() };
        ingest::load_station_csv(&input.path, &options).and_then(|s| {
            let missing = s.missing_count();
            Ok((ingest::fill_missing(&s, config.gap_window)?, missing))
        })
    })?;
    let dat = stage("ingest", series.complete_values())?;
    let descriptive = stage("ingest", describe_dat(&dat, config))?;
    let dat_hurst = descriptive.hurst;
    artifacts.push(("dat.csv".into(), ingest::station_csv_string(&series)));

    // seasonality
    let (raw, params) = stage("seasonality", {
        seasonal::fit_seasonal(&dat).map(|raw| (raw, seasonal::to_amplitude_phase(&raw)))
    })?;
    let residuals = seasonal::deseasonalize_values(&dat, &params, DeseasonalizeMode::Full);
    let calibration_series = match config.deseasonalize_mode {
        DeseasonalizeMode::Full => residuals.clone(),
        mode => seasonal::deseasonalize_values(&dat, &params, mode),
    };
    artifacts.push(("seasonal.csv".into(), seasonal_csv(&series, &dat, &params, &calibration_series)));
    let seasonality = SeasonalitySection {
        origin_date: series.start_date,
        period_days: seasonal::PERIOD_DAYS,
        raw,
        normalized: params,
        signed_phase: seasonal::to_signed_phase(&raw),
    };

    // residual diagnostics
    let (normality_tests, arch_test, residual_hurst) = stage("diagnostics", diagnose(&residuals, config))?;
    artifacts.push(("residuals.csv".into(), residuals_csv(&series, &residuals)));
    artifacts.push(("qq_normal.csv".into(), qq_normal_csv(&residuals)));

    // regime calibration
    let em = stage("calibration", {
        regime::em_calibrate_multistart(&calibration_series, &config.em.config, config.em.starts, config.seed, exec)
    })?;
    let (tml_fit, prob_extreme, labels) = stage("calibration", {
        summarize_em(&em, config.deseasonalize_mode, &config.em, config.tests.regime_threshold)
    })?;
    let regime_res = stage("calibration", {
        regime::extract_regime_residuals(&calibration_series, &em.model, &em.filter.smoothed, config.em.config.guard)
    })?;
    artifacts.push(("regime_labels.csv".into(), labels_csv(series.start_date, &prob_extreme, &labels)));
    artifacts.push(("regime_residuals.csv".into(), regime_residuals_csv(&series, &regime_res)));

    // distribution fitting on the pooled regime residuals
    let pooled = &regime_res.pooled;
    let (distribution_fits, distribution_gof) = stage("distributions", {
        let options = FitOptions { starts: config.fit.starts, execution: exec, ..FitOptions::default() };
        fit_distributions(pooled, &config.fit.families, &options)
    })?;
    artifacts.push(("density.csv".into(), density_csv(pooled, &distribution_fits)));

    // indices
    let hyp = distribution_fits.iter().find(|f| f.family == Family::Hyp).map(|f| f.params);
    let index_reports = stage("indices", {
        compute_indices(&dat, &em.model, &params, hyp, pooled, config, &input.id, &mut artifacts)
    })?;

    Ok(StationRun {
        report: StationReport {
            station: input.id.clone(),
            n_days: dat.len(),
            filled_days: raw_missing,
            descriptive,
            seasonality,
            normality_tests,
            arch_test,
            hurst: HurstSection { dat: dat_hurst, residuals: residual_hurst },
            tml_fit,
            fit_series: "regime_pooled".into(),
            distribution_fits,
            distribution_gof,
            indices: index_reports,
        },
        artifacts,
    })
}

/// Report section for an EM run, with the smoothed shifted-regime
/// probabilities and the day labels at `threshold`.
pub fn summarize_em(
    em: &EmResult,
    mode: DeseasonalizeMode,
    settings: &EmSettings,
    threshold: f64,
) -> Result<(TmlFit, Vec<f64>, Vec<RegimeLabel>)> {
    let prob_extreme = em.filter.prob_shifted();
    let labels = regime::classify_regimes(&prob_extreme, threshold)?;
    let fit = TmlFit {
        params: TmlParams::from(&em.model),
        deseasonalize_mode: mode,
        shifted_law: settings.config.shifted_law,
        shifted_hyp: em.model.shifted_hyp,
        loglik: em.loglik,
        iterations: em.iterations,
        converged: em.converged,
        starts: settings.starts,
        floored_levels: em.filter.floored_levels,
        initial_probs: if em.model.base_label == 0 { em.initial_probs } else { [em.initial_probs[1], em.initial_probs[0]] },
        regime_threshold: threshold,
        extreme_days: labels.iter().filter(|l| **l == RegimeLabel::Extreme).count(),
        trace: em
            .trace
            .iter()
            .map(|e| TraceRow { iteration: e.iteration, loglik: e.loglik, params: TmlParams::from(&e.model) })
            .collect(),
    };
    Ok((fit, prob_extreme, labels))
}

fn describe_dat(dat: &[f64], config: &PipelineConfig) -> Result<DatSummary> {
    Ok(DatSummary {
        stats: ingest::descriptive_stats(dat)?,
        hurst: stats::hurst_rs(dat)?.h,
        chi2: stats::pearson_chi2_normal(dat, config.tests.chi2_bins)?,
    })
}

fn diagnose(residuals: &[f64], config: &PipelineConfig) -> Result<(NormalitySection, TestResult, f64)> {
    let residual_stats = ingest::descriptive_stats(residuals)?;
    let (mean, sd) = fitted_normal(residuals);
    let normality = NormalitySection {
        series: "deseasonalized_full".into(),
        residual_stats,
        chi2: stats::pearson_chi2_normal(residuals, config.tests.chi2_bins)?,
        jarque_bera: stats::jarque_bera(residuals)?,
        anderson_darling: stats::anderson_darling(residuals, stats::normal_cdf(mean, sd), true)?,
    };
    let arch = stats::engle_arch(residuals, config.tests.arch_lags)?;
    let hurst = stats::hurst_rs(residuals)?.h;
    Ok((normality, arch, hurst))
}

/// Maximum-likelihood normal: mean and population standard deviation.
fn fitted_normal(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Maximum-likelihood fit of each family, with K-S and A-D statistics of
/// each fit against the same samples.
pub fn fit_distributions(
    samples: &[f64],
    families: &[Family],
    options: &FitOptions,
) -> Result<(Vec<DistributionFit>, Vec<DistributionGof>)> {
    let mut fits = Vec::new();
    let mut gof = Vec::new();
    for &family in families {
        let r = ghdist::fit_mle(samples, family, options)?;
        let cdf = r.params.density()?.cdf_many(samples)?;
        gof.push(DistributionGof {
            family,
            kolmogorov_smirnov: stats::kolmogorov_smirnov_from_cdf(&cdf)?,
            anderson_darling: stats::anderson_darling_from_cdf(&cdf, true)?,
        });
        fits.push(DistributionFit {
            family,
            params: r.params,
            loglik: r.loglik,
            converged: r.converged,
            iterations: r.iterations,
        });
    }
    Ok((fits, gof))
}

#[allow(clippy::too_many_arguments)]
fn compute_indices(
    dat: &[f64],
    model: &RegimeModel,
    seasonal: &SeasonalParams,
    hyp: Option<GHParams>,
    pooled: &[f64],
    config: &PipelineConfig,
    station: &str,
    artifacts: &mut Vec<(String, String)>,
) -> Result<Vec<IndexReport>> {
    let mut reports: Vec<IndexReport> = config
        .indices
        .iter()
        .map(|spec| {
            let (observed, notes) = match spec.evaluate(dat) {
                Ok(v) => (Some(v), Vec::new()),
                Err(e) => (None, vec![format!("observed index unavailable: {e}")]),
            };
            IndexReport { spec: *spec, observed, simulated: None, notes }
        })
        .collect();
    let Some(sim) = &config.simulation else {
        return Ok(reports);
    };
    let innovation = match sim.innovation {
        SimulationInnovation::Gaussian => Innovation::Gaussian,
        SimulationInnovation::FittedHyperbolic => {
            let params = match hyp {
                Some(p) => p,
                None => {
                    let options = FitOptions { starts: config.fit.starts, execution: config.execution, ..FitOptions::default() };
                    ghdist::fit_mle(pooled, Family::Hyp, &options)?.params
                }
            };
            Innovation::Hyperbolic { params, standardize: true }
        }
    };
    let spec = SimulationSpec {
        model: RegimeModel { shifted_hyp: None, ..model.canonical() },
        seasonal: *seasonal,
        mode: config.deseasonalize_mode,
        innovation,
        n_days: sim.n_days,
        n_paths: sim.n_paths,
        seed: config.seed,
        initial_value: dat[dat.len() - 1],
        t0: dat.len(),
        initial_regime: None,
        allow_unstable: sim.allow_unstable,
    };
    let paths = match indices::simulate_paths(&spec, config.execution) {
        Ok(p) => p,
        Err(e @ Error::Unstable(_)) => {
            for r in &mut reports {
                r.notes.push(format!("simulation skipped for station `{station}`: {e}"));
            }
            return Ok(reports);
        }
        Err(e) => return Err(e),
    };
    for r in &mut reports {
        match indices::index_distribution(&paths, &r.spec) {
            Ok(s) => r.simulated = Some(s),
            Err(e) => r.notes.push(format!("simulated index unavailable: {e}")),
        }
    }
    artifacts.push(("paths.csv".into(), indices::paths_csv_string(&paths)));
    Ok(reports)
}

fn seasonal_csv(series: &TemperatureSeries, dat: &[f64], params: &SeasonalParams, des: &[f64]) -> String {
    let mut out = String::from("date,t,dat,seasonal,deseasonalized\n");
    for (i, (v, d)) in dat.iter().zip(des).enumerate() {
        let t = (i + 1) as f64;
        let _ = writeln!(out, "{},{},{v},{},{d}", series.date(i), i + 1, seasonal::seasonal_value(params, t));
    }
    out
}

fn residuals_csv(series: &TemperatureSeries, residuals: &[f64]) -> String {
    let mut out = String::from("date,residual,squared\n");
    for (i, r) in residuals.iter().enumerate() {
        let _ = writeln!(out, "{},{r},{}", series.date(i), r * r);
    }
    out
}

fn qq_normal_csv(residuals: &[f64]) -> String {
    let (mean, sd) = fitted_normal(residuals);
    let mut sorted = residuals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out = String::from("p,sample,normal\n");
    for (i, x) in sorted.iter().enumerate() {
        let p = (i as f64 + 0.5) / n;
        let _ = writeln!(out, "{p},{x},{}", mean + sd * std_normal_quantile(p));
    }
    out
}

/// Regime labels as CSV `date,prob_extreme,label`, day 0 at `start`.
pub fn labels_csv(start: NaiveDate, prob: &[f64], labels: &[RegimeLabel]) -> String {
    let mut out = String::from("date,prob_extreme,label\n");
    for (i, (p, l)) in prob.iter().zip(labels).enumerate() {
        let _ = writeln!(out, "{},{p},{l}", start + chrono::Days::new(i as u64));
    }
    out
}

fn regime_residuals_csv(series: &TemperatureSeries, r: &regime::RegimeResiduals) -> String {
    let mut out = String::from("date,base_residual,base_weight,shifted_residual,shifted_weight,pooled\n");
    for ((b, s), p) in r.base.iter().zip(&r.shifted).zip(&r.pooled) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{p}",
            series.date(b.t),
            b.residual,
            b.weight,
            s.residual,
            s.weight
        );
    }
    out
}

/// Grid points for the fitted-density artifact.
const DENSITY_GRID: usize = 201;

fn density_csv(samples: &[f64], fits: &[DistributionFit]) -> String {
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = String::from("x");
    for f in fits {
        out.push(',');
        out.push_str(f.family.name());
    }
    out.push('\n');
    let densities: Vec<Option<ghdist::Density>> = fits.iter().map(|f| f.params.density().ok()).collect();
    for k in 0..DENSITY_GRID {
        let x = lo + (hi - lo) * k as f64 / (DENSITY_GRID - 1) as f64;
        out.push_str(&x.to_string());
        for d in &densities {
            out.push(',');
            if let Some(d) = d {
                out.push_str(&d.pdf(x).to_string());
            }
        }
        out.push('\n');
    }
    out
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn stage_of(e: &Error) -> &'static str {
    match e {
        Error::Stage { stage, .. } => stage,
        _ => "unknown",
    }
}

/// Outcome of [`run_pipeline`]: the report plus the files written.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: Report,
    pub written: Vec<PathBuf>,
}

/// Run every station (concurrently under [`Execution::Parallel`]) and write
/// `report.json`, `tables.txt` and per-station CSV artifacts under
/// `output_dir`, when one is set. A failing station is recorded in the
/// report, which is then marked incomplete, and its first error is
/// returned after the report has been written.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutput> {
    config.validate()?;
    let inputs = config
        .stations
        .iter()
        .map(|s| Ok(InputDigest { station: s.id.clone(), sha256: file_sha256(&s.path)? }))
        .collect::<Result<Vec<_>>>()?;
    let runs = par::map_slice(config.execution, &config.stations, |s| run_station(s, config));

    let mut stations = Vec::new();
    let mut failures = Vec::new();
    let mut artifacts = Vec::new();
    let mut first_error = None;
    for (input, run) in config.stations.iter().zip(runs) {
        match run {
            Ok(run) => {
                artifacts.push((input.id.clone(), run.artifacts));
                stations.push(run.report);
            }
            Err(e) => {
                failures.push(StationFailure {
                    station: input.id.clone(),
                    stage: stage_of(&e).into(),
                    message: e.to_string(),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    let report = Report {
        provenance: Provenance {
            crate_version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: config.hash(),
            seed: config.seed,
            inputs,
            config: config.sanitized(),
        },
        complete: failures.is_empty(),
        stations,
        failures,
    };

    let mut written = Vec::new();
    if let Some(dir) = &config.output_dir {
        for (station, files) in &artifacts {
            for (name, body) in files {
                let path = dir.join(station).join(name);
                write_atomic(&path, body.as_bytes())?;
                written.push(path);
            }
        }
        let path = dir.join("report.json");
        write_atomic(&path, report.to_json()?.as_bytes())?;
        written.push(path);
        if !report.stations.is_empty() {
            let path = dir.join("tables.txt");
            write_atomic(&path, render_all_tables(&report)?.as_bytes())?;
            written.push(path);
        }
    }
    match first_error {
        Some(e) => Err(e),
        None => Ok(PipelineOutput { report, written }),
    }
}

/// Fixed-width tables rendered from a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Table {
    /// Seasonal coefficients.
    Seasonality,
    /// Distribution parameters per family.
    Distributions,
    /// Regime model parameters.
    Tml,
    /// K-S and A-D statistics per family.
    Gof,
}

impl Table {
    pub const ALL: [Table; 4] = [Table::Seasonality, Table::Distributions, Table::Tml, Table::Gof];
}

impl std::str::FromStr for Table {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seasonality" => Ok(Table::Seasonality),
            "distributions" => Ok(Table::Distributions),
            "tml" => Ok(Table::Tml),
            "gof" => Ok(Table::Gof),
            other => Err(Error::Validation(format!("unknown table `{other}`"))),
        }
    }
}

const COL: usize = 14;

/// Four decimals; small non-zero magnitudes in exponent form.
pub fn fmt4(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-3 {
        format!("{v:.4e}")
    } else {
        format!("{v:.4}")
    }
}

fn row(label: &str, cells: &[String]) -> String {
    let mut s = format!("{label:<COL$}");
    for c in cells {
        let _ = write!(s, "{c:<COL$}");
    }
    s.trim_end().to_string() + "\n"
}

/// Regime-parameter table with columns sigma_1, kappa, mu, sigma_2, P11,
/// P22.
pub fn render_tml_rows(rows: &[(&str, TmlParams)]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::MissingSection("tml_fit".into()));
    }
    let header: Vec<String> = ["sigma_1", "kappa", "mu", "sigma_2", "P11", "P22"].iter().map(|s| s.to_string()).collect();
    let mut out = row("Station", &header);
    for (name, p) in rows {
        let cells: Vec<String> = [p.sigma_1, p.kappa, p.mu, p.sigma_2, p.p11, p.p22].iter().map(|&v| fmt4(v)).collect();
        out.push_str(&row(name, &cells));
    }
    Ok(out)
}

/// Render one table. Errors name the report section that is missing.
pub fn render_tables(report: &Report, which: Table) -> Result<String> {
    if report.stations.is_empty() {
        return Err(Error::MissingSection("stations".into()));
    }
    match which {
        Table::Seasonality => {
            let header: Vec<String> = ["A0", "A1", "A2", "phi"].iter().map(|s| s.to_string()).collect();
            let mut out = row("Station", &header);
            for s in &report.stations {
                let p = &s.seasonality.signed_phase;
                out.push_str(&row(&s.station, &[fmt4(p.a0), fmt4(p.a1), fmt4(p.a2), fmt4(p.phi)]));
            }
            Ok(out)
        }
        Table::Tml => {
            let rows: Vec<(&str, TmlParams)> = report.stations.iter().map(|s| (s.station.as_str(), s.tml_fit.params)).collect();
            render_tml_rows(&rows)
        }
        Table::Distributions => {
            let mut out = String::new();
            for s in &report.stations {
                if s.distribution_fits.is_empty() {
                    return Err(Error::MissingSection(format!("distribution_fits ({})", s.station)));
                }
                let header: Vec<String> = s.distribution_fits.iter().map(|f| f.family.name().to_string()).collect();
                out.push_str(&row(&s.station, &header));
                type Getter = fn(&GHParams) -> Option<f64>;
                let params: [(&str, Getter); 5] = [
                    ("nu", |p| matches!(p.family, Family::Gh | Family::Vg).then_some(p.nu)),
                    ("alpha", |p| (p.family != Family::Normal).then_some(p.alpha)),
                    ("beta", |p| (p.family != Family::Normal).then_some(p.beta)),
                    ("mu", |p| Some(p.mu)),
                    ("delta", |p| Some(p.delta)),
                ];
                for (name, get) in params {
                    let cells: Vec<String> = s
                        .distribution_fits
                        .iter()
                        .map(|f| get(&f.params).map(fmt4).unwrap_or_else(|| "-".into()))
                        .collect();
                    out.push_str(&row(&format!("  {name}"), &cells));
                }
            }
            Ok(out)
        }
        Table::Gof => {
            let mut out = String::new();
            for s in &report.stations {
                if s.distribution_gof.is_empty() {
                    return Err(Error::MissingSection(format!("distribution_gof ({})", s.station)));
                }
                let header: Vec<String> = s.distribution_gof.iter().map(|g| g.family.name().to_string()).collect();
                out.push_str(&row(&s.station, &header));
                let ks: Vec<String> = s
                    .distribution_gof
                    .iter()
                    .map(|g| fmt4(g.kolmogorov_smirnov.extra.get("sqrt_n_d").copied().unwrap_or(f64::NAN)))
                    .collect();
                let ad: Vec<String> = s.distribution_gof.iter().map(|g| fmt4(g.anderson_darling.statistic)).collect();
                out.push_str(&row("  K-S", &ks));
                out.push_str(&row("  A-D", &ad));
            }
            Ok(out)
        }
    }
}

/// All four tables, each preceded by a title line.
pub fn render_all_tables(report: &Report) -> Result<String> {
    let titles = [
        "Seasonal coefficients (signed amplitude convention)",
        "Distribution parameters",
        "Regime model parameters",
        "Goodness of fit (sqrt(n) D and A^2)",
    ];
    let mut out = String::new();
    for (t, title) in Table::ALL.iter().zip(titles) {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(title);
        out.push('\n');
        out.push_str(&render_tables(report, *t)?);
    }
    Ok(out)
}
