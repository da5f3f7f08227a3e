//! Temperature indices and Monte Carlo simulation of the regime model.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ghdist::{GHParams, Sampler};
use crate::par::{self, Execution};
use crate::regime::RegimeModel;
use crate::seasonal::{removed_component, DeseasonalizeMode, SeasonalParams};

/// Which index to accumulate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum IndexKind {
    Cat,
    Gdd { t_optimal: f64 },
}

/// Index over the zero-based, inclusive day range `tau1..=tau2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexSpec {
    #[serde(flatten)]
    pub kind: IndexKind,
    pub tau1: usize,
    pub tau2: usize,
}

impl IndexSpec {
    pub fn cat(tau1: usize, tau2: usize) -> Self {
        Self { kind: IndexKind::Cat, tau1, tau2 }
    }

    pub fn gdd(tau1: usize, tau2: usize, t_optimal: f64) -> Self {
        Self { kind: IndexKind::Gdd { t_optimal }, tau1, tau2 }
    }

    fn window<'a>(&self, series: &'a [f64]) -> Result<&'a [f64]> {
        if self.tau1 > self.tau2 || self.tau2 >= series.len() {
            return Err(Error::Validation(format!(
                "index period [{}, {}] is not inside a series of {} days",
                self.tau1,
                self.tau2,
                series.len()
            )));
        }
        let w = &series[self.tau1..=self.tau2];
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("index period contains non-finite temperatures".into()));
        }
        Ok(w)
    }

    pub fn evaluate(&self, series: &[f64]) -> Result<f64> {
        match self.kind {
            IndexKind::Cat => cat_index(series, self.tau1, self.tau2),
            IndexKind::Gdd { t_optimal } => gdd_index(series, self.tau1, self.tau2, t_optimal),
        }
    }
}

/// Cumulative average temperature, `sum_{t=tau1}^{tau2} T(t)`.
pub fn cat_index(series: &[f64], tau1: usize, tau2: usize) -> Result<f64> {
    Ok(IndexSpec::cat(tau1, tau2).window(series)?.iter().sum())
}

/// Growing degree days, `sum_{t=tau1}^{tau2} max(T(t) - t_optimal, 0)`.
pub fn gdd_index(series: &[f64], tau1: usize, tau2: usize, t_optimal: f64) -> Result<f64> {
    if !t_optimal.is_finite() {
        return Err(Error::Validation(format!("optimal temperature must be finite, got {t_optimal}")));
    }
    Ok(IndexSpec::gdd(tau1, tau2, t_optimal)
        .window(series)?
        .iter()
        .map(|t| (t - t_optimal).max(0.0))
        .sum())
}

/// Law of the shifted-regime innovation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "law")]
pub enum Innovation {
    #[default]
    Gaussian,
    /// Draws from `params`; with `standardize` they are centred and scaled to
    /// unit variance before multiplying by `sigma_l`.
    Hyperbolic {
        params: GHParams,
        #[serde(default = "default_true")]
        standardize: bool,
    },
}

fn default_true() -> bool {
    true
}

impl Innovation {
    /// The law attached to a calibrated model: standardized hyperbolic when
    /// the model carries one, Gaussian otherwise.
    pub fn from_model(model: &RegimeModel) -> Self {
        match model.shifted_hyp {
            Some(params) => Innovation::Hyperbolic { params, standardize: true },
            None => Innovation::Gaussian,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub model: RegimeModel,
    pub seasonal: SeasonalParams,
    #[serde(default)]
    pub mode: DeseasonalizeMode,
    #[serde(default)]
    pub innovation: Innovation,
    pub n_days: usize,
    pub n_paths: usize,
    pub seed: u64,
    /// Temperature (°C) on day 0.
    pub initial_value: f64,
    /// Seasonal time of day 0; simulated day `d` uses `t0 + d`.
    #[serde(default)]
    pub t0: usize,
    /// Regime on day 0 (0 base, 1 shifted); drawn from the stationary
    /// distribution when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_regime: Option<usize>,
    #[serde(default)]
    pub allow_unstable: bool,
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if ![m.kappa, m.sigma_m, m.mu_l, m.sigma_l, self.initial_value].iter().all(|v| v.is_finite()) {
            return Err(Error::Validation("simulation parameters must be finite".into()));
        }
        if m.sigma_m < 0.0 || m.sigma_l < 0.0 {
            return Err(Error::Validation("volatilities must be non-negative".into()));
        }
        if m.base_label > 1 {
            return Err(Error::Validation(format!("base label must be 0 or 1, got {}", m.base_label)));
        }
        m.trans.validate()?;
        if self.n_days == 0 || self.n_paths == 0 {
            return Err(Error::Validation("simulation needs at least one day and one path".into()));
        }
        if matches!(self.initial_regime, Some(r) if r > 1) {
            return Err(Error::Validation("initial regime must be 0 or 1".into()));
        }
        let growth = (1.0 + m.kappa).abs();
        if growth >= 1.0 && !self.allow_unstable {
            return Err(Error::Unstable(growth));
        }
        if let Innovation::Hyperbolic { params, .. } = &self.innovation {
            params.validate()?;
        }
        Ok(())
    }
}

/// Regime numbering in simulated output.
pub const BASE_REGIME: u8 = 1;
pub const SHIFTED_REGIME: u8 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPath {
    /// [`BASE_REGIME`] or [`SHIFTED_REGIME`] for days `1..=n_days`.
    pub regime: Vec<u8>,
    pub t_tilde: Vec<f64>,
    pub temperature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPaths {
    pub n_days: usize,
    pub t0: usize,
    pub paths: Vec<SimulatedPath>,
}

struct ShiftedDraw {
    sampler: Option<Sampler>,
    shift: f64,
    scale: f64,
}

impl ShiftedDraw {
    fn new(innovation: &Innovation) -> Result<Self> {
        Ok(match innovation {
            Innovation::Gaussian => Self { sampler: None, shift: 0.0, scale: 1.0 },
            Innovation::Hyperbolic { params, standardize } => {
                let (shift, scale) = if *standardize {
                    let m = params.moments()?;
                    (m.mean, m.variance.sqrt())
                } else {
                    (0.0, 1.0)
                };
                Self { sampler: Some(Sampler::new(*params)?), shift, scale }
            }
        })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.sampler {
            None => rng.sample(StandardNormal),
            Some(s) => (s.sample(rng) - self.shift) / self.scale,
        }
    }
}

/// Simulate `n_paths` independent paths. Path `k` uses stream `k` of a
/// ChaCha8 generator seeded with `seed`, so results do not depend on the
/// execution mode and a run with more paths extends one with fewer.
pub fn simulate_paths(spec: &SimulationSpec, exec: Execution) -> Result<SimulatedPaths> {
    spec.validate()?;
    let shifted = ShiftedDraw::new(&spec.innovation)?;
    let m = &spec.model;
    let base = m.base_label;
    // transition probabilities in base/shifted order
    let (p_bb, p_sb) = (m.trans.get(base, base), m.trans.get(1 - base, base));
    let pi_base = m.trans.stationary()[base];
    let day0_removed = removed_component(&spec.seasonal, spec.t0 as f64, spec.mode);
    let x0 = spec.initial_value - day0_removed;
    let removed: Vec<f64> = (1..=spec.n_days)
        .map(|d| removed_component(&spec.seasonal, (spec.t0 + d) as f64, spec.mode))
        .collect();

    let paths = par::map_range(exec, spec.n_paths, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(k as u64);
        let mut in_base = match spec.initial_regime {
            Some(r) => r == base,
            None => rng.random::<f64>() < pi_base,
        };
        let mut x = x0;
        let mut path = SimulatedPath {
            regime: Vec::with_capacity(spec.n_days),
            t_tilde: Vec::with_capacity(spec.n_days),
            temperature: Vec::with_capacity(spec.n_days),
        };
        for s in &removed {
            let stay = if in_base { p_bb } else { p_sb };
            in_base = rng.random::<f64>() < stay;
            x = if in_base {
                let z: f64 = rng.sample(StandardNormal);
                (1.0 + m.kappa) * x + m.sigma_m * x.abs() * z
            } else {
                x + m.mu_l + m.sigma_l * shifted.draw(&mut rng)
            };
            path.regime.push(if in_base { BASE_REGIME } else { SHIFTED_REGIME });
            path.t_tilde.push(x);
            path.temperature.push(x + s);
        }
        path
    });
    Ok(SimulatedPaths { n_days: spec.n_days, t0: spec.t0, paths })
}

/// CSV with header `path_id,day,regime,t_tilde,temperature`.
pub fn paths_csv_string(paths: &SimulatedPaths) -> String {
    let mut out = String::from("path_id,day,regime,t_tilde,temperature\n");
    for (k, p) in paths.paths.iter().enumerate() {
        for d in 0..p.t_tilde.len() {
            let _ = writeln!(out, "{k},{},{},{},{}", d + 1, p.regime[d], p.t_tilde[d], p.temperature[d]);
        }
    }
    out
}

pub fn write_paths_csv(paths: &SimulatedPaths, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, paths_csv_string(paths).as_bytes())
}

/// Probability levels reported by [`index_distribution`].
pub const SUMMARY_PROBS: [f64; 7] = [0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99];
/// Number of histogram bins.
pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantile {
    pub p: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSummary {
    pub spec: IndexSpec,
    pub n_paths: usize,
    pub mean: f64,
    /// Sample standard deviation (divisor `n - 1`; zero for one path).
    pub std: f64,
    pub quantiles: Vec<Quantile>,
    pub histogram: Histogram,
    /// Per-path index values; not serialized.
    #[serde(skip_serializing, default)]
    pub values: Vec<f64>,
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn histogram(sorted: &[f64]) -> Histogram {
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if hi <= lo {
        return Histogram { edges: vec![lo, hi], counts: vec![sorted.len()] };
    }
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let edges = (0..=HISTOGRAM_BINS).map(|i| if i == HISTOGRAM_BINS { hi } else { lo + width * i as f64 }).collect();
    let mut counts = vec![0; HISTOGRAM_BINS];
    for v in sorted {
        counts[(((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1)] += 1;
    }
    Histogram { edges, counts }
}

/// Index value per simulated path, reduced to summary statistics.
pub fn index_distribution(paths: &SimulatedPaths, spec: &IndexSpec) -> Result<IndexSummary> {
    if paths.paths.is_empty() {
        return Err(Error::Validation("no simulated paths".into()));
    }
    let values = paths
        .paths
        .iter()
        .map(|p| spec.evaluate(&p.temperature))
        .collect::<Result<Vec<f64>>>()?;
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(IndexSummary {
        spec: *spec,
        n_paths: n,
        mean,
        std,
        quantiles: SUMMARY_PROBS.iter().map(|&p| Quantile { p, value: quantile_type7(&sorted, p) }).collect(),
        histogram: histogram(&sorted),
        values,
    })
}
