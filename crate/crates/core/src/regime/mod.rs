//! Two-regime model for deseasonalized temperature.
//!
//! Day-to-day dynamics switch between
//!
//! * a **base** regime, `T_t ~ N((1 + kappa) T_{t-1}, (sigma_m |T_{t-1}|)^2)`,
//!   whose volatility scales with the current level, and
//! * a **shifted** regime, `T_t ~ N(T_{t-1} + mu_l, sigma_l^2)`, a drifted
//!   random walk used for extreme spells,
//!
//! driven by a two-state Markov chain. Calibration is EM over Hamilton
//! filtering and Kim smoothing with closed-form M-steps.
//!
//! Probability vectors are indexed by label. By default label 0 is the base
//! regime; [`RegimeModel::swap_labels`] flips that so the two labellings can
//! be compared.

mod em;
mod filter;
mod labels;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ghdist::{Density, Family, GHParams};

pub use em::{
    em_calibrate, em_calibrate_multistart, initial_model, m_step_base, m_step_shifted, EmConfig, EmResult,
    InitialProbs, ShiftedLaw, TraceEntry,
};
pub use filter::{hamilton_filter, kim_smooth, smoothed_joint, update_transitions, FilterOutput};
pub use labels::{classify_regimes, extract_regime_residuals, RegimeLabel, RegimeResiduals, WeightedResidual};

/// Row-stochastic 2x2 transition matrix; `p_ij = P(S_t = j | S_{t-1} = i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub p11: f64,
    pub p12: f64,
    pub p21: f64,
    pub p22: f64,
}

impl TransitionMatrix {
    /// From the two staying probabilities.
    pub fn new(p11: f64, p22: f64) -> Result<Self> {
        let t = Self {
            p11,
            p12: 1.0 - p11,
            p21: 1.0 - p22,
            p22,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let entries = [self.p11, self.p12, self.p21, self.p22];
        if entries.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Validation(format!("transition probabilities must lie in [0, 1]: {entries:?}")));
        }
        if (self.p11 + self.p12 - 1.0).abs() > 1e-12 || (self.p21 + self.p22 - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!("transition rows must sum to 1: {entries:?}")));
        }
        Ok(())
    }

    /// `p_ij` with zero-based labels.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match (i, j) {
            (0, 0) => self.p11,
            (0, 1) => self.p12,
            (1, 0) => self.p21,
            _ => self.p22,
        }
    }

    /// Rows `[[p11, p12], [p21, p22]]`.
    pub fn rows(&self) -> [[f64; 2]; 2] {
        [[self.p11, self.p12], [self.p21, self.p22]]
    }

    /// Build from row weights, normalising each row to sum to one.
    pub fn from_row_weights(w: [[f64; 2]; 2]) -> Result<Self> {
        let mut p = [[0.0; 2]; 2];
        for i in 0..2 {
            let s = w[i][0] + w[i][1];
            if !(s > 0.0) {
                return Err(Error::RegimeCollapse { regime: i + 1 });
            }
            p[i][0] = w[i][0] / s;
            p[i][1] = 1.0 - p[i][0];
        }
        Ok(Self {
            p11: p[0][0],
            p12: p[0][1],
            p21: p[1][0],
            p22: p[1][1],
        })
    }

    /// Stationary distribution; uniform when the chain never switches.
    pub fn stationary(&self) -> [f64; 2] {
        let s = self.p12 + self.p21;
        if s <= 0.0 {
            [0.5, 0.5]
        } else {
            [self.p21 / s, self.p12 / s]
        }
    }

    /// Same chain with the labels exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            p11: self.p22,
            p12: self.p21,
            p21: self.p12,
            p22: self.p11,
        }
    }
}

/// How base-regime levels near zero are treated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "epsilon")]
pub enum LevelGuard {
    /// Replace `|T_{t-1}|` by `max(|T_{t-1}|, epsilon)` in the base-regime
    /// volatility.
    Floor(f64),
    /// Fail when `|T_{t-1}| <= epsilon`.
    Error(f64),
}

impl Default for LevelGuard {
    fn default() -> Self {
        LevelGuard::Floor(1e-6)
    }
}

impl LevelGuard {
    pub fn epsilon(self) -> f64 {
        match self {
            LevelGuard::Floor(e) | LevelGuard::Error(e) => e,
        }
    }

    /// Effective level and whether it was floored. `t` is reported in errors.
    pub fn level(self, t_prev: f64, t: usize) -> Result<(f64, bool)> {
        let a = t_prev.abs();
        match self {
            LevelGuard::Floor(e) if a < e => Ok((e, true)),
            LevelGuard::Error(e) if a <= e => Err(Error::DegenerateLevel {
                t,
                level: t_prev,
                epsilon: e,
            }),
            _ => Ok((a, false)),
        }
    }
}

/// Base-regime parameters `(kappa, sigma_m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseRegime {
    pub kappa: f64,
    pub sigma_m: f64,
}

/// Shifted-regime parameters `(mu_l, sigma_l)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftedRegime {
    pub mu_l: f64,
    pub sigma_l: f64,
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

fn normal_log_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

impl BaseRegime {
    /// Log density of `t_now` given `t_prev`; the flag reports flooring.
    pub fn log_density(&self, t_prev: f64, t_now: f64, guard: LevelGuard, t: usize) -> Result<(f64, bool)> {
        let (level, floored) = guard.level(t_prev, t)?;
        Ok((normal_log_pdf(t_now, (1.0 + self.kappa) * t_prev, self.sigma_m * level), floored))
    }
}

impl ShiftedRegime {
    pub fn log_density(&self, t_prev: f64, t_now: f64) -> f64 {
        normal_log_pdf(t_now, t_prev + self.mu_l, self.sigma_l)
    }
}

/// Base-regime density `N((1 + kappa) t_prev, (sigma_m |t_prev|)^2)` at
/// `t_now`.
pub fn base_density(theta: &BaseRegime, t_prev: f64, t_now: f64, guard: LevelGuard) -> Result<f64> {
    Ok(theta.log_density(t_prev, t_now, guard, 0)?.0.exp())
}

/// Shifted-regime density `N(t_prev + mu_l, sigma_l^2)` at `t_now`.
pub fn shifted_density(theta: &ShiftedRegime, t_prev: f64, t_now: f64) -> f64 {
    theta.log_density(t_prev, t_now).exp()
}

/// Calibrated or candidate model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeModel {
    pub kappa: f64,
    pub sigma_m: f64,
    pub mu_l: f64,
    pub sigma_l: f64,
    pub trans: TransitionMatrix,
    /// Label (0 or 1) of the base regime.
    #[serde(default)]
    pub base_label: usize,
    /// Hyperbolic law of the shifted-regime increment, used instead of the
    /// Gaussian when set. `mu_l` and `sigma_l` then hold its mean and
    /// standard deviation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shifted_hyp: Option<GHParams>,
}

impl RegimeModel {
    pub fn new(kappa: f64, sigma_m: f64, mu_l: f64, sigma_l: f64, trans: TransitionMatrix) -> Result<Self> {
        let m = Self {
            kappa,
            sigma_m,
            mu_l,
            sigma_l,
            trans,
            base_label: 0,
            shifted_hyp: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.kappa, self.sigma_m, self.mu_l, self.sigma_l].iter().all(|v| v.is_finite()) {
            return Err(Error::Validation("regime parameters must be finite".into()));
        }
        if !(self.sigma_m > 0.0) || !(self.sigma_l > 0.0) {
            return Err(Error::Validation(format!(
                "regime volatilities must be positive (sigma_m = {}, sigma_l = {})",
                self.sigma_m, self.sigma_l
            )));
        }
        if self.base_label > 1 {
            return Err(Error::Validation(format!("base label must be 0 or 1, got {}", self.base_label)));
        }
        if let Some(h) = &self.shifted_hyp {
            h.validate()?;
            if h.family != Family::Hyp {
                return Err(Error::Validation("shifted-regime law must be hyperbolic".into()));
            }
        }
        self.trans.validate()
    }

    pub fn base(&self) -> BaseRegime {
        BaseRegime {
            kappa: self.kappa,
            sigma_m: self.sigma_m,
        }
    }

    pub fn shifted(&self) -> ShiftedRegime {
        ShiftedRegime {
            mu_l: self.mu_l,
            sigma_l: self.sigma_l,
        }
    }

    pub fn shifted_label(&self) -> usize {
        1 - self.base_label
    }

    /// Same model with labels exchanged.
    pub fn swap_labels(&self) -> Self {
        Self {
            trans: self.trans.swapped(),
            base_label: 1 - self.base_label,
            ..*self
        }
    }

    /// Labels arranged so the base regime is label 0.
    pub fn canonical(&self) -> Self {
        if self.base_label == 0 {
            *self
        } else {
            self.swap_labels()
        }
    }

    /// Staying probability of the base regime.
    pub fn p_base(&self) -> f64 {
        self.trans.get(self.base_label, self.base_label)
    }

    /// Staying probability of the shifted regime.
    pub fn p_shifted(&self) -> f64 {
        let s = self.shifted_label();
        self.trans.get(s, s)
    }

    /// Per-label log densities at one step.
    pub(crate) fn log_densities(&self, kernel: &StepKernel, t_prev: f64, t_now: f64, t: usize) -> Result<([f64; 2], bool)> {
        let (lb, floored) = self.base().log_density(t_prev, t_now, kernel.guard, t)?;
        let ls = match &kernel.hyp {
            Some(d) => d.log_pdf(t_now - t_prev),
            None => self.shifted().log_density(t_prev, t_now),
        };
        let mut out = [0.0; 2];
        out[self.base_label] = lb;
        out[self.shifted_label()] = ls;
        Ok((out, floored))
    }
}

/// Per-run evaluation state: the level guard and a prepared hyperbolic
/// density when that extension is active.
pub(crate) struct StepKernel {
    pub guard: LevelGuard,
    pub hyp: Option<Density>,
}

impl StepKernel {
    pub fn new(model: &RegimeModel, guard: LevelGuard) -> Result<Self> {
        Ok(Self {
            guard,
            hyp: model.shifted_hyp.map(Density::new).transpose()?,
        })
    }
}
