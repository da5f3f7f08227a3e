//! Regime classification and residual extraction.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{LevelGuard, RegimeModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeLabel {
    Normal,
    Extreme,
}

impl fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegimeLabel::Normal => "normal",
            RegimeLabel::Extreme => "extreme",
        })
    }
}

/// `Extreme` where the shifted-regime probability is strictly above
/// `threshold`.
pub fn classify_regimes(prob_extreme: &[f64], threshold: f64) -> Result<Vec<RegimeLabel>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Validation(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    Ok(prob_extreme
        .iter()
        .map(|&p| if p > threshold { RegimeLabel::Extreme } else { RegimeLabel::Normal })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedResidual {
    pub t: usize,
    pub residual: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeResiduals {
    /// `(T_t - (1 + kappa) T_{t-1}) / (sigma_m |T_{t-1}|)` with the base
    /// regime's smoothed probability.
    pub base: Vec<WeightedResidual>,
    /// `(T_t - T_{t-1} - mu_l) / sigma_l` with the shifted regime's smoothed
    /// probability.
    pub shifted: Vec<WeightedResidual>,
    /// `T_t - E[T_t | T_{t-1}, F_N]`: observation minus the regime means
    /// weighted by the smoothed probabilities. Unstandardized.
    pub pooled: Vec<f64>,
}

/// Standardized residuals per regime, from day 1 on.
pub fn extract_regime_residuals(
    values: &[f64],
    model: &RegimeModel,
    smoothed: &[[f64; 2]],
    guard: LevelGuard,
) -> Result<RegimeResiduals> {
    model.validate()?;
    if values.len() != smoothed.len() || values.len() < 2 {
        return Err(Error::Validation(format!(
            "residual extraction needs matching series and probabilities (got {} and {})",
            values.len(),
            smoothed.len()
        )));
    }
    let (b, s) = (model.base_label, model.shifted_label());
    let n = values.len() - 1;
    let mut out = RegimeResiduals {
        base: Vec::with_capacity(n),
        shifted: Vec::with_capacity(n),
        pooled: Vec::with_capacity(n),
    };
    for t in 1..values.len() {
        let (tp, tn) = (values[t - 1], values[t]);
        let (level, _) = guard.level(tp, t)?;
        let base_mean = (1.0 + model.kappa) * tp;
        let shift_mean = tp + model.mu_l;
        out.base.push(WeightedResidual {
            t,
            residual: (tn - base_mean) / (model.sigma_m * level),
            weight: smoothed[t][b],
        });
        out.shifted.push(WeightedResidual {
            t,
            residual: (tn - shift_mean) / model.sigma_l,
            weight: smoothed[t][s],
        });
        out.pooled.push(tn - smoothed[t][b] * base_mean - smoothed[t][s] * shift_mean);
    }
    Ok(out)
}
