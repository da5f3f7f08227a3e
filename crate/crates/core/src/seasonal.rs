//! Deterministic seasonality: linear trend plus one annual sinusoid.
//!
//! The model is `S(t) = A0 + A1 t + A2 sin(w (t - phi))` with `w = 2 pi / 365`
//! and `t = 1` on the first observation date. It is fitted in the linear form
//! `a0 + a1 t + a2 sin(w t) + a3 cos(w t)` by ordinary least squares and then
//! converted to amplitude and phase.

use std::f64::consts::PI;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::TemperatureSeries;

/// Days per seasonal cycle.
pub const PERIOD_DAYS: f64 = 365.0;

/// Angular frequency of the annual cycle, radians per day.
pub fn omega() -> f64 {
    2.0 * PI / PERIOD_DAYS
}

/// Least-squares coefficients of the linear seasonal form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeasonalFitRaw {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub residual_sum_squares: f64,
}

/// Amplitude-phase form of the seasonal model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeasonalParams {
    #[serde(rename = "A0")]
    pub a0: f64,
    #[serde(rename = "A1")]
    pub a1: f64,
    #[serde(rename = "A2")]
    pub a2: f64,
    pub phi: f64,
}

/// The same sinusoid written with a signed amplitude and a phase from a
/// single-argument arctangent, `phi in (-365/4, 365/4]`. Reported next to
/// the normalised form so fitted values can be compared with tables that use
/// that convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignedPhaseParams {
    #[serde(rename = "A0")]
    pub a0: f64,
    #[serde(rename = "A1")]
    pub a1: f64,
    #[serde(rename = "A2")]
    pub a2: f64,
    pub phi: f64,
}

/// Which part of the seasonal model [`deseasonalize`] removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeseasonalizeMode {
    /// Subtract the whole of `S(t)`.
    #[default]
    Full,
    /// Subtract trend slope and sinusoid but keep the level `A0`.
    SinusoidOnly,
}

impl std::str::FromStr for DeseasonalizeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "sinusoid-only" => Ok(Self::SinusoidOnly),
            other => Err(Error::Validation(format!("unknown deseasonalize mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeseasonalizedSeries {
    pub start_date: NaiveDate,
    pub values: Vec<f64>,
    pub mode: DeseasonalizeMode,
}

fn design_row(t: f64) -> [f64; 4] {
    let w = omega() * t;
    [1.0, t, w.sin(), w.cos()]
}

/// Fit the linear seasonal form to complete daily values, `t = 1..=n`.
pub fn fit_seasonal(values: &[f64]) -> Result<SeasonalFitRaw> {
    let n = values.len();
    if n < 4 {
        return Err(Error::RankDeficient(format!("{n} observations for 4 coefficients")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("seasonal fit needs finite values".into()));
    }
    // Scale the trend column to [0, 1] to keep the QR factor well conditioned.
    let scale = n as f64;
    let x = DMatrix::from_fn(n, 4, |i, j| {
        let row = design_row((i + 1) as f64);
        if j == 1 {
            row[1] / scale
        } else {
            row[j]
        }
    });
    let y = DVector::from_column_slice(values);
    let qr = x.clone().qr();
    let r = qr.r();
    let r_max = (0..4).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    for i in 0..4 {
        if r[(i, i)].abs() <= 1e-10 * r_max {
            return Err(Error::RankDeficient(format!("column {i} is collinear with the others")));
        }
    }
    let qty = qr.q().transpose() * &y;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient("singular triangular factor".into()))?;
    let resid = &y - &x * &coef;
    Ok(SeasonalFitRaw {
        a0: coef[0],
        a1: coef[1] / scale,
        a2: coef[2],
        a3: coef[3],
        residual_sum_squares: resid.norm_squared(),
    })
}

/// Fit a series, which must have no missing days.
pub fn fit_seasonal_series(series: &TemperatureSeries) -> Result<SeasonalFitRaw> {
    fit_seasonal(&series.complete_values()?)
}

/// Convert `a2 sin(w t) + a3 cos(w t)` to `A2 sin(w (t - phi))` with
/// `A2 >= 0` and `phi in [0, 365)`.
pub fn to_amplitude_phase(raw: &SeasonalFitRaw) -> SeasonalParams {
    let amplitude = raw.a2.hypot(raw.a3);
    let phi = if amplitude == 0.0 {
        0.0
    } else {
        // a2 = A2 cos(w phi), a3 = -A2 sin(w phi)
        let p = (-raw.a3).atan2(raw.a2) / omega();
        let p = p.rem_euclid(PERIOD_DAYS);
        if p >= PERIOD_DAYS {
            0.0
        } else {
            p
        }
    };
    SeasonalParams {
        a0: raw.a0,
        a1: raw.a1,
        a2: amplitude,
        phi,
    }
}

/// Signed-amplitude form of the same sinusoid.
pub fn to_signed_phase(raw: &SeasonalFitRaw) -> SignedPhaseParams {
    let magnitude = raw.a2.hypot(raw.a3);
    let (a2, phi) = if magnitude == 0.0 {
        (0.0, 0.0)
    } else if raw.a2 == 0.0 {
        // w phi = -sign(a3) pi/2
        (magnitude, -raw.a3.signum() * PERIOD_DAYS / 4.0)
    } else {
        let phi = (-raw.a3 / raw.a2).atan() / omega();
        (raw.a2.signum() * magnitude, phi)
    };
    SignedPhaseParams {
        a0: raw.a0,
        a1: raw.a1,
        a2,
        phi,
    }
}

impl SeasonalParams {
    /// `A2 sin(w (t - phi))`.
    pub fn sinusoid(&self, t: f64) -> f64 {
        self.a2 * (omega() * (t - self.phi)).sin()
    }
}

/// `S(t) = A0 + A1 t + A2 sin(w (t - phi))`.
pub fn seasonal_value(params: &SeasonalParams, t: f64) -> f64 {
    params.a0 + params.a1 * t + params.sinusoid(t)
}

/// The part of `S(t)` that [`deseasonalize`] removes under `mode`.
pub fn removed_component(params: &SeasonalParams, t: f64, mode: DeseasonalizeMode) -> f64 {
    match mode {
        DeseasonalizeMode::Full => seasonal_value(params, t),
        DeseasonalizeMode::SinusoidOnly => params.a1 * t + params.sinusoid(t),
    }
}

/// Remove the seasonal component from complete values, `t = 1..=n`.
pub fn deseasonalize_values(values: &[f64], params: &SeasonalParams, mode: DeseasonalizeMode) -> Vec<f64> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| v - removed_component(params, (i + 1) as f64, mode))
        .collect()
}

pub fn deseasonalize(
    series: &TemperatureSeries,
    params: &SeasonalParams,
    mode: DeseasonalizeMode,
) -> Result<DeseasonalizedSeries> {
    let values = series.complete_values()?;
    Ok(DeseasonalizedSeries {
        start_date: series.start_date,
        values: deseasonalize_values(&values, params, mode),
        mode,
    })
}

/// Add the seasonal component back, the inverse of [`deseasonalize`].
pub fn reseasonalize(des: &DeseasonalizedSeries, params: &SeasonalParams) -> Vec<f64> {
    des.values
        .iter()
        .enumerate()
        .map(|(i, v)| v + removed_component(params, (i + 1) as f64, des.mode))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn raw(a0: f64, a1: f64, a2: f64, a3: f64) -> SeasonalFitRaw {
        SeasonalFitRaw {
            a0,
            a1,
            a2,
            a3,
            residual_sum_squares: 0.0,
        }
    }

    fn linear_form(r: &SeasonalFitRaw, t: f64) -> f64 {
        let w = omega() * t;
        r.a0 + r.a1 * t + r.a2 * w.sin() + r.a3 * w.cos()
    }

    #[test]
    fn noiseless_recovery() {
        let truth = raw(20.0, 0.001, 2.0, 1.0);
        let y: Vec<f64> = (1..=9375).map(|t| linear_form(&truth, t as f64)).collect();
        let fit = fit_seasonal(&y).unwrap();
        assert!((fit.a0 - 20.0).abs() < 1e-9);
        assert!((fit.a1 - 0.001).abs() < 1e-9);
        assert!((fit.a2 - 2.0).abs() < 1e-9);
        assert!((fit.a3 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_series() {
        let fit = fit_seasonal(&[7.5; 400]).unwrap();
        assert!((fit.a0 - 7.5).abs() < 1e-9);
        for c in [fit.a1, fit.a2, fit.a3] {
            assert!(c.abs() < 1e-9);
        }
    }

    #[test]
    fn too_short_or_degenerate() {
        assert!(matches!(fit_seasonal(&[1.0, 2.0, 3.0]), Err(Error::RankDeficient(_))));
        assert!(fit_seasonal(&[1.0, 2.0, 3.0, 4.0]).is_ok());
    }

    #[test]
    fn noisy_recovery_within_three_standard_errors() {
        // Monte Carlo oracle: standard errors from sigma^2 (X'X)^{-1}.
        let n = 9375;
        let sigma = 0.5;
        let truth = raw(20.0, 0.001, 2.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y: Vec<f64> = (1..=n)
            .map(|t| linear_form(&truth, t as f64) + sigma * rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let fit = fit_seasonal(&y).unwrap();
        let x = DMatrix::from_fn(n, 4, |i, j| design_row((i + 1) as f64)[j]);
        let cov = (x.transpose() * &x).try_inverse().unwrap() * (sigma * sigma);
        let est = [fit.a0, fit.a1, fit.a2, fit.a3];
        let tru = [20.0, 0.001, 2.0, 1.0];
        for k in 0..4 {
            let se = cov[(k, k)].sqrt();
            assert!((est[k] - tru[k]).abs() < 3.0 * se, "coef {k}: {} vs {}", est[k], tru[k]);
        }
    }

    #[test]
    fn residuals_orthogonal_to_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: Vec<f64> = (1..=2000)
            .map(|t| 25.0 + 0.002 * t as f64 + 3.0 * (omega() * t as f64 + 1.0).sin() + rng.random_range(-2.0..2.0))
            .collect();
        let fit = fit_seasonal(&y).unwrap();
        for j in 0..4 {
            let (mut dot, mut scale) = (0.0, 0.0);
            for (i, &v) in y.iter().enumerate() {
                let t = (i + 1) as f64;
                let row = design_row(t);
                dot += (v - linear_form(&fit, t)) * row[j];
                scale += (v * row[j]).abs();
            }
            assert!(dot.abs() < 1e-6 * scale, "column {j}: {dot}");
        }
    }

    #[test]
    fn amplitude_examples() {
        assert_eq!(to_amplitude_phase(&raw(0.0, 0.0, 3.0, 4.0)).a2, 5.0);
        let p = to_amplitude_phase(&raw(0.0, 0.0, 1.0, 0.0));
        assert_eq!((p.a2, p.phi), (1.0, 0.0));
        let p = to_amplitude_phase(&raw(1.0, 0.0, 0.0, 0.0));
        assert_eq!((p.a2, p.phi), (0.0, 0.0));
    }

    #[test]
    fn reconstruction_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = raw(26.8, 2.4e-5, -1.3, 1.55);
        let p = to_amplitude_phase(&r);
        for _ in 0..1000 {
            let t: f64 = rng.random_range(1.0..20_000.0);
            let w = omega() * t;
            let direct = r.a2 * w.sin() + r.a3 * w.cos();
            assert!((p.sinusoid(t) - direct).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn amplitude_phase_exact_in_every_quadrant(a2 in -10.0f64..10.0, a3 in -10.0f64..10.0, t in 1.0f64..10_000.0) {
            let r = raw(1.0, 0.0, a2, a3);
            let p = to_amplitude_phase(&r);
            prop_assert!(p.a2 >= 0.0);
            prop_assert!((0.0..PERIOD_DAYS).contains(&p.phi));
            let w = omega() * t;
            let direct = a2 * w.sin() + a3 * w.cos();
            prop_assert!((p.sinusoid(t) - direct).abs() < 1e-10);
            let s = to_signed_phase(&r);
            prop_assert!(s.phi.abs() <= PERIOD_DAYS / 4.0 + 1e-12);
            let signed = s.a2 * (omega() * (t - s.phi)).sin();
            prop_assert!((signed - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn table_six_style_parameters() {
        let p = SeasonalParams {
            a0: 26.8194,
            a1: 2.3855e-5,
            a2: -2.0234,
            phi: 196.2153,
        };
        let t = 196.2153 + PERIOD_DAYS / 4.0;
        let expect = 26.8194 + 2.3855e-5 * t - 2.0234;
        assert!((seasonal_value(&p, t) - expect).abs() < 1e-12);
    }

    #[test]
    fn pure_trend_and_period() {
        let p = SeasonalParams {
            a0: 3.0,
            a1: 0.01,
            a2: 0.0,
            phi: 40.0,
        };
        assert_eq!(seasonal_value(&p, 17.0), 3.0 + 0.01 * 17.0);
        let q = SeasonalParams { a2: 4.5, ..p };
        for t in [1.0, 100.5, 7000.0] {
            let diff = seasonal_value(&q, t + PERIOD_DAYS) - seasonal_value(&q, t);
            assert!((diff - PERIOD_DAYS * q.a1).abs() < 1e-9);
        }
    }

    #[test]
    fn deseasonalize_modes() {
        let p = SeasonalParams {
            a0: 27.0,
            a1: 1e-4,
            a2: 2.0,
            phi: 190.0,
        };
        let y: Vec<f64> = (1..=1000).map(|t| seasonal_value(&p, t as f64)).collect();
        let start = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
        let series = TemperatureSeries::from_values("s", start, &y);
        let full = deseasonalize(&series, &p, DeseasonalizeMode::Full).unwrap();
        assert!(full.values.iter().all(|v| v.abs() < 1e-9));
        let level = deseasonalize(&series, &p, DeseasonalizeMode::SinusoidOnly).unwrap();
        assert!(level.values.iter().all(|v| (v - 27.0).abs() < 1e-9));
        assert_eq!(full.values.len(), y.len());
    }

    #[test]
    fn deseasonalize_round_trip() {
        let p = SeasonalParams {
            a0: 27.0,
            a1: 1e-4,
            a2: 2.0,
            phi: 190.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y: Vec<f64> = (0..500).map(|_| rng.random_range(15.0..35.0)).collect();
        let series = TemperatureSeries::from_values("s", NaiveDate::from_ymd_opt(2000, 1, 1).unwrap(), &y);
        for mode in [DeseasonalizeMode::Full, DeseasonalizeMode::SinusoidOnly] {
            let des = deseasonalize(&series, &p, mode).unwrap();
            let back = reseasonalize(&des, &p);
            for (a, b) in back.iter().zip(&y) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn periodic_input_has_zero_residual() {
        // exactly 365-periodic data: the 365-day convention fits it with no residual
        let y: Vec<f64> = (1..=3650).map(|t| 28.0 + 2.5 * (omega() * (t as f64 - 200.0)).sin()).collect();
        let fit = fit_seasonal(&y).unwrap();
        assert!(fit.residual_sum_squares < 1e-16 * y.len() as f64);
    }
}
