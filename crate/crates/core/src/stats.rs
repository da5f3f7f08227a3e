//! Normality, goodness-of-fit, heteroscedasticity and long-memory
//! diagnostics.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{chi2_sf, std_normal_cdf, std_normal_quantile};

/// Significance levels at which every test reports a decision.
pub const DEFAULT_ALPHAS: [f64; 3] = [0.01, 0.05, 0.10];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub alpha: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub reject_at: Vec<Decision>,
    /// Auxiliary numbers such as degrees of freedom or scaled statistics.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl TestResult {
    fn new(name: &str, statistic: f64, p_value: Option<f64>) -> Self {
        let p_value = p_value.map(|p| p.clamp(0.0, 1.0));
        let reject_at = match p_value {
            Some(p) => DEFAULT_ALPHAS.iter().map(|&alpha| Decision { alpha, reject: p < alpha }).collect(),
            None => Vec::new(),
        };
        Self {
            name: name.into(),
            statistic,
            p_value,
            reject_at,
            extra: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.extra.insert(key.into(), value);
        self
    }

    /// Decision at `alpha`, from the p-value.
    pub fn rejects_at(&self, alpha: f64) -> Option<bool> {
        self.p_value.map(|p| p < alpha)
    }
}

fn check_finite(samples: &[f64], what: &str) -> Result<()> {
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation(format!("{what}: samples contain non-finite values")));
    }
    Ok(())
}

/// Mean and biased central moments m2, m3, m4.
fn central_moments(x: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (mean, m2 / n, m3 / n, m4 / n)
}

/// Pearson chi-square test of normality with `n_bins` equal-probability bins
/// under the normal law fitted by maximum likelihood. Two parameters are
/// estimated, so the reference law has `bins - 3` degrees of freedom. When
/// the expected count per bin would fall below 5 the bin count is reduced
/// and the merge is recorded.
pub fn pearson_chi2_normal(samples: &[f64], n_bins: usize) -> Result<TestResult> {
    check_finite(samples, "chi-square test")?;
    let n = samples.len();
    let mut bins = n_bins;
    if bins < 4 {
        return Err(Error::Validation(format!("chi-square test needs at least 4 bins, got {n_bins}")));
    }
    if (n as f64) / (bins as f64) < 5.0 {
        bins = n / 5;
    }
    if bins < 4 {
        return Err(Error::Validation(format!("chi-square test needs at least 20 samples, got {n}")));
    }
    let (mean, m2, _, _) = central_moments(samples);
    if !(m2 > 0.0) {
        return Err(Error::Validation("chi-square test on a constant sample".into()));
    }
    let sd = m2.sqrt();
    let mut counts = vec![0usize; bins];
    for &x in samples {
        let u = std_normal_cdf((x - mean) / sd);
        let k = ((u * bins as f64) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let expected = n as f64 / bins as f64;
    let stat: f64 = counts.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    let df = (bins - 3) as f64;
    let mut r = TestResult::new("pearson_chi2", stat, Some(chi2_sf(stat, df)))
        .with("df", df)
        .with("bins", bins as f64);
    if bins != n_bins {
        r.notes.push(format!("merged {n_bins} bins into {bins} to keep expected counts >= 5"));
    }
    Ok(r)
}

/// Jarque-Bera statistic from sample size, skewness and (raw) kurtosis.
pub fn jarque_bera_from_moments(n: usize, skewness: f64, kurtosis: f64) -> TestResult {
    let stat = n as f64 / 6.0 * (skewness * skewness + (kurtosis - 3.0).powi(2) / 4.0);
    TestResult::new("jarque_bera", stat, Some(chi2_sf(stat, 2.0)))
        .with("skewness", skewness)
        .with("kurtosis", kurtosis)
}

/// Jarque-Bera normality test with moment-based skewness and kurtosis.
pub fn jarque_bera(samples: &[f64]) -> Result<TestResult> {
    check_finite(samples, "Jarque-Bera test")?;
    if samples.len() < 20 {
        return Err(Error::Validation(format!("Jarque-Bera needs at least 20 samples, got {}", samples.len())));
    }
    let (_, m2, m3, m4) = central_moments(samples);
    if !(m2 > 0.0) {
        return Err(Error::Validation("Jarque-Bera test on a constant sample".into()));
    }
    Ok(jarque_bera_from_moments(samples.len(), m3 / m2.powf(1.5), m4 / (m2 * m2)))
}

/// Upper tail of the Kolmogorov distribution,
/// `2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 x^2)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn sorted_probabilities(cdf_values: &[f64]) -> Result<Vec<f64>> {
    if cdf_values.is_empty() {
        return Err(Error::Validation("goodness-of-fit test on an empty sample".into()));
    }
    if cdf_values.iter().any(|u| !(0.0..=1.0).contains(u)) {
        return Err(Error::Validation("cdf values must lie in [0, 1]".into()));
    }
    let mut u = cdf_values.to_vec();
    u.sort_by(f64::total_cmp);
    Ok(u)
}

/// Kolmogorov-Smirnov test from the hypothesised cdf evaluated at each
/// sample. Reports `D` as the statistic and `sqrt(n) D` in `extra`. The
/// p-value uses Stephens' finite-sample scaling
/// `(sqrt(n) + 0.12 + 0.11/sqrt(n)) D` in the Kolmogorov tail.
pub fn kolmogorov_smirnov_from_cdf(cdf_values: &[f64]) -> Result<TestResult> {
    let u = sorted_probabilities(cdf_values)?;
    let n = u.len() as f64;
    let d = u
        .iter()
        .enumerate()
        .map(|(i, &f)| ((i + 1) as f64 / n - f).max(f - i as f64 / n))
        .fold(0.0, f64::max);
    let rn = n.sqrt();
    let p = kolmogorov_sf((rn + 0.12 + 0.11 / rn) * d);
    Ok(TestResult::new("kolmogorov_smirnov", d, Some(p)).with("sqrt_n_d", rn * d))
}

/// Kolmogorov-Smirnov test of `samples` against `cdf`.
pub fn kolmogorov_smirnov(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestResult> {
    check_finite(samples, "Kolmogorov-Smirnov test")?;
    let u: Vec<f64> = samples.iter().map(|&x| cdf(x)).collect();
    kolmogorov_smirnov_from_cdf(&u)
}

/// Clipping applied to cdf values before taking logarithms.
pub const AD_CLIP: f64 = 1e-12;

/// Limiting distribution of `A^2` for a fully specified cdf (Marsaglia &
/// Marsaglia, 2004).
fn ad_inf(z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z < 2.0 {
        (-1.233_714_1 / z).exp() / z.sqrt()
            * (2.000_12 + (0.247_105 - (0.064_982_1 - (0.034_796_2 - (0.011_672 - 0.001_686_91 * z) * z) * z) * z) * z)
    } else {
        (-(1.077_6 - (2.306_95 - (0.434_24 - (0.082_433 - (0.008_056 - 0.000_314_6 * z) * z) * z) * z) * z).exp()).exp()
    }
}

/// Finite-sample correction to [`ad_inf`] (same source).
fn ad_errfix(n: f64, x: f64) -> f64 {
    if x > 0.8 {
        return (-130.2137 + (745.2337 - (1705.091 - (1950.646 - (1116.360 - 255.7844 * x) * x) * x) * x) * x) / n;
    }
    let c = 0.01265 + 0.1757 / n;
    if x < c {
        let t = x / c;
        let t = t.sqrt() * (1.0 - t) * (49.0 * t - 102.0);
        return t * (0.0037 / (n * n) + 0.00078 / n + 0.00006) / n;
    }
    let t = (x - c) / (0.8 - c);
    let t = -0.000_226_33 + (6.540_34 - (14.6538 - (14.458 - (8.259 - 1.918_64 * t) * t) * t) * t) * t;
    t * (0.04213 + 0.01365 / n) / n
}

/// `P(A^2 > z)` for a sample of size `n` from a fully specified cdf.
pub fn anderson_darling_sf(n: usize, z: f64) -> f64 {
    let x = ad_inf(z);
    (1.0 - (x + ad_errfix(n as f64, x))).clamp(0.0, 1.0)
}

/// Anderson-Darling test from cdf values. Values are clipped to
/// `[AD_CLIP, 1 - AD_CLIP]`; clipping is noted. Set `estimated` when the
/// cdf's parameters were fitted to the same sample: the p-value is then
/// conservative and flagged approximate.
pub fn anderson_darling_from_cdf(cdf_values: &[f64], estimated: bool) -> Result<TestResult> {
    let u = sorted_probabilities(cdf_values)?;
    let n = u.len();
    let nf = n as f64;
    let clipped = u.iter().filter(|&&f| !(AD_CLIP..=1.0 - AD_CLIP).contains(&f)).count();
    let c = |f: f64| f.clamp(AD_CLIP, 1.0 - AD_CLIP);
    let s: f64 = (0..n)
        .map(|i| (2 * i + 1) as f64 * (c(u[i]).ln() + (1.0 - c(u[n - 1 - i])).ln()))
        .sum();
    let a2 = -nf - s / nf;
    let mut r = TestResult::new("anderson_darling", a2, Some(anderson_darling_sf(n, a2)));
    if clipped > 0 {
        r.notes.push(format!("{clipped} cdf values clipped to [{AD_CLIP:e}, 1 - {AD_CLIP:e}]"));
        r.extra.insert("clipped".into(), clipped as f64);
    }
    if estimated {
        r.notes.push("p-value approximate: parameters estimated from the same sample".into());
    }
    Ok(r)
}

pub fn anderson_darling(samples: &[f64], cdf: impl Fn(f64) -> f64, estimated: bool) -> Result<TestResult> {
    check_finite(samples, "Anderson-Darling test")?;
    let u: Vec<f64> = samples.iter().map(|&x| cdf(x)).collect();
    anderson_darling_from_cdf(&u, estimated)
}

/// Default lag count for [`engle_arch`].
pub const DEFAULT_ARCH_LAGS: usize = 12;

/// Engle's Lagrange-multiplier test for ARCH effects: regress squared
/// residuals on an intercept and `lags` of their own lags; the statistic
/// `n' R^2` is chi-square with `lags` degrees of freedom.
pub fn engle_arch(residuals: &[f64], lags: usize) -> Result<TestResult> {
    check_finite(residuals, "ARCH test")?;
    if lags == 0 {
        return Err(Error::Validation("ARCH test needs at least one lag".into()));
    }
    let n = residuals.len();
    if n <= 10 * lags {
        return Err(Error::Validation(format!("ARCH test with {lags} lags needs more than {} residuals, got {n}", 10 * lags)));
    }
    let sq: Vec<f64> = residuals.iter().map(|e| e * e).collect();
    let rows = n - lags;
    let y = DVector::from_fn(rows, |i, _| sq[i + lags]);
    let mean = y.mean();
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let df = lags as f64;
    if sst <= 1e-300 * rows as f64 || sst <= f64::EPSILON * f64::EPSILON * mean * mean * rows as f64 {
        let mut r = TestResult::new("engle_arch", 0.0, Some(1.0)).with("df", df).with("n_obs", rows as f64);
        r.notes.push("squared residuals are constant".into());
        return Ok(r);
    }
    let x = DMatrix::from_fn(rows, lags + 1, |i, j| if j == 0 { 1.0 } else { sq[i + lags - j] });
    let qr = x.clone().qr();
    let r_mat = qr.r();
    let r_max = (0..=lags).map(|i| r_mat[(i, i)].abs()).fold(0.0, f64::max);
    if (0..=lags).any(|i| r_mat[(i, i)].abs() <= 1e-12 * r_max) {
        return Err(Error::RankDeficient("ARCH regression on lagged squared residuals".into()));
    }
    let coef = r_mat
        .solve_upper_triangular(&(qr.q().transpose() * &y))
        .ok_or_else(|| Error::RankDeficient("ARCH regression".into()))?;
    let ssr = (&y - &x * coef).norm_squared();
    let r2 = (1.0 - ssr / sst).max(0.0);
    let stat = rows as f64 * r2;
    Ok(TestResult::new("engle_arch", stat, Some(chi2_sf(stat, df)))
        .with("df", df)
        .with("r_squared", r2)
        .with("n_obs", rows as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstResult {
    pub h: f64,
    /// Window sizes used in the regression.
    pub windows: Vec<usize>,
    /// Mean rescaled range per window size.
    pub rescaled_range: Vec<f64>,
}

/// Smallest window of the R/S grid.
pub const HURST_MIN_WINDOW: usize = 16;
/// Number of log-spaced window sizes.
pub const HURST_GRID: usize = 20;

/// Mean rescaled range over the non-overlapping windows of length `s`.
fn mean_rescaled_range(x: &[f64], s: usize) -> Option<f64> {
    let mut total = 0.0;
    let mut used = 0usize;
    for w in x.chunks_exact(s) {
        let mean = w.iter().sum::<f64>() / s as f64;
        let (mut y, mut hi, mut lo, mut ss) = (0.0, 0.0f64, 0.0f64, 0.0);
        for v in w {
            let d = v - mean;
            y += d;
            hi = hi.max(y);
            lo = lo.min(y);
            ss += d * d;
        }
        let sd = (ss / s as f64).sqrt();
        if sd > 0.0 {
            total += (hi - lo) / sd;
            used += 1;
        }
    }
    (used > 0).then(|| total / used as f64)
}

/// Classical rescaled-range estimate of the Hurst exponent: the OLS slope of
/// `ln(R/S)` on `ln(s)` over log-spaced window sizes from
/// [`HURST_MIN_WINDOW`] to `n/2`.
pub fn hurst_rs(series: &[f64]) -> Result<HurstResult> {
    check_finite(series, "Hurst estimate")?;
    let n = series.len();
    if n < 256 {
        return Err(Error::Validation(format!("Hurst estimate needs at least 256 observations, got {n}")));
    }
    let first = series[0];
    if series.iter().all(|&v| v == first) {
        return Err(Error::Validation("Hurst exponent of a constant series is undefined".into()));
    }
    let (lo, hi) = ((HURST_MIN_WINDOW as f64).ln(), ((n / 2) as f64).ln());
    let mut sizes: Vec<usize> = (0..HURST_GRID)
        .map(|k| (lo + (hi - lo) * k as f64 / (HURST_GRID - 1) as f64).exp().round() as usize)
        .collect();
    sizes.dedup();
    let mut windows = Vec::new();
    let mut rescaled_range = Vec::new();
    for s in sizes {
        if let Some(rs) = mean_rescaled_range(series, s) {
            windows.push(s);
            rescaled_range.push(rs);
        }
    }
    if windows.len() < 2 {
        return Err(Error::Validation("too few non-constant windows for a Hurst estimate".into()));
    }
    let xs: Vec<f64> = windows.iter().map(|&s| (s as f64).ln()).collect();
    let ys: Vec<f64> = rescaled_range.iter().map(|r| r.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(HurstResult {
        h: sxy / sxx,
        windows,
        rescaled_range,
    })
}

/// Standard-normal cdf, for tests against a fitted normal law.
pub fn normal_cdf(mean: f64, sd: f64) -> impl Fn(f64) -> f64 {
    move |x| std_normal_cdf((x - mean) / sd)
}

/// `n` points at the standard normal quantiles of `(i - 1/2) / n`.
pub fn normal_quantile_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| std_normal_quantile((i as f64 + 0.5) / n as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn jarque_bera_arithmetic() {
        assert_eq!(jarque_bera_from_moments(100, 0.0, 3.0).statistic, 0.0);
        assert!((jarque_bera_from_moments(100, 0.6, 3.0).statistic - 6.0).abs() < 1e-12);
        let r = jarque_bera_from_moments(100, 0.6, 3.0);
        assert!((r.p_value.unwrap() - (-3.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn chi2_on_quantile_grid_is_near_zero() {
        let r = pearson_chi2_normal(&normal_quantile_grid(5000), 50).unwrap();
        assert!(r.statistic < 1.0, "{}", r.statistic);
        assert!(r.p_value.unwrap() > 0.999);
        assert_eq!(r.extra["df"], 47.0);
    }

    #[test]
    fn chi2_rejects_uniform_and_merges_bins() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        assert!(pearson_chi2_normal(&u, 50).unwrap().rejects_at(0.01).unwrap());
        let r = pearson_chi2_normal(&normals(100, 1), 50).unwrap();
        assert_eq!(r.extra["bins"], 20.0);
        assert_eq!(r.notes.len(), 1);
    }

    #[test]
    fn ks_on_exact_quantiles() {
        let n = 400;
        let x = normal_quantile_grid(n);
        let r = kolmogorov_smirnov(&x, normal_cdf(0.0, 1.0)).unwrap();
        assert!((r.statistic - 0.5 / n as f64).abs() < 1e-9, "{}", r.statistic);
        assert!((r.extra["sqrt_n_d"] - 0.5 / (n as f64).sqrt()).abs() < 1e-8);
    }

    #[test]
    fn ks_invariant_under_monotone_transform() {
        let x = normals(300, 2);
        let a = kolmogorov_smirnov(&x, normal_cdf(0.1, 1.2)).unwrap().statistic;
        let y: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let cdf = normal_cdf(0.1, 1.2);
        let b = kolmogorov_smirnov(&y, |v| cdf(v.ln())).unwrap().statistic;
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn kolmogorov_tail_known_points() {
        // classical critical values of the limiting law
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn ad_single_point_at_median() {
        let r = anderson_darling_from_cdf(&[0.5], false).unwrap();
        assert!((r.statistic - (-1.0 - 2.0 * 0.5f64.ln())).abs() < 1e-14);
        assert!((r.statistic - 0.386_294_361_119_890_6).abs() < 1e-12);
    }

    #[test]
    fn ad_limiting_critical_values() {
        // upper 5% and 1% points of the limiting case-0 law
        assert!((1.0 - ad_inf(2.492) - 0.05).abs() < 5e-4);
        assert!((1.0 - ad_inf(3.857) - 0.01).abs() < 5e-4);
    }

    #[test]
    fn ad_exact_quantiles_beat_permutations() {
        let n = 8;
        let exact: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let base = anderson_darling_from_cdf(&exact, false).unwrap().statistic;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            // perturb the F-values while keeping them a set of n probabilities
            let other: Vec<f64> = exact.iter().map(|u| (u + rng.random_range(-0.05..0.05)).clamp(0.01, 0.99)).collect();
            assert!(anderson_darling_from_cdf(&other, false).unwrap().statistic >= base - 1e-12);
        }
    }

    #[test]
    fn ad_clipping_is_flagged() {
        let r = anderson_darling_from_cdf(&[0.0, 0.3, 0.6, 1.0], true).unwrap();
        assert!(r.statistic.is_finite());
        assert_eq!(r.extra["clipped"], 2.0);
        assert_eq!(r.notes.len(), 2);
    }

    #[test]
    fn arch_detects_strong_arch() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut e = vec![0.0f64];
        for _ in 1..5000 {
            let s2 = 0.1 + 0.9 * e.last().unwrap().powi(2);
            let z: f64 = rng.sample(StandardNormal);
            e.push(s2.sqrt() * z);
        }
        let r = engle_arch(&e, DEFAULT_ARCH_LAGS).unwrap();
        assert!(r.p_value.unwrap() < 0.01);
    }

    #[test]
    fn arch_constant_squares_and_errors() {
        let e: Vec<f64> = (0..200).map(|i| if i % 2 == 0 { 1.5 } else { -1.5 }).collect();
        let r = engle_arch(&e, 5).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(engle_arch(&e, 0).is_err());
        assert!(engle_arch(&e[..50], 5).is_err());
    }

    #[test]
    fn hurst_white_noise_and_ramp() {
        let h = hurst_rs(&normals(10_000, 3)).unwrap().h;
        assert!((0.45..=0.58).contains(&h), "{h}");
        let ramp: Vec<f64> = (0..4096).map(|t| t as f64).collect();
        assert!(hurst_rs(&ramp).unwrap().h > 0.95);
        assert!(hurst_rs(&[2.0; 500]).is_err());
    }

    #[test]
    fn hurst_affine_invariance() {
        let x = normals(3000, 6);
        let h = hurst_rs(&x).unwrap().h;
        for (a, b) in [(3.0, 7.0), (-0.5, 100.0), (1e-3, -4.0)] {
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            assert!((hurst_rs(&y).unwrap().h - h).abs() < 1e-10);
        }
    }

    #[test]
    fn time_ordered_tests_notice_shuffling() {
        // a random walk is strongly dependent; shuffling its values destroys that
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut walk = vec![0.0f64];
        for _ in 1..3000 {
            let z: f64 = rng.sample(StandardNormal);
            walk.push(walk.last().unwrap() + z);
        }
        let mut shuffled = walk.clone();
        for i in (1..shuffled.len()).rev() {
            let j = rng.random_range(0..=i);
            shuffled.swap(i, j);
        }
        assert!(hurst_rs(&walk).unwrap().h - hurst_rs(&shuffled).unwrap().h > 0.3);
        let a = engle_arch(&walk, 12).unwrap().statistic;
        let b = engle_arch(&shuffled, 12).unwrap().statistic;
        assert!((a - b).abs() > 1.0);
    }

    #[test]
    fn empirical_cdf_minimises_ks_and_ad() {
        let x = normals(200, 8);
        let mut sorted = x.clone();
        sorted.sort_by(f64::total_cmp);
        let n = x.len() as f64;
        // mid-step empirical cdf of the very same sample
        let ecdf = |v: f64| (sorted.partition_point(|&s| s < v) as f64 + 0.5) / n;
        let ks_self = kolmogorov_smirnov(&x, ecdf).unwrap().statistic;
        let ad_self = anderson_darling(&x, ecdf, false).unwrap().statistic;
        for (m, s) in [(0.0, 1.0), (0.05, 0.98), (-0.1, 1.1)] {
            assert!(ks_self <= kolmogorov_smirnov(&x, normal_cdf(m, s)).unwrap().statistic);
            assert!(ad_self <= anderson_darling(&x, normal_cdf(m, s), false).unwrap().statistic);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn permutation_invariance_and_nested_decisions(seed in 0u64..1000, rot in 1usize..199) {
            let x = normals(200, seed);
            let mut y = x.clone();
            y.rotate_left(rot);
            y.reverse();
            let cdf = normal_cdf(0.0, 1.0);
            let pairs = [
                (jarque_bera(&x).unwrap(), jarque_bera(&y).unwrap()),
                (pearson_chi2_normal(&x, 10).unwrap(), pearson_chi2_normal(&y, 10).unwrap()),
                (kolmogorov_smirnov(&x, &cdf).unwrap(), kolmogorov_smirnov(&y, &cdf).unwrap()),
                (anderson_darling(&x, &cdf, false).unwrap(), anderson_darling(&y, &cdf, false).unwrap()),
            ];
            for (a, b) in &pairs {
                prop_assert!((a.statistic - b.statistic).abs() <= 1e-9 * (1.0 + a.statistic.abs()));
                let p = a.p_value.unwrap();
                prop_assert!((0.0..=1.0).contains(&p));
                if a.rejects_at(0.01).unwrap() {
                    prop_assert!(a.rejects_at(0.05).unwrap());
                }
            }
        }
    }
}
