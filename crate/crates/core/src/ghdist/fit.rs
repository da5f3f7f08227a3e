//! Maximum-likelihood fitting by multi-start Nelder-Mead.
//!
//! Parameters are searched in unconstrained coordinates
//! `alpha = e^a`, `beta = alpha tanh(b)`, `delta = e^d` (and `nu = e^n` for
//! VG), so every simplex vertex is a valid parameter set.

use serde::{Deserialize, Serialize};

use super::{Density, Family, GHParams};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::special::optim::{nelder_mead, NelderMeadOptions};

pub const MIN_SAMPLES: usize = 50;

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub starts: usize,
    pub nelder_mead: NelderMeadOptions,
    pub execution: Execution,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            nelder_mead: NelderMeadOptions {
                step: 0.3,
                f_tol: 1e-11,
                x_tol: 1e-8,
                max_evals: 20_000,
                restarts: 2,
            },
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: GHParams,
    pub loglik: f64,
    /// Objective evaluations spent by the winning start.
    pub iterations: usize,
    pub converged: bool,
    /// Starts that reached a finite likelihood.
    pub start_points_used: usize,
}

/// `sum ln f(x_i)`.
pub fn log_likelihood(params: &GHParams, samples: &[f64], exec: Execution) -> Result<f64> {
    let d = Density::new(*params)?;
    Ok(par::sum_by(exec, samples, |&x| d.log_pdf(x)))
}

fn decode(family: Family, theta: &[f64]) -> Result<GHParams> {
    let alpha_beta = |a: f64, b: f64| {
        let alpha = a.exp();
        (alpha, alpha * b.tanh())
    };
    match family {
        Family::Gh => {
            let (alpha, beta) = alpha_beta(theta[1], theta[2]);
            GHParams::gh(theta[0], alpha, beta, theta[3], theta[4].exp())
        }
        Family::Nig | Family::Hyp => {
            let (alpha, beta) = alpha_beta(theta[0], theta[1]);
            let ctor = if family == Family::Nig { GHParams::nig } else { GHParams::hyp };
            ctor(alpha, beta, theta[2], theta[3].exp())
        }
        Family::Vg => {
            let (alpha, beta) = alpha_beta(theta[1], theta[2]);
            GHParams::vg(theta[0].exp(), alpha, beta, theta[3])
        }
        Family::Normal => GHParams::normal(theta[0], theta[1].exp()),
    }
}

struct SampleSummary {
    mean: f64,
    sd: f64,
    skew: f64,
}

fn summarise(samples: &[f64]) -> SampleSummary {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let m2 = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = samples.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    SampleSummary {
        mean,
        sd: m2.sqrt(),
        skew: m3 / m2.powf(1.5),
    }
}

/// Starting points spread over tail weight (`c`) and skew direction, each
/// matched to the sample mean and variance under a symmetric approximation.
fn start_points(family: Family, s: &SampleSummary, count: usize) -> Vec<Vec<f64>> {
    const TAILS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
    let skew_dir = if s.skew < 0.0 { -1.0 } else { 1.0 };
    (0..count)
        .map(|k| {
            let c = TAILS[(k / 2) % TAILS.len()] * (1.0 + (k / 8) as f64);
            let b: f64 = if k % 2 == 0 { 0.0 } else { 0.3 * skew_dir };
            match family {
                Family::Vg => {
                    let nu = c;
                    let alpha = (2.0 * nu).sqrt() / s.sd;
                    let beta = alpha * b.tanh();
                    vec![nu.ln(), alpha.ln(), b, s.mean - beta * s.sd * s.sd]
                }
                _ => {
                    let alpha = c / s.sd;
                    let delta = s.sd * s.sd * alpha;
                    let beta = alpha * b.tanh();
                    let mu = s.mean - beta * s.sd * s.sd;
                    match family {
                        Family::Gh => {
                            let nu = if k % 4 < 2 { -0.5 } else { 1.0 };
                            vec![nu, alpha.ln(), b, mu, delta.ln()]
                        }
                        _ => vec![alpha.ln(), b, mu, delta.ln()],
                    }
                }
            }
        })
        .collect()
}

/// Fit `family` to `samples` by maximum likelihood.
pub fn fit_mle(samples: &[f64], family: Family, options: &FitOptions) -> Result<FitResult> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::Validation(format!(
            "fitting needs at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation("samples contain non-finite values".into()));
    }
    let first = samples[0];
    if samples.iter().all(|&x| x == first) {
        return Err(Error::Validation("samples are constant".into()));
    }
    let summary = summarise(samples);

    if family == Family::Normal {
        let params = GHParams::normal(summary.mean, summary.sd)?;
        return Ok(FitResult {
            params,
            loglik: log_likelihood(&params, samples, options.execution)?,
            iterations: 0,
            converged: true,
            start_points_used: 1,
        });
    }

    let n = samples.len() as f64;
    let objective = |theta: &[f64]| -> f64 {
        match decode(family, theta).and_then(|p| Density::new(p)) {
            Ok(d) => -samples.iter().map(|&x| d.log_pdf(x)).sum::<f64>() / n,
            Err(_) => f64::NAN,
        }
    };
    let starts = start_points(family, &summary, options.starts.max(1));
    let runs = par::map_slice(options.execution, &starts, |x0| nelder_mead(objective, x0, options.nelder_mead));

    let finite: Vec<_> = runs.iter().filter(|r| r.value.is_finite()).collect();
    let best = finite
        .iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or_else(|| {
            Error::NonConvergence(format!(
                "{family} fit: none of {} starts reached a finite likelihood (sample mean {:.4}, sd {:.4})",
                starts.len(),
                summary.mean,
                summary.sd
            ))
        })?;
    let params = decode(family, &best.x)?;
    Ok(FitResult {
        params,
        loglik: log_likelihood(&params, samples, options.execution)?,
        iterations: best.evals,
        converged: best.converged,
        start_points_used: finite.len(),
    })
}
