//! EM calibration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::filter::{hamilton_filter, kim_smooth, smoothed_joint, update_transitions, FilterOutput};
use super::{BaseRegime, LevelGuard, RegimeModel, ShiftedRegime, TransitionMatrix};
use crate::error::{Error, Result};
use crate::ghdist::{Density, GHParams};
use crate::par::{self, Execution};
use crate::special::optim::{nelder_mead, NelderMeadOptions};

/// Density of the shifted-regime increment inside the filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftedLaw {
    #[default]
    Gaussian,
    /// Hyperbolic increments with a numerical M-step.
    Hyperbolic,
}

/// Regime probabilities of the first day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialProbs {
    /// Stationary distribution of the current transition matrix.
    #[default]
    Stationary,
    /// Free parameter, re-estimated from the smoothed first-day probabilities.
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    /// Stop once the log-likelihood changes by less than this.
    pub tol: f64,
    pub max_iter: usize,
    pub guard: LevelGuard,
    pub shifted_law: ShiftedLaw,
    pub initial_probs: InitialProbs,
    /// Largest tolerated log-likelihood decrease between iterations.
    pub decrease_slack: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 500,
            guard: LevelGuard::default(),
            shifted_law: ShiftedLaw::default(),
            initial_probs: InitialProbs::default(),
            decrease_slack: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub model: RegimeModel,
    pub loglik: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmResult {
    pub model: RegimeModel,
    /// Entry 0 is the initial model.
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
    /// M-steps performed.
    pub iterations: usize,
    pub loglik: f64,
    /// Filter and smoother output at the final model.
    pub filter: FilterOutput,
    pub initial_probs: [f64; 2],
}

/// Volatilities below this end the run as a collapsed regime.
pub const MIN_VOLATILITY: f64 = 1e-10;

fn check_weights(values: &[f64], weights: &[f64]) -> Result<()> {
    if values.len() != weights.len() || values.len() < 2 {
        return Err(Error::Validation(format!(
            "M-step needs matching series and weights of length >= 2 (got {} and {})",
            values.len(),
            weights.len()
        )));
    }
    Ok(())
}

/// Weighted base-regime estimates. `weights[t]` is the smoothed base-regime
/// probability of day `t`; day 0 has no transition and is ignored.
///
/// With `l_t = max(|T_{t-1}|, epsilon)`,
/// `kappa = sum w T_{t-1} (T_t - T_{t-1}) / l^2 / sum w T_{t-1}^2 / l^2` and
/// `sigma_m^2 = sum w (T_t - (1 + kappa) T_{t-1})^2 / l^2 / sum w`.
/// Unfloored, `T_{t-1}^2 / l^2 = 1` and the denominators coincide.
pub fn m_step_base(values: &[f64], weights: &[f64], guard: LevelGuard) -> Result<BaseRegime> {
    check_weights(values, weights)?;
    let (mut sw, mut num, mut den) = (0.0, 0.0, 0.0);
    let mut levels = Vec::with_capacity(values.len() - 1);
    for t in 1..values.len() {
        let (tp, tn, w) = (values[t - 1], values[t], weights[t]);
        let (l, _) = guard.level(tp, t)?;
        let l2 = l * l;
        levels.push(l2);
        sw += w;
        num += w * tp * (tn - tp) / l2;
        den += w * tp * tp / l2;
    }
    if !(sw > 0.0) || !(den > 0.0) {
        return Err(Error::RegimeCollapse { regime: 1 });
    }
    let kappa = num / den;
    let mut ss = 0.0;
    for t in 1..values.len() {
        let r = values[t] - (1.0 + kappa) * values[t - 1];
        ss += weights[t] * r * r / levels[t - 1];
    }
    Ok(BaseRegime {
        kappa,
        sigma_m: (ss / sw).sqrt(),
    })
}

/// Weighted mean and root-mean-square deviation of the increments.
pub fn m_step_shifted(values: &[f64], weights: &[f64]) -> Result<ShiftedRegime> {
    check_weights(values, weights)?;
    let (mut sw, mut s1) = (0.0, 0.0);
    for t in 1..values.len() {
        sw += weights[t];
        s1 += weights[t] * (values[t] - values[t - 1]);
    }
    if !(sw > 0.0) {
        return Err(Error::RegimeCollapse { regime: 2 });
    }
    let mu_l = s1 / sw;
    let mut ss = 0.0;
    for t in 1..values.len() {
        let d = values[t] - values[t - 1] - mu_l;
        ss += weights[t] * d * d;
    }
    Ok(ShiftedRegime {
        mu_l,
        sigma_l: (ss / sw).sqrt(),
    })
}

/// Weighted hyperbolic fit to the increments, searched from `start` so the
/// weighted log-likelihood never falls below its starting value.
fn m_step_hyperbolic(values: &[f64], weights: &[f64], start: &GHParams) -> Result<GHParams> {
    let inc: Vec<(f64, f64)> = (1..values.len()).map(|t| (values[t] - values[t - 1], weights[t])).collect();
    let sw: f64 = inc.iter().map(|p| p.1).sum();
    if !(sw > 0.0) {
        return Err(Error::RegimeCollapse { regime: 2 });
    }
    let decode = |x: &[f64]| {
        let alpha = x[0].exp();
        GHParams::hyp(alpha, alpha * x[1].tanh(), x[2], x[3].exp())
    };
    let objective = |x: &[f64]| match decode(x).and_then(Density::new) {
        Ok(d) => -inc.iter().map(|&(v, w)| w * d.log_pdf(v)).sum::<f64>() / sw,
        Err(_) => f64::NAN,
    };
    let x0 = [
        start.alpha.ln(),
        (start.beta / start.alpha).atanh(),
        start.mu,
        start.delta.ln(),
    ];
    let opts = NelderMeadOptions {
        step: 0.1,
        f_tol: 1e-12,
        x_tol: 1e-9,
        max_evals: 4000,
        restarts: 1,
    };
    decode(&nelder_mead(objective, &x0, opts).x)
}

/// Hyperbolic law with the given mean and standard deviation, moderately
/// heavier-tailed than the Gaussian.
fn hyperbolic_like(mean: f64, sd: f64) -> Result<GHParams> {
    // beta = 0, alpha delta = 4: variance = (delta/alpha) K_2(4)/K_1(4)
    let zeta = 4.0;
    let r = (crate::special::ln_bessel_k(2.0, zeta)? - crate::special::ln_bessel_k(1.0, zeta)?).exp();
    let alpha = (zeta * r).sqrt() / sd;
    GHParams::hyp(alpha, 0.0, mean, zeta / alpha)
}

fn with_hyperbolic(model: &RegimeModel, hyp: GHParams) -> Result<RegimeModel> {
    let m = hyp.moments()?;
    Ok(RegimeModel {
        mu_l: m.mean,
        sigma_l: m.variance.sqrt(),
        shifted_hyp: Some(hyp),
        ..*model
    })
}

/// Transition update when day 0 is drawn from the stationary law of `P`.
///
/// The expected complete-data log-likelihood then contains
/// `sum_i P(S_0 = i | F_N) ln pi_i(P)` besides the transition counts, so the
/// count ratio of [`update_transitions`] is no longer its maximiser. Starting
/// from that ratio, a simplex search over the two switching probabilities
/// maximises the full expression; the objective never ends below its
/// starting value, which keeps EM monotone.
fn update_transitions_stationary(out: &FilterOutput, trans: &TransitionMatrix) -> Result<TransitionMatrix> {
    let closed = update_transitions(out, trans)?;
    let (p12, p21) = (closed.p12, closed.p21);
    if !(p12 > 0.0 && p12 < 1.0 && p21 > 0.0 && p21 < 1.0) {
        return Ok(closed);
    }
    let mut n = [[0.0; 2]; 2];
    for j in smoothed_joint(out, trans)? {
        for (a, row) in n.iter_mut().enumerate() {
            for (b, c) in row.iter_mut().enumerate() {
                *c += j[a][b];
            }
        }
    }
    let s0 = out.smoothed[0];
    let logistic = |x: f64| 1.0 / (1.0 + (-x).exp());
    let logit = |p: f64| (p / (1.0 - p)).ln();
    let objective = |x: &[f64]| {
        let (a, b) = (logistic(x[0]), logistic(x[1]));
        let ln_total = (a + b).ln();
        -(n[0][0] * (1.0 - a).ln()
            + n[0][1] * a.ln()
            + n[1][0] * b.ln()
            + n[1][1] * (1.0 - b).ln()
            + s0[0] * (b.ln() - ln_total)
            + s0[1] * (a.ln() - ln_total))
    };
    let opts = NelderMeadOptions {
        step: 0.05,
        f_tol: 1e-15,
        x_tol: 1e-12,
        max_evals: 2000,
        restarts: 1,
    };
    let best = nelder_mead(objective, &[logit(p12), logit(p21)], opts);
    let (a, b) = (logistic(best.x[0]), logistic(best.x[1]));
    Ok(TransitionMatrix {
        p11: 1.0 - a,
        p12: a,
        p21: b,
        p22: 1.0 - b,
    })
}

fn initial_probs(model: &RegimeModel, config: &EmConfig, previous: Option<&FilterOutput>) -> [f64; 2] {
    match (config.initial_probs, previous) {
        (InitialProbs::Estimated, Some(out)) => out.smoothed[0],
        _ => model.trans.stationary(),
    }
}

fn e_step(values: &[f64], model: &RegimeModel, init: [f64; 2], guard: LevelGuard) -> Result<FilterOutput> {
    let mut out = hamilton_filter(values, model, init, guard)?;
    out.smoothed = kim_smooth(&out, &model.trans)?;
    Ok(out)
}

fn m_step(values: &[f64], model: &RegimeModel, out: &FilterOutput, config: &EmConfig) -> Result<RegimeModel> {
    let b = model.base_label;
    let wb: Vec<f64> = out.smoothed.iter().map(|p| p[b]).collect();
    let ws: Vec<f64> = out.smoothed.iter().map(|p| p[1 - b]).collect();
    let base = m_step_base(values, &wb, config.guard)?;
    if !(base.sigma_m >= MIN_VOLATILITY) {
        return Err(Error::NonConvergence(format!(
            "base-regime volatility collapsed to {:e}",
            base.sigma_m
        )));
    }
    let trans = match config.initial_probs {
        InitialProbs::Estimated => update_transitions(out, &model.trans)?,
        InitialProbs::Stationary => update_transitions_stationary(out, &model.trans)?,
    };
    let next = RegimeModel {
        kappa: base.kappa,
        sigma_m: base.sigma_m,
        trans,
        ..*model
    };
    match &model.shifted_hyp {
        Some(h) => with_hyperbolic(&next, m_step_hyperbolic(values, &ws, h)?),
        None => {
            let s = m_step_shifted(values, &ws)?;
            if !(s.sigma_l >= MIN_VOLATILITY) {
                return Err(Error::NonConvergence(format!(
                    "shifted-regime volatility collapsed to {:e}",
                    s.sigma_l
                )));
            }
            Ok(RegimeModel {
                mu_l: s.mu_l,
                sigma_l: s.sigma_l,
                ..next
            })
        }
    }
}

/// Run EM from `init` until the log-likelihood settles.
pub fn em_calibrate(values: &[f64], init: &RegimeModel, config: &EmConfig) -> Result<EmResult> {
    init.validate()?;
    if !(config.tol > 0.0) || config.max_iter == 0 {
        return Err(Error::Validation("EM needs tol > 0 and max_iter >= 1".into()));
    }
    let mut model = match (config.shifted_law, init.shifted_hyp) {
        (ShiftedLaw::Hyperbolic, None) => with_hyperbolic(init, hyperbolic_like(init.mu_l, init.sigma_l)?)?,
        (ShiftedLaw::Gaussian, Some(_)) => RegimeModel {
            shifted_hyp: None,
            ..*init
        },
        _ => *init,
    };
    let mut probs = initial_probs(&model, config, None);
    let mut out = e_step(values, &model, probs, config.guard)?;
    let mut trace = vec![TraceEntry {
        iteration: 0,
        model,
        loglik: out.loglik,
    }];
    let mut converged = false;
    let mut iterations = 0;
    for iteration in 1..=config.max_iter {
        let abort = |source: Error, last: &RegimeModel| Error::EmAborted {
            iteration,
            last_valid: Box::new(*last),
            source: Box::new(source),
        };
        let next = m_step(values, &model, &out, config).map_err(|e| abort(e, &model))?;
        let next_probs = initial_probs(&next, config, Some(&out));
        let next_out = e_step(values, &next, next_probs, config.guard).map_err(|e| abort(e, &model))?;
        let (previous, current) = (out.loglik, next_out.loglik);
        if current < previous - config.decrease_slack {
            return Err(Error::LikelihoodDecrease {
                iteration,
                previous,
                current,
            });
        }
        model = next;
        probs = next_probs;
        out = next_out;
        iterations = iteration;
        trace.push(TraceEntry {
            iteration,
            model,
            loglik: current,
        });
        if (current - previous).abs() < config.tol {
            converged = true;
            break;
        }
    }
    Ok(EmResult {
        model,
        loglik: out.loglik,
        trace,
        converged,
        iterations,
        filter: out,
        initial_probs: probs,
    })
}

/// Starting model: base regime from a no-intercept AR(1) fit with a robust
/// relative-volatility estimate, shifted regime from the increments, and
/// staying probabilities of 0.95.
pub fn initial_model(values: &[f64], guard: LevelGuard) -> Result<RegimeModel> {
    if values.len() < 3 {
        return Err(Error::Validation("initialisation needs at least 3 observations".into()));
    }
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for t in 1..values.len() {
        sxy += values[t] * values[t - 1];
        sxx += values[t - 1] * values[t - 1];
    }
    if !(sxx > 0.0) {
        return Err(Error::Validation("series is identically zero".into()));
    }
    let phi = sxy / sxx;
    let mut rel: Vec<f64> = (1..values.len())
        .map(|t| {
            let l = guard.epsilon().max(values[t - 1].abs());
            ((values[t] - phi * values[t - 1]) / l).abs()
        })
        .collect();
    rel.sort_by(f64::total_cmp);
    let sigma_m = (rel[rel.len() / 2] / 0.674_489_750_196_081_7).max(1e-6);
    let inc: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let n = inc.len() as f64;
    let mu_l = inc.iter().sum::<f64>() / n;
    let sigma_l = (inc.iter().map(|d| (d - mu_l).powi(2)).sum::<f64>() / n).sqrt().max(1e-6);
    RegimeModel::new(phi - 1.0, sigma_m, mu_l, sigma_l, TransitionMatrix::new(0.95, 0.95)?)
}

/// EM from [`initial_model`] and `starts - 1` jittered copies of it, run
/// independently; the highest final log-likelihood wins.
pub fn em_calibrate_multistart(
    values: &[f64],
    config: &EmConfig,
    starts: usize,
    seed: u64,
    exec: Execution,
) -> Result<EmResult> {
    let base = initial_model(values, config.guard)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inits = vec![base];
    for _ in 1..starts.max(1) {
        let p11 = rng.random_range(0.8..0.995);
        let p22 = rng.random_range(0.6..0.99);
        inits.push(RegimeModel {
            kappa: base.kappa * rng.random_range(0.5..1.5),
            sigma_m: base.sigma_m * rng.random_range(0.5..2.0),
            mu_l: base.mu_l + base.sigma_l * rng.random_range(-0.5..0.5),
            sigma_l: base.sigma_l * rng.random_range(0.5..2.0),
            trans: TransitionMatrix::new(p11, p22)?,
            ..base
        });
    }
    let runs = par::map_slice(exec, &inits, |m| em_calibrate(values, m, config));
    let mut best: Option<EmResult> = None;
    let mut first_err = None;
    for r in runs {
        match r {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.loglik > b.loglik) {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("at least one start"))
}
