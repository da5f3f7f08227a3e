//! Hamilton filter, Kim smoother and the transition update.

use serde::{Deserialize, Serialize};

use super::{LevelGuard, RegimeModel, StepKernel, TransitionMatrix};
use crate::error::{Error, Result};

/// Per-day regime probabilities, indexed `[day][label]`. Day 0 carries the
/// initial probabilities; likelihood terms start at day 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutput {
    /// `P(S_t | F_{t-1})`.
    pub predicted: Vec<[f64; 2]>,
    /// `P(S_t | F_t)`.
    pub filtered: Vec<[f64; 2]>,
    /// `P(S_t | F_N)`; empty until [`kim_smooth`] has run.
    pub smoothed: Vec<[f64; 2]>,
    /// `sum_{t >= 1} ln f(T_t | F_{t-1})`.
    pub loglik: f64,
    /// Steps where the base-regime level was floored.
    pub floored_levels: usize,
    pub base_label: usize,
}

impl FilterOutput {
    /// Smoothed probability of the shifted regime per day.
    pub fn prob_shifted(&self) -> Vec<f64> {
        let s = 1 - self.base_label;
        self.smoothed.iter().map(|p| p[s]).collect()
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Forward filter. `init` holds the regime probabilities of day 0.
pub fn hamilton_filter(values: &[f64], model: &RegimeModel, init: [f64; 2], guard: LevelGuard) -> Result<FilterOutput> {
    model.validate()?;
    if values.len() < 2 {
        return Err(Error::Validation(format!("filter needs at least 2 observations, got {}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("filter input contains non-finite values".into()));
    }
    if init.iter().any(|p| !(0.0..=1.0).contains(p)) || (init[0] + init[1] - 1.0).abs() > 1e-12 {
        return Err(Error::Validation(format!("initial probabilities {init:?} are not a distribution")));
    }
    let kernel = StepKernel::new(model, guard)?;
    let n = values.len();
    let mut predicted = Vec::with_capacity(n);
    let mut filtered = Vec::with_capacity(n);
    predicted.push(init);
    filtered.push(init);
    let mut loglik = 0.0;
    let mut floored_levels = 0;
    let p = model.trans;
    for t in 1..n {
        let prev = filtered[t - 1];
        let pred = [
            prev[0] * p.get(0, 0) + prev[1] * p.get(1, 0),
            prev[0] * p.get(0, 1) + prev[1] * p.get(1, 1),
        ];
        let (dens, floored) = model.log_densities(&kernel, values[t - 1], values[t], t)?;
        floored_levels += usize::from(floored);
        let joint = [pred[0].ln() + dens[0], pred[1].ln() + dens[1]];
        let total = log_sum_exp(joint[0], joint[1]);
        if !total.is_finite() {
            return Err(Error::ZeroLikelihood(t));
        }
        let a = (joint[0] - total).exp();
        let b = (joint[1] - total).exp();
        let s = a + b;
        filtered.push([a / s, b / s]);
        predicted.push(pred);
        loglik += total;
    }
    Ok(FilterOutput {
        predicted,
        filtered,
        smoothed: Vec::new(),
        loglik,
        floored_levels,
        base_label: model.base_label,
    })
}

/// `num / den` for a smoothed-over-predicted ratio; `0/0` is 0.
fn ratio(num: f64, den: f64, t: usize) -> Result<f64> {
    if den > 0.0 {
        Ok(num / den)
    } else if num == 0.0 {
        Ok(0.0)
    } else {
        Err(Error::Domain(format!("zero predicted probability with positive smoothed mass at t={t}")))
    }
}

/// Backward smoother, `P(S_t = i | F_N) = P(S_t = i | F_t) sum_j p_ij
/// P(S_{t+1} = j | F_N) / P(S_{t+1} = j | F_t)`.
pub fn kim_smooth(out: &FilterOutput, trans: &TransitionMatrix) -> Result<Vec<[f64; 2]>> {
    let n = out.filtered.len();
    if n == 0 || out.predicted.len() != n {
        return Err(Error::Validation("filter output is incomplete".into()));
    }
    let mut smoothed = vec![[0.0; 2]; n];
    smoothed[n - 1] = out.filtered[n - 1];
    for t in (0..n - 1).rev() {
        let r = [
            ratio(smoothed[t + 1][0], out.predicted[t + 1][0], t + 1)?,
            ratio(smoothed[t + 1][1], out.predicted[t + 1][1], t + 1)?,
        ];
        let mut s = [0.0; 2];
        for (i, si) in s.iter_mut().enumerate() {
            *si = out.filtered[t][i] * (trans.get(i, 0) * r[0] + trans.get(i, 1) * r[1]);
        }
        let total = s[0] + s[1];
        if !(total > 0.0) {
            return Err(Error::Domain(format!("smoothed probabilities vanish at t={t}")));
        }
        smoothed[t] = [s[0] / total, s[1] / total];
    }
    Ok(smoothed)
}

/// `P(S_{t-1} = i, S_t = j | F_N)` for `t = 1..N-1`, as
/// `smoothed_t(j) p_ij filtered_{t-1}(i) / predicted_t(j)`. Entry `k` is day
/// `k + 1`.
pub fn smoothed_joint(out: &FilterOutput, trans: &TransitionMatrix) -> Result<Vec<[[f64; 2]; 2]>> {
    let n = out.filtered.len();
    if out.smoothed.len() != n {
        return Err(Error::Validation("smoothed probabilities are missing".into()));
    }
    (1..n)
        .map(|t| {
            let mut j = [[0.0; 2]; 2];
            for (i, row) in j.iter_mut().enumerate() {
                for (k, cell) in row.iter_mut().enumerate() {
                    *cell = ratio(out.smoothed[t][k], out.predicted[t][k], t)? * trans.get(i, k) * out.filtered[t - 1][i];
                }
            }
            Ok(j)
        })
        .collect()
}

/// Transition re-estimate: expected transition counts over expected visits.
pub fn update_transitions(out: &FilterOutput, trans: &TransitionMatrix) -> Result<TransitionMatrix> {
    let joint = smoothed_joint(out, trans)?;
    let mut w = [[0.0; 2]; 2];
    for j in &joint {
        for i in 0..2 {
            for k in 0..2 {
                w[i][k] += j[i][k];
            }
        }
    }
    TransitionMatrix::from_row_weights(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(kappa: f64, sm: f64, mu: f64, sl: f64, p11: f64, p22: f64) -> RegimeModel {
        RegimeModel::new(kappa, sm, mu, sl, TransitionMatrix::new(p11, p22).unwrap()).unwrap()
    }

    /// Independent reference: enumerate all 2^N label paths.
    struct Enumeration {
        filtered: Vec<[f64; 2]>,
        smoothed: Vec<[f64; 2]>,
        counts: [[f64; 2]; 2],
        visits: [f64; 2],
        loglik: f64,
    }

    fn gauss(x: f64, m: f64, s: f64) -> f64 {
        (-(x - m) * (x - m) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
    }

    fn step_density(m: &RegimeModel, label: usize, prev: f64, now: f64) -> f64 {
        if label == m.base_label {
            gauss(now, (1.0 + m.kappa) * prev, m.sigma_m * prev.abs())
        } else {
            gauss(now, prev + m.mu_l, m.sigma_l)
        }
    }

    fn enumerate(values: &[f64], m: &RegimeModel, init: [f64; 2]) -> Enumeration {
        let n = values.len();
        let weight = |path: &[usize], upto: usize| -> f64 {
            let mut w = init[path[0]];
            for t in 1..=upto {
                w *= m.trans.get(path[t - 1], path[t]) * step_density(m, path[t], values[t - 1], values[t]);
            }
            w
        };
        let paths = |len: usize| (0..1usize << len).map(move |bits| (0..len).map(|t| (bits >> t) & 1).collect::<Vec<_>>());
        let mut filtered = vec![[0.0; 2]; n];
        for t in 0..n {
            let mut acc = [0.0; 2];
            for p in paths(t + 1) {
                acc[p[t]] += weight(&p, t);
            }
            let s = acc[0] + acc[1];
            filtered[t] = [acc[0] / s, acc[1] / s];
        }
        let mut smoothed = vec![[0.0; 2]; n];
        let mut counts = [[0.0; 2]; 2];
        let mut visits = [0.0; 2];
        let mut total = 0.0;
        for p in paths(n) {
            let w = weight(&p, n - 1);
            total += w;
            for t in 0..n {
                smoothed[t][p[t]] += w;
            }
            for t in 1..n {
                counts[p[t - 1]][p[t]] += w;
                visits[p[t - 1]] += w;
            }
        }
        for s in smoothed.iter_mut() {
            s[0] /= total;
            s[1] /= total;
        }
        for i in 0..2 {
            visits[i] /= total;
            for j in 0..2 {
                counts[i][j] /= total;
            }
        }
        Enumeration {
            filtered,
            smoothed,
            counts,
            visits,
            loglik: total.ln(),
        }
    }

    fn run(values: &[f64], m: &RegimeModel, init: [f64; 2]) -> FilterOutput {
        let mut out = hamilton_filter(values, m, init, LevelGuard::default()).unwrap();
        out.smoothed = kim_smooth(&out, &m.trans).unwrap();
        out
    }

    fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
        assert!((a - b).abs() <= tol, "{what}: {a} vs {b}");
    }

    #[test]
    fn five_point_series_matches_enumeration() {
        let values = [1.8, 1.5, 2.9, 2.2, 1.9];
        let m = model(-0.2, 0.15, 0.5, 1.0, 0.9, 0.7);
        let init = m.trans.stationary();
        let out = run(&values, &m, init);
        let e = enumerate(&values, &m, init);
        for t in 0..values.len() {
            for i in 0..2 {
                assert_close(out.filtered[t][i], e.filtered[t][i], 1e-10, "filtered");
                assert_close(out.smoothed[t][i], e.smoothed[t][i], 1e-10, "smoothed");
            }
        }
        assert_close(out.loglik, e.loglik, 1e-10, "loglik");
        let joint = smoothed_joint(&out, &m.trans).unwrap();
        let p = update_transitions(&out, &m.trans).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let c: f64 = joint.iter().map(|x| x[i][j]).sum();
                assert_close(c, e.counts[i][j], 1e-10, "expected transition count");
                assert_close(p.get(i, j), e.counts[i][j] / e.visits[i], 1e-10, "transition estimate");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn random_series_match_enumeration(
            n in 2usize..=10,
            seed in proptest::collection::vec(0.3f64..3.0, 10),
            kappa in -0.6f64..0.3,
            sm in 0.05f64..0.8,
            mu in -1.0f64..1.0,
            sl in 0.2f64..2.0,
            p11 in 0.05f64..0.99,
            p22 in 0.05f64..0.99,
            swap in any::<bool>(),
        ) {
            let values: Vec<f64> = seed[..n].iter().enumerate().map(|(i, v)| if i % 3 == 2 { -v } else { *v }).collect();
            let mut m = model(kappa, sm, mu, sl, p11, p22);
            if swap {
                m = m.swap_labels();
            }
            let init = m.trans.stationary();
            let out = run(&values, &m, init);
            let e = enumerate(&values, &m, init);
            for t in 0..n {
                prop_assert!((out.filtered[t][0] + out.filtered[t][1] - 1.0).abs() < 1e-12);
                prop_assert!((out.smoothed[t][0] + out.smoothed[t][1] - 1.0).abs() < 1e-12);
                for i in 0..2 {
                    prop_assert!((out.filtered[t][i] - e.filtered[t][i]).abs() < 1e-10);
                    prop_assert!((out.smoothed[t][i] - e.smoothed[t][i]).abs() < 1e-10);
                }
            }
            prop_assert!((out.loglik - e.loglik).abs() < 1e-10 * (1.0 + e.loglik.abs()));
            let p = update_transitions(&out, &m.trans).unwrap();
            for i in 0..2 {
                prop_assert_eq!(p.get(i, 0) + p.get(i, 1), 1.0);
                for j in 0..2 {
                    prop_assert!((p.get(i, j) - e.counts[i][j] / e.visits[i]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn loglik_is_sum_of_predictive_densities() {
        let values = [2.0, 1.7, 1.9, 2.6, 2.1, 1.2];
        let m = model(-0.2, 0.1, 0.3, 0.8, 0.95, 0.8);
        let out = run(&values, &m, m.trans.stationary());
        let mut sum = 0.0;
        for t in 1..values.len() {
            let pred = out.predicted[t];
            let f = pred[0] * step_density(&m, 0, values[t - 1], values[t])
                + pred[1] * step_density(&m, 1, values[t - 1], values[t]);
            sum += f.ln();
        }
        assert_close(out.loglik, sum, 1e-12, "loglik");
    }

    #[test]
    fn absorbing_regime_stays_put() {
        let values = [1.0, 1.2, 0.9, 1.4, 1.1, 5.0];
        let m = model(-0.1, 0.2, 0.0, 1.0, 1.0, 1.0);
        let out = run(&values, &m, [1.0, 0.0]);
        for t in 0..values.len() {
            assert_eq!(out.filtered[t], [1.0, 0.0]);
            assert_eq!(out.smoothed[t], out.filtered[t]);
        }
    }

    #[test]
    fn no_switching_spreads_the_final_posterior_backwards() {
        // the regime never changes, so every day shares the last day's posterior
        let values = [1.0, 1.2, 0.9, 1.4, 1.1, 5.0];
        let m = model(-0.1, 0.2, 0.3, 1.0, 1.0, 1.0);
        let out = run(&values, &m, [0.3, 0.7]);
        let last = out.filtered[values.len() - 1];
        for t in 0..values.len() {
            for i in 0..2 {
                assert_close(out.smoothed[t][i], last[i], 1e-12, "smoothed");
            }
        }
    }

    #[test]
    fn identical_regimes_are_uninformative() {
        // constant level c: base N((1+k)c, (s c)^2) equals shifted N(c + k c, s c)
        let c = 2.0;
        let (k, s) = (-0.1, 0.3);
        let values = [c; 8];
        let m = model(k, s, k * c, s * c, 0.8, 0.6);
        let out = run(&values, &m, m.trans.stationary());
        for t in 1..values.len() {
            for i in 0..2 {
                assert_close(out.filtered[t][i], out.predicted[t][i], 1e-12, "filtered");
            }
        }
    }

    #[test]
    fn alternating_posterior_counts_every_switch() {
        let n = 6;
        let out = FilterOutput {
            predicted: vec![[0.5, 0.5]; n],
            filtered: (0..n).map(|t| if t % 2 == 0 { [1.0, 0.0] } else { [0.0, 1.0] }).collect(),
            smoothed: (0..n).map(|t| if t % 2 == 0 { [1.0, 0.0] } else { [0.0, 1.0] }).collect(),
            loglik: 0.0,
            floored_levels: 0,
            base_label: 0,
        };
        let p = update_transitions(&out, &TransitionMatrix::new(0.5, 0.5).unwrap()).unwrap();
        assert_eq!((p.p12, p.p21), (1.0, 1.0));
    }

    #[test]
    fn zero_likelihood_names_the_day() {
        let values = [1.0, 1.0, 1e200];
        let m = model(0.0, 1e-3, 0.0, 1e-3, 0.5, 0.5);
        let err = hamilton_filter(&values, &m, [0.5, 0.5], LevelGuard::default()).unwrap_err();
        assert!(matches!(err, Error::ZeroLikelihood(2)), "{err:?}");
    }

    #[test]
    fn floored_levels_are_counted() {
        let values = [0.0, 0.5, 0.0, 0.4];
        let m = model(-0.2, 0.1, 0.0, 1.0, 0.9, 0.9);
        let out = hamilton_filter(&values, &m, [0.5, 0.5], LevelGuard::Floor(1e-6)).unwrap();
        assert_eq!(out.floored_levels, 2);
        assert!(hamilton_filter(&values, &m, [0.5, 0.5], LevelGuard::Error(1e-6)).is_err());
    }
}
