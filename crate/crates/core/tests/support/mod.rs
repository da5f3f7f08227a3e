//! Reference implementations used only by the acceptance suite. Nothing here
//! calls into the library's numerics.

#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `K_nu(x)` from `int_0^inf exp(-x cosh t) cosh(nu t) dt` by the trapezoid
/// rule, which converges geometrically for this analytic, even integrand.
pub fn bessel_k_integral(nu: f64, x: f64) -> f64 {
    let h = 0.02;
    let f = |t: f64| (-x * t.cosh() + nu.abs() * t).exp() * 0.5 * (1.0 + (-2.0 * nu.abs() * t).exp());
    let mut sum = 0.5 * f(0.0);
    let mut peak = sum;
    let mut k = 1;
    loop {
        let v = f(k as f64 * h);
        sum += v;
        peak = peak.max(v);
        if v < 1e-20 * peak && x * (k as f64 * h).sinh() > nu.abs() {
            break;
        }
        k += 1;
    }
    sum * h
}

/// `K_{1/2}(x) = sqrt(pi / (2x)) e^{-x}`.
pub fn bessel_k_half(x: f64) -> f64 {
    (PI / (2.0 * x)).sqrt() * (-x).exp()
}

fn simpson_step<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature on `[a, b]` with absolute tolerance `tol`.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    // start from 64 panels so narrow peaks are not missed
    let panels = 64;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            simpson_step(&f, lo, hi, fa, fm, fb, whole, tol / panels as f64, 40)
        })
        .sum()
}

/// `int_{-inf}^{inf} f`, split at `center` and mapped to `[0, 1)` on each
/// side with `x = center +- scale u / (1 - u)`.
pub fn integrate_line<F: Fn(f64) -> f64>(f: F, center: f64, scale: f64, tol: f64) -> f64 {
    let side = |sign: f64| {
        simpson(
            |u: f64| {
                if u >= 1.0 {
                    return 0.0;
                }
                let v = f(center + sign * scale * u / (1.0 - u));
                if v == 0.0 {
                    0.0
                } else {
                    v * scale / ((1.0 - u) * (1.0 - u))
                }
            },
            0.0,
            1.0,
            0.5 * tol,
        )
    };
    side(-1.0) + side(1.0)
}

/// Normal inverse Gaussian density written out with the reference Bessel.
pub fn nig_pdf(alpha: f64, beta: f64, mu: f64, delta: f64, x: f64) -> f64 {
    let gamma = (alpha * alpha - beta * beta).sqrt();
    let q = (delta * delta + (x - mu) * (x - mu)).sqrt();
    alpha * delta * bessel_k_integral(1.0, alpha * q) / (PI * q) * (delta * gamma + beta * (x - mu)).exp()
}

/// Hyperbolic density written out with the reference Bessel.
pub fn hyp_pdf(alpha: f64, beta: f64, mu: f64, delta: f64, x: f64) -> f64 {
    let gamma = (alpha * alpha - beta * beta).sqrt();
    let q = (delta * delta + (x - mu) * (x - mu)).sqrt();
    gamma / (2.0 * alpha * delta * bessel_k_integral(1.0, delta * gamma)) * (-alpha * q + beta * (x - mu)).exp()
}

pub fn normal_ln_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * PI).ln()
}

/// Two-regime model in plain numbers: label `base` follows
/// `N((1 + kappa) x, (sigma_m x)^2)`, the other label `N(x + mu, sigma_l^2)`.
#[derive(Debug, Clone, Copy)]
pub struct Regimes {
    pub kappa: f64,
    pub sigma_m: f64,
    pub mu: f64,
    pub sigma_l: f64,
    /// `p[i][j]`, probability of moving from `i` to `j`.
    pub p: [[f64; 2]; 2],
    pub base: usize,
}

impl Regimes {
    pub fn density(&self, label: usize, prev: f64, now: f64) -> f64 {
        if label == self.base {
            normal_ln_pdf(now, (1.0 + self.kappa) * prev, self.sigma_m * prev.abs()).exp()
        } else {
            normal_ln_pdf(now, prev + self.mu, self.sigma_l).exp()
        }
    }

    /// Simulate `n` values from `x0`, first label drawn from the
    /// stationary law.
    pub fn simulate(&self, n: usize, x0: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (self.p[0][1], self.p[1][0]);
        let mut s = usize::from(rng.random::<f64>() >= b / (a + b));
        let mut x = vec![x0];
        for _ in 1..n {
            s = usize::from(rng.random::<f64>() >= self.p[s][0]);
            let z: f64 = rng.sample(StandardNormal);
            let prev = *x.last().unwrap();
            x.push(if s == self.base {
                (1.0 + self.kappa) * prev + self.sigma_m * prev.abs() * z
            } else {
                prev + self.mu + self.sigma_l * z
            });
        }
        x
    }
}

/// Posterior quantities computed by summing over every label path.
pub struct Enumerated {
    pub loglik: f64,
    /// `P(S_t | T_0..T_t)`.
    pub filtered: Vec<[f64; 2]>,
    /// `P(S_t | T_0..T_{t-1})`, with day 0 equal to the initial law.
    pub predicted: Vec<[f64; 2]>,
    /// `P(S_t | T_0..T_N)`.
    pub smoothed: Vec<[f64; 2]>,
    /// `sum_t P(S_{t-1} = i, S_t = j | T_0..T_N)`.
    pub transitions: [[f64; 2]; 2],
}

/// Joint weight of labels `path` with observations `x[..path.len()]`, the
/// last `skip_last` densities left out.
fn path_weight(m: &Regimes, init: [f64; 2], x: &[f64], path: &[usize], skip_last: bool) -> f64 {
    let mut w = init[path[0]];
    for t in 1..path.len() {
        w *= m.p[path[t - 1]][path[t]];
        if !(skip_last && t == path.len() - 1) {
            w *= m.density(path[t], x[t - 1], x[t]);
        }
    }
    w
}

fn paths(len: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..1usize << len).map(move |bits| (0..len).map(|t| (bits >> t) & 1).collect())
}

pub fn enumerate(m: &Regimes, init: [f64; 2], x: &[f64]) -> Enumerated {
    let n = x.len();
    let mut filtered = Vec::with_capacity(n);
    let mut predicted = Vec::with_capacity(n);
    for t in 0..n {
        let (mut f, mut p) = ([0.0; 2], [0.0; 2]);
        for path in paths(t + 1) {
            f[path[t]] += path_weight(m, init, x, &path, false);
            p[path[t]] += path_weight(m, init, x, &path, true);
        }
        let (fs, ps) = (f[0] + f[1], p[0] + p[1]);
        filtered.push([f[0] / fs, f[1] / fs]);
        predicted.push([p[0] / ps, p[1] / ps]);
    }
    let mut smoothed = vec![[0.0; 2]; n];
    let mut transitions = [[0.0; 2]; 2];
    let mut total = 0.0;
    for path in paths(n) {
        let w = path_weight(m, init, x, &path, false);
        total += w;
        for t in 0..n {
            smoothed[t][path[t]] += w;
            if t > 0 {
                transitions[path[t - 1]][path[t]] += w;
            }
        }
    }
    for s in &mut smoothed {
        s[0] /= total;
        s[1] /= total;
    }
    for row in &mut transitions {
        row[0] /= total;
        row[1] /= total;
    }
    Enumerated {
        loglik: total.ln(),
        filtered,
        predicted,
        smoothed,
        transitions,
    }
}

/// Maximise `f` by cyclic golden-section line searches over `[x_k - w_k,
/// x_k + w_k]`, recentred on every sweep.
pub fn golden_maximise(f: impl Fn(&[f64]) -> f64, mut x: Vec<f64>, width: &[f64], sweeps: usize) -> Vec<f64> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for sweep in 0..sweeps {
        let shrink = 0.5f64.powi((sweep / 4) as i32);
        for k in 0..x.len() {
            let (mut a, mut b) = (x[k] - width[k] * shrink, x[k] + width[k] * shrink);
            let at = |v: f64| {
                let mut y = x.clone();
                y[k] = v;
                f(&y)
            };
            let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
            let (mut fc, mut fd) = (at(c), at(d));
            for _ in 0..120 {
                if fc > fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - g * (b - a);
                    fc = at(c);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + g * (b - a);
                    fd = at(d);
                }
            }
            x[k] = 0.5 * (a + b);
        }
    }
    x
}

/// Weighted Gaussian log-likelihood of the base regime at `(kappa, sigma)`.
pub fn base_objective(x: &[f64], w: &[f64], kappa: f64, sigma: f64) -> f64 {
    (1..x.len())
        .map(|t| w[t] * normal_ln_pdf(x[t], (1.0 + kappa) * x[t - 1], sigma * x[t - 1].abs()))
        .sum()
}

/// Weighted Gaussian log-likelihood of the increments at `(mu, sigma)`.
pub fn shifted_objective(x: &[f64], w: &[f64], mu: f64, sigma: f64) -> f64 {
    (1..x.len()).map(|t| w[t] * normal_ln_pdf(x[t], x[t - 1] + mu, sigma)).sum()
}

pub fn brute_cat(x: &[f64], tau1: usize, tau2: usize) -> f64 {
    let mut s = 0.0;
    for t in tau1..=tau2 {
        s += x[t];
    }
    s
}

pub fn brute_gdd(x: &[f64], tau1: usize, tau2: usize, t_opt: f64) -> f64 {
    let mut s = 0.0;
    for t in tau1..=tau2 {
        if x[t] > t_opt {
            s += x[t] - t_opt;
        }
    }
    s
}

pub fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// ARCH(1) series `e_t = sqrt(omega + a e_{t-1}^2) z_t`.
pub fn arch1(n: usize, omega: f64, a: f64, seed: u64) -> Vec<f64> {
    let z = normals(n, seed);
    let mut e = Vec::with_capacity(n);
    let mut prev = 0.0f64;
    for zt in z {
        prev = (omega + a * prev * prev).sqrt() * zt;
        e.push(prev);
    }
    e
}
