//! Generalized hyperbolic (GH) family and the subclasses used to model
//! shifted-regime innovations.
//!
//! All members are normal variance-mean mixtures `X = mu + beta W + sqrt(W) Z`
//! with `Z ~ N(0, 1)`:
//!
//! | family | mixing law of `W`                   | fixed parameters |
//! |--------|-------------------------------------|------------------|
//! | GH     | GIG(nu, delta^2, alpha^2 - beta^2)  |                  |
//! | NIG    | inverse Gaussian                    | `nu = -1/2`      |
//! | HYP    | GIG with index 1                    | `nu = 1`         |
//! | VG     | Gamma(nu, rate (alpha^2-beta^2)/2)  | `delta = 0`      |
//!
//! The Normal law is carried alongside as a baseline, with `mu` the mean and
//! `delta` the standard deviation.
//!
//! The GH density is evaluated with `delta^2 + (x - mu)^2` under the Bessel
//! argument's square root. Writing it with a minus sign instead leaves the
//! density undefined for `|x - mu| > delta` and breaks the reduction to the
//! NIG and HYP closed forms.

mod fit;
mod gig;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::quadrature::{integrate, integrate_upper, QuadOptions};
use crate::special::{ln_bessel_k, ln_gamma};

pub use fit::{fit_mle, log_likelihood, FitOptions, FitResult};
pub use gig::{Gig, GigSampler};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "GH")]
    Gh,
    #[serde(rename = "NIG")]
    Nig,
    #[serde(rename = "HYP")]
    Hyp,
    #[serde(rename = "VG")]
    Vg,
    Normal,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Gh, Family::Nig, Family::Hyp, Family::Vg, Family::Normal];

    pub fn name(self) -> &'static str {
        match self {
            Family::Gh => "GH",
            Family::Nig => "NIG",
            Family::Hyp => "HYP",
            Family::Vg => "VG",
            Family::Normal => "Normal",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Validation(format!("unknown family `{s}` (expected GH, NIG, HYP, VG or Normal)")))
    }
}

/// Parameters of one family member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GHParams {
    pub family: Family,
    pub nu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub delta: f64,
}

impl GHParams {
    pub fn gh(nu: f64, alpha: f64, beta: f64, mu: f64, delta: f64) -> Result<Self> {
        Self::checked(Family::Gh, nu, alpha, beta, mu, delta)
    }

    pub fn nig(alpha: f64, beta: f64, mu: f64, delta: f64) -> Result<Self> {
        Self::checked(Family::Nig, -0.5, alpha, beta, mu, delta)
    }

    pub fn hyp(alpha: f64, beta: f64, mu: f64, delta: f64) -> Result<Self> {
        Self::checked(Family::Hyp, 1.0, alpha, beta, mu, delta)
    }

    pub fn vg(nu: f64, alpha: f64, beta: f64, mu: f64) -> Result<Self> {
        Self::checked(Family::Vg, nu, alpha, beta, mu, 0.0)
    }

    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        Self::checked(Family::Normal, 0.0, 0.0, 0.0, mean, sd)
    }

    fn checked(family: Family, nu: f64, alpha: f64, beta: f64, mu: f64, delta: f64) -> Result<Self> {
        let p = Self {
            family,
            nu,
            alpha,
            beta,
            mu,
            delta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(format!("{} parameters: {msg}", self.family)));
        if ![self.nu, self.alpha, self.beta, self.mu, self.delta].iter().all(|v| v.is_finite()) {
            return bad("all parameters must be finite".into());
        }
        if self.family == Family::Normal {
            if !(self.delta > 0.0) {
                return bad(format!("standard deviation must be positive, got {}", self.delta));
            }
            return Ok(());
        }
        if !(self.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.beta.abs() < self.alpha) {
            return bad(format!("|beta| < alpha required, got beta = {}, alpha = {}", self.beta, self.alpha));
        }
        match self.family {
            Family::Vg => {
                if self.delta != 0.0 {
                    return bad(format!("delta must be 0, got {}", self.delta));
                }
                if !(self.nu > 0.0) {
                    return bad(format!("nu must be positive, got {}", self.nu));
                }
            }
            _ => {
                if !(self.delta > 0.0) {
                    return bad(format!("delta must be positive, got {}", self.delta));
                }
                if self.family == Family::Nig && self.nu != -0.5 {
                    return bad(format!("nu must be -1/2, got {}", self.nu));
                }
                if self.family == Family::Hyp && self.nu != 1.0 {
                    return bad(format!("nu must be 1, got {}", self.nu));
                }
            }
        }
        Ok(())
    }

    /// `sqrt(alpha^2 - beta^2)`.
    pub fn gamma(&self) -> f64 {
        ((self.alpha - self.beta) * (self.alpha + self.beta)).sqrt()
    }

    /// Density with the normalising constant computed once.
    pub fn density(&self) -> Result<Density> {
        Density::new(*self)
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        Ok(self.density()?.pdf(x))
    }

    pub fn log_pdf(&self, x: f64) -> Result<f64> {
        Ok(self.density()?.log_pdf(x))
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        self.density()?.cdf(x)
    }

    pub fn mgf(&self, z: f64) -> Result<f64> {
        mgf(self, z)
    }

    pub fn moments(&self) -> Result<Moments> {
        moments(self)
    }
}

#[derive(Debug, Clone, Copy)]
enum Kernel {
    Gh { ln_norm: f64, order: f64 },
    Nig { ln_norm: f64 },
    Hyp { ln_norm: f64 },
    Vg { ln_norm: f64, order: f64, ln_at_mu: f64 },
    Normal { ln_norm: f64 },
}

/// Prepared density of a validated parameter set.
#[derive(Debug, Clone, Copy)]
pub struct Density {
    params: GHParams,
    kernel: Kernel,
    scale: f64,
}

fn ln_k(nu: f64, x: f64) -> f64 {
    ln_bessel_k(nu, x).unwrap_or(f64::NEG_INFINITY)
}

impl Density {
    pub fn new(params: GHParams) -> Result<Self> {
        params.validate()?;
        let GHParams {
            nu, alpha, delta, ..
        } = params;
        let g = params.gamma();
        let kernel = match params.family {
            Family::Gh => Kernel::Gh {
                ln_norm: nu * g.ln() - 0.5 * (2.0 * PI).ln() - (nu - 0.5) * alpha.ln() - nu * delta.ln()
                    - ln_bessel_k(nu, delta * g)?,
                order: nu - 0.5,
            },
            Family::Nig => Kernel::Nig {
                ln_norm: alpha.ln() + delta.ln() - PI.ln() + delta * g,
            },
            Family::Hyp => Kernel::Hyp {
                ln_norm: g.ln() - 2f64.ln() - alpha.ln() - delta.ln() - ln_bessel_k(1.0, delta * g)?,
            },
            Family::Vg => {
                let ln_norm = 2.0 * nu * g.ln() - 0.5 * PI.ln() - ln_gamma(nu) - (nu - 0.5) * (2.0 * alpha).ln();
                let order = nu - 0.5;
                // |y|^a K_a(alpha |y|) -> Gamma(a) 2^(a-1) alpha^(-a) as y -> 0
                let ln_at_mu = if order > 0.0 {
                    ln_norm + ln_gamma(order) + (order - 1.0) * 2f64.ln() - order * alpha.ln()
                } else {
                    f64::INFINITY
                };
                Kernel::Vg {
                    ln_norm,
                    order,
                    ln_at_mu,
                }
            }
            Family::Normal => Kernel::Normal {
                ln_norm: -delta.ln() - 0.5 * (2.0 * PI).ln(),
            },
        };
        let scale = moments(&params)?.variance.sqrt();
        Ok(Self { params, kernel, scale })
    }

    pub fn params(&self) -> &GHParams {
        &self.params
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        let p = &self.params;
        let y = x - p.mu;
        match self.kernel {
            Kernel::Gh { ln_norm, order } => {
                let q = p.delta.hypot(y);
                ln_norm + order * q.ln() + p.beta * y + ln_k(order, p.alpha * q)
            }
            Kernel::Nig { ln_norm } => {
                let q = p.delta.hypot(y);
                ln_norm + p.beta * y + ln_k(1.0, p.alpha * q) - q.ln()
            }
            Kernel::Hyp { ln_norm } => ln_norm - p.alpha * p.delta.hypot(y) + p.beta * y,
            Kernel::Vg {
                ln_norm,
                order,
                ln_at_mu,
            } => {
                let a = y.abs();
                if a == 0.0 {
                    ln_at_mu
                } else {
                    ln_norm + order * a.ln() + ln_k(order, p.alpha * a) + p.beta * y
                }
            }
            Kernel::Normal { ln_norm } => {
                let z = y / p.delta;
                ln_norm - 0.5 * z * z
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.log_pdf(x).exp()
    }

    fn quad_options() -> QuadOptions {
        QuadOptions {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_intervals: 4000,
        }
    }

    /// `P(X <= x)` for `x <= mu`.
    fn lower_tail(&self, x: f64) -> Result<f64> {
        let s = self.scale;
        Ok(integrate_upper(|u| s * self.pdf(x - s * u), 0.0, Self::quad_options())?.value)
    }

    /// `P(X > x)` for `x >= mu`.
    fn upper_tail(&self, x: f64) -> Result<f64> {
        let s = self.scale;
        Ok(integrate_upper(|u| s * self.pdf(x + s * u), 0.0, Self::quad_options())?.value)
    }

    /// Distribution function by adaptive quadrature of the density. Points
    /// left of `mu` integrate the lower tail, the rest the upper tail.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x.is_nan() {
            return Err(Error::Validation("cdf at NaN".into()));
        }
        if x == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        if x == f64::INFINITY {
            return Ok(1.0);
        }
        let v = if x <= self.params.mu {
            self.lower_tail(x)?
        } else {
            1.0 - self.upper_tail(x)?
        };
        Ok(v.clamp(0.0, 1.0))
    }

    /// `cdf` at many points. Sorts once and accumulates the integral between
    /// neighbouring points, which is much cheaper than independent calls.
    pub fn cdf_many(&self, xs: &[f64]) -> Result<Vec<f64>> {
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("cdf_many needs finite points".into()));
        }
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
        let split = order.partition_point(|&i| xs[i] <= self.params.mu);
        let mut out = vec![0.0; xs.len()];
        let piece = |a: f64, b: f64| integrate(|t| self.pdf(t), a, b, Self::quad_options()).map(|r| r.value);

        let mut acc = 0.0;
        for (k, &i) in order[..split].iter().enumerate() {
            acc = if k == 0 {
                self.lower_tail(xs[i])?
            } else {
                acc + piece(xs[order[k - 1]], xs[i])?
            };
            out[i] = acc.clamp(0.0, 1.0);
        }
        let right = &order[split..];
        let mut tail = 0.0;
        for k in (0..right.len()).rev() {
            let i = right[k];
            tail = if k + 1 == right.len() {
                self.upper_tail(xs[i])?
            } else {
                tail + piece(xs[i], xs[right[k + 1]])?
            };
            out[i] = (1.0 - tail).clamp(0.0, 1.0);
        }
        Ok(out)
    }
}

/// Moment generating function `E[exp(z X)]`, defined for
/// `|beta + z| < alpha` (all `z` for the Normal law).
pub fn mgf(params: &GHParams, z: f64) -> Result<f64> {
    params.validate()?;
    let GHParams {
        nu,
        alpha,
        beta,
        mu,
        delta,
        ..
    } = *params;
    if params.family == Family::Normal {
        return Ok((mu * z + 0.5 * delta * delta * z * z).exp());
    }
    if !z.is_finite() || (beta + z).abs() >= alpha {
        return Err(Error::Domain(format!(
            "mgf needs |beta + z| < alpha; |{beta} + {z}| >= {alpha}"
        )));
    }
    let g = params.gamma();
    let gz = ((alpha - beta - z) * (alpha + beta + z)).sqrt();
    let ln_m = match params.family {
        Family::Gh => mu * z + nu * (g.ln() - gz.ln()) + ln_bessel_k(nu, delta * gz)? - ln_bessel_k(nu, delta * g)?,
        Family::Nig => mu * z + delta * (g - gz),
        Family::Hyp => mu * z + g.ln() - gz.ln() + ln_bessel_k(1.0, delta * gz)? - ln_bessel_k(1.0, delta * g)?,
        Family::Vg => mu * z + 2.0 * nu * (g.ln() - gz.ln()),
        Family::Normal => unreachable!(),
    };
    Ok(ln_m.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

/// Mean and variance from the mixture representation:
/// `E X = mu + beta E W`, `Var X = E W + beta^2 Var W`.
pub fn moments(params: &GHParams) -> Result<Moments> {
    params.validate()?;
    let GHParams { nu, beta, mu, delta, .. } = *params;
    let g = params.gamma();
    let (ew, vw) = match params.family {
        Family::Normal => {
            return Ok(Moments {
                mean: mu,
                variance: delta * delta,
            })
        }
        Family::Vg => (2.0 * nu / (g * g), 4.0 * nu / (g * g * g * g)),
        _ => {
            let zeta = delta * g;
            let k0 = ln_bessel_k(nu, zeta)?;
            let r1 = (ln_bessel_k(nu + 1.0, zeta)? - k0).exp();
            let r2 = (ln_bessel_k(nu + 2.0, zeta)? - k0).exp();
            let eta = delta / g;
            (eta * r1, eta * eta * (r2 - r1 * r1))
        }
    };
    Ok(Moments {
        mean: mu + beta * ew,
        variance: ew + beta * beta * vw,
    })
}

enum Mixing {
    None,
    Gig(GigSampler),
    Gamma(Gamma<f64>),
}

/// Exact sampler for one parameter set.
pub struct Sampler {
    params: GHParams,
    mixing: Mixing,
}

impl Sampler {
    pub fn new(params: GHParams) -> Result<Self> {
        params.validate()?;
        let g = params.gamma();
        let mixing = match params.family {
            Family::Normal => Mixing::None,
            Family::Vg => Mixing::Gamma(
                Gamma::new(params.nu, 2.0 / (g * g)).map_err(|e| Error::Validation(format!("VG mixing law: {e}")))?,
            ),
            _ => Mixing::Gig(Gig::new(params.nu, params.delta * params.delta, g * g)?.sampler()?),
        };
        Ok(Self { params, mixing })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let p = &self.params;
        let z: f64 = rng.sample(StandardNormal);
        let w = match &self.mixing {
            Mixing::None => return p.mu + p.delta * z,
            Mixing::Gig(s) => s.sample(rng),
            Mixing::Gamma(g) => g.sample(rng),
        };
        p.mu + p.beta * w + w.sqrt() * z
    }
}

/// `n` draws from `params`, reproducible from `seed`.
pub fn sample(params: &GHParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with(params, n, &mut rng)
}

pub fn sample_with<R: Rng + ?Sized>(params: &GHParams, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Validation("sample size must be at least 1".into()));
    }
    let s = Sampler::new(*params)?;
    Ok((0..n).map(|_| s.sample(rng)).collect())
}
