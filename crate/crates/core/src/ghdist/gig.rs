//! Generalized inverse Gaussian sampling (Hörmann & Leydold, 2014).
//!
//! Density proportional to `x^(lambda-1) exp(-(chi/x + psi x)/2)`. Sampling
//! works on the one-parameter form with `omega = sqrt(chi psi)` and scales the
//! draw by `sqrt(chi/psi)`; negative `lambda` is handled through
//! `GIG(-lambda) = 1 / GIG(lambda)`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

/// GIG law with index `lambda` and parameters `chi`, `psi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gig {
    lambda: f64,
    chi: f64,
    psi: f64,
}

enum Method {
    /// `chi` or `psi` numerically zero: gamma or inverse gamma.
    Limit(Gamma<f64>, bool),
    RouShift,
    RouNoShift,
    Concave,
}

/// Sampler with the method and constants chosen once.
pub struct GigSampler {
    lambda: f64,
    omega: f64,
    scale: f64,
    invert: bool,
    method: Method,
}

impl Gig {
    pub fn new(lambda: f64, chi: f64, psi: f64) -> Result<Self> {
        if !lambda.is_finite() || !(chi >= 0.0) || !(psi >= 0.0) || !chi.is_finite() || !psi.is_finite() {
            return Err(Error::Validation(format!(
                "GIG needs finite lambda and chi, psi >= 0 (got {lambda}, {chi}, {psi})"
            )));
        }
        if (chi == 0.0 && lambda <= 0.0) || (psi == 0.0 && lambda >= 0.0) || (chi == 0.0 && psi == 0.0) {
            return Err(Error::Validation(format!(
                "GIG with lambda = {lambda}, chi = {chi}, psi = {psi} is improper"
            )));
        }
        Ok(Self { lambda, chi, psi })
    }

    pub fn sampler(&self) -> Result<GigSampler> {
        let omega = (self.chi * self.psi).sqrt();
        let lambda = self.lambda.abs();
        let invert = self.lambda < 0.0;
        if omega < 1e-12 {
            // Gamma(lambda, rate psi/2) or its reciprocal with rate chi/2.
            let (shape, scale) = if self.lambda > 0.0 {
                (self.lambda, 2.0 / self.psi)
            } else {
                (-self.lambda, 2.0 / self.chi)
            };
            let g = Gamma::new(shape, scale).map_err(|e| Error::Validation(format!("gamma limit: {e}")))?;
            return Ok(GigSampler {
                lambda,
                omega,
                scale: 1.0,
                invert,
                method: Method::Limit(g, self.lambda < 0.0),
            });
        }
        let method = if lambda > 2.0 || omega > 3.0 {
            Method::RouShift
        } else if lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2 {
            Method::RouNoShift
        } else {
            Method::Concave
        };
        Ok(GigSampler {
            lambda,
            omega,
            scale: (self.chi / self.psi).sqrt(),
            invert,
            method,
        })
    }
}

fn mode(lambda: f64, omega: f64) -> f64 {
    if lambda >= 1.0 {
        (((lambda - 1.0) * (lambda - 1.0) + omega * omega).sqrt() + (lambda - 1.0)) / omega
    } else {
        omega / (((1.0 - lambda) * (1.0 - lambda) + omega * omega).sqrt() + (1.0 - lambda))
    }
}

/// Uniform on the open interval (0, 1).
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

impl GigSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x = match &self.method {
            Method::Limit(g, reciprocal) => {
                let v = g.sample(rng);
                return if *reciprocal { 1.0 / v } else { v };
            }
            Method::RouShift => self.rou_shift(rng),
            Method::RouNoShift => self.rou_noshift(rng),
            Method::Concave => self.concave(rng),
        };
        if self.invert {
            self.scale / x
        } else {
            self.scale * x
        }
    }

    /// Ratio of uniforms without mode shift.
    fn rou_noshift<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (lambda, omega) = (self.lambda, self.omega);
        let t = 0.5 * (lambda - 1.0);
        let s = 0.25 * omega;
        let xm = mode(lambda, omega);
        let nc = t * xm.ln() - s * (xm + 1.0 / xm);
        let ym = ((lambda + 1.0) + ((lambda + 1.0) * (lambda + 1.0) + omega * omega).sqrt()) / omega;
        let um = (0.5 * (lambda + 1.0) * ym.ln() - s * (ym + 1.0 / ym) - nc).exp();
        loop {
            let u = um * open_unit(rng);
            let v = open_unit(rng);
            let x = u / v;
            if v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
                return x;
            }
        }
    }

    /// Ratio of uniforms shifted by the mode.
    fn rou_shift<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (lambda, omega) = (self.lambda, self.omega);
        let t = 0.5 * (lambda - 1.0);
        let s = 0.25 * omega;
        let xm = mode(lambda, omega);
        let nc = t * xm.ln() - s * (xm + 1.0 / xm);
        // roots of the cubic bounding the shifted region
        let a = -(2.0 * (lambda + 1.0) / omega + xm);
        let b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
        let c = xm;
        let p = b - a * a / 3.0;
        let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
        let fi = (-q / (2.0 * (-(p * p * p) / 27.0).sqrt())).clamp(-1.0, 1.0).acos();
        let fak = 2.0 * (-p / 3.0).sqrt();
        let y1 = fak * (fi / 3.0).cos() - a / 3.0;
        let y2 = fak * (fi / 3.0 + 4.0 / 3.0 * PI).cos() - a / 3.0;
        let uplus = (y1 - xm) * (t * y1.ln() - s * (y1 + 1.0 / y1) - nc).exp();
        let uminus = (y2 - xm) * (t * y2.ln() - s * (y2 + 1.0 / y2) - nc).exp();
        loop {
            let u = uminus + open_unit(rng) * (uplus - uminus);
            let v = open_unit(rng);
            let x = u / v + xm;
            if x > 0.0 && v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
                return x;
            }
        }
    }

    /// Rejection from a piecewise hat for `0 <= lambda < 1`, small `omega`.
    fn concave<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (lambda, omega) = (self.lambda, self.omega);
        let xm = mode(lambda, omega);
        let x0 = omega / (1.0 - lambda);
        let k0 = ((lambda - 1.0) * xm.ln() - 0.5 * omega * (xm + 1.0 / xm)).exp();
        let a0 = k0 * x0;
        let (k1, a1, k2, a2);
        if x0 >= 2.0 / omega {
            k1 = 0.0;
            a1 = 0.0;
            k2 = x0.powf(lambda - 1.0);
            a2 = k2 * 2.0 * (-omega * x0 / 2.0).exp() / omega;
        } else {
            k1 = (-omega).exp();
            a1 = if lambda == 0.0 {
                k1 * (2.0 / (omega * omega)).ln()
            } else {
                k1 / lambda * ((2.0 / omega).powf(lambda) - x0.powf(lambda))
            };
            k2 = (2.0 / omega).powf(lambda - 1.0);
            a2 = k2 * 2.0 * (-1.0f64).exp() / omega;
        }
        let total = a0 + a1 + a2;
        let tail_start = x0.max(2.0 / omega);
        loop {
            let mut v = total * open_unit(rng);
            let (x, hx);
            if v <= a0 {
                x = x0 * v / a0;
                hx = k0;
            } else {
                v -= a0;
                if v <= a1 {
                    if lambda == 0.0 {
                        x = omega * (omega.exp() * v).exp();
                        hx = k1 / x;
                    } else {
                        x = (x0.powf(lambda) + lambda / k1 * v).powf(1.0 / lambda);
                        hx = k1 * x.powf(lambda - 1.0);
                    }
                } else {
                    v -= a1;
                    x = -2.0 / omega * ((-omega / 2.0 * tail_start).exp() - omega / (2.0 * k2) * v).ln();
                    hx = k2 * (-omega / 2.0 * x).exp();
                }
            }
            if !(x > 0.0 && x.is_finite()) {
                continue;
            }
            let u = open_unit(rng) * hx;
            if u.ln() <= (lambda - 1.0) * x.ln() - omega / 2.0 * (x + 1.0 / x) {
                return x;
            }
        }
    }
}
