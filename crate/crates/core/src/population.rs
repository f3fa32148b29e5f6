//! Reference laws with exact quantiles, and their population risk values.

use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RiskError};
use crate::normal;
use crate::quadrature::gauss_kronrod_pieces;
use crate::rng::open_unit;
use crate::spectra::Spectrum;

/// Interior cut-off for population spectral risk; the two end strips are
/// integrated analytically.
pub const TAIL_CUTOFF: f64 = 1e-8;
/// Absolute tolerance of the interior quadrature.
pub const RISK_TOL: f64 = 1e-10;

/// Parameters of a reference law, as written in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Law {
    Uniform { a: f64, b: f64 },
    Normal { mean: f64, sd: f64 },
    Exponential { rate: f64 },
    PointMass { c: f64 },
}

/// A validated reference law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Law", into = "Law")]
pub struct ReferenceDistribution {
    law: Law,
}

impl TryFrom<Law> for ReferenceDistribution {
    type Error = RiskError;

    fn try_from(law: Law) -> Result<Self> {
        let bad = |msg: String| Err(RiskError::InvalidDistribution(msg));
        match law {
            Law::Uniform { a, b } if !(a.is_finite() && b.is_finite() && a < b) => {
                return bad(format!("uniform needs finite a < b, got a={a}, b={b}"));
            }
            Law::Normal { mean, sd } if !(mean.is_finite() && sd.is_finite() && sd > 0.0) => {
                return bad(format!("normal needs finite mean and sd > 0, got mean={mean}, sd={sd}"));
            }
            Law::Exponential { rate } if !(rate.is_finite() && rate > 0.0) => {
                return bad(format!("exponential needs a finite rate > 0, got {rate}"));
            }
            Law::PointMass { c } if !c.is_finite() => {
                return bad(format!("point mass needs a finite location, got {c}"));
            }
            _ => {}
        }
        Ok(Self { law })
    }
}

impl From<ReferenceDistribution> for Law {
    fn from(d: ReferenceDistribution) -> Self {
        d.law
    }
}

impl fmt::Display for ReferenceDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.law {
            Law::Uniform { a, b } => write!(f, "uniform({a}, {b})"),
            Law::Normal { mean, sd } => write!(f, "normal({mean}, {sd})"),
            Law::Exponential { rate } => write!(f, "exponential({rate})"),
            Law::PointMass { c } => write!(f, "point_mass({c})"),
        }
    }
}

impl ReferenceDistribution {
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        Law::Uniform { a, b }.try_into()
    }

    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        Law::Normal { mean, sd }.try_into()
    }

    pub fn standard_normal() -> Self {
        Self { law: Law::Normal { mean: 0.0, sd: 1.0 } }
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Law::Exponential { rate }.try_into()
    }

    pub fn point_mass(c: f64) -> Result<Self> {
        Law::PointMass { c }.try_into()
    }

    pub fn law(&self) -> Law {
        self.law
    }

    pub fn is_point_mass(&self) -> bool {
        matches!(self.law, Law::PointMass { .. })
    }

    /// Whether the quantile function is bounded on `[0, 1]`.
    pub fn is_bounded(&self) -> bool {
        matches!(self.law, Law::Uniform { .. } | Law::PointMass { .. })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self.law {
            Law::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
            Law::Normal { mean, sd } => normal::cdf((x - mean) / sd),
            Law::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            Law::PointMass { c } => {
                if x >= c {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `1 - F(x)`, accurate in the upper tail.
    pub fn survival(&self, x: f64) -> f64 {
        match self.law {
            Law::Normal { mean, sd } => normal::survival((x - mean) / sd),
            Law::Exponential { rate } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-rate * x).exp()
                }
            }
            _ => 1.0 - self.cdf(x),
        }
    }

    /// Lower quantile `q(u) = inf{x : F(x) >= u}` for `u` in `[0, 1]`;
    /// unbounded laws give infinities at the ends.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(RiskError::DomainError { value: u, domain: "[0, 1]" });
        }
        Ok(self.quantile_unchecked(u))
    }

    pub(crate) fn quantile_unchecked(&self, u: f64) -> f64 {
        match self.law {
            Law::Uniform { a, b } => a + (b - a) * u,
            Law::Normal { mean, sd } => mean + sd * normal::quantile(u),
            Law::Exponential { rate } => -(-u).ln_1p() / rate,
            Law::PointMass { c } => c,
        }
    }

    pub fn density(&self, x: f64) -> Result<f64> {
        Ok(match self.law {
            Law::Uniform { a, b } => {
                if (a..=b).contains(&x) {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            Law::Normal { mean, sd } => normal::pdf((x - mean) / sd) / sd,
            Law::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * (-rate * x).exp()
                }
            }
            Law::PointMass { .. } => {
                return Err(RiskError::InvalidDistribution("a point mass has no density".into()));
            }
        })
    }

    /// `q'(u) = 1 / f(q(u))` for `u` in `(0, 1)`.
    pub fn quantile_derivative(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(RiskError::DomainError { value: u, domain: "(0, 1)" });
        }
        match self.law {
            Law::PointMass { .. } => {
                Err(RiskError::InvalidDistribution("a point mass has no quantile derivative".into()))
            }
            _ => Ok(self.quantile_derivative_unchecked(u)),
        }
    }

    pub(crate) fn quantile_derivative_unchecked(&self, u: f64) -> f64 {
        match self.law {
            Law::Uniform { a, b } => b - a,
            Law::Normal { sd, .. } => sd / normal::pdf(normal::quantile(u)),
            Law::Exponential { rate } => 1.0 / (rate * (1.0 - u)),
            Law::PointMass { .. } => 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        match self.law {
            Law::Uniform { a, b } => 0.5 * (a + b),
            Law::Normal { mean, .. } => mean,
            Law::Exponential { rate } => 1.0 / rate,
            Law::PointMass { c } => c,
        }
    }

    pub fn variance(&self) -> f64 {
        match self.law {
            Law::Uniform { a, b } => (b - a) * (b - a) / 12.0,
            Law::Normal { sd, .. } => sd * sd,
            Law::Exponential { rate } => 1.0 / (rate * rate),
            Law::PointMass { .. } => 0.0,
        }
    }

    /// `int_0^t q(u) du` in closed form, `t` in `[0, 1]`.
    pub fn lower_partial_mean(&self, t: f64) -> f64 {
        match self.law {
            Law::Uniform { a, b } => a * t + 0.5 * (b - a) * t * t,
            Law::Normal { mean, sd } => {
                let tail = if t > 0.0 && t < 1.0 { normal::pdf(normal::quantile(t)) } else { 0.0 };
                mean * t - sd * tail
            }
            Law::Exponential { rate } => {
                let s = 1.0 - t;
                let s_ln_s = if s > 0.0 { s * s.ln() } else { 0.0 };
                // (1 - t) ln(1 - t) + t, evaluated stably for small t
                let v = if t < 0.5 { (1.0 - t) * (-t).ln_1p() + t } else { s_ln_s + t };
                v / rate
            }
            Law::PointMass { c } => c * t,
        }
    }

    /// `int_t^1 q(u) du` in closed form, `t` in `[0, 1]`.
    pub fn upper_partial_mean(&self, t: f64) -> f64 {
        match self.law {
            Law::Uniform { a, b } => a * (1.0 - t) + 0.5 * (b - a) * (1.0 - t * t),
            Law::Normal { mean, sd } => {
                let tail = if t > 0.0 && t < 1.0 { normal::pdf(normal::quantile(t)) } else { 0.0 };
                mean * (1.0 - t) + sd * tail
            }
            Law::Exponential { rate } => {
                let s = 1.0 - t;
                if s <= 0.0 {
                    0.0
                } else {
                    (s - s * s.ln()) / rate
                }
            }
            Law::PointMass { c } => c * (1.0 - t),
        }
    }

    /// `E[(x - X)^+] = int_{-inf}^x F`.
    pub fn integrated_cdf(&self, x: f64) -> f64 {
        match self.law {
            Law::Uniform { a, b } => {
                if x <= a {
                    0.0
                } else if x >= b {
                    x - 0.5 * (a + b)
                } else {
                    (x - a) * (x - a) / (2.0 * (b - a))
                }
            }
            Law::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                sd * (z * normal::cdf(z) + normal::pdf(z))
            }
            Law::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    x + (-rate * x).exp_m1() / rate
                }
            }
            Law::PointMass { c } => (x - c).max(0.0),
        }
    }

    /// `E[(X - x)^+] = int_x^inf (1 - F)`.
    pub fn integrated_survival(&self, x: f64) -> f64 {
        match self.law {
            Law::Uniform { a, b } => {
                if x <= a {
                    0.5 * (a + b) - x
                } else if x >= b {
                    0.0
                } else {
                    (b - x) * (b - x) / (2.0 * (b - a))
                }
            }
            Law::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                sd * (normal::pdf(z) - z * normal::survival(z))
            }
            Law::Exponential { rate } => {
                if x <= 0.0 {
                    1.0 / rate - x
                } else {
                    (-rate * x).exp() / rate
                }
            }
            Law::PointMass { c } => (c - x).max(0.0),
        }
    }

    /// One draw by inverse transform.
    pub fn draw<R: RngCore + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile_unchecked(open_unit(rng))
    }

    /// `n` independent draws.
    pub fn draw_n<R: RngCore + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}

/// `ES_alpha(X) = -(1/alpha) int_0^alpha q`, in closed form.
pub fn population_es(dist: &ReferenceDistribution, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(RiskError::AlphaOutOfRange(alpha));
    }
    if let Law::PointMass { c } = dist.law {
        return Ok(-c);
    }
    Ok(-dist.lower_partial_mean(alpha) / alpha)
}

/// `rho_phi(X) = -int_0^1 q phi`. Bounded laws are integrated over `[0, 1]`
/// directly; unbounded ones over `[delta, 1 - delta]` plus the two end strips,
/// where `phi` is frozen at the strip midpoint and `q` integrated exactly.
pub fn population_spectral_risk(dist: &ReferenceDistribution, phi: &Spectrum) -> Result<f64> {
    if let Law::PointMass { c } = dist.law {
        return Ok(-c);
    }
    let delta = if dist.is_bounded() { 0.0 } else { TAIL_CUTOFF };
    let mut points = vec![delta];
    points.extend(phi.breakpoints().into_iter().filter(|&b| b > delta && b < 1.0 - delta));
    points.push(1.0 - delta);
    let interior = gauss_kronrod_pieces(|u| dist.quantile_unchecked(u) * phi.density(u), &points, RISK_TOL, 0.0)?;
    let tails = if delta > 0.0 {
        phi.density(0.5 * delta) * dist.lower_partial_mean(delta)
            + phi.density(1.0 - 0.5 * delta) * dist.upper_partial_mean(1.0 - delta)
    } else {
        0.0
    };
    Ok(-(interior + tails))
}
