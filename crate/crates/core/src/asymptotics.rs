//! Influence functions, asymptotic variance, the Efron bootstrap and the
//! distance diagnostics used to check limit laws.

use std::cell::Cell;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RiskError};
use crate::estimators::l_estimate_sorted;
use crate::population::ReferenceDistribution;
use crate::quadrature::{gauss_kronrod, gauss_kronrod_pieces};
use crate::rng::{index_below, RngSpec};
use crate::sample::{sort_values, Sample};
use crate::spectra::{canonical_weights, Spectrum};

/// Absolute tolerance of each influence-function quadrature piece.
pub const INFLUENCE_TOL: f64 = 1e-10;
/// Probability cut-off beyond which the spectrum is frozen in the influence
/// function; the remaining tail mass is integrated in closed form.
const INFLUENCE_CUTOFF: f64 = 1e-12;
/// Truncation of the variance double integral to `[delta, 1 - delta]^2`.
pub const VARIANCE_CUTOFF: f64 = 1e-6;
/// Relative tolerance of the variance quadrature.
pub const VARIANCE_REL_TOL: f64 = 1e-9;
/// Variances at or below this are treated as degenerate.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;
/// Points per block in batched influence evaluation; each block starts from a
/// direct evaluation so increments never accumulate across blocks.
const INFLUENCE_BLOCK: usize = 1024;

fn require_density(dist: &ReferenceDistribution) -> Result<()> {
    if dist.is_point_mass() {
        Err(RiskError::InvalidDistribution("a point mass has no quantile derivative".into()))
    } else {
        Ok(())
    }
}

/// Integration window in `y`, with the spectrum levels used beyond it.
struct Window {
    lo: f64,
    hi: f64,
    phi_lo: f64,
    phi_hi: f64,
    breaks: Vec<f64>,
}

impl Window {
    fn new(phi: &Spectrum, dist: &ReferenceDistribution) -> Self {
        let delta = if dist.is_bounded() { 0.0 } else { INFLUENCE_CUTOFF };
        let lo = dist.quantile_unchecked(delta);
        let hi = dist.quantile_unchecked(1.0 - delta);
        // outside [lo, hi] F is within delta of 0 or 1; bounded laws have F
        // exactly 0 or 1 there
        let phi_lo = phi.density(0.5 * delta);
        let phi_hi = phi.density(1.0 - 0.5 * delta);
        let mut breaks: Vec<f64> =
            phi.breakpoints().into_iter().map(|b| dist.quantile_unchecked(b)).filter(|&y| y > lo && y < hi).collect();
        breaks.dedup();
        Self { lo, hi, phi_lo, phi_hi, breaks }
    }

    /// `int_s^t phi(F(y)) w(y) dy` where `w` is `F` (`upper = false`) or
    /// `1 - F` (`upper = true`); `s` may be `-inf` and `t` may be `+inf`
    /// when the weight vanishes there.
    fn weighted(&self, phi: &Spectrum, dist: &ReferenceDistribution, s: f64, t: f64, upper: bool) -> Result<f64> {
        if t <= s {
            return Ok(0.0);
        }
        let mass = |u: f64, v: f64| -> f64 {
            if upper {
                let tail = |y: f64| if y == f64::INFINITY { 0.0 } else { dist.integrated_survival(y) };
                tail(u) - tail(v)
            } else {
                let tail = |y: f64| if y == f64::NEG_INFINITY { 0.0 } else { dist.integrated_cdf(y) };
                tail(v) - tail(u)
            }
        };
        let mut total = 0.0;
        if s < self.lo {
            total += self.phi_lo * mass(s, t.min(self.lo));
        }
        if t > self.hi {
            total += self.phi_hi * mass(s.max(self.hi), t);
        }
        let a = s.max(self.lo);
        let b = t.min(self.hi);
        if a < b {
            let mut points = vec![a];
            points.extend(self.breaks.iter().copied().filter(|&y| y > a && y < b));
            points.push(b);
            total += gauss_kronrod_pieces(
                |y| {
                    let f = dist.cdf(y);
                    let w = if upper { dist.survival(y) } else { f };
                    phi.density(f) * w
                },
                &points,
                INFLUENCE_TOL,
                0.0,
            )?;
        }
        Ok(total)
    }

    /// `int_s^t phi(F(y)) dy` for finite `s <= t`.
    fn level_integral(&self, phi: &Spectrum, dist: &ReferenceDistribution, s: f64, t: f64) -> Result<f64> {
        let mut total = 0.0;
        if s < self.lo {
            total += self.phi_lo * (t.min(self.lo) - s);
        }
        if t > self.hi {
            total += self.phi_hi * (t - s.max(self.hi));
        }
        let a = s.max(self.lo);
        let b = t.min(self.hi);
        if a < b {
            let mut points = vec![a];
            points.extend(self.breaks.iter().copied().filter(|&y| y > a && y < b));
            points.push(b);
            total += gauss_kronrod_pieces(|y| phi.density(dist.cdf(y)), &points, INFLUENCE_TOL, 0.0)?;
        }
        Ok(total)
    }

    fn influence(&self, phi: &Spectrum, dist: &ReferenceDistribution, x: f64) -> Result<f64> {
        let below = self.weighted(phi, dist, f64::NEG_INFINITY, x, false)?;
        let above = self.weighted(phi, dist, x, f64::INFINITY, true)?;
        Ok(above - below)
    }
}

/// `IF(x) = int_0^1 phi(a) q'(a) (1{x <= q(a)} - a) da`.
///
/// Evaluated after the substitution `a = F(y)`, which turns it into
/// `int_x^inf phi(F)(1 - F) dy - int_-inf^x phi(F) F dy`; the split at `x` is
/// the split at `F(x)` where the indicator jumps.
pub fn influence_function(phi: &Spectrum, dist: &ReferenceDistribution, x: f64) -> Result<f64> {
    require_density(dist)?;
    if !x.is_finite() {
        return Err(RiskError::NonFiniteInput { index: 0, value: x });
    }
    Window::new(phi, dist).influence(phi, dist, x)
}

/// Influence function at many points. Points are sorted and processed in
/// blocks; within a block `IF` is advanced by `IF(x') - IF(x) = -int_x^x' phi(F)`.
pub fn influence_values(phi: &Spectrum, dist: &ReferenceDistribution, xs: &[f64]) -> Result<Vec<f64>> {
    require_density(dist)?;
    if let Some((index, &value)) = xs.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(RiskError::NonFiniteInput { index, value });
    }
    let window = Window::new(phi, dist);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let blocks: Vec<Vec<f64>> = order
        .par_chunks(INFLUENCE_BLOCK)
        .map(|block| {
            let mut out = Vec::with_capacity(block.len());
            let mut prev_x = xs[block[0]];
            let mut value = window.influence(phi, dist, prev_x)?;
            for &i in block {
                let x = xs[i];
                if x > prev_x {
                    value -= window.level_integral(phi, dist, prev_x, x)?;
                    prev_x = x;
                }
                out.push(value);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut result = vec![0.0; xs.len()];
    for (&i, v) in order.iter().zip(blocks.into_iter().flatten()) {
        result[i] = v;
    }
    Ok(result)
}

/// `sigma^2 = int int (min(a, b) - ab) phi(a) phi(b) q'(a) q'(b) da db` over
/// `[delta, 1 - delta]^2`.
///
/// By symmetry this is `2 int (1 - b) g(b) G(b) db` with `g = phi q'` and
/// `G(b) = int_delta^b a g(a) da`, evaluated as a nested adaptive quadrature.
pub fn asymptotic_variance(phi: &Spectrum, dist: &ReferenceDistribution) -> Result<f64> {
    if dist.is_point_mass() {
        return Err(RiskError::DegenerateVariance(0.0));
    }
    let delta = VARIANCE_CUTOFF;
    let g = |a: f64| phi.density(a) * dist.quantile_derivative_unchecked(a);
    let mut points = vec![delta];
    points.extend(phi.breakpoints().into_iter().filter(|&b| b > delta && b < 1.0 - delta));
    points.push(1.0 - delta);

    // G on the piece boundaries, so each inner integral stays within a piece
    let mut base = vec![0.0];
    for w in points.windows(2) {
        let inner = gauss_kronrod(|a| a * g(a), w[0], w[1], 0.0, VARIANCE_REL_TOL * 1e-2)?;
        base.push(base.last().unwrap() + inner);
    }

    let failure: Cell<Option<RiskError>> = Cell::new(None);
    let mut total = 0.0;
    for (piece, w) in points.windows(2).enumerate() {
        let start = w[0];
        let outer = |b: f64| {
            let inner = match gauss_kronrod(|a| a * g(a), start, b, 0.0, VARIANCE_REL_TOL * 1e-2) {
                Ok(v) => v,
                Err(e) => {
                    failure.set(Some(e));
                    return f64::NAN;
                }
            };
            (1.0 - b) * g(b) * (base[piece] + inner)
        };
        match gauss_kronrod(outer, w[0], w[1], 0.0, VARIANCE_REL_TOL) {
            Ok(v) => total += v,
            Err(e) => return Err(failure.take().unwrap_or(e)),
        }
    }
    let sigma2 = 2.0 * total;
    if !sigma2.is_finite() {
        return Err(RiskError::NonFiniteVariance);
    }
    if sigma2 <= DEGENERATE_VARIANCE {
        return Err(RiskError::DegenerateVariance(sigma2));
    }
    Ok(sigma2)
}

/// Monte Carlo summary of the influence function under its law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfluenceMoments {
    pub draws: usize,
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub variance_se: f64,
}

const DRAW_CHUNK: usize = 65_536;

/// Mean and variance of `IF(X)` over `draws` independent draws of `X`, with
/// their standard errors. Chunk `c` of draws uses `rng.substream(c)`.
pub fn influence_monte_carlo(
    phi: &Spectrum,
    dist: &ReferenceDistribution,
    draws: usize,
    rng: RngSpec,
) -> Result<InfluenceMoments> {
    if draws < 2 {
        return Err(RiskError::InvalidConfig("at least two draws are needed".into()));
    }
    let chunks = draws.div_ceil(DRAW_CHUNK);
    let xs: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = DRAW_CHUNK.min(draws - c * DRAW_CHUNK);
            dist.draw_n(&mut rng.substream(c as u64).rng(), len)
        })
        .collect::<Vec<_>>()
        .concat();
    let values = influence_values(phi, dist, &xs)?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (m2, m4) = values.iter().fold((0.0, 0.0), |(m2, m4), v| {
        let d = (v - mean) * (v - mean);
        (m2 + d, m4 + d * d)
    });
    let variance = m2 / (n - 1.0);
    let m4 = m4 / n;
    Ok(InfluenceMoments {
        draws,
        mean,
        mean_se: (variance / n).sqrt(),
        variance,
        variance_se: ((m4 - variance * variance).max(0.0) / n).sqrt(),
    })
}

/// Efron resample `x*_i = x_{U_i}` with `U_i` uniform on the indices.
pub fn bootstrap_resample(x: &Sample, rng: RngSpec) -> Sample {
    let mut gen = rng.rng();
    let values = x.values();
    let out = (0..values.len()).map(|_| values[index_below(&mut gen, values.len())]).collect();
    Sample::new(out).expect("resampled values are finite and non-empty")
}

/// Sorted resample of an already sorted vector: draws index counts and
/// expands them in order, so no per-replicate sort is needed.
fn sorted_resample(sorted: &[f64], rng: RngSpec, counts: &mut [u32], out: &mut Vec<f64>) {
    let n = sorted.len();
    counts.iter_mut().for_each(|c| *c = 0);
    let mut gen = rng.rng();
    for _ in 0..n {
        counts[index_below(&mut gen, n)] += 1;
    }
    out.clear();
    for (v, &c) in sorted.iter().zip(counts.iter()) {
        out.extend(std::iter::repeat_n(*v, c as usize));
    }
}

/// `B` replicates of `sqrt(n) (rho_hat(x*) - rho_hat(x))` for the canonical
/// spectral estimator. Replicate `b` draws from `rng.substream(b)`, whose
/// stream id is `b`, so the output does not depend on scheduling.
pub fn bootstrap_distribution(x: &Sample, phi: &Spectrum, replicates: usize, rng: RngSpec) -> Result<Vec<f64>> {
    if replicates == 0 {
        return Err(RiskError::InvalidConfig("the number of replicates must be positive".into()));
    }
    let n = x.len();
    let weights = canonical_weights(phi, n)?;
    let a = weights.weights();
    let mut sorted = x.values().to_vec();
    sort_values(&mut sorted);
    let centre = l_estimate_sorted(a, &sorted);
    let root_n = (n as f64).sqrt();
    let out = (0..replicates as u64)
        .into_par_iter()
        .map_init(
            || (vec![0u32; n], Vec::with_capacity(n)),
            |(counts, buf), b| {
                sorted_resample(&sorted, rng.substream(b), counts, buf);
                root_n * (l_estimate_sorted(a, buf) - centre)
            },
        )
        .collect();
    Ok(out)
}

/// `sup_t |F_n(t) - G(t)|`, exact over the order statistics.
pub fn kolmogorov_distance(sample: &Sample, dist: &ReferenceDistribution) -> f64 {
    let mut sorted = sample.values().to_vec();
    sort_values(&mut sorted);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let g = dist.cdf(x);
            ((i + 1) as f64 / n - g).abs().max((i as f64 / n - g).abs())
        })
        .fold(0.0, f64::max)
}

/// `max |F_n(t) - G(t)|` over the grid `t = -m, -m + 1/m, ..., m`
/// (`2m^2 + 1` points).
pub fn truncated_kolmogorov(sample: &Sample, dist: &ReferenceDistribution, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(RiskError::InvalidConfig("m must be positive".into()));
    }
    let mut sorted = sample.values().to_vec();
    sort_values(&mut sorted);
    let n = sorted.len() as f64;
    let mf = m as f64;
    let m2 = (m * m) as i64;
    Ok((0..=2 * m2)
        .map(|j| {
            let t = (j - m2) as f64 / mf;
            let fn_t = sorted.partition_point(|&v| v <= t) as f64 / n;
            (fn_t - dist.cdf(t)).abs()
        })
        .fold(0.0, f64::max))
}

/// `W_1 = int |F_n - F| dx`, exact between order statistics through the
/// integrated distribution function, with closed-form tails.
pub fn wasserstein1(sample: &Sample, dist: &ReferenceDistribution) -> f64 {
    let mut sorted = sample.values().to_vec();
    sort_values(&mut sorted);
    let n = sorted.len();
    // int_u^v F, taken from whichever tail integral is small there
    let mass_f = |u: f64, v: f64, upper: bool| -> f64 {
        if upper {
            (v - u) - (dist.integrated_survival(u) - dist.integrated_survival(v))
        } else {
            dist.integrated_cdf(v) - dist.integrated_cdf(u)
        }
    };
    let mut total = dist.integrated_cdf(sorted[0]) + dist.integrated_survival(sorted[n - 1]);
    for i in 1..n {
        let (u, v) = (sorted[i - 1], sorted[i]);
        if v <= u {
            continue;
        }
        let c = i as f64 / n as f64;
        let upper = c >= 0.5;
        let y = dist.quantile_unchecked(c).clamp(u, v);
        let left = c * (y - u) - mass_f(u, y, upper);
        let right = mass_f(y, v, upper) - c * (v - y);
        total += left.max(0.0) + right.max(0.0);
    }
    total
}
