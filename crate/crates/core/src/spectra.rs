//! Spectra: bounded non-increasing densities on `[0, 1]` with unit mass,
//! their primitives, canonical discretisation into L-estimator weights, and
//! the step functions those weights induce.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RiskError};
use crate::quadrature::adaptive_simpson;
use crate::sample::quantile_index;
use crate::simplex::WeightVector;

/// Grid resolution used to certify monotonicity and bounds.
pub const VALIDATION_GRID: usize = 10_000;
/// Absolute tolerance for primitives obtained by quadrature.
pub const PRIMITIVE_TOL: f64 = 1e-10;
const MONOTONE_SLACK: f64 = 1e-12;
const PIECEWISE_MASS_TOL: f64 = 1e-9;

/// JSON form of a spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumSpec {
    Es { alpha: f64 },
    Uniform,
    Linear { slope: f64 },
    Exponential { k: f64 },
    PiecewiseLinear { knots: Vec<[f64; 2]> },
}

type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Shape {
    ExpectedShortfall { alpha: f64 },
    Uniform,
    Linear { slope: f64 },
    Exponential { k: f64, norm: f64 },
    PiecewiseLinear { t: Vec<f64>, v: Vec<f64>, cumulative: Vec<f64> },
    Custom { density: DensityFn, label: String },
}

/// A validated spectrum with its sup bound `C` and, when it has one, its
/// Lipschitz constant `L`.
#[derive(Clone)]
pub struct Spectrum {
    shape: Shape,
    bound: f64,
    lipschitz: Option<f64>,
}

impl fmt::Debug for Spectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectrum")
            .field("kind", &self.label())
            .field("bound", &self.bound)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl Spectrum {
    /// `phi = 1/alpha` on `(0, alpha]`, zero afterwards.
    pub fn expected_shortfall(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(RiskError::AlphaOutOfRange(alpha));
        }
        // alpha = 1 is the uniform spectrum and therefore Lipschitz
        let lipschitz = (alpha == 1.0).then_some(0.0);
        Self::checked(Shape::ExpectedShortfall { alpha }, 1.0 / alpha, lipschitz)
    }

    pub fn uniform() -> Self {
        Self { shape: Shape::Uniform, bound: 1.0, lipschitz: Some(0.0) }
    }

    /// `phi(u) = 1 + slope (1/2 - u)`, `0 <= slope <= 2`. Slope 2 gives `2(1-u)`.
    pub fn linear(slope: f64) -> Result<Self> {
        if !(0.0..=2.0).contains(&slope) {
            return Err(RiskError::InvalidSpectrum(format!("linear slope {slope} outside [0, 2]")));
        }
        Self::checked(Shape::Linear { slope }, 1.0 + 0.5 * slope, Some(slope))
    }

    /// `phi(u) = k e^{-k u} / (1 - e^{-k})`, `k > 0`.
    pub fn exponential(k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite() && k <= 700.0) {
            return Err(RiskError::InvalidSpectrum(format!("exponential rate {k} outside (0, 700]")));
        }
        let norm = -(-k).exp_m1();
        Self::checked(Shape::Exponential { k, norm }, k / norm, Some(k * k / norm))
    }

    /// Linear interpolation through `(t, v)` knots with `t` running from 0 to 1.
    /// Values must be non-negative and non-increasing; a total mass within
    /// 1e-9 of one is rescaled to exactly one.
    pub fn piecewise_linear(knots: &[[f64; 2]]) -> Result<Self> {
        let bad = |m: String| Err(RiskError::InvalidSpectrum(m));
        if knots.len() < 2 {
            return bad("piecewise_linear needs at least two knots".into());
        }
        if knots.iter().flatten().any(|x| !x.is_finite()) {
            return bad("piecewise_linear knots must be finite".into());
        }
        let t: Vec<f64> = knots.iter().map(|k| k[0]).collect();
        let mut v: Vec<f64> = knots.iter().map(|k| k[1]).collect();
        if t[0] != 0.0 || t[t.len() - 1] != 1.0 {
            return bad("piecewise_linear knots must start at t=0 and end at t=1".into());
        }
        if let Some(i) = t.windows(2).position(|w| w[1] <= w[0]) {
            return bad(format!("knot abscissae not strictly increasing at index {}", i + 1));
        }
        if let Some(i) = v.iter().position(|&x| x < 0.0) {
            return bad(format!("knot value at index {i} is negative"));
        }
        if let Some(i) = v.windows(2).position(|w| w[1] > w[0]) {
            return bad(format!("knot values increase at index {}", i + 1));
        }
        let mass: f64 = t.windows(2).zip(v.windows(2)).map(|(tw, vw)| 0.5 * (tw[1] - tw[0]) * (vw[0] + vw[1])).sum();
        if (mass - 1.0).abs() > PIECEWISE_MASS_TOL {
            return bad(format!("piecewise_linear spectrum integrates to {mass}, not 1"));
        }
        v.iter_mut().for_each(|x| *x /= mass);
        let mut cumulative = vec![0.0; t.len()];
        for i in 1..t.len() {
            cumulative[i] = cumulative[i - 1] + 0.5 * (t[i] - t[i - 1]) * (v[i - 1] + v[i]);
        }
        let lipschitz =
            t.windows(2).zip(v.windows(2)).map(|(tw, vw)| (vw[0] - vw[1]) / (tw[1] - tw[0])).fold(0.0, f64::max);
        let bound = v[0];
        Self::checked(Shape::PiecewiseLinear { t, v, cumulative }, bound, Some(lipschitz))
    }

    /// A user-supplied density. Its primitive is computed by adaptive Simpson.
    pub fn custom<F>(label: impl Into<String>, density: F, bound: f64, lipschitz: Option<f64>) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let s = Self::checked(Shape::Custom { density: Arc::new(density), label: label.into() }, bound, lipschitz)?;
        if let Some(l) = lipschitz {
            let h = 1.0 / VALIDATION_GRID as f64;
            for j in 1..VALIDATION_GRID {
                let d = (s.density(j as f64 * h) - s.density((j + 1) as f64 * h)).abs();
                if d > l * h + 1e-9 {
                    return Err(RiskError::InvalidSpectrum(format!(
                        "declared Lipschitz constant {l} violated near t = {}",
                        j as f64 * h
                    )));
                }
            }
        }
        Ok(s)
    }

    pub fn from_spec(spec: &SpectrumSpec) -> Result<Self> {
        match spec {
            SpectrumSpec::Es { alpha } => Self::expected_shortfall(*alpha),
            SpectrumSpec::Uniform => Ok(Self::uniform()),
            SpectrumSpec::Linear { slope } => Self::linear(*slope),
            SpectrumSpec::Exponential { k } => Self::exponential(*k),
            SpectrumSpec::PiecewiseLinear { knots } => Self::piecewise_linear(knots),
        }
    }

    /// JSON form; `None` for custom densities.
    pub fn spec(&self) -> Option<SpectrumSpec> {
        Some(match &self.shape {
            Shape::ExpectedShortfall { alpha } => SpectrumSpec::Es { alpha: *alpha },
            Shape::Uniform => SpectrumSpec::Uniform,
            Shape::Linear { slope } => SpectrumSpec::Linear { slope: *slope },
            Shape::Exponential { k, .. } => SpectrumSpec::Exponential { k: *k },
            Shape::PiecewiseLinear { t, v, .. } => {
                SpectrumSpec::PiecewiseLinear { knots: t.iter().zip(v).map(|(&a, &b)| [a, b]).collect() }
            }
            Shape::Custom { .. } => return None,
        })
    }

    fn checked(shape: Shape, bound: f64, lipschitz: Option<f64>) -> Result<Self> {
        if !(bound.is_finite() && bound > 0.0) {
            return Err(RiskError::InvalidSpectrum(format!("bound {bound} must be positive and finite")));
        }
        let s = Self { shape, bound, lipschitz };
        s.validate()?;
        Ok(s)
    }

    /// Checks monotonicity, the bound and unit mass on the validation grid.
    fn validate(&self) -> Result<()> {
        let mut points: Vec<f64> = (1..=VALIDATION_GRID).map(|j| j as f64 / VALIDATION_GRID as f64).collect();
        points.extend(self.breakpoints());
        points.sort_by(f64::total_cmp);
        let mut prev = f64::INFINITY;
        for &u in &points {
            let v = self.density(u);
            if !v.is_finite() || v < 0.0 || v > self.bound + MONOTONE_SLACK {
                return Err(RiskError::InvalidSpectrum(format!("phi({u}) = {v} outside [0, {}]", self.bound)));
            }
            if v > prev + MONOTONE_SLACK {
                return Err(RiskError::InvalidSpectrum(format!("phi increases near u = {u}")));
            }
            prev = v;
        }
        let total = self.primitive_unchecked(1.0)?;
        let tol = if matches!(self.shape, Shape::Custom { .. }) { PIECEWISE_MASS_TOL } else { 1e-12 };
        if (total - 1.0).abs() > tol {
            return Err(RiskError::InvalidSpectrum(format!("spectrum integrates to {total}, not 1")));
        }
        Ok(())
    }

    /// `phi(u)` for `u` in `(0, 1]`.
    pub fn eval(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u <= 1.0) {
            return Err(RiskError::DomainError { value: u, domain: "(0, 1]" });
        }
        Ok(self.density(u))
    }

    /// Density without domain checks; at `u = 0` this is the right limit.
    pub(crate) fn density(&self, u: f64) -> f64 {
        match &self.shape {
            Shape::ExpectedShortfall { alpha } => {
                if u <= *alpha {
                    1.0 / alpha
                } else {
                    0.0
                }
            }
            Shape::Uniform => 1.0,
            Shape::Linear { slope } => 1.0 + slope * (0.5 - u),
            Shape::Exponential { k, norm } => k * (-k * u).exp() / norm,
            Shape::PiecewiseLinear { t, v, .. } => {
                let j = t.partition_point(|&x| x <= u).clamp(1, t.len() - 1);
                let w = (u - t[j - 1]) / (t[j] - t[j - 1]);
                v[j - 1] + w * (v[j] - v[j - 1])
            }
            Shape::Custom { density, .. } => density(u),
        }
    }

    /// `Phi(t) = int_0^t phi`, for `t` in `[0, 1]`.
    pub fn primitive(&self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(RiskError::DomainError { value: t, domain: "[0, 1]" });
        }
        self.primitive_unchecked(t)
    }

    fn primitive_unchecked(&self, t: f64) -> Result<f64> {
        Ok(match &self.shape {
            Shape::ExpectedShortfall { alpha } => t.min(*alpha) / alpha,
            Shape::Uniform => t,
            Shape::Linear { slope } => t + 0.5 * slope * t * (1.0 - t),
            Shape::Exponential { k, norm } => -(-k * t).exp_m1() / norm,
            Shape::PiecewiseLinear { t: ts, v, cumulative } => {
                let j = ts.partition_point(|&x| x <= t).clamp(1, ts.len() - 1);
                let h = t - ts[j - 1];
                let slope = (v[j] - v[j - 1]) / (ts[j] - ts[j - 1]);
                cumulative[j - 1] + h * v[j - 1] + 0.5 * slope * h * h
            }
            Shape::Custom { density, .. } => {
                if t == 0.0 {
                    0.0
                } else {
                    adaptive_simpson(|u| density(u), 0.0, t, PRIMITIVE_TOL)?
                }
            }
        })
    }

    /// `int_lo^hi phi`, using the most accurate closed form available.
    pub fn interval_mass(&self, lo: f64, hi: f64) -> Result<f64> {
        Ok(match &self.shape {
            Shape::Uniform => hi - lo,
            Shape::Linear { .. } => (hi - lo) * self.density(0.5 * (lo + hi)),
            Shape::Exponential { k, norm } => (-k * lo).exp() * -(-k * (hi - lo)).exp_m1() / norm,
            Shape::ExpectedShortfall { alpha } => (hi.min(*alpha) - lo.min(*alpha)) / alpha,
            Shape::Custom { density, .. } => adaptive_simpson(|u| density(u), lo, hi, PRIMITIVE_TOL)?,
            Shape::PiecewiseLinear { .. } => self.primitive_unchecked(hi)? - self.primitive_unchecked(lo)?,
        })
    }

    /// `C = sup phi`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// `L` when the spectrum is Lipschitz.
    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn is_lipschitz(&self) -> bool {
        self.lipschitz.is_some()
    }

    /// Interior points where `phi` may fail to be smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.shape {
            Shape::ExpectedShortfall { alpha } if *alpha < 1.0 => vec![*alpha],
            Shape::PiecewiseLinear { t, .. } => t[1..t.len() - 1].to_vec(),
            _ => Vec::new(),
        }
    }

    pub fn label(&self) -> String {
        match &self.shape {
            Shape::ExpectedShortfall { alpha } => format!("es({alpha})"),
            Shape::Uniform => "uniform".into(),
            Shape::Linear { slope } => format!("linear({slope})"),
            Shape::Exponential { k, .. } => format!("exponential({k})"),
            Shape::PiecewiseLinear { t, .. } => format!("piecewise_linear({} knots)", t.len()),
            Shape::Custom { label, .. } => format!("custom({label})"),
        }
    }
}

impl Serialize for Spectrum {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self.spec() {
            Some(spec) => spec.serialize(serializer),
            None => Err(serde::ser::Error::custom("custom spectra have no JSON form")),
        }
    }
}

impl<'de> Deserialize<'de> for Spectrum {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let spec = SpectrumSpec::deserialize(deserializer)?;
        Spectrum::from_spec(&spec).map_err(serde::de::Error::custom)
    }
}

/// `a_{i,n} = int_{(i-1)/n}^{i/n} phi`, certified non-increasing.
pub fn canonical_weights(phi: &Spectrum, n: usize) -> Result<WeightVector> {
    if n == 0 {
        return Err(RiskError::KOutOfRange { k: 0, n: 0 });
    }
    if let Shape::Uniform = phi.shape {
        return WeightVector::uniform(n);
    }
    let nf = n as f64;
    let weights = (1..=n).map(|i| phi.interval_mass((i - 1) as f64 / nf, i as f64 / nf)).collect::<Result<Vec<_>>>()?;
    WeightVector::monotone(weights)
}

/// Step function `phi_n = n a_i` on `((i-1)/n, i/n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSpectrum {
    levels: Vec<f64>,
}

impl StepSpectrum {
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// `phi_n(t)` for `t` in `(0, 1]`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(RiskError::DomainError { value: t, domain: "(0, 1]" });
        }
        Ok(self.levels[quantile_index(self.levels.len(), t) - 1])
    }

    /// `Phi_n(t) = int_0^t phi_n`, piecewise linear through the cumulative weights.
    pub fn primitive(&self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(RiskError::DomainError { value: t, domain: "[0, 1]" });
        }
        let n = self.levels.len();
        let nf = n as f64;
        let full = ((t * nf).floor() as usize).min(n);
        let mut acc: f64 = self.levels[..full].iter().sum::<f64>() / nf;
        if full < n {
            acc += (t - full as f64 / nf) * self.levels[full];
        }
        Ok(acc)
    }
}

pub fn step_spectrum(a: &WeightVector) -> Result<StepSpectrum> {
    if !a.is_monotone() {
        let index = a.weights().windows(2).position(|w| w[0] < w[1]).unwrap_or(0);
        return Err(RiskError::NotMonotone { index });
    }
    let n = a.len() as f64;
    Ok(StepSpectrum { levels: a.weights().iter().map(|w| n * w).collect() })
}

/// `max_{j=0..grid} |Phi_n(j/grid) - Phi(j/grid)|` for the canonical step spectrum.
pub fn primitive_gap(phi: &Spectrum, n: usize, grid_size: usize) -> Result<f64> {
    primitive_gap_of(phi, &canonical_weights(phi, n)?, grid_size)
}

/// Primitive gap of arbitrary monotone weights against a target spectrum.
pub fn primitive_gap_of(phi: &Spectrum, a: &WeightVector, grid_size: usize) -> Result<f64> {
    if grid_size < 2 {
        return Err(RiskError::InvalidConfig("grid_size must be at least 2".into()));
    }
    let step = step_spectrum(a)?;
    let mut gap = 0.0_f64;
    for j in 0..=grid_size {
        let t = j as f64 / grid_size as f64;
        gap = gap.max((step.primitive(t)? - phi.primitive(t)?).abs());
    }
    Ok(gap)
}

/// `max_{j=1..grid} |phi_n(j/grid) - phi(j/grid)|` for the canonical step spectrum.
pub fn discretisation_error(phi: &Spectrum, n: usize, grid_size: usize) -> Result<f64> {
    let step = step_spectrum(&canonical_weights(phi, n)?)?;
    let mut sup = 0.0_f64;
    for j in 1..=grid_size {
        let t = j as f64 / grid_size as f64;
        sup = sup.max((step.eval(t)? - phi.density(t)).abs());
    }
    Ok(sup)
}

/// The bundled Lipschitz spectra: uniform, `2(1-u)`, and exponential with `k` in {1, 2, 5}.
pub fn bundled_lipschitz() -> Vec<Spectrum> {
    vec![
        Spectrum::uniform(),
        Spectrum::linear(2.0).expect("valid"),
        Spectrum::exponential(1.0).expect("valid"),
        Spectrum::exponential(2.0).expect("valid"),
        Spectrum::exponential(5.0).expect("valid"),
    ]
}
