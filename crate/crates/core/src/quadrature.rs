//! One-dimensional adaptive quadrature.
//!
//! [`adaptive_simpson`] is the reference integrator for spectrum primitives.
//! [`gauss_kronrod`] (7/15-point pairs, global bisection of the worst
//! interval) serves the smooth integrands of the asymptotic diagnostics,
//! where Simpson needs far more evaluations for the same accuracy.

use std::collections::BinaryHeap;

use crate::error::{Result, RiskError};

/// Evaluation cap for a single adaptive Simpson integral.
pub const MAX_EVALUATIONS: usize = 1_000_000;
const MAX_DEPTH: u32 = 60;
const MAX_GK_INTERVALS: usize = 20_000;

struct Simpson<'a, F> {
    f: &'a mut F,
    evals: usize,
    tol: f64,
}

impl<F: FnMut(f64) -> f64> Simpson<'_, F> {
    fn eval(&mut self, x: f64) -> Result<f64> {
        self.evals += 1;
        if self.evals > MAX_EVALUATIONS {
            return Err(self.failure());
        }
        let y = (self.f)(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(self.failure())
        }
    }

    fn failure(&self) -> RiskError {
        RiskError::QuadratureFailure { tolerance: self.tol, evaluations: self.evals }
    }

    #[allow(clippy::too_many_arguments)]
    fn refine(&mut self, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> Result<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = self.eval(lm)?;
        let frm = self.eval(rm)?;
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol || m <= a || b <= m {
            return Ok(left + right + delta / 15.0);
        }
        if depth >= MAX_DEPTH {
            return Err(self.failure());
        }
        Ok(self.refine(a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)?
            + self.refine(m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)?)
    }
}

/// Adaptive Simpson on `[a, b]` to absolute tolerance `abs_tol`.
pub fn adaptive_simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return adaptive_simpson(f, b, a, abs_tol).map(|v| -v);
    }
    let mut s = Simpson { f: &mut f, evals: 0, tol: abs_tol };
    let fa = s.eval(a)?;
    let fb = s.eval(b)?;
    let m = 0.5 * (a + b);
    let fm = s.eval(m)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    s.refine(a, b, fa, fm, fb, whole, abs_tol, 0)
}

// 15-point Kronrod abscissae (non-negative half) and weights, with the
// embedded 7-point Gauss weights on the odd Kronrod nodes.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error).is_eq()
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Option<Segment> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kronrod * h;
    let error = ((kronrod - gauss) * h).abs();
    (value.is_finite() && error.is_finite()).then_some(Segment { a, b, value, error })
}

/// Globally adaptive Gauss–Kronrod (7/15) on `[a, b]`. Stops once the summed
/// error estimate is below `max(abs_tol, rel_tol * |I|)`.
pub fn gauss_kronrod<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return gauss_kronrod(f, b, a, abs_tol, rel_tol).map(|v| -v);
    }
    let failure = |evals| RiskError::QuadratureFailure { tolerance: abs_tol.max(rel_tol), evaluations: evals };
    let first = kronrod15(&mut f, a, b).ok_or_else(|| failure(15))?;
    let mut total = first.value;
    let mut total_err = first.error;
    let mut heap = BinaryHeap::from([first]);
    let mut evals = 15;
    while total_err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= MAX_GK_INTERVALS {
            return Err(failure(evals));
        }
        let worst = heap.pop().expect("heap is never empty");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            // interval exhausted at machine resolution; keep its estimate
            heap.push(Segment { error: 0.0, ..worst });
            total_err -= worst.error;
            continue;
        }
        let left = kronrod15(&mut f, worst.a, m).ok_or_else(|| failure(evals))?;
        let right = kronrod15(&mut f, m, worst.b).ok_or_else(|| failure(evals))?;
        evals += 30;
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // resum to shed the drift of the running updates
    Ok(heap.iter().map(|s| s.value).sum())
}

/// Integrates over consecutive pieces `points[0]..points[1]..` with Gauss–Kronrod,
/// splitting the absolute tolerance evenly.
pub fn gauss_kronrod_pieces<F: FnMut(f64) -> f64>(mut f: F, points: &[f64], abs_tol: f64, rel_tol: f64) -> Result<f64> {
    let pieces = points.len().saturating_sub(1).max(1) as f64;
    points.windows(2).map(|w| gauss_kronrod(&mut f, w[0], w[1], abs_tol / pieces, rel_tol)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomials_and_transcendentals() {
        let v = adaptive_simpson(|x| x * x, 0.0, 1.0, 1e-12).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-14);
        let v = adaptive_simpson(f64::sin, 0.0, std::f64::consts::PI, 1e-10).unwrap();
        assert!((v - 2.0).abs() < 1e-10);
        let v = adaptive_simpson(|x| 1.0 / x, 2.0, 1.0, 1e-10).unwrap();
        assert!((v + std::f64::consts::LN_2).abs() < 1e-10);
    }

    #[test]
    fn simpson_reports_unreachable_tolerance() {
        let r = adaptive_simpson(|x| 1.0 / x, 0.0, 1.0, 1e-10);
        assert!(matches!(r, Err(RiskError::QuadratureFailure { .. })));
    }

    #[test]
    fn kronrod_rule_is_exact_to_degree_22_and_gauss_to_13() {
        for deg in 0..=22 {
            let mut f = |x: f64| x.powi(deg);
            let seg = kronrod15(&mut f, -1.0, 1.0).unwrap();
            let exact = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
            assert!((seg.value - exact).abs() < 1e-14, "kronrod degree {deg}");
            if deg <= 13 {
                assert!(seg.error < 1e-14, "gauss degree {deg}: {}", seg.error);
            }
        }
    }

    #[test]
    fn kronrod_adaptive() {
        let v = gauss_kronrod(|x: f64| (-x * x).exp(), -10.0, 10.0, 1e-13, 0.0).unwrap();
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        let v = gauss_kronrod(|x: f64| x.sqrt(), 0.0, 1.0, 1e-12, 0.0).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
        let v = gauss_kronrod_pieces(|x: f64| if x < 0.5 { 2.0 } else { 0.0 }, &[0.0, 0.5, 1.0], 1e-12, 0.0).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
    }
}
