//! Finite checks of the two ingredients behind consistency of the Kusuoka
//! plug-in: negligible mass near level zero (tightness) and stability under
//! grid refinement.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RiskError};
use crate::estimators::kusuoka_plugin_sample;
use crate::sample::{sort_values, Sample};
use crate::simplex::{t_map, Mixture, MixtureSet};
use crate::spectra::{canonical_weights, step_spectrum, Spectrum};

const CHECK_SLACK: f64 = 1e-12;

/// `-(1/alpha) int_0^alpha q_N`, the expected shortfall of the empirical law
/// at any level `alpha` in `(0, 1]`, on sorted values.
pub fn empirical_es(sorted: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(RiskError::AlphaOutOfRange(alpha));
    }
    let n = sorted.len();
    let nf = n as f64;
    let mut m = ((alpha * nf).floor() as usize).min(n);
    if m as f64 / nf > alpha {
        m -= 1;
    }
    let mut integral = sorted[..m].iter().sum::<f64>() / nf;
    if m < n {
        integral += (alpha - m as f64 / nf) * sorted[m];
    }
    Ok(-integral / alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessReport {
    pub delta: f64,
    /// Largest vertex mass on levels `k/n <= delta`.
    pub epsilon: f64,
    /// Largest step-spectrum height `n a_1` over the vertices.
    pub bound_c: f64,
    pub value: f64,
    pub censored_value: f64,
    pub difference: f64,
    /// `(C + 1) |x|_inf epsilon`.
    pub bound: f64,
    pub holds: bool,
}

/// Compares the Kusuoka plug-in with its censored version, where every
/// vertex's mass on levels `k/n <= delta` is moved to the first level above
/// `delta`. Each `dES` is bounded by `|x|_inf`, so the two values differ by
/// at most `2 |x|_inf epsilon <= (C + 1) |x|_inf epsilon`.
pub fn tightness_check(set: &MixtureSet, x: &Sample, delta: f64) -> Result<TightnessReport> {
    let n = set.dimension();
    if x.len() != n {
        return Err(RiskError::LengthMismatch { expected: n, actual: x.len() });
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(RiskError::DomainError { value: delta, domain: "[0, 1)" });
    }
    let cut = ((delta * n as f64).floor() as usize).min(n - 1);
    let mut epsilon: f64 = 0.0;
    let mut bound_c: f64 = 0.0;
    let mut censored = Vec::with_capacity(set.vertices().len());
    for mu in set.vertices() {
        let masses = mu.masses();
        let low: f64 = masses[..cut].iter().sum();
        epsilon = epsilon.max(low);
        let height: f64 = masses.iter().enumerate().map(|(k, m)| m / (k + 1) as f64).sum::<f64>() * n as f64;
        bound_c = bound_c.max(height);
        let mut moved = masses.to_vec();
        moved[..cut].iter_mut().for_each(|m| *m = 0.0);
        moved[cut] += low;
        censored.push(Mixture::new(moved)?);
    }
    let value = kusuoka_plugin_sample(set, x)?.value;
    let censored_value = kusuoka_plugin_sample(&MixtureSet::new(censored)?, x)?.value;
    let difference = (value - censored_value).abs();
    let bound = (bound_c + 1.0) * x.sup_norm() * epsilon;
    let holds = difference <= bound + CHECK_SLACK * (1.0 + x.sup_norm());
    Ok(TightnessReport { delta, epsilon, bound_c, value, censored_value, difference, bound, holds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub n: usize,
    pub value_n: f64,
    pub value_2n: f64,
    pub change: f64,
    /// `sup_t |Phi_n(t) - Phi_2n(t)|` for the two step spectra.
    pub primitive_gap: f64,
    /// `max x - min x`.
    pub range: f64,
    /// `primitive_gap * range`.
    pub bound: f64,
    pub holds: bool,
}

/// Plug-in value of the canonical mixture on the level grid `k/n`, with each
/// `dES` level evaluated on the fixed sample's empirical law, compared with
/// the grid `k/2n`. Integrating by parts,
/// `|V_n - V_2n| = |int (Phi_n - Phi_2n) dq_N| <= gap * (max x - min x)`.
pub fn refinement_check(phi: &Spectrum, x: &Sample, n: usize) -> Result<RefinementReport> {
    if n == 0 {
        return Err(RiskError::InvalidConfig("n must be positive".into()));
    }
    let mut sorted = x.values().to_vec();
    sort_values(&mut sorted);
    let value = |grid: usize| -> Result<f64> {
        let mu = t_map(&canonical_weights(phi, grid)?)?;
        mu.masses()
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(k, &m)| Ok(m * empirical_es(&sorted, (k + 1) as f64 / grid as f64)?))
            .sum()
    };
    let value_n = value(n)?;
    let value_2n = value(2 * n)?;
    let coarse = step_spectrum(&canonical_weights(phi, n)?)?;
    let fine = step_spectrum(&canonical_weights(phi, 2 * n)?)?;
    let mut gap: f64 = 0.0;
    for j in 0..=2 * n {
        let t = j as f64 / (2 * n) as f64;
        gap = gap.max((coarse.primitive(t)? - fine.primitive(t)?).abs());
    }
    let range = sorted[sorted.len() - 1] - sorted[0];
    let change = (value_n - value_2n).abs();
    let bound = gap * range;
    let holds = change <= bound + CHECK_SLACK * (1.0 + x.sup_norm());
    Ok(RefinementReport { n, value_n, value_2n, change, primitive_gap: gap, range, bound, holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::discrete_es;
    use crate::population::ReferenceDistribution;
    use crate::rng::RngSpec;
    use rand::Rng;

    #[test]
    fn empirical_es_matches_discrete_es_on_the_sample_grid() {
        let x = Sample::new(vec![3.0, -1.0, 2.0, 0.5, -4.0]).unwrap();
        let mut sorted = x.values().to_vec();
        sort_values(&mut sorted);
        for k in 1..=5 {
            let a = empirical_es(&sorted, k as f64 / 5.0).unwrap();
            assert!((a - discrete_es(&x, k).unwrap()).abs() < 1e-15);
        }
        // between grid points: alpha = 0.3 on n = 5 covers x_1 and half of x_2
        let v = empirical_es(&sorted, 0.3).unwrap();
        assert!((v + (-4.0 * 0.2 - 0.1) / 0.3).abs() < 1e-15);
        assert!(empirical_es(&sorted, 0.0).is_err());
    }

    #[test]
    fn refinement_value_is_minus_integral_of_quantile_times_step_spectrum() {
        // oracle: integrate q_N * phi_n over the merged breakpoints directly
        let x =
            Sample::new(ReferenceDistribution::standard_normal().draw_n(&mut RngSpec::new(1, 1).rng(), 13)).unwrap();
        let mut sorted = x.values().to_vec();
        sort_values(&mut sorted);
        let phi = Spectrum::exponential(3.0).unwrap();
        let n = 6;
        let a = canonical_weights(&phi, n).unwrap();
        let mut cuts: Vec<f64> =
            (0..=13).map(|i| i as f64 / 13.0).chain((0..=n).map(|k| k as f64 / n as f64)).collect();
        cuts.sort_by(f64::total_cmp);
        let mut oracle = 0.0;
        for w in cuts.windows(2) {
            if w[1] <= w[0] {
                continue;
            }
            let mid = 0.5 * (w[0] + w[1]);
            let q = sorted[((mid * 13.0).ceil() as usize).clamp(1, 13) - 1];
            let level = n as f64 * a.weights()[((mid * n as f64).ceil() as usize).clamp(1, n) - 1];
            oracle -= q * level * (w[1] - w[0]);
        }
        let r = refinement_check(&phi, &x, n).unwrap();
        assert!((r.value_n - oracle).abs() < 1e-12, "{} vs {oracle}", r.value_n);
    }

    #[test]
    fn refinement_bound_holds() {
        let dist = ReferenceDistribution::exponential(1.0).unwrap();
        let x = Sample::new(dist.draw_n(&mut RngSpec::new(2, 0).rng(), 200)).unwrap();
        let spectra = [
            Spectrum::uniform(),
            Spectrum::linear(2.0).unwrap(),
            Spectrum::exponential(5.0).unwrap(),
            Spectrum::expected_shortfall(0.07).unwrap(),
        ];
        for phi in &spectra {
            for n in [1, 3, 10, 64, 250] {
                let r = refinement_check(phi, &x, n).unwrap();
                assert!(r.holds, "{} n={n}: {r:?}", phi.label());
            }
        }
        // uniform spectrum: every grid gives the sample mean
        let r = refinement_check(&Spectrum::uniform(), &x, 7).unwrap();
        assert!(r.change < 1e-12 && r.primitive_gap < 1e-15);
    }

    #[test]
    fn tightness_bound_holds_on_random_vertex_sets() {
        let mut rng = RngSpec::new(3, 0).rng();
        for _ in 0..200 {
            let n = rng.random_range(2..40usize);
            let vertices: Vec<Mixture> = (0..rng.random_range(1..5usize))
                .map(|_| {
                    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(3)).collect();
                    let s: f64 = raw.iter().sum();
                    Mixture::new(raw.iter().map(|v| v / s).collect()).unwrap()
                })
                .collect();
            let set = MixtureSet::new(vertices).unwrap();
            let x = Sample::new((0..n).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
            let delta = rng.random_range(0.0..0.5);
            let r = tightness_check(&set, &x, delta).unwrap();
            assert!(r.holds, "{r:?}");
            assert!(r.bound_c >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn tightness_without_low_mass_changes_nothing() {
        let set = MixtureSet::new(vec![Mixture::new(vec![0.0, 0.0, 0.5, 0.5]).unwrap()]).unwrap();
        let x = Sample::new(vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let r = tightness_check(&set, &x, 0.5).unwrap();
        assert_eq!(r.epsilon, 0.0);
        assert_eq!(r.difference, 0.0);
    }
}
