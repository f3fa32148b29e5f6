//! Finite-sample risk functionals: discrete expected shortfall, L-estimators,
//! discrete-Kusuoka mixtures, robust suprema over representing sets, and
//! recovery of the weight vector behind a comonotonic law-invariant estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RiskError};
use crate::sample::{sort_values, Sample};
use crate::simplex::{t_inverse, Mixture, MixtureSet, RepresentingSet, WeightVector};
use crate::spectra::{canonical_weights, Spectrum};

/// Slack separating floating-point noise from genuine monotonicity or
/// normalisation failures during weight recovery.
pub const RECOVERY_SLACK: f64 = 1e-9;

/// `dES_{k/n}(x) = -(1/k) sum_{i<=k} x_{i:n}`.
pub fn discrete_es(x: &Sample, k: usize) -> Result<f64> {
    let n = x.len();
    if k == 0 || k > n {
        return Err(RiskError::KOutOfRange { k, n });
    }
    let mut v = x.values().to_vec();
    sort_values(&mut v);
    Ok(-v[..k].iter().sum::<f64>() / k as f64)
}

/// All levels at once: entry `k-1` is `dES_{k/n}(x)`.
pub fn discrete_es_curve(x: &Sample) -> Vec<f64> {
    let mut v = x.values().to_vec();
    sort_values(&mut v);
    es_curve_sorted(&v)
}

pub(crate) fn es_curve_sorted(sorted: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &xi)| {
            acc += xi;
            -acc / (i + 1) as f64
        })
        .collect()
}

/// `sum_i a_i (-y_i)` evaluated left to right.
pub(crate) fn dot_neg(a: &[f64], y: &[f64]) -> f64 {
    a.iter().zip(y).map(|(w, v)| w * -v).sum()
}

/// `sum a_i (-x_{i:n})` when `sorted_domain`, otherwise `sum a_i (-x_i)`.
pub fn l_estimate(a: &WeightVector, x: &Sample, sorted_domain: bool) -> Result<f64> {
    if a.len() != x.len() {
        return Err(RiskError::LengthMismatch { expected: a.len(), actual: x.len() });
    }
    if sorted_domain {
        let mut v = x.values().to_vec();
        sort_values(&mut v);
        Ok(dot_neg(a.weights(), &v))
    } else {
        Ok(dot_neg(a.weights(), x.values()))
    }
}

/// L-estimate on an already sorted slice. Hot path for the Monte Carlo drivers.
pub(crate) fn l_estimate_sorted(a: &[f64], sorted: &[f64]) -> f64 {
    dot_neg(a, sorted)
}

/// Canonical spectral plug-in `-sum a_{i,n}(phi) x_{i:n}`.
pub fn spectral_estimate(phi: &Spectrum, x: &Sample) -> Result<f64> {
    l_estimate(&canonical_weights(phi, x.len())?, x, true)
}

/// `sum_k mu_k dES_{k/n}(x)`.
pub fn mixture_estimate(mu: &Mixture, x: &Sample) -> Result<f64> {
    if mu.len() != x.len() {
        return Err(RiskError::LengthMismatch { expected: mu.len(), actual: x.len() });
    }
    let curve = discrete_es_curve(x);
    Ok(mu.masses().iter().zip(&curve).map(|(m, e)| m * e).sum())
}

/// Value and first maximising vertex of a supremum over vertices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Supremum {
    pub value: f64,
    pub argmax: usize,
}

fn first_max(values: impl Iterator<Item = f64>) -> Supremum {
    let mut best = Supremum { value: f64::NEG_INFINITY, argmax: 0 };
    for (i, v) in values.enumerate() {
        // strict comparison keeps the lowest index on ties
        if v > best.value {
            best = Supremum { value: v, argmax: i };
        }
    }
    best
}

/// `max_{a in M} <a, -x>` (or `<a, -s(x)>` for a sorted-domain set).
pub fn robust_sup(set: &RepresentingSet, x: &Sample) -> Result<Supremum> {
    if set.dimension() != x.len() {
        return Err(RiskError::LengthMismatch { expected: set.dimension(), actual: x.len() });
    }
    let y = if set.sorted_domain() {
        let mut v = x.values().to_vec();
        sort_values(&mut v);
        v
    } else {
        x.values().to_vec()
    };
    Ok(first_max(set.vertices().iter().map(|a| dot_neg(a.weights(), &y))))
}

/// `max_{nu in M} sum_i nu_i es_values_i`, the Kusuoka-type plug-in with the
/// per-level ES estimates supplied by the caller.
pub fn kusuoka_plugin(set: &MixtureSet, es_values: &[f64]) -> Result<Supremum> {
    if set.dimension() != es_values.len() {
        return Err(RiskError::LengthMismatch { expected: set.dimension(), actual: es_values.len() });
    }
    if let Some(index) = es_values.iter().position(|v| !v.is_finite()) {
        return Err(RiskError::NonFiniteInput { index, value: es_values[index] });
    }
    Ok(first_max(set.vertices().iter().map(|nu| nu.masses().iter().zip(es_values).map(|(m, e)| m * e).sum())))
}

/// Kusuoka plug-in with the default per-level estimator `dES_{i/n}`.
pub fn kusuoka_plugin_sample(set: &MixtureSet, x: &Sample) -> Result<Supremum> {
    kusuoka_plugin(set, &discrete_es_curve(x))
}

/// Probe vector with `k` entries equal to -1 followed by zeros.
fn probe(n: usize, k: usize) -> Result<Sample> {
    let mut v = vec![0.0; n];
    v[..k].iter_mut().for_each(|x| *x = -1.0);
    Sample::new(v)
}

/// Recovers `a` from a comonotonic law-invariant estimator via the probes
/// `x^(k) = (-1, ..., -1, 0, ..., 0)`: `a_k = rho(x^(k)) - rho(x^(k-1))`.
///
/// Oracle calls are made sequentially in probe order `k = 0, 1, ..., n`.
pub fn recover_comonotonic_weights<F>(mut oracle: F, n: usize) -> Result<WeightVector>
where
    F: FnMut(&Sample) -> Result<f64>,
{
    if n == 0 {
        return Err(RiskError::EmptySample);
    }
    let mut values = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let v = oracle(&probe(n, k)?)?;
        if !v.is_finite() {
            return Err(RiskError::OracleFailure(format!("non-finite value {v} at probe {k}")));
        }
        values.push(v);
    }
    let mut a: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    for i in 0..n.saturating_sub(1) {
        if a[i] < a[i + 1] - RECOVERY_SLACK {
            return Err(RiskError::NotMonotoneRecovered { index: i, lower: a[i], upper: a[i + 1] });
        }
    }
    let total: f64 = a.iter().sum();
    if (total - 1.0).abs() > RECOVERY_SLACK {
        return Err(RiskError::NotNormalised(total));
    }
    if a.windows(2).any(|w| w[0] < w[1]) || a.iter().any(|&w| w < 0.0) {
        // float noise within the slack: clamp to the running minimum, then renormalise
        let mut prev = f64::INFINITY;
        for w in a.iter_mut() {
            *w = w.min(prev).max(0.0);
            prev = *w;
        }
    }
    let total: f64 = a.iter().sum();
    if total != 1.0 {
        a.iter_mut().for_each(|w| *w /= total);
    }
    WeightVector::monotone(a)
}

/// Weight vector of the comonotonic estimator represented by `mu`.
pub fn mixture_weights(mu: &Mixture) -> WeightVector {
    t_inverse(mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::t_map;

    fn sample(v: &[f64]) -> Sample {
        Sample::new(v.to_vec()).unwrap()
    }

    fn x3() -> Sample {
        sample(&[3.0, -1.0, 2.0])
    }

    #[test]
    fn discrete_es_examples() {
        assert_eq!(discrete_es(&x3(), 1).unwrap(), 1.0);
        assert_eq!(discrete_es(&x3(), 2).unwrap(), -0.5);
        assert!((discrete_es(&x3(), 3).unwrap() + 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(discrete_es(&x3(), 0), Err(RiskError::KOutOfRange { k: 0, n: 3 }));
        assert_eq!(discrete_es(&x3(), 4), Err(RiskError::KOutOfRange { k: 4, n: 3 }));
        let curve = discrete_es_curve(&x3());
        assert_eq!(&curve[..2], &[1.0, -0.5]);
    }

    #[test]
    fn l_estimate_examples() {
        let a = WeightVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(l_estimate(&a, &x3(), true).unwrap(), 1.0);
        let a = WeightVector::new(vec![0.5, 1.0 / 3.0, 1.0 / 6.0]).unwrap();
        assert!((l_estimate(&a, &x3(), true).unwrap() + 2.0 / 3.0).abs() < 1e-15);
        let a = WeightVector::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(l_estimate(&a, &sample(&[1.0, -2.0]), false).unwrap(), 0.5);
        assert_eq!(l_estimate(&a, &x3(), true), Err(RiskError::LengthMismatch { expected: 2, actual: 3 }));
    }

    #[test]
    fn mixture_estimate_examples() {
        let mu = Mixture::new(vec![1.0 / 6.0, 1.0 / 3.0, 0.5]).unwrap();
        assert!((mixture_estimate(&mu, &x3()).unwrap() + 2.0 / 3.0).abs() < 1e-15);
        let x = sample(&[0.4, -2.0, 1.1, 7.0]);
        let mean = x.values().iter().sum::<f64>() / 4.0;
        assert!((mixture_estimate(&Mixture::level(4, 4).unwrap(), &x).unwrap() + mean).abs() < 1e-15);
        assert_eq!(mixture_estimate(&Mixture::level(4, 1).unwrap(), &x).unwrap(), 2.0);
        assert!(mixture_estimate(&Mixture::level(3, 1).unwrap(), &x).is_err());
    }

    #[test]
    fn robust_sup_examples() {
        let set = RepresentingSet::new(
            vec![WeightVector::new(vec![1.0, 0.0]).unwrap(), WeightVector::new(vec![0.0, 1.0]).unwrap()],
            false,
        )
        .unwrap();
        assert_eq!(robust_sup(&set, &sample(&[1.0, -2.0])).unwrap(), Supremum { value: 2.0, argmax: 1 });

        let a = WeightVector::new(vec![0.2, 0.5, 0.3]).unwrap();
        let single = RepresentingSet::new(vec![a.clone()], false).unwrap();
        assert_eq!(robust_sup(&single, &x3()).unwrap().value, l_estimate(&a, &x3(), false).unwrap());

        let sorted = RepresentingSet::new(vec![WeightVector::new(vec![0.7, 0.3]).unwrap()], true).unwrap();
        let s = robust_sup(&sorted, &sample(&[2.0, -1.0])).unwrap();
        assert!((s.value - 0.1).abs() < 1e-15);
        assert_eq!(s.argmax, 0);
        assert!(robust_sup(&sorted, &x3()).is_err());
    }

    #[test]
    fn robust_sup_ties_pick_lowest_index() {
        let v = WeightVector::new(vec![0.5, 0.5]).unwrap();
        let set = RepresentingSet::new(vec![v.clone(), v], false).unwrap();
        assert_eq!(robust_sup(&set, &sample(&[1.0, 2.0])).unwrap().argmax, 0);
    }

    #[test]
    fn kusuoka_plugin_examples() {
        let set = MixtureSet::new((1..=3).map(|k| Mixture::level(3, k).unwrap()).collect()).unwrap();
        assert_eq!(kusuoka_plugin_sample(&set, &x3()).unwrap(), Supremum { value: 1.0, argmax: 0 });
        let mu = Mixture::new(vec![0.2, 0.3, 0.5]).unwrap();
        let single = MixtureSet::new(vec![mu.clone()]).unwrap();
        assert!(
            (kusuoka_plugin_sample(&single, &x3()).unwrap().value - mixture_estimate(&mu, &x3()).unwrap()).abs()
                < 1e-15
        );
        let mean_only = MixtureSet::new(vec![Mixture::level(3, 3).unwrap()]).unwrap();
        assert!((kusuoka_plugin_sample(&mean_only, &x3()).unwrap().value + 4.0 / 3.0).abs() < 1e-15);
        assert!(kusuoka_plugin(&set, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn recovery_examples() {
        let des = |k: usize| move |x: &Sample| discrete_es(x, k);
        let a = recover_comonotonic_weights(des(2), 3).unwrap();
        assert!((a.weights()[0] - 0.5).abs() < 1e-15 && (a.weights()[1] - 0.5).abs() < 1e-15);
        assert_eq!(a.weights()[2], 0.0);
        let a = recover_comonotonic_weights(des(4), 4).unwrap();
        assert!(a.weights().iter().all(|&w| (w - 0.25).abs() < 1e-15));
        let a = recover_comonotonic_weights(des(1), 3).unwrap();
        assert_eq!(a.weights(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn recovery_rejects_non_comonotonic_oracles() {
        // -max is not monotone-weighted: recovered weights (0, 0, 1) increase
        let neg_max = |x: &Sample| Ok(-x.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        assert!(matches!(recover_comonotonic_weights(neg_max, 3), Err(RiskError::NotMonotoneRecovered { .. })));
        let doubled = |x: &Sample| discrete_es(x, 1).map(|v| 2.0 * v);
        assert!(matches!(recover_comonotonic_weights(doubled, 3), Err(RiskError::NotNormalised(_))));
        let nan = |_: &Sample| Ok(f64::NAN);
        assert!(matches!(recover_comonotonic_weights(nan, 2), Err(RiskError::OracleFailure(_))));
    }

    #[test]
    fn recovery_clamps_float_noise() {
        let base = WeightVector::uniform(3).unwrap();
        let mut calls = 0;
        let noisy = |x: &Sample| {
            calls += 1;
            l_estimate(&base, x, true).map(|v| v + if calls == 2 { 1e-11 } else { 0.0 })
        };
        let a = recover_comonotonic_weights(noisy, 3).unwrap();
        assert!(a.is_monotone());
        assert!((a.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn spectral_estimate_matches_manual_weights() {
        let x = sample(&[0.3, -1.2, 2.5, 0.0]);
        let phi = Spectrum::linear(2.0).unwrap();
        let manual = canonical_weights(&phi, 4).unwrap();
        assert_eq!(spectral_estimate(&phi, &x).unwrap(), l_estimate(&manual, &x, true).unwrap());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn monotone_simplex(n: usize) -> impl Strategy<Value = WeightVector> {
            prop::collection::vec(0.0f64..1.0, n).prop_map(|mut v| {
                v.sort_by(|a, b| b.total_cmp(a));
                v[0] += 1e-3;
                let s: f64 = v.iter().sum();
                WeightVector::monotone(v.into_iter().map(|x| x / s).collect()).unwrap()
            })
        }

        fn case() -> impl Strategy<Value = (WeightVector, Sample)> {
            (1usize..40).prop_flat_map(|n| {
                (monotone_simplex(n), prop::collection::vec(-100.0f64..100.0, n).prop_map(|v| Sample::new(v).unwrap()))
            })
        }

        proptest! {
            #[test]
            fn es_decomposition((a, x) in case()) {
                let lhs = l_estimate(&a, &x, true).unwrap();
                let rhs = mixture_estimate(&t_map(&a).unwrap(), &x).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + x.sup_norm()));
            }

            #[test]
            fn recovery_is_identity((a, _x) in case()) {
                let back = recover_comonotonic_weights(|s: &Sample| l_estimate(&a, s, true), a.len()).unwrap();
                for (u, v) in back.weights().iter().zip(a.weights()) {
                    prop_assert!((u - v).abs() <= 1e-12);
                }
            }

            #[test]
            fn adding_hull_points_keeps_supremum((a, x) in case(), lambda in 0.0f64..1.0) {
                let n = a.len();
                let b = WeightVector::discrete_es(n, 1.max(n / 2)).unwrap();
                let mix: Vec<f64> = a.weights().iter().zip(b.weights()).map(|(p, q)| lambda * p + (1.0 - lambda) * q).collect();
                let base = RepresentingSet::new(vec![a.clone(), b.clone()], true).unwrap();
                let grown = RepresentingSet::new(vec![a, b, WeightVector::monotone(mix).unwrap()], true).unwrap();
                let v0 = robust_sup(&base, &x).unwrap().value;
                let v1 = robust_sup(&grown, &x).unwrap().value;
                prop_assert!((v1 - v0).abs() <= 1e-12 * (1.0 + x.sup_norm()));
            }
        }
    }
}
