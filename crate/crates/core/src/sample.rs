//! P&L samples and their order statistics.
//!
//! Values follow the profit-positive convention: losses are negative numbers,
//! so the lower tail of a sample is where the risk lives.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RiskError};

/// A non-empty sequence of finite P&L values.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Sample {
    values: Vec<f64>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(RiskError::EmptySample);
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(RiskError::NonFiniteInput { index, value });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Sup norm, `max |x_i|`.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn sorted(&self) -> SortedSample {
        sort_sample(self)
    }
}

impl<'de> Deserialize<'de> for Sample {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(deserializer)?;
        Sample::new(values).map_err(serde::de::Error::custom)
    }
}

impl TryFrom<Vec<f64>> for Sample {
    type Error = RiskError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Sample::new(values)
    }
}

/// Order statistics `x_{1:n} <= ... <= x_{n:n}` together with the permutation
/// that produced them: `values[j] == original[permutation[j]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedSample {
    values: Vec<f64>,
    permutation: Vec<usize>,
}

impl SortedSample {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The `i`-th order statistic with 1-based `i`.
    pub fn order_statistic(&self, i: usize) -> f64 {
        self.values[i - 1]
    }

    /// Lower empirical quantile `q_n(alpha) = x_{ceil(n alpha):n}`.
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        empirical_quantile(self, alpha)
    }

    /// Empirical CDF `F_n(t) = #{i : x_i <= t} / n`.
    pub fn ecdf(&self, t: f64) -> f64 {
        self.values.partition_point(|&v| v <= t) as f64 / self.values.len() as f64
    }
}

/// Stable ascending sort. Equal values keep their input order.
pub fn sort_sample(x: &Sample) -> SortedSample {
    let mut permutation: Vec<usize> = (0..x.len()).collect();
    // sort_by is stable; values are finite so total_cmp agrees with <=
    permutation.sort_by(|&i, &j| x.values[i].total_cmp(&x.values[j]));
    let values = permutation.iter().map(|&i| x.values[i]).collect();
    SortedSample { values, permutation }
}

/// Sorts raw values without recording provenance. Used on hot Monte Carlo paths.
pub(crate) fn sort_values(values: &mut [f64]) {
    values.sort_unstable_by(f64::total_cmp);
}

/// 1-based index `ceil(n alpha)` clamped into `1..=n`.
pub(crate) fn quantile_index(n: usize, alpha: f64) -> usize {
    let raw = (n as f64 * alpha).ceil();
    let mut idx = raw as usize;
    // n*alpha may land one ulp above an integer; pull back if the previous cell already covers alpha
    if idx > 1 && ((idx - 1) as f64) / n as f64 >= alpha {
        idx -= 1;
    }
    idx.clamp(1, n)
}

pub fn empirical_quantile(s: &SortedSample, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(RiskError::AlphaOutOfRange(alpha));
    }
    Ok(s.values[quantile_index(s.len(), alpha) - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(v: &[f64]) -> Sample {
        Sample::new(v.to_vec()).unwrap()
    }

    #[test]
    fn sorts_examples() {
        assert_eq!(sample(&[3.0, -1.0, 2.0]).sorted().values(), &[-1.0, 2.0, 3.0]);
        assert_eq!(sample(&[5.0]).sorted().values(), &[5.0]);
        let s = sample(&[2.0, 2.0, 1.0]).sorted();
        assert_eq!(s.values(), &[1.0, 2.0, 2.0]);
        // stable: the two 2.0 keep input order 0 then 1
        assert_eq!(s.permutation(), &[2, 0, 1]);
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(matches!(Sample::new(vec![1.0, f64::NAN]), Err(RiskError::NonFiniteInput { index: 1, .. })));
        assert!(matches!(Sample::new(vec![1.0, f64::INFINITY]), Err(RiskError::NonFiniteInput { index: 1, .. })));
        assert!(matches!(Sample::new(vec![f64::NEG_INFINITY]), Err(RiskError::NonFiniteInput { index: 0, .. })));
        assert_eq!(Sample::new(vec![]), Err(RiskError::EmptySample));
    }

    #[test]
    fn quantile_examples() {
        let s = sample(&[-1.0, 2.0, 3.0]).sorted();
        assert_eq!(s.quantile(0.5).unwrap(), 2.0);
        assert_eq!(s.quantile(1.0).unwrap(), 3.0);
        assert_eq!(s.quantile(1.0 / 3.0).unwrap(), -1.0);
        assert_eq!(s.quantile(0.0), Err(RiskError::AlphaOutOfRange(0.0)));
        assert!(s.quantile(1.0 + 1e-12).is_err());
        assert!(s.quantile(-0.2).is_err());
        assert!(s.quantile(f64::NAN).is_err());
    }

    #[test]
    fn quantile_index_on_cell_boundaries() {
        // 10 * 0.3 = 3.0000000000000004 in floating point
        assert_eq!(quantile_index(10, 0.3), 3);
        for n in 1..200 {
            for i in 1..=n {
                assert_eq!(quantile_index(n, i as f64 / n as f64), i, "n={n} i={i}");
            }
        }
    }

    #[test]
    fn ecdf_counts_ties() {
        let s = sample(&[1.0, 2.0, 2.0, 4.0]).sorted();
        assert_eq!(s.ecdf(0.5), 0.0);
        assert_eq!(s.ecdf(2.0), 0.75);
        assert_eq!(s.ecdf(4.0), 1.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn sort_is_idempotent_and_preserves_multiset(v in prop::collection::vec(-1e6f64..1e6, 1..60)) {
                let x = sample(&v);
                let s = x.sorted();
                prop_assert!(s.values().windows(2).all(|w| w[0] <= w[1]));
                let again = sample(s.values()).sorted();
                prop_assert_eq!(again.values(), s.values());
                let mut a = v.clone();
                a.sort_by(f64::total_cmp);
                prop_assert_eq!(a.as_slice(), s.values());
                for (j, &p) in s.permutation().iter().enumerate() {
                    prop_assert_eq!(v[p], s.values()[j]);
                }
            }

            #[test]
            fn quantile_is_non_decreasing(v in prop::collection::vec(-1e3f64..1e3, 1..40),
                                          a in 1e-9f64..1.0, b in 1e-9f64..1.0) {
                let s = sample(&v).sorted();
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(s.quantile(lo).unwrap() <= s.quantile(hi).unwrap());
            }
        }
    }
}
