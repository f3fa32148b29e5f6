//! Points of the probability simplex and the linear bijection between
//! non-increasing L-estimator weights and mixtures of discrete expected shortfalls.
//!
//! For `a` non-increasing with `a_{n+1} := 0` the map is `mu_k = k (a_k - a_{k+1})`,
//! and its inverse is `a_i = sum_{k >= i} mu_k / k`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, RiskError};

/// Tolerance on `|sum - 1|` accepted before renormalising.
pub const SIMPLEX_SUM_TOL: f64 = 1e-12;
/// Slack allowed below zero per entry, and for monotonicity checks.
pub const ENTRY_SLACK: f64 = 1e-15;

fn validate_simplex(mut values: Vec<f64>) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(RiskError::NotOnSimplex("empty vector".into()));
    }
    for (i, v) in values.iter_mut().enumerate() {
        if !v.is_finite() {
            return Err(RiskError::NonFiniteInput { index: i, value: *v });
        }
        if *v < -ENTRY_SLACK {
            return Err(RiskError::NotOnSimplex(format!("entry {i} = {v} is negative")));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
        return Err(RiskError::NotOnSimplex(format!("entries sum to {sum}")));
    }
    if sum != 1.0 {
        values.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(values)
}

fn first_increase(values: &[f64]) -> Option<usize> {
    values.windows(2).position(|w| w[0] < w[1] - ENTRY_SLACK)
}

/// A point of the simplex, optionally certified non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    weights: Vec<f64>,
    monotone: bool,
}

impl WeightVector {
    /// Validates simplex membership; the monotone flag is set when the
    /// weights happen to be non-increasing.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let mut weights = validate_simplex(weights)?;
        let monotone = first_increase(&weights).is_none();
        if monotone && weights.windows(2).any(|w| w[0] < w[1]) {
            // increases below the slack are rounding noise; flatten them so
            // the certified vector is exactly non-increasing
            for i in 1..weights.len() {
                weights[i] = weights[i].min(weights[i - 1]);
            }
            let sum: f64 = weights.iter().sum();
            if sum != 1.0 {
                weights.iter_mut().for_each(|v| *v /= sum);
            }
        }
        Ok(Self { weights, monotone })
    }

    /// Like [`WeightVector::new`] but fails unless the weights are non-increasing.
    pub fn monotone(weights: Vec<f64>) -> Result<Self> {
        let w = Self::new(weights)?;
        match first_increase(&w.weights) {
            Some(index) => Err(RiskError::NotMonotone { index }),
            None => Ok(w),
        }
    }

    /// Weight vector of `dES_{k/n}`: `1/k` repeated `k` times, then zeros.
    pub fn discrete_es(n: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(RiskError::KOutOfRange { k, n });
        }
        let mut w = vec![0.0; n];
        w[..k].iter_mut().for_each(|v| *v = 1.0 / k as f64);
        // exact by construction; renormalising would perturb 1/k by an ulp
        Ok(Self { weights: w, monotone: true })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::discrete_es(n, n)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }
}

impl Serialize for WeightVector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.weights.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for WeightVector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let w = Vec::<f64>::deserialize(deserializer)?;
        WeightVector::new(w).map_err(serde::de::Error::custom)
    }
}

/// Mixing masses over the discrete-ES levels `k/n`, `k = 1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    masses: Vec<f64>,
}

impl Mixture {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        Ok(Self { masses: validate_simplex(masses)? })
    }

    /// Point mass on level `k/n`.
    pub fn level(n: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(RiskError::KOutOfRange { k, n });
        }
        let mut m = vec![0.0; n];
        m[k - 1] = 1.0;
        Self::new(m)
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }
}

impl Serialize for Mixture {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.masses.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Mixture {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let m = Vec::<f64>::deserialize(deserializer)?;
        Mixture::new(m).map_err(serde::de::Error::custom)
    }
}

/// `a -> mu` with `mu_k = k (a_k - a_{k+1})`, `a_{n+1} = 0`.
pub fn t_map(a: &WeightVector) -> Result<Mixture> {
    if !a.is_monotone() {
        let index = first_increase(a.weights()).unwrap_or(0);
        return Err(RiskError::NotMonotone { index });
    }
    let w = a.weights();
    let n = w.len();
    let masses = (0..n)
        .map(|i| {
            let next = if i + 1 < n { w[i + 1] } else { 0.0 };
            // certified inputs may dip by ENTRY_SLACK; that noise is not a negative mass
            ((i + 1) as f64 * (w[i] - next)).max(0.0)
        })
        .collect();
    Mixture::new(masses)
}

/// `mu -> a` with `a_i = sum_{k >= i} mu_k / k`.
pub fn t_inverse(mu: &Mixture) -> WeightVector {
    let m = mu.masses();
    let mut weights = vec![0.0; m.len()];
    let mut acc = 0.0;
    for k in (0..m.len()).rev() {
        acc += m[k] / (k + 1) as f64;
        weights[k] = acc;
    }
    let sum: f64 = weights.iter().sum();
    if sum != 1.0 {
        weights.iter_mut().for_each(|v| *v /= sum);
    }
    WeightVector { weights, monotone: true }
}

/// Finite vertex list of a polyhedral representing set. The supremum of a
/// linear functional over the convex hull equals the maximum over vertices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepresentingSet {
    sorted_domain: bool,
    vertices: Vec<WeightVector>,
}

impl RepresentingSet {
    pub fn new(vertices: Vec<WeightVector>, sorted_domain: bool) -> Result<Self> {
        let first = vertices.first().ok_or(RiskError::EmptySet)?;
        let n = first.len();
        for v in &vertices {
            if v.len() != n {
                return Err(RiskError::LengthMismatch { expected: n, actual: v.len() });
            }
            if sorted_domain && !v.is_monotone() {
                let index = first_increase(v.weights()).unwrap_or(0);
                return Err(RiskError::NotMonotone { index });
            }
        }
        Ok(Self { sorted_domain, vertices })
    }

    pub fn vertices(&self) -> &[WeightVector] {
        &self.vertices
    }

    pub fn sorted_domain(&self) -> bool {
        self.sorted_domain
    }

    /// Common vertex length.
    pub fn dimension(&self) -> usize {
        self.vertices[0].len()
    }
}

impl<'de> Deserialize<'de> for RepresentingSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            #[serde(default)]
            schema: Option<String>,
            sorted_domain: bool,
            vertices: Vec<WeightVector>,
        }
        let raw = Raw::deserialize(deserializer)?;
        crate::report::check_schema(raw.schema.as_deref()).map_err(serde::de::Error::custom)?;
        RepresentingSet::new(raw.vertices, raw.sorted_domain).map_err(serde::de::Error::custom)
    }
}

/// Finite vertex list of mixtures, the discrete Kusuoka representing set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureSet {
    vertices: Vec<Mixture>,
}

impl MixtureSet {
    pub fn new(vertices: Vec<Mixture>) -> Result<Self> {
        let first = vertices.first().ok_or(RiskError::EmptySet)?;
        let n = first.len();
        if let Some(v) = vertices.iter().find(|v| v.len() != n) {
            return Err(RiskError::LengthMismatch { expected: n, actual: v.len() });
        }
        Ok(Self { vertices })
    }

    /// Image of a sorted-domain representing set under the T-map.
    pub fn from_representing_set(set: &RepresentingSet) -> Result<Self> {
        if !set.sorted_domain() {
            return Err(RiskError::InvalidConfig("only sorted-domain representing sets have a mixture image".into()));
        }
        Self::new(set.vertices().iter().map(t_map).collect::<Result<_>>()?)
    }

    pub fn vertices(&self) -> &[Mixture] {
        &self.vertices
    }

    pub fn dimension(&self) -> usize {
        self.vertices[0].len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn t_map_examples() {
        let a = WeightVector::monotone(vec![0.5, 1.0 / 3.0, 1.0 / 6.0]).unwrap();
        assert!(close(t_map(&a).unwrap().masses(), &[1.0 / 6.0, 1.0 / 3.0, 0.5], 1e-15));
        let a = WeightVector::monotone(vec![1.0 / 3.0; 3]).unwrap();
        assert!(close(t_map(&a).unwrap().masses(), &[0.0, 0.0, 1.0], 1e-15));
        let a = WeightVector::monotone(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(t_map(&a).unwrap().masses(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn t_map_requires_monotone() {
        let a = WeightVector::new(vec![0.2, 0.8]).unwrap();
        assert!(!a.is_monotone());
        assert_eq!(t_map(&a), Err(RiskError::NotMonotone { index: 0 }));
        assert_eq!(WeightVector::monotone(vec![0.2, 0.8]), Err(RiskError::NotMonotone { index: 0 }));
    }

    #[test]
    fn t_inverse_examples() {
        let mu = Mixture::new(vec![1.0 / 6.0, 1.0 / 3.0, 0.5]).unwrap();
        let a = t_inverse(&mu);
        assert!(a.is_monotone());
        assert!(close(a.weights(), &[0.5, 1.0 / 3.0, 1.0 / 6.0], 1e-15));
        assert!(close(t_inverse(&Mixture::level(3, 3).unwrap()).weights(), &[1.0 / 3.0; 3], 1e-15));
        assert_eq!(t_inverse(&Mixture::level(3, 1).unwrap()).weights(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn simplex_validation_and_renormalisation() {
        let w = WeightVector::new(vec![0.5, 0.5 + 5e-13]).unwrap();
        assert_eq!(w.weights().iter().sum::<f64>(), 1.0);
        assert!(WeightVector::new(vec![0.5, 0.5 + 1e-9]).is_err());
        assert!(WeightVector::new(vec![1.1, -0.1]).is_err());
        let w = WeightVector::new(vec![1.0, -1e-16]).unwrap();
        assert_eq!(w.weights(), &[1.0, 0.0]);
        assert!(matches!(WeightVector::new(vec![f64::NAN, 1.0]), Err(RiskError::NonFiniteInput { index: 0, .. })));
        assert!(Mixture::new(vec![]).is_err());
    }

    #[test]
    fn representing_set_invariants() {
        assert_eq!(RepresentingSet::new(vec![], false), Err(RiskError::EmptySet));
        let a = WeightVector::new(vec![0.3, 0.7]).unwrap();
        let b = WeightVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            RepresentingSet::new(vec![a.clone(), b], false),
            Err(RiskError::LengthMismatch { expected: 2, actual: 3 })
        ));
        assert!(matches!(RepresentingSet::new(vec![a.clone()], true), Err(RiskError::NotMonotone { .. })));
        assert!(RepresentingSet::new(vec![a], false).is_ok());
    }

    #[test]
    fn representing_set_json() {
        let set: RepresentingSet =
            serde_json::from_str(r#"{"sorted_domain":true,"vertices":[[0.7,0.3],[0.5,0.5]]}"#).unwrap();
        assert_eq!(set.vertices().len(), 2);
        assert!(set.sorted_domain());
        let bad = serde_json::from_str::<RepresentingSet>(r#"{"sorted_domain":true,"vertices":[[0.3,0.7]]}"#);
        assert!(bad.is_err());
        let wrong_schema =
            serde_json::from_str::<RepresentingSet>(r#"{"schema":"other/9","sorted_domain":false,"vertices":[[1.0]]}"#);
        assert!(wrong_schema.is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        /// Random point of the non-increasing simplex: sorted uniforms, normalised.
        pub(crate) fn monotone_simplex(max_n: usize) -> impl Strategy<Value = WeightVector> {
            prop::collection::vec(0.0f64..1.0, 1..max_n).prop_map(|mut v| {
                v.sort_by(|a, b| b.total_cmp(a));
                if v[0] == 0.0 {
                    v[0] = 1.0;
                }
                let s: f64 = v.iter().sum();
                WeightVector::monotone(v.into_iter().map(|x| x / s).collect()).unwrap()
            })
        }

        proptest! {
            #[test]
            fn round_trip(a in monotone_simplex(300)) {
                let mu = t_map(&a).unwrap();
                let s: f64 = mu.masses().iter().sum();
                prop_assert!((s - 1.0).abs() <= 1e-12);
                prop_assert!(mu.masses().iter().all(|&m| m >= -1e-15));
                let back = t_inverse(&mu);
                prop_assert!(close(back.weights(), a.weights(), 1e-12));
            }
        }
    }
}
