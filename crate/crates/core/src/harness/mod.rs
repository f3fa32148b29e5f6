//! Experiment drivers: consistency, rate, CLT and bootstrap runs, randomised
//! coherence-axiom checks, and the Kusuoka plug-in surrogate checks.

mod axioms;
mod experiments;
mod kusuoka;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RiskError};
use crate::spectra::{bundled_lipschitz, Spectrum, SpectrumSpec};

pub use axioms::{
    check_axiom_subset, check_axioms, sample_std, Axiom, AxiomReport, AxiomResult, Counterexample, AXIOM_TOL,
};
pub use experiments::{
    bootstrap_check, clt_check, consistency_sweep, rate_experiment, BootstrapConfig, CltConfig, ConsistencyConfig,
    RateConfig,
};
pub use kusuoka::{empirical_es, refinement_check, tightness_check, RefinementReport, TightnessReport};

/// Grid used to certify class membership.
pub const CLASS_GRID: usize = 10_000;
const CLASS_SLACK: f64 = 1e-9;

/// A finite family of Lipschitz spectra with common constants
/// `C = max sup phi` and `L = max Lipschitz constant`.
#[derive(Debug, Clone)]
pub struct LipschitzClass {
    members: Vec<Spectrum>,
    class_c: f64,
    class_l: f64,
}

impl LipschitzClass {
    /// Certifies every member on a `CLASS_GRID` grid: non-increasing, bounded
    /// by `C`, and `L`-Lipschitz between neighbouring gridpoints.
    pub fn new(members: Vec<Spectrum>) -> Result<Self> {
        if members.is_empty() {
            return Err(RiskError::EmptySet);
        }
        let mut class_c: f64 = 0.0;
        let mut class_l: f64 = 0.0;
        for phi in &members {
            class_c = class_c.max(phi.bound());
            class_l = class_l.max(phi.lipschitz().ok_or(RiskError::NotLipschitz)?);
        }
        let h = 1.0 / CLASS_GRID as f64;
        for phi in &members {
            let mut prev = phi.eval(h)?;
            if prev > class_c + CLASS_SLACK {
                return Err(RiskError::InvalidSpectrum(format!("{} exceeds the class bound", phi.label())));
            }
            for j in 2..=CLASS_GRID {
                let v = phi.eval(j as f64 * h)?;
                if v > prev + CLASS_SLACK {
                    return Err(RiskError::InvalidSpectrum(format!("{} increases near {}", phi.label(), j as f64 * h)));
                }
                if (prev - v).abs() > class_l * h + CLASS_SLACK {
                    return Err(RiskError::InvalidSpectrum(format!(
                        "{} is not {class_l}-Lipschitz near {}",
                        phi.label(),
                        j as f64 * h
                    )));
                }
                prev = v;
            }
        }
        Ok(Self { members, class_c, class_l })
    }

    /// Uniform, linear(2) and exponential(k) for k in {1, 2, 5}.
    pub fn bundled() -> Self {
        Self::new(bundled_lipschitz()).expect("bundled spectra are Lipschitz")
    }

    pub fn from_specs(specs: &[SpectrumSpec]) -> Result<Self> {
        Self::new(specs.iter().map(Spectrum::from_spec).collect::<Result<_>>()?)
    }

    pub fn members(&self) -> &[Spectrum] {
        &self.members
    }

    pub fn class_c(&self) -> f64 {
        self.class_c
    }

    pub fn class_l(&self) -> f64 {
        self.class_l
    }
}

/// Error summary for one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub n: usize,
    pub errors: Vec<f64>,
    pub median: f64,
    pub max: f64,
}

/// One pass/fail decision with the value it was based on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    pub passed: bool,
}

impl Check {
    fn within(name: &str, value: f64, lower: Option<f64>, upper: Option<f64>) -> Self {
        let passed = value.is_finite() && lower.is_none_or(|lo| value >= lo) && upper.is_none_or(|hi| value <= hi);
        Self { name: name.into(), value, lower, upper, passed }
    }

    fn below(name: &str, value: f64, limit: f64) -> Self {
        let passed = value < limit;
        Self { name: name.into(), value, lower: None, upper: Some(limit), passed }
    }
}

/// Machine-readable outcome of an experiment. The configuration is echoed
/// with every field explicit, so `config` plus `seed` replays the run.
/// Wall time is kept out of the serialised form so reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: String,
    pub experiment: String,
    pub config: serde_json::Value,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub table: Vec<ErrorRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(rename = "d_K", default, skip_serializing_if = "Option::is_none")]
    pub d_k: Option<f64>,
    #[serde(rename = "d_K_m", default, skip_serializing_if = "Option::is_none")]
    pub d_k_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degenerate: Option<bool>,
    pub checks: Vec<Check>,
    pub passed: bool,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl ExperimentReport {
    fn new<C: Serialize>(experiment: &str, config: &C, seed: u64) -> Self {
        Self {
            schema: crate::report::SCHEMA.into(),
            experiment: experiment.into(),
            config: serde_json::to_value(config).expect("configs serialise to JSON"),
            seed,
            table: Vec::new(),
            slope: None,
            n: None,
            replicates: None,
            sigma2: None,
            d_k: None,
            d_k_m: None,
            m: None,
            degenerate: None,
            checks: Vec::new(),
            passed: false,
            wall_time: Duration::ZERO,
        }
    }

    fn finish(mut self, started: std::time::Instant) -> Self {
        self.passed = !self.checks.is_empty() && self.checks.iter().all(|c| c.passed);
        self.wall_time = started.elapsed();
        self
    }

    pub fn to_json(&self) -> String {
        crate::report::to_json(self)
    }
}
