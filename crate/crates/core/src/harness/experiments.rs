use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Check, ErrorRow, ExperimentReport, LipschitzClass};
use crate::asymptotics::{
    asymptotic_variance, bootstrap_distribution, kolmogorov_distance, truncated_kolmogorov, DEGENERATE_VARIANCE,
};
use crate::error::{Result, RiskError};
use crate::estimators::l_estimate_sorted;
use crate::population::{population_spectral_risk, ReferenceDistribution};
use crate::report::check_schema;
use crate::rng::RngSpec;
use crate::sample::{sort_values, Sample};
use crate::spectra::{bundled_lipschitz, canonical_weights, Spectrum, SpectrumSpec};

/// Errors below this multiple of `1 + |rho|` are indistinguishable from
/// summation rounding.
const ROUNDING_FLOOR: f64 = 1e3 * f64::EPSILON;

fn bundled_specs() -> Vec<SpectrumSpec> {
    bundled_lipschitz().iter().filter_map(Spectrum::spec).collect()
}

fn default_consistency_threshold() -> f64 {
    0.01
}
fn default_pass_fraction() -> f64 {
    0.95
}
fn default_slope_min() -> f64 {
    -0.65
}
fn default_slope_max() -> f64 {
    -0.35
}
fn default_clt_threshold() -> f64 {
    0.05
}
fn default_bootstrap_threshold() -> f64 {
    0.08
}
fn default_grid_m() -> usize {
    100
}

/// Uniform consistency over a Lipschitz class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsistencyConfig {
    #[serde(default, skip_serializing)]
    pub schema: Option<String>,
    #[serde(default = "bundled_specs")]
    pub class: Vec<SpectrumSpec>,
    pub dist: ReferenceDistribution,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    /// Sup-error threshold applied at the largest `n`.
    #[serde(default = "default_consistency_threshold")]
    pub threshold: f64,
    /// Fraction of reps that must meet the threshold.
    #[serde(default = "default_pass_fraction")]
    pub pass_fraction: f64,
}

/// Log-log rate of the sup error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    #[serde(default, skip_serializing)]
    pub schema: Option<String>,
    #[serde(default = "bundled_specs")]
    pub class: Vec<SpectrumSpec>,
    pub dist: ReferenceDistribution,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    #[serde(default = "default_slope_min")]
    pub slope_min: f64,
    #[serde(default = "default_slope_max")]
    pub slope_max: f64,
}

/// Normal approximation of the centred, scaled estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CltConfig {
    #[serde(default, skip_serializing)]
    pub schema: Option<String>,
    pub spectrum: SpectrumSpec,
    pub dist: ReferenceDistribution,
    pub n: usize,
    pub reps: usize,
    #[serde(default = "default_clt_threshold")]
    pub threshold: f64,
    #[serde(default = "default_grid_m")]
    pub m: usize,
}

/// Bootstrap approximation of the estimator's limit law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    #[serde(default, skip_serializing)]
    pub schema: Option<String>,
    pub spectrum: SpectrumSpec,
    pub dist: ReferenceDistribution,
    pub n: usize,
    #[serde(rename = "B")]
    pub replicates: usize,
    #[serde(default = "default_bootstrap_threshold")]
    pub threshold: f64,
    #[serde(default = "default_grid_m")]
    pub m: usize,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    sort_values(&mut v);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Sup-over-class errors for every `(n, rep)`, plus the largest population
/// value in magnitude; rep `r` at grid index `j` draws from
/// `root.substream(j).substream(r)`.
fn sup_error_table(
    cls: &LipschitzClass,
    dist: &ReferenceDistribution,
    n_grid: &[usize],
    reps: usize,
    seed: u64,
) -> Result<(Vec<ErrorRow>, f64)> {
    if n_grid.is_empty() || n_grid.contains(&0) {
        return Err(RiskError::InvalidConfig("n_grid must be non-empty with positive sizes".into()));
    }
    if n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(RiskError::InvalidConfig("n_grid must be strictly increasing".into()));
    }
    if reps == 0 {
        return Err(RiskError::InvalidConfig("reps must be positive".into()));
    }
    let targets: Vec<f64> =
        cls.members().iter().map(|phi| population_spectral_risk(dist, phi)).collect::<Result<_>>()?;
    let scale = targets.iter().fold(0.0, |m: f64, t| m.max(t.abs()));
    let root = RngSpec::new(seed, 0);
    let rows = n_grid
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let weights: Vec<Vec<f64>> = cls
                .members()
                .iter()
                .map(|phi| canonical_weights(phi, n).map(|w| w.into_weights()))
                .collect::<Result<_>>()?;
            let grid_stream = root.substream(j as u64);
            let errors: Vec<f64> = (0..reps as u64)
                .into_par_iter()
                .map(|r| {
                    let mut x = dist.draw_n(&mut grid_stream.substream(r).rng(), n);
                    sort_values(&mut x);
                    weights
                        .iter()
                        .zip(&targets)
                        .map(|(a, target)| (l_estimate_sorted(a, &x) - target).abs())
                        .fold(0.0, f64::max)
                })
                .collect();
            Ok(ErrorRow { n, median: median(&errors), max: errors.iter().copied().fold(0.0, f64::max), errors })
        })
        .collect::<Result<_>>()?;
    Ok((rows, scale))
}

/// Per-`n` sup-over-class errors of the canonical plug-in estimators against
/// the population values, with median and max over reps. Passes when at
/// least `pass_fraction` of the reps at the largest `n` are below `threshold`.
pub fn consistency_sweep(config: &ConsistencyConfig, seed: u64) -> Result<ExperimentReport> {
    let started = Instant::now();
    check_schema(config.schema.as_deref())?;
    let cls = LipschitzClass::from_specs(&config.class)?;
    let (table, _) = sup_error_table(&cls, &config.dist, &config.n_grid, config.reps, seed)?;
    let last = table.last().expect("n_grid is non-empty");
    let below = last.errors.iter().filter(|&&e| e < config.threshold).count();
    let fraction = below as f64 / last.errors.len() as f64;
    let mut report = ExperimentReport::new("consistency", config, seed);
    report.checks.push(Check::within("fraction_below_threshold", fraction, Some(config.pass_fraction), None));
    report.table = table;
    Ok(report.finish(started))
}

/// Least-squares slope of `log(median error)` against `log n`. Medians at
/// or below `noise_floor` are rounding residue and make the fit degenerate.
pub(crate) fn log_log_slope(table: &[ErrorRow], noise_floor: f64) -> Result<f64> {
    if table.iter().any(|r| !(r.median > noise_floor && r.median.is_finite())) {
        return Err(RiskError::DegenerateFit(format!(
            "median errors must be finite and above the rounding floor {noise_floor:e}"
        )));
    }
    let pts: Vec<(f64, f64)> = table.iter().map(|r| ((r.n as f64).ln(), r.median.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(RiskError::DegenerateFit("need at least two distinct sample sizes".into()));
    }
    Ok(sxy / sxx)
}

/// Fits the decay rate of the median sup error over a geometric `n` grid.
pub fn rate_experiment(config: &RateConfig, seed: u64) -> Result<ExperimentReport> {
    let started = Instant::now();
    check_schema(config.schema.as_deref())?;
    if config.reps < 30 {
        return Err(RiskError::InvalidConfig(format!("rate fits need at least 30 reps, got {}", config.reps)));
    }
    if let (Some(&lo), Some(&hi)) = (config.n_grid.first(), config.n_grid.last()) {
        if (hi as f64) < 100.0 * lo as f64 {
            return Err(RiskError::InvalidConfig("n_grid must span at least two decades".into()));
        }
    }
    let cls = LipschitzClass::from_specs(&config.class)?;
    let (table, scale) = sup_error_table(&cls, &config.dist, &config.n_grid, config.reps, seed)?;
    let slope = log_log_slope(&table, ROUNDING_FLOOR * (1.0 + scale))?;
    let mut report = ExperimentReport::new("rate", config, seed);
    report.checks.push(Check::within("slope", slope, Some(config.slope_min), Some(config.slope_max)));
    report.slope = Some(slope);
    report.table = table;
    Ok(report.finish(started))
}

fn limit_variance(phi: &Spectrum, dist: &ReferenceDistribution) -> Result<f64> {
    if !phi.is_lipschitz() {
        return Err(RiskError::NotLipschitz);
    }
    let sigma2 = asymptotic_variance(phi, dist)?;
    if sigma2 <= DEGENERATE_VARIANCE {
        return Err(RiskError::DegenerateVariance(sigma2));
    }
    Ok(sigma2)
}

/// Simulates `reps` values of `sqrt(n)(rho_hat - rho)` and measures their
/// Kolmogorov distance to `N(0, sigma^2)`.
pub fn clt_check(config: &CltConfig, seed: u64) -> Result<ExperimentReport> {
    let started = Instant::now();
    check_schema(config.schema.as_deref())?;
    if config.reps < 500 {
        return Err(RiskError::InvalidConfig(format!("CLT checks need at least 500 reps, got {}", config.reps)));
    }
    if config.n == 0 || config.m == 0 {
        return Err(RiskError::InvalidConfig("n and m must be positive".into()));
    }
    let phi = Spectrum::from_spec(&config.spectrum)?;
    let sigma2 = limit_variance(&phi, &config.dist)?;
    let target = population_spectral_risk(&config.dist, &phi)?;
    let weights = canonical_weights(&phi, config.n)?.into_weights();
    let root = RngSpec::new(seed, 0);
    let root_n = (config.n as f64).sqrt();
    let values: Vec<f64> = (0..config.reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut x = config.dist.draw_n(&mut root.substream(r).rng(), config.n);
            sort_values(&mut x);
            root_n * (l_estimate_sorted(&weights, &x) - target)
        })
        .collect();
    let limit = ReferenceDistribution::normal(0.0, sigma2.sqrt())?;
    let replicates = Sample::new(values)?;
    let d_k = kolmogorov_distance(&replicates, &limit);
    let d_k_m = truncated_kolmogorov(&replicates, &limit, config.m)?;
    let mut report = ExperimentReport::new("clt", config, seed);
    report.n = Some(config.n);
    report.sigma2 = Some(sigma2);
    report.d_k = Some(d_k);
    report.d_k_m = Some(d_k_m);
    report.m = Some(config.m);
    report.checks.push(Check::below("d_K", d_k, config.threshold));
    Ok(report.finish(started))
}

/// Draws one sample, bootstraps the canonical estimator and compares the
/// bootstrap law with `N(0, sigma^2)`. The sample uses `substream(0)` of the
/// root stream and the replicates the family under `substream(1)`.
pub fn bootstrap_check(config: &BootstrapConfig, seed: u64) -> Result<ExperimentReport> {
    let started = Instant::now();
    check_schema(config.schema.as_deref())?;
    if config.n == 0 || config.replicates == 0 || config.m == 0 {
        return Err(RiskError::InvalidConfig("n, B and m must be positive".into()));
    }
    let phi = Spectrum::from_spec(&config.spectrum)?;
    let sigma2 = limit_variance(&phi, &config.dist)?;
    let root = RngSpec::new(seed, 0);
    let x = Sample::new(config.dist.draw_n(&mut root.substream(0).rng(), config.n))?;
    let values = bootstrap_distribution(&x, &phi, config.replicates, root.substream(1))?;
    let degenerate = values.iter().all(|&v| v == values[0]);
    let limit = ReferenceDistribution::normal(0.0, sigma2.sqrt())?;
    let replicates = Sample::new(values)?;
    let d_k = kolmogorov_distance(&replicates, &limit);
    let d_k_m = truncated_kolmogorov(&replicates, &limit, config.m)?;
    let mut report = ExperimentReport::new("bootstrap", config, seed);
    report.n = Some(config.n);
    report.replicates = Some(config.replicates);
    report.sigma2 = Some(sigma2);
    report.d_k = Some(d_k);
    report.d_k_m = Some(d_k_m);
    report.m = Some(config.m);
    report.degenerate = Some(degenerate);
    report.checks.push(Check::below("d_K", d_k, config.threshold));
    report.checks.push(Check::within("d_K_m_at_most_d_K", d_k_m, None, Some(d_k)));
    report.checks.push(Check::within("non_degenerate", if degenerate { 0.0 } else { 1.0 }, Some(1.0), None));
    Ok(report.finish(started))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unif() -> ReferenceDistribution {
        ReferenceDistribution::uniform(0.0, 1.0).unwrap()
    }

    fn consistency(
        class: Vec<SpectrumSpec>,
        dist: ReferenceDistribution,
        n_grid: Vec<usize>,
        reps: usize,
    ) -> ConsistencyConfig {
        ConsistencyConfig {
            schema: None,
            class,
            dist,
            n_grid,
            reps,
            threshold: default_consistency_threshold(),
            pass_fraction: default_pass_fraction(),
        }
    }

    #[test]
    fn consistency_examples() {
        let cfg = consistency(vec![SpectrumSpec::Uniform], unif(), vec![100_000], 1);
        let r = consistency_sweep(&cfg, 3).unwrap();
        assert!(r.table[0].errors[0] < 0.01);
        assert!(r.passed);

        let cfg = consistency(vec![SpectrumSpec::Linear { slope: 2.0 }], unif(), vec![100_000], 1);
        let r = consistency_sweep(&cfg, 3).unwrap();
        assert!(r.table[0].errors[0] < 0.01);

        let cfg = consistency(bundled_specs(), ReferenceDistribution::standard_normal(), vec![10, 20], 4);
        let a = consistency_sweep(&cfg, 9).unwrap();
        let b = consistency_sweep(&cfg, 9).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_ne!(a.to_json(), consistency_sweep(&cfg, 10).unwrap().to_json());
    }

    #[test]
    fn consistency_rejects_bad_grids() {
        let cfg = consistency(bundled_specs(), unif(), vec![10, 10], 2);
        assert!(consistency_sweep(&cfg, 1).is_err());
        let cfg = consistency(vec![SpectrumSpec::Es { alpha: 0.1 }], unif(), vec![10], 2);
        assert!(matches!(consistency_sweep(&cfg, 1), Err(RiskError::NotLipschitz)));
    }

    #[test]
    fn rate_point_mass_is_degenerate() {
        let cfg = RateConfig {
            schema: None,
            class: vec![SpectrumSpec::Uniform],
            dist: ReferenceDistribution::point_mass(2.0).unwrap(),
            n_grid: vec![10, 100, 1000],
            reps: 30,
            slope_min: default_slope_min(),
            slope_max: default_slope_max(),
        };
        assert!(matches!(rate_experiment(&cfg, 1), Err(RiskError::DegenerateFit(_))));
        let short = RateConfig { n_grid: vec![10, 100], ..cfg.clone() };
        assert!(matches!(rate_experiment(&short, 1), Err(RiskError::InvalidConfig(_))));
        let few = RateConfig { reps: 5, ..cfg };
        assert!(matches!(rate_experiment(&few, 1), Err(RiskError::InvalidConfig(_))));
    }

    #[test]
    fn slope_of_exact_power_law() {
        let table: Vec<ErrorRow> = [100usize, 1000, 10_000]
            .iter()
            .map(|&n| ErrorRow { n, errors: vec![], median: 3.0 / (n as f64).sqrt(), max: 0.0 })
            .collect();
        assert!((log_log_slope(&table, 0.0).unwrap() + 0.5).abs() < 1e-12);
        assert!(log_log_slope(&table, 1.0).is_err());
    }

    #[test]
    fn clt_gates() {
        let cfg = CltConfig {
            schema: None,
            spectrum: SpectrumSpec::Es { alpha: 0.05 },
            dist: unif(),
            n: 100,
            reps: 500,
            threshold: 0.05,
            m: 100,
        };
        assert!(matches!(clt_check(&cfg, 1), Err(RiskError::NotLipschitz)));
        let point = CltConfig {
            spectrum: SpectrumSpec::Uniform,
            dist: ReferenceDistribution::point_mass(1.0).unwrap(),
            ..cfg.clone()
        };
        assert!(matches!(clt_check(&point, 1), Err(RiskError::DegenerateVariance(_))));
        let few = CltConfig { spectrum: SpectrumSpec::Uniform, reps: 10, ..cfg };
        assert!(matches!(clt_check(&few, 1), Err(RiskError::InvalidConfig(_))));
    }

    #[test]
    fn clt_small_run_is_reproducible() {
        let cfg = CltConfig {
            schema: None,
            spectrum: SpectrumSpec::Uniform,
            dist: unif(),
            n: 50,
            reps: 500,
            threshold: 0.05,
            m: 10,
        };
        let a = clt_check(&cfg, 4).unwrap();
        assert_eq!(a.to_json(), clt_check(&cfg, 4).unwrap().to_json());
        assert!(a.d_k_m.unwrap() <= a.d_k.unwrap());
        assert!((a.sigma2.unwrap() - 1.0 / 12.0).abs() < 1e-9);
    }

    #[test]
    fn bootstrap_single_point_is_degenerate() {
        let cfg = BootstrapConfig {
            schema: None,
            spectrum: SpectrumSpec::Linear { slope: 2.0 },
            dist: ReferenceDistribution::standard_normal(),
            n: 1,
            replicates: 50,
            threshold: 0.08,
            m: 100,
        };
        let r = bootstrap_check(&cfg, 2).unwrap();
        assert_eq!(r.degenerate, Some(true));
        assert!(!r.passed);
        assert_eq!(r.to_json(), bootstrap_check(&cfg, 2).unwrap().to_json());
    }

    #[test]
    fn report_round_trips() {
        let cfg = consistency(bundled_specs(), unif(), vec![7, 30], 3);
        let r = consistency_sweep(&cfg, 5).unwrap();
        let text = r.to_json();
        let back: ExperimentReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_json(), text);
        assert_eq!(back.table, r.table);
        // the echoed config replays the run
        let replay: ConsistencyConfig = serde_json::from_value(back.config.clone()).unwrap();
        assert_eq!(consistency_sweep(&replay, back.seed).unwrap().to_json(), text);
    }

    #[test]
    fn configs_fill_defaults_and_reject_unknown_fields() {
        let cfg: CltConfig = serde_json::from_str(
            r#"{"spectrum":{"type":"uniform"},"dist":{"type":"normal","mean":0,"sd":1},"n":10,"reps":500}"#,
        )
        .unwrap();
        assert_eq!(cfg.threshold, 0.05);
        assert_eq!(cfg.m, 100);
        let bad = serde_json::from_str::<CltConfig>(
            r#"{"spectrum":{"type":"uniform"},"dist":{"type":"normal","mean":0,"sd":1},"n":10,"reps":500,"extra":1}"#,
        );
        assert!(bad.is_err());
        let cfg: BootstrapConfig = serde_json::from_str(
            r#"{"schema":"riskcore/1","spectrum":{"type":"linear","slope":2},"dist":{"type":"uniform","a":0,"b":1},"n":10,"B":20}"#,
        )
        .unwrap();
        assert_eq!(cfg.replicates, 20);
    }
}
