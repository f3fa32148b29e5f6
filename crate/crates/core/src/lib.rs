//! Finite-sample coherent risk estimation.
//!
//! Samples are profit-and-loss vectors (profit positive). The crate covers
//! discrete expected shortfall and L-estimators on order statistics, the
//! spectrum-to-weights discretisation, reference laws with exact population
//! risk values, influence functions and asymptotic variances, the Efron
//! bootstrap, distance diagnostics, and the experiment harness that ties
//! them together.

pub mod asymptotics;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod normal;
pub mod population;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod sample;
pub mod simplex;
pub mod spectra;

pub use error::{Result, RiskError};
pub use population::{population_es, population_spectral_risk, ReferenceDistribution};
pub use rng::RngSpec;
pub use sample::{empirical_quantile, sort_sample, Sample, SortedSample};
pub use simplex::{t_inverse, t_map, Mixture, MixtureSet, RepresentingSet, WeightVector};
pub use spectra::{canonical_weights, step_spectrum, Spectrum, SpectrumSpec, StepSpectrum};
