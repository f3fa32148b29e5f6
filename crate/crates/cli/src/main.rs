//! `riskcore`: batch front end for the estimators and experiment drivers.
//!
//! Exit codes: 0 on success, 1 when a check fails (axiom counterexample,
//! failed experiment threshold, uncertifiable weight recovery), 2 on input
//! errors. Results go to stdout, diagnostics and wall time to stderr.

mod input;
mod oracle;

use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Map, Value};

use riskcore::asymptotics::asymptotic_variance;
use riskcore::estimators::{discrete_es, l_estimate, mixture_estimate, recover_comonotonic_weights, robust_sup};
use riskcore::harness::{
    bootstrap_check, check_axiom_subset, clt_check, consistency_sweep, rate_experiment, Axiom, ExperimentReport,
};
use riskcore::report::{format_f64, to_json, SCHEMA};
use riskcore::{
    canonical_weights, t_inverse, t_map, Mixture, ReferenceDistribution, RepresentingSet, RiskError, RngSpec, Spectrum,
    WeightVector,
};

use input::{parse_json, parse_vector, read_sample};
use oracle::ProcessOracle;

#[derive(Parser)]
#[command(name = "riskcore", version, about = "Coherent risk estimators, spectral plug-ins and their asymptotics")]
struct Cli {
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate estimators on a sample file.
    Estimate {
        /// One value per line; `-` reads standard input.
        #[arg(long)]
        sample: String,
        /// Spectrum JSON for the canonical spectral estimator.
        #[arg(long)]
        spectrum: Option<String>,
        /// Non-increasing weight vector for a sorted-domain L-estimator.
        #[arg(long)]
        weights: Option<String>,
        /// Mixture of discrete expected shortfalls.
        #[arg(long)]
        mixture: Option<String>,
        /// Representing set for the robust supremum.
        #[arg(long)]
        repset: Option<String>,
    },
    /// Canonical weight vector of a spectrum.
    Weights {
        #[arg(long)]
        spectrum: String,
        #[arg(long)]
        n: usize,
    },
    /// Mixture of discrete expected shortfalls equivalent to a weight vector.
    Decompose {
        #[arg(long)]
        weights: String,
    },
    /// Weight vector equivalent to a mixture of discrete expected shortfalls.
    Compose {
        #[arg(long)]
        mixture: String,
    },
    /// Recover the weights of a comonotonic estimator by probing it.
    Recover {
        /// Shell command speaking the one-sample-per-line protocol.
        #[arg(long)]
        oracle: String,
        #[arg(long)]
        n: usize,
    },
    /// Discrete expected shortfall: minus the mean of the k smallest values.
    Es {
        #[arg(long)]
        sample: String,
        #[arg(long)]
        k: usize,
    },
    /// Asymptotic variance of the canonical spectral estimator.
    Variance {
        #[arg(long)]
        spectrum: String,
        #[arg(long)]
        dist: String,
    },
    /// Normal approximation of the centred, scaled estimator.
    Clt(ExperimentArgs),
    /// Bootstrap approximation of the estimator's limit law.
    Bootstrap(ExperimentArgs),
    /// Sup-over-class errors at increasing sample sizes.
    Consistency(ExperimentArgs),
    /// Log-log decay rate of the sup-over-class error.
    Rate(ExperimentArgs),
    /// Randomised checks of the coherence axioms on an external estimator.
    Axioms {
        #[arg(long)]
        oracle: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        /// Comma-separated subset, e.g. `monotonicity,subadditivity`.
        #[arg(long, value_delimiter = ',', value_parser = parse_axiom)]
        axioms: Option<Vec<Axiom>>,
    },
}

#[derive(clap::Args)]
struct ExperimentArgs {
    /// Experiment configuration JSON, inline or `@file`.
    #[arg(long)]
    config: String,
    #[arg(long)]
    seed: u64,
}

fn parse_axiom(name: &str) -> Result<Axiom, String> {
    Axiom::from_name(name).ok_or_else(|| {
        let known: Vec<&str> = Axiom::ALL.iter().map(|a| a.name()).collect();
        format!("unknown axiom {name:?}; expected one of {}", known.join(", "))
    })
}

enum Failure {
    /// A check ran and did not pass; the output is still printed.
    Check(String),
    Input(String),
}

impl From<String> for Failure {
    fn from(message: String) -> Self {
        Failure::Input(message)
    }
}

impl From<RiskError> for Failure {
    fn from(e: RiskError) -> Self {
        Failure::Input(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn emit<T: Serialize + ?Sized>(value: &T) {
    println!("{}", to_json(value));
}

fn schema_doc(key: &str, value: Value) -> Value {
    let mut doc = Map::new();
    doc.insert("schema".into(), SCHEMA.into());
    doc.insert(key.into(), value);
    Value::Object(doc)
}

fn vector_doc(key: &str, values: &[f64]) -> Value {
    schema_doc(key, json!(values))
}

fn estimate(
    sample: &str,
    spectrum: Option<&str>,
    weights: Option<&str>,
    mixture: Option<&str>,
    repset: Option<&str>,
) -> Outcome {
    if spectrum.is_none() && weights.is_none() && mixture.is_none() && repset.is_none() {
        return Err(Failure::Input("estimate needs --spectrum, --weights, --mixture or --repset".into()));
    }
    let x = read_sample(sample)?;
    let mut doc = Map::new();
    doc.insert("schema".into(), SCHEMA.into());
    doc.insert("n".into(), x.len().into());
    if let Some(text) = spectrum {
        let phi: Spectrum = parse_json(text, "spectrum")?;
        let a = canonical_weights(&phi, x.len())?;
        doc.insert("spectral".into(), json!(l_estimate(&a, &x, true)?));
    }
    if let Some(text) = weights {
        let a = WeightVector::new(parse_vector(text, "weights")?)?;
        doc.insert("l_estimate".into(), json!(l_estimate(&a, &x, true)?));
    }
    if let Some(text) = mixture {
        let mu = Mixture::new(parse_vector(text, "mixture")?)?;
        doc.insert("mixture".into(), json!(mixture_estimate(&mu, &x)?));
    }
    if let Some(text) = repset {
        let set: RepresentingSet = parse_json(text, "representing set")?;
        let sup = robust_sup(&set, &x)?;
        doc.insert("robust_sup".into(), json!(sup));
    }
    emit(&Value::Object(doc));
    Ok(())
}

fn recover(command: &str, n: usize) -> Outcome {
    let mut oracle = ProcessOracle::spawn(command)?;
    match recover_comonotonic_weights(|x| oracle.evaluate(x), n) {
        Ok(a) => {
            emit(&vector_doc("weights", a.weights()));
            Ok(())
        }
        Err(e @ (RiskError::NotMonotoneRecovered { .. } | RiskError::NotNormalised(_))) => {
            Err(Failure::Check(e.to_string()))
        }
        Err(e) => Err(e.into()),
    }
}

fn report_outcome(report: ExperimentReport) -> Outcome {
    emit(&report);
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(Failure::Check(format!("{} failed: {}", report.experiment, failed.join(", "))))
    }
}

fn axioms(command: &str, n: usize, trials: usize, seed: u64, selected: Option<&[Axiom]>) -> Outcome {
    let mut oracle = ProcessOracle::spawn(command)?;
    let selected = selected.unwrap_or(&Axiom::ALL);
    let report = check_axiom_subset(|x| oracle.evaluate(x), n, trials, RngSpec::new(seed, 0), selected)?;
    emit(&report);
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report.results.iter().filter(|r| !r.passed).map(|r| r.axiom.name()).collect();
        Err(Failure::Check(format!("counterexample to {}", failed.join(", "))))
    }
}

fn run(command: Cmd) -> Outcome {
    match command {
        Cmd::Estimate { sample, spectrum, weights, mixture, repset } => {
            estimate(&sample, spectrum.as_deref(), weights.as_deref(), mixture.as_deref(), repset.as_deref())
        }
        Cmd::Weights { spectrum, n } => {
            let phi: Spectrum = parse_json(&spectrum, "spectrum")?;
            emit(&vector_doc("weights", canonical_weights(&phi, n)?.weights()));
            Ok(())
        }
        Cmd::Decompose { weights } => {
            let a = WeightVector::new(parse_vector(&weights, "weights")?)?;
            emit(&vector_doc("mixture", t_map(&a)?.masses()));
            Ok(())
        }
        Cmd::Compose { mixture } => {
            let mu = Mixture::new(parse_vector(&mixture, "mixture")?)?;
            emit(&vector_doc("weights", t_inverse(&mu).weights()));
            Ok(())
        }
        Cmd::Recover { oracle, n } => recover(&oracle, n),
        Cmd::Es { sample, k } => {
            println!("{}", format_f64(discrete_es(&read_sample(&sample)?, k)?));
            Ok(())
        }
        Cmd::Variance { spectrum, dist } => {
            let phi: Spectrum = parse_json(&spectrum, "spectrum")?;
            let dist: ReferenceDistribution = parse_json(&dist, "distribution")?;
            println!("{}", format_f64(asymptotic_variance(&phi, &dist)?));
            Ok(())
        }
        Cmd::Clt(args) => report_outcome(clt_check(&parse_json(&args.config, "clt config")?, args.seed)?),
        Cmd::Bootstrap(args) => {
            report_outcome(bootstrap_check(&parse_json(&args.config, "bootstrap config")?, args.seed)?)
        }
        Cmd::Consistency(args) => {
            report_outcome(consistency_sweep(&parse_json(&args.config, "consistency config")?, args.seed)?)
        }
        Cmd::Rate(args) => report_outcome(rate_experiment(&parse_json(&args.config, "rate config")?, args.seed)?),
        Cmd::Axioms { oracle, n, trials, seed, axioms: selected } => {
            axioms(&oracle, n, trials, seed, selected.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let started = Instant::now();
    let outcome = match cli.threads {
        Some(0) => Err(Failure::Input("--threads must be positive".into())),
        Some(threads) => match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(|| run(cli.command)),
            Err(e) => Err(Failure::Input(format!("cannot build a {threads}-thread pool: {e}"))),
        },
        None => run(cli.command),
    };
    eprintln!("wall time: {:.3}s", started.elapsed().as_secs_f64());
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(message)) => {
            eprintln!("riskcore: {message}");
            ExitCode::from(1)
        }
        Err(Failure::Input(message)) => {
            eprintln!("riskcore: error: {message}");
            ExitCode::from(2)
        }
    }
}
