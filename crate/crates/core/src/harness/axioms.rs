use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RiskError};
use crate::normal;
use crate::report::SCHEMA;
use crate::rng::{open_unit, RngSpec};
use crate::sample::Sample;

/// Relative tolerance: a trial fails when the two sides differ by more than
/// `AXIOM_TOL * (1 + scale)`, `scale` being the largest magnitude involved.
pub const AXIOM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axiom {
    /// `x <= y` entrywise implies `rho(x) >= rho(y)`.
    Monotonicity,
    /// `rho(x + m) = rho(x) - m`.
    CashAdditivity,
    /// `rho(lambda x) = lambda rho(x)` for `lambda >= 0`.
    PositiveHomogeneity,
    /// `rho(x + y) <= rho(x) + rho(y)`.
    Subadditivity,
    /// `rho(x o pi) = rho(x)` for permutations `pi`.
    LawInvariance,
    /// `rho(x + y) = rho(x) + rho(y)` for comonotonic `x, y`.
    ComonotonicAdditivity,
}

impl Axiom {
    pub const ALL: [Axiom; 6] = [
        Axiom::Monotonicity,
        Axiom::CashAdditivity,
        Axiom::PositiveHomogeneity,
        Axiom::Subadditivity,
        Axiom::LawInvariance,
        Axiom::ComonotonicAdditivity,
    ];

    /// The four axioms that define a coherent estimator.
    pub const COHERENCE: [Axiom; 4] =
        [Axiom::Monotonicity, Axiom::CashAdditivity, Axiom::PositiveHomogeneity, Axiom::Subadditivity];

    pub fn name(self) -> &'static str {
        match self {
            Axiom::Monotonicity => "monotonicity",
            Axiom::CashAdditivity => "cash_additivity",
            Axiom::PositiveHomogeneity => "positive_homogeneity",
            Axiom::Subadditivity => "subadditivity",
            Axiom::LawInvariance => "law_invariance",
            Axiom::ComonotonicAdditivity => "comonotonic_additivity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    fn index(self) -> u64 {
        Self::ALL.iter().position(|&a| a == self).expect("listed") as u64
    }
}

/// A concrete violation: the inputs and the two sides of the relation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub relation: String,
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation: Option<Vec<usize>>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomResult {
    pub axiom: Axiom,
    /// Trials run before stopping (all of them when the axiom held).
    pub trials: usize,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Counterexample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub schema: String,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub results: Vec<AxiomResult>,
    /// Every tested axiom held.
    pub passed: bool,
    /// Monotonicity, cash additivity, homogeneity and subadditivity were all
    /// tested and held.
    pub coherent: bool,
}

impl AxiomReport {
    pub fn result(&self, axiom: Axiom) -> Option<&AxiomResult> {
        self.results.iter().find(|r| r.axiom == axiom)
    }

    pub fn to_json(&self) -> String {
        crate::report::to_json(self)
    }
}

/// Sample standard deviation (`n - 1` denominator; zero for one point). Not
/// a risk estimator: it is the foil that fails cash additivity.
pub fn sample_std(x: &Sample) -> f64 {
    let v = x.values();
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn std_normal<R: Rng>(rng: &mut R) -> f64 {
    normal::quantile(open_unit(rng))
}

/// Random P&L vector with a random order of magnitude, sometimes rounded to
/// integers so ties occur, sometimes with exact zeros.
fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let scale = 10f64.powf(rng.random_range(-2.0..2.0));
    let round = rng.random_bool(0.25);
    let zeros = rng.random_bool(0.1);
    (0..n)
        .map(|_| {
            let mut v = scale * std_normal(rng);
            if round {
                v = v.round();
            }
            if zeros && rng.random_bool(0.3) {
                v = 0.0;
            }
            v
        })
        .collect()
}

/// Random non-decreasing piecewise-linear map on `[0, 1]`.
fn random_monotone_map(rng: &mut ChaCha8Rng) -> impl Fn(f64) -> f64 {
    let pieces = rng.random_range(1..=4usize);
    let mut knots: Vec<f64> = (0..pieces - 1).map(|_| rng.random::<f64>()).collect();
    knots.push(0.0);
    knots.push(1.0);
    knots.sort_by(f64::total_cmp);
    let scale = 10f64.powf(rng.random_range(-1.0..1.0));
    let mut level = scale * std_normal(rng);
    let mut values = vec![level];
    for _ in 1..knots.len() {
        // flat pieces allowed, so ties appear in the mapped vector
        level += if rng.random_bool(0.2) { 0.0 } else { scale * rng.random::<f64>() };
        values.push(level);
    }
    move |u: f64| {
        let j = knots.partition_point(|&k| k <= u).clamp(1, knots.len() - 1);
        let w = if knots[j] > knots[j - 1] { (u - knots[j - 1]) / (knots[j] - knots[j - 1]) } else { 0.0 };
        values[j - 1] + w * (values[j] - values[j - 1])
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, a| m.max(a.abs()))
}

fn call<F>(oracle: &mut F, values: Vec<f64>) -> Result<f64>
where
    F: FnMut(&Sample) -> Result<f64>,
{
    let sample = Sample::new(values)?;
    let v = oracle(&sample)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(RiskError::OracleFailure(format!("oracle returned {v} on {:?}", sample.values())))
    }
}

fn tolerance(parts: &[f64]) -> f64 {
    AXIOM_TOL * (1.0 + parts.iter().fold(0.0, |m: f64, a| m.max(a.abs())))
}

struct Trial {
    lhs: f64,
    rhs: f64,
    /// `true` for an equality, `false` for `lhs <= rhs`.
    equality: bool,
    scale: f64,
    example: Counterexample,
}

impl Trial {
    fn violated(&self) -> bool {
        let tol = tolerance(&[self.scale, self.lhs, self.rhs]);
        if self.equality {
            (self.lhs - self.rhs).abs() > tol
        } else {
            self.lhs > self.rhs + tol
        }
    }
}

fn blank(relation: &str, x: Vec<f64>) -> Counterexample {
    Counterexample {
        relation: relation.into(),
        x,
        y: None,
        shift: None,
        scale: None,
        permutation: None,
        lhs: 0.0,
        rhs: 0.0,
    }
}

fn run_trial<F>(axiom: Axiom, trial: usize, oracle: &mut F, n: usize, rng: &mut ChaCha8Rng) -> Result<Trial>
where
    F: FnMut(&Sample) -> Result<f64>,
{
    let x = random_vector(rng, n);
    let sx = sup(&x);
    Ok(match axiom {
        Axiom::Monotonicity => {
            let y: Vec<f64> = x
                .iter()
                .map(|&a| if rng.random_bool(0.3) { a } else { a + sx.max(1.0) * rng.random::<f64>() })
                .collect();
            let rx = call(oracle, x.clone())?;
            let ry = call(oracle, y.clone())?;
            let scale = sx.max(sup(&y));
            let mut example = blank("rho(y) <= rho(x) for x <= y", x);
            example.y = Some(y);
            Trial { lhs: ry, rhs: rx, equality: false, scale, example }
        }
        Axiom::CashAdditivity => {
            let mut m = sx.max(1.0) * std_normal(rng);
            if m == 0.0 {
                m = 1.0;
            }
            let shifted: Vec<f64> = x.iter().map(|a| a + m).collect();
            let lhs = call(oracle, shifted)?;
            let rhs = call(oracle, x.clone())? - m;
            let mut example = blank("rho(x + m) = rho(x) - m", x);
            example.shift = Some(m);
            Trial { lhs, rhs, equality: true, scale: sx + m.abs(), example }
        }
        Axiom::PositiveHomogeneity => {
            // the first trial always checks rho(0 x) = 0
            let lambda = if trial == 0 || rng.random_bool(0.05) { 0.0 } else { (2.0 * std_normal(rng)).exp() };
            let scaled: Vec<f64> = x.iter().map(|a| lambda * a).collect();
            let lhs = call(oracle, scaled)?;
            let rhs = lambda * call(oracle, x.clone())?;
            let mut example = blank("rho(lambda x) = lambda rho(x)", x);
            example.scale = Some(lambda);
            Trial { lhs, rhs, equality: true, scale: sx * lambda.max(1.0), example }
        }
        Axiom::Subadditivity => {
            let y = random_vector(rng, n);
            let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            let lhs = call(oracle, sum)?;
            let rhs = call(oracle, x.clone())? + call(oracle, y.clone())?;
            let scale = sx + sup(&y);
            let mut example = blank("rho(x + y) <= rho(x) + rho(y)", x);
            example.y = Some(y);
            Trial { lhs, rhs, equality: false, scale, example }
        }
        Axiom::LawInvariance => {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(rng);
            let permuted: Vec<f64> = perm.iter().map(|&i| x[i]).collect();
            let lhs = call(oracle, permuted)?;
            let rhs = call(oracle, x.clone())?;
            let mut example = blank("rho(x o pi) = rho(x)", x);
            example.permutation = Some(perm);
            Trial { lhs, rhs, equality: true, scale: sx, example }
        }
        Axiom::ComonotonicAdditivity => {
            let g = random_monotone_map(rng);
            let h = random_monotone_map(rng);
            let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let x: Vec<f64> = u.iter().map(|&t| g(t)).collect();
            let y: Vec<f64> = u.iter().map(|&t| h(t)).collect();
            let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            let lhs = call(oracle, sum)?;
            let rhs = call(oracle, x.clone())? + call(oracle, y.clone())?;
            let scale = sup(&x) + sup(&y);
            let mut example = blank("rho(x + y) = rho(x) + rho(y) for comonotonic x, y", x);
            example.y = Some(y);
            Trial { lhs, rhs, equality: true, scale, example }
        }
    })
}

/// Randomised check of every axiom, `trials` times each.
pub fn check_axioms<F>(oracle: F, n: usize, trials: usize, rng: RngSpec) -> Result<AxiomReport>
where
    F: FnMut(&Sample) -> Result<f64>,
{
    check_axiom_subset(oracle, n, trials, rng, &Axiom::ALL)
}

/// Randomised check of the listed axioms. Axiom `a` draws from
/// `rng.substream(index of a)`, so its trials do not depend on which other
/// axioms are checked. Each axiom stops at its first violation.
pub fn check_axiom_subset<F>(
    mut oracle: F,
    n: usize,
    trials: usize,
    rng: RngSpec,
    axioms: &[Axiom],
) -> Result<AxiomReport>
where
    F: FnMut(&Sample) -> Result<f64>,
{
    if n == 0 || trials == 0 {
        return Err(RiskError::InvalidConfig("n and trials must be positive".into()));
    }
    if axioms.is_empty() {
        return Err(RiskError::InvalidConfig("no axioms selected".into()));
    }
    let mut results = Vec::with_capacity(axioms.len());
    for &axiom in axioms {
        let mut gen = rng.substream(axiom.index()).rng();
        let mut result = AxiomResult { axiom, trials, passed: true, counterexample: None };
        for t in 0..trials {
            let trial = run_trial(axiom, t, &mut oracle, n, &mut gen)?;
            if trial.violated() {
                let mut example = trial.example;
                example.lhs = trial.lhs;
                example.rhs = trial.rhs;
                result = AxiomResult { axiom, trials: t + 1, passed: false, counterexample: Some(example) };
                break;
            }
        }
        results.push(result);
    }
    let passed = results.iter().all(|r| r.passed);
    let coherent = Axiom::COHERENCE.iter().all(|a| results.iter().any(|r| r.axiom == *a && r.passed));
    Ok(AxiomReport { schema: SCHEMA.into(), n, trials, seed: rng.seed, results, passed, coherent })
}
