//! On-demand correctness checks: oracle equivalence, chart identities and
//! finite-difference gradient checks, each reporting its worst error.

use std::fmt;

use rand::distributions::Uniform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chart::Chart;
use crate::corpus::{derive_seed, Sentence};
use crate::error::Result;
use crate::model::{ModelParams, RuleKind};
use crate::oracle::TreeOracle;
use crate::training::finite_diff::{central_difference, DEFAULT_STEP};
use crate::training::{direct_gradient, sentence_nll, EStep, Gradients};
use crate::tree::{catalan, enumerate_trees};

pub const LOG_SPACE_TOL: f64 = 1e-8;
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
pub const GRADIENT_REL_TOL: f64 = 1e-4;

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub max_error: f64,
    pub tolerance: f64,
    pub cases: usize,
}

impl CheckResult {
    fn new(name: &'static str, tolerance: f64) -> Self {
        CheckResult {
            name,
            max_error: 0.0,
            tolerance,
            cases: 0,
        }
    }

    fn record(&mut self, err: f64) {
        self.cases += 1;
        // NaN counts as a failure.
        if err.is_nan() || err > self.max_error {
            self.max_error = if err.is_nan() { f64::INFINITY } else { err };
        }
    }

    pub fn passed(&self) -> bool {
        self.max_error < self.tolerance
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<22} {}  max_error={:.3e}  tol={:.0e}  cases={}",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.max_error,
            self.tolerance,
            self.cases
        )
    }
}

/// `max_k |inside(k,k) + outside(k,k) - ln p(W)|`.
pub fn leaf_identity_error(chart: &Chart) -> Result<f64> {
    let total = chart.sentence_log_score();
    let mut worst: f64 = 0.0;
    for k in 0..chart.len() {
        let v = chart.inside_log(k, k)? + chart.outside_log(k, k)?;
        worst = worst.max((v - total).abs());
    }
    Ok(worst)
}

/// `|sum of binary posteriors - (n - 1)|`.
pub fn posterior_mass_error(chart: &Chart) -> Result<f64> {
    let mass: f64 = chart
        .rule_posteriors()?
        .iter()
        .filter(|r| r.kind != RuleKind::Leaf)
        .map(|r| r.weight)
        .sum();
    Ok((mass - (chart.len() as f64 - 1.0)).abs())
}

/// Largest deviation of a span's mixture weights from summing to one.
pub fn weight_sum_error(chart: &Chart) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..chart.len() {
        for j in i + 1..chart.len() {
            let s: f64 = chart.split_weights(i, j)?.iter().sum();
            worst = worst.max((s - 1.0).abs());
        }
    }
    Ok(worst)
}

/// Parameters with every entry uniform in `[-scale, scale]`; stronger than
/// the training initialization, so mixture weights are far from uniform.
pub fn random_params(vocab_size: usize, d: usize, scale: f64, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-scale, scale);
    let x = ndarray::Array2::from_shape_simple_fn((vocab_size, d), || rng.sample(dist));
    let w = ndarray::Array2::from_shape_simple_fn((d, 2 * d), || rng.sample(dist));
    let u = ndarray::Array1::from_shape_simple_fn(d, || rng.sample(dist));
    ModelParams::new(x, w, u).expect("finite by construction")
}

pub fn random_sentence(vocab_size: usize, n: usize, seed: u64) -> Sentence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Sentence::new((0..n).map(|_| rng.gen_range(0..vocab_size)).collect()).expect("n >= 1")
}

/// Finite differences restricted to the embedding rows of `words`; other
/// rows of X are left at zero (their exact gradient is zero).
/// Gradient magnitude below which central differences of an objective of
/// size `value` are dominated by rounding, so entries are compared absolutely.
fn fd_noise_floor(value: f64) -> f64 {
    (f64::EPSILON * value.abs() / DEFAULT_STEP / GRADIENT_REL_TOL).max(1e-8)
}

fn fd_for_words<F>(params: &ModelParams, words: &[usize], mut f: F) -> Gradients
where
    F: FnMut(&ModelParams) -> f64,
{
    let step = DEFAULT_STEP;
    let mut rows: Vec<usize> = words.to_vec();
    rows.sort_unstable();
    rows.dedup();
    // Differentiate a compact model holding only the rows in use.
    let mut compact = params.clone();
    compact.x = params.x.select(ndarray::Axis(0), &rows);
    let remap = |p: &ModelParams| {
        let mut full = params.clone();
        for (r, &row) in rows.iter().enumerate() {
            full.x.row_mut(row).assign(&p.x.row(r));
        }
        full.w.assign(&p.w);
        full.u.assign(&p.u);
        full
    };
    let fd = central_difference(&compact, step, |p| f(&remap(p)));
    let mut out = Gradients::zeros_like(params);
    for (r, &row) in rows.iter().enumerate() {
        out.dx.row_mut(row).assign(&fd.dx.row(r));
    }
    out.dw = fd.dw;
    out.du = fd.du;
    out
}

/// Where the check suite gets its parameters.
pub enum ParamSource<'a> {
    /// Fresh random parameters per (seed, dimension).
    Random {
        vocab_size: usize,
        dims: Vec<usize>,
    },
    Model(&'a ModelParams),
}

pub struct CheckPlan<'a> {
    pub source: ParamSource<'a>,
    pub lengths: std::ops::RangeInclusive<usize>,
    pub seeds: Vec<u64>,
    /// Longest sentence used by the finite-difference checks.
    pub gradient_max_len: usize,
}

/// Runs every check over the plan and returns one result per check.
pub fn run_checks(plan: &CheckPlan<'_>) -> Result<Vec<CheckResult>> {
    let mut oracle = CheckResult::new("oracle_equivalence", LOG_SPACE_TOL);
    let mut leaf = CheckResult::new("leaf_identity", LOG_SPACE_TOL);
    let mut mass = CheckResult::new("posterior_mass", LOG_SPACE_TOL);
    let mut weights = CheckResult::new("split_weight_sum", WEIGHT_SUM_TOL);
    let mut viterbi = CheckResult::new("viterbi_vs_oracle", LOG_SPACE_TOL);
    let mut trees = CheckResult::new("tree_count", 0.5);
    let mut em = CheckResult::new("em_gradient_fd", GRADIENT_REL_TOL);
    let mut direct = CheckResult::new("direct_gradient_fd", GRADIENT_REL_TOL);

    for n in plan.lengths.clone() {
        let count = enumerate_trees(n)?.len() as u64;
        trees.record((count as f64 - catalan(n as u64 - 1) as f64).abs());
    }

    let mut cases: Vec<(ModelParams, u64)> = Vec::new();
    for &seed in &plan.seeds {
        match &plan.source {
            ParamSource::Random { vocab_size, dims } => {
                for &d in dims {
                    cases.push((
                        random_params(*vocab_size, d, 1.0, derive_seed(seed, d as u64)),
                        seed,
                    ));
                }
            }
            ParamSource::Model(p) => cases.push(((*p).clone(), seed)),
        }
    }

    for (params, seed) in &cases {
        for n in plan.lengths.clone() {
            let s = random_sentence(params.vocab_size(), n, derive_seed(*seed, 1000 + n as u64));
            let chart = Chart::full(params, &s)?;
            let mut brute = TreeOracle::new(params, &s)?;
            oracle.record((chart.sentence_log_score() - brute.log_score()).abs());
            leaf.record(leaf_identity_error(&chart)?);
            mass.record(posterior_mass_error(&chart)?);
            weights.record(weight_sum_error(&chart)?);

            let (tree, score) = chart.viterbi();
            let best = brute
                .scored_trees()
                .into_iter()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("at least one tree");
            // Compared by score: saturated models produce exact ties between trees.
            let tree_err = (brute.tree_log_score(&tree) - best.1).abs();
            viterbi.record((score - best.1).abs().max(tree_err));

            if n <= plan.gradient_max_len {
                let estep = EStep::from_chart(&chart)?;
                let analytic = estep.gradient(params);
                let fd = fd_for_words(params, s.ids(), |p| estep.q_value(p));
                let floor = fd_noise_floor(estep.q_value(params));
                em.record(analytic.max_relative_error_with_floor(&fd, floor));

                let analytic = direct_gradient(params, &s)?;
                let fd = fd_for_words(params, s.ids(), |p| sentence_nll(p, &s).unwrap_or(f64::NAN));
                let floor = fd_noise_floor(-chart.sentence_log_score());
                direct.record(analytic.max_relative_error_with_floor(&fd, floor));
            }
        }
    }
    Ok(vec![
        oracle, leaf, mass, weights, viterbi, trees, em, direct,
    ])
}
