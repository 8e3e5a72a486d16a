//! Contrastive entropy: how much more entropy the model assigns to distorted
//! copies of test sentences than to the originals.
//!
//! Entropies are in bits per sentence. Scores are unnormalized, so a single
//! sentence entropy can be negative; only differences carry meaning.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chart::Chart;
use crate::corpus::{derive_seed, distort, DistortionSpec, Sentence, Vocab};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Anything that assigns an entropy to a sentence.
pub trait SentenceScorer: Sync {
    fn entropy_bits(&self, s: &Sentence) -> Result<f64>;
}

impl SentenceScorer for ModelParams {
    fn entropy_bits(&self, s: &Sentence) -> Result<f64> {
        sentence_entropy(self, s)
    }
}

/// Scales every sentence energy `-ln p(W)` of the wrapped scorer by `factor`.
pub struct EnergyScaled<'a, S: ?Sized> {
    pub inner: &'a S,
    pub factor: f64,
}

impl<S: SentenceScorer + ?Sized> SentenceScorer for EnergyScaled<'_, S> {
    fn entropy_bits(&self, s: &Sentence) -> Result<f64> {
        Ok(self.factor * self.inner.entropy_bits(s)?)
    }
}

/// `-log2 p(W)` under the unnormalized marginal.
pub fn sentence_entropy(params: &ModelParams, s: &Sentence) -> Result<f64> {
    Ok(-Chart::inside(params, s)?.sentence_log_score() / std::f64::consts::LN_2)
}

/// Seed of sentence `index` within a run.
pub fn sentence_seed(run_seed: u64, index: usize) -> u64 {
    derive_seed(run_seed, index as u64)
}

/// Mean of `H(distorted) - H(original)` over `testset`.
pub fn contrastive_entropy<S: SentenceScorer + ?Sized>(
    scorer: &S,
    testset: &[Sentence],
    vocab: &Vocab,
    level: f64,
    seed: u64,
) -> Result<f64> {
    if testset.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let originals = entropies(scorer, testset, None)?;
    contrastive_from(scorer, testset, &originals, vocab, level, seed, None)
}

fn entropies<S: SentenceScorer + ?Sized>(
    scorer: &S,
    sentences: &[Sentence],
    pool: Option<&rayon::ThreadPool>,
) -> Result<Vec<f64>> {
    let one = |(i, s): (usize, &Sentence)| scorer.entropy_bits(s).map_err(|e| e.at_sentence(i));
    match pool {
        Some(p) => p.install(|| sentences.par_iter().enumerate().map(one).collect()),
        None => sentences.iter().enumerate().map(one).collect(),
    }
}

fn contrastive_from<S: SentenceScorer + ?Sized>(
    scorer: &S,
    testset: &[Sentence],
    originals: &[f64],
    vocab: &Vocab,
    level: f64,
    seed: u64,
    pool: Option<&rayon::ThreadPool>,
) -> Result<f64> {
    if level == 0.0 {
        return Ok(0.0);
    }
    let distorted = testset
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Ok(distort(
                s,
                &DistortionSpec::new(level, sentence_seed(seed, i))?,
                vocab,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let hd = entropies(scorer, &distorted, pool)?;
    // Sentence-order summation keeps the result independent of the worker count.
    let total: f64 = hd.iter().zip(originals).map(|(d, o)| d - o).sum();
    Ok(total / testset.len() as f64)
}

/// `H_C(level) / H_C(baseline)`.
pub fn contrastive_ratio(h_c_level: f64, h_c_baseline: f64) -> Result<f64> {
    if h_c_baseline == 0.0 {
        return Err(Error::ZeroBaseline);
    }
    // `+ 0.0` turns a negative zero into zero for level-0 rows.
    Ok(h_c_level / h_c_baseline + 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub levels: Vec<f64>,
    pub baseline_level: f64,
    pub runs: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            levels: vec![0.1, 0.2, 0.4],
            baseline_level: 0.1,
            runs: 10,
            seed: 0,
            workers: 1,
        }
    }
}

/// Contrastive entropies per level averaged over runs, with ratios to the baseline level.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub levels: Vec<f64>,
    pub h_c: Vec<f64>,
    /// Per level, the value of each run.
    pub h_c_runs: Vec<Vec<f64>>,
    pub h_cr: Vec<f64>,
    pub baseline_level: f64,
    pub runs: usize,
    pub n_sentences: usize,
    pub seed: u64,
}

pub const CSV_HEADER: &str = "level,h_c_bits,h_cr,runs,n_sentences,seed";

/// Runs every level `config.runs` times with per-run seeds derived from `config.seed`.
pub fn evaluate<S: SentenceScorer + ?Sized>(
    scorer: &S,
    testset: &[Sentence],
    vocab: &Vocab,
    config: &EvalConfig,
) -> Result<EvalReport> {
    if config.levels.is_empty() {
        return Err(Error::InvalidConfig("no distortion levels".into()));
    }
    if config.runs == 0 {
        return Err(Error::InvalidConfig("runs must be positive".into()));
    }
    if testset.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    for &l in config.levels.iter().chain([&config.baseline_level]) {
        DistortionSpec::new(l, 0)?;
    }
    let pool = if config.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.workers)
                .build()
                .map_err(|e| Error::InvalidConfig(e.to_string()))?,
        )
    } else {
        None
    };
    let originals = entropies(scorer, testset, pool.as_ref())?;
    let level_runs = |level: f64| -> Result<Vec<f64>> {
        (0..config.runs)
            .map(|r| {
                let run_seed = derive_seed(config.seed, r as u64);
                contrastive_from(
                    scorer,
                    testset,
                    &originals,
                    vocab,
                    level,
                    run_seed,
                    pool.as_ref(),
                )
            })
            .collect()
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

    let mut h_c_runs = Vec::with_capacity(config.levels.len());
    for &level in &config.levels {
        h_c_runs.push(level_runs(level)?);
    }
    let h_c: Vec<f64> = h_c_runs.iter().map(|r| mean(r)).collect();
    let baseline = match config
        .levels
        .iter()
        .position(|&l| l == config.baseline_level)
    {
        Some(i) => h_c[i],
        None => mean(&level_runs(config.baseline_level)?),
    };
    let h_cr = h_c
        .iter()
        .map(|&h| contrastive_ratio(h, baseline))
        .collect::<Result<Vec<_>>>()?;

    Ok(EvalReport {
        levels: config.levels.clone(),
        h_c,
        h_c_runs,
        h_cr,
        baseline_level: config.baseline_level,
        runs: config.runs,
        n_sentences: testset.len(),
        seed: config.seed,
    })
}

/// One parsed CSV row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub level: f64,
    pub h_c_bits: f64,
    pub h_cr: f64,
    pub runs: usize,
    pub n_sentences: usize,
    pub seed: u64,
}

impl EvalReport {
    pub fn rows(&self) -> Vec<ReportRow> {
        self.levels
            .iter()
            .zip(&self.h_c)
            .zip(&self.h_cr)
            .map(|((&level, &h_c_bits), &h_cr)| ReportRow {
                level,
                h_c_bits,
                h_cr,
                runs: self.runs,
                n_sentences: self.n_sentences,
                seed: self.seed,
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{CSV_HEADER}").unwrap();
        for r in self.rows() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.level, r.h_c_bits, r.h_cr, r.runs, r.n_sentences, r.seed
            )
            .unwrap();
        }
        out
    }

    /// Whitespace-separated `level h_c_bits h_c_std` rows for plotting.
    pub fn plot_data(&self) -> String {
        let mut out = String::from("# level h_c_bits h_c_std\n");
        for ((level, h), runs) in self.levels.iter().zip(&self.h_c).zip(&self.h_c_runs) {
            let var = runs.iter().map(|v| (v - h).powi(2)).sum::<f64>() / runs.len() as f64;
            writeln!(out, "{level} {h} {}", var.sqrt()).unwrap();
        }
        out
    }
}

/// Parses a report CSV written by [`EvalReport::to_csv`].
pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::parse(1, "unexpected CSV header"));
    }
    lines
        .enumerate()
        .map(|(n, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::parse(n + 2, format!("bad row `{line}`"));
            if f.len() != 6 {
                return Err(bad());
            }
            Ok(ReportRow {
                level: f[0].parse().map_err(|_| bad())?,
                h_c_bits: f[1].parse().map_err(|_| bad())?,
                h_cr: f[2].parse().map_err(|_| bad())?,
                runs: f[3].parse().map_err(|_| bad())?,
                n_sentences: f[4].parse().map_err(|_| bad())?,
                seed: f[5].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}
