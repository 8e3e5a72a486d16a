//! The generalized EM loop: one E-step and one Adagrad step per batch.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chart::Chart;
use crate::corpus::{derive_seed, Sentence};
use crate::error::{Error, Result};
use crate::model::{init_params, EnergyMap, ModelParams, Nonlinearity};
use crate::textio::{self, Lines};

use super::exact::backprop;
use super::{adagrad_step, AdagradState, EStep, Gradients};

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;

/// Which gradient drives the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradMode {
    /// Gradient of the expected complete-data objective with frozen posteriors.
    #[default]
    Em,
    /// Exact gradient of the NLL.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
    pub d: usize,
    pub seed: u64,
    pub grad_mode: GradMode,
    pub adagrad_epsilon: f64,
    /// Sentences longer than this are skipped.
    pub max_sentence_length: usize,
    /// Sentences per update; 1 updates after every sentence.
    pub batch_size: usize,
    /// Threads for per-sentence work; results are reduced in sentence order.
    pub workers: usize,
    pub nonlinearity: Nonlinearity,
    pub energy_map: EnergyMap,
    pub theta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1.0,
            l2: 0.1,
            epochs: 5,
            d: 25,
            seed: 0,
            grad_mode: GradMode::Em,
            adagrad_epsilon: 1e-8,
            max_sentence_length: 40,
            batch_size: 1,
            workers: 1,
            nonlinearity: Nonlinearity::Tanh,
            energy_map: EnergyMap::Identity,
            theta: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be non-negative");
        }
        if self.d == 0 {
            return bad("d must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.workers == 0 {
            return bad("workers must be positive");
        }
        if self.max_sentence_length == 0 {
            return bad("max_sentence_length must be positive");
        }
        if self.adagrad_epsilon.is_nan() || self.adagrad_epsilon < 0.0 {
            return bad("adagrad_epsilon must be non-negative");
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return bad("theta must be positive");
        }
        Ok(())
    }
}

/// Regularized corpus objective `sum NLL + l2 * |params|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub nll: f64,
    pub regularizer: f64,
    pub total: f64,
}

/// One line of the training log. Epoch 0 is the objective at initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub objective: f64,
    pub nll: f64,
    pub regularizer: f64,
    pub sentences: usize,
    pub skipped: usize,
    pub wall_seconds: f64,
}

pub struct TrainOutcome {
    pub params: ModelParams,
    pub state: AdagradState,
    pub log: Vec<EpochRecord>,
}

pub struct Trainer {
    config: TrainConfig,
    params: ModelParams,
    state: AdagradState,
    epoch: usize,
    pool: Option<rayon::ThreadPool>,
}

impl Trainer {
    /// Fresh parameters drawn from the config seed.
    pub fn new(config: TrainConfig, vocab_size: usize) -> Result<Self> {
        config.validate()?;
        let mut params = init_params(vocab_size, config.d, derive_seed(config.seed, INIT_STREAM))?;
        params.f = config.nonlinearity;
        params.g = config.energy_map;
        params.theta = config.theta;
        let state = AdagradState::new(&params);
        Self::resume(config, params, state, 0)
    }

    pub fn resume(
        config: TrainConfig,
        params: ModelParams,
        state: AdagradState,
        epoch: usize,
    ) -> Result<Self> {
        config.validate()?;
        params.validate()?;
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
        Ok(Trainer {
            config,
            params,
            state,
            epoch,
            pool,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn state(&self) -> &AdagradState {
        &self.state
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn into_parts(self) -> (ModelParams, AdagradState) {
        (self.params, self.state)
    }

    fn usable<'c>(&self, corpus: &'c [Sentence]) -> (Vec<(usize, &'c Sentence)>, usize) {
        let cap = self.config.max_sentence_length;
        let kept: Vec<_> = corpus
            .iter()
            .enumerate()
            .filter(|(_, s)| s.len() <= cap)
            .collect();
        (kept.clone(), corpus.len() - kept.len())
    }

    fn map_sentences<T, F>(&self, items: &[(usize, &Sentence)], f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&Sentence) -> Result<T> + Sync + Send,
    {
        let run = |&(idx, s): &(usize, &Sentence)| f(s).map_err(|e| e.at_sentence(idx));
        match &self.pool {
            Some(pool) => pool.install(|| items.par_iter().map(run).collect()),
            None => items.iter().map(run).collect(),
        }
    }

    /// Objective of the current parameters on `corpus`.
    pub fn objective(&self, corpus: &[Sentence]) -> Result<Objective> {
        let (kept, _) = self.usable(corpus);
        let nlls = self.map_sentences(&kept, |s| {
            Ok(-Chart::inside(&self.params, s)?.sentence_log_score())
        })?;
        let nll: f64 = nlls.iter().sum();
        let regularizer = self.config.l2 * self.params.squared_norm();
        Ok(Objective {
            nll,
            regularizer,
            total: nll + regularizer,
        })
    }

    fn sentence_gradient(&self, s: &Sentence) -> Result<Gradients> {
        match self.config.grad_mode {
            GradMode::Em => Ok(EStep::new(&self.params, s)?.gradient(&self.params)),
            GradMode::Direct => Ok(backprop(&self.params, &Chart::inside(&self.params, s)?)),
        }
    }

    /// Log record for the parameters before any update.
    pub fn initial_record(&self, corpus: &[Sentence]) -> Result<EpochRecord> {
        let (kept, skipped) = self.usable(corpus);
        let obj = self.objective(corpus)?;
        Ok(EpochRecord {
            epoch: self.epoch,
            objective: obj.total,
            nll: obj.nll,
            regularizer: obj.regularizer,
            sentences: kept.len(),
            skipped,
            wall_seconds: 0.0,
        })
    }

    /// One pass over `corpus` in a seeded shuffled order.
    pub fn run_epoch(&mut self, corpus: &[Sentence]) -> Result<EpochRecord> {
        let start = Instant::now();
        let (mut kept, skipped) = self.usable(corpus);
        if kept.is_empty() {
            return Err(Error::InvalidConfig(
                "no training sentence within max_sentence_length".into(),
            ));
        }
        for (idx, s) in corpus.iter().enumerate() {
            if s.len() > self.config.max_sentence_length && self.epoch == 0 {
                log::warn!(
                    "skipping sentence {idx}: length {} exceeds {}",
                    s.len(),
                    self.config.max_sentence_length
                );
            }
        }
        self.epoch += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            derive_seed(self.config.seed, SHUFFLE_STREAM),
            self.epoch as u64,
        ));
        kept.shuffle(&mut rng);

        for batch in kept.chunks(self.config.batch_size) {
            let parts = self.map_sentences(batch, |s| self.sentence_gradient(s))?;
            let mut grads = Gradients::zeros_like(&self.params);
            for g in &parts {
                grads.add_assign(g);
            }
            if !grads.is_finite() {
                return Err(Error::NonFinite("gradient".into()).at_sentence(batch[0].0));
            }
            adagrad_step(
                &mut self.params,
                &mut self.state,
                &grads,
                self.config.learning_rate,
                self.config.l2,
                self.config.adagrad_epsilon,
            );
        }
        self.params.validate()?;

        let obj = self.objective(corpus)?;
        Ok(EpochRecord {
            epoch: self.epoch,
            objective: obj.total,
            nll: obj.nll,
            regularizer: obj.regularizer,
            sentences: kept.len(),
            skipped,
            wall_seconds: start.elapsed().as_secs_f64(),
        })
    }
}

/// Trains for `config.epochs` epochs. The log starts with the epoch-0 record.
pub fn train(config: &TrainConfig, corpus: &[Sentence], vocab_size: usize) -> Result<TrainOutcome> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut trainer = Trainer::new(config.clone(), vocab_size)?;
    let mut log = vec![trainer.initial_record(corpus)?];
    for _ in 0..config.epochs {
        log.push(trainer.run_epoch(corpus)?);
    }
    let (params, state) = trainer.into_parts();
    Ok(TrainOutcome { params, state, log })
}

const CHECKPOINT_MAGIC: &str = "#clm-checkpoint 1";

/// Model text followed by the epoch counter and Adagrad accumulators.
pub fn write_checkpoint(
    params: &ModelParams,
    state: &AdagradState,
    epoch: usize,
    vocab_fingerprint: &str,
) -> String {
    let mut out = String::new();
    params.write_text(&mut out, vocab_fingerprint);
    out.push_str(CHECKPOINT_MAGIC);
    out.push('\n');
    out.push_str(&format!("epoch {epoch}\n"));
    textio::write_vector(&mut out, "acc_u", &state.u);
    textio::write_matrix(&mut out, "acc_W", &state.w);
    textio::write_matrix(&mut out, "acc_X", &state.x);
    out
}

/// Parses a checkpoint into parameters, optimizer state, epoch and vocab fingerprint.
pub fn read_checkpoint(text: &str) -> Result<(ModelParams, AdagradState, usize, String)> {
    let mut lines = Lines::new(text);
    let (params, hash) = ModelParams::read_text(&mut lines)?;
    if lines.next_line()? != CHECKPOINT_MAGIC {
        return Err(Error::parse(lines.line_no(), "missing checkpoint section"));
    }
    let epoch: usize = lines.parsed("epoch")?;
    let state = AdagradState {
        u: lines.vector("acc_u")?,
        w: lines.matrix("acc_W")?,
        x: lines.matrix("acc_X")?,
    };
    if state.u.raw_dim() != params.u.raw_dim()
        || state.w.raw_dim() != params.w.raw_dim()
        || state.x.raw_dim() != params.x.raw_dim()
    {
        return Err(Error::parse(
            lines.line_no(),
            "accumulator shapes do not match model",
        ));
    }
    Ok((params, state, epoch, hash))
}
