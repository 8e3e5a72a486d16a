//! Compositional language model.
//!
//! A sentence is scored by summing, over every binary composition tree, the
//! product of per-rule factors `exp(-E)`. Phrase embeddings are composed
//! recursively and each span keeps one expected embedding, which keeps the
//! marginal computable by an inside pass in `O(n^3 d^2)`. Parameters are
//! trained by generalized EM with Adagrad and evaluated with contrastive
//! entropy, which compares scores of test sentences and distorted copies.

#![allow(clippy::needless_range_loop)]

pub mod chart;
pub mod corpus;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod model;
pub mod numeric;
pub mod oracle;
pub mod synthetic;
mod textio;
pub mod training;
pub mod tree;

pub use chart::{chain_tree_log_score, viterbi_tree, Chart, RulePosterior};
pub use corpus::{distort, DistortionSpec, Sentence, Vocab};
pub use error::{Error, Result};
pub use eval::{
    contrastive_entropy, contrastive_ratio, evaluate, sentence_entropy, EvalConfig, EvalReport,
};
pub use model::{init_params, EnergyMap, ModelParams, Nonlinearity, RuleInstance, RuleKind};
pub use oracle::brute_force_log_score;
pub use training::{
    direct_gradient, em_gradient, q_objective, sentence_nll, train, GradMode, Gradients,
    TrainConfig,
};
pub use tree::{catalan, enumerate_trees, BinaryTree};
