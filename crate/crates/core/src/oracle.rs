//! Brute-force evaluation of the marginal by explicit tree enumeration.
//!
//! Shares no code with the chart's recursions: every span's expected
//! embedding and every split weight is rebuilt from the enumerated trees of
//! that span, and the sentence score is a log-sum-exp over whole trees.

use std::collections::HashMap;

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numeric::log_sum_exp;
use crate::tree::{trees_over, BinaryTree, ENUMERATION_CAP};

/// Enumerates every tree of a sentence and scores it.
pub struct TreeOracle<'a> {
    params: &'a ModelParams,
    ids: Vec<usize>,
    embeddings: HashMap<(usize, usize), Vec<f64>>,
}

impl<'a> TreeOracle<'a> {
    pub fn new(params: &'a ModelParams, s: &Sentence) -> Result<Self> {
        if s.len() > ENUMERATION_CAP {
            return Err(Error::EnumerationCap {
                n: s.len(),
                cap: ENUMERATION_CAP,
            });
        }
        params.check_ids(s.ids())?;
        Ok(TreeOracle {
            params,
            ids: s.ids().to_vec(),
            embeddings: HashMap::new(),
        })
    }

    /// Expected embedding of `(i, j)`: split compositions weighted by the
    /// total score of the enumerated trees with that top split.
    pub fn embedding(&mut self, i: usize, j: usize) -> Vec<f64> {
        if let Some(e) = self.embeddings.get(&(i, j)) {
            return e.clone();
        }
        let e = if i == j {
            self.params.x.row(self.ids[i]).to_vec()
        } else {
            let mut by_split: Vec<Vec<f64>> = vec![Vec::new(); j - i];
            for t in trees_over(i, j) {
                let BinaryTree::Node(l, _) = &t else {
                    unreachable!()
                };
                let k = l.span().1;
                let score = self.tree_log_score(&t);
                by_split[k - i].push(score);
            }
            let mass: Vec<f64> = by_split.iter().map(|s| log_sum_exp(s)).collect();
            let total = log_sum_exp(&mass);
            let mut e = vec![0.0; self.params.d];
            for (off, m) in mass.iter().enumerate() {
                let k = i + off;
                let pa = self.parent(i, k, j);
                let wk = (m - total).exp();
                for (a, p) in e.iter_mut().zip(&pa) {
                    *a += wk * p;
                }
            }
            e
        };
        self.embeddings.insert((i, j), e.clone());
        e
    }

    fn parent(&mut self, i: usize, k: usize, j: usize) -> Vec<f64> {
        let c1 = ndarray::Array1::from(self.embedding(i, k));
        let c2 = ndarray::Array1::from(self.embedding(k + 1, j));
        self.params
            .compose(c1.view(), c2.view())
            .expect("shapes match")
            .to_vec()
    }

    fn energy(&self, pa: &[f64]) -> f64 {
        let a: f64 = self.params.u.iter().zip(pa).map(|(u, p)| u * p).sum();
        self.params.g.apply(a)
    }

    /// Sum of log rule factors over the tree's leaves and internal nodes.
    pub fn tree_log_score(&mut self, t: &BinaryTree) -> f64 {
        let leaves: f64 = t
            .leaves()
            .into_iter()
            .map(|i| {
                let x = self.params.x.row(self.ids[i]).to_vec();
                -self.energy(&x)
            })
            .sum();
        let ln_theta = self.params.theta.ln();
        let rules: f64 = t
            .internal_nodes()
            .into_iter()
            .map(|(i, k, j)| {
                let pa = self.parent(i, k, j);
                -self.energy(&pa) + ln_theta
            })
            .sum();
        leaves + rules
    }

    /// Every tree of the full sentence with its log score.
    pub fn scored_trees(&mut self) -> Vec<(BinaryTree, f64)> {
        trees_over(0, self.ids.len() - 1)
            .into_iter()
            .map(|t| {
                let s = self.tree_log_score(&t);
                (t, s)
            })
            .collect()
    }

    /// `ln sum_t prod_r zeta_r`.
    pub fn log_score(&mut self) -> f64 {
        let scores: Vec<f64> = self.scored_trees().into_iter().map(|(_, s)| s).collect();
        log_sum_exp(&scores)
    }
}

/// Log marginal score of `s` by enumerating every tree.
pub fn brute_force_log_score(params: &ModelParams, s: &Sentence) -> Result<f64> {
    Ok(TreeOracle::new(params, s)?.log_score())
}
