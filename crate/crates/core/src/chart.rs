//! Inside and outside dynamic programs over spans.
//!
//! Each span `(i, j)` (0-based, inclusive) carries one expected embedding:
//! the mixture of its split compositions weighted by the normalized inside
//! score of each split. Rule factors are therefore functions of the span and
//! split only, and the usual inside/outside recursions are exact.

use ndarray::{Array1, ArrayView1};

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::model::{ModelParams, RuleKind};
use crate::numeric::{log_sum_exp, softmax_into};
use crate::tree::BinaryTree;

/// Filled chart for one sentence.
#[derive(Debug, Clone)]
pub struct Chart {
    n: usize,
    d: usize,
    ids: Vec<usize>,
    inside_log: Vec<f64>,
    /// Per span, log score of each split's contribution (rule + both children).
    split_log: Vec<Vec<f64>>,
    /// Per span, log rule factor of each split.
    rule_log: Vec<Vec<f64>>,
    /// Per span, the normalized mixture weight of each split.
    split_weight: Vec<Vec<f64>>,
    emb: Vec<f64>,
    outside_log: Option<Vec<f64>>,
}

/// Posterior weight of one rule instance, `mu(r) / p(W)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RulePosterior {
    pub span: (usize, usize),
    pub kind: RuleKind,
    pub weight: f64,
}

impl Chart {
    /// Runs the inside pass.
    pub fn inside(params: &ModelParams, s: &Sentence) -> Result<Self> {
        params.check_ids(s.ids())?;
        let n = s.len();
        let d = params.d;
        let mut chart = Chart {
            n,
            d,
            ids: s.ids().to_vec(),
            inside_log: vec![f64::NEG_INFINITY; n * n],
            split_log: vec![Vec::new(); n * n],
            rule_log: vec![Vec::new(); n * n],
            split_weight: vec![Vec::new(); n * n],
            emb: vec![0.0; n * n * d],
            outside_log: None,
        };

        for i in 0..n {
            let idx = chart.idx(i, i);
            let x = params.embedding(chart.ids[i]);
            chart.emb[idx * d..(idx + 1) * d].copy_from_slice(x);
            chart.inside_log[idx] = -params.energy_of(x);
        }

        let ln_theta = params.ln_theta();
        // Scratch for the parent vector of every split of the current span.
        let mut pas = vec![0.0; n.saturating_sub(1) * d];
        for width in 2..=n {
            for i in 0..=n - width {
                let j = i + width - 1;
                let idx = chart.idx(i, j);
                let mut splits = Vec::with_capacity(width - 1);
                let mut rules = Vec::with_capacity(width - 1);
                for (off, pa) in pas.chunks_exact_mut(d).take(width - 1).enumerate() {
                    let k = i + off;
                    let (l, r) = (chart.idx(i, k), chart.idx(k + 1, j));
                    params.compose_into(chart.emb_at(l), chart.emb_at(r), pa);
                    let rl = -params.energy_of(pa) + ln_theta;
                    rules.push(rl);
                    splits.push(rl + chart.inside_log[l] + chart.inside_log[r]);
                }
                let mut weights = vec![0.0; splits.len()];
                let total = softmax_into(&splits, &mut weights);
                if !total.is_finite() {
                    return Err(Error::NonFinite(format!("inside score of span ({i}, {j})")));
                }

                let target = &mut chart.emb[idx * d..(idx + 1) * d];
                target.fill(0.0);
                for (pa, &wk) in pas.chunks_exact(d).zip(&weights) {
                    for (t, p) in target.iter_mut().zip(pa) {
                        *t += wk * p;
                    }
                }
                chart.inside_log[idx] = total;
                chart.split_log[idx] = splits;
                chart.rule_log[idx] = rules;
                chart.split_weight[idx] = weights;
            }
        }

        for i in 0..n {
            let v = chart.inside_log[chart.idx(i, i)];
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("leaf score at position {i}")));
            }
        }
        Ok(chart)
    }

    /// Inside followed by outside.
    pub fn full(params: &ModelParams, s: &Sentence) -> Result<Self> {
        let mut chart = Self::inside(params, s)?;
        chart.outside();
        Ok(chart)
    }

    /// Runs the outside pass using the rule factors frozen during the inside pass.
    pub fn outside(&mut self) {
        self.outside_with_sibling_sign(1.0);
    }

    /// Outside recursion with the sibling inside term scaled by `sign`;
    /// `-1.0` yields a deliberately broken chart for diagnostic tests.
    pub(crate) fn outside_with_sibling_sign(&mut self, sign: f64) {
        let n = self.n;
        let mut out = vec![f64::NEG_INFINITY; n * n];
        out[self.idx(0, n - 1)] = 0.0;
        let mut terms = Vec::with_capacity(n);
        for width in (1..n).rev() {
            for i in 0..=n - width {
                let j = i + width - 1;
                terms.clear();
                // Left child of parent (i, k), split after j.
                for k in j + 1..n {
                    let parent = self.idx(i, k);
                    terms.push(
                        self.rule_log[parent][j - i]
                            + sign * self.inside_log[self.idx(j + 1, k)]
                            + out[parent],
                    );
                }
                // Right child of parent (k, j), split after i - 1.
                for k in 0..i {
                    let parent = self.idx(k, j);
                    terms.push(
                        self.rule_log[parent][i - 1 - k]
                            + sign * self.inside_log[self.idx(k, i - 1)]
                            + out[parent],
                    );
                }
                out[self.idx(i, j)] = log_sum_exp(&terms);
            }
        }
        self.outside_log = Some(out);
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    #[inline]
    fn emb_at(&self, idx: usize) -> &[f64] {
        &self.emb[idx * self.d..(idx + 1) * self.d]
    }

    fn check_span(&self, i: usize, j: usize) -> Result<usize> {
        if i <= j && j < self.n {
            Ok(self.idx(i, j))
        } else {
            Err(Error::SpanOutOfRange { i, j, n: self.n })
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    /// `ln p(W)`, the inside score of the full span.
    pub fn sentence_log_score(&self) -> f64 {
        self.inside_log[self.idx(0, self.n - 1)]
    }

    pub fn inside_log(&self, i: usize, j: usize) -> Result<f64> {
        Ok(self.inside_log[self.check_span(i, j)?])
    }

    pub fn outside_log(&self, i: usize, j: usize) -> Result<f64> {
        let idx = self.check_span(i, j)?;
        let out = self.outside_log.as_ref().ok_or(Error::OutsideNotComputed)?;
        Ok(out[idx])
    }

    pub fn has_outside(&self) -> bool {
        self.outside_log.is_some()
    }

    /// Log contributions of each split of `(i, j)`, indexed by `k - i`.
    pub fn split_log(&self, i: usize, j: usize) -> Result<&[f64]> {
        Ok(&self.split_log[self.check_span(i, j)?])
    }

    /// Log rule factors of each split of `(i, j)`, indexed by `k - i`.
    pub fn rule_log(&self, i: usize, j: usize) -> Result<&[f64]> {
        Ok(&self.rule_log[self.check_span(i, j)?])
    }

    /// Mixture weights of the splits of `(i, j)`; they sum to one.
    pub fn split_weights(&self, i: usize, j: usize) -> Result<&[f64]> {
        Ok(&self.split_weight[self.check_span(i, j)?])
    }

    /// Expected phrase embedding of span `(i, j)`.
    pub fn expected_embedding(&self, i: usize, j: usize) -> Result<ArrayView1<'_, f64>> {
        let idx = self.check_span(i, j)?;
        Ok(ArrayView1::from(self.emb_at(idx)))
    }

    /// Posterior weights of every rule instance: leaves first, then binary
    /// rules ordered by span and split.
    pub fn rule_posteriors(&self) -> Result<Vec<RulePosterior>> {
        let out = self.outside_log.as_ref().ok_or(Error::OutsideNotComputed)?;
        let total = self.sentence_log_score();
        let mut post: Vec<RulePosterior> = (0..self.n)
            .map(|i| RulePosterior {
                span: (i, i),
                kind: RuleKind::Leaf,
                weight: 1.0,
            })
            .collect();
        for i in 0..self.n {
            for j in i + 1..self.n {
                let idx = self.idx(i, j);
                for (off, s) in self.split_log[idx].iter().enumerate() {
                    post.push(RulePosterior {
                        span: (i, j),
                        kind: RuleKind::Binary { split: i + off },
                        weight: (s + out[idx] - total).exp(),
                    });
                }
            }
        }
        Ok(post)
    }

    /// Binary posteriors arranged like `split_log`: one vector per span.
    pub(crate) fn split_posteriors(&self) -> Result<Vec<Vec<f64>>> {
        let out = self.outside_log.as_ref().ok_or(Error::OutsideNotComputed)?;
        let total = self.sentence_log_score();
        Ok(self
            .split_log
            .iter()
            .zip(out)
            .map(|(splits, o)| splits.iter().map(|s| (s + o - total).exp()).collect())
            .collect())
    }

    /// Max-product tree over the rule factors of this chart. Ties go to the
    /// leftmost split.
    pub fn viterbi(&self) -> (BinaryTree, f64) {
        let n = self.n;
        let mut best = vec![f64::NEG_INFINITY; n * n];
        let mut back = vec![0usize; n * n];
        for i in 0..n {
            best[self.idx(i, i)] = self.inside_log[self.idx(i, i)];
        }
        for width in 2..=n {
            for i in 0..=n - width {
                let j = i + width - 1;
                let idx = self.idx(i, j);
                for (off, rl) in self.rule_log[idx].iter().enumerate() {
                    let k = i + off;
                    let v = rl + best[self.idx(i, k)] + best[self.idx(k + 1, j)];
                    if v > best[idx] {
                        best[idx] = v;
                        back[idx] = k;
                    }
                }
            }
        }
        let tree = self.backtrack(&back, 0, n - 1);
        (tree, best[self.idx(0, n - 1)])
    }

    fn backtrack(&self, back: &[usize], i: usize, j: usize) -> BinaryTree {
        if i == j {
            return BinaryTree::Leaf(i);
        }
        let k = back[self.idx(i, j)];
        BinaryTree::node(self.backtrack(back, i, k), self.backtrack(back, k + 1, j))
    }
}

/// Viterbi tree and its log score for `s`.
pub fn viterbi_tree(params: &ModelParams, s: &Sentence) -> Result<(BinaryTree, f64)> {
    Ok(Chart::inside(params, s)?.viterbi())
}

/// Log score of the single left-branching tree, composing children along
/// that one path.
pub fn chain_tree_log_score(params: &ModelParams, s: &Sentence) -> Result<f64> {
    params.check_ids(s.ids())?;
    let ids = s.ids();
    let mut total: f64 = ids
        .iter()
        .map(|&id| -params.energy_of(params.embedding(id)))
        .sum();
    let mut acc = params.embedding(ids[0]).to_vec();
    let mut next = vec![0.0; params.d];
    for &id in &ids[1..] {
        params.compose_into(&acc, params.embedding(id), &mut next);
        total += -params.energy_of(&next) + params.ln_theta();
        std::mem::swap(&mut acc, &mut next);
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("chain tree score".into()));
    }
    Ok(total)
}

/// Copies an expected embedding out of the chart.
pub fn expected_embedding(chart: &Chart, i: usize, j: usize) -> Result<Array1<f64>> {
    chart.expected_embedding(i, j).map(|v| v.to_owned())
}
