//! Forward-mode derivatives of phrase embeddings.
//!
//! For a leaf, `d pa / d W = 0` and `d pa / d x_v` is the identity when the
//! leaf is word `v` and zero otherwise. For a composition `pa = f(W c)` with
//! `c = [c1; c2]`,
//!
//! * `d pa / d W_ab = f'(z) . (e_a c_b + W d c / d W_ab)`
//! * `d pa / d x_v = f'(z) . W d c / d x_v`
//!
//! and a span's expected embedding mixes its splits' Jacobians with the
//! frozen mixture weights. Jacobians w.r.t. `W` are stored as `d x (d * 2d)`
//! matrices whose column `a * 2d + b` is the derivative w.r.t. `W[a, b]`.

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2};

use crate::chart::Chart;
use crate::corpus::Sentence;
use crate::error::Result;
use crate::model::ModelParams;

use super::{EStep, Gradients};

/// Derivatives of one node embedding w.r.t. `W` and each word embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeJacobian {
    pub embedding: Array1<f64>,
    /// `d x (d * 2d)`.
    pub d_w: Array2<f64>,
    /// `d x d` per word id that occurs under the node.
    pub d_x: BTreeMap<usize, Array2<f64>>,
}

impl NodeJacobian {
    fn leaf(params: &ModelParams, word: usize) -> Self {
        let d = params.d;
        NodeJacobian {
            embedding: params.x.row(word).to_owned(),
            d_w: Array2::zeros((d, 2 * d * d)),
            d_x: BTreeMap::from([(word, Array2::eye(d))]),
        }
    }

    /// Jacobian of `f(W [c1; c2])` from the children's Jacobians.
    pub fn compose(params: &ModelParams, left: &NodeJacobian, right: &NodeJacobian) -> Self {
        let d = params.d;
        let pa = params
            .compose(left.embedding.view(), right.embedding.view())
            .expect("child shapes match");
        let fprime: Array1<f64> = pa.mapv(|y| params.f.derivative_at_output(y));
        let w_left = params.w.slice(s![.., ..d]);
        let w_right = params.w.slice(s![.., d..]);

        let mut d_w = w_left.dot(&left.d_w) + w_right.dot(&right.d_w);
        let c: Vec<f64> = left
            .embedding
            .iter()
            .chain(&right.embedding)
            .copied()
            .collect();
        for a in 0..d {
            for (b, cb) in c.iter().enumerate() {
                d_w[[a, a * 2 * d + b]] += cb;
            }
        }
        for (mut row, fp) in d_w.rows_mut().into_iter().zip(&fprime) {
            row *= *fp;
        }

        let mut d_x = BTreeMap::new();
        let words: std::collections::BTreeSet<usize> =
            left.d_x.keys().chain(right.d_x.keys()).copied().collect();
        for v in words {
            let mut m = Array2::<f64>::zeros((d, d));
            if let Some(jl) = left.d_x.get(&v) {
                m += &w_left.dot(jl);
            }
            if let Some(jr) = right.d_x.get(&v) {
                m += &w_right.dot(jr);
            }
            for (mut row, fp) in m.rows_mut().into_iter().zip(&fprime) {
                row *= *fp;
            }
            d_x.insert(v, m);
        }
        NodeJacobian {
            embedding: pa,
            d_w,
            d_x,
        }
    }

    fn mix(parts: &[(f64, NodeJacobian)], d: usize) -> Self {
        let mut out = NodeJacobian {
            embedding: Array1::zeros(d),
            d_w: Array2::zeros((d, 2 * d * d)),
            d_x: BTreeMap::new(),
        };
        for (wk, j) in parts {
            out.embedding.scaled_add(*wk, &j.embedding);
            out.d_w.scaled_add(*wk, &j.d_w);
            for (v, m) in &j.d_x {
                out.d_x
                    .entry(*v)
                    .or_insert_with(|| Array2::zeros((d, d)))
                    .scaled_add(*wk, m);
            }
        }
        out
    }
}

/// Jacobians of every span's expected embedding under frozen mixture weights.
#[derive(Debug, Clone)]
pub struct SpanJacobians {
    n: usize,
    nodes: Vec<Option<NodeJacobian>>,
}

impl SpanJacobians {
    pub fn compute(params: &ModelParams, estep: &EStep) -> Self {
        let n = estep.len();
        let mut nodes: Vec<Option<NodeJacobian>> = vec![None; n * n];
        for i in 0..n {
            nodes[i * n + i] = Some(NodeJacobian::leaf(params, estep.ids()[i]));
        }
        for width in 2..=n {
            for i in 0..=n - width {
                let j = i + width - 1;
                let parts: Vec<(f64, NodeJacobian)> = (i..j)
                    .map(|k| {
                        let l = nodes[i * n + k].as_ref().unwrap();
                        let r = nodes[(k + 1) * n + j].as_ref().unwrap();
                        (estep.weight(i, k, j), NodeJacobian::compose(params, l, r))
                    })
                    .collect();
                nodes[i * n + j] = Some(NodeJacobian::mix(&parts, params.d));
            }
        }
        SpanJacobians { n, nodes }
    }

    /// Jacobian of the expected embedding of span `(i, j)`.
    pub fn span(&self, i: usize, j: usize) -> &NodeJacobian {
        assert!(i <= j && j < self.n, "span out of range");
        self.nodes[i * self.n + j].as_ref().unwrap()
    }

    /// Jacobian of the parent of span `(i, j)` split after `k`, before mixing.
    pub fn split(&self, params: &ModelParams, i: usize, k: usize, j: usize) -> NodeJacobian {
        NodeJacobian::compose(params, self.span(i, k), self.span(k + 1, j))
    }
}

/// Per-span embedding Jacobians under the mixture weights of `chart`.
pub fn compose_grad_params(params: &ModelParams, chart: &Chart) -> Result<SpanJacobians> {
    let estep = EStep::from_chart(chart)?;
    Ok(SpanJacobians::compute(params, &estep))
}

/// EM gradient assembled from forward-mode Jacobians: for every rule,
/// `posterior * g'(u . pa) * (pa, u^T d pa / d W, u^T d pa / d X)`.
pub fn em_gradient_forward(params: &ModelParams, s: &Sentence) -> Result<Gradients> {
    let chart = Chart::full(params, s)?;
    let estep = EStep::from_chart(&chart)?;
    let jac = SpanJacobians::compute(params, &estep);
    let mut grads = Gradients::zeros_like(params);
    let n = estep.len();
    let d = params.d;

    let mut accumulate = |node: &NodeJacobian, weight: f64| {
        let gprime = params.g.derivative(params.u.dot(&node.embedding));
        let scale = weight * gprime;
        grads.du.scaled_add(scale, &node.embedding);
        let uw = params.u.dot(&node.d_w);
        for (flat, v) in uw.iter().enumerate() {
            grads.dw[[flat / (2 * d), flat % (2 * d)]] += scale * v;
        }
        for (word, m) in &node.d_x {
            let ux = params.u.dot(m);
            grads.dx.row_mut(*word).scaled_add(scale, &ux);
        }
    };

    for i in 0..n {
        accumulate(jac.span(i, i), 1.0);
    }
    for i in 0..n {
        for j in i + 1..n {
            for k in i..j {
                accumulate(&jac.split(params, i, k, j), estep.posterior(i, k, j));
            }
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;
    use crate::training::em_gradient;
    use ndarray::array;

    #[test]
    fn leaf_base_cases() {
        let p = init_params(4, 3, 1).unwrap();
        let leaf = NodeJacobian::leaf(&p, 2);
        assert!(leaf.d_w.iter().all(|&v| v == 0.0));
        assert_eq!(leaf.d_x.len(), 1);
        assert_eq!(leaf.d_x[&2], Array2::<f64>::eye(3));
    }

    #[test]
    fn width_two_weight_derivative_is_scaled_children() {
        let x = array![[0.3], [-0.5]];
        let p = ModelParams::new(x, array![[0.8, 0.4]], array![1.0]).unwrap();
        let j = NodeJacobian::compose(&p, &NodeJacobian::leaf(&p, 0), &NodeJacobian::leaf(&p, 1));
        let fprime = 1.0 - j.embedding[0].powi(2);
        assert!((j.d_w[[0, 0]] - fprime * 0.3).abs() < 1e-15);
        assert!((j.d_w[[0, 1]] - fprime * -0.5).abs() < 1e-15);
    }

    #[test]
    fn forward_and_reverse_em_gradients_agree() {
        for seed in 0..4 {
            let p = init_params(6, 3, seed).unwrap();
            let s = Sentence::new(vec![0, 3, 5, 3, 1]).unwrap();
            let a = em_gradient(&p, &s).unwrap();
            let b = em_gradient_forward(&p, &s).unwrap();
            assert!(a.max_abs_difference(&b) < 1e-12, "seed {seed}");
        }
    }
}
