//! Expected complete-data objective and its gradient.
//!
//! The E-step freezes two things computed under the old parameters: the rule
//! posteriors and each span's split mixture weights. Under new parameters the
//! expected embeddings are rebuilt bottom-up with those frozen weights, and
//! the objective is the posterior-weighted sum of rule energies.

use ndarray::{Array1, Array2};

use crate::chart::Chart;
use crate::corpus::Sentence;
use crate::error::Result;
use crate::model::ModelParams;

use super::Gradients;

/// Posteriors and mixture weights frozen from a chart.
#[derive(Debug, Clone)]
pub struct EStep {
    n: usize,
    ids: Vec<usize>,
    /// Per span index `i * n + j`, binary posteriors of each split.
    posteriors: Vec<Vec<f64>>,
    /// Per span index, mixture weight of each split.
    weights: Vec<Vec<f64>>,
}

impl EStep {
    pub fn new(params_old: &ModelParams, s: &Sentence) -> Result<Self> {
        let chart = Chart::full(params_old, s)?;
        Self::from_chart(&chart)
    }

    pub fn from_chart(chart: &Chart) -> Result<Self> {
        let n = chart.len();
        let posteriors = chart.split_posteriors()?;
        let mut weights = vec![Vec::new(); n * n];
        for i in 0..n {
            for j in i + 1..n {
                weights[i * n + j] = chart.split_weights(i, j)?.to_vec();
            }
        }
        Ok(EStep {
            n,
            ids: chart.ids().to_vec(),
            posteriors,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    /// Posterior of the binary rule over `(i, j)` split after `k`.
    pub fn posterior(&self, i: usize, k: usize, j: usize) -> f64 {
        self.posteriors[i * self.n + j][k - i]
    }

    /// Frozen mixture weight of split `k` of span `(i, j)`.
    pub fn weight(&self, i: usize, k: usize, j: usize) -> f64 {
        self.weights[i * self.n + j][k - i]
    }

    /// Expected embeddings under `params` with the frozen mixture weights,
    /// as a `(n * n) x d` table indexed by `i * n + j`.
    pub fn span_embeddings(&self, params: &ModelParams) -> Array2<f64> {
        let (n, d) = (self.n, params.d);
        let mut emb = Array2::zeros((n * n, d));
        for i in 0..n {
            emb.row_mut(i * n + i).assign(&params.x.row(self.ids[i]));
        }
        let mut pa = vec![0.0; d];
        for width in 2..=n {
            for i in 0..=n - width {
                let j = i + width - 1;
                let mut acc = Array1::<f64>::zeros(d);
                for k in i..j {
                    let c1 = emb.row(i * n + k).to_vec();
                    let c2 = emb.row((k + 1) * n + j).to_vec();
                    params.compose_into(&c1, &c2, &mut pa);
                    let wk = self.weight(i, k, j);
                    acc.zip_mut_with(&Array1::from(pa.clone()), |a, p| *a += wk * p);
                }
                emb.row_mut(i * n + j).assign(&acc);
            }
        }
        emb
    }

    /// `Q(params) = -sum_r posterior(r) ln zeta_r(params)`.
    pub fn q_value(&self, params: &ModelParams) -> f64 {
        let n = self.n;
        let emb = self.span_embeddings(params);
        let ln_theta = params.ln_theta();
        let mut q = 0.0;
        for i in 0..n {
            q += params.energy_of(emb.row(i * n + i).as_slice().unwrap());
        }
        let mut pa = vec![0.0; params.d];
        for i in 0..n {
            for j in i + 1..n {
                for k in i..j {
                    let c1 = emb.row(i * n + k);
                    let c2 = emb.row((k + 1) * n + j);
                    params.compose_into(c1.as_slice().unwrap(), c2.as_slice().unwrap(), &mut pa);
                    q += self.posterior(i, k, j) * (params.energy_of(&pa) - ln_theta);
                }
            }
        }
        q
    }

    /// Gradient of [`q_value`](Self::q_value) by reverse accumulation, with
    /// posteriors and mixture weights held constant.
    pub fn gradient(&self, params: &ModelParams) -> Gradients {
        let (n, d) = (self.n, params.d);
        let emb = self.span_embeddings(params);
        let mut grads = Gradients::zeros_like(params);
        let mut adj = Array2::<f64>::zeros((n * n, d));
        let mut pa = vec![0.0; d];
        let mut delta = vec![0.0; d];
        let w = &params.w;

        for width in (2..=n).rev() {
            for i in 0..=n - width {
                let j = i + width - 1;
                let span_adj = adj.row(i * n + j).to_owned();
                for k in i..j {
                    let (l, r) = (i * n + k, (k + 1) * n + j);
                    let c: Vec<f64> = emb
                        .row(l)
                        .iter()
                        .chain(emb.row(r).iter())
                        .copied()
                        .collect();
                    params.compose_into(&c[..d], &c[d..], &mut pa);
                    let post = self.posterior(i, k, j);
                    let wk = self.weight(i, k, j);
                    let gprime = params.g.derivative(params.score_arg(&pa));
                    for a in 0..d {
                        grads.du[a] += post * gprime * pa[a];
                        let adj_pa = wk * span_adj[a] + post * gprime * params.u[a];
                        delta[a] = adj_pa * params.f.derivative_at_output(pa[a]);
                    }
                    for a in 0..d {
                        for b in 0..2 * d {
                            grads.dw[[a, b]] += delta[a] * c[b];
                        }
                    }
                    for b in 0..2 * d {
                        let back: f64 = (0..d).map(|a| w[[a, b]] * delta[a]).sum();
                        if b < d {
                            adj[[l, b]] += back;
                        } else {
                            adj[[r, b - d]] += back;
                        }
                    }
                }
            }
        }

        for i in 0..n {
            let x = params.x.row(self.ids[i]);
            let gprime = params.g.derivative(params.u.dot(&x));
            for a in 0..d {
                grads.du[a] += gprime * x[a];
                grads.dx[[self.ids[i], a]] += adj[[i * n + i, a]] + gprime * params.u[a];
            }
        }
        grads
    }
}

/// `Q(params; params_old)` for one sentence.
pub fn q_objective(params_old: &ModelParams, params: &ModelParams, s: &Sentence) -> Result<f64> {
    Ok(EStep::new(params_old, s)?.q_value(params))
}

/// Gradient of `Q(.; params)` evaluated at `params`.
pub fn em_gradient(params: &ModelParams, s: &Sentence) -> Result<Gradients> {
    Ok(EStep::new(params, s)?.gradient(params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;
    use crate::training::sentence_nll;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn sent(ids: &[usize]) -> Sentence {
        Sentence::new(ids.to_vec()).unwrap()
    }

    #[test]
    fn q_equals_nll_for_two_words() {
        let p = init_params(4, 3, 1).unwrap();
        let s = sent(&[0, 3]);
        assert_abs_diff_eq!(
            q_objective(&p, &p, &s).unwrap(),
            sentence_nll(&p, &s).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn q_vanishes_without_scoring_vector() {
        let mut old = init_params(4, 3, 1).unwrap();
        let mut new = init_params(4, 3, 2).unwrap();
        old.u.fill(0.0);
        new.u.fill(0.0);
        assert_eq!(
            q_objective(&old, &new, &sent(&[0, 1, 2, 3, 1])).unwrap(),
            0.0
        );
    }

    #[test]
    fn q_three_words_by_hand() {
        // d = 1. Under the old parameters the two splits of span (0, 2) share
        // posterior and mixture weight w1/w2; spans (0, 1) and (1, 2) each
        // appear with the posterior of the split that uses them.
        let x = array![[0.4], [-0.8], [0.3]];
        let old = ModelParams::new(x.clone(), array![[0.9, -0.6]], array![1.3]).unwrap();
        let new = ModelParams::new(x * 1.1, array![[0.7, -0.2]], array![0.5]).unwrap();
        let s = sent(&[0, 1, 2]);

        let t = |z: f64| z.tanh();
        let (x1, x2, x3) = (0.4, -0.8, 0.3);
        let p12 = t(0.9 * x1 - 0.6 * x2);
        let p23 = t(0.9 * x2 - 0.6 * x3);
        let e = |v: f64| 1.3 * v;
        let leaves = -e(x1) - e(x2) - e(x3);
        let s1 = leaves - e(p23) - e(t(0.9 * x1 - 0.6 * p23));
        let s2 = leaves - e(p12) - e(t(0.9 * p12 - 0.6 * x3));
        let w1 = s1.exp() / (s1.exp() + s2.exp());
        let w2 = 1.0 - w1;

        let (y1, y2, y3) = (1.1 * x1, 1.1 * x2, 1.1 * x3);
        let q12 = t(0.7 * y1 - 0.2 * y2);
        let q23 = t(0.7 * y2 - 0.2 * y3);
        let q1_23 = t(0.7 * y1 - 0.2 * q23);
        let q12_3 = t(0.7 * q12 - 0.2 * y3);
        let en = |v: f64| 0.5 * v;
        // Five rule instances: three leaves and the two trees' internal nodes.
        let expect =
            en(y1) + en(y2) + en(y3) + w1 * (en(q23) + en(q1_23)) + w2 * (en(q12) + en(q12_3));
        assert_abs_diff_eq!(
            q_objective(&old, &new, &s).unwrap(),
            expect,
            epsilon = 1e-14
        );
    }

    #[test]
    fn zero_scoring_vector_gradient_is_posterior_mass() {
        let mut p = init_params(4, 3, 5).unwrap();
        p.u.fill(0.0);
        let s = sent(&[0, 2, 1, 3]);
        let g = em_gradient(&p, &s).unwrap();
        let chart = Chart::full(&p, &s).unwrap();
        let step = EStep::from_chart(&chart).unwrap();
        let emb = step.span_embeddings(&p);
        let mut want = Array1::<f64>::zeros(3);
        for i in 0..4 {
            want += &emb.row(i * 4 + i);
        }
        for i in 0..4 {
            for j in i + 1..4 {
                for k in i..j {
                    let pa = p
                        .compose(emb.row(i * 4 + k), emb.row((k + 1) * 4 + j))
                        .unwrap();
                    want.scaled_add(step.posterior(i, k, j), &pa);
                }
            }
        }
        assert_abs_diff_eq!(g.du, want, epsilon = 1e-13);
        assert!(g.dw.iter().all(|&v| v == 0.0));
        assert!(g.dx.iter().all(|&v| v == 0.0));
    }
}
