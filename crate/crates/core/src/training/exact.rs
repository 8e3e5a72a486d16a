//! Exact gradient of the sentence NLL through the full inside recursion,
//! including the dependence of the mixture weights on the parameters.

use ndarray::Array2;

use crate::chart::Chart;
use crate::corpus::Sentence;
use crate::error::Result;
use crate::model::ModelParams;

use super::Gradients;

/// `d(-ln p(W)) / d(params)` by reverse accumulation over the chart.
pub fn direct_gradient(params: &ModelParams, s: &Sentence) -> Result<Gradients> {
    let chart = Chart::inside(params, s)?;
    Ok(backprop(params, &chart))
}

pub(crate) fn backprop(params: &ModelParams, chart: &Chart) -> Gradients {
    let n = chart.len();
    let d = params.d;
    let ids = chart.ids();
    let w = &params.w;
    let mut grads = Gradients::zeros_like(params);
    // Adjoints of each span's inside log score and expected embedding.
    let mut adj_inside = vec![0.0; n * n];
    let mut adj_emb = Array2::<f64>::zeros((n * n, d));
    adj_inside[n - 1] = -1.0;

    let mut c = vec![0.0; 2 * d];
    let mut pa = vec![0.0; d];
    let mut adj_pa = vec![0.0; d];
    let mut delta = vec![0.0; d];

    for width in (2..=n).rev() {
        for i in 0..=n - width {
            let j = i + width - 1;
            let idx = i * n + j;
            let weights = chart.split_weights(i, j).expect("span in range");
            let span_adj = adj_emb.row(idx).to_owned();
            let span_adj_inside = adj_inside[idx];

            // Mean of the embedding adjoint projected on each split's parent,
            // needed for the softmax backward step.
            let mut projections = Vec::with_capacity(width - 1);
            for k in i..j {
                fill_children(chart, i, k, j, &mut c);
                params.compose_into(&c[..d], &c[d..], &mut pa);
                projections.push(span_adj.iter().zip(&pa).map(|(a, p)| a * p).sum::<f64>());
            }
            let mean: f64 = weights.iter().zip(&projections).map(|(w, p)| w * p).sum();

            for (off, k) in (i..j).enumerate() {
                let wk = weights[off];
                let adj_split = wk * span_adj_inside + wk * (projections[off] - mean);
                adj_inside[i * n + k] += adj_split;
                adj_inside[(k + 1) * n + j] += adj_split;

                fill_children(chart, i, k, j, &mut c);
                params.compose_into(&c[..d], &c[d..], &mut pa);
                // rule log = -g(u . pa) + ln theta
                let adj_arg = -adj_split * params.g.derivative(params.score_arg(&pa));
                for a in 0..d {
                    grads.du[a] += adj_arg * pa[a];
                    adj_pa[a] = wk * span_adj[a] + adj_arg * params.u[a];
                    delta[a] = adj_pa[a] * params.f.derivative_at_output(pa[a]);
                }
                for a in 0..d {
                    for b in 0..2 * d {
                        grads.dw[[a, b]] += delta[a] * c[b];
                    }
                }
                for b in 0..2 * d {
                    let back: f64 = (0..d).map(|a| w[[a, b]] * delta[a]).sum();
                    if b < d {
                        adj_emb[[i * n + k, b]] += back;
                    } else {
                        adj_emb[[(k + 1) * n + j, b - d]] += back;
                    }
                }
            }
        }
    }

    for i in 0..n {
        let idx = i * n + i;
        let x = params.x.row(ids[i]);
        let adj_arg = -adj_inside[idx] * params.g.derivative(params.u.dot(&x));
        for a in 0..d {
            grads.du[a] += adj_arg * x[a];
            grads.dx[[ids[i], a]] += adj_emb[[idx, a]] + adj_arg * params.u[a];
        }
    }
    grads
}

fn fill_children(chart: &Chart, i: usize, k: usize, j: usize, out: &mut [f64]) {
    let d = chart.dim();
    let left = chart.expected_embedding(i, k).expect("span in range");
    let right = chart.expected_embedding(k + 1, j).expect("span in range");
    for (o, v) in out[..d].iter_mut().zip(left.iter()) {
        *o = *v;
    }
    for (o, v) in out[d..].iter_mut().zip(right.iter()) {
        *o = *v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;
    use crate::training::em_gradient;

    #[test]
    fn single_word_gradient() {
        let p = init_params(4, 3, 2).unwrap();
        let s = Sentence::new(vec![1]).unwrap();
        let g = direct_gradient(&p, &s).unwrap();
        // NLL = u . x, so dX[1] = u and du = x.
        for a in 0..3 {
            assert!((g.dx[[1, a]] - p.u[a]).abs() < 1e-15);
            assert!((g.du[a] - p.x[[1, a]]).abs() < 1e-15);
        }
        assert!(g.dw.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn agrees_with_em_without_mixtures() {
        for seed in 0..5 {
            let p = init_params(5, 4, seed).unwrap();
            for ids in [vec![3], vec![0, 4], vec![2, 2]] {
                let s = Sentence::new(ids).unwrap();
                let a = direct_gradient(&p, &s).unwrap();
                let b = em_gradient(&p, &s).unwrap();
                assert!(a.max_abs_difference(&b) < 1e-14);
            }
        }
    }
}
