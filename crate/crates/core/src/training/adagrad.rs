use ndarray::{Array1, Array2, ArrayViewMut, Dimension, Zip};

use crate::model::ModelParams;

use super::Gradients;

/// Running sums of squared gradients, one per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdagradState {
    pub x: Array2<f64>,
    pub w: Array2<f64>,
    pub u: Array1<f64>,
}

impl AdagradState {
    pub fn new(params: &ModelParams) -> Self {
        AdagradState {
            x: Array2::zeros(params.x.raw_dim()),
            w: Array2::zeros(params.w.raw_dim()),
            u: Array1::zeros(params.u.raw_dim()),
        }
    }
}

/// One Adagrad update. The gradient is augmented with `2 * l2 * param`
/// before accumulation, so `param -= lr * g / (sqrt(acc) + eps)`.
pub fn adagrad_step(
    params: &mut ModelParams,
    state: &mut AdagradState,
    grads: &Gradients,
    learning_rate: f64,
    l2: f64,
    epsilon: f64,
) {
    update(
        params.x.view_mut(),
        state.x.view_mut(),
        &grads.dx,
        learning_rate,
        l2,
        epsilon,
    );
    update(
        params.w.view_mut(),
        state.w.view_mut(),
        &grads.dw,
        learning_rate,
        l2,
        epsilon,
    );
    update(
        params.u.view_mut(),
        state.u.view_mut(),
        &grads.du,
        learning_rate,
        l2,
        epsilon,
    );
}

fn update<D: Dimension>(
    param: ArrayViewMut<'_, f64, D>,
    acc: ArrayViewMut<'_, f64, D>,
    grad: &ndarray::Array<f64, D>,
    lr: f64,
    l2: f64,
    eps: f64,
) {
    Zip::from(param).and(acc).and(grad).for_each(|p, a, &g| {
        let g = g + 2.0 * l2 * *p;
        *a += g * g;
        *p -= lr * g / (a.sqrt() + eps);
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    #[test]
    fn first_step_is_signed_learning_rate() {
        let mut p = init_params(2, 2, 0).unwrap();
        let before = p.clone();
        let mut st = AdagradState::new(&p);
        let mut g = Gradients::zeros_like(&p);
        g.du[0] = 3.5;
        g.du[1] = -0.02;
        adagrad_step(&mut p, &mut st, &g, 1.0, 0.0, 1e-8);
        assert!((p.u[0] - (before.u[0] - 1.0)).abs() < 1e-8);
        assert!((p.u[1] - (before.u[1] + 1.0)).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_without_l2_is_a_no_op() {
        let mut p = init_params(3, 2, 0).unwrap();
        let before = p.clone();
        let mut st = AdagradState::new(&p);
        let g = Gradients::zeros_like(&p);
        adagrad_step(&mut p, &mut st, &g, 1.0, 0.0, 1e-8);
        assert_eq!(p, before);
    }

    #[test]
    fn steps_shrink_under_constant_gradient() {
        let mut p = init_params(2, 2, 0).unwrap();
        let mut st = AdagradState::new(&p);
        let mut g = Gradients::zeros_like(&p);
        g.dw.fill(0.7);
        let mut last = f64::INFINITY;
        for _ in 0..5 {
            let before = p.w[[0, 0]];
            adagrad_step(&mut p, &mut st, &g, 1.0, 0.0, 1e-8);
            let step = (p.w[[0, 0]] - before).abs();
            assert!(step < last);
            last = step;
        }
    }

    #[test]
    fn l2_pulls_towards_zero() {
        let mut p = init_params(2, 2, 0).unwrap();
        let before = p.squared_norm();
        let mut st = AdagradState::new(&p);
        let g = Gradients::zeros_like(&p);
        adagrad_step(&mut p, &mut st, &g, 0.01, 0.1, 1e-8);
        assert!(p.squared_norm() < before);
    }
}
