//! Central finite differences over every model parameter.

use crate::model::ModelParams;

use super::Gradients;

/// Step used by the gradient checks.
pub const DEFAULT_STEP: f64 = 1e-5;

/// `(f(a + h e_i) - f(a - h e_i)) / 2h` for every coordinate `i`.
pub fn central_difference<F>(params: &ModelParams, step: f64, mut objective: F) -> Gradients
where
    F: FnMut(&ModelParams) -> f64,
{
    let mut grads = Gradients::zeros_like(params);
    let mut probe = params.clone();

    macro_rules! sweep {
        ($field:ident, $out:expr) => {
            for (slot, g) in params.$field.indexed_iter().zip($out.iter_mut()) {
                let (ix, &orig) = slot;
                probe.$field[ix] = orig + step;
                let up = objective(&probe);
                probe.$field[ix] = orig - step;
                let down = objective(&probe);
                probe.$field[ix] = orig;
                *g = (up - down) / (2.0 * step);
            }
        };
    }
    sweep!(x, grads.dx);
    sweep!(w, grads.dw);
    sweep!(u, grads.du);
    grads
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    #[test]
    fn recovers_gradient_of_squared_norm() {
        let p = init_params(3, 2, 1).unwrap();
        let fd = central_difference(&p, DEFAULT_STEP, |q| q.squared_norm());
        let mut exact = Gradients {
            dx: p.x.clone(),
            dw: p.w.clone(),
            du: p.u.clone(),
        };
        exact.scale(2.0);
        assert!(fd.max_relative_error(&exact) < 1e-8);
    }
}
