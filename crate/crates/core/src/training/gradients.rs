use ndarray::{Array1, Array2};

use crate::model::ModelParams;

/// Partial derivatives with the same shapes as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub dx: Array2<f64>,
    pub dw: Array2<f64>,
    pub du: Array1<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Gradients {
            dx: Array2::zeros(params.x.raw_dim()),
            dw: Array2::zeros(params.w.raw_dim()),
            du: Array1::zeros(params.u.raw_dim()),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        self.dx += &other.dx;
        self.dw += &other.dw;
        self.du += &other.du;
    }

    pub fn scale(&mut self, c: f64) {
        self.dx *= c;
        self.dw *= c;
        self.du *= c;
    }

    /// All entries in the order X, W, u.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.dx.iter().chain(&self.dw).chain(&self.du).copied()
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }

    /// Largest `|a - b| / max(|a|, |b|, 1e-8)` over all entries.
    pub fn max_relative_error(&self, other: &Gradients) -> f64 {
        self.max_relative_error_with_floor(other, 1e-8)
    }

    /// Largest `|a - b| / max(|a|, |b|, floor)` over all entries.
    pub fn max_relative_error_with_floor(&self, other: &Gradients, floor: f64) -> f64 {
        self.iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
            .fold(0.0, f64::max)
    }

    pub fn max_abs_difference(&self, other: &Gradients) -> f64 {
        self.iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
