//! Log-space helpers.

/// `ln(sum(exp(xs)))`, stable for large magnitudes. Empty input gives `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    if xs.iter().any(|x| x.is_nan()) {
        return f64::NAN;
    }
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Writes `exp(xs - lse)` into `out` and returns `lse`.
pub fn softmax_into(xs: &[f64], out: &mut [f64]) -> f64 {
    let lse = log_sum_exp(xs);
    for (o, x) in out.iter_mut().zip(xs) {
        *o = (x - lse).exp();
    }
    lse
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_when_safe() {
        let xs = [0.1, -2.0, 1.5];
        let naive = xs.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - naive).abs() < 1e-14);
    }

    #[test]
    fn survives_large_magnitudes() {
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_sum_exp(&[-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 0.0]), 0.0);
        assert!(log_sum_exp(&[f64::NAN, 0.0]).is_nan());
    }

    #[test]
    fn softmax_sums_to_one() {
        let xs = [3.0, -1.0, 0.25, 7.0];
        let mut w = [0.0; 4];
        softmax_into(&xs, &mut w);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
