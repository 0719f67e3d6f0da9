//! Finite-difference utilities for verifying gradients.
//!
//! These only ever evaluate the forward pass, so they are independent of the
//! backward implementation they are used to check.

/// Central differences of a scalar function at `x` with step `h`.
pub fn central_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = f(&probe);
        probe[i] = x[i] - h;
        let minus = f(&probe);
        probe[i] = x[i];
        out.push((plus - minus) / (2.0 * h));
    }
    out
}

/// Largest relative discrepancy between two gradient vectors.
///
/// The denominator is floored so that near-zero pairs compare absolutely.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-4))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_derivative() {
        let d = central_diff(|x| x[0] * x[0], &[3.0], 1e-5);
        assert!((d[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn rel_err_handles_zeros() {
        assert_eq!(max_rel_err(&[0.0], &[0.0]), 0.0);
        assert!(max_rel_err(&[1.0], &[1.0 + 1e-7]) < 1e-5);
    }
}
