//! Central finite-difference gradient oracle.

use crate::error::{Error, Result};

/// Central-difference gradient estimate of a scalar function over a flat
/// parameter vector: (f(theta + eps e_i) - f(theta - eps e_i)) / (2 eps)
/// per coordinate. `f` must be deterministic and pure.
pub fn finite_difference_gradient<F>(mut f: F, params: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Usage(format!("finite-difference eps must be positive, got {eps}")));
    }
    let mut theta = params.to_vec();
    let mut grad = vec![0.0; params.len()];
    for i in 0..params.len() {
        let orig = theta[i];
        theta[i] = orig + eps;
        let plus = f(&theta)?;
        theta[i] = orig - eps;
        let minus = f(&theta)?;
        theta[i] = orig;
        grad[i] = (plus - minus) / (2.0 * eps);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_has_analytic_derivative() {
        let g = finite_difference_gradient(|t| Ok(t[0] * t[0]), &[3.0], 1e-6).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let g = finite_difference_gradient(|_| Ok(42.0), &[1.0, -2.0, 0.5], 1e-6).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_positive_eps_is_a_usage_error() {
        assert!(finite_difference_gradient(|t| Ok(t[0]), &[1.0], 0.0).is_err());
        assert!(finite_difference_gradient(|t| Ok(t[0]), &[1.0], -1e-6).is_err());
    }

    #[test]
    fn errors_from_f_propagate() {
        let r = finite_difference_gradient(
            |_| Err(Error::Numeric("boom".into())),
            &[1.0],
            1e-6,
        );
        assert!(matches!(r, Err(Error::Numeric(_))));
    }
}
