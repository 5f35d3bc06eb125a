use ndarray::Array2;

use crate::error::{Error, Result};

/// Default relative step for the singular-value Hessian.
pub const DEFAULT_FD_STEP: f64 = 1e-3;

/// Finite-difference Hessian together with its pre-symmetrization residual.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaHessian {
    /// Symmetrized `(H + H^T) / 2`.
    pub h: Array2<f64>,
    /// `max |H_ij - H_ji|` before symmetrization.
    pub asymmetry: f64,
}

/// Anything that can produce an exact gradient with respect to the singular values.
pub trait SigmaLoss {
    fn sigma_gradient(&mut self, sigma: &[f64]) -> Result<Vec<f64>>;
}

impl<F> SigmaLoss for F
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    fn sigma_gradient(&mut self, sigma: &[f64]) -> Result<Vec<f64>> {
        self(sigma)
    }
}

/// Central differences of the gradient, column by column:
/// `H[:, j] = (g(s + h_j e_j) - g(s - h_j e_j)) / (2 h_j)` with `h_j = eps (1 + |s_j|)`.
///
/// Costs `2n` gradient evaluations.
pub fn fd_sigma_hessian(loss: &mut impl SigmaLoss, sigma: &[f64], eps: f64) -> Result<SigmaHessian> {
    if !(eps > 0.0) {
        return Err(Error::arg(format!("finite-difference step must be positive, got {eps}")));
    }
    let n = sigma.len();
    let mut h = Array2::zeros((n, n));
    let mut probe = sigma.to_vec();
    for j in 0..n {
        let step = eps * (1.0 + sigma[j].abs());
        probe[j] = sigma[j] + step;
        let plus = loss.sigma_gradient(&probe)?;
        probe[j] = sigma[j] - step;
        let minus = loss.sigma_gradient(&probe)?;
        probe[j] = sigma[j];
        if plus.len() != n || minus.len() != n {
            return Err(Error::arg("gradient length does not match sigma"));
        }
        for i in 0..n {
            h[[i, j]] = (plus[i] - minus[i]) / (2.0 * step);
        }
    }
    if let Some(bad) = h.iter().position(|v| !v.is_finite()) {
        return Err(Error::numerical(format!("non-finite Hessian entry ({}, {})", bad / n, bad % n)));
    }
    let mut asymmetry = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asymmetry = asymmetry.max((h[[i, j]] - h[[j, i]]).abs());
        }
    }
    let h = (&h + &h.t()) * 0.5;
    Ok(SigmaHessian { h, asymmetry })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn recovers_quadratic_hessian() {
        let a = array![[3.0, -1.0, 0.5], [-1.0, 2.0, 0.25], [0.5, 0.25, 4.0]];
        let g = [0.3, -0.7, 1.1];
        let mut grad = |s: &[f64]| -> Result<Vec<f64>> {
            Ok((0..3).map(|i| (0..3).map(|k| a[[i, k]] * s[k]).sum::<f64>() + g[i]).collect())
        };
        let est = fd_sigma_hessian(&mut grad, &[0.4, -1.2, 2.0], DEFAULT_FD_STEP).unwrap();
        for (x, y) in est.h.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn toy_loss_hessian() {
        let mut grad = |s: &[f64]| -> Result<Vec<f64>> {
            let r = 2.0 * (s[0] - s[1] + 1.0);
            Ok(vec![r, -r])
        };
        let g = grad(&[1.0, 2.1]).unwrap();
        assert!((g[0] + 0.2).abs() < 1e-12 && (g[1] - 0.2).abs() < 1e-12);
        let est = fd_sigma_hessian(&mut grad, &[1.0, 2.1], DEFAULT_FD_STEP).unwrap();
        let expect = array![[2.0, -2.0], [-2.0, 2.0]];
        for (x, y) in est.h.iter().zip(expect.iter()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn linear_loss_has_zero_hessian() {
        let mut grad = |_: &[f64]| -> Result<Vec<f64>> { Ok(vec![1.5, -2.0, 0.1]) };
        let est = fd_sigma_hessian(&mut grad, &[0.0, 3.0, -1.0], DEFAULT_FD_STEP).unwrap();
        assert!(est.h.iter().all(|v| v.abs() < 1e-8));
        assert_eq!(est.asymmetry, 0.0);
    }

    #[test]
    fn non_finite_gradient_is_numerical_error() {
        let mut grad = |s: &[f64]| -> Result<Vec<f64>> { Ok(vec![1.0 / (s[0] - s[0])]) };
        assert!(matches!(fd_sigma_hessian(&mut grad, &[1.0], 1e-3), Err(Error::Numerical(_))));
    }
}
