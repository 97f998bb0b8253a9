use indexmap::IndexMap;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// Covariance of natural-scale estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariance {
    pub names: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    /// Numerical rank of the Hessian that was inverted.
    pub rank: usize,
}

impl Covariance {
    pub fn std_errors(&self) -> IndexMap<String, f64> {
        self.names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), self.matrix[i][i].max(0.0).sqrt()))
            .collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub(crate) fn to_dmatrix(&self) -> DMatrix<f64> {
        let n = self.names.len();
        DMatrix::from_fn(n, n, |i, j| self.matrix[i][j])
    }

    /// Stack independent blocks into a block-diagonal covariance.
    pub(crate) fn block_diagonal(blocks: Vec<Covariance>) -> Covariance {
        let n: usize = blocks.iter().map(|b| b.names.len()).sum();
        let mut matrix = vec![vec![0.0; n]; n];
        let mut names = Vec::with_capacity(n);
        let mut offset = 0;
        let mut rank = 0;
        for b in blocks {
            let m = b.names.len();
            for i in 0..m {
                for j in 0..m {
                    matrix[offset + i][offset + j] = b.matrix[i][j];
                }
            }
            names.extend(b.names);
            rank += b.rank;
            offset += m;
        }
        Covariance { names, matrix, rank }
    }
}

/// Central-difference Hessian with step `1e-4·(1 + |x_i|)`.
pub fn numerical_hessian<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|v| 1e-4 * (1.0 + v.abs())).collect();
    let f0 = f(x);
    let mut out = vec![vec![0.0; n]; n];
    let shifted = |moves: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(i, d) in moves {
            y[i] += d;
        }
        f(&y)
    };
    for i in 0..n {
        let fp = shifted(&[(i, h[i])]);
        let fm = shifted(&[(i, -h[i])]);
        out[i][i] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let fpp = shifted(&[(i, h[i]), (j, h[j])]);
            let fpm = shifted(&[(i, h[i]), (j, -h[j])]);
            let fmp = shifted(&[(i, -h[i]), (j, h[j])]);
            let fmm = shifted(&[(i, -h[i]), (j, -h[j])]);
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

/// Inverse of a symmetric matrix restricted to its positive eigenvalues.
/// Returns the pseudo-inverse and the count of eigenvalues kept.
pub(crate) fn psd_inverse(h: &[Vec<f64>]) -> (DMatrix<f64>, usize) {
    let n = h.len();
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (h[i][j] + h[j][i]));
    let eig = SymmetricEigen::new(m);
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let tol = max * 1e-10 * n as f64;
    let mut inv_vals = eig.eigenvalues.clone();
    let mut rank = 0;
    for v in inv_vals.iter_mut() {
        if *v > tol && *v > 0.0 {
            *v = 1.0 / *v;
            rank += 1;
        } else {
            *v = 0.0;
        }
    }
    let q = &eig.eigenvectors;
    let inv = q * DMatrix::from_diagonal(&inv_vals) * q.transpose();
    (inv, rank)
}

/// Numerical Jacobian of `map` at `u` (rows = outputs).
pub(crate) fn jacobian<F: Fn(&[f64]) -> Vec<f64>>(map: F, u: &[f64]) -> DMatrix<f64> {
    let base = map(u);
    let mut jac = DMatrix::zeros(base.len(), u.len());
    for j in 0..u.len() {
        let h = 1e-6 * (1.0 + u[j].abs());
        let mut up = u.to_vec();
        up[j] += h;
        let mut dn = u.to_vec();
        dn[j] -= h;
        let (fp, fm) = (map(&up), map(&dn));
        for i in 0..base.len() {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Delta-method covariance of `natural(u)` given the negative log-likelihood
/// `neg_ll` on the free scale, evaluated at its minimizer `u`.
pub(crate) fn delta_covariance<F, G>(
    neg_ll: F,
    natural: G,
    u: &[f64],
    names: Vec<String>,
) -> Covariance
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let hess = numerical_hessian(neg_ll, u);
    let (inv, rank) = psd_inverse(&hess);
    let jac = jacobian(natural, u);
    let cov = &jac * inv * jac.transpose();
    let n = cov.nrows();
    let matrix = (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (cov[(i, j)] + cov[(j, i)])).collect())
        .collect();
    Covariance { names, matrix, rank }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hessian_of_quadratic() {
        let f = |x: &[f64]| 1.5 * x[0] * x[0] + x[0] * x[1] + 2.0 * x[1] * x[1];
        let h = numerical_hessian(f, &[0.3, -0.2]);
        assert_abs_diff_eq!(h[0][0], 3.0, epsilon = 1e-5);
        assert_abs_diff_eq!(h[0][1], 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(h[1][1], 4.0, epsilon = 1e-5);
        assert_eq!(h[0][1], h[1][0]);
    }

    #[test]
    fn pseudo_inverse_of_singular() {
        let (inv, rank) = psd_inverse(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(rank, 1);
        assert_abs_diff_eq!(inv[(0, 0)], 0.25, epsilon = 1e-12);
        let (inv, rank) = psd_inverse(&[vec![2.0, 0.0], vec![0.0, 4.0]]);
        assert_eq!(rank, 2);
        assert_abs_diff_eq!(inv[(1, 1)], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn delta_method_for_exp() {
        // -ll = (u - 1)^2 / (2 * 0.01) → var(u) = 0.01; x = exp(u)
        let cov = delta_covariance(
            |u| (u[0] - 1.0).powi(2) / 0.02,
            |u| vec![u[0].exp()],
            &[1.0],
            vec!["x".into()],
        );
        assert_abs_diff_eq!(cov.matrix[0][0], 0.01 * 1f64.exp().powi(2), epsilon = 1e-6);
    }
}
