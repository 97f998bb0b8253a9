//! Gauss–Hermite rules for expectations under a standard normal.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

pub const MIN_NODES: usize = 8;
pub const MAX_NODES: usize = 256;
pub const DEFAULT_NODES: usize = 32;

/// Nodes and weights such that `E[g(Z)] ≈ Σ w_i g(z_i)` for `Z ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Result<Self> {
        if !(MIN_NODES..=MAX_NODES).contains(&n) {
            return Err(Error::config(format!(
                "quadrature needs {MIN_NODES}..={MAX_NODES} nodes, got {n}"
            )));
        }
        let (x, w) = physicists_rule(n);
        let scale = PI.sqrt();
        let nodes = x.iter().map(|v| v * std::f64::consts::SQRT_2).collect();
        let weights = w.iter().map(|v| v / scale).collect();
        Ok(GaussHermite { nodes, weights })
    }

    /// Shared rule for `n` nodes, built on first use.
    pub fn cached(n: usize) -> Result<&'static GaussHermite> {
        static RULES: [OnceLock<GaussHermite>; MAX_NODES + 1] =
            [const { OnceLock::new() }; MAX_NODES + 1];
        if !(MIN_NODES..=MAX_NODES).contains(&n) {
            return Err(Error::config(format!(
                "quadrature needs {MIN_NODES}..={MAX_NODES} nodes, got {n}"
            )));
        }
        Ok(RULES[n].get_or_init(|| GaussHermite::new(n).expect("node count checked")))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn expectation(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * g(z))
            .sum()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Roots and weights for the weight function `exp(-x²)`, found by Newton
/// iteration on the orthonormal Hermite recurrence.
fn physicists_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let step = p1 / pp;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rejects_small_rules() {
        assert!(GaussHermite::new(4).is_err());
        assert!(GaussHermite::cached(7).is_err());
    }

    #[test]
    fn normal_moments_are_exact() {
        for n in [8, 16, 32, 64, 128] {
            let rule = GaussHermite::new(n).unwrap();
            assert_abs_diff_eq!(rule.expectation(|_| 1.0), 1.0, epsilon = 1e-13);
            assert_abs_diff_eq!(rule.expectation(|z| z), 0.0, epsilon = 1e-13);
            assert_abs_diff_eq!(rule.expectation(|z| z * z), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(rule.expectation(|z| z.powi(4)), 3.0, epsilon = 1e-11);
            assert_abs_diff_eq!(rule.expectation(|z| z.powi(6)), 15.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn smooth_integrand() {
        // E[cos Z] = exp(-1/2)
        let rule = GaussHermite::cached(32).unwrap();
        assert_abs_diff_eq!(rule.expectation(f64::cos), (-0.5f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn nodes_are_symmetric_and_sorted() {
        let rule = GaussHermite::new(33).unwrap();
        let nodes: Vec<f64> = rule.pairs().map(|(z, _)| z).collect();
        for i in 0..nodes.len() {
            assert_abs_diff_eq!(nodes[i], -nodes[nodes.len() - 1 - i], epsilon = 1e-13);
        }
        assert!(nodes.windows(2).all(|w| w[0] > w[1]));
    }
}
