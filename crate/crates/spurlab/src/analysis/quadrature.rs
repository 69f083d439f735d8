//! Gauss–Hermite quadrature (physicists' weight `e^{−x²}`).
//!
//! Nodes are the roots of the Hermite polynomial `H_n`, i.e. the
//! eigenvalues of the symmetric tridiagonal Jacobi matrix with zero
//! diagonal and off-diagonals `√(j/2)`. Each eigenvalue is isolated by
//! Sturm-count bisection (robust at every order, unlike the classical
//! asymptotic initial guesses, which start sending Newton to a neighboring
//! root around order 200) and then polished by Newton on the orthonormal
//! three-term recurrence, which also yields the weight `2/(p'_n)²`.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Number of Jacobi-matrix eigenvalues strictly below `x`, by the Sturm
/// sequence of the shifted LDLᵀ factorization. `off_sq[j] = j/2`.
fn sturm_count(n: usize, off_sq: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = -x;
    if d < 0.0 {
        count += 1;
    }
    for j in 1..n {
        let denom = if d.abs() < 1e-300 { 1e-300_f64.copysign(if d < 0.0 { -1.0 } else { 1.0 }) } else { d };
        d = -x - off_sq[j - 1] / denom;
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Orthonormal Hermite value `p_n(z)` and the scaled derivative term
/// `p'_n(z) = √(2n)·p_{n−1}(z)`.
fn hermite_pair(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = std::f64::consts::PI.powf(-0.25);
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, (2.0 * n as f64).sqrt() * p2)
}

impl GaussHermite {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::config("quadrature order must be ≥ 1"));
        }
        if order > 512 {
            return Err(Error::config("quadrature order above 512 is not supported"));
        }
        let n = order;
        let off_sq: Vec<f64> = (1..n).map(|j| j as f64 / 2.0).collect();
        // All eigenvalues lie inside ±√(2n+1).
        let bound = (2.0 * n as f64 + 1.0).sqrt();

        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in (n / 2)..n {
            // Bisect for the i-th smallest eigenvalue (upper half; the rest
            // follow by symmetry).
            let (mut lo, mut hi) = (-bound, bound);
            while hi - lo > 1e-13 * bound {
                let mid = 0.5 * (lo + hi);
                if sturm_count(n, &off_sq, mid) > i {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let mut z = 0.5 * (lo + hi);
            let mut pp = 0.0;
            for _ in 0..8 {
                let (p, dp) = hermite_pair(n, z);
                pp = dp;
                let dz = p / dp;
                z -= dz;
                if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            // The exact middle root of an odd rule is 0.
            if 2 * i + 1 == n {
                z = 0.0;
                let (_, dp) = hermite_pair(n, z);
                pp = dp;
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[f(X)]` for `X ~ N(mu, sigma_sq)`. A zero variance collapses every
    /// node to the mean, so the degenerate case needs no special path.
    pub fn expect<F: Fn(f64) -> f64>(&self, mu: f64, sigma_sq: f64, f: F) -> f64 {
        let scale = (2.0 * sigma_sq).sqrt();
        let inv_sqrt_pi = std::f64::consts::FRAC_1_PI.sqrt();
        let mut acc = 0.0;
        for (&t, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mu + scale * t);
        }
        acc * inv_sqrt_pi
    }

    /// `E[f(X, Y)]` for independent `X ~ N(mu_x, var_x)`, `Y ~ N(mu_y, var_y)`.
    pub fn expect2<F: Fn(f64, f64) -> f64>(
        &self,
        mu_x: f64,
        var_x: f64,
        mu_y: f64,
        var_y: f64,
        f: F,
    ) -> f64 {
        let sx = (2.0 * var_x).sqrt();
        let sy = (2.0 * var_y).sqrt();
        let inv_pi = std::f64::consts::FRAC_1_PI;
        let mut acc = 0.0;
        for (&tx, &wx) in self.nodes.iter().zip(&self.weights) {
            let x = mu_x + sx * tx;
            let mut inner = 0.0;
            for (&ty, &wy) in self.nodes.iter().zip(&self.weights) {
                inner += wy * f(x, mu_y + sy * ty);
            }
            acc += wx * inner;
        }
        acc * inv_pi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_order_rules_match_closed_forms() {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let gh2 = GaussHermite::new(2).unwrap();
        // H_2 roots ±1/√2, weights √π/2
        assert!((gh2.nodes()[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-14);
        assert!((gh2.weights()[0] - sqrt_pi / 2.0).abs() < 1e-14);
        let gh3 = GaussHermite::new(3).unwrap();
        assert!(gh3.nodes()[1].abs() < 1e-14);
        assert!((gh3.nodes()[2] - (1.5_f64).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn moments_are_exact_at_order_64() {
        let gh = GaussHermite::new(64).unwrap();
        assert!((gh.expect(0.0, 0.5, |_| 1.0) - 1.0).abs() < 1e-13);
        // X ~ N(0, 1/2) has E[x²] = 1/2, E[x⁴] = 3/4
        assert!((gh.expect(0.0, 0.5, |x| x * x) - 0.5).abs() < 1e-13);
        assert!((gh.expect(0.0, 0.5, |x| x.powi(4)) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn gaussian_expectations_match_closed_forms() {
        let gh = GaussHermite::new(96).unwrap();
        // E[e^X] = e^{mu + var/2}
        let (mu, var) = (0.3, 1.7);
        let got = gh.expect(mu, var, f64::exp);
        assert!((got - (mu + var / 2.0).exp()).abs() < 1e-10);
        // E[X²] = mu² + var
        assert!((gh.expect(mu, var, |x| x * x) - (mu * mu + var)).abs() < 1e-11);
        // zero variance degenerates to a point mass
        assert!((gh.expect(2.5, 0.0, |x| x * x * x) - 15.625).abs() < 1e-12);
    }

    #[test]
    fn two_dimensional_rule_factorizes() {
        let gh = GaussHermite::new(48).unwrap();
        let got = gh.expect2(1.0, 0.5, -2.0, 2.0, |x, y| x * y);
        assert!((got - (1.0 * -2.0)).abs() < 1e-11);
        let got = gh.expect2(0.5, 1.0, 0.0, 0.25, |x, y| x * x * y * y);
        assert!((got - (0.25 + 1.0) * 0.25).abs() < 1e-10);
    }

    #[test]
    fn node_symmetry_and_weight_positivity() {
        for order in [17, 64, 128, 256, 512] {
            let gh = GaussHermite::new(order).unwrap();
            // beyond order ~300 the extreme weights (< 1e-300) underflow to 0
            assert!(gh.weights().iter().all(|&w| w >= 0.0));
            if order <= 256 {
                assert!(gh.weights().iter().all(|&w| w > 0.0));
            }
            for i in 0..order {
                assert!((gh.nodes()[i] + gh.nodes()[order - 1 - i]).abs() < 1e-12);
                if i > 0 {
                    assert!(gh.nodes()[i] > gh.nodes()[i - 1], "order {order}: nodes must ascend");
                }
            }
            let sum: f64 = gh.weights().iter().sum();
            assert!((sum - std::f64::consts::PI.sqrt()).abs() < 1e-11, "order {order}: Σw = {sum}");
        }
    }

    #[test]
    fn matches_reference_nodes_and_weights() {
        // Reference values from an independent Golub–Welsch implementation.
        let gh = GaussHermite::new(64).unwrap();
        assert!((gh.nodes()[63] - 10.526123167960547).abs() < 1e-12);
        assert!((gh.weights()[63] - 5.535706535856702e-49).abs() < 1e-61);
        assert!((gh.nodes()[32] - 0.13830224498700971).abs() < 1e-13);
        assert!((gh.weights()[32] - 0.2713774249413039).abs() < 1e-13);
        let gh = GaussHermite::new(256).unwrap();
        assert!((gh.nodes()[255] - 21.99169337968173).abs() < 1e-11);
        let sum: f64 = gh.weights().iter().sum();
        assert!((sum - 1.7724538509055159).abs() < 1e-12);
    }
}
