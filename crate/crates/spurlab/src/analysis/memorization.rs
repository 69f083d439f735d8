//! Representer decomposition of the noise-block weights and
//! γ-memorization fractions.
//!
//! For a model `w = [w_core, w_spu, w_noise]` trained on an explicit-setting
//! dataset, the noise weights decompose over the training noise vectors,
//! `w_noise = Σᵢ sᵢ x_noise⁽ⁱ⁾`. The coefficients are recovered by the
//! regularized Gram system `(X_noise X_noiseᵀ + εI) s = X_noise w_noise`
//! with jitter `ε = 1e-10 · trace(G)/n`, and a point is γ-memorized when
//! `|sᵢ| > γ²/σ²_noise`.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::data::{is_majority, GroupedDataset};
use crate::error::{Error, Result};
use crate::linalg::{gram, solve_spd};
use crate::optimize::LinearModel;

/// Index set over which a memorization fraction is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Majority,
    All,
}

/// Representer coefficients of a model on a dataset, plus the
/// reconstruction residual `‖Σ sᵢ x_noise⁽ⁱ⁾ − w_noise‖`.
#[derive(Clone, Debug)]
pub struct RepresenterDecomposition {
    coeffs: Vec<f64>,
    residual: f64,
    w_noise_norm: f64,
    sigma_noise_sq: f64,
    majority: Vec<bool>,
}

impl RepresenterDecomposition {
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn w_noise_norm(&self) -> f64 {
        self.w_noise_norm
    }

    pub fn sigma_noise_sq(&self) -> f64 {
        self.sigma_noise_sq
    }

    /// Fraction of the subset with `|sᵢ| > γ²/σ²_noise` (strict).
    pub fn memorization_fraction(&self, gamma_sq: f64, subset: Subset) -> Result<f64> {
        if !gamma_sq.is_finite() || gamma_sq < 0.0 {
            return Err(Error::config(format!("gamma_sq = {gamma_sq} must be finite and ≥ 0")));
        }
        let threshold = gamma_sq / self.sigma_noise_sq;
        let selected: Vec<&f64> = match subset {
            Subset::All => self.coeffs.iter().collect(),
            Subset::Majority => {
                self.coeffs.iter().zip(&self.majority).filter(|(_, &m)| m).map(|(s, _)| s).collect()
            }
        };
        if selected.is_empty() {
            return Err(Error::precondition("memorization fraction over an empty subset"));
        }
        let hits = selected.iter().filter(|s| s.abs() > threshold).count();
        Ok(hits as f64 / selected.len() as f64)
    }

    /// Full report at a given threshold.
    pub fn report(&self, gamma_sq: f64) -> Result<MemorizationReport> {
        Ok(MemorizationReport {
            coeffs: self.coeffs.clone(),
            gamma_sq,
            sigma_noise_sq: self.sigma_noise_sq,
            delta_maj: self.memorization_fraction(gamma_sq, Subset::Majority)?,
            delta_all: self.memorization_fraction(gamma_sq, Subset::All)?,
            residual: self.residual,
        })
    }
}

/// Representer coefficients with memorization fractions at one threshold.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MemorizationReport {
    pub coeffs: Vec<f64>,
    pub gamma_sq: f64,
    pub sigma_noise_sq: f64,
    /// Fraction of majority points with `|sᵢ|` above the threshold.
    pub delta_maj: f64,
    /// Same fraction over all training points.
    pub delta_all: f64,
    pub residual: f64,
}

/// Recovers the representer coefficients of `model`'s noise weights over
/// the dataset's noise vectors. Requires a noise block (`N ≥ 1`) on the
/// dataset and a matching block view on the model.
pub fn representer_coeffs(
    model: &LinearModel,
    ds: &GroupedDataset,
    sigma_noise_sq: f64,
) -> Result<RepresenterDecomposition> {
    if !(sigma_noise_sq > 0.0) || !sigma_noise_sq.is_finite() {
        return Err(Error::config(format!("sigma_noise_sq = {sigma_noise_sq} must be finite and > 0")));
    }
    let noise = ds.noise_block()?;
    let view = model
        .block_view()
        .ok_or_else(|| Error::precondition("model has no block view"))?;
    if view.noise.len() != noise.ncols() {
        return Err(Error::dimension(format!(
            "model noise block has {} weights, dataset noise block has {} columns",
            view.noise.len(),
            noise.ncols()
        )));
    }
    let n = ds.n();

    let mut g = gram(noise);
    let trace_scale = (0..n).map(|i| g[[i, i]]).sum::<f64>() / n as f64;
    let eps = 1e-10 * trace_scale.max(1e-300);
    for i in 0..n {
        g[[i, i]] += eps;
    }
    let w_noise = Array1::from(view.noise.to_vec());
    let rhs = noise.dot(&w_noise).to_vec();
    let coeffs = solve_spd(g, &rhs)?;

    // residual of the reconstruction in R^N
    let recon = noise.t().dot(&Array1::from(coeffs.clone()));
    let residual = (&recon - &w_noise).mapv(|v| v * v).sum().sqrt();
    let w_noise_norm = w_noise.dot(&w_noise).sqrt();

    let majority = ds.group_ids().iter().map(|&g| is_majority(g)).collect();
    Ok(RepresenterDecomposition { coeffs, residual, w_noise_norm, sigma_noise_sq, majority })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_explicit, ExplicitConfig};
    use crate::optimize::min_norm_separator;

    fn explicit_ds(n_maj: usize, n_min: usize, noise_dim: usize, seed: u64) -> GroupedDataset {
        gen_explicit(&ExplicitConfig {
            n_maj,
            n_min,
            noise_dim,
            sigma_core_sq: 1.0,
            sigma_spu_sq: 0.01,
            sigma_noise_sq: 1.0,
            seed,
        })
        .unwrap()
    }

    fn model_with_noise(ds: &GroupedDataset, coeffs: &[f64]) -> LinearModel {
        let noise = ds.noise_block().unwrap();
        let mut w = vec![0.0; ds.dim()];
        w[0] = 0.4;
        for (i, &s) in coeffs.iter().enumerate() {
            for j in 0..noise.ncols() {
                w[2 + j] += s * noise[[i, j]];
            }
        }
        LinearModel::new(w, ds.block_layout()).unwrap()
    }

    #[test]
    fn zero_noise_weights_give_zero_coefficients() {
        let ds = explicit_ds(8, 4, 40, 1);
        let mut w = vec![0.0; ds.dim()];
        w[0] = 1.0;
        let model = LinearModel::new(w, ds.block_layout()).unwrap();
        let rep = representer_coeffs(&model, &ds, 1.0).unwrap();
        assert!(rep.coeffs().iter().all(|&s| s.abs() < 1e-12));
        assert!(rep.residual() < 1e-12);
    }

    #[test]
    fn recovers_forward_constructed_coefficients() {
        let ds = explicit_ds(16, 8, 240, 2); // N = 10n keeps the Gram well-conditioned
        let truth: Vec<f64> = (0..ds.n()).map(|i| (i as f64 * 0.7).sin() * 3.0).collect();
        let model = model_with_noise(&ds, &truth);
        let rep = representer_coeffs(&model, &ds, 1.0).unwrap();
        let max_err = rep
            .coeffs()
            .iter()
            .zip(&truth)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        assert!(max_err < 1e-6, "∞-norm recovery error {max_err}");
        assert!(rep.residual() <= 1e-9 * rep.w_noise_norm().max(1.0));
    }

    #[test]
    fn qp_solutions_lie_in_the_training_span() {
        let ds = explicit_ds(20, 8, 300, 3);
        let sep = min_norm_separator(&ds).unwrap();
        let model = sep.separable_model().expect("separable at N >> n");
        let rep = representer_coeffs(model, &ds, 1.0).unwrap();
        assert!(
            rep.residual() <= 1e-6 * rep.w_noise_norm(),
            "residual {} vs norm {}",
            rep.residual(),
            rep.w_noise_norm()
        );
    }

    #[test]
    fn counting_oracle_for_majority_fraction() {
        let ds = explicit_ds(12, 4, 160, 4);
        let sigma_noise_sq = 1.0;
        let gamma_sq = 0.5;
        let threshold = gamma_sq / sigma_noise_sq;
        // put exactly 3 majority points above threshold, everything else below
        let majority_idx: Vec<usize> =
            (0..ds.n()).filter(|&i| is_majority(ds.group_ids()[i])).collect();
        let mut truth = vec![threshold * 0.5; ds.n()];
        for &i in majority_idx.iter().take(3) {
            truth[i] = -2.0 * threshold;
        }
        let model = model_with_noise(&ds, &truth);
        let rep = representer_coeffs(&model, &ds, sigma_noise_sq).unwrap();
        let frac = rep.memorization_fraction(gamma_sq, Subset::Majority).unwrap();
        assert!((frac - 3.0 / majority_idx.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn zero_threshold_counts_all_nonzero_coefficients() {
        let ds = explicit_ds(8, 4, 120, 5);
        let truth: Vec<f64> = (0..ds.n()).map(|i| 0.1 + i as f64 * 0.05).collect();
        let model = model_with_noise(&ds, &truth);
        let rep = representer_coeffs(&model, &ds, 1.0).unwrap();
        assert_eq!(rep.memorization_fraction(0.0, Subset::All).unwrap(), 1.0);
    }

    #[test]
    fn fraction_is_monotone_nonincreasing_in_gamma() {
        let ds = explicit_ds(10, 6, 160, 6);
        let truth: Vec<f64> = (0..ds.n()).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.3).collect();
        let model = model_with_noise(&ds, &truth);
        let rep = representer_coeffs(&model, &ds, 1.0).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let f = rep.memorization_fraction(k as f64 * 0.2, Subset::All).unwrap();
            assert!(f <= prev + 1e-15);
            prev = f;
        }
    }

    #[test]
    fn requires_noise_block() {
        let ds = gen_explicit(&ExplicitConfig {
            n_maj: 4,
            n_min: 2,
            noise_dim: 0,
            sigma_core_sq: 1.0,
            sigma_spu_sq: 1.0,
            sigma_noise_sq: 1.0,
            seed: 0,
        })
        .unwrap();
        let model = LinearModel::new(vec![1.0, 0.0], ds.block_layout()).unwrap();
        assert!(representer_coeffs(&model, &ds, 1.0).is_err());
    }
}
