//! Group-conditional error metrics, representer/memorization statistics,
//! and numerical verification of the theoretical constructions and bounds.

pub mod memorization;
pub mod normal;
pub mod quadrature;
pub mod theory;

pub use memorization::{representer_coeffs, MemorizationReport, RepresenterDecomposition, Subset};
pub use normal::{normal_cdf, normal_pdf};
pub use quadrature::GaussHermite;
pub use theory::{
    analytic_group_error_2d, asymptotic_variance_check, construct_w_use_core_memall,
    construct_w_use_spu, default_use_spu_params, population_gradient_rw, tradeoff_quantities,
    verify_norm_bounds, AsymptoticVarianceReport, BoundConstants, NormBoundsReport, TheoryParams,
    TradeoffReport,
};

use serde::{Deserialize, Serialize};

use crate::data::{GroupedDataset, NUM_GROUPS};
use crate::error::{Error, Result};
use crate::optimize::LinearModel;

/// Per-group 0-1 errors plus their weighted average and maximum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub per_group_error: [f64; NUM_GROUPS],
    /// Weight-convex combination of the per-group errors.
    pub average_error: f64,
    pub worst_group_error: f64,
    pub worst_group_id: u8,
}

impl GroupMetrics {
    /// Assembles metrics from per-group errors and (unnormalized) weights.
    pub fn from_errors(per_group_error: [f64; NUM_GROUPS], weights: [f64; NUM_GROUPS]) -> Result<Self> {
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::config("group weights must be finite and ≥ 0"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::config("group weights must not all be zero"));
        }
        let average_error =
            per_group_error.iter().zip(&weights).map(|(e, w)| e * w / total).sum::<f64>();
        // ties resolve to the lowest group id
        let mut worst_group_id = 0u8;
        let mut worst = per_group_error[0];
        for (g, &e) in per_group_error.iter().enumerate().skip(1) {
            if e > worst {
                worst = e;
                worst_group_id = g as u8;
            }
        }
        Ok(Self { per_group_error, average_error, worst_group_error: worst, worst_group_id })
    }
}

/// Group-conditional 0-1 errors of `sign(w·x)` against `y`; a score of
/// exactly zero counts as an error. The average uses the supplied weights,
/// defaulting to the dataset's empirical group proportions. Errors if any
/// group is empty (all four group errors are reported).
pub fn group_errors(
    model: &LinearModel,
    ds: &GroupedDataset,
    weights: Option<[f64; NUM_GROUPS]>,
) -> Result<GroupMetrics> {
    let scores = model.scores(ds.features())?;
    group_errors_from_scores(&scores, ds.labels(), ds.group_ids(), weights_or_proportions(ds, weights))
}

pub(crate) fn weights_or_proportions(
    ds: &GroupedDataset,
    weights: Option<[f64; NUM_GROUPS]>,
) -> [f64; NUM_GROUPS] {
    weights.unwrap_or_else(|| ds.group_proportions())
}

/// Same as [`group_errors`], from precomputed scores.
pub fn group_errors_from_scores(
    scores: &[f64],
    labels: &[i8],
    group_ids: &[u8],
    weights: [f64; NUM_GROUPS],
) -> Result<GroupMetrics> {
    if scores.len() != labels.len() || labels.len() != group_ids.len() {
        return Err(Error::dimension("scores/labels/group_ids length mismatch".to_string()));
    }
    let mut wrong = [0usize; NUM_GROUPS];
    let mut count = [0usize; NUM_GROUPS];
    for ((&s, &y), &g) in scores.iter().zip(labels).zip(group_ids) {
        count[g as usize] += 1;
        if f64::from(y) * s <= 0.0 {
            wrong[g as usize] += 1;
        }
    }
    if let Some(g) = count.iter().position(|&c| c == 0) {
        return Err(Error::precondition(format!("group {g} is empty; its error is undefined")));
    }
    let mut per_group_error = [0.0; NUM_GROUPS];
    for g in 0..NUM_GROUPS {
        per_group_error[g] = wrong[g] as f64 / count[g] as f64;
    }
    GroupMetrics::from_errors(per_group_error, weights)
}
