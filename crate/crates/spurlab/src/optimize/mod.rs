//! Linear models and the three training objectives.
//!
//! [`train_logistic`] minimizes a weighted logistic loss with an L2 ridge:
//! ERM weights every example `1/n`, reweighting scales group `g` by
//! `1/p̂_g`, and the subsample objective first balances the groups (down to
//! the smallest) and then runs ERM on the reduced set. [`min_norm_separator`]
//! solves the hard-margin problem `min ‖w‖² s.t. yᵢ(w·xᵢ) ≥ 1` exactly, and
//! [`implicit_bias_path`] demonstrates the convergence in direction of
//! unregularized gradient descent to the max-margin separator.

mod logistic;
mod maxmargin;

pub use logistic::gradient_norm;
pub use maxmargin::{
    implicit_bias_path, min_norm_separator, min_norm_separator_constrained, BiasPathResult,
    SeparatorResult, SeparatorStatus, StepSchedule,
};

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::{subsample_balanced, BlockLayout, GroupedDataset};
use crate::error::{Error, Result};

/// A linear classifier `x ↦ sign(w·x)` with an optional block view aligned
/// to a dataset's (core, spu, noise) layout.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearModel {
    weights: Vec<f64>,
    block_layout: Option<BlockLayout>,
}

/// Borrowed (core, spu, noise) slices of a model's weights.
#[derive(Clone, Copy, Debug)]
pub struct BlockView<'a> {
    pub core: &'a [f64],
    pub spu: &'a [f64],
    pub noise: &'a [f64],
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, block_layout: Option<BlockLayout>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::config("model must have at least one weight"));
        }
        if !weights.iter().all(|w| w.is_finite()) {
            return Err(Error::config("model weights must be finite"));
        }
        if let Some(layout) = block_layout {
            if layout.dim() != weights.len() {
                return Err(Error::config(format!(
                    "block layout covers {} weights, model has {}",
                    layout.dim(),
                    weights.len()
                )));
            }
        }
        Ok(Self { weights, block_layout })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn block_layout(&self) -> Option<BlockLayout> {
        self.block_layout
    }

    pub fn block_view(&self) -> Option<BlockView<'_>> {
        let layout = self.block_layout?;
        Some(BlockView {
            core: &self.weights[layout.core_range()],
            spu: &self.weights[layout.spu_range()],
            noise: &self.weights[layout.noise_range()],
        })
    }

    /// Scalar core weight; requires a layout with a single core column.
    pub fn core_scalar(&self) -> Result<f64> {
        let view = self.block_view().ok_or_else(|| Error::precondition("model has no block view"))?;
        if view.core.len() != 1 {
            return Err(Error::precondition("core block is not scalar"));
        }
        Ok(view.core[0])
    }

    /// Scalar spurious weight; requires a layout with a single spu column.
    pub fn spu_scalar(&self) -> Result<f64> {
        let view = self.block_view().ok_or_else(|| Error::precondition("model has no block view"))?;
        if view.spu.len() != 1 {
            return Err(Error::precondition("spu block is not scalar"));
        }
        Ok(view.spu[0])
    }

    pub fn sq_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    pub fn norm(&self) -> f64 {
        self.sq_norm().sqrt()
    }

    /// Raw scores `X·w`.
    pub fn scores(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::dimension(format!(
                "data has {} columns, model has {} weights",
                x.ncols(),
                self.dim()
            )));
        }
        let w = ArrayView1::from(self.weights.as_slice());
        Ok(x.dot(&w).to_vec())
    }

    /// Cosine similarity of the two weight vectors.
    pub fn cosine(&self, other: &LinearModel) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::dimension("cosine of models with different dimensions".to_string()));
        }
        let (na, nb) = (self.norm(), other.norm());
        if na == 0.0 || nb == 0.0 {
            return Err(Error::precondition("cosine of a zero model"));
        }
        Ok(crate::linalg::dot(&self.weights, &other.weights) / (na * nb))
    }
}

/// `w / ‖w‖₂`; errors on the zero vector.
pub fn direction_of(model: &LinearModel) -> Result<LinearModel> {
    let norm = model.norm();
    if norm == 0.0 {
        return Err(Error::precondition("cannot normalize the zero model"));
    }
    LinearModel::new(model.weights.iter().map(|w| w / norm).collect(), model.block_layout)
}

/// Training objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Erm,
    Reweight,
    Subsample,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Erm => "erm",
            Objective::Reweight => "reweight",
            Objective::Subsample => "subsample",
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "erm" => Ok(Objective::Erm),
            "reweight" => Ok(Objective::Reweight),
            "subsample" => Ok(Objective::Subsample),
            other => Err(Error::config(format!("unknown objective `{other}`"))),
        }
    }
}

/// Solver configuration for [`train_logistic`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub objective: Objective,
    /// L2 strength; the ridge term is `(λ/2)‖w‖²`.
    pub lambda: f64,
    /// Stop when the objective-gradient norm drops below this.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Seed for the subsample objective's draw; unused otherwise.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        // λ = 1e-9 is the "unregularized" convention used throughout.
        Self { objective: Objective::Erm, lambda: 1e-9, grad_tol: 1e-8, max_iters: 1000, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::config(format!("lambda = {} must be finite and ≥ 0", self.lambda)));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::config(format!("grad_tol = {} must be > 0", self.grad_tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters must be ≥ 1"));
        }
        Ok(())
    }
}

/// Result of a training run. Non-convergence within `max_iters` is a
/// regular outcome: the last iterate is returned with `converged = false`
/// and the achieved gradient norm.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: LinearModel,
    pub converged: bool,
    pub grad_norm: f64,
    pub iterations: usize,
    pub objective_value: f64,
    /// Number of training examples actually used (smaller than `ds.n()` for
    /// the subsample objective).
    pub n_train: usize,
}

/// Per-example weights for an objective on a dataset, including the 1/n
/// averaging factor.
pub(crate) fn example_weights(ds: &GroupedDataset, objective: Objective) -> Result<Vec<f64>> {
    let n = ds.n() as f64;
    match objective {
        Objective::Erm | Objective::Subsample => Ok(vec![1.0 / n; ds.n()]),
        Objective::Reweight => {
            let props = ds.group_proportions();
            if let Some(g) = props.iter().position(|&p| p == 0.0) {
                return Err(Error::precondition(format!(
                    "group {g} is empty; reweighting weights 1/p̂_g are undefined"
                )));
            }
            Ok(ds.group_ids().iter().map(|&g| 1.0 / (props[g as usize] * n)).collect())
        }
    }
}

/// Minimizes the chosen weighted logistic loss plus `(λ/2)‖w‖²` by L-BFGS
/// with a backtracking (sufficient-decrease) line search, starting from
/// zero. Deterministic given `cfg`.
pub fn train_logistic(ds: &GroupedDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    match cfg.objective {
        Objective::Subsample => {
            let reduced = subsample_balanced(ds, cfg.seed)?;
            let weights = example_weights(&reduced, Objective::Erm)?;
            logistic::train_weighted(&reduced, weights, cfg)
        }
        obj => {
            let weights = example_weights(ds, obj)?;
            logistic::train_weighted(ds, weights, cfg)
        }
    }
}

/// Logistic objective value and gradient for an explicit weight vector;
/// exposed for gradient checks and diagnostics.
pub fn logistic_objective(
    ds: &GroupedDataset,
    objective: Objective,
    lambda: f64,
    w: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let weights = example_weights(ds, objective)?;
    logistic::value_and_grad(ds.features(), &ds.labels_f64(), &weights, lambda, w)
}

