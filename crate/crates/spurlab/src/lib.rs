//! Simulation laboratory for studying worst-group error under spurious
//! correlations.
//!
//! The crate covers the full loop of a desk-scale study:
//!
//! * [`data`] — synthetic group-shift datasets (an *implicit-memorization*
//!   setting with block Gaussian features and an *explicit-memorization*
//!   setting with scalar core/spurious features plus a high-dimensional
//!   noise block), dataset transforms (spurious-feature removal,
//!   group-balanced subsampling), and featurized-CSV ingestion.
//! * [`features`] — ReLU random-projection feature maps.
//! * [`optimize`] — weighted logistic regression with L2 regularization
//!   (ERM / group-reweighted / subsampled objectives), the exact
//!   minimum-norm (max-margin) separator, and gradient-descent
//!   implicit-bias experiments.
//! * [`analysis`] — group-conditional error metrics, representer
//!   coefficients and memorization fractions, closed-form error and
//!   population-gradient computations, and numerical checks of the norm
//!   and variance bounds.
//! * [`sweeps`] — a deterministic, seeded experiment harness that sweeps
//!   model size, group-imbalance knobs, objectives, and regularization,
//!   and persists results as CSV/SVG.
//!
//! All randomness flows from 64-bit master seeds through named substreams
//! (see [`rng`]), so every dataset, sweep, and report is reproducible
//! bit-for-bit given its configuration.

pub mod analysis;
pub mod data;
pub mod error;
pub mod features;
pub mod linalg;
pub mod optimize;
pub mod rng;
pub mod sweeps;

pub use analysis::{GroupMetrics, MemorizationReport, TheoryParams};
pub use sweeps::{SweepRow, SweepSpec};
pub use data::{BlockLayout, ExplicitConfig, GroupedDataset, ImplicitConfig};
pub use error::{Error, Result};
pub use features::ProjectionMatrix;
pub use optimize::{LinearModel, Objective, SeparatorResult, TrainConfig, TrainOutcome};

