//! Deterministic experiment harness: model-size curves, knob grids,
//! objective comparisons, and regularization grids over the synthetic
//! settings (or a featurized CSV), with CSV/SVG persistence.
//!
//! A sweep is a cross product of cells. Each *cell* is one knob setting
//! plus one trial index; within a cell all model sizes, objectives, and λ
//! values share the same train set, test set, and projection draw, so
//! differences within a cell are attributable to the swept axes alone.
//! Projections are nested (row prefixes of one draw) and the explicit
//! setting's noise blocks are nested prefixes of one base draw rescaled by
//! `σ_noise/√N`, which keeps curves over model size comparable point to
//! point. Cells run in a work-stealing pool; the row order of the result
//! is the deterministic cell order regardless of scheduling.
//!
//! Test sets are group-balanced (`test_size_per_group` points each), so
//! every group error is estimated with the same precision. Reported test
//! averages weight the per-group errors by the *training* group
//! proportions, matching the convention of evaluating a skewed population
//! with a balanced sample; train averages use the trained-on set's own
//! proportions.

mod io;
mod plot;

pub use io::{read_results, write_results, RESULTS_HEADER};
pub use plot::write_error_vs_size_svg;

use std::path::PathBuf;
use std::time::Instant;

use ndarray::{s, Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::GroupMetrics;
use crate::data::{
    gen_implicit, group_label, load_features_csv, remove_spurious, BlockLayout, CsvSchema,
    GroupedDataset, ImplicitConfig, NUM_GROUPS,
};
use crate::error::{Error, Result};
use crate::features::{apply_features, sample_projection};
use crate::linalg::matmul_abt_into;
use crate::optimize::{train_logistic, LinearModel, Objective, TrainConfig};
use crate::rng::{derive_seed, substream};

/// Which data family a sweep runs on.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SettingSpec {
    /// Block-Gaussian features mapped through ReLU random projections;
    /// `model_sizes` are projection counts `m`.
    Implicit {
        n: usize,
        d: usize,
        p_maj: f64,
        sigma_core_sq: f64,
        sigma_spu_sq: f64,
        /// Re-sample the spurious block to zero mean (train and test).
        #[serde(default)]
        remove_spurious: bool,
    },
    /// Scalar core/spurious features plus a noise block; `model_sizes` are
    /// noise dimensions `N` (0 allowed).
    Explicit {
        n_maj: usize,
        n_min: usize,
        sigma_core_sq: f64,
        sigma_spu_sq: f64,
        sigma_noise_sq: f64,
    },
    /// Featurized CSV through ReLU random projections; `model_sizes` are
    /// projection counts `m`.
    Csv {
        train_path: PathBuf,
        test_path: PathBuf,
        #[serde(default)]
        schema: CsvSchema,
    },
}

impl SettingSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SettingSpec::Implicit { .. } => "implicit",
            SettingSpec::Explicit { .. } => "explicit",
            SettingSpec::Csv { .. } => "csv",
        }
    }
}

/// Grid over the majority fraction and the spurious-core ratio. `r_sc`
/// varies through `σ²_spu = σ²_core / r_sc` at fixed `σ²_core`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KnobGrid {
    pub p_maj: Vec<f64>,
    pub r_sc: Vec<f64>,
}

/// Full sweep description; everything a run needs, including the master
/// seed, so reruns are bit-identical.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSpec {
    pub setting: SettingSpec,
    pub model_sizes: Vec<usize>,
    pub objectives: Vec<Objective>,
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub knob_grid: Option<KnobGrid>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_test_size")]
    pub test_size_per_group: usize,
    pub seed: u64,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
}

fn default_trials() -> usize {
    1
}

fn default_test_size() -> usize {
    2500
}

fn default_grad_tol() -> f64 {
    1e-8
}

fn default_max_iters() -> usize {
    600
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.model_sizes.is_empty() {
            return Err(Error::config("model_sizes must be nonempty"));
        }
        if self.objectives.is_empty() {
            return Err(Error::config("objectives must be nonempty"));
        }
        if self.lambdas.is_empty() {
            return Err(Error::config("lambdas must be nonempty"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials must be ≥ 1"));
        }
        if self.test_size_per_group == 0 && !matches!(self.setting, SettingSpec::Csv { .. }) {
            return Err(Error::config("test_size_per_group must be ≥ 1"));
        }
        if let SettingSpec::Explicit { .. } = self.setting {
            // N = 0 is fine; sizes need not be distinct but must be sorted for nesting
        } else if self.model_sizes.contains(&0) {
            return Err(Error::config("projection counts must be ≥ 1"));
        }
        if let Some(grid) = &self.knob_grid {
            if grid.p_maj.is_empty() || grid.r_sc.is_empty() {
                return Err(Error::config("knob grid axes must be nonempty"));
            }
        }
        Ok(())
    }

    /// Number of cells (knob points × trials) the sweep will run.
    pub fn cell_count(&self) -> usize {
        self.knob_points().len() * self.trials
    }

    /// Number of result rows the sweep will produce.
    pub fn row_count(&self) -> usize {
        self.cell_count() * self.model_sizes.len() * self.objectives.len() * self.lambdas.len()
    }

    fn knob_points(&self) -> Vec<(f64, f64)> {
        match &self.knob_grid {
            Some(grid) => {
                let mut points = Vec::new();
                for &p in &grid.p_maj {
                    for &r in &grid.r_sc {
                        points.push((p, r));
                    }
                }
                points
            }
            None => vec![(f64::NAN, f64::NAN)], // placeholders: use base setting
        }
    }
}

/// One result row: cell identifiers plus train/test metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub setting: String,
    pub objective: Objective,
    pub lambda: f64,
    pub model_size: usize,
    /// Realized majority fraction of the training set (NaN for CSV data).
    pub p_maj: f64,
    /// Spurious-core information ratio (NaN for CSV data).
    pub r_sc: f64,
    pub trial: usize,
    /// Number of training examples the model actually saw (the subsampled
    /// count for the subsample objective).
    pub n_train: usize,
    pub converged: bool,
    pub grad_norm: f64,
    pub train: GroupMetrics,
    pub test: GroupMetrics,
    pub wall_time_s: f64,
}

/// Runs the model-size sweep over the base setting (no knob grid).
pub fn run_model_size_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    run_sweep(spec)
}

/// Runs the full (p_maj × r_sc × model size) grid; requires a knob grid.
pub fn run_knob_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.knob_grid.is_none() {
        return Err(Error::config("knob sweep requires a knob_grid"));
    }
    run_sweep(spec)
}

/// Same grid across objectives with shared data per cell; requires the
/// subsample objective to be present.
pub fn run_objective_comparison(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if !spec.objectives.contains(&Objective::Subsample) {
        return Err(Error::config("objective comparison requires the subsample objective"));
    }
    run_sweep(spec)
}

/// Regularization grid; requires at least two λ values.
pub fn run_reg_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    if spec.lambdas.len() < 2 {
        return Err(Error::config("regularization sweep requires at least two lambdas"));
    }
    run_sweep(spec)
}

/// Paired model-size curves for an explicit-setting spec and an
/// implicit-setting spec (matched parameters are the caller's
/// responsibility; see [`a4_matched_specs`]). Rows of both runs are
/// concatenated, distinguishable by the `setting` column.
pub fn run_explicit_vs_implicit(
    implicit: &SweepSpec,
    explicit: &SweepSpec,
) -> Result<Vec<SweepRow>> {
    if !matches!(implicit.setting, SettingSpec::Implicit { .. }) {
        return Err(Error::config("first spec must use the implicit setting"));
    }
    if !matches!(explicit.setting, SettingSpec::Explicit { .. }) {
        return Err(Error::config("second spec must use the explicit setting"));
    }
    let mut rows = run_sweep(implicit)?;
    rows.extend(run_sweep(explicit)?);
    Ok(rows)
}

/// Matched implicit/explicit spec pair: the implicit block variances are
/// the explicit scalar variances scaled by `d`, so the block means carry
/// the same information per example.
pub fn a4_matched_specs(
    n: usize,
    d: usize,
    p_maj: f64,
    implicit_sizes: Vec<usize>,
    explicit_sizes: Vec<usize>,
    trials: usize,
    test_size_per_group: usize,
    seed: u64,
) -> Result<(SweepSpec, SweepSpec)> {
    let (n_maj, n_min) = crate::data::split_even(n, p_maj)?;
    let (sigma_core_sq, sigma_spu_sq, sigma_noise_sq) = (1.0, 0.01, 1.0);
    let implicit = SweepSpec {
        setting: SettingSpec::Implicit {
            n,
            d,
            p_maj,
            sigma_core_sq: sigma_core_sq * d as f64,
            sigma_spu_sq: sigma_spu_sq * d as f64,
            remove_spurious: false,
        },
        model_sizes: implicit_sizes,
        objectives: vec![Objective::Reweight],
        lambdas: vec![1e-9],
        knob_grid: None,
        trials,
        test_size_per_group,
        seed,
        grad_tol: default_grad_tol(),
        max_iters: default_max_iters(),
    };
    let explicit = SweepSpec {
        setting: SettingSpec::Explicit { n_maj, n_min, sigma_core_sq, sigma_spu_sq, sigma_noise_sq },
        model_sizes: explicit_sizes,
        objectives: vec![Objective::Reweight],
        lambdas: vec![1e-9],
        knob_grid: None,
        trials,
        test_size_per_group,
        seed: derive_seed(seed, "explicit-counterpart", 0),
        grad_tol: default_grad_tol(),
        max_iters: default_max_iters(),
    };
    Ok((implicit, explicit))
}

/// The general engine behind all sweep entry points.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let knob_points = spec.knob_points();
    let mut cells = Vec::with_capacity(spec.cell_count());
    for (k, &(p, r)) in knob_points.iter().enumerate() {
        for trial in 0..spec.trials {
            cells.push(Cell { knob_index: k, p_maj: p, r_sc: r, trial, index: cells.len() as u64 });
        }
    }
    let nested: Vec<Vec<SweepRow>> =
        cells.par_iter().map(|cell| run_cell(spec, cell)).collect::<Result<_>>()?;
    Ok(nested.into_iter().flatten().collect())
}

#[derive(Clone, Copy, Debug)]
struct Cell {
    knob_index: usize,
    /// NaN means "use the base setting's value".
    p_maj: f64,
    r_sc: f64,
    trial: usize,
    index: u64,
}

/// A trained model waiting for the cell's one-pass test evaluation.
struct PendingRow {
    model_size: usize,
    objective: Objective,
    lambda: f64,
    n_train: usize,
    converged: bool,
    grad_norm: f64,
    train: GroupMetrics,
    wall_time_s: f64,
    weights: Vec<f64>,
}

fn run_cell(spec: &SweepSpec, cell: &Cell) -> Result<Vec<SweepRow>> {
    match &spec.setting {
        SettingSpec::Implicit { .. } | SettingSpec::Csv { .. } => run_projection_cell(spec, cell),
        SettingSpec::Explicit { .. } => run_explicit_cell(spec, cell),
    }
}

/// Training group proportions used for the test-average convention.
fn train_weights(ds: &GroupedDataset) -> [f64; NUM_GROUPS] {
    ds.group_proportions()
}

fn train_model(
    spec: &SweepSpec,
    ds: &GroupedDataset,
    objective: Objective,
    lambda: f64,
    subsample_seed: u64,
) -> Result<(TrainConfig, crate::optimize::TrainOutcome)> {
    let cfg = TrainConfig {
        objective,
        lambda,
        grad_tol: spec.grad_tol,
        max_iters: spec.max_iters,
        seed: subsample_seed,
    };
    let out = train_logistic(ds, &cfg)?;
    Ok((cfg, out))
}

/// Train-set metrics of a model on the set it was fitted to. For the
/// subsample objective the subsampled set is reproduced from the seed.
fn train_metrics(
    ds: &GroupedDataset,
    objective: Objective,
    subsample_seed: u64,
    model: &LinearModel,
) -> Result<GroupMetrics> {
    match objective {
        Objective::Subsample => {
            let reduced = crate::data::subsample_balanced(ds, subsample_seed)?;
            crate::analysis::group_errors(model, &reduced, None)
        }
        _ => crate::analysis::group_errors(model, ds, None),
    }
}

/// Implicit and CSV settings: train once per (m, objective, λ) on nested
/// ReLU projection features, then score every pending model in a single
/// streaming pass over the test set.
fn run_projection_cell(spec: &SweepSpec, cell: &Cell) -> Result<Vec<SweepRow>> {
    let (train_ds, test_ds, setting_name) = match &spec.setting {
        SettingSpec::Implicit { n, d, p_maj, sigma_core_sq, sigma_spu_sq, remove_spurious: strip } => {
            let p = if cell.p_maj.is_nan() { *p_maj } else { cell.p_maj };
            let spu_var =
                if cell.r_sc.is_nan() { *sigma_spu_sq } else { *sigma_core_sq / cell.r_sc };
            let train_cfg = ImplicitConfig {
                n: *n,
                d: *d,
                p_maj: p,
                sigma_core_sq: *sigma_core_sq,
                sigma_spu_sq: spu_var,
                seed: derive_seed(spec.seed, "train-data", cell.index),
            };
            let test_cfg = ImplicitConfig {
                n: 4 * spec.test_size_per_group,
                d: *d,
                p_maj: 0.5,
                sigma_core_sq: *sigma_core_sq,
                sigma_spu_sq: spu_var,
                seed: derive_seed(spec.seed, "test-data", cell.index),
            };
            let mut train = gen_implicit(&train_cfg)?;
            let mut test = gen_implicit(&test_cfg)?;
            if *strip {
                train = remove_spurious(&train, spu_var, derive_seed(spec.seed, "strip-train", cell.index))?;
                test = remove_spurious(&test, spu_var, derive_seed(spec.seed, "strip-test", cell.index))?;
            }
            (train, test, "implicit")
        }
        SettingSpec::Csv { train_path, test_path, schema } => {
            let train = load_features_csv(train_path, schema)?;
            let test = load_features_csv(test_path, schema)?;
            (train, test, "csv")
        }
        SettingSpec::Explicit { .. } => unreachable!("dispatched to run_explicit_cell"),
    };

    let (realized_p, realized_r) = realized_knobs(spec, cell, &train_ds);
    let m_max = *spec.model_sizes.iter().max().expect("validated nonempty");
    let projection =
        sample_projection(train_ds.dim(), m_max, derive_seed(spec.seed, "projection", cell.index))?;

    let mut sizes = spec.model_sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();

    // Nested train features: columns [0, m) of the full feature matrix.
    let n = train_ds.n();
    let mut features = Array2::zeros((n, m_max));
    let mut filled = 0usize;
    let test_weights_vec = train_weights(&train_ds);
    let mut pending: Vec<PendingRow> = Vec::new();

    for &m in &sizes {
        if m > filled {
            let proj_rows = projection.rows();
            let new_rows = proj_rows.slice(s![filled..m, ..]);
            let mut block = features.slice_mut(s![.., filled..m]);
            matmul_abt_into(train_ds.features(), new_rows, block.view_mut());
            block.mapv_inplace(|v| v.max(0.0));
            filled = m;
        }
        let z = features.slice(s![.., 0..m]);
        let feat_ds = GroupedDataset::new(
            z.to_owned(),
            train_ds.labels().to_vec(),
            train_ds.attributes().to_vec(),
            None,
        )?;
        for &objective in &spec.objectives {
            for &lambda in &spec.lambdas {
                let started = Instant::now();
                let ss_seed = derive_seed(spec.seed, "subsample", cell.index);
                let (_, out) = train_model(spec, &feat_ds, objective, lambda, ss_seed)?;
                let train = train_metrics(&feat_ds, objective, ss_seed, &out.model)?;
                pending.push(PendingRow {
                    model_size: m,
                    objective,
                    lambda,
                    n_train: out.n_train,
                    converged: out.converged,
                    grad_norm: out.grad_norm,
                    train,
                    wall_time_s: started.elapsed().as_secs_f64(),
                    weights: out.model.weights().to_vec(),
                });
            }
        }
    }
    drop(features);

    // One streaming pass over the test set scores every pending model.
    let n_test = test_ds.n();
    let block_size = 512usize;
    let mut wrong = vec![[0usize; NUM_GROUPS]; pending.len()];
    let mut counts = [0usize; NUM_GROUPS];
    let mut start = 0usize;
    while start < n_test {
        let stop = (start + block_size).min(n_test);
        let test_features = test_ds.features();
        let x_block = test_features.slice(s![start..stop, ..]);
        let z_block = apply_features(&projection, x_block)?;
        for (p, pend) in pending.iter().enumerate() {
            let w = Array1::from(pend.weights.clone());
            let scores = z_block.slice(s![.., 0..pend.model_size]).dot(&w);
            for (row, &score) in scores.iter().enumerate() {
                let i = start + row;
                let y = f64::from(test_ds.labels()[i]);
                if y * score <= 0.0 {
                    wrong[p][test_ds.group_ids()[i] as usize] += 1;
                }
            }
        }
        for i in start..stop {
            counts[test_ds.group_ids()[i] as usize] += 1;
        }
        start = stop;
    }

    assemble_rows(spec, cell, setting_name, realized_p, realized_r, pending, &wrong, &counts, test_weights_vec)
}

/// Explicit setting: per N, the dataset is `[x_core, x_spu, (σ/√N)·ε[..N]]`
/// over one base noise draw ε, so curves over N are paired.
fn run_explicit_cell(spec: &SweepSpec, cell: &Cell) -> Result<Vec<SweepRow>> {
    let SettingSpec::Explicit { n_maj, n_min, sigma_core_sq, sigma_spu_sq, sigma_noise_sq } =
        &spec.setting
    else {
        unreachable!()
    };
    let (n_maj, n_min) = if cell.p_maj.is_nan() {
        (*n_maj, *n_min)
    } else {
        crate::data::split_even(n_maj + n_min, cell.p_maj)?
    };
    let spu_var = if cell.r_sc.is_nan() { *sigma_spu_sq } else { *sigma_core_sq / cell.r_sc };
    let n = n_maj + n_min;
    let n_max = *spec.model_sizes.iter().max().expect("validated nonempty");

    let mut sizes = spec.model_sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();

    // Base draws: core/spu scalars plus a unit-variance noise panel.
    let sizes_by_group = [n_maj / 2, n_min / 2, n_maj / 2, n_min / 2];
    let mut labels = Vec::with_capacity(n);
    let mut attrs = Vec::with_capacity(n);
    for g in 0..NUM_GROUPS as u8 {
        let (y, a) = group_label(g);
        for _ in 0..sizes_by_group[g as usize] {
            labels.push(y);
            attrs.push(a);
        }
    }
    let mut rng = substream(derive_seed(spec.seed, "train-data", cell.index), "explicit-base", 0);
    let mut core = vec![0.0; n];
    let mut spu = vec![0.0; n];
    for i in 0..n {
        let zc: f64 = rng.sample(StandardNormal);
        let zs: f64 = rng.sample(StandardNormal);
        core[i] = f64::from(labels[i]) + sigma_core_sq.sqrt() * zc;
        spu[i] = f64::from(attrs[i]) + spu_var.sqrt() * zs;
    }
    let mut noise_base = Array2::zeros((n, n_max));
    for i in 0..n {
        for j in 0..n_max {
            let z: f64 = rng.sample(StandardNormal);
            noise_base[[i, j]] = z;
        }
    }

    let mut pending: Vec<PendingRow> = Vec::new();
    let mut train_props = [0.0; NUM_GROUPS];
    let mut realized_p = f64::NAN;
    for &big_n in &sizes {
        let scale = if big_n > 0 { (sigma_noise_sq / big_n as f64).sqrt() } else { 0.0 };
        let mut x = Array2::zeros((n, 2 + big_n));
        for i in 0..n {
            x[[i, 0]] = core[i];
            x[[i, 1]] = spu[i];
            for j in 0..big_n {
                x[[i, 2 + j]] = scale * noise_base[[i, j]];
            }
        }
        let ds = GroupedDataset::new(
            x,
            labels.clone(),
            attrs.clone(),
            Some(BlockLayout { core: 1, spu: 1, noise: big_n }),
        )?;
        train_props = ds.group_proportions();
        realized_p = (ds.group_sizes()[0] + ds.group_sizes()[2]) as f64 / n as f64;
        for &objective in &spec.objectives {
            for &lambda in &spec.lambdas {
                let started = Instant::now();
                let ss_seed = derive_seed(spec.seed, "subsample", cell.index);
                let (_, out) = train_model(spec, &ds, objective, lambda, ss_seed)?;
                let train = train_metrics(&ds, objective, ss_seed, &out.model)?;
                pending.push(PendingRow {
                    model_size: big_n,
                    objective,
                    lambda,
                    n_train: out.n_train,
                    converged: out.converged,
                    grad_norm: out.grad_norm,
                    train,
                    wall_time_s: started.elapsed().as_secs_f64(),
                    weights: out.model.weights().to_vec(),
                });
            }
        }
    }

    // Streaming balanced test set: per group, blocks of fresh draws score
    // all pending models, reusing one unit-noise block per batch.
    let per_group = spec.test_size_per_group;
    let mut wrong = vec![[0usize; NUM_GROUPS]; pending.len()];
    let mut counts = [0usize; NUM_GROUPS];
    let block = 256usize;
    for g in 0..NUM_GROUPS as u8 {
        let (y, a) = group_label(g);
        let mut trng = substream(derive_seed(spec.seed, "test-data", cell.index), "explicit-test", u64::from(g));
        let mut done = 0usize;
        while done < per_group {
            let b = block.min(per_group - done);
            let mut xc = vec![0.0; b];
            let mut xs = vec![0.0; b];
            for i in 0..b {
                let zc: f64 = trng.sample(StandardNormal);
                let zs: f64 = trng.sample(StandardNormal);
                xc[i] = f64::from(y) + sigma_core_sq.sqrt() * zc;
                xs[i] = f64::from(a) + spu_var.sqrt() * zs;
            }
            let mut eps = Array2::zeros((b, n_max));
            for i in 0..b {
                for j in 0..n_max {
                    let z: f64 = trng.sample(StandardNormal);
                    eps[[i, j]] = z;
                }
            }
            for (p, pend) in pending.iter().enumerate() {
                let big_n = pend.model_size;
                let scale = if big_n > 0 { (sigma_noise_sq / big_n as f64).sqrt() } else { 0.0 };
                let w_noise = Array1::from(pend.weights[2..].to_vec());
                let noise_scores = if big_n > 0 {
                    eps.slice(s![.., 0..big_n]).dot(&w_noise)
                } else {
                    Array1::zeros(b)
                };
                for i in 0..b {
                    let score =
                        pend.weights[0] * xc[i] + pend.weights[1] * xs[i] + scale * noise_scores[i];
                    if f64::from(y) * score <= 0.0 {
                        wrong[p][g as usize] += 1;
                    }
                }
            }
            counts[g as usize] += b;
            done += b;
        }
    }

    let realized_r = *sigma_core_sq / spu_var;
    assemble_rows(spec, cell, "explicit", realized_p, realized_r, pending, &wrong, &counts, train_props)
}

fn realized_knobs(spec: &SweepSpec, cell: &Cell, train_ds: &GroupedDataset) -> (f64, f64) {
    match &spec.setting {
        SettingSpec::Implicit { p_maj, sigma_core_sq, sigma_spu_sq, .. } => {
            let p = if cell.p_maj.is_nan() { *p_maj } else { cell.p_maj };
            let r = if cell.r_sc.is_nan() { sigma_core_sq / sigma_spu_sq } else { cell.r_sc };
            (p, r)
        }
        SettingSpec::Csv { .. } => {
            let sizes = train_ds.group_sizes();
            let p = (sizes[0] + sizes[2]) as f64 / train_ds.n() as f64;
            (p, f64::NAN)
        }
        SettingSpec::Explicit { .. } => (f64::NAN, f64::NAN),
    }
}

#[allow(clippy::too_many_arguments)]
fn assemble_rows(
    spec: &SweepSpec,
    cell: &Cell,
    setting_name: &str,
    p_maj: f64,
    r_sc: f64,
    pending: Vec<PendingRow>,
    wrong: &[[usize; NUM_GROUPS]],
    counts: &[usize; NUM_GROUPS],
    test_avg_weights: [f64; NUM_GROUPS],
) -> Result<Vec<SweepRow>> {
    let _ = cell.knob_index;
    let mut rows = Vec::with_capacity(pending.len());
    for (p, pend) in pending.into_iter().enumerate() {
        let mut per_group = [0.0; NUM_GROUPS];
        for g in 0..NUM_GROUPS {
            if counts[g] == 0 {
                return Err(Error::precondition(format!("test group {g} is empty")));
            }
            per_group[g] = wrong[p][g] as f64 / counts[g] as f64;
        }
        let test = GroupMetrics::from_errors(per_group, test_avg_weights)?;
        rows.push(SweepRow {
            setting: setting_name.to_string(),
            objective: pend.objective,
            lambda: pend.lambda,
            model_size: pend.model_size,
            p_maj,
            r_sc,
            trial: cell.trial,
            n_train: pend.n_train,
            converged: pend.converged,
            grad_norm: pend.grad_norm,
            train: pend.train,
            test,
            wall_time_s: pend.wall_time_s,
        });
    }
    let _ = spec;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> SweepSpec {
        SweepSpec {
            setting: SettingSpec::Implicit {
                n: 60,
                d: 4,
                p_maj: 0.9,
                sigma_core_sq: 4.0,
                sigma_spu_sq: 1.0,
                remove_spurious: false,
            },
            model_sizes: vec![1, 4, 16],
            objectives: vec![Objective::Erm, Objective::Reweight],
            lambdas: vec![1e-9],
            knob_grid: None,
            trials: 2,
            test_size_per_group: 50,
            seed: 11,
            grad_tol: 1e-8,
            max_iters: 200,
        }
    }

    #[test]
    fn sweep_is_deterministic() {
        let spec = tiny_spec();
        let a = run_model_size_sweep(&spec).unwrap();
        let b = run_model_size_sweep(&spec).unwrap();
        assert_eq!(a.len(), spec.row_count());
        for (x, y) in a.iter().zip(&b) {
            let mut x = x.clone();
            let mut y = y.clone();
            x.wall_time_s = 0.0;
            y.wall_time_s = 0.0;
            assert_eq!(x, y);
        }
    }

    #[test]
    fn shared_data_across_objectives() {
        // The ERM rows must be identical whether or not reweight also runs:
        // cells share data and projections across objectives.
        let mut solo = tiny_spec();
        solo.objectives = vec![Objective::Erm];
        let both = tiny_spec();
        let a = run_model_size_sweep(&solo).unwrap();
        let b = run_model_size_sweep(&both).unwrap();
        let b_erm: Vec<&SweepRow> = b.iter().filter(|r| r.objective == Objective::Erm).collect();
        assert_eq!(a.len(), b_erm.len());
        for (x, y) in a.iter().zip(b_erm) {
            assert_eq!(x.test.per_group_error, y.test.per_group_error);
            assert_eq!(x.train.per_group_error, y.train.per_group_error);
        }
    }

    #[test]
    fn all_errors_within_unit_interval() {
        let rows = run_model_size_sweep(&tiny_spec()).unwrap();
        for row in rows {
            for e in row.train.per_group_error.iter().chain(row.test.per_group_error.iter()) {
                assert!((0.0..=1.0).contains(e));
            }
            assert!((0.0..=1.0).contains(&row.train.average_error));
            assert!((0.0..=1.0).contains(&row.test.worst_group_error));
        }
    }

    #[test]
    fn subsample_rows_record_reduced_training_size() {
        let mut spec = tiny_spec();
        spec.objectives = vec![Objective::Subsample];
        spec.trials = 1;
        let rows = run_objective_comparison(&spec).unwrap();
        // 60 points at p_maj = 0.9 → min group 3 → 12 training points
        for row in &rows {
            assert_eq!(row.n_train, 12);
        }
    }

    #[test]
    fn explicit_setting_runs_with_zero_noise_dim() {
        let spec = SweepSpec {
            setting: SettingSpec::Explicit {
                n_maj: 40,
                n_min: 8,
                sigma_core_sq: 1.0,
                sigma_spu_sq: 0.02,
                sigma_noise_sq: 1.0,
            },
            model_sizes: vec![0, 8, 64],
            objectives: vec![Objective::Reweight],
            lambdas: vec![1e-9],
            knob_grid: None,
            trials: 1,
            test_size_per_group: 40,
            seed: 3,
            grad_tol: 1e-8,
            max_iters: 300,
        };
        let rows = run_model_size_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.setting == "explicit"));
        assert!((rows[0].r_sc - 50.0).abs() < 1e-12);
    }

    #[test]
    fn knob_sweep_requires_grid_and_expands_it() {
        let mut spec = tiny_spec();
        assert!(run_knob_sweep(&spec).is_err());
        spec.knob_grid = Some(KnobGrid { p_maj: vec![0.5, 0.9], r_sc: vec![1.0, 4.0] });
        spec.trials = 1;
        spec.model_sizes = vec![2, 8];
        spec.objectives = vec![Objective::Reweight];
        let rows = run_knob_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 2);
        let mut seen: Vec<(u64, u64)> = rows
            .iter()
            .map(|r| (r.p_maj.to_bits(), r.r_sc.to_bits()))
            .collect();
        seen.dedup();
        assert_eq!(seen.len(), 4, "each knob point appears contiguously");
    }
}
