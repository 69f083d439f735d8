//! Group-shift datasets: generation, transforms, and CSV ingestion.
//!
//! Every example carries a binary label `y ∈ {−1, 1}` and a binary
//! attribute `a ∈ {−1, 1}`; the pair defines one of four groups. Group ids
//! use the encoding
//!
//! ```text
//! g = (y == 1 ? 0 : 2) + (a == y ? 0 : 1)
//! ```
//!
//! so ids `{0, 2}` are the majority groups (`a = y`) and ids `{1, 3}` the
//! minority groups (`a = −y`). Generated datasets lay rows out in group-id
//! order.
//!
//! Two synthetic settings are provided. The *implicit* setting draws
//! `x_core | y ~ N(y·1_d, σ²_core I_d)` and `x_spu | a ~ N(a·1_d, σ²_spu I_d)`;
//! the *explicit* setting uses scalar core/spurious features plus an
//! `N`-dimensional noise block `x_noise ~ N(0, (σ²_noise/N) I_N)`.

use std::ops::Range;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;

pub const NUM_GROUPS: usize = 4;

/// Group id for a `(label, attribute)` pair.
pub fn group_id(y: i8, a: i8) -> u8 {
    let base = if y == 1 { 0 } else { 2 };
    base + u8::from(a != y)
}

/// `(label, attribute)` pair for a group id.
pub fn group_label(g: u8) -> (i8, i8) {
    match g {
        0 => (1, 1),
        1 => (1, -1),
        2 => (-1, -1),
        3 => (-1, 1),
        _ => panic!("group id {g} out of range"),
    }
}

/// Majority groups are those with `a = y`.
pub fn is_majority(g: u8) -> bool {
    g % 2 == 0
}

/// Column partition of the feature matrix into (core, spurious, noise)
/// blocks, in that order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub core: usize,
    pub spu: usize,
    pub noise: usize,
}

impl BlockLayout {
    pub fn dim(&self) -> usize {
        self.core + self.spu + self.noise
    }

    pub fn core_range(&self) -> Range<usize> {
        0..self.core
    }

    pub fn spu_range(&self) -> Range<usize> {
        self.core..self.core + self.spu
    }

    pub fn noise_range(&self) -> Range<usize> {
        self.core + self.spu..self.dim()
    }
}

/// An immutable dataset of `n` examples with features, labels, attributes,
/// and derived group ids. Safe to share across threads.
#[derive(Clone, Debug)]
pub struct GroupedDataset {
    features: Array2<f64>,
    labels: Vec<i8>,
    attributes: Vec<i8>,
    group_ids: Vec<u8>,
    block_layout: Option<BlockLayout>,
}

impl GroupedDataset {
    /// Builds a dataset, deriving group ids and validating all invariants.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<i8>,
        attributes: Vec<i8>,
        block_layout: Option<BlockLayout>,
    ) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::config("dataset must contain at least one example"));
        }
        if labels.len() != n || attributes.len() != n {
            return Err(Error::dimension(format!(
                "features have {n} rows but {} labels / {} attributes",
                labels.len(),
                attributes.len()
            )));
        }
        if let Some(layout) = block_layout {
            if layout.dim() != features.ncols() {
                return Err(Error::config(format!(
                    "block layout covers {} columns, features have {}",
                    layout.dim(),
                    features.ncols()
                )));
            }
        }
        for (i, (&y, &a)) in labels.iter().zip(&attributes).enumerate() {
            if y != 1 && y != -1 {
                return Err(Error::config(format!("label at row {i} is {y}, expected ±1")));
            }
            if a != 1 && a != -1 {
                return Err(Error::config(format!("attribute at row {i} is {a}, expected ±1")));
            }
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::config("feature matrix contains non-finite entries"));
        }
        let group_ids = labels.iter().zip(&attributes).map(|(&y, &a)| group_id(y, a)).collect();
        Ok(Self { features, labels, attributes, group_ids, block_layout })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn labels_f64(&self) -> Vec<f64> {
        self.labels.iter().map(|&y| f64::from(y)).collect()
    }

    pub fn attributes(&self) -> &[i8] {
        &self.attributes
    }

    pub fn group_ids(&self) -> &[u8] {
        &self.group_ids
    }

    pub fn block_layout(&self) -> Option<BlockLayout> {
        self.block_layout
    }

    pub fn group_sizes(&self) -> [usize; NUM_GROUPS] {
        let mut sizes = [0usize; NUM_GROUPS];
        for &g in &self.group_ids {
            sizes[g as usize] += 1;
        }
        sizes
    }

    /// Empirical group proportions `p̂_g = n_g / n`.
    pub fn group_proportions(&self) -> [f64; NUM_GROUPS] {
        let n = self.n() as f64;
        self.group_sizes().map(|s| s as f64 / n)
    }

    pub fn group_indices(&self, g: u8) -> Vec<usize> {
        self.group_ids
            .iter()
            .enumerate()
            .filter_map(|(i, &gi)| (gi == g).then_some(i))
            .collect()
    }

    /// View of the noise block; requires a block layout with `noise ≥ 1`.
    pub fn noise_block(&self) -> Result<ArrayView2<'_, f64>> {
        let layout = self
            .block_layout
            .ok_or_else(|| Error::precondition("dataset has no block layout"))?;
        if layout.noise == 0 {
            return Err(Error::precondition("dataset has no noise block (N = 0)"));
        }
        Ok(self.features.slice(ndarray::s![.., layout.noise_range()]))
    }

    /// New dataset holding the given rows (in the given order).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::config("subset must contain at least one row"));
        }
        let features = self.features.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let attributes = indices.iter().map(|&i| self.attributes[i]).collect();
        GroupedDataset::new(features, labels, attributes, self.block_layout)
    }
}

/// Configuration of the implicit-memorization generator.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ImplicitConfig {
    /// Total number of examples.
    pub n: usize,
    /// Per-block dimension; features live in `R^{2d}`.
    pub d: usize,
    /// Majority fraction `n_maj / n`.
    pub p_maj: f64,
    pub sigma_core_sq: f64,
    pub sigma_spu_sq: f64,
    pub seed: u64,
}

impl ImplicitConfig {
    /// Spurious-core information ratio `σ²_core / σ²_spu`.
    pub fn r_sc(&self) -> f64 {
        self.sigma_core_sq / self.sigma_spu_sq
    }

    /// Majority/minority totals under the exact-evenness rule; see
    /// [`split_even`].
    pub fn split(&self) -> Result<(usize, usize)> {
        split_even(self.n, self.p_maj)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n must be ≥ 1"));
        }
        if self.d == 0 {
            return Err(Error::config("d must be ≥ 1"));
        }
        for (name, v) in [("sigma_core_sq", self.sigma_core_sq), ("sigma_spu_sq", self.sigma_spu_sq)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!("{name} = {v} must be finite and ≥ 0")));
            }
        }
        self.split().map(|_| ())
    }
}

/// Configuration of the explicit-memorization generator.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ExplicitConfig {
    /// Total majority count, split evenly between the two majority groups.
    pub n_maj: usize,
    /// Total minority count, split evenly between the two minority groups.
    pub n_min: usize,
    /// Noise dimension `N`; `0` gives the two-feature underparameterized setting.
    pub noise_dim: usize,
    pub sigma_core_sq: f64,
    pub sigma_spu_sq: f64,
    pub sigma_noise_sq: f64,
    pub seed: u64,
}

impl ExplicitConfig {
    pub fn n(&self) -> usize {
        self.n_maj + self.n_min
    }

    pub fn p_maj(&self) -> f64 {
        self.n_maj as f64 / self.n() as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n() == 0 {
            return Err(Error::config("n_maj + n_min must be ≥ 1"));
        }
        if self.n_maj % 2 != 0 || self.n_min % 2 != 0 {
            return Err(Error::config(format!(
                "group totals must be even: n_maj = {}, n_min = {}",
                self.n_maj, self.n_min
            )));
        }
        for (name, v) in [
            ("sigma_core_sq", self.sigma_core_sq),
            ("sigma_spu_sq", self.sigma_spu_sq),
            ("sigma_noise_sq", self.sigma_noise_sq),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!("{name} = {v} must be finite and ≥ 0")));
            }
        }
        Ok(())
    }
}

/// Majority/minority totals under the exact-evenness rule: both `n·p_maj`
/// and `n·(1−p_maj)` must resolve to even integers, so the four groups have
/// exact sizes and `p_maj` is realized exactly. Silent rounding would
/// corrupt `p_maj` sweeps, so anything else is rejected.
pub fn split_even(n: usize, p_maj: f64) -> Result<(usize, usize)> {
    if !(0.0..=1.0).contains(&p_maj) {
        return Err(Error::config(format!("p_maj = {p_maj} outside [0, 1]")));
    }
    let raw = n as f64 * p_maj;
    let n_maj = raw.round();
    if (raw - n_maj).abs() > 1e-9 * (n as f64).max(1.0) {
        return Err(Error::config(format!("n·p_maj = {raw} is not an integer (n = {n}, p_maj = {p_maj})")));
    }
    let n_maj = n_maj as usize;
    let n_min = n - n_maj;
    if n_maj % 2 != 0 || n_min % 2 != 0 {
        return Err(Error::config(format!("group totals must be even: n_maj = {n_maj}, n_min = {n_min}")));
    }
    Ok((n_maj, n_min))
}

/// Group sizes in group-id order for a (n_maj, n_min) split.
fn sizes_from_split(n_maj: usize, n_min: usize) -> [usize; NUM_GROUPS] {
    [n_maj / 2, n_min / 2, n_maj / 2, n_min / 2]
}

/// Draws the implicit-memorization dataset: `x = [x_core, x_spu] ∈ R^{2d}`
/// with `x_core | y ~ N(y·1_d, σ²_core I_d)` and `x_spu | a ~ N(a·1_d, σ²_spu I_d)`.
pub fn gen_implicit(cfg: &ImplicitConfig) -> Result<GroupedDataset> {
    cfg.validate()?;
    let (n_maj, n_min) = cfg.split()?;
    let sizes = sizes_from_split(n_maj, n_min);
    let d = cfg.d;
    let mut rng = substream(cfg.seed, "implicit-data", 0);
    let (s_core, s_spu) = (cfg.sigma_core_sq.sqrt(), cfg.sigma_spu_sq.sqrt());

    let mut features = Array2::zeros((cfg.n, 2 * d));
    let mut labels = Vec::with_capacity(cfg.n);
    let mut attributes = Vec::with_capacity(cfg.n);
    let mut row = 0;
    for g in 0..NUM_GROUPS as u8 {
        let (y, a) = group_label(g);
        for _ in 0..sizes[g as usize] {
            for j in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                features[[row, j]] = f64::from(y) + s_core * z;
            }
            for j in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                features[[row, d + j]] = f64::from(a) + s_spu * z;
            }
            labels.push(y);
            attributes.push(a);
            row += 1;
        }
    }
    GroupedDataset::new(features, labels, attributes, Some(BlockLayout { core: d, spu: d, noise: 0 }))
}

/// Draws the explicit-memorization dataset: `x = [x_core, x_spu, x_noise]`
/// with scalar `x_core | y ~ N(y, σ²_core)`, `x_spu | a ~ N(a, σ²_spu)`, and
/// `x_noise ~ N(0, (σ²_noise/N) I_N)`.
pub fn gen_explicit(cfg: &ExplicitConfig) -> Result<GroupedDataset> {
    cfg.validate()?;
    let sizes = sizes_from_split(cfg.n_maj, cfg.n_min);
    let n = cfg.n();
    let big_n = cfg.noise_dim;
    let mut rng = substream(cfg.seed, "explicit-data", 0);
    let (s_core, s_spu) = (cfg.sigma_core_sq.sqrt(), cfg.sigma_spu_sq.sqrt());
    let s_noise = if big_n > 0 { (cfg.sigma_noise_sq / big_n as f64).sqrt() } else { 0.0 };

    let mut features = Array2::zeros((n, 2 + big_n));
    let mut labels = Vec::with_capacity(n);
    let mut attributes = Vec::with_capacity(n);
    let mut row = 0;
    for g in 0..NUM_GROUPS as u8 {
        let (y, a) = group_label(g);
        for _ in 0..sizes[g as usize] {
            let zc: f64 = rng.sample(StandardNormal);
            let zs: f64 = rng.sample(StandardNormal);
            features[[row, 0]] = f64::from(y) + s_core * zc;
            features[[row, 1]] = f64::from(a) + s_spu * zs;
            for j in 0..big_n {
                let z: f64 = rng.sample(StandardNormal);
                features[[row, 2 + j]] = s_noise * z;
            }
            labels.push(y);
            attributes.push(a);
            row += 1;
        }
    }
    GroupedDataset::new(features, labels, attributes, Some(BlockLayout { core: 1, spu: 1, noise: big_n }))
}

/// Replaces the spurious block by fresh zero-mean noise `N(0, σ²_spu I)`,
/// removing the group-conditional mean while keeping the stated variance
/// exactly. Core and noise columns are untouched.
pub fn remove_spurious(ds: &GroupedDataset, sigma_spu_sq: f64, seed: u64) -> Result<GroupedDataset> {
    let layout = ds
        .block_layout()
        .ok_or_else(|| Error::precondition("remove_spurious requires a block layout"))?;
    if layout.spu == 0 {
        return Err(Error::precondition("remove_spurious requires spu_dims > 0"));
    }
    if !sigma_spu_sq.is_finite() || sigma_spu_sq < 0.0 {
        return Err(Error::config(format!("sigma_spu_sq = {sigma_spu_sq} must be finite and ≥ 0")));
    }
    let mut features = ds.features.clone();
    let mut rng = substream(seed, "remove-spurious", 0);
    let s = sigma_spu_sq.sqrt();
    for i in 0..ds.n() {
        for j in layout.spu_range() {
            let z: f64 = rng.sample(StandardNormal);
            features[[i, j]] = s * z;
        }
    }
    GroupedDataset::new(features, ds.labels.clone(), ds.attributes.clone(), Some(layout))
}

/// Uniformly subsamples every group, without replacement, down to the size
/// of the smallest group. The output is group-balanced (`p_maj = 0.5`) and
/// lays rows out in group-id order with ascending original indices.
pub fn subsample_balanced(ds: &GroupedDataset, seed: u64) -> Result<GroupedDataset> {
    let sizes = ds.group_sizes();
    if let Some(g) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::precondition(format!("group {g} is empty; subsampling requires all four groups")));
    }
    let k = *sizes.iter().min().expect("four groups");
    let mut keep = Vec::with_capacity(NUM_GROUPS * k);
    for g in 0..NUM_GROUPS as u8 {
        let mut idx = ds.group_indices(g);
        let mut rng = substream(seed, "subsample", u64::from(g));
        idx.shuffle(&mut rng);
        idx.truncate(k);
        idx.sort_unstable();
        keep.extend(idx);
    }
    ds.subset(&keep)
}

/// Column naming for featurized-CSV ingestion. With `features = None`, every
/// column other than the label and attribute columns is a feature, in header
/// order. Label and attribute values must parse to exactly `1` or `-1`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CsvSchema {
    pub label: String,
    pub attribute: String,
    pub features: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self { label: "y".into(), attribute: "a".into(), features: None }
    }
}

fn parse_sign(raw: &str, row: usize, col: &str) -> Result<i8> {
    match raw.trim().parse::<f64>() {
        Ok(v) if v == 1.0 => Ok(1),
        Ok(v) if v == -1.0 => Ok(-1),
        _ => Err(Error::parse_at(row, format!("column `{col}` has value `{raw}`, expected 1 or -1"))),
    }
}

/// Loads a featurized dataset from CSV. The resulting dataset has no block
/// layout. Errors carry the 1-based data row of the offending record.
pub fn load_features_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<GroupedDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let y_col = find(&schema.label)
        .ok_or_else(|| Error::Parse { row: None, msg: format!("missing label column `{}`", schema.label) })?;
    let a_col = find(&schema.attribute)
        .ok_or_else(|| Error::Parse { row: None, msg: format!("missing attribute column `{}`", schema.attribute) })?;
    let feat_cols: Vec<(usize, String)> = match &schema.features {
        Some(names) => names
            .iter()
            .map(|name| {
                find(name)
                    .map(|i| (i, name.clone()))
                    .ok_or_else(|| Error::Parse { row: None, msg: format!("missing feature column `{name}`") })
            })
            .collect::<Result<_>>()?,
        None => headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != y_col && i != a_col)
            .map(|(i, h)| (i, h.to_string()))
            .collect(),
    };
    if feat_cols.is_empty() {
        return Err(Error::Parse { row: None, msg: "no feature columns".into() });
    }

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut attributes = Vec::new();
    for (rec_idx, record) in reader.records().enumerate() {
        let row_no = rec_idx + 1;
        let record = record.map_err(|e| Error::parse_at(row_no, e.to_string()))?;
        labels.push(parse_sign(&record[y_col], row_no, &schema.label)?);
        attributes.push(parse_sign(&record[a_col], row_no, &schema.attribute)?);
        for (col, name) in &feat_cols {
            let raw = record
                .get(*col)
                .ok_or_else(|| Error::parse_at(row_no, format!("missing column `{name}`")))?;
            let v: f64 = raw
                .trim()
                .parse()
                .map_err(|_| Error::parse_at(row_no, format!("column `{name}` has non-numeric value `{raw}`")))?;
            if !v.is_finite() {
                return Err(Error::parse_at(row_no, format!("column `{name}` has non-finite value `{raw}`")));
            }
            rows.push(v);
        }
    }
    if labels.is_empty() {
        return Err(Error::Parse { row: None, msg: "file contains no data rows".into() });
    }
    let features = Array2::from_shape_vec((labels.len(), feat_cols.len()), rows)
        .expect("row-major rebuild of parsed features");
    GroupedDataset::new(features, labels, attributes, None)
}

/// Writes a dataset in the standard schema: header `y,a,f0..f{D-1}`,
/// decimal floats, UTF-8, LF line endings. Feature values are printed with
/// the shortest representation that round-trips `f64` exactly.
pub fn write_features_csv(ds: &GroupedDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().from_path(path.as_ref())?;
    let mut header = vec!["y".to_string(), "a".to_string()];
    header.extend((0..ds.dim()).map(|j| format!("f{j}")));
    writer.write_record(&header)?;
    for i in 0..ds.n() {
        let mut record = Vec::with_capacity(ds.dim() + 2);
        record.push(ds.labels[i].to_string());
        record.push(ds.attributes[i].to_string());
        record.extend(ds.features.row(i).iter().map(|v| v.to_string()));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}
