//! Numerical verification of the theoretical constructions and bounds for
//! the explicit-memorization setting: hand-built separators that use only
//! the spurious (or only the noise) directions, norm comparisons between
//! the spurious-feature and core-feature separator families, the
//! worst-group-error / memorization trade-off quantities, closed-form
//! group errors for two-feature models, the population gradient of the
//! reweighted loss, and the asymptotic-variance bound for the reweighted
//! estimator.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::normal::normal_cdf;
use crate::analysis::quadrature::GaussHermite;
use crate::analysis::GroupMetrics;
use crate::data::{group_label, is_majority, ExplicitConfig, GroupedDataset, NUM_GROUPS};
use crate::error::{Error, Result};
use crate::optimize::{
    min_norm_separator, min_norm_separator_constrained, train_logistic, LinearModel, Objective,
    TrainConfig,
};
use crate::rng::{derive_seed, substream};

/// Distribution parameters of the explicit setting, as used by the
/// theoretical checks.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TheoryParams {
    pub p_maj: f64,
    pub sigma_core_sq: f64,
    pub sigma_spu_sq: f64,
    pub sigma_noise_sq: f64,
    pub n_maj: usize,
    pub n_min: usize,
    pub noise_dim: usize,
}

impl TheoryParams {
    pub fn from_explicit(cfg: &ExplicitConfig) -> Self {
        Self {
            p_maj: cfg.p_maj(),
            sigma_core_sq: cfg.sigma_core_sq,
            sigma_spu_sq: cfg.sigma_spu_sq,
            sigma_noise_sq: cfg.sigma_noise_sq,
            n_maj: cfg.n_maj,
            n_min: cfg.n_min,
            noise_dim: cfg.noise_dim,
        }
    }

    pub fn n(&self) -> usize {
        self.n_maj + self.n_min
    }

    /// Population group weights (majority split p/2 + p/2, minority likewise).
    pub fn population_weights(&self) -> [f64; NUM_GROUPS] {
        let p = self.p_maj;
        [p / 2.0, (1.0 - p) / 2.0, p / 2.0, (1.0 - p) / 2.0]
    }
}

/// The appendix constants, exposed with defaults at their stated ceilings
/// (`c₁ = 1/2000`, the rest `10⁻³`) and the memorization threshold `γ² = 0.9`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BoundConstants {
    pub c1: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
    pub gamma_sq: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        Self { c1: 1.0 / 2000.0, c3: 1e-3, c4: 1e-3, c5: 1e-3, c6: 1e-3, c7: 1e-3, gamma_sq: 0.9 }
    }
}

/// Default constants of the spurious-feature separator construction:
/// `u = 1.3125` and `s·σ²_noise = 2.61`.
pub fn default_use_spu_params(sigma_noise_sq: f64) -> (f64, f64) {
    (1.3125, 2.61 / sigma_noise_sq)
}

fn explicit_layout(ds: &GroupedDataset) -> Result<crate::data::BlockLayout> {
    let layout = ds
        .block_layout()
        .ok_or_else(|| Error::precondition("explicit-setting dataset required (no block layout)"))?;
    if layout.core != 1 || layout.spu != 1 {
        return Err(Error::precondition("explicit setting has scalar core and spurious blocks"));
    }
    if layout.noise == 0 {
        return Err(Error::precondition("construction requires a noise block (N ≥ 1)"));
    }
    Ok(layout)
}

/// The spurious-feature separator candidate: `w_core = 0`, `w_spu = u`,
/// `w_noise = Σ_{i∈minority} yᵢ·s_coef·x_noise⁽ⁱ⁾`. Whether it actually
/// separates the sample is for the caller to check (see
/// [`verify_norm_bounds`]).
pub fn construct_w_use_spu(ds: &GroupedDataset, u: f64, s_coef: f64) -> Result<LinearModel> {
    let layout = explicit_layout(ds)?;
    let mut w = vec![0.0; ds.dim()];
    w[layout.spu_range().start] = u;
    let noise = ds.noise_block()?;
    for i in 0..ds.n() {
        if !is_majority(ds.group_ids()[i]) {
            let coef = f64::from(ds.labels()[i]) * s_coef;
            for (j, col) in layout.noise_range().enumerate() {
                w[col] += coef * noise[[i, j]];
            }
        }
    }
    LinearModel::new(w, Some(layout))
}

/// The memorize-everything candidate in the core-feature family:
/// `w_core = w_spu = 0`, `w_noise = Σᵢ yᵢ·alpha·x_noise⁽ⁱ⁾` (every point is
/// fit through its own noise direction; `alpha·σ²_noise = 2` by default).
pub fn construct_w_use_core_memall(ds: &GroupedDataset, alpha: f64) -> Result<LinearModel> {
    let layout = explicit_layout(ds)?;
    let mut w = vec![0.0; ds.dim()];
    let noise = ds.noise_block()?;
    for i in 0..ds.n() {
        let coef = f64::from(ds.labels()[i]) * alpha;
        for (j, col) in layout.noise_range().enumerate() {
            w[col] += coef * noise[[i, j]];
        }
    }
    LinearModel::new(w, Some(layout))
}

/// Margins `yᵢ(w·xᵢ)` of a model over a dataset.
pub fn training_margins(model: &LinearModel, ds: &GroupedDataset) -> Result<Vec<f64>> {
    let scores = model.scores(ds.features())?;
    Ok(scores.iter().zip(ds.labels()).map(|(s, &y)| s * f64::from(y)).collect())
}

/// Norm comparisons between the separator families.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormBoundsReport {
    pub u: f64,
    pub s_coef: f64,
    pub w_use_spu_sq_norm: f64,
    pub w_use_spu_min_margin: f64,
    /// min margin ≥ 1, i.e. the construction separates this sample.
    pub w_use_spu_is_separator: bool,
    /// `γ₁² + γ₂·n_min/σ²_noise` with `γ₁ = u`, `γ₂ = (s·σ²_noise)²(2+c₁)`.
    pub spu_norm_bound: f64,
    pub spu_norm_bound_holds: bool,
    pub minnorm_sq_norm: f64,
    /// `‖ŵ_minnorm‖² ≤ ‖w_use_spu‖²`.
    pub minnorm_leq_use_spu: bool,
    /// Minimum norm over the core-feature family (`w_spu = 0`).
    pub constrained_core_sq_norm: f64,
    /// `γ₃·n/σ²_noise` with `γ₃ = (Φ(−1/σ_core) − c₆)γ⁴(1−c₁) − c₇`.
    pub core_norm_lower_bound: f64,
    pub core_norm_bound_holds: bool,
    /// `‖w_use_spu‖² < min-norm over the core family` — the norm gap that
    /// drives the preference for the spurious feature.
    pub core_exceeds_spu: bool,
    pub constrained_geq_unconstrained: bool,
}

/// Builds `w_use_spu` at the given (or default) constants, solves the
/// unconstrained and core-family margin QPs, and reports every norm
/// comparison. Errors when the sample is not separable.
pub fn verify_norm_bounds(
    ds: &GroupedDataset,
    params: &TheoryParams,
    constants: &BoundConstants,
    use_spu_params: Option<(f64, f64)>,
) -> Result<NormBoundsReport> {
    let layout = explicit_layout(ds)?;
    let (u, s_coef) = use_spu_params.unwrap_or_else(|| default_use_spu_params(params.sigma_noise_sq));

    let w_use_spu = construct_w_use_spu(ds, u, s_coef)?;
    let margins = training_margins(&w_use_spu, ds)?;
    let min_margin = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    let w_use_spu_sq = w_use_spu.sq_norm();

    let s_sigma = s_coef * params.sigma_noise_sq;
    let gamma2 = s_sigma * s_sigma * (2.0 + constants.c1);
    let spu_norm_bound = u * u + gamma2 * params.n_min as f64 / params.sigma_noise_sq;

    let unconstrained = min_norm_separator(ds)?;
    let minnorm_sq = unconstrained
        .sq_norm
        .ok_or_else(|| Error::precondition("dataset is not linearly separable"))?;

    let spu_cols: Vec<usize> = layout.spu_range().collect();
    let constrained = min_norm_separator_constrained(ds, &spu_cols)?;
    let constrained_sq = constrained
        .sq_norm
        .ok_or_else(|| Error::precondition("dataset is not separable within the core family"))?;

    let gamma_sq = constants.gamma_sq;
    let gamma3 = (normal_cdf(-1.0 / params.sigma_core_sq.sqrt()) - constants.c6) * gamma_sq * gamma_sq
        * (1.0 - constants.c1)
        - constants.c7;
    let core_norm_lower_bound = gamma3 * params.n() as f64 / params.sigma_noise_sq;

    Ok(NormBoundsReport {
        u,
        s_coef,
        w_use_spu_sq_norm: w_use_spu_sq,
        w_use_spu_min_margin: min_margin,
        w_use_spu_is_separator: min_margin >= 1.0,
        spu_norm_bound,
        spu_norm_bound_holds: w_use_spu_sq <= spu_norm_bound,
        minnorm_sq_norm: minnorm_sq,
        minnorm_leq_use_spu: minnorm_sq <= w_use_spu_sq,
        constrained_core_sq_norm: constrained_sq,
        core_norm_lower_bound,
        core_norm_bound_holds: constrained_sq >= core_norm_lower_bound,
        core_exceeds_spu: constrained_sq > w_use_spu_sq,
        constrained_geq_unconstrained: constrained_sq >= minnorm_sq - 1e-9 * minnorm_sq.abs(),
    })
}

/// The two Φ arguments of the error/memorization trade-off, with the
/// implied lower-bound values.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TradeoffReport {
    pub w_core: f64,
    pub w_spu: f64,
    /// `(−c₃ + w_spu − w_core) / sqrt(w_core²σ²_core + w_spu²σ²_spu)`.
    pub phi_arg_err: f64,
    /// `(1 − (1+c₁)γ² − c₅ − w_spu − w_core) / (same denominator)`.
    pub phi_arg_mem: f64,
    /// `Φ(phi_arg_err) − c₄`, lower bound on the worst-group error.
    pub err_lower_bound: f64,
    /// `Φ(phi_arg_mem) − c₆`, lower bound on the memorized majority fraction.
    pub mem_lower_bound: f64,
}

/// Evaluates the trade-off quantities for a model's (core, spu) weights.
pub fn tradeoff_quantities(
    model: &LinearModel,
    params: &TheoryParams,
    constants: &BoundConstants,
) -> Result<TradeoffReport> {
    let w_core = model.core_scalar()?;
    let w_spu = model.spu_scalar()?;
    let denom_sq = w_core * w_core * params.sigma_core_sq + w_spu * w_spu * params.sigma_spu_sq;
    if denom_sq <= 0.0 {
        return Err(Error::precondition(
            "zero denominator: w_core and w_spu give no Gaussian variance",
        ));
    }
    let denom = denom_sq.sqrt();
    let phi_arg_err = (-constants.c3 + w_spu - w_core) / denom;
    let phi_arg_mem =
        (1.0 - (1.0 + constants.c1) * constants.gamma_sq - constants.c5 - w_spu - w_core) / denom;
    Ok(TradeoffReport {
        w_core,
        w_spu,
        phi_arg_err,
        phi_arg_mem,
        err_lower_bound: normal_cdf(phi_arg_err) - constants.c4,
        mem_lower_bound: normal_cdf(phi_arg_mem) - constants.c6,
    })
}

/// Closed-form group errors of a two-feature model `(w_core, w_spu)` on the
/// explicit population: for group `(y, a)` the margin is Gaussian with mean
/// `w_core + ya·w_spu` and variance `w_core²σ²_core + w_spu²σ²_spu`, so the
/// error is `Φ(−mean/std)`. The average uses the population group weights.
///
/// Requires a model whose noise block is absent or identically zero. A zero
/// variance collapses to the deterministic rule (a zero margin counts as an
/// error).
pub fn analytic_group_error_2d(model: &LinearModel, params: &TheoryParams) -> Result<GroupMetrics> {
    let view = model
        .block_view()
        .ok_or_else(|| Error::precondition("model has no block view"))?;
    if !view.noise.iter().all(|&v| v == 0.0) {
        return Err(Error::precondition("analytic group errors require zero noise weights (N = 0)"));
    }
    let w_core = model.core_scalar()?;
    let w_spu = model.spu_scalar()?;
    if w_core == 0.0 && w_spu == 0.0 {
        return Err(Error::precondition("zero weight vector has no analytic error"));
    }
    let denom_sq = w_core * w_core * params.sigma_core_sq + w_spu * w_spu * params.sigma_spu_sq;
    let denom = denom_sq.sqrt();
    let mut per_group_error = [0.0; NUM_GROUPS];
    for g in 0..NUM_GROUPS as u8 {
        let (y, a) = group_label(g);
        let mean = w_core + f64::from(y) * f64::from(a) * w_spu;
        per_group_error[g as usize] = if denom > 0.0 {
            normal_cdf(-mean / denom)
        } else if mean > 0.0 {
            0.0
        } else {
            1.0
        };
    }
    GroupMetrics::from_errors(per_group_error, params.population_weights())
}

/// σ(−z) = 1/(1+e^z), evaluated stably.
fn sigmoid_neg(z: f64) -> f64 {
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Population gradient of the reweighted logistic loss at a two-feature
/// model, by tensor Gauss–Hermite quadrature per group (order 64, doubled
/// until successive evaluations agree to 1e-9). Groups are weighted by
/// their population mass times the `1/p_g` loss weight.
pub fn population_gradient_rw(w: [f64; 2], params: &TheoryParams) -> Result<[f64; 2]> {
    if !(params.p_maj > 0.0 && params.p_maj < 1.0) {
        return Err(Error::precondition(format!(
            "reweighting is undefined at p_maj = {}",
            params.p_maj
        )));
    }
    let mut prev: Option<[f64; 2]> = None;
    let mut order = 64;
    loop {
        let grad = population_gradient_at_order(w, params, order)?;
        if let Some(p) = prev {
            if (grad[0] - p[0]).abs().max((grad[1] - p[1]).abs()) < 1e-9 {
                return Ok(grad);
            }
        }
        if order >= 512 {
            return Err(Error::numerical(
                "population gradient quadrature did not stabilize by order 512".to_string(),
            ));
        }
        prev = Some(grad);
        order *= 2;
    }
}

fn population_gradient_at_order(w: [f64; 2], params: &TheoryParams, order: usize) -> Result<[f64; 2]> {
    let gh = GaussHermite::new(order)?;
    let [w_core, w_spu] = w;
    let mut grad = [0.0_f64; 2];
    for g in 0..NUM_GROUPS as u8 {
        let (y, a) = group_label(g);
        let (yf, af) = (f64::from(y), f64::from(a));
        let group_mass = if is_majority(g) { params.p_maj / 2.0 } else { (1.0 - params.p_maj) / 2.0 };
        let loss_weight = if is_majority(g) { 1.0 / params.p_maj } else { 1.0 / (1.0 - params.p_maj) };
        let coef = group_mass * loss_weight;
        let gc = gh.expect2(yf, params.sigma_core_sq, af, params.sigma_spu_sq, |xc, xs| {
            -yf * sigmoid_neg(yf * (w_core * xc + w_spu * xs)) * xc
        });
        let gs = gh.expect2(yf, params.sigma_core_sq, af, params.sigma_spu_sq, |xc, xs| {
            -yf * sigmoid_neg(yf * (w_core * xc + w_spu * xs)) * xs
        });
        grad[0] += coef * gc;
        grad[1] += coef * gs;
    }
    Ok(grad)
}

/// The population minimizer of the reweighted logistic loss.
pub fn population_minimizer(params: &TheoryParams) -> [f64; 2] {
    [2.0 / params.sigma_core_sq, 0.0]
}

/// Diagonal of the asymptotic-variance bound for `√n(ŵ_rw − w*)`:
/// entries `16·e^{8/((σ²_c+8)σ²_c)}(σ²_c+1)(1+8/σ²_c)³ / (p(1−p)(σ²_c+9)²)`
/// and `16·e^{8/((σ²_c+8)σ²_c)}(1+8/σ²_c) / (p(1−p)(σ²_s+1))`.
pub fn asymptotic_variance_bound(params: &TheoryParams) -> [f64; 2] {
    let sc2 = params.sigma_core_sq;
    let ss2 = params.sigma_spu_sq;
    let p = params.p_maj;
    let e8 = (8.0 / ((sc2 + 8.0) * sc2)).exp();
    let pfac = p * (1.0 - p);
    let core = 16.0 * e8 * (sc2 + 1.0) * (1.0 + 8.0 / sc2).powi(3) / (pfac * (sc2 + 9.0).powi(2));
    let spu = 16.0 * e8 * (1.0 + 8.0 / sc2) / (pfac * (ss2 + 1.0));
    [core, spu]
}

/// Monte-Carlo check of the asymptotic distribution of the reweighted
/// estimator in the `N = 0` setting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AsymptoticVarianceReport {
    pub n: usize,
    pub trials: usize,
    pub excluded_nonconverged: usize,
    pub w_star: [f64; 2],
    /// Mean of the fitted `ŵ` over trials, with its standard error.
    pub mean_w: [f64; 2],
    pub mean_se: [f64; 2],
    pub mean_within_3se: bool,
    /// Sample covariance of `√n(ŵ − w*)`.
    pub emp_cov: [[f64; 2]; 2],
    pub bound_diag: [f64; 2],
    pub diag_below_bound: bool,
    /// Fraction of bootstrap resamples whose covariance diagonal lies
    /// entrywise below the bound.
    pub bootstrap_fraction_below: f64,
    pub offdiag: f64,
    pub offdiag_se: f64,
    pub offdiag_within_3se: bool,
}

/// Fits `ŵ_rw` on `trials` independent datasets of size `n` drawn from
/// `params` (with `N = 0`), and compares the empirical covariance of
/// `√n(ŵ − w*)` against the diagonal bound. Requires `σ²_core ≥ 1` (the
/// bound's stated regime). Non-convergent trials are excluded and counted.
pub fn asymptotic_variance_check(
    params: &TheoryParams,
    n: usize,
    trials: usize,
    bootstrap: usize,
    seed: u64,
) -> Result<AsymptoticVarianceReport> {
    if params.noise_dim != 0 {
        return Err(Error::precondition("asymptotic variance check runs in the N = 0 setting"));
    }
    if params.sigma_core_sq < 1.0 {
        return Err(Error::precondition("the variance bound is stated for sigma_core_sq ≥ 1"));
    }
    if trials < 2 {
        return Err(Error::config("need at least 2 trials"));
    }
    let (n_maj, n_min) = crate::data::split_even(n, params.p_maj)?;

    let mut fits: Vec<[f64; 2]> = Vec::with_capacity(trials);
    let mut excluded = 0usize;
    for t in 0..trials {
        let cfg = ExplicitConfig {
            n_maj,
            n_min,
            noise_dim: 0,
            sigma_core_sq: params.sigma_core_sq,
            sigma_spu_sq: params.sigma_spu_sq,
            sigma_noise_sq: 0.0,
            seed: derive_seed(seed, "asyvar-trial", t as u64),
        };
        let ds = crate::data::gen_explicit(&cfg)?;
        // 1e-8 puts the optimizer error around 1e-7 in w, orders of
        // magnitude below the sampling noise the check measures.
        let tc = TrainConfig {
            objective: Objective::Reweight,
            lambda: 0.0,
            grad_tol: 1e-8,
            max_iters: 2000,
            seed: 0,
        };
        let out = train_logistic(&ds, &tc)?;
        if !out.converged {
            excluded += 1;
            continue;
        }
        fits.push([out.model.weights()[0], out.model.weights()[1]]);
    }
    if fits.len() < 2 {
        return Err(Error::numerical(format!(
            "only {} of {trials} trials converged; cannot estimate a covariance",
            fits.len()
        )));
    }

    let w_star = population_minimizer(params);
    let sqrt_n = (n as f64).sqrt();
    let devs: Vec<[f64; 2]> =
        fits.iter().map(|w| [sqrt_n * (w[0] - w_star[0]), sqrt_n * (w[1] - w_star[1])]).collect();
    let emp_cov = covariance(&devs);
    let bound_diag = asymptotic_variance_bound(params);

    let t_count = fits.len();
    let mean_w = [
        fits.iter().map(|w| w[0]).sum::<f64>() / t_count as f64,
        fits.iter().map(|w| w[1]).sum::<f64>() / t_count as f64,
    ];
    // sd(ŵ_j) = sqrt(cov_jj / n); SE of the mean divides by sqrt(trials)
    let mean_se = [
        (emp_cov[0][0] / n as f64 / t_count as f64).sqrt(),
        (emp_cov[1][1] / n as f64 / t_count as f64).sqrt(),
    ];
    let mean_within_3se = (0..2).all(|j| (mean_w[j] - w_star[j]).abs() <= 3.0 * mean_se[j]);

    let mut below = 0usize;
    let mut rng = substream(seed, "asyvar-boot", 0);
    for _ in 0..bootstrap {
        let sample: Vec<[f64; 2]> =
            (0..t_count).map(|_| devs[rng.gen_range(0..t_count)]).collect();
        let c = covariance(&sample);
        if c[0][0] <= bound_diag[0] && c[1][1] <= bound_diag[1] {
            below += 1;
        }
    }
    let bootstrap_fraction_below = if bootstrap == 0 { f64::NAN } else { below as f64 / bootstrap as f64 };

    let offdiag = emp_cov[0][1];
    // normal-theory standard error of a sample covariance entry
    let offdiag_se =
        ((emp_cov[0][0] * emp_cov[1][1] + offdiag * offdiag) / (t_count as f64 - 1.0)).sqrt();

    Ok(AsymptoticVarianceReport {
        n,
        trials,
        excluded_nonconverged: excluded,
        w_star,
        mean_w,
        mean_se,
        mean_within_3se,
        emp_cov,
        bound_diag,
        diag_below_bound: emp_cov[0][0] <= bound_diag[0] && emp_cov[1][1] <= bound_diag[1],
        bootstrap_fraction_below,
        offdiag,
        offdiag_se,
        offdiag_within_3se: offdiag.abs() <= 3.0 * offdiag_se,
    })
}

fn covariance(samples: &[[f64; 2]]) -> [[f64; 2]; 2] {
    let t = samples.len() as f64;
    let mean = [
        samples.iter().map(|d| d[0]).sum::<f64>() / t,
        samples.iter().map(|d| d[1]).sum::<f64>() / t,
    ];
    let mut cov = [[0.0; 2]; 2];
    for d in samples {
        let c = [d[0] - mean[0], d[1] - mean[1]];
        cov[0][0] += c[0] * c[0];
        cov[0][1] += c[0] * c[1];
        cov[1][1] += c[1] * c[1];
    }
    cov[0][0] /= t - 1.0;
    cov[0][1] /= t - 1.0;
    cov[1][1] /= t - 1.0;
    cov[1][0] = cov[0][1];
    cov
}

/// Monte-Carlo group errors of a (core, spu) model on the explicit
/// population; the oracle counterpart of [`analytic_group_error_2d`].
pub fn monte_carlo_group_error_2d(
    model: &LinearModel,
    params: &TheoryParams,
    samples_per_group: usize,
    seed: u64,
) -> Result<GroupMetrics> {
    let w_core = model.core_scalar()?;
    let w_spu = model.spu_scalar()?;
    let sc = params.sigma_core_sq.sqrt();
    let ss = params.sigma_spu_sq.sqrt();
    let mut per_group_error = [0.0; NUM_GROUPS];
    for g in 0..NUM_GROUPS as u8 {
        let (y, a) = group_label(g);
        let mut rng = substream(seed, "mc-group-error", u64::from(g));
        let mut wrong = 0usize;
        for _ in 0..samples_per_group {
            let zc: f64 = rng.sample(rand_distr::StandardNormal);
            let zs: f64 = rng.sample(rand_distr::StandardNormal);
            let score = w_core * (f64::from(y) + sc * zc) + w_spu * (f64::from(a) + ss * zs);
            if f64::from(y) * score <= 0.0 {
                wrong += 1;
            }
        }
        per_group_error[g as usize] = wrong as f64 / samples_per_group as f64;
    }
    GroupMetrics::from_errors(per_group_error, params.population_weights())
}

/// Monte-Carlo population gradient of the reweighted loss; the oracle
/// counterpart of [`population_gradient_rw`].
pub fn monte_carlo_gradient_rw(
    w: [f64; 2],
    params: &TheoryParams,
    samples_per_group: usize,
    seed: u64,
) -> Result<[f64; 2]> {
    if !(params.p_maj > 0.0 && params.p_maj < 1.0) {
        return Err(Error::precondition("p_maj must be interior".to_string()));
    }
    let sc = params.sigma_core_sq.sqrt();
    let ss = params.sigma_spu_sq.sqrt();
    let mut grad = [0.0_f64; 2];
    for g in 0..NUM_GROUPS as u8 {
        let (y, a) = group_label(g);
        let (yf, af) = (f64::from(y), f64::from(a));
        let group_mass = if is_majority(g) { params.p_maj / 2.0 } else { (1.0 - params.p_maj) / 2.0 };
        let loss_weight = if is_majority(g) { 1.0 / params.p_maj } else { 1.0 / (1.0 - params.p_maj) };
        let coef = group_mass * loss_weight / samples_per_group as f64;
        let mut rng = substream(seed, "mc-gradient", u64::from(g));
        for _ in 0..samples_per_group {
            let zc: f64 = rng.sample(rand_distr::StandardNormal);
            let zs: f64 = rng.sample(rand_distr::StandardNormal);
            let (xc, xs) = (yf + sc * zc, af + ss * zs);
            let slope = -yf * sigmoid_neg(yf * (w[0] * xc + w[1] * xs));
            grad[0] += coef * slope * xc;
            grad[1] += coef * slope * xs;
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_explicit;

    fn friendly_params() -> (ExplicitConfig, TheoryParams) {
        // Small sample, very clean spurious feature, huge N: the regime where
        // the hand construction is an actual separator.
        let cfg = ExplicitConfig {
            n_maj: 200,
            n_min: 10,
            noise_dim: 20_000,
            sigma_core_sq: 1.0,
            sigma_spu_sq: 1e-4,
            sigma_noise_sq: 1.0,
            seed: 0,
        };
        (cfg, TheoryParams::from_explicit(&cfg))
    }

    #[test]
    fn use_spu_construction_shape_and_defaults() {
        let (cfg, params) = friendly_params();
        let ds = gen_explicit(&cfg).unwrap();
        let (u, s) = default_use_spu_params(params.sigma_noise_sq);
        assert!((u - 1.3125).abs() < 1e-15);
        assert!((s * params.sigma_noise_sq - 2.61).abs() < 1e-12);
        let model = construct_w_use_spu(&ds, u, s).unwrap();
        assert_eq!(model.core_scalar().unwrap(), 0.0);
        assert_eq!(model.spu_scalar().unwrap(), u);
        // margin evaluation: at these params the construction separates
        let margins = training_margins(&model, &ds).unwrap();
        let min = margins.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min >= 1.0, "min margin {min}");
    }

    #[test]
    fn use_spu_with_no_minority_has_zero_noise_weights() {
        let cfg = ExplicitConfig {
            n_maj: 20,
            n_min: 0,
            noise_dim: 50,
            sigma_core_sq: 1.0,
            sigma_spu_sq: 0.01,
            sigma_noise_sq: 1.0,
            seed: 1,
        };
        let ds = gen_explicit(&cfg).unwrap();
        let model = construct_w_use_spu(&ds, 1.3125, 2.61).unwrap();
        assert!(model.block_view().unwrap().noise.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn memall_construction_margins() {
        let cfg = ExplicitConfig {
            n_maj: 60,
            n_min: 8,
            noise_dim: 30_000,
            sigma_core_sq: 1.0,
            sigma_spu_sq: 0.01,
            sigma_noise_sq: 1.0,
            seed: 2,
        };
        let ds = gen_explicit(&cfg).unwrap();
        let alpha = 2.0 / 1.0;
        let model = construct_w_use_core_memall(&ds, alpha).unwrap();
        assert_eq!(model.core_scalar().unwrap(), 0.0);
        assert_eq!(model.spu_scalar().unwrap(), 0.0);
        // each margin ≈ α‖x_noise‖² ≈ 2, well above 1 at large N
        let margins = training_margins(&model, &ds).unwrap();
        assert!(margins.iter().all(|&m| m >= 1.0), "min {}", margins.iter().cloned().fold(f64::INFINITY, f64::min));
        let zero = construct_w_use_core_memall(&ds, 0.0).unwrap();
        assert_eq!(zero.sq_norm(), 0.0);
    }

    #[test]
    fn norm_bounds_hold_at_friendly_params() {
        let (cfg, params) = friendly_params();
        let ds = gen_explicit(&cfg).unwrap();
        let report = verify_norm_bounds(&ds, &params, &BoundConstants::default(), None).unwrap();
        assert!(report.w_use_spu_is_separator);
        assert!(report.spu_norm_bound_holds);
        assert!(report.minnorm_leq_use_spu, "optimality of the QP optimum");
        assert!(report.constrained_geq_unconstrained, "constraint set inclusion");
    }

    #[test]
    fn tradeoff_phi_argument_reference_value() {
        let params = TheoryParams {
            p_maj: 0.9,
            sigma_core_sq: 1.0,
            sigma_spu_sq: 1.0,
            sigma_noise_sq: 1.0,
            n_maj: 100,
            n_min: 10,
            noise_dim: 10,
        };
        let layout = crate::data::BlockLayout { core: 1, spu: 1, noise: 1 };
        let model = LinearModel::new(vec![2.0, 0.0, 0.0], Some(layout)).unwrap();
        let constants = BoundConstants { c3: 0.0, c4: 0.0, ..Default::default() };
        let rep = tradeoff_quantities(&model, &params, &constants).unwrap();
        // Φ((0 + 0 − 2)/2) = Φ(−1)
        assert!((rep.err_lower_bound - 0.15865525393145707).abs() < 1e-12);
        // bound is monotone increasing in w_spu at fixed w_core
        let mut prev = rep.err_lower_bound;
        for k in 1..6 {
            let m = LinearModel::new(vec![2.0, 0.2 * k as f64, 0.0], Some(layout)).unwrap();
            let r = tradeoff_quantities(&m, &params, &constants).unwrap();
            assert!(r.err_lower_bound >= prev);
            prev = r.err_lower_bound;
        }
        // zero denominator
        let zero = LinearModel::new(vec![0.0, 0.0, 0.0], Some(layout)).unwrap();
        assert!(tradeoff_quantities(&zero, &params, &BoundConstants::default()).is_err());
    }

    fn two_feature_model(w_core: f64, w_spu: f64) -> LinearModel {
        let layout = crate::data::BlockLayout { core: 1, spu: 1, noise: 0 };
        LinearModel::new(vec![w_core, w_spu], Some(layout)).unwrap()
    }

    #[test]
    fn analytic_error_reference_cases() {
        let params = TheoryParams {
            p_maj: 0.9,
            sigma_core_sq: 1.0,
            sigma_spu_sq: 0.0,
            sigma_noise_sq: 0.0,
            n_maj: 0,
            n_min: 0,
            noise_dim: 0,
        };
        let m = analytic_group_error_2d(&two_feature_model(1.0, 0.0), &params).unwrap();
        for g in 0..4 {
            assert!((m.per_group_error[g] - 0.15865525393145707).abs() < 1e-12);
        }
        let m = analytic_group_error_2d(&two_feature_model(0.0, 1.0), &params).unwrap();
        assert_eq!(m.per_group_error, [0.0, 1.0, 0.0, 1.0]);
        assert_eq!(m.worst_group_error, 1.0);
        assert!(analytic_group_error_2d(&two_feature_model(0.0, 0.0), &params).is_err());
    }

    #[test]
    fn analytic_error_matches_monte_carlo() {
        let params = TheoryParams {
            p_maj: 0.9,
            sigma_core_sq: 2.0,
            sigma_spu_sq: 0.5,
            sigma_noise_sq: 0.0,
            n_maj: 0,
            n_min: 0,
            noise_dim: 0,
        };
        let model = two_feature_model(0.8, 0.6);
        let analytic = analytic_group_error_2d(&model, &params).unwrap();
        let mc = monte_carlo_group_error_2d(&model, &params, 1_000_000, 9).unwrap();
        for g in 0..4 {
            assert!(
                (analytic.per_group_error[g] - mc.per_group_error[g]).abs() < 3e-3,
                "group {g}: analytic {} vs MC {}",
                analytic.per_group_error[g],
                mc.per_group_error[g]
            );
        }
    }

    #[test]
    fn population_gradient_vanishes_at_the_minimizer_grid() {
        for sc2 in [1.0, 4.0] {
            for ss2 in [0.01, 1.0] {
                for p in [0.9, 2000.0 / 2001.0] {
                    let params = TheoryParams {
                        p_maj: p,
                        sigma_core_sq: sc2,
                        sigma_spu_sq: ss2,
                        sigma_noise_sq: 0.0,
                        n_maj: 0,
                        n_min: 0,
                        noise_dim: 0,
                    };
                    let g = population_gradient_rw(population_minimizer(&params), &params).unwrap();
                    let norm = (g[0] * g[0] + g[1] * g[1]).sqrt();
                    assert!(norm <= 1e-6, "‖∇‖ = {norm:.3e} at sc2={sc2}, ss2={ss2}, p={p}");
                }
            }
        }
    }

    #[test]
    fn population_gradient_matches_monte_carlo() {
        let params = TheoryParams {
            p_maj: 0.8,
            sigma_core_sq: 1.5,
            sigma_spu_sq: 0.7,
            sigma_noise_sq: 0.0,
            n_maj: 0,
            n_min: 0,
            noise_dim: 0,
        };
        let w = [0.9, -0.4];
        let quad = population_gradient_rw(w, &params).unwrap();
        let mc = monte_carlo_gradient_rw(w, &params, 2_500_000, 4).unwrap();
        assert!((quad[0] - mc[0]).abs() < 1e-3, "core: {} vs {}", quad[0], mc[0]);
        assert!((quad[1] - mc[1]).abs() < 1e-3, "spu: {} vs {}", quad[1], mc[1]);
    }

    #[test]
    fn spu_gradient_antisymmetric_under_pmaj_swap() {
        let base = TheoryParams {
            p_maj: 0.85,
            sigma_core_sq: 1.0,
            sigma_spu_sq: 0.5,
            sigma_noise_sq: 0.0,
            n_maj: 0,
            n_min: 0,
            noise_dim: 0,
        };
        let swapped = TheoryParams { p_maj: 1.0 - base.p_maj, ..base };
        for wc in [0.5, 2.0] {
            let g1 = population_gradient_rw([wc, 0.0], &base).unwrap();
            let g2 = population_gradient_rw([wc, 0.0], &swapped).unwrap();
            assert!((g1[1] + g2[1]).abs() < 1e-9, "{} vs {}", g1[1], g2[1]);
        }
    }

    #[test]
    fn asymptotic_variance_small_run() {
        let params = TheoryParams {
            p_maj: 0.9,
            sigma_core_sq: 1.0,
            sigma_spu_sq: 1.0,
            sigma_noise_sq: 0.0,
            n_maj: 0,
            n_min: 0,
            noise_dim: 0,
        };
        let report = asymptotic_variance_check(&params, 2000, 40, 200, 7).unwrap();
        assert!(report.excluded_nonconverged <= 2, "excluded {}", report.excluded_nonconverged);
        assert!(report.diag_below_bound, "cov {:?} vs bound {:?}", report.emp_cov, report.bound_diag);
        assert!(report.offdiag_within_3se);
    }
}
