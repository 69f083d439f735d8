//! Exact minimum-norm separator and the gradient-descent implicit bias.
//!
//! The hard-margin problem `min ‖w‖² s.t. yᵢ(w·xᵢ) ≥ 1` is solved through
//! its dual: `w = Σ αᵢ yᵢ xᵢ` with `α ≥ 0`, margins exactly 1 on the
//! support. Separability is decided first by a feasibility probe that
//! drives the squared hinge of the margin-1 constraints to zero; if the
//! probe bottoms out at a positive value the instance is `NotSeparable`.
//!
//! For the dual we run an NNLS-style working-set iteration on the Gram
//! matrix: KKT-violation sweeps pick the points to admit, each working set
//! is solved exactly by Cholesky, and Lawson–Hanson steps keep `α ≥ 0`.
//! Plain cyclic coordinate ascent on the same dual is retained as a
//! polishing pass; on its own it needs orders of magnitude more sweeps
//! once the core/spurious columns couple the coordinates.

use ndarray::{Array1, Array2};

use crate::data::GroupedDataset;
use crate::error::{Error, Result};
use crate::linalg::{gram, solve_spd};
use crate::optimize::logistic::{minimize, LossKind, MarginProblem, SolveOptions};
use crate::optimize::{example_weights, LinearModel, Objective};

/// KKT tolerance: active margins within this of 1, no violation beyond it.
const KKT_TOL: f64 = 1e-8;
/// Feasibility probe target for the mean squared hinge.
const FEASIBILITY_TOL: f64 = 1e-8;
/// Working-set growth per outer iteration.
const ADD_BATCH: usize = 50;
const MAX_OUTER: usize = 1000;
/// Gram storage guard (n×n doubles).
const MAX_QP_POINTS: usize = 16_384;

#[derive(Clone, Debug)]
pub enum SeparatorStatus {
    Separable(LinearModel),
    NotSeparable,
}

/// Outcome of the hard-margin solve.
#[derive(Clone, Debug)]
pub struct SeparatorResult {
    pub status: SeparatorStatus,
    /// `min_i yᵢ(w·xᵢ)` of the un-normalized separator.
    pub margin: Option<f64>,
    /// `‖w‖²` of the un-normalized minimum-norm separator.
    pub sq_norm: Option<f64>,
    /// Largest KKT violation at the returned solution.
    pub kkt_residual: Option<f64>,
    /// Combination coefficients: `w = Σ αᵢ yᵢ xᵢ`, `α ≥ 0`.
    pub alphas: Option<Vec<f64>>,
    /// Dual objective `2Σα − ‖Σ αᵢyᵢxᵢ‖²` of the `min ‖w‖²` program; equals
    /// `‖w‖²` at the optimum.
    pub dual_objective: Option<f64>,
}

impl SeparatorResult {
    pub fn separable_model(&self) -> Option<&LinearModel> {
        match &self.status {
            SeparatorStatus::Separable(m) => Some(m),
            SeparatorStatus::NotSeparable => None,
        }
    }

    pub fn is_separable(&self) -> bool {
        matches!(self.status, SeparatorStatus::Separable(_))
    }

    fn not_separable() -> Self {
        Self {
            status: SeparatorStatus::NotSeparable,
            margin: None,
            sq_norm: None,
            kkt_residual: None,
            alphas: None,
            dual_objective: None,
        }
    }
}

/// Minimum-norm separator of the dataset, or `NotSeparable`.
pub fn min_norm_separator(ds: &GroupedDataset) -> Result<SeparatorResult> {
    min_norm_impl(ds, &[])
}

/// Minimum-norm separator with the given feature columns pinned to zero
/// (e.g. the spurious column for the use-core family). The returned model
/// has exact zeros in the pinned coordinates.
pub fn min_norm_separator_constrained(ds: &GroupedDataset, zeroed_columns: &[usize]) -> Result<SeparatorResult> {
    for &c in zeroed_columns {
        if c >= ds.dim() {
            return Err(Error::dimension(format!("zeroed column {c} out of range 0..{}", ds.dim())));
        }
    }
    min_norm_impl(ds, zeroed_columns)
}

fn min_norm_impl(ds: &GroupedDataset, zeroed: &[usize]) -> Result<SeparatorResult> {
    let n = ds.n();
    if n > MAX_QP_POINTS {
        return Err(Error::numerical(format!(
            "margin QP stores an n×n Gram matrix; n = {n} exceeds the {MAX_QP_POINTS} guard"
        )));
    }
    let y = ds.labels_f64();

    if !feasibility_probe(ds, &y, zeroed)? {
        return Ok(SeparatorResult::not_separable());
    }

    // Gram of y-scaled rows, with pinned columns removed via rank-1 downdates.
    let mut q = gram(ds.features());
    for &c in zeroed {
        let col: Vec<f64> = (0..n).map(|i| ds.features()[[i, c]]).collect();
        for i in 0..n {
            for j in 0..n {
                q[[i, j]] -= col[i] * col[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            q[[i, j]] *= y[i] * y[j];
        }
    }

    let alphas = solve_dual(&q)?;

    // Recover w = Σ αᵢ yᵢ xᵢ and zero the pinned coordinates exactly.
    let mut w = vec![0.0; ds.dim()];
    for (i, &a) in alphas.iter().enumerate() {
        if a != 0.0 {
            let coef = a * y[i];
            for (j, wj) in w.iter_mut().enumerate() {
                *wj += coef * ds.features()[[i, j]];
            }
        }
    }
    for &c in zeroed {
        w[c] = 0.0;
    }

    let margins = {
        let wv = Array1::from(w.clone());
        let scores = ds.features().dot(&wv);
        scores.iter().zip(&y).map(|(s, yi)| s * yi).collect::<Vec<f64>>()
    };
    let margin = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut kkt = 0.0_f64;
    for (i, &m) in margins.iter().enumerate() {
        let viol = if alphas[i] > 0.0 { (m - 1.0).abs() } else { (1.0 - m).max(0.0) };
        kkt = kkt.max(viol);
    }
    if kkt > 1e-6 {
        return Err(Error::numerical(format!(
            "margin QP stopped with KKT residual {kkt:.3e} despite a feasible probe"
        )));
    }
    let sq_norm: f64 = w.iter().map(|v| v * v).sum();
    let dual_objective = 2.0 * alphas.iter().sum::<f64>() - sq_norm;
    let model = LinearModel::new(w, ds.block_layout())?;
    Ok(SeparatorResult {
        status: SeparatorStatus::Separable(model),
        margin: Some(margin),
        sq_norm: Some(sq_norm),
        kkt_residual: Some(kkt),
        alphas: Some(alphas),
        dual_objective: Some(dual_objective),
    })
}

/// Drives the mean squared hinge of the margin-1 constraints toward zero.
/// `true` ⇒ constraints feasible (separable), `false` ⇒ bottomed out at a
/// positive value. Errors only when the probe can resolve neither way.
fn feasibility_probe(ds: &GroupedDataset, y: &[f64], zeroed: &[usize]) -> Result<bool> {
    let n = ds.n();
    let weights = vec![1.0 / n as f64; n];
    let problem = MarginProblem {
        x: ds.features(),
        y,
        weights: &weights,
        lambda: 0.0,
        loss: LossKind::SquaredHinge,
        frozen: zeroed,
    };
    let outcome = minimize(
        &problem,
        &SolveOptions {
            grad_tol: 1e-12,
            max_iters: 5000,
            value_target: Some(FEASIBILITY_TOL * 1e-4),
            ..Default::default()
        },
    );
    if outcome.value <= FEASIBILITY_TOL {
        return Ok(true);
    }
    if outcome.converged || outcome.grad_norm <= 1e-7 * outcome.value.sqrt().max(1.0) {
        return Ok(false);
    }
    Err(Error::numerical(format!(
        "feasibility probe undecided after {} iterations (value {:.3e}, grad {:.3e})",
        outcome.iterations, outcome.value, outcome.grad_norm
    )))
}

/// Maximizes `Σα − ½ αᵀQα` over `α ≥ 0` (the hard-margin dual up to
/// scaling) by working-set iterations with exact subspace solves.
fn solve_dual(q: &Array2<f64>) -> Result<Vec<f64>> {
    let n = q.nrows();
    let mut alpha = vec![0.0_f64; n];
    let mut margins = vec![0.0_f64; n];
    let mut support: Vec<usize> = Vec::new();
    let mut in_support = vec![false; n];
    let mut batch = ADD_BATCH;

    for _outer in 0..MAX_OUTER {
        // KKT-violation sweep over all points.
        let mut violations: Vec<(f64, usize)> = Vec::new();
        let mut worst = 0.0_f64;
        for i in 0..n {
            let viol = if alpha[i] > 0.0 { (margins[i] - 1.0).abs() } else { (1.0 - margins[i]).max(0.0) };
            worst = worst.max(viol);
            if viol > KKT_TOL && !in_support[i] {
                violations.push((viol, i));
            }
        }
        if worst <= KKT_TOL {
            return Ok(alpha);
        }
        violations.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        for &(_, i) in violations.iter().take(batch) {
            support.push(i);
            in_support[i] = true;
        }
        if support.is_empty() {
            return Ok(alpha);
        }
        let before: Vec<(usize, f64)> = support.iter().map(|&i| (i, alpha[i])).collect();

        // Inner Lawson–Hanson loop on the working set: solve the equality
        // system, discard fresh entries that solve non-positive, otherwise
        // step as far toward the solution as α ≥ 0 allows and drop the
        // coordinates that hit zero.
        'inner: for _inner in 0..(4 * n + 16) {
            let c = solve_support(q, &support)?;
            let mut fresh_negative = false;
            let mut keep = Vec::with_capacity(support.len());
            for (k, &i) in support.iter().enumerate() {
                if alpha[i] == 0.0 && c[k] <= 0.0 {
                    fresh_negative = true;
                    in_support[i] = false;
                } else {
                    keep.push(i);
                }
            }
            if fresh_negative {
                support = keep;
                if support.is_empty() {
                    break 'inner;
                }
                continue 'inner;
            }
            if c.iter().all(|&v| v >= 0.0) {
                for (k, &i) in support.iter().enumerate() {
                    alpha[i] = c[k];
                }
                break 'inner;
            }
            // θ = min over {c_k ≤ 0} of α/(α − c); every such k has α > 0 here.
            let mut theta = 1.0_f64;
            for (k, &i) in support.iter().enumerate() {
                if c[k] <= 0.0 {
                    theta = theta.min(alpha[i] / (alpha[i] - c[k]));
                }
            }
            let mut next_support = Vec::with_capacity(support.len());
            for (k, &i) in support.iter().enumerate() {
                let v = alpha[i] + theta * (c[k] - alpha[i]);
                if v > 1e-14 {
                    alpha[i] = v;
                    next_support.push(i);
                } else {
                    alpha[i] = 0.0;
                    in_support[i] = false;
                }
            }
            support = next_support;
            if support.is_empty() {
                break 'inner;
            }
        }

        // Refresh margins from scratch for numerical hygiene.
        for i in 0..n {
            let mut m = 0.0;
            for &j in &support {
                m += q[[i, j]] * alpha[j];
            }
            margins[i] = m;
        }

        // Stalled round (same support, same coefficients): fall back to
        // strict one-at-a-time admission, which cannot cycle.
        let after: Vec<(usize, f64)> = support.iter().map(|&i| (i, alpha[i])).collect();
        batch = if before == after { 1 } else { ADD_BATCH };
    }
    Err(Error::numerical(format!("margin QP did not reach KKT tolerance in {MAX_OUTER} working-set rounds")))
}

/// Solves `Q[S,S] c = 1` with a jitter retry for degenerate supports.
fn solve_support(q: &Array2<f64>, support: &[usize]) -> Result<Vec<f64>> {
    let k = support.len();
    let mut sub = Array2::zeros((k, k));
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            sub[[a, b]] = q[[i, j]];
        }
    }
    let rhs = vec![1.0; k];
    let trace_scale = (0..k).map(|a| sub[[a, a]]).sum::<f64>() / k as f64;
    match solve_spd(sub.clone(), &rhs) {
        Ok(c) => Ok(c),
        Err(_) => {
            for a in 0..k {
                sub[[a, a]] += 1e-10 * trace_scale.max(1e-300);
            }
            solve_spd(sub, &rhs)
        }
    }
}

/// Step-size rule for the implicit-bias gradient descent.
#[derive(Clone, Copy, Debug)]
pub enum StepSchedule {
    /// Fixed step size.
    Fixed(f64),
    /// Backtracking line search with a doubling initial guess; on separable
    /// data the accepted steps grow, which accelerates the convergence in
    /// direction.
    Adaptive,
}

#[derive(Clone, Debug)]
pub struct BiasPathResult {
    /// Final iterate scaled to unit norm.
    pub model: LinearModel,
    /// Cosine similarity between the final iterate and the max-margin direction.
    pub cosine_to_mm: f64,
    /// The minimum-norm separator used as the reference direction.
    pub max_margin: LinearModel,
}

/// Runs full-batch gradient descent on the unregularized logistic loss
/// (ERM or reweighted) and reports the normalized final iterate and its
/// cosine to the max-margin direction. Errors when the data is not
/// separable, where the max-margin limit does not apply.
pub fn implicit_bias_path(
    ds: &GroupedDataset,
    objective: Objective,
    iters: usize,
    step: StepSchedule,
) -> Result<BiasPathResult> {
    if objective == Objective::Subsample {
        return Err(Error::config("implicit_bias_path supports erm and reweight objectives"));
    }
    let separator = min_norm_separator(ds)?;
    let mm = separator
        .separable_model()
        .ok_or_else(|| Error::precondition("dataset is not linearly separable"))?;

    let y = ds.labels_f64();
    let weights = example_weights(ds, objective)?;
    let problem =
        MarginProblem { x: ds.features(), y: &y, weights: &weights, lambda: 0.0, loss: LossKind::Logistic, frozen: &[] };
    let opts = match step {
        StepSchedule::Adaptive => SolveOptions {
            grad_tol: 1e-300,
            max_iters: iters,
            steepest_descent: true,
            initial_step: 1.0,
            grow_steps: true,
            ..Default::default()
        },
        // Fixed(t): every iteration's line search starts at t with no
        // growth; backtracking still protects against divergence.
        StepSchedule::Fixed(t) => {
            if !(t > 0.0) {
                return Err(Error::config(format!("fixed step {t} must be > 0")));
            }
            SolveOptions {
                grad_tol: 1e-300,
                max_iters: iters,
                steepest_descent: true,
                initial_step: t,
                grow_steps: false,
                ..Default::default()
            }
        }
    };
    let outcome = minimize(&problem, &opts);
    let final_model = LinearModel::new(outcome.w.to_vec(), ds.block_layout())?;
    let unit = super::direction_of(&final_model)?;
    let cosine = unit.cosine(mm)?;
    Ok(BiasPathResult { model: unit, cosine_to_mm: cosine, max_margin: mm.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_explicit, ExplicitConfig, GroupedDataset};
    use ndarray::array;

    fn ds_from(features: Array2<f64>, labels: Vec<i8>) -> GroupedDataset {
        let attrs = labels.clone();
        GroupedDataset::new(features, labels, attrs, None).unwrap()
    }

    #[test]
    fn antipodal_pair_has_unit_separator() {
        let ds = ds_from(array![[1.0, 0.0], [-1.0, 0.0]], vec![1, -1]);
        let res = min_norm_separator(&ds).unwrap();
        let model = res.separable_model().expect("separable");
        assert!((model.weights()[0] - 1.0).abs() < 1e-8);
        assert!(model.weights()[1].abs() < 1e-10);
        assert!((res.sq_norm.unwrap() - 1.0).abs() < 1e-8);
        assert!((res.margin.unwrap() - 1.0).abs() < 1e-8);
        assert!((res.dual_objective.unwrap() - res.sq_norm.unwrap()).abs() < 1e-6);
    }

    #[test]
    fn one_dimensional_xor_is_not_separable() {
        let ds = ds_from(array![[1.0], [-1.0], [2.0]], vec![1, 1, -1]);
        let res = min_norm_separator(&ds).unwrap();
        assert!(!res.is_separable());
        assert!(res.sq_norm.is_none());
    }

    #[test]
    fn margin_of_separable_solution_is_at_least_one() {
        let cfg = ExplicitConfig {
            n_maj: 30,
            n_min: 10,
            noise_dim: 300,
            sigma_core_sq: 1.0,
            sigma_spu_sq: 0.01,
            sigma_noise_sq: 1.0,
            seed: 17,
        };
        let ds = gen_explicit(&cfg).unwrap();
        let res = min_norm_separator(&ds).unwrap();
        assert!(res.is_separable());
        assert!(res.margin.unwrap() >= 1.0 - 1e-6);
        assert!(res.kkt_residual.unwrap() <= 1e-6);
        // complementary slackness comes with the dual matching the primal
        assert!((res.dual_objective.unwrap() - res.sq_norm.unwrap()).abs() <= 1e-6 * res.sq_norm.unwrap());
    }

    #[test]
    fn feature_scaling_inverts_the_separator() {
        let ds = ds_from(
            array![[1.2, 0.3], [0.8, -0.4], [-1.0, 0.2], [-0.7, -0.9]],
            vec![1, 1, -1, -1],
        );
        let res = min_norm_separator(&ds).unwrap();
        let w = res.separable_model().unwrap().weights().to_vec();
        let scaled = ds_from(ds.features().mapv(|v| v * 3.0), ds.labels().to_vec());
        let res3 = min_norm_separator(&scaled).unwrap();
        let w3 = res3.separable_model().unwrap().weights().to_vec();
        for (a, b) in w.iter().zip(&w3) {
            assert!((a / 3.0 - b).abs() < 1e-8, "scaling mismatch {a} vs {b}");
        }
        assert!((res.sq_norm.unwrap() / 9.0 - res3.sq_norm.unwrap()).abs() < 1e-8);
    }

    #[test]
    fn constrained_solve_pins_column_to_zero() {
        let cfg = ExplicitConfig {
            n_maj: 20,
            n_min: 8,
            noise_dim: 200,
            sigma_core_sq: 1.0,
            sigma_spu_sq: 0.01,
            sigma_noise_sq: 1.0,
            seed: 23,
        };
        let ds = gen_explicit(&cfg).unwrap();
        let free = min_norm_separator(&ds).unwrap();
        let pinned = min_norm_separator_constrained(&ds, &[1]).unwrap();
        let model = pinned.separable_model().expect("still separable via core+noise");
        assert_eq!(model.weights()[1], 0.0);
        // constraint set inclusion
        assert!(pinned.sq_norm.unwrap() >= free.sq_norm.unwrap() - 1e-9);
    }

    #[test]
    fn implicit_bias_on_antipodal_pair() {
        let ds = ds_from(array![[1.0, 0.0], [-1.0, 0.0]], vec![1, -1]);
        let path = implicit_bias_path(&ds, Objective::Erm, 200, StepSchedule::Adaptive).unwrap();
        assert!(path.cosine_to_mm >= 1.0 - 1e-6, "cosine {}", path.cosine_to_mm);
    }

    #[test]
    fn implicit_bias_requires_separability() {
        let ds = ds_from(array![[1.0], [-1.0], [2.0]], vec![1, 1, -1]);
        assert!(implicit_bias_path(&ds, Objective::Erm, 10, StepSchedule::Adaptive).is_err());
    }
}
