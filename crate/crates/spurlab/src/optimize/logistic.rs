//! Full-batch solver for weighted margin losses with an L2 ridge.
//!
//! The objective is `R(w) = Σᵢ cᵢ ℓ(mᵢ) + (λ/2)‖w‖²` with margins
//! `mᵢ = yᵢ(w·xᵢ)`. Two losses are supported: the logistic loss (training)
//! and the squared hinge `max(0, 1−m)²` (the margin-1 feasibility probe of
//! the hard-margin QP).
//!
//! Search directions come from an L-BFGS two-loop recursion (memory 10)
//! with a plain steepest-descent fallback, and steps are chosen by
//! backtracking until the Armijo sufficient-decrease condition holds. Line
//! search trials are O(n): margins are cached and updated along the ray
//! `m + t·dm`, so each iteration costs two mat-vecs with the data matrix.
//!
//! The logistic loss is evaluated in branch form, `ln(1+e^{−m})` for
//! `m ≥ 0` and `−m + ln(1+e^{m})` otherwise; margins span ±10³ in
//! overparameterized runs.

use std::collections::VecDeque;

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::data::GroupedDataset;
use crate::error::Result;
use crate::optimize::{LinearModel, TrainConfig, TrainOutcome};

const LBFGS_MEMORY: usize = 10;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum LossKind {
    Logistic,
    SquaredHinge,
}

impl LossKind {
    #[inline]
    fn value(self, m: f64) -> f64 {
        match self {
            LossKind::Logistic => {
                if m >= 0.0 {
                    (-m).exp().ln_1p()
                } else {
                    -m + m.exp().ln_1p()
                }
            }
            LossKind::SquaredHinge => {
                let h = (1.0 - m).max(0.0);
                h * h
            }
        }
    }

    /// dℓ/dm.
    #[inline]
    fn slope(self, m: f64) -> f64 {
        match self {
            LossKind::Logistic => {
                // −σ(−m) = −1/(1+e^m)
                if m >= 0.0 {
                    let e = (-m).exp();
                    -e / (1.0 + e)
                } else {
                    -1.0 / (1.0 + m.exp())
                }
            }
            LossKind::SquaredHinge => -2.0 * (1.0 - m).max(0.0),
        }
    }
}

pub(crate) struct MarginProblem<'a> {
    pub x: ArrayView2<'a, f64>,
    /// Labels as ±1.
    pub y: &'a [f64],
    /// Per-example weights, averaging factor included.
    pub weights: &'a [f64],
    pub lambda: f64,
    pub loss: LossKind,
    /// Coordinates pinned to zero (subspace-constrained solves). With a
    /// zero start and gradient projection, iterates never leave the subspace.
    pub frozen: &'a [usize],
}

impl<'a> MarginProblem<'a> {
    fn n(&self) -> usize {
        self.x.nrows()
    }

    fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Margins `mᵢ = yᵢ(w·xᵢ)`.
    fn margins(&self, w: &Array1<f64>) -> Vec<f64> {
        let xw = self.x.dot(w);
        xw.iter().zip(self.y).map(|(s, y)| s * y).collect()
    }

    fn loss_term(&self, margins: &[f64]) -> f64 {
        margins.iter().zip(self.weights).map(|(&m, &c)| c * self.loss.value(m)).sum()
    }

    fn value(&self, margins: &[f64], w_sq: f64) -> f64 {
        self.loss_term(margins) + 0.5 * self.lambda * w_sq
    }

    /// Gradient at `w` given its margins; returns the gradient vector.
    fn gradient(&self, w: &Array1<f64>, margins: &[f64]) -> Array1<f64> {
        let r: Array1<f64> = (0..self.n())
            .map(|i| self.weights[i] * self.loss.slope(margins[i]) * self.y[i])
            .collect();
        let mut g = self.x.t().dot(&r);
        if self.lambda != 0.0 {
            g.scaled_add(self.lambda, w);
        }
        for &j in self.frozen {
            g[j] = 0.0;
        }
        g
    }
}

pub(crate) struct SolveOptions {
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Early exit once the objective value drops to this level (used by the
    /// feasibility probe, where reaching ~0 is the answer).
    pub value_target: Option<f64>,
    /// Use plain steepest descent instead of L-BFGS directions.
    pub steepest_descent: bool,
    /// Initial trial step for the first iteration.
    pub initial_step: f64,
    /// In steepest-descent mode, double the trial step after each accepted
    /// iteration instead of restarting from `initial_step`.
    pub grow_steps: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_iters: 1000,
            value_target: None,
            steepest_descent: false,
            initial_step: 1.0,
            grow_steps: true,
        }
    }
}

pub(crate) struct SolveOutcome {
    pub w: Array1<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes a margin problem from the zero start.
pub(crate) fn minimize(problem: &MarginProblem<'_>, opts: &SolveOptions) -> SolveOutcome {
    let dim = problem.dim();
    let mut w = Array1::zeros(dim);
    let mut w_sq = 0.0;
    let mut margins = vec![0.0; problem.n()];
    let mut value = problem.value(&margins, w_sq);
    let mut grad = problem.gradient(&w, &margins);
    let mut grad_norm = grad.dot(&grad).sqrt();

    let mut history: VecDeque<(Array1<f64>, Array1<f64>, f64)> = VecDeque::new();
    let mut step_guess = opts.initial_step;

    for iter in 0..opts.max_iters {
        if grad_norm <= opts.grad_tol {
            return SolveOutcome { w, value, grad_norm, iterations: iter, converged: true };
        }
        if let Some(target) = opts.value_target {
            if value <= target {
                return SolveOutcome { w, value, grad_norm, iterations: iter, converged: true };
            }
        }

        let mut dir = if opts.steepest_descent || history.is_empty() {
            -&grad
        } else {
            two_loop(&grad, &history)
        };
        let mut slope = dir.dot(&grad);
        if !(slope < 0.0) {
            dir = -&grad;
            slope = -grad_norm * grad_norm;
        }

        // Margins along the ray cost O(n) per trial step.
        let dm: Vec<f64> = {
            let xd = problem.x.dot(&dir);
            xd.iter().zip(problem.y).map(|(s, y)| s * y).collect()
        };
        let w_dot_d = w.dot(&dir);
        let d_sq = dir.dot(&dir);

        let mut t = if opts.steepest_descent { step_guess } else { 1.0 };
        let mut trial = vec![0.0; problem.n()];
        let mut line_search = |dir_margins: &[f64], w_dot_d: f64, d_sq: f64, slope: f64, t: &mut f64| {
            for _ in 0..MAX_BACKTRACKS {
                for (k, v) in trial.iter_mut().enumerate() {
                    *v = margins[k] + *t * dir_margins[k];
                }
                let trial_sq = w_sq + 2.0 * *t * w_dot_d + *t * *t * d_sq;
                let trial_value = problem.value(&trial, trial_sq);
                if trial_value <= value + ARMIJO_C1 * *t * slope {
                    return Some((trial_value, trial_sq));
                }
                *t *= 0.5;
            }
            None
        };
        let mut accepted = line_search(&dm, w_dot_d, d_sq, slope, &mut t);
        let mut dm = dm;
        let mut dir = dir;
        if accepted.is_none() && !opts.steepest_descent && !history.is_empty() {
            // Stale curvature can make the quasi-Newton direction useless at
            // machine resolution; retry once along the raw gradient.
            history.clear();
            dir = -&grad;
            let slope_sd = -grad_norm * grad_norm;
            dm = {
                let xd = problem.x.dot(&dir);
                xd.iter().zip(problem.y).map(|(s, y)| s * y).collect()
            };
            let w_dot_d_sd = w.dot(&dir);
            let d_sq_sd = dir.dot(&dir);
            t = 1.0;
            accepted = line_search(&dm, w_dot_d_sd, d_sq_sd, slope_sd, &mut t);
        }
        let Some((new_value, new_sq)) = accepted else {
            // No decrease along a descent direction at tiny steps: we are at
            // numerical resolution. Report the current iterate.
            return SolveOutcome { w, value, grad_norm, iterations: iter, converged: grad_norm <= opts.grad_tol };
        };

        for (k, v) in margins.iter_mut().enumerate() {
            *v += t * dm[k];
        }
        let step = dir.mapv(|v| v * t);
        w += &step;
        w_sq = new_sq;
        value = new_value;
        if opts.grow_steps {
            step_guess = (t * 2.0).min(1e12);
        }

        let new_grad = problem.gradient(&w, &margins);
        let yk = &new_grad - &grad;
        let sy = step.dot(&yk);
        if sy > 1e-12 * step.dot(&step).sqrt() * yk.dot(&yk).sqrt() {
            if history.len() == LBFGS_MEMORY {
                history.pop_front();
            }
            history.push_back((step, yk, sy));
        }
        grad = new_grad;
        grad_norm = grad.dot(&grad).sqrt();
    }

    let converged =
        grad_norm <= opts.grad_tol || opts.value_target.map(|t| value <= t).unwrap_or(false);
    SolveOutcome { w, value, grad_norm, iterations: opts.max_iters, converged }
}

/// L-BFGS two-loop recursion for `−H·g`.
fn two_loop(grad: &Array1<f64>, history: &VecDeque<(Array1<f64>, Array1<f64>, f64)>) -> Array1<f64> {
    let mut q = grad.clone();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, sy) in history.iter().rev() {
        let a = s.dot(&q) / sy;
        q.scaled_add(-a, y);
        alphas.push(a);
    }
    let (_, y_last, sy_last) = history.back().expect("two_loop requires history");
    let gamma = sy_last / y_last.dot(y_last);
    q.mapv_inplace(|v| v * gamma);
    for ((s, y, sy), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = y.dot(&q) / sy;
        q.scaled_add(a - b, s);
    }
    -q
}

pub(crate) fn train_weighted(ds: &GroupedDataset, weights: Vec<f64>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let y = ds.labels_f64();
    let problem = MarginProblem {
        x: ds.features(),
        y: &y,
        weights: &weights,
        lambda: cfg.lambda,
        loss: LossKind::Logistic,
        frozen: &[],
    };
    let outcome = minimize(
        &problem,
        &SolveOptions { grad_tol: cfg.grad_tol, max_iters: cfg.max_iters, ..Default::default() },
    );
    Ok(TrainOutcome {
        model: LinearModel::new(outcome.w.to_vec(), ds.block_layout())?,
        converged: outcome.converged,
        grad_norm: outcome.grad_norm,
        iterations: outcome.iterations,
        objective_value: outcome.value,
        n_train: ds.n(),
    })
}

/// Objective value and gradient of the weighted logistic loss at `w`.
pub(crate) fn value_and_grad<'a>(
    x: ArrayView2<'a, f64>,
    y: &'a [f64],
    weights: &'a [f64],
    lambda: f64,
    w: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let problem = MarginProblem { x, y, weights, lambda, loss: LossKind::Logistic, frozen: &[] };
    let w = Array1::from(w.to_vec());
    let margins = problem.margins(&w);
    let value = problem.value(&margins, w.dot(&w));
    let grad = problem.gradient(&w, &margins);
    Ok((value, grad.to_vec()))
}

/// Norm of the training objective's gradient at a model; the convergence
/// claim of a [`TrainOutcome`] can be asserted directly with this.
pub fn gradient_norm(
    ds: &GroupedDataset,
    objective: crate::optimize::Objective,
    lambda: f64,
    model: &LinearModel,
) -> Result<f64> {
    let (_, grad) = crate::optimize::logistic_objective(ds, objective, lambda, model.weights())?;
    Ok(ArrayView1::from(grad.as_slice()).dot(&ArrayView1::from(grad.as_slice())).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_explicit, ExplicitConfig, GroupedDataset};
    use crate::optimize::{train_logistic, Objective, TrainConfig};
    use crate::rng::substream;
    use ndarray::{array, Array2};
    use rand::Rng;

    fn tiny_dataset(features: Array2<f64>, labels: Vec<i8>) -> GroupedDataset {
        let attrs = labels.clone();
        GroupedDataset::new(features, labels, attrs, None).unwrap()
    }

    #[test]
    fn single_separable_point() {
        let ds = tiny_dataset(array![[1.0, 0.0]], vec![1]);
        let cfg = TrainConfig { objective: Objective::Erm, lambda: 1.0, ..Default::default() };
        let out = train_logistic(&ds, &cfg).unwrap();
        assert!(out.converged, "grad norm {}", out.grad_norm);
        assert!(out.model.weights()[0] > 0.0);
        let score = out.model.scores(ds.features()).unwrap()[0];
        assert!(score > 0.0, "training error should be zero");
    }

    #[test]
    fn symmetric_pair_zeroes_second_coordinate() {
        let ds = tiny_dataset(array![[1.0, 0.0], [-1.0, 0.0]], vec![1, -1]);
        let cfg =
            TrainConfig { objective: Objective::Erm, lambda: 0.1, grad_tol: 1e-12, ..Default::default() };
        let out = train_logistic(&ds, &cfg).unwrap();
        assert!(out.converged);
        assert!(out.model.weights()[0] > 0.0);
        assert!(out.model.weights()[1].abs() < 1e-10);
    }

    #[test]
    fn converged_gradient_norm_is_below_tolerance() {
        let cfg = ExplicitConfig {
            n_maj: 60,
            n_min: 20,
            noise_dim: 0,
            sigma_core_sq: 1.0,
            sigma_spu_sq: 0.5,
            sigma_noise_sq: 0.0,
            seed: 5,
        };
        let ds = gen_explicit(&cfg).unwrap();
        for objective in [Objective::Erm, Objective::Reweight] {
            let tc = TrainConfig { objective, lambda: 0.01, grad_tol: 1e-9, max_iters: 5000, seed: 0 };
            let out = train_logistic(&ds, &tc).unwrap();
            assert!(out.converged);
            let gn = gradient_norm(&ds, objective, tc.lambda, &out.model).unwrap();
            assert!(gn <= tc.grad_tol, "direct gradient norm {gn}");
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let cfg = ExplicitConfig {
            n_maj: 20,
            n_min: 8,
            noise_dim: 3,
            sigma_core_sq: 2.0,
            sigma_spu_sq: 0.3,
            sigma_noise_sq: 1.0,
            seed: 11,
        };
        let ds = gen_explicit(&cfg).unwrap();
        let mut rng = substream(0, "gradcheck", 0);
        for objective in [Objective::Erm, Objective::Reweight] {
            for probe in 0..4 {
                let w: Vec<f64> = (0..ds.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let (_, grad) =
                    crate::optimize::logistic_objective(&ds, objective, 0.37, &w).unwrap();
                let h = 1e-6;
                for j in 0..ds.dim() {
                    let mut wp = w.clone();
                    let mut wm = w.clone();
                    wp[j] += h;
                    wm[j] -= h;
                    let (vp, _) = crate::optimize::logistic_objective(&ds, objective, 0.37, &wp).unwrap();
                    let (vm, _) = crate::optimize::logistic_objective(&ds, objective, 0.37, &wm).unwrap();
                    let fd = (vp - vm) / (2.0 * h);
                    let scale = grad[j].abs().max(fd.abs()).max(1e-8);
                    assert!(
                        (grad[j] - fd).abs() / scale <= 1e-5,
                        "probe {probe} coord {j}: analytic {} vs fd {fd}",
                        grad[j]
                    );
                }
            }
        }
    }

    #[test]
    fn reweight_requires_nonempty_groups() {
        // All four labels present but one (label, attribute) cell empty.
        let features = array![[1.0], [-1.0], [0.5]];
        let ds = GroupedDataset::new(features, vec![1, -1, 1], vec![1, -1, 1], None).unwrap();
        let cfg = TrainConfig { objective: Objective::Reweight, ..Default::default() };
        assert!(train_logistic(&ds, &cfg).is_err());
    }

    #[test]
    fn stable_loss_handles_huge_margins() {
        assert_eq!(LossKind::Logistic.value(1000.0), 0.0);
        let v = LossKind::Logistic.value(-1000.0);
        assert!((v - 1000.0).abs() < 1e-9);
        assert!(LossKind::Logistic.slope(-1000.0) + 1.0 < 1e-12);
    }
}
