//! Coordinate-descent solver for the MAP objective.
//!
//! Alternates two blocks per outer iteration:
//!   S-block — Nesterov-accelerated projected gradient on the convex
//!             quadratic subproblem, projecting every iterate's columns back
//!             onto the domain;
//!   H-block — Nesterov-accelerated gradient on the nonconvex subproblem,
//!             unconstrained, with momentum restart on objective increase.
//!
//! With the backtracking step rule the accepted objective values never
//! increase, so the per-outer-iteration trace is monotone.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::domains::DomainSpec;
use crate::error::{Error, Result};
use crate::linalg;
use crate::objective::{self, ObjectiveParams};
use crate::rng;

/// Backtracking aborts when the step shrinks below this.
pub const STEP_COLLAPSE_LIMIT: f64 = 1e-18;

/// Step-size policy for the inner loops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Fixed step 1/L from a Lipschitz bound of the block gradient.
    LipschitzEstimate,
    /// Armijo-style backtracking line search. Guarantees a monotone
    /// objective trace.
    Backtracking { shrink: f64, max_tries: u32 },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Backtracking { shrink: 0.5, max_tries: 60 }
    }
}

/// How the iteration is initialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// H₀, S₀ with i.i.d. N(0, scale²) entries; S₀ columns projected onto the
    /// domain. Seeded by `SolverConfig::seed`.
    RandomGaussian { scale: f64 },
    /// H₀ from the r dominant left singular vectors of Y scaled by their
    /// singular values, S₀ = project(H₀⁺Y). Deterministic.
    SvdWarmStart,
    /// Caller-supplied starting point. S₀ columns must already be feasible.
    Provided { h0: Array2<f64>, s0: Array2<f64> },
}

impl Default for InitStrategy {
    fn default() -> Self {
        InitStrategy::SvdWarmStart
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_outer_iters: usize,
    pub inner_iters_h: usize,
    pub inner_iters_s: usize,
    pub rel_obj_tol: f64,
    pub step_rule: StepRule,
    pub init: InitStrategy,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_outer_iters: 500,
            inner_iters_h: 50,
            inner_iters_s: 50,
            rel_obj_tol: 1e-8,
            step_rule: StepRule::default(),
            init: InitStrategy::default(),
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iters == 0 || self.inner_iters_h == 0 || self.inner_iters_s == 0 {
            return Err(Error::invalid("iteration counts must be >= 1"));
        }
        if !(self.rel_obj_tol > 0.0) {
            return Err(Error::invalid("rel_obj_tol must be positive"));
        }
        if let StepRule::Backtracking { shrink, max_tries } = self.step_rule {
            if !(shrink > 0.0 && shrink < 1.0) {
                return Err(Error::invalid("backtracking shrink factor must lie in (0,1)"));
            }
            if max_tries == 0 {
                return Err(Error::invalid("backtracking max_tries must be >= 1"));
            }
        }
        if let InitStrategy::RandomGaussian { scale } = self.init {
            if !(scale > 0.0) {
                return Err(Error::invalid("init scale must be positive"));
            }
        }
        Ok(())
    }
}

/// Solver output. The trace holds the objective at the starting point
/// followed by one value per outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub h_hat: Array2<f64>,
    pub s_hat: Array2<f64>,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub outer_iters_used: usize,
}

/// Errors from `fit`. A numerical failure retains the last valid iterate so
/// callers can inspect or report it.
#[derive(Debug, thiserror::Error)]
pub enum FitError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("numerical failure: {message}")]
    Numerical { message: String, last_valid: Box<FitResult> },
}

/// Step size 1/L for the S-subproblem, L = 2·λ_max(HᵀH) being the exact
/// Lipschitz constant of its gradient. Returns +∞ when H = 0 (the subproblem
/// is constant; callers skip the S-step).
pub fn step_size_s(h: ArrayView2<'_, f64>) -> Result<f64> {
    if h.iter().all(|v| *v == 0.0) {
        return Ok(f64::INFINITY);
    }
    let hth = linalg::symmetrize(&h.t().dot(&h));
    let lmax = linalg::max_eigenvalue(hth.view())?;
    if lmax <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / (2.0 * lmax))
}

/// Conservative 1/L for the H-subproblem: data curvature 2·λ_max(SSᵀ) plus a
/// bound 5λ/λ_min(Ψ) on the barrier-gradient Lipschitz constant.
fn step_size_h(s: ArrayView2<'_, f64>, params: &ObjectiveParams, psi_min_eig: f64) -> Result<f64> {
    let sst = linalg::symmetrize(&s.dot(&s.t()));
    let lmax = linalg::max_eigenvalue(sst.view())?.max(0.0);
    let l = 2.0 * lmax + 5.0 * params.lambda / psi_min_eig;
    Ok(1.0 / l)
}

/// Per-call step policy for one inner loop.
#[derive(Debug, Clone, Copy)]
pub enum StepMode {
    Fixed(f64),
    Backtracking { init: f64, shrink: f64, max_tries: u32 },
}

#[derive(Debug, Clone)]
pub struct NesterovOutcome {
    pub x: Array2<f64>,
    /// Final objective at `x`; tracked only under backtracking.
    pub objective: Option<f64>,
    /// Momentum restarts triggered by objective increases.
    pub restarts: usize,
}

/// Accelerated (projected) gradient loop with the classic momentum sequence
/// t_{k+1} = (1 + √(1+4t_k²))/2 and extrapolation
/// y = x_k + ((t_k−1)/t_{k+1})(x_k − x_{k−1}); the projection is applied
/// after every gradient step.
///
/// Under backtracking the routine is monotone: it restarts momentum whenever
/// a step would increase the objective, retakes the step without
/// extrapolation, and returns the best point seen.
pub fn nesterov_loop(
    x0: &Array2<f64>,
    grad_fn: impl Fn(&Array2<f64>) -> Result<Array2<f64>>,
    obj_fn: impl Fn(&Array2<f64>) -> Result<f64>,
    project_fn: impl Fn(&mut Array2<f64>) -> Result<()>,
    mode: StepMode,
    iters: usize,
) -> Result<NesterovOutcome> {
    if iters == 0 {
        return Err(Error::invalid("nesterov_loop needs iters >= 1"));
    }
    match mode {
        StepMode::Fixed(step) => {
            if !(step > 0.0) || !step.is_finite() {
                return Err(Error::invalid(format!("fixed step must be positive, got {step}")));
            }
            let mut x_prev = x0.clone();
            let mut x = x0.clone();
            let mut t = 1.0f64;
            for _ in 0..iters {
                let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
                let gamma = (t - 1.0) / t_next;
                let y = &x + &((&x - &x_prev) * gamma);
                let g = grad_fn(&y)?;
                let mut cand = &y - &(&g * step);
                project_fn(&mut cand)?;
                x_prev = std::mem::replace(&mut x, cand);
                t = t_next;
            }
            Ok(NesterovOutcome { x, objective: None, restarts: 0 })
        }
        StepMode::Backtracking { init, shrink, max_tries } => {
            if !(init > 0.0) || !init.is_finite() {
                return Err(Error::invalid(format!("initial step must be positive, got {init}")));
            }
            let mut x_prev = x0.clone();
            let mut x = x0.clone();
            let mut f_x = obj_fn(&x)?;
            if !f_x.is_finite() {
                return Err(Error::numerical(format!(
                    "objective at block start is {f_x}"
                )));
            }
            let mut x_best = x.clone();
            let mut f_best = f_x;
            let mut t = 1.0f64;
            let mut step = init;
            let mut restarts = 0usize;
            let mut stalls = 0usize;
            for _ in 0..iters {
                let mut t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
                let gamma = (t - 1.0) / t_next;
                let y = &x + &((&x - &x_prev) * gamma);
                let (mut cand, mut f_cand, used, moved) =
                    backtrack_step(&y, &grad_fn, &obj_fn, &project_fn, step, shrink, max_tries)?;
                step = used * 2.0;
                if f_cand > f_x {
                    // extrapolated step went uphill: restart momentum and step
                    // from the current iterate instead
                    restarts += 1;
                    t_next = 1.0;
                    let (c, f, used2, _) =
                        backtrack_step(&x, &grad_fn, &obj_fn, &project_fn, used, shrink, max_tries)?;
                    step = used2 * 2.0;
                    cand = c;
                    f_cand = f;
                }
                if moved {
                    stalls = 0;
                } else {
                    stalls += 1;
                }
                x_prev = std::mem::replace(&mut x, cand);
                f_x = f_cand;
                if f_x <= f_best {
                    f_best = f_x;
                    x_best = x.clone();
                }
                t = t_next;
                if stalls >= 2 {
                    break; // numerically stationary within this block
                }
            }
            Ok(NesterovOutcome { x: x_best, objective: Some(f_best), restarts })
        }
    }
}

/// One backtracked projected-gradient step from `y`. Returns
/// (candidate, objective, accepted step, whether the candidate moved).
fn backtrack_step(
    y: &Array2<f64>,
    grad_fn: &impl Fn(&Array2<f64>) -> Result<Array2<f64>>,
    obj_fn: &impl Fn(&Array2<f64>) -> Result<f64>,
    project_fn: &impl Fn(&mut Array2<f64>) -> Result<()>,
    step0: f64,
    shrink: f64,
    max_tries: u32,
) -> Result<(Array2<f64>, f64, f64, bool)> {
    let g = grad_fn(y)?;
    let f_y = obj_fn(y)?;
    if !f_y.is_finite() {
        return Err(Error::numerical(format!("objective at search point is {f_y}")));
    }
    let y_norm = linalg::frob_sq(y.view()).sqrt();
    let mut step = step0;
    for _ in 0..=max_tries {
        let mut cand = y - &(&g * step);
        project_fn(&mut cand)?;
        let moved_mat = &cand - y;
        let move_sq = linalg::frob_sq(moved_mat.view());
        if move_sq.sqrt() <= 1e-12 * (1.0 + y_norm) {
            // movement at rounding level: the block is stationary here
            let f_cand = obj_fn(&cand)?;
            let (out, f) = if f_cand <= f_y { (cand, f_cand) } else { (y.clone(), f_y) };
            return Ok((out, f, step, false));
        }
        let f_cand = obj_fn(&cand)?;
        let inner: f64 = g.iter().zip(moved_mat.iter()).map(|(a, b)| a * b).sum();
        let model = f_y + inner + move_sq / (2.0 * step);
        // Near a block optimum the model's predicted decrease drops below
        // the floating-point resolution of f; descent can no longer be
        // certified by comparing objectives, so accept the (tiny) step as is.
        let below_resolution = -(inner + move_sq / (2.0 * step)) <= 1e-14 * (1.0 + f_y.abs());
        if f_cand.is_finite() && (f_cand <= model || below_resolution) {
            return Ok((cand, f_cand, step, true));
        }
        step *= shrink;
        if step < STEP_COLLAPSE_LIMIT {
            return Err(Error::numerical(format!(
                "backtracking step collapsed below {STEP_COLLAPSE_LIMIT:.0e}"
            )));
        }
    }
    Err(Error::numerical(format!(
        "backtracking found no acceptable step in {max_tries} tries"
    )))
}

/// Minimizes the MAP objective over (H, S) with S-columns constrained to the
/// domain.
pub fn fit(
    y: ArrayView2<'_, f64>,
    domain: &DomainSpec,
    params: &ObjectiveParams,
    cfg: &SolverConfig,
) -> std::result::Result<FitResult, FitError> {
    cfg.validate()?;
    let n = y.ncols();
    if y.nrows() != params.m {
        return Err(Error::shape(format!(
            "Y has {} rows, params.m = {}",
            y.nrows(),
            params.m
        ))
        .into());
    }
    if domain.dim != params.r {
        return Err(Error::invalid(format!(
            "domain dimension {} != latent dimension {}",
            domain.dim, params.r
        ))
        .into());
    }
    if params.r > params.m.min(n) {
        return Err(Error::invalid(format!(
            "r={} exceeds min(M={}, N={})",
            params.r, params.m, n
        ))
        .into());
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("Y contains non-finite entries").into());
    }

    let (mut h, mut s) = initialize(y, domain, params, cfg)?;
    let psi_min_eig = linalg::min_eigenvalue(params.psi.view())?;
    let y_sq = linalg::frob_sq(y);

    // Incumbent: the best (H, S) pair under the directly evaluated objective.
    // The trace reports the incumbent objective, so monotonicity is exact
    // even though the inner blocks work with cheaper Gram-form objectives.
    let j0 = objective::evaluate(params, y, h.view(), s.view())?;
    if !j0.is_finite() {
        return Err(FitError::Numerical {
            message: format!("objective at the starting point is {j0}"),
            last_valid: Box::new(FitResult {
                h_hat: h,
                s_hat: s,
                objective_trace: vec![],
                converged: false,
                outer_iters_used: 0,
            }),
        });
    }
    let mut h_best = h.clone();
    let mut s_best = s.clone();
    let mut j_best = j0;
    let mut trace = vec![j_best];
    let mut converged = false;

    // Coordinate descent zigzags along the near-flat valley shared by H and
    // S; a safeguarded joint extrapolation across outer iterations collapses
    // that linear crawl. Candidates are kept only when the directly
    // evaluated objective decreases.
    let mut h_prev_outer = h.clone();
    let mut s_prev_outer = s.clone();
    // Small regularization weights make the valley crawl per outer iteration
    // proportionally small, so profitable overshoot factors grow like 1/√λ;
    // the ladder must reach far beyond classic momentum.
    const EXTRAPOLATION_DOUBLINGS: usize = 40;

    for _outer in 0..cfg.max_outer_iters {
        let snapshot = |h: &Array2<f64>, s: &Array2<f64>, trace: &[f64]| FitResult {
            h_hat: h.clone(),
            s_hat: s.clone(),
            objective_trace: trace.to_vec(),
            converged: false,
            outer_iters_used: trace.len() - 1,
        };

        // S block (skipped while H = 0: the subproblem is constant).
        // With H fixed, ‖Y−HS‖_F² = ‖Y‖² − 2⟨S, HᵀY⟩ + ⟨S, HᵀH·S⟩, so the
        // block works off the small precomputed Gram matrices.
        let step_s = step_size_s(h.view())?;
        if step_s.is_finite() {
            let hty = h.t().dot(&y);
            let hth = linalg::symmetrize(&h.t().dot(&h));
            let blend = linalg::symmetrize(&(&hth + &params.psi)) / params.beta;
            let logdet_term =
                params.lambda * linalg::logdet_from_cholesky(&linalg::cholesky(blend.view())?);
            let mode = block_mode(&cfg.step_rule, step_s);
            let out = nesterov_loop(
                &s,
                |s_c| Ok((hth.dot(s_c) - &hty) * 2.0),
                |s_c| {
                    let quad = linalg::frob_inner(s_c, &hth.dot(s_c));
                    let lin = linalg::frob_inner(s_c, &hty);
                    Ok(y_sq - 2.0 * lin + quad + logdet_term)
                },
                |s_c| domain.project_columns_in_place(s_c),
                mode,
                cfg.inner_iters_s,
            )
            .map_err(|e| wrap_numerical(e, snapshot(&h_best, &s_best, &trace)))?;
            s = out.x;
        }

        // H block (unconstrained): data part via Grams, barrier via Cholesky
        // on the r×r blend.
        let step_h = step_size_h(s.view(), params, psi_min_eig)?;
        let mode = block_mode(&cfg.step_rule, step_h);
        {
            let yst = y.dot(&s.t());
            let sst = linalg::symmetrize(&s.dot(&s.t()));
            let out = nesterov_loop(
                &h,
                |h_c| {
                    let data = (h_c.dot(&sst) - &yst) * 2.0;
                    let a = linalg::symmetrize(&(h_c.t().dot(h_c) + &params.psi));
                    let l = linalg::cholesky(a.view())?;
                    let xt = linalg::cholesky_solve(&l, h_c.t())?;
                    Ok(data + xt.t().to_owned() * (2.0 * params.lambda))
                },
                |h_c| {
                    let quad = linalg::frob_inner(h_c, &h_c.dot(&sst));
                    let lin = linalg::frob_inner(h_c, &yst);
                    let a = linalg::symmetrize(&(h_c.t().dot(h_c) + &params.psi)) / params.beta;
                    let l = linalg::cholesky(a.view())?;
                    Ok(y_sq - 2.0 * lin
                        + quad
                        + params.lambda * linalg::logdet_from_cholesky(&l))
                },
                |_| Ok(()),
                mode,
                cfg.inner_iters_h,
            )
            .map_err(|e| wrap_numerical(e, snapshot(&h_best, &s_best, &trace)))?;
            h = out.x;
        }

        let mut j_cand = objective::evaluate(params, y, h.view(), s.view())?;
        if !j_cand.is_finite() {
            return Err(FitError::Numerical {
                message: format!("objective became {j_cand} after outer iteration"),
                last_valid: Box::new(snapshot(&h_best, &s_best, &trace)),
            });
        }

        let dh = &h - &h_prev_outer;
        let ds = &s - &s_prev_outer;
        h_prev_outer.clone_from(&h);
        s_prev_outer.clone_from(&s);
        let mut accepted: Option<(Array2<f64>, Array2<f64>, f64)> = None;
        let mut alpha = 1.0;
        let mut misses = 0;
        for _ in 0..EXTRAPOLATION_DOUBLINGS {
            let h_t = &h + &(&dh * alpha);
            let mut s_t = &s + &(&ds * alpha);
            domain.project_columns_in_place(&mut s_t)?;
            let j_t = objective::evaluate(params, y, h_t.view(), s_t.view())?;
            let best_so_far = accepted.as_ref().map_or(j_cand, |(_, _, j)| *j);
            if j_t.is_finite() && j_t < best_so_far {
                accepted = Some((h_t, s_t, j_t));
                misses = 0;
            } else {
                misses += 1;
                if misses >= 2 {
                    break;
                }
            }
            alpha *= 2.0;
        }
        if let Some((h_t, s_t, j_t)) = accepted {
            h = h_t;
            s = s_t;
            j_cand = j_t;
        }

        if j_cand <= j_best {
            j_best = j_cand;
            h_best.clone_from(&h);
            s_best.clone_from(&s);
        }
        let j_prev = *trace.last().expect("trace nonempty");
        trace.push(j_best);
        let rel_change = (j_prev - j_best) / (1.0 + j_best.abs());

        if rel_change < cfg.rel_obj_tol {
            let (g_s, g_h) =
                stationarity_measures(params, domain, y, h_best.view(), s_best.view())?;
            let bound = 10.0 * cfg.rel_obj_tol * (1.0 + j_best.abs());
            if g_s <= bound && g_h <= bound {
                converged = true;
                break;
            }
        }
    }

    Ok(FitResult {
        outer_iters_used: trace.len() - 1,
        h_hat: h_best,
        s_hat: s_best,
        objective_trace: trace,
        converged,
    })
}

fn wrap_numerical(e: Error, last_valid: FitResult) -> FitError {
    match e {
        Error::Numerical(msg) => FitError::Numerical { message: msg, last_valid: Box::new(last_valid) },
        other => FitError::Core(other),
    }
}

fn block_mode(rule: &StepRule, step: f64) -> StepMode {
    match *rule {
        StepRule::LipschitzEstimate => StepMode::Fixed(step),
        StepRule::Backtracking { shrink, max_tries } => {
            StepMode::Backtracking { init: step, shrink, max_tries }
        }
    }
}

/// Gradient-mapping norm of the S block (projected, scaled by the step) and
/// plain gradient norm of the H block.
pub fn stationarity_measures(
    params: &ObjectiveParams,
    domain: &DomainSpec,
    y: ArrayView2<'_, f64>,
    h: ArrayView2<'_, f64>,
    s: ArrayView2<'_, f64>,
) -> Result<(f64, f64)> {
    let g_h = objective::grad_h(params, y, h, s)?;
    let g_h_norm = linalg::frob_sq(g_h.view()).sqrt();
    let step = step_size_s(h)?;
    let g_s_norm = if step.is_finite() {
        let g_s = objective::grad_s(params, y, h, s)?;
        let mut cand = &s.to_owned() - &(&g_s * step);
        domain.project_columns_in_place(&mut cand)?;
        let disp = &cand - &s.to_owned();
        linalg::frob_sq(disp.view()).sqrt() / step
    } else {
        0.0
    };
    Ok((g_s_norm, g_h_norm))
}

fn initialize(
    y: ArrayView2<'_, f64>,
    domain: &DomainSpec,
    params: &ObjectiveParams,
    cfg: &SolverConfig,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let (m, r, n) = (params.m, params.r, y.ncols());
    match &cfg.init {
        InitStrategy::Provided { h0, s0 } => {
            if h0.dim() != (m, r) || s0.dim() != (r, n) {
                return Err(Error::invalid(format!(
                    "provided init has shapes H₀ {:?}, S₀ {:?}; expected ({m},{r}) and ({r},{n})",
                    h0.dim(),
                    s0.dim()
                )));
            }
            if !domain.contains_columns(s0, crate::domains::DEFAULT_MEMBERSHIP_TOL)? {
                return Err(Error::invalid("provided S₀ has columns outside the domain"));
            }
            Ok((h0.clone(), s0.clone()))
        }
        InitStrategy::RandomGaussian { scale } => {
            use rand::Rng;
            use rand_distr::StandardNormal;
            let mut rh = rng::stream(rng::derive_seed(cfg.seed, &[1]));
            let h0 = Array2::from_shape_vec(
                (m, r),
                (0..m * r)
                    .map(|_| scale * rh.sample::<f64, _>(StandardNormal))
                    .collect(),
            )
            .expect("shape");
            let mut rs = rng::stream(rng::derive_seed(cfg.seed, &[2]));
            let mut s0 = Array2::from_shape_vec(
                (r, n),
                (0..r * n)
                    .map(|_| scale * rs.sample::<f64, _>(StandardNormal))
                    .collect(),
            )
            .expect("shape");
            domain.project_columns_in_place(&mut s0)?;
            Ok((h0, s0))
        }
        InitStrategy::SvdWarmStart => {
            let gram = linalg::symmetrize(&y.dot(&y.t()));
            let (vals, vecs) = linalg::symmetric_eigen(gram.view())?;
            let mut h0 = Array2::<f64>::zeros((m, r));
            for k in 0..r {
                let sv = vals[k].max(0.0).sqrt();
                for i in 0..m {
                    h0[[i, k]] = sv * vecs[[i, k]];
                }
            }
            let hth = linalg::symmetrize(&h0.t().dot(&h0));
            let rhs = h0.t().dot(&y);
            let mut s0 = linalg::symmetric_pseudo_solve(hth.view(), rhs.view(), 1e-12)?;
            if domain.kind == crate::domains::DomainKind::LinfBall {
                // Rebalance the H₀·S₀ product so every S₀ row touches the box
                // boundary: the singular-value scaling leaves S₀ deep inside
                // B_∞, where the constraints are inactive and the iteration
                // stalls.
                for i in 0..r {
                    let peak = s0.row(i).iter().fold(0.0f64, |a, v| a.max(v.abs()));
                    if peak > 0.0 {
                        for j in 0..s0.ncols() {
                            s0[[i, j]] /= peak;
                        }
                        for k in 0..m {
                            h0[[k, i]] *= peak;
                        }
                    }
                }
            }
            domain.project_columns_in_place(&mut s0)?;
            Ok((h0, s0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{self, HRowCovarianceMode, ModelParams};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::cell::RefCell;

    fn randn(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_vec(
            (rows, cols),
            (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn step_size_examples() {
        // orthonormal columns: HᵀH = I, L = 2
        let h = array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        assert!((step_size_s(h.view()).unwrap() - 0.5).abs() < 1e-12);
        // scalar H = (2): L = 2·4
        let h2 = array![[2.0]];
        assert!((step_size_s(h2.view()).unwrap() - 0.125).abs() < 1e-15);
        // H = 0 sentinel
        let hz = Array2::<f64>::zeros((3, 2));
        assert!(step_size_s(hz.view()).unwrap().is_infinite());
    }

    #[test]
    fn step_size_satisfies_descent_lemma() {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let domain = DomainSpec::linf_ball(3).unwrap();
        for _ in 0..100 {
            let h = randn(5, 3, &mut rng);
            let s = domain.sample_uniform(8, &mut rng).unwrap();
            let y = randn(5, 8, &mut rng);
            let params =
                ObjectiveParams::new(0.5, Array2::<f64>::eye(3), 4.0, 5, 3).unwrap();
            let step = step_size_s(h.view()).unwrap();
            let g = objective::grad_s(&params, y.view(), h.view(), s.view()).unwrap();
            let s_next = &s - &(&g * step);
            let j0 = objective::evaluate(&params, y.view(), h.view(), s.view()).unwrap();
            let j1 = objective::evaluate(&params, y.view(), h.view(), s_next.view()).unwrap();
            assert!(j1 <= j0 + 1e-12, "descent lemma violated: {j0} -> {j1}");
        }
    }

    #[test]
    fn nesterov_solves_simple_quadratic() {
        let x0 = Array2::from_elem((4, 1), 1.0);
        for mode in [
            StepMode::Fixed(0.5),
            StepMode::Backtracking { init: 0.5, shrink: 0.5, max_tries: 60 },
        ] {
            let out = nesterov_loop(
                &x0,
                |x| Ok(x * 2.0),
                |x| Ok(linalg::frob_sq(x.view())),
                |_| Ok(()),
                mode,
                100,
            )
            .unwrap();
            assert!(linalg::frob_sq(out.x.view()).sqrt() <= 1e-6);
        }
    }

    #[test]
    fn projection_inactive_at_interior_optimum() {
        // minimize ‖x − c‖² with c strictly inside B_∞
        let c = array![[0.3], [-0.2], [0.6]];
        let domain = DomainSpec::linf_ball(3).unwrap();
        let x0 = Array2::from_elem((3, 1), 0.9);
        let grad = |x: &Array2<f64>| Ok((x - &c) * 2.0);
        let obj = |x: &Array2<f64>| Ok(linalg::frob_sq((x - &c).view()));
        let mode = StepMode::Backtracking { init: 0.5, shrink: 0.5, max_tries: 60 };
        let with_proj =
            nesterov_loop(&x0, &grad, &obj, |x| domain.project_columns_in_place(x), mode, 200)
                .unwrap();
        let without = nesterov_loop(&x0, &grad, &obj, |_| Ok(()), mode, 200).unwrap();
        let diff = linalg::frob_sq((&with_proj.x - &without.x).view()).sqrt();
        assert!(diff < 1e-9, "projected and unprojected optima differ by {diff}");
        assert!(linalg::frob_sq((&with_proj.x - &c).view()).sqrt() < 1e-7);
    }

    #[test]
    fn acceleration_beats_plain_gradient_descent() {
        // ill-conditioned quadratic f(x) = Σ d_i x_i², d = 1..100
        let dim = 10;
        let d: Vec<f64> = (0..dim).map(|i| 1.0 + 99.0 * i as f64 / (dim - 1) as f64).collect();
        let l = 2.0 * 100.0;
        let x0 = Array2::from_elem((dim, 1), 1.0);
        let grad = |x: &Array2<f64>| {
            let mut g = x.clone();
            for i in 0..dim {
                g[[i, 0]] *= 2.0 * d[i];
            }
            Ok(g)
        };
        let target = 1e-6;

        let mut nesterov_iters = None;
        for k in 1..=2000 {
            let out = nesterov_loop(
                &x0,
                &grad,
                |x| Ok(x.iter().zip(&d).map(|(v, di)| di * v * v).sum()),
                |_| Ok(()),
                StepMode::Fixed(1.0 / l),
                k,
            )
            .unwrap();
            if linalg::frob_sq(out.x.view()).sqrt() <= target {
                nesterov_iters = Some(k);
                break;
            }
        }
        let nesterov_iters = nesterov_iters.expect("nesterov did not converge");

        let mut gd_iters = None;
        let mut x = x0.clone();
        for k in 1..=200_000 {
            let g = grad(&x).unwrap();
            x = &x - &(&g * (1.0 / l));
            if linalg::frob_sq(x.view()).sqrt() <= target {
                gd_iters = Some(k);
                break;
            }
        }
        let gd_iters = gd_iters.expect("gd did not converge");
        assert!(
            gd_iters >= 2 * nesterov_iters,
            "gd {gd_iters} vs nesterov {nesterov_iters}"
        );
    }

    #[test]
    fn backtracking_iterates_stay_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(88);
        let domain = DomainSpec::simplex(3).unwrap();
        let h = randn(5, 3, &mut rng);
        let y = randn(5, 12, &mut rng);
        let params = ObjectiveParams::new(0.4, Array2::<f64>::eye(3), 4.0, 5, 3).unwrap();
        let mut s0 = randn(3, 12, &mut rng);
        domain.project_columns_in_place(&mut s0).unwrap();

        let seen: RefCell<Vec<Array2<f64>>> = RefCell::new(vec![]);
        let out = nesterov_loop(
            &s0,
            |s| objective::grad_s(&params, y.view(), h.view(), s.view()),
            |s| objective::evaluate(&params, y.view(), h.view(), s.view()),
            |s| {
                domain.project_columns_in_place(s)?;
                seen.borrow_mut().push(s.clone());
                Ok(())
            },
            StepMode::Backtracking { init: step_size_s(h.view()).unwrap(), shrink: 0.5, max_tries: 60 },
            30,
        )
        .unwrap();
        assert!(!seen.borrow().is_empty());
        for s in seen.borrow().iter() {
            assert!(domain.contains_columns(s, 1e-9).unwrap());
        }
        assert!(domain.contains_columns(&out.x, 1e-9).unwrap());
    }

    fn small_instance(seed: u64) -> (Array2<f64>, DomainSpec, ObjectiveParams) {
        let domain = DomainSpec::linf_ball(2).unwrap();
        let p = ModelParams {
            m: 6,
            r: 2,
            n: 40,
            sigma_v2: 0.05,
            psi: generator::psi_from_rho(1.0, 4.0, 2).unwrap(),
            phi: 4.0,
            domain,
            h_row_covariance_mode: HRowCovarianceMode::Identity,
        };
        let g = generator::generate(&p, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let params = ObjectiveParams::new(p.sigma_v2, p.psi.clone(), p.phi, p.m, p.r).unwrap();
        (g.y, domain, params)
    }

    #[test]
    fn trace_is_monotone_under_backtracking() {
        for seed in 0..5 {
            let (y, domain, params) = small_instance(seed);
            let cfg = SolverConfig { max_outer_iters: 60, ..Default::default() };
            let fr = fit(y.view(), &domain, &params, &cfg).unwrap();
            for w in fr.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "trace increased: {} -> {}", w[0], w[1]);
            }
            assert!(domain.contains_columns(&fr.s_hat, 1e-9).unwrap());
        }
    }

    #[test]
    fn fit_is_bitwise_deterministic() {
        let (y, domain, params) = small_instance(3);
        let cfg = SolverConfig {
            max_outer_iters: 40,
            init: InitStrategy::RandomGaussian { scale: 1.0 },
            seed: 7,
            ..Default::default()
        };
        let a = fit(y.view(), &domain, &params, &cfg).unwrap();
        let b = fit(y.view(), &domain, &params, &cfg).unwrap();
        assert_eq!(a.outer_iters_used, b.outer_iters_used);
        assert_eq!(a.converged, b.converged);
        assert_eq!(a.objective_trace.len(), b.objective_trace.len());
        for (x, y) in a.objective_trace.iter().zip(&b.objective_trace) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        for (x, y) in a.h_hat.iter().zip(b.h_hat.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        for (x, y) in a.s_hat.iter().zip(b.s_hat.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn converged_runs_are_stationary() {
        let (y, domain, params) = small_instance(11);
        let cfg = SolverConfig { max_outer_iters: 4000, rel_obj_tol: 1e-8, ..Default::default() };
        let fr = fit(y.view(), &domain, &params, &cfg).unwrap();
        assert!(fr.converged, "expected convergence, used {} outers", fr.outer_iters_used);
        let (g_s, g_h) =
            stationarity_measures(&params, &domain, y.view(), fr.h_hat.view(), fr.s_hat.view())
                .unwrap();
        let j = *fr.objective_trace.last().unwrap();
        let bound = 10.0 * cfg.rel_obj_tol * (1.0 + j.abs());
        assert!(g_s <= bound, "S gradient mapping {g_s} > {bound}");
        assert!(g_h <= bound, "H gradient {g_h} > {bound}");
    }

    #[test]
    fn zero_input_drives_h_to_zero() {
        let domain = DomainSpec::linf_ball(2).unwrap();
        let params = ObjectiveParams::new(0.1, Array2::<f64>::eye(2) * 2.0, 4.0, 5, 2).unwrap();
        let y = Array2::<f64>::zeros((5, 30));
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let h0 = randn(5, 2, &mut rng);
        let mut s0 = randn(2, 30, &mut rng);
        domain.project_columns_in_place(&mut s0).unwrap();
        let h0_norm = linalg::frob_sq(h0.view()).sqrt();
        let cfg = SolverConfig {
            max_outer_iters: 400,
            rel_obj_tol: 1e-13,
            init: InitStrategy::Provided { h0, s0 },
            ..Default::default()
        };
        let fr = fit(y.view(), &domain, &params, &cfg).unwrap();
        let limit = params.lambda
            * linalg::logdet_from_cholesky(
                &linalg::cholesky((&params.psi / params.beta).view()).unwrap(),
            );
        let j_final = *fr.objective_trace.last().unwrap();
        assert!(
            (j_final - limit).abs() < 1e-6 * (1.0 + limit.abs()),
            "final objective {j_final} vs limit {limit}"
        );
        let h_norm = linalg::frob_sq(fr.h_hat.view()).sqrt();
        assert!(h_norm <= 1e-3 * h0_norm, "‖H‖ = {h_norm}, ‖H₀‖ = {h0_norm}");
    }

    #[test]
    fn infeasible_config_is_rejected() {
        let (y, domain, params) = small_instance(0);
        let cfg = SolverConfig { max_outer_iters: 0, ..Default::default() };
        assert!(matches!(
            fit(y.view(), &domain, &params, &cfg),
            Err(FitError::Core(Error::InvalidArgument(_)))
        ));
        // provided init with infeasible S₀
        let bad = SolverConfig {
            init: InitStrategy::Provided {
                h0: Array2::<f64>::zeros((6, 2)),
                s0: Array2::<f64>::from_elem((2, 40), 5.0),
            },
            ..Default::default()
        };
        assert!(matches!(
            fit(y.view(), &domain, &params, &bad),
            Err(FitError::Core(Error::InvalidArgument(_)))
        ));
    }

    #[test]
    fn nan_input_is_invalid_argument() {
        let (mut y, domain, params) = small_instance(2);
        y[[0, 0]] = f64::NAN;
        let cfg = SolverConfig::default();
        assert!(matches!(
            fit(y.view(), &domain, &params, &cfg),
            Err(FitError::Core(Error::InvalidArgument(_)))
        ));
    }

    #[test]
    fn overflowing_objective_fails_with_last_valid_iterate() {
        // entries of 1e200 overflow the squared residual to +inf
        let domain = DomainSpec::linf_ball(2).unwrap();
        let params = ObjectiveParams::new(0.1, Array2::<f64>::eye(2), 4.0, 4, 2).unwrap();
        let y = Array2::<f64>::from_elem((4, 20), 1e200);
        let mut s0 = Array2::<f64>::zeros((2, 20));
        domain.project_columns_in_place(&mut s0).unwrap();
        let cfg = SolverConfig {
            init: InitStrategy::Provided { h0: Array2::<f64>::zeros((4, 2)), s0 },
            ..Default::default()
        };
        match fit(y.view(), &domain, &params, &cfg) {
            Err(FitError::Numerical { last_valid, .. }) => {
                assert_eq!(last_valid.h_hat.dim(), (4, 2));
                assert_eq!(last_valid.s_hat.dim(), (2, 20));
            }
            other => panic!("expected numerical failure, got {other:?}"),
        }
    }
}
