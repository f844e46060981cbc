//! Derivative-free secant iterations for nonlinear least squares.
//!
//! A simplex of `n + 1` trial points with their residual vectors defines the difference
//! matrices `A_p = [p_0 − p_j]` and `A_r = [h_0 − h_j]`. Wolfe's step solves
//! `A_r·q = −h_0` in the least-squares sense and moves to `p_0 + A_p·q`. The base `p_0` is
//! always the trial with the smallest merit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lstsq_min_norm, svd, DenseMatrix};
use crate::model::{
    eliminate_linear, residual_values, Bounds, DataSeries, Elimination, ModelDefinition, ParameterVector,
};
use crate::scalar::{norm, norm_sq, Scalar};

/// Trial points, their residuals and merits; index 0 is the best trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SecantSimplex<T> {
    points: Vec<Vec<T>>,
    residuals: Vec<Vec<T>>,
    merits: Vec<T>,
}

impl<T: Scalar> SecantSimplex<T> {
    /// Validates shapes and spread, then orders the trials by merit (stable).
    pub fn new(points: Vec<Vec<T>>, residuals: Vec<Vec<T>>, rank_tol: T) -> Result<Self> {
        let n = points.len().checked_sub(1).ok_or_else(|| {
            Error::InvalidSimplex("a simplex needs at least one point".into())
        })?;
        if residuals.len() != points.len() {
            return Err(Error::InvalidSimplex(format!(
                "{} points but {} residual vectors",
                points.len(),
                residuals.len()
            )));
        }
        if let Some(p) = points.iter().find(|p| p.len() != n) {
            return Err(Error::InvalidSimplex(format!(
                "{} trials need points of dimension {n}, found {}",
                n + 1,
                p.len()
            )));
        }
        let m = residuals[0].len();
        if residuals.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidSimplex("residual vectors differ in length".into()));
        }
        if m < n {
            return Err(Error::InvalidSimplex(format!(
                "{m} residuals cannot determine {n} parameters"
            )));
        }
        if points.iter().flatten().chain(residuals.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidSimplex("non-finite entry".into()));
        }
        let simplex = Self::ordered(points, residuals);
        if n > 0 {
            let rank = lstsq_min_norm(&simplex.parameter_differences()?, &vec![T::zero(); n], rank_tol)?
                .effective_rank;
            if rank < n {
                return Err(Error::DegenerateSimplex { rank, required: n });
            }
        }
        Ok(simplex)
    }

    fn ordered(points: Vec<Vec<T>>, residuals: Vec<Vec<T>>) -> Self {
        let merits: Vec<T> = residuals.iter().map(|r| norm_sq(r)).collect();
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| merits[a].partial_cmp(&merits[b]).expect("finite merits"));
        Self {
            points: order.iter().map(|&i| points[i].clone()).collect(),
            residuals: order.iter().map(|&i| residuals[i].clone()).collect(),
            merits: order.iter().map(|&i| merits[i]).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.points.len() - 1
    }

    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn residuals(&self) -> &[Vec<T>] {
        &self.residuals
    }

    pub fn merits(&self) -> &[T] {
        &self.merits
    }

    pub fn base(&self) -> &[T] {
        &self.points[0]
    }

    /// `A_p = [p_0 − p_1, …, p_0 − p_n]` (n x n).
    pub fn parameter_differences(&self) -> Result<DenseMatrix<T>> {
        let n = self.dim();
        Ok(DenseMatrix::from_fn(n, n, |i, j| self.points[0][i] - self.points[j + 1][i])?)
    }

    /// `A_r = [h_0 − h_1, …, h_0 − h_n]` (m x n).
    pub fn residual_differences(&self) -> Result<DenseMatrix<T>> {
        let n = self.dim();
        let m = self.residuals[0].len();
        Ok(DenseMatrix::from_fn(m, n, |i, j| self.residuals[0][i] - self.residuals[j + 1][i])?)
    }
}

/// Outcome of one Wolfe step.
#[derive(Debug, Clone, PartialEq)]
pub struct WolfeStep<T> {
    pub p_new: Vec<T>,
    pub q: Vec<T>,
    /// Singular values of `A_r`.
    pub singular_values: Vec<T>,
}

/// `q = argmin ‖A_r·q + h_0‖` (minimum norm), `p_new = p_0 + A_p·q`.
pub fn wolfe_step<T: Scalar>(simplex: &SecantSimplex<T>, rank_tol: T) -> Result<WolfeStep<T>> {
    let n = simplex.dim();
    if n == 0 {
        return Err(Error::InvalidSimplex("nothing to step in zero dimensions".into()));
    }
    let a_r = simplex.residual_differences()?;
    let rhs: Vec<T> = simplex.residuals[0].iter().map(|&h| -h).collect();
    let sol = lstsq_min_norm(&a_r, &rhs, rank_tol)?;
    if sol.effective_rank < n {
        return Err(Error::DegenerateSimplex {
            rank: sol.effective_rank,
            required: n,
        });
    }
    let step = simplex.parameter_differences()?.mul_vec(&sol.solution)?;
    let p_new = simplex.points[0].iter().zip(&step).map(|(&p, &d)| p + d).collect();
    Ok(WolfeStep {
        p_new,
        q: sol.solution,
        singular_values: sol.singular_values,
    })
}

/// Outcome of the two-trial step.
#[derive(Debug, Clone, PartialEq)]
pub enum ModifiedStep<T> {
    /// Some `h_0` component is zero, so the residual scaling is undefined; the caller falls
    /// back to the plain update.
    Fallback,
    Built {
        p_second: Vec<T>,
        q2: Vec<T>,
        /// Points of the next simplex: `p_new` followed by the axis points.
        new_points: Vec<Vec<T>>,
        /// Components where `w_i = 0` (no displacement of `p_second`).
        zero_displacement: Vec<usize>,
        /// Components whose axis point had to be moved off `p_new` to keep the simplex open.
        widened: Vec<usize>,
    },
}

/// Second trial from the residual row `T_r·A_r·q_2 = −h_0` with `t_r = h(p_new)/h_0`, then
/// `p_second = p_new − (p_0 − p_new)²/w` componentwise with `w = A_p·q_2`.
///
/// In one dimension `q_2 = (h_0/h_new)·q`.
pub fn modified_step<T: Scalar>(
    simplex: &SecantSimplex<T>,
    p_new: &[T],
    h_new: &[T],
    rank_tol: T,
) -> Result<ModifiedStep<T>> {
    let n = simplex.dim();
    let h0 = &simplex.residuals[0];
    let p0 = &simplex.points[0];
    if h_new.len() != h0.len() || p_new.len() != n {
        return Err(Error::InvalidSimplex("new trial does not match the simplex".into()));
    }
    if h0.iter().any(|&h| h == T::zero()) {
        return Ok(ModifiedStep::Fallback);
    }
    let t_r: Vec<T> = h_new.iter().zip(h0).map(|(&a, &b)| a / b).collect();
    let scaled = simplex.residual_differences()?.scale_rows(&t_r)?;
    let rhs: Vec<T> = h0.iter().map(|&h| -h).collect();
    let q2 = lstsq_min_norm(&scaled, &rhs, rank_tol)?.solution;
    let w = simplex.parameter_differences()?.mul_vec(&q2)?;

    let mut zero_displacement = Vec::new();
    let p_second: Vec<T> = (0..n)
        .map(|i| {
            let d = p0[i] - p_new[i];
            if w[i] == T::zero() {
                zero_displacement.push(i);
                p_new[i]
            } else {
                p_new[i] - d * d / w[i]
            }
        })
        .collect();

    let mut widened = Vec::new();
    let mut new_points = vec![p_new.to_vec()];
    for i in 0..n {
        let mut delta = p_second[i] - p_new[i];
        if !delta.is_finite() || delta == T::zero() {
            widened.push(i);
            delta = p0[i] - p_new[i];
            if delta == T::zero() {
                delta = T::lit(1e-4) * T::one().max(p_new[i].abs());
            }
        }
        let mut axis = p_new.to_vec();
        axis[i] += delta;
        new_points.push(axis);
    }
    Ok(ModifiedStep::Built {
        p_second,
        q2,
        new_points,
        zero_displacement,
        widened,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SecantVariant {
    #[default]
    Plain,
    Modified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Acceptance {
    /// Every step enters the simplex, uphill or not.
    #[default]
    AcceptAll,
    /// Uphill steps are halved toward the base (up to 10 times) before giving up.
    RejectWorse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundsPolicy {
    /// Clamp trial points to the box and flag the step.
    #[default]
    Project,
    /// Stop the iteration when a step leaves the box.
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub variant: SecantVariant,
    pub acceptance: Acceptance,
    pub bounds: BoundsPolicy,
    pub max_iterations: usize,
    /// Stop once the best merit falls below this.
    pub merit_tolerance: f64,
    /// Stop when the best merit improved by less than this fraction over `stagnation_window`
    /// iterations.
    pub stagnation_tolerance: f64,
    pub stagnation_window: usize,
    pub rank_tol: f64,
    /// Seed for simplex-repair perturbations.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            variant: SecantVariant::Plain,
            acceptance: Acceptance::AcceptAll,
            bounds: BoundsPolicy::Project,
            max_iterations: 100,
            merit_tolerance: 1e-24,
            stagnation_tolerance: 1e-12,
            stagnation_window: 10,
            rank_tol: 1e-12,
            seed: 0,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.merit_tolerance) || !positive(self.stagnation_tolerance) {
            return Err(Error::InvalidParameter("solver tolerances must be positive".into()));
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return Err(Error::InvalidParameter("rank_tol must lie in (0, 1)".into()));
        }
        if self.stagnation_window == 0 {
            return Err(Error::InvalidParameter("stagnation window must be at least 1".into()));
        }
        Ok(())
    }
}

/// What the simplex update did with a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepAction {
    /// New point replaced the worst trial.
    ReplacedWorst,
    /// As above, but the new point is itself worse than every old trial.
    ReplacedWorstUphill,
    /// Modified step: the whole simplex was rebuilt around the new point.
    Rebuilt,
    /// Modified step fell back to the plain update (some `h_0` component was zero).
    FallbackReplacedWorst,
    /// Degenerate simplex: the worst trial was replaced by a perturbed base point.
    Repaired,
    /// Reject-worse policy shrank the step toward the base.
    Shrunk,
    /// The step landed on an already evaluated trial and was halved toward the base.
    Bisected,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport<T> {
    pub iteration: usize,
    pub new_point: Vec<T>,
    pub second_point: Option<Vec<T>>,
    pub q: Vec<T>,
    pub merit_before: T,
    pub merit_after: T,
    /// Best merit seen so far after this step.
    pub best_merit: T,
    pub step_norm: T,
    pub action: StepAction,
    pub projected: bool,
    pub singular_values: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MeritTolerance,
    Stagnation,
    MaxIterations,
    /// The step reproduced an existing trial.
    StepVanished,
    /// Bounds policy `Reject` met a step outside the box.
    LeftDomain,
    /// Nothing to iterate (no free parameters).
    Trivial,
}

/// Residual map over the free coordinates of a secant run.
pub trait ResidualMap<T: Scalar> {
    fn bounds(&self) -> &[Bounds<T>];
    fn residual(&mut self, x: &[T]) -> Result<Vec<T>>;
}

/// Result of a generic secant run.
#[derive(Debug, Clone, PartialEq)]
pub struct SecantRun<T> {
    pub best: Vec<T>,
    pub best_residual: Vec<T>,
    pub best_merit: T,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
    pub trace: Vec<StepReport<T>>,
}

fn failure<T: Scalar>(reason: String, best: &[T], merit: T, iterations: usize, evaluations: usize) -> Error {
    Error::SolverFailure {
        reason,
        best: best.iter().map(|x| x.to_f64_lossy()).collect(),
        best_merit: merit.to_f64_lossy(),
        iterations,
        evaluations,
    }
}

/// Points `center` and `center + step_i·e_i`.
pub fn simplex_around<T: Scalar>(center: &[T], steps: &[T]) -> Vec<Vec<T>> {
    let mut points = vec![center.to_vec()];
    for (i, &s) in steps.iter().enumerate() {
        let mut p = center.to_vec();
        p[i] += s;
        points.push(p);
    }
    points
}

struct Runner<'a, T: Scalar, M: ResidualMap<T>> {
    map: &'a mut M,
    opts: SolverOptions,
    evaluations: usize,
    best: (Vec<T>, Vec<T>, T),
    iterations: usize,
    visited: Vec<Vec<T>>,
}

impl<T: Scalar, M: ResidualMap<T>> Runner<'_, T, M> {
    /// Projects (or rejects) a point; returns `None` when the policy rejects it.
    fn admit(&self, mut x: Vec<T>) -> Option<(Vec<T>, bool)> {
        let mut moved = false;
        for (v, b) in x.iter_mut().zip(self.map.bounds()) {
            if !b.contains(*v) {
                if self.opts.bounds == BoundsPolicy::Reject {
                    return None;
                }
                *v = b.clamp(*v);
                moved = true;
            }
        }
        Some((x, moved))
    }

    fn evaluate(&mut self, x: &[T]) -> Result<Vec<T>> {
        self.evaluations += 1;
        self.visited.push(x.to_vec());
        let h = match self.map.residual(x) {
            Ok(h) => h,
            Err(e) => {
                return Err(failure(
                    format!("residual evaluation failed: {e}"),
                    &self.best.0,
                    self.best.2,
                    self.iterations,
                    self.evaluations,
                ))
            }
        };
        let f = norm_sq(&h);
        if f < self.best.2 || self.best.0.is_empty() {
            self.best = (x.to_vec(), h.clone(), f);
        }
        Ok(h)
    }

    fn fail(&self, reason: impl Into<String>) -> Error {
        failure(reason.into(), &self.best.0, self.best.2, self.iterations, self.evaluations)
    }

    fn repair(&mut self, simplex: &SecantSimplex<T>, rng: &mut ChaCha8Rng) -> Result<SecantSimplex<T>> {
        let n = simplex.dim();
        let base = simplex.base().to_vec();
        // left singular vector of A_p with the smallest singular value: the least spanned
        // direction of the current trial cloud
        let a_p = simplex.parameter_differences()?;
        let dec = svd(&a_p.transpose());
        let dir = dec.v.last().cloned().unwrap_or_else(|| vec![T::one(); n]);
        let scale = base.iter().fold(T::one(), |m, x| m.max(x.abs()));
        let magnitude = (T::lit(10.0 * self.opts.merit_tolerance)).max(T::lit(1e-4) * scale)
            * T::lit(rng.random_range(1.0..2.0));
        let sign = if rng.random_bool(0.5) { T::one() } else { -T::one() };
        let candidate: Vec<T> = base.iter().zip(&dir).map(|(&b, &d)| b + sign * magnitude * d).collect();
        let (candidate, _) = self
            .admit(candidate)
            .ok_or_else(|| self.fail("simplex repair left the parameter domain"))?;
        let h = self.evaluate(&candidate)?;
        let mut points = simplex.points.clone();
        let mut residuals = simplex.residuals.clone();
        points[n] = candidate;
        residuals[n] = h;
        Ok(SecantSimplex::ordered(points, residuals))
    }
}

/// Runs the secant iteration on an arbitrary residual map from the given initial trials.
pub fn solve<T: Scalar, M: ResidualMap<T>>(
    map: &mut M,
    initial: Vec<Vec<T>>,
    opts: &SolverOptions,
) -> Result<SecantRun<T>> {
    opts.validate()?;
    let n = map.bounds().len();
    if initial.len() != n + 1 {
        return Err(Error::InvalidSimplex(format!(
            "{} free parameters need {} initial trials, got {}",
            n,
            n + 1,
            initial.len()
        )));
    }
    let rank_tol = T::lit(opts.rank_tol);
    let mut runner = Runner {
        map,
        opts: *opts,

        evaluations: 0,
        best: (Vec::new(), Vec::new(), T::infinity()),
        iterations: 0,
        visited: Vec::new(),
    };
    let mut points = Vec::with_capacity(n + 1);
    for p in initial {
        if p.len() != n {
            return Err(Error::InvalidSimplex(format!("initial trial has dimension {}, expected {n}", p.len())));
        }
        let (p, _) = runner
            .admit(p)
            .ok_or_else(|| Error::InvalidSimplex("initial trial outside the bounds".into()))?;
        points.push(p);
    }
    let mut residuals = Vec::with_capacity(n + 1);
    for p in &points {
        residuals.push(runner.evaluate(p)?);
    }
    let mut simplex = SecantSimplex::new(points, residuals, rank_tol)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut trace = Vec::new();
    let mut history = vec![runner.best.2];
    let mut repairs = 0usize;
    let tol = T::lit(opts.merit_tolerance);

    let stop = loop {
        if runner.best.2 <= tol {
            break StopReason::MeritTolerance;
        }
        if runner.iterations >= opts.max_iterations {
            break StopReason::MaxIterations;
        }
        if n == 0 {
            break StopReason::Trivial;
        }
        runner.iterations += 1;
        let iteration = runner.iterations;
        let merit_before = simplex.merits[0];
        let base_before = simplex.points[0].clone();

        let step = match wolfe_step(&simplex, rank_tol) {
            Ok(s) => {
                repairs = 0;
                s
            }
            Err(Error::DegenerateSimplex { rank, required }) => {
                repairs += 1;
                if repairs > 3 {
                    return Err(runner.fail(format!(
                        "degenerate simplex (rank {rank} of {required}) after 3 repairs"
                    )));
                }
                simplex = runner.repair(&simplex, &mut rng)?;
                trace.push(StepReport {
                    iteration,
                    new_point: simplex.points[n].clone(),
                    second_point: None,
                    q: Vec::new(),
                    merit_before,
                    merit_after: simplex.merits[0],
                    best_merit: runner.best.2,
                    step_norm: T::zero(),
                    action: StepAction::Repaired,
                    projected: false,
                    singular_values: Vec::new(),
                });
                continue;
            }
            Err(e) => return Err(e),
        };

        let Some((mut p_new, projected)) = runner.admit(step.p_new.clone()) else {
            break StopReason::LeftDomain;
        };
        // a trial that was evaluated before carries no new information
        let mut bisected = false;
        for _ in 0..10 {
            if !runner.visited.contains(&p_new) {
                break;
            }
            p_new = simplex.points[0]
                .iter()
                .zip(&p_new)
                .map(|(&b, &p)| b + T::lit(0.5) * (p - b))
                .collect();
            bisected = true;
        }
        if runner.visited.contains(&p_new) {
            break StopReason::StepVanished;
        }
        let mut h_new = runner.evaluate(&p_new)?;
        let mut f_new = norm_sq(&h_new);
        let mut action = if bisected {
            StepAction::Bisected
        } else {
            StepAction::ReplacedWorst
        };

        if opts.acceptance == Acceptance::RejectWorse && f_new > simplex.merits[0] {
            let base = simplex.points[0].clone();
            let mut shrunk = false;
            for _ in 0..10 {
                let candidate: Vec<T> = base
                    .iter()
                    .zip(&p_new)
                    .map(|(&b, &p)| b + T::lit(0.5) * (p - b))
                    .collect();
                if simplex.points.contains(&candidate) {
                    break;
                }
                p_new = candidate;
                h_new = runner.evaluate(&p_new)?;
                f_new = norm_sq(&h_new);
                if f_new <= simplex.merits[0] {
                    shrunk = true;
                    break;
                }
            }
            if !shrunk {
                break StopReason::Stagnation;
            }
            action = StepAction::Shrunk;
        }

        let mut second_point = None;
        let rebuilt = if opts.variant == SecantVariant::Modified && action != StepAction::Shrunk {
            match modified_step(&simplex, &p_new, &h_new, rank_tol)? {
                ModifiedStep::Fallback => {
                    action = StepAction::FallbackReplacedWorst;
                    None
                }
                ModifiedStep::Built {
                    p_second,
                    new_points,
                    ..
                } => {
                    second_point = Some(p_second);
                    let mut pts = vec![p_new.clone()];
                    let mut res = vec![h_new.clone()];
                    for p in new_points.into_iter().skip(1) {
                        let Some((p, _)) = runner.admit(p) else {
                            break;
                        };
                        if pts.contains(&p) {
                            break;
                        }
                        res.push(runner.evaluate(&p)?);
                        pts.push(p);
                    }
                    (pts.len() == n + 1).then(|| SecantSimplex::ordered(pts, res))
                }
            }
        } else {
            None
        };

        match rebuilt {
            Some(s) => {
                simplex = s;
                action = StepAction::Rebuilt;
            }
            None => {
                if matches!(action, StepAction::ReplacedWorst | StepAction::Bisected) && f_new > simplex.merits[n] {
                    action = StepAction::ReplacedWorstUphill;
                }
                let mut pts = simplex.points.clone();
                let mut res = simplex.residuals.clone();
                pts[n] = p_new.clone();
                res[n] = h_new;
                simplex = SecantSimplex::ordered(pts, res);
            }
        }

        let step_norm = norm(
            &p_new
                .iter()
                .zip(&base_before)
                .map(|(&a, &b)| a - b)
                .collect::<Vec<_>>(),
        );
        trace.push(StepReport {
            iteration,
            new_point: p_new,
            second_point,
            q: step.q,
            merit_before,
            merit_after: f_new,
            best_merit: runner.best.2,
            step_norm,
            action,
            projected,
            singular_values: step.singular_values,
        });

        history.push(runner.best.2);
        if history.len() > opts.stagnation_window {
            let old = history[history.len() - 1 - opts.stagnation_window];
            let new = runner.best.2;
            if old - new <= T::lit(opts.stagnation_tolerance) * old {
                break StopReason::Stagnation;
            }
        }
    };

    let (best, best_residual, best_merit) = runner.best;
    Ok(SecantRun {
        best,
        best_residual,
        best_merit,
        iterations: runner.iterations,
        evaluations: runner.evaluations,
        stop,
        trace,
    })
}

/// Solution of a model fit with either engine.
#[derive(Debug, Clone, PartialEq)]
pub struct SecantFit<T> {
    pub solution: ParameterVector<T>,
    pub merit: T,
    pub iterations: usize,
    /// Residual evaluations; under elimination each one is also one linear sub-solve.
    pub evaluations: usize,
    pub stop: StopReason,
    pub trace: Vec<StepReport<T>>,
}

struct FullSpace<'a, T: Scalar> {
    model: &'a ModelDefinition<T>,
    data: &'a DataSeries<T>,
}

impl<T: Scalar> ResidualMap<T> for FullSpace<'_, T> {
    fn bounds(&self) -> &[Bounds<T>] {
        self.model.space().bounds()
    }

    fn residual(&mut self, x: &[T]) -> Result<Vec<T>> {
        residual_values(self.model, x, self.data)
    }
}

struct Eliminated<'a, T: Scalar> {
    model: &'a ModelDefinition<T>,
    data: &'a DataSeries<T>,
    bounds: Vec<Bounds<T>>,
    rank_tol: T,
}

impl<T: Scalar> ResidualMap<T> for Eliminated<'_, T> {
    fn bounds(&self) -> &[Bounds<T>] {
        &self.bounds
    }

    fn residual(&mut self, x: &[T]) -> Result<Vec<T>> {
        let e = eliminate_linear(self.model, x, self.data, self.rank_tol)?;
        residual_values(self.model, e.parameters.values(), self.data)
    }
}

/// Secant iteration over the full parameter vector. `initial` holds `M + 1` full trials.
pub fn iterate<T: Scalar>(
    model: &ModelDefinition<T>,
    data: &DataSeries<T>,
    initial: Vec<Vec<T>>,
    opts: &SolverOptions,
) -> Result<SecantFit<T>> {
    let mut map = FullSpace { model, data };
    let run = solve(&mut map, initial, opts)?;
    Ok(SecantFit {
        solution: ParameterVector::new(model.space().clone(), run.best)?,
        merit: run.best_merit,
        iterations: run.iterations,
        evaluations: run.evaluations,
        stop: run.stop,
        trace: run.trace,
    })
}

/// Secant iteration over the nonlinear block only; every residual evaluation is preceded by
/// elimination of the linear block. `initial` holds `n − L + 1` nonlinear trials.
pub fn iterate_with_elimination<T: Scalar>(
    model: &ModelDefinition<T>,
    data: &DataSeries<T>,
    initial: Vec<Vec<T>>,
    opts: &SolverOptions,
) -> Result<SecantFit<T>> {
    opts.validate()?;
    let rank_tol = T::lit(opts.rank_tol);
    let space = model.space();
    let bounds: Vec<Bounds<T>> = space.split().nonlinear().iter().map(|&i| space.bounds()[i]).collect();
    if bounds.is_empty() {
        let e: Elimination<T> = eliminate_linear(model, &[], data, rank_tol)?;
        return Ok(SecantFit {
            solution: e.parameters,
            merit: e.section_value,
            iterations: 0,
            evaluations: 1,
            stop: StopReason::Trivial,
            trace: Vec::new(),
        });
    }
    let mut map = Eliminated {
        model,
        data,
        bounds,
        rank_tol,
    };
    let run = solve(&mut map, initial, opts)?;
    let e = eliminate_linear(model, &run.best, data, rank_tol)?;
    Ok(SecantFit {
        solution: e.parameters,
        merit: run.best_merit,
        iterations: run.iterations,
        // the final elimination that assembles the solution counts too
        evaluations: run.evaluations + 1,
        stop: run.stop,
        trace: run.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::lstsq_min_norm;
    use crate::model::{ParameterSpace, ParameterSplit, SamplingSchedule, TimeUnit};
    use crate::models::{scaled_square_model, exponential_model};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::sync::{Arc, Mutex};

    fn simplex_1d(h: impl Fn(f64) -> f64, p0: f64, p1: f64) -> SecantSimplex<f64> {
        SecantSimplex::new(vec![vec![p0], vec![p1]], vec![vec![h(p0)], vec![h(p1)]], 1e-12).unwrap()
    }

    #[test]
    fn affine_scalar_secant_is_exact() {
        let s = simplex_1d(|p| p - 3.0, 0.0, 1.0);
        // the better trial (p = 1) is the base
        assert_eq!(s.base(), &[1.0]);
        let step = wolfe_step(&s, 1e-12).unwrap();
        assert_abs_diff_eq!(step.p_new[0], 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(step.q[0], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn affine_system_solved_in_one_step() {
        // h(p) = B·p − d, m = 3, n = 2
        let b = DenseMatrix::from_rows(&[[1.0, 2.0], [0.5, -1.0], [3.0, 1.0]]).unwrap();
        let d = [1.0, 2.0, -0.5];
        let h = |p: &[f64]| -> Vec<f64> {
            b.mul_vec(p).unwrap().iter().zip(&d).map(|(x, y)| x - y).collect()
        };
        let pts = vec![vec![0.3, -0.2], vec![1.1, 0.4], vec![-0.5, 0.9]];
        let res = pts.iter().map(|p| h(p)).collect();
        let s = SecantSimplex::new(pts, res, 1e-12).unwrap();
        let step = wolfe_step(&s, 1e-12).unwrap();
        let direct = lstsq_min_norm(&b, &d, 1e-12).unwrap().solution;
        for (x, y) in step.p_new.iter().zip(&direct) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn coincident_trials_are_degenerate() {
        let r = SecantSimplex::new(vec![vec![1.0], vec![1.0]], vec![vec![0.5], vec![0.5]], 1e-12);
        assert_eq!(r, Err(Error::DegenerateSimplex { rank: 0, required: 1 }));
        // distinct points, identical residuals: A_r collapses
        let s = SecantSimplex::new(vec![vec![0.0], vec![1.0]], vec![vec![2.0], vec![2.0]], 1e-12).unwrap();
        assert_eq!(wolfe_step(&s, 1e-12), Err(Error::DegenerateSimplex { rank: 0, required: 1 }));
    }

    #[test]
    fn modified_step_on_the_quadratic() {
        let h = |p: f64| p * p - 4.0;
        let s = simplex_1d(h, 1.0, 3.0);
        let step = wolfe_step(&s, 1e-12).unwrap();
        // hand computation: base 1, A_p = −2, A_r = −8, q = −3/8
        assert_abs_diff_eq!(step.q[0], -0.375, epsilon = 1e-15);
        assert_abs_diff_eq!(step.p_new[0], 1.75, epsilon = 1e-15);
        let h_new = h(1.75);
        let ModifiedStep::Built { p_second, q2, new_points, .. } =
            modified_step(&s, &step.p_new, &[h_new], 1e-12).unwrap()
        else {
            panic!("expected a built step");
        };
        // q₂ = (h_0/h_new)·q
        assert_abs_diff_eq!(q2[0], (h(1.0) / h_new) * step.q[0], epsilon = 1e-12);
        assert_abs_diff_eq!(q2[0], -1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(p_second[0], 1.75 - 0.5625 / 2.4, epsilon = 1e-12);
        assert_eq!(new_points[0], vec![1.75]);
        assert_abs_diff_eq!(new_points[1][0], p_second[0], epsilon = 1e-15);
    }

    #[test]
    fn modified_step_at_a_root_and_with_zero_residual_components() {
        let s = simplex_1d(|p| p - 3.0, 0.0, 1.0);
        let ModifiedStep::Built { p_second, q2, zero_displacement, .. } =
            modified_step(&s, &[3.0], &[0.0], 1e-12).unwrap()
        else {
            panic!("expected a built step");
        };
        assert_eq!(q2, vec![0.0]);
        assert_eq!(p_second, vec![3.0]);
        assert_eq!(zero_displacement, vec![0]);

        let s = SecantSimplex::new(
            vec![vec![0.0], vec![1.0]],
            vec![vec![0.0, 1.0], vec![1.0, 3.0]],
            1e-12,
        )
        .unwrap();
        assert_eq!(modified_step(&s, &[0.5], &[0.1, 0.2], 1e-12).unwrap(), ModifiedStep::Fallback);
    }

    #[test]
    fn step_length_is_proportional_to_the_base_residual() {
        let mut ratios = Vec::new();
        for r in [-7.0, -2.5, 0.4, 3.3, 11.0, 25.0] {
            let s = simplex_1d(|p| p - r, 0.5, 1.5);
            let step = wolfe_step(&s, 1e-12).unwrap();
            let h0 = s.residuals()[0][0];
            ratios.push((step.p_new[0] - s.base()[0]).abs() / h0.abs());
        }
        for r in &ratios {
            assert_abs_diff_eq!(*r, ratios[0], epsilon = 1e-12);
        }
    }

    fn exp_data(p1: f64, p2: f64) -> DataSeries<f64> {
        let s = SamplingSchedule::new((1..=20).map(|i| i as f64 * 0.25).collect(), TimeUnit::Seconds).unwrap();
        let v = s.times().iter().map(|t| p1 * (-p2 * t).exp()).collect();
        DataSeries::new(s, v).unwrap()
    }

    #[test]
    fn full_space_round_trip() {
        let model = exponential_model(Bounds::new(0.01, 5.0).unwrap());
        let data = exp_data(3.0, 0.5);
        let opts = SolverOptions::default();
        let fit = iterate(&model, &data, simplex_around(&[2.0, 0.3], &[0.2, 0.05]), &opts).unwrap();
        assert!(fit.iterations <= 30, "{} iterations", fit.iterations);
        assert_abs_diff_eq!(fit.solution.get(0), 3.0, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.solution.get(1), 0.5, epsilon = 1e-6);
    }

    #[test]
    fn modified_variant_round_trip() {
        let model = exponential_model(Bounds::new(0.01, 5.0).unwrap());
        let data = exp_data(3.0, 0.5);
        let opts = SolverOptions {
            variant: SecantVariant::Modified,
            ..SolverOptions::default()
        };
        let fit = iterate(&model, &data, simplex_around(&[2.0, 0.3], &[0.2, 0.05]), &opts).unwrap();
        assert_abs_diff_eq!(fit.solution.get(0), 3.0, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.solution.get(1), 0.5, epsilon = 1e-6);
        assert!(fit.trace.iter().any(|s| s.action == StepAction::Rebuilt));
    }

    #[test]
    fn zero_iterations_return_the_best_initial_trial() {
        let model = exponential_model(Bounds::new(0.01, 5.0).unwrap());
        let data = exp_data(3.0, 0.5);
        let opts = SolverOptions {
            max_iterations: 0,
            ..SolverOptions::default()
        };
        let init = vec![vec![2.0, 0.3], vec![2.9, 0.3], vec![2.0, 0.6]];
        let fit = iterate(&model, &data, init.clone(), &opts).unwrap();
        assert_eq!(fit.stop, StopReason::MaxIterations);
        assert!(fit.trace.is_empty());
        let best = init
            .iter()
            .map(|p| {
                let pv = ParameterVector::new(model.space().clone(), p.clone()).unwrap();
                (p.clone(), crate::model::merit(&model, &pv, &data).unwrap())
            })
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert_eq!(fit.solution.values(), best.0.as_slice());
        assert_eq!(fit.merit, best.1);
    }

    #[test]
    fn elimination_engine_on_golden_and_toy() {
        let model = scaled_square_model(1.0);
        let s = SamplingSchedule::new(vec![1.0, 2.0, 3.0], TimeUnit::Dimensionless).unwrap();
        let data = DataSeries::new(s, vec![2.1, 7.8, 18.2]).unwrap();
        let fit = iterate_with_elimination(&model, &data, vec![vec![]], &SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(fit.solution.get(0), 2.011224, epsilon = 1e-6);
        assert_eq!(fit.stop, StopReason::Trivial);

        let model = exponential_model(Bounds::new(0.01, 5.0).unwrap());
        let data = exp_data(3.0, 0.5);
        let opts = SolverOptions::default();
        let elim = iterate_with_elimination(&model, &data, vec![vec![0.3], vec![0.35]], &opts).unwrap();
        assert_abs_diff_eq!(elim.solution.get(1), 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(elim.solution.get(0), 3.0, epsilon = 1e-6);
        let full = iterate(&model, &data, simplex_around(&[2.0, 0.3], &[0.2, 0.05]), &opts).unwrap();
        for (a, b) in elim.solution.values().iter().zip(full.solution.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn elimination_engine_only_evaluates_conditional_minimizers() {
        let seen: Arc<Mutex<Vec<Vec<f64>>>> = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        let space = ParameterSpace::new(
            vec!["p1".into(), "p2".into()],
            ParameterSplit::new(2, vec![0], vec![1]).unwrap(),
            vec![Bounds::unbounded(), Bounds::new(0.01, 5.0).unwrap()],
        )
        .unwrap();
        let model = ModelDefinition::new("hooked", space, move |t: f64, p: &[f64]| {
            log.lock().unwrap().push(p.to_vec());
            p[0] * (-p[1] * t).exp()
        })
        .with_basis(|t: f64, p2: &[f64], out: &mut [f64]| out[0] = (-p2[0] * t).exp());
        let data = exp_data(3.0, 0.5);
        let noisy = DataSeries::new(
            data.schedule().clone(),
            data.values().iter().enumerate().map(|(i, v)| v + 0.01 * ((i % 3) as f64 - 1.0)).collect(),
        )
        .unwrap();
        iterate_with_elimination(&model, &noisy, vec![vec![0.3], vec![0.35]], &SolverOptions::default()).unwrap();
        let calls = seen.lock().unwrap().clone();
        assert!(!calls.is_empty());
        for p in calls {
            let e = eliminate_linear(&model, &[p[1]], &noisy, 1e-12).unwrap();
            assert_eq!(p[0], e.linear[0]);
        }
    }

    #[test]
    fn reject_worse_keeps_best_merit_monotone() {
        let model = exponential_model(Bounds::new(0.01, 5.0).unwrap());
        let data = exp_data(3.0, 0.5);
        let opts = SolverOptions {
            acceptance: Acceptance::RejectWorse,
            ..SolverOptions::default()
        };
        let fit = iterate(&model, &data, simplex_around(&[1.0, 1.5], &[0.5, 0.5]), &opts).unwrap();
        for w in fit.trace.windows(2) {
            assert!(w[1].best_merit <= w[0].best_merit);
        }
        for s in &fit.trace {
            if s.action != StepAction::Repaired {
                assert!(s.merit_after <= s.merit_before);
            }
        }
    }

    #[test]
    fn projection_and_rejection_at_the_bounds() {
        let model = exponential_model(Bounds::new(0.4, 0.45).unwrap());
        let data = exp_data(3.0, 0.5);
        let fit = iterate_with_elimination(&model, &data, vec![vec![0.41], vec![0.42]], &SolverOptions::default()).unwrap();
        assert_eq!(fit.solution.get(1), 0.45);
        assert!(fit.trace.iter().any(|s| s.projected));
        let opts = SolverOptions {
            bounds: BoundsPolicy::Reject,
            ..SolverOptions::default()
        };
        let fit = iterate_with_elimination(&model, &data, vec![vec![0.41], vec![0.42]], &opts).unwrap();
        assert_eq!(fit.stop, StopReason::LeftDomain);
    }

    #[test]
    fn single_precision_secant() {
        let s = SecantSimplex::new(vec![vec![0.0f32], vec![1.0]], vec![vec![-3.0], vec![-2.0]], 1e-5).unwrap();
        let step = wolfe_step(&s, 1e-5).unwrap();
        assert!((step.p_new[0] - 3.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn scalar_step_matches_the_classical_secant(
            a in 0.2f64..5.0, b in -5.0f64..5.0, c in -3.0f64..3.0,
            p0 in -4.0f64..4.0, d in 0.1f64..2.0, quadratic in proptest::bool::ANY,
        ) {
            let h = |p: f64| if quadratic { a * p * p + b * p + c } else { a * p + b };
            let p1 = p0 + d;
            let (h0, h1) = (h(p0), h(p1));
            prop_assume!((h0 - h1).abs() > 1e-6 && h0 != 0.0 && h1 != 0.0);
            let s = simplex_1d(h, p0, p1);
            let step = wolfe_step(&s, 1e-12).unwrap();
            let classical = p1 - h1 * (p1 - p0) / (h1 - h0);
            prop_assert!((step.p_new[0] - classical).abs() <= 1e-12 * (1.0 + classical.abs()));
        }
    }
}
