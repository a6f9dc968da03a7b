//! Riemannian gradient descent, truncated preconditioned Richardson and its
//! Riemannian variant, sharing one iteration loop with a linearized step
//! size and Armijo backtracking.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::format::Format;
use crate::operators::{ExpSum, Operator};

/// Source of wall-clock time in seconds.
pub trait Clock {
    fn now(&self) -> f64;
}

/// Clock that always reads zero (for `no_std` and reproducible tests).
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Target for `‖F − AX‖ / ‖F‖`.
    pub tol: f64,
    /// Relative truncation of the residual before preconditioning; `None`
    /// keeps it exact.
    pub residual_round: Option<f64>,
    pub armijo_c: f64,
    pub backtrack: f64,
    pub max_halvings: usize,
    /// Retraction inputs of rank above `rank_cap_factor · r` abort the run.
    pub rank_cap_factor: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-6,
            residual_round: Some(1e-5),
            armijo_c: 1e-4,
            backtrack: 0.5,
            max_halvings: 25,
            rank_cap_factor: 30,
        }
    }
}

/// One row of a convergence trace. Row 0 describes the initial guess.
#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub wall_time_s: f64,
    pub rel_residual: f64,
    pub max_rank: usize,
    pub step_size: f64,
    pub inner_iters: usize,
    /// Cumulative operator applications.
    pub operator_applies: usize,
    /// Largest rank of the tensor handed to the retraction in this step.
    pub retraction_rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Converged,
    MaxIters,
    LineSearchFailed,
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct SolveReport<P> {
    pub x: P,
    pub records: Vec<IterRecord>,
    pub status: Status,
}

impl<P> SolveReport<P> {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }

    pub fn iterations(&self) -> usize {
        self.records.last().map(|r| r.iter).unwrap_or(0)
    }

    pub fn final_residual(&self) -> f64 {
        self.records.last().map(|r| r.rel_residual).unwrap_or(f64::NAN)
    }
}

/// Search direction proposed by a method.
pub enum Direction<F: Format> {
    /// Tangent direction; the retraction input has rank at most `2r`.
    Tangent(F::Tangent),
    /// Direction in the ambient space; the retraction truncates `X + αZ`.
    Full(F::Full),
}

/// Initial step rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `α₀ = ⟨R, ξ⟩ / ⟨ξ, Aξ⟩`.
    Linearized,
    /// `α₀ = 1` (Newton-type methods).
    Unit,
}

/// What a method returns for one iteration.
pub struct Proposal<F: Format> {
    pub direction: Direction<F>,
    pub rule: StepRule,
    pub inner_iters: usize,
    pub operator_applies: usize,
}

/// State handed to a method at every iteration.
pub struct IterState<'a, F: Format> {
    pub op: &'a Operator,
    pub x: &'a F::Point,
    pub base: &'a Arc<F::Base>,
    /// `F − AX`, compressed.
    pub residual: &'a F::Full,
    /// `P_{T_X}(F − AX)`, the negative Riemannian gradient.
    pub gradient: &'a F::Tangent,
}

/// Preconditioner for the Richardson methods.
#[derive(Debug, Clone)]
pub enum Preconditioner {
    Identity,
    ExpSum(ExpSum),
}

fn maybe_round<F: Format>(cfg: &SolverConfig, r: &F::Full) -> Result<F::Full> {
    match cfg.residual_round {
        Some(eps) => F::round_tol(r, eps),
        None => Ok(r.clone()),
    }
}

/// `X + α·dir` as an exact tensor.
fn step_input<F: Format>(x: &F::Point, dir: &Direction<F>, alpha: f64) -> Result<F::Full> {
    match dir {
        Direction::Tangent(t) => Ok(F::affine(t, 1.0, alpha)),
        Direction::Full(z) => F::lincomb(1.0, &F::point_full(x), alpha, z),
    }
}

/// Runs the common loop: residual, method proposal, step size, Armijo
/// backtracking on `f(X) = ½⟨X, AX⟩ − ⟨X, F⟩` and retraction.
pub fn run<F: Format, C: Clock + ?Sized>(
    op: &Operator,
    rhs: &F::Full,
    x0: F::Point,
    cfg: &SolverConfig,
    clock: &C,
    mut method: impl FnMut(&IterState<'_, F>) -> Result<Proposal<F>>,
    mut on_record: impl FnMut(&IterRecord),
) -> SolveReport<F::Point> {
    let start = clock.now();
    let mut records = Vec::new();
    let mut x = x0;
    let ranks = F::ranks(&x);
    let r_max = ranks.iter().copied().max().unwrap_or(1);
    let mut applies = 0usize;
    let fnorm = match F::norm(rhs) {
        Ok(v) if v > 0.0 => v,
        Ok(_) => return SolveReport { x, records, status: Status::Failed("right-hand side is zero".into()) },
        Err(e) => return SolveReport { x, records, status: Status::Failed(alloc::format!("{e}")) },
    };

    let residual_of = |x: &F::Point, applies: &mut usize| -> Result<F::Full> {
        *applies += 1;
        let ax = F::apply(op, &F::point_full(x))?;
        F::compress(&F::lincomb(1.0, rhs, -1.0, &ax)?)
    };

    let mut residual = match residual_of(&x, &mut applies) {
        Ok(r) => r,
        Err(e) => return SolveReport { x, records, status: Status::Failed(alloc::format!("{e}")) },
    };
    let mut rel = F::norm(&residual).unwrap_or(f64::NAN) / fnorm;
    let row0 = IterRecord {
        iter: 0,
        wall_time_s: clock.now() - start,
        rel_residual: rel,
        max_rank: r_max,
        step_size: 0.0,
        inner_iters: 0,
        operator_applies: applies,
        retraction_rank: 0,
    };
    on_record(&row0);
    records.push(row0);

    let mut iter = 0;
    let status = loop {
        if rel <= cfg.tol {
            break Status::Converged;
        }
        if iter >= cfg.max_iters {
            break Status::MaxIters;
        }
        iter += 1;
        let outcome = (|| -> Result<Option<(F::Point, F::Full, f64, usize, usize)>> {
            let base = F::base(&x)?;
            let x_on = F::base_point(&base);
            let gradient = F::project(&base, &residual)?;
            let state = IterState { op, x: &x_on, base: &base, residual: &residual, gradient: &gradient };
            let prop = method(&state)?;
            applies += prop.operator_applies;
            let dir_full = match &prop.direction {
                Direction::Tangent(t) => F::tangent_full(t),
                Direction::Full(z) => F::compress(z)?,
            };
            let slope = F::inner(&residual, &dir_full)?;
            let mut alpha = match prop.rule {
                StepRule::Unit => 1.0,
                StepRule::Linearized => {
                    applies += 1;
                    let curv = F::inner(&dir_full, &F::apply(op, &dir_full)?)?;
                    if !(curv > 0.0) {
                        return Err(Error::NonpositiveCurvature(curv));
                    }
                    slope / curv
                }
            };
            if !(slope > 0.0) {
                // not a descent direction (or zero gradient at roundoff level)
                return Ok(None);
            }
            let direction = match prop.direction {
                Direction::Full(_) => Direction::Full(dir_full),
                d => d,
            };
            let cap = cfg.rank_cap_factor * r_max;
            for _ in 0..=cfg.max_halvings {
                let input = step_input::<F>(&x_on, &direction, alpha)?;
                let input_c = F::compress(&input)?;
                let in_rank = F::full_ranks(&input_c).into_iter().max().unwrap_or(0);
                if in_rank > cap {
                    return Err(Error::RankOverflow { rank: in_rank, cap });
                }
                let y = F::truncate(&input_c, &ranks)?;
                // f(Y) − f(X) = ½⟨D, AD⟩ − ⟨D, R_X⟩ with D = Y − X
                let dd = F::compress(&F::lincomb(1.0, &F::point_full(&y), -1.0, &F::point_full(&x_on))?)?;
                applies += 1;
                let ad = F::apply(op, &dd)?;
                let quad = F::inner(&dd, &ad)?;
                let lin = F::inner(&dd, &residual)?;
                let df = 0.5 * quad - lin;
                let noise = 1e3 * f64::EPSILON * (quad.abs() + lin.abs() + fnorm * F::norm(&dd)?);
                if df <= -cfg.armijo_c * alpha * slope + noise {
                    let r = residual_of(&y, &mut applies)?;
                    return Ok(Some((y, r, alpha, prop.inner_iters, in_rank)));
                }
                alpha *= cfg.backtrack;
            }
            Ok(None)
        })();
        match outcome {
            Ok(Some((y, r, alpha, inner, in_rank))) => {
                x = y;
                residual = r;
                rel = F::norm(&residual).unwrap_or(f64::NAN) / fnorm;
                let rec = IterRecord {
                    iter,
                    wall_time_s: clock.now() - start,
                    rel_residual: rel,
                    max_rank: F::ranks(&x).into_iter().max().unwrap_or(0),
                    step_size: alpha,
                    inner_iters: inner,
                    operator_applies: applies,
                    retraction_rank: in_rank,
                };
                on_record(&rec);
                records.push(rec);
            }
            Ok(None) => break Status::LineSearchFailed,
            Err(e) => break Status::Failed(alloc::format!("{e}")),
        }
    };
    SolveReport { x, records, status }
}

/// Riemannian gradient descent: `ξ = P_{T_X}(F − AX)`.
pub fn rgd<F: Format, C: Clock + ?Sized>(
    op: &Operator,
    rhs: &F::Full,
    x0: F::Point,
    cfg: &SolverConfig,
    clock: &C,
    on_record: impl FnMut(&IterRecord),
) -> SolveReport<F::Point> {
    run::<F, C>(
        op,
        rhs,
        x0,
        cfg,
        clock,
        |s| Ok(Proposal { direction: Direction::Tangent(s.gradient.clone()), rule: StepRule::Linearized, inner_iters: 0, operator_applies: 0 }),
        on_record,
    )
}

/// Truncated preconditioned Richardson: `X⁺ = R(X + α P⁻¹ R̃)` where `R̃` is
/// the rounded residual.
pub fn richardson<F: Format, C: Clock + ?Sized>(
    op: &Operator,
    rhs: &F::Full,
    x0: F::Point,
    p: &Preconditioner,
    cfg: &SolverConfig,
    clock: &C,
    on_record: impl FnMut(&IterRecord),
) -> SolveReport<F::Point> {
    run::<F, C>(
        op,
        rhs,
        x0,
        cfg,
        clock,
        |s| {
            let r = maybe_round::<F>(cfg, s.residual)?;
            let z = match p {
                Preconditioner::Identity => r,
                Preconditioner::ExpSum(e) => {
                    let mut acc = F::precond_term(e, 0, &r)?;
                    for j in 1..e.terms() {
                        acc = F::lincomb(1.0, &acc, 1.0, &F::precond_term(e, j, &r)?)?;
                    }
                    acc
                }
            };
            Ok(Proposal { direction: Direction::Full(z), rule: StepRule::Linearized, inner_iters: 0, operator_applies: 0 })
        },
        on_record,
    )
}

/// `Σ_j P_{T_X}(ω_j ⊗ exp(−α_j L_μ) R)`, accumulated term by term so the
/// `k`-fold rank of the full preconditioned residual never materializes.
pub fn projected_precond<F: Format>(base: &Arc<F::Base>, p: &Preconditioner, r: &F::Full) -> Result<F::Tangent> {
    match p {
        Preconditioner::Identity => F::project(base, r),
        Preconditioner::ExpSum(e) => {
            let mut acc = F::tangent_zero(base);
            for j in 0..e.terms() {
                let t = F::project(base, &F::precond_term(e, j, r)?)?;
                F::tangent_axpy(&mut acc, 1.0, &t)?;
            }
            Ok(acc)
        }
    }
}

/// Riemannian truncated preconditioned Richardson:
/// `X⁺ = R(X + α P_{T_X} P⁻¹ R̃)`.
pub fn riemannian_richardson<F: Format, C: Clock + ?Sized>(
    op: &Operator,
    rhs: &F::Full,
    x0: F::Point,
    p: &Preconditioner,
    cfg: &SolverConfig,
    clock: &C,
    on_record: impl FnMut(&IterRecord),
) -> SolveReport<F::Point> {
    run::<F, C>(
        op,
        rhs,
        x0,
        cfg,
        clock,
        |s| {
            let r = maybe_round::<F>(cfg, s.residual)?;
            let eta = match (p, cfg.residual_round) {
                // unrounded, unpreconditioned: reuse the gradient bit for bit
                (Preconditioner::Identity, None) => s.gradient.clone(),
                _ => projected_precond::<F>(s.base, p, &r)?,
            };
            Ok(Proposal { direction: Direction::Tangent(eta), rule: StepRule::Linearized, inner_iters: 0, operator_applies: 0 })
        },
        on_record,
    )
}

/// Seeded random starting point scaled to `‖F‖ / ‖A‖₁`.
pub fn initial_guess<F: Format, R: rand::Rng + ?Sized>(
    op: &Operator,
    rhs: &F::Full,
    ranks: &[usize],
    rng: &mut R,
) -> Result<F::Point> {
    let x = F::random_point(&op.dims(), ranks, rng)?;
    let target = F::norm(rhs)? / op.norm1_bound();
    let cur = F::norm(&F::point_full(&x))?;
    Ok(F::scale_point(x, target / cur))
}

/// Random rank-one right-hand side of unit norm.
pub fn rhs_random_rank_one<F: Format, R: rand::Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<F::Full> {
    let ones = alloc::vec![1; if F::name() == "tt" { dims.len() - 1 } else { dims.len() }];
    let x = F::random_point(dims, &ones, rng)?;
    let nrm = F::norm(&F::point_full(&x))?;
    Ok(F::point_full(&F::scale_point(x, 1.0 / nrm)))
}

/// `F = A X★` for a random `X★` of the given ranks; returns both.
pub fn rhs_manufactured<F: Format, R: rand::Rng + ?Sized>(
    op: &Operator,
    ranks: &[usize],
    rng: &mut R,
) -> Result<(F::Point, F::Full)> {
    let x = F::random_point(&op.dims(), ranks, rng)?;
    let f = F::apply(op, &F::point_full(&x))?;
    Ok((x, f))
}

/// Raises the ranks of `x` by adding a random tensor of relative size
/// `1e-10` and truncating; the new directions start out negligible but keep
/// the point on the larger manifold.
pub fn pad_ranks<F: Format, R: rand::Rng + ?Sized>(x: &F::Point, dims: &[usize], ranks: &[usize], rng: &mut R) -> Result<F::Point> {
    let xf = F::point_full(x);
    let y = F::random_point(dims, ranks, rng)?;
    let yf = F::point_full(&y);
    let scale = 1e-10 * F::norm(&xf)? / F::norm(&yf)?;
    F::truncate(&F::compress(&F::lincomb(1.0, &xf, scale, &yf)?)?, ranks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankSchedule {
    pub start: usize,
    pub increment: usize,
    pub iters_per_rank: usize,
    pub stages: usize,
}

impl RankSchedule {
    pub fn rank(&self, stage: usize) -> usize {
        self.start + stage * self.increment
    }
}

/// Successive fixed-rank runs of increasing rank, each warm-started from the
/// previous result. `solve` is called with the padded iterate and the stage
/// configuration; the returned report concatenates the stage traces with
/// running iteration and operator counts. The second value lists the last
/// iteration index of every completed stage.
pub fn rank_adaptive<F: Format, R: rand::Rng + ?Sized>(
    dims: &[usize],
    x0: F::Point,
    schedule: &RankSchedule,
    cfg: &SolverConfig,
    rng: &mut R,
    mut solve: impl FnMut(F::Point, &SolverConfig) -> SolveReport<F::Point>,
) -> (SolveReport<F::Point>, Vec<usize>) {
    let stage_cfg = SolverConfig { max_iters: schedule.iters_per_rank, ..cfg.clone() };
    let mut records: Vec<IterRecord> = Vec::new();
    let mut ends = Vec::new();
    let mut x = x0;
    let mut status = Status::MaxIters;
    for stage in 0..schedule.stages {
        if stage > 0 {
            let ranks = alloc::vec![schedule.rank(stage); F::ranks(&x).len()];
            x = match pad_ranks::<F, R>(&x, dims, &ranks, rng) {
                Ok(y) => y,
                Err(e) => {
                    status = Status::Failed(alloc::format!("{e}"));
                    break;
                }
            };
        }
        let rep = solve(x, &stage_cfg);
        let (it0, ap0, t0) = records.last().map_or((0, 0, 0.0), |r| (r.iter, r.operator_applies, r.wall_time_s));
        // row 0 of later stages repeats the warm start and is dropped
        for rec in rep.records.iter().skip(if stage == 0 { 0 } else { 1 }) {
            let mut rec = rec.clone();
            rec.iter += it0;
            rec.operator_applies += ap0;
            rec.wall_time_s += t0;
            records.push(rec);
        }
        ends.push(records.last().map_or(0, |r| r.iter));
        x = rep.x;
        status = rep.status;
        if matches!(status, Status::Failed(_)) {
            break;
        }
    }
    if status == Status::MaxIters && records.last().is_some_and(|r| r.rel_residual <= cfg.tol) {
        status = Status::Converged;
    }
    (SolveReport { x, records, status }, ends)
}

/// `f(X) = ½⟨X, AX⟩ − ⟨X, F⟩` (diagnostics; suffers from cancellation near
/// the minimizer, so the solver itself never uses it).
pub fn objective<F: Format>(op: &Operator, rhs: &F::Full, x: &F::Point) -> Result<f64> {
    let xf = F::point_full(x);
    Ok(0.5 * F::inner(&xf, &F::apply(op, &xf)?)? - F::inner(&xf, rhs)?)
}
