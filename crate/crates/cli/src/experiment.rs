//! Builds a problem from a config and runs the requested solver.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tensolve_core::als::{als_solve, AlsConfig};
use tensolve_core::format::{Format, TtFormat, TuckerFormat};
use tensolve_core::newton_tt::{newton_tt_solve, precond_sd_solve, TtPrecond};
use tensolve_core::newton_tucker::newton_tucker_solve;
use tensolve_core::operators::{ExpSum, Operator};
use tensolve_core::solvers::{
    initial_guess, rank_adaptive, rgd, rhs_manufactured, rhs_random_rank_one, richardson, riemannian_richardson, Clock,
    IterRecord, Preconditioner, RankSchedule, SolveReport, SolverConfig, Status,
};
use tensolve_core::tt::TtTensor;
use tensolve_core::tucker::TuckerSum;

use crate::config::{ExperimentConfig, FormatKind, PrecondSpec, Problem, Rhs, SolverKind};
use crate::container::Iterate;
use crate::CliError;

/// Wall clock since construction.
pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::start()
    }
}

impl Clock for WallClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

pub struct RunOutput {
    pub records: Vec<IterRecord>,
    pub status: Status,
    pub iterate: Iterate,
    /// Last iteration of each rank stage (rank-adaptive runs only).
    pub stage_ends: Vec<usize>,
}

impl RunOutput {
    pub fn final_residual(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.rel_residual)
    }

    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }

    /// First iteration whose residual is at most `tol`.
    pub fn iterations_to(&self, tol: f64) -> Option<usize> {
        self.records.iter().find(|r| r.rel_residual <= tol).map(|r| r.iter)
    }
}

pub fn build_operator(cfg: &ExperimentConfig) -> Result<Operator, CliError> {
    Ok(match cfg.problem {
        Problem::PureLaplace => Operator::pure_laplace(cfg.d, cfg.n),
        Problem::NewtonPotential => Operator::newton_potential(cfg.d, cfg.n)?,
        Problem::AnisotropicDiffusion => Operator::anisotropic_diffusion(cfg.d, cfg.n, cfg.alpha),
    })
}

/// Independent random streams for the right-hand side and the start, so
/// runs differing only in rank share the same right-hand side.
fn streams(seed: u64) -> (ChaCha8Rng, ChaCha8Rng, ChaCha8Rng) {
    let mk = |s| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(s);
        r
    };
    (mk(0), mk(1), mk(2))
}

fn solver_config(cfg: &ExperimentConfig) -> SolverConfig {
    SolverConfig { max_iters: cfg.max_iters, tol: cfg.tol, residual_round: cfg.residual_round, ..SolverConfig::default() }
}

fn rhs<F: Format>(cfg: &ExperimentConfig, op: &Operator, rng: &mut ChaCha8Rng) -> Result<F::Full, CliError> {
    Ok(match cfg.rhs_spec()? {
        Rhs::RandomRank1 => rhs_random_rank_one::<F, _>(&op.dims(), rng)?,
        Rhs::Manufactured(k) => rhs_manufactured::<F, _>(op, &vec![k; cfg.rank_len()], rng)?.1,
    })
}

/// Right-hand side of a config, as used by `run` and `verify`.
pub enum RhsTensor {
    Tucker(TuckerSum),
    Tt(TtTensor),
}

pub fn build_rhs(cfg: &ExperimentConfig, op: &Operator) -> Result<RhsTensor, CliError> {
    let (mut r, _, _) = streams(cfg.seed);
    Ok(match cfg.format {
        FormatKind::Tucker => RhsTensor::Tucker(rhs::<TuckerFormat>(cfg, op, &mut r)?),
        FormatKind::Tt => RhsTensor::Tt(rhs::<TtFormat>(cfg, op, &mut r)?),
    })
}

/// `‖F − AX‖ / ‖F‖` recomputed from scratch through orthogonalized
/// representations (no cancellation).
pub fn relative_residual(cfg: &ExperimentConfig, it: &Iterate) -> Result<f64, CliError> {
    let op = build_operator(cfg)?;
    if it.dims() != op.dims() {
        return Err(CliError::Config(format!("iterate dims {:?} do not match the config {:?}", it.dims(), op.dims())));
    }
    match (build_rhs(cfg, &op)?, it) {
        (RhsTensor::Tucker(f), Iterate::Tucker(x)) => {
            let mut r = f.clone();
            r.add_scaled(-1.0, &op.apply_tucker(&x.clone().into())?)?;
            Ok(r.orthonormalize()?.core.norm() / f.orthonormalize()?.core.norm())
        }
        (RhsTensor::Tt(f), Iterate::Tt(x)) => {
            let r = f.lincomb(1.0, &op.apply_tt(x)?, -1.0)?;
            Ok(r.norm() / f.norm())
        }
        _ => Err(CliError::Config("iterate format does not match the config".into())),
    }
}

fn schedule(cfg: &ExperimentConfig) -> Option<RankSchedule> {
    cfg.adapt().map(|a| RankSchedule { start: a.start_rank, increment: a.increment, iters_per_rank: a.iters_per_rank, stages: a.stages })
}

fn drive<F: Format>(
    cfg: &ExperimentConfig,
    op: &Operator,
    x0: F::Point,
    pad_rng: &mut ChaCha8Rng,
    mut solve: impl FnMut(F::Point, &SolverConfig) -> SolveReport<F::Point>,
) -> (SolveReport<F::Point>, Vec<usize>) {
    let scfg = solver_config(cfg);
    match schedule(cfg) {
        Some(s) => rank_adaptive::<F, _>(&op.dims(), x0, &s, &scfg, pad_rng, solve),
        None => (solve(x0, &scfg), Vec::new()),
    }
}

fn start_ranks(cfg: &ExperimentConfig) -> Vec<usize> {
    match cfg.adapt() {
        Some(a) => vec![a.start_rank; cfg.rank_len()],
        None => cfg.ranks(),
    }
}

fn richardson_precond(op: &Operator, p: PrecondSpec) -> Result<Preconditioner, CliError> {
    Ok(match p {
        PrecondSpec::ExpSum(k) => Preconditioner::ExpSum(ExpSum::new(&op.laplace, k)?),
        _ => Preconditioner::Identity,
    })
}

/// Runs one experiment; `on_record` sees every trace row as it is produced
/// (rank-adaptive runs report per stage).
pub fn run_experiment(cfg: &ExperimentConfig, clock: &dyn Clock, mut on_record: impl FnMut(&IterRecord)) -> Result<RunOutput, CliError> {
    cfg.validate()?;
    let op = build_operator(cfg)?;
    let precond = cfg.precond_spec()?;
    let (mut rhs_rng, mut x_rng, mut pad_rng) = streams(cfg.seed);
    let ranks = start_ranks(cfg);
    let cb = &mut on_record;
    match cfg.format {
        FormatKind::Tucker => {
            let f = rhs::<TuckerFormat>(cfg, &op, &mut rhs_rng)?;
            let x0 = initial_guess::<TuckerFormat, _>(&op, &f, &ranks, &mut x_rng)?;
            let p = richardson_precond(&op, precond)?;
            let (rep, ends) = drive::<TuckerFormat>(cfg, &op, x0, &mut pad_rng, |x, c| match cfg.solver {
                SolverKind::Rgd => rgd::<TuckerFormat, _>(&op, &f, x, c, clock, &mut *cb),
                SolverKind::Richardson => richardson::<TuckerFormat, _>(&op, &f, x, &p, c, clock, &mut *cb),
                SolverKind::RiemannianRichardson => riemannian_richardson::<TuckerFormat, _>(&op, &f, x, &p, c, clock, &mut *cb),
                SolverKind::ApproxNewton => newton_tucker_solve(&op, &f, x, c, clock, &mut *cb),
                _ => unreachable!("rejected by validate"),
            });
            Ok(RunOutput { records: rep.records, status: rep.status, iterate: Iterate::Tucker(rep.x), stage_ends: ends })
        }
        FormatKind::Tt => {
            let f = rhs::<TtFormat>(cfg, &op, &mut rhs_rng)?;
            let x0 = initial_guess::<TtFormat, _>(&op, &f, &ranks, &mut x_rng)?;
            let p = richardson_precond(&op, precond)?;
            let tp = match precond {
                PrecondSpec::Overlap => TtPrecond::Overlap,
                PrecondSpec::Jacobi => TtPrecond::Jacobi,
                _ => TtPrecond::None,
            };
            let (rep, ends) = drive::<TtFormat>(cfg, &op, x0, &mut pad_rng, |x, c| match cfg.solver {
                SolverKind::Rgd => rgd::<TtFormat, _>(&op, &f, x, c, clock, &mut *cb),
                SolverKind::Richardson => richardson::<TtFormat, _>(&op, &f, x, &p, c, clock, &mut *cb),
                SolverKind::RiemannianRichardson => riemannian_richardson::<TtFormat, _>(&op, &f, x, &p, c, clock, &mut *cb),
                SolverKind::ApproxNewton => newton_tt_solve(&op, &f, x, tp, c, clock, &mut *cb),
                SolverKind::PrecondSd => precond_sd_solve(&op, &f, x, tp, c, clock, &mut *cb),
                SolverKind::Als => als_solve(&op, &f, x, c, &AlsConfig::default(), clock, &mut *cb),
            });
            Ok(RunOutput { records: rep.records, status: rep.status, iterate: Iterate::Tt(rep.x), stage_ends: ends })
        }
    }
}
