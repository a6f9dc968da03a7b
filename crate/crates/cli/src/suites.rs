//! Scaled experiment matrices. Each suite writes one sub-directory per run
//! plus `aggregate.csv`.

use std::path::Path;

use crate::config::{ExperimentConfig, FormatKind, Problem, RankAdapt, RankSpec, SolverKind};
use crate::experiment::{run_experiment, RunOutput, WallClock};
use crate::{write_run, CliError};

pub const SUITES: [&str; 5] = ["precond_sweep", "newton_vs_als", "quad_conv", "mesh_dep", "rank_adapt"];

#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub name: String,
    pub config: ExperimentConfig,
}

fn base(problem: Problem, format: FormatKind, d: usize, n: usize, r: usize, rhs: &str, solver: SolverKind, precond: &str) -> ExperimentConfig {
    ExperimentConfig {
        problem,
        format,
        d,
        n,
        rank: RankSpec::Uniform(r),
        alpha: 0.25,
        rhs: rhs.into(),
        solver,
        preconditioner: precond.into(),
        tol: 1e-6,
        max_iters: 100,
        seed: 1,
        residual_round: Some(1e-5),
        rank_adapt: None,
    }
}

/// Newton potential, Tucker, `d = 3`, `n = 100`, `r = 15`: both Richardson
/// variants with `k ∈ {5, 7, 10}` exp-sum terms.
pub fn precond_sweep() -> Vec<SuiteRun> {
    let mut runs = Vec::new();
    for solver in [SolverKind::RiemannianRichardson, SolverKind::Richardson] {
        for k in [5, 7, 10] {
            let mut c = base(Problem::NewtonPotential, FormatKind::Tucker, 3, 100, 15, "random_rank1", solver, &format!("expsum:{k}"));
            c.tol = 1e-4;
            c.max_iters = 40;
            let tag = if solver == SolverKind::Richardson { "richardson" } else { "riemannian_richardson" };
            runs.push(SuiteRun { name: format!("{tag}_k{k}"), config: c });
        }
    }
    runs
}

/// Newton potential, TT, `d = 10`, `n = 60`, `r = 5`.
pub fn newton_vs_als() -> Vec<SuiteRun> {
    let mk = |solver, precond: &str, max_iters| {
        let mut c = base(Problem::NewtonPotential, FormatKind::Tt, 10, 60, 5, "random_rank1", solver, precond);
        c.tol = 1e-4;
        c.max_iters = max_iters;
        c
    };
    vec![
        SuiteRun { name: "approx_newton".into(), config: mk(SolverKind::ApproxNewton, "overlap", 40) },
        // one ALS iteration is one micro-step; a full sweep has 2(d − 1)
        SuiteRun { name: "als".into(), config: mk(SolverKind::Als, "none", 18 * 20) },
        SuiteRun { name: "precond_sd".into(), config: mk(SolverKind::PrecondSd, "overlap", 150) },
    ]
}

/// Zero-residual Tucker runs at `d = 3`, `n = 200`, `r = 4`.
pub fn quad_conv() -> Vec<SuiteRun> {
    [(Problem::PureLaplace, "laplace"), (Problem::AnisotropicDiffusion, "diffusion")]
        .into_iter()
        .map(|(p, tag)| {
            let mut c = base(p, FormatKind::Tucker, 3, 200, 4, "manufactured_rank_r:4", SolverKind::ApproxNewton, "none");
            c.tol = 1e-12;
            c.max_iters = 30;
            SuiteRun { name: tag.into(), config: c }
        })
        .collect()
}

pub const MESH_SIZES: [usize; 3] = [60, 120, 240];
pub const MESH_SEEDS: u64 = 10;

/// Anisotropic diffusion, TT, `d = 10`, `r = 3`, manufactured rank-3
/// right-hand side, iterations to `1e-6` over a mesh sweep.
pub fn mesh_dep() -> Vec<SuiteRun> {
    let mut runs = Vec::new();
    for n in MESH_SIZES {
        for seed in 0..MESH_SEEDS {
            let mut c = base(Problem::AnisotropicDiffusion, FormatKind::Tt, 10, n, 3, "manufactured_rank_r:3", SolverKind::ApproxNewton, "overlap");
            c.max_iters = 60;
            c.seed = seed;
            runs.push(SuiteRun { name: format!("n{n}_seed{seed}"), config: c });
        }
    }
    runs
}

pub const ADAPT_RANKS: [usize; 4] = [1, 6, 11, 16];
pub const ADAPT_ITERS: usize = 10;

/// Anisotropic diffusion, TT, `d = 10`, `n = 60`: warm-started ranks
/// 1, 6, 11, 16 with ten iterations each, and fixed-rank runs given the same
/// total number of iterations as the adaptive run has spent at the end of
/// the corresponding stage.
pub fn rank_adapt() -> Vec<SuiteRun> {
    let mk = |r| {
        let mut c = base(Problem::AnisotropicDiffusion, FormatKind::Tt, 10, 60, r, "random_rank1", SolverKind::ApproxNewton, "overlap");
        c.tol = 1e-12;
        c
    };
    let mut adaptive = mk(ADAPT_RANKS[ADAPT_RANKS.len() - 1]);
    adaptive.rank_adapt = Some(RankAdapt { enabled: true, start_rank: 1, increment: 5, iters_per_rank: ADAPT_ITERS, stages: ADAPT_RANKS.len() });
    adaptive.max_iters = ADAPT_ITERS * ADAPT_RANKS.len();
    let mut runs = vec![SuiteRun { name: "adaptive".into(), config: adaptive }];
    for (i, r) in ADAPT_RANKS.into_iter().enumerate() {
        let mut c = mk(r);
        c.max_iters = ADAPT_ITERS * (i + 1);
        runs.push(SuiteRun { name: format!("fixed_r{r}"), config: c });
    }
    runs
}

pub fn suite(name: &str) -> Result<Vec<SuiteRun>, CliError> {
    Ok(match name {
        "precond_sweep" => precond_sweep(),
        "newton_vs_als" => newton_vs_als(),
        "quad_conv" => quad_conv(),
        "mesh_dep" => mesh_dep(),
        "rank_adapt" => rank_adapt(),
        _ => return Err(CliError::Config(format!("unknown suite '{name}' (one of {})", SUITES.join(", ")))),
    })
}

/// Runs every configuration of a suite; failures are recorded and the suite
/// continues.
pub fn run_suite(name: &str, out: &Path, mut progress: impl FnMut(&str, &Result<RunOutput, CliError>)) -> Result<Vec<(SuiteRun, Result<RunOutput, CliError>)>, CliError> {
    let runs = suite(name)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let mut results = Vec::new();
    for run in runs {
        let clock = WallClock::start();
        let res = run_experiment(&run.config, &clock, |_| {});
        if let Ok(o) = &res {
            write_run(&out.join(&run.name), &run.config, o)?;
        }
        progress(&run.name, &res);
        results.push((run, res));
    }
    write_aggregate(&out.join("aggregate.csv"), &results)?;
    Ok(results)
}

fn write_aggregate(path: &Path, results: &[(SuiteRun, Result<RunOutput, CliError>)]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Io(e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record([
        "run",
        "status",
        "iterations",
        "iterations_to_tol",
        "final_residual",
        "operator_applies",
        "max_retraction_rank",
        "total_time_s",
    ])
    .map_err(io)?;
    for (run, res) in results {
        let row = match res {
            Ok(o) => {
                let s = crate::trace::Summary::new(&run.config.hash(), &o.status, &o.records, &o.stage_ends);
                vec![
                    run.name.clone(),
                    s.status,
                    s.iterations.to_string(),
                    o.iterations_to(run.config.tol).map_or(String::new(), |k| k.to_string()),
                    format!("{:e}", s.final_residual),
                    s.operator_applies.to_string(),
                    s.max_retraction_rank.to_string(),
                    format!("{:.3}", s.total_time_s),
                ]
            }
            Err(e) => vec![run.name.clone(), format!("error: {e}"), String::new(), String::new(), String::new(), String::new(), String::new(), String::new()],
        };
        w.write_record(row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}
