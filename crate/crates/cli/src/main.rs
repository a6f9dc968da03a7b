use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tensolve::config::ExperimentConfig;
use tensolve::experiment::{run_experiment, WallClock};
use tensolve::{suites, verify, write_run, CliError};

#[derive(Parser)]
#[command(name = "tensolve", version, about = "Riemannian low-rank solvers for A X = F")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment; exit code 0 on convergence, 2 otherwise.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Print every trace row to stderr.
        #[arg(long)]
        verbose: bool,
    },
    /// Run a named experiment matrix.
    Suite {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(suites::SUITES))]
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the relative residual of a stored iterate and compare it
    /// with the last row of the neighbouring trace.
    Verify {
        iterate: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    // usage errors exit with 1; 2 is reserved for non-convergence
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<ExitCode, CliError> {
    match cmd {
        Cmd::Run { config, out, verbose } => {
            let cfg = ExperimentConfig::load(&config)?;
            let clock = WallClock::start();
            let res = run_experiment(&cfg, &clock, |r| {
                if verbose {
                    eprintln!("{:>5} {:>9.3}s  res {:.3e}  step {:.3e}  inner {:>4}  applies {}", r.iter, r.wall_time_s, r.rel_residual, r.step_size, r.inner_iters, r.operator_applies);
                }
            })?;
            let s = write_run(&out, &cfg, &res)?;
            println!("{}: {} iterations, residual {:.3e}, {:.2}s", s.status, s.iterations, s.final_residual, s.total_time_s);
            Ok(if s.converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Cmd::Suite { name, out } => {
            let results = suites::run_suite(&name, &out, |run, res| match res {
                Ok(o) => println!("{run}: {} iterations, residual {:.3e}", o.records.last().map_or(0, |r| r.iter), o.final_residual()),
                Err(e) => println!("{run}: error: {e}"),
            })?;
            let all_ok = results.iter().all(|(_, r)| r.as_ref().is_ok_and(|o| o.converged()));
            println!("wrote {}", out.join("aggregate.csv").display());
            Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Cmd::Verify { iterate, config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let v = verify(&iterate, &cfg)?;
            match v.recorded {
                Some(r) => println!("recomputed {:e}  recorded {:e}  |diff| {:.1e}", v.recomputed, r, (r - v.recomputed).abs()),
                None => println!("recomputed {:e} (no trace next to the iterate)", v.recomputed),
            }
            if v.matches() {
                Ok(ExitCode::SUCCESS)
            } else {
                Err(CliError::Trace(format!("final residual does not match the trace to {:e}", tensolve::Verification::TOL)))
            }
        }
    }
}

