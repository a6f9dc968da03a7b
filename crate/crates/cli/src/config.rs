//! Experiment configuration (JSON). Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    NewtonPotential,
    AnisotropicDiffusion,
    PureLaplace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatKind {
    Tucker,
    Tt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Rgd,
    Richardson,
    RiemannianRichardson,
    ApproxNewton,
    PrecondSd,
    Als,
}

/// Scalar rank (all modes) or one rank per mode / TT bond.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RankSpec {
    Uniform(usize),
    PerMode(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rhs {
    RandomRank1,
    Manufactured(usize),
}

impl Rhs {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        if s == "random_rank1" {
            return Ok(Rhs::RandomRank1);
        }
        if let Some(k) = s.strip_prefix("manufactured_rank_r:") {
            let k: usize = k.parse().map_err(|_| CliError::Config(format!("bad manufactured rank in '{s}'")))?;
            if k == 0 {
                return Err(CliError::Config("manufactured rank must be positive".into()));
            }
            return Ok(Rhs::Manufactured(k));
        }
        Err(CliError::Config(format!("unknown rhs '{s}' (expected random_rank1 or manufactured_rank_r:<k>)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecondSpec {
    None,
    ExpSum(usize),
    Overlap,
    Jacobi,
}

impl PrecondSpec {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "none" => return Ok(PrecondSpec::None),
            "overlap" => return Ok(PrecondSpec::Overlap),
            "jacobi" => return Ok(PrecondSpec::Jacobi),
            _ => {}
        }
        if let Some(k) = s.strip_prefix("expsum:") {
            let k: usize = k.parse().map_err(|_| CliError::Config(format!("bad term count in '{s}'")))?;
            if k == 0 {
                return Err(CliError::Config("expsum needs at least one term".into()));
            }
            return Ok(PrecondSpec::ExpSum(k));
        }
        Err(CliError::Config(format!("unknown preconditioner '{s}' (none, expsum:<k>, overlap, jacobi)")))
    }
}

fn default_alpha() -> f64 {
    0.25
}
fn default_tol() -> f64 {
    1e-6
}
fn default_max_iters() -> usize {
    100
}
fn default_precond() -> String {
    "none".into()
}
fn default_increment() -> usize {
    5
}
fn default_iters_per_rank() -> usize {
    10
}
fn default_start_rank() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankAdapt {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_start_rank")]
    pub start_rank: usize,
    #[serde(default = "default_increment")]
    pub increment: usize,
    #[serde(default = "default_iters_per_rank")]
    pub iters_per_rank: usize,
    /// Number of rank stages, including the first.
    pub stages: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub format: FormatKind,
    pub d: usize,
    pub n: usize,
    pub rank: RankSpec,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub rhs: String,
    pub solver: SolverKind,
    #[serde(default = "default_precond")]
    pub preconditioner: String,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub seed: u64,
    /// Relative rounding of the residual before preconditioning (Richardson);
    /// `null` disables it.
    #[serde(default = "default_round")]
    pub residual_round: Option<f64>,
    #[serde(default)]
    pub rank_adapt: Option<RankAdapt>,
}

fn default_round() -> Option<f64> {
    Some(1e-5)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical (compact) JSON serialization.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn rhs_spec(&self) -> Result<Rhs, CliError> {
        Rhs::parse(&self.rhs)
    }

    pub fn precond_spec(&self) -> Result<PrecondSpec, CliError> {
        PrecondSpec::parse(&self.preconditioner)
    }

    /// Number of rank parameters: `d` for Tucker, `d − 1` for TT.
    pub fn rank_len(&self) -> usize {
        match self.format {
            FormatKind::Tucker => self.d,
            FormatKind::Tt => self.d.saturating_sub(1),
        }
    }

    pub fn ranks(&self) -> Vec<usize> {
        match &self.rank {
            RankSpec::Uniform(r) => vec![*r; self.rank_len()],
            RankSpec::PerMode(v) => v.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.d < 2 {
            return bad(format!("d = {} (need d >= 2)", self.d));
        }
        if self.n < 2 {
            return bad(format!("n = {} (need n >= 2)", self.n));
        }
        if self.problem == Problem::NewtonPotential && self.n % 2 == 1 {
            return bad("newton_potential needs even n (odd n puts a grid point on the singularity)".into());
        }
        let ranks = self.ranks();
        if ranks.len() != self.rank_len() {
            return bad(format!("expected {} ranks, got {}", self.rank_len(), ranks.len()));
        }
        if ranks.iter().any(|&r| r == 0 || r > self.n) {
            return bad(format!("ranks {ranks:?} must lie in 1..={}", self.n));
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive".into());
        }
        if !self.alpha.is_finite() {
            return bad("alpha must be finite".into());
        }
        if let Some(eps) = self.residual_round {
            if !(eps > 0.0 && eps < 1.0) {
                return bad("residual_round must lie in (0, 1)".into());
            }
        }
        self.rhs_spec()?;
        let p = self.precond_spec()?;
        use SolverKind::*;
        match (self.format, self.solver, p) {
            (_, Rgd, PrecondSpec::None) => {}
            (_, Richardson | RiemannianRichardson, PrecondSpec::None | PrecondSpec::ExpSum(_)) => {}
            (FormatKind::Tucker, ApproxNewton, PrecondSpec::None) => {}
            (FormatKind::Tt, ApproxNewton, PrecondSpec::None | PrecondSpec::Overlap | PrecondSpec::Jacobi) => {}
            (FormatKind::Tt, PrecondSd, PrecondSpec::Overlap | PrecondSpec::Jacobi) => {}
            (FormatKind::Tt, Als, PrecondSpec::None) => {}
            (f, s, p) => return bad(format!("unsupported combination: format {f:?}, solver {s:?}, preconditioner {p:?}")),
        }
        if let Some(ra) = &self.rank_adapt {
            if ra.enabled {
                if ra.stages == 0 || ra.iters_per_rank == 0 || ra.start_rank == 0 {
                    return bad("rank_adapt needs positive start_rank, iters_per_rank and stages".into());
                }
                if self.solver == Als {
                    return bad("rank_adapt is not available for ALS".into());
                }
                if ra.start_rank + (ra.stages - 1) * ra.increment > self.n {
                    return bad("rank_adapt schedule exceeds n".into());
                }
            }
        }
        Ok(())
    }

    pub fn adapt(&self) -> Option<&RankAdapt> {
        self.rank_adapt.as_ref().filter(|r| r.enabled)
    }
}
