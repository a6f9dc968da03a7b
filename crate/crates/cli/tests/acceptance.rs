//! Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
//! as arguments to run a subset (`cargo test --test acceptance -- 3 8`).

use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use tensolve::config::ExperimentConfig;
use tensolve::experiment::{run_experiment, RunOutput, WallClock};
use tensolve::suites::{self, SuiteRun};
use tensolve::trace;
use tensolve_core::linalg::{singular_values, sym_eig};
use tensolve_core::newton_tt::{hessian_apply, JacobiPrecond, OverlapPrecond};
use tensolve_core::newton_tucker::solve_approx_newton_tucker;
use tensolve_core::operators::LaplaceLike;
use tensolve_core::solvers::IterRecord;
use tensolve_core::tensor::{DenseTensor, Mat};
use tensolve_core::{tt, tucker};

type Vector = nalgebra::DVector<f64>;

// pinned tolerances
const GEOM_TOL: f64 = 1e-10;
const GAUGE_TOL: f64 = 1e-12;
const SLOPE_TOL: f64 = 0.1;
const TUCKER_ORACLE_TOL: f64 = 1e-9;
const TT_ORACLE_TOL: f64 = 1e-10;
const QUAD_C: f64 = 100.0;
const QUAD_MIN_STEPS: usize = 3;
const QUAD_FLOOR: f64 = 1e-12;
const LINEAR_SPREAD: f64 = 5.0;
const MESH_RATIO: f64 = 2.0;
const ADAPT_FACTOR: f64 = 2.0;
const VERIFY_TOL: f64 = 1e-10;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn randn_tensor(dims: &[usize], rng: &mut ChaCha8Rng) -> DenseTensor {
    DenseTensor::from_fn(dims, |_| StandardNormal.sample(rng))
}

fn vec_of(t: &DenseTensor) -> Vector {
    Vector::from_column_slice(t.data())
}

fn rel(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Orthonormal basis of the range of a symmetric projector given densely.
fn range_basis(p: &Mat) -> Mat {
    let (q, vals) = sym_eig(p).expect("symmetric");
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 0.5).collect();
    Mat::from_fn(p.nrows(), keep.len(), |i, j| q[(i, keep[j])])
}

/// Dense matrix with columns `f(e_k)` over all unit tensors.
fn dense_map(dims: &[usize], f: impl Fn(&DenseTensor) -> Vector) -> Mat {
    let total: usize = dims.iter().product();
    let mut m = Mat::zeros(total, total);
    for k in 0..total {
        let mut e = DenseTensor::zeros(dims);
        e.data_mut()[k] = 1.0;
        m.set_column(k, &f(&e));
    }
    m
}

/// Smallest nonzero singular value: the curvature radius of the fixed-rank
/// manifold, so steps are measured relative to it.
fn smallest_sv(m: &Mat) -> f64 {
    let s = singular_values(m);
    let top = s.iter().cloned().fold(0.0, f64::max);
    s.into_iter().filter(|&v| v > 1e-12 * top).fold(f64::INFINITY, f64::min)
}

fn slope(errs: &[f64], ts: &[f64]) -> f64 {
    (errs[0].ln() - errs[errs.len() - 1].ln()) / (ts[0].ln() - ts[ts.len() - 1].ln())
}

// ---------------------------------------------------------------- 1

fn tucker_geometry(n: &[usize], r: &[usize], seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let core = randn_tensor(r, &mut rng);
    let factors = n.iter().zip(r).map(|(&n, &r)| Mat::from_fn(n, r, |_, _| StandardNormal.sample(&mut rng))).collect();
    let p = Arc::new(tucker::TuckerPoint::from_tensor(&tucker::TuckerTensor::new(core, factors).unwrap()).unwrap());
    let z = randn_tensor(n, &mut rng);
    let xi = tucker::project_dense(&p, &z).map_err(|e| e.to_string())?;
    let pz = xi.to_sum().to_dense().unwrap();
    let again = tucker::project_dense(&p, &pz).unwrap().to_sum().to_dense().unwrap();
    let idem = rel(&vec_of(&again), &vec_of(&pz));
    let mut rest = z.clone();
    rest.axpy(-1.0, &pz).unwrap();
    let pyth = (z.norm().powi(2) - pz.norm().powi(2) - rest.norm().powi(2)).abs() / z.norm().powi(2);
    let gauge = xi.gauge_defect();
    let dense = p.tensor().to_dense().unwrap();
    let reach = (0..n.len()).map(|m| smallest_sv(&dense.matricize(m).unwrap())).fold(f64::INFINITY, f64::min);
    let step = xi.clone().scaled(reach / xi.norm());
    let ts = [1e-1, 1e-2, 1e-3];
    let errs: Vec<f64> = ts
        .iter()
        .map(|&t| {
            let y = tucker::retract(&step, t).unwrap().to_dense().unwrap();
            let mut d = step.affine_sum(1.0, t).to_dense().unwrap();
            d.axpy(-1.0, &y).unwrap();
            d.norm()
        })
        .collect();
    let s = slope(&errs, &ts);
    if idem > GEOM_TOL || pyth > GEOM_TOL || gauge > GAUGE_TOL || (s - 2.0).abs() > SLOPE_TOL {
        return Err(format!("tucker n={n:?} r={r:?}: idem {idem:.1e} pyth {pyth:.1e} gauge {gauge:.1e} slope {s:.3}"));
    }
    Ok(s)
}

fn tt_geometry(n: &[usize], r: &[usize], seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = Arc::new(tt::TtPoint::new(&tt::TtTensor::random(n, r, &mut rng).unwrap()).unwrap());
    let z = randn_tensor(n, &mut rng);
    let xi = tt::project_dense(&p, &z).map_err(|e| e.to_string())?;
    let pz = xi.to_tt().to_dense().unwrap();
    let again = tt::project_dense(&p, &pz).unwrap().to_tt().to_dense().unwrap();
    let idem = rel(&vec_of(&again), &vec_of(&pz));
    let mut rest = z.clone();
    rest.axpy(-1.0, &pz).unwrap();
    let pyth = (z.norm().powi(2) - pz.norm().powi(2) - rest.norm().powi(2)).abs() / z.norm().powi(2);
    let gauge = xi.gauge_defect();
    let dense = p.tensor().to_dense().unwrap();
    let reach = (1..n.len()).map(|k| smallest_sv(&dense.unfold_left(k).unwrap())).fold(f64::INFINITY, f64::min);
    let step = xi.clone().scaled(reach / xi.norm());
    let ts = [1e-1, 1e-2, 1e-3];
    let errs: Vec<f64> = ts
        .iter()
        .map(|&t| {
            let y = tt::retract(&step, t).unwrap().to_dense().unwrap();
            let mut d = step.affine_tt(1.0, t).to_dense().unwrap();
            d.axpy(-1.0, &y).unwrap();
            d.norm()
        })
        .collect();
    let s = slope(&errs, &ts);
    if idem > GEOM_TOL || pyth > GEOM_TOL || gauge > GAUGE_TOL || (s - 2.0).abs() > SLOPE_TOL {
        return Err(format!("tt n={n:?} r={r:?}: idem {idem:.1e} pyth {pyth:.1e} gauge {gauge:.1e} slope {s:.3}"));
    }
    Ok(s)
}

fn criterion1() -> Verdict {
    let mut checked = 0;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let cases_tucker: [(&[usize], &[usize]); 3] = [(&[4, 5, 6], &[2, 3, 2]), (&[6, 6, 6], &[3, 3, 3]), (&[4, 5, 4, 5], &[2, 2, 3, 2])];
    let cases_tt: [(&[usize], &[usize]); 3] = [(&[5, 5, 5], &[2, 3]), (&[6, 4, 6], &[3, 3]), (&[4, 5, 4, 5], &[2, 3, 2])];
    for seed in 0..5 {
        for (n, r) in cases_tucker {
            match tucker_geometry(n, r, seed) {
                Ok(s) => (lo, hi) = (lo.min(s), hi.max(s)),
                Err(e) => return verdict(false, e),
            }
            checked += 1;
        }
        for (n, r) in cases_tt {
            match tt_geometry(n, r, 100 + seed) {
                Ok(s) => (lo, hi) = (lo.min(s), hi.max(s)),
                Err(e) => return verdict(false, e),
            }
            checked += 1;
        }
    }
    verdict(true, format!("{checked} Tucker/TT points: idempotency, Pythagoras ≤ {GEOM_TOL:e}, gauge ≤ {GAUGE_TOL:e}, retraction slopes {lo:.3}..{hi:.3}"))
}

// ---------------------------------------------------------------- 2

fn tucker_oracle(seed: u64) -> f64 {
    let (n, r) = (8, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let core = randn_tensor(&[r; 3], &mut rng);
    let factors = (0..3).map(|_| Mat::from_fn(n, r, |_, _| StandardNormal.sample(&mut rng))).collect();
    let p = Arc::new(tucker::TuckerPoint::from_tensor(&tucker::TuckerTensor::new(core, factors).unwrap()).unwrap());
    let l = LaplaceLike::uniform(3, n);
    let ld = l.to_dense();
    let dims = [n; 3];
    let proj = dense_map(&dims, |e| vec_of(&tucker::project_dense(&p, e).unwrap().to_sum().to_dense().unwrap()));
    let q = range_basis(&proj);
    assert_eq!(q.ncols(), p.tangent_dim());
    let gal = q.transpose() * &ld * &q;
    let eta = tucker::project_dense(&p, &randn_tensor(&dims, &mut rng)).unwrap();
    let rhs = q.transpose() * vec_of(&eta.to_sum().to_dense().unwrap());
    let want = &q * gal.lu().solve(&rhs).unwrap();
    let got = solve_approx_newton_tucker(&l, &eta).unwrap();
    rel(&vec_of(&got.to_sum().to_dense().unwrap()), &want)
}

struct TtOracle {
    l: LaplaceLike,
    p: Arc<tt::TtPoint>,
    ld: Mat,
    proj: Mat,
}

impl TtOracle {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = Arc::new(tt::TtPoint::new(&tt::TtTensor::random(&[n; 3], &[2, 2], &mut rng).unwrap()).unwrap());
        let l = LaplaceLike::uniform(3, n);
        let ld = l.to_dense();
        let proj = dense_map(&[n; 3], |e| vec_of(&tt::project_dense(&p, e).unwrap().to_tt().to_dense().unwrap()));
        Self { l, p, ld, proj }
    }

    fn dense(t: &tt::TtTangent) -> Vector {
        vec_of(&t.to_tt().to_dense().unwrap())
    }

    fn tangent(&self, rng: &mut ChaCha8Rng) -> tt::TtTangent {
        tt::project_dense(&self.p, &randn_tensor(&self.p.dims(), rng)).unwrap()
    }

    /// Columns spanning the tangent vectors supported on core `m` only:
    /// gauged (the core-`m` part of projection outputs) or the full ungauged
    /// core.
    fn core_subspace(&self, m: usize, gauged: bool) -> Mat {
        let dims = self.p.dims();
        if gauged {
            let keep = |mut t: tt::TtTangent| {
                for (k, c) in t.d_cores.iter_mut().enumerate() {
                    if k != m {
                        c.scale(0.0);
                    }
                }
                Self::dense(&t)
            };
            column_space(&dense_map(&dims, |e| keep(tt::project_dense(&self.p, e).unwrap())))
        } else {
            let len = tt::TtTangent::zero(&self.p).d_cores[m].len();
            let cols: Vec<Vector> = (0..len)
                .map(|k| {
                    let mut t = tt::TtTangent::zero(&self.p);
                    t.d_cores[m].data_mut()[k] = 1.0;
                    Self::dense(&t)
                })
                .collect();
            Mat::from_columns(&cols)
        }
    }
}

/// Orthonormal basis of the column space, via the eigenvectors of `M Mᵀ`.
fn column_space(m: &Mat) -> Mat {
    let (q, vals) = sym_eig(&(m * m.transpose())).expect("symmetric");
    let top = vals.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 1e-10 * top).collect();
    Mat::from_fn(m.nrows(), keep.len(), |i, j| q[(i, keep[j])])
}

fn tt_oracles(n: usize, seed: u64) -> (f64, f64, f64) {
    let o = TtOracle::new(n, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    let lop = o.l.to_tt_operator();
    let pl = &o.proj * &o.ld * &o.proj;
    // overlapping: P Σ_μ E_μ (E_μᵀ L E_μ)⁻¹ E_μᵀ P over ungauged core spaces
    let mut ovl = Mat::zeros(o.ld.nrows(), o.ld.nrows());
    // block Jacobi: Σ_μ Q_μ (Q_μᵀ L Q_μ)⁻¹ Q_μᵀ over gauged core spaces
    let mut jac = Mat::zeros(o.ld.nrows(), o.ld.nrows());
    for m in 0..3 {
        let e = o.core_subspace(m, false);
        ovl += &e * (e.transpose() * &o.ld * &e).try_inverse().unwrap() * e.transpose();
        let q = o.core_subspace(m, true);
        jac += &q * (q.transpose() * &o.ld * &q).try_inverse().unwrap() * q.transpose();
    }
    let ovl = &o.proj * ovl * &o.proj;
    let over = OverlapPrecond::new(&o.l, &o.p).unwrap();
    let jacobi = JacobiPrecond::new(&o.l, &o.p).unwrap();
    let (mut eh, mut eo, mut ej) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..5 {
        let xi = o.tangent(&mut rng);
        let x = TtOracle::dense(&xi);
        eh = eh.max(rel(&TtOracle::dense(&hessian_apply(&lop, &xi).unwrap()), &(&pl * &x)));
        eo = eo.max(rel(&TtOracle::dense(&over.apply(&xi).unwrap()), &(&ovl * &x)));
        ej = ej.max(rel(&TtOracle::dense(&jacobi.apply(&xi).unwrap()), &(&jac * &x)));
    }
    (eh, eo, ej)
}

fn criterion2() -> Verdict {
    let worst_tucker = (0..20).map(tucker_oracle).fold(0.0, f64::max);
    let (mut eh, mut eo, mut ej) = (0.0f64, 0.0f64, 0.0f64);
    for (n, seed) in [(5, 1), (6, 2)] {
        let (h, o, j) = tt_oracles(n, seed);
        eh = eh.max(h);
        eo = eo.max(o);
        ej = ej.max(j);
    }
    let pass = worst_tucker <= TUCKER_ORACLE_TOL && eh <= TT_ORACLE_TOL && eo <= TT_ORACLE_TOL && ej <= TT_ORACLE_TOL;
    verdict(pass, format!("Tucker Newton vs Galerkin (20 instances) {worst_tucker:.1e}; TT Hessian {eh:.1e}, overlap {eo:.1e}, block Jacobi {ej:.1e}"))
}

// ---------------------------------------------------------------- 3..7

fn run(run: &SuiteRun) -> RunOutput {
    let clock = WallClock::start();
    run_experiment(&run.config, &clock, |_| {}).unwrap_or_else(|e| panic!("{}: {e}", run.name))
}

fn residuals(records: &[IterRecord]) -> Vec<f64> {
    records.iter().map(|r| r.rel_residual).collect()
}

/// Length of the run of steps `e_{k+1} ≤ C e_k²` that ends with the step
/// reaching the floor (or the last step).
fn terminal_quadratic_steps(e: &[f64]) -> usize {
    let end = e.iter().position(|&v| v < QUAD_FLOOR).unwrap_or(e.len() - 1);
    let mut count = 0;
    for k in (0..end).rev() {
        if e[k + 1] <= QUAD_C * e[k] * e[k] && e[k + 1] < e[k] {
            count += 1;
        } else {
            break;
        }
    }
    count
}

fn criterion3() -> Verdict {
    let runs = suites::quad_conv();
    let lap = residuals(&run(&runs[0]).records);
    let dif_out = run(&runs[1]);
    let dif = residuals(&dif_out.records);
    let q_lap = terminal_quadratic_steps(&lap);
    let q_dif = terminal_quadratic_steps(&dif);
    let ratios: Vec<f64> = dif.windows(2).filter(|w| w[0] <= 1e-3 && w[1] >= QUAD_FLOOR).map(|w| w[1] / w[0]).collect();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    let linear = ratios.len() >= 3 && hi < 1.0 && hi / lo <= LINEAR_SPREAD && q_dif < QUAD_MIN_STEPS && dif_out.converged();
    let pass = q_lap >= QUAD_MIN_STEPS && *lap.last().unwrap() < QUAD_FLOOR && linear;
    verdict(
        pass,
        format!(
            "L: {} iterations, {q_lap} terminal steps with e+ ≤ {QUAD_C}·e²; L+V: ratios {lo:.3}..{hi:.3} over {} steps (spread ≤ {LINEAR_SPREAD}), {q_dif} quadratic steps",
            lap.len() - 1,
            ratios.len()
        ),
    )
}

fn criterion4() -> Verdict {
    let runs = suites::precond_sweep();
    let mut lines = Vec::new();
    let (mut ranks_ok, mut iters_ok, mut residual_order) = (true, true, true);
    for variant in ["riemannian_richardson", "richardson"] {
        let mut iters = Vec::new();
        let mut finals = Vec::new();
        for k in [5, 7, 10] {
            let sr = runs.iter().find(|r| r.name == format!("{variant}_k{k}")).unwrap();
            let out = run(sr);
            let r2 = 2 * 15;
            let max_in = out.records.iter().map(|r| r.retraction_rank).max().unwrap_or(0);
            ranks_ok &= if variant == "riemannian_richardson" { max_in <= r2 } else { max_in > r2 };
            let it = out.iterations_to(sr.config.tol);
            lines.push(format!(
                "{variant} k={k}: to 1e-4 {}, final {:.2e}, retraction rank ≤ {max_in}",
                it.map_or("never".to_string(), |v| v.to_string()),
                out.final_residual()
            ));
            iters.push(it.unwrap_or(usize::MAX));
            finals.push(out.final_residual());
        }
        iters_ok &= iters[0] > iters[1] && iters[1] > iters[2];
        residual_order &= finals[0] > finals[1] && finals[1] > finals[2];
    }
    lines.push(format!("rank conditions {}, residual after 40 its ordered by k {}", yes(ranks_ok), yes(residual_order)));
    verdict(ranks_ok && iters_ok, lines.join("; "))
}

fn yes(b: bool) -> &'static str {
    if b { "hold" } else { "violated" }
}

fn criterion5() -> Verdict {
    let runs = suites::newton_vs_als();
    let newton = run(&runs[0]);
    let als = run(&runs[1]);
    let sd = run(&runs[2]);
    let ops = |o: &RunOutput| o.records.last().map_or(0, |r| r.operator_applies);
    let n_it = newton.iterations_to(1e-4);
    let sd_it = sd.iterations_to(1e-4).unwrap_or(usize::MAX);
    let pass = newton.converged() && als.converged() && ops(&newton) < ops(&als) && n_it.is_some_and(|k| sd_it > k);
    verdict(
        pass,
        format!(
            "Newton {} its / {} applies ({}), ALS {} micro-steps / {} applies ({}), precond. SD {} its ({})",
            newton.records.len() - 1,
            ops(&newton),
            trace::status_name(&newton.status),
            als.records.len() - 1,
            ops(&als),
            trace::status_name(&als.status),
            sd.records.len() - 1,
            trace::status_name(&sd.status)
        ),
    )
}

fn median(mut v: Vec<usize>) -> f64 {
    v.sort_unstable();
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m] as f64
    } else {
        0.5 * (v[m - 1] + v[m]) as f64
    }
}

fn criterion6() -> Verdict {
    let runs = suites::mesh_dep();
    let mut medians = Vec::new();
    for n in suites::MESH_SIZES {
        let its: Vec<usize> = runs
            .iter()
            .filter(|r| r.config.n == n)
            .map(|r| {
                let out = run(r);
                out.iterations_to(r.config.tol).unwrap_or(r.config.max_iters + 1)
            })
            .collect();
        medians.push((n, median(its)));
    }
    let lo = medians.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
    let hi = medians.iter().map(|m| m.1).fold(0.0, f64::max);
    let desc: Vec<String> = medians.iter().map(|(n, m)| format!("n={n}: {m}")).collect();
    verdict(hi / lo <= MESH_RATIO, format!("median iterations to 1e-6 over {} seeds: {} (max/min {:.2})", suites::MESH_SEEDS, desc.join(", "), hi / lo))
}

fn criterion7() -> Verdict {
    let runs = suites::rank_adapt();
    let adaptive = run(&runs[0]);
    let mut ok = adaptive.stage_ends.len() == suites::ADAPT_RANKS.len();
    let mut lines = Vec::new();
    for (i, r) in suites::ADAPT_RANKS.into_iter().enumerate() {
        let fixed = run(&runs[i + 1]);
        let a = adaptive.stage_ends.get(i).and_then(|&k| adaptive.records.iter().find(|rec| rec.iter == k)).map_or(f64::NAN, |rec| rec.rel_residual);
        let f = fixed.final_residual();
        let ratio = a / f;
        ok &= (1.0 / ADAPT_FACTOR..=ADAPT_FACTOR).contains(&ratio);
        lines.push(format!("r={r}: {a:.2e} vs {f:.2e}"));
    }
    verdict(ok, format!("adaptive vs fixed rank: {}", lines.join(", ")))
}

// ---------------------------------------------------------------- 8

fn criterion8() -> Verdict {
    let bin = env!("CARGO_BIN_EXE_tensolve");
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        r#"{"problem":"newton_potential","format":"tt","d":4,"n":12,"rank":3,"rhs":"random_rank1","solver":"approx_newton","preconditioner":"overlap","tol":1e-9,"max_iters":15,"seed":7}"#,
        r#"{"problem":"anisotropic_diffusion","format":"tucker","d":3,"n":20,"rank":3,"rhs":"manufactured_rank_r:3","solver":"riemannian_richardson","preconditioner":"expsum:7","tol":1e-8,"max_iters":25,"seed":3}"#,
        r#"{"problem":"pure_laplace","format":"tt","d":5,"n":10,"rank":2,"rhs":"random_rank1","solver":"als","tol":1e-8,"max_iters":30,"seed":11}"#,
    ];
    let mut notes = Vec::new();
    for (i, text) in configs.iter().enumerate() {
        let cfg_path = dir.path().join(format!("c{i}.json"));
        std::fs::write(&cfg_path, text).unwrap();
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let mut traces = Vec::new();
        for rep in 0..2 {
            let out = dir.path().join(format!("c{i}_{rep}"));
            let status = Command::new(bin).args(["run", "--config"]).arg(&cfg_path).arg("--out").arg(&out).output().unwrap();
            if !matches!(status.status.code(), Some(0) | Some(2)) {
                return verdict(false, format!("run {i} failed: {}", String::from_utf8_lossy(&status.stderr)));
            }
            let text = std::fs::read_to_string(out.join(tensolve::TRACE_FILE)).unwrap();
            let (hash, rows) = trace::read_trace(&text).unwrap();
            if hash != cfg.hash() {
                return verdict(false, "trace hash does not match config");
            }
            traces.push(rows);
        }
        if !trace::same_trace(&traces[0], &traces[1]) {
            return verdict(false, format!("config {i}: repeated runs differ"));
        }
        let iterate = dir.path().join(format!("c{i}_0")).join(tensolve::ITERATE_FILE);
        let v = Command::new(bin).arg("verify").arg(&iterate).arg("--config").arg(&cfg_path).output().unwrap();
        if v.status.code() != Some(0) {
            return verdict(false, format!("verify {i}: {}", String::from_utf8_lossy(&v.stderr)));
        }
        let check = tensolve::verify(&iterate, &cfg).unwrap();
        let diff = (check.recorded.unwrap() - check.recomputed).abs();
        if diff > VERIFY_TOL {
            return verdict(false, format!("config {i}: residual mismatch {diff:.1e}"));
        }
        notes.push(format!("{diff:.0e}"));
    }
    verdict(true, format!("{} configs bit-identical across repeats (wall time excluded); verify |Δ| = {}", configs.len(), notes.join(", ")))
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("geometry", criterion1),
        ("oracle equivalence", criterion2),
        ("quadratic convergence", criterion3),
        ("preconditioner ordering", criterion4),
        ("Newton vs ALS", criterion5),
        ("mesh independence", criterion6),
        ("rank adaptivity", criterion7),
        ("determinism", criterion8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !args.is_empty() && !args.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let v = f();
        println!("{} criterion {id} ({name}) [{:.0}s]: {}", if v.pass { "PASS" } else { "FAIL" }, t.elapsed().as_secs_f64(), v.detail);
        failed += usize::from(!v.pass);
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
