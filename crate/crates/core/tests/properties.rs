//! Cross-module properties on small random instances.

use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tensolve_core::format::{Format, TtFormat, TuckerFormat};
use tensolve_core::linalg::sym_eig;
use tensolve_core::newton_tt::{self, JacobiPrecond, OverlapPrecond};
use tensolve_core::newton_tucker;
use tensolve_core::operators::{ExpSum, LaplaceLike, Operator};
use tensolve_core::solvers::{objective, rgd, riemannian_richardson, NoClock, Preconditioner, SolverConfig};
use tensolve_core::tensor::Mat;
use tensolve_core::tt::{self, TtPoint, TtTensor};
use tensolve_core::tucker::{self, TuckerPoint, TuckerSum};

fn operator(kind: u8, d: usize, n: usize) -> Operator {
    match kind % 3 {
        0 => Operator::pure_laplace(d, n),
        1 => Operator::newton_potential(d, n).unwrap(),
        _ => Operator::anisotropic_diffusion(d, n, 0.25),
    }
}

fn dense_vec(t: &tensolve_core::tensor::DenseTensor) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_column_slice(t.data())
}

fn tt_tangent(p: &Arc<TtPoint>, rng: &mut ChaCha8Rng) -> tt::TtTangent {
    let z = TtTensor::random(&p.dims(), &vec![2; p.order() - 1], rng).unwrap();
    tt::project(p, &z).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn operators_match_their_dense_assembly(seed in any::<u64>(), kind in 0u8..3, half_n in 2usize..4, r in 1usize..3) {
        let (d, n) = (3, 2 * half_n);
        let op = operator(kind, d, n);
        let a = op.to_dense();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = TtTensor::random(&[n; 3], &[r, r], &mut rng).unwrap();
        let want = &a * dense_vec(&x.to_dense().unwrap());
        let got = dense_vec(&op.apply_tt(&x).unwrap().to_dense().unwrap());
        prop_assert!((&got - &want).norm() <= 1e-12 * want.norm());
        let xt = TuckerFormat::random_point(&[n; 3], &[r, r + 1, r], &mut rng).unwrap();
        let want = &a * dense_vec(&xt.to_dense().unwrap());
        let got = dense_vec(&op.apply_tucker(&TuckerSum::from(xt)).unwrap().to_dense().unwrap());
        prop_assert!((&got - &want).norm() <= 1e-12 * want.norm());
    }

    #[test]
    fn operators_are_symmetric(seed in any::<u64>(), kind in 0u8..3, d in 3usize..6) {
        let op = operator(kind, d, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = TtTensor::random(&vec![6; d], &vec![2; d - 1], &mut rng).unwrap();
        let y = TtTensor::random(&vec![6; d], &vec![3; d - 1], &mut rng).unwrap();
        let ax = op.apply_tt(&x).unwrap();
        let ay = op.apply_tt(&y).unwrap();
        let (l, r) = (ax.inner(&y).unwrap(), x.inner(&ay).unwrap());
        prop_assert!((l - r).abs() <= 1e-11 * ax.norm() * y.norm());
    }

    #[test]
    fn exp_sum_inverse_is_spd(k in 3usize..11, n in 3usize..7) {
        let l = LaplaceLike::uniform(3, n);
        let p = ExpSum::new(&l, k).unwrap().to_dense();
        prop_assert!((&p - p.transpose()).norm() <= 1e-13 * p.norm());
        let (_, vals) = sym_eig(&p).unwrap();
        prop_assert!(vals.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn tangent_maps_are_self_adjoint_and_positive(seed in any::<u64>(), n in 4usize..7) {
        let l = LaplaceLike::uniform(4, n);
        let lop = l.to_tt_operator();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = Arc::new(TtPoint::new(&TtTensor::random(&[n; 4], &[2, 3, 2], &mut rng).unwrap()).unwrap());
        let (xi, eta) = (tt_tangent(&p, &mut rng), tt_tangent(&p, &mut rng));
        let over = OverlapPrecond::new(&l, &p).unwrap();
        let jac = JacobiPrecond::new(&l, &p).unwrap();
        let maps: [&dyn Fn(&tt::TtTangent) -> tt::TtTangent; 3] = [
            &|t| newton_tt::hessian_apply(&lop, t).unwrap(),
            &|t| over.apply(t).unwrap(),
            &|t| jac.apply(t).unwrap(),
        ];
        for m in maps {
            let (mx, me) = (m(&xi), m(&eta));
            let scale = mx.norm() * eta.norm();
            prop_assert!((mx.inner(&eta).unwrap() - xi.inner(&me).unwrap()).abs() <= 1e-10 * scale);
            prop_assert!(mx.inner(&xi).unwrap() > 0.0);
        }
    }

    #[test]
    fn tangent_vectors_have_at_most_double_rank(seed in any::<u64>(), r in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = Arc::new(TtPoint::new(&TtTensor::random(&[5; 5], &[r; 4], &mut rng).unwrap()).unwrap());
        let xi = tt_tangent(&p, &mut rng);
        prop_assert!(xi.to_tt().ranks().iter().all(|&k| k <= 2 * r));
        prop_assert!(xi.affine_tt(1.0, 0.3).ranks().iter().all(|&k| k <= 2 * r));
    }

    #[test]
    fn tucker_newton_solves_the_projected_system(seed in any::<u64>(), n in 6usize..10) {
        let l = LaplaceLike::uniform(3, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = TuckerFormat::random_point(&[n; 3], &[2, 3, 2], &mut rng).unwrap();
        let p = Arc::new(TuckerPoint::from_tensor(&x).unwrap());
        let z = TuckerFormat::random_point(&[n; 3], &[2, 2, 2], &mut rng).unwrap();
        let eta = tucker::project(&p, &TuckerSum::from(z)).unwrap();
        let xi = newton_tucker::solve_approx_newton_tucker(&l, &eta).unwrap();
        let mut res = newton_tucker::hessian_apply(&l, &xi).unwrap();
        res.axpy(-1.0, &eta).unwrap();
        prop_assert!(res.norm() <= 1e-10 * eta.norm());
        prop_assert!(xi.gauge_defect() <= 1e-12);
    }
}

fn descent_steps<F: Format>(op: &Operator, rhs: &F::Full, mut x: F::Point, steps: usize) -> Vec<f64> {
    let cfg = SolverConfig { max_iters: 1, tol: 0.0, residual_round: None, ..SolverConfig::default() };
    let mut fs = vec![objective::<F>(op, rhs, &x).unwrap()];
    for _ in 0..steps {
        x = rgd::<F, _>(op, rhs, x, &cfg, &NoClock, |_| {}).x;
        fs.push(objective::<F>(op, rhs, &x).unwrap());
    }
    fs
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn gradient_descent_never_increases_the_energy(seed in any::<u64>(), kind in 0u8..3) {
        let op = operator(kind, 3, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = TtFormat::point_full(&TtFormat::random_point(&[8; 3], &[2, 2], &mut rng).unwrap());
        let x0 = TtFormat::random_point(&[8; 3], &[2, 2], &mut rng).unwrap();
        let fs = descent_steps::<TtFormat>(&op, &f, x0, 5);
        for w in fs.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
        }
        let ft = TuckerFormat::point_full(&TuckerFormat::random_point(&[8; 3], &[2, 2, 2], &mut rng).unwrap());
        let x0 = TuckerFormat::random_point(&[8; 3], &[2, 2, 2], &mut rng).unwrap();
        let fs = descent_steps::<TuckerFormat>(&op, &ft, x0, 5);
        for w in fs.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
        }
    }

    #[test]
    fn unpreconditioned_riemannian_richardson_is_gradient_descent(seed in any::<u64>()) {
        let op = Operator::anisotropic_diffusion(3, 8, 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = TtFormat::point_full(&TtFormat::random_point(&[8; 3], &[1, 1], &mut rng).unwrap());
        let x0 = TtFormat::random_point(&[8; 3], &[2, 2], &mut rng).unwrap();
        let cfg = SolverConfig { max_iters: 6, tol: 0.0, residual_round: None, ..SolverConfig::default() };
        let a = rgd::<TtFormat, _>(&op, &f, x0.clone(), &cfg, &NoClock, |_| {});
        let b = riemannian_richardson::<TtFormat, _>(&op, &f, x0, &Preconditioner::Identity, &cfg, &NoClock, |_| {});
        prop_assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            prop_assert!((ra.rel_residual - rb.rel_residual).abs() <= 1e-12);
        }
        let diff = a.x.lincomb(1.0, &b.x, -1.0).unwrap().norm();
        prop_assert!(diff <= 1e-12 * a.x.norm());
    }
}

#[test]
fn exp_sum_quality_improves_with_more_terms() {
    let l = LaplaceLike::uniform(3, 30);
    let errs: Vec<f64> = [5, 7, 10].iter().map(|&k| ExpSum::new(&l, k).unwrap().max_rel_error()).collect();
    assert!(errs[0] >= errs[1] && errs[1] >= errs[2], "{errs:?}");
}

#[test]
fn dense_exp_sum_approximates_the_inverse() {
    let l = LaplaceLike::uniform(3, 5);
    let a = l.to_dense();
    let p = ExpSum::new(&l, 10).unwrap();
    let pa: Mat = p.to_dense() * &a;
    let (_, vals) = sym_eig(&((&pa + pa.transpose()) * 0.5)).unwrap();
    let worst = vals.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    assert!(worst <= 2.0 * p.max_rel_error(), "{worst} vs {}", p.max_rel_error());
}
