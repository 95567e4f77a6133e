//! Forward operator assembly and the regularized solver.

use faultinv::forward::{assemble, predict, read_binary, self_check, weighted_data};
use faultinv::geometry::{FaultGeometry, SlipBasis};
use faultinv::green::ElasticModel;
use faultinv::quadrature::{gauss_stations, FaultQuadrature, Rect, StationSet};
use faultinv::tikhonov::{f_disc, sigma_max2, solve_gmin, SigmaRule, RESIDUAL_TOL};
use nalgebra::{DMatrix, DVector, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Setup {
    basis: SlipBasis,
    stations: StationSet,
    rule: FaultQuadrature,
    elastic: ElasticModel,
}

fn setup(p: usize, n_st: usize) -> Setup {
    let rect = Rect::square(20.0);
    Setup {
        basis: SlipBasis::new(p, rect).unwrap(),
        stations: gauss_stations(n_st, Rect::square(30.0)).unwrap(),
        rule: FaultQuadrature::gauss(FaultQuadrature::default_order(p), rect).unwrap(),
        elastic: ElasticModel::default(),
    }
}

fn slip(m: &FaultGeometry) -> Vector3<f64> {
    m.slip_direction().unwrap()
}

#[test]
fn matrix_agrees_with_direct_summation() {
    let s = setup(6, 4);
    let m = FaultGeometry::new(0.2, -0.3, -15.0);
    let fwd = assemble(&m, &s.basis, &s.stations, &s.rule, &s.elastic, &slip(&m)).unwrap();
    let a = fwd.unweighted();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..3 {
        let g: Vec<f64> = (0..36).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let direct = predict(&m, &s.basis, &g, &s.stations, &s.rule, &s.elastic, &slip(&m)).unwrap();
        let via = &a * DVector::from_vec(g.clone());
        let flat = DVector::from_iterator(direct.len() * 3, direct.iter().flatten().copied());
        assert!((via - &flat).norm() <= 1e-12 * flat.norm(), "direct and matrix paths differ");
        // weighted data lines up with the weighted rows
        let wd = weighted_data(&s.stations, &direct).unwrap();
        let wv = &fwd.matrix * DVector::from_vec(g);
        assert!((wd - wv).norm() <= 1e-12 * flat.norm());
    }
}

#[test]
fn default_fault_rule_is_converged() {
    for (p, st) in [(8, 3), (15, 3), (21, 5)] {
        let s = setup(p, st);
        for m in [[-0.12, -0.26, -14.0], [0.5, 0.4, -30.0], [0.0, 0.0, -10.0]] {
            let m = FaultGeometry::from_array(m);
            let d = self_check(&m, &s.basis, &s.stations, &s.rule, &s.elastic, &slip_or_x(&m)).unwrap();
            assert!(d < 1e-8, "p={p} m={m:?}: {d:e}");
        }
    }
}

fn slip_or_x(m: &FaultGeometry) -> Vector3<f64> {
    m.slip_direction_or(Some([1.0, 0.0, 0.0])).unwrap()
}

#[test]
fn deeper_faults_give_smaller_surface_response() {
    let s = setup(5, 3);
    let norms: Vec<f64> = [-5.0, -10.0, -20.0, -40.0, -80.0]
        .iter()
        .map(|&d| {
            let m = FaultGeometry::new(0.0, 0.1, d);
            assemble(&m, &s.basis, &s.stations, &s.rule, &s.elastic, &slip(&m))
                .unwrap()
                .matrix
                .column(0)
                .norm()
        })
        .collect();
    for w in norms.windows(2) {
        assert!(w[1] < w[0], "{norms:?}");
    }
}

#[test]
fn operator_is_smooth_in_geometry() {
    let s = setup(5, 3);
    let at = |d: f64| {
        let m = FaultGeometry::new(0.1, -0.2, d);
        assemble(&m, &s.basis, &s.stations, &s.rule, &s.elastic, &slip(&m)).unwrap().matrix
    };
    // central differences at step h and h/2 differ at second order
    let d0 = -12.0;
    let deriv = |h: f64| (at(d0 + h) - at(d0 - h)) / (2.0 * h);
    let e1 = (deriv(0.2) - deriv(0.1)).norm();
    let e2 = (deriv(0.1) - deriv(0.05)).norm();
    let ratio = e1 / e2;
    assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn rejects_faults_breaking_the_surface() {
    let s = setup(4, 3);
    let m = FaultGeometry::new(1.0, 0.0, -3.0);
    assert!(assemble(&m, &s.basis, &s.stations, &s.rule, &s.elastic, &slip(&m)).is_err());
}

#[test]
fn binary_dump_round_trip() {
    let s = setup(3, 2);
    let m = FaultGeometry::new(0.1, 0.1, -10.0);
    let fwd = assemble(&m, &s.basis, &s.stations, &s.rule, &s.elastic, &slip(&m)).unwrap();
    let mut buf = Vec::new();
    fwd.write_binary(&mut buf).unwrap();
    assert_eq!(buf.len(), 24 + 8 * fwd.matrix.len());
    assert_eq!(read_binary(buf.as_slice()).unwrap(), fwd.matrix);
}

// ---------------------------------------------------------------------------
// Regularized solver.

fn random_system(rng: &mut ChaCha8Rng, n: usize, k: usize) -> (DMatrix<f64>, DVector<f64>) {
    let a = DMatrix::from_fn(n, k, |_, _| rng.gen_range(-1.0..1.0));
    let u = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    (a, u)
}

#[test]
fn dual_solution_equals_primal() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (n, k) in [(27, 4), (12, 25), (30, 100), (75, 64)] {
        for c in [1e-6, 1e-3, 1.0] {
            let (a, u) = random_system(&mut rng, n, k);
            let sol = solve_gmin(&a, &u, c).unwrap();
            // closed form through the singular value decomposition
            let svd = a.clone().svd(true, true);
            let (uu, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
            let proj = uu.transpose() * &u;
            let filt = DVector::from_fn(proj.len(), |i, _| {
                let s = svd.singular_values[i];
                proj[i] * s / (s * s + c)
            });
            let primal = vt.transpose() * filt;
            let rel = (&sol.coeffs - &primal).norm() / primal.norm();
            assert!(rel < 1e-10, "n={n} k={k} c={c}: {rel:e}");
            assert!(sol.normal_residual <= RESIDUAL_TOL, "{}", sol.normal_residual);
            // Sylvester: det(I + AAᵀ/C) = det(I + AᵀA/C)
            let param: f64 = svd.singular_values.iter().map(|s| (1.0 + s * s / c).ln()).sum();
            assert!((sol.logdet - param).abs() < 1e-9 * param.abs().max(1.0));
        }
    }
}

#[test]
fn scalar_closed_form() {
    let a = DMatrix::from_element(1, 1, 2.0);
    let u = DVector::from_element(1, 3.0);
    let c = 0.5;
    let sol = solve_gmin(&a, &u, c).unwrap();
    let g = 2.0 * 3.0 / (4.0 + c);
    assert!((sol.coeffs[0] - g).abs() < 1e-15);
    let f = (2.0 * g - 3.0f64).powi(2) + c * g * g;
    assert!((sol.objective - f).abs() < 1e-14);
    assert!((sol.logdet - (1.0 + 4.0 / c).ln()).abs() < 1e-14);
    assert!((sigma_max2(&sol, 1, SigmaRule::MaxLikelihood) - f / 3.0).abs() < 1e-15);
    assert!((sigma_max2(&sol, 1, SigmaRule::Paper) - (f + c * g * g) / 3.0).abs() < 1e-15);
}

#[test]
fn large_regularization_drives_solution_to_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (a, u) = random_system(&mut rng, 18, 9);
    let norms: Vec<f64> = [1e2, 1e4, 1e6, 1e8]
        .iter()
        .map(|&c| solve_gmin(&a, &u, c).unwrap().coeffs.norm())
        .collect();
    for w in norms.windows(2) {
        assert!(w[1] < w[0] * 0.02);
    }
    let f = f_disc(&a, &u, 1e12).unwrap();
    assert!((f - u.norm_squared()).abs() < 1e-6 * u.norm_squared());
}

#[test]
fn forward_solution_is_continuous_in_geometry() {
    let s = setup(6, 3);
    let m0 = FaultGeometry::new(-0.1, -0.2, -14.0);
    let fwd0 = assemble(&m0, &s.basis, &s.stations, &s.rule, &s.elastic, &slip(&m0)).unwrap();
    let u = &fwd0.matrix * DVector::from_fn(36, |i, _| 1.0 / (1.0 + i as f64));
    let g0 = solve_gmin(&fwd0.matrix, &u, 1e-4).unwrap().coeffs;
    let mut diffs = Vec::new();
    for h in [1e-3, 1e-4] {
        let m = FaultGeometry::new(-0.1 + h, -0.2, -14.0 + h);
        let fwd = assemble(&m, &s.basis, &s.stations, &s.rule, &s.elastic, &slip(&m)).unwrap();
        let g = solve_gmin(&fwd.matrix, &u, 1e-4).unwrap().coeffs;
        diffs.push((g - &g0).norm());
    }
    // Lipschitz: a tenfold smaller step moves the solution about tenfold less
    let ratio = diffs[0] / diffs[1];
    assert!((7.0..14.0).contains(&ratio), "{diffs:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn f_disc_is_monotone_in_c(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, u) = random_system(&mut rng, 15, 10);
        let cs = [1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2];
        let f: Vec<f64> = cs.iter().map(|&c| f_disc(&a, &u, c).unwrap()).collect();
        for w in f.windows(2) {
            prop_assert!(w[0] <= w[1] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn residual_small_on_random_instances(seed in 0u64..10_000, lc in -8.0..0.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(3..40);
        let k = rng.gen_range(1..60);
        let (a, u) = random_system(&mut rng, n, k);
        let sol = solve_gmin(&a, &u, 10f64.powf(lc)).unwrap();
        prop_assert!(sol.normal_residual <= RESIDUAL_TOL, "{:e}", sol.normal_residual);
    }

    #[test]
    fn linear_in_data(seed in 0u64..10_000, s in -3.0..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, u1) = random_system(&mut rng, 12, 8);
        let u2 = DVector::from_fn(12, |_, _| rng.gen_range(-1.0..1.0));
        let c = 1e-3;
        let g = |u: &DVector<f64>| solve_gmin(&a, u, c).unwrap().coeffs;
        let lhs = g(&(&u1 + &u2 * s));
        let rhs = g(&u1) + g(&u2) * s;
        prop_assert!((&lhs - &rhs).norm() <= 1e-9 * (1.0 + rhs.norm()));
    }
}

#[test]
fn rejects_bad_inputs() {
    let a = DMatrix::identity(3, 3);
    let u = DVector::zeros(3);
    assert!(solve_gmin(&a, &u, 0.0).is_err());
    assert!(solve_gmin(&a, &u, -1.0).is_err());
    assert!(solve_gmin(&a, &u, f64::NAN).is_err());
    assert!(solve_gmin(&a, &DVector::zeros(2), 1.0).is_err());
}
