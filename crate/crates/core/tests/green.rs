//! Physics checks of the half-space dislocation kernel against independent
//! constructions: full-space Volterra plus a Boussinesq–Cerruti surface
//! correction, boundary and field equations by finite differences, and the
//! displacement jump across a slipping patch.

use std::f64::consts::PI;

use faultinv::dual::{Dual3, Scalar};
use faultinv::green::{
    green_displacement, green_stress, traction, DislocationFrame, ElasticModel, PointDislocation,
};
use faultinv::quadrature::gauss_legendre_on;
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit(v: [f64; 3]) -> Vector3<f64> {
    Vector3::from(v).normalize()
}

/// A tangent unit vector of the plane with normal `n`.
fn tangent(n: &Vector3<f64>, hint: [f64; 3]) -> Vector3<f64> {
    n.cross(&Vector3::from(hint)).normalize()
}

fn random_dislocation(rng: &mut ChaCha8Rng) -> PointDislocation {
    let n = unit([rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.05..1.0)]);
    let b = tangent(&n, [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
    let src = Vector3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-20.0..-1.0));
    PointDislocation::new(src, n, b, 1.0).unwrap()
}

// ---------------------------------------------------------------------------
// Full-space Volterra field and its surface traction.

/// `∂G_np/∂x_q` of the Kelvin solution at offset `r`.
fn kelvin_grad<S: Scalar>(r: [S; 3], mu: f64, nu: f64) -> [[[S; 3]; 3]; 3] {
    let r2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
    let rn = r2.sqrt();
    let r3 = r2 * rn;
    let r5 = r3 * r2;
    let c = S::cst(1.0 / (16.0 * PI * mu * (1.0 - nu)));
    let mut g = [[[S::cst(0.0); 3]; 3]; 3];
    for n in 0..3 {
        for p in 0..3 {
            for q in 0..3 {
                let mut v = S::cst(-3.0) * r[n] * r[p] * r[q] / r5;
                if n == p {
                    v = v - S::cst(3.0 - 4.0 * nu) * r[q] / r3;
                }
                if n == q {
                    v = v + r[p] / r3;
                }
                if p == q {
                    v = v + r[n] / r3;
                }
                g[n][p][q] = c * v;
            }
        }
    }
    g
}

/// Displacement of a unit-potency dislocation in an unbounded medium.
fn volterra<S: Scalar>(x: [S; 3], d: &PointDislocation, e: &ElasticModel) -> [S; 3] {
    let r = [0, 1, 2].map(|i| x[i] - S::cst(d.source[i]));
    let g = kelvin_grad(r, e.mu, e.poisson_ratio());
    let mut u = [S::cst(0.0); 3];
    for (i, ui) in u.iter_mut().enumerate() {
        for p in 0..3 {
            for q in 0..3 {
                let m = e.mu * (d.burgers_dir[p] * d.normal[q] + d.burgers_dir[q] * d.normal[p]);
                *ui = *ui - S::cst(m) * g[i][p][q];
            }
        }
    }
    u
}

fn volterra_stress(x: [f64; 3], d: &PointDislocation, e: &ElasticModel) -> Matrix3<f64> {
    let xd = [0, 1, 2].map(|i| Dual3::var(x[i], i));
    let u = volterra(xd, d, e);
    e.stress(&Matrix3::from_fn(|i, j| u[i].d[j]))
}

/// Surface displacement at horizontal offset `(dx, dy)` from a unit force
/// `f` applied on the surface of the half space `x3 < 0`.
fn boussinesq_cerruti(dx: f64, dy: f64, f: [f64; 3], e: &ElasticModel) -> [f64; 3] {
    let nu = e.poisson_ratio();
    let mu = e.mu;
    let rho2 = dx * dx + dy * dy;
    let rho = rho2.sqrt();
    let a = 1.0 / (2.0 * PI * mu * rho);
    let c = (1.0 - 2.0 * nu) / (4.0 * PI * mu * rho2);
    [
        f[0] * a * ((1.0 - nu) + nu * dx * dx / rho2) + f[1] * a * nu * dx * dy / rho2 + f[2] * c * dx,
        f[0] * a * nu * dx * dy / rho2 + f[1] * a * ((1.0 - nu) + nu * dy * dy / rho2) + f[2] * c * dy,
        -f[0] * c * dx - f[1] * c * dy + f[2] * a * (1.0 - nu),
    ]
}

/// Half-space surface displacement at `(x1, x2, 0)`: the full-space field
/// plus the response to the surface traction cancelling it, integrated in
/// polar coordinates about the receiver.
fn half_space_oracle(x1: f64, x2: f64, d: &PointDislocation, e: &ElasticModel) -> [f64; 3] {
    let mut u = volterra([x1, x2, 0.0], d, e);
    let n_theta = 256;
    let (s_nodes, s_w) = {
        // log-radius panels from 1e-6 to 1e5 km
        let (lo, hi, panels) = (1e-6f64.ln(), 1e5f64.ln(), 60);
        let h = (hi - lo) / panels as f64;
        let mut xs = Vec::new();
        let mut ws = Vec::new();
        for k in 0..panels {
            let (x, w) = gauss_legendre_on(12, lo + k as f64 * h, lo + (k + 1) as f64 * h);
            xs.extend(x);
            ws.extend(w);
        }
        (xs, ws)
    };
    for it in 0..n_theta {
        let th = 2.0 * PI * it as f64 / n_theta as f64;
        let (c, s) = (th.cos(), th.sin());
        for (sv, sw) in s_nodes.iter().zip(&s_w) {
            let rho = sv.exp();
            let xi = [x1 - rho * c, x2 - rho * s, 0.0];
            let sig = volterra_stress(xi, d, e);
            let load = -(sig * Vector3::z());
            let g = boussinesq_cerruti(x1 - xi[0], x2 - xi[1], [load[0], load[1], load[2]], e);
            // area element rho drho dtheta with drho = rho ds
            let w = sw * rho * rho * 2.0 * PI / n_theta as f64;
            for k in 0..3 {
                u[k] += w * g[k];
            }
        }
    }
    u
}

#[test]
fn matches_kelvin_plus_surface_correction_oracle() {
    let e = ElasticModel::new(1.0, 1.0).unwrap();
    let cases = [
        // horizontal element, reference configuration
        ([0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0]),
        ([0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.3, -1.7]),
        ([0.3, -0.5, 1.0], [0.0; 3], [0.4, -0.2, -2.0], [1.5, 0.5]),
    ];
    for (n, b, src, x) in cases {
        let n = unit(n);
        let b = if b == [0.0; 3] { tangent(&n, [0.2, 1.0, 0.3]) } else { Vector3::from(b) };
        let d = PointDislocation::new(Vector3::from(src), n, b, 1.0).unwrap();
        let got = green_displacement(&Vector3::new(x[0], x[1], 0.0), &d, &e).unwrap();
        let want = Vector3::from(half_space_oracle(x[0], x[1], &d, &e));
        let rel = (got - want).norm() / want.norm();
        assert!(rel < 1e-5, "n={n:?} x={x:?}: kernel {got:?} oracle {want:?} rel {rel:e}");
    }
}

#[test]
fn reference_configuration_in_oracle_units() {
    // λ = μ = 1, source (0,0,-1), normal e3, slip e1, receiver (1,0,0)
    let e = ElasticModel::new(1.0, 1.0).unwrap();
    let d = PointDislocation::new(
        Vector3::new(0.0, 0.0, -1.0),
        Vector3::z(),
        Vector3::x(),
        1.0,
    )
    .unwrap();
    let got = green_displacement(&Vector3::new(1.0, 0.0, 0.0), &d, &e).unwrap();
    let want = half_space_oracle(1.0, 0.0, &d, &e);
    // mirror symmetry x2 -> -x2 forces the transverse component to vanish
    assert!(got[1].abs() < 1e-15 && want[1].abs() < 1e-10);
    for k in [0, 2] {
        assert!((got[k] - want[k]).abs() < 1e-5 * want[k].abs(), "{k}: {got:?} vs {want:?}");
    }
}

// ---------------------------------------------------------------------------
// Boundary condition and field equations.

#[test]
fn surface_traction_vanishes_by_extrapolation() {
    let e = ElasticModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let d = random_dislocation(&mut rng);
        let (x1, x2) = (rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
        let t = |h: f64| {
            let s = green_stress(&Vector3::new(x1, x2, -h), &d, &e).unwrap();
            (traction(&s, &Vector3::z()), s.norm())
        };
        let (t2, _) = t(1e-2);
        let (t3, scale) = t(1e-3);
        assert!(t3.norm() < 1e-2 * scale, "traction {:e} vs stress scale {scale:e}", t3.norm());
        // traction is linear in the distance to the surface
        if t2.norm() > 1e-12 * scale {
            let ratio = t2.norm() / t3.norm();
            assert!((9.0..11.0).contains(&ratio), "ratio {ratio}");
        }
        // Richardson extrapolation to the surface
        let t0 = (t3 * 10.0 - t2) / 9.0;
        assert!(t0.norm() < 1e-4 * scale, "extrapolated {:e}", t0.norm());
    }
}

fn navier_residual(d: &PointDislocation, e: &ElasticModel, x0: Vector3<f64>, h: f64) -> f64 {
    let u = |x: Vector3<f64>| green_displacement(&x, d, e).unwrap();
    let mut lap = Vector3::zeros();
    let mut grad_div = Vector3::zeros();
    let u0 = u(x0);
    for i in 0..3 {
        let ei = Vector3::ith(i, h);
        lap += (u(x0 + ei) - 2.0 * u0 + u(x0 - ei)) / (h * h);
        for j in 0..3 {
            let ej = Vector3::ith(j, h);
            grad_div[i] += (u(x0 + ei + ej)[j] - u(x0 + ei - ej)[j] - u(x0 - ei + ej)[j]
                + u(x0 - ei - ej)[j])
                / (4.0 * h * h);
        }
    }
    (lap * e.mu + grad_div * (e.lambda + e.mu)).norm()
}

#[test]
fn interior_equilibrium_is_second_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for e in [ElasticModel::default(), ElasticModel::new(2.5, 0.7).unwrap()] {
        for _ in 0..6 {
            let d = random_dislocation(&mut rng);
            // between source and surface, a couple of km from both
            let x0 = d.source + Vector3::new(1.5, -1.0, 0.0);
            let x0 = Vector3::new(x0[0], x0[1], (d.source[2] * 0.5).min(-1.0));
            let r1 = navier_residual(&d, &e, x0, 0.08);
            let r2 = navier_residual(&d, &e, x0, 0.04);
            let ratio = r1 / r2;
            assert!((3.0..5.5).contains(&ratio), "ratio {ratio} ({r1:e}, {r2:e})");
        }
    }
}

#[test]
fn far_field_decays_like_inverse_square() {
    let e = ElasticModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let d = random_dislocation(&mut rng);
        let dir = unit([rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0]);
        let scaled: Vec<f64> = [1e2, 1e3, 1e4]
            .iter()
            .map(|r| {
                let x = dir * *r;
                green_displacement(&x, &d, &e).unwrap().norm() * r * r
            })
            .collect();
        let bound = 10.0 * scaled[0].max(1e-12);
        assert!(scaled.iter().all(|s| s.is_finite() && *s <= bound), "{scaled:?}");
        // the product settles to a finite limit
        assert!((scaled[2] - scaled[1]).abs() <= 0.1 * scaled[1] + 1e-12, "{scaled:?}");
    }
}

#[test]
fn displacement_jump_equals_burgers_vector() {
    // Integrate the kernel over a disk of uniform unit slip and compare the
    // displacements just above and below its centre.
    let e = ElasticModel::default();
    let n = unit([0.3, -0.5, 1.0]);
    let b = tangent(&n, [0.2, 1.0, 0.3]);
    let t2 = n.cross(&b);
    let center = Vector3::new(0.0, 0.0, -10.0);
    let frame = DislocationFrame::new(&n, &b);
    let (h, radius) = (1e-3, 4.0f64);
    let mut nodes = Vec::new();
    let (lo, hi, panels) = (1e-7f64.ln(), radius.ln(), 24);
    let step = (hi - lo) / panels as f64;
    for k in 0..panels {
        let (x, w) = gauss_legendre_on(10, lo + k as f64 * step, lo + (k + 1) as f64 * step);
        nodes.extend(x.into_iter().zip(w));
    }
    let n_theta = 64;
    let side = |sgn: f64| {
        let x = center + n * (sgn * h);
        let mut u = Vector3::zeros();
        for it in 0..n_theta {
            let th = 2.0 * PI * (it as f64 + 0.5) / n_theta as f64;
            for (s, w) in &nodes {
                let rho = s.exp();
                let y = center + (b * th.cos() + t2 * th.sin()) * rho;
                let v = frame.displacement(&[x[0], x[1], x[2]], &[y[0], y[1], y[2]], e.alpha());
                u += Vector3::from(v) * (w * rho * rho * 2.0 * PI / n_theta as f64);
            }
        }
        u
    };
    let jump = side(1.0) - side(-1.0);
    assert!((jump - b).norm() < 2e-3, "jump {jump:?} vs b {b:?}");
}

// ---------------------------------------------------------------------------
// Algebraic properties.

#[test]
fn linear_in_burgers_vector() {
    let e = ElasticModel::default();
    let n = unit([0.2, 0.4, 1.0]);
    let b1 = tangent(&n, [1.0, 0.0, 0.0]);
    let b2 = n.cross(&b1);
    let (alpha, beta) = (0.7, -1.9);
    let x = [3.0, -4.0, 0.0];
    let s = [0.5, 1.0, -6.0];
    let f = |b: Vector3<f64>| Vector3::from(DislocationFrame::new(&n, &b).displacement(&x, &s, e.alpha()));
    let lhs = f(b1 * alpha + b2 * beta);
    let rhs = f(b1) * alpha + f(b2) * beta;
    assert!((lhs - rhs).norm() <= 1e-15 * lhs.norm().max(1.0) * 10.0);
}

proptest! {
    #[test]
    fn homogeneous_of_degree_minus_two(
        sx in -10.0..10.0f64, sy in -10.0..10.0f64, sz in -15.0..-0.5f64,
        rx in -30.0..30.0f64, ry in -30.0..30.0f64, rz in -5.0..0.0f64,
        nx in -1.0..1.0f64, ny in -1.0..1.0f64, nz in 0.1..1.0f64,
        si in 0usize..3,
    ) {
        let s = [0.5, 2.0, 10.0][si];
        let e = ElasticModel::default();
        let n = unit([nx, ny, nz]);
        let b = tangent(&n, [0.3, 1.0, -0.2]);
        let src = Vector3::new(sx, sy, sz);
        let rec = Vector3::new(rx, ry, rz);
        prop_assume!((rec - src).norm() > 0.5);
        let d1 = PointDislocation::new(src, n, b, 1.0).unwrap();
        let d2 = PointDislocation::new(src * s, n, b, 1.0).unwrap();
        let u1 = green_displacement(&rec, &d1, &e).unwrap();
        let u2 = green_displacement(&(rec * s), &d2, &e).unwrap();
        prop_assert!((u2 * (s * s) - u1).norm() <= 1e-10 * u1.norm());
    }

    #[test]
    fn magnitude_scales_displacement_and_stress(k in 0.1..10.0f64, seed in 0u64..1000) {
        let e = ElasticModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_dislocation(&mut rng);
        let dk = PointDislocation { magnitude: k, ..d };
        let x = Vector3::new(rng.gen_range(-9.0..9.0), rng.gen_range(-9.0..9.0), -0.3);
        let u = green_displacement(&x, &d, &e).unwrap();
        let uk = green_displacement(&x, &dk, &e).unwrap();
        prop_assert!((uk - u * k).norm() <= 1e-14 * uk.norm());
        let s = green_stress(&x, &d, &e).unwrap();
        let sk = green_stress(&x, &dk, &e).unwrap();
        prop_assert!((sk - s * k).norm() <= 1e-14 * sk.norm());
        prop_assert!((sk - sk.transpose()).norm() <= 1e-12 * sk.norm());
    }
}
