//! Elastostatic half-space Green kernel for a point dislocation.
//!
//! The displacement produced at a receiver in the half space `x3 <= 0` by a
//! unit-potency point dislocation (slip times area equal to one) buried at
//! `source`, on a plane element with unit normal `normal`, slipping along the
//! unit tangent `burgers_dir`. The field satisfies the Navier equations away
//! from the source, is traction free on `x3 = 0` and decays like `1/|x|^2`.
//!
//! The closed form is the point-source solution of Okada (1992) written in a
//! frame aligned with the strike of the element. Lamé constants enter only
//! through the medium constant `alpha = (lambda + mu) / (lambda + 2 mu)` for
//! displacements; stresses additionally scale with the moduli.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::dual::{Dual3, Scalar};
use crate::error::{Error, Result};

/// Receivers closer than this to the source are rejected.
pub const MIN_SOURCE_DISTANCE: f64 = 1e-9;

const UNIT_TOL: f64 = 1e-12;

/// Homogeneous isotropic elastic medium.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElasticModel {
    pub lambda: f64,
    pub mu: f64,
}

impl Default for ElasticModel {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            mu: 1.0,
        }
    }
}

impl ElasticModel {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        let m = Self { lambda, mu };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.mu.is_finite()) {
            return Err(Error::InvalidElastic("non-finite Lamé constant".into()));
        }
        if self.lambda <= 0.0 {
            return Err(Error::InvalidElastic(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.mu <= 0.0 {
            return Err(Error::InvalidElastic(format!(
                "mu must be positive, got {}",
                self.mu
            )));
        }
        Ok(())
    }

    /// `(lambda + mu) / (lambda + 2 mu)`.
    pub fn alpha(&self) -> f64 {
        (self.lambda + self.mu) / (self.lambda + 2.0 * self.mu)
    }

    pub fn poisson_ratio(&self) -> f64 {
        self.lambda / (2.0 * (self.lambda + self.mu))
    }

    /// Isotropic stress from a displacement gradient `grad[i][j] = d u_i / d x_j`.
    pub fn stress(&self, grad: &Matrix3<f64>) -> Matrix3<f64> {
        let strain = (grad + grad.transpose()) * 0.5;
        Matrix3::identity() * (self.lambda * strain.trace()) + strain * (2.0 * self.mu)
    }
}

/// A point dislocation of given magnitude (slip times unit area).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointDislocation {
    pub source: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub burgers_dir: Vector3<f64>,
    pub magnitude: f64,
}

impl PointDislocation {
    pub fn new(
        source: Vector3<f64>,
        normal: Vector3<f64>,
        burgers_dir: Vector3<f64>,
        magnitude: f64,
    ) -> Result<Self> {
        let d = Self {
            source,
            normal,
            burgers_dir,
            magnitude,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.source[2] < 0.0) {
            return Err(Error::SourceNotBuried(self.source[2]));
        }
        if (self.normal.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidDislocation("normal is not a unit vector".into()));
        }
        if (self.burgers_dir.norm() - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidDislocation(
                "burgers direction is not a unit vector".into(),
            ));
        }
        if self.normal.dot(&self.burgers_dir).abs() > UNIT_TOL {
            return Err(Error::InvalidDislocation(
                "burgers direction is not tangent to the plane".into(),
            ));
        }
        Ok(())
    }
}

/// Strike-aligned frame of a dislocation element, reusable for every source
/// location sharing the same orientation.
#[derive(Clone, Copy, Debug)]
pub struct DislocationFrame {
    strike: Vector3<f64>,
    horiz: Vector3<f64>,
    sin_dip: f64,
    cos_dip: f64,
    strike_slip: f64,
    dip_slip: f64,
}

impl DislocationFrame {
    /// `normal` and `burgers_dir` must be orthonormal; the slip components
    /// are taken as-is so a non-unit `burgers_dir` scales the output.
    pub fn new(normal: &Vector3<f64>, burgers_dir: &Vector3<f64>) -> Self {
        // The moment tensor b n^T + n b^T is invariant under (n, b) -> (-n, -b).
        let (n, b) = if normal[2] < 0.0 {
            (-normal, -burgers_dir)
        } else {
            (*normal, *burgers_dir)
        };
        let nh = (n[0] * n[0] + n[1] * n[1]).sqrt();
        let horiz = if nh > 1e-14 {
            Vector3::new(-n[0] / nh, -n[1] / nh, 0.0)
        } else {
            Vector3::new(0.0, 1.0, 0.0)
        };
        let strike = horiz.cross(&Vector3::z());
        let sin_dip = nh.min(1.0);
        let cos_dip = n[2];
        let updip = horiz * cos_dip + Vector3::z() * sin_dip;
        Self {
            strike,
            horiz,
            sin_dip,
            cos_dip,
            strike_slip: b.dot(&strike),
            dip_slip: b.dot(&updip),
        }
    }

    fn to_local<S: Scalar>(&self, rel: [S; 3]) -> [S; 3] {
        let ex = self.strike;
        let ey = self.horiz;
        [
            rel[0] * S::cst(ex[0]) + rel[1] * S::cst(ex[1]) + rel[2] * S::cst(ex[2]),
            rel[0] * S::cst(ey[0]) + rel[1] * S::cst(ey[1]) + rel[2] * S::cst(ey[2]),
            rel[2],
        ]
    }

    fn to_global<S: Scalar>(&self, u: [S; 3]) -> [S; 3] {
        let ex = self.strike;
        let ey = self.horiz;
        [
            u[0] * S::cst(ex[0]) + u[1] * S::cst(ey[0]),
            u[0] * S::cst(ex[1]) + u[1] * S::cst(ey[1]),
            u[0] * S::cst(ex[2]) + u[1] * S::cst(ey[2]) + u[2],
        ]
    }

    /// Displacement at `receiver` (global coordinates) due to a unit-potency
    /// source at `source`. No argument checks; see [`green_displacement`].
    pub fn displacement(&self, receiver: &[f64; 3], source: &[f64; 3], alpha: f64) -> [f64; 3] {
        self.eval::<f64>(
            [
                receiver[0] - source[0],
                receiver[1] - source[1],
                receiver[2],
            ],
            -source[2],
            alpha,
        )
    }

    fn eval<S: Scalar>(&self, rel: [S; 3], depth: f64, alpha: f64) -> [S; 3] {
        let loc = self.to_local(rel);
        let u = okada_point(
            loc,
            depth,
            alpha,
            self.sin_dip,
            self.cos_dip,
            self.strike_slip,
            self.dip_slip,
        );
        self.to_global(u)
    }

    /// Displacement gradient `grad[i][j] = d u_i / d x_j` at the receiver.
    pub fn displacement_gradient(
        &self,
        receiver: &[f64; 3],
        source: &[f64; 3],
        alpha: f64,
    ) -> Matrix3<f64> {
        let rel = [
            Dual3::var(receiver[0] - source[0], 0),
            Dual3::var(receiver[1] - source[1], 1),
            Dual3::var(receiver[2], 2),
        ];
        let u = self.eval(rel, -source[2], alpha);
        Matrix3::from_fn(|i, j| u[i].d[j])
    }
}

/// Point-source displacement in the strike-aligned frame, Okada (1992).
///
/// `loc = (x, y, z)` relative to the epicentre, `z <= 0`; `depth > 0`.
fn okada_point<S: Scalar>(
    loc: [S; 3],
    depth: f64,
    alpha: f64,
    sd: f64,
    cd: f64,
    pot_ss: f64,
    pot_ds: f64,
) -> [S; 3] {
    let [x, y, z] = loc;
    let c = S::cst(depth);
    let real = term_a(x, y, c + z, sd, cd, alpha, pot_ss, pot_ds);
    let dd = c - z;
    let img = term_a(x, y, dd, sd, cd, alpha, pot_ss, pot_ds);
    let b = term_b(x, y, dd, c, sd, cd, alpha, pot_ss, pot_ds);
    let cc = term_c(x, y, dd, c, sd, cd, alpha, pot_ss, pot_ds);
    let k = S::cst(1.0 / (2.0 * PI));
    let mut out = [S::cst(0.0); 3];
    for i in 0..3 {
        out[i] = (img[i] - real[i] + b[i] + z * cc[i]) * k;
    }
    out
}

struct PlaneTerms<S> {
    p: S,
    q: S,
    s: S,
    t: S,
    r: S,
    r2: S,
    r3: S,
    r5: S,
}

#[inline]
fn plane_terms<S: Scalar>(x: S, y: S, d: S, sd: f64, cd: f64) -> PlaneTerms<S> {
    let (sd, cd) = (S::cst(sd), S::cst(cd));
    let p = y * cd + d * sd;
    let q = y * sd - d * cd;
    let s = p * sd + q * cd;
    let t = p * cd - q * sd;
    let r2 = x * x + y * y + d * d;
    let r = r2.sqrt();
    let r3 = r * r2;
    let r5 = r3 * r2;
    PlaneTerms {
        p,
        q,
        s,
        t,
        r,
        r2,
        r3,
        r5,
    }
}

#[allow(clippy::too_many_arguments)]
fn term_a<S: Scalar>(
    x: S,
    y: S,
    d: S,
    sd: f64,
    cd: f64,
    alpha: f64,
    pot_ss: f64,
    pot_ds: f64,
) -> [S; 3] {
    let PlaneTerms {
        p, q, s, t, r3, r5, ..
    } = plane_terms(x, y, d, sd, cd);
    let alp1 = S::cst((1.0 - alpha) / 2.0);
    let alp2 = S::cst(alpha / 2.0);
    let qr = S::cst(3.0) * q / r5;
    let (sdv, cdv) = (S::cst(sd), S::cst(cd));
    let ss = [
        alp1 * q / r3 + alp2 * x * x * qr,
        alp1 * x / r3 * sdv + alp2 * x * y * qr,
        -alp1 * x / r3 * cdv + alp2 * x * d * qr,
    ];
    let ds = [
        alp2 * x * p * qr,
        alp1 * s / r3 + alp2 * y * p * qr,
        -alp1 * t / r3 + alp2 * d * p * qr,
    ];
    combine(ss, ds, pot_ss, pot_ds)
}

#[allow(clippy::too_many_arguments)]
fn term_b<S: Scalar>(
    x: S,
    y: S,
    d: S,
    c: S,
    sd: f64,
    cd: f64,
    alpha: f64,
    pot_ss: f64,
    pot_ds: f64,
) -> [S; 3] {
    let PlaneTerms {
        p, q, r, r2, r3, r5, ..
    } = plane_terms(x, y, d, sd, cd);
    let one = S::cst(1.0);
    let alp3 = S::cst((1.0 - alpha) / alpha);
    let qr = S::cst(3.0) * q / r5;
    let rd = r + d;
    let d12 = one / (r * rd * rd);
    let d32 = d12 * (S::cst(2.0) * r + d) / r2;
    let d33 = d12 * (S::cst(3.0) * r + d) / (r2 * rd);
    let fi1 = y * (d12 - x * x * d33);
    let fi2 = x * (d12 - y * y * d33);
    let fi3 = x / r3 - fi2;
    let fi4 = -x * y * d32;
    let fi5 = one / (r * rd) - x * x * d32;
    let sdv = S::cst(sd);
    let sdcd = S::cst(sd * cd);
    let ss = [
        -x * x * qr - alp3 * fi1 * sdv,
        -x * y * qr - alp3 * fi2 * sdv,
        -c * x * qr - alp3 * fi4 * sdv,
    ];
    let ds = [
        -x * p * qr + alp3 * fi3 * sdcd,
        -y * p * qr + alp3 * fi1 * sdcd,
        -c * p * qr + alp3 * fi5 * sdcd,
    ];
    combine(ss, ds, pot_ss, pot_ds)
}

#[allow(clippy::too_many_arguments)]
fn term_c<S: Scalar>(
    x: S,
    y: S,
    d: S,
    c: S,
    sd: f64,
    cd: f64,
    alpha: f64,
    pot_ss: f64,
    pot_ds: f64,
) -> [S; 3] {
    let PlaneTerms {
        p, q, s, t, r2, r3, r5, ..
    } = plane_terms(x, y, d, sd, cd);
    let one = S::cst(1.0);
    let three = S::cst(3.0);
    let alp4 = S::cst(1.0 - alpha);
    let alp5 = S::cst(alpha);
    let qr = three * q / r5;
    let a3 = one - three * x * x / r2;
    let a5 = one - S::cst(5.0) * x * x / r2;
    let qr5 = S::cst(5.0) * q / r2;
    let qrx = S::cst(5.0) * qr * x / r2;
    let (sdv, cdv) = (S::cst(sd), S::cst(cd));
    let sdcd = S::cst(sd * cd);
    let c2d = S::cst(cd * cd - sd * sd);
    let ss = [
        -alp4 * a3 / r3 * cdv + alp5 * c * qr * a5,
        three * x / r5 * (alp4 * y * cdv + alp5 * c * (sdv - y * qr5)),
        three * x / r5 * (-alp4 * y * sdv + alp5 * c * (cdv + d * qr5)),
    ];
    let ds = [
        alp4 * three * x * t / r5 - alp5 * c * p * qrx,
        -alp4 / r3 * (c2d - three * y * t / r2) + alp5 * three * c / r5 * (s - y * p * qr5),
        -alp4 * a3 / r3 * sdcd + alp5 * three * c / r5 * (t + d * p * qr5),
    ];
    combine(ss, ds, pot_ss, pot_ds)
}

#[inline]
fn combine<S: Scalar>(ss: [S; 3], ds: [S; 3], pot_ss: f64, pot_ds: f64) -> [S; 3] {
    let (a, b) = (S::cst(pot_ss), S::cst(pot_ds));
    [
        ss[0] * a + ds[0] * b,
        ss[1] * a + ds[1] * b,
        ss[2] * a + ds[2] * b,
    ]
}

fn check_points(receiver: &Vector3<f64>, disloc: &PointDislocation, strict: bool) -> Result<()> {
    disloc.validate()?;
    let above = if strict {
        receiver[2] >= 0.0
    } else {
        receiver[2] > 0.0
    };
    if above || !receiver[2].is_finite() {
        return Err(Error::ReceiverAboveSurface(receiver[2]));
    }
    let dist = (receiver - disloc.source).norm();
    if dist < MIN_SOURCE_DISTANCE {
        return Err(Error::CoincidentPoints(dist));
    }
    Ok(())
}

/// Displacement (same units as the slip magnitude, per km² of fault area) at
/// `receiver`, `x3 <= 0`.
pub fn green_displacement(
    receiver: &Vector3<f64>,
    disloc: &PointDislocation,
    elastic: &ElasticModel,
) -> Result<Vector3<f64>> {
    check_points(receiver, disloc, false)?;
    elastic.validate()?;
    let frame = DislocationFrame::new(&disloc.normal, &disloc.burgers_dir);
    let u = frame.displacement(
        &[receiver[0], receiver[1], receiver[2]],
        &[disloc.source[0], disloc.source[1], disloc.source[2]],
        elastic.alpha(),
    );
    Ok(Vector3::from(u) * disloc.magnitude)
}

/// Stress tensor of the Green displacement field at an interior receiver.
pub fn green_stress(
    receiver: &Vector3<f64>,
    disloc: &PointDislocation,
    elastic: &ElasticModel,
) -> Result<Matrix3<f64>> {
    check_points(receiver, disloc, true)?;
    elastic.validate()?;
    let frame = DislocationFrame::new(&disloc.normal, &disloc.burgers_dir);
    let grad = frame.displacement_gradient(
        &[receiver[0], receiver[1], receiver[2]],
        &[disloc.source[0], disloc.source[1], disloc.source[2]],
        elastic.alpha(),
    );
    Ok(elastic.stress(&grad) * disloc.magnitude)
}

/// Traction `sigma . e` on a plane with unit normal `e`.
pub fn traction(stress: &Matrix3<f64>, e: &Vector3<f64>) -> Vector3<f64> {
    stress * e
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disloc(src: [f64; 3], n: [f64; 3], b: [f64; 3]) -> PointDislocation {
        PointDislocation::new(Vector3::from(src), Vector3::from(n), Vector3::from(b), 1.0).unwrap()
    }

    #[test]
    fn rejects_bad_inputs() {
        let e = ElasticModel::default();
        let d = disloc([0.0, 0.0, -1.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]);
        assert!(matches!(
            green_displacement(&Vector3::new(0.0, 0.0, 0.5), &d, &e),
            Err(Error::ReceiverAboveSurface(_))
        ));
        assert!(matches!(
            green_displacement(&Vector3::new(0.0, 0.0, -1.0), &d, &e),
            Err(Error::CoincidentPoints(_))
        ));
        assert!(matches!(
            green_stress(&Vector3::new(1.0, 0.0, 0.0), &d, &e),
            Err(Error::ReceiverAboveSurface(_))
        ));
        assert!(PointDislocation::new(
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::z(),
            Vector3::x(),
            1.0
        )
        .is_err());
        assert!(PointDislocation::new(
            Vector3::new(0.0, 0.0, -1.0),
            Vector3::z(),
            Vector3::z(),
            1.0
        )
        .is_err());
        assert!(ElasticModel::new(1.0, 0.0).is_err());
        assert!(ElasticModel::new(-1.0, 2.0).is_err());
    }

    #[test]
    fn doubling_magnitude_doubles_output() {
        let e = ElasticModel::new(1.3, 0.8).unwrap();
        let n = Vector3::new(0.2, -0.3, 1.0).normalize();
        let b = n.cross(&Vector3::x()).normalize();
        let mut d = PointDislocation::new(Vector3::new(1.0, 2.0, -7.0), n, b, 1.0).unwrap();
        let x = Vector3::new(4.0, -3.0, -0.5);
        let u1 = green_displacement(&x, &d, &e).unwrap();
        let s1 = green_stress(&x, &d, &e).unwrap();
        d.magnitude = 2.0;
        let u2 = green_displacement(&x, &d, &e).unwrap();
        let s2 = green_stress(&x, &d, &e).unwrap();
        assert_eq!(u2, u1 * 2.0);
        assert_eq!(s2, s1 * 2.0);
    }

    #[test]
    fn mirror_symmetry_horizontal_element() {
        let e = ElasticModel::default();
        let d = disloc([0.0, 0.0, -10.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]);
        for x1 in [-20.0, -3.0, 0.5, 7.0, 40.0] {
            let u = green_displacement(&Vector3::new(x1, 0.0, 0.0), &d, &e).unwrap();
            assert!(u[1].abs() < 1e-15, "u2 = {}", u[1]);
        }
    }

    #[test]
    fn stress_is_symmetric() {
        let e = ElasticModel::new(2.0, 0.7).unwrap();
        let n = Vector3::new(-0.4, 0.1, 1.0).normalize();
        let b = Vector3::new(0.3, 1.0, 0.0).cross(&n).normalize();
        let d = PointDislocation::new(Vector3::new(0.0, 0.0, -5.0), n, b, 1.0).unwrap();
        let s = green_stress(&Vector3::new(2.0, 1.0, -1.0), &d, &e).unwrap();
        assert!((s - s.transpose()).norm() <= 1e-12 * s.norm());
    }
}
