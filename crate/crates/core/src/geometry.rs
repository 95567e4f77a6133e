//! Fault plane parameterization, the admissible parameter set and the
//! H¹₀-orthonormal sine basis for slip on the fault rectangle.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{Rect, TensorRule};

/// Fault plane `x3 = a x1 + b x2 + d` over the rectangle R.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultGeometry {
    pub a: f64,
    pub b: f64,
    pub d: f64,
}

impl FaultGeometry {
    pub fn new(a: f64, b: f64, d: f64) -> Self {
        Self { a, b, d }
    }

    pub fn from_array(m: [f64; 3]) -> Self {
        Self::new(m[0], m[1], m[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.a, self.b, self.d]
    }

    /// Surface element `sqrt(1 + a² + b²)`.
    pub fn surface_element(&self) -> f64 {
        (1.0 + self.a * self.a + self.b * self.b).sqrt()
    }

    /// Upward unit normal `(-a, -b, 1) / s`.
    pub fn normal(&self) -> Vector3<f64> {
        Vector3::new(-self.a, -self.b, 1.0) / self.surface_element()
    }

    /// Point of the plane above `(y1, y2)`.
    pub fn point(&self, y1: f64, y2: f64) -> [f64; 3] {
        [y1, y2, self.a * y1 + self.b * y2 + self.d]
    }

    /// Shallowest `x3` of the plane over `rect` (attained at a corner).
    pub fn max_height(&self, rect: &Rect) -> f64 {
        rect.corners()
            .iter()
            .map(|c| self.a * c[0] + self.b * c[1] + self.d)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Unit tangent of steepest descent, `(-a, -b, -(a² + b²))` normalized.
    pub fn slip_direction(&self) -> Result<Vector3<f64>> {
        let g2 = self.a * self.a + self.b * self.b;
        if !(g2 > 0.0) {
            return Err(Error::DegenerateSlipDirection);
        }
        let t = Vector3::new(-self.a, -self.b, -g2);
        Ok(t / t.norm())
    }

    /// Like [`slip_direction`](Self::slip_direction) but falls back to a
    /// configured direction, projected onto the plane, for horizontal planes.
    pub fn slip_direction_or(&self, fallback: Option<[f64; 3]>) -> Result<Vector3<f64>> {
        match (self.slip_direction(), fallback) {
            (Ok(t), _) => Ok(t),
            (Err(_), Some(f)) => {
                let n = self.normal();
                let f = Vector3::from(f);
                let t = f - n * n.dot(&f);
                let len = t.norm();
                if !(len > 1e-12) {
                    return Err(Error::DegenerateSlipDirection);
                }
                Ok(t / len)
            }
            (Err(e), None) => Err(e),
        }
    }
}

/// Prior box on `(a, b, d)` intersected with the depth constraint on R, and
/// the measurement window V.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissibleSet {
    pub a_range: [f64; 2],
    pub b_range: [f64; 2],
    pub d_range: [f64; 2],
    /// Minimum depth (km) of every point of the fault below the surface.
    pub depth_margin: f64,
    pub fault_rect: Rect,
    pub window: Rect,
}

impl Default for AdmissibleSet {
    fn default() -> Self {
        Self {
            a_range: [-1.0, 2.0],
            b_range: [-1.0, 2.0],
            d_range: [-100.0, -1.0],
            depth_margin: 1.0,
            fault_rect: Rect::square(20.0),
            window: Rect::square(30.0),
        }
    }
}

impl AdmissibleSet {
    pub fn validate(&self) -> Result<()> {
        for (key, r) in [
            ("a_range", self.a_range),
            ("b_range", self.b_range),
            ("d_range", self.d_range),
        ] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] < r[1]) {
                return Err(Error::config(key, format!("need lo < hi, got {r:?}")));
            }
        }
        if !(self.depth_margin >= 0.0) {
            return Err(Error::config("depth_margin", "must be >= 0"));
        }
        self.fault_rect
            .validate()
            .map_err(|e| Error::config("fault_rect", e.to_string()))?;
        self.window
            .validate()
            .map_err(|e| Error::config("window", e.to_string()))?;
        Ok(())
    }

    pub fn in_box(&self, m: &FaultGeometry) -> bool {
        let inside = |v: f64, r: [f64; 2]| v >= r[0] && v <= r[1];
        inside(m.a, self.a_range) && inside(m.b, self.b_range) && inside(m.d, self.d_range)
    }

    pub fn deep_enough(&self, m: &FaultGeometry) -> bool {
        m.max_height(&self.fault_rect) <= -self.depth_margin
    }

    pub fn contains(&self, m: &FaultGeometry) -> bool {
        self.in_box(m) && self.deep_enough(m)
    }

    /// `Ok(())` when `m` is admissible, otherwise the reason.
    pub fn check(&self, m: &FaultGeometry) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::Inadmissible {
                a: m.a,
                b: m.b,
                d: m.d,
                reason,
            })
        };
        if ![m.a, m.b, m.d].iter().all(|v| v.is_finite()) {
            return fail("non-finite parameter".into());
        }
        if !self.in_box(m) {
            return fail("outside the prior box".into());
        }
        let top = m.max_height(&self.fault_rect);
        if top > -self.depth_margin {
            return fail(format!(
                "shallowest fault point at x3 = {top:.3} km, margin {} km",
                self.depth_margin
            ));
        }
        Ok(())
    }
}

/// Tensor sine modes on R normalized so that `∫_R |∇φ_kl|² = 1`.
///
/// Column order is `(k - 1) p + (l - 1)` for modes `k, l = 1..=p`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlipBasis {
    pub p: usize,
    pub rect: Rect,
}

impl SlipBasis {
    pub fn new(p: usize, rect: Rect) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidArgument("basis needs p >= 1".into()));
        }
        rect.validate()?;
        Ok(Self { p, rect })
    }

    pub fn dim(&self) -> usize {
        self.p * self.p
    }

    pub fn index(&self, k: usize, l: usize) -> usize {
        debug_assert!(k >= 1 && k <= self.p && l >= 1 && l <= self.p);
        (k - 1) * self.p + (l - 1)
    }

    /// Mode numbers `(k, l)` of column `idx`.
    pub fn modes(&self, idx: usize) -> (usize, usize) {
        (idx / self.p + 1, idx % self.p + 1)
    }

    /// Dirichlet Laplacian eigenvalue `π² (k²/L1² + l²/L2²)`.
    pub fn eigenvalue(&self, k: usize, l: usize) -> f64 {
        let (l1, l2) = (self.rect.width(), self.rect.height());
        let (k, l) = (k as f64, l as f64);
        PI * PI * (k * k / (l1 * l1) + l * l / (l2 * l2))
    }

    pub fn normalization(&self, k: usize, l: usize) -> f64 {
        let area = self.rect.area();
        1.0 / (0.25 * area * self.eigenvalue(k, l)).sqrt()
    }

    /// Table `S[k-1, i] = sin(k π (y_i - r1min) / L1)` along axis 0 or 1.
    pub fn sine_table(&self, axis: usize, coords: &[f64]) -> DMatrix<f64> {
        let (lo, len) = match axis {
            0 => (self.rect.x0, self.rect.width()),
            _ => (self.rect.y0, self.rect.height()),
        };
        DMatrix::from_fn(self.p, coords.len(), |k, i| {
            ((k + 1) as f64 * PI * (coords[i] - lo) / len).sin()
        })
    }

    /// Diagonal normalization arranged as a `p x p` matrix `N[k-1, l-1]`.
    pub fn normalization_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p, self.p, |k, l| self.normalization(k + 1, l + 1))
    }

    pub fn eval_mode(&self, k: usize, l: usize, y1: f64, y2: f64) -> f64 {
        let u = (y1 - self.rect.x0) / self.rect.width();
        let v = (y2 - self.rect.y0) / self.rect.height();
        self.normalization(k, l) * (k as f64 * PI * u).sin() * (l as f64 * PI * v).sin()
    }

    pub fn grad_mode(&self, k: usize, l: usize, y1: f64, y2: f64) -> [f64; 2] {
        let (l1, l2) = (self.rect.width(), self.rect.height());
        let (kf, lf) = (k as f64, l as f64);
        let u = kf * PI * (y1 - self.rect.x0) / l1;
        let v = lf * PI * (y2 - self.rect.y0) / l2;
        let n = self.normalization(k, l);
        [
            n * kf * PI / l1 * u.cos() * v.sin(),
            n * lf * PI / l2 * u.sin() * v.cos(),
        ]
    }

    fn check_len(&self, coeffs: &[f64]) -> Result<()> {
        if coeffs.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: coeffs.len(),
            });
        }
        Ok(())
    }

    /// Slip `Σ c_kl φ_kl` at each point.
    pub fn eval(&self, coeffs: &[f64], points: &[[f64; 2]]) -> Result<Vec<f64>> {
        self.check_len(coeffs)?;
        let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
        let s1 = self.sine_table(0, &xs);
        let s2 = self.sine_table(1, &ys);
        let nrm = self.normalization_matrix();
        Ok((0..points.len())
            .map(|i| {
                let mut acc = 0.0;
                for k in 0..self.p {
                    let mut row = 0.0;
                    for l in 0..self.p {
                        row += coeffs[k * self.p + l] * nrm[(k, l)] * s2[(l, i)];
                    }
                    acc += row * s1[(k, i)];
                }
                acc
            })
            .collect())
    }

    /// Gradient of the slip at each point.
    pub fn eval_gradient(&self, coeffs: &[f64], points: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
        self.check_len(coeffs)?;
        Ok(points
            .iter()
            .map(|pt| {
                let mut g = [0.0; 2];
                for (idx, c) in coeffs.iter().enumerate() {
                    if *c == 0.0 {
                        continue;
                    }
                    let (k, l) = self.modes(idx);
                    let gm = self.grad_mode(k, l, pt[0], pt[1]);
                    g[0] += c * gm[0];
                    g[1] += c * gm[1];
                }
                g
            })
            .collect())
    }

    /// H¹₀ norm squared of a coefficient vector (the basis is orthonormal).
    pub fn norm2(&self, coeffs: &[f64]) -> f64 {
        coeffs.iter().map(|c| c * c).sum()
    }

    /// H¹₀-orthogonal projection of a slip that vanishes on ∂R, using
    /// `∫∇f·∇φ = λ_kl ∫ f φ` and a tensor Gauss rule of `order` per axis.
    pub fn project(&self, target: impl Fn(f64, f64) -> f64, order: usize) -> DVector<f64> {
        let rule = TensorRule::gauss(order, order, self.rect);
        let fw = DMatrix::from_fn(rule.x.len(), rule.y.len(), |i, j| {
            rule.wx[i] * rule.wy[j] * target(rule.x[i], rule.y[j])
        });
        let s1 = self.sine_table(0, &rule.x);
        let s2 = self.sine_table(1, &rule.y);
        let m = &s1 * fw * s2.transpose();
        DVector::from_fn(self.dim(), |idx, _| {
            let (k, l) = self.modes(idx);
            self.eigenvalue(k, l) * self.normalization(k, l) * m[(k - 1, l - 1)]
        })
    }

    /// `∫_R |∇f|²` by a tensor Gauss rule, `grad` returning `∇f`.
    pub fn energy(&self, grad: impl Fn(f64, f64) -> [f64; 2], order: usize) -> f64 {
        TensorRule::gauss(order, order, self.rect).integrate(|x, y| {
            let g = grad(x, y);
            g[0] * g[0] + g[1] * g[1]
        })
    }

    /// Coefficients of this basis re-indexed into a basis with `p_new` modes,
    /// zero-padded or truncated.
    pub fn reindex(&self, coeffs: &[f64], p_new: usize) -> Vec<f64> {
        let mut out = vec![0.0; p_new * p_new];
        for k in 0..self.p.min(p_new) {
            for l in 0..self.p.min(p_new) {
                out[k * p_new + l] = coeffs[k * self.p + l];
            }
        }
        out
    }
}
