//! Quadrature on rectangles: Gauss–Legendre rules, measurement station sets
//! with their weights, and the tensor rule used on the fault rectangle.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]` in km.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        let r = Self { x0, x1, y0, y1 };
        r.validate()?;
        Ok(r)
    }

    pub fn square(half: f64) -> Self {
        Self {
            x0: -half,
            x1: half,
            y0: -half,
            y1: half,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x0, self.x1, self.y0, self.y1]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x1 <= self.x0 || self.y1 <= self.y0 {
            return Err(Error::InvalidArgument(format!(
                "degenerate rectangle {self:?}"
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    pub fn corners(&self) -> [[f64; 2]; 4] {
        [
            [self.x0, self.y0],
            [self.x1, self.y0],
            [self.x1, self.y1],
            [self.x0, self.y1],
        ]
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    let nf = n as f64;
    for i in 0..m {
        // Tricomi's initial guess, then Newton on P_n.
        let mut x = ((i as f64 + 0.75) / (nf + 0.5) * PI).cos()
            * (1.0 - (nf - 1.0) / (8.0 * nf * nf * nf));
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|v| v * half).collect(),
    )
}

/// Tensor-product Gauss–Legendre rule on a rectangle, kept in factored form
/// so integrals against separable functions can be contracted axis by axis.
#[derive(Clone, Debug)]
pub struct TensorRule {
    pub rect: Rect,
    pub x: Vec<f64>,
    pub wx: Vec<f64>,
    pub y: Vec<f64>,
    pub wy: Vec<f64>,
}

impl TensorRule {
    pub fn gauss(n_x: usize, n_y: usize, rect: Rect) -> Self {
        let (x, wx) = gauss_legendre_on(n_x, rect.x0, rect.x1);
        let (y, wy) = gauss_legendre_on(n_y, rect.y0, rect.y1);
        Self { rect, x, wx, y, wy }
    }

    pub fn len(&self) -> usize {
        self.x.len() * self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Nodes and weights flattened in row-major order (x index outer).
    pub fn points(&self) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        self.x.iter().zip(&self.wx).flat_map(move |(&x, &wx)| {
            self.y.iter().zip(&self.wy).map(move |(&y, &wy)| ([x, y], wx * wy))
        })
    }

    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.points().map(|(p, w)| w * f(p[0], p[1])).sum()
    }
}

/// Smallest default per-axis order of the fault rule.
pub const MIN_FAULT_ORDER: usize = 40;

/// Quadrature rule on the fault rectangle R used to discretize the slip
/// integral.
#[derive(Clone, Debug)]
pub struct FaultQuadrature {
    pub order: usize,
    pub rule: TensorRule,
}

impl FaultQuadrature {
    pub fn gauss(order: usize, rect: Rect) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument("fault rule order must be >= 1".into()));
        }
        rect.validate()?;
        Ok(Self {
            order,
            rule: TensorRule::gauss(order, order, rect),
        })
    }

    /// Default per-axis order for a sine basis with `p` modes per axis. For a
    /// 40 km rectangle about 10 km deep or deeper this keeps the
    /// assembled operator within about 1e-8 of the doubled rule. The floor is
    /// there because resolving the kernel depends on depth, not on `p`.
    pub fn default_order(p: usize) -> usize {
        (3 * p / 2 + 10).max(MIN_FAULT_ORDER)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StationMode {
    GaussTensor,
    FixedStations,
}

/// Measurement points on `x3 = 0` and their quadrature weights (km²).
#[derive(Clone, Debug)]
pub struct StationSet {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub mode: StationMode,
    pub window: Rect,
}

/// A station whose weight exceeds `2|V|/M_N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightViolation {
    pub index: usize,
    pub weight: f64,
    pub bound: f64,
}

impl StationSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Upper weight bound `2|V| / M_N`.
    pub fn weight_bound(&self) -> f64 {
        2.0 * self.window.area() / self.len() as f64
    }

    pub fn weight_violations(&self) -> Vec<WeightViolation> {
        let bound = self.weight_bound();
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > bound)
            .map(|(index, &weight)| WeightViolation {
                index,
                weight,
                bound,
            })
            .collect()
    }

    /// Checks positivity and the weight bound. With `strict` a violated bound
    /// is an error, otherwise it is logged as a warning.
    pub fn validate(&self, strict: bool) -> Result<()> {
        if self.points.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.points.len(),
                got: self.weights.len(),
            });
        }
        if self.is_empty() {
            return Err(Error::InvalidArgument("empty station set".into()));
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "station weight {w} is not positive"
            )));
        }
        let violations = self.weight_violations();
        for v in &violations {
            log::warn!(
                "station {} weight {:.4} exceeds bound 2|V|/M_N = {:.4}",
                v.index,
                v.weight,
                v.bound
            );
        }
        if strict && !violations.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{} station weight(s) exceed 2|V|/M_N",
                violations.len()
            )));
        }
        Ok(())
    }

    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p[0], p[1]))
            .sum()
    }
}

/// Tensor Gauss–Legendre stations on `window`, `n_per_axis^2` of them.
pub fn gauss_stations(n_per_axis: usize, window: Rect) -> Result<StationSet> {
    if n_per_axis == 0 {
        return Err(Error::InvalidArgument("n_per_axis must be >= 1".into()));
    }
    window.validate()?;
    let rule = TensorRule::gauss(n_per_axis, n_per_axis, window);
    let (points, weights) = rule.points().map(|(p, w)| ([p[0], p[1], 0.0], w)).unzip();
    Ok(StationSet {
        points,
        weights,
        mode: StationMode::GaussTensor,
        window,
    })
}

/// Stations at arbitrary positions weighted by the areas of their Voronoi
/// cells clipped to `window`.
pub fn station_weights_from_layout(points: &[[f64; 2]], window: Rect) -> Result<StationSet> {
    window.validate()?;
    if points.is_empty() {
        return Err(Error::InvalidArgument("empty station layout".into()));
    }
    for (i, p) in points.iter().enumerate() {
        if !window.contains(p[0], p[1]) {
            return Err(Error::InvalidArgument(format!(
                "station {i} at ({}, {}) lies outside the window",
                p[0], p[1]
            )));
        }
        for (j, q) in points[..i].iter().enumerate() {
            if p == q {
                return Err(Error::InvalidArgument(format!(
                    "stations {j} and {i} coincide at ({}, {})",
                    p[0], p[1]
                )));
            }
        }
    }
    let weights = points
        .iter()
        .enumerate()
        .map(|(i, _)| polygon_area(&voronoi_cell(points, i, window)))
        .collect();
    Ok(StationSet {
        points: points.iter().map(|p| [p[0], p[1], 0.0]).collect(),
        weights,
        mode: StationMode::FixedStations,
        window,
    })
}

/// Reads `x1,x2` columns (km) from a CSV file with a header row.
pub fn read_layout_csv(path: &Path) -> Result<Vec<[f64; 2]>> {
    #[derive(Deserialize)]
    struct Row {
        x1: f64,
        x2: f64,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: Row = row?;
        out.push([r.x1, r.x2]);
    }
    Ok(out)
}

/// Voronoi cell of `points[i]` clipped to the window, as a convex polygon.
fn voronoi_cell(points: &[[f64; 2]], i: usize, window: Rect) -> Vec<[f64; 2]> {
    let mut poly: Vec<[f64; 2]> = window.corners().to_vec();
    let p = points[i];
    for (j, q) in points.iter().enumerate() {
        if j == i {
            continue;
        }
        // keep {x : (x - mid) . (q - p) <= 0}
        let nrm = [q[0] - p[0], q[1] - p[1]];
        let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
        poly = clip_half_plane(&poly, nrm, mid);
        if poly.is_empty() {
            break;
        }
    }
    poly
}

fn clip_half_plane(poly: &[[f64; 2]], nrm: [f64; 2], mid: [f64; 2]) -> Vec<[f64; 2]> {
    let side = |v: &[f64; 2]| (v[0] - mid[0]) * nrm[0] + (v[1] - mid[1]) * nrm[1];
    let mut out = Vec::with_capacity(poly.len() + 1);
    for k in 0..poly.len() {
        let a = poly[k];
        let b = poly[(k + 1) % poly.len()];
        let (sa, sb) = (side(&a), side(&b));
        if sa <= 0.0 {
            out.push(a);
        }
        if (sa < 0.0 && sb > 0.0) || (sa > 0.0 && sb < 0.0) {
            let t = sa / (sa - sb);
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|k| {
            let a = poly[k];
            let b = poly[(k + 1) % n];
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    0.5 * twice.abs()
}

/// Largest absolute difference between the station rule and a reference rule
/// over a family of integrands on the window.
pub fn quad_exactness_defect(
    stations: &StationSet,
    reference: &StationSet,
    integrands: &[&dyn Fn(f64, f64) -> f64],
) -> f64 {
    integrands
        .iter()
        .map(|f| (stations.integrate(f) - reference.integrate(f)).abs())
        .fold(0.0, f64::max)
}
