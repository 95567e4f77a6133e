//! Discrete forward operator from slip coefficients to station displacements.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{FaultGeometry, SlipBasis};
use crate::green::{DislocationFrame, ElasticModel};
use crate::quadrature::{FaultQuadrature, StationSet};

const DUMP_MAGIC: &[u8; 8] = b"FWDMAT01";

/// Weighted operator: row `3 j + c` holds `sqrt(w_j)` times the `c`-th
/// displacement component at station `j` per unit coefficient of each mode.
#[derive(Clone, Debug)]
pub struct ForwardMatrix {
    pub matrix: DMatrix<f64>,
    pub sqrt_weights: Vec<f64>,
    pub m: FaultGeometry,
    pub p: usize,
}

impl ForwardMatrix {
    pub fn n_stations(&self) -> usize {
        self.sqrt_weights.len()
    }

    /// Operator without the quadrature row scaling.
    pub fn unweighted(&self) -> DMatrix<f64> {
        let mut a = self.matrix.clone();
        for (j, sw) in self.sqrt_weights.iter().enumerate() {
            for c in 0..3 {
                a.row_mut(3 * j + c).scale_mut(1.0 / sw);
            }
        }
        a
    }

    /// Raw dump: 8-byte magic, rows and cols as little-endian u64, then the
    /// entries row-major as little-endian f64.
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&(self.matrix.nrows() as u64).to_le_bytes())?;
        w.write_all(&(self.matrix.ncols() as u64).to_le_bytes())?;
        for i in 0..self.matrix.nrows() {
            for j in 0..self.matrix.ncols() {
                w.write_all(&self.matrix[(i, j)].to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Reads a matrix written by [`ForwardMatrix::write_binary`].
pub fn read_binary(mut r: impl Read) -> Result<DMatrix<f64>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(Error::InvalidArgument("not a forward matrix dump".into()));
    }
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    let rows = u64::from_le_bytes(buf) as usize;
    r.read_exact(&mut buf)?;
    let cols = u64::from_le_bytes(buf) as usize;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        r.read_exact(&mut buf)?;
        data.push(f64::from_le_bytes(buf));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

fn check_buried(m: &FaultGeometry, basis: &SlipBasis) -> Result<()> {
    let top = m.max_height(&basis.rect);
    if !(top < 0.0) || ![m.a, m.b, m.d].iter().all(|v| v.is_finite()) {
        return Err(Error::Inadmissible {
            a: m.a,
            b: m.b,
            d: m.d,
            reason: format!("fault reaches x3 = {top:.3} km"),
        });
    }
    Ok(())
}

/// Assembles the weighted forward matrix at `m`.
pub fn assemble(
    m: &FaultGeometry,
    basis: &SlipBasis,
    stations: &StationSet,
    rule: &FaultQuadrature,
    elastic: &ElasticModel,
    slip_dir: &Vector3<f64>,
) -> Result<ForwardMatrix> {
    check_buried(m, basis)?;
    elastic.validate()?;
    if rule.rule.rect != basis.rect {
        return Err(Error::InvalidArgument(
            "fault rule and basis live on different rectangles".into(),
        ));
    }
    let q = &rule.rule;
    let p = basis.p;
    let frame = DislocationFrame::new(&m.normal(), slip_dir);
    let alpha = elastic.alpha();
    let s = m.surface_element();
    let s1 = basis.sine_table(0, &q.x);
    let s2t = basis.sine_table(1, &q.y).transpose();
    let nrm = basis.normalization_matrix();
    let sources: Vec<[f64; 3]> = q
        .x
        .iter()
        .flat_map(|&y1| q.y.iter().map(move |&y2| m.point(y1, y2)))
        .collect();
    let (nx, ny) = (q.x.len(), q.y.len());

    let blocks: Vec<[Vec<f64>; 3]> = stations
        .points
        .par_iter()
        .zip(&stations.weights)
        .map(|(pt, &w)| {
            let mut kern = [
                DMatrix::zeros(nx, ny),
                DMatrix::zeros(nx, ny),
                DMatrix::zeros(nx, ny),
            ];
            for i in 0..nx {
                for j in 0..ny {
                    let u = frame.displacement(pt, &sources[i * ny + j], alpha);
                    let wq = q.wx[i] * q.wy[j] * s;
                    for c in 0..3 {
                        kern[c][(i, j)] = u[c] * wq;
                    }
                }
            }
            let sw = w.sqrt();
            kern.map(|k| {
                let proj = &s1 * (k * &s2t);
                let mut row = vec![0.0; p * p];
                for a in 0..p {
                    for b in 0..p {
                        row[a * p + b] = sw * nrm[(a, b)] * proj[(a, b)];
                    }
                }
                row
            })
        })
        .collect();

    let mut matrix = DMatrix::zeros(3 * stations.len(), p * p);
    for (j, rows) in blocks.iter().enumerate() {
        for (c, row) in rows.iter().enumerate() {
            for (col, v) in row.iter().enumerate() {
                matrix[(3 * j + c, col)] = *v;
            }
        }
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite forward matrix entry".into()));
    }
    Ok(ForwardMatrix {
        matrix,
        sqrt_weights: stations.weights.iter().map(|w| w.sqrt()).collect(),
        m: *m,
        p,
    })
}

/// Relative Frobenius difference between assembly at the rule's order and at
/// twice that order.
pub fn self_check(
    m: &FaultGeometry,
    basis: &SlipBasis,
    stations: &StationSet,
    rule: &FaultQuadrature,
    elastic: &ElasticModel,
    slip_dir: &Vector3<f64>,
) -> Result<f64> {
    let a = assemble(m, basis, stations, rule, elastic, slip_dir)?;
    let fine = FaultQuadrature::gauss(2 * rule.order, basis.rect)?;
    let b = assemble(m, basis, stations, &fine, elastic, slip_dir)?;
    let scale = b.matrix.norm();
    Ok(if scale > 0.0 {
        (a.matrix - b.matrix).norm() / scale
    } else {
        0.0
    })
}

/// Displacements at `receivers` from a scalar slip field given at the rule's
/// nodes (row-major, x index outer), slipping along `slip_dir`.
pub fn displacement_from_slip(
    m: &FaultGeometry,
    slip_at_nodes: &[f64],
    rule: &FaultQuadrature,
    receivers: &[[f64; 3]],
    elastic: &ElasticModel,
    slip_dir: &Vector3<f64>,
) -> Result<Vec<[f64; 3]>> {
    let q = &rule.rule;
    if slip_at_nodes.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: q.len(),
            got: slip_at_nodes.len(),
        });
    }
    if !(m.max_height(&q.rect) < 0.0) {
        return Err(Error::Inadmissible {
            a: m.a,
            b: m.b,
            d: m.d,
            reason: "fault not buried".into(),
        });
    }
    elastic.validate()?;
    let frame = DislocationFrame::new(&m.normal(), slip_dir);
    let alpha = elastic.alpha();
    let s = m.surface_element();
    let nodes: Vec<([f64; 3], f64)> = q
        .points()
        .zip(slip_at_nodes)
        .filter(|(_, g)| **g != 0.0)
        .map(|((y, w), g)| (m.point(y[0], y[1]), w * s * g))
        .collect();
    Ok(receivers
        .par_iter()
        .map(|x| {
            let mut acc = [0.0; 3];
            for (src, wg) in &nodes {
                let u = frame.displacement(x, src, alpha);
                for c in 0..3 {
                    acc[c] += wg * u[c];
                }
            }
            acc
        })
        .collect())
}

/// Unweighted station displacements for basis coefficients, evaluated by
/// summing the slip on the fault rule rather than through the matrix.
pub fn predict(
    m: &FaultGeometry,
    basis: &SlipBasis,
    coeffs: &[f64],
    stations: &StationSet,
    rule: &FaultQuadrature,
    elastic: &ElasticModel,
    slip_dir: &Vector3<f64>,
) -> Result<Vec<[f64; 3]>> {
    check_buried(m, basis)?;
    let nodes: Vec<[f64; 2]> = rule.rule.points().map(|(y, _)| y).collect();
    let slip = basis.eval(coeffs, &nodes)?;
    displacement_from_slip(m, &slip, rule, &stations.points, elastic, slip_dir)
}

/// Stacks station displacements into the weighted data vector
/// `sqrt(w_j) u_c(P_j)` matching the matrix rows.
pub fn weighted_data(stations: &StationSet, u: &[[f64; 3]]) -> Result<DVector<f64>> {
    if u.len() != stations.len() {
        return Err(Error::DimensionMismatch {
            expected: stations.len(),
            got: u.len(),
        });
    }
    Ok(DVector::from_fn(3 * u.len(), |r, _| {
        stations.weights[r / 3].sqrt() * u[r / 3][r % 3]
    }))
}
