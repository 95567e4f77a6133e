//! Shared fixtures: a tiny posterior and its naive parameter-space oracle.
#![allow(dead_code)]

use faultinv::forward::predict;
use faultinv::geometry::{AdmissibleSet, FaultGeometry, SlipBasis};
use faultinv::green::ElasticModel;
use faultinv::posterior::PosteriorModel;
use faultinv::quadrature::{gauss_stations, FaultQuadrature, Rect};
use nalgebra::DMatrix;

pub fn tiny_model(data_scale: f64) -> PosteriorModel {
    let rect = Rect::square(20.0);
    let stations = gauss_stations(2, Rect::square(30.0)).unwrap();
    let basis = SlipBasis::new(2, rect).unwrap();
    let rule = FaultQuadrature::gauss(16, rect).unwrap();
    let elastic = ElasticModel::default();
    let truth = FaultGeometry::new(-0.1, -0.2, -12.0);
    let g = [0.8, -0.3, 0.5, 0.1];
    let u = predict(&truth, &basis, &g, &stations, &rule, &elastic, &truth.slip_direction().unwrap()).unwrap();
    let noisy: Vec<[f64; 3]> = u
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let wiggle = |c: usize| 1.0 + 0.1 * ((3 * j + c) as f64 * 1.7).sin();
            [0, 1, 2].map(|c| data_scale * v[c] * wiggle(c))
        })
        .collect();
    PosteriorModel::new(AdmissibleSet::default(), [-7.0, -2.0], basis, stations, rule, elastic, &noisy).unwrap()
}

/// Weighted operator built column by column from direct summation.
pub fn naive_operator(model: &PosteriorModel, m: &FaultGeometry) -> DMatrix<f64> {
    let k = model.basis.dim();
    let n = model.n_stations();
    let t = m.slip_direction().unwrap();
    let mut a = DMatrix::zeros(3 * n, k);
    for col in 0..k {
        let mut e = vec![0.0; k];
        e[col] = 1.0;
        let u = predict(m, &model.basis, &e, &model.stations, &model.rule, &model.elastic, &t).unwrap();
        for j in 0..n {
            for c in 0..3 {
                a[(3 * j + c, col)] = model.stations.weights[j].sqrt() * u[j][c];
            }
        }
    }
    a
}

/// Unnormalized log posterior from parameter-space normal equations and an
/// LU determinant of `I + AᵀA / C`.
pub fn naive_log_posterior(model: &PosteriorModel, m: &FaultGeometry, c: f64) -> f64 {
    let a = naive_operator(model, m);
    let u = &model.data;
    let k = a.ncols();
    let lhs = a.transpose() * &a + DMatrix::identity(k, k) * c;
    let g = lhs.clone().lu().solve(&(a.transpose() * u)).unwrap();
    let f = (&a * &g - u).norm_squared() + c * g.norm_squared();
    let det = (lhs / c).determinant();
    let dof = 3.0 * model.n_stations() as f64;
    -0.5 * det.ln() - 0.5 * dof * (c * g.norm_squared() + f).ln()
}
