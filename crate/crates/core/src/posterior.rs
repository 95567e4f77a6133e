//! Marginalized posterior of the fault geometry and regularization constant.
//!
//! With the slip integrated out and the noise variance profiled, the
//! unnormalized log density at `(m, C)` is
//!
//! ```text
//! -1/2 log det(I + AᵀA / C) - 3M/2 log(C |g|² + F_C(g))
//! ```
//!
//! where `A` is the weighted operator at `m` and `g` the regularized solution.
//! The determinant is evaluated on whichever side of Sylvester's identity is
//! smaller.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{assemble, weighted_data, ForwardMatrix};
use crate::geometry::{AdmissibleSet, FaultGeometry, SlipBasis};
use crate::green::ElasticModel;
use crate::quadrature::{FaultQuadrature, StationSet};
use crate::tikhonov::{solve_gmin, RegularizedSolution, SigmaRule};

/// Largest lattice accepted by [`posterior_grid`].
pub const GRID_LIMIT: usize = 100_000;

/// Prior on the regularization constant over `[10^lo, 10^hi]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CPrior {
    /// Uniform in `log10 C`.
    #[default]
    LogUniform,
    /// Uniform in `C`.
    Uniform,
}

/// Terms of one posterior evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PosteriorEval {
    pub log_density: f64,
    pub logdet_term: f64,
    pub likelihood_term: f64,
    pub prior_ok: bool,
}

impl PosteriorEval {
    fn outside() -> Self {
        Self {
            log_density: f64::NEG_INFINITY,
            logdet_term: 0.0,
            likelihood_term: 0.0,
            prior_ok: false,
        }
    }
}

/// Everything the posterior needs besides `(m, C)`.
#[derive(Clone, Debug)]
pub struct PosteriorModel {
    pub admissible: AdmissibleSet,
    pub log10_c_range: [f64; 2],
    pub c_prior: CPrior,
    pub sigma_rule: SigmaRule,
    pub basis: SlipBasis,
    pub stations: StationSet,
    pub rule: FaultQuadrature,
    pub elastic: ElasticModel,
    pub slip_fallback: Option<[f64; 3]>,
    /// Weighted data `sqrt(w_j) u_c(P_j)`.
    pub data: DVector<f64>,
}

impl PosteriorModel {
    /// Builds the model from unweighted station displacements.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        admissible: AdmissibleSet,
        log10_c_range: [f64; 2],
        basis: SlipBasis,
        stations: StationSet,
        rule: FaultQuadrature,
        elastic: ElasticModel,
        displacements: &[[f64; 3]],
    ) -> Result<Self> {
        admissible.validate()?;
        if !(log10_c_range[0] < log10_c_range[1]) {
            return Err(Error::config("log10_c_range", "need lo < hi"));
        }
        if displacements.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite data".into()));
        }
        let data = weighted_data(&stations, displacements)?;
        Ok(Self {
            admissible,
            log10_c_range,
            c_prior: CPrior::default(),
            sigma_rule: SigmaRule::default(),
            basis,
            stations,
            rule,
            elastic,
            slip_fallback: None,
            data,
        })
    }

    pub fn n_stations(&self) -> usize {
        self.stations.len()
    }

    /// Prior support of `(a, b, d, log10 C)` as a box.
    pub fn bounds(&self) -> [[f64; 2]; 4] {
        [
            self.admissible.a_range,
            self.admissible.b_range,
            self.admissible.d_range,
            self.log10_c_range,
        ]
    }

    pub fn in_support(&self, m: &FaultGeometry, log10_c: f64) -> bool {
        self.admissible.contains(m)
            && log10_c >= self.log10_c_range[0]
            && log10_c <= self.log10_c_range[1]
    }

    pub fn forward(&self, m: &FaultGeometry) -> Result<ForwardMatrix> {
        let t = m.slip_direction_or(self.slip_fallback)?;
        assemble(m, &self.basis, &self.stations, &self.rule, &self.elastic, &t)
    }

    /// Log posterior at `(m, C)`; `-inf` outside the prior support.
    pub fn log_posterior(&self, m: &FaultGeometry, c: f64) -> Result<PosteriorEval> {
        if !(c > 0.0) || !self.in_support(m, c.log10()) {
            return Ok(PosteriorEval::outside());
        }
        let fwd = self.forward(m)?;
        self.evaluate(&fwd, c)
    }

    /// Posterior terms for an already assembled operator.
    pub fn evaluate(&self, fwd: &ForwardMatrix, c: f64) -> Result<PosteriorEval> {
        let sol = solve_gmin(&fwd.matrix, &self.data, c)?;
        Ok(self.terms(&sol))
    }

    pub fn terms(&self, sol: &RegularizedSolution) -> PosteriorEval {
        let dof = 3.0 * self.n_stations() as f64;
        let energy = match self.sigma_rule {
            SigmaRule::Paper => sol.c * sol.reg_norm2 + sol.objective,
            SigmaRule::MaxLikelihood => sol.objective,
        };
        let logdet_term = -0.5 * sol.logdet;
        let likelihood_term = -0.5 * dof * energy.ln();
        let jacobian = match self.c_prior {
            CPrior::LogUniform => 0.0,
            CPrior::Uniform => sol.c.ln(),
        };
        PosteriorEval {
            log_density: logdet_term + likelihood_term + jacobian,
            logdet_term,
            likelihood_term,
            prior_ok: true,
        }
    }

    /// Log density over `x = (a, b, d, log10 C)`, the sampler's coordinates.
    /// Failures inside the support are logged and treated as zero density.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let m = FaultGeometry::new(x[0], x[1], x[2]);
        if !self.in_support(&m, x[3]) {
            return f64::NEG_INFINITY;
        }
        match self.log_posterior(&m, 10f64.powf(x[3])) {
            Ok(e) => e.log_density,
            Err(e) => {
                log::warn!("posterior evaluation failed at {x:?}: {e}");
                f64::NEG_INFINITY
            }
        }
    }

    /// Same density with `log10 C` frozen.
    pub fn log_density_fixed_c(&self, m: &[f64], log10_c: f64) -> f64 {
        self.log_density(&[m[0], m[1], m[2], log10_c])
    }
}

/// Normalized posterior on a tensor lattice of `(a, b, d, log10 C)` values.
#[derive(Clone, Debug)]
pub struct PosteriorGrid {
    pub axes: [Vec<f64>; 4],
    /// Probabilities, `log10 C` index fastest.
    pub prob: Vec<f64>,
}

impl PosteriorGrid {
    fn shape(&self) -> [usize; 4] {
        [
            self.axes[0].len(),
            self.axes[1].len(),
            self.axes[2].len(),
            self.axes[3].len(),
        ]
    }

    /// Marginal probabilities along `coord`.
    pub fn marginal(&self, coord: usize) -> Vec<f64> {
        let shape = self.shape();
        let mut out = vec![0.0; shape[coord]];
        for (flat, p) in self.prob.iter().enumerate() {
            let mut rem = flat;
            let mut idx = [0usize; 4];
            for k in (0..4).rev() {
                idx[k] = rem % shape[k];
                rem /= shape[k];
            }
            out[idx[coord]] += p;
        }
        out
    }
}

/// Evaluates and normalizes the posterior on a lattice. Each geometry node is
/// assembled once and reused for all `C` values.
pub fn posterior_grid(model: &PosteriorModel, axes: [Vec<f64>; 4]) -> Result<PosteriorGrid> {
    let nodes = axes.iter().map(Vec::len).product::<usize>();
    if nodes > GRID_LIMIT {
        return Err(Error::LatticeTooLarge {
            nodes,
            limit: GRID_LIMIT,
        });
    }
    if nodes == 0 {
        return Err(Error::EmptySupport);
    }
    let mut geoms = Vec::with_capacity(axes[0].len() * axes[1].len() * axes[2].len());
    for &a in &axes[0] {
        for &b in &axes[1] {
            for &d in &axes[2] {
                geoms.push(FaultGeometry::new(a, b, d));
            }
        }
    }
    let logs: Vec<Vec<f64>> = geoms
        .par_iter()
        .map(|m| -> Result<Vec<f64>> {
            let neg = vec![f64::NEG_INFINITY; axes[3].len()];
            if !model.admissible.contains(m) {
                return Ok(neg);
            }
            let fwd = model.forward(m)?;
            axes[3]
                .iter()
                .map(|&lc| {
                    if !model.in_support(m, lc) {
                        return Ok(f64::NEG_INFINITY);
                    }
                    Ok(model.evaluate(&fwd, 10f64.powf(lc))?.log_density)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let flat: Vec<f64> = logs.into_iter().flatten().collect();
    Ok(PosteriorGrid {
        axes,
        prob: normalize_log(&flat)?,
    })
}

/// `exp(l - max)` normalized to sum 1.
pub fn normalize_log(logs: &[f64]) -> Result<Vec<f64>> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::EmptySupport);
    }
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / total).collect())
}
