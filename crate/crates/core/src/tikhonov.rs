//! Regularized least squares for the slip coefficients.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative normal-equation residual the solver aims for.
pub const RESIDUAL_TOL: f64 = 1e-10;

const MAX_REFINE: usize = 3;

/// Minimizer of `|A g - u|² + C |g|²` and the quantities derived from it.
#[derive(Clone, Debug)]
pub struct RegularizedSolution {
    pub coeffs: DVector<f64>,
    pub misfit: f64,
    pub reg_norm2: f64,
    pub objective: f64,
    pub c: f64,
    /// `log det(I + A Aᵀ / C)`, a by-product of the factorization.
    pub logdet: f64,
    /// `|(AᵀA + C I) g - Aᵀu| / |Aᵀu|` (zero when `Aᵀu = 0`).
    pub normal_residual: f64,
}

/// How the profiled noise variance is formed from the minimizer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaRule {
    /// `(C |g|² + F(g)) / 3M`, the regularization energy counted twice.
    #[default]
    Paper,
    /// `F(g) / 3M`.
    MaxLikelihood,
}

/// Minimizes `|A g - u|² + C |g|²` by Cholesky of the smaller of the two
/// regularized normal matrices, with iterative refinement.
pub fn solve_gmin(a: &DMatrix<f64>, u: &DVector<f64>, c: f64) -> Result<RegularizedSolution> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "regularization constant must be positive, got {c}"
        )));
    }
    if u.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: u.len(),
        });
    }
    let (n, k) = a.shape();
    // Factor whichever normal system is smaller: the identities
    // (AᵀA + C I)⁻¹Aᵀ = Aᵀ(A Aᵀ + C I)⁻¹ and Sylvester's determinant theorem
    // make the two equivalent, but refining on the small side keeps the
    // component of u outside the range of A from being amplified by 1/C.
    let primal = k <= n;
    let (mut gram, rhs) = if primal {
        (a.transpose() * a, a.transpose() * u)
    } else {
        (a * a.transpose(), u.clone())
    };
    let dim = gram.nrows();
    for i in 0..dim {
        gram[(i, i)] += c;
    }
    let chol = Cholesky::new(gram.clone())
        .ok_or_else(|| Error::Numerical("Cholesky of the regularized normal matrix failed".into()))?;
    let l = chol.l_dirty();
    let logdet = (0..dim).map(|i| 2.0 * l[(i, i)].ln()).sum::<f64>() - dim as f64 * c.ln();

    let mut z = chol.solve(&rhs);
    for _ in 0..MAX_REFINE {
        let r = &rhs - &gram * &z;
        if r.norm() <= 1e-15 * rhs.norm() {
            break;
        }
        z += chol.solve(&r);
    }
    let g = if primal { z } else { a.transpose() * &z };

    let atu = a.transpose() * u;
    let ag = a * &g;
    let resid = a.transpose() * &ag + &g * c - &atu;
    let scale = atu.norm();
    let normal_residual = if scale > 0.0 { resid.norm() / scale } else { resid.norm() };

    let misfit = (ag - u).norm_squared();
    let reg_norm2 = g.norm_squared();
    if !(misfit.is_finite() && reg_norm2.is_finite() && logdet.is_finite()) {
        return Err(Error::Numerical("non-finite regularized solution".into()));
    }
    Ok(RegularizedSolution {
        coeffs: g,
        misfit,
        reg_norm2,
        objective: misfit + c * reg_norm2,
        c,
        logdet,
        normal_residual,
    })
}

/// `F_C(g_min)` for the weighted operator and data.
pub fn f_disc(a: &DMatrix<f64>, u: &DVector<f64>, c: f64) -> Result<f64> {
    Ok(solve_gmin(a, u, c)?.objective)
}

/// Profiled noise variance for `n_stations` three-component stations.
pub fn sigma_max2(sol: &RegularizedSolution, n_stations: usize, rule: SigmaRule) -> f64 {
    let dof = 3.0 * n_stations as f64;
    match rule {
        SigmaRule::Paper => (sol.c * sol.reg_norm2 + sol.objective) / dof,
        SigmaRule::MaxLikelihood => sol.objective / dof,
    }
}
