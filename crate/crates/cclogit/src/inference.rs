//! Variance estimation from the negative Hessian of the log-likelihood.
//!
//! The information matrix is held in block form: a dense theta-theta block,
//! a theta-mass cross block, and a mass-mass block that is diagonal plus a
//! rank-2 outer-product term. The simplex constraint on the masses is
//! eliminated by substituting the last mass before differentiating, which
//! leaves the mass-mass block diagonal plus rank two in the reduced
//! coordinates as well, so the covariance of theta comes from a Schur
//! complement with Woodbury solves instead of a dense inversion.
//!
//! The mass-dependent likelihood terms are differentiated in the form that
//! is linear in the masses (both the case and the control mixture means
//! written as weighted sums), which coincides with the fitted likelihood on
//! the simplex.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{
    logistic, mixture_mean, FitResult, JumpWeights, SemiSupervisedDataset, Theta,
};

const MIN_EIGENVALUE: f64 = 1e-10;

/// Blocks of the scaled information matrix I_N = -Hessian / N on the full
/// (theta, p) coordinates.
#[derive(Debug, Clone)]
pub struct InformationBlocks {
    /// theta-theta block, (p+1) x (p+1).
    pub a_tt: DMatrix<f64>,
    /// theta-mass cross block, (p+1) x N.
    pub a_tp: DMatrix<f64>,
    /// Diagonal part of the mass-mass block: 1 / (N p_i^2).
    pub d_pp: DVector<f64>,
    /// N x 2 factor of the rank-2 part of the mass-mass block; columns are
    /// the phi and 1 - phi vectors.
    pub u_low_rank: DMatrix<f64>,
    /// 2 x 2 core of the rank-2 part.
    pub core: Matrix2<f64>,
    /// Total sample size N.
    pub n_total: usize,
}

impl InformationBlocks {
    /// Dense (p + 1 + N)-dimensional matrix; for small instances and tests.
    pub fn reassemble(&self) -> DMatrix<f64> {
        let d = self.a_tt.nrows();
        let n = self.n_total;
        let mut full = DMatrix::zeros(d + n, d + n);
        full.view_mut((0, 0), (d, d)).copy_from(&self.a_tt);
        full.view_mut((0, d), (d, n)).copy_from(&self.a_tp);
        full.view_mut((d, 0), (n, d)).copy_from(&self.a_tp.transpose());
        let pp = DMatrix::from_diagonal(&self.d_pp)
            + &self.u_low_rank * self.core * self.u_low_rank.transpose();
        full.view_mut((d, d), (n, n)).copy_from(&pp);
        full
    }
}

/// Analytic second derivatives of -l / N at the fitted point, in block form.
pub fn negative_hessian(
    theta: &Theta,
    weights: &JumpWeights,
    data: &SemiSupervisedDataset,
) -> Result<InformationBlocks> {
    data.check_theta(theta)?;
    data.check_weights(weights)?;
    if weights.iter().any(|&p| p <= 0.0) {
        return Err(Error::Argument(
            "all jump masses must be positive for the information matrix".into(),
        ));
    }
    let p = data.dim();
    let d = p + 1;
    let n_total = data.total();
    let nf = n_total as f64;
    let n1 = data.n1() as f64;
    let n0 = data.n0() as f64;

    let phis: Vec<f64> = data
        .covariates()
        .map(|x| logistic(theta.linear(x)))
        .collect();
    // case and control mixture means, both linear in the masses
    let c: f64 = phis.iter().zip(weights.iter()).map(|(f, w)| f * w).sum();
    let m: f64 = phis
        .iter()
        .zip(weights.iter())
        .map(|(f, w)| (1.0 - f) * w)
        .sum();
    if c <= 0.0 || m <= 0.0 {
        return Err(Error::Degeneracy(format!(
            "mixture means ({c}, {m}) must be positive"
        )));
    }

    // dc/dtheta and d^2 c/dtheta^2 at fixed masses
    let mut w_vec = DVector::zeros(d);
    let mut curv = DMatrix::zeros(d, d);
    let mut z = DVector::zeros(d);
    z[0] = 1.0;
    for (i, x) in data.covariates().enumerate() {
        let f = phis[i];
        let wi = weights.get(i) * f * (1.0 - f);
        z.rows_mut(1, p).copy_from(x);
        w_vec.axpy(wi, &z, 1.0);
        curv.syger(wi * (1.0 - 2.0 * f), &z, &z, 1.0);
    }
    curv.fill_upper_triangle_with_lower_triangle();

    // theta-theta block of -Hessian
    let mut a_tt = DMatrix::zeros(d, d);
    for obs in data.labeled() {
        let f = logistic(theta.linear(&obs.x));
        z.rows_mut(1, p).copy_from(&obs.x);
        a_tt.syger(f * (1.0 - f), &z, &z, 1.0);
    }
    a_tt.fill_upper_triangle_with_lower_triangle();
    a_tt += (n1 / c - n0 / m) * &curv;
    a_tt.syger(-(n1 / (c * c) + n0 / (m * m)), &w_vec, &w_vec, 1.0);
    a_tt.fill_upper_triangle_with_lower_triangle();

    // theta-mass cross block of -Hessian
    let mut a_tp = DMatrix::zeros(d, n_total);
    for (i, x) in data.covariates().enumerate() {
        let f = phis[i];
        z.rows_mut(1, p).copy_from(x);
        let g = f * (1.0 - f);
        let col = (n1 / c - n0 / m) * g * &z - (n1 * f / (c * c) - n0 * (1.0 - f) / (m * m)) * &w_vec;
        a_tp.set_column(i, &col);
    }

    // mass-mass block of -Hessian: diag(1/p_i^2) - n1 phi phi'/c^2
    //                                            - n0 psi psi'/m^2
    let d_pp = DVector::from_iterator(
        n_total,
        weights.iter().map(|&pi| 1.0 / (pi * pi * nf)),
    );
    let mut u = DMatrix::zeros(n_total, 2);
    for (i, &f) in phis.iter().enumerate() {
        u[(i, 0)] = f;
        u[(i, 1)] = 1.0 - f;
    }
    let core = Matrix2::from_diagonal(&Vector2::new(
        -n1 / (c * c * nf),
        -n0 / (m * m * nf),
    ));

    Ok(InformationBlocks {
        a_tt: a_tt / nf,
        a_tp: a_tp / nf,
        d_pp,
        u_low_rank: u,
        core,
        n_total,
    })
}

/// Reduced-coordinate view after eliminating the last mass through the
/// simplex constraint. The mass-mass block stays diagonal plus rank two.
struct ReducedInformation {
    b_tt: DMatrix<f64>,
    /// (p+1) x (N-1) cross block.
    b_tp: DMatrix<f64>,
    /// Diagonal of the reduced mass-mass block.
    diag: DVector<f64>,
    /// (N-1) x 2 factor of the reduced rank-2 part.
    v: DMatrix<f64>,
    /// 2 x 2 core of the reduced rank-2 part.
    gamma: Matrix2<f64>,
}

impl ReducedInformation {
    fn from_blocks(blocks: &InformationBlocks) -> Self {
        let d = blocks.a_tt.nrows();
        let n = blocks.n_total;
        let r = n - 1;
        let last_col = blocks.a_tp.column(n - 1).into_owned();
        let mut b_tp = DMatrix::zeros(d, r);
        for i in 0..r {
            b_tp.set_column(i, &(blocks.a_tp.column(i) - &last_col));
        }
        let diag = blocks.d_pp.rows(0, r).into_owned();
        // phi and 1-phi columns reduce to +/- the same centered vector, so
        // the rank-2 part collapses onto [ones, phi - phi_N]
        let phi_last = blocks.u_low_rank[(n - 1, 0)];
        let mut v = DMatrix::zeros(r, 2);
        for i in 0..r {
            v[(i, 0)] = 1.0;
            v[(i, 1)] = blocks.u_low_rank[(i, 0)] - phi_last;
        }
        let gamma = Matrix2::from_diagonal(&Vector2::new(
            blocks.d_pp[n - 1],
            blocks.core[(0, 0)] + blocks.core[(1, 1)],
        ));
        Self {
            b_tt: blocks.a_tt.clone(),
            b_tp,
            diag,
            v,
            gamma,
        }
    }

    /// Solve the reduced mass-mass block against each column of `rhs` via
    /// the Woodbury identity.
    fn pp_solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let dinv_rhs = DMatrix::from_fn(rhs.nrows(), rhs.ncols(), |i, j| rhs[(i, j)] / self.diag[i]);
        let dinv_v = DMatrix::from_fn(self.v.nrows(), 2, |i, j| self.v[(i, j)] / self.diag[i]);
        let gamma_inv = self
            .gamma
            .try_inverse()
            .ok_or_else(|| Error::Degeneracy("singular rank-2 core".into()))?;
        let cap = gamma_inv + self.v.transpose() * &dinv_v;
        let cap_inv = cap
            .try_inverse()
            .ok_or_else(|| Error::Degeneracy("singular Woodbury capacitance matrix".into()))?;
        Ok(&dinv_rhs - &dinv_v * (cap_inv * (self.v.transpose() * &dinv_rhs)))
    }

    /// Schur complement of the mass-mass block.
    fn schur(&self) -> Result<DMatrix<f64>> {
        let solved = self.pp_solve(&self.b_tp.transpose())?;
        let schur = &self.b_tt - &self.b_tp * solved;
        // symmetrize away solver round-off
        Ok((&schur + schur.transpose()) * 0.5)
    }
}

fn invert_spd(matrix: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eigen = matrix.clone().symmetric_eigen();
    let min = eigen.eigenvalues.min();
    if min < MIN_EIGENVALUE {
        return Err(Error::SingularInformation {
            min_eigenvalue: min,
        });
    }
    let inv_vals = eigen.eigenvalues.map(|v| 1.0 / v);
    Ok(&eigen.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eigen.eigenvectors.transpose())
}

/// Estimated covariance of theta_hat: the upper-left block of the inverse
/// information, scaled so its diagonal square roots are standard errors.
pub fn theta_covariance(blocks: &InformationBlocks) -> Result<DMatrix<f64>> {
    let reduced = ReducedInformation::from_blocks(blocks);
    let schur = reduced.schur()?;
    let inv = invert_spd(&schur)?;
    Ok(inv / blocks.n_total as f64)
}

/// Quadratic form (v', g')  I_N^{-1} (v', g')' estimating the variance of
/// sqrt(N) (v' theta_hat + integral of g d F_hat).
pub fn functional_variance(
    blocks: &InformationBlocks,
    v: &DVector<f64>,
    g_values: &DVector<f64>,
) -> Result<f64> {
    let d = blocks.a_tt.nrows();
    if v.len() != d {
        return Err(Error::Dimension {
            expected: d,
            found: v.len(),
            context: "theta direction vector",
        });
    }
    if g_values.len() != blocks.n_total {
        return Err(Error::Dimension {
            expected: blocks.n_total,
            found: g_values.len(),
            context: "g values vector",
        });
    }
    let reduced = ReducedInformation::from_blocks(blocks);
    let r = blocks.n_total - 1;
    // functional gradient in reduced coordinates: g_i - g_N
    let g_last = g_values[blocks.n_total - 1];
    let g_red = DMatrix::from_fn(r, 1, |i, _| g_values[i] - g_last);

    let p_solve_g = reduced.pp_solve(&g_red)?;
    let schur = reduced.schur()?;
    let schur_inv = invert_spd(&schur)?;
    let v_adj = v - &reduced.b_tp * p_solve_g.column(0);
    let quad_pp = (g_red.column(0).transpose() * p_solve_g.column(0))[(0, 0)];
    let quad_tt = (v_adj.transpose() * &schur_inv * &v_adj)[(0, 0)];
    Ok(quad_pp + quad_tt)
}

/// Two-sided Wald interval for each component of theta_hat.
pub fn wald_ci(fit: &FitResult, level: f64) -> Result<Vec<(f64, f64)>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Argument(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let cov = fit.theta_cov.as_ref().ok_or_else(|| {
        Error::Argument("fit carries no covariance estimate".into())
    })?;
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf((1.0 + level) / 2.0);
    let estimate = fit.theta_hat.to_vector();
    Ok((0..estimate.len())
        .map(|k| {
            let se = cov[(k, k)].max(0.0).sqrt();
            (estimate[k] - z * se, estimate[k] + z * se)
        })
        .collect())
}

/// Plug-in estimator of the marginal case proportion P(Y = 1).
pub fn case_proportion(
    theta: &Theta,
    weights: &JumpWeights,
    data: &SemiSupervisedDataset,
) -> Result<f64> {
    mixture_mean(theta, weights, data)
}
