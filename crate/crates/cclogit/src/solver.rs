//! Alternating maximization over theta and the jump masses.
//!
//! Each outer iteration maximizes the theta-step objective with the masses
//! held fixed (Newton with backtracking), then applies the closed-form mass
//! update. Iteration stops when both parameter blocks move by less than the
//! tolerance in Euclidean norm.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::inference;
use crate::model::{
    grad_theta_objective, hessian_theta_objective, log_likelihood, logistic, mixture_mean,
    theta_objective, FitResult, FitWarning, JumpWeights, SemiSupervisedDataset, Theta,
};

/// Tuning knobs for the alternating solver.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Outer stopping tolerance on both parameter blocks.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Starting theta; defaults to the prospective fit on the labeled rows.
    pub theta_init: Option<Theta>,
    /// Starting masses; defaults to uniform 1/N.
    pub p_init: Option<JumpWeights>,
    /// Gradient-norm tolerance for the inner theta maximization.
    pub inner_grad_tol: f64,
    /// Divide the mass update by its sum after each step. Off by default:
    /// the literal update does not preserve the simplex mid-iteration but
    /// recovers it at convergence.
    pub renormalize_p: bool,
    /// Abort with a divergence error when |theta| exceeds this bound.
    pub divergence_bound: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            max_iterations: 500,
            theta_init: None,
            p_init: None,
            inner_grad_tol: 1e-8,
            renormalize_p: false,
            divergence_bound: 50.0,
        }
    }
}

const INNER_MAX_ITER: usize = 200;
const BETA_IDENTIFIABILITY_TOL: f64 = 1e-3;

/// Maximize the theta-step objective with the masses fixed.
///
/// Newton steps with backtracking line search; falls back to the gradient
/// direction when the Newton system is not an ascent direction. Returns the
/// best iterate found if the gradient tolerance is not reached within the
/// internal cap.
pub fn theta_step(
    data: &SemiSupervisedDataset,
    weights: &JumpWeights,
    theta_start: &Theta,
    opts: &SolverOptions,
) -> Result<Theta> {
    data.check_theta(theta_start)?;
    data.check_weights(weights)?;
    let mut value = theta_objective(theta_start, weights, data)?;
    if !value.is_finite() {
        return Err(Error::Argument(
            "theta-step objective is not finite at the starting point".into(),
        ));
    }
    let mut theta = theta_start.clone();
    for _ in 0..INNER_MAX_ITER {
        let grad = grad_theta_objective(&theta, weights, data)?;
        if grad.norm() <= opts.inner_grad_tol {
            break;
        }
        let hess = hessian_theta_objective(&theta, weights, data)?;
        // Newton direction for a maximization: solve (-H) d = g.
        let direction = (-hess)
            .cholesky()
            .map(|ch| ch.solve(&grad))
            .filter(|d| d.dot(&grad) > 0.0)
            .unwrap_or_else(|| grad.clone());
        let Some((next, next_value)) = backtrack(data, weights, &theta, value, &grad, &direction)
        else {
            break; // no ascent possible at floating precision
        };
        theta = next;
        value = next_value;
        if theta.to_vector().norm() > opts.divergence_bound {
            return Err(Error::Divergence {
                theta_norm: theta.to_vector().norm(),
                bound: opts.divergence_bound,
            });
        }
    }
    Ok(theta)
}

fn backtrack(
    data: &SemiSupervisedDataset,
    weights: &JumpWeights,
    theta: &Theta,
    value: f64,
    grad: &DVector<f64>,
    direction: &DVector<f64>,
) -> Option<(Theta, f64)> {
    let base = theta.to_vector();
    let slope = grad.dot(direction);
    let mut step = 1.0;
    for _ in 0..60 {
        let candidate = Theta::from_vector(&(&base + step * direction));
        let v = theta_objective(&candidate, weights, data).ok()?;
        if v.is_finite() && v >= value + 1e-4 * step * slope {
            return Some((candidate, v));
        }
        step *= 0.5;
    }
    None
}

/// Closed-form mass update given the current theta.
///
/// Applies the literal update; the result need not sum to one. With
/// `renormalize` the vector is divided by its sum afterward.
pub fn p_step(
    data: &SemiSupervisedDataset,
    theta: &Theta,
    weights: &JumpWeights,
    renormalize: bool,
) -> Result<JumpWeights> {
    data.check_theta(theta)?;
    data.check_weights(weights)?;
    let sum = weights.sum();
    if sum <= 0.0 || !sum.is_finite() {
        return Err(Error::Degeneracy(format!(
            "jump masses sum to {sum} in the mass update"
        )));
    }
    // masses are proportions: evaluate c with them rescaled to the simplex
    let c = mixture_mean(theta, weights, data)? / sum;
    if c <= 0.0 || c >= 1.0 || !c.is_finite() {
        return Err(Error::Degeneracy(format!(
            "mixture mean {c} outside (0, 1) in the mass update"
        )));
    }
    let n1 = data.n1() as f64;
    let n0 = data.n0() as f64;
    let rest = (data.total() - data.n()) as f64;
    let mut masses = DVector::zeros(data.total());
    for (i, x) in data.covariates().enumerate() {
        let f = logistic(theta.linear(x));
        masses[i] = 1.0 / (n1 / c * f + n0 / (1.0 - c) * (1.0 - f) + rest);
    }
    if renormalize {
        let total = masses.sum();
        masses /= total;
    }
    JumpWeights::new(masses)
}

/// Log-likelihood evaluated with the masses rescaled onto the simplex.
/// The likelihood only compares meaningfully between simplex points; the
/// literal mass update drifts off it mid-iteration.
fn normalized_loglik(
    theta: &Theta,
    weights: &JumpWeights,
    data: &SemiSupervisedDataset,
) -> Result<f64> {
    let sum = weights.sum();
    if sum <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let normalized = JumpWeights::new(weights.as_vector() / sum)?;
    log_likelihood(theta, &normalized, data)
}

/// Run the alternating maximization to convergence.
///
/// The recorded log-likelihood trace is evaluated at the masses rescaled
/// onto the simplex, so it is monotone along the iterations and equals the
/// raw likelihood at convergence.
pub fn fit_mle(data: &SemiSupervisedDataset, opts: &SolverOptions) -> Result<FitResult> {
    let mut weights = match &opts.p_init {
        Some(p) => {
            data.check_weights(p)?;
            p.clone()
        }
        None => JumpWeights::uniform(data.total()),
    };
    let mut theta = match &opts.theta_init {
        Some(t) => {
            data.check_theta(t)?;
            t.clone()
        }
        None => initial_theta(data, opts),
    };

    let mut trace = vec![normalized_loglik(&theta, &weights, data)?];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..opts.max_iterations {
        iterations += 1;
        let theta_next = theta_step(data, &weights, &theta, opts)?;
        let weights_next = p_step(data, &theta_next, &weights, opts.renormalize_p)?;
        let theta_move = (theta_next.to_vector() - theta.to_vector()).norm();
        let p_move = (weights_next.as_vector() - weights.as_vector()).norm();
        theta = theta_next;
        weights = weights_next;
        trace.push(normalized_loglik(&theta, &weights, data)?);
        if theta.to_vector().norm() > opts.divergence_bound {
            return Err(Error::Divergence {
                theta_norm: theta.to_vector().norm(),
                bound: opts.divergence_bound,
            });
        }
        if theta_move <= opts.epsilon && p_move <= opts.epsilon {
            converged = true;
            break;
        }
    }

    let mut warnings = Vec::new();
    if data.total() == data.n() {
        warnings.push(FitWarning::NoUnlabeledData);
    }
    let beta_norm = theta.beta.norm();
    if beta_norm < BETA_IDENTIFIABILITY_TOL {
        warnings.push(FitWarning::NonIdentifiableBeta { beta_norm });
    }

    let case_proportion = mixture_mean(&theta, &weights, data)? / weights.sum();
    let theta_cov = match inference::negative_hessian(&theta, &weights, data)
        .and_then(|blocks| inference::theta_covariance(&blocks))
    {
        Ok(cov) => Some(cov),
        Err(err) => {
            warnings.push(FitWarning::CovarianceUnavailable {
                reason: err.to_string(),
            });
            None
        }
    };

    Ok(FitResult {
        loglik: *trace.last().unwrap(),
        theta_hat: theta,
        p_hat: weights,
        loglik_trace: trace,
        iterations,
        converged,
        case_proportion,
        theta_cov,
        warnings,
    })
}

fn initial_theta(data: &SemiSupervisedDataset, opts: &SolverOptions) -> Theta {
    match crate::baseline::fit_prospective_with_bound(data.labeled(), opts.divergence_bound) {
        Ok(fit) => fit.theta,
        Err(_) => Theta::zeros(data.dim()),
    }
}
