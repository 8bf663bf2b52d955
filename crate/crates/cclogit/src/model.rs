//! Domain types and the discretized log-likelihood.
//!
//! The model is a logistic regression fit from two sources: a case-control
//! labeled sample and an unlabeled covariate sample. The covariate
//! distribution is profiled out as a discrete distribution with one jump
//! mass per observed covariate vector.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Logistic parameter vector: intercept plus slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta {
    pub alpha: f64,
    pub beta: DVector<f64>,
}

impl Theta {
    pub fn new(alpha: f64, beta: DVector<f64>) -> Result<Self> {
        if !alpha.is_finite() || beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Argument("theta entries must be finite".into()));
        }
        Ok(Self { alpha, beta })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            alpha: 0.0,
            beta: DVector::zeros(dim),
        }
    }

    /// Covariate dimension p.
    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    /// Linear predictor alpha + beta' x.
    pub fn linear(&self, x: &DVector<f64>) -> f64 {
        self.alpha + self.beta.dot(x)
    }

    /// Flatten to (alpha, beta_1, ..., beta_p).
    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim() + 1);
        v[0] = self.alpha;
        v.rows_mut(1, self.dim()).copy_from(&self.beta);
        v
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        Self {
            alpha: v[0],
            beta: v.rows(1, v.len() - 1).into_owned(),
        }
    }
}

/// One labeled row: binary outcome plus covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledObservation {
    pub y: bool,
    pub x: DVector<f64>,
}

impl LabeledObservation {
    pub fn new(y: bool, x: DVector<f64>) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("covariates must be finite".into()));
        }
        Ok(Self { y, x })
    }
}

/// Case-control labeled rows plus unlabeled covariate rows.
///
/// Covariates are indexed 0..N with the labeled block first, matching the
/// ordering of the jump masses.
#[derive(Debug, Clone)]
pub struct SemiSupervisedDataset {
    labeled: Vec<LabeledObservation>,
    unlabeled: Vec<DVector<f64>>,
    n1: usize,
    n0: usize,
}

impl SemiSupervisedDataset {
    pub fn new(labeled: Vec<LabeledObservation>, unlabeled: Vec<DVector<f64>>) -> Result<Self> {
        if labeled.is_empty() {
            return Err(Error::Data("labeled sample is empty".into()));
        }
        let dim = labeled[0].x.len();
        if dim == 0 {
            return Err(Error::Data("covariate dimension must be at least 1".into()));
        }
        for obs in &labeled {
            if obs.x.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: obs.x.len(),
                    context: "labeled covariate vector",
                });
            }
        }
        for x in &unlabeled {
            if x.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: x.len(),
                    context: "unlabeled covariate vector",
                });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Argument("covariates must be finite".into()));
            }
        }
        let n1 = labeled.iter().filter(|o| o.y).count();
        let n0 = labeled.len() - n1;
        if n1 == 0 || n0 == 0 {
            return Err(Error::Data(format!(
                "both classes must be present in the labeled sample (n1={n1}, n0={n0})"
            )));
        }
        Ok(Self {
            labeled,
            unlabeled,
            n1,
            n0,
        })
    }

    pub fn labeled(&self) -> &[LabeledObservation] {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &[DVector<f64>] {
        &self.unlabeled
    }

    /// Number of cases in the labeled sample.
    pub fn n1(&self) -> usize {
        self.n1
    }

    /// Number of controls in the labeled sample.
    pub fn n0(&self) -> usize {
        self.n0
    }

    /// Labeled sample size n = n1 + n0.
    pub fn n(&self) -> usize {
        self.labeled.len()
    }

    /// Total sample size N (labeled + unlabeled).
    pub fn total(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    /// Covariate dimension p.
    pub fn dim(&self) -> usize {
        self.labeled[0].x.len()
    }

    /// Covariate vector at global index i (labeled block first).
    pub fn covariate(&self, i: usize) -> &DVector<f64> {
        if i < self.labeled.len() {
            &self.labeled[i].x
        } else {
            &self.unlabeled[i - self.labeled.len()]
        }
    }

    /// Iterate all N covariate vectors in index order.
    pub fn covariates(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.labeled
            .iter()
            .map(|o| &o.x)
            .chain(self.unlabeled.iter())
    }

    /// phi(x_i, theta) for every covariate row.
    pub fn phis(&self, theta: &Theta) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        Ok(self
            .covariates()
            .map(|x| logistic(theta.linear(x)))
            .collect())
    }

    pub(crate) fn check_theta(&self, theta: &Theta) -> Result<()> {
        if theta.dim() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: theta.dim(),
                context: "theta slope dimension",
            });
        }
        Ok(())
    }

    pub(crate) fn check_weights(&self, weights: &JumpWeights) -> Result<()> {
        if weights.len() != self.total() {
            return Err(Error::Dimension {
                expected: self.total(),
                found: weights.len(),
                context: "jump weight vector",
            });
        }
        Ok(())
    }
}

/// Jump masses of the discrete covariate distribution, one per observed
/// covariate vector (labeled rows first). Mid-iteration the masses need not
/// sum to one; at a converged fit they do.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpWeights {
    masses: DVector<f64>,
}

impl JumpWeights {
    pub fn new(masses: DVector<f64>) -> Result<Self> {
        if masses.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Argument(
                "jump masses must be finite and non-negative".into(),
            ));
        }
        Ok(Self { masses })
    }

    /// Uniform masses 1/n.
    pub fn uniform(n: usize) -> Self {
        Self {
            masses: DVector::from_element(n, 1.0 / n as f64),
        }
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.masses[i]
    }

    pub fn sum(&self) -> f64 {
        self.masses.sum()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.masses
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.masses.iter()
    }
}

/// Warnings attached to a fit rather than raised as errors.
#[derive(Debug, Clone, PartialEq)]
pub enum FitWarning {
    /// The slope estimate is near zero, so the intercept is not identifiable.
    NonIdentifiableBeta { beta_norm: f64 },
    /// No unlabeled rows; the intercept is not identifiable from
    /// case-control data alone.
    NoUnlabeledData,
    /// The covariance of theta could not be computed.
    CovarianceUnavailable { reason: String },
}

impl std::fmt::Display for FitWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FitWarning::NonIdentifiableBeta { beta_norm } => write!(
                f,
                "slope norm {beta_norm:.2e} is near zero; the intercept is not identifiable"
            ),
            FitWarning::NoUnlabeledData => write!(
                f,
                "no unlabeled data; the intercept is not identifiable from case-control rows alone"
            ),
            FitWarning::CovarianceUnavailable { reason } => {
                write!(f, "covariance unavailable: {reason}")
            }
        }
    }
}

/// Output of the alternating maximization.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta_hat: Theta,
    pub p_hat: JumpWeights,
    pub loglik: f64,
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Plug-in estimate of P(Y = 1).
    pub case_proportion: f64,
    /// Estimated covariance of theta_hat; `None` when inference failed
    /// (see `warnings`).
    pub theta_cov: Option<DMatrix<f64>>,
    pub warnings: Vec<FitWarning>,
}

/// Numerically stable logistic function 1 / (1 + exp(-t)).
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// log(logistic(t)), stable for large |t|.
pub fn log_logistic(t: f64) -> f64 {
    if t >= 0.0 {
        -(-t).exp().ln_1p()
    } else {
        t - t.exp().ln_1p()
    }
}

/// Case probability phi(x, theta) under the logistic model.
pub fn phi(x: &DVector<f64>, theta: &Theta) -> Result<f64> {
    if x.len() != theta.dim() {
        return Err(Error::Dimension {
            expected: theta.dim(),
            found: x.len(),
            context: "covariate vector for phi",
        });
    }
    Ok(logistic(theta.linear(x)))
}

/// Model-implied marginal case probability c(theta, p) = sum_i phi(x_i) p_i.
pub fn mixture_mean(
    theta: &Theta,
    weights: &JumpWeights,
    data: &SemiSupervisedDataset,
) -> Result<f64> {
    data.check_theta(theta)?;
    data.check_weights(weights)?;
    Ok(data
        .covariates()
        .zip(weights.iter())
        .map(|(x, p)| logistic(theta.linear(x)) * p)
        .sum())
}

/// Full discretized log-likelihood l(theta, p).
///
/// Returns negative infinity when any mass is zero or the mixture mean
/// leaves (0, 1), so that line searches can reject such points uniformly.
pub fn log_likelihood(
    theta: &Theta,
    weights: &JumpWeights,
    data: &SemiSupervisedDataset,
) -> Result<f64> {
    data.check_theta(theta)?;
    data.check_weights(weights)?;
    if weights.iter().any(|&p| p == 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let labeled = labeled_loglik(theta, data);
    let c = mixture_mean(theta, weights, data)?;
    if c <= 0.0 || c >= 1.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let penalty = data.n1() as f64 * c.ln() + data.n0() as f64 * (1.0 - c).ln();
    let mass: f64 = weights.iter().map(|p| p.ln()).sum();
    Ok(labeled - penalty + mass)
}

/// Bernoulli log-likelihood of the labeled rows.
pub(crate) fn labeled_loglik(theta: &Theta, data: &SemiSupervisedDataset) -> f64 {
    data.labeled()
        .iter()
        .map(|obs| {
            let t = theta.linear(&obs.x);
            if obs.y {
                log_logistic(t)
            } else {
                log_logistic(-t)
            }
        })
        .sum()
}

/// Mixture mean with the masses rescaled onto the simplex.
///
/// The masses are probability proportions; the literal mass update drifts
/// off the simplex mid-iteration, and evaluating c at the raw masses then
/// creates a spurious pole in the theta-step objective (c can reach 1 at
/// finite theta when the masses sum above 1). Rescaling removes it and is
/// the identity on the simplex.
fn simplex_mixture_mean(
    theta: &Theta,
    weights: &JumpWeights,
    data: &SemiSupervisedDataset,
) -> Result<f64> {
    let sum = weights.sum();
    if sum <= 0.0 || !sum.is_finite() {
        return Err(Error::Degeneracy(format!(
            "jump masses sum to {sum}; cannot rescale onto the simplex"
        )));
    }
    Ok(mixture_mean(theta, weights, data)? / sum)
}

/// The theta-step objective: the log-likelihood with the jump masses held
/// fixed and their own entropy term dropped. Invariant under positive
/// rescaling of the masses.
pub fn theta_objective(
    theta: &Theta,
    weights: &JumpWeights,
    data: &SemiSupervisedDataset,
) -> Result<f64> {
    data.check_theta(theta)?;
    data.check_weights(weights)?;
    let c = simplex_mixture_mean(theta, weights, data)?;
    if c <= 0.0 || c >= 1.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let labeled = labeled_loglik(theta, data);
    Ok(labeled - (data.n1() as f64 * c.ln() + data.n0() as f64 * (1.0 - c).ln()))
}

/// Analytic gradient of the theta-step objective with respect to
/// (alpha, beta).
pub fn grad_theta_objective(
    theta: &Theta,
    weights: &JumpWeights,
    data: &SemiSupervisedDataset,
) -> Result<DVector<f64>> {
    data.check_theta(theta)?;
    data.check_weights(weights)?;
    let dim = data.dim() + 1;
    let mut grad = DVector::zeros(dim);
    for obs in data.labeled() {
        let resid = (obs.y as u8) as f64 - logistic(theta.linear(&obs.x));
        grad[0] += resid;
        for j in 0..data.dim() {
            grad[j + 1] += resid * obs.x[j];
        }
    }
    let c = simplex_mixture_mean(theta, weights, data)?;
    if c <= 0.0 || c >= 1.0 {
        return Err(Error::Degeneracy(format!(
            "mixture mean {c} outside (0, 1)"
        )));
    }
    let scale = data.n1() as f64 / c - data.n0() as f64 / (1.0 - c);
    // d c / d theta = sum_i p_i phi_i (1 - phi_i) (1, x_i) / sum_i p_i
    let mut dc = DVector::zeros(dim);
    for (x, &p) in data.covariates().zip(weights.iter()) {
        let f = logistic(theta.linear(x));
        let w = p * f * (1.0 - f);
        dc[0] += w;
        for j in 0..data.dim() {
            dc[j + 1] += w * x[j];
        }
    }
    dc /= weights.sum();
    Ok(grad - scale * dc)
}

/// Analytic Hessian of the theta-step objective with respect to
/// (alpha, beta).
pub fn hessian_theta_objective(
    theta: &Theta,
    weights: &JumpWeights,
    data: &SemiSupervisedDataset,
) -> Result<DMatrix<f64>> {
    data.check_theta(theta)?;
    data.check_weights(weights)?;
    let p = data.dim();
    let dim = p + 1;
    let mut hess = DMatrix::zeros(dim, dim);
    let mut z = DVector::zeros(dim);
    z[0] = 1.0;
    for obs in data.labeled() {
        let f = logistic(theta.linear(&obs.x));
        z.rows_mut(1, p).copy_from(&obs.x);
        hess.syger(-f * (1.0 - f), &z, &z, 1.0);
    }
    let c = simplex_mixture_mean(theta, weights, data)?;
    if c <= 0.0 || c >= 1.0 {
        return Err(Error::Degeneracy(format!(
            "mixture mean {c} outside (0, 1)"
        )));
    }
    let n1 = data.n1() as f64;
    let n0 = data.n0() as f64;
    let sum = weights.sum();
    let scale = n1 / c - n0 / (1.0 - c);
    let curvature = n1 / (c * c) + n0 / ((1.0 - c) * (1.0 - c));
    let mut dc = DVector::zeros(dim);
    for (x, &pw) in data.covariates().zip(weights.iter()) {
        let f = logistic(theta.linear(x));
        z.rows_mut(1, p).copy_from(x);
        let w = pw * f * (1.0 - f) / sum;
        dc.axpy(w, &z, 1.0);
        // second derivative of c in theta
        hess.syger(-scale * w * (1.0 - 2.0 * f), &z, &z, 1.0);
    }
    hess.syger(curvature, &dc, &dc, 1.0);
    // syger fills the lower triangle; mirror it
    hess.fill_upper_triangle_with_lower_triangle();
    Ok(hess)
}
