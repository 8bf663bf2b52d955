//! Prospective logistic fit on the labeled rows alone.
//!
//! Under case-control sampling this estimates the slopes consistently but
//! the intercept absorbs the sampling-versus-population log-odds gap. It
//! serves both as the comparison estimator and as the starting point for
//! the semi-supervised solver.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{log_logistic, logistic, LabeledObservation, Theta};

/// Prospective MLE with its estimated covariance (inverse observed
/// information).
#[derive(Debug, Clone)]
pub struct ProspectiveFit {
    pub theta: Theta,
    pub covariance: DMatrix<f64>,
}

const MAX_NEWTON_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-10;

/// Maximize the Bernoulli log-likelihood by Newton steps with backtracking.
pub fn fit_prospective(labeled: &[LabeledObservation]) -> Result<ProspectiveFit> {
    fit_prospective_with_bound(labeled, 50.0)
}

pub fn fit_prospective_with_bound(
    labeled: &[LabeledObservation],
    divergence_bound: f64,
) -> Result<ProspectiveFit> {
    if labeled.is_empty() {
        return Err(Error::Data("labeled sample is empty".into()));
    }
    let p = labeled[0].x.len();
    let n1 = labeled.iter().filter(|o| o.y).count();
    if n1 == 0 || n1 == labeled.len() {
        return Err(Error::Data(
            "both classes must be present for the prospective fit".into(),
        ));
    }

    let mut theta = DVector::zeros(p + 1);
    let mut value = loglik(&theta, labeled);
    for _ in 0..MAX_NEWTON_ITER {
        let g = gradient(&theta, labeled);
        if g.norm() <= GRAD_TOL {
            break;
        }
        let info = information(&theta, labeled);
        let direction = info
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&g))
            .filter(|d| d.dot(&g) > 0.0)
            .unwrap_or_else(|| g.clone());
        let slope = g.dot(&direction);
        let mut step = 1.0;
        let mut advanced = false;
        for _ in 0..60 {
            let candidate = &theta + step * &direction;
            let v = loglik(&candidate, labeled);
            if v.is_finite() && v >= value + 1e-4 * step * slope {
                theta = candidate;
                value = v;
                advanced = true;
                break;
            }
            step *= 0.5;
        }
        if !advanced {
            break;
        }
        if theta.norm() > divergence_bound {
            return Err(Error::Divergence {
                theta_norm: theta.norm(),
                bound: divergence_bound,
            });
        }
    }

    let info = information(&theta, labeled);
    let covariance = info.try_inverse().ok_or_else(|| Error::Degeneracy(
        "observed information is singular in the prospective fit".into(),
    ))?;
    Ok(ProspectiveFit {
        theta: Theta::from_vector(&theta),
        covariance,
    })
}

fn loglik(theta: &DVector<f64>, labeled: &[LabeledObservation]) -> f64 {
    labeled
        .iter()
        .map(|obs| {
            let t = theta[0] + theta.rows(1, theta.len() - 1).dot(&obs.x);
            if obs.y {
                log_logistic(t)
            } else {
                log_logistic(-t)
            }
        })
        .sum()
}

fn gradient(theta: &DVector<f64>, labeled: &[LabeledObservation]) -> DVector<f64> {
    let p = labeled[0].x.len();
    let mut g = DVector::zeros(p + 1);
    for obs in labeled {
        let t = theta[0] + theta.rows(1, p).dot(&obs.x);
        let resid = (obs.y as u8) as f64 - logistic(t);
        g[0] += resid;
        for j in 0..p {
            g[j + 1] += resid * obs.x[j];
        }
    }
    g
}

/// Observed information (negative Hessian of the Bernoulli log-likelihood).
fn information(theta: &DVector<f64>, labeled: &[LabeledObservation]) -> DMatrix<f64> {
    let p = labeled[0].x.len();
    let mut info = DMatrix::zeros(p + 1, p + 1);
    let mut z = DVector::zeros(p + 1);
    z[0] = 1.0;
    for obs in labeled {
        let t = theta[0] + theta.rows(1, p).dot(&obs.x);
        let f = logistic(t);
        z.rows_mut(1, p).copy_from(&obs.x);
        info.syger(f * (1.0 - f), &z, &z, 1.0);
    }
    info.fill_upper_triangle_with_lower_triangle();
    info
}

/// Predicted asymptotic intercept bias of the labeled-only fit under
/// case-control sampling: log(n1/n0) - logit(p_true).
pub fn cc_intercept_offset(n1: usize, n0: usize, p_true: f64) -> Result<f64> {
    if n1 == 0 || n0 == 0 {
        return Err(Error::Argument("n1 and n0 must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&p_true) || p_true == 0.0 || p_true == 1.0 {
        return Err(Error::Argument(format!(
            "p_true must lie strictly inside (0, 1), got {p_true}"
        )));
    }
    Ok((n1 as f64 / n0 as f64).ln() - (p_true / (1.0 - p_true)).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn vec1(a: f64) -> DVector<f64> {
        DVector::from_vec(vec![a])
    }

    fn random_labeled(seed: u64, n1: usize, n0: usize) -> Vec<LabeledObservation> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        (0..n1 + n0)
            .map(|i| {
                let offset = if i < n1 { 0.6 } else { -0.4 };
                LabeledObservation::new(i < n1, vec1(offset + rng.gen::<f64>() * 2.0 - 1.0))
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn gradient_vanishes_at_the_fit() {
        for seed in 0..5u64 {
            let labeled = random_labeled(seed, 15, 20);
            let fit = fit_prospective(&labeled).unwrap();
            let g = gradient(&fit.theta.to_vector(), &labeled);
            assert!(g.norm() <= 1e-8, "seed {seed}: gradient norm {}", g.norm());
        }
    }

    #[test]
    fn symmetric_data_forces_zero_intercept() {
        // labels flip under x -> -x, so alpha_hat = 0 and the fit is odd
        let labeled = vec![
            LabeledObservation::new(true, vec1(1.2)).unwrap(),
            LabeledObservation::new(false, vec1(-1.2)).unwrap(),
            LabeledObservation::new(true, vec1(-0.3)).unwrap(),
            LabeledObservation::new(false, vec1(0.3)).unwrap(),
            LabeledObservation::new(true, vec1(0.5)).unwrap(),
            LabeledObservation::new(false, vec1(-0.5)).unwrap(),
        ];
        let fit = fit_prospective(&labeled).unwrap();
        assert!(fit.theta.alpha.abs() <= 1e-8, "alpha = {}", fit.theta.alpha);
    }

    #[test]
    fn balanced_label_only_fit_recovers_log_odds() {
        // constant covariate effect suppressed: x identical across rows is
        // singular, so use x with no relation to y and many rows; beta -> 0
        // and alpha -> logit(n1 / n)
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let n1 = 30;
        let n0 = 10;
        // x values shared between classes in matched pairs kill the slope
        let shared: Vec<f64> = (0..10).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let mut labeled = Vec::new();
        for i in 0..n1 {
            labeled.push(LabeledObservation::new(true, vec1(shared[i % 10])).unwrap());
        }
        for i in 0..n0 {
            labeled.push(LabeledObservation::new(false, vec1(shared[i % 10])).unwrap());
        }
        let fit = fit_prospective(&labeled).unwrap();
        assert!(fit.theta.beta.norm() <= 1e-6);
        assert_relative_eq!(
            fit.theta.alpha,
            (n1 as f64 / n0 as f64).ln(),
            epsilon = 1e-6
        );
    }

    #[test]
    fn covariance_matches_inverse_information_at_the_fit() {
        let labeled = random_labeled(9, 12, 18);
        let fit = fit_prospective(&labeled).unwrap();
        let info = information(&fit.theta.to_vector(), &labeled);
        let product = info * &fit.covariance;
        let identity = DMatrix::identity(2, 2);
        assert!((product - identity).norm() <= 1e-10);
    }

    #[test]
    fn single_class_and_empty_inputs_error() {
        assert!(fit_prospective(&[]).is_err());
        let one_class = vec![
            LabeledObservation::new(true, vec1(0.1)).unwrap(),
            LabeledObservation::new(true, vec1(-0.2)).unwrap(),
        ];
        assert!(fit_prospective(&one_class).is_err());
    }

    #[test]
    fn separated_data_diverges() {
        // perfectly separated: all cases right of all controls
        let labeled = vec![
            LabeledObservation::new(true, vec1(2.0)).unwrap(),
            LabeledObservation::new(true, vec1(3.0)).unwrap(),
            LabeledObservation::new(false, vec1(-2.0)).unwrap(),
            LabeledObservation::new(false, vec1(-3.0)).unwrap(),
        ];
        match fit_prospective_with_bound(&labeled, 10.0) {
            Err(Error::Divergence { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn intercept_offset_values() {
        // equal design and population odds: no offset
        assert_relative_eq!(cc_intercept_offset(1, 1, 0.5).unwrap(), 0.0, epsilon = 1e-15);
        // 80 cases / 400 controls against a 3.7% population rate
        let offset = cc_intercept_offset(80, 400, 0.037).unwrap();
        assert_relative_eq!(
            offset,
            (0.2f64).ln() - (0.037f64 / 0.963).ln(),
            epsilon = 1e-14
        );
        assert_relative_eq!(offset, 1.6498, epsilon = 5e-4);
        // balanced design, rarer disease: larger offset
        let offset2 = cc_intercept_offset(200, 200, 0.037).unwrap();
        assert_relative_eq!(offset2, (0.963f64 / 0.037).ln(), epsilon = 1e-14);
        assert!(offset2 > offset);
    }

    #[test]
    fn intercept_offset_rejects_bad_arguments() {
        assert!(cc_intercept_offset(0, 5, 0.1).is_err());
        assert!(cc_intercept_offset(5, 0, 0.1).is_err());
        assert!(cc_intercept_offset(5, 5, 0.0).is_err());
        assert!(cc_intercept_offset(5, 5, 1.0).is_err());
    }
}
