//! Monte Carlo study harness: scenario generation, seeded replications,
//! and Table-style summaries.
//!
//! Covariates are iid standard normal. Labeled rows are drawn by rejection
//! from the case and control populations until the requested class sizes
//! are reached; unlabeled rows are fresh marginal draws. Each replication
//! owns a ChaCha substream derived from the scenario seed, so results are
//! identical in sequential and parallel mode.

use nalgebra::DVector;
use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline;
use crate::error::{Error, Result};
use crate::model::{logistic, LabeledObservation, SemiSupervisedDataset, Theta};
use crate::solver::{fit_mle, SolverOptions};

/// Size of the unlabeled sample, either relative to the labeled sample
/// or as an explicit total N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum UnlabeledSize {
    /// Unlabeled count = ratio x n, rounded.
    Ratio(f64),
    /// Explicit total sample size N; unlabeled count = N - n.
    Total(usize),
}

/// One data-generating configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationScenario {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub n0: usize,
    pub n1: usize,
    pub unlabeled: UnlabeledSize,
    pub replications: usize,
    pub seed: u64,
}

impl SimulationScenario {
    pub fn validate(&self) -> Result<()> {
        if self.n0 == 0 || self.n1 == 0 {
            return Err(Error::Argument("n0 and n1 must be at least 1".into()));
        }
        if self.replications == 0 {
            return Err(Error::Argument("replications must be at least 1".into()));
        }
        if self.beta.is_empty() {
            return Err(Error::Argument("beta must have at least one entry".into()));
        }
        if let UnlabeledSize::Ratio(r) = self.unlabeled {
            if r < 0.0 || !r.is_finite() {
                return Err(Error::Argument("ratio must be non-negative".into()));
            }
        }
        if let UnlabeledSize::Total(n_total) = self.unlabeled {
            if n_total < self.n() {
                return Err(Error::Argument(format!(
                    "total N = {n_total} is smaller than the labeled size {}",
                    self.n()
                )));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n0 + self.n1
    }

    pub fn unlabeled_count(&self) -> usize {
        match self.unlabeled {
            UnlabeledSize::Ratio(r) => (r * self.n() as f64).round() as usize,
            UnlabeledSize::Total(n_total) => n_total.saturating_sub(self.n()),
        }
    }

    pub fn theta(&self) -> Theta {
        Theta {
            alpha: self.alpha,
            beta: DVector::from_vec(self.beta.clone()),
        }
    }

    /// Population case proportion P(Y = 1) under the scenario.
    ///
    /// With iid standard-normal covariates, beta'X is normal with standard
    /// deviation |beta|, so the mean of phi reduces to a one-dimensional
    /// integral computed by Gauss-Hermite quadrature.
    pub fn true_case_proportion(&self) -> f64 {
        let norm = self.theta().beta.norm();
        let (nodes, weights) = gauss_hermite(64);
        let scale = std::f64::consts::SQRT_2;
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        nodes
            .iter()
            .zip(weights.iter())
            .map(|(&t, &w)| w * inv_sqrt_pi * logistic(self.alpha + norm * scale * t))
            .sum()
    }

    /// Parse a plain-text `key = value` scenario file.
    ///
    /// Keys: alpha, beta (comma-separated), n0, n1, ratio or N,
    /// replications, seed. Lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut alpha = None;
        let mut beta = None;
        let mut n0 = None;
        let mut n1 = None;
        let mut unlabeled = None;
        let mut replications = None;
        let mut seed = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = idx + 1;
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: lineno,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let parse_err = |message: String| Error::Parse {
                line: lineno,
                message,
            };
            match key {
                "alpha" => {
                    alpha = Some(value.parse::<f64>().map_err(|e| parse_err(e.to_string()))?)
                }
                "beta" => {
                    let parsed: std::result::Result<Vec<f64>, _> =
                        value.split(',').map(|v| v.trim().parse::<f64>()).collect();
                    beta = Some(parsed.map_err(|e| parse_err(e.to_string()))?);
                }
                "n0" => n0 = Some(value.parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?),
                "n1" => n1 = Some(value.parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?),
                "ratio" => {
                    let r = value.parse::<f64>().map_err(|e| parse_err(e.to_string()))?;
                    unlabeled = Some(UnlabeledSize::Ratio(r));
                }
                "N" => {
                    let n_total = value.parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?;
                    unlabeled = Some(UnlabeledSize::Total(n_total));
                }
                "replications" => {
                    replications = Some(value.parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?)
                }
                "seed" => seed = Some(value.parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?),
                other => {
                    return Err(parse_err(format!("unknown key `{other}`")));
                }
            }
        }
        let missing = |what: &str| Error::Parse {
            line: 0,
            message: format!("missing required key `{what}`"),
        };
        let scenario = SimulationScenario {
            alpha: alpha.ok_or_else(|| missing("alpha"))?,
            beta: beta.ok_or_else(|| missing("beta"))?,
            n0: n0.ok_or_else(|| missing("n0"))?,
            n1: n1.ok_or_else(|| missing("n1"))?,
            unlabeled: unlabeled.ok_or_else(|| missing("ratio or N"))?,
            replications: replications.ok_or_else(|| missing("replications"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// The estimators a study can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Semi-supervised maximum likelihood.
    Proposed,
    /// Prospective logistic fit on the labeled case-control rows alone.
    SingleCaseControl,
}

/// Aggregated metrics over the replications of one estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationSummary {
    /// Mean of (estimate - truth), per parameter (alpha first).
    pub bias: Vec<f64>,
    /// Empirical standard deviation of the estimates; absent with a single
    /// replication.
    pub se: Option<Vec<f64>>,
    /// Mean of the model-based standard errors.
    pub ese: Vec<f64>,
    /// Empirical coverage of the 95% Wald intervals.
    pub cp: Vec<f64>,
    /// Mean bias of the case-proportion estimate.
    pub p_bias: f64,
    pub replications_used: usize,
    pub replication_failures: usize,
}

/// Draw one semi-supervised dataset; returns it with the population case
/// proportion implied by the scenario.
pub fn generate_dataset<R: Rng>(
    scenario: &SimulationScenario,
    rng: &mut R,
) -> Result<(SemiSupervisedDataset, f64)> {
    scenario.validate()?;
    let theta = scenario.theta();
    let dim = theta.dim();
    let normal = StandardNormal;
    let mut cases = Vec::with_capacity(scenario.n1);
    let mut controls = Vec::with_capacity(scenario.n0);
    while cases.len() < scenario.n1 || controls.len() < scenario.n0 {
        let x = DVector::from_iterator(dim, (0..dim).map(|_| normal.sample(rng)));
        let y = rng.gen::<f64>() < logistic(theta.linear(&x));
        if y && cases.len() < scenario.n1 {
            cases.push(LabeledObservation { y: true, x });
        } else if !y && controls.len() < scenario.n0 {
            controls.push(LabeledObservation { y: false, x });
        }
    }
    let mut labeled = cases;
    labeled.append(&mut controls);
    let unlabeled = (0..scenario.unlabeled_count())
        .map(|_| DVector::from_iterator(dim, (0..dim).map(|_| normal.sample(rng))))
        .collect();
    let data = SemiSupervisedDataset::new(labeled, unlabeled)?;
    Ok((data, scenario.true_case_proportion()))
}

struct Replicate {
    estimates: DVector<f64>,
    eses: DVector<f64>,
    ci_hits: Vec<bool>,
    p_hat: f64,
}

fn run_replication(
    scenario: &SimulationScenario,
    rep: usize,
    estimators: &[Estimator],
) -> Result<Vec<Replicate>> {
    let mut rng = substream(scenario.seed, rep);
    let (data, _) = generate_dataset(scenario, &mut rng)?;
    let truth = scenario.theta().to_vector();
    let z95 = 1.959963984540054;
    let mut out = Vec::with_capacity(estimators.len());
    for estimator in estimators {
        let rep_out = match estimator {
            Estimator::Proposed => {
                let fit = fit_mle(&data, &SolverOptions::default())?;
                let cov = fit.theta_cov.as_ref().ok_or_else(|| {
                    Error::Degeneracy("covariance unavailable in replication".into())
                })?;
                let est = fit.theta_hat.to_vector();
                let eses =
                    DVector::from_iterator(est.len(), (0..est.len()).map(|k| cov[(k, k)].sqrt()));
                let ci_hits = (0..est.len())
                    .map(|k| (est[k] - truth[k]).abs() <= z95 * eses[k])
                    .collect();
                Replicate {
                    estimates: est,
                    eses,
                    ci_hits,
                    p_hat: fit.case_proportion,
                }
            }
            Estimator::SingleCaseControl => {
                let fit = baseline::fit_prospective(data.labeled())?;
                let est = fit.theta.to_vector();
                let eses = DVector::from_iterator(
                    est.len(),
                    (0..est.len()).map(|k| fit.covariance[(k, k)].sqrt()),
                );
                let ci_hits = (0..est.len())
                    .map(|k| (est[k] - truth[k]).abs() <= z95 * eses[k])
                    .collect();
                // labeled-only plug-in: mean fitted probability, which at the
                // MLE equals the labeled case fraction n1/n
                let p_hat = data
                    .labeled()
                    .iter()
                    .map(|o| logistic(fit.theta.linear(&o.x)))
                    .sum::<f64>()
                    / data.n() as f64;
                Replicate {
                    estimates: est,
                    eses,
                    ci_hits,
                    p_hat,
                }
            }
        };
        out.push(rep_out);
    }
    Ok(out)
}

/// Independent RNG substream for one replication.
pub fn substream(seed: u64, replication: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(replication as u64 + 1);
    rng
}

/// Run the study for the requested estimators; summaries come back in the
/// order of `estimators`.
///
/// Diverged replications are excluded and counted; the study fails when
/// more than 2% of replications fail.
pub fn run_study(
    scenario: &SimulationScenario,
    estimators: &[Estimator],
    parallel: bool,
) -> Result<Vec<SimulationSummary>> {
    scenario.validate()?;
    if estimators.is_empty() {
        return Err(Error::Argument("no estimators requested".into()));
    }
    let reps: Vec<std::result::Result<Vec<Replicate>, String>> = if parallel {
        (0..scenario.replications)
            .into_par_iter()
            .map(|rep| run_replication(scenario, rep, estimators).map_err(|e| e.to_string()))
            .collect()
    } else {
        (0..scenario.replications)
            .map(|rep| run_replication(scenario, rep, estimators).map_err(|e| e.to_string()))
            .collect()
    };

    let failures = reps.iter().filter(|r| r.is_err()).count();
    if failures as f64 > 0.02 * scenario.replications as f64 {
        return Err(Error::Degeneracy(format!(
            "{failures} of {} replications failed",
            scenario.replications
        )));
    }

    let truth = scenario.theta().to_vector();
    let p_true = scenario.true_case_proportion();
    let mut summaries = Vec::with_capacity(estimators.len());
    for (idx, _) in estimators.iter().enumerate() {
        let ok: Vec<&Replicate> = reps
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .map(|v| &v[idx])
            .collect();
        let estimates: Vec<&DVector<f64>> = ok.iter().map(|r| &r.estimates).collect();
        let eses: Vec<&DVector<f64>> = ok.iter().map(|r| &r.eses).collect();
        let ci_hits: Vec<&Vec<bool>> = ok.iter().map(|r| &r.ci_hits).collect();
        let p_hats: Vec<f64> = ok.iter().map(|r| r.p_hat).collect();
        let mut summary = summarize(&estimates, &eses, &ci_hits, &p_hats, &truth, p_true)?;
        summary.replication_failures = failures;
        summaries.push(summary);
    }
    Ok(summaries)
}

/// Aggregate per-replication results into the Table-style metrics.
pub fn summarize(
    estimates: &[&DVector<f64>],
    eses: &[&DVector<f64>],
    ci_hits: &[&Vec<bool>],
    p_hats: &[f64],
    truth: &DVector<f64>,
    p_true: f64,
) -> Result<SimulationSummary> {
    let reps = estimates.len();
    if reps == 0 {
        return Err(Error::Argument("no replications to summarize".into()));
    }
    if eses.len() != reps || ci_hits.len() != reps || p_hats.len() != reps {
        return Err(Error::Argument(
            "summary inputs must have matching lengths".into(),
        ));
    }
    let dim = truth.len();
    let mut bias = vec![0.0; dim];
    let mut ese = vec![0.0; dim];
    let mut cp = vec![0.0; dim];
    for r in 0..reps {
        for k in 0..dim {
            bias[k] += estimates[r][k] - truth[k];
            ese[k] += eses[r][k];
            cp[k] += ci_hits[r][k] as u8 as f64;
        }
    }
    for k in 0..dim {
        bias[k] /= reps as f64;
        ese[k] /= reps as f64;
        cp[k] /= reps as f64;
    }
    let se = if reps > 1 {
        let mut out = vec![0.0; dim];
        for (k, item) in out.iter_mut().enumerate() {
            let mean: f64 = estimates.iter().map(|e| e[k]).sum::<f64>() / reps as f64;
            let ss: f64 = estimates.iter().map(|e| (e[k] - mean).powi(2)).sum();
            *item = (ss / (reps as f64 - 1.0)).sqrt();
        }
        Some(out)
    } else {
        None
    };
    let p_bias = p_hats.iter().map(|p| p - p_true).sum::<f64>() / reps as f64;
    Ok(SimulationSummary {
        bias,
        se,
        ese,
        cp,
        p_bias,
        replications_used: reps,
        replication_failures: 0,
    })
}

/// Gauss-Hermite nodes and weights for the weight function exp(-t^2),
/// via the Golub-Welsch eigenvalue method.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    use nalgebra::DMatrix;
    let mut jacobi = DMatrix::zeros(order, order);
    for i in 1..order {
        let off = (i as f64 / 2.0).sqrt();
        jacobi[(i, i - 1)] = off;
        jacobi[(i - 1, i)] = off;
    }
    let eigen = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|i| {
            let node = eigen.eigenvalues[i];
            let weight = std::f64::consts::PI.sqrt() * eigen.eigenvectors[(0, i)].powi(2);
            (node, weight)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Population P(Y = 1) for arbitrary theta with iid standard-normal
/// covariates, by Monte Carlo; used as an independent check of the
/// quadrature path.
pub fn case_proportion_monte_carlo(theta: &Theta, draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let dim = theta.dim();
    let mut acc = 0.0;
    for _ in 0..draws {
        let x = DVector::from_iterator(dim, (0..dim).map(|_| normal.sample(&mut rng)));
        acc += logistic(theta.linear(&x));
    }
    acc / draws as f64
}
