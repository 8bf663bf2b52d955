//! Command-line front end: fit on CSV data, run simulation studies, and
//! evaluate predictions, emitting JSON reports.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use cclogit::io::{read_labeled_csv, read_unlabeled_csv, FitReport};
use cclogit::prediction;
use cclogit::simulation::{run_study, Estimator, SimulationScenario, SimulationSummary};
use cclogit::solver::{fit_mle, SolverOptions};
use cclogit::SemiSupervisedDataset;

#[derive(Parser)]
#[command(name = "cclogit", version, about = "Semi-supervised case-control logistic regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the semi-supervised MLE on labeled and unlabeled CSV files.
    Fit(FitArgs),
    /// Run a Monte Carlo study from a scenario file.
    Simulate(SimulateArgs),
    /// Evaluate a fitted model on a labeled test CSV.
    Predict(PredictArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Labeled CSV with header y,x1,...,xp
    labeled: PathBuf,
    /// Unlabeled CSV with header x1,...,xp
    unlabeled: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// Confidence level for the Wald intervals
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Renormalize the mass vector after each update
    #[arg(long)]
    renormalize_p: bool,
    /// Write the JSON report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file with `key = value` lines
    scenario: PathBuf,
    /// Override the scenario seed
    #[arg(long)]
    seed: Option<u64>,
    /// Run replications single-threaded
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Model JSON produced by `fit`
    model: PathBuf,
    /// Labeled test CSV
    test: PathBuf,
    /// Labeled training CSV for cutoff selection
    #[arg(long)]
    train: Option<PathBuf>,
    /// Also write ROC points (cutoff, tpr, fpr) as CSV here
    #[arg(long)]
    roc_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct StudyReport {
    scenario: SimulationScenario,
    proposed: SimulationSummary,
    single_case_control: SimulationSummary,
}

#[derive(Serialize)]
struct PredictOutput {
    #[serde(flatten)]
    report: prediction::PredictionReport,
    warnings: Vec<String>,
}

fn emit(out: &Option<PathBuf>, json: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, format!("{json}\n"))
            .with_context(|| format!("writing {}", path.display()))?,
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let labeled = read_labeled_csv(
        fs::File::open(&args.labeled)
            .with_context(|| format!("opening {}", args.labeled.display()))?,
    )
    .with_context(|| format!("parsing {}", args.labeled.display()))?;
    let unlabeled = read_unlabeled_csv(
        fs::File::open(&args.unlabeled)
            .with_context(|| format!("opening {}", args.unlabeled.display()))?,
    )
    .with_context(|| format!("parsing {}", args.unlabeled.display()))?;
    if let (Some(lab), Some(unlab)) = (labeled.first(), unlabeled.first()) {
        if lab.x.len() != unlab.len() {
            anyhow::bail!(
                "covariate dimension mismatch: labeled file has {}, unlabeled file has {}",
                lab.x.len(),
                unlab.len()
            );
        }
    }
    let data = SemiSupervisedDataset::new(labeled, unlabeled)?;
    let opts = SolverOptions {
        epsilon: args.epsilon,
        max_iterations: args.max_iter,
        renormalize_p: args.renormalize_p,
        ..SolverOptions::default()
    };
    let fit = fit_mle(&data, &opts)?;
    let report = FitReport::from_fit(&fit, args.level)?;
    emit(&args.out, &serde_json::to_string_pretty(&report)?)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let text = fs::read_to_string(&args.scenario)
        .with_context(|| format!("reading {}", args.scenario.display()))?;
    let mut scenario = SimulationScenario::parse(&text)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let estimators = [Estimator::Proposed, Estimator::SingleCaseControl];
    let mut summaries = run_study(&scenario, &estimators, !args.sequential)?;
    let single_case_control = summaries.pop().unwrap();
    let proposed = summaries.pop().unwrap();
    let report = StudyReport {
        scenario,
        proposed,
        single_case_control,
    };
    emit(&args.out, &serde_json::to_string_pretty(&report)?)
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let model: FitReport = serde_json::from_str(
        &fs::read_to_string(&args.model)
            .with_context(|| format!("reading {}", args.model.display()))?,
    )
    .context("parsing model JSON")?;
    let theta = model.theta()?;
    let test = read_labeled_csv(
        fs::File::open(&args.test).with_context(|| format!("opening {}", args.test.display()))?,
    )?;
    let test_xs: Vec<_> = test.iter().map(|o| o.x.clone()).collect();
    let test_labels: Vec<bool> = test.iter().map(|o| o.y).collect();

    let mut warnings = Vec::new();
    let train_rows = match &args.train {
        Some(path) => Some(read_labeled_csv(
            fs::File::open(path).with_context(|| format!("opening {}", path.display()))?,
        )?),
        None => {
            warnings.push(
                "no --train file given; the cutoff was selected on the test set".to_string(),
            );
            None
        }
    };
    let train_data: Option<(Vec<_>, Vec<bool>)> = train_rows.map(|rows| {
        (
            rows.iter().map(|o| o.x.clone()).collect(),
            rows.iter().map(|o| o.y).collect(),
        )
    });
    let report = prediction::report(
        &theta,
        &test_xs,
        &test_labels,
        train_data
            .as_ref()
            .map(|(xs, ys)| (xs.as_slice(), ys.as_slice())),
    )?;

    if let Some(roc_path) = &args.roc_out {
        let scores = prediction::predict_proba(&theta, &test_xs)?;
        let mut cuts: Vec<f64> = scores.clone();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let pos = test_labels.iter().filter(|&&y| y).count() as f64;
        let neg = test_labels.len() as f64 - pos;
        let mut csv = String::from("cutoff,tpr,fpr\n");
        for cut in cuts {
            let tp = scores
                .iter()
                .zip(&test_labels)
                .filter(|(s, &y)| y && **s >= cut)
                .count() as f64;
            let fp = scores
                .iter()
                .zip(&test_labels)
                .filter(|(s, &y)| !y && **s >= cut)
                .count() as f64;
            csv.push_str(&format!("{cut},{},{}\n", tp / pos, fp / neg));
        }
        fs::write(roc_path, csv).with_context(|| format!("writing {}", roc_path.display()))?;
    }

    let output = PredictOutput { report, warnings };
    emit(&args.out, &serde_json::to_string_pretty(&output)?)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Predict(args) => cmd_predict(args),
    }
}
