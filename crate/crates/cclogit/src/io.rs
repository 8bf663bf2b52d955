//! CSV ingestion and JSON report shapes used by the command-line tool.
//!
//! Labeled CSV: header `y,x1,...,xp` with y in {0,1}. Unlabeled CSV:
//! header `x1,...,xp`. Values are written with the shortest round-trip
//! decimal representation, so a written dataset re-reads bit-exactly.

use std::io::{Read, Write};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FitResult, LabeledObservation, Theta};

/// JSON report for a fit; also serves as the model file for prediction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    /// alpha followed by the slopes in column order.
    pub theta_hat: Vec<f64>,
    pub standard_errors: Option<Vec<f64>>,
    pub confidence_level: f64,
    pub wald_ci: Option<Vec<[f64; 2]>>,
    pub case_proportion: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn from_fit(fit: &FitResult, level: f64) -> Result<Self> {
        let theta_hat = fit.theta_hat.to_vector().iter().copied().collect();
        let (standard_errors, wald_ci) = match &fit.theta_cov {
            Some(cov) => {
                let ses = (0..cov.nrows()).map(|k| cov[(k, k)].max(0.0).sqrt()).collect();
                let cis = crate::inference::wald_ci(fit, level)?
                    .into_iter()
                    .map(|(lo, hi)| [lo, hi])
                    .collect();
                (Some(ses), Some(cis))
            }
            None => (None, None),
        };
        Ok(Self {
            theta_hat,
            standard_errors,
            confidence_level: level,
            wald_ci,
            case_proportion: fit.case_proportion,
            loglik: fit.loglik,
            iterations: fit.iterations,
            converged: fit.converged,
            warnings: fit.warnings.iter().map(|w| w.to_string()).collect(),
        })
    }

    pub fn theta(&self) -> Result<Theta> {
        if self.theta_hat.is_empty() {
            return Err(Error::Data("model has an empty parameter vector".into()));
        }
        Theta::new(
            self.theta_hat[0],
            DVector::from_iterator(
                self.theta_hat.len() - 1,
                self.theta_hat[1..].iter().copied(),
            ),
        )
    }
}

fn parse_float(field: &str, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("`{field}` is not a number"),
    })
}

/// Read labeled rows from `y,x1,...,xp` CSV.
pub fn read_labeled_csv<R: Read>(reader: R) -> Result<Vec<LabeledObservation>> {
    let mut csv_reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = csv_reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.len() < 2 || headers.get(0).map(str::trim) != Some("y") {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header `y,x1,...,xp`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let dim = headers.len() - 1;
    let mut out = Vec::new();
    for (idx, record) in csv_reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.len() != dim + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, got {}", dim + 1, record.len()),
            });
        }
        let y = match record.get(0).map(str::trim) {
            Some("0") => false,
            Some("1") => true,
            Some(other) => {
                return Err(Error::Parse {
                    line,
                    message: format!("y must be 0 or 1, got `{other}`"),
                })
            }
            None => unreachable!(),
        };
        let x = DVector::from_iterator(
            dim,
            record
                .iter()
                .skip(1)
                .map(|f| parse_float(f, line))
                .collect::<Result<Vec<f64>>>()?,
        );
        out.push(LabeledObservation::new(y, x)?);
    }
    Ok(out)
}

/// Read unlabeled rows from `x1,...,xp` CSV. An empty file (or a file with
/// only a header) yields an empty vector.
pub fn read_unlabeled_csv<R: Read>(reader: R) -> Result<Vec<DVector<f64>>> {
    let mut csv_reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut out = Vec::new();
    let mut dim = None;
    for (idx, record) in csv_reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let d = *dim.get_or_insert(record.len());
        if record.len() != d {
            return Err(Error::Parse {
                line,
                message: format!("expected {d} fields, got {}", record.len()),
            });
        }
        out.push(DVector::from_iterator(
            d,
            record
                .iter()
                .map(|f| parse_float(f, line))
                .collect::<Result<Vec<f64>>>()?,
        ));
    }
    Ok(out)
}

/// Write labeled rows with a `y,x1,...,xp` header.
pub fn write_labeled_csv<W: Write>(writer: W, rows: &[LabeledObservation]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let dim = rows.first().map(|r| r.x.len()).unwrap_or(0);
    let mut header = vec!["y".to_string()];
    header.extend((1..=dim).map(|j| format!("x{j}")));
    w.write_record(&header)
        .and_then(|_| {
            for row in rows {
                let mut rec = vec![(row.y as u8).to_string()];
                rec.extend(row.x.iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
            w.flush().map_err(csv::Error::from)
        })
        .map_err(|e| Error::Data(e.to_string()))
}

/// Write unlabeled rows with an `x1,...,xp` header.
pub fn write_unlabeled_csv<W: Write>(writer: W, rows: &[DVector<f64>], dim: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<String> = (1..=dim).map(|j| format!("x{j}")).collect();
    w.write_record(&header)
        .and_then(|_| {
            for row in rows {
                let rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                w.write_record(&rec)?;
            }
            w.flush().map_err(csv::Error::from)
        })
        .map_err(|e| Error::Data(e.to_string()))
}
