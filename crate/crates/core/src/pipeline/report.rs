//! Prediction and report tables shared by `run`, `evaluate` and `dca`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{dca_curve, default_thresholds, evaluate, DcaCurve};

/// One test-set prediction; rows of a model appear in diagnosis order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub model: String,
    pub resolution: usize,
    pub subject_id: String,
    pub diagnosis_date: String,
    pub label: u8,
    pub score: f64,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub resolution: usize,
    pub n_test: usize,
    pub auc: f64,
    pub auc_std: f64,
    pub accuracy: f64,
    pub accuracy_std: f64,
    pub mcc: f64,
    pub mcc_std: f64,
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::data(path, e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::data(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::data(path, e.to_string()))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::data(path, e.to_string()))
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Scores keep full precision so that rankings read back unchanged.
pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    read_rows(path)
}

pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let rounded: Vec<ReportRow> = rows
        .iter()
        .map(|r| ReportRow {
            auc: round6(r.auc),
            auc_std: round6(r.auc_std),
            accuracy: round6(r.accuracy),
            accuracy_std: round6(r.accuracy_std),
            mcc: round6(r.mcc),
            mcc_std: round6(r.mcc_std),
            ..r.clone()
        })
        .collect();
    write_rows(path, &rounded)
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    read_rows(path)
}

/// Groups predictions by `(model, resolution)` in order of first appearance.
pub fn group(rows: &[PredictionRow]) -> Vec<((String, usize), Vec<&PredictionRow>)> {
    let mut groups: Vec<((String, usize), Vec<&PredictionRow>)> = Vec::new();
    for r in rows {
        let key = (r.model.clone(), r.resolution);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
}

pub fn report_from_predictions(rows: &[PredictionRow], parts: usize) -> Result<Vec<ReportRow>> {
    group(rows)
        .into_iter()
        .map(|((model, resolution), preds)| {
            let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
            let probs: Vec<f64> = preds.iter().map(|p| p.probability).collect();
            let labels: Vec<bool> = preds.iter().map(|p| p.label == 1).collect();
            let order: Vec<usize> = (0..preds.len()).collect();
            let e = evaluate(&model, Some(resolution), &scores, &probs, &labels, &order, parts)?;
            Ok(ReportRow {
                model,
                resolution,
                n_test: preds.len(),
                auc: e.auc,
                auc_std: e.auc_parts.std,
                accuracy: e.accuracy,
                accuracy_std: e.accuracy_parts.std,
                mcc: e.mcc,
                mcc_std: e.mcc_parts.std,
            })
        })
        .collect()
}

/// Decision curve of one model, or of the highest-AUC model when `model` is
/// `None` (earliest row on ties).
pub fn dca_from_predictions(
    rows: &[PredictionRow],
    model: Option<(&str, usize)>,
) -> Result<((String, usize), DcaCurve)> {
    let groups = group(rows);
    let key = match model {
        Some((m, r)) => (m.to_string(), r),
        None => {
            let report = report_from_predictions(rows, 1)?;
            let mut best = report
                .first()
                .ok_or_else(|| Error::invalid("no predictions"))?;
            for r in &report {
                if r.auc > best.auc {
                    best = r;
                }
            }
            (best.model.clone(), best.resolution)
        }
    };
    let preds = groups
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| v)
        .ok_or_else(|| Error::invalid(format!("no predictions for {}@{}", key.0, key.1)))?;
    let probs: Vec<f64> = preds.iter().map(|p| p.probability).collect();
    let labels: Vec<bool> = preds.iter().map(|p| p.label == 1).collect();
    let curve = dca_curve(&probs, &labels, &default_thresholds())?;
    Ok((key, curve))
}

pub fn format_table(rows: &[ReportRow]) -> String {
    let mut out = format!(
        "{:<20} {:>5} {:>6} {:>15} {:>15} {:>16}\n",
        "model", "res", "n", "AUC", "accuracy", "MCC"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<20} {:>5} {:>6} {:>7.4} ± {:<6.4} {:>7.4} ± {:<6.4} {:>7.4} ± {:<6.4}\n",
            r.model, r.resolution, r.n_test, r.auc, r.auc_std, r.accuracy, r.accuracy_std, r.mcc, r.mcc_std
        ));
    }
    out
}
