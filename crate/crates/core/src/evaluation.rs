//! Binary classification metrics, temporal splitting and decision curves.

use chrono::NaiveDate;
use serde::Serialize;
use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::features::require_both_classes;

/// Mann–Whitney AUC with midranks for ties.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let (np, nn) = require_both_classes(labels)?;
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite {
            index: i,
            context: " (score)".into(),
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    // Twice the rank sum keeps midranks integral.
    let mut twice_rank_sum_pos: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // Ranks start..end are 1-based start+1..=end; twice their mean is start+end+1.
        let twice_mid = (start + end + 1) as u128;
        let pos_in_group = order[start..end].iter().filter(|&&i| labels[i]).count() as u128;
        twice_rank_sum_pos += twice_mid * pos_in_group;
        start = end;
    }
    let (np, nn) = (np as u128, nn as u128);
    // 2·U = 2·R₊ − n₊(n₊+1)
    let twice_u = twice_rank_sum_pos - np * (np + 1);
    Ok((twice_u as f64 / 2.0) / (np as f64 * nn as f64))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    pub fn mcc(&self) -> f64 {
        let (tp, fp, tn, fnn) = (self.tp as f64, self.fp as f64, self.tn as f64, self.fn_ as f64);
        let den = (tp + fp) * (tp + fnn) * (tn + fp) * (tn + fnn);
        if den == 0.0 {
            return 0.0;
        }
        (tp * tn - fp * fnn) / den.sqrt()
    }
}

pub fn confusion(predictions: &[bool], labels: &[bool]) -> Result<Confusion> {
    if predictions.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut c = Confusion::default();
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Matthews correlation; any zero marginal gives 0.
pub fn mcc(tp: i64, fp: i64, tn: i64, fn_: i64) -> Result<f64> {
    if [tp, fp, tn, fn_].iter().any(|&v| v < 0) {
        return Err(Error::invalid("confusion counts must be non-negative"));
    }
    if tp + fp + tn + fn_ == 0 {
        return Err(Error::invalid("MCC needs at least one sample"));
    }
    Ok(Confusion {
        tp: tp as u64,
        fp: fp as u64,
        tn: tn as u64,
        fn_: fn_ as u64,
    }
    .mcc())
}

/// `p_t ∈ {0.01, …, 0.99}`.
pub fn default_thresholds() -> Vec<f64> {
    (1..=99).map(|i| i as f64 / 100.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DcaCurve {
    pub thresholds: Vec<f64>,
    pub net_benefit_model: Vec<f64>,
    pub net_benefit_treat_all: Vec<f64>,
    pub net_benefit_treat_none: Vec<f64>,
    pub n: usize,
    pub prevalence: f64,
}

impl DcaCurve {
    /// Fraction of thresholds in `[lo, hi]` where the model beats both
    /// reference policies.
    pub fn advantage_in_band(&self, lo: f64, hi: f64) -> f64 {
        let in_band: Vec<usize> = (0..self.thresholds.len())
            .filter(|&i| self.thresholds[i] >= lo - 1e-12 && self.thresholds[i] <= hi + 1e-12)
            .collect();
        if in_band.is_empty() {
            return 0.0;
        }
        let wins = in_band
            .iter()
            .filter(|&&i| {
                self.net_benefit_model[i] > self.net_benefit_treat_all[i]
                    && self.net_benefit_model[i] > self.net_benefit_treat_none[i]
            })
            .count();
        wins as f64 / in_band.len() as f64
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::data(path, e.to_string()))?;
        let werr = |e: csv::Error| Error::data(path, e.to_string());
        w.write_record(["threshold", "nb_model", "nb_all", "nb_none"]).map_err(werr)?;
        for i in 0..self.thresholds.len() {
            w.write_record([
                format!("{:.2}", self.thresholds[i]),
                format!("{:.6}", self.net_benefit_model[i]),
                format!("{:.6}", self.net_benefit_treat_all[i]),
                format!("{:.6}", self.net_benefit_treat_none[i]),
            ])
            .map_err(werr)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Net benefit `TP/N − FP/N · p/(1−p)`; a subject is treated when its
/// probability is at least the threshold.
pub fn net_benefit(probabilities: &[f64], labels: &[bool], threshold: f64) -> f64 {
    let n = labels.len() as f64;
    let odds = threshold / (1.0 - threshold);
    let (mut tp, mut fp) = (0usize, 0usize);
    for (&p, &y) in probabilities.iter().zip(labels) {
        if p >= threshold {
            if y {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    (tp as f64 - fp as f64 * odds) / n
}

pub fn dca_curve(probabilities: &[f64], labels: &[bool], thresholds: &[f64]) -> Result<DcaCurve> {
    if probabilities.len() != labels.len() {
        return Err(Error::shape("probabilities and labels differ in length"));
    }
    if labels.is_empty() {
        return Err(Error::invalid("decision curve needs at least one subject"));
    }
    if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
    }
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(Error::invalid(format!(
            "decision threshold {t} must lie strictly between 0 and 1"
        )));
    }
    let n = labels.len();
    let prevalence = labels.iter().filter(|&&y| y).count() as f64 / n as f64;
    let mut curve = DcaCurve {
        thresholds: thresholds.to_vec(),
        net_benefit_model: Vec::with_capacity(thresholds.len()),
        net_benefit_treat_all: Vec::with_capacity(thresholds.len()),
        net_benefit_treat_none: vec![0.0; thresholds.len()],
        n,
        prevalence,
    };
    for &t in thresholds {
        curve.net_benefit_model.push(net_benefit(probabilities, labels, t));
        curve
            .net_benefit_treat_all
            .push(prevalence - (1.0 - prevalence) * t / (1.0 - t));
    }
    Ok(curve)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimedSubject {
    pub subject_id: String,
    pub diagnosis_date: Option<NaiveDate>,
}

/// Indices into the input, earliest diagnoses first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemporalSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn temporal_split(subjects: &[TimedSubject], train_fraction: f64) -> Result<TemporalSplit> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::invalid(format!("train fraction {train_fraction} outside [0, 1]")));
    }
    let missing: Vec<&str> = subjects
        .iter()
        .filter(|s| s.diagnosis_date.is_none())
        .map(|s| s.subject_id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::invalid(format!(
            "subjects without diagnosis date: {}",
            missing.join(", ")
        )));
    }
    let mut order: Vec<usize> = (0..subjects.len()).collect();
    order.sort_by(|&a, &b| {
        subjects[a]
            .diagnosis_date
            .cmp(&subjects[b].diagnosis_date)
            .then_with(|| subjects[a].subject_id.cmp(&subjects[b].subject_id))
    });
    // Guard against 0.8032 * 1346 landing a hair under an integer.
    let n_train = ((train_fraction * subjects.len() as f64) + 1e-9).floor() as usize;
    let n_train = n_train.min(subjects.len());
    let test = order.split_off(n_train);
    if test.is_empty() {
        log::warn!("temporal split leaves the test set empty");
    }
    Ok(TemporalSplit { train: order, test })
}

/// Contiguous near-equal chunks; the first `len % parts` chunks get one extra.
pub fn contiguous_chunks(len: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let base = len / parts;
    let extra = len % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let size = base + usize::from(p < extra);
        out.push(start..start + size);
        start += size;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionSummary {
    pub mean: f64,
    pub std: f64,
    /// `None` for parts where the metric was undefined.
    pub per_part: Vec<Option<f64>>,
}

/// Evaluates `metric` on `parts` time-ordered chunks of `order` and reports the
/// population standard deviation over the chunks where it is defined.
pub fn partitioned_std<F>(order: &[usize], parts: usize, mut metric: F) -> Result<PartitionSummary>
where
    F: FnMut(&[usize]) -> Result<f64>,
{
    if parts == 0 || order.len() < parts {
        return Err(Error::invalid(format!(
            "cannot split {} test subjects into {parts} parts",
            order.len()
        )));
    }
    let mut per_part = Vec::with_capacity(parts);
    for (p, range) in contiguous_chunks(order.len(), parts).into_iter().enumerate() {
        match metric(&order[range]) {
            Ok(v) => per_part.push(Some(v)),
            Err(e) => {
                log::warn!("test part {} skipped: {e}", p + 1);
                per_part.push(None);
            }
        }
    }
    let vals: Vec<f64> = per_part.iter().flatten().copied().collect();
    if vals.is_empty() {
        return Err(Error::Numerical("metric undefined on every test part".into()));
    }
    let (mean, std) = mean_std(&vals);
    Ok(PartitionSummary { mean, std, per_part })
}

/// Mean and population standard deviation.
pub fn mean_std(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub model: String,
    pub resolution: Option<usize>,
    pub auc: f64,
    pub accuracy: f64,
    pub mcc: f64,
    pub auc_parts: PartitionSummary,
    pub accuracy_parts: PartitionSummary,
    pub mcc_parts: PartitionSummary,
}

/// AUC, accuracy (probability ≥ 0.5) and MCC on the whole test set plus
/// their spread over `parts` time-ordered test chunks. `order` lists test
/// rows by diagnosis time.
pub fn evaluate(
    model: &str,
    resolution: Option<usize>,
    scores: &[f64],
    probabilities: &[f64],
    labels: &[bool],
    order: &[usize],
    parts: usize,
) -> Result<EvalReport> {
    let preds: Vec<bool> = probabilities.iter().map(|&p| p >= 0.5).collect();
    let conf = confusion(&preds, labels)?;
    let pick = |idx: &[usize]| -> (Vec<f64>, Vec<bool>, Vec<bool>) {
        (
            idx.iter().map(|&i| scores[i]).collect(),
            idx.iter().map(|&i| preds[i]).collect(),
            idx.iter().map(|&i| labels[i]).collect(),
        )
    };
    let auc_parts = partitioned_std(order, parts, |idx| {
        let (s, _, y) = pick(idx);
        roc_auc(&s, &y)
    })?;
    let accuracy_parts = partitioned_std(order, parts, |idx| {
        let (_, p, y) = pick(idx);
        Ok(confusion(&p, &y)?.accuracy())
    })?;
    let mcc_parts = partitioned_std(order, parts, |idx| {
        let (_, p, y) = pick(idx);
        Ok(confusion(&p, &y)?.mcc())
    })?;
    Ok(EvalReport {
        model: model.to_string(),
        resolution,
        auc: roc_auc(scores, labels)?,
        accuracy: conf.accuracy(),
        mcc: conf.mcc(),
        auc_parts,
        accuracy_parts,
        mcc_parts,
    })
}
