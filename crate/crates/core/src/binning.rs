//! Quantile binning of landmark uncertainty and iterative removal of the
//! least reliable training samples.

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 50;

/// Consecutive non-improving iterations that end the removal loop.
pub const PATIENCE: usize = 2;

/// Empirical quantile with linear interpolation between order statistics:
/// position `h = (n − 1)·p` in the sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    interpolate(sorted, h.floor() as usize, h - h.floor())
}

/// Quantile at `p = num / den`, with the position split exactly in integers.
fn quantile_ratio(sorted: &[f64], num: usize, den: usize) -> f64 {
    let scaled = (sorted.len() - 1) * num;
    interpolate(sorted, scaled / den, (scaled % den) as f64 / den as f64)
}

fn interpolate(sorted: &[f64], lo: usize, frac: f64) -> f64 {
    let hi = (lo + 1).min(sorted.len() - 1);
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// The `K − 1` interior quantiles `(1/K, …, (K−1)/K)`.
pub fn quantile_edges(uncertainties: &[f64], k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::invalid(format!("bin count K = {k} must be at least 2")));
    }
    if uncertainties.len() < k {
        return Err(Error::invalid(format!(
            "{} uncertainty values cannot fill K = {k} bins",
            uncertainties.len()
        )));
    }
    if let Some(i) = uncertainties.iter().position(|u| !u.is_finite()) {
        return Err(Error::NonFinite {
            index: i,
            context: " (landmark uncertainty)".into(),
        });
    }
    let mut sorted = uncertainties.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((1..k)
        .map(|q| quantile_ratio(&sorted, q, k))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BinStep {
    pub bins_removed: usize,
    pub samples_remaining: usize,
    pub val_auc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantileBinning {
    pub k: usize,
    pub edges: Vec<f64>,
    pub history: Vec<BinStep>,
}

impl QuantileBinning {
    pub fn fit(uncertainties: &[f64], k: usize) -> Result<Self> {
        Ok(QuantileBinning {
            k,
            edges: quantile_edges(uncertainties, k)?,
            history: Vec::new(),
        })
    }

    /// 1-based bin; a value equal to an edge goes to the lower bin.
    pub fn bin_of(&self, u: f64) -> usize {
        1 + self.edges.partition_point(|&e| e < u)
    }

    /// Bins in removal order, most uncertain first.
    pub fn removal_order(&self) -> Vec<usize> {
        (1..=self.k).rev().collect()
    }

    /// Worst bin over a sample's landmarks; `None` (no landmark data) counts as bin `K`.
    pub fn sample_bin(&self, uncertainties: Option<&[f64]>) -> usize {
        match uncertainties {
            Some(us) if !us.is_empty() => us.iter().map(|&u| self.bin_of(u)).max().unwrap(),
            _ => self.k,
        }
    }
}

/// Indices of samples whose worst landmark bin survives removal of the top
/// `removed` bins.
pub fn filter_samples(sample_bins: &[usize], k: usize, removed: usize) -> Result<Vec<usize>> {
    if removed > k {
        return Err(Error::invalid(format!(
            "cannot remove {removed} of {k} bins"
        )));
    }
    Ok((0..sample_bins.len())
        .filter(|&i| sample_bins[i] <= k - removed)
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinRemoval {
    pub chosen: usize,
    pub history: Vec<BinStep>,
}

impl BinRemoval {
    pub fn best_auc(&self) -> f64 {
        self.history[self.chosen].val_auc
    }
}

#[derive(Debug)]
pub struct BinRemovalFailure {
    pub history: Vec<BinStep>,
    pub source: Error,
}

/// Removes one bin per iteration starting from none, stopping after
/// [`PATIENCE`] consecutive iterations that fail to beat the running best,
/// when bins run out, or when `validate` returns `None` for a surviving set it
/// cannot score. The chosen count is the earliest argmax of the history.
///
/// `validate` receives the surviving sample indices.
pub fn iterative_bin_removal<F>(
    sample_bins: &[usize],
    k: usize,
    mut validate: F,
) -> std::result::Result<BinRemoval, BinRemovalFailure>
where
    F: FnMut(&[usize]) -> Result<Option<f64>>,
{
    let mut history: Vec<BinStep> = Vec::new();
    let mut best = 0;
    let mut stale = 0;
    for removed in 0..=k {
        let survivors = match filter_samples(sample_bins, k, removed) {
            Ok(s) => s,
            Err(source) => return Err(BinRemovalFailure { history, source }),
        };
        if survivors.is_empty() {
            break;
        }
        let auc = match validate(&survivors) {
            Ok(Some(a)) if (0.0..=1.0).contains(&a) => a,
            Ok(Some(a)) => {
                return Err(BinRemovalFailure {
                    history,
                    source: Error::Numerical(format!("validation AUC {a} outside [0, 1]")),
                })
            }
            Ok(None) => break,
            Err(source) => return Err(BinRemovalFailure { history, source }),
        };
        log::info!(
            "bins removed {removed}: {} samples, validation AUC {auc:.4}",
            survivors.len()
        );
        history.push(BinStep {
            bins_removed: removed,
            samples_remaining: survivors.len(),
            val_auc: auc,
        });
        if removed > 0 {
            if auc > history[best].val_auc {
                best = history.len() - 1;
                stale = 0;
            } else {
                stale += 1;
                if stale >= PATIENCE {
                    break;
                }
            }
        }
    }
    if history.is_empty() {
        return Err(BinRemovalFailure {
            history,
            source: Error::invalid("no samples to validate"),
        });
    }
    Ok(BinRemoval {
        chosen: history[best].bins_removed,
        history,
    })
}

pub fn write_history_csv(path: &std::path::Path, history: &[BinStep]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::data(path, e.to_string()))?;
    let werr = |e: csv::Error| Error::data(path, e.to_string());
    w.write_record(["bins_removed", "samples_remaining", "val_auc"])
        .map_err(werr)?;
    for s in history {
        w.write_record([
            s.bins_removed.to_string(),
            s.samples_remaining.to_string(),
            format!("{:.6}", s.val_auc),
        ])
        .map_err(werr)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
