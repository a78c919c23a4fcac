//! Average per-class top-1 accuracy and the seen/unseen harmonic mean.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CdlError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClassAccuracy {
    /// Unweighted mean over the classes present in the ground truth.
    pub overall: f64,
    pub per_class: BTreeMap<usize, f64>,
    pub samples: usize,
}

/// Per-class top-1 accuracy. Registry classes without test samples are left
/// out of the mean.
pub fn per_class_top1(pred: &[usize], truth: &[usize], classes: &[usize]) -> Result<PerClassAccuracy> {
    if pred.len() != truth.len() {
        return Err(CdlError::InvalidArgument(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(CdlError::InvalidArgument("empty ground truth".into()));
    }
    let mut tally: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        if !classes.contains(&t) {
            return Err(CdlError::InvalidArgument(format!(
                "ground-truth class {t} is not in the registry"
            )));
        }
        let entry = tally.entry(t).or_default();
        entry.1 += 1;
        if p == t {
            entry.0 += 1;
        }
    }
    let per_class: BTreeMap<usize, f64> = tally
        .into_iter()
        .map(|(c, (hit, n))| (c, hit as f64 / n as f64))
        .collect();
    let overall = per_class.values().sum::<f64>() / per_class.len() as f64;
    Ok(PerClassAccuracy {
        overall,
        per_class,
        samples: truth.len(),
    })
}

/// `2·ts·tr / (ts + tr)`, or 0 when both are 0.
pub fn harmonic_mean(ts: f64, tr: f64) -> Result<f64> {
    for (name, v) in [("ts", ts), ("tr", tr)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(CdlError::InvalidArgument(format!(
                "{name} = {v} is outside [0, 1]"
            )));
        }
    }
    if ts + tr == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * ts * tr / (ts + tr))
}
