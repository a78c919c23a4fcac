//! ZSL and GZSL evaluation of a fitted model over space combinations.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabeledSet};
use crate::error::{CdlError, Result};
use crate::metrics::{harmonic_mean, per_class_top1, PerClassAccuracy};
use crate::model::{CdlModel, Hyperparams};
use crate::recognition::{candidate_ids, Candidates, EncodedBatch, SpaceSelection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Unseen test samples against unseen classes only.
    Zsl,
    /// Seen and unseen test samples against all classes.
    Gzsl,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Zsl => "zsl",
            Mode::Gzsl => "gzsl",
        })
    }
}

impl FromStr for Mode {
    type Err = CdlError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zsl" => Ok(Mode::Zsl),
            "gzsl" => Ok(Mode::Gzsl),
            other => Err(CdlError::InvalidArgument(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZslRow {
    pub spaces: String,
    pub accuracy: f64,
    /// Accuracy of every test class, keyed by class name.
    pub per_class: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GzslRow {
    pub spaces: String,
    pub ts: f64,
    pub tr: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: Mode,
    pub variant: String,
    pub hyperparams: Hyperparams,
    pub iterations: usize,
    pub converged: bool,
    pub final_loss: f64,
    pub test_unseen_samples: usize,
    pub test_seen_samples: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub zsl: Vec<ZslRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gzsl: Vec<GzslRow>,
}

impl EvalReport {
    pub fn zsl_accuracy(&self, spaces: &str) -> Option<f64> {
        self.zsl
            .iter()
            .find(|r| r.spaces == spaces)
            .map(|r| r.accuracy)
    }
}

fn named(acc: &PerClassAccuracy, dataset: &Dataset) -> BTreeMap<String, f64> {
    acc.per_class
        .iter()
        .map(|(&id, &v)| (dataset.class_name(id).to_string(), v))
        .collect()
}

fn require<'a>(set: &'a Option<LabeledSet>, what: &str) -> Result<&'a LabeledSet> {
    set.as_ref()
        .ok_or_else(|| CdlError::InvalidArgument(format!("dataset has no {what} test split")))
}

/// ZSL per-class accuracy of every requested space combination.
pub fn evaluate_zsl(
    model: &CdlModel,
    dataset: &Dataset,
    selections: &[SpaceSelection],
) -> Result<Vec<ZslRow>> {
    let test = require(&dataset.test_unseen, "unseen")?;
    let truth: Vec<usize> = test.labels.iter().map(|&l| dataset.unseen_id(l)).collect();
    let classes = candidate_ids(model, Candidates::Unseen);
    let batch = EncodedBatch::new(model, &test.features)?;
    selections
        .iter()
        .map(|sel| {
            let pred = batch.fused(sel, Candidates::Unseen).argmax();
            let acc = per_class_top1(&pred, &truth, &classes)?;
            Ok(ZslRow {
                spaces: sel.to_string(),
                accuracy: acc.overall,
                per_class: named(&acc, dataset),
            })
        })
        .collect()
}

/// GZSL unseen accuracy (ts), seen accuracy (tr) and their harmonic mean.
pub fn evaluate_gzsl(
    model: &CdlModel,
    dataset: &Dataset,
    selections: &[SpaceSelection],
) -> Result<Vec<GzslRow>> {
    let unseen = require(&dataset.test_unseen, "unseen")?;
    let seen = require(&dataset.test_seen, "seen")?;
    let classes = candidate_ids(model, Candidates::Both);
    let unseen_truth: Vec<usize> = unseen.labels.iter().map(|&l| dataset.unseen_id(l)).collect();
    let unseen_batch = EncodedBatch::new(model, &unseen.features)?;
    let seen_batch = EncodedBatch::new(model, &seen.features)?;
    selections
        .iter()
        .map(|sel| {
            let pred_u = unseen_batch.fused(sel, Candidates::Both).argmax();
            let pred_s = seen_batch.fused(sel, Candidates::Both).argmax();
            let ts = per_class_top1(&pred_u, &unseen_truth, &classes)?.overall;
            let tr = per_class_top1(&pred_s, &seen.labels, &classes)?.overall;
            Ok(GzslRow {
                spaces: sel.to_string(),
                ts,
                tr,
                h: harmonic_mean(ts, tr)?,
            })
        })
        .collect()
}

pub fn evaluate(
    model: &CdlModel,
    dataset: &Dataset,
    selections: &[SpaceSelection],
    mode: Mode,
) -> Result<EvalReport> {
    if selections.is_empty() {
        return Err(CdlError::InvalidArgument("no space selection to evaluate".into()));
    }
    if model.num_seen() != dataset.num_seen() || model.num_unseen() != dataset.num_unseen() {
        return Err(CdlError::InvalidArgument(format!(
            "model has {}/{} seen/unseen classes, dataset {}/{}",
            model.num_seen(),
            model.num_unseen(),
            dataset.num_seen(),
            dataset.num_unseen()
        )));
    }
    let (zsl, gzsl) = match mode {
        Mode::Zsl => (evaluate_zsl(model, dataset, selections)?, Vec::new()),
        Mode::Gzsl => (Vec::new(), evaluate_gzsl(model, dataset, selections)?),
    };
    let count = |s: &Option<LabeledSet>| s.as_ref().map_or(0, |s| s.labels.len());
    Ok(EvalReport {
        mode,
        variant: model.variant.to_string(),
        hyperparams: model.hyperparams.clone(),
        iterations: model.trace.iterations_run,
        converged: model.trace.converged,
        final_loss: model.trace.final_loss().total,
        test_unseen_samples: count(&dataset.test_unseen),
        test_seen_samples: if mode == Mode::Gzsl {
            count(&dataset.test_seen)
        } else {
            0
        },
        zsl,
        gzsl,
    })
}
