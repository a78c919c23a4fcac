//! Datasets, file formats, synthetic planted instances and result export.

mod manifest;
mod matrix_io;
mod model_io;
mod planted;
mod report;

use std::collections::BTreeSet;

pub use manifest::{load_dataset, save_dataset, MANIFEST_FILE};
pub use matrix_io::{read_matrix, write_matrix, MatrixFormat};
pub use model_io::{load_model, save_model, ModelFile};
pub use planted::{generate_planted, PlantedConfig, PlantedInstance};
pub use report::{export_report, write_trace_csv, TRACE_FILE, REPORT_FILE};

use crate::error::{CdlError, Result};
use crate::linalg::ensure_finite;
use crate::Matrix;

/// Labelled feature columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub features: Matrix,
    pub labels: Vec<usize>,
}

/// Training data for seen classes plus the class semantics of both class sets.
///
/// Seen labels index `seen_classes`; labels of `test_unseen` index
/// `unseen_classes` and labels of `test_seen` index `seen_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `d × n_s` training features, one sample per column.
    pub features: Matrix,
    pub labels: Vec<usize>,
    /// `m × K` semantic prototypes of seen classes.
    pub semantics_seen: Matrix,
    /// `m × L` semantic prototypes of unseen classes.
    pub semantics_unseen: Matrix,
    pub seen_classes: Vec<String>,
    pub unseen_classes: Vec<String>,
    pub test_unseen: Option<LabeledSet>,
    pub test_seen: Option<LabeledSet>,
    /// Seen classes held out as pseudo-unseen during hyperparameter search.
    pub validation_classes: Vec<usize>,
}

fn invalid(msg: impl Into<String>) -> CdlError {
    CdlError::InvalidDataset(msg.into())
}

impl Dataset {
    pub fn feature_dim(&self) -> usize {
        self.features.nrows()
    }

    pub fn semantic_dim(&self) -> usize {
        self.semantics_seen.nrows()
    }

    pub fn num_seen(&self) -> usize {
        self.seen_classes.len()
    }

    pub fn num_unseen(&self) -> usize {
        self.unseen_classes.len()
    }

    /// Checks every structural invariant. Has no side effects.
    pub fn validate(&self) -> Result<()> {
        let k = self.num_seen();
        let l = self.num_unseen();
        if k == 0 || l == 0 {
            return Err(invalid("need at least one seen and one unseen class"));
        }
        let mut names = BTreeSet::new();
        for name in self.seen_classes.iter().chain(&self.unseen_classes) {
            if !names.insert(name.as_str()) {
                return Err(invalid(format!(
                    "class `{name}` appears twice (seen and unseen registries must be disjoint)"
                )));
            }
        }
        let d = self.feature_dim();
        let m = self.semantic_dim();
        if d == 0 || m == 0 {
            return Err(invalid("feature and semantic dimensions must be >= 1"));
        }
        if self.semantics_seen.ncols() != k {
            return Err(invalid(format!(
                "semantics_seen has {} columns for {k} seen classes",
                self.semantics_seen.ncols()
            )));
        }
        if self.semantics_unseen.ncols() != l || self.semantics_unseen.nrows() != m {
            return Err(invalid(format!(
                "semantics_unseen is {}x{}, expected {m}x{l}",
                self.semantics_unseen.nrows(),
                self.semantics_unseen.ncols()
            )));
        }
        if self.labels.len() != self.features.ncols() {
            return Err(invalid(format!(
                "{} labels for {} training samples",
                self.labels.len(),
                self.features.ncols()
            )));
        }
        let mut counts = vec![0usize; k];
        for &y in &self.labels {
            if y >= k {
                return Err(CdlError::LabelOutOfRange {
                    label: y,
                    classes: k,
                });
            }
            counts[y] += 1;
        }
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(CdlError::EmptyClass {
                class: self.seen_classes[c].clone(),
            });
        }
        ensure_finite(&self.features, "features")?;
        ensure_finite(&self.semantics_seen, "semantics_seen")?;
        ensure_finite(&self.semantics_unseen, "semantics_unseen")?;

        for (name, set, classes) in [
            ("test_unseen", &self.test_unseen, l),
            ("test_seen", &self.test_seen, k),
        ] {
            let Some(set) = set else { continue };
            if set.features.nrows() != d {
                return Err(invalid(format!(
                    "{name} features have dimension {}, expected {d}",
                    set.features.nrows()
                )));
            }
            if set.labels.len() != set.features.ncols() {
                return Err(invalid(format!(
                    "{name}: {} labels for {} samples",
                    set.labels.len(),
                    set.features.ncols()
                )));
            }
            if let Some(&y) = set.labels.iter().find(|&&y| y >= classes) {
                return Err(CdlError::LabelOutOfRange { label: y, classes });
            }
            ensure_finite(&set.features, name)?;
        }

        let val: BTreeSet<usize> = self.validation_classes.iter().copied().collect();
        if val.len() != self.validation_classes.len() {
            return Err(invalid("duplicate validation class"));
        }
        if val.iter().any(|&c| c >= k) {
            return Err(invalid("validation class outside the seen registry"));
        }
        if !val.is_empty() && val.len() >= k {
            return Err(invalid("validation split must leave at least one training class"));
        }
        Ok(())
    }

    /// Global class id of an unseen class index.
    pub fn unseen_id(&self, l: usize) -> usize {
        self.num_seen() + l
    }

    /// Name of a global class id.
    pub fn class_name(&self, id: usize) -> &str {
        let k = self.num_seen();
        if id < k {
            &self.seen_classes[id]
        } else {
            &self.unseen_classes[id - k]
        }
    }

    /// Training/validation dataset in which the validation classes become the
    /// unseen classes and their training samples the unseen test set.
    pub fn validation_split(&self) -> Result<Dataset> {
        self.validate()?;
        if self.validation_classes.is_empty() {
            return Err(CdlError::InvalidArgument(
                "dataset defines no validation classes".into(),
            ));
        }
        let val = &self.validation_classes;
        let train: Vec<usize> = (0..self.num_seen()).filter(|c| !val.contains(c)).collect();
        let remap = |classes: &[usize], c: usize| classes.iter().position(|&x| x == c);

        let mut train_cols = Vec::new();
        let mut train_labels = Vec::new();
        let mut val_cols = Vec::new();
        let mut val_labels = Vec::new();
        for (i, &y) in self.labels.iter().enumerate() {
            if let Some(t) = remap(&train, y) {
                train_cols.push(i);
                train_labels.push(t);
            } else if let Some(v) = remap(val, y) {
                val_cols.push(i);
                val_labels.push(v);
            }
        }
        let dataset = Dataset {
            features: self.features.select_columns(&train_cols),
            labels: train_labels,
            semantics_seen: self.semantics_seen.select_columns(&train),
            semantics_unseen: self.semantics_seen.select_columns(val.iter()),
            seen_classes: train.iter().map(|&c| self.seen_classes[c].clone()).collect(),
            unseen_classes: val.iter().map(|&c| self.seen_classes[c].clone()).collect(),
            test_unseen: Some(LabeledSet {
                features: self.features.select_columns(&val_cols),
                labels: val_labels,
            }),
            test_seen: None,
            validation_classes: Vec::new(),
        };
        dataset.validate()?;
        Ok(dataset)
    }
}
