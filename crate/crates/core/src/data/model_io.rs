//! JSON persistence of fitted models.
//!
//! Matrices are stored row-major with shortest round-trip float formatting,
//! so a save/load cycle reproduces every entry bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CdlError, Result};
use crate::model::{AblationVariant, CdlModel, Hyperparams, TrainingTrace};
use crate::Matrix;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl From<&Matrix> for StoredMatrix {
    fn from(m: &Matrix) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub seen_classes: Vec<String>,
    pub unseen_classes: Vec<String>,
    pub variant: AblationVariant,
    pub hyperparams: Hyperparams,
    pub trace: TrainingTrace,
    matrices: BTreeMap<String, StoredMatrix>,
}

impl ModelFile {
    pub fn new(model: &CdlModel, seen_classes: &[String], unseen_classes: &[String]) -> Self {
        let matrices = [
            ("visual_seen", &model.visual_seen),
            ("visual_unseen", &model.visual_unseen),
            ("dict_visual", &model.dict_visual),
            ("dict_semantic", &model.dict_semantic),
            ("codes_seen", &model.codes_seen),
            ("codes_unseen", &model.codes_unseen),
            ("semantic_seen", &model.semantic_seen),
            ("semantic_unseen", &model.semantic_unseen),
        ]
        .into_iter()
        .map(|(k, m)| (k.to_string(), StoredMatrix::from(m)))
        .collect();
        Self {
            format_version: MODEL_FORMAT_VERSION,
            seen_classes: seen_classes.to_vec(),
            unseen_classes: unseen_classes.to_vec(),
            variant: model.variant,
            hyperparams: model.hyperparams.clone(),
            trace: model.trace.clone(),
            matrices,
        }
    }

    pub fn into_model(self, path: &Path) -> Result<CdlModel> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(CdlError::format(
                path,
                format!("unsupported model format version {}", self.format_version),
            ));
        }
        let mut matrices = self.matrices;
        let mut take = |name: &str| -> Result<Matrix> {
            let s = matrices
                .remove(name)
                .ok_or_else(|| CdlError::format(path, format!("missing matrix `{name}`")))?;
            if s.rows * s.cols != s.data.len() || s.rows == 0 || s.cols == 0 {
                return Err(CdlError::format(
                    path,
                    format!("matrix `{name}` has inconsistent shape"),
                ));
            }
            if s.data.iter().any(|v| !v.is_finite()) {
                return Err(CdlError::format(path, format!("matrix `{name}` is not finite")));
            }
            Ok(Matrix::from_row_slice(s.rows, s.cols, &s.data))
        };
        let model = CdlModel {
            visual_seen: take("visual_seen")?,
            visual_unseen: take("visual_unseen")?,
            dict_visual: take("dict_visual")?,
            dict_semantic: take("dict_semantic")?,
            codes_seen: take("codes_seen")?,
            codes_unseen: take("codes_unseen")?,
            semantic_seen: take("semantic_seen")?,
            semantic_unseen: take("semantic_unseen")?,
            hyperparams: self.hyperparams,
            variant: self.variant,
            trace: self.trace,
        };
        model
            .check_consistency()
            .map_err(|e| CdlError::format(path, e.to_string()))?;
        if model.num_seen() != self.seen_classes.len()
            || model.num_unseen() != self.unseen_classes.len()
        {
            return Err(CdlError::format(path, "class registries do not match matrices"));
        }
        Ok(model)
    }
}

pub fn save_model(
    model: &CdlModel,
    seen_classes: &[String],
    unseen_classes: &[String],
    path: &Path,
) -> Result<()> {
    let file = ModelFile::new(model, seen_classes, unseen_classes);
    let mut json = serde_json::to_string_pretty(&file).map_err(|e| CdlError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    json.push('\n');
    fs::write(path, json).map_err(|e| CdlError::io(path, e))
}

/// Loads a model and the seen/unseen class registries it was trained with.
pub fn load_model(path: &Path) -> Result<(CdlModel, Vec<String>, Vec<String>)> {
    let text = fs::read_to_string(path).map_err(|e| CdlError::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| CdlError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    let seen = file.seen_classes.clone();
    let unseen = file.unseen_classes.clone();
    Ok((file.into_model(path)?, seen, unseen))
}
