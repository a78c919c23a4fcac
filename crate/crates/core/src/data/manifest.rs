//! Plain-text dataset manifest.
//!
//! ```text
//! # paths are relative to the manifest's directory
//! features = features.txt              # d × n_s, one sample per column
//! labels = labels.txt                  # one seen class name per line
//! semantics_seen = semantics_seen.txt  # m × K, registry order
//! semantics_unseen = semantics_unseen.txt
//! seen_classes = seen_classes.txt      # one class name per line
//! unseen_classes = unseen_classes.txt
//! test_unseen_features = test_unseen_features.txt   # optional pair
//! test_unseen_labels = test_unseen_labels.txt
//! test_seen_features = test_seen_features.txt       # optional pair
//! test_seen_labels = test_seen_labels.txt
//! validation_classes = cat, dog        # optional, seen class names
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::matrix_io::{read_matrix, write_matrix, MatrixFormat};
use super::{Dataset, LabeledSet};
use crate::error::{CdlError, Result};

pub const MANIFEST_FILE: &str = "dataset.manifest";

const REQUIRED: [&str; 6] = [
    "features",
    "labels",
    "semantics_seen",
    "semantics_unseen",
    "seen_classes",
    "unseen_classes",
];
const OPTIONAL: [&str; 5] = [
    "test_unseen_features",
    "test_unseen_labels",
    "test_seen_features",
    "test_seen_labels",
    "validation_classes",
];

fn parse_manifest(path: &Path, text: &str) -> Result<BTreeMap<String, String>> {
    let mut entries = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CdlError::format(path, format!("line {}: expected `key = value`", i + 1))
        })?;
        let key = key.trim();
        if !REQUIRED.contains(&key) && !OPTIONAL.contains(&key) {
            return Err(CdlError::format(
                path,
                format!("line {}: unknown key `{key}`", i + 1),
            ));
        }
        if entries
            .insert(key.to_string(), value.trim().to_string())
            .is_some()
        {
            return Err(CdlError::format(
                path,
                format!("line {}: duplicate key `{key}`", i + 1),
            ));
        }
    }
    for key in REQUIRED {
        if !entries.contains_key(key) {
            return Err(CdlError::format(path, format!("missing key `{key}`")));
        }
    }
    Ok(entries)
}

fn read_names(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| CdlError::io(path, e))?;
    let names: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    let mut sorted = names.clone();
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(CdlError::format(path, format!("duplicate class `{}`", w[0])));
    }
    if names.is_empty() {
        return Err(CdlError::format(path, "empty class registry"));
    }
    Ok(names)
}

fn read_labels(path: &Path, registry: &[String]) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| CdlError::io(path, e))?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let name = line.trim();
        if name.is_empty() {
            continue;
        }
        let idx = registry
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CdlError::UnknownLabel {
                path: path.to_path_buf(),
                label: name.to_string(),
                line: i + 1,
            })?;
        labels.push(idx);
    }
    Ok(labels)
}

fn read_split(
    dir: &Path,
    entries: &BTreeMap<String, String>,
    prefix: &str,
    registry: &[String],
    manifest: &Path,
) -> Result<Option<LabeledSet>> {
    let fkey = format!("{prefix}_features");
    let lkey = format!("{prefix}_labels");
    match (entries.get(&fkey), entries.get(&lkey)) {
        (None, None) => Ok(None),
        (Some(f), Some(l)) => {
            let fpath = dir.join(f);
            let lpath = dir.join(l);
            let features = read_matrix(&fpath)?;
            let labels = read_labels(&lpath, registry)?;
            if labels.len() != features.ncols() {
                return Err(CdlError::format(
                    &lpath,
                    format!(
                        "{} labels for {} samples in {}",
                        labels.len(),
                        features.ncols(),
                        fpath.display()
                    ),
                ));
            }
            Ok(Some(LabeledSet { features, labels }))
        }
        _ => Err(CdlError::format(
            manifest,
            format!("`{fkey}` and `{lkey}` must be given together"),
        )),
    }
}

/// Reads and validates a dataset described by a manifest file.
pub fn load_dataset(manifest: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(manifest).map_err(|e| CdlError::io(manifest, e))?;
    let entries = parse_manifest(manifest, &text)?;
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let path = |key: &str| -> PathBuf { dir.join(&entries[key]) };

    let seen_classes = read_names(&path("seen_classes"))?;
    let unseen_classes = read_names(&path("unseen_classes"))?;
    let features = read_matrix(&path("features"))?;
    let labels_path = path("labels");
    let labels = read_labels(&labels_path, &seen_classes)?;
    if labels.len() != features.ncols() {
        return Err(CdlError::format(
            &labels_path,
            format!(
                "{} labels for {} feature columns",
                labels.len(),
                features.ncols()
            ),
        ));
    }
    let semantics_seen = read_matrix(&path("semantics_seen"))?;
    let semantics_unseen = read_matrix(&path("semantics_unseen"))?;
    let test_unseen = read_split(dir, &entries, "test_unseen", &unseen_classes, manifest)?;
    let test_seen = read_split(dir, &entries, "test_seen", &seen_classes, manifest)?;

    let validation_classes = match entries.get("validation_classes") {
        None => Vec::new(),
        Some(list) => list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|name| {
                seen_classes.iter().position(|c| c == name).ok_or_else(|| {
                    CdlError::format(
                        manifest,
                        format!("validation class `{name}` is not a seen class"),
                    )
                })
            })
            .collect::<Result<_>>()?,
    };

    let dataset = Dataset {
        features,
        labels,
        semantics_seen,
        semantics_unseen,
        seen_classes,
        unseen_classes,
        test_unseen,
        test_seen,
        validation_classes,
    };
    dataset.validate().map_err(|e| match e {
        CdlError::InvalidDataset(msg) => CdlError::format(manifest, msg),
        other => other,
    })?;
    Ok(dataset)
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<()> {
    let mut text = String::new();
    for line in lines {
        text.push_str(&line);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CdlError::io(path, e))
}

/// Writes all dataset files plus a manifest into `dir` and returns the
/// manifest path.
pub fn save_dataset(dataset: &Dataset, dir: &Path, format: MatrixFormat) -> Result<PathBuf> {
    dataset.validate()?;
    fs::create_dir_all(dir).map_err(|e| CdlError::io(dir, e))?;
    let ext = format.extension();
    let mut manifest = String::from("# dataset manifest; paths are relative to this file\n");
    let mut entry = |key: &str, value: String| {
        manifest.push_str(&format!("{key} = {value}\n"));
    };

    let matrix = |name: &str, m: &crate::Matrix| -> Result<String> {
        let file = format!("{name}.{ext}");
        write_matrix(&dir.join(&file), m)?;
        Ok(file)
    };
    let names = |name: &str, ids: &[usize], registry: &[String]| -> Result<String> {
        let file = format!("{name}.txt");
        write_lines(&dir.join(&file), ids.iter().map(|&i| registry[i].clone()))?;
        Ok(file)
    };

    entry("features", matrix("features", &dataset.features)?);
    entry("labels", names("labels", &dataset.labels, &dataset.seen_classes)?);
    entry("semantics_seen", matrix("semantics_seen", &dataset.semantics_seen)?);
    entry(
        "semantics_unseen",
        matrix("semantics_unseen", &dataset.semantics_unseen)?,
    );
    let all_seen: Vec<usize> = (0..dataset.num_seen()).collect();
    let all_unseen: Vec<usize> = (0..dataset.num_unseen()).collect();
    entry(
        "seen_classes",
        names("seen_classes", &all_seen, &dataset.seen_classes)?,
    );
    entry(
        "unseen_classes",
        names("unseen_classes", &all_unseen, &dataset.unseen_classes)?,
    );
    if let Some(set) = &dataset.test_unseen {
        entry("test_unseen_features", matrix("test_unseen_features", &set.features)?);
        entry(
            "test_unseen_labels",
            names("test_unseen_labels", &set.labels, &dataset.unseen_classes)?,
        );
    }
    if let Some(set) = &dataset.test_seen {
        entry("test_seen_features", matrix("test_seen_features", &set.features)?);
        entry(
            "test_seen_labels",
            names("test_seen_labels", &set.labels, &dataset.seen_classes)?,
        );
    }
    if !dataset.validation_classes.is_empty() {
        let list: Vec<&str> = dataset
            .validation_classes
            .iter()
            .map(|&c| dataset.seen_classes[c].as_str())
            .collect();
        entry("validation_classes", list.join(", "));
    }

    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest).map_err(|e| CdlError::io(&path, e))?;
    Ok(path)
}
