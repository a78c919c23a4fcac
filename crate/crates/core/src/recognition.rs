//! Nearest-prototype recognition in the visual, aligned and semantic spaces.
//!
//! Class ids are global: seen class `k` is `k` and unseen class `l` is
//! `K + l`, where `K` is the number of seen classes.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CdlError, Result};
use crate::linalg::ridge_encode;
use crate::model::{normalize_columns, CdlModel};
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Space {
    Visual,
    Aligned,
    Semantic,
}

impl Space {
    pub const ALL: [Space; 3] = [Space::Visual, Space::Aligned, Space::Semantic];

    pub fn short(self) -> char {
        match self {
            Space::Visual => 'v',
            Space::Aligned => 'a',
            Space::Semantic => 's',
        }
    }
}

impl FromStr for Space {
    type Err = CdlError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "v" | "visual" => Ok(Space::Visual),
            "a" | "aligned" => Ok(Space::Aligned),
            "s" | "semantic" => Ok(Space::Semantic),
            other => Err(CdlError::InvalidArgument(format!("unknown space `{other}`"))),
        }
    }
}

/// Nonempty set of spaces whose similarities are summed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpaceSelection(BTreeSet<Space>);

impl SpaceSelection {
    pub fn new(spaces: &[Space]) -> Result<Self> {
        let set: BTreeSet<Space> = spaces.iter().copied().collect();
        if set.is_empty() {
            return Err(CdlError::InvalidArgument("empty space selection".into()));
        }
        if set.len() != spaces.len() {
            return Err(CdlError::InvalidArgument(
                "duplicate space in selection".into(),
            ));
        }
        Ok(Self(set))
    }

    pub fn single(space: Space) -> Self {
        Self(BTreeSet::from([space]))
    }

    /// The seven nonempty subsets of {v, a, s}, singletons first.
    pub fn all_subsets() -> Vec<SpaceSelection> {
        let mut subsets: Vec<SpaceSelection> = (1u8..8)
            .map(|mask| {
                Self(
                    Space::ALL
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| mask & (1 << i) != 0)
                        .map(|(_, s)| *s)
                        .collect(),
                )
            })
            .collect();
        subsets.sort_by_key(|s| (s.0.len(), s.0.iter().copied().collect::<Vec<_>>()));
        subsets
    }

    pub fn spaces(&self) -> impl Iterator<Item = Space> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for SpaceSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|s| s.short().to_string()).collect();
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for SpaceSelection {
    type Err = CdlError;

    /// Parses `v`, `v+a`, `visual,aligned` and similar.
    fn from_str(s: &str) -> Result<Self> {
        let spaces = s
            .split(['+', ','])
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Space>>>()?;
        Self::new(&spaces)
    }
}

/// Which classes compete at test time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Candidates {
    Unseen,
    Seen,
    /// Seen classes followed by unseen classes.
    Both,
}

/// Test samples × candidate classes score table.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub scores: Matrix,
    /// Global class id of every column.
    pub classes: Vec<usize>,
}

impl SimilarityMatrix {
    /// Registry entry of the best-scoring column of every row; ties go to the
    /// lowest column.
    pub fn argmax(&self) -> Vec<usize> {
        self.scores
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for j in 1..row.len() {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                self.classes[best]
            })
            .collect()
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CdlError::InvalidArgument(format!(
            "vector lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine of every column of `queries` against every column of `protos`.
fn cosine_table(queries: &Matrix, protos: &Matrix) -> Matrix {
    let mut q = queries.clone();
    let mut p = protos.clone();
    normalize_columns(&mut q);
    normalize_columns(&mut p);
    let mut s = q.transpose() * p;
    s.apply(|v| *v = v.clamp(-1.0, 1.0));
    s
}

pub fn candidate_ids(model: &CdlModel, candidates: Candidates) -> Vec<usize> {
    let k = model.num_seen();
    let l = model.num_unseen();
    match candidates {
        Candidates::Seen => (0..k).collect(),
        Candidates::Unseen => (k..k + l).collect(),
        Candidates::Both => (0..k + l).collect(),
    }
}

fn prototypes(seen: &Matrix, unseen: &Matrix, candidates: Candidates) -> Matrix {
    match candidates {
        Candidates::Seen => seen.clone(),
        Candidates::Unseen => unseen.clone(),
        Candidates::Both => {
            let mut both = Matrix::zeros(seen.nrows(), seen.ncols() + unseen.ncols());
            both.columns_mut(0, seen.ncols()).copy_from(seen);
            both.columns_mut(seen.ncols(), unseen.ncols())
                .copy_from(unseen);
            both
        }
    }
}

/// Projections of a test batch into every space, computed once and reused
/// for all space combinations.
pub struct EncodedBatch<'m> {
    model: &'m CdlModel,
    visual: Matrix,
    aligned: Matrix,
    semantic: Matrix,
}

impl<'m> EncodedBatch<'m> {
    pub fn new(model: &'m CdlModel, x_test: &Matrix) -> Result<Self> {
        model.check_consistency()?;
        if x_test.nrows() != model.feature_dim() {
            return Err(CdlError::DimensionMismatch {
                left: "test features",
                left_shape: crate::error::shape(x_test),
                right: "visual dictionary",
                right_shape: crate::error::shape(&model.dict_visual),
            });
        }
        let mut visual = x_test.clone();
        if model.hyperparams.normalize_features {
            normalize_columns(&mut visual);
        }
        let aligned = ridge_encode(&model.dict_visual, &visual, model.hyperparams.gamma)?;
        let semantic = &model.dict_semantic * &aligned;
        Ok(Self {
            model,
            visual,
            aligned,
            semantic,
        })
    }

    pub fn codes(&self) -> &Matrix {
        &self.aligned
    }

    pub fn similarities(&self, space: Space, candidates: Candidates) -> SimilarityMatrix {
        let m = self.model;
        let scores = match space {
            Space::Visual => cosine_table(
                &self.visual,
                &prototypes(&m.visual_seen, &m.visual_unseen, candidates),
            ),
            Space::Aligned => cosine_table(
                &self.aligned,
                &prototypes(&m.codes_seen, &m.codes_unseen, candidates),
            ),
            Space::Semantic => cosine_table(
                &self.semantic,
                &prototypes(&m.semantic_seen, &m.semantic_unseen, candidates),
            ),
        };
        SimilarityMatrix {
            scores,
            classes: candidate_ids(m, candidates),
        }
    }

    pub fn fused(&self, spaces: &SpaceSelection, candidates: Candidates) -> SimilarityMatrix {
        let mut iter = spaces.spaces();
        let first = iter.next().expect("selection is nonempty");
        let mut acc = self.similarities(first, candidates);
        for space in iter {
            acc.scores += self.similarities(space, candidates).scores;
        }
        acc
    }
}

pub fn similarities(
    model: &CdlModel,
    x_test: &Matrix,
    space: Space,
    candidates: Candidates,
) -> Result<SimilarityMatrix> {
    Ok(EncodedBatch::new(model, x_test)?.similarities(space, candidates))
}

/// Entrywise sum of similarity tables over the same samples and classes.
pub fn fuse(sims: &[SimilarityMatrix]) -> Result<SimilarityMatrix> {
    let (first, rest) = sims
        .split_first()
        .ok_or_else(|| CdlError::InvalidArgument("nothing to fuse".into()))?;
    let mut out = first.clone();
    for s in rest {
        if s.classes != first.classes {
            return Err(CdlError::RegistryMismatch("class registry".into()));
        }
        if s.scores.shape() != first.scores.shape() {
            return Err(CdlError::RegistryMismatch("shape".into()));
        }
        out.scores += &s.scores;
    }
    Ok(out)
}

/// Predicted global class id for every test column.
pub fn predict(
    model: &CdlModel,
    x_test: &Matrix,
    spaces: &SpaceSelection,
    candidates: Candidates,
) -> Result<Vec<usize>> {
    Ok(EncodedBatch::new(model, x_test)?
        .fused(spaces, candidates)
        .argmax())
}
