//! Hyperparameter search over (λ, α, β, γ) on a seen-class validation split.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CdlError, Result};
use crate::evaluation::evaluate_zsl;
use crate::model::{fit, AblationVariant, Hyperparams};
use crate::recognition::SpaceSelection;

pub const DEFAULT_GRID: [f64; 5] = [0.001, 0.01, 0.1, 1.0, 10.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lambdas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lambdas: DEFAULT_GRID.to_vec(),
            alphas: DEFAULT_GRID.to_vec(),
            betas: DEFAULT_GRID.to_vec(),
            gammas: DEFAULT_GRID.to_vec(),
        }
    }
}

impl GridSpec {
    pub fn single(hp: &Hyperparams) -> Self {
        Self {
            lambdas: vec![hp.lambda],
            alphas: vec![hp.alpha],
            betas: vec![hp.beta],
            gammas: vec![hp.gamma],
        }
    }

    pub fn len(&self) -> usize {
        self.lambdas.len() * self.alphas.len() * self.betas.len() * self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points in lexicographic (λ, α, β, γ) order.
    pub fn points(&self, base: &Hyperparams) -> Vec<Hyperparams> {
        let mut out = Vec::with_capacity(self.len());
        for &lambda in &self.lambdas {
            for &alpha in &self.alphas {
                for &beta in &self.betas {
                    for &gamma in &self.gammas {
                        out.push(Hyperparams {
                            lambda,
                            alpha,
                            beta,
                            gamma,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    /// Position in the enumeration order.
    pub index: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Validation per-class top-1; 0 for points whose fit failed.
    pub accuracy: f64,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

/// Scores one grid point on an already prepared train/validation dataset.
pub fn score_point(
    split: &Dataset,
    hp: &Hyperparams,
    variant: AblationVariant,
    spaces: &SpaceSelection,
    seed: u64,
) -> Result<(f64, usize, bool)> {
    let model = fit(split, hp, variant, seed)?;
    let rows = evaluate_zsl(&model, split, std::slice::from_ref(spaces))?;
    Ok((
        rows[0].accuracy,
        model.trace.iterations_run,
        model.trace.converged,
    ))
}

/// Evaluates every grid point with the validation classes held out as
/// pseudo-unseen classes. Rows are sorted by accuracy (descending), ties in
/// enumeration order. Points are fitted in parallel; the output order does
/// not depend on scheduling.
pub fn grid_search(
    dataset: &Dataset,
    base: &Hyperparams,
    grid: &GridSpec,
    variant: AblationVariant,
    spaces: &SpaceSelection,
    seed: u64,
) -> Result<Vec<GridRow>> {
    if grid.is_empty() {
        return Err(CdlError::InvalidArgument("empty hyperparameter grid".into()));
    }
    let split = dataset.validation_split()?;
    let points = grid.points(base);
    for hp in &points {
        hp.validate()?;
    }
    let mut rows: Vec<GridRow> = points
        .par_iter()
        .enumerate()
        .map(|(index, hp)| {
            let (accuracy, iterations, converged, error) =
                match score_point(&split, hp, variant, spaces, seed) {
                    Ok((a, i, c)) => (a, i, c, None),
                    Err(e) => (0.0, 0, false, Some(e.to_string())),
                };
            GridRow {
                index,
                lambda: hp.lambda,
                alpha: hp.alpha,
                beta: hp.beta,
                gamma: hp.gamma,
                accuracy,
                iterations,
                converged,
                error,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        b.accuracy
            .total_cmp(&a.accuracy)
            .then(a.index.cmp(&b.index))
    });
    Ok(rows)
}

/// Tab-separated ranked table.
pub fn render_table(rows: &[GridRow]) -> String {
    let mut out = String::from("rank\tlambda\talpha\tbeta\tgamma\taccuracy\titerations\tconverged\terror\n");
    for (rank, r) in rows.iter().enumerate() {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{:.6}\t{}\t{}\t{}\n",
            rank + 1,
            r.lambda,
            r.alpha,
            r.beta,
            r.gamma,
            r.accuracy,
            r.iterations,
            r.converged,
            r.error.as_deref().unwrap_or("")
        ));
    }
    out
}
