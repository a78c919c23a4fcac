//! CDL model state, initialization and the alternating optimizer.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{mismatch, CdlError, Result};
use crate::linalg::{
    self, frob_sq, solve_code, solve_dictionary, solve_joint_code_near, CodeTerm, DictTarget,
    DictionaryOptions,
};
use crate::recognition::cosine_similarity;
use crate::Matrix;

/// Relative slack allowed when checking that each update does not raise the loss.
pub const MONOTONE_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    /// Weight of the semantic reconstruction against the visual one.
    pub lambda: f64,
    /// Weight of the unseen-class (domain adaptation) terms.
    pub alpha: f64,
    /// Weight of the sample-to-prototype fit.
    pub beta: f64,
    /// Ridge weight used to encode test samples into the aligned space.
    pub gamma: f64,
    /// Number of dictionary atoms; `None` uses the number of seen classes.
    pub n_b: Option<usize>,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub ridge_eps: f64,
    /// L2-normalize every feature column before training and testing.
    pub normalize_features: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            n_b: None,
            max_iters: 100,
            rel_tol: 1e-7,
            ridge_eps: 1e-10,
            normalize_features: false,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("lambda", self.lambda),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("rel_tol", self.rel_tol),
            ("ridge_eps", self.ridge_eps),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CdlError::InvalidHyperparam {
                    name,
                    reason: format!("must be finite and >= 0, got {v}"),
                });
            }
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(CdlError::InvalidHyperparam {
                name: "gamma",
                reason: format!("must be > 0, got {}", self.gamma),
            });
        }
        if self.n_b == Some(0) {
            return Err(CdlError::InvalidHyperparam {
                name: "n_b",
                reason: "must be >= 1".into(),
            });
        }
        if self.max_iters == 0 {
            return Err(CdlError::InvalidHyperparam {
                name: "max_iters",
                reason: "must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// Submodels used to measure the contribution of each loss term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AblationVariant {
    /// Full model.
    #[serde(rename = "CDL")]
    Cdl,
    /// Initialization only, no structure alignment.
    #[serde(rename = "NA")]
    Na,
    /// Without the unseen-class adaptation term.
    #[serde(rename = "CDL-Ad")]
    CdlAd,
    /// Seen prototypes frozen at the class means.
    #[serde(rename = "CDL-Pr")]
    CdlPr,
    #[serde(rename = "CDL-Ad-Pr")]
    CdlAdPr,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 5] = [
        AblationVariant::Cdl,
        AblationVariant::Na,
        AblationVariant::CdlAd,
        AblationVariant::CdlPr,
        AblationVariant::CdlAdPr,
    ];

    pub fn drops_adaptation(self) -> bool {
        matches!(self, AblationVariant::CdlAd | AblationVariant::CdlAdPr)
    }

    pub fn freezes_prototypes(self) -> bool {
        matches!(self, AblationVariant::CdlPr | AblationVariant::CdlAdPr)
    }

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::Cdl => "CDL",
            AblationVariant::Na => "NA",
            AblationVariant::CdlAd => "CDL-Ad",
            AblationVariant::CdlPr => "CDL-Pr",
            AblationVariant::CdlAdPr => "CDL-Ad-Pr",
        }
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationVariant {
    type Err = CdlError;

    fn from_str(s: &str) -> Result<Self> {
        AblationVariant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CdlError::InvalidArgument(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    /// Seen-class structure alignment.
    pub seen: f64,
    /// Unseen-class adaptation (before weighting by alpha).
    pub unseen: f64,
    /// Sample-to-prototype fit (before weighting by beta).
    pub prototype: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loss: LossBreakdown,
    /// Total loss after each of the six block updates; `None` for skipped steps.
    pub step_totals: [Option<f64>; 6],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub initial: LossBreakdown,
    pub iterations: Vec<IterationRecord>,
    pub iterations_run: usize,
    pub converged: bool,
}

impl TrainingTrace {
    pub fn final_loss(&self) -> LossBreakdown {
        self.iterations
            .last()
            .map(|r| r.loss)
            .unwrap_or(self.initial)
    }
}

/// Learned prototypes, dictionaries and codes.
///
/// Columns of the `*_seen` matrices follow the seen-class registry order and
/// columns of the `*_unseen` matrices the unseen registry order.
#[derive(Debug, Clone, PartialEq)]
pub struct CdlModel {
    /// Visual prototypes of seen classes, `d × K`.
    pub visual_seen: Matrix,
    /// Visual prototypes of unseen classes, `d × L`.
    pub visual_unseen: Matrix,
    /// Visual dictionary, `d × n_b`.
    pub dict_visual: Matrix,
    /// Semantic dictionary, `m × n_b`.
    pub dict_semantic: Matrix,
    /// Aligned codes of seen classes, `n_b × K`.
    pub codes_seen: Matrix,
    /// Aligned codes of unseen classes, `n_b × L`.
    pub codes_unseen: Matrix,
    pub semantic_seen: Matrix,
    pub semantic_unseen: Matrix,
    /// Effective hyperparameters (alpha is zero for variants without adaptation).
    pub hyperparams: Hyperparams,
    pub variant: AblationVariant,
    pub trace: TrainingTrace,
}

impl CdlModel {
    pub fn feature_dim(&self) -> usize {
        self.dict_visual.nrows()
    }

    pub fn num_seen(&self) -> usize {
        self.visual_seen.ncols()
    }

    pub fn num_unseen(&self) -> usize {
        self.visual_unseen.ncols()
    }

    pub fn num_atoms(&self) -> usize {
        self.dict_visual.ncols()
    }

    /// Checks the dimension relations between all learned matrices.
    pub fn check_consistency(&self) -> Result<()> {
        let (d, m, k, l, n_b) = (
            self.feature_dim(),
            self.dict_semantic.nrows(),
            self.num_seen(),
            self.num_unseen(),
            self.num_atoms(),
        );
        let expect = [
            ("visual_seen", &self.visual_seen, d, k),
            ("visual_unseen", &self.visual_unseen, d, l),
            ("dict_semantic", &self.dict_semantic, m, n_b),
            ("codes_seen", &self.codes_seen, n_b, k),
            ("codes_unseen", &self.codes_unseen, n_b, l),
            ("semantic_seen", &self.semantic_seen, m, k),
            ("semantic_unseen", &self.semantic_unseen, m, l),
        ];
        for (name, mat, rows, cols) in expect {
            if mat.nrows() != rows || mat.ncols() != cols {
                return Err(CdlError::InvalidArgument(format!(
                    "model matrix {name} is {}x{}, expected {rows}x{cols}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
        }
        Ok(())
    }

    fn breakdown(&self, sample_fit: f64) -> LossBreakdown {
        let hp = &self.hyperparams;
        let seen = frob_sq(&(&self.visual_seen - &self.dict_visual * &self.codes_seen))
            + hp.lambda * frob_sq(&(&self.semantic_seen - &self.dict_semantic * &self.codes_seen));
        let unseen = frob_sq(&(&self.visual_unseen - &self.dict_visual * &self.codes_unseen))
            + hp.lambda
                * frob_sq(&(&self.semantic_unseen - &self.dict_semantic * &self.codes_unseen));
        LossBreakdown {
            total: seen + hp.alpha * unseen + hp.beta * sample_fit,
            seen,
            unseen,
            prototype: sample_fit,
        }
    }

    fn loss_with_labels(&self, x: &Matrix, labels: &[usize]) -> LossBreakdown {
        let sample_fit = labels
            .iter()
            .enumerate()
            .map(|(i, &k)| (x.column(i) - self.visual_seen.column(k)).norm_squared())
            .sum();
        self.breakdown(sample_fit)
    }
}

/// Full objective `L_s + α·L_u + β·L_p` of a model against labelled samples
/// given through a one-hot indicator `h` (`K × n_s`).
pub fn loss(model: &CdlModel, x: &Matrix, h: &Matrix) -> Result<LossBreakdown> {
    model.check_consistency()?;
    if x.nrows() != model.feature_dim() {
        return Err(mismatch("X", x, "P_s", &model.visual_seen));
    }
    if h.nrows() != model.num_seen() || h.ncols() != x.ncols() {
        return Err(mismatch("H", h, "X", x));
    }
    let sample_fit = frob_sq(&(x - &model.visual_seen * h));
    Ok(model.breakdown(sample_fit))
}

/// Mean feature vector of every class, columns in class-index order.
pub fn class_means(x: &Matrix, labels: &[usize], num_classes: usize) -> Result<Matrix> {
    if labels.len() != x.ncols() {
        return Err(CdlError::InvalidArgument(format!(
            "{} labels for {} samples",
            labels.len(),
            x.ncols()
        )));
    }
    let mut sums = Matrix::zeros(x.nrows(), num_classes);
    let mut counts = vec![0usize; num_classes];
    for (i, &k) in labels.iter().enumerate() {
        if k >= num_classes {
            return Err(CdlError::LabelOutOfRange {
                label: k,
                classes: num_classes,
            });
        }
        let mut col = sums.column_mut(k);
        col += x.column(i);
        counts[k] += 1;
    }
    for (k, &n) in counts.iter().enumerate() {
        if n == 0 {
            return Err(CdlError::EmptyClass {
                class: k.to_string(),
            });
        }
        let mut col = sums.column_mut(k);
        col /= n as f64;
    }
    Ok(sums)
}

/// Indicator matrix `H` with `H[k, i] = 1` iff sample `i` has class `k`.
pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<Matrix> {
    let mut h = Matrix::zeros(num_classes, labels.len());
    for (i, &k) in labels.iter().enumerate() {
        if k >= num_classes {
            return Err(CdlError::LabelOutOfRange {
                label: k,
                classes: num_classes,
            });
        }
        h[(k, i)] = 1.0;
    }
    Ok(h)
}

/// Cosine similarities between every column of `a` (rows of the result) and
/// every column of `b` (columns of the result).
pub(crate) fn cosine_matrix(a: &Matrix, b: &Matrix) -> Matrix {
    Matrix::from_fn(a.ncols(), b.ncols(), |i, j| {
        cosine_similarity(a.column(i).as_slice(), b.column(j).as_slice())
            .expect("columns of equal length")
    })
}

fn random_codes(n_b: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = Matrix::from_fn(n_b, cols, |_, _| rng.random::<f64>());
    for mut col in z.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    z
}

/// Training matrices after optional feature normalization.
fn training_features(dataset: &Dataset, hp: &Hyperparams) -> Matrix {
    let mut x = dataset.features.clone();
    if hp.normalize_features {
        normalize_columns(&mut x);
    }
    x
}

pub fn normalize_columns(x: &mut Matrix) {
    for mut col in x.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
}

/// Builds the starting model: similarity codes for unseen classes, then the
/// semantic dictionary, seen codes, class-mean prototypes, the visual
/// dictionary and finally the unseen visual prototypes.
pub fn initialize(dataset: &Dataset, hp: &Hyperparams, rng_seed: u64) -> Result<CdlModel> {
    hp.validate()?;
    dataset.validate()?;
    let x = training_features(dataset, hp);
    initialize_with(&x, dataset, hp, rng_seed)
}

fn initialize_with(
    x: &Matrix,
    dataset: &Dataset,
    hp: &Hyperparams,
    rng_seed: u64,
) -> Result<CdlModel> {
    let c_s = &dataset.semantics_seen;
    let c_u = &dataset.semantics_unseen;
    let k = c_s.ncols();
    let n_b = hp.n_b.unwrap_or(k);
    let opts = DictionaryOptions::default();

    let codes_unseen = if n_b == k {
        cosine_matrix(c_s, c_u)
    } else {
        random_codes(n_b, c_u.ncols(), rng_seed)
    };
    let dict_semantic =
        solve_dictionary(&[DictTarget::new(c_u, &codes_unseen, 1.0)], None, &opts)?.dictionary;
    let codes_seen = solve_code(&[CodeTerm::new(&dict_semantic, c_s, 1.0)], hp.ridge_eps)?;
    let visual_seen = class_means(x, &dataset.labels, k)?;
    let dict_visual =
        solve_dictionary(&[DictTarget::new(&visual_seen, &codes_seen, 1.0)], None, &opts)?
            .dictionary;
    let visual_unseen = &dict_visual * &codes_unseen;

    Ok(CdlModel {
        visual_seen,
        visual_unseen,
        dict_visual,
        dict_semantic,
        codes_seen,
        codes_unseen,
        semantic_seen: c_s.clone(),
        semantic_unseen: c_u.clone(),
        hyperparams: hp.clone(),
        variant: AblationVariant::Na,
        trace: TrainingTrace::default(),
    })
}

/// Initializes and then runs the six-step alternating optimization until the
/// relative decrease of the total loss drops below `rel_tol` or `max_iters`
/// cycles have run.
pub fn fit(
    dataset: &Dataset,
    hp: &Hyperparams,
    variant: AblationVariant,
    rng_seed: u64,
) -> Result<CdlModel> {
    hp.validate()?;
    dataset.validate()?;
    let x = training_features(dataset, hp);
    let mut model = initialize_with(&x, dataset, hp, rng_seed)?;
    model.variant = variant;
    if variant.drops_adaptation() {
        model.hyperparams.alpha = 0.0;
    }
    model.trace.initial = model.loss_with_labels(&x, &dataset.labels);
    if variant == AblationVariant::Na {
        return Ok(model);
    }

    let hp = model.hyperparams.clone();
    let k = model.num_seen();
    let h = one_hot(&dataset.labels, k)?;
    let counts = linalg::one_hot_counts(&h)?;
    let class_sums = &x * h.transpose();
    let opts = DictionaryOptions::default();
    let adapt = hp.alpha > 0.0;
    let reference = model.trace.initial.total.abs();
    let mut prev = model.trace.initial.total;

    for iteration in 1..=hp.max_iters {
        let mut step_totals = [None; 6];
        let start_total = prev;
        let mut check = |model: &CdlModel, step: usize, prev: &mut f64| -> Result<()> {
            let now = model.loss_with_labels(&x, &dataset.labels).total;
            let allowed =
                *prev + MONOTONE_SLACK * prev.abs() + 1e-14 * reference;
            if !now.is_finite() || now > allowed {
                return Err(CdlError::NonMonotone {
                    iteration,
                    step: step + 1,
                    before: *prev,
                    after: now,
                });
            }
            step_totals[step] = Some(now);
            *prev = now;
            Ok(())
        };

        if !variant.freezes_prototypes() {
            let target = &model.dict_visual * &model.codes_seen;
            model.visual_seen = prototypes_from_sums(&target, &class_sums, &counts, hp.beta);
            check(&model, 0, &mut prev)?;
        }

        model.codes_seen = solve_joint_code_near(
            &model.dict_visual,
            &model.dict_semantic,
            &model.visual_seen,
            &model.semantic_seen,
            hp.lambda,
            hp.ridge_eps,
            Some(&model.codes_seen),
        )?;
        check(&model, 1, &mut prev)?;

        let mut visual_targets = vec![DictTarget::new(&model.visual_seen, &model.codes_seen, 1.0)];
        if adapt {
            visual_targets.push(DictTarget::new(
                &model.visual_unseen,
                &model.codes_unseen,
                hp.alpha,
            ));
        }
        let d1 = solve_dictionary(&visual_targets, Some(&model.dict_visual), &opts)?.dictionary;
        model.dict_visual = d1;
        check(&model, 2, &mut prev)?;

        let mut semantic_targets =
            vec![DictTarget::new(&model.semantic_seen, &model.codes_seen, 1.0)];
        if adapt {
            semantic_targets.push(DictTarget::new(
                &model.semantic_unseen,
                &model.codes_unseen,
                hp.alpha,
            ));
        }
        let d2 =
            solve_dictionary(&semantic_targets, Some(&model.dict_semantic), &opts)?.dictionary;
        model.dict_semantic = d2;
        check(&model, 3, &mut prev)?;

        if adapt {
            model.codes_unseen = solve_joint_code_near(
                &model.dict_visual,
                &model.dict_semantic,
                &model.visual_unseen,
                &model.semantic_unseen,
                hp.lambda,
                hp.ridge_eps,
                Some(&model.codes_unseen),
            )?;
            check(&model, 4, &mut prev)?;
            model.visual_unseen = &model.dict_visual * &model.codes_unseen;
            check(&model, 5, &mut prev)?;
        }

        let loss = model.loss_with_labels(&x, &dataset.labels);
        model.trace.iterations.push(IterationRecord {
            iteration,
            loss,
            step_totals,
        });
        model.trace.iterations_run = iteration;

        let decrease = start_total - loss.total;
        if decrease < hp.rel_tol * start_total.abs() {
            model.trace.converged = true;
            break;
        }
    }

    if !adapt {
        // Unseen codes were never trained; derive them from the learned
        // semantic dictionary so that recognition has unseen prototypes.
        model.codes_unseen = solve_code(
            &[CodeTerm::new(&model.dict_semantic, &model.semantic_unseen, 1.0)],
            hp.ridge_eps,
        )?;
        model.visual_unseen = &model.dict_visual * &model.codes_unseen;
    }
    Ok(model)
}

fn prototypes_from_sums(target: &Matrix, class_sums: &Matrix, counts: &[f64], beta: f64) -> Matrix {
    let mut p = target + class_sums * beta;
    for (k, mut col) in p.column_iter_mut().enumerate() {
        col /= 1.0 + beta * counts[k];
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn one_hot_examples() {
        assert_eq!(one_hot(&[0, 1], 2).unwrap(), Matrix::identity(2, 2));
        assert_eq!(
            one_hot(&[1, 1, 0], 2).unwrap(),
            m(2, 3, &[0.0, 0.0, 1.0, 1.0, 1.0, 0.0])
        );
        assert!(matches!(
            one_hot(&[0, 2], 2),
            Err(CdlError::LabelOutOfRange { label: 2, .. })
        ));
    }

    #[test]
    fn class_means_examples() {
        let x = m(2, 2, &[1.0, 5.0, 2.0, 6.0]);
        assert_eq!(class_means(&x, &[0, 1], 2).unwrap(), x);

        let x = m(2, 2, &[1.0, 3.0, 1.0, 3.0]);
        assert_eq!(class_means(&x, &[0, 0], 1).unwrap(), m(2, 1, &[2.0, 2.0]));

        let err = class_means(&x, &[0, 0], 2).unwrap_err();
        assert!(matches!(err, CdlError::EmptyClass { ref class } if class == "1"));
    }

    #[test]
    fn hyperparams_validation() {
        assert!(Hyperparams::default().validate().is_ok());
        let bad = Hyperparams {
            gamma: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = Hyperparams {
            alpha: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = Hyperparams {
            max_iters: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in AblationVariant::ALL {
            assert_eq!(v.name().parse::<AblationVariant>().unwrap(), v);
        }
        assert_eq!(
            "cdl-ad-pr".parse::<AblationVariant>().unwrap(),
            AblationVariant::CdlAdPr
        );
        assert!("CDL-X".parse::<AblationVariant>().is_err());
    }
}
