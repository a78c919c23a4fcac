//! Synthetic datasets generated from known dictionaries and codes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, LabeledSet};
use crate::error::{CdlError, Result};
use crate::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedConfig {
    pub feature_dim: usize,
    pub semantic_dim: usize,
    pub seen: usize,
    pub unseen: usize,
    pub samples_per_class: usize,
    /// Test samples drawn per class for both test splits; 0 disables them.
    pub test_per_class: usize,
    /// Standard deviation of the Gaussian noise added to every sample.
    pub noise: f64,
    /// Standard deviation of Gaussian noise added to the semantic prototypes,
    /// which breaks the exact visual/semantic structure agreement.
    pub semantic_noise: f64,
    /// Number of trailing seen classes marked as validation classes.
    pub validation_classes: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            feature_dim: 16,
            semantic_dim: 12,
            seen: 6,
            unseen: 3,
            samples_per_class: 8,
            test_per_class: 8,
            noise: 0.0,
            semantic_noise: 0.0,
            validation_classes: 0,
            seed: 0,
        }
    }
}

/// Ground truth of a planted dataset. The number of atoms equals the number
/// of seen classes.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedInstance {
    pub dict_visual: Matrix,
    pub dict_semantic: Matrix,
    pub codes_seen: Matrix,
    pub codes_unseen: Matrix,
    pub visual_seen: Matrix,
    pub visual_unseen: Matrix,
    pub dataset: Dataset,
    pub noise: f64,
}

fn unit_columns(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut m = Matrix::from_fn(rows, cols, |_, _| normal.sample(rng));
    for mut col in m.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        } else {
            col[0] = 1.0;
        }
    }
    m
}

fn samples(
    prototypes: &Matrix,
    per_class: usize,
    noise: &Normal<f64>,
    rng: &mut ChaCha8Rng,
) -> LabeledSet {
    let n = prototypes.ncols() * per_class;
    let mut features = Matrix::zeros(prototypes.nrows(), n);
    let mut labels = Vec::with_capacity(n);
    for k in 0..prototypes.ncols() {
        for r in 0..per_class {
            let i = k * per_class + r;
            for row in 0..prototypes.nrows() {
                features[(row, i)] = prototypes[(row, k)] + noise.sample(rng);
            }
            labels.push(k);
        }
    }
    LabeledSet { features, labels }
}

/// Draws unit-norm dictionaries and near one-hot codes, then builds semantics,
/// prototypes and noisy samples from them.
///
/// Structure and noise come from separate streams derived from the seed, so
/// instances that differ only in noise level share the same ground truth.
pub fn generate_planted(cfg: &PlantedConfig) -> Result<PlantedInstance> {
    let counts = [
        ("feature_dim", cfg.feature_dim),
        ("semantic_dim", cfg.semantic_dim),
        ("seen", cfg.seen),
        ("unseen", cfg.unseen),
        ("samples_per_class", cfg.samples_per_class),
    ];
    for (name, v) in counts {
        if v == 0 {
            return Err(CdlError::InvalidArgument(format!("{name} must be >= 1")));
        }
    }
    for (name, v) in [("noise", cfg.noise), ("semantic_noise", cfg.semantic_noise)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(CdlError::InvalidArgument(format!("{name} must be >= 0")));
        }
    }
    if cfg.validation_classes >= cfg.seen {
        return Err(CdlError::InvalidArgument(
            "validation_classes must be smaller than seen".into(),
        ));
    }

    let (k, l) = (cfg.seen, cfg.unseen);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dict_visual = unit_columns(cfg.feature_dim, k, &mut rng);
    let dict_semantic = unit_columns(cfg.semantic_dim, k, &mut rng);

    let mut codes_seen = Matrix::identity(k, k);
    codes_seen.apply(|v| *v += 0.1 * rng.random::<f64>());
    // Unseen class l mixes a dominant atom with a weaker partner atom.
    let mut codes_unseen = Matrix::from_fn(k, l, |_, _| 0.1 * rng.random::<f64>());
    for j in 0..l {
        let main = j % k;
        codes_unseen[(main, j)] += 1.0;
        if k > 1 {
            let partner = (main + 1 + (j / k) % (k - 1)) % k;
            codes_unseen[(partner, j)] += 0.3;
        }
    }

    let visual_seen = &dict_visual * &codes_seen;
    let visual_unseen = &dict_visual * &codes_unseen;
    let mut semantics_seen = &dict_semantic * &codes_seen;
    let mut semantics_unseen = &dict_semantic * &codes_unseen;

    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    if cfg.semantic_noise > 0.0 {
        let sem = Normal::new(0.0, cfg.semantic_noise).expect("valid std dev");
        semantics_seen.apply(|v| *v += sem.sample(&mut noise_rng));
        semantics_unseen.apply(|v| *v += sem.sample(&mut noise_rng));
    }
    let noise = Normal::new(0.0, cfg.noise).expect("valid std dev");
    let train = samples(&visual_seen, cfg.samples_per_class, &noise, &mut noise_rng);
    let (test_unseen, test_seen) = if cfg.test_per_class > 0 {
        (
            Some(samples(&visual_unseen, cfg.test_per_class, &noise, &mut noise_rng)),
            Some(samples(&visual_seen, cfg.test_per_class, &noise, &mut noise_rng)),
        )
    } else {
        (None, None)
    };

    let dataset = Dataset {
        features: train.features,
        labels: train.labels,
        semantics_seen,
        semantics_unseen,
        seen_classes: (0..k).map(|i| format!("seen_{i:03}")).collect(),
        unseen_classes: (0..l).map(|i| format!("unseen_{i:03}")).collect(),
        test_unseen,
        test_seen,
        validation_classes: (k - cfg.validation_classes..k).collect(),
    };
    dataset.validate()?;

    Ok(PlantedInstance {
        dict_visual,
        dict_semantic,
        codes_seen,
        codes_unseen,
        visual_seen,
        visual_unseen,
        dataset,
        noise: cfg.noise,
    })
}
