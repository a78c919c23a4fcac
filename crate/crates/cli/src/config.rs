//! Run configuration: command-line flags, optionally overridden by a TOML file.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use cdl_core::data::{MatrixFormat, PlantedConfig};
use cdl_core::evaluation::Mode;
use cdl_core::gridsearch::GridSpec;
use cdl_core::recognition::SpaceSelection;
use cdl_core::{AblationVariant, Hyperparams};

pub const OUT_DIR_ENV: &str = "CDL_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "cdl-out";

/// Problems with the run configuration itself (as opposed to the data).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub variant: Option<String>,
    pub mode: Option<String>,
    pub spaces: Option<String>,
    pub export_matrices: Option<bool>,
    #[serde(default)]
    pub hyperparams: HyperparamOverrides,
    #[serde(default)]
    pub grid: GridOverrides,
    #[serde(default)]
    pub synth: SynthOverrides,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let cfg: Self = toml::from_str(&text)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        // Relative paths in the file are taken relative to the file.
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: Option<PathBuf>| p.map(|p| if p.is_relative() { base.join(p) } else { p });
        Ok(Self {
            data: rebase(cfg.data),
            model: rebase(cfg.model),
            out_dir: rebase(cfg.out_dir),
            ..cfg
        })
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperparamOverrides {
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub n_b: Option<usize>,
    pub max_iters: Option<usize>,
    pub rel_tol: Option<f64>,
    pub ridge_eps: Option<f64>,
    pub normalize_features: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridOverrides {
    pub lambdas: Option<Vec<f64>>,
    pub alphas: Option<Vec<f64>>,
    pub betas: Option<Vec<f64>>,
    pub gammas: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthOverrides {
    pub feature_dim: Option<usize>,
    pub semantic_dim: Option<usize>,
    pub seen: Option<usize>,
    pub unseen: Option<usize>,
    pub samples_per_class: Option<usize>,
    pub test_per_class: Option<usize>,
    pub noise: Option<f64>,
    pub semantic_noise: Option<f64>,
    pub validation_classes: Option<usize>,
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration; its values override command-line flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct HyperparamArgs {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Number of dictionary atoms (default: number of seen classes).
    #[arg(long)]
    pub n_b: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub ridge_eps: Option<f64>,
    /// L2-normalize feature columns.
    #[arg(long)]
    pub normalize_features: bool,
}

impl HyperparamArgs {
    pub fn resolve(&self, file: &HyperparamOverrides) -> anyhow::Result<Hyperparams> {
        let d = Hyperparams::default();
        let hp = Hyperparams {
            lambda: file.lambda.or(self.lambda).unwrap_or(d.lambda),
            alpha: file.alpha.or(self.alpha).unwrap_or(d.alpha),
            beta: file.beta.or(self.beta).unwrap_or(d.beta),
            gamma: file.gamma.or(self.gamma).unwrap_or(d.gamma),
            n_b: file.n_b.or(self.n_b).or(d.n_b),
            max_iters: file.max_iters.or(self.max_iters).unwrap_or(d.max_iters),
            rel_tol: file.rel_tol.or(self.rel_tol).unwrap_or(d.rel_tol),
            ridge_eps: file.ridge_eps.or(self.ridge_eps).unwrap_or(d.ridge_eps),
            normalize_features: file.normalize_features.unwrap_or(self.normalize_features),
        };
        hp.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(hp)
    }
}

pub fn out_dir(flag: &Option<PathBuf>, file: &FileConfig) -> PathBuf {
    file.out_dir
        .clone()
        .or_else(|| flag.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

pub fn required_path(
    file: &Option<PathBuf>,
    flag: &Option<PathBuf>,
    what: &str,
) -> anyhow::Result<PathBuf> {
    file.clone()
        .or_else(|| flag.clone())
        .ok_or_else(|| config_err(format!("missing --{what}")))
}

pub fn variant(file: &FileConfig, flag: &str) -> anyhow::Result<AblationVariant> {
    let name = file.variant.as_deref().unwrap_or(flag);
    name.parse().map_err(|e: cdl_core::CdlError| config_err(e.to_string()))
}

pub fn mode(file: &FileConfig, flag: &str) -> anyhow::Result<Mode> {
    let name = file.mode.as_deref().unwrap_or(flag);
    name.parse().map_err(|e: cdl_core::CdlError| config_err(e.to_string()))
}

/// `all` for the seven nonempty subsets, otherwise a comma- or
/// semicolon-separated list such as `v;a;v+a`.
pub fn spaces(spec: &str) -> anyhow::Result<Vec<SpaceSelection>> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok(SpaceSelection::all_subsets());
    }
    let mut out: Vec<SpaceSelection> = Vec::new();
    for part in spec.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let sel: SpaceSelection = part
            .parse()
            .map_err(|e: cdl_core::CdlError| config_err(e.to_string()))?;
        if !out.contains(&sel) {
            out.push(sel);
        }
    }
    if out.is_empty() {
        return Err(config_err("no spaces selected"));
    }
    Ok(out)
}

pub fn grid(lambdas: &[f64], alphas: &[f64], betas: &[f64], gammas: &[f64], file: &GridOverrides) -> GridSpec {
    let default = GridSpec::default();
    let pick = |file: &Option<Vec<f64>>, flag: &[f64], default: Vec<f64>| {
        file.clone()
            .or_else(|| (!flag.is_empty()).then(|| flag.to_vec()))
            .unwrap_or(default)
    };
    GridSpec {
        lambdas: pick(&file.lambdas, lambdas, default.lambdas),
        alphas: pick(&file.alphas, alphas, default.alphas),
        betas: pick(&file.betas, betas, default.betas),
        gammas: pick(&file.gammas, gammas, default.gammas),
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub semantic_dim: Option<usize>,
    #[arg(long)]
    pub seen: Option<usize>,
    #[arg(long)]
    pub unseen: Option<usize>,
    #[arg(long)]
    pub samples_per_class: Option<usize>,
    #[arg(long)]
    pub test_per_class: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub semantic_noise: Option<f64>,
    #[arg(long)]
    pub validation_classes: Option<usize>,
    /// Matrix file format: text or binary.
    #[arg(long, default_value = "text")]
    pub format: String,
}

impl SynthArgs {
    pub fn resolve(&self, file: &SynthOverrides, seed: u64) -> anyhow::Result<(PlantedConfig, MatrixFormat)> {
        let d = PlantedConfig::default();
        let cfg = PlantedConfig {
            feature_dim: file.feature_dim.or(self.feature_dim).unwrap_or(d.feature_dim),
            semantic_dim: file.semantic_dim.or(self.semantic_dim).unwrap_or(d.semantic_dim),
            seen: file.seen.or(self.seen).unwrap_or(d.seen),
            unseen: file.unseen.or(self.unseen).unwrap_or(d.unseen),
            samples_per_class: file
                .samples_per_class
                .or(self.samples_per_class)
                .unwrap_or(d.samples_per_class),
            test_per_class: file.test_per_class.or(self.test_per_class).unwrap_or(d.test_per_class),
            noise: file.noise.or(self.noise).unwrap_or(d.noise),
            semantic_noise: file.semantic_noise.or(self.semantic_noise).unwrap_or(d.semantic_noise),
            validation_classes: file
                .validation_classes
                .or(self.validation_classes)
                .unwrap_or(d.validation_classes),
            seed,
        };
        let format = match file.format.as_deref().unwrap_or(&self.format) {
            "text" => MatrixFormat::Text,
            "binary" => MatrixFormat::Binary,
            other => return Err(config_err(format!("unknown matrix format `{other}`"))),
        };
        Ok((cfg, format))
    }
}
