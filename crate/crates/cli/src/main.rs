//! `cdl`: train, evaluate and tune coupled dictionary learning models for
//! zero-shot recognition.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use cdl_core::data::{
    export_report, generate_planted, load_dataset, load_model, save_dataset, save_model,
    write_trace_csv, Dataset, REPORT_FILE, TRACE_FILE,
};
use cdl_core::error::ErrorKind;
use cdl_core::evaluation::{evaluate, Mode};
use cdl_core::gridsearch::{grid_search, render_table};
use cdl_core::model::fit;
use cdl_core::recognition::{Candidates, EncodedBatch, Space, SpaceSelection};
use cdl_core::{CdlError, CdlModel, Hyperparams, Matrix};

use config::{CommonArgs, ConfigError, FileConfig, HyperparamArgs, SynthArgs};

const MODEL_FILE: &str = "model.json";
const GRID_TABLE: &str = "grid.tsv";
const GRID_JSON: &str = "grid.json";

#[derive(Debug, Parser)]
#[command(name = "cdl", version, about = "Coupled dictionary learning for zero-shot recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model and write model.json and trace.csv.
    Train {
        /// Dataset manifest.
        #[arg(long)]
        data: Option<PathBuf>,
        /// CDL, NA, CDL-Ad, CDL-Pr or CDL-Ad-Pr.
        #[arg(long, default_value = "CDL")]
        variant: String,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        hp: HyperparamArgs,
    },
    /// Evaluate a trained model and write report.json and trace.csv.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// `all` or a `;`-separated list of space combinations, e.g. `v;a;v+a`.
        #[arg(long, default_value = "all")]
        spaces: String,
        /// zsl or gzsl.
        #[arg(long, default_value = "zsl")]
        mode: String,
        /// Also write prototype, code, dictionary and similarity matrices.
        #[arg(long)]
        export_matrices: bool,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Rank a hyperparameter grid on the validation classes, then retrain the
    /// best point on all seen classes.
    Gridsearch {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "CDL")]
        variant: String,
        /// Space combination used for ranking.
        #[arg(long, default_value = "v+a")]
        spaces: String,
        #[arg(long, value_delimiter = ',')]
        lambdas: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        betas: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        gammas: Vec<f64>,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        hp: HyperparamArgs,
    },
    /// Generate a planted synthetic dataset.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Load and check a dataset manifest.
    ValidateData {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<CdlError>().map(CdlError::kind) {
        Some(ErrorKind::Config) => 2,
        Some(ErrorKind::Data) => 3,
        Some(ErrorKind::Internal) | None => 4,
    }
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut msg = err.to_string();
    for cause in err.chain().skip(1) {
        let text = cause.to_string();
        if !msg.contains(&text) {
            msg = format!("{msg}: {text}");
        }
    }
    msg
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Train { data, variant, common, hp } => {
            let file = FileConfig::load(common.config.as_deref())?;
            let data = config::required_path(&file.data, &data, "data")?;
            let hp = hp.resolve(&file.hyperparams)?;
            let variant = config::variant(&file, &variant)?;
            let seed = file.seed.or(common.seed).unwrap_or(0);
            let out = config::out_dir(&common.out, &file);
            train(&data, &hp, variant, seed, &out)
        }
        Command::Eval { data, model, spaces, mode, export_matrices, common } => {
            let file = FileConfig::load(common.config.as_deref())?;
            let data = config::required_path(&file.data, &data, "data")?;
            let model = config::required_path(&file.model, &model, "model")?;
            let spaces = config::spaces(file.spaces.as_deref().unwrap_or(&spaces))?;
            let mode = config::mode(&file, &mode)?;
            let export = file.export_matrices.unwrap_or(export_matrices);
            let out = config::out_dir(&common.out, &file);
            eval(&data, &model, &spaces, mode, export, &out)
        }
        Command::Gridsearch { data, variant, spaces, lambdas, alphas, betas, gammas, common, hp } => {
            let file = FileConfig::load(common.config.as_deref())?;
            let data = config::required_path(&file.data, &data, "data")?;
            let hp = hp.resolve(&file.hyperparams)?;
            let variant = config::variant(&file, &variant)?;
            let spec = file.spaces.as_deref().unwrap_or(&spaces);
            let selection: SpaceSelection = spec
                .parse()
                .map_err(|e: CdlError| config::config_err(e.to_string()))?;
            let grid = config::grid(&lambdas, &alphas, &betas, &gammas, &file.grid);
            let seed = file.seed.or(common.seed).unwrap_or(0);
            let out = config::out_dir(&common.out, &file);
            gridsearch(&data, &hp, variant, &selection, &grid, seed, &out)
        }
        Command::Synth { common, synth } => {
            let file = FileConfig::load(common.config.as_deref())?;
            let seed = file.seed.or(common.seed).unwrap_or(0);
            let (cfg, format) = synth.resolve(&file.synth, seed)?;
            let out = config::out_dir(&common.out, &file);
            let inst = generate_planted(&cfg)?;
            let manifest = save_dataset(&inst.dataset, &out, format)?;
            println!("wrote {}", manifest.display());
            Ok(())
        }
        Command::ValidateData { data, config } => {
            let file = FileConfig::load(config.as_deref())?;
            let data = config::required_path(&file.data, &data, "data")?;
            let ds = load_dataset(&data)?;
            print_summary(&data, &ds);
            Ok(())
        }
    }
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).map_err(|e| CdlError::io(dir, e).into())
}

fn print_summary(path: &Path, ds: &Dataset) {
    println!("{}: ok", path.display());
    println!(
        "features {}x{}, semantics dim {}, seen {}, unseen {}",
        ds.feature_dim(),
        ds.features.ncols(),
        ds.semantic_dim(),
        ds.num_seen(),
        ds.num_unseen()
    );
    let count = |s: &Option<cdl_core::data::LabeledSet>| s.as_ref().map_or(0, |s| s.labels.len());
    println!(
        "test unseen {}, test seen {}, validation classes {}",
        count(&ds.test_unseen),
        count(&ds.test_seen),
        ds.validation_classes.len()
    );
}

fn train(
    data: &Path,
    hp: &Hyperparams,
    variant: cdl_core::AblationVariant,
    seed: u64,
    out: &Path,
) -> anyhow::Result<()> {
    let ds = load_dataset(data)?;
    let model = fit(&ds, hp, variant, seed)?;
    create_dir(out)?;
    save_model(&model, &ds.seen_classes, &ds.unseen_classes, &out.join(MODEL_FILE))?;
    write_trace_csv(&model.trace, &out.join(TRACE_FILE))?;
    let t = &model.trace;
    println!(
        "{variant}: {} iterations, converged {}, loss {:.6e} -> {:.6e}",
        t.iterations_run,
        t.converged,
        t.initial.total,
        t.final_loss().total
    );
    println!("wrote {}", out.join(MODEL_FILE).display());
    Ok(())
}

fn check_registries(model_path: &Path, seen: &[String], unseen: &[String], ds: &Dataset) -> anyhow::Result<()> {
    if seen != ds.seen_classes.as_slice() || unseen != ds.unseen_classes.as_slice() {
        return Err(CdlError::format(
            model_path,
            "class registries of the model differ from the dataset",
        )
        .into());
    }
    Ok(())
}

fn eval(
    data: &Path,
    model_path: &Path,
    spaces: &[SpaceSelection],
    mode: Mode,
    export: bool,
    out: &Path,
) -> anyhow::Result<()> {
    let ds = load_dataset(data)?;
    let (model, seen, unseen) = load_model(model_path)?;
    check_registries(model_path, &seen, &unseen, &ds)?;
    if mode == Mode::Gzsl && ds.test_seen.is_none() {
        return Err(config::config_err(format!(
            "gzsl needs a seen-class test split, but {} has none",
            data.display()
        )));
    }
    let report = evaluate(&model, &ds, spaces, mode)?;
    let matrices = if export { export_matrices(&model, &ds, mode)? } else { Vec::new() };
    let refs: Vec<(&str, &Matrix)> = matrices.iter().map(|(n, m)| (n.as_str(), m)).collect();
    export_report(&report, &model.trace, out, &refs)?;

    for row in &report.zsl {
        println!("{:<6} {:.4}", row.spaces, row.accuracy);
    }
    for row in &report.gzsl {
        println!("{:<6} ts {:.4} tr {:.4} H {:.4}", row.spaces, row.ts, row.tr, row.h);
    }
    println!("wrote {}", out.join(REPORT_FILE).display());
    Ok(())
}

/// Learned matrices plus the per-space similarity tables of the test split.
fn export_matrices(model: &CdlModel, ds: &Dataset, mode: Mode) -> anyhow::Result<Vec<(String, Matrix)>> {
    let mut out = vec![
        ("visual_seen".to_string(), model.visual_seen.clone()),
        ("visual_unseen".to_string(), model.visual_unseen.clone()),
        ("codes_seen".to_string(), model.codes_seen.clone()),
        ("codes_unseen".to_string(), model.codes_unseen.clone()),
        ("dict_visual".to_string(), model.dict_visual.clone()),
        ("dict_semantic".to_string(), model.dict_semantic.clone()),
    ];
    let candidates = match mode {
        Mode::Zsl => Candidates::Unseen,
        Mode::Gzsl => Candidates::Both,
    };
    let mut splits = vec![("unseen", ds.test_unseen.as_ref())];
    if mode == Mode::Gzsl {
        splits.push(("seen", ds.test_seen.as_ref()));
    }
    for (split, set) in splits {
        let Some(set) = set else { continue };
        let batch = EncodedBatch::new(model, &set.features)?;
        for space in [Space::Visual, Space::Aligned, Space::Semantic] {
            let name = format!("similarity_{split}_{}", space.short());
            out.push((name, batch.similarities(space, candidates).scores));
        }
    }
    Ok(out)
}

fn gridsearch(
    data: &Path,
    base: &Hyperparams,
    variant: cdl_core::AblationVariant,
    selection: &SpaceSelection,
    grid: &cdl_core::gridsearch::GridSpec,
    seed: u64,
    out: &Path,
) -> anyhow::Result<()> {
    let ds = load_dataset(data)?;
    if ds.validation_classes.is_empty() {
        return Err(CdlError::format(
            data,
            "grid search needs `validation_classes` in the manifest",
        )
        .into());
    }
    let rows = grid_search(&ds, base, grid, variant, selection, seed)?;
    create_dir(out)?;
    let table = out.join(GRID_TABLE);
    fs::write(&table, render_table(&rows)).map_err(|e| CdlError::io(&table, e))?;
    let json_path = out.join(GRID_JSON);
    let json = serde_json::to_string_pretty(&rows).context("serializing grid rows")?;
    fs::write(&json_path, json + "\n").map_err(|e| CdlError::io(&json_path, e))?;

    let best = &rows[0];
    println!(
        "best of {} points: lambda {} alpha {} beta {} gamma {} ({} accuracy {:.4})",
        rows.len(),
        best.lambda,
        best.alpha,
        best.beta,
        best.gamma,
        selection,
        best.accuracy
    );
    let hp = Hyperparams {
        lambda: best.lambda,
        alpha: best.alpha,
        beta: best.beta,
        gamma: best.gamma,
        ..base.clone()
    };
    let model = fit(&ds, &hp, variant, seed)?;
    save_model(&model, &ds.seen_classes, &ds.unseen_classes, &out.join(MODEL_FILE))?;
    write_trace_csv(&model.trace, &out.join(TRACE_FILE))?;
    println!("wrote {} and {}", table.display(), out.join(MODEL_FILE).display());
    Ok(())
}
