//! Command-line entry points: train, score, eval, inject, synth, ablate,
//! and export-embeddings, all driven by JSON configs for reproducible
//! experiment records.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::ablation::{
    head_variants, injection_variants, loss_removal_variants, run_ablation, write_ablation_csv,
    write_ablation_json, AblationPlan, VariantSpec,
};
use crate::data::{compute_channel_stats, make_windows, standardize, Provenance, Window, WindowLabel};
use crate::dataset::{
    load_dataset, load_scores, read_values_csv, save_scores_with_meta, DatasetBundle,
    DatasetLayout, EntityPair, ScoreMeta,
};
use crate::error::{Error, Result};
use crate::eval::{dataset_report, export_embeddings, score_series_with, ScoredSeries};
use crate::inject::{inject, AnomalyType, InjectionSpec};
use crate::loss::HeadVariant;
use crate::model::{load_checkpoint, save_checkpoint};
use crate::synth::{write_benchmark, SynthSpec};
use crate::train::{train, write_log_csv, TrainConfig};

/// A full training run: datasets, entity choice, output location, and the
/// training configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub source_dataset: PathBuf,
    pub target_dataset: PathBuf,
    #[serde(default = "default_layout")]
    pub layout: DatasetLayout,
    /// Entity id within the source dataset; defaults to the first entity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_entity: Option<String>,
    /// Entity id within the target dataset; defaults to the first entity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_entity: Option<String>,
    pub output_dir: PathBuf,
    pub train: TrainConfig,
}

fn default_layout() -> DatasetLayout {
    DatasetLayout::CsvDir
}

#[derive(Debug, Parser)]
#[command(
    name = "crossad",
    version,
    about = "Cross-domain anomaly detection for multivariate time series"
)]
struct Cli {
    /// Print errors as machine-readable JSON on stderr.
    #[arg(long, global = true)]
    json_errors: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model as described by a run config.
    Train(TrainArgs),
    /// Score one entity's test split with a trained model.
    Score(ScoreArgs),
    /// Evaluate saved score files against test labels.
    Eval(EvalArgs),
    /// Inject a synthetic anomaly into a values CSV (treated as one window).
    Inject(InjectArgs),
    /// Generate the synthetic two-domain benchmark.
    Synth(SynthArgs),
    /// Train and compare ablation variants on one source/target pair.
    Ablate(AblateArgs),
    /// Export classifier-space embeddings for one entity as CSV.
    ExportEmbeddings(ExportArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Path to a RunConfig JSON document.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's training and initialization seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// Checkpoint blob written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset root holding the entity to score.
    #[arg(long)]
    dataset: PathBuf,
    /// Dataset layout: csv_dir or raw_f32.
    #[arg(long, default_value = "csv_dir")]
    layout: String,
    /// Entity id; defaults to the first entity.
    #[arg(long)]
    entity: Option<String>,
    /// Directory receiving `<entity>.scores.csv`.
    #[arg(long)]
    out: PathBuf,
    /// Scoring stride over the test split.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Head variant the checkpoint was trained with: cec, plain_bce, or
    /// deepsvdd.
    #[arg(long, default_value = "cec")]
    head: String,
    /// Accepted for interface uniformity; scoring is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Directory of `<entity>.scores.csv` files written by `score`.
    #[arg(long)]
    scores: PathBuf,
    /// Dataset root providing the test labels.
    #[arg(long)]
    dataset: PathBuf,
    /// Dataset layout: csv_dir or raw_f32.
    #[arg(long, default_value = "csv_dir")]
    layout: String,
    /// Optional path for the report JSON; stdout always gets a copy.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accepted for interface uniformity; evaluation is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct InjectArgs {
    /// Values CSV: one row per timestep, comma-separated channels.
    #[arg(long)]
    input: PathBuf,
    /// Anomaly type: global, contextual, seasonal, trend, or shapelet.
    #[arg(long = "type")]
    anomaly_type: String,
    /// Output CSV path for the transformed values.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Optional SynthSpec JSON; desk-scale defaults otherwise.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Root directory receiving `source/` and `target/` datasets.
    #[arg(long)]
    out: PathBuf,
    /// Override the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    /// Path to a RunConfig JSON document (datasets + base training config).
    #[arg(long)]
    config: PathBuf,
    /// Built-in table: loss, head, or injection.
    #[arg(long, default_value = "loss")]
    table: String,
    /// Optional custom variant list (JSON array of VariantSpec).
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Seeds each variant trains under.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Single-seed shorthand; overrides --seeds.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// Checkpoint blob written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset root holding the entity.
    #[arg(long)]
    dataset: PathBuf,
    /// Dataset layout: csv_dir or raw_f32.
    #[arg(long, default_value = "csv_dir")]
    layout: String,
    /// Entity id; defaults to the first entity.
    #[arg(long)]
    entity: Option<String>,
    /// Split to embed: train or test.
    #[arg(long, default_value = "test")]
    split: String,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Window stride.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Accepted for interface uniformity; embedding is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

/// Parse arguments from the process environment, run the selected
/// command, and map the outcome to an exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            if cli.json_errors {
                let payload = serde_json::json!({
                    "error": e.to_string(),
                    "exit_code": code,
                });
                eprintln!("{payload}");
            } else {
                eprintln!("error: {e}");
            }
            code
        }
    }
}

fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Train(args) => cmd_train(args),
        Command::Score(args) => cmd_score(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Inject(args) => cmd_inject(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::ExportEmbeddings(args) => cmd_export_embeddings(args),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn parse_layout(name: &str) -> Result<DatasetLayout> {
    match name {
        "csv_dir" => Ok(DatasetLayout::CsvDir),
        "raw_f32" => Ok(DatasetLayout::RawF32),
        other => Err(Error::InvalidParameter(format!(
            "unknown layout {other:?}; expected csv_dir or raw_f32"
        ))),
    }
}

fn parse_head(name: &str) -> Result<HeadVariant> {
    match name {
        "cec" => Ok(HeadVariant::Cec),
        "plain_bce" => Ok(HeadVariant::PlainBce),
        "deepsvdd" => Ok(HeadVariant::DeepSvdd),
        other => Err(Error::InvalidParameter(format!(
            "unknown head {other:?}; expected cec, plain_bce, or deepsvdd"
        ))),
    }
}

fn parse_anomaly_type(name: &str) -> Result<AnomalyType> {
    AnomalyType::ALL
        .into_iter()
        .find(|t| t.as_str() == name)
        .ok_or_else(|| {
            Error::InvalidParameter(format!(
                "unknown anomaly type {name:?}; expected one of global, contextual, seasonal, trend, shapelet"
            ))
        })
}

fn find_pair<'a>(bundle: &'a DatasetBundle, want: Option<&str>) -> Result<&'a EntityPair> {
    match want {
        None => bundle
            .entities
            .first()
            .ok_or_else(|| Error::EmptyInput(format!("dataset {}", bundle.name))),
        Some(id) => bundle
            .entities
            .iter()
            .find(|e| e.train.entity_id == id)
            .ok_or_else(|| {
                Error::NotFound(format!("entity {id} not found in dataset {}", bundle.name))
            }),
    }
}

fn load_pairs(run: &RunConfig) -> Result<(EntityPair, EntityPair)> {
    let source = load_dataset(&run.source_dataset, run.layout)?;
    let target = load_dataset(&run.target_dataset, run.layout)?;
    let src = find_pair(&source, run.source_entity.as_deref())?.clone();
    let trg = find_pair(&target, run.target_entity.as_deref())?.clone();
    Ok((src, trg))
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut run: RunConfig = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        run.train.seed = seed;
        run.train.model.init_seed = seed;
    }
    let (src, trg) = load_pairs(&run)?;
    let (state, log) = train(&src, &trg, &run.train)?;

    fs::create_dir_all(&run.output_dir)
        .map_err(|e| Error::io(format!("creating {}", run.output_dir.display()), e))?;
    let ckpt = run.output_dir.join("model.ckpt");
    save_checkpoint(&state, &ckpt)?;
    write_log_csv(&run.output_dir.join("train_log.csv"), &log)?;
    let snapshot = serde_json::to_string_pretty(&run).expect("run config serializes");
    write_text(&run.output_dir.join("config.json"), &snapshot)?;

    let last = log.last().map(|l| l.l_total).unwrap_or(f64::NAN);
    println!(
        "trained {} steps (final total loss {last:.6}); checkpoint {}",
        log.len(),
        ckpt.display()
    );
    Ok(())
}

fn cmd_score(args: &ScoreArgs) -> Result<()> {
    let state = load_checkpoint(&args.checkpoint)?;
    let head = parse_head(&args.head)?;
    let bundle = load_dataset(&args.dataset, parse_layout(&args.layout)?)?;
    let pair = find_pair(&bundle, args.entity.as_deref())?;
    let stats = compute_channel_stats(&[&pair.train])?;
    let test_std = standardize(&pair.test, &stats)?;
    let scores = score_series_with(&state, &test_std, args.stride, head)?;

    fs::create_dir_all(&args.out)
        .map_err(|e| Error::io(format!("creating {}", args.out.display()), e))?;
    let path = args.out.join(format!("{}.scores.csv", test_std.entity_id));
    let meta = ScoreMeta {
        entity: test_std.entity_id.clone(),
        model_hash: Some(state.model_hash()),
        threshold: None,
    };
    save_scores_with_meta(&scores, &path, &meta)?;
    println!("wrote {} scores to {}", scores.len(), path.display());
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let bundle = load_dataset(&args.dataset, parse_layout(&args.layout)?)?;
    let mut files: Vec<PathBuf> = fs::read_dir(&args.scores)
        .map_err(|e| Error::io(format!("reading {}", args.scores.display()), e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .map(|n| n.to_string_lossy().ends_with(".scores.csv"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no .scores.csv files in {}",
            args.scores.display()
        )));
    }

    let mut scored = Vec::with_capacity(files.len());
    for path in &files {
        let (scores, meta) = load_scores(path)?;
        let pair = find_pair(&bundle, Some(&meta.entity))?;
        scored.push(ScoredSeries::new(
            meta.entity.clone(),
            scores,
            pair.test.labels.clone(),
        )?);
    }
    let report = dataset_report(&scored)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(out) = &args.out {
        write_text(out, &json)?;
    }
    println!("{json}");
    Ok(())
}

fn cmd_inject(args: &InjectArgs) -> Result<()> {
    let values = read_values_csv(&args.input)?;
    let entity = args
        .input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "window".into());
    let window = Window {
        entity_id: entity,
        start: 0,
        values,
        provenance: Provenance::Original,
        label: WindowLabel::Normal,
    };
    let spec = InjectionSpec::new(parse_anomaly_type(&args.anomaly_type)?, args.seed);
    let injected = inject(&window, &spec)?;

    let mut out = String::new();
    for row in injected.values.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    write_text(&args.out, &out)?;
    println!(
        "injected {} anomaly over {} timesteps into {}",
        spec.anomaly_type.as_str(),
        injected.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let mut spec: SynthSpec = match &args.spec {
        Some(path) => read_json(path)?,
        None => SynthSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let (source_dir, target_dir) = write_benchmark(&spec, &args.out)?;
    let snapshot = serde_json::to_string_pretty(&spec).expect("spec serializes");
    write_text(&args.out.join("synth_spec.json"), &snapshot)?;
    println!(
        "wrote source dataset to {} and target dataset to {}",
        source_dir.display(),
        target_dir.display()
    );
    Ok(())
}

fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    let run: RunConfig = read_json(&args.config)?;
    let variants: Vec<VariantSpec> = match &args.plan {
        Some(path) => read_json(path)?,
        None => match args.table.as_str() {
            "loss" => loss_removal_variants(),
            "head" => head_variants(),
            "injection" => injection_variants(),
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown table {other:?}; expected loss, head, or injection"
                )))
            }
        },
    };
    let seeds = match (args.seed, &args.seeds) {
        (Some(seed), _) => vec![seed],
        (None, Some(seeds)) => seeds.clone(),
        (None, None) => vec![0, 1, 2],
    };
    let plan = AblationPlan {
        variants,
        config: run.train.clone(),
        seeds,
    };
    let (src, trg) = load_pairs(&run)?;
    let rows = run_ablation(&plan, &src, &trg)?;

    fs::create_dir_all(&run.output_dir)
        .map_err(|e| Error::io(format!("creating {}", run.output_dir.display()), e))?;
    write_ablation_csv(&rows, &run.output_dir.join("ablation.csv"))?;
    write_ablation_json(&rows, &run.output_dir.join("ablation.json"))?;
    for row in &rows {
        match (&row.metrics, &row.error) {
            (Some(m), _) => println!(
                "{}: auroc {:.4} +/- {:.4} (median {:.4}), aupr {:.4}, f1 {:.4}",
                row.name, m.auroc_mean, m.auroc_std, m.auroc_median, m.aupr_mean, m.f1_median
            ),
            (None, Some(e)) => println!("{}: failed: {e}", row.name),
            (None, None) => {}
        }
    }
    Ok(())
}

fn cmd_export_embeddings(args: &ExportArgs) -> Result<()> {
    let state = load_checkpoint(&args.checkpoint)?;
    let bundle = load_dataset(&args.dataset, parse_layout(&args.layout)?)?;
    let pair = find_pair(&bundle, args.entity.as_deref())?;
    let series = match args.split.as_str() {
        "train" => &pair.train,
        "test" => &pair.test,
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown split {other:?}; expected train or test"
            )))
        }
    };
    let stats = compute_channel_stats(&[&pair.train])?;
    let std_series = standardize(series, &stats)?;
    let ws = state.config.encoder.window_size;
    let windows = make_windows(&std_series, ws, args.stride)?;
    let refs: Vec<&Window> = windows.iter().collect();
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
        }
    }
    export_embeddings(&state, &refs, &args.out)?;
    println!(
        "exported {} window embeddings to {}",
        refs.len(),
        args.out.display()
    );
    Ok(())
}
