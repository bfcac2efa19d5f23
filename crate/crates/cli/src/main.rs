//! Command-line surface for the stereoscore toolkit.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or contract error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stereoscore::data::{
    generate_synthetic, read_split_csv, write_mismatch_csv, DatasetManifest, SynthConfig,
    TrainFraction,
};
use stereoscore::harness::{
    cross_database, evaluate, evaluate_prediction_pairs, run_protocol, score_image, AblationMode,
    HarnessError, LossWeights, TrainConfig,
};
use stereoscore::metrics::{EvalReport, EvalRow};
use stereoscore::model::load_checkpoint;
use stereoscore::tensor::SgdConfig;

#[derive(Parser)]
#[command(
    name = "stereoscore",
    version,
    about = "No-reference stereoscopic image quality assessment with a multi-score patch CNN"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic stereo PPM dataset with a manifest.csv.
    Synth(SynthArgs),
    /// Train over scene-disjoint splits and report SROCC/PLCC/RMSE.
    Train(TrainArgs),
    /// Evaluate a checkpoint or a predictions file against a manifest.
    Eval(EvalArgs),
    /// Train on one database, evaluate on another.
    Crossdb(CrossdbArgs),
    /// Score a single stereo pair with a checkpoint.
    Score(ScoreArgs),
    /// Write the per-sample MOS mismatch table for a manifest.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Number of pristine scenes [minimum: 2]
    #[arg(long, default_value_t = 6)]
    scenes: u32,
    /// Distortion levels per type [minimum: 2]
    #[arg(long, default_value_t = 3)]
    levels: u32,
    /// Image size as WxH, at least 32x32
    #[arg(long, default_value = "96x96")]
    size: String,
    /// RNG seed [fallback: STEREOSCORE_SEED, then 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Scene-name prefix (keeps ids of separate datasets disjoint)
    #[arg(long, default_value = "s")]
    prefix: String,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SgdArgs {
    /// Learning rate
    #[arg(long, default_value_t = 1e-3)]
    lr: f32,
    /// Momentum factor
    #[arg(long, default_value_t = 0.9)]
    momentum: f32,
    /// Weight decay factor
    #[arg(long, default_value_t = 1e-4)]
    weight_decay: f32,
    /// Mini-batch size
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
}

impl SgdArgs {
    fn to_config(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset manifest CSV
    #[arg(long)]
    manifest: PathBuf,
    /// Train-side fraction {0.8|0.7|0.5}
    #[arg(long, default_value = "0.8")]
    fraction: String,
    /// Number of independent split repeats
    #[arg(long, default_value_t = 10)]
    repeats: u32,
    /// Training epochs per repeat
    #[arg(long)]
    epochs: u32,
    /// RNG seed [fallback: STEREOSCORE_SEED, then 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Loss ablation {full|no_global_score|no_lr_mos}
    #[arg(long, default_value = "full")]
    ablation: String,
    #[command(flatten)]
    sgd: SgdArgs,
    /// Output directory for run records and the aggregate report
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to evaluate
    #[arg(long, conflicts_with = "predictions")]
    checkpoint: Option<PathBuf>,
    /// Predictions CSV (`id,score`) to evaluate instead of a checkpoint
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Dataset manifest CSV
    #[arg(long)]
    manifest: PathBuf,
    /// Optional split.csv; only its test rows are scored
    #[arg(long)]
    split: Option<PathBuf>,
    /// Loss ablation the checkpoint was trained with (picks the reported score)
    #[arg(long, default_value = "full")]
    ablation: String,
    /// Worker threads for per-image evaluation
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Output directory for report.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CrossdbArgs {
    /// Manifest trained on (in full)
    #[arg(long)]
    train_manifest: PathBuf,
    /// Manifest evaluated on (in full)
    #[arg(long)]
    test_manifest: PathBuf,
    /// Training epochs
    #[arg(long)]
    epochs: u32,
    /// RNG seed [fallback: STEREOSCORE_SEED, then 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Loss ablation {full|no_global_score|no_lr_mos}
    #[arg(long, default_value = "full")]
    ablation: String,
    #[command(flatten)]
    sgd: SgdArgs,
    /// Worker threads for per-image evaluation
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Output directory for the run record
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    /// Checkpoint file
    #[arg(long)]
    checkpoint: PathBuf,
    /// Left view (binary PPM)
    #[arg(long)]
    left: PathBuf,
    /// Right view (binary PPM)
    #[arg(long)]
    right: PathBuf,
    /// Emit one line of JSON instead of plain text
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Dataset manifest CSV
    #[arg(long)]
    manifest: PathBuf,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

enum CliError {
    Usage(String),
    Data(String),
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::SameManifest { .. } => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<stereoscore::data::DataError> for CliError {
    fn from(e: stereoscore::data::DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<stereoscore::model::ModelError> for CliError {
    fn from(e: stereoscore::model::ModelError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<stereoscore::metrics::MetricsError> for CliError {
    fn from(e: stereoscore::metrics::MetricsError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Crossdb(args) => cmd_crossdb(args),
        Command::Score(args) => cmd_score(args),
        Command::Analyze(args) => cmd_analyze(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var("STEREOSCORE_SEED") {
        Ok(v) => v
            .parse()
            .map_err(|_| CliError::Usage(format!("STEREOSCORE_SEED `{v}` is not a valid u64"))),
        Err(_) => Ok(0),
    }
}

fn parse_size(size: &str) -> Result<(usize, usize), CliError> {
    let err = || CliError::Usage(format!("--size must be WxH with both at least 32, got `{size}`"));
    let (w, h) = size.split_once(['x', 'X']).ok_or_else(err)?;
    let width: usize = w.parse().map_err(|_| err())?;
    let height: usize = h.parse().map_err(|_| err())?;
    if width < 32 || height < 32 {
        return Err(err());
    }
    Ok((width, height))
}

fn parse_fraction(s: &str) -> Result<TrainFraction, CliError> {
    TrainFraction::parse(s)
        .ok_or_else(|| CliError::Usage(format!("--fraction must be one of 0.8, 0.7, 0.5; got `{s}`")))
}

fn parse_ablation(s: &str) -> Result<AblationMode, CliError> {
    AblationMode::parse(s).ok_or_else(|| {
        CliError::Usage(format!(
            "--ablation must be one of full, no_global_score, no_lr_mos; got `{s}`"
        ))
    })
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let (width, height) = parse_size(&args.size)?;
    if args.scenes < 2 {
        return Err(CliError::Usage(format!(
            "--scenes must be at least 2, got {}",
            args.scenes
        )));
    }
    if args.levels < 2 {
        return Err(CliError::Usage(format!(
            "--levels must be at least 2, got {}",
            args.levels
        )));
    }
    let config = SynthConfig {
        scenes: args.scenes,
        levels: args.levels,
        width,
        height,
        seed: resolve_seed(args.seed)?,
        prefix: args.prefix,
    };
    let manifest = generate_synthetic(&config, &args.out)?;
    println!(
        "wrote {} samples across {} scenes to {}",
        manifest.samples.len(),
        manifest.reference_ids().len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let fraction = parse_fraction(&args.fraction)?;
    let ablation = parse_ablation(&args.ablation)?;
    if args.repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    let manifest = DatasetManifest::load(&args.manifest)?;
    let config = TrainConfig {
        sgd: args.sgd.to_config(),
        epochs: args.epochs,
        seed: resolve_seed(args.seed)?,
        ablation,
        loss_weights: LossWeights::default(),
    };
    let (report, _) = run_protocol(&manifest, fraction, args.repeats, &config, Some(&args.out))?;
    print!("{}", report.render_table());
    Ok(())
}

fn read_predictions(path: &Path) -> Result<Vec<(String, f64)>, CliError> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if i == 0 {
            if line != "id,score" {
                return Err(CliError::Data(format!(
                    "{}:1: predictions header must be `id,score`, got `{line}`",
                    path.display()
                )));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let (id, score) = line.split_once(',').ok_or_else(|| {
            CliError::Data(format!("{}:{}: expected `id,score`", path.display(), i + 1))
        })?;
        let score: f64 = score.parse().map_err(|_| {
            CliError::Data(format!("{}:{}: invalid score `{score}`", path.display(), i + 1))
        })?;
        out.push((id.to_string(), score));
    }
    Ok(out)
}

fn test_ids_for(args_split: &Option<PathBuf>, manifest: &DatasetManifest) -> Result<Vec<String>, CliError> {
    match args_split {
        Some(path) => {
            let (_, test) = read_split_csv(path)?;
            Ok(test)
        }
        None => Ok(manifest.samples.iter().map(|s| s.id.clone()).collect()),
    }
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let ablation = parse_ablation(&args.ablation)?;
    let manifest = DatasetManifest::load(&args.manifest)?;
    let ids = test_ids_for(&args.split, &manifest)?;

    let (metrics, n) = if let Some(pred_path) = &args.predictions {
        let predictions = read_predictions(pred_path)?;
        let mut pairs = Vec::with_capacity(predictions.len());
        for (id, score) in predictions {
            let record = manifest
                .sample(&id)
                .ok_or_else(|| CliError::Data(format!("prediction id `{id}` is not in the manifest")))?;
            pairs.push((id, score, record.mos_stereo));
        }
        let n = pairs.len();
        (evaluate_prediction_pairs(&pairs)?, n)
    } else {
        let checkpoint = args.checkpoint.as_ref().ok_or_else(|| {
            CliError::Usage("one of --checkpoint or --predictions is required".into())
        })?;
        let net = load_checkpoint(checkpoint)?;
        let (metrics, predictions) = evaluate(&net, &manifest, &ids, ablation, args.threads.max(1))?;
        (metrics, predictions.len())
    };

    let report = EvalReport::new(
        "eval",
        vec![EvalRow {
            repeat: 0,
            n,
            metrics,
        }],
    );
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.out.display())))?;
    report.write_csv(&args.out.join("report.csv"))?;
    print!("{}", report.render_table());
    Ok(())
}

fn cmd_crossdb(args: CrossdbArgs) -> Result<(), CliError> {
    let ablation = parse_ablation(&args.ablation)?;
    let train_manifest = DatasetManifest::load(&args.train_manifest)?;
    let test_manifest = DatasetManifest::load(&args.test_manifest)?;
    let config = TrainConfig {
        sgd: args.sgd.to_config(),
        epochs: args.epochs,
        seed: resolve_seed(args.seed)?,
        ablation,
        loss_weights: LossWeights::default(),
    };
    let (report, _) = cross_database(
        &train_manifest,
        &test_manifest,
        &config,
        args.threads.max(1),
        Some(&args.out),
    )?;
    print!("{}", report.render_table());
    Ok(())
}

fn cmd_score(args: ScoreArgs) -> Result<(), CliError> {
    let (quad, patches) = score_image(&args.checkpoint, &args.left, &args.right)?;
    if args.json {
        let value = serde_json::json!({
            "q_left": quad.q_left,
            "q_right": quad.q_right,
            "q_stereo": quad.q_stereo,
            "q_global": quad.q_global,
            "patches": patches,
        });
        println!("{value}");
    } else {
        println!("q_left: {}", quad.q_left);
        println!("q_right: {}", quad.q_right);
        println!("q_stereo: {}", quad.q_stereo);
        println!("q_global: {}", quad.q_global);
        println!("patches: {patches}");
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let manifest = DatasetManifest::load(&args.manifest)?;
    write_mismatch_csv(&manifest, &args.out)?;
    println!("wrote {} rows to {}", manifest.samples.len(), args.out.display());
    Ok(())
}
