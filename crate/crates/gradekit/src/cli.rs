//! Command-line interface tying the pipeline together: synthesize data,
//! train per-part ensembles, predict, calibrate/combine graders, evaluate
//! and report. Every command is deterministic given its flags and inputs,
//! and records a manifest entry (seeds, configs, input digests) under the
//! output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::combine::{self, CombinationModel};
use crate::ensemble::{
    load_ensemble, predict_part, save_ensemble, train_ensemble_with_history, GraderEnsemble,
    DEFAULT_MEMBERS,
};
use crate::error::Error;
use crate::exam::{overall_grade, PartId};
use crate::io::{
    load_dataset, load_predictions, save_dataset, save_predictions, PredPart, PredictionRecord,
};
use crate::metrics::{self, MetricsReport};
use crate::net::{Activation, ArchKind};
use crate::optim::{canonical_config, TrainConfig};
use crate::synth::{generate, generate_grader_views, SynthSpec};

#[derive(Parser, Debug)]
#[command(
    name = "gradekit",
    version,
    about = "Grading pipeline for multi-part speaking exams over pooled frame embeddings"
)]
struct Cli {
    /// Base random seed (synth data, training member seeds).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Training config JSON (mirrors the training configuration; CLI flags
    /// override individual fields).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for output artifacts and the run manifest.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Clip emitted scores to the [1, 6] grade scale.
    #[arg(long, global = true)]
    clip: bool,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate synthetic train/calibration/test datasets (plus optional
    /// simulated grader prediction files).
    Synth(SynthArgs),
    /// Train an ensemble of regression heads for one exam part.
    Train(TrainArgs),
    /// Score a dataset with trained ensembles, writing a predictions CSV.
    Predict(PredictArgs),
    /// Fit per-part combination coefficients for a single grader.
    Calibrate(CombineArgs),
    /// Fit a per-part combination over one or more graders.
    Combine(CombineArgs),
    /// Compute PCC/SRC/RMSE and within-grade percentages for predictions.
    Evaluate(EvaluateArgs),
    /// Write the metrics table plus reference-vs-predicted scatter data.
    Report(EvaluateArgs),
}

#[derive(clap::Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    train_speakers: usize,
    #[arg(long, default_value_t = 100)]
    calibration_speakers: usize,
    #[arg(long, default_value_t = 100)]
    test_speakers: usize,
    /// Embedding width of generated frames.
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 8)]
    frames_min: usize,
    #[arg(long, default_value_t = 16)]
    frames_max: usize,
    /// Std of the per-part perturbation of a speaker's latent grade.
    #[arg(long, default_value_t = 0.25)]
    part_noise: f64,
    /// Std of the per-frame embedding noise.
    #[arg(long, default_value_t = 0.1)]
    frame_noise: f64,
    /// Also emit this many simulated grader prediction CSVs.
    #[arg(long)]
    views: Option<usize>,
    /// Per-grader view noise stds (comma separated; last value repeats).
    #[arg(long, value_delimiter = ',')]
    view_noise: Vec<f64>,
}

#[derive(clap::Args, Debug)]
struct TrainArgs {
    /// Training dataset (JSON lines); defaults to <out>/train.jsonl.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Exam part to train (P1..P5); defaults to the config file's part.
    #[arg(long)]
    part: Option<PartId>,
    /// Ensemble size.
    #[arg(long, default_value_t = DEFAULT_MEMBERS)]
    members: usize,
    #[arg(long)]
    arch: Option<ArchKind>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    grad_accum: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    activation: Option<Activation>,
    #[arg(long)]
    hidden_width: Option<usize>,
    #[arg(long)]
    penult_width: Option<usize>,
}

#[derive(clap::Args, Debug)]
struct PredictArgs {
    /// Trained ensemble directory; repeat for several parts.
    #[arg(long = "model", required = true, num_args = 1..)]
    models: Vec<PathBuf>,
    /// Dataset to score (JSON lines).
    #[arg(long)]
    data: PathBuf,
    /// Grader name recorded in the predictions CSV.
    #[arg(long, default_value = "grader")]
    grader: String,
}

#[derive(clap::Args, Debug)]
struct CombineArgs {
    /// Prediction CSV files, one or more.
    #[arg(long = "graders", required = true, num_args = 1..)]
    graders: Vec<PathBuf>,
    /// Calibration dataset providing reference overall grades.
    #[arg(long)]
    fit: PathBuf,
    /// Apply the fitted model to the speakers of this dataset, writing
    /// combined.csv.
    #[arg(long)]
    apply: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct EvaluateArgs {
    /// Predictions CSV.
    #[arg(long)]
    pred: PathBuf,
    /// Reference dataset (JSON lines).
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Grader to select; required when the CSV holds several.
    #[arg(long)]
    grader: Option<String>,
    /// Column to evaluate: P1..P5 or overall.
    #[arg(long, default_value = "overall")]
    part: String,
}

enum Failure {
    Usage(String),
    App(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::App(e)
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Exit code classification: 1 usage, 2 data/validation, 3 numerical.
fn app_exit_code(err: &Error) -> i32 {
    match err {
        Error::Diverged { .. } | Error::DegenerateInput(_) => 3,
        _ => 2,
    }
}

/// Parses and runs one command line (first element is the program name).
/// Returns the process exit code.
pub fn run<I>(argv: I) -> i32
where
    I: IntoIterator<Item = String>,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .try_init();
    let argv: Vec<String> = argv.into_iter().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli, &argv) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::App(e)) => {
            eprintln!("error: {e}");
            app_exit_code(&e)
        }
    }
}

fn dispatch(cli: Cli, argv: &[String]) -> Result<(), Failure> {
    let ctx = Context {
        seed: cli.seed,
        config: cli.config,
        out: cli.out,
        clip: cli.clip,
        argv: argv.to_vec(),
    };
    match cli.command {
        Cmd::Synth(args) => cmd_synth(&ctx, args),
        Cmd::Train(args) => cmd_train(&ctx, args),
        Cmd::Predict(args) => cmd_predict(&ctx, args),
        Cmd::Calibrate(args) => cmd_combine(&ctx, args, true),
        Cmd::Combine(args) => cmd_combine(&ctx, args, false),
        Cmd::Evaluate(args) => cmd_evaluate(&ctx, args, false),
        Cmd::Report(args) => cmd_evaluate(&ctx, args, true),
    }
}

struct Context {
    seed: Option<u64>,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    clip: bool,
    argv: Vec<String>,
}

impl Context {
    fn out_dir(&self) -> Result<&Path, Failure> {
        let dir = self
            .out
            .as_deref()
            .ok_or_else(|| usage("--out <dir> is required for this command"))?;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        Ok(dir)
    }

    fn clip_score(&self, score: f64) -> f64 {
        if self.clip {
            score.clamp(1.0, 6.0)
        } else {
            score
        }
    }
}

/// One entry of the run manifest; appended to `<out>/manifest.json`.
/// Artifacts stay timestamp-free so reruns are byte-identical; wall-clock
/// time lives only here.
#[derive(Serialize)]
struct ManifestEntry {
    command: String,
    argv: Vec<String>,
    seed: Option<u64>,
    config: serde_json::Value,
    input_digests: BTreeMap<String, String>,
    outputs: Vec<String>,
    tool_version: String,
    timestamp_unix: u64,
}

fn sha256_hex(path: &Path) -> Result<String, Error> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn write_manifest(
    ctx: &Context,
    out_dir: &Path,
    command: &str,
    config: serde_json::Value,
    inputs: &[&Path],
    outputs: &[PathBuf],
) -> Result<(), Error> {
    let mut input_digests = BTreeMap::new();
    for path in inputs {
        input_digests.insert(path.display().to_string(), sha256_hex(path)?);
    }
    let entry = ManifestEntry {
        command: command.to_string(),
        argv: ctx.argv.clone(),
        seed: ctx.seed,
        config,
        input_digests,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let manifest_path = out_dir.join("manifest.json");
    let mut entries: Vec<serde_json::Value> = match std::fs::read(&manifest_path) {
        Ok(bytes) => serde_json::from_slice(&bytes).unwrap_or_default(),
        Err(_) => Vec::new(),
    };
    entries.push(serde_json::to_value(&entry)?);
    std::fs::write(&manifest_path, serde_json::to_vec_pretty(&entries)?)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))
}

fn cmd_synth(ctx: &Context, args: SynthArgs) -> Result<(), Failure> {
    let out = ctx.out_dir()?;
    let mut spec = SynthSpec {
        n_train: args.train_speakers,
        n_calibration: args.calibration_speakers,
        n_test: args.test_speakers,
        embedding_dim: args.dim,
        frames_min: args.frames_min,
        frames_max: args.frames_max,
        part_noise_std: args.part_noise,
        frame_noise_std: args.frame_noise,
        seed: ctx.seed.unwrap_or(0),
        ..SynthSpec::default()
    };
    if !args.view_noise.is_empty() {
        spec.view_noise_std = args.view_noise.clone();
    }

    let (train, cal, test) = generate(&spec)?;
    let mut outputs = Vec::new();
    for (ds, name) in [
        (&train, "train.jsonl"),
        (&cal, "calibration.jsonl"),
        (&test, "test.jsonl"),
    ] {
        let path = out.join(name);
        save_dataset(ds, &path)?;
        outputs.push(path);
    }

    if let Some(n_graders) = args.views {
        if n_graders < 2 {
            return Err(usage("--views must be at least 2"));
        }
        let views = generate_grader_views(&spec, n_graders)?;
        for name in &views.grader_names {
            let records: Vec<PredictionRecord> = views
                .calibration
                .iter()
                .chain(&views.test)
                .filter(|r| &r.grader == name)
                .cloned()
                .collect();
            let path = out.join(format!("views-{name}.csv"));
            save_predictions(&records, &path)?;
            outputs.push(path);
        }
    }

    write_manifest(
        ctx,
        out,
        "synth",
        serde_json::to_value(&spec).map_err(Error::from)?,
        &[],
        &outputs,
    )?;
    println!(
        "synth: wrote {} speakers ({} train / {} calibration / {} test) under {}",
        spec.n_train + spec.n_calibration + spec.n_test,
        spec.n_train,
        spec.n_calibration,
        spec.n_test,
        out.display()
    );
    Ok(())
}

fn resolved_train_config(ctx: &Context, args: &TrainArgs) -> Result<TrainConfig, Failure> {
    let mut cfg = match (&ctx.config, args.part) {
        (Some(path), part) => {
            let bytes =
                std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
            let cfg: TrainConfig = serde_json::from_slice(&bytes).map_err(Error::from)?;
            if let Some(p) = part {
                if p != cfg.part {
                    return Err(usage(format!(
                        "--part {p} conflicts with config part {}",
                        cfg.part
                    )));
                }
            }
            cfg
        }
        (None, Some(part)) => canonical_config(part),
        (None, None) => return Err(usage("either --part or --config is required")),
    };
    if let Some(v) = args.arch {
        cfg.architecture = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.grad_accum {
        cfg.grad_accum_steps = v;
    }
    if let Some(v) = args.dropout {
        cfg.dropout_rate = v;
    }
    if let Some(v) = args.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.weight_decay {
        cfg.weight_decay = v;
    }
    if let Some(v) = args.activation {
        cfg.activation = v;
    }
    if let Some(v) = args.hidden_width {
        cfg.hidden_width = v;
    }
    if let Some(v) = args.penult_width {
        cfg.penult_width = v;
    }
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(ctx: &Context, args: TrainArgs) -> Result<(), Failure> {
    let out = ctx.out_dir()?;
    let cfg = resolved_train_config(ctx, &args)?;
    if args.members == 0 {
        return Err(usage("--members must be at least 1"));
    }
    let data_path = args.data.clone().unwrap_or_else(|| out.join("train.jsonl"));
    let dataset = load_dataset(&data_path)?;

    let (ensemble, histories) =
        train_ensemble_with_history(&dataset, &cfg, args.members, cfg.seed)?;
    let ens_dir = out.join(format!("ensemble-{}", cfg.part));
    save_ensemble(&ensemble, &ens_dir)?;
    let loss_path = out.join(format!("loss-{}.json", cfg.part));
    std::fs::write(
        &loss_path,
        serde_json::to_vec_pretty(&histories).map_err(Error::from)?,
    )
    .map_err(|e| Error::io(loss_path.display().to_string(), e))?;

    write_manifest(
        ctx,
        out,
        "train",
        serde_json::to_value(&cfg).map_err(Error::from)?,
        &[data_path.as_path()],
        &[ens_dir.clone(), loss_path],
    )?;
    let final_losses: Vec<String> = histories
        .iter()
        .map(|h| format!("{:.4}", h.last().copied().unwrap_or(f64::NAN)))
        .collect();
    println!(
        "train: part {} ensemble of {} -> {} (final member losses: {})",
        cfg.part,
        args.members,
        ens_dir.display(),
        final_losses.join(", ")
    );
    Ok(())
}

fn cmd_predict(ctx: &Context, args: PredictArgs) -> Result<(), Failure> {
    let out = ctx.out_dir()?;
    let mut ensembles: BTreeMap<PartId, GraderEnsemble> = BTreeMap::new();
    for dir in &args.models {
        let ens = load_ensemble(dir)?;
        if ensembles.insert(ens.part, ens).is_some() {
            return Err(usage(format!(
                "two ensembles provided for the same part ({})",
                dir.display()
            )));
        }
    }
    let dataset = load_dataset(&args.data)?;

    let mut records = Vec::new();
    let mut incomplete = 0usize;
    for sub in &dataset.submissions {
        let mut part_scores = BTreeMap::new();
        for (&part, ens) in &ensembles {
            if sub.responses.get(&part).is_none_or(|r| r.is_empty()) {
                continue;
            }
            let score = predict_part(ens, sub)?;
            part_scores.insert(part, score);
            records.push(PredictionRecord {
                speaker: sub.speaker_id.clone(),
                part: PredPart::Part(part),
                grader: args.grader.clone(),
                score: ctx.clip_score(score),
            });
        }
        if part_scores.len() == PartId::ALL.len() {
            let overall = overall_grade(&part_scores)?;
            records.push(PredictionRecord {
                speaker: sub.speaker_id.clone(),
                part: PredPart::Overall,
                grader: args.grader.clone(),
                score: ctx.clip_score(overall),
            });
        } else {
            incomplete += 1;
        }
    }

    let pred_path = out.join(format!("predictions-{}.csv", args.grader));
    save_predictions(&records, &pred_path)?;
    let inputs: Vec<&Path> = std::iter::once(args.data.as_path()).collect();
    write_manifest(
        ctx,
        out,
        "predict",
        serde_json::json!({
            "models": args.models.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "grader": args.grader,
            "clip": ctx.clip,
        }),
        &inputs,
        std::slice::from_ref(&pred_path),
    )?;
    println!(
        "predict: {} rows for {} speakers -> {}{}",
        records.len(),
        dataset.len(),
        pred_path.display(),
        if incomplete > 0 {
            format!(" ({incomplete} speakers lack full part coverage; no overall row)")
        } else {
            String::new()
        }
    );
    Ok(())
}

fn cmd_combine(ctx: &Context, args: CombineArgs, single_grader: bool) -> Result<(), Failure> {
    let out = ctx.out_dir()?;
    let fit_ds = load_dataset(&args.fit)?;
    let matrix = combine::build_matrix(&args.graders, &fit_ds)?;

    if single_grader {
        let mut graders: Vec<&str> = matrix
            .column_tags
            .iter()
            .map(|t| t.split(':').next().unwrap_or(t))
            .collect();
        graders.dedup();
        if graders.len() != 1 {
            return Err(usage(format!(
                "calibrate expects predictions from exactly one grader, found {}",
                graders.join(", ")
            )));
        }
    }

    let model = combine::fit_ols(&matrix)?;
    let fitted = combine::predict_matrix(&model, &matrix)?;
    let fit_rmse = metrics::rmse(&fitted, &matrix.targets)?;

    let command = if single_grader {
        "calibrate"
    } else {
        "combine"
    };
    let model_name = if single_grader {
        let grader = matrix.column_tags[0]
            .split(':')
            .next()
            .unwrap_or("grader")
            .to_string();
        format!("calibration-{grader}.json")
    } else {
        "combination.json".to_string()
    };
    let model_path = out.join(&model_name);
    model.save(&model_path)?;
    let mut outputs = vec![model_path.clone()];

    println!(
        "{command}: fitted {} columns on {} speakers (fit RMSE {fit_rmse:.4}{})",
        matrix.num_cols(),
        matrix.num_rows(),
        if model.regularized {
            ", ridge-regularized"
        } else {
            ""
        },
    );
    if !matrix.dropped.is_empty() {
        println!(
            "{command}: dropped {} speaker(s) without full prediction coverage",
            matrix.dropped.len()
        );
    }
    print!("{}", model.render_coefficient_table());

    if let Some(apply_path) = &args.apply {
        let apply_ds = load_dataset(apply_path)?;
        let apply_matrix = combine::build_matrix(&args.graders, &apply_ds)?;
        missing_model_columns(&model, &apply_matrix)?;
        let scores = combine::predict_matrix(&model, &apply_matrix)?;
        let grader_label = if single_grader {
            "calibrated"
        } else {
            "combined"
        };
        let records: Vec<PredictionRecord> = apply_matrix
            .speakers
            .iter()
            .zip(&scores)
            .map(|(speaker, &score)| PredictionRecord {
                speaker: speaker.clone(),
                part: PredPart::Overall,
                grader: grader_label.to_string(),
                score: ctx.clip_score(score),
            })
            .collect();
        let combined_path = out.join("combined.csv");
        save_predictions(&records, &combined_path)?;
        outputs.push(combined_path.clone());
        println!(
            "{command}: applied to {} speakers -> {}",
            records.len(),
            combined_path.display()
        );
    }

    let mut inputs: Vec<&Path> = args.graders.iter().map(|p| p.as_path()).collect();
    inputs.push(args.fit.as_path());
    if let Some(p) = &args.apply {
        inputs.push(p.as_path());
    }
    write_manifest(
        ctx,
        out,
        command,
        serde_json::json!({
            "columns": matrix.column_tags,
            "regularized": model.regularized,
            "fit_rmse": fit_rmse,
            "dropped_speakers": matrix.dropped,
        }),
        &inputs,
        &outputs,
    )?;
    Ok(())
}

/// Every model column must exist in the matrix the model is applied to.
fn missing_model_columns(
    model: &CombinationModel,
    matrix: &combine::PredictionMatrix,
) -> Result<(), Error> {
    for tag in model.coefficients.keys() {
        if !matrix.column_tags.contains(tag) {
            return Err(Error::MissingColumn(tag.clone()));
        }
    }
    Ok(())
}

fn cmd_evaluate(ctx: &Context, args: EvaluateArgs, with_scatter: bool) -> Result<(), Failure> {
    let part: PredPart = args
        .part
        .parse()
        .map_err(|e: String| usage(format!("--part: {e}")))?;
    let records = load_predictions(&args.pred)?;

    let mut graders: Vec<&str> = records.iter().map(|r| r.grader.as_str()).collect();
    graders.sort_unstable();
    graders.dedup();
    let grader = match (&args.grader, graders.as_slice()) {
        (Some(g), _) => {
            if !graders.contains(&g.as_str()) {
                return Err(usage(format!(
                    "grader {g:?} not present in {} (has: {})",
                    args.pred.display(),
                    graders.join(", ")
                )));
            }
            g.clone()
        }
        (None, [only]) => only.to_string(),
        (None, _) => {
            return Err(usage(format!(
                "--grader is required; file holds {}",
                graders.join(", ")
            )))
        }
    };

    let scores: BTreeMap<&str, f64> = records
        .iter()
        .filter(|r| r.grader == grader && r.part == part)
        .map(|r| (r.speaker.as_str(), r.score))
        .collect();
    if scores.is_empty() {
        return Err(Error::EmptyJoin.into());
    }

    let reference = load_dataset(&args.reference)?;
    let mut rows: Vec<(String, f64, f64)> = Vec::new();
    for sub in &reference.submissions {
        let ref_value = match part {
            PredPart::Overall => Some(sub.ref_overall),
            PredPart::Part(p) => sub.ref_part_grades.get(&p).copied(),
        };
        if let (Some(r), Some(&p)) = (ref_value, scores.get(sub.speaker_id.as_str())) {
            rows.push((sub.speaker_id.clone(), r, p));
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyJoin.into());
    }

    let refs: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let preds: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let report = metrics::report(&preds, &refs)?;
    let label = format!("{grader}:{part}");
    let table = MetricsReport::render_markdown(&[(label.clone(), report.clone())]);
    print!("{table}");

    let command = if with_scatter { "report" } else { "evaluate" };
    if with_scatter || ctx.out.is_some() {
        let out = ctx.out_dir()?;
        let metrics_json = out.join("metrics.json");
        std::fs::write(
            &metrics_json,
            serde_json::to_vec_pretty(&report).map_err(Error::from)?,
        )
        .map_err(|e| Error::io(metrics_json.display().to_string(), e))?;
        let metrics_md = out.join("metrics.md");
        std::fs::write(&metrics_md, &table)
            .map_err(|e| Error::io(metrics_md.display().to_string(), e))?;
        let mut outputs = vec![metrics_json, metrics_md];
        if with_scatter {
            let scatter = out.join("scatter.csv");
            metrics::write_scatter_csv(&rows, &scatter)?;
            outputs.push(scatter);
        }
        write_manifest(
            ctx,
            out,
            command,
            serde_json::json!({ "grader": grader, "part": part.to_string(), "n": report.n }),
            &[args.pred.as_path(), args.reference.as_path()],
            &outputs,
        )?;
    }
    Ok(())
}
