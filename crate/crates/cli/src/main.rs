use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use cpac_core::data::{self, generate_synthetic, parse_csv, write_csv, Dataset, NormalizationParams};
use cpac_core::heads::{train_classifier, Classifier, ClassifierKind};
use cpac_core::metrics::{evaluate, ThresholdAgent};
use cpac_core::pipeline::{
    self, augment, export_augmented_csv, export_latent, run_experiment, ExperimentConfig, Method,
    Oversampler, Prepared, OUT_DIR_ENV,
};
use cpac_core::{Checkpoint, SyntheticSpec};

#[derive(Parser)]
#[command(name = "cpac", version, about = "Fraud oversampling and prototype-attention classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a dataset and fit the normalizer on the training part.
    Prep(PrepArgs),
    /// Write the bundled two-Gaussian synthetic dataset.
    GenSynthetic(GenArgs),
    /// Train an oversampler on a training split.
    TrainOversampler(TrainOversamplerArgs),
    /// Draw synthetic fraud rows from a trained oversampler.
    Oversample(OversampleArgs),
    /// Train a classifier.
    TrainClf(TrainClfArgs),
    /// Evaluate a classifier on labelled rows.
    Eval(EvalArgs),
    /// Attention mask, distances and probability for one row.
    Explain(ExplainArgs),
    /// PCA projection of validation latent means.
    ExportLatent(ExportLatentArgs),
    /// Training split plus synthetic frauds with an is_synthetic column.
    ExportAugmented(ExportAugmentedArgs),
    /// Full experiment grid.
    Run(RunArgs),
    /// Finite-difference check of every analytic gradient.
    GradCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV; omit to use the synthetic generator.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 0.7)]
    ratio: f64,
    #[arg(long, default_value_t = 42)]
    split_seed: u64,
}

#[derive(Args)]
struct PrepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 20_000)]
    rows: usize,
    #[arg(long, default_value_t = 0.002)]
    minority_fraction: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitFiles {
    /// Training CSV in raw units.
    #[arg(long)]
    train: PathBuf,
    /// Validation CSV in raw units.
    #[arg(long)]
    val: PathBuf,
    #[arg(long)]
    normalizer: PathBuf,
}

#[derive(Args)]
struct TrainOversamplerArgs {
    #[command(flatten)]
    files: SplitFiles,
    #[arg(long, default_value = "vaegan")]
    method: String,
    #[arg(long, default_value_t = 0)]
    pretrain_smote: usize,
    #[arg(long, default_value = "minority")]
    scope: String,
    #[arg(long, default_value = "auto")]
    loss: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct OversampleArgs {
    #[arg(long)]
    model_file: PathBuf,
    #[arg(long)]
    normalizer: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainClfArgs {
    #[command(flatten)]
    files: SplitFiles,
    /// Extra synthetic rows (raw units) appended to the training split.
    #[arg(long)]
    augment: Option<PathBuf>,
    #[arg(long, default_value = "logreg")]
    model: String,
    #[arg(long, default_value = "auto")]
    loss: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model_file: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    normalizer: PathBuf,
    /// `fixed` (0.5), `agent`, or a number.
    #[arg(long, default_value = "fixed")]
    threshold: String,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    model_file: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    normalizer: PathBuf,
    #[arg(long)]
    row_index: usize,
}

#[derive(Args)]
struct ExportLatentArgs {
    #[arg(long)]
    model_file: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    normalizer: PathBuf,
    #[arg(long, default_value_t = 2)]
    dims: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportAugmentedArgs {
    #[arg(long)]
    model_file: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    normalizer: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides as key=value; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    classifier: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    pretrain_smote: Option<usize>,
    #[arg(long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
}

fn load_split(files: &SplitFiles) -> Result<(NormalizationParams, Dataset, Dataset)> {
    let norm = NormalizationParams::load(&files.normalizer)?;
    let train = normalized(&files.train, &norm)?;
    let val = normalized(&files.val, &norm)?;
    Ok((norm, train, val))
}

fn normalized(path: &Path, norm: &NormalizationParams) -> Result<Dataset> {
    let ds = parse_csv(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ds.with_features(norm.apply(&ds.features)?)?)
}

fn write_json(path: &Path, value: serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(&value)?).with_context(|| format!("writing {}", path.display()))
}

fn experiment_from(method: &str, scope: &str, loss: &str, seed: u64) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    cfg.set("method", method)?;
    cfg.set("scope", scope)?;
    cfg.set("loss", loss)?;
    cfg.seed = seed;
    Ok(cfg)
}

fn prep(args: PrepArgs) -> Result<()> {
    let mut cfg = ExperimentConfig {
        data: args.data.data,
        train_ratio: args.data.ratio,
        split_seed: args.data.split_seed,
        ..Default::default()
    };
    cfg.output_dir = args.out;
    let p = pipeline::prepare(&cfg)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    write_csv(&cfg.output_dir.join("train.csv"), &p.raw.subset(&p.split.train_idx), None)?;
    write_csv(&cfg.output_dir.join("val.csv"), &p.raw.subset(&p.split.val_idx), None)?;
    p.normalizer.save(&cfg.output_dir.join("normalizer.json"))?;
    let (tn, tf) = p.train.class_counts();
    let (vn, vf) = p.val.class_counts();
    println!("train: {tn} normal / {tf} fraud; validation: {vn} normal / {vf} fraud");
    Ok(())
}

fn train_oversampler(args: TrainOversamplerArgs) -> Result<()> {
    let (normalizer, train, val) = load_split(&args.files)?;
    let mut cfg = experiment_from(&args.method, &args.scope, &args.loss, args.seed)?;
    cfg.pretrain_smote = args.pretrain_smote;
    if let Some(e) = args.epochs {
        cfg.vaegan_epochs = e;
        cfg.joint_epochs = e;
    }
    if cfg.method == Method::None {
        bail!("method `none` has nothing to train");
    }
    let prep = Prepared {
        raw: train.clone(),
        split: data::SplitIndices {
            train_idx: (0..train.len()).collect(),
            val_idx: Vec::new(),
            seed: 0,
        },
        normalizer,
        train,
        val,
    };
    let over = pipeline::train_oversampler(&cfg, &prep)?;
    std::fs::create_dir_all(&args.out)?;
    over.to_checkpoint()?.save(&args.out.join("oversampler.json"))?;
    if let Oversampler::VaeGan {
        head: cpac_core::LatentHead::Cpac(c),
        ..
    } = &over
    {
        c.to_checkpoint()?.save(&args.out.join("head.json"))?;
    }
    if let Some(m) = over.encoder() {
        write_json(&args.out.join("oversampler_log.json"), serde_json::to_value(&m.log)?)?;
    }
    println!("wrote {}", args.out.join("oversampler.json").display());
    Ok(())
}

fn oversample(args: OversampleArgs) -> Result<()> {
    let over = Oversampler::from_checkpoint(&Checkpoint::load(&args.model_file)?)?;
    let norm = NormalizationParams::load(&args.normalizer)?;
    let synth = over.generate(args.count, args.seed)?;
    let raw = if synth.rows() == 0 {
        cpac_core::Matrix::zeros(0, norm.dim())
    } else {
        norm.invert(&synth)?
    };
    let ds = Dataset::new(raw, vec![1; args.count], norm.columns.clone())?;
    write_csv(&args.out, &ds, None)?;
    println!("wrote {} synthetic rows to {}", args.count, args.out.display());
    Ok(())
}

fn train_clf(args: TrainClfArgs) -> Result<()> {
    let (norm, mut train, val) = load_split(&args.files)?;
    if let Some(extra) = &args.augment {
        let synth = normalized(extra, &norm)?;
        train = augment(&train, &synth.features)?.0;
    }
    let mut cfg = ExperimentConfig {
        classifier: args.model.parse::<ClassifierKind>()?,
        seed: args.seed,
        ..Default::default()
    };
    cfg.set("loss", &args.loss)?;
    if let Some(e) = args.epochs {
        cfg.clf_epochs = e;
    }
    let clf = train_classifier(&train.features, &train.labels, &val.features, &val.labels, &cfg.classifier_config())?;
    clf.to_checkpoint()?.save(&args.out)?;
    let report = evaluate(&val.labels, &clf.predict(&val.features)?, 0.5)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let clf = Classifier::from_checkpoint(&Checkpoint::load(&args.model_file)?)?;
    let ds = normalized(&args.data, &NormalizationParams::load(&args.normalizer)?)?;
    let probs = clf.predict(&ds.features)?;
    let tau = match args.threshold.as_str() {
        "fixed" => 0.5,
        "agent" => ThresholdAgent::default().fit(&probs, &ds.labels)?.tau,
        other => other.parse().with_context(|| format!("invalid threshold `{other}`"))?,
    };
    println!("{}", serde_json::to_string_pretty(&evaluate(&ds.labels, &probs, tau)?)?);
    Ok(())
}

fn explain(args: ExplainArgs) -> Result<()> {
    let clf = Classifier::from_checkpoint(&Checkpoint::load(&args.model_file)?)?;
    let Classifier::Cpac(params) = clf else {
        bail!("explain needs a cpac model");
    };
    let ds = normalized(&args.data, &NormalizationParams::load(&args.normalizer)?)?;
    if args.row_index >= ds.len() {
        bail!("row index {} out of range ({} rows)", args.row_index, ds.len());
    }
    let e = params.explain(ds.features.row(args.row_index))?;
    let out = serde_json::json!({
        "attention": e.attention,
        "d0": e.d0,
        "d1": e.d1,
        "prob": e.prob,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn export_latent_cmd(args: ExportLatentArgs) -> Result<()> {
    let over = Oversampler::from_checkpoint(&Checkpoint::load(&args.model_file)?)?;
    let model = over.encoder().context("the oversampler has no encoder")?;
    let ds = normalized(&args.data, &NormalizationParams::load(&args.normalizer)?)?;
    let coords = export_latent(&args.out, model, &ds, args.dims)?;
    println!("wrote {} rows to {}", coords.rows(), args.out.display());
    Ok(())
}

fn export_augmented(args: ExportAugmentedArgs) -> Result<()> {
    let over = Oversampler::from_checkpoint(&Checkpoint::load(&args.model_file)?)?;
    let normalizer = NormalizationParams::load(&args.normalizer)?;
    let raw = parse_csv(&args.train)?;
    let train = raw.with_features(normalizer.apply(&raw.features)?)?;
    let prep = Prepared {
        split: data::SplitIndices {
            train_idx: (0..raw.len()).collect(),
            val_idx: Vec::new(),
            seed: 0,
        },
        raw,
        normalizer,
        val: train.subset(&[]),
        train,
    };
    let n = export_augmented_csv(&args.out, &prep, &over, args.count, args.seed)?;
    println!("wrote {n} rows to {}", args.out.display());
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for kv in &args.overrides {
        let (k, v) = kv.split_once('=').with_context(|| format!("expected KEY=VALUE, got `{kv}`"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(d) = args.data {
        cfg.data = Some(d);
    }
    if let Some(m) = &args.method {
        cfg.set("method", m)?;
    }
    if let Some(c) = &args.classifier {
        cfg.set("classifier", c)?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.pretrain_smote {
        cfg.pretrain_smote = n;
    }
    if let Some(o) = args.out {
        cfg.output_dir = o;
    }
    let report = run_experiment(&cfg)?;
    for cell in &report.cells {
        let m = &cell.metrics;
        println!(
            "count={:<4} {:<7} precision={:.4} recall={:.4} f1={:.4} auc={:.4} tau={:.3}",
            cell.count, cell.classifier, m.precision, m.recall, m.f1, m.auc_roc, m.threshold
        );
    }
    if let Some(s) = report.silhouette {
        println!("validation latent silhouette: {s:.4}");
    }
    println!("report written to {}", cfg.output_dir.join("report.json").display());
    Ok(())
}

fn grad_check(seed: u64) -> Result<()> {
    let reports = cpac_core::gradsuite::run_suite(seed)?;
    let mut failed = 0;
    for r in &reports {
        let status = if r.passed() { "ok  " } else { "FAIL" };
        println!("{status} {:<40} n={:<5} max_rel_err={:.3e}", r.name, r.checked, r.max_rel_error);
        failed += usize::from(!r.passed());
    }
    if failed > 0 {
        bail!("{failed} gradient checks failed");
    }
    Ok(())
}

fn gen_synthetic(args: GenArgs) -> Result<()> {
    let ds = generate_synthetic(&SyntheticSpec {
        rows: args.rows,
        minority_fraction: args.minority_fraction,
        seed: args.seed,
        ..Default::default()
    })?;
    write_csv(&args.out, &ds, None)?;
    let (n, f) = ds.class_counts();
    println!("wrote {n} normal and {f} fraud rows to {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prep(a) => prep(a),
        Command::GenSynthetic(a) => gen_synthetic(a),
        Command::TrainOversampler(a) => train_oversampler(a),
        Command::Oversample(a) => oversample(a),
        Command::TrainClf(a) => train_clf(a),
        Command::Eval(a) => eval(a),
        Command::Explain(a) => explain(a),
        Command::ExportLatent(a) => export_latent_cmd(a),
        Command::ExportAugmented(a) => export_augmented(a),
        Command::Run(a) => run(a),
        Command::GradCheck { seed } => grad_check(seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
