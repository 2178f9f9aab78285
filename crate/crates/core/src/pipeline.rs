//! End-to-end experiment orchestration: ingest, split, normalize,
//! oversample, classify, evaluate and report.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cpac::{CpacConfig, CpacParams};
use crate::data::{
    fit_normalizer, generate_synthetic, parse_csv, stratified_split, write_csv, Dataset,
    NormalizationParams, SplitIndices, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::heads::{
    train_classifier, Classifier, ClassifierKind, ClassifierTrainConfig, LatentHead, MlpHead,
    MlpVariant,
};
use crate::metrics::{evaluate, pca_project, silhouette, MetricsReport, ThresholdAgent};
use crate::nn::{Checkpoint, ClassLoss, FocalConfig, Matrix};
use crate::smote::{self, SmoteConfig};
use crate::vaegan::{GenerativeScope, JointConfig, VaeGan, VaeGanConfig};

pub const OUT_DIR_ENV: &str = "CPAC_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "smote")]
    Smote,
    #[serde(rename = "vaegan")]
    VaeGan,
    #[serde(rename = "vaegan-mlp1")]
    VaeGanMlp1,
    #[serde(rename = "vaegan-mlp2")]
    VaeGanMlp2,
    #[serde(rename = "vaegan-mlp3")]
    VaeGanMlp3,
    #[serde(rename = "vaegan-cpac")]
    VaeGanCpac,
}

impl Method {
    pub fn uses_vaegan(self) -> bool {
        !matches!(self, Method::None | Method::Smote)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => Method::None,
            "smote" => Method::Smote,
            "vaegan" => Method::VaeGan,
            "vaegan-mlp1" => Method::VaeGanMlp1,
            "vaegan-mlp2" => Method::VaeGanMlp2,
            "vaegan-mlp3" => Method::VaeGanMlp3,
            "vaegan-cpac" => Method::VaeGanCpac,
            other => return Err(Error::Config(format!("unknown oversampling method `{other}`"))),
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).map_err(|_| fmt::Error)?;
        f.write_str(v.as_str().unwrap_or_default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    /// Focal for a standalone CPAC classifier, BCE everywhere else.
    Auto,
    Bce,
    Focal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    Fixed,
    Agent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Ablations {
    pub no_head: bool,
    pub no_attention: bool,
    pub no_prototypes: bool,
    pub no_penalties: bool,
}

impl Ablations {
    pub fn any(&self) -> bool {
        self.no_head || self.no_attention || self.no_prototypes || self.no_penalties
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// CSV path; `None` runs on the bundled synthetic generator.
    pub data: Option<PathBuf>,
    pub synthetic: SyntheticSpec,
    pub train_ratio: f64,
    pub split_seed: u64,
    pub seed: u64,
    pub method: Method,
    pub pretrain_smote: usize,
    pub counts: Vec<usize>,
    pub classifier: ClassifierKind,
    pub loss: LossMode,
    pub focal: FocalConfig,
    pub threshold: ThresholdMode,
    pub ablations: Ablations,
    pub scope: GenerativeScope,
    pub latent_dim: usize,
    pub vaegan_epochs: usize,
    pub joint_epochs: usize,
    pub clf_epochs: usize,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: None,
            synthetic: SyntheticSpec::default(),
            train_ratio: 0.7,
            split_seed: 42,
            seed: 0,
            method: Method::None,
            pretrain_smote: 0,
            counts: vec![50, 75, 100],
            classifier: ClassifierKind::Logreg,
            loss: LossMode::Auto,
            focal: FocalConfig::default(),
            threshold: ThresholdMode::Fixed,
            ablations: Ablations::default(),
            scope: GenerativeScope::Minority,
            latent_dim: 2,
            vaegan_epochs: 200,
            joint_epochs: 30,
            clf_epochs: 30,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

impl ExperimentConfig {
    /// Parses a flat `key = value` file; `#` starts a comment.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key = value, got `{line}`"),
            })?;
            cfg.set(k.trim(), v.trim()).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv_text(&text)
    }

    /// Applies one setting; used for both config files and CLI overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "data" => self.data = (!value.is_empty()).then(|| PathBuf::from(value)),
            "synthetic_rows" => self.synthetic.rows = parse_value(key, value)?,
            "synthetic_minority_fraction" => self.synthetic.minority_fraction = parse_value(key, value)?,
            "synthetic_shift" => self.synthetic.shift = parse_value(key, value)?,
            "synthetic_seed" => self.synthetic.seed = parse_value(key, value)?,
            "train_ratio" => self.train_ratio = parse_value(key, value)?,
            "split_seed" => self.split_seed = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "method" => self.method = value.parse()?,
            "pretrain_smote" => self.pretrain_smote = parse_value(key, value)?,
            "counts" => {
                self.counts = value
                    .split(',')
                    .map(|c| parse_value(key, c.trim()))
                    .collect::<Result<_>>()?
            }
            "classifier" => self.classifier = value.parse()?,
            "loss" => {
                self.loss = match value {
                    "auto" => LossMode::Auto,
                    "bce" => LossMode::Bce,
                    "focal" => LossMode::Focal,
                    _ => return Err(Error::Config(format!("unknown loss `{value}`"))),
                }
            }
            "focal_alpha" => self.focal = FocalConfig::new(parse_value(key, value)?, self.focal.gamma)?,
            "focal_gamma" => self.focal = FocalConfig::new(self.focal.alpha, parse_value(key, value)?)?,
            "threshold" => {
                self.threshold = match value {
                    "fixed" | "0.5" => ThresholdMode::Fixed,
                    "agent" => ThresholdMode::Agent,
                    _ => return Err(Error::Config(format!("unknown threshold mode `{value}`"))),
                }
            }
            "no_head" => self.ablations.no_head = parse_bool(key, value)?,
            "no_attention" => self.ablations.no_attention = parse_bool(key, value)?,
            "no_prototypes" => self.ablations.no_prototypes = parse_bool(key, value)?,
            "no_penalties" => self.ablations.no_penalties = parse_bool(key, value)?,
            "scope" => self.scope = value.parse()?,
            "latent_dim" => self.latent_dim = parse_value(key, value)?,
            "vaegan_epochs" => self.vaegan_epochs = parse_value(key, value)?,
            "joint_epochs" => self.joint_epochs = parse_value(key, value)?,
            "clf_epochs" => self.clf_epochs = parse_value(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::Config("train_ratio must lie in (0, 1)".into()));
        }
        if self.method != Method::None && (self.counts.is_empty() || self.counts.contains(&0)) {
            return Err(Error::Config("synthetic counts must be positive".into()));
        }
        let cpac_bearing = self.method == Method::VaeGanCpac || self.classifier == ClassifierKind::Cpac;
        if self.ablations.any() && !cpac_bearing {
            return Err(Error::Config(
                "ablation flags need the vaegan-cpac method or the cpac classifier".into(),
            ));
        }
        if self.ablations.no_head && self.method != Method::VaeGanCpac {
            return Err(Error::Config("no_head applies only to vaegan-cpac".into()));
        }
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be positive".into()));
        }
        Ok(())
    }

    fn cpac_config(&self, dim: usize) -> CpacConfig {
        let mut c = CpacConfig::new(dim);
        c.use_attention = !self.ablations.no_attention;
        c.use_prototypes = !self.ablations.no_prototypes;
        if self.ablations.no_penalties {
            c = c.without_penalties();
        }
        c
    }

    fn head_loss(&self) -> ClassLoss {
        match self.loss {
            LossMode::Focal => ClassLoss::Focal(self.focal),
            _ => ClassLoss::Bce,
        }
    }

    fn classifier_loss(&self) -> ClassLoss {
        match (self.loss, self.classifier) {
            (LossMode::Focal, _) | (LossMode::Auto, ClassifierKind::Cpac) => ClassLoss::Focal(self.focal),
            _ => ClassLoss::Bce,
        }
    }

    pub fn classifier_config(&self) -> ClassifierTrainConfig {
        ClassifierTrainConfig {
            kind: self.classifier,
            loss: self.classifier_loss(),
            epochs: self.clf_epochs,
            seed: self.seed.wrapping_add(11),
            no_attention: self.ablations.no_attention,
            no_prototypes: self.ablations.no_prototypes,
            no_penalties: self.ablations.no_penalties,
            ..Default::default()
        }
    }
}

/// Data after ingest, split and normalization. `train`/`val` hold normalized
/// features; `raw` keeps the original units.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub raw: Dataset,
    pub split: SplitIndices,
    pub normalizer: NormalizationParams,
    pub train: Dataset,
    pub val: Dataset,
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.data {
        Some(p) => parse_csv(p),
        None => generate_synthetic(&cfg.synthetic),
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let raw = load_dataset(cfg).map_err(|e| e.in_stage("ingest"))?;
    prepare_dataset(raw, cfg.train_ratio, cfg.split_seed)
}

pub fn prepare_dataset(raw: Dataset, train_ratio: f64, split_seed: u64) -> Result<Prepared> {
    let split = stratified_split(&raw, train_ratio, split_seed).map_err(|e| e.in_stage("split"))?;
    let train_raw = raw.subset(&split.train_idx);
    let val_raw = raw.subset(&split.val_idx);
    let normalize = || -> Result<_> {
        let normalizer = fit_normalizer(&train_raw.features)?.with_columns(raw.column_names.clone());
        let train = train_raw.with_features(normalizer.apply(&train_raw.features)?)?;
        let val = val_raw.with_features(normalizer.apply(&val_raw.features)?)?;
        Ok((normalizer, train, val))
    };
    let (normalizer, train, val) = normalize().map_err(|e| e.in_stage("normalize"))?;
    Ok(Prepared {
        raw,
        split,
        normalizer,
        train,
        val,
    })
}

/// A trained source of synthetic fraud rows (in normalized units).
#[derive(Debug, Clone)]
pub enum Oversampler {
    None,
    Smote { pool: Matrix, k: usize },
    VaeGan { model: VaeGan, head: LatentHead },
}

impl Oversampler {
    pub fn generate(&self, count: usize, seed: u64) -> Result<Matrix> {
        match self {
            Oversampler::None if count == 0 => Ok(Matrix::zeros(0, 0)),
            Oversampler::None => Err(Error::Untrained),
            Oversampler::Smote { pool, k } => smote::generate(
                pool,
                &SmoteConfig {
                    k_neighbors: *k,
                    n_samples: count,
                    seed,
                },
            ),
            Oversampler::VaeGan { model, .. } => model.sample_frauds(count, seed),
        }
    }

    pub fn encoder(&self) -> Option<&VaeGan> {
        match self {
            Oversampler::VaeGan { model, .. } => Some(model),
            _ => None,
        }
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        match self {
            Oversampler::None => Err(Error::Untrained),
            Oversampler::Smote { pool, k } => {
                let mut ck = Checkpoint::new("smote", serde_json::json!({ "k_neighbors": k }));
                ck.push("pool", vec![pool.rows(), pool.cols()], pool.as_slice().to_vec());
                Ok(ck)
            }
            Oversampler::VaeGan { model, .. } => model.to_checkpoint(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        match ck.kind.as_str() {
            "smote" => {
                let k = ck
                    .config
                    .get("k_neighbors")
                    .and_then(|v| v.as_u64())
                    .ok_or_else(|| Error::Checkpoint("smote config is missing k_neighbors".into()))?;
                let t = ck.get("pool")?;
                if t.shape.len() != 2 {
                    return Err(Error::Checkpoint("smote pool must be 2-D".into()));
                }
                Ok(Oversampler::Smote {
                    pool: Matrix::new(t.shape[0], t.shape[1], t.data.clone())?,
                    k: k as usize,
                })
            }
            "vaegan" => Ok(Oversampler::VaeGan {
                model: VaeGan::from_checkpoint(ck)?,
                head: LatentHead::None,
            }),
            other => Err(Error::Checkpoint(format!("`{other}` is not an oversampler"))),
        }
    }
}

fn seed_for(base: u64, salt: u64) -> u64 {
    base.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(salt)
}

/// Builds the latent head for a method, honouring the ablation flags.
pub fn latent_head(cfg: &ExperimentConfig) -> LatentHead {
    let seed = seed_for(cfg.seed, 3);
    let l = cfg.latent_dim;
    match cfg.method {
        Method::VaeGanMlp1 => LatentHead::Mlp(MlpHead::new(MlpVariant::One, l, seed)),
        Method::VaeGanMlp2 => LatentHead::Mlp(MlpHead::new(MlpVariant::Two, l, seed)),
        Method::VaeGanMlp3 => LatentHead::Mlp(MlpHead::new(MlpVariant::Three, l, seed)),
        Method::VaeGanCpac if !cfg.ablations.no_head => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            LatentHead::Cpac(CpacParams::new(cfg.cpac_config(l), &mut rng))
        }
        _ => LatentHead::None,
    }
}

/// Training rows plus optional pretraining SMOTE rows (label 1).
fn with_pretrain_smote(cfg: &ExperimentConfig, train: &Dataset) -> Result<Dataset> {
    if cfg.pretrain_smote == 0 {
        return Ok(train.clone());
    }
    let extra = smote::generate(
        &train.minority_rows(),
        &SmoteConfig {
            n_samples: cfg.pretrain_smote,
            seed: seed_for(cfg.seed, 1),
            ..Default::default()
        },
    )?;
    Ok(augment(train, &extra)?.0)
}

pub fn train_oversampler(cfg: &ExperimentConfig, prep: &Prepared) -> Result<Oversampler> {
    let run = || -> Result<Oversampler> {
        match cfg.method {
            Method::None => Ok(Oversampler::None),
            Method::Smote => Ok(Oversampler::Smote {
                pool: prep.train.minority_rows(),
                k: SmoteConfig::default().k_neighbors,
            }),
            _ => {
                let pool = with_pretrain_smote(cfg, &prep.train)?;
                let mut vc = VaeGanConfig::new(prep.train.dim());
                vc.latent_dim = cfg.latent_dim;
                vc.seed = seed_for(cfg.seed, 2);
                vc.scope = cfg.scope;
                vc.epochs = cfg.vaegan_epochs;
                let mut model = VaeGan::new(vc)?;
                let mut head = latent_head(cfg);
                if cfg.method == Method::VaeGan {
                    model.train_minority_oversampler(&pool.minority_rows(), &prep.val.minority_rows())?;
                } else {
                    let jc = JointConfig {
                        epochs: cfg.joint_epochs,
                        head_loss: cfg.head_loss(),
                        ..Default::default()
                    };
                    model.train_joint(
                        &mut head,
                        &pool.features,
                        &pool.labels,
                        &prep.val.features,
                        &prep.val.labels,
                        &jc,
                    )?;
                }
                Ok(Oversampler::VaeGan { model, head })
            }
        }
    };
    run().map_err(|e| e.in_stage("oversample"))
}

/// Appends synthetic fraud rows; the flag vector marks them.
pub fn augment(train: &Dataset, synthetic: &Matrix) -> Result<(Dataset, Vec<bool>)> {
    let mut flags = vec![false; train.len()];
    if synthetic.rows() == 0 {
        return Ok((train.clone(), flags));
    }
    let features = train.features.vstack(synthetic)?;
    let mut labels = train.labels.clone();
    labels.extend(std::iter::repeat_n(1u8, synthetic.rows()));
    flags.extend(std::iter::repeat_n(true, synthetic.rows()));
    Ok((Dataset::new(features, labels, train.column_names.clone())?, flags))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub count: usize,
    pub classifier: ClassifierKind,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub train_counts: (usize, usize),
    pub val_counts: (usize, usize),
    pub cells: Vec<Cell>,
    /// Silhouette of validation latent means, when the method has an encoder.
    pub silhouette: Option<f64>,
    pub checkpoints: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_clock_secs: Option<f64>,
}

impl RunReport {
    /// The report without the wall-clock field; stable across reruns.
    pub fn metrics_json(&self) -> Result<String> {
        let mut r = self.clone();
        r.wall_clock_secs = None;
        Ok(serde_json::to_string_pretty(&r)?)
    }
}

/// Trains the configured classifier on `train` and evaluates on `val`.
pub fn classify_and_evaluate(
    cfg: &ExperimentConfig,
    train: &Dataset,
    val: &Dataset,
) -> Result<(Classifier, MetricsReport)> {
    let clf = train_classifier(
        &train.features,
        &train.labels,
        &val.features,
        &val.labels,
        &cfg.classifier_config(),
    )
    .map_err(|e| e.in_stage("classify"))?;
    let eval = || -> Result<MetricsReport> {
        let probs = clf.predict(&val.features)?;
        let tau = match cfg.threshold {
            ThresholdMode::Fixed => 0.5,
            ThresholdMode::Agent => ThresholdAgent::default().fit(&probs, &val.labels)?.tau,
        };
        evaluate(&val.labels, &probs, tau)
    };
    let report = eval().map_err(|e| e.in_stage("evaluate"))?;
    Ok((clf, report))
}

/// Runs the full grid and writes checkpoints plus `report.json` and
/// `metrics.json` into the output directory. Files written by a failed run
/// are removed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let started = Instant::now();
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = run_inner(cfg, &dir, &mut written, started);
    if result.is_err() {
        for p in &written {
            let _ = std::fs::remove_file(p);
        }
    }
    result
}

fn run_inner(cfg: &ExperimentConfig, dir: &Path, written: &mut Vec<PathBuf>, started: Instant) -> Result<RunReport> {
    let prep = prepare(cfg)?;
    let mut checkpoints = Vec::new();
    let mut save = |name: &str, ck: &Checkpoint, written: &mut Vec<PathBuf>| -> Result<()> {
        let path = dir.join(name);
        ck.save(&path)?;
        written.push(path);
        checkpoints.push(name.to_string());
        Ok(())
    };

    let norm_path = dir.join("normalizer.json");
    prep.normalizer.save(&norm_path)?;
    written.push(norm_path);

    let over = train_oversampler(cfg, &prep)?;
    if !matches!(over, Oversampler::None) {
        save("oversampler.json", &over.to_checkpoint()?, written)?;
    }
    if let Oversampler::VaeGan {
        head: LatentHead::Cpac(c),
        ..
    } = &over
    {
        save("head.json", &c.to_checkpoint()?, written)?;
    }
    let silhouette = match over.encoder() {
        Some(model) => Some(
            silhouette(&model.means(&prep.val.features)?, &prep.val.labels)
                .map_err(|e| e.in_stage("evaluate"))?,
        ),
        None => None,
    };

    let counts = if cfg.method == Method::None {
        vec![0]
    } else {
        cfg.counts.clone()
    };
    let mut cells = Vec::new();
    for &count in &counts {
        let synth = over
            .generate(count, seed_for(cfg.seed, 100 + count as u64))
            .map_err(|e| e.in_stage("oversample"))?;
        let (train, _) = augment(&prep.train, &synth)?;
        let (clf, metrics) = classify_and_evaluate(cfg, &train, &prep.val)?;
        save(&format!("classifier_{count}.json"), &clf.to_checkpoint()?, written)?;
        cells.push(Cell {
            count,
            classifier: cfg.classifier,
            metrics,
        });
    }

    let report = RunReport {
        config: cfg.clone(),
        seed: cfg.seed,
        train_counts: prep.train.class_counts(),
        val_counts: prep.val.class_counts(),
        cells,
        silhouette,
        checkpoints,
        wall_clock_secs: Some(started.elapsed().as_secs_f64()),
    };
    for (name, text) in [
        ("report.json", serde_json::to_string_pretty(&report)?),
        ("metrics.json", report.metrics_json()?),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(report)
}

/// Writes the raw training split plus `count` synthetic frauds (converted
/// back to raw units) with an `is_synthetic` column. Returns rows written.
pub fn export_augmented_csv(
    path: &Path,
    prep: &Prepared,
    over: &Oversampler,
    count: usize,
    seed: u64,
) -> Result<usize> {
    let train_raw = prep.raw.subset(&prep.split.train_idx);
    let synth = over.generate(count, seed)?;
    let synth_raw = if synth.rows() == 0 {
        synth
    } else {
        prep.normalizer.invert(&synth)?
    };
    let (ds, flags) = augment(&train_raw, &synth_raw)?;
    write_csv(path, &ds, Some(&flags))?;
    Ok(ds.len())
}

/// PCA projection of the validation latent means, written as
/// `pc1,...,pcK,label`.
pub fn export_latent(path: &Path, model: &VaeGan, val: &Dataset, dims: usize) -> Result<Matrix> {
    let mu = model.means(&val.features)?;
    let proj = pca_project(&mu, dims)?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=dims).map(|i| format!("pc{i}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for (row, label) in proj.coords.iter_rows().zip(&val.labels) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(label.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(proj.coords)
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    ck.save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_parsing_and_overrides() {
        let text = "# demo\nmethod = smote\ncounts = 10, 20\nclassifier=cpac\nno_penalties = true\n";
        let mut cfg = ExperimentConfig::from_kv_text(text).unwrap();
        assert_eq!(cfg.method, Method::Smote);
        assert_eq!(cfg.counts, vec![10, 20]);
        assert!(cfg.ablations.no_penalties);
        cfg.validate().unwrap();
        cfg.set("method", "vaegan-cpac").unwrap();
        assert_eq!(cfg.method, Method::VaeGanCpac);
    }

    #[test]
    fn kv_errors_carry_line() {
        let err = ExperimentConfig::from_kv_text("seed = 1\nbogus = 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(ExperimentConfig::from_kv_text("justtext").is_err());
    }

    #[test]
    fn ablation_needs_cpac() {
        let mut cfg = ExperimentConfig::default();
        cfg.ablations.no_attention = true;
        assert!(cfg.validate().is_err());
        cfg.method = Method::VaeGanCpac;
        cfg.validate().unwrap();
    }

    #[test]
    fn zero_count_rejected_for_oversampling() {
        let cfg = ExperimentConfig {
            method: Method::Smote,
            counts: vec![0, 50],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in ["none", "smote", "vaegan", "vaegan-mlp1", "vaegan-mlp2", "vaegan-mlp3", "vaegan-cpac"] {
            assert_eq!(m.parse::<Method>().unwrap().to_string(), m);
        }
    }

    #[test]
    fn augment_flags() {
        let ds = Dataset::new(Matrix::zeros(3, 2), vec![0, 1, 0], vec!["a".into(), "b".into()]).unwrap();
        let (aug, flags) = augment(&ds, &Matrix::filled(2, 2, 1.0)).unwrap();
        assert_eq!(aug.len(), 5);
        assert_eq!(flags, vec![false, false, false, true, true]);
        assert_eq!(aug.labels[3..], [1, 1]);
    }
}
