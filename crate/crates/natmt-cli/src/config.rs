//! Flat key=value run configuration with section prefixes. Command-line
//! overrides win over file values; the fully-resolved config is echoed next
//! to every run's outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use natmt::align::{AlignConfig, SelectionCriterion};
use natmt::classifier::{ClassifierTrainConfig, FeatureSpec};
use natmt::corpus::Perspective;
use natmt::metrics::TableConfig;
use natmt::reward::RewardMode;
use natmt::seq2seq::{ModelConfig, TrainConfig};
use natmt::DefaultScalar;

#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config field {}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        field: field.to_string(),
        message: message.into(),
    }
}

/// How σ_c is chosen for alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaCMode {
    /// Use the configured value as-is.
    Fixed,
    /// Recalibrate to the 60th percentile of base-model content scores on
    /// the validation set.
    Auto,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub lowercase: bool,
    pub vocab_min_freq: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub train_tagged: bool,
    pub train_original_scale: f64,
    pub classifier_perspectives: Vec<Perspective>,
    pub classifier: ClassifierTrainConfig,
    pub align: AlignConfig<DefaultScalar>,
    pub align_perspective: Perspective,
    pub sigma_c_mode: SigmaCMode,
    pub selection: SelectionCriterion,
    pub beam: usize,
    pub postprocess: bool,
    pub system_name: String,
    pub checkpoint: Option<PathBuf>,
    pub rerank_candidates: usize,
    pub rerank_top_k: usize,
    pub rerank_temperature: f64,
    pub synth_beam: usize,
    pub mtld_threshold: f64,
    pub b1_top: usize,
    pub table: TableConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: PathBuf::from("data"),
            manifest: PathBuf::from("manifest.tsv"),
            out_dir: PathBuf::from("out"),
            seed: 42,
            lowercase: false,
            vocab_min_freq: 2,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            train_tagged: false,
            train_original_scale: 1.0,
            classifier_perspectives: Perspective::ALL.to_vec(),
            classifier: ClassifierTrainConfig::default(),
            align: AlignConfig::default(),
            align_perspective: Perspective::MtHt,
            sigma_c_mode: SigmaCMode::Auto,
            selection: SelectionCriterion::MaxHarmonicMean,
            beam: 5,
            postprocess: true,
            system_name: "aligned".to_string(),
            checkpoint: None,
            rerank_candidates: 5,
            rerank_top_k: 10,
            rerank_temperature: 1.0,
            synth_beam: 5,
            mtld_threshold: natmt::metrics::MTLD_THRESHOLD,
            b1_top: 1000,
            table: TableConfig::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(field: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| err(field, format!("cannot parse {value:?}")))
}

fn parse_bool(field: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(err(field, format!("expected true/false, got {other:?}"))),
    }
}

impl RunConfig {
    /// Parses a config file (lines of `key=value`, `#` comments) and applies
    /// the overrides on top.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| err("config", format!("cannot read {}: {e}", path.display())))?;
            for (no, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| err("config", format!("line {}: expected key=value", no + 1)))?;
                cfg.set(key.trim(), value.trim())?;
            }
        }
        for (key, value) in overrides {
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "paths.data_dir" => self.data_dir = PathBuf::from(value),
            "paths.manifest" => self.manifest = PathBuf::from(value),
            "paths.out_dir" => self.out_dir = PathBuf::from(value),
            "seed" => self.seed = parse_num(key, value)?,
            "vocab.min_freq" => {
                self.vocab_min_freq = parse_num(key, value)?;
                if self.vocab_min_freq == 0 {
                    return Err(err(key, "must be at least 1"));
                }
            }
            "vocab.lowercase" => self.lowercase = parse_bool(key, value)?,
            "model.enc_layers" => self.model.enc_layers = parse_num(key, value)?,
            "model.dec_layers" => self.model.dec_layers = parse_num(key, value)?,
            "model.width" => self.model.width = parse_num(key, value)?,
            "model.heads" => self.model.heads = parse_num(key, value)?,
            "model.ffn_width" => self.model.ffn_width = parse_num(key, value)?,
            "model.max_len" => self.model.max_len = parse_num(key, value)?,
            "train.max_lr" => self.train.max_lr = parse_num(key, value)?,
            "train.warmup_steps" => self.train.warmup_steps = parse_num(key, value)?,
            "train.max_steps" => self.train.max_steps = parse_num(key, value)?,
            "train.batch_size" => self.train.batch_size = parse_num(key, value)?,
            "train.grad_accum" => self.train.grad_accum = parse_num(key, value)?,
            "train.eval_interval" => self.train.eval_interval = parse_num(key, value)?,
            "train.patience" => self.train.patience = parse_num(key, value)?,
            "train.weight_decay" => self.train.weight_decay = parse_num(key, value)?,
            "train.tagged" => self.train_tagged = parse_bool(key, value)?,
            "train.original_scale" => self.train_original_scale = parse_num(key, value)?,
            "classifier.perspective" => {
                self.classifier_perspectives = if value == "all" {
                    Perspective::ALL.to_vec()
                } else {
                    vec![Perspective::parse(value)
                        .ok_or_else(|| err(key, format!("unknown perspective {value:?}")))?]
                };
            }
            "classifier.reg" => self.classifier.reg = parse_num(key, value)?,
            "classifier.learning_rate" => self.classifier.learning_rate = parse_num(key, value)?,
            "classifier.epochs" => self.classifier.epochs = parse_num(key, value)?,
            "classifier.hash_bits" => {
                let bits: u32 = parse_num(key, value)?;
                if !(4..=28).contains(&bits) {
                    return Err(err(key, "hash bits must lie in 4..=28"));
                }
                self.classifier.spec = FeatureSpec {
                    hash_bits: bits,
                    ..self.classifier.spec.clone()
                };
            }
            "reward.sigma_t" => self.align.reward.sigma_t = parse_num(key, value)?,
            "reward.sigma_c" => self.align.reward.sigma_c = parse_num(key, value)?,
            "reward.beta" => self.align.reward.beta = parse_num(key, value)?,
            "reward.sigma_c_mode" => {
                self.sigma_c_mode = match value {
                    "fixed" => SigmaCMode::Fixed,
                    "auto" => SigmaCMode::Auto,
                    other => return Err(err(key, format!("expected fixed or auto, got {other:?}"))),
                };
            }
            "reward.content_scorer" => {
                if value != "chrf" {
                    return Err(err(key, format!("unknown content scorer {value:?}")));
                }
            }
            "align.mode" => {
                self.align.mode = RewardMode::parse(value)
                    .ok_or_else(|| err(key, format!("unknown reward mode {value:?}")))?;
            }
            "align.perspective" => {
                self.align_perspective = Perspective::parse(value)
                    .ok_or_else(|| err(key, format!("unknown perspective {value:?}")))?;
            }
            "align.samples_per_source" => self.align.samples_per_source = parse_num(key, value)?,
            "align.temperature" => self.align.temperature = parse_num(key, value)?,
            "align.learning_rate" => self.align.learning_rate = parse_num(key, value)?,
            "align.weight_decay" => self.align.weight_decay = parse_num(key, value)?,
            "align.batch_size" => self.align.batch_size = parse_num(key, value)?,
            "align.checkpoint_interval" => self.align.checkpoint_interval = parse_num(key, value)?,
            "align.max_steps" => self.align.max_steps = parse_num(key, value)?,
            "align.clip_norm" => self.align.clip_norm = parse_num(key, value)?,
            "align.use_baseline" => self.align.use_baseline = parse_bool(key, value)?,
            "align.baseline_decay" => self.align.baseline_decay = parse_num(key, value)?,
            "align.eval_beam" => self.align.eval_beam = parse_num(key, value)?,
            "align.selection" => {
                self.selection = if value == "hm" {
                    SelectionCriterion::MaxHarmonicMean
                } else if let Some(step) = value.strip_prefix("step:") {
                    SelectionCriterion::FixedStep(parse_num(key, step)?)
                } else {
                    return Err(err(key, format!("expected hm or step:<n>, got {value:?}")));
                };
            }
            "decode.beam" => {
                self.beam = parse_num(key, value)?;
                if self.beam == 0 {
                    return Err(err(key, "beam must be at least 1"));
                }
            }
            "decode.postprocess" => self.postprocess = parse_bool(key, value)?,
            "decode.system_name" => self.system_name = value.to_string(),
            "decode.checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "rerank.candidates" => self.rerank_candidates = parse_num(key, value)?,
            "rerank.top_k" => self.rerank_top_k = parse_num(key, value)?,
            "rerank.temperature" => self.rerank_temperature = parse_num(key, value)?,
            "synth.beam" => self.synth_beam = parse_num(key, value)?,
            "metrics.mtld_threshold" => self.mtld_threshold = parse_num(key, value)?,
            "metrics.b1_top" => self.b1_top = parse_num(key, value)?,
            "metrics.table_iters" => self.table.em_iterations = parse_num(key, value)?,
            "metrics.table_floor" => self.table.posterior_floor = parse_num(key, value)?,
            "metrics.table_min_freq" => self.table.min_source_freq = parse_num(key, value)?,
            "metrics.table_min_options" => self.table.min_options = parse_num(key, value)?,
            other => return Err(err(other, "unknown config key")),
        }
        Ok(())
    }

    /// Serializes every key in sorted order; reruns with the same resolved
    /// config and seed are byte-identical.
    pub fn resolved(&self) -> String {
        let mut map: BTreeMap<&str, String> = BTreeMap::new();
        map.insert("paths.data_dir", self.data_dir.display().to_string());
        map.insert("paths.manifest", self.manifest.display().to_string());
        map.insert("paths.out_dir", self.out_dir.display().to_string());
        map.insert("seed", self.seed.to_string());
        map.insert("vocab.min_freq", self.vocab_min_freq.to_string());
        map.insert("vocab.lowercase", self.lowercase.to_string());
        map.insert("model.enc_layers", self.model.enc_layers.to_string());
        map.insert("model.dec_layers", self.model.dec_layers.to_string());
        map.insert("model.width", self.model.width.to_string());
        map.insert("model.heads", self.model.heads.to_string());
        map.insert("model.ffn_width", self.model.ffn_width.to_string());
        map.insert("model.max_len", self.model.max_len.to_string());
        map.insert("train.max_lr", self.train.max_lr.to_string());
        map.insert("train.warmup_steps", self.train.warmup_steps.to_string());
        map.insert("train.max_steps", self.train.max_steps.to_string());
        map.insert("train.batch_size", self.train.batch_size.to_string());
        map.insert("train.grad_accum", self.train.grad_accum.to_string());
        map.insert("train.eval_interval", self.train.eval_interval.to_string());
        map.insert("train.patience", self.train.patience.to_string());
        map.insert("train.weight_decay", self.train.weight_decay.to_string());
        map.insert("train.tagged", self.train_tagged.to_string());
        map.insert("train.original_scale", self.train_original_scale.to_string());
        map.insert(
            "classifier.perspective",
            if self.classifier_perspectives.len() == 3 {
                "all".to_string()
            } else {
                self.classifier_perspectives[0].as_str().to_lowercase()
            },
        );
        map.insert("classifier.reg", self.classifier.reg.to_string());
        map.insert(
            "classifier.learning_rate",
            self.classifier.learning_rate.to_string(),
        );
        map.insert("classifier.epochs", self.classifier.epochs.to_string());
        map.insert(
            "classifier.hash_bits",
            self.classifier.spec.hash_bits.to_string(),
        );
        map.insert("reward.sigma_t", self.align.reward.sigma_t.to_string());
        map.insert("reward.sigma_c", self.align.reward.sigma_c.to_string());
        map.insert("reward.beta", self.align.reward.beta.to_string());
        map.insert(
            "reward.sigma_c_mode",
            match self.sigma_c_mode {
                SigmaCMode::Fixed => "fixed".to_string(),
                SigmaCMode::Auto => "auto".to_string(),
            },
        );
        map.insert("reward.content_scorer", "chrf".to_string());
        map.insert("align.mode", self.align.mode.as_str().to_string());
        map.insert(
            "align.perspective",
            self.align_perspective.as_str().to_lowercase(),
        );
        map.insert(
            "align.samples_per_source",
            self.align.samples_per_source.to_string(),
        );
        map.insert("align.temperature", self.align.temperature.to_string());
        map.insert("align.learning_rate", self.align.learning_rate.to_string());
        map.insert("align.weight_decay", self.align.weight_decay.to_string());
        map.insert("align.batch_size", self.align.batch_size.to_string());
        map.insert(
            "align.checkpoint_interval",
            self.align.checkpoint_interval.to_string(),
        );
        map.insert("align.max_steps", self.align.max_steps.to_string());
        map.insert("align.clip_norm", self.align.clip_norm.to_string());
        map.insert("align.use_baseline", self.align.use_baseline.to_string());
        map.insert("align.baseline_decay", self.align.baseline_decay.to_string());
        map.insert("align.eval_beam", self.align.eval_beam.to_string());
        map.insert(
            "align.selection",
            match self.selection {
                SelectionCriterion::MaxHarmonicMean => "hm".to_string(),
                SelectionCriterion::FixedStep(s) => format!("step:{s}"),
            },
        );
        map.insert("decode.beam", self.beam.to_string());
        map.insert("decode.postprocess", self.postprocess.to_string());
        map.insert("decode.system_name", self.system_name.clone());
        if let Some(ckpt) = &self.checkpoint {
            map.insert("decode.checkpoint", ckpt.display().to_string());
        }
        map.insert("rerank.candidates", self.rerank_candidates.to_string());
        map.insert("rerank.top_k", self.rerank_top_k.to_string());
        map.insert("rerank.temperature", self.rerank_temperature.to_string());
        map.insert("synth.beam", self.synth_beam.to_string());
        map.insert("metrics.mtld_threshold", self.mtld_threshold.to_string());
        map.insert("metrics.b1_top", self.b1_top.to_string());
        map.insert("metrics.table_iters", self.table.em_iterations.to_string());
        map.insert("metrics.table_floor", self.table.posterior_floor.to_string());
        map.insert(
            "metrics.table_min_freq",
            self.table.min_source_freq.to_string(),
        );
        map.insert(
            "metrics.table_min_options",
            self.table.min_options.to_string(),
        );
        let mut out = String::new();
        for (k, v) in map {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }
}
