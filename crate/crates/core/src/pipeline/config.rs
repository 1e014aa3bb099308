use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::biset::{self, BisetConfig, Interaction};
use crate::error::{Error, Result};
use crate::metrics::LcsMode;
use crate::ndtensor::TrainConfig;
use crate::rerank::{self, RerankConfig};
use crate::retrieval::DEFAULT_TOP_N;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Profile {
    /// Desk scale: small widths, a few thousand steps.
    #[default]
    Mini,
    /// Full-size hyperparameters.
    Paper,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mini" => Ok(Profile::Mini),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::Config(format!("unknown profile '{s}' (mini, paper)"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Mini => "mini",
            Profile::Paper => "paper",
        })
    }
}

/// Where each article's template comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TemplateMode {
    /// A uniformly sampled training summary.
    Random,
    /// The rank-1 retrieved summary.
    RetrieveTop,
    /// The top-`N` candidate closest to the gold summary (needs gold).
    NOptimal(usize),
    /// The reranker's best of the top-`N` candidates.
    Reranked,
}

impl TemplateMode {
    pub fn needs_gold(self) -> bool {
        matches!(self, TemplateMode::NOptimal(_))
    }
}

impl FromStr for TemplateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(TemplateMode::Random),
            "retrieve_top" | "retrieve-top" => Ok(TemplateMode::RetrieveTop),
            "reranked" => Ok(TemplateMode::Reranked),
            _ => {
                let n = s
                    .strip_prefix("n_optimal:")
                    .or_else(|| s.strip_prefix("n-optimal:"))
                    .and_then(|n| n.parse::<usize>().ok())
                    .filter(|&n| n > 0)
                    .ok_or_else(|| {
                        Error::Config(format!("unknown template mode '{s}' (random, retrieve_top, n_optimal:<N>, reranked)"))
                    })?;
                Ok(TemplateMode::NOptimal(n))
            }
        }
    }
}

impl fmt::Display for TemplateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TemplateMode::Random => f.write_str("random"),
            TemplateMode::RetrieveTop => f.write_str("retrieve_top"),
            TemplateMode::NOptimal(n) => write!(f, "n_optimal:{n}"),
            TemplateMode::Reranked => f.write_str("reranked"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Paths {
    pub train_articles: Option<PathBuf>,
    pub train_summaries: Option<PathBuf>,
    pub dev_articles: Option<PathBuf>,
    pub dev_summaries: Option<PathBuf>,
    pub test_articles: Option<PathBuf>,
    pub test_summaries: Option<PathBuf>,
    pub index: PathBuf,
    pub rerank_checkpoint: PathBuf,
    pub biset_checkpoint: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            train_articles: None,
            train_summaries: None,
            dev_articles: None,
            dev_summaries: None,
            test_articles: None,
            test_summaries: None,
            index: "artifacts/index.bin".into(),
            rerank_checkpoint: "artifacts/rerank.ckpt".into(),
            biset_checkpoint: "artifacts/biset.ckpt".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub profile: Profile,
    pub seed: u64,
    /// Candidates retrieved per article.
    pub retrieval_n: usize,
    pub rerank: RerankConfig,
    pub rerank_train: TrainConfig,
    pub biset: BisetConfig,
    pub biset_train: TrainConfig,
    pub beam: usize,
    /// Templates used to train and run the summarizer.
    pub template_mode: TemplateMode,
    pub vocab_min_count: usize,
    pub lcs: LcsMode,
    pub paths: Paths,
}

impl PipelineConfig {
    pub fn paper() -> Self {
        PipelineConfig {
            profile: Profile::Paper,
            seed: 0,
            retrieval_n: DEFAULT_TOP_N,
            rerank: RerankConfig::default(),
            rerank_train: rerank::default_train_config(),
            biset: BisetConfig::default(),
            biset_train: biset::default_train_config(),
            beam: biset::DEFAULT_BEAM,
            template_mode: TemplateMode::Reranked,
            vocab_min_count: 1,
            lcs: LcsMode::Plain,
            paths: Paths::default(),
        }
    }

    pub fn mini() -> Self {
        let paper = Self::paper();
        PipelineConfig {
            profile: Profile::Mini,
            // keeps the expected squared distance between random embeddings
            // at the d = 300 level: 0.08 * sqrt(300 / 32)
            rerank: RerankConfig { emb_dim: 32, init_scale: 0.25, ..paper.rerank },
            rerank_train: TrainConfig { steps: 1500, batch_size: 32, eval_every: 100, ..paper.rerank_train },
            biset: BisetConfig { emb_dim: 32, hidden: 32, dropout: 0.1, ..paper.biset },
            biset_train: TrainConfig {
                steps: 3000,
                batch_size: 16,
                schedule: crate::ndtensor::LrSchedule { base: 0.01, ..paper.biset_train.schedule },
                eval_every: 100,
                ..paper.biset_train
            },
            ..paper
        }
    }

    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Mini => Self::mini(),
            Profile::Paper => Self::paper(),
        }
    }

    /// Profile defaults overridden by a `key = value` file.
    pub fn load(profile: Profile, path: Option<&Path>) -> Result<Self> {
        let mut cfg = Self::for_profile(profile);
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
                _ => Error::Io(e),
            })?;
            cfg.apply_text(&text)?;
        }
        Ok(cfg)
    }

    /// Applies `key = value` lines. Blank lines and lines starting with
    /// `//` or `;` are skipped; `#` is a legal value character.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("//") || line.starts_with(';') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got '{line}'", n + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        self.validate()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let path = |v: &str| PathBuf::from(v);
        match key {
            "profile" => {
                let profile: Profile = value.parse()?;
                if profile != self.profile {
                    return Err(Error::Config(format!(
                        "config file is for profile '{profile}' but '{}' is selected",
                        self.profile
                    )));
                }
            }
            "seed" => self.seed = parse(key, value)?,
            "retrieval.n" => self.retrieval_n = parse(key, value)?,
            "beam" => self.beam = parse(key, value)?,
            "template_mode" => self.template_mode = value.parse()?,
            "vocab.min_count" => self.vocab_min_count = parse(key, value)?,
            "rouge.lcs" => {
                self.lcs = match value {
                    "plain" => LcsMode::Plain,
                    "weighted" => LcsMode::Weighted,
                    _ => return Err(Error::Config(format!("rouge.lcs must be plain or weighted, got '{value}'"))),
                }
            }
            "paths.train_articles" => self.paths.train_articles = Some(path(value)),
            "paths.train_summaries" => self.paths.train_summaries = Some(path(value)),
            "paths.dev_articles" => self.paths.dev_articles = Some(path(value)),
            "paths.dev_summaries" => self.paths.dev_summaries = Some(path(value)),
            "paths.test_articles" => self.paths.test_articles = Some(path(value)),
            "paths.test_summaries" => self.paths.test_summaries = Some(path(value)),
            "paths.index" => self.paths.index = path(value),
            "paths.rerank_checkpoint" => self.paths.rerank_checkpoint = path(value),
            "paths.biset_checkpoint" => self.paths.biset_checkpoint = path(value),
            _ => {
                let handled = if let Some(k) = key.strip_prefix("rerank.") {
                    set_rerank(&mut self.rerank, k, value)? || set_train(&mut self.rerank_train, k, value)?
                } else if let Some(k) = key.strip_prefix("biset.") {
                    set_biset(&mut self.biset, k, value)? || set_train(&mut self.biset_train, k, value)?
                } else {
                    false
                };
                if !handled {
                    return Err(Error::Config(format!("unknown config key '{key}'")));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.rerank.validate()?;
        self.biset.validate()?;
        if self.retrieval_n == 0 {
            return Err(Error::Config("retrieval.n must be at least 1".into()));
        }
        if self.beam == 0 {
            return Err(Error::Config("beam must be at least 1".into()));
        }
        for t in [&self.rerank_train, &self.biset_train] {
            if t.batch_size == 0 || !(t.grad_clip > 0.0) || !(t.schedule.base > 0.0) {
                return Err(Error::Config("batch size, gradient clip and learning rate must be positive".into()));
            }
        }
        Ok(())
    }

    /// Every setting as `key=value`, in a fixed order. Feeding these back
    /// through [`PipelineConfig::set`] reproduces the configuration.
    pub fn records(&self) -> Vec<String> {
        let mut out = vec![
            format!("profile={}", self.profile),
            format!("seed={}", self.seed),
            format!("retrieval.n={}", self.retrieval_n),
            format!("beam={}", self.beam),
            format!("template_mode={}", self.template_mode),
            format!("vocab.min_count={}", self.vocab_min_count),
            format!("rouge.lcs={}", if self.lcs == LcsMode::Weighted { "weighted" } else { "plain" }),
        ];
        let prefixed = |prefix: &str, kv: Vec<(&'static str, String)>| {
            kv.into_iter().map(move |(k, v)| format!("{prefix}.{k}={v}")).collect::<Vec<_>>()
        };
        out.extend(prefixed("rerank", rerank_fields(&self.rerank)));
        out.extend(prefixed("rerank", train_fields(&self.rerank_train)));
        out.extend(prefixed("biset", biset_fields(&self.biset)));
        out.extend(prefixed("biset", train_fields(&self.biset_train)));
        let p = &self.paths;
        for (k, v) in [
            ("train_articles", &p.train_articles),
            ("train_summaries", &p.train_summaries),
            ("dev_articles", &p.dev_articles),
            ("dev_summaries", &p.dev_summaries),
            ("test_articles", &p.test_articles),
            ("test_summaries", &p.test_summaries),
        ] {
            if let Some(v) = v {
                out.push(format!("paths.{k}={}", v.display()));
            }
        }
        out.push(format!("paths.index={}", p.index.display()));
        out.push(format!("paths.rerank_checkpoint={}", p.rerank_checkpoint.display()));
        out.push(format!("paths.biset_checkpoint={}", p.biset_checkpoint.display()));
        out
    }

    /// SHA-256 over [`PipelineConfig::records`], hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for r in self.records() {
            h.update(r.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Training settings for the reranker with the run seed filled in.
    pub fn rerank_train_config(&self) -> TrainConfig {
        TrainConfig { seed: crate::ndtensor::derive_seed(self.seed, &[1]), ..self.rerank_train.clone() }
    }

    pub fn biset_train_config(&self) -> TrainConfig {
        TrainConfig { seed: crate::ndtensor::derive_seed(self.seed, &[2]), ..self.biset_train.clone() }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("bad value '{value}' for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("bad value '{value}' for {key} (true/false)"))),
    }
}

fn train_fields(t: &TrainConfig) -> Vec<(&'static str, String)> {
    vec![
        ("steps", t.steps.to_string()),
        ("batch_size", t.batch_size.to_string()),
        ("lr", t.schedule.base.to_string()),
        ("lr_decay_start", t.schedule.decay_start.to_string()),
        ("lr_decay_every", t.schedule.decay_every.to_string()),
        ("lr_decay_factor", t.schedule.factor.to_string()),
        ("weight_decay", t.weight_decay.to_string()),
        ("grad_clip", t.grad_clip.to_string()),
        ("target_loss", t.target_loss.map_or("none".into(), |v| v.to_string())),
        ("eval_every", t.eval_every.to_string()),
    ]
}

fn set_train(t: &mut TrainConfig, key: &str, value: &str) -> Result<bool> {
    match key {
        "steps" => t.steps = parse(key, value)?,
        "batch_size" => t.batch_size = parse(key, value)?,
        "lr" => t.schedule.base = parse(key, value)?,
        "lr_decay_start" => t.schedule.decay_start = parse(key, value)?,
        "lr_decay_every" => t.schedule.decay_every = parse(key, value)?,
        "lr_decay_factor" => t.schedule.factor = parse(key, value)?,
        "weight_decay" => t.weight_decay = parse(key, value)?,
        "grad_clip" => t.grad_clip = parse(key, value)?,
        "target_loss" => t.target_loss = if value == "none" { None } else { Some(parse(key, value)?) },
        "eval_every" => t.eval_every = parse(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

pub(crate) fn rerank_fields(c: &RerankConfig) -> Vec<(&'static str, String)> {
    vec![
        ("emb_dim", c.emb_dim.to_string()),
        ("width", c.width.to_string()),
        ("k_pool", c.k_pool.to_string()),
        ("hidden", c.hidden.to_string()),
        ("dropout", c.dropout.to_string()),
        ("init_scale", c.init_scale.to_string()),
    ]
}

pub(crate) fn set_rerank(c: &mut RerankConfig, key: &str, value: &str) -> Result<bool> {
    match key {
        "emb_dim" => c.emb_dim = parse(key, value)?,
        "width" => c.width = parse(key, value)?,
        "k_pool" => c.k_pool = parse(key, value)?,
        "hidden" => c.hidden = parse(key, value)?,
        "dropout" => c.dropout = parse(key, value)?,
        "init_scale" => c.init_scale = parse(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

pub(crate) fn biset_fields(c: &BisetConfig) -> Vec<(&'static str, String)> {
    vec![
        ("emb_dim", c.emb_dim.to_string()),
        ("hidden", c.hidden.to_string()),
        ("layers", c.layers.to_string()),
        ("dropout", c.dropout.to_string()),
        ("interaction", c.interaction.to_string()),
        ("disable_t2a", c.disable_t2a.to_string()),
        ("disable_a2t", c.disable_a2t.to_string()),
        ("heads", c.heads.to_string()),
        ("init_scale", c.init_scale.to_string()),
        ("max_decode_len", c.max_decode_len.to_string()),
    ]
}

pub(crate) fn set_biset(c: &mut BisetConfig, key: &str, value: &str) -> Result<bool> {
    match key {
        "emb_dim" => c.emb_dim = parse(key, value)?,
        "hidden" => c.hidden = parse(key, value)?,
        "layers" => c.layers = parse(key, value)?,
        "dropout" => c.dropout = parse(key, value)?,
        "interaction" => c.interaction = value.parse::<Interaction>()?,
        "disable_t2a" => c.disable_t2a = parse_bool(key, value)?,
        "disable_a2t" => c.disable_a2t = parse_bool(key, value)?,
        "heads" => c.heads = parse(key, value)?,
        "init_scale" => c.init_scale = parse(key, value)?,
        "max_decode_len" => c.max_decode_len = parse(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}
