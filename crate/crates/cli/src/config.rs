use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use incongruity::baseline::LogisticConfig;
use incongruity::corpus::{sha256_hex, CleanseRules, DatasetConfig, DonorMode, ToyCorpusConfig};
use incongruity::models::{Architecture, ChunkPooling, ModelConfig};
use incongruity::train::{AdamConfig, TrainConfig};
use incongruity::{Error, Result};

/// A model family selectable on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Neural(Architecture),
    Baseline,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Neural(a) => a.name(),
            ModelKind::Baseline => "baseline",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("baseline") {
            Ok(ModelKind::Baseline)
        } else {
            s.parse().map(ModelKind::Neural)
        }
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "none".into())
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Every recognized key with its default value.
fn defaults() -> BTreeMap<String, String> {
    let toy = ToyCorpusConfig::default();
    let ds = DatasetConfig::default();
    let m = ModelConfig::new(Architecture::Ahde, 2);
    let t = TrainConfig::default();
    let l = LogisticConfig::default();
    let pooling = match m.hre_pooling {
        ChunkPooling::Mean => "mean",
        ChunkPooling::Sum => "sum",
    };
    let pairs: Vec<(&str, String)> = vec![
        ("seed", "0".into()),
        ("model", "ahde".into()),
        ("ip", "false".into()),
        ("top_n", "1,5,10,50,100".into()),
        ("toy.topics", toy.topics.to_string()),
        ("toy.articles_per_topic", toy.articles_per_topic.to_string()),
        ("toy.vocab_per_topic", toy.vocab_per_topic.to_string()),
        ("toy.min_paragraphs", toy.min_paragraphs.to_string()),
        ("toy.max_paragraphs", toy.max_paragraphs.to_string()),
        ("toy.min_sentences", toy.min_sentences.to_string()),
        ("toy.max_sentences", toy.max_sentences.to_string()),
        ("toy.min_words", toy.min_words.to_string()),
        ("toy.max_words", toy.max_words.to_string()),
        ("toy.headline_words", toy.headline_words.to_string()),
        ("toy.keywords", toy.keywords.to_string()),
        ("toy.keyword_rate", toy.keyword_rate.to_string()),
        ("dataset.train_fraction", ds.train_fraction.to_string()),
        ("dataset.dev_fraction", ds.dev_fraction.to_string()),
        ("dataset.incongruent_ratio", ds.incongruent_ratio.to_string()),
        ("dataset.rule2_fraction", ds.rule2_fraction.to_string()),
        ("dataset.donor_mode", "uniform".into()),
        ("dataset.donor_attempts", ds.donor_attempts.to_string()),
        ("dataset.min_freq", "1".into()),
        ("dataset.cleanse", "default".into()),
        ("dataset.paragraph_set", "true".into()),
        ("dataset.types", "false".into()),
        ("model.embed_dim", m.embed_dim.to_string()),
        ("model.word_hidden", m.word_hidden.to_string()),
        ("model.para_hidden", m.para_hidden.to_string()),
        ("model.attn_dim", opt(m.attn_dim)),
        ("model.dropout_rde_cde", m.dropout_rde_cde.to_string()),
        ("model.dropout_ahde_word", m.dropout_ahde_word.to_string()),
        ("model.conv_widths", join(&m.conv_widths)),
        ("model.conv_filters", m.conv_filters.to_string()),
        ("model.max_tokens", m.max_tokens.to_string()),
        ("model.max_chunks", m.max_chunks.to_string()),
        ("model.hre_pooling", pooling.into()),
        ("train.batch_size", t.batch_size.to_string()),
        ("train.max_epochs", t.max_epochs.to_string()),
        ("train.max_steps", opt(t.max_steps)),
        ("train.clip_norm", t.clip_norm.to_string()),
        ("train.eval_every", t.eval_every.to_string()),
        ("train.patience", t.patience.to_string()),
        ("train.time_budget_secs", opt(t.time_budget_secs)),
        ("train.lr", t.adam.lr.to_string()),
        ("train.beta1", t.adam.beta1.to_string()),
        ("train.beta2", t.adam.beta2.to_string()),
        ("train.eps", t.adam.eps.to_string()),
        ("baseline.lr", l.lr.to_string()),
        ("baseline.epochs", l.epochs.to_string()),
        ("gradcheck.eps", "1e-5".into()),
        ("gradcheck.tolerance", "1e-4".into()),
        ("gradcheck.full_size", "false".into()),
    ];
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Effective key=value settings: defaults, then the config file, then
/// command-line overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn split_pair(line: &str) -> Option<(&str, &str)> {
    let (k, v) = line.split_once('=')?;
    Some((k.trim(), v.trim()))
}

impl RunConfig {
    pub fn new() -> Self {
        RunConfig { values: defaults() }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(v) => {
                *v = value.to_string();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown config key `{key}`"))),
        }
    }

    /// `key = value` lines; `#` starts a comment. A key may appear once.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = split_pair(line)
                .ok_or_else(|| Error::Config(format!("config line {}: expected key = value", i + 1)))?;
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("config line {}: duplicate key `{k}`", i + 1)));
            }
            self.set(k, v)
                .map_err(|e| Error::Config(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    /// A `KEY=VALUE` override.
    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let (k, v) = split_pair(pair).ok_or_else(|| Error::Config(format!("override `{pair}` is not KEY=VALUE")))?;
        self.set(k, v)
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.text().as_bytes())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("known key")
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.raw(key);
        v.parse()
            .map_err(|_| Error::Config(format!("config key `{key}` has invalid value `{v}`")))
    }

    /// `none` maps to `None`.
    pub fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            "none" | "auto" | "" => Ok(None),
            _ => self.get(key).map(Some),
        }
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        self.raw(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::Config(format!("config key `{key}` has invalid item `{s}`")))
            })
            .collect()
    }

    pub fn seed(&self) -> Result<u64> {
        self.get("seed")
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        self.raw("model").parse()
    }

    pub fn ip(&self) -> Result<bool> {
        self.get("ip")
    }

    pub fn toy(&self) -> Result<ToyCorpusConfig> {
        Ok(ToyCorpusConfig {
            topics: self.get("toy.topics")?,
            articles_per_topic: self.get("toy.articles_per_topic")?,
            vocab_per_topic: self.get("toy.vocab_per_topic")?,
            min_paragraphs: self.get("toy.min_paragraphs")?,
            max_paragraphs: self.get("toy.max_paragraphs")?,
            min_sentences: self.get("toy.min_sentences")?,
            max_sentences: self.get("toy.max_sentences")?,
            min_words: self.get("toy.min_words")?,
            max_words: self.get("toy.max_words")?,
            headline_words: self.get("toy.headline_words")?,
            keywords: self.get("toy.keywords")?,
            keyword_rate: self.get("toy.keyword_rate")?,
            seed: self.seed()?,
        })
    }

    pub fn dataset(&self) -> Result<DatasetConfig> {
        let cfg = DatasetConfig {
            train_fraction: self.get("dataset.train_fraction")?,
            dev_fraction: self.get("dataset.dev_fraction")?,
            incongruent_ratio: self.get("dataset.incongruent_ratio")?,
            rule2_fraction: self.get("dataset.rule2_fraction")?,
            donor_mode: self.raw("dataset.donor_mode").parse::<DonorMode>()?,
            donor_attempts: self.get("dataset.donor_attempts")?,
            seed: self.seed()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `default`, `none`, or the path of a rule file.
    pub fn cleanse_rules(&self) -> Result<(CleanseRules, Option<PathBuf>)> {
        match self.raw("dataset.cleanse") {
            "default" => Ok((CleanseRules::news_defaults(), None)),
            "none" => Ok((CleanseRules::default(), None)),
            path => {
                let p = PathBuf::from(path);
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| Error::Config(format!("cannot read cleanse rules {path}: {e}")))?;
                Ok((CleanseRules::parse(&text)?, Some(p)))
            }
        }
    }

    pub fn model(
        &self,
        architecture: Architecture,
        vocab_size: usize,
        sentence_delims: Vec<u32>,
    ) -> Result<ModelConfig> {
        let hre_pooling = match self.raw("model.hre_pooling") {
            "mean" => ChunkPooling::Mean,
            "sum" => ChunkPooling::Sum,
            other => {
                return Err(Error::Config(format!(
                    "model.hre_pooling must be mean or sum, got `{other}`"
                )))
            }
        };
        let cfg = ModelConfig {
            architecture,
            vocab_size,
            embed_dim: self.get("model.embed_dim")?,
            word_hidden: self.get("model.word_hidden")?,
            para_hidden: self.get("model.para_hidden")?,
            attn_dim: self.get_opt("model.attn_dim")?,
            dropout_rde_cde: self.get("model.dropout_rde_cde")?,
            dropout_ahde_word: self.get("model.dropout_ahde_word")?,
            conv_widths: self.get_list("model.conv_widths")?,
            conv_filters: self.get("model.conv_filters")?,
            ip_mode: self.ip()?,
            max_tokens: self.get("model.max_tokens")?,
            max_chunks: self.get("model.max_chunks")?,
            hre_pooling,
            sentence_delims,
            seed: self.seed()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            batch_size: self.get("train.batch_size")?,
            max_epochs: self.get("train.max_epochs")?,
            max_steps: self.get_opt("train.max_steps")?,
            clip_norm: self.get("train.clip_norm")?,
            eval_every: self.get("train.eval_every")?,
            patience: self.get("train.patience")?,
            time_budget_secs: self.get_opt("train.time_budget_secs")?,
            adam: AdamConfig {
                lr: self.get("train.lr")?,
                beta1: self.get("train.beta1")?,
                beta2: self.get("train.beta2")?,
                eps: self.get("train.eps")?,
            },
            seed: self.seed()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn logistic(&self) -> Result<LogisticConfig> {
        Ok(LogisticConfig {
            lr: self.get("baseline.lr")?,
            epochs: self.get("baseline.epochs")?,
            seed: self.seed()?,
        })
    }
}
