use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// Recurrent dual encoder.
    Rde,
    /// Convolutional dual encoder.
    Cde,
    /// Attentive hierarchical dual encoder.
    Ahde,
    /// Hierarchical recurrent encoder over pooled word embeddings.
    Hre,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Rde,
        Architecture::Cde,
        Architecture::Ahde,
        Architecture::Hre,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Rde => "rde",
            Architecture::Cde => "cde",
            Architecture::Ahde => "ahde",
            Architecture::Hre => "hre",
        }
    }

    pub fn is_hierarchical(self) -> bool {
        matches!(self, Architecture::Ahde | Architecture::Hre)
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rde" => Ok(Architecture::Rde),
            "cde" => Ok(Architecture::Cde),
            "ahde" => Ok(Architecture::Ahde),
            "hre" => Ok(Architecture::Hre),
            other => Err(Error::Config(format!("unknown architecture `{other}`"))),
        }
    }
}

/// How HRE turns a chunk's word embeddings into one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChunkPooling {
    Mean,
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// Word-level GRU size (RDE and AHDE).
    pub word_hidden: usize,
    /// Paragraph-level GRU size per direction (AHDE and HRE).
    pub para_hidden: usize,
    /// Attention projection size; defaults to the paragraph-level output size.
    pub attn_dim: Option<usize>,
    pub dropout_rde_cde: f64,
    pub dropout_ahde_word: f64,
    pub conv_widths: Vec<usize>,
    pub conv_filters: usize,
    pub ip_mode: bool,
    pub max_tokens: usize,
    pub max_chunks: usize,
    pub hre_pooling: ChunkPooling,
    /// Token ids that end a sentence.
    pub sentence_delims: Vec<u32>,
    pub seed: u64,
}

impl ModelConfig {
    /// Published hyperparameters for `architecture`.
    pub fn new(architecture: Architecture, vocab_size: usize) -> Self {
        ModelConfig {
            architecture,
            vocab_size,
            embed_dim: 300,
            word_hidden: 300,
            para_hidden: 100,
            attn_dim: None,
            dropout_rde_cde: 0.2,
            dropout_ahde_word: 0.3,
            conv_widths: vec![1, 3, 5, 7, 9],
            conv_filters: 200,
            ip_mode: false,
            max_tokens: 80,
            max_chunks: 30,
            hre_pooling: ChunkPooling::Mean,
            sentence_delims: Vec::new(),
            seed: 0,
        }
    }

    /// Tiny dimensions used by gradient checks.
    pub fn toy(architecture: Architecture, vocab_size: usize) -> Self {
        ModelConfig {
            embed_dim: 8,
            word_hidden: 8,
            para_hidden: 8,
            conv_widths: vec![1, 2, 3],
            conv_filters: 2,
            ..ModelConfig::new(architecture, vocab_size)
        }
    }

    /// Width of the paragraph-level outputs `u_p` (both directions).
    pub fn para_out(&self) -> usize {
        2 * self.para_hidden
    }

    pub fn attention_dim(&self) -> usize {
        self.attn_dim.unwrap_or_else(|| self.para_out())
    }

    /// Width of the vectors compared by the bilinear scorer.
    pub fn encoding_dim(&self) -> usize {
        match self.architecture {
            Architecture::Rde => self.word_hidden,
            Architecture::Cde => self.conv_widths.len() * self.conv_filters,
            Architecture::Ahde | Architecture::Hre => self.para_out(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("word_hidden", self.word_hidden),
            ("para_hidden", self.para_hidden),
            ("conv_filters", self.conv_filters),
            ("max_tokens", self.max_tokens),
            ("max_chunks", self.max_chunks),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.attn_dim == Some(0) {
            return Err(Error::Config("attn_dim must be positive".into()));
        }
        if self.vocab_size < 2 {
            return Err(Error::Config("vocabulary needs pad and unknown ids".into()));
        }
        if self.conv_widths.is_empty() || self.conv_widths.contains(&0) {
            return Err(Error::Config("conv_widths must be positive".into()));
        }
        for (name, r) in [
            ("dropout_rde_cde", self.dropout_rde_cde),
            ("dropout_ahde_word", self.dropout_ahde_word),
        ] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Config(format!("{name} must be in [0, 1)")));
            }
        }
        Ok(())
    }
}
