//! The four article scorers.
//!
//! Every scorer encodes the headline and the body with the same parameter
//! objects and compares the two encodings with a bilinear form. Forward
//! passes are batched: each row of every intermediate matrix belongs to one
//! article and is computed independently of the other rows, so a score does
//! not depend on which batch the article was scored in.

use super::config::{Architecture, ChunkPooling, ModelConfig};
use super::document::Document;
use crate::autograd::{Axis, Graph, ParamStore, Var};
use crate::error::{Error, Result};
use crate::nn::{
    attend_batch, bigru_batch, bilinear_score, conv_encode, dropout, embed, gru_batch, AttentionParams, BilinearScorer,
    ConvBank, EmbeddingTable, GruCell, PAD_ID,
};
use crate::rng::{rng_for, Rng};

#[derive(Debug, Clone)]
pub enum Layers {
    Rde {
        embedding: EmbeddingTable,
        gru: GruCell,
        scorer: BilinearScorer,
    },
    Cde {
        embedding: EmbeddingTable,
        bank: ConvBank,
        scorer: BilinearScorer,
    },
    Ahde {
        embedding: EmbeddingTable,
        word: GruCell,
        para_fwd: GruCell,
        para_bwd: GruCell,
        attention: AttentionParams,
        scorer: BilinearScorer,
    },
    Hre {
        embedding: EmbeddingTable,
        para_fwd: GruCell,
        para_bwd: GruCell,
        scorer: BilinearScorer,
    },
}

/// Headline and body vectors for a batch (`B x d` each).
#[derive(Debug, Clone, Copy)]
pub struct ArticleEncoding {
    pub u_h: Var,
    pub u_b: Var,
    /// `B x P` paragraph weights (AHDE only).
    pub attention: Option<Var>,
}

/// Model structure: configuration plus parameter handles. The values live in
/// a separate [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: ModelConfig,
    pub layers: Layers,
}

impl Encoder {
    /// Registers freshly initialized parameters in `store`.
    pub fn build(config: ModelConfig, store: &mut ParamStore) -> Result<Self> {
        config.validate()?;
        let rng = &mut rng_for(config.seed, "init");
        let c = &config;
        let embedding = EmbeddingTable::new(store, "embedding", c.vocab_size, c.embed_dim, rng)?;
        let layers = match c.architecture {
            Architecture::Rde => Layers::Rde {
                gru: GruCell::new(store, "gru", c.embed_dim, c.word_hidden, rng)?,
                scorer: BilinearScorer::new(store, "scorer", c.word_hidden, rng)?,
                embedding,
            },
            Architecture::Cde => Layers::Cde {
                bank: ConvBank::new(store, "conv", c.embed_dim, &c.conv_widths, c.conv_filters, rng)?,
                scorer: BilinearScorer::new(store, "scorer", c.encoding_dim(), rng)?,
                embedding,
            },
            Architecture::Ahde => Layers::Ahde {
                word: GruCell::new(store, "word_gru", c.embed_dim, c.word_hidden, rng)?,
                para_fwd: GruCell::new(store, "para_fwd", c.word_hidden, c.para_hidden, rng)?,
                para_bwd: GruCell::new(store, "para_bwd", c.word_hidden, c.para_hidden, rng)?,
                attention: AttentionParams::new(store, "attention", c.para_out(), c.attention_dim(), rng)?,
                scorer: BilinearScorer::new(store, "scorer", c.para_out(), rng)?,
                embedding,
            },
            Architecture::Hre => Layers::Hre {
                para_fwd: GruCell::new(store, "para_fwd", c.embed_dim, c.para_hidden, rng)?,
                para_bwd: GruCell::new(store, "para_bwd", c.embed_dim, c.para_hidden, rng)?,
                scorer: BilinearScorer::new(store, "scorer", c.para_out(), rng)?,
                embedding,
            },
        };
        Ok(Encoder { config, layers })
    }

    pub fn scorer(&self) -> &BilinearScorer {
        match &self.layers {
            Layers::Rde { scorer, .. }
            | Layers::Cde { scorer, .. }
            | Layers::Ahde { scorer, .. }
            | Layers::Hre { scorer, .. } => scorer,
        }
    }

    pub fn embedding(&self) -> &EmbeddingTable {
        match &self.layers {
            Layers::Rde { embedding, .. }
            | Layers::Cde { embedding, .. }
            | Layers::Ahde { embedding, .. }
            | Layers::Hre { embedding, .. } => embedding,
        }
    }

    /// Encodes prepared documents (see [`Document::prepare`]). Dropout is
    /// active only when `rng` is given.
    pub fn encode(&self, g: &mut Graph<'_>, docs: &[Document], mut rng: Option<&mut Rng>) -> Result<ArticleEncoding> {
        if docs.is_empty() {
            return Err(Error::EmptyInput("empty batch".into()));
        }
        for d in docs {
            if d.chunks.is_empty() {
                return Err(Error::EmptyInput("document without body chunks".into()));
            }
            if d.headline.is_empty() {
                return Err(Error::EmptyInput("document without headline".into()));
            }
        }
        let cfg = &self.config;
        match &self.layers {
            Layers::Rde { embedding, gru, .. } => {
                let heads: Vec<&[u32]> = docs.iter().map(|d| d.headline.as_slice()).collect();
                let bodies: Vec<Vec<u32>> = docs.iter().map(Document::flat_body).collect();
                let bodies: Vec<&[u32]> = bodies.iter().map(Vec::as_slice).collect();
                let u_h = run_word_gru(g, embedding, gru, &heads)?;
                let u_b = run_word_gru(g, embedding, gru, &bodies)?;
                let u_h = dropout(g, u_h, cfg.dropout_rde_cde, rng.as_deref_mut())?;
                let u_b = dropout(g, u_b, cfg.dropout_rde_cde, rng.as_deref_mut())?;
                Ok(ArticleEncoding {
                    u_h,
                    u_b,
                    attention: None,
                })
            }
            Layers::Cde { embedding, bank, .. } => {
                let mut heads = Vec::with_capacity(docs.len());
                let mut bodies = Vec::with_capacity(docs.len());
                for d in docs {
                    let h = embed(g, embedding, &d.headline)?;
                    heads.push(conv_encode(g, bank, h)?);
                    let b = embed(g, embedding, &d.flat_body())?;
                    bodies.push(conv_encode(g, bank, b)?);
                }
                let u_h = g.concat_rows(&heads)?;
                let u_b = g.concat_rows(&bodies)?;
                let u_h = dropout(g, u_h, cfg.dropout_rde_cde, rng.as_deref_mut())?;
                let u_b = dropout(g, u_b, cfg.dropout_rde_cde, rng.as_deref_mut())?;
                Ok(ArticleEncoding {
                    u_h,
                    u_b,
                    attention: None,
                })
            }
            Layers::Ahde {
                embedding,
                word,
                para_fwd,
                para_bwd,
                attention,
                ..
            } => {
                // rows: all headlines, then every body chunk in document order
                let mut seqs: Vec<&[u32]> = docs.iter().map(|d| d.headline.as_slice()).collect();
                for d in docs {
                    seqs.extend(d.chunks.iter().map(Vec::as_slice));
                }
                let chunk_vecs = run_word_gru(g, embedding, word, &seqs)?;
                let chunk_vecs = dropout(g, chunk_vecs, cfg.dropout_ahde_word, rng.as_deref_mut())?;
                let (body_states, u_h, _, mask) = paragraph_level(g, para_fwd, para_bwd, docs, chunk_vecs)?;
                let (u_b, weights) = attend_batch(g, attention, &body_states, u_h, &mask)?;
                Ok(ArticleEncoding {
                    u_h,
                    u_b,
                    attention: Some(weights),
                })
            }
            Layers::Hre {
                embedding,
                para_fwd,
                para_bwd,
                ..
            } => {
                let mut pooled = Vec::new();
                let all = docs
                    .iter()
                    .map(|d| &d.headline)
                    .chain(docs.iter().flat_map(|d| d.chunks.iter()));
                for seq in all {
                    let real: Vec<u32> = seq.iter().copied().filter(|&t| t != PAD_ID).collect();
                    if real.is_empty() {
                        return Err(Error::EmptyInput("chunk of only pad tokens".into()));
                    }
                    let e = embed(g, embedding, &real)?;
                    pooled.push(match cfg.hre_pooling {
                        ChunkPooling::Mean => g.mean_axis(e, Axis::Rows)?,
                        ChunkPooling::Sum => g.sum_axis(e, Axis::Rows)?,
                    });
                }
                let chunk_vecs = g.concat_rows(&pooled)?;
                let chunk_vecs = dropout(g, chunk_vecs, cfg.dropout_ahde_word, rng.as_deref_mut())?;
                let (_, u_h, u_b, _) = paragraph_level(g, para_fwd, para_bwd, docs, chunk_vecs)?;
                Ok(ArticleEncoding {
                    u_h,
                    u_b,
                    attention: None,
                })
            }
        }
    }

    /// Incongruence probabilities, `B x 1`.
    pub fn forward(&self, g: &mut Graph<'_>, docs: &[Document], rng: Option<&mut Rng>) -> Result<(Var, Option<Var>)> {
        let enc = self.encode(g, docs, rng)?;
        let p = bilinear_score(g, self.scorer(), enc.u_h, enc.u_b)?;
        Ok((p, enc.attention))
    }

    /// Mean binary cross-entropy of the batch.
    pub fn loss(&self, g: &mut Graph<'_>, docs: &[Document], labels: &[u8], rng: Option<&mut Rng>) -> Result<Var> {
        let (p, _) = self.forward(g, docs, rng)?;
        nll_loss(g, p, labels)
    }
}

/// Mean binary cross-entropy of probabilities against 0/1 labels.
pub fn nll_loss(g: &mut Graph<'_>, predictions: Var, labels: &[u8]) -> Result<Var> {
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    g.bce_mean(predictions, &y)
}

/// Word-level GRU over token rows padded to a common length. Returns the
/// last valid state of each row, `rows x hidden`.
fn run_word_gru(g: &mut Graph<'_>, embedding: &EmbeddingTable, cell: &GruCell, seqs: &[&[u32]]) -> Result<Var> {
    let steps = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
    let mut inputs = Vec::with_capacity(steps);
    let mut mask = Vec::with_capacity(steps);
    for t in 0..steps {
        let ids: Vec<u32> = seqs.iter().map(|s| s.get(t).copied().unwrap_or(PAD_ID)).collect();
        mask.push(ids.iter().map(|&i| i != PAD_ID).collect::<Vec<_>>());
        inputs.push(embed(g, embedding, &ids)?);
    }
    Ok(gru_batch(g, cell, &inputs, &mask, false)?.last)
}

type ParagraphLevel = (Vec<Var>, Var, Var, Vec<Vec<bool>>);

/// Paragraph-level BiGRU. `chunk_vecs` holds one row per headline (first `B`
/// rows) followed by one row per body chunk. Headlines run as one-chunk
/// documents in the same batch. Returns per-position body states
/// (`B x 2h` each), the headline vectors, the final body states, and the
/// `B x P` paragraph mask.
fn paragraph_level(
    g: &mut Graph<'_>,
    fwd: &GruCell,
    bwd: &GruCell,
    docs: &[Document],
    chunk_vecs: Var,
) -> Result<ParagraphLevel> {
    let b = docs.len();
    let max_p = docs.iter().map(|d| d.chunks.len()).max().unwrap_or(0);
    let mut offsets = Vec::with_capacity(b);
    let mut next = b;
    for d in docs {
        offsets.push(next);
        next += d.chunks.len();
    }
    let mut inputs = Vec::with_capacity(max_p);
    let mut mask = Vec::with_capacity(max_p);
    for p in 0..max_p {
        let mut idx = Vec::with_capacity(2 * b);
        let mut m = Vec::with_capacity(2 * b);
        for (d, &off) in docs.iter().zip(&offsets) {
            let real = p < d.chunks.len();
            idx.push(real.then_some(off + p));
            m.push(real);
        }
        for r in 0..b {
            idx.push((p == 0).then_some(r));
            m.push(p == 0);
        }
        inputs.push(g.gather_rows(chunk_vecs, &idx)?);
        mask.push(m);
    }
    let out = bigru_batch(g, fwd, bwd, &inputs, &mask)?;
    let body_states = out
        .states
        .iter()
        .map(|&s| g.slice_rows(s, 0, b))
        .collect::<Result<Vec<_>>>()?;
    let u_h = g.slice_rows(out.last, b, b)?;
    let u_b = g.slice_rows(out.last, 0, b)?;
    let para_mask = docs
        .iter()
        .map(|d| (0..max_p).map(|p| p < d.chunks.len()).collect())
        .collect();
    Ok((body_states, u_h, u_b, para_mask))
}
