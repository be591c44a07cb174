use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::ModelConfig;
use super::document::Document;
use super::encoder::Encoder;
use crate::autograd::{finite_difference_check, GradCheckReport, Graph, ParamStore};
use crate::error::{Error, Result};

/// Inference batch size. Scores do not depend on it.
pub const SCORE_BATCH: usize = 64;

pub const PARAMS_FILE: &str = "params.incg";
pub const CONFIG_FILE: &str = "model.json";

/// Per-paragraph incongruence scores of one article under the
/// independent-paragraph method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParagraphScores {
    pub scores: Vec<f64>,
}

impl ParagraphScores {
    /// Maximum score; the article-level score.
    pub fn max(&self) -> f64 {
        self.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_paragraph_scores: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attention: Option<Vec<f64>>,
}

/// An encoder together with its parameter values.
#[derive(Debug, Clone)]
pub struct IncongruityModel {
    pub encoder: Encoder,
    pub params: ParamStore,
}

impl IncongruityModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let mut params = ParamStore::new();
        let encoder = Encoder::build(config, &mut params)?;
        Ok(IncongruityModel { encoder, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.encoder.config
    }

    /// Scores already-prepared documents in one graph.
    fn score_prepared(&self, docs: &[Document]) -> Result<(Vec<f64>, Option<Vec<Vec<f64>>>)> {
        let mut g = Graph::new(&self.params);
        let (p, att) = self.encoder.forward(&mut g, docs, None)?;
        let scores = g.value(p).data().to_vec();
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("article score".into()));
        }
        let att = att.map(|a| {
            let t = g.value(a);
            docs.iter()
                .enumerate()
                .map(|(r, d)| t.row_slice(r)[..d.chunks.len()].to_vec())
                .collect()
        });
        Ok((scores, att))
    }

    fn score_many_prepared(&self, docs: &[Document]) -> Result<Vec<(f64, Option<Vec<f64>>)>> {
        let batches: Vec<Result<Vec<(f64, Option<Vec<f64>>)>>> = docs
            .par_chunks(SCORE_BATCH)
            .map(|batch| {
                let (scores, att) = self.score_prepared(batch)?;
                Ok(match att {
                    Some(a) => scores.into_iter().zip(a.into_iter().map(Some)).collect(),
                    None => scores.into_iter().map(|s| (s, None)).collect(),
                })
            })
            .collect();
        let mut out = Vec::with_capacity(docs.len());
        for b in batches {
            out.extend(b?);
        }
        Ok(out)
    }

    /// Whole-article scores, ignoring `ip_mode`.
    pub fn score_documents(&self, docs: &[Document]) -> Result<Vec<f64>> {
        let prepared = docs
            .iter()
            .map(|d| d.prepare(self.config()))
            .collect::<Result<Vec<_>>>()?;
        Ok(self
            .score_many_prepared(&prepared)?
            .into_iter()
            .map(|(s, _)| s)
            .collect())
    }

    pub fn score_document(&self, doc: &Document) -> Result<f64> {
        Ok(self.score_documents(std::slice::from_ref(doc))?[0])
    }

    /// Headline-paragraph sub-documents used by the independent-paragraph
    /// method: the article is truncated, then every paragraph becomes a
    /// document whose chunks are its sentences.
    pub fn paragraph_documents(&self, doc: &Document) -> Result<Vec<Document>> {
        let cfg = self.config();
        let doc = doc.prepare(cfg)?;
        doc.paragraph_documents(&cfg.sentence_delims)
            .iter()
            .map(|d| d.prepare(cfg))
            .collect()
    }

    /// Independent-paragraph score: the maximum of the per-paragraph scores.
    pub fn ip_score(&self, doc: &Document) -> Result<(f64, ParagraphScores)> {
        let subs = self.paragraph_documents(doc)?;
        let scores: Vec<f64> = self.score_many_prepared(&subs)?.into_iter().map(|(s, _)| s).collect();
        let ps = ParagraphScores { scores };
        Ok((ps.max(), ps))
    }

    /// Scores honoring `ip_mode`, batching across articles.
    pub fn predict(&self, docs: &[Document]) -> Result<Vec<Prediction>> {
        if !self.config().ip_mode {
            let prepared = docs
                .iter()
                .map(|d| d.prepare(self.config()))
                .collect::<Result<Vec<_>>>()?;
            return Ok(self
                .score_many_prepared(&prepared)?
                .into_iter()
                .map(|(score, attention)| Prediction {
                    score,
                    per_paragraph_scores: None,
                    attention,
                })
                .collect());
        }
        let mut subs = Vec::new();
        let mut counts = Vec::with_capacity(docs.len());
        for d in docs {
            let s = self.paragraph_documents(d)?;
            counts.push(s.len());
            subs.extend(s);
        }
        let scored = self.score_many_prepared(&subs)?;
        let mut out = Vec::with_capacity(docs.len());
        let mut at = 0;
        for n in counts {
            let ps = ParagraphScores {
                scores: scored[at..at + n].iter().map(|(s, _)| *s).collect(),
            };
            at += n;
            out.push(Prediction {
                score: ps.max(),
                per_paragraph_scores: Some(ps.scores),
                attention: None,
            });
        }
        Ok(out)
    }

    /// Mean training loss over `docs` without dropout.
    pub fn mean_loss(&self, docs: &[Document], labels: &[u8]) -> Result<f64> {
        let prepared = docs
            .iter()
            .map(|d| d.prepare(self.config()))
            .collect::<Result<Vec<_>>>()?;
        let mut g = Graph::new(&self.params);
        let loss = self.encoder.loss(&mut g, &prepared, labels, None)?;
        Ok(g.value(loss).item())
    }

    /// Finite-difference check of the dropout-free loss on `docs`.
    pub fn gradcheck(&mut self, docs: &[Document], labels: &[u8], eps: f64) -> Result<GradCheckReport> {
        let encoder = self.encoder.clone();
        finite_difference_check(&mut self.params, |g| encoder.loss(g, docs, labels, None), eps)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(PARAMS_FILE), self.params.to_text())?;
        let cfg = serde_json::to_string_pretty(self.config())?;
        fs::write(dir.join(CONFIG_FILE), cfg + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let cfg: ModelConfig = serde_json::from_str(&fs::read_to_string(dir.join(CONFIG_FILE))?)?;
        let stored = ParamStore::from_text(&fs::read_to_string(dir.join(PARAMS_FILE))?)?;
        let mut model = IncongruityModel::new(cfg)?;
        if stored.len() != model.params.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} parameters, model expects {}",
                stored.len(),
                model.params.len()
            )));
        }
        model.params.load_values_from(&stored)?;
        Ok(model)
    }
}
