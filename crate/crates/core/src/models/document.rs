use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::PAD_ID;

/// Integerized article: headline ids and ordered body chunks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub headline: Vec<u32>,
    pub chunks: Vec<Vec<u32>>,
}

impl Document {
    pub fn new(headline: Vec<u32>, chunks: Vec<Vec<u32>>) -> Self {
        Document { headline, chunks }
    }

    /// Truncates the headline and every chunk to `max_tokens`, drops chunks
    /// with no real tokens, and keeps the first `max_chunks`. Idempotent.
    pub fn truncated(&self, max_tokens: usize, max_chunks: usize) -> Document {
        let headline = self.headline.iter().copied().take(max_tokens).collect();
        let mut chunks = Vec::new();
        for (i, c) in self.chunks.iter().enumerate() {
            let c: Vec<u32> = c.iter().copied().take(max_tokens).collect();
            if c.iter().all(|&t| t == PAD_ID) {
                log::warn!("skipping chunk {i}: no non-pad tokens");
                continue;
            }
            if chunks.len() == max_chunks {
                break;
            }
            chunks.push(c);
        }
        Document { headline, chunks }
    }

    /// Truncated copy that is guaranteed scorable.
    pub fn prepare(&self, config: &ModelConfig) -> Result<Document> {
        let doc = self.truncated(config.max_tokens, config.max_chunks);
        if doc.headline.iter().all(|&t| t == PAD_ID) {
            return Err(Error::EmptyInput("headline has no tokens".into()));
        }
        if doc.chunks.is_empty() {
            return Err(Error::EmptyInput("body has no tokens".into()));
        }
        Ok(doc)
    }

    /// Body chunks concatenated into one token sequence.
    pub fn flat_body(&self) -> Vec<u32> {
        self.chunks.concat()
    }

    /// One sub-document per body chunk, each chunk split into sentences.
    pub fn paragraph_documents(&self, delims: &[u32]) -> Vec<Document> {
        self.chunks
            .iter()
            .map(|c| Document {
                headline: self.headline.clone(),
                chunks: split_sentences(c, delims),
            })
            .collect()
    }
}

/// Splits after every delimiter token. A trailing run without a delimiter
/// forms the final sentence; empty pieces are dropped.
pub fn split_sentences(tokens: &[u32], delims: &[u32]) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for &t in tokens {
        cur.push(t);
        if delims.contains(&t) {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Mean sequential steps an encoder performs per article.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepAccounting {
    /// Steps of a flat recurrent encoder over the whole body.
    pub flat_steps: f64,
    /// Word-level steps per chunk.
    pub word_steps_per_chunk: f64,
    /// Chunk-level steps per article.
    pub chunks_per_article: f64,
}

pub fn step_accounting(docs: &[Document]) -> StepAccounting {
    let n_docs = docs.len().max(1) as f64;
    let total_tokens: usize = docs.iter().map(|d| d.chunks.iter().map(Vec::len).sum::<usize>()).sum();
    let total_chunks: usize = docs.iter().map(|d| d.chunks.len()).sum();
    StepAccounting {
        flat_steps: total_tokens as f64 / n_docs,
        word_steps_per_chunk: total_tokens as f64 / total_chunks.max(1) as f64,
        chunks_per_article: total_chunks as f64 / n_docs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sentences_split_on_delims() {
        let s = split_sentences(&[5, 6, 2, 7, 3, 8], &[2, 3]);
        assert_eq!(s, vec![vec![5, 6, 2], vec![7, 3], vec![8]]);
        assert!(split_sentences(&[], &[2]).is_empty());
    }

    #[test]
    fn step_accounting_averages() {
        let docs = vec![
            Document::new(vec![1], vec![vec![2; 4], vec![3; 6]]),
            Document::new(vec![1], vec![vec![2; 5]]),
        ];
        let s = step_accounting(&docs);
        assert_eq!(s.flat_steps, 7.5);
        assert_eq!(s.word_steps_per_chunk, 5.0);
        assert_eq!(s.chunks_per_article, 1.5);
    }

    #[test]
    fn prepare_rejects_empty() {
        let cfg = ModelConfig::new(super::super::Architecture::Rde, 10);
        assert!(Document::new(vec![], vec![vec![3]]).prepare(&cfg).is_err());
        assert!(Document::new(vec![3], vec![vec![0, 0]]).prepare(&cfg).is_err());
    }

    proptest! {
        #[test]
        fn truncation_is_idempotent(
            head in proptest::collection::vec(0u32..5, 0..12),
            chunks in proptest::collection::vec(proptest::collection::vec(0u32..5, 0..12), 0..8),
            max_tokens in 1usize..6,
            max_chunks in 1usize..5,
        ) {
            let d = Document::new(head, chunks);
            let once = d.truncated(max_tokens, max_chunks);
            prop_assert_eq!(once.truncated(max_tokens, max_chunks), once.clone());
            prop_assert!(once.chunks.len() <= max_chunks);
        }
    }
}
