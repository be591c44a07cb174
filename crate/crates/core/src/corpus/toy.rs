use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::raw::RawArticle;
use crate::error::{Error, Result};
use crate::rng::rng_for;

/// Synthetic corpus settings. Every topic owns a disjoint set of letter-only
/// pseudo-words; each article also draws a few keywords from its topic that
/// recur in the headline and the body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyCorpusConfig {
    pub topics: usize,
    pub articles_per_topic: usize,
    pub vocab_per_topic: usize,
    pub min_paragraphs: usize,
    pub max_paragraphs: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub headline_words: usize,
    pub keywords: usize,
    /// Chance that a body word is one of the article keywords.
    pub keyword_rate: f64,
    pub seed: u64,
}

impl Default for ToyCorpusConfig {
    fn default() -> Self {
        ToyCorpusConfig {
            topics: 2,
            articles_per_topic: 500,
            vocab_per_topic: 50,
            min_paragraphs: 3,
            max_paragraphs: 12,
            min_sentences: 1,
            max_sentences: 3,
            min_words: 5,
            max_words: 10,
            headline_words: 12,
            keywords: 3,
            keyword_rate: 0.2,
            seed: 0,
        }
    }
}

impl ToyCorpusConfig {
    pub fn new(topics: usize, articles_per_topic: usize, vocab_per_topic: usize, seed: u64) -> Self {
        ToyCorpusConfig {
            topics,
            articles_per_topic,
            vocab_per_topic,
            seed,
            ..ToyCorpusConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let ranges = [
            ("paragraphs", self.min_paragraphs, self.max_paragraphs),
            ("sentences", self.min_sentences, self.max_sentences),
            ("words", self.min_words, self.max_words),
        ];
        for (name, lo, hi) in ranges {
            if lo == 0 || lo > hi {
                return Err(Error::Config(format!("toy corpus {name} range {lo}..={hi} is invalid")));
            }
        }
        if self.topics == 0 || self.articles_per_topic == 0 || self.headline_words == 0 {
            return Err(Error::Config("toy corpus sizes must be positive".into()));
        }
        if self.vocab_per_topic < self.keywords.max(2) {
            return Err(Error::Config(
                "vocab_per_topic is smaller than the keyword count".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.keyword_rate) {
            return Err(Error::Config("keyword_rate must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Disjoint per-topic word lists.
pub fn toy_vocabularies(cfg: &ToyCorpusConfig) -> Vec<Vec<String>> {
    let mut rng = rng_for(cfg.seed, "toy/words");
    let mut used = HashSet::new();
    (0..cfg.topics)
        .map(|_| {
            let mut words = Vec::with_capacity(cfg.vocab_per_topic);
            while words.len() < cfg.vocab_per_topic {
                let len = rng.random_range(3..=8);
                let w: String = (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect();
                if used.insert(w.clone()) {
                    words.push(w);
                }
            }
            words
        })
        .collect()
}

pub fn topic_name(k: usize) -> String {
    format!("topic{k}")
}

/// Generates `topics * articles_per_topic` articles with unique headlines.
pub fn gen_toy_corpus(cfg: &ToyCorpusConfig) -> Result<Vec<RawArticle>> {
    cfg.validate()?;
    let vocabs = toy_vocabularies(cfg);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(cfg.topics * cfg.articles_per_topic);
    for (k, words) in vocabs.iter().enumerate() {
        for i in 0..cfg.articles_per_topic {
            let id = format!("t{k}-{i:05}");
            let mut rng = rng_for(cfg.seed, &format!("toy/{id}"));
            let mut attempts = 0;
            let (headline, keywords) = loop {
                let keywords: Vec<&String> = words.choose_multiple(&mut rng, cfg.keywords).collect();
                let mut head: Vec<&String> = keywords.clone();
                while head.len() < cfg.headline_words.max(cfg.keywords) {
                    head.push(words.choose(&mut rng).expect("non-empty vocabulary"));
                }
                let mut text = head.iter().map(|w| w.as_str()).collect::<Vec<_>>().join(" ");
                if let Some(first) = text.get(0..1) {
                    text.replace_range(0..1, &first.to_uppercase());
                }
                if seen.insert(text.clone()) {
                    break (text, keywords);
                }
                attempts += 1;
                if attempts > 1000 {
                    return Err(Error::Config("toy corpus cannot produce unique headlines".into()));
                }
            };
            let n_paras = rng.random_range(cfg.min_paragraphs..=cfg.max_paragraphs);
            let paragraphs = (0..n_paras)
                .map(|_| {
                    let n_sent = rng.random_range(cfg.min_sentences..=cfg.max_sentences);
                    (0..n_sent)
                        .map(|_| {
                            let n_words = rng.random_range(cfg.min_words..=cfg.max_words);
                            let ws: Vec<&str> = (0..n_words)
                                .map(|_| {
                                    if !keywords.is_empty() && rng.random_bool(cfg.keyword_rate) {
                                        keywords.choose(&mut rng).expect("keywords").as_str()
                                    } else {
                                        words.choose(&mut rng).expect("words").as_str()
                                    }
                                })
                                .collect();
                            format!("{}.", ws.join(" "))
                        })
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect();
            let mut a = RawArticle::new(id, headline, paragraphs);
            a.topic = Some(topic_name(k));
            out.push(a);
        }
    }
    Ok(out)
}
