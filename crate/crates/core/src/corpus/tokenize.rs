use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

/// Lowercases and splits on whitespace; inside each piece, runs of
/// alphanumeric characters form tokens and every other character is a token
/// of its own.
pub fn tokenize_text(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for piece in text.split_whitespace() {
        let mut word = String::new();
        for ch in piece.chars() {
            if ch.is_alphanumeric() {
                word.extend(ch.to_lowercase());
            } else {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(ch.to_lowercase().collect());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

/// Token/id mapping. Id 0 is padding, id 1 the unknown token; kept tokens
/// follow by descending frequency, ties broken by the token text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    freqs: Vec<u64>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn build<'a, I>(texts: I, min_freq: u64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        if min_freq == 0 {
            return Err(Error::Config("min_freq must be at least 1".into()));
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        for t in texts {
            for tok in tokenize_text(t) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut kept: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_freq && t != PAD && t != UNK)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens = vec![PAD.to_string(), UNK.to_string()];
        let mut freqs = vec![0, 0];
        for (t, c) in kept {
            tokens.push(t);
            freqs.push(c);
        }
        Ok(Self::from_parts(tokens, freqs))
    }

    fn from_parts(tokens: Vec<String>, freqs: Vec<u64>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocabulary { tokens, freqs, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn freq(&self, id: u32) -> Option<u64> {
        self.freqs.get(id as usize).copied()
    }

    /// Tokenizes `text` and maps every token to its id.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        tokenize_text(text).iter().map(|t| self.id(t)).collect()
    }

    /// Ids of the given tokens that are in the vocabulary.
    pub fn ids_of(&self, tokens: &[&str]) -> Vec<u32> {
        tokens.iter().filter_map(|t| self.index.get(*t).copied()).collect()
    }

    /// `token<TAB>id<TAB>freq` per line, in id order.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        for (i, (t, f)) in self.tokens.iter().zip(&self.freqs).enumerate() {
            writeln!(w, "{t}\t{i}\t{f}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(r: R) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut freqs = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let bad = || Error::Format(format!("vocab line {}: expected token, id, freq", i + 1));
            let mut parts = line.split('\t');
            let (t, id, f) = (
                parts.next().ok_or_else(bad)?,
                parts.next().ok_or_else(bad)?,
                parts.next().ok_or_else(bad)?,
            );
            if id.parse::<usize>().map_err(|_| bad())? != i {
                return Err(Error::Format(format!("vocab line {}: ids must be contiguous", i + 1)));
            }
            tokens.push(t.to_string());
            freqs.push(f.parse().map_err(|_| bad())?);
        }
        if tokens.len() < 2 || tokens[0] != PAD || tokens[1] != UNK {
            return Err(Error::Format("vocab must start with <pad> and <unk>".into()));
        }
        Ok(Self::from_parts(tokens, freqs))
    }
}
