use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A news article as text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawArticle {
    pub id: String,
    pub headline: String,
    pub paragraphs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<String>,
    /// Generator label for synthetic articles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
}

impl RawArticle {
    pub fn new(id: impl Into<String>, headline: impl Into<String>, paragraphs: Vec<String>) -> Self {
        RawArticle {
            id: id.into(),
            headline: headline.into(),
            paragraphs,
            source: None,
            date: None,
            topic: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.headline.trim().is_empty() {
            return Err(Error::Rejected(format!("{}: empty headline", self.id)));
        }
        if self.paragraphs.iter().all(|p| p.trim().is_empty()) {
            return Err(Error::Rejected(format!("{}: no non-empty paragraph", self.id)));
        }
        Ok(())
    }
}

/// Reads one article per line; blank lines are skipped.
pub fn read_articles<R: BufRead>(reader: R) -> Result<Vec<RawArticle>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let a: RawArticle = serde_json::from_str(&line).map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
        out.push(a);
    }
    Ok(out)
}

pub fn write_articles<W: Write>(mut w: W, articles: &[RawArticle]) -> Result<()> {
    for a in articles {
        serde_json::to_writer(&mut w, a)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
