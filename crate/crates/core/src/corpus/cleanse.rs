use regex::Regex;

use super::raw::RawArticle;
use super::tokenize::tokenize_text;
use crate::error::{Error, Result};

/// Text filters applied before tokenization.
///
/// * `strip` patterns are deleted wherever they match, repeatedly, until the
///   text stops changing.
/// * `drop` patterns remove a paragraph when they match all of it.
/// * `ad_phrases` is an n-gram dictionary: a paragraph containing one of the
///   phrases as a contiguous token sequence is removed.
#[derive(Debug, Clone, Default)]
pub struct CleanseRules {
    pub strip: Vec<Regex>,
    pub drop: Vec<Regex>,
    pub ad_phrases: Vec<Vec<String>>,
}

impl CleanseRules {
    /// Parses a rule file: one `strip <regex>`, `drop <regex>` or
    /// `ad <phrase>` per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = CleanseRules::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (kind, rest) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| Error::Config(format!("cleanse rule line {}: missing argument", i + 1)))?;
            let rest = rest.trim();
            let bad = |e: regex::Error| Error::Config(format!("cleanse rule line {}: {e}", i + 1));
            match kind {
                "strip" => rules.strip.push(Regex::new(rest).map_err(bad)?),
                "drop" => rules.drop.push(Regex::new(&format!("^(?:{rest})$")).map_err(bad)?),
                "ad" => rules.ad_phrases.push(tokenize_text(rest)),
                other => {
                    return Err(Error::Config(format!(
                        "cleanse rule line {}: unknown kind `{other}`",
                        i + 1
                    )))
                }
            }
        }
        Ok(rules)
    }

    /// Bylines, e-mail addresses and a few stock advertising phrases.
    pub fn news_defaults() -> Self {
        CleanseRules::parse(
            "strip [\\w.+-]+@[\\w-]+\\.[\\w.]+\n\
             strip (?i)\\(\\s*reporter[^)]*\\)\n\
             drop (?i)by\\s+[a-z]+(\\s+[a-z]+)?\\s*\n\
             drop (?i)all rights reserved\\.?\n\
             ad click here to subscribe\n\
             ad sponsored content\n",
        )
        .expect("built-in rules parse")
    }

    pub fn is_empty(&self) -> bool {
        self.strip.is_empty() && self.drop.is_empty() && self.ad_phrases.is_empty()
    }

    fn clean_text(&self, text: &str) -> String {
        let mut cur = text.to_string();
        loop {
            let mut next = cur.clone();
            for re in &self.strip {
                next = re.replace_all(&next, "").into_owned();
            }
            next = next.split_whitespace().collect::<Vec<_>>().join(" ");
            if next == cur {
                return cur;
            }
            cur = next;
        }
    }

    fn has_ad_phrase(&self, text: &str) -> bool {
        if self.ad_phrases.is_empty() {
            return false;
        }
        let toks = tokenize_text(text);
        self.ad_phrases
            .iter()
            .any(|p| !p.is_empty() && toks.windows(p.len()).any(|w| w == p.as_slice()))
    }
}

/// Applies `rules` to the headline and every paragraph and drops emptied or
/// filtered paragraphs. An empty rule set returns the article unchanged.
pub fn cleanse(raw: &RawArticle, rules: &CleanseRules) -> Result<RawArticle> {
    if rules.is_empty() {
        raw.validate()?;
        return Ok(raw.clone());
    }
    let mut out = raw.clone();
    out.headline = rules.clean_text(&raw.headline);
    out.paragraphs = raw
        .paragraphs
        .iter()
        .map(|p| rules.clean_text(p))
        .filter(|p| !p.is_empty() && !rules.drop.iter().any(|re| re.is_match(p)) && !rules.has_ad_phrase(p))
        .collect();
    if out.headline.is_empty() {
        return Err(Error::Rejected(format!("{}: headline emptied by cleansing", raw.id)));
    }
    if out.paragraphs.is_empty() {
        return Err(Error::Rejected(format!(
            "{}: every paragraph removed by cleansing",
            raw.id
        )));
    }
    Ok(out)
}
