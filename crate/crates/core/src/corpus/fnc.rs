use std::collections::HashMap;
use std::io::Read;

use regex::Regex;
use serde::Serialize;

use super::implant::{LabeledInstance, Provenance};
use super::tokenize::Vocabulary;
use crate::error::{Error, Result};

/// A stance row mapped to the binary task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FncPair {
    pub id: String,
    pub headline: String,
    pub body_id: String,
    pub paragraphs: Vec<String>,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedRow {
    pub table: &'static str,
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct FncImport {
    pub pairs: Vec<FncPair>,
    pub rejected: Vec<RejectedRow>,
}

/// "unrelated" is incongruent; agree, disagree and discuss are not.
pub fn stance_label(stance: &str) -> Option<u8> {
    match stance.trim().to_ascii_lowercase().as_str() {
        "unrelated" => Some(1),
        "agree" | "disagree" | "discuss" => Some(0),
        _ => None,
    }
}

/// Splits on blank lines, trimming and dropping empty pieces.
pub fn split_paragraphs(body: &str) -> Vec<String> {
    let blank = Regex::new(r"\r?\n[ \t]*\r?\n").expect("static regex");
    blank
        .split(body)
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::to_string)
        .collect()
}

/// Reads the stance table (headline, body id, stance) and the body table
/// (body id, body text). Both have a header row. Rows that cannot be used
/// are collected with their line number instead of aborting the import.
pub fn import_fnc_style<S: Read, B: Read>(stances: S, bodies: B) -> Result<FncImport> {
    let mut out = FncImport::default();
    let mut body_map: HashMap<String, Vec<String>> = HashMap::new();
    let mut rb = csv::ReaderBuilder::new().flexible(true).from_reader(bodies);
    for rec in rb.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let (Some(id), Some(text)) = (rec.get(0), rec.get(1)) else {
            out.rejected.push(RejectedRow {
                table: "bodies",
                line,
                reason: "expected body id and body text".into(),
            });
            continue;
        };
        let paras = split_paragraphs(text);
        if id.trim().is_empty() || paras.is_empty() {
            out.rejected.push(RejectedRow {
                table: "bodies",
                line,
                reason: "empty body id or body text".into(),
            });
            continue;
        }
        body_map.insert(id.trim().to_string(), paras);
    }
    let mut rs = csv::ReaderBuilder::new().flexible(true).from_reader(stances);
    for rec in rs.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let reject = |reason: String| RejectedRow {
            table: "stances",
            line,
            reason,
        };
        let (Some(headline), Some(body_id), Some(stance)) = (rec.get(0), rec.get(1), rec.get(2)) else {
            out.rejected.push(reject("expected headline, body id, stance".into()));
            continue;
        };
        let body_id = body_id.trim();
        if headline.trim().is_empty() {
            out.rejected.push(reject("empty headline".into()));
            continue;
        }
        let Some(label) = stance_label(stance) else {
            out.rejected.push(reject(format!("unknown stance `{}`", stance.trim())));
            continue;
        };
        if body_id.is_empty() {
            out.rejected.push(reject("missing body id".into()));
            continue;
        }
        let Some(paragraphs) = body_map.get(body_id) else {
            out.rejected.push(reject(format!("body id `{body_id}` not found")));
            continue;
        };
        out.pairs.push(FncPair {
            id: format!("fnc-{line}"),
            headline: headline.trim().to_string(),
            body_id: body_id.to_string(),
            paragraphs: paragraphs.clone(),
            label,
        });
    }
    Ok(out)
}

impl FncPair {
    pub fn encode(&self, vocab: &Vocabulary) -> Result<LabeledInstance> {
        let headline_ids = vocab.encode(&self.headline);
        let chunks: Vec<Vec<u32>> = self
            .paragraphs
            .iter()
            .map(|p| vocab.encode(p))
            .filter(|c| !c.is_empty())
            .collect();
        if headline_ids.is_empty() || chunks.is_empty() {
            return Err(Error::Rejected(format!("{}: no tokens", self.id)));
        }
        Ok(LabeledInstance {
            id: self.id.clone(),
            headline_ids,
            chunks,
            label: self.label,
            provenance: Provenance {
                target_id: self.body_id.clone(),
                ..Provenance::default()
            },
        })
    }
}
