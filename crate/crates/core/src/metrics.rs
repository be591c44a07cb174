//! Evaluation metrics: accuracy, exact AUROC, precision among the top-N
//! scored articles, and per-group breakdowns.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Scores at or above this value predict incongruent.
pub const THRESHOLD: f64 = 0.5;

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::UndefinedMetric("no instances".into()));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::Contract(format!("score {i} is NaN")));
    }
    if let Some(i) = labels.iter().position(|&l| l > 1) {
        return Err(Error::Contract(format!("label {i} is not 0 or 1")));
    }
    Ok(())
}

pub fn accuracy_at(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    check_inputs(scores, labels)?;
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &l)| (s >= threshold) == (l == 1))
        .count();
    Ok(hits as f64 / scores.len() as f64)
}

pub fn accuracy(scores: &[f64], labels: &[u8]) -> Result<f64> {
    accuracy_at(scores, labels, THRESHOLD)
}

/// Twice the Mann-Whitney U statistic of the positives, with the number of
/// positives and negatives. Tied groups contribute half a win per pair.
pub fn mann_whitney_2u(scores: &[f64], labels: &[u8]) -> Result<(u128, u64, u64)> {
    check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut two_u: u128 = 0;
    let mut neg_below: u64 = 0;
    let (mut n_pos, mut n_neg) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut q) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                p += 1;
            } else {
                q += 1;
            }
            j += 1;
        }
        two_u += u128::from(p) * u128::from(2 * neg_below + q);
        neg_below += q;
        n_pos += p;
        n_neg += q;
        i = j;
    }
    Ok((two_u, n_pos, n_neg))
}

/// Probability that a random positive outscores a random negative, ties
/// counted as one half. O(n log n).
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (two_u, p, n) = mann_whitney_2u(scores, labels)?;
    if p == 0 || n == 0 {
        return Err(Error::UndefinedMetric("AUROC needs both classes".into()));
    }
    Ok(two_u as f64 / (2 * u128::from(p) * u128::from(n)) as f64)
}

/// Indices sorted by descending score; equal scores keep ascending `ids`.
pub fn rank_by_score<S: AsRef<str>>(scores: &[f64], ids: &[S]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| match scores[b].total_cmp(&scores[a]) {
        Ordering::Equal => ids[a].as_ref().cmp(ids[b].as_ref()),
        o => o,
    });
    order
}

/// `(N, precision)` for each requested `N`.
pub fn precision_at_top_n<S: AsRef<str>>(
    scores: &[f64],
    labels: &[u8],
    ids: &[S],
    ns: &[usize],
) -> Result<Vec<(usize, f64)>> {
    check_inputs(scores, labels)?;
    if ids.len() != scores.len() {
        return Err(Error::Contract("ids and scores differ in length".into()));
    }
    let order = rank_by_score(scores, ids);
    let mut cum = Vec::with_capacity(order.len() + 1);
    cum.push(0usize);
    for &i in &order {
        cum.push(cum.last().expect("non-empty") + usize::from(labels[i]));
    }
    ns.iter()
        .map(|&n| {
            if n == 0 || n > scores.len() {
                return Err(Error::Contract(format!("N = {n} outside 1..={}", scores.len())));
            }
            Ok((n, cum[n] as f64 / n as f64))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketRow {
    pub paragraphs: usize,
    pub accuracy: f64,
    pub support: usize,
}

/// Accuracy per body chunk count.
pub fn breakdown_by_paragraph_count(chunk_counts: &[usize], scores: &[f64], labels: &[u8]) -> Result<Vec<BucketRow>> {
    check_inputs(scores, labels)?;
    if chunk_counts.len() != scores.len() {
        return Err(Error::Contract("chunk counts and scores differ in length".into()));
    }
    let mut buckets: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for ((&c, &s), &l) in chunk_counts.iter().zip(scores).zip(labels) {
        let e = buckets.entry(c).or_default();
        e.0 += usize::from((s >= THRESHOLD) == (l == 1));
        e.1 += 1;
    }
    Ok(buckets
        .into_iter()
        .map(|(paragraphs, (hits, support))| BucketRow {
            paragraphs,
            accuracy: hits as f64 / support as f64,
            support,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeRow {
    pub test_type: u8,
    pub accuracy: f64,
    pub auroc: Option<f64>,
    pub support: usize,
}

/// Accuracy (and AUROC when both classes occur) per typed test set.
pub fn breakdown_by_type(sets: &[(u8, Vec<f64>, Vec<u8>)]) -> Result<Vec<TypeRow>> {
    sets.iter()
        .map(|(t, scores, labels)| {
            Ok(TypeRow {
                test_type: *t,
                accuracy: accuracy(scores, labels)?,
                auroc: auroc(scores, labels).ok(),
                support: scores.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub model: String,
    pub ip_mode: bool,
    pub n: usize,
    pub accuracy: f64,
    /// `None` when the set holds a single class.
    pub auroc: Option<f64>,
    pub precision_at_n: Vec<(usize, f64)>,
    pub by_paragraph_count: Vec<BucketRow>,
    pub by_type: Vec<TypeRow>,
}

impl EvalReport {
    /// Report over one scored test set. `top_n` values larger than the set
    /// are skipped.
    pub fn compute<S: AsRef<str>>(
        model: &str,
        ip_mode: bool,
        ids: &[S],
        chunk_counts: &[usize],
        scores: &[f64],
        labels: &[u8],
        top_n: &[usize],
    ) -> Result<Self> {
        let ns: Vec<usize> = top_n.iter().copied().filter(|&n| n >= 1 && n <= scores.len()).collect();
        Ok(EvalReport {
            model: model.to_string(),
            ip_mode,
            n: scores.len(),
            accuracy: accuracy(scores, labels)?,
            auroc: match auroc(scores, labels) {
                Ok(a) => Some(a),
                Err(Error::UndefinedMetric(_)) => None,
                Err(e) => return Err(e),
            },
            precision_at_n: precision_at_top_n(scores, labels, ids, &ns)?,
            by_paragraph_count: breakdown_by_paragraph_count(chunk_counts, scores, labels)?,
            by_type: Vec::new(),
        })
    }

    /// `report.json` plus one CSV per table.
    pub fn write(&self, dir: &Path) -> Result<Vec<String>> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)? + "\n")?;
        let mut p = Vec::new();
        writeln!(p, "n,precision")?;
        for (n, v) in &self.precision_at_n {
            writeln!(p, "{n},{v}")?;
        }
        fs::write(dir.join("precision_at_n.csv"), p)?;
        let mut b = Vec::new();
        writeln!(b, "paragraphs,accuracy,support")?;
        for r in &self.by_paragraph_count {
            writeln!(b, "{},{},{}", r.paragraphs, r.accuracy, r.support)?;
        }
        fs::write(dir.join("by_paragraph_count.csv"), b)?;
        let mut files = vec![
            "report.json".to_string(),
            "precision_at_n.csv".to_string(),
            "by_paragraph_count.csv".to_string(),
        ];
        if !self.by_type.is_empty() {
            let mut t = Vec::new();
            writeln!(t, "type,accuracy,auroc,support")?;
            for r in &self.by_type {
                let auc = r.auroc.map(|a| a.to_string()).unwrap_or_default();
                writeln!(t, "{},{},{auc},{}", r.test_type, r.accuracy, r.support)?;
            }
            fs::write(dir.join("by_type.csv"), t)?;
            files.push("by_type.csv".into());
        }
        Ok(files)
    }
}
