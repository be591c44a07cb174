use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::raw::RawArticle;
use super::tokenize::Vocabulary;
use crate::error::{Error, Result};
use crate::models::Document;

/// An article mapped to token ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedArticle {
    pub id: String,
    pub headline: Vec<u32>,
    pub paragraphs: Vec<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
}

impl EncodedArticle {
    /// Empty paragraphs are dropped.
    pub fn encode(raw: &RawArticle, vocab: &Vocabulary) -> Result<Self> {
        let headline = vocab.encode(&raw.headline);
        let paragraphs: Vec<Vec<u32>> = raw
            .paragraphs
            .iter()
            .map(|p| vocab.encode(p))
            .filter(|p| !p.is_empty())
            .collect();
        if headline.is_empty() || paragraphs.is_empty() {
            return Err(Error::Rejected(format!("{}: no tokens after tokenization", raw.id)));
        }
        Ok(EncodedArticle {
            id: raw.id.clone(),
            headline,
            paragraphs,
            topic: raw.topic.clone(),
        })
    }

    pub fn token_count(&self) -> usize {
        self.paragraphs.iter().map(Vec::len).sum()
    }
}

/// Where an instance came from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub target_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub donor_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<u8>,
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    pub test_type: Option<u8>,
    /// Donor paragraph indices, in the order they appear in the body.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub donor_paragraphs: Vec<usize>,
    /// Ascending body positions of the implanted chunks.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub insertion_positions: Vec<usize>,
    /// Paragraph index within the source article (paragraph dataset).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paragraph_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub id: String,
    pub headline_ids: Vec<u32>,
    pub chunks: Vec<Vec<u32>>,
    /// 1 = incongruent.
    pub label: u8,
    pub provenance: Provenance,
}

impl LabeledInstance {
    pub fn congruent(article: &EncodedArticle) -> Self {
        LabeledInstance {
            id: article.id.clone(),
            headline_ids: article.headline.clone(),
            chunks: article.paragraphs.clone(),
            label: 0,
            provenance: Provenance {
                target_id: article.id.clone(),
                ..Provenance::default()
            },
        }
    }

    pub fn document(&self) -> Document {
        Document::new(self.headline_ids.clone(), self.chunks.clone())
    }

    /// Share of body tokens that were implanted.
    pub fn implanted_fraction(&self) -> f64 {
        let total: usize = self.chunks.iter().map(Vec::len).sum();
        let implanted: usize = self
            .provenance
            .insertion_positions
            .iter()
            .map(|&p| self.chunks[p].len())
            .sum();
        implanted as f64 / total.max(1) as f64
    }

    /// The target body with the implanted chunks removed.
    pub fn original_body(&self) -> Vec<Vec<u32>> {
        self.chunks
            .iter()
            .enumerate()
            .filter(|(i, _)| self.provenance.insertion_positions.binary_search(i).is_err())
            .map(|(_, c)| c.clone())
            .collect()
    }

    /// The id of the article each chunk was taken from.
    pub fn chunk_sources(&self) -> Vec<&str> {
        let donor = self.provenance.donor_id.as_deref();
        (0..self.chunks.len())
            .map(|i| match donor {
                Some(d) if self.provenance.insertion_positions.binary_search(&i).is_ok() => d,
                _ => self.provenance.target_id.as_str(),
            })
            .collect()
    }
}

fn check_pair(target: &EncodedArticle, donor: &EncodedArticle) -> Result<()> {
    if target.id == donor.id {
        return Err(Error::InfeasibleImplant(format!("donor equals target {}", target.id)));
    }
    Ok(())
}

/// Implanted tokens must stay below half the resulting body, i.e. below the
/// target's own token count.
fn fits(target_tokens: usize, implanted: usize) -> bool {
    implanted < target_tokens
}

/// Values of `n` for which rule 1 has a feasible block.
pub fn feasible_rule1(target: &EncodedArticle, donor: &EncodedArticle) -> Vec<usize> {
    let t = target.token_count();
    let lens: Vec<usize> = donor.paragraphs.iter().map(Vec::len).collect();
    (1..=lens.len())
        .filter(|&n| lens.windows(n).any(|w| fits(t, w.iter().sum())))
        .collect()
}

/// Values of `n >= 2` for which rule 2 has a feasible paragraph set.
pub fn feasible_rule2(target: &EncodedArticle, donor: &EncodedArticle) -> Vec<usize> {
    let t = target.token_count();
    let mut lens: Vec<usize> = donor.paragraphs.iter().map(Vec::len).collect();
    lens.sort_unstable();
    (2..=lens.len()).filter(|&n| fits(t, lens[..n].iter().sum())).collect()
}

/// Inserts `n_placeholders` slots one at a time, each at a uniform boundary
/// of the current body (ends included). Returns the final slot positions,
/// ascending.
fn insertion_slots<R: Rng + ?Sized>(body_len: usize, n: usize, rng: &mut R) -> Vec<usize> {
    // true marks an inserted slot
    let mut layout = vec![false; body_len];
    for _ in 0..n {
        let at = rng.random_range(0..=layout.len());
        layout.insert(at, true);
    }
    layout.iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| i).collect()
}

fn assemble(target: &EncodedArticle, slots: &[usize], implants: Vec<Vec<u32>>) -> Vec<Vec<u32>> {
    let total = target.paragraphs.len() + implants.len();
    let mut own = target.paragraphs.iter();
    let mut ins = implants.into_iter();
    (0..total)
        .map(|i| {
            if slots.binary_search(&i).is_ok() {
                ins.next().expect("slot count matches implants")
            } else {
                own.next().expect("body count matches").clone()
            }
        })
        .collect()
}

/// Rule 1: a block of `n` consecutive donor paragraphs inserted at one
/// uniformly chosen paragraph boundary of the target.
pub fn implant_rule1<R: Rng + ?Sized>(
    target: &EncodedArticle,
    donor: &EncodedArticle,
    n: usize,
    rng: &mut R,
) -> Result<LabeledInstance> {
    check_pair(target, donor)?;
    if n == 0 || n > donor.paragraphs.len() {
        return Err(Error::InfeasibleImplant(format!(
            "rule 1 needs 1..={} paragraphs, asked for {n}",
            donor.paragraphs.len()
        )));
    }
    let t = target.token_count();
    let starts: Vec<usize> = (0..=donor.paragraphs.len() - n)
        .filter(|&s| fits(t, donor.paragraphs[s..s + n].iter().map(Vec::len).sum()))
        .collect();
    let &start = starts.choose(rng).ok_or_else(|| {
        Error::InfeasibleImplant(format!("no {n}-paragraph block of {} fits {}", donor.id, target.id))
    })?;
    let at = rng.random_range(0..=target.paragraphs.len());
    let slots: Vec<usize> = (at..at + n).collect();
    let implants = donor.paragraphs[start..start + n].to_vec();
    Ok(LabeledInstance {
        id: target.id.clone(),
        headline_ids: target.headline.clone(),
        chunks: assemble(target, &slots, implants),
        label: 1,
        provenance: Provenance {
            target_id: target.id.clone(),
            donor_id: Some(donor.id.clone()),
            rule: Some(1),
            donor_paragraphs: (start..start + n).collect(),
            insertion_positions: slots,
            ..Provenance::default()
        },
    })
}

/// Rule 2: `n` donor paragraphs sampled individually and inserted at
/// independent boundaries. `keep_order` keeps their donor order in the body;
/// otherwise the order is shuffled.
pub fn implant_rule2<R: Rng + ?Sized>(
    target: &EncodedArticle,
    donor: &EncodedArticle,
    n: usize,
    keep_order: bool,
    rng: &mut R,
) -> Result<LabeledInstance> {
    check_pair(target, donor)?;
    if n < 2 || n > donor.paragraphs.len() {
        return Err(Error::InfeasibleImplant(format!(
            "rule 2 needs 2..={} paragraphs, asked for {n}",
            donor.paragraphs.len()
        )));
    }
    let t = target.token_count();
    let lens: Vec<usize> = donor.paragraphs.iter().map(Vec::len).collect();
    let mut by_len: Vec<usize> = (0..lens.len()).collect();
    by_len.sort_by_key(|&i| (lens[i], i));
    if !fits(t, by_len[..n].iter().map(|&i| lens[i]).sum()) {
        return Err(Error::InfeasibleImplant(format!(
            "no {n} paragraphs of {} fit {}",
            donor.id, target.id
        )));
    }
    let mut picked = None;
    for _ in 0..1000 {
        let cand = rand::seq::index::sample(rng, lens.len(), n).into_vec();
        if fits(t, cand.iter().map(|&i| lens[i]).sum()) {
            picked = Some(cand);
            break;
        }
    }
    let mut picked = picked.unwrap_or_else(|| by_len[..n].to_vec());
    picked.sort_unstable();
    if !keep_order {
        picked.shuffle(rng);
    }
    let slots = insertion_slots(target.paragraphs.len(), n, rng);
    let implants = picked.iter().map(|&i| donor.paragraphs[i].clone()).collect();
    Ok(LabeledInstance {
        id: target.id.clone(),
        headline_ids: target.headline.clone(),
        chunks: assemble(target, &slots, implants),
        label: 1,
        provenance: Provenance {
            target_id: target.id.clone(),
            donor_id: Some(donor.id.clone()),
            rule: Some(2),
            donor_paragraphs: picked,
            insertion_positions: slots,
            ..Provenance::default()
        },
    })
}
