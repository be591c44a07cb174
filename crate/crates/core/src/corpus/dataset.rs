use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cleanse::{cleanse, CleanseRules};
use super::implant::{
    feasible_rule1, feasible_rule2, implant_rule1, implant_rule2, EncodedArticle, LabeledInstance, Provenance,
};
use super::raw::RawArticle;
use super::tokenize::Vocabulary;
use crate::error::{Error, Result};
use crate::models::split_sentences;
use crate::rng::{rng_for, Rng as ChaRng};

/// How implant donors are drawn from the split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DonorMode {
    Uniform,
    SameTopic,
    CrossTopic,
}

impl std::str::FromStr for DonorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(DonorMode::Uniform),
            "same_topic" => Ok(DonorMode::SameTopic),
            "cross_topic" => Ok(DonorMode::CrossTopic),
            other => Err(Error::Config(format!("unknown donor mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub train_fraction: f64,
    pub dev_fraction: f64,
    /// Share of incongruent instances per split.
    pub incongruent_ratio: f64,
    /// Chance of applying rule 2 (when feasible) instead of rule 1.
    pub rule2_fraction: f64,
    pub donor_mode: DonorMode,
    /// Donors tried per target before giving up.
    pub donor_attempts: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            train_fraction: 0.8,
            dev_fraction: 0.1,
            incongruent_ratio: 0.5,
            rule2_fraction: 0.5,
            donor_mode: DonorMode::Uniform,
            donor_attempts: 50,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("train_fraction", self.train_fraction),
            ("dev_fraction", self.dev_fraction),
            ("incongruent_ratio", self.incongruent_ratio),
            ("rule2_fraction", self.rule2_fraction),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1]")));
            }
        }
        if self.train_fraction + self.dev_fraction > 1.0 + 1e-12 {
            return Err(Error::Config("train_fraction + dev_fraction exceeds 1".into()));
        }
        if self.donor_attempts == 0 {
            return Err(Error::Config("donor_attempts must be positive".into()));
        }
        Ok(())
    }
}

pub const SPLIT_NAMES: [&str; 3] = ["train", "dev", "test"];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<LabeledInstance>,
    pub dev: Vec<LabeledInstance>,
    pub test: Vec<LabeledInstance>,
}

impl Splits {
    pub fn named(&self) -> [(&'static str, &Vec<LabeledInstance>); 3] {
        [("train", &self.train), ("dev", &self.dev), ("test", &self.test)]
    }

    fn from_array([train, dev, test]: [Vec<LabeledInstance>; 3]) -> Self {
        Splits { train, dev, test }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.dev.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Deterministic article-level partition into train/dev/test.
pub fn split_articles<'a>(articles: &'a [EncodedArticle], cfg: &DatasetConfig) -> Result<[Vec<&'a EncodedArticle>; 3]> {
    cfg.validate()?;
    let mut sorted: Vec<&EncodedArticle> = articles.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = sorted.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::Contract(format!("duplicate article id {}", w[0].id)));
    }
    sorted.shuffle(&mut rng_for(cfg.seed, "split"));
    let n = sorted.len() as f64;
    let n_train = (n * cfg.train_fraction).round() as usize;
    let n_dev = ((n * cfg.dev_fraction).round() as usize).min(sorted.len() - n_train.min(sorted.len()));
    let test = sorted.split_off((n_train + n_dev).min(sorted.len()));
    let dev = sorted.split_off(n_train.min(sorted.len()));
    Ok([sorted, dev, test])
}

/// Which implantation an incongruent instance receives.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Plan {
    Whole { rule2_fraction: f64 },
    Type(u8),
}

fn donor_ok(mode: DonorMode, target: &EncodedArticle, donor: &EncodedArticle) -> bool {
    donor.id != target.id
        && match mode {
            DonorMode::Uniform => true,
            DonorMode::SameTopic => donor.topic == target.topic,
            DonorMode::CrossTopic => donor.topic != target.topic,
        }
}

fn pick_donor<'a>(
    target: &EncodedArticle,
    pool: &[&'a EncodedArticle],
    mode: DonorMode,
    rng: &mut ChaRng,
) -> Option<&'a EncodedArticle> {
    for _ in 0..64 {
        let d = *pool.choose(rng)?;
        if donor_ok(mode, target, d) {
            return Some(d);
        }
    }
    let valid: Vec<&EncodedArticle> = pool.iter().copied().filter(|d| donor_ok(mode, target, d)).collect();
    valid.choose(rng).copied()
}

fn try_plan(
    target: &EncodedArticle,
    donor: &EncodedArticle,
    plan: Plan,
    rng: &mut ChaRng,
) -> Option<Result<LabeledInstance>> {
    let r1 = feasible_rule1(target, donor);
    let r2 = feasible_rule2(target, donor);
    match plan {
        Plan::Whole { rule2_fraction } => {
            if !r2.is_empty() && rng.random_bool(rule2_fraction) {
                let n = *r2.choose(rng)?;
                Some(implant_rule2(target, donor, n, false, rng))
            } else if !r1.is_empty() {
                let n = *r1.choose(rng)?;
                Some(implant_rule1(target, donor, n, rng))
            } else {
                None
            }
        }
        Plan::Type(1) => r1.contains(&1).then(|| implant_rule1(target, donor, 1, rng)),
        Plan::Type(2) => {
            let many: Vec<usize> = r1.into_iter().filter(|&n| n > 1).collect();
            let n = *many.choose(rng)?;
            Some(implant_rule1(target, donor, n, rng))
        }
        Plan::Type(t) => {
            let n = *r2.choose(rng)?;
            Some(implant_rule2(target, donor, n, t == 3, rng))
        }
    }
}

fn make_incongruent(
    target: &EncodedArticle,
    pool: &[&EncodedArticle],
    cfg: &DatasetConfig,
    plan: Plan,
    rng: &mut ChaRng,
) -> Result<LabeledInstance> {
    for _ in 0..cfg.donor_attempts {
        let Some(donor) = pick_donor(target, pool, cfg.donor_mode, rng) else {
            return Err(Error::InfeasibleImplant(format!("no eligible donor for {}", target.id)));
        };
        if let Some(inst) = try_plan(target, donor, plan, rng) {
            let mut inst = inst?;
            if let Plan::Type(t) = plan {
                inst.provenance.test_type = Some(t);
            }
            return Ok(inst);
        }
    }
    Err(Error::InfeasibleImplant(format!(
        "no feasible donor for {} after {} attempts",
        target.id, cfg.donor_attempts
    )))
}

/// Labels `round(ratio * n)` articles of the split incongruent and keeps the
/// rest unmodified. Output follows the split order.
fn label_split(
    articles: &[&EncodedArticle],
    cfg: &DatasetConfig,
    plan: Plan,
    label: &str,
) -> Result<Vec<LabeledInstance>> {
    let k = (articles.len() as f64 * cfg.incongruent_ratio).round() as usize;
    let mut order: Vec<usize> = (0..articles.len()).collect();
    order.shuffle(&mut rng_for(cfg.seed, &format!("labels/{label}")));
    let mut incongruent = vec![false; articles.len()];
    for &i in &order[..k] {
        incongruent[i] = true;
    }
    articles
        .par_iter()
        .zip(incongruent.par_iter())
        .map(|(t, &inc)| {
            if inc {
                let mut rng = rng_for(cfg.seed, &format!("implant/{label}/{}", t.id));
                make_incongruent(t, articles, cfg, plan, &mut rng)
            } else {
                Ok(LabeledInstance::congruent(t))
            }
        })
        .collect()
}

/// Whole-article dataset: article-disjoint splits, donors drawn within each
/// split, and disjoint congruent/incongruent headline sets.
pub fn make_whole_dataset(articles: &[EncodedArticle], cfg: &DatasetConfig) -> Result<Splits> {
    let parts = split_articles(articles, cfg)?;
    let plan = Plan::Whole {
        rule2_fraction: cfg.rule2_fraction,
    };
    let mut out = Vec::with_capacity(3);
    for (name, part) in SPLIT_NAMES.iter().zip(&parts) {
        out.push(label_split(part, cfg, plan, name)?);
    }
    let splits = Splits::from_array(out.try_into().expect("three splits"));
    check_headline_disjointness(splits.named().iter().flat_map(|(_, s)| s.iter()))?;
    Ok(splits)
}

/// Fails if any headline occurs with both labels.
pub fn check_headline_disjointness<'a, I>(instances: I) -> Result<()>
where
    I: IntoIterator<Item = &'a LabeledInstance>,
{
    let mut by_label: [HashSet<&[u32]>; 2] = [HashSet::new(), HashSet::new()];
    let all: Vec<&LabeledInstance> = instances.into_iter().collect();
    for inst in &all {
        let l = usize::from(inst.label.min(1));
        by_label[l].insert(inst.headline_ids.as_slice());
    }
    if let Some(inst) = all
        .iter()
        .find(|i| i.label == 1 && by_label[0].contains(i.headline_ids.as_slice()))
    {
        return Err(Error::Overlap(format!(
            "headline of incongruent instance {} also appears in a congruent instance",
            inst.id
        )));
    }
    Ok(())
}

/// Fails if a target article appears in more than one split.
pub fn check_article_disjointness(splits: &Splits) -> Result<()> {
    let sets: Vec<HashSet<&str>> = splits
        .named()
        .iter()
        .map(|(_, s)| s.iter().map(|i| i.provenance.target_id.as_str()).collect())
        .collect();
    for i in 0..3 {
        for j in i + 1..3 {
            if let Some(id) = sets[i].intersection(&sets[j]).next() {
                return Err(Error::Overlap(format!(
                    "article {id} is in both {} and {}",
                    SPLIT_NAMES[i], SPLIT_NAMES[j]
                )));
            }
        }
    }
    Ok(())
}

/// Source article id and paragraph index of chunk `i`.
fn chunk_origin(inst: &LabeledInstance, i: usize) -> (&str, usize) {
    let p = &inst.provenance;
    match p.insertion_positions.binary_search(&i) {
        Ok(k) => (p.donor_id.as_deref().unwrap_or(&p.target_id), p.donor_paragraphs[k]),
        Err(before) => (&p.target_id, i - before),
    }
}

fn paragraph_split(whole: &[LabeledInstance], delims: &[u32], seed: u64, label: &str) -> Vec<LabeledInstance> {
    let pool: Vec<(usize, usize)> = whole
        .iter()
        .enumerate()
        .flat_map(|(i, inst)| (0..inst.chunks.len()).map(move |j| (i, j)))
        .collect();
    whole
        .par_iter()
        .flat_map_iter(|inst| {
            let target = inst.provenance.target_id.as_str();
            let mut rng = rng_for(seed, &format!("paragraph/{label}/{}", inst.id));
            let n = if inst.label == 0 {
                inst.chunks.len()
            } else {
                inst.original_body().len()
            };
            let mut out = Vec::with_capacity(n);
            for j in 0..n {
                let (chunk, (source, index)) = if inst.label == 0 {
                    (&inst.chunks[j], chunk_origin(inst, j))
                } else {
                    let mut found = None;
                    for _ in 0..1000 {
                        let &(a, b) = pool.choose(&mut rng).expect("non-empty pool");
                        let origin = chunk_origin(&whole[a], b);
                        if origin.0 != target {
                            found = Some((&whole[a].chunks[b], origin));
                            break;
                        }
                    }
                    let Some(f) = found else { continue };
                    f
                };
                out.push(LabeledInstance {
                    id: format!("{}-p{j}", inst.id),
                    headline_ids: inst.headline_ids.clone(),
                    chunks: split_sentences(chunk, delims),
                    label: inst.label,
                    provenance: Provenance {
                        target_id: target.to_string(),
                        donor_id: (inst.label == 1).then(|| source.to_string()),
                        paragraph_index: Some(index),
                        ..Provenance::default()
                    },
                });
            }
            out
        })
        .collect()
}

/// Headline/paragraph pairs. A congruent article contributes each of its own
/// paragraphs; an incongruent one contributes as many paragraphs sampled
/// from other articles of the same split. Chunks become sentences.
pub fn make_paragraph_dataset(whole: &Splits, delims: &[u32], seed: u64) -> Splits {
    Splits {
        train: paragraph_split(&whole.train, delims, seed, "train"),
        dev: paragraph_split(&whole.dev, delims, seed, "dev"),
        test: paragraph_split(&whole.test, delims, seed, "test"),
    }
}

/// Test sets of Types 1 to 4, each balanced against unmodified articles.
pub fn make_type_testsets(articles: &[&EncodedArticle], cfg: &DatasetConfig) -> Result<[Vec<LabeledInstance>; 4]> {
    let mut out: Vec<Vec<LabeledInstance>> = Vec::with_capacity(4);
    for t in 1..=4u8 {
        let set = label_split(articles, cfg, Plan::Type(t), &format!("type{t}"))?;
        out.push(set);
    }
    Ok(out.try_into().expect("four sets"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub instances: usize,
    pub incongruent: usize,
    pub avg_headline_tokens: f64,
    pub avg_body_tokens: f64,
    pub avg_chunk_tokens: f64,
    pub avg_chunks: f64,
}

pub fn dataset_stats(instances: &[LabeledInstance]) -> DatasetStats {
    let n = instances.len().max(1) as f64;
    let chunks: usize = instances.iter().map(|i| i.chunks.len()).sum();
    let body: usize = instances
        .iter()
        .map(|i| i.chunks.iter().map(Vec::len).sum::<usize>())
        .sum();
    DatasetStats {
        instances: instances.len(),
        incongruent: instances.iter().filter(|i| i.label == 1).count(),
        avg_headline_tokens: instances.iter().map(|i| i.headline_ids.len()).sum::<usize>() as f64 / n,
        avg_body_tokens: body as f64 / n,
        avg_chunk_tokens: body as f64 / chunks.max(1) as f64,
        avg_chunks: chunks as f64 / n,
    }
}

pub fn write_instances<W: Write>(mut w: W, instances: &[LabeledInstance]) -> Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut w, inst)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_instances<R: BufRead>(r: R) -> Result<Vec<LabeledInstance>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let inst: LabeledInstance =
            serde_json::from_str(&line).map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
        if inst.label > 1 {
            return Err(Error::Format(format!("line {}: label must be 0 or 1", i + 1)));
        }
        out.push(inst);
    }
    Ok(out)
}

pub fn read_instances_file(path: &Path) -> Result<Vec<LabeledInstance>> {
    let f = fs::File::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    read_instances(BufReader::new(f))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Sentence-final punctuation tokens.
pub const SENTENCE_DELIMS: [&str; 3] = [".", "!", "?"];

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub dataset: DatasetConfig,
    pub min_freq: u64,
    pub rules: CleanseRules,
    pub paragraph_set: bool,
    pub type_sets: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            dataset: DatasetConfig::default(),
            min_freq: 1,
            rules: CleanseRules::default(),
            paragraph_set: true,
            type_sets: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BuiltDataset {
    pub vocab: Vocabulary,
    pub articles: Vec<EncodedArticle>,
    pub whole: Splits,
    pub paragraph: Option<Splits>,
    pub types: Option<[Vec<LabeledInstance>; 4]>,
    /// `(article id, reason)` for articles removed during cleansing.
    pub rejected: Vec<(String, String)>,
    pub sentence_delims: Vec<u32>,
}

/// Cleanses, tokenizes and labels a raw corpus.
pub fn build_dataset(raw: &[RawArticle], opts: &BuildOptions) -> Result<BuiltDataset> {
    let mut kept = Vec::with_capacity(raw.len());
    let mut rejected = Vec::new();
    for a in raw {
        match cleanse(a, &opts.rules) {
            Ok(c) => kept.push(c),
            Err(Error::Rejected(r)) => rejected.push((a.id.clone(), r)),
            Err(e) => return Err(e),
        }
    }
    let texts = kept
        .iter()
        .flat_map(|a| std::iter::once(a.headline.as_str()).chain(a.paragraphs.iter().map(String::as_str)));
    let vocab = Vocabulary::build(texts, opts.min_freq)?;
    let mut articles = Vec::with_capacity(kept.len());
    for a in &kept {
        match EncodedArticle::encode(a, &vocab) {
            Ok(e) => articles.push(e),
            Err(Error::Rejected(r)) => rejected.push((a.id.clone(), r)),
            Err(e) => return Err(e),
        }
    }
    if articles.is_empty() {
        return Err(Error::EmptyInput("no usable articles".into()));
    }
    let whole = make_whole_dataset(&articles, &opts.dataset)?;
    let sentence_delims = vocab.ids_of(&SENTENCE_DELIMS);
    let paragraph = opts
        .paragraph_set
        .then(|| make_paragraph_dataset(&whole, &sentence_delims, opts.dataset.seed));
    let types = if opts.type_sets {
        let parts = split_articles(&articles, &opts.dataset)?;
        Some(make_type_testsets(&parts[2], &opts.dataset)?)
    } else {
        None
    };
    Ok(BuiltDataset {
        vocab,
        articles,
        whole,
        paragraph,
        types,
        rejected,
        sentence_delims,
    })
}

impl BuiltDataset {
    /// Writes every file under `dir` and returns their relative paths with
    /// SHA-256 digests.
    pub fn write(&self, dir: &Path) -> Result<BTreeMap<String, String>> {
        let mut files = BTreeMap::new();
        let mut put = |rel: String, bytes: Vec<u8>| -> Result<()> {
            let path = dir.join(&rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            files.insert(rel, sha256_hex(&bytes));
            fs::write(path, bytes)?;
            Ok(())
        };
        let mut v = Vec::new();
        self.vocab.write_tsv(&mut v)?;
        put("vocab.tsv".into(), v)?;
        for (name, set) in self.whole.named() {
            let mut b = Vec::new();
            write_instances(&mut b, set)?;
            put(format!("whole/{name}.jsonl"), b)?;
        }
        if let Some(p) = &self.paragraph {
            for (name, set) in p.named() {
                let mut b = Vec::new();
                write_instances(&mut b, set)?;
                put(format!("paragraph/{name}.jsonl"), b)?;
            }
        }
        if let Some(types) = &self.types {
            for (k, set) in types.iter().enumerate() {
                let mut b = Vec::new();
                write_instances(&mut b, set)?;
                put(format!("types/type{}.jsonl", k + 1), b)?;
            }
        }
        if !self.rejected.is_empty() {
            let mut b = Vec::new();
            for (id, why) in &self.rejected {
                writeln!(b, "{id}\t{why}")?;
            }
            put("rejected.tsv".into(), b)?;
        }
        Ok(files)
    }

    /// Counts and the corpus statistics per file set.
    pub fn summary(&self) -> serde_json::Value {
        let mut m = serde_json::Map::new();
        for (name, set) in self.whole.named() {
            m.insert(
                format!("whole/{name}"),
                serde_json::to_value(dataset_stats(set)).expect("stats"),
            );
        }
        if let Some(p) = &self.paragraph {
            for (name, set) in p.named() {
                m.insert(
                    format!("paragraph/{name}"),
                    serde_json::to_value(dataset_stats(set)).expect("stats"),
                );
            }
            let factor = p.len() as f64 / self.whole.len().max(1) as f64;
            m.insert("paragraph_expansion_factor".into(), factor.into());
        }
        if let Some(types) = &self.types {
            for (k, set) in types.iter().enumerate() {
                m.insert(
                    format!("types/type{}", k + 1),
                    serde_json::to_value(dataset_stats(set)).expect("stats"),
                );
            }
        }
        m.insert("vocab_size".into(), self.vocab.len().into());
        m.insert("rejected_articles".into(), self.rejected.len().into());
        serde_json::Value::Object(m)
    }
}
