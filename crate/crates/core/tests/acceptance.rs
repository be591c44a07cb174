//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero when a hard criterion fails.
//!
//! `ACCEPTANCE_ONLY=1,2,5` restricts the run to the listed criteria.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use incongruity::autograd::{Graph, ParamStore};
use incongruity::baseline::{BaselineModel, LogisticConfig};
use incongruity::corpus::{
    build_dataset, check_article_disjointness, check_headline_disjointness, gen_toy_corpus, import_fnc_style,
    BuildOptions, BuiltDataset, DatasetConfig, DonorMode, EncodedArticle, LabeledInstance, ToyCorpusConfig, Vocabulary,
};
use incongruity::metrics::{auroc, breakdown_by_type, mann_whitney_2u, precision_at_top_n};
use incongruity::models::{Architecture, Document, IncongruityModel, ModelConfig, Prediction};
use incongruity::nn::{embed, gru_sequence, init_orthogonal, EmbeddingTable, GruCell};
use incongruity::rng::rng_for;
use incongruity::train::{evaluate, train, TrainConfig, TrainResult};
use incongruity::Result;
use rand::Rng;

type Check = Result<(bool, String)>;

const FAMILIES: [Architecture; 4] = [
    Architecture::Rde,
    Architecture::Cde,
    Architecture::Ahde,
    Architecture::Hre,
];

struct Criterion {
    id: u8,
    name: &'static str,
    soft: bool,
    run: fn() -> Check,
}

fn main() {
    let only: Option<HashSet<u8>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let criteria = [
        Criterion {
            id: 1,
            name: "gradient correctness",
            soft: false,
            run: c1_gradients,
        },
        Criterion {
            id: 2,
            name: "metric oracles",
            soft: false,
            run: c2_metrics,
        },
        Criterion {
            id: 3,
            name: "independent-paragraph composition",
            soft: false,
            run: c3_ip_max,
        },
        Criterion {
            id: 4,
            name: "attention contract",
            soft: false,
            run: c4_attention,
        },
        Criterion {
            id: 5,
            name: "dataset invariants",
            soft: false,
            run: c5_dataset,
        },
        Criterion {
            id: 6,
            name: "desk-scale learnability",
            soft: false,
            run: c6_learnability,
        },
        Criterion {
            id: 7,
            name: "directional IP gain",
            soft: true,
            run: c7_ip_direction,
        },
        Criterion {
            id: 8,
            name: "type harness",
            soft: false,
            run: c8_types,
        },
        Criterion {
            id: 9,
            name: "initialization and padding",
            soft: false,
            run: c9_init,
        },
        Criterion {
            id: 10,
            name: "stance import",
            soft: false,
            run: c10_fnc,
        },
    ];
    let mut hard_failures = 0;
    for c in criteria
        .iter()
        .filter(|c| only.as_ref().is_none_or(|o| o.contains(&c.id)))
    {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run));
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match outcome {
            Ok(Ok(r)) => r,
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(p) => {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panic: {msg}"))
            }
        };
        let tag = match (pass, c.soft) {
            (true, _) => "PASS",
            (false, true) => "FAIL (soft)",
            (false, false) => "FAIL",
        };
        println!("{tag} [{}] {}: {detail} ({secs:.1}s)", c.id, c.name);
        if !pass && !c.soft {
            hard_failures += 1;
        }
    }
    if hard_failures > 0 {
        std::process::exit(1);
    }
}

/// Random token-id article. Ids start at 2; `delims` are scattered in as
/// sentence ends.
fn random_doc(rng: &mut impl Rng, vocab: u32, paras: usize, max_len: usize, delims: &[u32]) -> Document {
    let headline = random_seq(rng, vocab, max_len, delims);
    let chunks = (0..paras).map(|_| random_seq(rng, vocab, max_len, delims)).collect();
    Document::new(headline, chunks)
}

fn random_seq(rng: &mut impl Rng, vocab: u32, max_len: usize, delims: &[u32]) -> Vec<u32> {
    let n = rng.random_range(1..=max_len);
    (0..n)
        .map(|_| {
            if !delims.is_empty() && rng.random_bool(0.2) {
                delims[rng.random_range(0..delims.len())]
            } else {
                rng.random_range(2 + delims.len() as u32..vocab)
            }
        })
        .collect()
}

fn c1_gradients() -> Check {
    let start = Instant::now();
    let mut rng = rng_for(1, "acceptance/gradcheck");
    let mut worst = Vec::new();
    let mut ok = true;
    for arch in FAMILIES {
        let docs: Vec<Document> = (1..=2).map(|k| random_doc(&mut rng, 20, k + 1, 6, &[])).collect();
        let mut cfg = ModelConfig::toy(arch, 20);
        cfg.seed = 3;
        let mut m = IncongruityModel::new(cfg)?;
        let report = m.gradcheck(&docs, &[1, 0], 1e-5)?;
        let err = report.max_rel_error();
        ok &= err < 1e-4 && report.params.len() == m.params.len();
        worst.push(format!("{} {err:.1e}", arch.name()));
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((ok && secs < 120.0, format!("max rel error {}", worst.join(", "))))
}

fn brute_two_u(scores: &[f64], labels: &[u8]) -> (u128, u64, u64) {
    let (mut two_u, mut p, mut n) = (0u128, 0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li == 1 {
            p += 1;
        } else {
            n += 1;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                two_u += if scores[i] > scores[j] {
                    2
                } else if scores[i] == scores[j] {
                    1
                } else {
                    0
                };
            }
        }
    }
    (two_u, p, n)
}

fn c2_metrics() -> Check {
    let mut rng = rng_for(2, "acceptance/metrics");
    let mut mismatches = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..=80);
        let levels: Vec<i64> = (0..n).map(|_| rng.random_range(0..10)).collect();
        let scores: Vec<f64> = levels.iter().map(|&k| k as f64 / 10.0).collect();
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 1;
        labels[1] = 0;
        let ids: Vec<String> = (0..n).map(|_| format!("id{:08x}", rng.random::<u32>())).collect();

        let (two_u, p, q) = brute_two_u(&scores, &labels);
        let oracle = two_u as f64 / (2 * u128::from(p) * u128::from(q)) as f64;
        if mann_whitney_2u(&scores, &labels)? != (two_u, p, q) || auroc(&scores, &labels)? != oracle {
            mismatches += 1;
        }

        let mut ranked: Vec<(i64, &str, u8)> = (0..n).map(|i| (-levels[i], ids[i].as_str(), labels[i])).collect();
        ranked.sort();
        let ns: Vec<usize> = (1..=n).collect();
        let got = precision_at_top_n(&scores, &labels, &ids, &ns)?;
        for (k, (nn, prec)) in got.into_iter().enumerate() {
            let hits = ranked[..=k].iter().filter(|r| r.2 == 1).count();
            if nn != k + 1 || prec != hits as f64 / nn as f64 {
                mismatches += 1;
            }
        }
    }
    let example = auroc(&[0.8, 0.7, 0.6, 0.5], &[1, 0, 1, 0])?;
    Ok((
        mismatches == 0 && example == 0.75,
        format!("200 tied sets, {mismatches} mismatches; example auroc {example}"),
    ))
}

/// Sentence split written independently of the library: a piece ends after
/// every delimiter.
fn oracle_sentences(tokens: &[u32], delims: &[u32]) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for &t in tokens {
        out.last_mut().unwrap().push(t);
        if delims.contains(&t) {
            out.push(Vec::new());
        }
    }
    out.retain(|s| !s.is_empty());
    out
}

fn c3_ip_max() -> Check {
    let delims = [2u32, 3];
    let mut rng = rng_for(3, "acceptance/ip");
    let docs: Vec<Document> = (0..100)
        .map(|_| {
            let paras = rng.random_range(1..=7);
            random_doc(&mut rng, 40, paras, 14, &delims)
        })
        .collect();
    let (max_tokens, max_chunks) = (12, 5);
    let mut details = Vec::new();
    let mut ok = true;
    for arch in FAMILIES {
        let mut cfg = ModelConfig::toy(arch, 40);
        cfg.ip_mode = true;
        cfg.sentence_delims = delims.to_vec();
        cfg.max_tokens = max_tokens;
        cfg.max_chunks = max_chunks;
        cfg.seed = 5;
        let m = IncongruityModel::new(cfg)?;
        let preds = m.predict(&docs)?;
        let mut bad = 0;
        for (d, pred) in docs.iter().zip(&preds) {
            let head: Vec<u32> = d.headline.iter().copied().take(max_tokens).collect();
            let per: Vec<f64> = d
                .chunks
                .iter()
                .take(max_chunks)
                .map(|c| {
                    let p: Vec<u32> = c.iter().copied().take(max_tokens).collect();
                    m.score_document(&Document::new(head.clone(), oracle_sentences(&p, &delims)))
                })
                .collect::<Result<_>>()?;
            bad += usize::from(!matches_max(pred, &per));
        }
        ok &= bad == 0;
        details.push(format!("{} {bad}", arch.name()));
    }

    let labels: Vec<u8> = (0..docs.len()).map(|i| (i % 2) as u8).collect();
    let base = BaselineModel::train(&docs, &labels, true, &LogisticConfig::default())?;
    let preds = base.predict(&docs)?;
    let mut bad = 0;
    for (d, pred) in docs.iter().zip(&preds) {
        let per: Vec<f64> = d
            .chunks
            .iter()
            .map(|c| base.score_document(&Document::new(d.headline.clone(), vec![c.clone()])))
            .collect::<Result<_>>()?;
        bad += usize::from(!matches_max(pred, &per));
    }
    ok &= bad == 0;
    details.push(format!("baseline {bad}"));
    Ok((ok, format!("100 articles, mismatches: {}", details.join(", "))))
}

fn matches_max(pred: &Prediction, per: &[f64]) -> bool {
    let max = per.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    pred.score == max && pred.per_paragraph_scores.as_deref() == Some(per)
}

fn c4_attention() -> Check {
    let mut rng = rng_for(4, "acceptance/attention");
    let mut docs: Vec<Document> = (0..100)
        .map(|_| {
            let paras = rng.random_range(1..=8);
            random_doc(&mut rng, 30, paras, 10, &[])
        })
        .collect();
    docs.push(random_doc(&mut rng, 30, 1, 10, &[]));
    let mut cfg = ModelConfig::toy(Architecture::Ahde, 30);
    cfg.seed = 8;
    let m = IncongruityModel::new(cfg)?;
    let preds = m.predict(&docs)?;
    let (mut worst, mut negative, mut singles, mut single_ok) = (0.0f64, 0, 0, true);
    for (d, p) in docs.iter().zip(&preds) {
        let w = p.attention.as_deref().unwrap_or_default();
        if w.len() != d.chunks.len() {
            return Ok((false, format!("{} weights for {} paragraphs", w.len(), d.chunks.len())));
        }
        negative += w.iter().filter(|&&x| x < 0.0).count();
        worst = worst.max((w.iter().sum::<f64>() - 1.0).abs());
        if d.chunks.len() == 1 {
            singles += 1;
            single_ok &= w == [1.0];
        }
    }
    Ok((
        negative == 0 && worst <= 1e-12 && singles > 0 && single_ok,
        format!("max |sum - 1| {worst:.1e}, {negative} negative, {singles} single-paragraph bodies exact: {single_ok}"),
    ))
}

fn c5_dataset() -> Check {
    let raw = gen_toy_corpus(&ToyCorpusConfig::new(2, 5000, 50, 17))?;
    let opts = BuildOptions {
        dataset: DatasetConfig {
            seed: 17,
            ..DatasetConfig::default()
        },
        paragraph_set: false,
        ..BuildOptions::default()
    };
    let built = build_dataset(&raw, &opts)?;
    let w = &built.whole;
    let all: Vec<&LabeledInstance> = w.train.iter().chain(&w.dev).chain(&w.test).collect();
    let by_id: HashMap<&str, &EncodedArticle> = built.articles.iter().map(|a| (a.id.as_str(), a)).collect();

    let max_fraction = all
        .iter()
        .map(|i| {
            let implanted: usize = i
                .provenance
                .insertion_positions
                .iter()
                .map(|&p| i.chunks[p].len())
                .sum();
            implanted as f64 / i.chunks.iter().map(Vec::len).sum::<usize>() as f64
        })
        .fold(0.0, f64::max);

    let mut split_of: HashMap<&str, &str> = HashMap::new();
    let mut leaks = 0;
    for (name, set) in w.named() {
        for i in set {
            let ids = std::iter::once(i.provenance.target_id.as_str()).chain(i.provenance.donor_id.as_deref());
            for id in ids {
                if *split_of.entry(id).or_insert(name) != name {
                    leaks += 1;
                }
            }
        }
    }

    let mut heads: [HashSet<&[u32]>; 2] = [HashSet::new(), HashSet::new()];
    for i in &all {
        heads[usize::from(i.label)].insert(&i.headline_ids);
    }
    let shared_heads = heads[0].intersection(&heads[1]).count();

    let unrestored = all
        .iter()
        .filter(|i| {
            let t = by_id[i.provenance.target_id.as_str()];
            i.headline_ids != t.headline || i.original_body() != t.paragraphs
        })
        .count();
    let library_checks =
        check_article_disjointness(w).is_ok() && check_headline_disjointness(all.iter().copied()).is_ok();

    let dirs = [tempfile::tempdir()?, tempfile::tempdir()?];
    let first = built.write(dirs[0].path())?;
    let second = build_dataset(&raw, &opts)?.write(dirs[1].path())?;
    let mut identical = first == second;
    for rel in first.keys() {
        identical &= fs::read(dirs[0].path().join(rel))? == fs::read(dirs[1].path().join(rel))?;
    }

    let ok = all.len() == 10_000
        && max_fraction < 0.5
        && leaks == 0
        && shared_heads == 0
        && unrestored == 0
        && library_checks
        && identical;
    Ok((
        ok,
        format!(
            "{} instances, max implanted fraction {max_fraction:.3}, {leaks} split leaks, {shared_heads} shared headlines, \
             {unrestored} unrestorable, reruns identical: {identical}",
            all.len()
        ),
    ))
}

/// The synthetic benchmark: 3,000 two-topic articles split 2,000/500/500
/// with cross-topic donors.
fn desk_dataset(seed: u64, min_paragraphs: usize) -> Result<BuiltDataset> {
    let mut toy = ToyCorpusConfig::new(2, 1500, 50, seed);
    toy.min_paragraphs = min_paragraphs;
    let raw = gen_toy_corpus(&toy)?;
    build_dataset(
        &raw,
        &BuildOptions {
            dataset: DatasetConfig {
                train_fraction: 2.0 / 3.0,
                dev_fraction: 1.0 / 6.0,
                donor_mode: DonorMode::CrossTopic,
                seed,
                ..DatasetConfig::default()
            },
            paragraph_set: true,
            ..BuildOptions::default()
        },
    )
}

fn desk_model(arch: Architecture, data: &BuiltDataset, seed: u64, ip: bool) -> Result<IncongruityModel> {
    let mut cfg = ModelConfig::new(arch, data.vocab.len());
    cfg.embed_dim = 32;
    cfg.word_hidden = 32;
    cfg.para_hidden = 16;
    cfg.conv_filters = 16;
    cfg.sentence_delims = data.sentence_delims.clone();
    cfg.ip_mode = ip;
    cfg.seed = seed;
    IncongruityModel::new(cfg)
}

fn desk_train(
    model: IncongruityModel,
    train_set: &[LabeledInstance],
    dev: &[LabeledInstance],
    tc: &TrainConfig,
) -> Result<TrainResult> {
    train(model, train_set, dev, tc, None)
}

fn docs_labels(set: &[LabeledInstance]) -> (Vec<Document>, Vec<u8>) {
    (
        set.iter().map(LabeledInstance::document).collect(),
        set.iter().map(|i| i.label).collect(),
    )
}

fn c6_learnability() -> Check {
    let data = desk_dataset(0, 3)?;
    let w = &data.whole;
    let sizes = (w.train.len(), w.dev.len(), w.test.len());
    let balanced = [&w.train, &w.dev, &w.test]
        .iter()
        .all(|s| 2 * s.iter().filter(|i| i.label == 1).count() == s.len());
    let tc = TrainConfig {
        batch_size: 32,
        max_epochs: 40,
        eval_every: 50,
        patience: 20,
        time_budget_secs: Some(600.0),
        ..TrainConfig::default()
    };
    let mut ok = sizes == (2000, 500, 500) && balanced;
    let mut parts = vec![format!("{sizes:?}")];
    for arch in [Architecture::Rde, Architecture::Ahde] {
        let res = desk_train(desk_model(arch, &data, 0, false)?, &w.train, &w.dev, &tc)?;
        ok &= res.best_dev_auroc >= 0.95 && res.seconds <= 600.0;
        parts.push(format!(
            "{} dev auroc {:.4} in {:.0}s",
            arch.name(),
            res.best_dev_auroc,
            res.seconds
        ));
    }
    let (train_docs, train_labels) = docs_labels(&w.train);
    let base = BaselineModel::train(&train_docs, &train_labels, false, &LogisticConfig::default())?;
    for (name, set) in [("dev", &w.dev), ("test", &w.test)] {
        let (d, l) = docs_labels(set);
        let s: Vec<f64> = base.predict(&d)?.into_iter().map(|p| p.score).collect();
        let a = auroc(&s, &l)?;
        ok &= a >= 0.80;
        parts.push(format!("baseline {name} auroc {a:.4}"));
    }
    Ok((ok, parts.join(", ")))
}

fn c7_ip_direction() -> Check {
    let tc = |seed| TrainConfig {
        batch_size: 32,
        max_epochs: 20,
        max_steps: Some(400),
        eval_every: 50,
        patience: 4,
        time_budget_secs: Some(60.0),
        seed,
        ..TrainConfig::default()
    };
    let seeds = [0u64, 1, 2];
    let mut sums: HashMap<(Architecture, bool), f64> = HashMap::new();
    let mut min_paragraphs = usize::MAX;
    for &seed in &seeds {
        let data = desk_dataset(seed, 4)?;
        let w = &data.whole;
        min_paragraphs = min_paragraphs.min(
            w.train
                .iter()
                .chain(&w.dev)
                .chain(&w.test)
                .map(|i| i.chunks.len())
                .min()
                .unwrap_or(0),
        );
        let paragraph = data.paragraph.as_ref().expect("paragraph set requested");
        let (test_docs, test_labels) = docs_labels(&w.test);
        for arch in [Architecture::Rde, Architecture::Cde] {
            for ip in [false, true] {
                let train_set = if ip { &paragraph.train } else { &w.train };
                let res = desk_train(desk_model(arch, &data, seed, ip)?, train_set, &w.dev, &tc(seed))?;
                let (_, a) = evaluate(&res.model, &test_docs, &test_labels)?;
                *sums.entry((arch, ip)).or_default() += a;
            }
        }
    }
    let n = seeds.len() as f64;
    let mut ok = min_paragraphs >= 4;
    let mut parts = Vec::new();
    for arch in [Architecture::Rde, Architecture::Cde] {
        let without = sums[&(arch, false)] / n;
        let with = sums[&(arch, true)] / n;
        ok &= with >= without - 0.01;
        parts.push(format!("{} test auroc {without:.4} -> {with:.4} with IP", arch.name()));
    }
    Ok((
        ok,
        format!(
            "{} (mean of 3 seeds, bodies >= {min_paragraphs} paragraphs)",
            parts.join(", ")
        ),
    ))
}

fn c8_types() -> Check {
    let raw = gen_toy_corpus(&ToyCorpusConfig::new(2, 1000, 50, 8))?;
    let opts = BuildOptions {
        dataset: DatasetConfig {
            donor_mode: DonorMode::CrossTopic,
            seed: 8,
            ..DatasetConfig::default()
        },
        paragraph_set: false,
        type_sets: true,
        ..BuildOptions::default()
    };
    let data = build_dataset(&raw, &opts)?;
    let types = data.types.as_ref().expect("type sets requested");
    let by_id: HashMap<&str, &EncodedArticle> = data.articles.iter().map(|a| (a.id.as_str(), a)).collect();

    // Implanted chunks in body order must be the donor paragraphs named by
    // the provenance, and removing them must give back the target.
    let implants = |i: &LabeledInstance| -> Option<Vec<usize>> {
        let p = &i.provenance;
        let target = by_id[p.target_id.as_str()];
        let donor = by_id[p.donor_id.as_deref()?];
        let restored = i.original_body() == target.paragraphs
            && i.chunks.len() == target.paragraphs.len() + p.insertion_positions.len();
        let same = p.insertion_positions.len() == p.donor_paragraphs.len()
            && p.insertion_positions
                .iter()
                .zip(&p.donor_paragraphs)
                .all(|(&pos, &dp)| donor.paragraphs.get(dp) == Some(&i.chunks[pos]));
        (restored && same).then(|| p.donor_paragraphs.clone())
    };

    let mut ok = true;
    let mut notes = Vec::new();
    for (k, set) in types.iter().enumerate() {
        let t = k as u8 + 1;
        let pos: Vec<&LabeledInstance> = set.iter().filter(|i| i.label == 1).collect();
        ok &= !pos.is_empty() && 2 * pos.len() == set.len();
        ok &= pos
            .iter()
            .all(|i| i.provenance.test_type == Some(t) && implants(i).is_some());
        match t {
            1 => {
                let single = pos.iter().all(|i| implants(i).is_some_and(|d| d.len() == 1));
                ok &= single;
                notes.push(format!("type1 single implant: {single}"));
            }
            2 => ok &= pos.iter().all(|i| implants(i).is_some_and(|d| d.len() > 1)),
            3 => {
                let multi = pos.iter().filter(|i| i.provenance.donor_paragraphs.len() > 1).count();
                let ordered = pos
                    .iter()
                    .all(|i| implants(i).is_some_and(|d| d.windows(2).all(|w| w[0] < w[1])));
                ok &= ordered && multi > 0;
                notes.push(format!("type3 donor order kept: {ordered} ({multi} multi-implant)"));
            }
            _ => {}
        }
    }

    let (train_docs, train_labels) = docs_labels(&data.whole.train);
    let base = BaselineModel::train(&train_docs, &train_labels, false, &LogisticConfig::default())?;
    let mut hre = desk_model(Architecture::Hre, &data, 8, false)?;
    let tc = TrainConfig {
        batch_size: 32,
        max_steps: Some(150),
        eval_every: 50,
        ..TrainConfig::default()
    };
    hre = desk_train(hre, &data.whole.train, &data.whole.dev, &tc)?.model;
    for (name, scorer) in [("baseline", 0), ("hre", 1)] {
        let mut sets = Vec::new();
        for (k, set) in types.iter().enumerate() {
            let (d, l) = docs_labels(set);
            let preds = if scorer == 0 {
                base.predict(&d)?
            } else {
                hre.predict(&d)?
            };
            sets.push((k as u8 + 1, preds.into_iter().map(|p| p.score).collect(), l));
        }
        let rows = breakdown_by_type(&sets)?;
        ok &= rows.len() == 4
            && rows
                .iter()
                .zip(types)
                .all(|(r, s)| r.support == s.len() && r.auroc.is_some());
        let accs: Vec<String> = rows.iter().map(|r| format!("{:.3}", r.accuracy)).collect();
        notes.push(format!("{name} accuracy by type [{}]", accs.join(", ")));
    }
    Ok((ok, notes.join(", ")))
}

fn c9_init() -> Check {
    let mut rng = rng_for(9, "acceptance/init");
    let mut worst = 0.0f64;
    for shape in [[8, 8], [64, 64], [300, 300], [40, 12]] {
        let q = init_orthogonal(&shape, &mut rng)?;
        let (r, c) = (shape[0], shape[1]);
        let d = q.data();
        for i in 0..c {
            for j in 0..c {
                let dot: f64 = (0..r).map(|k| d[k * c + i] * d[k * c + j]).sum();
                worst = worst.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
    }

    let mut store = ParamStore::new();
    let table = EmbeddingTable::new(&mut store, "emb", 12, 5, &mut rng)?;
    let cell = GruCell::new(&mut store, "gru", 5, 7, &mut rng)?;
    let mut pad_exact = true;
    for len in 1..=6 {
        let ids: Vec<u32> = (0..len).map(|_| rng.random_range(1..12)).collect();
        let mut g = Graph::new(&store);
        let x = embed(&mut g, &table, &ids)?;
        let (states, last) = gru_sequence(&mut g, &cell, x, &vec![true; len])?;
        let (states, last) = (g.value(states).clone(), g.value(last).clone());
        for pads in 1..=4 {
            let mut padded = ids.clone();
            padded.extend(std::iter::repeat_n(0, pads));
            let mask: Vec<bool> = padded.iter().map(|&t| t != 0).collect();
            let xp = embed(&mut g, &table, &padded)?;
            let (sp, lp) = gru_sequence(&mut g, &cell, xp, &mask)?;
            pad_exact &= g.value(lp).data() == last.data() && g.value(sp).data()[..states.len()] == *states.data();
        }
    }
    Ok((
        worst < 1e-5 && pad_exact,
        format!("max |QtQ - I| {worst:.1e}, trailing pads bit-identical: {pad_exact}"),
    ))
}

fn c10_fnc() -> Check {
    let bodies = "Body ID,articleBody\n\
                  1,\"Rain fell across the city.\n\nRoads were closed.\"\n\
                  2,Markets rallied after the report.\n\
                  3,\n";
    let stances = "Headline,Body ID,Stance\n\
                   Storm hits the city,1,agree\n\
                   City denies the storm,1,disagree\n\
                   Officials discuss rain,1,discuss\n\
                   Celebrity adopts a cat,1,unrelated\n\
                   Stocks climb on report,2,agree\n\
                   Moon landing was staged,2,unrelated\n\
                   Rain may return,1,maybe\n\
                   ,2,agree\n\
                   Report doubted,9,disagree\n\
                   Cats rule the web,2,UNRELATED\n";
    let import = import_fnc_style(stances.as_bytes(), bodies.as_bytes())?;
    let labels: Vec<(u64, u8)> = import
        .pairs
        .iter()
        .map(|p| (p.id.trim_start_matches("fnc-").parse().unwrap_or(0), p.label))
        .collect();
    let expected_labels = vec![(2, 0), (3, 0), (4, 0), (5, 1), (6, 0), (7, 1), (11, 1)];
    let rejected: Vec<(&str, u64)> = import.rejected.iter().map(|r| (r.table, r.line)).collect();
    let expected_rejected = vec![("bodies", 6), ("stances", 8), ("stances", 9), ("stances", 10)];
    let vocab = Vocabulary::build(import.pairs.iter().map(|p| p.headline.as_str()), 1)?;
    let paragraphs = import.pairs[0].encode(&vocab)?.chunks.len();
    Ok((
        labels == expected_labels && rejected == expected_rejected && paragraphs == 2,
        format!("labels {labels:?}, rejected {rejected:?}"),
    ))
}
