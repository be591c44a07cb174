use std::path::{Path, PathBuf};

use incongruity::baseline::{BaselineModel, LogisticModel, BASELINE_FILE};
use incongruity::corpus::{
    build_dataset as build, cleanse, gen_toy_corpus, import_fnc_style, read_articles, read_instances, write_articles,
    write_instances, BuildOptions, EncodedArticle, LabeledInstance, RawArticle, Vocabulary, SENTENCE_DELIMS,
};
use incongruity::metrics::{breakdown_by_type, EvalReport};
use incongruity::models::{
    Architecture, Document, IncongruityModel, ModelConfig, Prediction, CONFIG_FILE, PARAMS_FILE,
};
use incongruity::rng::rng_for;
use incongruity::train::{train as fit, write_history};
use incongruity::{Error, Result};
use rand::Rng;
use serde::Serialize;

use crate::config::{ModelKind, RunConfig};
use crate::manifest::Manifest;
use crate::Failure;

const VOCAB_FILE: &str = "vocab.tsv";

type CmdResult = std::result::Result<(), Failure>;

fn jsonl<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn pretty<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    Ok((serde_json::to_string_pretty(v)? + "\n").into_bytes())
}

fn read_vocab(man: &mut Manifest, path: &Path) -> Result<(Vocabulary, Vec<u8>)> {
    let bytes = man.input(path)?;
    Ok((Vocabulary::read_tsv(&bytes[..])?, bytes))
}

fn instances(man: &mut Manifest, path: &Path) -> Result<Vec<LabeledInstance>> {
    read_instances(&man.input(path)?[..])
}

fn docs_and_labels(set: &[LabeledInstance]) -> (Vec<Document>, Vec<u8>) {
    (
        set.iter().map(LabeledInstance::document).collect(),
        set.iter().map(|i| i.label).collect(),
    )
}

pub fn toy_corpus(cfg: &RunConfig, out: &Path) -> CmdResult {
    let mut man = Manifest::new("toy-corpus", cfg)?;
    let articles = gen_toy_corpus(&cfg.toy()?)?;
    let mut bytes = Vec::new();
    write_articles(&mut bytes, &articles)?;
    man.output(out, "articles.jsonl", &bytes)?;
    man.write(out)?;
    println!(
        "{} articles -> {}",
        articles.len(),
        out.join("articles.jsonl").display()
    );
    Ok(())
}

pub fn build_dataset(cfg: &RunConfig, data: &Path, out: &Path) -> CmdResult {
    let mut man = Manifest::new("build-dataset", cfg)?;
    let raw = read_articles(&man.input(data)?[..])?;
    let (rules, rule_file) = cfg.cleanse_rules()?;
    if let Some(p) = rule_file {
        man.input(&p)?;
    }
    let opts = BuildOptions {
        dataset: cfg.dataset()?,
        min_freq: cfg.get("dataset.min_freq")?,
        rules,
        paragraph_set: cfg.get("dataset.paragraph_set")?,
        type_sets: cfg.get("dataset.types")?,
    };
    let built = build(&raw, &opts)?;
    man.outputs.extend(built.write(out)?);
    let summary = built.summary();
    man.output(out, "summary.json", &pretty(&summary)?)?;
    man.write(out)?;
    println!("{summary}");
    Ok(())
}

#[derive(Serialize)]
struct FncRejected<'a> {
    table: &'a str,
    line: u64,
    reason: &'a str,
}

/// Stance pairs as a binary test set: vocabulary, instances and the rows
/// that could not be used.
pub fn import_fnc(cfg: &RunConfig, stances: &Path, bodies: &Path, out: &Path) -> CmdResult {
    let mut man = Manifest::new("build-dataset", cfg)?;
    let s = man.input(stances)?;
    let b = man.input(bodies)?;
    let import = import_fnc_style(&s[..], &b[..])?;
    let texts = import
        .pairs
        .iter()
        .flat_map(|p| std::iter::once(p.headline.as_str()).chain(p.paragraphs.iter().map(String::as_str)));
    let vocab = Vocabulary::build(texts, cfg.get("dataset.min_freq")?)?;
    let mut rows = Vec::new();
    let mut dropped = Vec::new();
    for p in &import.pairs {
        match p.encode(&vocab) {
            Ok(i) => rows.push(i),
            Err(Error::Rejected(r)) => dropped.push(r),
            Err(e) => return Err(e.into()),
        }
    }
    let mut v = Vec::new();
    vocab.write_tsv(&mut v)?;
    man.output(out, VOCAB_FILE, &v)?;
    let mut inst = Vec::new();
    write_instances(&mut inst, &rows)?;
    man.output(out, "fnc.jsonl", &inst)?;
    let mut rej: Vec<FncRejected> = import
        .rejected
        .iter()
        .map(|r| FncRejected {
            table: r.table,
            line: r.line,
            reason: &r.reason,
        })
        .collect();
    rej.extend(dropped.iter().map(|why| FncRejected {
        table: "pairs",
        line: 0,
        reason: why,
    }));
    man.output(out, "rejected.jsonl", &jsonl(&rej)?)?;
    let summary = serde_json::json!({
        "pairs": rows.len(),
        "incongruent": rows.iter().filter(|r| r.label == 1).count(),
        "rejected_rows": rej.len(),
        "vocab_size": vocab.len(),
    });
    man.output(out, "summary.json", &pretty(&summary)?)?;
    man.write(out)?;
    println!("{summary}");
    Ok(())
}

/// A trained scorer of either family.
enum Scorer {
    Neural(IncongruityModel),
    Baseline(BaselineModel),
}

impl Scorer {
    fn name(&self) -> &'static str {
        match self {
            Scorer::Neural(m) => m.config().architecture.name(),
            Scorer::Baseline(_) => "baseline",
        }
    }

    fn kind(&self) -> ModelKind {
        match self {
            Scorer::Neural(m) => ModelKind::Neural(m.config().architecture),
            Scorer::Baseline(_) => ModelKind::Baseline,
        }
    }

    fn ip_mode(&self) -> bool {
        match self {
            Scorer::Neural(m) => m.config().ip_mode,
            Scorer::Baseline(b) => b.ip_mode,
        }
    }

    fn set_ip(&mut self) {
        match self {
            Scorer::Neural(m) => m.encoder.config.ip_mode = true,
            Scorer::Baseline(b) => b.ip_mode = true,
        }
    }

    fn predict(&self, docs: &[Document]) -> Result<Vec<Prediction>> {
        match self {
            Scorer::Neural(m) => m.predict(docs),
            Scorer::Baseline(b) => b.predict(docs),
        }
    }

    fn load(man: &mut Manifest, dir: &Path) -> Result<Self> {
        if dir.join(BASELINE_FILE).exists() {
            man.input(&dir.join(BASELINE_FILE))?;
            return Ok(Scorer::Baseline(BaselineModel::load(dir)?));
        }
        man.input(&dir.join(CONFIG_FILE))?;
        man.input(&dir.join(PARAMS_FILE))?;
        Ok(Scorer::Neural(IncongruityModel::load(dir)?))
    }
}

pub fn train(cfg: &RunConfig, data: &Path, out: &Path) -> CmdResult {
    let mut man = Manifest::new("train", cfg)?;
    let (vocab, vocab_bytes) = read_vocab(&mut man, &data.join(VOCAB_FILE))?;
    let ip = cfg.ip()?;
    let train_file = if ip {
        "paragraph/train.jsonl"
    } else {
        "whole/train.jsonl"
    };
    let train_set = instances(&mut man, &data.join(train_file))?;
    let dev_set = instances(&mut man, &data.join("whole/dev.jsonl"))?;
    let kind = cfg.model_kind()?;
    let summary = match kind {
        ModelKind::Baseline => {
            let (docs, labels) = docs_and_labels(&train_set);
            let model = BaselineModel::train(&docs, &labels, ip, &cfg.logistic()?)?;
            model.save(out)?;
            man.record(out, BASELINE_FILE)?;
            let (dev_docs, dev_labels) = docs_and_labels(&dev_set);
            let scores: Vec<f64> = model.predict(&dev_docs)?.into_iter().map(|p| p.score).collect();
            serde_json::json!({
                "model": "baseline",
                "ip": ip,
                "dev_accuracy": incongruity::metrics::accuracy(&scores, &dev_labels)?,
                "dev_auroc": incongruity::metrics::auroc(&scores, &dev_labels)?,
            })
        }
        ModelKind::Neural(arch) => {
            let mcfg = cfg.model(arch, vocab.len(), vocab.ids_of(&SENTENCE_DELIMS))?;
            let model = IncongruityModel::new(mcfg)?;
            let res = fit(model, &train_set, &dev_set, &cfg.train()?, Some(out))?;
            man.record(out, PARAMS_FILE)?;
            man.record(out, CONFIG_FILE)?;
            let mut h = Vec::new();
            write_history(&mut h, &res.history)?;
            man.output(out, "history.csv", &h)?;
            log::info!("trained {} steps in {:.1}s", res.steps, res.seconds);
            serde_json::json!({
                "model": arch.name(),
                "ip": ip,
                "steps": res.steps,
                "stopped": res.stopped,
                "best_step": res.best_step,
                "best_dev_auroc": res.best_dev_auroc,
                "final_dev_auroc": res.final_dev_auroc,
            })
        }
    };
    man.output(out, VOCAB_FILE, &vocab_bytes)?;
    man.output(out, "train.json", &pretty(&summary)?)?;
    man.write(out)?;
    println!("{summary}");
    Ok(())
}

/// Largest token id seen plus one, at least 2.
fn vocab_size_of(set: &[LabeledInstance]) -> usize {
    set.iter()
        .flat_map(|i| i.headline_ids.iter().chain(i.chunks.iter().flatten()))
        .map(|&t| t as usize + 1)
        .max()
        .unwrap_or(0)
        .max(2)
}

fn check_kind(requested: Option<ModelKind>, scorer: &Scorer) -> Result<()> {
    match requested {
        Some(k) if k != scorer.kind() => Err(Error::Config(format!(
            "--model {} does not match the checkpoint ({})",
            k.name(),
            scorer.name()
        ))),
        _ => Ok(()),
    }
}

fn fresh_scorer(cfg: &RunConfig, vocab: Option<&Vocabulary>, set: &[LabeledInstance]) -> Result<Scorer> {
    Ok(match cfg.model_kind()? {
        ModelKind::Baseline => Scorer::Baseline(BaselineModel {
            logistic: LogisticModel::zeros(),
            ip_mode: false,
        }),
        ModelKind::Neural(arch) => {
            let (size, delims) = match vocab {
                Some(v) => (v.len(), v.ids_of(&SENTENCE_DELIMS)),
                None => (vocab_size_of(set), Vec::new()),
            };
            Scorer::Neural(IncongruityModel::new(cfg.model(arch, size, delims)?)?)
        }
    })
}

#[derive(Serialize)]
struct ScoreLine<'a> {
    id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<u8>,
    #[serde(flatten)]
    prediction: &'a Prediction,
}

pub fn eval(
    cfg: &RunConfig,
    data: &Path,
    checkpoint: Option<&Path>,
    requested: Option<ModelKind>,
    types: bool,
    out: &Path,
) -> CmdResult {
    let mut man = Manifest::new("eval", cfg)?;
    let (file, dir): (PathBuf, Option<&Path>) = if data.is_dir() {
        (data.join("whole/test.jsonl"), Some(data))
    } else {
        (data.to_path_buf(), None)
    };
    if types && dir.is_none() {
        return Err(Error::Config("--types needs --data to be a dataset directory".into()).into());
    }
    let set = instances(&mut man, &file)?;
    let mut scorer = match checkpoint {
        Some(c) => {
            let s = Scorer::load(&mut man, c)?;
            check_kind(requested, &s)?;
            s
        }
        None => {
            log::warn!("no checkpoint given: scoring with an untrained model");
            let vocab = match dir.map(|d| d.join(VOCAB_FILE)).filter(|p| p.exists()) {
                Some(p) => Some(read_vocab(&mut man, &p)?.0),
                None => None,
            };
            fresh_scorer(cfg, vocab.as_ref(), &set)?
        }
    };
    if cfg.ip()? {
        scorer.set_ip();
    }
    let (docs, labels) = docs_and_labels(&set);
    let preds = scorer.predict(&docs)?;
    let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
    let ids: Vec<&str> = set.iter().map(|i| i.id.as_str()).collect();
    let counts: Vec<usize> = set.iter().map(|i| i.chunks.len()).collect();
    let mut report = EvalReport::compute(
        scorer.name(),
        scorer.ip_mode(),
        &ids,
        &counts,
        &scores,
        &labels,
        &cfg.get_list::<usize>("top_n")?,
    )?;
    if report.auroc.is_none() {
        log::warn!("the evaluation set holds a single class; AUROC is undefined");
    }
    if let Some(d) = dir.filter(|_| types) {
        let mut sets = Vec::new();
        for t in 1..=4u8 {
            let s = instances(&mut man, &d.join(format!("types/type{t}.jsonl")))?;
            let (td, tl) = docs_and_labels(&s);
            let ts = scorer.predict(&td)?.into_iter().map(|p| p.score).collect();
            sets.push((t, ts, tl));
        }
        report.by_type = breakdown_by_type(&sets)?;
    }
    for f in report.write(out)? {
        man.record(out, &f)?;
    }
    let lines: Vec<ScoreLine> = set
        .iter()
        .zip(&preds)
        .map(|(i, p)| ScoreLine {
            id: &i.id,
            label: Some(i.label),
            prediction: p,
        })
        .collect();
    man.output(out, "scores.jsonl", &jsonl(&lines)?)?;
    man.write(out)?;
    let auc = report
        .auroc
        .map(|a| format!("{a:.4}"))
        .unwrap_or_else(|| "undefined".into());
    println!(
        "model={} ip={} n={} accuracy={:.4} auroc={auc}",
        report.model, report.ip_mode, report.n, report.accuracy
    );
    Ok(())
}

/// Reads instance lines (with `headline_ids`) or raw article lines.
fn predict_inputs(bytes: &[u8], vocab: Option<&Vocabulary>, cfg: &RunConfig) -> Result<Vec<(String, Document)>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Format(format!("input is not UTF-8: {e}")))?;
    let mut out = Vec::new();
    let mut raw_lines = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value =
            serde_json::from_str(line).map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?;
        if v.get("headline_ids").is_some() {
            let i: LabeledInstance =
                serde_json::from_value(v).map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?;
            out.push((i.id.clone(), i.document()));
        } else {
            raw_lines.push(line);
        }
    }
    if !raw_lines.is_empty() {
        let vocab =
            vocab.ok_or_else(|| Error::Format("raw articles need vocab.tsv in the checkpoint directory".into()))?;
        let (rules, _) = cfg.cleanse_rules()?;
        let raws: Vec<RawArticle> = read_articles(raw_lines.join("\n").as_bytes())?;
        for r in &raws {
            let e = EncodedArticle::encode(&cleanse(r, &rules)?, vocab)?;
            out.push((e.id.clone(), Document::new(e.headline, e.paragraphs)));
        }
    }
    Ok(out)
}

pub fn predict(cfg: &RunConfig, data: &Path, checkpoint: &Path, out: &Path) -> CmdResult {
    let mut man = Manifest::new("predict", cfg)?;
    let mut scorer = Scorer::load(&mut man, checkpoint)?;
    if cfg.ip()? {
        scorer.set_ip();
    }
    let vocab_path = checkpoint.join(VOCAB_FILE);
    let vocab = if vocab_path.exists() {
        Some(read_vocab(&mut man, &vocab_path)?.0)
    } else {
        None
    };
    let bytes = man.input(data)?;
    let inputs = predict_inputs(&bytes, vocab.as_ref(), cfg)?;
    let docs: Vec<Document> = inputs.iter().map(|(_, d)| d.clone()).collect();
    let preds = scorer.predict(&docs)?;
    let lines: Vec<ScoreLine> = inputs
        .iter()
        .zip(&preds)
        .map(|((id, _), p)| ScoreLine {
            id,
            label: None,
            prediction: p,
        })
        .collect();
    man.output(out, "predictions.jsonl", &jsonl(&lines)?)?;
    man.write(out)?;
    println!(
        "{} predictions -> {}",
        lines.len(),
        out.join("predictions.jsonl").display()
    );
    Ok(())
}

const GRADCHECK_VOCAB: usize = 20;
const GRADCHECK_DOT: u32 = 2;

/// Two short labeled documents with a sentence break and padding.
fn gradcheck_docs(seed: u64) -> Vec<Document> {
    let mut rng = rng_for(seed, "gradcheck");
    let mut seq = |n: usize| -> Vec<u32> { (0..n).map(|_| rng.random_range(3..GRADCHECK_VOCAB as u32)).collect() };
    let mut a = Document::new(seq(3), vec![seq(4), seq(2), seq(6)]);
    a.chunks[2][3] = GRADCHECK_DOT;
    let mut b = Document::new(seq(2), vec![seq(3), seq(3)]);
    b.chunks[0][2] = 0;
    vec![a, b]
}

#[derive(Serialize)]
struct GradcheckRow {
    model: &'static str,
    max_rel_error: f64,
    passes: bool,
    report: incongruity::autograd::GradCheckReport,
}

pub fn gradcheck(cfg: &RunConfig, requested: Option<ModelKind>, out: Option<&Path>) -> CmdResult {
    let archs: Vec<Architecture> = match requested {
        None => Architecture::ALL.to_vec(),
        Some(ModelKind::Neural(a)) => vec![a],
        Some(ModelKind::Baseline) => {
            return Err(Error::Config("the baseline has no autodiff gradients to check".into()).into())
        }
    };
    let eps: f64 = cfg.get("gradcheck.eps")?;
    let tol: f64 = cfg.get("gradcheck.tolerance")?;
    let full: bool = cfg.get("gradcheck.full_size")?;
    let seed = cfg.seed()?;
    let docs = gradcheck_docs(seed);
    let mut rows = Vec::new();
    for arch in archs {
        let mut mcfg = if full {
            cfg.model(arch, GRADCHECK_VOCAB, vec![GRADCHECK_DOT])?
        } else {
            ModelConfig::toy(arch, GRADCHECK_VOCAB)
        };
        mcfg.sentence_delims = vec![GRADCHECK_DOT];
        mcfg.seed = seed;
        let mut model = IncongruityModel::new(mcfg)?;
        let report = model.gradcheck(&docs, &[1, 0], eps)?;
        let max = report.max_rel_error();
        println!(
            "{} max_rel_error={max:.3e} {}",
            arch.name(),
            if max < tol { "ok" } else { "FAIL" }
        );
        rows.push(GradcheckRow {
            model: arch.name(),
            max_rel_error: max,
            passes: max < tol,
            report,
        });
    }
    if let Some(dir) = out {
        let mut man = Manifest::new("gradcheck", cfg)?;
        man.output(dir, "gradcheck.json", &pretty(&rows)?)?;
        man.write(dir)?;
    }
    if let Some(bad) = rows.iter().find(|r| !r.passes || !r.max_rel_error.is_finite()) {
        return Err(Failure::numeric(format!(
            "{} gradient check failed: max relative error {:e} >= {tol:e}",
            bad.model, bad.max_rel_error
        )));
    }
    Ok(())
}
