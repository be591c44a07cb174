//! Trains one model on the synthetic two-topic corpus and reports dev and
//! test AUROC.
//!
//! `cargo run --release --example desk_benchmark -- ahde [seconds] [seed]`

use std::time::Instant;

use incongruity::baseline::{BaselineModel, LogisticConfig};
use incongruity::corpus::{build_dataset, gen_toy_corpus, BuildOptions, DatasetConfig, DonorMode, ToyCorpusConfig};
use incongruity::metrics::auroc;
use incongruity::models::{Architecture, IncongruityModel, ModelConfig};
use incongruity::train::{evaluate, train, TrainConfig};

fn main() -> incongruity::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let name = args.first().map(String::as_str).unwrap_or("ahde");
    let budget: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(600.0);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);

    let start = Instant::now();
    let raw = gen_toy_corpus(&ToyCorpusConfig::new(2, 1500, 50, seed))?;
    let opts = BuildOptions {
        dataset: DatasetConfig {
            train_fraction: 2.0 / 3.0,
            dev_fraction: 1.0 / 6.0,
            donor_mode: DonorMode::CrossTopic,
            seed,
            ..DatasetConfig::default()
        },
        paragraph_set: true,
        ..BuildOptions::default()
    };
    let data = build_dataset(&raw, &opts)?;
    let w = &data.whole;
    println!(
        "dataset: {} / {} / {} in {:.1}s",
        w.train.len(),
        w.dev.len(),
        w.test.len(),
        start.elapsed().as_secs_f64()
    );

    if name == "baseline" {
        let docs: Vec<_> = w.train.iter().map(|i| i.document()).collect();
        let labels: Vec<u8> = w.train.iter().map(|i| i.label).collect();
        let m = BaselineModel::train(&docs, &labels, false, &LogisticConfig::default())?;
        for (split, set) in [("dev", &w.dev), ("test", &w.test)] {
            let d: Vec<_> = set.iter().map(|i| i.document()).collect();
            let l: Vec<u8> = set.iter().map(|i| i.label).collect();
            let s: Vec<f64> = m.predict(&d)?.into_iter().map(|p| p.score).collect();
            println!("baseline {split} auroc {:.4}", auroc(&s, &l)?);
        }
        return Ok(());
    }

    let arch: Architecture = name.parse()?;
    let mut cfg = ModelConfig::new(arch, data.vocab.len());
    cfg.embed_dim = 32;
    cfg.word_hidden = 32;
    cfg.para_hidden = 16;
    cfg.conv_filters = 16;
    cfg.sentence_delims = data.sentence_delims.clone();
    cfg.seed = seed;
    let tc = TrainConfig {
        batch_size: 32,
        max_epochs: 40,
        eval_every: 50,
        patience: 20,
        time_budget_secs: Some(budget),
        seed,
        ..TrainConfig::default()
    };
    let res = train(IncongruityModel::new(cfg)?, &w.train, &w.dev, &tc, None)?;
    let test_docs: Vec<_> = w.test.iter().map(|i| i.document()).collect();
    let test_labels: Vec<u8> = w.test.iter().map(|i| i.label).collect();
    let (acc, auc) = evaluate(&res.model, &test_docs, &test_labels)?;
    println!(
        "{name}: best dev auroc {:.4} at step {} ({:?} after {} steps, {:.1}s); test acc {acc:.4} auroc {auc:.4}",
        res.best_dev_auroc, res.best_step, res.stopped, res.steps, res.seconds
    );
    Ok(())
}
