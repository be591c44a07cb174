//! Mini-batch training with Adam, gradient clipping and dev-set model
//! selection.

mod optim;

pub use optim::{clip_global_norm, clip_store_grads, global_norm, AdamConfig, AdamState};

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, ParamStore};
use crate::corpus::LabeledInstance;
use crate::error::{Error, Result};
use crate::metrics::{accuracy, auroc};
use crate::models::{Document, IncongruityModel};
use crate::rng::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Optional cap on optimizer steps.
    pub max_steps: Option<usize>,
    pub clip_norm: f64,
    /// Steps between dev evaluations.
    pub eval_every: usize,
    /// Evaluations without dev AUROC improvement before stopping.
    pub patience: usize,
    /// Optional wall-clock budget in seconds.
    pub time_budget_secs: Option<f64>,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            max_epochs: 10,
            max_steps: None,
            clip_norm: 1.0,
            eval_every: 500,
            patience: 5,
            time_budget_secs: None,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.eval_every == 0 {
            return Err(Error::Config(
                "batch_size, max_epochs and eval_every must be positive".into(),
            ));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        if self.max_steps == Some(0) {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryRow {
    pub step: usize,
    /// Mean batch loss since the previous evaluation.
    pub train_loss: f64,
    pub dev_acc: f64,
    pub dev_auroc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
    MaxSteps,
    TimeBudget,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    /// The model with its best-dev parameters.
    pub model: IncongruityModel,
    pub history: Vec<HistoryRow>,
    pub best_step: usize,
    pub best_dev_auroc: f64,
    pub final_dev_auroc: f64,
    pub steps: usize,
    pub stopped: StopReason,
    pub seconds: f64,
}

pub fn write_history<W: Write>(w: W, history: &[HistoryRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["step", "train_loss", "dev_acc", "dev_auroc"])?;
    for r in history {
        out.write_record([
            r.step.to_string(),
            r.train_loss.to_string(),
            r.dev_acc.to_string(),
            r.dev_auroc.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Dev accuracy and AUROC of `model` (independent-paragraph scoring when the
/// model is in IP mode).
pub fn evaluate(model: &IncongruityModel, docs: &[Document], labels: &[u8]) -> Result<(f64, f64)> {
    let scores: Vec<f64> = model.predict(docs)?.into_iter().map(|p| p.score).collect();
    Ok((accuracy(&scores, labels)?, auroc(&scores, labels)?))
}

fn split_instances(instances: &[LabeledInstance]) -> (Vec<Document>, Vec<u8>) {
    (
        instances.iter().map(LabeledInstance::document).collect(),
        instances.iter().map(|i| i.label).collect(),
    )
}

/// Trains `model` on `train` and selects the parameters with the best dev
/// AUROC. On a non-finite loss the best parameters so far (or the initial
/// ones) are written to `checkpoint_dir`, if given, and
/// [`Error::Diverged`] is returned.
pub fn train(
    mut model: IncongruityModel,
    train: &[LabeledInstance],
    dev: &[LabeledInstance],
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainResult> {
    cfg.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::EmptyInput("training needs non-empty train and dev sets".into()));
    }
    let start = Instant::now();
    let config = model.config().clone();
    let (train_docs, train_labels) = split_instances(train);
    let train_docs = train_docs
        .iter()
        .map(|d| d.prepare(&config))
        .collect::<Result<Vec<_>>>()?;
    let (dev_docs, dev_labels) = split_instances(dev);

    let mut adam = AdamState::new(&model.params, cfg.adam)?;
    let mut dropout_rng = rng_for(cfg.seed, "dropout");
    let mut best: Option<(ParamStore, f64, usize)> = None;
    let mut history = Vec::new();
    let mut since_best = 0usize;
    let mut step = 0usize;
    let mut last_eval_step = 0usize;
    let mut interval_loss = 0.0;
    let mut interval_batches = 0usize;
    let mut final_dev_auroc = f64::NAN;
    let mut order: Vec<usize> = (0..train_docs.len()).collect();

    let do_eval = |model: &IncongruityModel,
                   step: usize,
                   loss_sum: f64,
                   batches: usize,
                   best: &mut Option<(ParamStore, f64, usize)>,
                   history: &mut Vec<HistoryRow>|
     -> Result<(f64, bool)> {
        let (acc, auc) = evaluate(model, &dev_docs, &dev_labels)?;
        history.push(HistoryRow {
            step,
            train_loss: loss_sum / batches.max(1) as f64,
            dev_acc: acc,
            dev_auroc: auc,
        });
        log::info!(
            "step {step}: train loss {:.5}, dev acc {acc:.4}, dev auroc {auc:.4}",
            loss_sum / batches.max(1) as f64
        );
        let improved = best.as_ref().is_none_or(|b| auc > b.1);
        if improved {
            *best = Some((model.params.clone(), auc, step));
        }
        Ok((auc, improved))
    };

    let stopped = 'outer: {
        for epoch in 0..cfg.max_epochs {
            order.shuffle(&mut rng_for(cfg.seed, &format!("epoch/{epoch}")));
            for batch in order.chunks(cfg.batch_size) {
                let docs: Vec<Document> = batch.iter().map(|&i| train_docs[i].clone()).collect();
                let labels: Vec<u8> = batch.iter().map(|&i| train_labels[i]).collect();
                model.params.zero_grads();
                let (loss, grads) = {
                    let mut g = Graph::new(&model.params);
                    let loss = model.encoder.loss(&mut g, &docs, &labels, Some(&mut dropout_rng))?;
                    let value = g.value(loss).item();
                    if !value.is_finite() {
                        (value, None)
                    } else {
                        (value, Some(g.backward(loss)?))
                    }
                };
                let Some(grads) = grads else {
                    if let Some(dir) = checkpoint_dir {
                        if let Some((params, _, _)) = &best {
                            model.params = params.clone();
                        }
                        model.save(dir)?;
                    }
                    return Err(Error::Diverged { step: step + 1 });
                };
                grads.accumulate_into(&mut model.params);
                clip_store_grads(&mut model.params, cfg.clip_norm);
                adam.step(&mut model.params)?;
                step += 1;
                interval_loss += loss;
                interval_batches += 1;

                if step % cfg.eval_every == 0 {
                    let (auc, improved) =
                        do_eval(&model, step, interval_loss, interval_batches, &mut best, &mut history)?;
                    final_dev_auroc = auc;
                    last_eval_step = step;
                    interval_loss = 0.0;
                    interval_batches = 0;
                    since_best = if improved { 0 } else { since_best + 1 };
                    if since_best >= cfg.patience {
                        break 'outer StopReason::Patience;
                    }
                }
                if cfg.max_steps.is_some_and(|m| step >= m) {
                    break 'outer StopReason::MaxSteps;
                }
                if cfg.time_budget_secs.is_some_and(|b| start.elapsed().as_secs_f64() >= b) {
                    break 'outer StopReason::TimeBudget;
                }
            }
        }
        StopReason::MaxEpochs
    };
    if last_eval_step != step || history.is_empty() {
        let (auc, _) = do_eval(&model, step, interval_loss, interval_batches, &mut best, &mut history)?;
        final_dev_auroc = auc;
    }
    let (params, best_dev_auroc, best_step) = best.expect("at least one evaluation");
    model.params = params;
    if let Some(dir) = checkpoint_dir {
        model.save(dir)?;
    }
    Ok(TrainResult {
        model,
        history,
        best_step,
        best_dev_auroc,
        final_dev_auroc,
        steps: step,
        stopped,
        seconds: start.elapsed().as_secs_f64(),
    })
}
