//! Feature baseline: headline/body similarity features and a logistic
//! classifier.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autograd::sigmoid;
use crate::error::{Error, Result};
use crate::models::{Document, ParagraphScores, Prediction};
use crate::nn::PAD_ID;
use crate::rng::rng_for;

pub const FEATURE_NAMES: [&str; 7] = [
    "tf_cosine",
    "binary_cosine",
    "headline_overlap",
    "shared_1gram",
    "shared_2gram",
    "shared_3gram",
    "length_ratio",
];

pub const NUM_FEATURES: usize = FEATURE_NAMES.len();

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; NUM_FEATURES]);

fn counts<'a, I: IntoIterator<Item = &'a u32>>(ids: I) -> HashMap<u32, f64> {
    let mut c = HashMap::new();
    for &t in ids {
        if t != PAD_ID {
            *c.entry(t).or_insert(0.0) += 1.0;
        }
    }
    c
}

fn cosine(a: &HashMap<u32, f64>, b: &HashMap<u32, f64>) -> f64 {
    let mut keys: Vec<&u32> = a.keys().filter(|k| b.contains_key(k)).collect();
    keys.sort_unstable();
    let dot: f64 = keys.iter().map(|k| a[k] * b[k]).sum();
    let norm = |m: &HashMap<u32, f64>| {
        let mut v: Vec<f64> = m.values().copied().collect();
        v.sort_by(f64::total_cmp);
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    };
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).min(1.0)
    }
}

fn ngrams(seq: &[u32], n: usize) -> HashSet<&[u32]> {
    if seq.len() < n {
        return HashSet::new();
    }
    seq.windows(n).collect()
}

/// Features of a headline against body chunks. N-grams never span chunk
/// boundaries, so every feature ignores the order of the chunks.
pub fn extract_features(headline: &[u32], chunks: &[Vec<u32>]) -> Result<FeatureVector> {
    let head: Vec<u32> = headline.iter().copied().filter(|&t| t != PAD_ID).collect();
    let body: Vec<Vec<u32>> = chunks
        .iter()
        .map(|c| c.iter().copied().filter(|&t| t != PAD_ID).collect::<Vec<_>>())
        .filter(|c| !c.is_empty())
        .collect();
    if head.is_empty() {
        return Err(Error::EmptyInput("headline has no tokens".into()));
    }
    if body.is_empty() {
        return Err(Error::EmptyInput("body has no tokens".into()));
    }
    let hc = counts(&head);
    let bc = counts(body.iter().flatten());
    let binary = |m: &HashMap<u32, f64>| m.keys().map(|&k| (k, 1.0)).collect::<HashMap<u32, f64>>();
    let overlap = hc.keys().filter(|k| bc.contains_key(k)).count() as f64 / hc.len() as f64;
    let mut shared = [0.0; 3];
    for (n, slot) in (1..=3).zip(shared.iter_mut()) {
        let h = ngrams(&head, n);
        if h.is_empty() {
            continue;
        }
        let b: HashSet<&[u32]> = body.iter().flat_map(|c| ngrams(c, n)).collect();
        *slot = h.iter().filter(|g| b.contains(*g)).count() as f64 / h.len() as f64;
    }
    let body_len: usize = body.iter().map(Vec::len).sum();
    Ok(FeatureVector([
        cosine(&hc, &bc),
        cosine(&binary(&hc), &binary(&bc)),
        overlap,
        shared[0],
        shared[1],
        shared[2],
        head.len() as f64 / body_len as f64,
    ]))
}

/// CSV with a header naming each feature.
pub fn write_feature_csv<W: Write>(w: W, rows: &[(String, u8, FeatureVector)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["id", "label"];
    header.extend(FEATURE_NAMES);
    out.write_record(&header)?;
    for (id, label, fv) in rows {
        let mut rec = vec![id.clone(), label.to_string()];
        rec.extend(fv.0.iter().map(|v| v.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            lr: 0.5,
            epochs: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: [f64; NUM_FEATURES],
    pub bias: f64,
}

impl LogisticModel {
    pub fn zeros() -> Self {
        LogisticModel {
            weights: [0.0; NUM_FEATURES],
            bias: 0.0,
        }
    }

    pub fn score(&self, x: &FeatureVector) -> f64 {
        let z: f64 = self.weights.iter().zip(&x.0).map(|(w, v)| w * v).sum::<f64>() + self.bias;
        sigmoid(z)
    }
}

/// Stochastic gradient descent on binary cross-entropy, one seeded pass
/// order per epoch.
pub fn train_logistic(xs: &[FeatureVector], labels: &[u8], cfg: &LogisticConfig) -> Result<LogisticModel> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("no training instances".into()));
    }
    if xs.len() != labels.len() {
        return Err(Error::Contract("features and labels differ in length".into()));
    }
    let mut m = LogisticModel::zeros();
    let mut rng = rng_for(cfg.seed, "logistic");
    let mut order: Vec<usize> = (0..xs.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let err = m.score(&xs[i]) - f64::from(labels[i]);
            for (w, v) in m.weights.iter_mut().zip(&xs[i].0) {
                *w -= cfg.lr * err * v;
            }
            m.bias -= cfg.lr * err;
        }
    }
    Ok(m)
}

/// Logistic baseline applied to documents, optionally per paragraph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub logistic: LogisticModel,
    pub ip_mode: bool,
}

pub const BASELINE_FILE: &str = "baseline.json";

impl BaselineModel {
    /// In IP mode `docs` are headline/paragraph pairs.
    pub fn train(docs: &[Document], labels: &[u8], ip_mode: bool, cfg: &LogisticConfig) -> Result<Self> {
        let xs = docs
            .iter()
            .map(|d| extract_features(&d.headline, &d.chunks))
            .collect::<Result<Vec<_>>>()?;
        Ok(BaselineModel {
            logistic: train_logistic(&xs, labels, cfg)?,
            ip_mode,
        })
    }

    pub fn score_document(&self, doc: &Document) -> Result<f64> {
        Ok(self.logistic.score(&extract_features(&doc.headline, &doc.chunks)?))
    }

    /// Maximum over per-paragraph scores.
    pub fn ip_score(&self, doc: &Document) -> Result<(f64, ParagraphScores)> {
        let scores = doc
            .chunks
            .iter()
            .filter(|c| c.iter().any(|&t| t != PAD_ID))
            .map(|c| self.score_document(&Document::new(doc.headline.clone(), vec![c.clone()])))
            .collect::<Result<Vec<_>>>()?;
        if scores.is_empty() {
            return Err(Error::EmptyInput("body has no tokens".into()));
        }
        let ps = ParagraphScores { scores };
        Ok((ps.max(), ps))
    }

    pub fn predict(&self, docs: &[Document]) -> Result<Vec<Prediction>> {
        docs.iter()
            .map(|d| {
                if self.ip_mode {
                    let (score, ps) = self.ip_score(d)?;
                    Ok(Prediction {
                        score,
                        per_paragraph_scores: Some(ps.scores),
                        attention: None,
                    })
                } else {
                    Ok(Prediction {
                        score: self.score_document(d)?,
                        per_paragraph_scores: None,
                        attention: None,
                    })
                }
            })
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(BASELINE_FILE), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(dir.join(BASELINE_FILE))?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    #[test]
    fn identical_text() {
        let f = extract_features(&[3, 4, 5], &[vec![3, 4, 5]]).unwrap();
        assert!((f.0[0] - 1.0).abs() < 1e-12);
        assert!((f.0[1] - 1.0).abs() < 1e-12);
        assert_eq!(f.0[2], 1.0);
        assert_eq!(&f.0[3..6], &[1.0, 1.0, 1.0]);
        assert_eq!(f.0[6], 1.0);
    }

    #[test]
    fn disjoint_text() {
        let f = extract_features(&[3, 4], &[vec![5, 6, 7]]).unwrap();
        assert_eq!(&f.0[..6], &[0.0; 6]);
        assert!(extract_features(&[3], &[vec![0, 0]]).is_err());
    }

    #[test]
    fn chunk_order_invariance() {
        let mut rng = seeded(3);
        for _ in 0..50 {
            let head: Vec<u32> = (0..4).map(|_| rng.random_range(2..12)).collect();
            let mut chunks: Vec<Vec<u32>> = (0..4)
                .map(|_| (0..6).map(|_| rng.random_range(2..12)).collect())
                .collect();
            let f = extract_features(&head, &chunks).unwrap();
            chunks.reverse();
            assert_eq!(extract_features(&head, &chunks).unwrap(), f);
        }
    }

    #[test]
    fn zero_model_scores_half() {
        let f = extract_features(&[3], &[vec![3]]).unwrap();
        assert_eq!(LogisticModel::zeros().score(&f), 0.5);
    }

    #[test]
    fn separable_set_is_learned() {
        let mut rng = seeded(4);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..100 {
            let y = rng.random_range(0..2u8);
            let mut v = [0.0; NUM_FEATURES];
            for x in v.iter_mut() {
                *x = rng.random::<f64>();
            }
            v[0] = if y == 1 {
                rng.random_range(0.0..0.4)
            } else {
                rng.random_range(0.6..1.0)
            };
            xs.push(FeatureVector(v));
            ys.push(y);
        }
        let cfg = LogisticConfig::default();
        let m = train_logistic(&xs, &ys, &cfg).unwrap();
        let acc = xs
            .iter()
            .zip(&ys)
            .filter(|(x, &y)| (m.score(x) >= 0.5) == (y == 1))
            .count();
        assert_eq!(acc, 100);
        assert_eq!(train_logistic(&xs, &ys, &cfg).unwrap(), m);
        assert!(train_logistic(&[], &[], &cfg).is_err());
    }

    #[test]
    fn ip_is_max() {
        let m = BaselineModel {
            logistic: LogisticModel {
                weights: [-3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
                bias: 1.0,
            },
            ip_mode: true,
        };
        let d = Document::new(vec![3, 4], vec![vec![3, 4], vec![7, 8], vec![3, 9]]);
        let (s, ps) = m.ip_score(&d).unwrap();
        assert_eq!(ps.scores.len(), 3);
        assert_eq!(s, ps.scores.iter().copied().fold(f64::MIN, f64::max));
        let single = m.score_document(&Document::new(vec![3, 4], vec![vec![7, 8]])).unwrap();
        assert_eq!(ps.scores[1], single);
    }

    #[test]
    fn csv_header() {
        let mut b = Vec::new();
        let f = extract_features(&[3], &[vec![3]]).unwrap();
        write_feature_csv(&mut b, &[("a".into(), 1, f)]).unwrap();
        let text = String::from_utf8(b).unwrap();
        assert!(text.starts_with("id,label,tf_cosine,binary_cosine,headline_overlap,shared_1gram"));
        assert_eq!(text.lines().count(), 2);
    }
}
