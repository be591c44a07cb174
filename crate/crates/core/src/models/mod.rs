//! Article scorers: RDE, CDE, AHDE and HRE, with the independent-paragraph
//! wrapper.

mod config;
mod document;
mod encoder;
mod model;

pub use config::{Architecture, ChunkPooling, ModelConfig};
pub use document::{split_sentences, step_accounting, Document, StepAccounting};
pub use encoder::{nll_loss, ArticleEncoding, Encoder, Layers};
pub use model::{IncongruityModel, ParagraphScores, Prediction, CONFIG_FILE, PARAMS_FILE, SCORE_BATCH};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::{Graph, Tensor};
    use crate::rng::seeded;
    use rand::Rng;

    const VOCAB: usize = 20;
    const DOT: u32 = 2;

    fn toy(arch: Architecture) -> IncongruityModel {
        let mut c = ModelConfig::toy(arch, VOCAB);
        c.sentence_delims = vec![DOT];
        c.seed = 7;
        IncongruityModel::new(c).unwrap()
    }

    fn random_doc<R: Rng>(rng: &mut R, max_paras: usize) -> Document {
        let mut seq = |n: usize| -> Vec<u32> { (0..n).map(|_| rng.random_range(3..VOCAB as u32)).collect() };
        let head = seq(3);
        let paras = (0..max_paras).map(|_| seq(5)).collect::<Vec<_>>();
        let mut doc = Document::new(head, paras);
        // a sentence break inside each paragraph
        for c in &mut doc.chunks {
            c[2] = DOT;
        }
        doc
    }

    fn zero_scorer(m: &mut IncongruityModel) {
        let s = m.encoder.scorer().clone();
        for id in [s.m, s.b] {
            m.params.get_mut(id).tensor.data_mut().fill(0.0);
        }
    }

    #[test]
    fn zero_scorer_gives_half() {
        let mut rng = seeded(1);
        for arch in Architecture::ALL {
            let mut m = toy(arch);
            zero_scorer(&mut m);
            let d = random_doc(&mut rng, 3);
            assert_eq!(m.score_document(&d).unwrap(), 0.5, "{}", arch.name());
        }
    }

    #[test]
    fn scores_in_open_unit_interval() {
        let mut rng = seeded(2);
        for arch in Architecture::ALL {
            let m = toy(arch);
            let docs: Vec<Document> = (0..100).map(|i| random_doc(&mut rng, 1 + i % 3)).collect();
            for s in m.score_documents(&docs).unwrap() {
                assert!(s > 0.0 && s < 1.0);
            }
        }
    }

    #[test]
    fn batch_scores_match_single_scores() {
        let mut rng = seeded(3);
        for arch in Architecture::ALL {
            let m = toy(arch);
            let docs: Vec<Document> = (0..7).map(|i| random_doc(&mut rng, 1 + i % 3)).collect();
            let batch = m.score_documents(&docs).unwrap();
            for (d, s) in docs.iter().zip(batch) {
                assert_eq!(m.score_document(d).unwrap(), s, "{}", arch.name());
            }
        }
    }

    #[test]
    fn trailing_pads_do_not_change_scores() {
        let mut rng = seeded(4);
        for arch in [Architecture::Rde, Architecture::Ahde, Architecture::Hre] {
            let m = toy(arch);
            let d = random_doc(&mut rng, 2);
            let mut padded = d.clone();
            padded.headline.extend([0, 0]);
            for c in &mut padded.chunks {
                c.extend([0, 0, 0]);
            }
            if arch == Architecture::Rde {
                // pads only at the very end of the flattened body
                padded.chunks = d.chunks.clone();
                padded.chunks.last_mut().unwrap().extend([0; 5]);
            }
            assert_eq!(m.score_document(&d).unwrap(), m.score_document(&padded).unwrap());
        }
    }

    #[test]
    fn truncation_idempotent_scores() {
        let mut rng = seeded(5);
        let mut m = toy(Architecture::Ahde);
        m.encoder.config.max_tokens = 3;
        m.encoder.config.max_chunks = 2;
        let d = random_doc(&mut rng, 4);
        let t = d.truncated(3, 2);
        assert_eq!(m.score_document(&d).unwrap(), m.score_document(&t).unwrap());
    }

    #[test]
    fn single_paragraph_attention_is_one() {
        let mut rng = seeded(6);
        let m = toy(Architecture::Ahde);
        let d = random_doc(&mut rng, 1);
        let p = m.predict(std::slice::from_ref(&d)).unwrap();
        assert_eq!(p[0].attention.as_deref(), Some(&[1.0][..]));
        let docs: Vec<Document> = (0..5).map(|i| random_doc(&mut rng, 1 + i)).collect();
        for (d, p) in docs.iter().zip(m.predict(&docs).unwrap()) {
            let a = p.attention.unwrap();
            assert_eq!(a.len(), d.chunks.len());
            assert!(a.iter().all(|&w| w >= 0.0));
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ip_score_is_max_of_paragraph_scores() {
        let mut rng = seeded(8);
        for arch in Architecture::ALL {
            let mut m = toy(arch);
            m.encoder.config.ip_mode = true;
            let docs: Vec<Document> = (0..20).map(|i| random_doc(&mut rng, 1 + i % 4)).collect();
            let preds = m.predict(&docs).unwrap();
            for (d, p) in docs.iter().zip(preds) {
                let subs = m.paragraph_documents(d).unwrap();
                let singles: Vec<f64> = subs.iter().map(|s| m.score_document(s).unwrap()).collect();
                assert_eq!(p.per_paragraph_scores.as_deref(), Some(singles.as_slice()));
                let max = singles.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(p.score, max);
                assert_eq!(m.ip_score(d).unwrap().0, max);
            }
        }
    }

    #[test]
    fn ip_single_paragraph_is_identity() {
        let mut rng = seeded(9);
        let m = toy(Architecture::Rde);
        let d = random_doc(&mut rng, 1);
        let sub = &m.paragraph_documents(&d).unwrap()[0];
        assert_eq!(m.ip_score(&d).unwrap().0, m.score_document(sub).unwrap());
    }

    #[test]
    fn ip_is_paragraph_order_invariant() {
        let mut rng = seeded(10);
        let mut m = toy(Architecture::Ahde);
        m.encoder.config.ip_mode = true;
        let d = random_doc(&mut rng, 4);
        let mut rev = d.clone();
        rev.chunks.reverse();
        assert_eq!(m.ip_score(&d).unwrap().0, m.ip_score(&rev).unwrap().0);
    }

    #[test]
    fn paragraph_scores_max() {
        let s = ParagraphScores {
            scores: vec![0.2, 0.9, 0.4],
        };
        assert_eq!(s.max(), 0.9);
    }

    #[test]
    fn hre_mean_pooling_properties() {
        let mut m = toy(Architecture::Hre);
        let head = vec![3, 4];
        let once = Document::new(head.clone(), vec![vec![5, 6, 7]]);
        let twice = Document::new(head.clone(), vec![vec![5, 5, 6, 6, 7, 7]]);
        assert_eq!(m.score_document(&once).unwrap(), m.score_document(&twice).unwrap());
        m.encoder.config.hre_pooling = ChunkPooling::Sum;
        assert_ne!(m.score_document(&once).unwrap(), m.score_document(&twice).unwrap());
    }

    #[test]
    fn cde_max_pooling_swap_invariance() {
        // widths are at most 3 and each block is fenced by two filler
        // tokens, so swapping the blocks keeps the multiset of windows
        let m = toy(Architecture::Cde);
        let s = |x: &[u32]| m.score_document(&Document::new(vec![3, 4], vec![x.to_vec()])).unwrap();
        let base = [5, 5, 6, 7, 8, 5, 5, 9, 10, 11, 5, 5];
        let swapped = [5, 5, 9, 10, 11, 5, 5, 6, 7, 8, 5, 5];
        assert_eq!(s(&base), s(&swapped));
        let local = [5, 5, 7, 6, 8, 5, 5, 9, 10, 11, 5, 5];
        assert_ne!(s(&base), s(&local));
    }

    #[test]
    fn shared_weights_between_headline_and_body() {
        let m = toy(Architecture::Rde);
        let emb = m.encoder.embedding().table;
        let d = Document::new(vec![3, 4], vec![vec![5, 6]]);
        let mut g = Graph::new(&m.params);
        let loss = m.encoder.loss(&mut g, &[d], &[1], None).unwrap();
        let grads = g.backward(loss).unwrap();
        let ge = grads.get(emb).unwrap();
        let dim = m.config().embed_dim;
        for tok in [3usize, 4, 5, 6] {
            assert!(ge[tok * dim..(tok + 1) * dim].iter().any(|&x| x != 0.0));
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = toy(Architecture::Hre);
        m.save(dir.path()).unwrap();
        let back = IncongruityModel::load(dir.path()).unwrap();
        let d = Document::new(vec![3, 4], vec![vec![5, 6], vec![7]]);
        assert_eq!(m.score_document(&d).unwrap(), back.score_document(&d).unwrap());
        assert_eq!(back.config(), m.config());
    }

    #[test]
    fn nll_examples() {
        let store = crate::autograd::ParamStore::new();
        let mut g = Graph::new(&store);
        let p = g.constant(Tensor::matrix(2, 1, vec![0.9, 0.1]).unwrap());
        let l = nll_loss(&mut g, p, &[1, 0]).unwrap();
        assert!((g.value(l).item() - (-(0.9f64.ln()))).abs() < 1e-12);
        let q = g.constant(Tensor::matrix(1, 1, vec![1.0]).unwrap());
        let l = nll_loss(&mut g, q, &[1]).unwrap();
        assert!(g.value(l).item() < 1e-11);
        assert!(nll_loss(&mut g, q, &[1, 0]).is_err());
    }

    #[test]
    fn toy_gradients_match_finite_differences() {
        let docs = vec![
            Document::new(
                vec![3, 4, 5],
                vec![vec![6, 7, 8, 9], vec![10, 11], vec![12, 13, 14, 15, 16, 17]],
            ),
            Document::new(vec![18, 19], vec![vec![4, 9, 0], vec![7, 3, 5]]),
        ];
        for arch in Architecture::ALL {
            let mut m = toy(arch);
            let report = m.gradcheck(&docs, &[1, 0], 1e-5).unwrap();
            assert!(report.passes(1e-4), "{}: {:?}", arch.name(), report.worst());
        }
    }
}
