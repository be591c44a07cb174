//! Corpus ingestion and labeled dataset generation.

mod cleanse;
mod dataset;
mod fnc;
mod implant;
mod raw;
mod tokenize;
mod toy;

pub use cleanse::{cleanse, CleanseRules};
pub use dataset::{
    build_dataset, check_article_disjointness, check_headline_disjointness, dataset_stats, make_paragraph_dataset,
    make_type_testsets, make_whole_dataset, read_instances, read_instances_file, sha256_hex, split_articles,
    write_instances, BuildOptions, BuiltDataset, DatasetConfig, DatasetStats, DonorMode, Splits, SENTENCE_DELIMS,
    SPLIT_NAMES,
};
pub use fnc::{import_fnc_style, split_paragraphs, stance_label, FncImport, FncPair, RejectedRow};
pub use implant::{
    feasible_rule1, feasible_rule2, implant_rule1, implant_rule2, EncodedArticle, LabeledInstance, Provenance,
};
pub use raw::{read_articles, write_articles, RawArticle};
pub use tokenize::{tokenize_text, Vocabulary, PAD, PAD_ID, UNK, UNK_ID};
pub use toy::{gen_toy_corpus, topic_name, toy_vocabularies, ToyCorpusConfig};
