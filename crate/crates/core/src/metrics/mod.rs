//! Lexical and statistical primitives shared by the detectors and reports.

mod bleu;
mod ngram;
mod stats;
mod tokenize;

pub use bleu::{spbleu, MAX_ORDER};
pub use ngram::{top_ngram, top_ngram_count, NgramProfile};
pub use stats::{
    mean, median_lower, nearest_rank_index, pearson, quantile, quantile_sorted, snap_product, Correlation,
};
pub use tokenize::{TokenSequence, Tokenizer, WhitespacePunct};
