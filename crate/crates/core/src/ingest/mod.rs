//! Building pair datasets from text corpora and rating logs, splitting them,
//! and loading the word-similarity and analogy benchmark files.

mod cache;
mod dataset;
mod eval_files;
mod ratings;
mod text;

pub use cache::{load_pair_cache, save_pair_cache};
pub use dataset::{split_dataset, split_sizes, PairDataset, Split};
pub use eval_files::{
    load_analogy_file, load_similarity_file, parse_analogy, parse_similarity, AnalogyQuad, AnalogySection,
    SimilarityTriple,
};
pub use ratings::{load_ratings_csv, pairs_from_ratings, RatingEvent, RatingsColumns};
pub use text::{pairs_from_text, pairs_from_text_with, read_corpus, WindowOptions};
