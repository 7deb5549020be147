//! Dataset descriptors and their resolution into training data.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    load_pair_cache, load_ratings_csv, pairs_from_ratings, pairs_from_text_with, read_corpus, split_dataset, PairDataset,
    RatingsColumns, Split, WindowOptions,
};
use crate::synthetic::{build_mixture, sample_pairs, GroundTruth};
use crate::textgen::{generate_corpus, TextGenOptions};
use crate::vocab::Vocab;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Pairs sampled from a discretized Gaussian mixture.
    Synthetic {
        card: usize,
        components: usize,
        n_pairs: usize,
        #[serde(default)]
        mixture_seed: u64,
        #[serde(default = "default_sample_seed")]
        sample_seed: u64,
        #[serde(default = "default_sigma")]
        sigma_range: [f64; 2],
    },
    /// Whitespace-tokenized text file.
    Text {
        path: PathBuf,
        window: usize,
        vocab_size: usize,
        #[serde(default)]
        max_bytes: Option<u64>,
        #[serde(default)]
        bidirectional: bool,
        #[serde(default = "default_fractions")]
        split: [f64; 3],
        #[serde(default)]
        split_seed: u64,
    },
    /// Generated text-like corpus (see [`crate::textgen`]).
    GeneratedText {
        #[serde(default)]
        generator: TextGenOptions,
        window: usize,
        vocab_size: usize,
        #[serde(default)]
        max_bytes: Option<u64>,
        #[serde(default = "default_fractions")]
        split: [f64; 3],
        #[serde(default)]
        split_seed: u64,
    },
    /// Ratings CSV turned into item-to-item pairs.
    Ratings {
        path: PathBuf,
        #[serde(default = "default_threshold")]
        threshold: f64,
        max_items: usize,
        window: usize,
        #[serde(default)]
        columns: RatingsColumns,
        #[serde(default = "default_fractions")]
        split: [f64; 3],
        #[serde(default)]
        split_seed: u64,
    },
    /// Previously cached pairs with their split, optionally with the
    /// ground truth they were sampled from.
    Cache {
        path: PathBuf,
        #[serde(default)]
        ground_truth: Option<PathBuf>,
    },
}

fn default_sample_seed() -> u64 {
    1
}

fn default_sigma() -> [f64; 2] {
    [0.02, 0.08]
}

fn default_fractions() -> [f64; 3] {
    [0.7, 0.1, 0.2]
}

fn default_threshold() -> f64 {
    4.0
}

/// Vocabulary, pairs with split, and the ground truth when synthetic.
/// Vocabulary counts reflect the training split only.
#[derive(Clone, Debug)]
pub struct TrainingData {
    pub vocab: Vocab,
    pub dataset: PairDataset,
    pub ground_truth: Option<GroundTruth>,
}

impl TrainingData {
    /// Recounts the vocabulary on the training split.
    pub fn new(mut vocab: Vocab, dataset: PairDataset, ground_truth: Option<GroundTruth>) -> Result<Self> {
        dataset.validate(vocab.card_i(), vocab.card_j())?;
        vocab.recount(&dataset.subset(Split::Train))?;
        if let Some(gt) = &ground_truth {
            if gt.card_i() != vocab.card_i() || gt.card_j() != vocab.card_j() {
                return Err(Error::Config("ground truth and vocabulary sizes differ".into()));
            }
        }
        Ok(TrainingData {
            vocab,
            dataset,
            ground_truth,
        })
    }

    pub fn synthetic(gt: GroundTruth, dataset: PairDataset) -> Result<Self> {
        TrainingData::new(gt.vocab(), dataset, Some(gt))
    }

    pub fn train_pairs(&self) -> Vec<(usize, usize)> {
        self.dataset.subset(Split::Train)
    }
}

fn text_data(tokens: &[String], opts: WindowOptions, split: [f64; 3], seed: u64) -> Result<TrainingData> {
    let (vocab, ds) = pairs_from_text_with(tokens, opts)?;
    if ds.is_empty() {
        return Err(Error::Data("corpus produced no pairs".into()));
    }
    TrainingData::new(vocab, split_dataset(&ds, split, seed)?, None)
}

impl DatasetSpec {
    pub fn load(&self) -> Result<TrainingData> {
        match self {
            DatasetSpec::Synthetic {
                card,
                components,
                n_pairs,
                mixture_seed,
                sample_seed,
                sigma_range,
            } => {
                let gt = build_mixture(*card, *card, *components, *mixture_seed, (sigma_range[0], sigma_range[1]))?;
                let ds = sample_pairs(&gt, *n_pairs, *sample_seed)?;
                TrainingData::synthetic(gt, ds)
            }
            DatasetSpec::Text {
                path,
                window,
                vocab_size,
                max_bytes,
                bidirectional,
                split,
                split_seed,
            } => {
                let tokens = read_corpus(path, *max_bytes)?;
                let opts = WindowOptions {
                    window: *window,
                    vocab_size: *vocab_size,
                    bidirectional: *bidirectional,
                };
                text_data(&tokens, opts, *split, *split_seed)
            }
            DatasetSpec::GeneratedText {
                generator,
                window,
                vocab_size,
                max_bytes,
                split,
                split_seed,
            } => {
                let text = generate_corpus(generator)?;
                let text = match max_bytes {
                    Some(n) if (*n as usize) < text.len() => {
                        let cut = &text[..*n as usize];
                        // a token cut at the boundary is dropped
                        match cut.rfind(' ') {
                            Some(p) if !text[*n as usize..].starts_with(' ') => &cut[..p],
                            _ => cut,
                        }
                    }
                    _ => &text[..],
                };
                let tokens: Vec<String> = text.split_whitespace().map(str::to_owned).collect();
                let opts = WindowOptions {
                    window: *window,
                    vocab_size: *vocab_size,
                    bidirectional: false,
                };
                text_data(&tokens, opts, *split, *split_seed)
            }
            DatasetSpec::Ratings {
                path,
                threshold,
                max_items,
                window,
                columns,
                split,
                split_seed,
            } => {
                let events = load_ratings_csv(path, columns)?;
                let (vocab, ds) = pairs_from_ratings(&events, *threshold, *max_items, *window)?;
                if ds.is_empty() {
                    return Err(Error::Data(format!(
                        "no item pairs survive rating threshold {threshold} in {}",
                        path.display()
                    )));
                }
                TrainingData::new(vocab, split_dataset(&ds, *split, *split_seed)?, None)
            }
            DatasetSpec::Cache { path, ground_truth } => {
                let (vocab, ds) = load_pair_cache(path)?;
                if ds.is_empty() {
                    return Err(Error::Data("cached dataset is empty".into()));
                }
                let gt = ground_truth.as_ref().map(GroundTruth::load).transpose()?;
                TrainingData::new(vocab, ds, gt)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_spec_from_toml() {
        let spec: DatasetSpec =
            toml::from_str("kind = \"synthetic\"\ncard = 12\ncomponents = 3\nn_pairs = 500\n").unwrap();
        let data = spec.load().unwrap();
        assert_eq!(data.vocab.card_i(), 12);
        assert_eq!(data.vocab.total_pairs(), 500);
        assert!(data.ground_truth.is_some());
    }

    #[test]
    fn counts_come_from_train_split_only() {
        let spec = DatasetSpec::GeneratedText {
            generator: TextGenOptions {
                n_tokens: 3000,
                ..Default::default()
            },
            window: 2,
            vocab_size: 100,
            max_bytes: None,
            split: [0.7, 0.1, 0.2],
            split_seed: 4,
        };
        let d = spec.load().unwrap();
        assert_eq!(d.vocab.total_pairs() as usize, d.dataset.count(Split::Train));
    }
}
