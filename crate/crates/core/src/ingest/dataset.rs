use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ContextId, TargetId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// Ordered positive pairs, each tagged with its split.
#[derive(Clone, Debug, PartialEq)]
pub struct PairDataset {
    pairs: Vec<(ContextId, TargetId)>,
    split: Vec<Split>,
    source_meta: String,
}

impl PairDataset {
    /// All pairs start in the training split.
    pub fn new(pairs: Vec<(ContextId, TargetId)>, source_meta: impl Into<String>) -> Self {
        let split = vec![Split::Train; pairs.len()];
        PairDataset {
            pairs,
            split,
            source_meta: source_meta.into(),
        }
    }

    pub fn with_split(pairs: Vec<(ContextId, TargetId)>, split: Vec<Split>, source_meta: impl Into<String>) -> Result<Self> {
        if pairs.len() != split.len() {
            return Err(Error::Format(format!(
                "{} pairs but {} split labels",
                pairs.len(),
                split.len()
            )));
        }
        Ok(PairDataset {
            pairs,
            split,
            source_meta: source_meta.into(),
        })
    }

    pub fn pairs(&self) -> &[(ContextId, TargetId)] {
        &self.pairs
    }

    pub fn split_labels(&self) -> &[Split] {
        &self.split
    }

    pub fn source_meta(&self) -> &str {
        &self.source_meta
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn subset(&self, which: Split) -> Vec<(ContextId, TargetId)> {
        self.pairs
            .iter()
            .zip(&self.split)
            .filter(|(_, s)| **s == which)
            .map(|(p, _)| *p)
            .collect()
    }

    pub fn count(&self, which: Split) -> usize {
        self.split.iter().filter(|s| **s == which).count()
    }

    /// Fails when any id is outside `card_i × card_j`.
    pub fn validate(&self, card_i: usize, card_j: usize) -> Result<()> {
        for &(i, j) in &self.pairs {
            if i >= card_i {
                return Err(Error::IndexOutOfRange {
                    space: "context",
                    index: i,
                    len: card_i,
                });
            }
            if j >= card_j {
                return Err(Error::IndexOutOfRange {
                    space: "target",
                    index: j,
                    len: card_j,
                });
            }
        }
        Ok(())
    }
}

/// Class sizes for `n` items by largest remainder: floors first, then the
/// leftover units go to the largest fractional parts (earlier class wins ties).
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> Result<[usize; 3]> {
    if fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
        return Err(Error::Config(format!("split fractions must be non-negative: {fractions:?}")));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions sum to {total}, not 1")));
    }
    let classes = fractions.iter().filter(|f| **f > 0.0).count();
    if n < classes {
        return Err(Error::Data(format!("{n} pairs cannot fill {classes} split classes")));
    }
    let exact = fractions.map(|f| f * n as f64);
    let mut sizes = exact.map(|x| (x + 1e-9).floor() as usize);
    let mut left = n.saturating_sub(sizes.iter().sum());
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = exact[a] - sizes[a] as f64;
        let rb = exact[b] - sizes[b] as f64;
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if fractions[k] > 0.0 {
            sizes[k] += 1;
            left -= 1;
        }
    }
    Ok(sizes)
}

/// Uniformly random pair-level train/valid/test assignment.
pub fn split_dataset(dataset: &PairDataset, fractions: [f64; 3], seed: u64) -> Result<PairDataset> {
    let sizes = split_sizes(dataset.len(), fractions)?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut split = vec![Split::Train; dataset.len()];
    for (rank, &idx) in order.iter().enumerate() {
        split[idx] = if rank < sizes[0] {
            Split::Train
        } else if rank < sizes[0] + sizes[1] {
            Split::Valid
        } else {
            Split::Test
        };
    }
    PairDataset::with_split(dataset.pairs.clone(), split, dataset.source_meta.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ten() -> PairDataset {
        PairDataset::new((0..10).map(|k| (k, k)).collect(), "t")
    }

    #[test]
    fn ten_pairs_seventy_ten_twenty() {
        let d = split_dataset(&ten(), [0.7, 0.1, 0.2], 3).unwrap();
        assert_eq!(
            [d.count(Split::Train), d.count(Split::Valid), d.count(Split::Test)],
            [7, 1, 2]
        );
    }

    #[test]
    fn seeded_and_degenerate_splits() {
        let a = split_dataset(&ten(), [0.7, 0.1, 0.2], 5).unwrap();
        let b = split_dataset(&ten(), [0.7, 0.1, 0.2], 5).unwrap();
        assert_eq!(a, b);
        let all = split_dataset(&ten(), [1.0, 0.0, 0.0], 5).unwrap();
        assert_eq!(all.count(Split::Train), 10);
    }

    #[test]
    fn split_errors() {
        let two = PairDataset::new(vec![(0, 0), (1, 1)], "t");
        assert!(matches!(split_dataset(&two, [0.5, 0.25, 0.25], 0), Err(Error::Data(_))));
        assert!(split_dataset(&ten(), [0.5, 0.5, 0.5], 0).is_err());
    }

    #[test]
    fn sizes_within_one_of_fractions() {
        for n in 3..200 {
            let s = split_sizes(n, [0.7, 0.1, 0.2]).unwrap();
            assert_eq!(s.iter().sum::<usize>(), n);
            for (k, f) in [0.7, 0.1, 0.2].iter().enumerate() {
                assert!((s[k] as f64 - f * n as f64).abs() <= 1.0);
            }
        }
    }
}
