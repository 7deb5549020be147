use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ContextId, TargetId};

/// Context and target label spaces together with their training popularity.
///
/// `context_counts[i]` is the number of training pairs with context `i`, and
/// likewise for targets, so both count vectors sum to the number of training
/// pairs.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocab {
    context_labels: Vec<String>,
    target_labels: Vec<String>,
    context_counts: Vec<u64>,
    target_counts: Vec<u64>,
    context_index: HashMap<String, ContextId>,
    target_index: HashMap<String, TargetId>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    context_labels: Vec<String>,
    target_labels: Vec<String>,
    context_counts: Vec<u64>,
    target_counts: Vec<u64>,
}

impl From<VocabRepr> for Vocab {
    fn from(r: VocabRepr) -> Self {
        let mut v = Vocab {
            context_index: index_of(&r.context_labels),
            target_index: index_of(&r.target_labels),
            context_labels: r.context_labels,
            target_labels: r.target_labels,
            context_counts: r.context_counts,
            target_counts: r.target_counts,
        };
        v.context_counts.resize(v.context_labels.len(), 0);
        v.target_counts.resize(v.target_labels.len(), 0);
        v
    }
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        VocabRepr {
            context_labels: v.context_labels,
            target_labels: v.target_labels,
            context_counts: v.context_counts,
            target_counts: v.target_counts,
        }
    }
}

fn index_of(labels: &[String]) -> HashMap<String, usize> {
    labels.iter().enumerate().map(|(k, l)| (l.clone(), k)).collect()
}

fn check_unique(labels: &[String], space: &str) -> Result<HashMap<String, usize>> {
    let index = index_of(labels);
    if index.len() != labels.len() {
        let mut seen = HashMap::new();
        for l in labels {
            if seen.insert(l.as_str(), ()).is_some() {
                return Err(Error::Data(format!("duplicate {space} label {l:?}")));
            }
        }
    }
    Ok(index)
}

impl PartialEq for Vocab {
    fn eq(&self, other: &Self) -> bool {
        self.context_labels == other.context_labels
            && self.target_labels == other.target_labels
            && self.context_counts == other.context_counts
            && self.target_counts == other.target_counts
    }
}

impl Vocab {
    /// Builds a vocabulary with zero counts. Both label spaces must be
    /// non-empty and free of duplicates.
    pub fn new(context_labels: Vec<String>, target_labels: Vec<String>) -> Result<Self> {
        if context_labels.is_empty() {
            return Err(Error::Empty("context vocabulary"));
        }
        if target_labels.is_empty() {
            return Err(Error::Empty("target vocabulary"));
        }
        let context_index = check_unique(&context_labels, "context")?;
        let target_index = check_unique(&target_labels, "target")?;
        Ok(Vocab {
            context_counts: vec![0; context_labels.len()],
            target_counts: vec![0; target_labels.len()],
            context_labels,
            target_labels,
            context_index,
            target_index,
        })
    }

    /// Same label list for contexts and targets (text and item-to-item data).
    pub fn shared(labels: Vec<String>) -> Result<Self> {
        Vocab::new(labels.clone(), labels)
    }

    pub fn card_i(&self) -> usize {
        self.context_labels.len()
    }

    pub fn card_j(&self) -> usize {
        self.target_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.context_labels.is_empty() || self.target_labels.is_empty()
    }

    pub fn context_labels(&self) -> &[String] {
        &self.context_labels
    }

    pub fn target_labels(&self) -> &[String] {
        &self.target_labels
    }

    pub fn context_counts(&self) -> &[u64] {
        &self.context_counts
    }

    pub fn target_counts(&self) -> &[u64] {
        &self.target_counts
    }

    pub fn context_id(&self, label: &str) -> Option<ContextId> {
        self.context_index.get(label).copied()
    }

    pub fn target_id(&self, label: &str) -> Option<TargetId> {
        self.target_index.get(label).copied()
    }

    pub fn total_pairs(&self) -> u64 {
        self.target_counts.iter().sum()
    }

    /// Replaces both count vectors with occurrence counts over `pairs`.
    pub fn recount<'a, I>(&mut self, pairs: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a (ContextId, TargetId)>,
    {
        let mut cc = vec![0u64; self.card_i()];
        let mut tc = vec![0u64; self.card_j()];
        for &(i, j) in pairs {
            *cc.get_mut(i).ok_or(Error::IndexOutOfRange {
                space: "context",
                index: i,
                len: self.card_i(),
            })? += 1;
            *tc.get_mut(j).ok_or(Error::IndexOutOfRange {
                space: "target",
                index: j,
                len: self.card_j(),
            })? += 1;
        }
        self.context_counts = cc;
        self.target_counts = tc;
        Ok(())
    }

    /// Empirical context marginal Pop(I). All zeros when no pairs were counted.
    pub fn context_popularity(&self) -> Vec<f64> {
        normalized(&self.context_counts)
    }

    pub fn target_popularity(&self) -> Vec<f64> {
        normalized(&self.target_counts)
    }
}

fn normalized(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn rejects_duplicates_and_empty() {
        assert!(Vocab::new(labels(&["a", "a"]), labels(&["x"])).is_err());
        assert!(Vocab::new(vec![], labels(&["x"])).is_err());
        assert!(Vocab::new(labels(&["a"]), vec![]).is_err());
    }

    #[test]
    fn counts_sum_to_pairs() {
        let mut v = Vocab::new(labels(&["a", "b"]), labels(&["x", "y", "z"])).unwrap();
        let pairs = vec![(0, 1), (1, 1), (1, 2), (0, 0)];
        v.recount(&pairs).unwrap();
        assert_eq!(v.context_counts(), &[2, 2]);
        assert_eq!(v.target_counts(), &[1, 2, 1]);
        assert_eq!(v.total_pairs(), 4);
        assert_eq!(v.context_counts().iter().sum::<u64>(), 4);
        assert!(v.recount(&[(5, 0)]).is_err());
    }

    #[test]
    fn serde_rebuilds_index() {
        let v = Vocab::shared(labels(&["the", "cat"])).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        let back: Vocab = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.target_id("cat"), Some(1));
    }
}
