//! Deterministic generator for text8-style corpora: lowercase pseudo-words
//! separated by single spaces on one line.
//!
//! Tokens come from a mixture of three sources: a per-word successor list
//! (local, order-dependent structure), the current topic's word
//! distribution (topics switch at random), and the global Zipf unigram
//! distribution. Frequent words are short, as in natural text.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::CategoricalTable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextGenOptions {
    pub n_tokens: usize,
    pub word_types: usize,
    pub zipf_exponent: f64,
    pub topics: usize,
    pub words_per_topic: usize,
    pub topic_switch: f64,
    pub successors: usize,
    pub p_successor: f64,
    pub p_topic: f64,
    pub seed: u64,
}

impl Default for TextGenOptions {
    fn default() -> Self {
        TextGenOptions {
            n_tokens: 2_000_000,
            word_types: 30_000,
            zipf_exponent: 1.0,
            topics: 50,
            words_per_topic: 400,
            topic_switch: 0.02,
            successors: 4,
            p_successor: 0.4,
            p_topic: 0.35,
            seed: 8,
        }
    }
}

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvwz";
const VOWELS: &[u8] = b"aeiou";

/// `n` distinct pseudo-words, shortest first.
fn word_forms(n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut seen = std::collections::HashSet::with_capacity(n);
    let mut words = Vec::with_capacity(n);
    let mut syllables = 1;
    let mut misses = 0;
    while words.len() < n {
        let mut w = String::with_capacity(2 * syllables + 1);
        for _ in 0..syllables {
            w.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
            w.push(VOWELS[rng.random_range(0..VOWELS.len())] as char);
        }
        if rng.random_bool(0.3) {
            w.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
        }
        if seen.insert(w.clone()) {
            words.push(w);
            misses = 0;
        } else {
            misses += 1;
            // the short forms are exhausted; move to longer words
            if misses > 50 {
                syllables += 1;
                misses = 0;
            }
        }
    }
    words.sort_by_key(|w| w.len());
    words
}

pub fn generate_corpus(opts: &TextGenOptions) -> Result<String> {
    if opts.word_types < 2 || opts.topics == 0 || opts.successors == 0 || opts.n_tokens == 0 {
        return Err(Error::Config("text generator sizes must be positive".into()));
    }
    if opts.p_successor < 0.0 || opts.p_topic < 0.0 || opts.p_successor + opts.p_topic > 1.0 {
        return Err(Error::Config("text generator mixture weights must be in [0, 1]".into()));
    }
    let v = opts.word_types;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let words = word_forms(v, &mut rng);
    let zipf: Vec<f64> = (0..v).map(|r| (r as f64 + 1.0).powf(-opts.zipf_exponent)).collect();
    let global = CategoricalTable::from_weights(&zipf)?;

    let per_topic = opts.words_per_topic.clamp(1, v);
    let topics: Vec<(Vec<usize>, CategoricalTable)> = (0..opts.topics)
        .map(|_| {
            let mut members: Vec<usize> = sample(&mut rng, v, per_topic).into_vec();
            members.sort_unstable();
            let w: Vec<f64> = (0..members.len()).map(|r| (r as f64 + 1.0).powf(-0.8)).collect();
            CategoricalTable::from_weights(&w).map(|t| (members, t))
        })
        .collect::<Result<_>>()?;

    let succ_weights: Vec<f64> = (0..opts.successors).map(|k| 0.5f64.powi(k as i32)).collect();
    let succ_table = CategoricalTable::from_weights(&succ_weights)?;
    let successors: Vec<Vec<usize>> = (0..v)
        .map(|_| (0..opts.successors).map(|_| global.sample(&mut rng)).collect())
        .collect();

    let mut topic = rng.random_range(0..opts.topics);
    let mut prev = global.sample(&mut rng);
    let mut out = String::with_capacity(opts.n_tokens * 7);
    out.push_str(&words[prev]);
    for _ in 1..opts.n_tokens {
        if rng.random_bool(opts.topic_switch) {
            topic = rng.random_range(0..opts.topics);
        }
        let u: f64 = rng.random();
        let next = if u < opts.p_successor {
            successors[prev][succ_table.sample(&mut rng)]
        } else if u < opts.p_successor + opts.p_topic {
            let (members, table) = &topics[topic];
            members[table.sample(&mut rng)]
        } else {
            global.sample(&mut rng)
        };
        out.push(' ');
        out.push_str(&words[next]);
        prev = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_text8_shaped() {
        let o = TextGenOptions {
            n_tokens: 5000,
            word_types: 500,
            ..Default::default()
        };
        let a = generate_corpus(&o).unwrap();
        assert_eq!(a, generate_corpus(&o).unwrap());
        assert_eq!(a.split(' ').count(), 5000);
        assert!(a.bytes().all(|b| b == b' ' || b.is_ascii_lowercase()));
        let b = generate_corpus(&TextGenOptions { seed: 9, ..o }).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn word_forms_are_unique() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = word_forms(3000, &mut rng);
        let set: std::collections::HashSet<_> = w.iter().collect();
        assert_eq!(set.len(), 3000);
        assert!(w.windows(2).all(|p| p[0].len() <= p[1].len()));
    }
}
