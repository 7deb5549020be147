//! Ranking, likelihood and embedding-quality metrics.
//!
//! Per-pair work runs on rayon; partial results are collected in input order
//! and summed sequentially, so every metric is independent of the thread
//! schedule.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AnalogyQuad, AnalogySection, SimilarityTriple};
use crate::losses::softmax_unchecked;
use crate::model::{dot, ContextId, ModelParams, TargetId};
use crate::synthetic::{ConditionalKl, KlJoint};
use crate::vocab::Vocab;

fn check_pairs(params: &ModelParams, pairs: &[(ContextId, TargetId)]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::Empty("evaluation pairs"));
    }
    pairs.iter().try_for_each(|&(i, j)| {
        params.check_context(i)?;
        params.check_target(j)
    })
}

fn scores_of(params: &ModelParams, i: ContextId) -> Vec<f64> {
    let mut s = vec![0.0; params.card_j()];
    params.fill_scores(i, &mut s);
    s
}

/// Mean full-softmax probability of the true target.
pub fn test_likelihood(params: &ModelParams, pairs: &[(ContextId, TargetId)]) -> Result<f64> {
    check_pairs(params, pairs)?;
    let probs: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| softmax_unchecked(&scores_of(params, i))[j])
        .collect();
    Ok(probs.iter().sum::<f64>() / pairs.len() as f64)
}

/// Frequency with which the true target outscores a uniformly drawn target;
/// ties count one half. Pair `k` draws its negatives from stream `k` of a
/// generator seeded with `seed`.
pub fn approx_mpr(params: &ModelParams, pairs: &[(ContextId, TargetId)], m_negatives: usize, seed: u64) -> Result<f64> {
    check_pairs(params, pairs)?;
    if m_negatives == 0 {
        return Err(Error::Config("MPR needs at least one negative per pair".into()));
    }
    let card_j = params.card_j();
    let wins: Vec<f64> = pairs
        .par_iter()
        .enumerate()
        .map(|(k, &(i, j))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let wi = params.w.row(i);
            let pos = dot(wi, params.o.row(j));
            let mut w = 0.0;
            for _ in 0..m_negatives {
                let neg = dot(wi, params.o.row(rng.random_range(0..card_j)));
                if pos > neg {
                    w += 1.0;
                } else if pos == neg {
                    w += 0.5;
                }
            }
            w
        })
        .collect();
    Ok(wins.iter().sum::<f64>() / (pairs.len() * m_negatives) as f64)
}

/// 1-based rank of `j` when targets are sorted by descending score, ties
/// ordered by ascending id.
pub fn target_rank(scores: &[f64], j: TargetId) -> usize {
    let s = scores[j];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(k, &x)| x > s || (x == s && k < j))
        .count()
}

/// Exact rank of every pair's true target.
pub fn target_ranks(params: &ModelParams, pairs: &[(ContextId, TargetId)]) -> Result<Vec<usize>> {
    check_pairs(params, pairs)?;
    Ok(pairs
        .par_iter()
        .map(|&(i, j)| target_rank(&scores_of(params, i), j))
        .collect())
}

fn check_k(k: usize, card_j: usize) -> Result<()> {
    if k == 0 || k > card_j {
        return Err(Error::Config(format!("k = {k} outside 1..={card_j}")));
    }
    Ok(())
}

fn precision_from_ranks(ranks: &[usize], k: usize) -> f64 {
    ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64
}

pub fn precision_at_k(params: &ModelParams, pairs: &[(ContextId, TargetId)], k: usize) -> Result<f64> {
    check_k(k, params.card_j())?;
    Ok(precision_from_ranks(&target_ranks(params, pairs)?, k))
}

/// Precision at several cutoffs from one ranking pass.
pub fn precision_at_ks(params: &ModelParams, pairs: &[(ContextId, TargetId)], ks: &[usize]) -> Result<BTreeMap<usize, f64>> {
    ks.iter().try_for_each(|&k| check_k(k, params.card_j()))?;
    let ranks = target_ranks(params, pairs)?;
    Ok(ks.iter().map(|&k| (k, precision_from_ranks(&ranks, k))).collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correlation {
    #[default]
    Pearson,
    Spearman,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityResult {
    pub correlation: f64,
    pub used: usize,
    /// Triples with a word missing from the vocabulary.
    pub excluded: usize,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Data("correlation needs two equal-length series of at least 2".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Data("zero-variance series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks from 1, ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

/// Word lookup on the context side, retrying in lowercase.
fn lookup(vocab: &Vocab, word: &str) -> Option<ContextId> {
    vocab
        .context_id(word)
        .or_else(|| vocab.context_id(&word.to_lowercase()))
}

fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Data("cosine of a zero-norm embedding".into()));
    }
    Ok(dot(a, b) / (na * nb))
}

/// Correlation between human scores and cosine similarity of `W` rows.
pub fn similarity_eval(
    params: &ModelParams,
    vocab: &Vocab,
    triples: &[SimilarityTriple],
    method: Correlation,
) -> Result<SimilarityResult> {
    let mut human = Vec::new();
    let mut model = Vec::new();
    let mut excluded = 0;
    for t in triples {
        match (lookup(vocab, &t.left), lookup(vocab, &t.right)) {
            (Some(a), Some(b)) => {
                params.check_context(a)?;
                params.check_context(b)?;
                human.push(t.score);
                model.push(cosine(params.w.row(a), params.w.row(b))?);
            }
            _ => excluded += 1,
        }
    }
    if human.len() < 2 {
        return Err(Error::Data(format!(
            "{} usable similarity pairs, need at least 2",
            human.len()
        )));
    }
    let correlation = match method {
        Correlation::Pearson => pearson(&human, &model)?,
        Correlation::Spearman => pearson(&average_ranks(&human), &average_ranks(&model))?,
    };
    Ok(SimilarityResult {
        correlation,
        used: human.len(),
        excluded,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalogyResult {
    /// Keyed `"{section}@{k}"`, e.g. `semantic@1`.
    pub precision: BTreeMap<String, f64>,
    pub used: BTreeMap<String, usize>,
    /// Quadruples with a word missing from the vocabulary.
    pub excluded: usize,
}

impl AnalogyResult {
    pub fn get(&self, section: AnalogySection, k: usize) -> Option<f64> {
        self.precision.get(&format!("{}@{k}", section.as_str())).copied()
    }
}

fn unit_rows(params: &ModelParams) -> Vec<Vec<f64>> {
    (0..params.card_i())
        .map(|i| {
            let r = params.w.row(i);
            let n = dot(r, r).sqrt();
            if n > 0.0 {
                r.iter().map(|x| x / n).collect()
            } else {
                r.to_vec()
            }
        })
        .collect()
}

/// Rank of `d` among all words except `a, b, c`, by cosine to
/// `b̂ - â + ĉ`; ties go to the lower id. `None` when `d` is itself excluded.
fn analogy_rank(unit: &[Vec<f64>], [a, b, c, d]: [ContextId; 4]) -> Option<usize> {
    if d == a || d == b || d == c {
        return None;
    }
    let q: Vec<f64> = (0..unit[a].len())
        .map(|k| unit[b][k] - unit[a][k] + unit[c][k])
        .collect();
    // |q| is common to every candidate, so ranking by <q, x̂> is ranking by cosine
    let target = dot(&q, &unit[d]);
    let mut rank = 1;
    for (x, row) in unit.iter().enumerate() {
        if x == a || x == b || x == c || x == d {
            continue;
        }
        let s = dot(&q, row);
        if s > target || (s == target && x < d) {
            rank += 1;
        }
    }
    Some(rank)
}

/// 3CosAdd analogy precision per section and cutoff, on `W` rows.
pub fn analogy_eval(params: &ModelParams, vocab: &Vocab, quads: &[AnalogyQuad], ks: &[usize]) -> Result<AnalogyResult> {
    if ks.contains(&0) {
        return Err(Error::Config("analogy cutoffs must be at least 1".into()));
    }
    let mut usable: Vec<(AnalogySection, [ContextId; 4])> = Vec::new();
    let mut excluded = 0;
    for q in quads {
        let ids: Option<Vec<ContextId>> = q.words.iter().map(|w| lookup(vocab, w)).collect();
        match ids {
            Some(ids) => {
                ids.iter().try_for_each(|&i| params.check_context(i))?;
                usable.push((q.section, [ids[0], ids[1], ids[2], ids[3]]));
            }
            None => excluded += 1,
        }
    }
    if usable.is_empty() {
        return Err(Error::Data("no analogy questions within the vocabulary".into()));
    }
    let unit = unit_rows(params);
    let ranks: Vec<Option<usize>> = usable.par_iter().map(|(_, ids)| analogy_rank(&unit, *ids)).collect();
    let mut precision = BTreeMap::new();
    let mut used = BTreeMap::new();
    for section in [AnalogySection::Semantic, AnalogySection::Syntactic] {
        let rs: Vec<Option<usize>> = usable
            .iter()
            .zip(&ranks)
            .filter(|((s, _), _)| *s == section)
            .map(|(_, r)| *r)
            .collect();
        if rs.is_empty() {
            continue;
        }
        used.insert(section.as_str().to_owned(), rs.len());
        for &k in ks {
            let hits = rs.iter().filter(|r| r.is_some_and(|r| r <= k)).count();
            precision.insert(format!("{}@{k}", section.as_str()), hits as f64 / rs.len() as f64);
        }
    }
    Ok(AnalogyResult {
        precision,
        used,
        excluded,
    })
}

/// Which ranking metrics to compute and how.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub likelihood: bool,
    pub mpr_negatives: usize,
    pub ks: Vec<usize>,
    pub seed: u64,
    /// Evaluate on at most this many pairs (an evenly strided subset).
    pub max_pairs: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            likelihood: true,
            mpr_negatives: 100,
            ks: vec![5, 15, 50],
            seed: 0,
            max_pairs: None,
        }
    }
}

/// Deterministic evenly spaced subset of at most `max` pairs.
pub fn stride_subset(pairs: &[(ContextId, TargetId)], max: Option<usize>) -> Vec<(ContextId, TargetId)> {
    match max {
        Some(m) if m > 0 && m < pairs.len() => (0..m).map(|k| pairs[k * pairs.len() / m]).collect(),
        _ => pairs.to_vec(),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub likelihood: Option<f64>,
    pub mpr: Option<f64>,
    pub prec_at: BTreeMap<usize, f64>,
    pub similarity: BTreeMap<String, f64>,
    pub analogy: BTreeMap<String, f64>,
    pub kl_joint: Option<KlJoint>,
    pub conditional_kl: Option<ConditionalKl>,
    pub n_pairs: usize,
    pub seed: u64,
    pub config_hash: String,
    pub wall_time_secs: f64,
}

impl MetricsReport {
    /// Flat `(metric, value)` list; names are stable for CSV and selection.
    pub fn flat(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        if let Some(x) = self.likelihood {
            out.push(("likelihood".to_owned(), x));
        }
        if let Some(x) = self.mpr {
            out.push(("mpr".to_owned(), x));
        }
        for (k, v) in &self.prec_at {
            out.push((format!("prec@{k}"), *v));
        }
        for (name, v) in &self.similarity {
            out.push((format!("similarity:{name}"), *v));
        }
        for (name, v) in &self.analogy {
            out.push((format!("analogy:{name}"), *v));
        }
        if let Some(kl) = &self.kl_joint {
            out.push(("kl_joint".to_owned(), kl.kl));
            out.push(("kl_joint_model".to_owned(), kl.model_term));
        }
        if let Some(c) = &self.conditional_kl {
            out.push(("kl_true_avg".to_owned(), c.true_kl));
            out.push(("kl_empirical_avg".to_owned(), c.empirical_kl));
        }
        out
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.flat().into_iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Long-format CSV: `run_id,metric,value`.
    pub fn write_csv<W: Write>(&self, run_id: &str, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["run_id", "metric", "value"])
            .and_then(|_| {
                self.flat()
                    .iter()
                    .try_for_each(|(m, v)| w.write_record([run_id, m.as_str(), &v.to_string()]))
            })
            .and_then(|_| w.flush().map_err(csv::Error::from))
            .map_err(|e| Error::Format(format!("csv: {e}")))
    }

    pub fn save_csv(&self, run_id: &str, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(run_id, f)
    }
}

/// Likelihood, MPR and precision on `pairs`.
pub fn evaluate_ranking(params: &ModelParams, pairs: &[(ContextId, TargetId)], opts: &EvalOptions) -> Result<MetricsReport> {
    let pairs = stride_subset(pairs, opts.max_pairs);
    let mut r = MetricsReport {
        n_pairs: pairs.len(),
        seed: opts.seed,
        ..Default::default()
    };
    if opts.likelihood {
        r.likelihood = Some(test_likelihood(params, &pairs)?);
    }
    if opts.mpr_negatives > 0 {
        r.mpr = Some(approx_mpr(params, &pairs, opts.mpr_negatives, opts.seed)?);
    }
    let ks: Vec<usize> = opts.ks.iter().map(|&k| k.min(params.card_j())).collect();
    if !ks.is_empty() {
        let p = precision_at_ks(params, &pairs, &ks)?;
        // keep the requested cutoff as the key even when clamped
        r.prec_at = opts.ks.iter().zip(ks).map(|(&k, c)| (k, p[&c])).collect();
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Matrix;

    fn params(w: &[Vec<f64>], o: &[Vec<f64>]) -> ModelParams {
        ModelParams::new(Matrix::from_rows(w).unwrap(), Matrix::from_rows(o).unwrap()).unwrap()
    }

    #[test]
    fn likelihood_examples() {
        let p = params(&[vec![0.0, 0.0]], &[vec![1.0, 2.0], vec![3.0, 4.0], vec![0.5, 0.5], vec![1.0, 1.0]]);
        assert!((test_likelihood(&p, &[(0, 1)]).unwrap() - 0.25).abs() < 1e-15);
        let p = params(&[vec![30.0]], &[vec![1.0], vec![0.0], vec![0.0]]);
        assert!((test_likelihood(&p, &[(0, 0)]).unwrap() - 1.0).abs() < 1e-9);
        assert!(test_likelihood(&p, &[]).is_err());
    }

    #[test]
    fn mpr_extremes() {
        let p = params(&[vec![1.0]], &[vec![5.0], vec![1.0], vec![0.0]]);
        // the positive can still be drawn as its own negative, which ties
        let m = approx_mpr(&p, &[(0, 0)], 3000, 1).unwrap();
        assert!(m > 0.8 && m < 1.0);
        let c = params(&[vec![0.0]], &[vec![1.0], vec![2.0]]);
        assert_eq!(approx_mpr(&c, &[(0, 0), (0, 1)], 50, 3).unwrap(), 0.5);
    }

    #[test]
    fn rank_ties_ascending_id() {
        assert_eq!(target_rank(&[1.0, 1.0, 1.0], 0), 1);
        assert_eq!(target_rank(&[1.0, 1.0, 1.0], 2), 3);
        assert_eq!(target_rank(&[0.0, 2.0, 1.0], 2), 2);
        let p = params(&[vec![1.0]], &[vec![3.0], vec![1.0], vec![2.0]]);
        assert_eq!(precision_at_k(&p, &[(0, 0)], 1).unwrap(), 1.0);
        assert_eq!(precision_at_k(&p, &[(0, 1)], 3).unwrap(), 1.0);
        assert!(precision_at_k(&p, &[(0, 1)], 4).is_err());
        assert!(precision_at_k(&p, &[(0, 1)], 0).is_err());
    }

    #[test]
    fn pearson_and_spearman() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.5]).unwrap() - 4.5 / (2.0f64 * (61.0 / 6.0)).sqrt()).abs() < 1e-12);
        assert!(pearson(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn report_flattens_and_writes_csv() {
        let mut r = MetricsReport {
            mpr: Some(0.75),
            ..Default::default()
        };
        r.prec_at.insert(5, 0.1);
        assert_eq!(r.metric("prec@5"), Some(0.1));
        let mut buf = Vec::new();
        r.write_csv("run", &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("run_id,metric,value\n"));
        assert!(s.contains("run,mpr,0.75"));
    }
}
