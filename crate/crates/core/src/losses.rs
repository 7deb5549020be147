//! Training losses and their exact gradients.
//!
//! Every loss here depends on the parameters only through scores
//! `G(i, j') = <W_i, O_j'>`, so each one is computed first as a [`ScoreGrad`]:
//! the loss plus `dL/dG(i, j')` for every target it touches. Expanding that
//! through the bilinear form gives the parameter gradient
//! `dL/dW_i = sum_j' c_j' O_j'` and `dL/dO_j' = c_j' W_i`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{axpy, dot, ContextId, ModelParams, TargetId};

/// Loss value with the gradient for `W_i` and for the touched rows of `O`.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad_w_i: Vec<f64>,
    pub grad_o: BTreeMap<TargetId, Vec<f64>>,
}

impl LossGrad {
    pub fn is_finite(&self) -> bool {
        self.loss.is_finite()
            && self.grad_w_i.iter().all(|x| x.is_finite())
            && self.grad_o.values().flatten().all(|x| x.is_finite())
    }
}

/// Gradient of a loss with respect to the scores of one context.
#[derive(Clone, Debug, PartialEq)]
pub enum ScoreCoefs {
    /// One coefficient per target.
    Dense(Vec<f64>),
    /// Sorted by target id, one entry per distinct touched target.
    Sparse(Vec<(TargetId, f64)>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreGrad {
    pub loss: f64,
    pub coefs: ScoreCoefs,
}

impl ScoreGrad {
    pub fn is_finite(&self) -> bool {
        self.loss.is_finite()
            && match &self.coefs {
                ScoreCoefs::Dense(c) => c.iter().all(|x| x.is_finite()),
                ScoreCoefs::Sparse(c) => c.iter().all(|(_, x)| x.is_finite()),
            }
    }

    pub fn for_each(&self, mut f: impl FnMut(TargetId, f64)) {
        match &self.coefs {
            ScoreCoefs::Dense(c) => c.iter().enumerate().for_each(|(j, &x)| f(j, x)),
            ScoreCoefs::Sparse(c) => c.iter().for_each(|&(j, x)| f(j, x)),
        }
    }

    /// Chain rule through `G(i, j) = <W_i, O_j>`.
    pub fn into_loss_grad(self, params: &ModelParams, i: ContextId) -> LossGrad {
        let wi = params.w.row(i);
        let mut grad_w_i = vec![0.0; params.dim()];
        let mut grad_o = BTreeMap::new();
        self.for_each(|j, c| {
            axpy(c, params.o.row(j), &mut grad_w_i);
            grad_o.insert(j, wi.iter().map(|w| c * w).collect());
        });
        LossGrad {
            loss: self.loss,
            grad_w_i,
            grad_o,
        }
    }
}

/// i.i.d. negative targets for one positive pair. Duplicates are allowed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NegativeSet {
    targets: Vec<TargetId>,
}

impl NegativeSet {
    pub fn new(targets: Vec<TargetId>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Empty("negative set"));
        }
        Ok(NegativeSet { targets })
    }

    pub fn targets(&self) -> &[TargetId] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Softmax with max-subtraction.
pub fn conditional_softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Empty("score vector"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidDistribution("non-finite score".into()));
    }
    Ok(softmax_unchecked(scores))
}

pub(crate) fn softmax_unchecked(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    p
}

fn check_pair(params: &ModelParams, i: ContextId, j: TargetId) -> Result<()> {
    params.check_context(i)?;
    params.check_target(j)
}

fn check_negatives(params: &ModelParams, negatives: &NegativeSet) -> Result<()> {
    if negatives.is_empty() {
        return Err(Error::Empty("negative set"));
    }
    negatives.targets().iter().try_for_each(|&k| params.check_target(k))
}

/// Merges (target, coefficient) contributions into a sorted list.
fn merge_sparse(mut entries: Vec<(TargetId, f64)>) -> Vec<(TargetId, f64)> {
    entries.sort_by_key(|e| e.0);
    let mut out: Vec<(TargetId, f64)> = Vec::with_capacity(entries.len());
    for (j, c) in entries {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += c,
            _ => out.push((j, c)),
        }
    }
    out
}

/// Full-softmax negative log-likelihood with a caller-provided score row.
pub fn mle_from_scores(scores: &[f64], j: TargetId) -> ScoreGrad {
    let lse = logsumexp(scores);
    let mut coefs: Vec<f64> = scores.iter().map(|s| (s - lse).exp()).collect();
    coefs[j] -= 1.0;
    ScoreGrad {
        loss: lse - scores[j],
        coefs: ScoreCoefs::Dense(coefs),
    }
}

pub fn mle_score_grad(params: &ModelParams, i: ContextId, j: TargetId) -> Result<ScoreGrad> {
    check_pair(params, i, j)?;
    let scores = params.score_all_targets(i)?;
    Ok(mle_from_scores(&scores, j))
}

/// `-G(i,j) + ln sum_{j' in J} exp G(i,j')` and its gradient.
pub fn mle_loss_grad(params: &ModelParams, i: ContextId, j: TargetId) -> Result<LossGrad> {
    Ok(mle_score_grad(params, i, j)?.into_loss_grad(params, i))
}

/// Whether the positive target joins the normalization set of the relaxed
/// softmax.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Normalize over the negatives and the positive; the loss is bounded
    /// below by 0.
    IncludePositive,
    /// Normalize over the sampled negatives only; the loss is unbounded
    /// below.
    NegativesOnly,
}

impl Normalization {
    pub fn from_flag(include_positive: bool) -> Self {
        if include_positive {
            Normalization::IncludePositive
        } else {
            Normalization::NegativesOnly
        }
    }
}

pub fn relaxed_softmax_score_grad(
    params: &ModelParams,
    i: ContextId,
    j: TargetId,
    negatives: &NegativeSet,
    mode: Normalization,
) -> Result<ScoreGrad> {
    check_pair(params, i, j)?;
    check_negatives(params, negatives)?;
    let wi = params.w.row(i);
    let pos = dot(wi, params.o.row(j));
    let mut set: Vec<(TargetId, f64)> = negatives
        .targets()
        .iter()
        .map(|&k| (k, dot(wi, params.o.row(k))))
        .collect();
    if mode == Normalization::IncludePositive {
        set.push((j, pos));
    }
    let logits: Vec<f64> = set.iter().map(|e| e.1).collect();
    let lse = logsumexp(&logits);
    let mut entries: Vec<(TargetId, f64)> = set.iter().map(|&(k, s)| (k, (s - lse).exp())).collect();
    entries.push((j, -1.0));
    Ok(ScoreGrad {
        loss: lse - pos,
        coefs: ScoreCoefs::Sparse(merge_sparse(entries)),
    })
}

/// Relaxed softmax: `-G(i,j) + ln sum_{j' in S} exp G(i,j')` where `S` is the
/// negative multiset, plus the positive under [`Normalization::IncludePositive`].
pub fn relaxed_softmax_loss_grad(
    params: &ModelParams,
    i: ContextId,
    j: TargetId,
    negatives: &NegativeSet,
    include_positive: bool,
) -> Result<LossGrad> {
    let mode = Normalization::from_flag(include_positive);
    Ok(relaxed_softmax_score_grad(params, i, j, negatives, mode)?.into_loss_grad(params, i))
}

/// Softmax cross-entropy over an explicit candidate list with per-candidate
/// logit corrections; `label` indexes the true candidate.
pub fn sampled_softmax_over(
    params: &ModelParams,
    i: ContextId,
    candidates: &[TargetId],
    log_expected: &[f64],
    label: usize,
) -> Result<ScoreGrad> {
    params.check_context(i)?;
    if candidates.is_empty() || candidates.len() != log_expected.len() || label >= candidates.len() {
        return Err(Error::Config("malformed candidate set".into()));
    }
    candidates.iter().try_for_each(|&k| params.check_target(k))?;
    let wi = params.w.row(i);
    let logits: Vec<f64> = candidates
        .iter()
        .zip(log_expected)
        .map(|(&k, lq)| dot(wi, params.o.row(k)) - lq)
        .collect();
    let lse = logsumexp(&logits);
    let mut entries: Vec<(TargetId, f64)> = candidates
        .iter()
        .zip(&logits)
        .map(|(&k, l)| (k, (l - lse).exp()))
        .collect();
    entries[label].1 -= 1.0;
    Ok(ScoreGrad {
        loss: lse - logits[label],
        coefs: ScoreCoefs::Sparse(merge_sparse(entries)),
    })
}

/// Importance-sampled softmax: candidates `{j} ∪ negatives`, each logit
/// corrected by `ln(n * Q(j'))` where `n` is the number of draws.
pub fn sampled_softmax_score_grad(
    params: &ModelParams,
    i: ContextId,
    j: TargetId,
    proposal: &[f64],
    negatives: &NegativeSet,
) -> Result<ScoreGrad> {
    check_pair(params, i, j)?;
    check_negatives(params, negatives)?;
    if proposal.len() != params.card_j() {
        return Err(Error::InvalidDistribution(format!(
            "proposal has {} entries, expected {}",
            proposal.len(),
            params.card_j()
        )));
    }
    let n = negatives.len() as f64;
    let mut candidates = Vec::with_capacity(negatives.len() + 1);
    candidates.push(j);
    candidates.extend_from_slice(negatives.targets());
    let mut log_expected = Vec::with_capacity(candidates.len());
    for &k in &candidates {
        let q = proposal[k];
        if !(q > 0.0) {
            return Err(Error::InvalidDistribution(format!("proposal is zero at target {k}")));
        }
        log_expected.push((n * q).ln());
    }
    sampled_softmax_over(params, i, &candidates, &log_expected, 0)
}

pub fn sampled_softmax_loss_grad(
    params: &ModelParams,
    i: ContextId,
    j: TargetId,
    proposal: &[f64],
    negatives: &NegativeSet,
) -> Result<LossGrad> {
    Ok(sampled_softmax_score_grad(params, i, j, proposal, negatives)?.into_loss_grad(params, i))
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn bce_score_grad(params: &ModelParams, i: ContextId, j: TargetId, negatives: &NegativeSet) -> Result<ScoreGrad> {
    check_pair(params, i, j)?;
    check_negatives(params, negatives)?;
    let wi = params.w.row(i);
    let pos = dot(wi, params.o.row(j));
    let mut loss = softplus(-pos);
    let mut entries = vec![(j, sigmoid(pos) - 1.0)];
    for &k in negatives.targets() {
        let s = dot(wi, params.o.row(k));
        loss += softplus(s);
        entries.push((k, sigmoid(s)));
    }
    Ok(ScoreGrad {
        loss,
        coefs: ScoreCoefs::Sparse(merge_sparse(entries)),
    })
}

/// `-ln σ(G(i,j)) - Σ_k ln σ(-G(i,j_k))`.
pub fn bce_loss_grad(params: &ModelParams, i: ContextId, j: TargetId, negatives: &NegativeSet) -> Result<LossGrad> {
    Ok(bce_score_grad(params, i, j, negatives)?.into_loss_grad(params, i))
}

/// Checks that `q` is a probability vector over `card` targets.
pub fn check_probability(q: &[f64], card: usize, tol: f64) -> Result<()> {
    if q.len() != card {
        return Err(Error::InvalidDistribution(format!("{} entries, expected {card}", q.len())));
    }
    if q.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidDistribution("negative or non-finite entry".into()));
    }
    let total: f64 = q.iter().sum();
    if (total - 1.0).abs() > tol {
        return Err(Error::InvalidDistribution(format!("entries sum to {total}")));
    }
    Ok(())
}

/// Infinite-sample limit of the relaxed softmax gradient under negatives
/// drawn from `q`: `-∇G(i,j) + E_{j'~B} ∇G(i,j')` with
/// `B(j') ∝ q(j') exp G(i,j')`, by full enumeration.
///
/// The reported loss is `-G(i,j) + ln Σ q(j') exp G(i,j')`, whose exact
/// gradient this is.
pub fn consistency_score_grad(params: &ModelParams, i: ContextId, j: TargetId, q: &[f64]) -> Result<ScoreGrad> {
    check_pair(params, i, j)?;
    check_probability(q, params.card_j(), 1e-9)?;
    let scores = params.score_all_targets(i)?;
    let logits: Vec<f64> = scores
        .iter()
        .zip(q)
        .map(|(s, &qv)| if qv > 0.0 { qv.ln() + s } else { f64::NEG_INFINITY })
        .collect();
    let lse = logsumexp(&logits);
    let mut coefs: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();
    coefs[j] -= 1.0;
    Ok(ScoreGrad {
        loss: lse - scores[j],
        coefs: ScoreCoefs::Dense(coefs),
    })
}

pub fn consistency_gradient(params: &ModelParams, i: ContextId, j: TargetId, q: &[f64]) -> Result<LossGrad> {
    Ok(consistency_score_grad(params, i, j, q)?.into_loss_grad(params, i))
}
