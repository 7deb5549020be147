//! Negative sampling distributions: uniform, popularity, and the
//! context-conditional Boltzmann sampler
//! `Q_i(j) ∝ D_i(j) exp(G(i,j) / T)`.

use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::losses::NegativeSet;
use crate::model::{ContextId, ModelParams, TargetId};
use crate::synthetic::GroundTruth;
use crate::vocab::Vocab;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Uniform,
    Popularity,
    Boltzmann,
}

/// Score-independent weighting inside the Boltzmann sampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    Uniform,
    Popularity,
    /// `1 / P_i(j)` from a known ground truth (synthetic data only).
    OracleInverseP,
}

/// Boltzmann temperature; `Infinite` means "use the degeneracy directly".
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Temperature {
    Finite(f64),
    Infinite,
}

impl Temperature {
    pub fn new(t: f64) -> Result<Self> {
        if t == f64::INFINITY {
            Ok(Temperature::Infinite)
        } else if t > 0.0 && t.is_finite() {
            Ok(Temperature::Finite(t))
        } else {
            Err(Error::Config(format!("temperature must be positive, got {t}")))
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Temperature::Finite(t) => t,
            Temperature::Infinite => f64::INFINITY,
        }
    }

    pub fn validate(self) -> Result<Self> {
        Temperature::new(self.as_f64())
    }
}

impl fmt::Display for Temperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Temperature::Finite(t) => write!(f, "{t}"),
            Temperature::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Temperature {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Temperature::Finite(t) => s.serialize_f64(*t),
            Temperature::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Temperature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        let t = match Repr::deserialize(d)? {
            Repr::Num(t) => t,
            Repr::Text(s) => match s.trim().to_ascii_lowercase().as_str() {
                "inf" | "infinity" | "+inf" => f64::INFINITY,
                other => other.parse().map_err(serde::de::Error::custom)?,
            },
        };
        Temperature::new(t).map_err(serde::de::Error::custom)
    }
}

impl std::str::FromStr for Temperature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "+inf" => Ok(Temperature::Infinite),
            other => Temperature::new(
                other
                    .parse()
                    .map_err(|_| Error::Config(format!("bad temperature {s:?}")))?,
            ),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    pub kind: SamplerKind,
    pub degeneracy: Degeneracy,
    pub temperature: Temperature,
    pub popularity_exponent: f64,
}

impl SamplerSpec {
    pub fn uniform() -> Self {
        SamplerSpec {
            kind: SamplerKind::Uniform,
            degeneracy: Degeneracy::Uniform,
            temperature: Temperature::Infinite,
            popularity_exponent: 1.0,
        }
    }

    pub fn popularity(alpha: f64) -> Self {
        SamplerSpec {
            kind: SamplerKind::Popularity,
            popularity_exponent: alpha,
            ..SamplerSpec::uniform()
        }
    }

    pub fn boltzmann(degeneracy: Degeneracy, temperature: Temperature) -> Self {
        SamplerSpec {
            kind: SamplerKind::Boltzmann,
            degeneracy,
            temperature,
            popularity_exponent: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.temperature.validate()?;
        if !(self.popularity_exponent >= 0.0 && self.popularity_exponent.is_finite()) {
            return Err(Error::Config(format!(
                "popularity exponent must be >= 0, got {}",
                self.popularity_exponent
            )));
        }
        Ok(())
    }
}

/// A fixed categorical distribution with O(1) alias-method draws.
#[derive(Clone, Debug)]
pub struct CategoricalTable {
    probabilities: Vec<f64>,
    alias: WeightedAliasIndex<f64>,
}

impl CategoricalTable {
    /// Normalizes non-negative `weights` into a table.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("weight vector"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidDistribution("negative or non-finite weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidDistribution("all weights are zero".into()));
        }
        let probabilities: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let alias = WeightedAliasIndex::new(probabilities.clone())
            .map_err(|e| Error::InvalidDistribution(e.to_string()))?;
        Ok(CategoricalTable { probabilities, alias })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.alias.sample(rng)
    }
}

/// A per-call categorical distribution sampled by inverse CDF. Used for the
/// Boltzmann sampler, whose probabilities change with every parameter update
/// so alias construction would not amortize.
#[derive(Clone, Debug)]
pub struct CdfTable {
    probabilities: Vec<f64>,
    cdf: WeightedIndex<f64>,
}

impl CdfTable {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        let cdf = WeightedIndex::new(&probabilities).map_err(|e| Error::InvalidDistribution(e.to_string()))?;
        Ok(CdfTable { probabilities, cdf })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.cdf.sample(rng)
    }
}

/// `D(j) exp(G(j) / T)`, normalized, computed in log space.
///
/// Targets with zero degeneracy get probability zero. At
/// [`Temperature::Infinite`] the result is the normalized degeneracy.
pub fn boltzmann_probs(scores: &[f64], degeneracy: &[f64], temperature: Temperature) -> Result<Vec<f64>> {
    if scores.len() != degeneracy.len() {
        return Err(Error::InvalidDistribution(format!(
            "{} scores but {} degeneracy weights",
            scores.len(),
            degeneracy.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Empty("score vector"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidDistribution("non-finite score".into()));
    }
    if degeneracy.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::InvalidDistribution("negative or non-finite degeneracy".into()));
    }
    if !degeneracy.iter().any(|d| *d > 0.0) {
        return Err(Error::InvalidDistribution("degeneracy is zero everywhere".into()));
    }
    let temperature = temperature.validate()?;
    let mut out = vec![0.0; scores.len()];
    boltzmann_into(scores, Some(degeneracy), temperature, &mut out);
    Ok(out)
}

/// Unchecked core of [`boltzmann_probs`]; `None` degeneracy means uniform.
fn boltzmann_into(scores: &[f64], degeneracy: Option<&[f64]>, temperature: Temperature, out: &mut [f64]) {
    match temperature {
        Temperature::Infinite => match degeneracy {
            Some(d) => out.copy_from_slice(d),
            None => out.fill(1.0),
        },
        Temperature::Finite(t) => {
            let inv_t = 1.0 / t;
            let logit = |j: usize| -> f64 {
                match degeneracy {
                    Some(d) if d[j] > 0.0 => d[j].ln() + scores[j] * inv_t,
                    Some(_) => f64::NEG_INFINITY,
                    None => scores[j] * inv_t,
                }
            };
            let m = (0..scores.len()).map(logit).fold(f64::NEG_INFINITY, f64::max);
            for (j, o) in out.iter_mut().enumerate() {
                *o = (logit(j) - m).exp();
            }
        }
    }
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= z);
}

/// `count^α`, normalized. `0^α = 0` for every α, so α = 0 gives the
/// uniform distribution over targets that occur at least once.
pub fn popularity_weights(counts: &[u64], alpha: f64) -> Result<Vec<f64>> {
    if !counts.iter().any(|&c| c > 0) {
        return Err(Error::InvalidDistribution("all popularity counts are zero".into()));
    }
    let w: Vec<f64> = counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { (c as f64).powf(alpha) })
        .collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

pub fn popularity_distribution(vocab: &Vocab, alpha: f64) -> Result<CategoricalTable> {
    CategoricalTable::from_weights(&popularity_weights(vocab.target_counts(), alpha)?)
}

enum DegeneracyWeights {
    Uniform,
    Shared(Vec<f64>),
    /// One row per context; `None` for contexts with no ground-truth mass.
    PerContext(Vec<Option<Vec<f64>>>),
}

/// The distribution negatives are drawn from for one context.
pub enum ContextDistribution<'a> {
    Static(&'a CategoricalTable),
    Dynamic(CdfTable),
}

impl ContextDistribution<'_> {
    pub fn probabilities(&self) -> &[f64] {
        match self {
            ContextDistribution::Static(t) => t.probabilities(),
            ContextDistribution::Dynamic(t) => t.probabilities(),
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TargetId {
        match self {
            ContextDistribution::Static(t) => t.sample(rng),
            ContextDistribution::Dynamic(t) => t.sample(rng),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<NegativeSet> {
        NegativeSet::new((0..n).map(|_| self.sample(rng)).collect())
    }
}

/// Negative sampler bound to a vocabulary (and, for the oracle degeneracy, a
/// ground truth). Static kinds keep one alias table; the Boltzmann kind
/// rebuilds `Q_i` from the current parameters on every call.
pub struct NegativeSampler {
    spec: SamplerSpec,
    card_j: usize,
    table: Option<CategoricalTable>,
    degeneracy: DegeneracyWeights,
}

impl NegativeSampler {
    pub fn new(spec: SamplerSpec, vocab: &Vocab, ground_truth: Option<&GroundTruth>) -> Result<Self> {
        spec.validate()?;
        let card_j = vocab.card_j();
        if card_j == 0 {
            return Err(Error::Empty("target vocabulary"));
        }
        let mut sampler = NegativeSampler {
            spec,
            card_j,
            table: None,
            degeneracy: DegeneracyWeights::Uniform,
        };
        match spec.kind {
            SamplerKind::Uniform => sampler.table = Some(CategoricalTable::from_weights(&vec![1.0; card_j])?),
            SamplerKind::Popularity => {
                sampler.table = Some(popularity_distribution(vocab, spec.popularity_exponent)?)
            }
            SamplerKind::Boltzmann => {
                sampler.degeneracy = match spec.degeneracy {
                    Degeneracy::Uniform => DegeneracyWeights::Uniform,
                    Degeneracy::Popularity => DegeneracyWeights::Shared(popularity_weights(
                        vocab.target_counts(),
                        spec.popularity_exponent,
                    )?),
                    Degeneracy::OracleInverseP => {
                        let gt = ground_truth.ok_or_else(|| {
                            Error::Config("the oracle 1/P degeneracy needs a synthetic ground truth".into())
                        })?;
                        if gt.card_i() != vocab.card_i() || gt.card_j() != card_j {
                            return Err(Error::Config("ground truth and vocabulary sizes differ".into()));
                        }
                        DegeneracyWeights::PerContext(
                            (0..gt.card_i()).map(|i| gt.oracle_degeneracy(i).ok()).collect(),
                        )
                    }
                };
            }
        }
        Ok(sampler)
    }

    pub fn spec(&self) -> &SamplerSpec {
        &self.spec
    }

    pub fn is_dynamic(&self) -> bool {
        self.spec.kind == SamplerKind::Boltzmann
    }

    /// `Q_i` for the current parameters.
    pub fn distribution(&self, params: &ModelParams, i: ContextId) -> Result<ContextDistribution<'_>> {
        params.check_context(i)?;
        if params.card_j() != self.card_j {
            return Err(Error::Config("sampler and model target counts differ".into()));
        }
        if let Some(t) = &self.table {
            return Ok(ContextDistribution::Static(t));
        }
        let mut probs = vec![0.0; self.card_j];
        let degeneracy = match &self.degeneracy {
            DegeneracyWeights::Uniform => None,
            DegeneracyWeights::Shared(d) => Some(d.as_slice()),
            DegeneracyWeights::PerContext(rows) => Some(rows[i].as_deref().ok_or(Error::ZeroMarginal(i))?),
        };
        if self.spec.temperature != Temperature::Infinite {
            params.fill_scores(i, &mut probs);
            if probs.iter().any(|s| !s.is_finite()) {
                return Err(Error::InvalidDistribution(format!("non-finite score for context {i}")));
            }
        }
        let scores = probs.clone();
        boltzmann_into(&scores, degeneracy, self.spec.temperature, &mut probs);
        Ok(ContextDistribution::Dynamic(CdfTable::new(probs)?))
    }

    /// `n` i.i.d. draws from `Q_i`.
    pub fn draw_negatives<R: Rng + ?Sized>(
        &self,
        params: &ModelParams,
        i: ContextId,
        n: usize,
        rng: &mut R,
    ) -> Result<NegativeSet> {
        if n == 0 {
            return Err(Error::Config("number of negatives must be at least 1".into()));
        }
        self.distribution(params, i)?.draw(n, rng)
    }
}

/// One-shot convenience wrapper around [`NegativeSampler`] for the
/// uniform, popularity and non-oracle Boltzmann kinds.
pub fn draw_negatives<R: Rng + ?Sized>(
    spec: &SamplerSpec,
    params: &ModelParams,
    vocab: &Vocab,
    i: ContextId,
    n: usize,
    rng: &mut R,
) -> Result<NegativeSet> {
    NegativeSampler::new(*spec, vocab, None)?.draw_negatives(params, i, n, rng)
}
