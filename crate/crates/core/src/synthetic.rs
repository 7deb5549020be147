//! Discretized 2-D Gaussian-mixture ground truth over `I × J`.
//!
//! Cell `(a, b)` sits at `((a + 0.5) / card_i, (b + 0.5) / card_j)` in the
//! unit square; its mass is the mixture density at that point, normalized
//! over the grid.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::PairDataset;
use crate::losses::softmax_unchecked;
use crate::model::{ContextId, ModelParams};
use crate::vocab::Vocab;

/// One isotropic component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub mean: [f64; 2],
    pub sigma: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    card_i: usize,
    card_j: usize,
    joint: Vec<f64>,
    components: Vec<Component>,
    seed: u64,
}

/// Relative mask level for the oracle degeneracy: targets whose conditional
/// probability is at most this fraction of the row maximum get weight 0.
pub const ORACLE_MASK: f64 = 1e-12;

pub fn build_mixture(
    card_i: usize,
    card_j: usize,
    n_components: usize,
    seed: u64,
    sigma_range: (f64, f64),
) -> Result<GroundTruth> {
    if n_components == 0 {
        return Err(Error::Config("mixture needs at least one component".into()));
    }
    let (lo, hi) = sigma_range;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::Config(format!("degenerate covariance: sigma range [{lo}, {hi}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut components: Vec<Component> = (0..n_components)
        .map(|_| {
            let mean = [rng.random::<f64>(), rng.random::<f64>()];
            let sigma = if hi > lo { rng.random_range(lo..hi) } else { lo };
            // Dirichlet(1) weights via normalized Exp(1) draws
            let weight: f64 = Exp1.sample(&mut rng);
            Component { mean, sigma, weight }
        })
        .collect();
    let total: f64 = components.iter().map(|c| c.weight).sum();
    components.iter_mut().for_each(|c| c.weight /= total);
    GroundTruth::from_components(card_i, card_j, components, seed)
}

fn gaussian_axis(n: usize, mu: f64, sigma: f64) -> Vec<f64> {
    (0..n)
        .map(|a| {
            let x = (a as f64 + 0.5) / n as f64;
            (-(x - mu).powi(2) / (2.0 * sigma * sigma)).exp()
        })
        .collect()
}

impl GroundTruth {
    pub fn from_components(card_i: usize, card_j: usize, components: Vec<Component>, seed: u64) -> Result<Self> {
        if card_i == 0 || card_j == 0 {
            return Err(Error::Config("grid must be non-empty".into()));
        }
        if components.is_empty() {
            return Err(Error::Config("mixture needs at least one component".into()));
        }
        let mut joint = vec![0.0; card_i * card_j];
        for c in &components {
            if !(c.sigma > 0.0 && c.sigma.is_finite()) {
                return Err(Error::Config(format!("degenerate covariance: sigma = {}", c.sigma)));
            }
            if !(c.weight >= 0.0 && c.weight.is_finite()) {
                return Err(Error::Config(format!("bad component weight {}", c.weight)));
            }
            let gx = gaussian_axis(card_i, c.mean[0], c.sigma);
            let gy = gaussian_axis(card_j, c.mean[1], c.sigma);
            let amp = c.weight / (2.0 * std::f64::consts::PI * c.sigma * c.sigma);
            for (a, row) in joint.chunks_exact_mut(card_j).enumerate() {
                let ra = amp * gx[a];
                if ra == 0.0 {
                    continue;
                }
                for (cell, g) in row.iter_mut().zip(&gy) {
                    *cell += ra * g;
                }
            }
        }
        let total: f64 = joint.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Config("mixture density vanishes on the grid".into()));
        }
        joint.iter_mut().for_each(|x| *x /= total);
        Ok(GroundTruth {
            card_i,
            card_j,
            joint,
            components,
            seed,
        })
    }

    /// Ground truth from an explicit joint table (normalized on entry).
    pub fn from_joint(card_i: usize, card_j: usize, joint: Vec<f64>) -> Result<Self> {
        if card_i == 0 || card_j == 0 || joint.len() != card_i * card_j {
            return Err(Error::Config("joint table does not match the grid".into()));
        }
        if joint.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidDistribution("negative or non-finite joint entry".into()));
        }
        let total: f64 = joint.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidDistribution("joint table is all zeros".into()));
        }
        Ok(GroundTruth {
            card_i,
            card_j,
            joint: joint.into_iter().map(|x| x / total).collect(),
            components: Vec::new(),
            seed: 0,
        })
    }

    pub fn card_i(&self) -> usize {
        self.card_i
    }

    pub fn card_j(&self) -> usize {
        self.card_j
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn joint(&self) -> &[f64] {
        &self.joint
    }

    pub fn joint_row(&self, i: ContextId) -> &[f64] {
        &self.joint[i * self.card_j..(i + 1) * self.card_j]
    }

    pub fn marginal(&self, i: ContextId) -> f64 {
        self.joint_row(i).iter().sum()
    }

    fn check_context(&self, i: ContextId) -> Result<()> {
        if i >= self.card_i {
            return Err(Error::IndexOutOfRange {
                space: "context",
                index: i,
                len: self.card_i,
            });
        }
        Ok(())
    }

    /// `P_i`, the joint row normalized.
    pub fn conditional(&self, i: ContextId) -> Result<Vec<f64>> {
        self.check_context(i)?;
        let row = self.joint_row(i);
        let m: f64 = row.iter().sum();
        if !(m > 0.0) {
            return Err(Error::ZeroMarginal(i));
        }
        Ok(row.iter().map(|x| x / m).collect())
    }

    /// `1 / P_i(j)`, with weight 0 wherever `P_i(j)` is at most
    /// [`ORACLE_MASK`] times the row maximum.
    pub fn oracle_degeneracy(&self, i: ContextId) -> Result<Vec<f64>> {
        let p = self.conditional(i)?;
        let eps = ORACLE_MASK * p.iter().copied().fold(0.0, f64::max);
        Ok(p.iter().map(|&x| if x > eps { 1.0 / x } else { 0.0 }).collect())
    }

    pub fn vocab(&self) -> Vocab {
        Vocab::new(
            (0..self.card_i).map(|a| format!("i{a}")).collect(),
            (0..self.card_j).map(|b| format!("j{b}")).collect(),
        )
        .expect("grid labels are unique and non-empty")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        GroundTruth::from_bytes(&bytes)
    }

    /// JSON header line followed by the joint as little-endian `f64`.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = GtHeader {
            card_i: self.card_i,
            card_j: self.card_j,
            dtype: "f64".into(),
            seed: self.seed,
            components: self.components.clone(),
        };
        let mut out = serde_json::to_vec(&header)?;
        out.push(b'\n');
        for x in &self.joint {
            out.extend_from_slice(&x.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse("header", Some(1), "missing header line"))?;
        let h: GtHeader =
            serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::parse("header", Some(1), e.to_string()))?;
        if h.dtype != "f64" {
            return Err(Error::Format(format!("unsupported dtype {:?}", h.dtype)));
        }
        let payload = &bytes[nl + 1..];
        if payload.len() != h.card_i * h.card_j * 8 {
            return Err(Error::Format(format!(
                "joint payload has {} bytes, header implies {}",
                payload.len(),
                h.card_i * h.card_j * 8
            )));
        }
        let joint: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if joint.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Format("joint payload has invalid entries".into()));
        }
        Ok(GroundTruth {
            card_i: h.card_i,
            card_j: h.card_j,
            joint,
            components: h.components,
            seed: h.seed,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct GtHeader {
    card_i: usize,
    card_j: usize,
    dtype: String,
    seed: u64,
    components: Vec<Component>,
}

/// `n_pairs` i.i.d. cells drawn from the joint, all assigned to the training
/// split.
pub fn sample_pairs(gt: &GroundTruth, n_pairs: usize, seed: u64) -> Result<PairDataset> {
    if n_pairs == 0 {
        return Err(Error::Config("n_pairs must be at least 1".into()));
    }
    let alias = WeightedAliasIndex::new(gt.joint.clone()).map_err(|e| Error::InvalidDistribution(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..n_pairs)
        .map(|_| {
            let cell = alias.sample(&mut rng);
            (cell / gt.card_j, cell % gt.card_j)
        })
        .collect();
    Ok(PairDataset::new(
        pairs,
        format!(
            "synthetic mixture {}x{} ({} components, seed {}), {n_pairs} pairs, sample seed {seed}",
            gt.card_i,
            gt.card_j,
            gt.components.len(),
            gt.seed
        ),
    ))
}

/// `Σ p ln(p / q)` over entries with `p > 0`; infinite when `q` misses
/// support of `p`.
pub fn kl_conditional(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::InvalidDistribution(format!(
            "distributions have {} and {} entries",
            p.len(),
            q.len()
        )));
    }
    let mut kl = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if !(b > 0.0) {
                return Ok(f64::INFINITY);
            }
            kl += a * (a / b).ln();
        }
    }
    Ok(kl.max(0.0))
}

/// Joint KL between the ground truth and `Pop(I) × g_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlJoint {
    /// `Σ P(i,j) ln(P(i,j) / (Pop(I)(i) g_i(j)))`; infinite on a support
    /// mismatch.
    #[serde(with = "crate::float_serde")]
    pub kl: f64,
    /// `Σ_i P(i) KL(P_i || g_i)`, the only part that depends on the model.
    #[serde(with = "crate::float_serde")]
    pub model_term: f64,
    /// `Σ_i P(i) ln(P(i) / Pop(I)(i))`.
    #[serde(with = "crate::float_serde")]
    pub context_term: f64,
    /// Contexts with true mass but no training pairs.
    pub unseen_contexts: Vec<ContextId>,
    pub unseen_mass: f64,
}

pub fn kl_joint(gt: &GroundTruth, params: &ModelParams, vocab: &Vocab) -> Result<KlJoint> {
    if params.card_i() != gt.card_i || params.card_j() != gt.card_j || vocab.card_i() != gt.card_i {
        return Err(Error::Config("model, vocabulary and ground truth sizes differ".into()));
    }
    let pop = vocab.context_popularity();
    let mut scores = vec![0.0; gt.card_j];
    let mut model_term = 0.0;
    let mut context_term = 0.0;
    let mut unseen_contexts = Vec::new();
    let mut unseen_mass = 0.0;
    for i in 0..gt.card_i {
        let row = gt.joint_row(i);
        let m: f64 = row.iter().sum();
        if !(m > 0.0) {
            continue;
        }
        params.fill_scores(i, &mut scores);
        let g = softmax_unchecked(&scores);
        let p_i: Vec<f64> = row.iter().map(|x| x / m).collect();
        model_term += m * kl_conditional(&p_i, &g)?;
        if pop[i] > 0.0 {
            context_term += m * (m / pop[i]).ln();
        } else {
            context_term = f64::INFINITY;
            unseen_contexts.push(i);
            unseen_mass += m;
        }
    }
    Ok(KlJoint {
        kl: context_term + model_term,
        model_term,
        context_term,
        unseen_contexts,
        unseen_mass,
    })
}

/// Empirical conditionals `P̂_i` from training pairs, for contexts present.
pub fn empirical_conditionals(pairs: &[(ContextId, usize)], card_i: usize, card_j: usize) -> Vec<Option<Vec<f64>>> {
    let mut counts: Vec<Option<Vec<f64>>> = vec![None; card_i];
    for &(i, j) in pairs {
        counts[i].get_or_insert_with(|| vec![0.0; card_j])[j] += 1.0;
    }
    for row in counts.iter_mut().flatten() {
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= total);
    }
    counts
}

/// Averaged `KL(P_i || g_i)` and `KL(P̂_i || g_i)` over the contexts seen
/// in `train_pairs`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalKl {
    #[serde(with = "crate::float_serde")]
    pub true_kl: f64,
    #[serde(with = "crate::float_serde")]
    pub empirical_kl: f64,
    pub contexts: usize,
}

pub fn averaged_conditional_kl(
    gt: &GroundTruth,
    params: &ModelParams,
    train_pairs: &[(ContextId, usize)],
) -> Result<ConditionalKl> {
    let emp = empirical_conditionals(train_pairs, gt.card_i, gt.card_j);
    let mut scores = vec![0.0; gt.card_j];
    let (mut t, mut e, mut n) = (0.0, 0.0, 0usize);
    for (i, row) in emp.iter().enumerate() {
        let Some(p_hat) = row else { continue };
        params.fill_scores(i, &mut scores);
        let g = softmax_unchecked(&scores);
        t += kl_conditional(&gt.conditional(i)?, &g)?;
        e += kl_conditional(p_hat, &g)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("training contexts"));
    }
    Ok(ConditionalKl {
        true_kl: t / n as f64,
        empirical_kl: e / n as f64,
        contexts: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_centered_gaussian_is_symmetric() {
        let c = Component {
            mean: [0.5, 0.5],
            sigma: 0.2,
            weight: 1.0,
        };
        let gt = GroundTruth::from_components(9, 6, vec![c], 0).unwrap();
        for a in 0..9 {
            for b in 0..6 {
                let x = gt.joint_row(a)[b];
                let y = gt.joint_row(8 - a)[5 - b];
                assert!((x - y).abs() <= 1e-12, "({a},{b})");
            }
        }
    }

    #[test]
    fn mixture_normalized_and_deterministic() {
        let a = build_mixture(30, 20, 5, 3, (0.02, 0.08)).unwrap();
        assert!((a.joint().iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        let b = build_mixture(30, 20, 5, 3, (0.02, 0.08)).unwrap();
        assert!(a.joint().iter().zip(b.joint()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(build_mixture(3, 3, 1, 0, (0.0, 0.1)).is_err());
        assert!(build_mixture(3, 3, 0, 0, (0.01, 0.1)).is_err());
    }

    #[test]
    fn conditional_examples() {
        let gt = GroundTruth::from_joint(2, 3, vec![1.0; 6]).unwrap();
        for x in gt.conditional(1).unwrap() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        let gt = GroundTruth::from_joint(2, 2, vec![1.0, 3.0, 0.0, 0.0]).unwrap();
        assert!(matches!(gt.conditional(1), Err(Error::ZeroMarginal(1))));
        assert!(matches!(gt.oracle_degeneracy(1), Err(Error::ZeroMarginal(1))));
        let c = gt.conditional(0).unwrap();
        assert!((c[0] - 0.25).abs() < 1e-15 && (c[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn oracle_degeneracy_examples() {
        let gt = GroundTruth::from_joint(1, 4, vec![1.0; 4]).unwrap();
        assert!(gt.oracle_degeneracy(0).unwrap().iter().all(|w| (w - 4.0).abs() < 1e-12));
        let gt = GroundTruth::from_joint(1, 2, vec![0.9, 0.1]).unwrap();
        let w = gt.oracle_degeneracy(0).unwrap();
        let z: f64 = w.iter().sum();
        assert!((w[0] / z - 0.1).abs() < 1e-12 && (w[1] / z - 0.9).abs() < 1e-12);
        let gt = GroundTruth::from_joint(1, 3, vec![1.0, 1e-13, 0.0]).unwrap();
        assert_eq!(&gt.oracle_degeneracy(0).unwrap()[1..], &[0.0, 0.0]);
    }

    #[test]
    fn point_mass_samples_identical_pairs() {
        let mut joint = vec![0.0; 9];
        joint[5] = 1.0;
        let gt = GroundTruth::from_joint(3, 3, joint).unwrap();
        let d = sample_pairs(&gt, 100, 1).unwrap();
        assert!(d.pairs().iter().all(|&p| p == (1, 2)));
        assert_eq!(sample_pairs(&gt, 100, 1).unwrap().pairs(), d.pairs());
    }

    #[test]
    fn kl_conditional_examples() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(kl_conditional(&p, &p).unwrap(), 0.0);
        let q = [0.5, 0.25, 0.25];
        let want = 0.2 * (0.2f64 / 0.5).ln() + 0.3 * (0.3f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.25).ln();
        assert!((kl_conditional(&p, &q).unwrap() - want).abs() < 1e-15);
        assert_eq!(kl_conditional(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), f64::INFINITY);
        assert_eq!(kl_conditional(&[0.0, 1.0], &[0.5, 0.5]).unwrap(), 2f64.ln());
    }

    #[test]
    fn serialization_round_trip() {
        let gt = build_mixture(7, 5, 3, 9, (0.05, 0.1)).unwrap();
        let back = GroundTruth::from_bytes(&gt.to_bytes().unwrap()).unwrap();
        assert_eq!(back, gt);
        let bytes = gt.to_bytes().unwrap();
        assert!(GroundTruth::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
