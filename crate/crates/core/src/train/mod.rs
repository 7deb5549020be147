//! Mini-batch training loop, temperature grid search and experiment suites.
//!
//! Within a mini-batch every pair's gradient is taken at the parameters the
//! batch started from; the summed (or averaged) gradient is applied once at
//! the end of the batch. Negatives are drawn per pair.

mod config;
mod grid;
mod optim;
mod suite;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{LrSchedule, Method, OptimizerKind, Reduction, TrainConfig};
pub use grid::{grid_search_temperature, GridResult, GridRow, SelectionMetric};
pub use suite::{
    aggregate, mean_std, run_experiment_suite, AggregateRow, NamedDataset, SuiteConfig, SuiteMethod, SuiteResult, SuiteRun,
};

use crate::data::TrainingData;
use crate::error::{Error, Result};
use crate::eval::{evaluate_ranking, MetricsReport};
use crate::ingest::Split;
use crate::losses::{
    bce_score_grad, mle_from_scores, relaxed_softmax_score_grad, sampled_softmax_score_grad, Normalization, ScoreGrad,
};
use crate::model::{init_params, ContextId, Matrix, ModelParams, TargetId};
use crate::sampling::{ContextDistribution, NegativeSampler};
use crate::synthetic::{averaged_conditional_kl, kl_joint};
use optim::{GradBuffer, Optimizer};

const NEGATIVE_STREAM: u64 = 1;
const EPOCH_STREAM: u64 = 1 << 32;

/// Metrics at one point of training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub epoch: f64,
    pub elapsed_secs: f64,
    pub metrics: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub label: String,
    pub config: TrainConfig,
    pub dataset_meta: String,
    pub card_i: usize,
    pub card_j: usize,
    pub n_train: usize,
    pub steps: usize,
    /// Mean per-pair loss of every mini-batch.
    pub loss_trace: Vec<f64>,
    /// Validation-split snapshots (and ground-truth KL when available); the
    /// last one is taken after the final step.
    pub snapshots: Vec<Snapshot>,
    /// Test-split metrics, computed once after training.
    pub test: Option<MetricsReport>,
    pub checkpoint_path: Option<String>,
    pub wall_time_secs: f64,
    pub notes: Vec<String>,
}

impl RunRecord {
    pub fn final_metrics(&self) -> Option<&MetricsReport> {
        self.snapshots.last().map(|s| &s.metrics)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub struct Trained {
    pub record: RunRecord,
    pub params: ModelParams,
}

enum LossKind {
    Mle,
    Sampled(Vec<f64>),
    Relaxed(Normalization),
    Bce,
}

/// Everything needed to turn a mini-batch into a gradient.
struct Engine {
    loss: LossKind,
    sampler: Option<NegativeSampler>,
    n_negatives: usize,
    mean: bool,
    cache: bool,
}

impl Engine {
    fn new(cfg: &TrainConfig, data: &TrainingData, params: &ModelParams) -> Result<Self> {
        let sampler = cfg
            .sampler()
            .map(|s| NegativeSampler::new(s, &data.vocab, data.ground_truth.as_ref()))
            .transpose()?;
        let loss = match cfg.method {
            Method::Mle => LossKind::Mle,
            Method::Ss => {
                let s = sampler.as_ref().expect("sampled softmax has a proposal");
                LossKind::Sampled(s.distribution(params, 0)?.probabilities().to_vec())
            }
            Method::Bce => LossKind::Bce,
            _ => LossKind::Relaxed(Normalization::from_flag(cfg.include_positive)),
        };
        Ok(Engine {
            loss,
            sampler,
            n_negatives: if cfg.method == Method::Ss {
                cfg.ss_negatives
            } else {
                cfg.n_negatives
            },
            mean: cfg.reduction == Reduction::Mean,
            cache: cfg.batch_cache,
        })
    }

    fn pair_grad<'s, R: Rng + ?Sized>(
        &'s self,
        params: &ModelParams,
        i: ContextId,
        j: TargetId,
        rng: &mut R,
        scores: &mut [f64],
        cache: &mut HashMap<ContextId, ContextDistribution<'s>>,
    ) -> Result<ScoreGrad> {
        if let LossKind::Mle = self.loss {
            params.check_context(i)?;
            params.check_target(j)?;
            params.fill_scores(i, scores);
            return Ok(mle_from_scores(scores, j));
        }
        let sampler = self.sampler.as_ref().expect("sampled losses carry a sampler");
        let negatives = if self.cache && sampler.is_dynamic() {
            let dist = match cache.entry(i) {
                std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::hash_map::Entry::Vacant(v) => v.insert(sampler.distribution(params, i)?),
            };
            dist.draw(self.n_negatives, rng)?
        } else {
            sampler.draw_negatives(params, i, self.n_negatives, rng)?
        };
        match &self.loss {
            LossKind::Sampled(q) => sampled_softmax_score_grad(params, i, j, q, &negatives),
            LossKind::Relaxed(mode) => relaxed_softmax_score_grad(params, i, j, &negatives, *mode),
            LossKind::Bce => bce_score_grad(params, i, j, &negatives),
            LossKind::Mle => unreachable!(),
        }
    }

    /// Accumulates the batch gradient into `buf` and returns the mean loss.
    fn batch_gradient<R: Rng + ?Sized>(
        &self,
        params: &ModelParams,
        batch: &[(ContextId, TargetId)],
        step: usize,
        rng: &mut R,
        buf: &mut GradBuffer,
        scores: &mut [f64],
    ) -> Result<f64> {
        let scale = if self.mean { 1.0 / batch.len() as f64 } else { 1.0 };
        let mut cache = HashMap::new();
        let mut total = 0.0;
        for &(i, j) in batch {
            let sg = match self.pair_grad(params, i, j, rng, scores, &mut cache) {
                Err(Error::InvalidDistribution(m)) => return Err(numerical(params, step, i, j, &m)),
                other => other?,
            };
            if !sg.is_finite() {
                return Err(numerical(params, step, i, j, "non-finite loss or gradient"));
            }
            total += sg.loss;
            let wi = params.w.row(i);
            sg.for_each(|k, c| {
                buf.add_w(i, c * scale, params.o.row(k));
                buf.add_o(k, c * scale, wi);
            });
        }
        buf.finish();
        Ok(total / batch.len() as f64)
    }
}

fn numerical(params: &ModelParams, step: usize, i: ContextId, j: TargetId, what: &str) -> Error {
    let detail = match params.score_all_targets(i) {
        Ok(s) => {
            let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            format!("{what}; scores of context {i} span [{lo}, {hi}]")
        }
        Err(_) => what.to_owned(),
    };
    Error::Numerical {
        step,
        context: i,
        target: j,
        detail,
    }
}

fn rows_finite(params: &ModelParams, buf: &GradBuffer) -> bool {
    buf.w_rows.iter().all(|&i| params.w.row(i).iter().all(|x| x.is_finite()))
        && buf.o_rows.iter().all(|&j| params.o.row(j).iter().all(|x| x.is_finite()))
}

struct Plan {
    n: usize,
    batch: usize,
    steps_per_epoch: usize,
    total: usize,
}

impl Plan {
    fn new(cfg: &TrainConfig, n: usize) -> Self {
        let steps_per_epoch = n.div_ceil(cfg.batch_size);
        let by_epochs = if cfg.epochs == 0 {
            usize::MAX
        } else {
            cfg.epochs.saturating_mul(steps_per_epoch)
        };
        Plan {
            n,
            batch: cfg.batch_size,
            steps_per_epoch,
            total: by_epochs.min(cfg.max_steps.unwrap_or(usize::MAX)),
        }
    }

    fn epoch_of(&self, step: usize) -> usize {
        step / self.steps_per_epoch
    }

    fn range(&self, step: usize) -> std::ops::Range<usize> {
        let k = step % self.steps_per_epoch;
        k * self.batch..((k + 1) * self.batch).min(self.n)
    }
}

/// Pair visiting order of one epoch; depends only on the seed and epoch.
fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(EPOCH_STREAM + epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

fn learning_rate(cfg: &TrainConfig, step: usize, total: usize) -> f64 {
    match cfg.lr_schedule {
        LrSchedule::Constant => cfg.learning_rate,
        LrSchedule::Linear => {
            let frac = step as f64 / total.max(1) as f64;
            cfg.learning_rate * (1.0 - (1.0 - cfg.min_lr_fraction) * frac)
        }
    }
}

fn snapshot(
    cfg: &TrainConfig,
    data: &TrainingData,
    params: &ModelParams,
    train_pairs: &[(ContextId, TargetId)],
    step: usize,
    plan: &Plan,
    start: Instant,
) -> Result<Snapshot> {
    let valid = data.dataset.subset(Split::Valid);
    let mut m = if valid.is_empty() {
        MetricsReport::default()
    } else {
        evaluate_ranking(params, &valid, &cfg.eval)?
    };
    if let Some(gt) = &data.ground_truth {
        m.kl_joint = Some(kl_joint(gt, params, &data.vocab)?);
        m.conditional_kl = Some(averaged_conditional_kl(gt, params, train_pairs)?);
    }
    m.seed = cfg.seed;
    m.config_hash = cfg.hash();
    m.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(Snapshot {
        step,
        epoch: step as f64 / plan.steps_per_epoch as f64,
        elapsed_secs: m.wall_time_secs,
        metrics: m,
    })
}

/// Trains on the training split of `data`.
///
/// Single-threaded runs are a pure function of `(cfg, data)`: loss traces
/// and final parameters repeat bitwise.
pub fn train(cfg: &TrainConfig, data: &TrainingData) -> Result<Trained> {
    cfg.validate()?;
    let start = Instant::now();
    let train_pairs = data.train_pairs();
    if train_pairs.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    data.dataset.validate(data.vocab.card_i(), data.vocab.card_j())?;
    let (card_i, card_j) = (data.vocab.card_i(), data.vocab.card_j());
    let mut params = init_params(card_i, card_j, cfg.d, cfg.seed, cfg.init_scale())?;
    let engine = Engine::new(cfg, data, &params)?;
    let plan = Plan::new(cfg, train_pairs.len());

    let mut snapshots = Vec::new();
    let loss_trace = if cfg.threads > 1 {
        let (p, trace) = train_async(cfg, &engine, &plan, &train_pairs, params)?;
        params = p;
        trace
    } else {
        let mut trace = Vec::with_capacity(plan.total.min(1 << 20));
        let mut opt = Optimizer::new(cfg.optimizer, &params);
        let mut buf = GradBuffer::new(card_i, card_j, cfg.d);
        let mut scores = vec![0.0; card_j];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(NEGATIVE_STREAM);
        let mut order: Vec<usize> = Vec::new();
        let mut batch: Vec<(ContextId, TargetId)> = Vec::with_capacity(plan.batch);
        for step in 0..plan.total {
            if step % plan.steps_per_epoch == 0 {
                order = epoch_order(plan.n, cfg.seed, plan.epoch_of(step));
            }
            batch.clear();
            batch.extend(order[plan.range(step)].iter().map(|&k| train_pairs[k]));
            let loss = engine.batch_gradient(&params, &batch, step, &mut rng, &mut buf, &mut scores)?;
            opt.step(&mut params, &buf, learning_rate(cfg, step, plan.total));
            if !rows_finite(&params, &buf) {
                let (i, j) = batch[0];
                return Err(numerical(&params, step, i, j, "parameters became non-finite"));
            }
            buf.clear();
            trace.push(loss);
            if let Some(every) = cfg.eval_every {
                if (step + 1) % every == 0 && step + 1 < plan.total {
                    snapshots.push(snapshot(cfg, data, &params, &train_pairs, step + 1, &plan, start)?);
                }
            }
        }
        trace
    };

    snapshots.push(snapshot(cfg, data, &params, &train_pairs, plan.total, &plan, start)?);
    let test_pairs = data.dataset.subset(Split::Test);
    let test = if test_pairs.is_empty() {
        None
    } else {
        let mut m = evaluate_ranking(&params, &test_pairs, &cfg.eval)?;
        m.seed = cfg.seed;
        m.config_hash = cfg.hash();
        m.wall_time_secs = start.elapsed().as_secs_f64();
        Some(m)
    };
    let mut notes = vec![format!(
        "optimizer {:?}, learning rate {} ({:?} schedule), batch {}, {} steps: configuration choices of this run",
        cfg.optimizer, cfg.learning_rate, cfg.lr_schedule, cfg.batch_size, plan.total
    )];
    if cfg.threads > 1 {
        notes.push(format!(
            "{} asynchronous workers: results are not reproducible bit for bit",
            cfg.threads
        ));
    }
    let record = RunRecord {
        config_hash: cfg.hash(),
        label: cfg.label(),
        config: cfg.clone(),
        dataset_meta: data.dataset.source_meta().to_owned(),
        card_i,
        card_j,
        n_train: train_pairs.len(),
        steps: plan.total,
        loss_trace,
        snapshots,
        test,
        checkpoint_path: None,
        wall_time_secs: start.elapsed().as_secs_f64(),
        notes,
    };
    Ok(Trained { record, params })
}

/// Parameters stored as `f64` bit patterns so that workers can update them
/// without locks. Updates are read-modify-write without synchronization:
/// concurrent writes to one entry may lose all but one of them.
struct SharedParams {
    w: Vec<AtomicU64>,
    o: Vec<AtomicU64>,
}

impl SharedParams {
    fn new(p: &ModelParams) -> Self {
        let conv = |m: &Matrix| m.as_slice().iter().map(|x| AtomicU64::new(x.to_bits())).collect();
        SharedParams {
            w: conv(&p.w),
            o: conv(&p.o),
        }
    }

    fn read_into(&self, p: &mut ModelParams) {
        for (dst, a) in p.w.as_mut_slice().iter_mut().zip(&self.w) {
            *dst = f64::from_bits(a.load(Ordering::Relaxed));
        }
        for (dst, a) in p.o.as_mut_slice().iter_mut().zip(&self.o) {
            *dst = f64::from_bits(a.load(Ordering::Relaxed));
        }
    }

    fn sgd(&self, buf: &GradBuffer, d: usize, lr: f64) {
        let apply = |store: &[AtomicU64], row: usize, g: &[f64]| {
            for (a, gk) in store[row * d..(row + 1) * d].iter().zip(g) {
                let v = f64::from_bits(a.load(Ordering::Relaxed));
                a.store((v - lr * gk).to_bits(), Ordering::Relaxed);
            }
        };
        for &i in &buf.w_rows {
            apply(&self.w, i, buf.gw.row(i));
        }
        for &j in &buf.o_rows {
            apply(&self.o, j, buf.go.row(j));
        }
    }
}

/// Asynchronous SGD: worker `w` takes steps `w, w + threads, ...`, reading
/// a fresh copy of the shared parameters per batch.
fn train_async(
    cfg: &TrainConfig,
    engine: &Engine,
    plan: &Plan,
    train_pairs: &[(ContextId, TargetId)],
    params: ModelParams,
) -> Result<(ModelParams, Vec<f64>)> {
    let shared = SharedParams::new(&params);
    let (card_i, card_j, d) = (params.card_i(), params.card_j(), params.dim());
    let results: Vec<Result<Vec<(usize, f64)>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.threads)
            .map(|w| {
                let shared = &shared;
                let mut local = params.clone();
                s.spawn(move || -> Result<Vec<(usize, f64)>> {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream(NEGATIVE_STREAM + 1 + w as u64);
                    let mut buf = GradBuffer::new(card_i, card_j, d);
                    let mut scores = vec![0.0; card_j];
                    let mut cur_epoch = usize::MAX;
                    let mut order = Vec::new();
                    let mut out = Vec::new();
                    let mut batch = Vec::with_capacity(plan.batch);
                    for step in (w..plan.total).step_by(cfg.threads) {
                        if plan.epoch_of(step) != cur_epoch {
                            cur_epoch = plan.epoch_of(step);
                            order = epoch_order(plan.n, cfg.seed, cur_epoch);
                        }
                        batch.clear();
                        batch.extend(order[plan.range(step)].iter().map(|&k| train_pairs[k]));
                        shared.read_into(&mut local);
                        let loss = engine.batch_gradient(&local, &batch, step, &mut rng, &mut buf, &mut scores)?;
                        shared.sgd(&buf, d, learning_rate(cfg, step, plan.total));
                        buf.clear();
                        out.push((step, loss));
                    }
                    Ok(out)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training worker panicked"))
            .collect()
    });
    let mut trace = Vec::with_capacity(plan.total);
    for r in results {
        trace.extend(r?);
    }
    trace.sort_by_key(|e| e.0);
    let mut params = params;
    shared.read_into(&mut params);
    if !params.is_finite() {
        return Err(Error::Numerical {
            step: plan.total,
            context: 0,
            target: 0,
            detail: "parameters became non-finite during asynchronous training".into(),
        });
    }
    Ok((params, trace.into_iter().map(|e| e.1).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::PairDataset;
    use crate::sampling::Temperature;
    use crate::synthetic::{build_mixture, sample_pairs};

    fn small() -> TrainingData {
        let gt = build_mixture(10, 10, 2, 3, (0.1, 0.2)).unwrap();
        let ds = sample_pairs(&gt, 400, 5).unwrap();
        TrainingData::synthetic(gt, ds).unwrap()
    }

    #[test]
    fn plan_batches_cover_epoch() {
        let cfg = TrainConfig {
            batch_size: 3,
            epochs: 2,
            ..Default::default()
        };
        let p = Plan::new(&cfg, 7);
        assert_eq!(p.steps_per_epoch, 3);
        assert_eq!(p.total, 6);
        assert_eq!(p.range(2), 6..7);
        assert_eq!(p.range(3), 0..3);
        let cfg = TrainConfig {
            max_steps: Some(4),
            ..cfg
        };
        assert_eq!(Plan::new(&cfg, 7).total, 4);
    }

    #[test]
    fn every_method_trains() {
        let data = small();
        for m in Method::ALL {
            let cfg = TrainConfig {
                method: m,
                d: 4,
                batch_size: 50,
                temperature: Temperature::Finite(2.0),
                ..Default::default()
            };
            let t = train(&cfg, &data).unwrap();
            assert_eq!(t.record.loss_trace.len(), 8, "{m}");
            assert!(t.record.final_metrics().unwrap().kl_joint.is_some());
        }
    }

    #[test]
    fn batch_cache_draws_the_same_negatives() {
        let data = small();
        let cfg = TrainConfig {
            method: Method::Pbs,
            d: 4,
            batch_size: 64,
            ..Default::default()
        };
        let a = train(&cfg, &data).unwrap();
        let b = train(
            &TrainConfig {
                batch_cache: true,
                ..cfg
            },
            &data,
        )
        .unwrap();
        assert_eq!(a.record.loss_trace, b.record.loss_trace);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn empty_training_split_is_a_data_error() {
        let gt = build_mixture(4, 4, 1, 0, (0.1, 0.2)).unwrap();
        let ds = PairDataset::with_split(vec![(0, 0)], vec![Split::Test], "t").unwrap();
        let data = TrainingData::synthetic(gt, ds).unwrap();
        let err = train(&TrainConfig::default(), &data).err().unwrap();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn async_mode_runs() {
        let data = small();
        let cfg = TrainConfig {
            method: Method::Us,
            d: 4,
            batch_size: 20,
            threads: 3,
            ..Default::default()
        };
        let t = train(&cfg, &data).unwrap();
        assert_eq!(t.record.loss_trace.len(), 20);
        assert!(t.params.is_finite());
    }
}
