use relaxsoft::synthetic::{averaged_conditional_kl, build_mixture, kl_conditional, kl_joint, sample_pairs};
use relaxsoft::train::mean_std;
use relaxsoft::{train, GroundTruth, Matrix, Method, ModelParams, TrainConfig, TrainingData};

fn four_by_four() -> GroundTruth {
    let raw = [
        4.0, 2.0, 1.0, 1.0, //
        1.0, 1.0, 1.0, 1.0, //
        0.0, 3.0, 0.0, 1.0, //
        2.0, 0.0, 0.0, 6.0,
    ];
    let z: f64 = raw.iter().sum();
    GroundTruth::from_joint(4, 4, raw.iter().map(|x| x / z).collect()).unwrap()
}

#[test]
fn marginals_and_conditionals_of_a_small_joint() {
    let gt = four_by_four();
    assert!((gt.marginal(0) - 8.0 / 24.0).abs() < 1e-15);
    assert!((gt.marginal(2) - 4.0 / 24.0).abs() < 1e-15);
    let c = gt.conditional(3).unwrap();
    assert!((c[0] - 0.25).abs() < 1e-15 && (c[3] - 0.75).abs() < 1e-15);
    let inv = gt.oracle_degeneracy(2).unwrap();
    assert_eq!(inv[0], 0.0);
    assert!((inv[1] - 4.0 / 3.0).abs() < 1e-12);
}

#[test]
fn zero_model_gives_uniform_conditionals() {
    let gt = four_by_four();
    let pairs = sample_pairs(&gt, 50_000, 3).unwrap();
    let data = TrainingData::synthetic(gt.clone(), pairs).unwrap();
    let params = ModelParams::new(Matrix::zeros(4, 2), Matrix::zeros(4, 2)).unwrap();
    let kl = kl_joint(&gt, &params, &data.vocab).unwrap();
    // Σ_i P(i) Σ_j P(j|i) ln(4 P(j|i)), summed by hand
    let rows: [&[f64]; 4] = [&[0.5, 0.25, 0.125, 0.125], &[0.25; 4], &[0.75, 0.25], &[0.25, 0.75]];
    let weights = [8.0 / 24.0, 4.0 / 24.0, 4.0 / 24.0, 8.0 / 24.0];
    let oracle: f64 = rows
        .iter()
        .zip(weights)
        .map(|(r, w)| w * r.iter().map(|p| p * (4.0 * p).ln()).sum::<f64>())
        .sum();
    assert!((kl.model_term - oracle).abs() < 1e-12);
    assert!(kl.unseen_contexts.is_empty());
    assert!(kl.kl >= kl.model_term - 1e-12);
}

#[test]
fn kl_detects_missing_support() {
    assert_eq!(kl_conditional(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), f64::INFINITY);
    assert_eq!(kl_conditional(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), 2f64.ln());
    assert!(kl_conditional(&[1.0], &[0.5, 0.5]).is_err());
}

#[test]
fn sampled_frequencies_approach_the_joint() {
    let gt = four_by_four();
    let ds = sample_pairs(&gt, 400_000, 9).unwrap();
    let mut freq = [0.0; 16];
    for &(i, j) in ds.pairs() {
        freq[i * 4 + j] += 1.0 / 400_000.0;
    }
    let tv: f64 = freq.iter().zip(gt.joint()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
    assert!(tv < 5e-3, "total variation {tv}");
    assert!(freq[8] == 0.0 && freq[10] == 0.0);
}

#[test]
fn mixture_is_normalised_and_reproducible() {
    let a = build_mixture(30, 30, 5, 11, (0.5, 3.0)).unwrap();
    let b = build_mixture(30, 30, 5, 11, (0.5, 3.0)).unwrap();
    assert_eq!(a.joint(), b.joint());
    assert!((a.joint().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(a.joint().iter().all(|p| *p > 0.0));
    let bytes = a.to_bytes().unwrap();
    assert_eq!(GroundTruth::from_bytes(&bytes).unwrap().joint(), a.joint());
}

fn small_config(method: Method) -> TrainConfig {
    TrainConfig {
        method,
        d: 4,
        epochs: 30,
        batch_size: 64,
        learning_rate: 0.025,
        init_scale: Some(0.1),
        ..TrainConfig::default()
    }
}

#[test]
fn full_softmax_recovers_a_small_joint() {
    let raw = [0.2, 0.05, 0.05, 0.02, 0.1, 0.18, 0.1, 0.1, 0.2];
    let gt = GroundTruth::from_joint(3, 3, raw.to_vec()).unwrap();
    let pairs = sample_pairs(&gt, 30_000, 1).unwrap();
    let data = TrainingData::synthetic(gt.clone(), pairs).unwrap();
    let run = train(&small_config(Method::Mle), &data).unwrap();
    let kl = kl_joint(&gt, &run.params, &data.vocab).unwrap();
    assert!(kl.model_term < 1e-3, "model KL {}", kl.model_term);
    let c = averaged_conditional_kl(&gt, &run.params, &data.train_pairs()).unwrap();
    assert_eq!(c.contexts, 3);
    assert!(c.empirical_kl < 1e-3);

    let trace = &run.record.loss_trace;
    let head: f64 = trace[..10].iter().sum::<f64>() / 10.0;
    let tail: f64 = trace[trace.len() - 10..].iter().sum::<f64>() / 10.0;
    assert!(tail < head);
}

#[test]
fn every_method_trains_on_the_small_joint() {
    let gt = four_by_four();
    let pairs = sample_pairs(&gt, 5_000, 2).unwrap();
    let data = TrainingData::synthetic(gt.clone(), pairs).unwrap();
    for m in Method::ALL {
        let mut cfg = small_config(m);
        cfg.epochs = 3;
        cfg.n_negatives = 2;
        cfg.ss_negatives = 3;
        let run = train(&cfg, &data).unwrap();
        assert!(run.params.is_finite(), "{}", m.name());
        assert!(run.record.final_metrics().and_then(|r| r.metric("kl_joint_model")).is_some());
    }
}

#[test]
fn identical_configs_train_identically() {
    let gt = four_by_four();
    let data = TrainingData::synthetic(gt.clone(), sample_pairs(&gt, 3_000, 4).unwrap()).unwrap();
    let mut cfg = small_config(Method::Pbs);
    cfg.epochs = 2;
    cfg.seed = 17;
    let a = train(&cfg, &data).unwrap();
    let b = train(&cfg, &data).unwrap();
    assert_eq!(a.params, b.params);
    cfg.seed = 18;
    let c = train(&cfg, &data).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn mean_and_sample_deviation() {
    let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
    assert_eq!(m, 5.0);
    assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
    assert_eq!(mean_std(&[3.5]), (3.5, 0.0));
}
