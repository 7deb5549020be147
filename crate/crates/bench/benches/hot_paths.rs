use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relaxsoft::losses::{mle_loss_grad, relaxed_softmax_loss_grad};
use relaxsoft::model::dot;
use relaxsoft::sampling::{boltzmann_probs, NegativeSampler};
use relaxsoft::synthetic::{build_mixture, sample_pairs};
use relaxsoft::{init_params, train, Degeneracy, Method, SamplerSpec, Temperature, TrainConfig, TrainingData};

fn scoring(c: &mut Criterion) {
    let mut g = c.benchmark_group("score");
    for d in [32, 128] {
        let a: Vec<f64> = (0..d).map(|k| k as f64 * 0.01).collect();
        let b: Vec<f64> = (0..d).map(|k| 1.0 - k as f64 * 0.005).collect();
        g.bench_with_input(BenchmarkId::new("dot", d), &d, |bench, _| bench.iter(|| dot(black_box(&a), black_box(&b))));
    }
    let p = init_params(1, 5000, 64, 0, 0.1).unwrap();
    g.bench_function("all_targets_5000x64", |bench| bench.iter(|| p.score_all_targets(black_box(0)).unwrap()));
    g.finish();
}

fn sampling(c: &mut Criterion) {
    let mut g = c.benchmark_group("sampling");
    let scores: Vec<f64> = (0..5000).map(|k| ((k * 7919) % 1000) as f64 / 100.0).collect();
    let deg = vec![1.0; 5000];
    g.bench_function("boltzmann_probs_5000", |bench| {
        bench.iter(|| boltzmann_probs(black_box(&scores), &deg, Temperature::Finite(2.0)).unwrap())
    });

    let gt = build_mixture(200, 200, 10, 0, (0.02, 0.08)).unwrap();
    let data = TrainingData::synthetic(gt.clone(), sample_pairs(&gt, 20_000, 1).unwrap()).unwrap();
    let vocab = data.vocab;
    let params = init_params(200, 200, 32, 1, 0.1).unwrap();
    for (name, spec) in [
        ("uniform", SamplerSpec::uniform()),
        ("popularity", SamplerSpec::popularity(1.0)),
        ("boltzmann", SamplerSpec::boltzmann(Degeneracy::Popularity, Temperature::Finite(2.0))),
    ] {
        let sampler = NegativeSampler::new(spec, &vocab, Some(&gt)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        g.bench_function(BenchmarkId::new("draw_5", name), |bench| {
            bench.iter(|| sampler.draw_negatives(&params, black_box(3), 5, &mut rng).unwrap())
        });
    }
    g.finish();
}

fn losses(c: &mut Criterion) {
    let mut g = c.benchmark_group("loss_grad");
    let p = init_params(200, 200, 32, 2, 0.1).unwrap();
    let negs = relaxsoft::NegativeSet::new(vec![3, 17, 99, 150, 8]).unwrap();
    g.bench_function("mle_200", |bench| bench.iter(|| mle_loss_grad(&p, black_box(4), 9).unwrap()));
    g.bench_function("relaxed_5", |bench| {
        bench.iter(|| relaxed_softmax_loss_grad(&p, black_box(4), 9, &negs, true).unwrap())
    });
    g.finish();
}

fn training(c: &mut Criterion) {
    let mut g = c.benchmark_group("train");
    g.sample_size(10);
    let gt = build_mixture(200, 200, 10, 0, (0.02, 0.08)).unwrap();
    let data = TrainingData::synthetic(gt.clone(), sample_pairs(&gt, 20_000, 1).unwrap()).unwrap();
    for method in [Method::Mle, Method::Us, Method::Pbs] {
        let cfg = TrainConfig {
            method,
            d: 32,
            epochs: 1,
            batch_cache: true,
            ..TrainConfig::default()
        };
        g.bench_function(BenchmarkId::new("epoch_20k", method.name()), |bench| {
            bench.iter(|| train(&cfg, &data).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, scoring, sampling, losses, training);
criterion_main!(benches);
