//! Training experiments on synthetic mixtures and a reduced text corpus.
//! Each takes minutes to tens of minutes in an optimized build.

use std::path::PathBuf;

use relaxsoft::data::{DatasetSpec, TrainingData};
use relaxsoft::eval::EvalOptions;
use relaxsoft::report::comparison_table;
use relaxsoft::textgen::TextGenOptions;
use relaxsoft::train::{aggregate, grid_search_temperature, mean_std, Method, SelectionMetric, SuiteResult, SuiteRun};
use relaxsoft::{train, RunRecord, Temperature, TrainConfig};

use crate::Check;

const KL: &str = "kl_joint_model";

fn mixture(components: usize, n_pairs: usize, mixture_seed: u64, sample_seed: u64) -> TrainingData {
    DatasetSpec::Synthetic {
        card: 200,
        components,
        n_pairs,
        mixture_seed,
        sample_seed,
        sigma_range: [0.02, 0.08],
    }
    .load()
    .expect("synthetic dataset")
}

/// Shared budget of the synthetic experiments.
fn synthetic_config(method: Method, seed: u64) -> TrainConfig {
    TrainConfig {
        method,
        d: 32,
        epochs: 5,
        batch_size: 512,
        n_negatives: 5,
        batch_cache: true,
        seed,
        ..TrainConfig::default()
    }
}

fn metric(rec: &RunRecord, key: &str) -> f64 {
    rec.final_metrics().and_then(|m| m.metric(key)).unwrap_or(f64::INFINITY)
}

fn temps(ts: &[f64]) -> Vec<Temperature> {
    ts.iter()
        .map(|&t| if t.is_finite() { Temperature::Finite(t) } else { Temperature::Infinite })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    mean_std(xs).0
}

// ---------------------------------------------------------------- A6

pub fn a6_temperature_optimum() -> Check {
    let grid = temps(&[0.25, 0.5, 0.75, 1.0, 2.0, 3.0, 5.0, 10.0, f64::INFINITY]);
    let degeneracies = [("1/P", Method::Obs), ("uniform", Method::Ubs), ("popularity", Method::Pbs)];
    let mut pass = true;
    let mut best_kl = [[0.0; 3]; 3];
    let mut lines = Vec::new();
    for seed in 0..3u64 {
        let data = mixture(50, 300_000, 0, 1 + seed);
        for (k, (name, method)) in degeneracies.iter().enumerate() {
            let cfg = TrainConfig {
                include_positive: false,
                ..synthetic_config(*method, seed)
            };
            let g = grid_search_temperature(&cfg, &grid, &data, SelectionMetric::KlJoint).expect("grid search");
            let vals: Vec<f64> = g.values().iter().map(|v| v.unwrap_or(f64::INFINITY)).collect();
            let best = g.best_value.unwrap_or(f64::INFINITY);
            let interior = best < vals[0] && best < vals[vals.len() - 1];
            pass &= interior;
            best_kl[seed as usize][k] = best;
            let t = g.best.map(|t| t.to_string()).unwrap_or("-".into());
            lines.push(format!("seed {seed} {name}: T*={t} KL={best:.4}{}", if interior { "" } else { " (edge)" }));
        }
        let [o, u, p] = best_kl[seed as usize];
        pass &= o < u && o < p;
    }
    let means: Vec<f64> = (0..3).map(|k| mean(&best_kl.map(|s| s[k]))).collect();
    Check::new(
        pass,
        format!(
            "mean best KL 1/P {:.4}, uniform {:.4}, popularity {:.4}; {}",
            means[0],
            means[1],
            means[2],
            lines.join("; ")
        ),
    )
}

// ---------------------------------------------------------------- A7

pub fn a7_regularization() -> Check {
    let sizes = [10_000, 30_000, 100_000];
    let large_batch = 2048;
    let cfg = |method: Method, seed: u64, batch: usize| TrainConfig {
        epochs: 20,
        batch_size: batch,
        temperature: Temperature::Finite(0.75),
        include_positive: false,
        ..synthetic_config(method, seed)
    };
    let mut pass = true;
    let mut gaps = vec![Vec::new(); sizes.len()];
    let mut notes = Vec::new();
    for seed in 0..3u64 {
        for (s, &n) in sizes.iter().enumerate() {
            let data = mixture(50, n, 0, 10 + seed);
            let mle = train(&cfg(Method::Mle, seed, 512), &data).expect("mle").record;
            let obs = train(&cfg(Method::Obs, seed, 512), &data).expect("obs").record;
            let (mt, ot) = (metric(&mle, "kl_true_avg"), metric(&obs, "kl_true_avg"));
            gaps[s].push(mt - ot);
            if n <= 30_000 && ot >= mt {
                pass = false;
                notes.push(format!("seed {seed} n={n}: RS true KL {ot:.4} not below MLE {mt:.4}"));
            }
            if n == 30_000 {
                let mle = train(&cfg(Method::Mle, seed, large_batch), &data).expect("mle").record;
                let obs = train(&cfg(Method::Obs, seed, large_batch), &data).expect("obs").record;
                let (me, oe) = (metric(&mle, "kl_empirical_avg"), metric(&obs, "kl_empirical_avg"));
                if me >= oe {
                    pass = false;
                    notes.push(format!("seed {seed} batch {large_batch}: MLE empirical KL {me:.4} not below RS {oe:.4}"));
                }
            }
        }
    }
    let mean_gaps: Vec<f64> = gaps.iter().map(|g| mean(g)).collect();
    let shrinking = mean_gaps.windows(2).all(|w| w[1] < w[0]);
    pass &= shrinking;
    let gap_text: Vec<String> = sizes
        .iter()
        .zip(&mean_gaps)
        .map(|(n, g)| format!("{n}: {g:.4}"))
        .collect();
    Check::new(
        pass,
        format!(
            "true-KL gap MLE minus RS by training size {}; {}",
            gap_text.join(", "),
            if notes.is_empty() { "ordering consistent over 3 seeds".to_owned() } else { notes.join("; ") }
        ),
    )
}

// ---------------------------------------------------------------- A8

/// Picks the Boltzmann configuration (normalization mode and temperature)
/// with the lowest KL on a separate selection seed.
fn select_boltzmann(method: Method, data: &TrainingData) -> (TrainConfig, String) {
    let selection_seed = 100;
    let mut best: Option<(f64, TrainConfig)> = None;
    for (include_positive, grid) in [(false, temps(&[2.0, 3.0, 5.0, 7.5])), (true, temps(&[3.0, 10.0, 30.0]))] {
        let cfg = TrainConfig {
            include_positive,
            ..synthetic_config(method, selection_seed)
        };
        let g = grid_search_temperature(&cfg, &grid, data, SelectionMetric::KlJoint).expect("grid search");
        if let (Some(t), Some(v)) = (g.best, g.best_value) {
            if best.as_ref().is_none_or(|b| v < b.0) {
                best = Some((
                    v,
                    TrainConfig {
                        temperature: t,
                        ..cfg
                    },
                ));
            }
        }
    }
    let (_, cfg) = best.expect("some Boltzmann configuration trains");
    let label = format!(
        "{}-T{}{}",
        method.name(),
        cfg.temperature,
        if cfg.include_positive { "" } else { " literal" }
    );
    (cfg, label)
}

pub fn a8_baselines() -> Check {
    let mut pass = true;
    let mut lines = Vec::new();
    for components in [10, 50, 90] {
        let data = mixture(components, 300_000, components as u64, 1);
        let (ubs, ubs_label) = select_boltzmann(Method::Ubs, &data);
        let (pbs, pbs_label) = select_boltzmann(Method::Pbs, &data);
        let mut table: Vec<(String, f64)> = Vec::new();
        let mut configs: Vec<(String, TrainConfig)> = [Method::Mle, Method::Ss, Method::Us, Method::Ps]
            .iter()
            .map(|&m| (m.name().to_owned(), synthetic_config(m, 0)))
            .collect();
        configs.push((ubs_label, ubs));
        configs.push((pbs_label, pbs));
        for (label, cfg) in configs {
            let kls: Vec<f64> = (1..=3u64)
                .map(|seed| {
                    let c = TrainConfig { seed, ..cfg.clone() };
                    train(&c, &data).map(|t| metric(&t.record, KL)).unwrap_or(f64::INFINITY)
                })
                .collect();
            table.push((label, mean(&kls)));
        }
        let best_baseline = table[..4].iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
        let wins = table[4].1 < best_baseline && table[5].1 < best_baseline;
        pass &= wins;
        let cells: Vec<String> = table.iter().map(|(l, v)| format!("{l} {v:.4}")).collect();
        lines.push(format!("{components} components: {}", cells.join(", ")));
    }
    Check::new(pass, format!("mean KL over 3 seeds; {}", lines.join("; ")))
}

// ---------------------------------------------------------------- A9

/// The first 10 MB of a text8-style corpus: `RELAXSOFT_TEXT8` if set,
/// otherwise the built-in generated corpus.
fn corpus_spec() -> DatasetSpec {
    let max_bytes = Some(10_000_000);
    match std::env::var_os("RELAXSOFT_TEXT8") {
        Some(path) => DatasetSpec::Text {
            path: PathBuf::from(path),
            window: 3,
            vocab_size: 5000,
            max_bytes,
            bidirectional: false,
            split: [0.7, 0.1, 0.2],
            split_seed: 0,
        },
        None => DatasetSpec::GeneratedText {
            generator: TextGenOptions::default(),
            window: 3,
            vocab_size: 5000,
            max_bytes,
            split: [0.7, 0.1, 0.2],
            split_seed: 0,
        },
    }
}

fn text_config(method: Method, seed: u64) -> TrainConfig {
    TrainConfig {
        method,
        d: 32,
        epochs: 1,
        max_steps: Some(1000),
        batch_size: 512,
        batch_cache: true,
        seed,
        eval: EvalOptions {
            max_pairs: Some(5000),
            ..EvalOptions::default()
        },
        ..TrainConfig::default()
    }
}

fn test_metric(rec: &RunRecord, key: &str) -> f64 {
    rec.test.as_ref().and_then(|m| m.metric(key)).unwrap_or(f64::NAN)
}

pub fn a9_text_ranking() -> Check {
    let spec = corpus_spec();
    let data = spec.load().expect("text corpus");
    let seeds = 0..5u64;
    let mut runs: Vec<SuiteRun> = Vec::new();
    let mut push = |index: usize, cfg: &TrainConfig, rec: RunRecord| {
        runs.push(SuiteRun {
            method_index: index,
            method: cfg.label(),
            dataset: "text".into(),
            seed: cfg.seed,
            record: Some(rec),
            error: None,
        })
    };

    // temperature chosen on validation MPR with seed 0
    let grid = temps(&[0.5, 1.0, 3.0, 6.0, 12.0, 36.0]);
    let g = grid_search_temperature(&text_config(Method::Pbs, 0), &grid, &data, SelectionMetric::Mpr)
        .expect("temperature grid");
    let t_star = g.best.expect("a temperature trains");
    let mut pbs = Vec::new();
    for (k, row) in g.rows.into_iter().enumerate() {
        let Some(rec) = row.record else { continue };
        let cfg = rec.config.clone();
        if row.temperature == t_star {
            pbs.push(rec.clone());
        }
        push(5 + k, &cfg, rec);
    }
    let star_index = 5 + grid.iter().position(|t| *t == t_star).unwrap();
    for seed in seeds.clone().skip(1) {
        let cfg = TrainConfig {
            temperature: t_star,
            ..text_config(Method::Pbs, seed)
        };
        let rec = train(&cfg, &data).expect("pbs").record;
        pbs.push(rec.clone());
        push(star_index, &cfg, rec);
    }
    let mut mle = Vec::new();
    for (index, method) in [(0, Method::Mle), (1, Method::Ss), (2, Method::Us), (3, Method::Ps)] {
        for seed in seeds.clone() {
            let cfg = text_config(method, seed);
            let rec = train(&cfg, &data).expect("baseline").record;
            if method == Method::Mle {
                mle.push(rec.clone());
            }
            push(index, &cfg, rec);
        }
    }

    let table = comparison_table(&SuiteResult {
        name: "text".into(),
        table: aggregate(&runs),
        runs,
    });
    let text = table.to_text();
    println!("{text}");
    let structure = table.columns.len() == 6
        && ["likelihood", "mpr", "prec@50", "prec@15", "prec@5"]
            .iter()
            .all(|m| table.rows.iter().any(|r| r.metric == *m));

    let avg = |recs: &[RunRecord], key: &str| mean(&recs.iter().map(|r| test_metric(r, key)).collect::<Vec<_>>());
    let (mle_mpr, pbs_mpr) = (avg(&mle, "mpr"), avg(&pbs, "mpr"));
    let (mle_p50, pbs_p50) = (avg(&mle, "prec@50"), avg(&pbs, "prec@50"));
    let pass = structure && pbs_mpr >= mle_mpr && pbs_p50 >= mle_p50;
    Check::new(
        pass,
        format!(
            "{} pairs, T*={t_star}; test MPR PBS {:.4} vs MLE {:.4}; Prec@50 PBS {:.4} vs MLE {:.4}; table structure {}",
            data.dataset.len(),
            pbs_mpr,
            mle_mpr,
            pbs_p50,
            mle_p50,
            if structure { "ok" } else { "incomplete" }
        ),
    )
}
