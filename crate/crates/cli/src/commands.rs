use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use relaxsoft::data::{DatasetSpec, TrainingData};
use relaxsoft::eval::{analogy_eval, evaluate_ranking, similarity_eval, Correlation, EvalOptions};
use relaxsoft::ingest::{
    load_analogy_file, load_pair_cache, load_ratings_csv, load_similarity_file, pairs_from_ratings,
    pairs_from_text_with, read_corpus, save_pair_cache, split_dataset, PairDataset, RatingsColumns, Split,
    WindowOptions,
};
use relaxsoft::report::{comparison_table, steps_chart, temperature_chart};
use relaxsoft::synthetic::{build_mixture, sample_pairs};
use relaxsoft::textgen::{generate_corpus, TextGenOptions};
use relaxsoft::train::{grid_search_temperature, run_experiment_suite, GridResult, SelectionMetric, SuiteConfig};
use relaxsoft::{export_word2vec, load_checkpoint, save_checkpoint, Error, Side, Temperature, TrainConfig};

use crate::{Command, ConfigArgs};

/// Exit code of the first library error in the chain, 2 otherwise.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    e.chain()
        .find_map(|c| c.downcast_ref::<Error>())
        .map(|e| e.exit_code() as u8)
        .unwrap_or(2)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn fractions(v: &[f64]) -> Result<[f64; 3]> {
    match v {
        &[a, b, c] => Ok([a, b, c]),
        _ => bail!(Error::Config(format!("--split takes three fractions, got {}", v.len()))),
    }
}

fn resolve_config(args: &ConfigArgs) -> Result<(TrainConfig, TrainingData)> {
    let base = match &args.config {
        Some(p) => TrainConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => TrainConfig::default(),
    };
    let mut cfg = base.with_overrides(&args.set)?;
    if let Some(path) = &args.data {
        cfg.dataset = Some(DatasetSpec::Cache {
            path: path.clone(),
            ground_truth: args.ground_truth.clone(),
        });
    }
    cfg.validate()?;
    let Some(spec) = &cfg.dataset else {
        return Err(Error::Config("no dataset: set one in the config or pass --data".into()).into());
    };
    let data = spec.load().context("loading dataset")?;
    Ok((cfg, data))
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::SynthGen {
            card,
            components,
            pairs,
            seed,
            sample_seed,
            sigma_min,
            sigma_max,
            out,
            pairs_out,
        } => {
            let gt = build_mixture(card, card, components, seed, (sigma_min, sigma_max))?;
            gt.save(&out)?;
            if let Some(p) = pairs_out {
                let ds = sample_pairs(&gt, pairs, sample_seed)?;
                let mut vocab = gt.vocab();
                vocab.recount(ds.pairs())?;
                save_pair_cache(&ds, &vocab, &p)?;
                println!("wrote {} and {} ({} pairs)", out.display(), p.display(), ds.len());
            } else {
                println!("wrote {}", out.display());
            }
        }
        Command::SynthText {
            tokens,
            word_types,
            seed,
            out,
        } => {
            let text = generate_corpus(&TextGenOptions {
                n_tokens: tokens,
                word_types,
                seed,
                ..Default::default()
            })?;
            write(&out, text)?;
            println!("wrote {}", out.display());
        }
        Command::IngestText {
            corpus,
            window,
            vocab_size,
            max_bytes,
            bidirectional,
            split,
            split_seed,
            out,
        } => {
            let tokens = read_corpus(&corpus, max_bytes)?;
            let opts = WindowOptions {
                window,
                vocab_size,
                bidirectional,
            };
            let (vocab, ds) = pairs_from_text_with(&tokens, opts)?;
            finish_ingest(vocab, ds, &split, split_seed, &out)?;
        }
        Command::IngestRatings {
            ratings,
            threshold,
            max_items,
            window,
            user_col,
            item_col,
            rating_col,
            time_col,
            split,
            split_seed,
            out,
        } => {
            let columns = RatingsColumns {
                user: user_col,
                item: item_col,
                rating: rating_col,
                timestamp: (!time_col.is_empty()).then_some(time_col),
            };
            let events = load_ratings_csv(&ratings, &columns)?;
            let (vocab, ds) = pairs_from_ratings(&events, threshold, max_items, window)?;
            if ds.is_empty() {
                bail!(Error::Data(format!("no item pairs survive rating threshold {threshold}")));
            }
            finish_ingest(vocab, ds, &split, split_seed, &out)?;
        }
        Command::Train {
            cfg,
            out_dir,
            no_checkpoint,
        } => train_cmd(&cfg, &out_dir, no_checkpoint)?,
        Command::GridTemp {
            cfg,
            grid,
            metric,
            out_dir,
        } => grid_cmd(&cfg, &grid, &metric, &out_dir)?,
        Command::Suite { config, out_dir } => suite_cmd(&config, &out_dir)?,
        Command::Eval {
            checkpoint,
            pairs,
            split,
            mpr_negatives,
            ks,
            seed,
            max_pairs,
            similarity,
            spearman,
            analogy,
            analogy_ks,
            out,
        } => {
            let (params, vocab) = load_checkpoint(&checkpoint)?;
            let mut report = match pairs {
                Some(p) => {
                    let (cache_vocab, ds) = load_pair_cache(&p)?;
                    if cache_vocab.card_i() != vocab.card_i() || cache_vocab.card_j() != vocab.card_j() {
                        bail!(Error::Config("pair cache and checkpoint vocabularies differ".into()));
                    }
                    let which = match split.as_str() {
                        "train" => Split::Train,
                        "valid" | "validation" => Split::Valid,
                        "test" => Split::Test,
                        other => bail!(Error::Config(format!("unknown split {other}"))),
                    };
                    let opts = EvalOptions {
                        likelihood: true,
                        mpr_negatives,
                        ks,
                        seed,
                        max_pairs,
                    };
                    evaluate_ranking(&params, &ds.subset(which), &opts)?
                }
                None => Default::default(),
            };
            let method = if spearman {
                Correlation::Spearman
            } else {
                Correlation::Pearson
            };
            for path in &similarity {
                let triples = load_similarity_file(path)?;
                let r = similarity_eval(&params, &vocab, &triples, method)?;
                let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                eprintln!("{name}: {} pairs used, {} excluded", r.used, r.excluded);
                report.similarity.insert(name, r.correlation);
            }
            if let Some(path) = &analogy {
                let quads = load_analogy_file(path)?;
                let r = analogy_eval(&params, &vocab, &quads, &analogy_ks)?;
                eprintln!("analogy: {} excluded", r.excluded);
                report.analogy = r.precision;
            }
            report.seed = seed;
            let json = report.to_json()?;
            match out {
                Some(p) => {
                    write(&p, json)?;
                    for (name, v) in report.flat() {
                        println!("{name} = {v:.6}");
                    }
                }
                None => println!("{json}"),
            }
        }
        Command::ExportEmbeddings { checkpoint, side, out } => {
            let side = match side.as_str() {
                "input" | "w" => Side::Input,
                "output" | "o" => Side::Output,
                other => bail!(Error::Config(format!("unknown side {other}"))),
            };
            let (params, vocab) = load_checkpoint(&checkpoint)?;
            export_word2vec(&params, &vocab, side, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Report { suite, grid, csv, svg } => {
            if suite.is_none() && grid.is_empty() {
                bail!(Error::Config("report needs --suite or --grid".into()));
            }
            if let Some(p) = suite {
                let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                let result = serde_json::from_str(&text).map_err(|e| Error::parse(p.display().to_string(), None, e.to_string()))?;
                let table = comparison_table(&result);
                print!("{}", table.to_text());
                if let Some(c) = &csv {
                    write(c, table.to_csv())?;
                }
            }
            if !grid.is_empty() {
                let mut grids = Vec::new();
                for p in &grid {
                    let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                    let g: GridResult = serde_json::from_str(&text).map_err(|e| Error::parse(p.display().to_string(), None, e.to_string()))?;
                    let name = g
                        .rows
                        .iter()
                        .find_map(|r| r.record.as_ref())
                        .map(|r| r.config.method.name().to_string())
                        .unwrap_or_else(|| p.display().to_string());
                    grids.push((name, g));
                }
                let refs: Vec<(String, &GridResult)> = grids.iter().map(|(n, g)| (n.clone(), g)).collect();
                let chart = temperature_chart("validation metric by temperature", &refs);
                match &svg {
                    Some(s) => write(s, chart)?,
                    None => println!("{chart}"),
                }
            }
        }
    }
    Ok(())
}

fn finish_ingest(
    vocab: relaxsoft::Vocab,
    ds: PairDataset,
    split: &[f64],
    split_seed: u64,
    out: &Path,
) -> Result<()> {
    if ds.is_empty() {
        bail!(Error::Data("no pairs extracted".into()));
    }
    let ds = split_dataset(&ds, fractions(split)?, split_seed)?;
    let data = TrainingData::new(vocab, ds, None)?;
    save_pair_cache(&data.dataset, &data.vocab, out)?;
    println!(
        "wrote {}: {} contexts, {} targets, {} pairs ({} train / {} valid / {} test)",
        out.display(),
        data.vocab.card_i(),
        data.vocab.card_j(),
        data.dataset.len(),
        data.dataset.count(Split::Train),
        data.dataset.count(Split::Valid),
        data.dataset.count(Split::Test),
    );
    Ok(())
}

fn train_cmd(args: &ConfigArgs, out_dir: &Path, no_checkpoint: bool) -> Result<()> {
    let (cfg, data) = resolve_config(args)?;
    let hash = cfg.hash();
    let mut trained = relaxsoft::train(&cfg, &data)?;
    if !no_checkpoint {
        let p = out_dir.join(format!("{hash}.ckpt"));
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        save_checkpoint(&trained.params, &data.vocab, &p)?;
        trained.record.checkpoint_path = Some(p.display().to_string());
    }
    let rec = &trained.record;
    write(&out_dir.join(format!("{hash}.json")), rec.to_json()?)?;
    let mut csv = String::from("run_id,metric,value\n");
    if let Some(m) = rec.final_metrics() {
        for (k, v) in m.flat() {
            csv.push_str(&format!("{hash},{k},{v}\n"));
        }
    }
    if let Some(t) = &rec.test {
        for (k, v) in t.flat() {
            csv.push_str(&format!("{hash},test:{k},{v}\n"));
        }
    }
    write(&out_dir.join(format!("{hash}.csv")), csv)?;
    if rec.snapshots.len() > 1 {
        let metric = if data.ground_truth.is_some() {
            "kl_joint_model"
        } else {
            "likelihood"
        };
        write(
            &out_dir.join(format!("{hash}.svg")),
            steps_chart(&format!("{} {metric}", rec.label), metric, &[rec]),
        )?;
    }
    println!("{} {} steps in {:.1}s -> {}", rec.label, rec.steps, rec.wall_time_secs, out_dir.join(&hash).display());
    if let Some(m) = rec.final_metrics() {
        for (k, v) in m.flat() {
            println!("  {k} = {v:.6}");
        }
    }
    Ok(())
}

fn grid_cmd(args: &ConfigArgs, grid: &[String], metric: &str, out_dir: &Path) -> Result<()> {
    let (cfg, data) = resolve_config(args)?;
    let temps: Vec<Temperature> = grid.iter().map(|t| t.parse()).collect::<relaxsoft::Result<_>>()?;
    let metric: SelectionMetric = metric.parse()?;
    let result = grid_search_temperature(&cfg, &temps, &data, metric)?;
    let stem = format!("grid-{}", cfg.hash());
    write(&out_dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&result)?)?;
    write(&out_dir.join(format!("{stem}.csv")), result.to_csv())?;
    write(
        &out_dir.join(format!("{stem}.svg")),
        temperature_chart(&format!("{} {metric}", cfg.method.name()), &[(cfg.method.name().to_string(), &result)]),
    )?;
    print!("{}", result.to_csv());
    match (result.best, result.best_value) {
        (Some(t), Some(v)) => println!("best T = {t} ({metric} = {v:.6})"),
        _ => bail!(Error::Data("every temperature in the grid failed".into())),
    }
    Ok(())
}

fn suite_cmd(config: &PathBuf, out_dir: &Path) -> Result<()> {
    let cfg = SuiteConfig::load(config)?;
    let result = run_experiment_suite(&cfg, |run| match &run.error {
        None => eprintln!("done {} / {} / seed {}", run.dataset, run.method, run.seed),
        Some(e) => eprintln!("failed {} / {} / seed {}: {e}", run.dataset, run.method, run.seed),
    })?;
    let name = if cfg.name.is_empty() { "suite" } else { cfg.name.as_str() };
    let stem = format!("suite-{name}");
    write(&out_dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&result)?)?;
    write(&out_dir.join(format!("{stem}.csv")), result.table_csv())?;
    let table = comparison_table(&result);
    write(&out_dir.join(format!("{stem}-table.txt")), table.to_text())?;
    write(&out_dir.join(format!("{stem}-table.csv")), table.to_csv())?;
    print!("{}", table.to_text());
    Ok(())
}
