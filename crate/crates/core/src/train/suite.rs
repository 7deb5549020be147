use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::DatasetSpec;
use crate::error::{Error, Result};
use crate::train::{train, RunRecord, TrainConfig};

/// One method column of a suite: overrides applied to the base config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteMethod {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(flatten)]
    pub set: serde_json::Map<String, serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedDataset {
    pub name: String,
    #[serde(flatten)]
    pub spec: DatasetSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub base: TrainConfig,
    pub methods: Vec<SuiteMethod>,
    pub datasets: Vec<NamedDataset>,
    pub seeds: Vec<u64>,
}

impl SuiteConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(format!("suite config: {e}")))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("suite config: {e}")))
        } else {
            Self::from_toml_str(&text)
        }
    }

    /// Resolved config of method `m` at `seed`, without a dataset.
    pub fn method_config(&self, m: usize, seed: u64) -> Result<TrainConfig> {
        let mut cfg = self.base.merged(&serde_json::Value::Object(self.methods[m].set.clone()))?;
        cfg.seed = seed;
        Ok(cfg)
    }

    pub fn method_label(&self, m: usize) -> Result<String> {
        match &self.methods[m].label {
            Some(l) => Ok(l.clone()),
            None => Ok(self.method_config(m, 0)?.label()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteRun {
    pub method_index: usize,
    pub method: String,
    pub dataset: String,
    pub seed: u64,
    pub record: Option<RunRecord>,
    pub error: Option<String>,
}

/// Mean and sample standard deviation of one metric over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method_index: usize,
    pub method: String,
    pub dataset: String,
    pub metric: String,
    #[serde(with = "crate::float_serde")]
    pub mean: f64,
    #[serde(with = "crate::float_serde")]
    pub std: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub runs: Vec<SuiteRun>,
    pub table: Vec<AggregateRow>,
}

impl SuiteResult {
    pub fn get(&self, method: &str, dataset: &str, metric: &str) -> Option<&AggregateRow> {
        self.table
            .iter()
            .find(|r| r.method == method && r.dataset == dataset && r.metric == metric)
    }

    /// `method,dataset,metric,mean,std,n` rows.
    pub fn table_csv(&self) -> String {
        let mut s = String::from("method,dataset,metric,mean,std,n\n");
        for r in &self.table {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.method, r.dataset, r.metric, r.mean, r.std, r.n
            ));
        }
        s
    }
}

/// Final validation metrics by name, and test metrics as `test:<name>`.
pub(crate) fn run_metrics(r: &RunRecord) -> Vec<(String, f64)> {
    let mut out = r.final_metrics().map(|m| m.flat()).unwrap_or_default();
    if let Some(t) = &r.test {
        out.extend(t.flat().into_iter().map(|(k, v)| (format!("test:{k}"), v)));
    }
    out
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Groups successful runs by (dataset, method entry, metric), in first-seen
/// order.
pub fn aggregate(runs: &[SuiteRun]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(usize, usize, usize), (AggregateRow, Vec<f64>)> = BTreeMap::new();
    let mut datasets: Vec<&str> = Vec::new();
    let mut metric_order: Vec<String> = Vec::new();
    for run in runs {
        let Some(rec) = &run.record else { continue };
        let d = match datasets.iter().position(|x| *x == run.dataset) {
            Some(d) => d,
            None => {
                datasets.push(&run.dataset);
                datasets.len() - 1
            }
        };
        for (name, v) in run_metrics(rec) {
            let m = match metric_order.iter().position(|x| *x == name) {
                Some(m) => m,
                None => {
                    metric_order.push(name.clone());
                    metric_order.len() - 1
                }
            };
            groups
                .entry((d, run.method_index, m))
                .or_insert_with(|| {
                    (
                        AggregateRow {
                            method_index: run.method_index,
                            method: run.method.clone(),
                            dataset: run.dataset.clone(),
                            metric: name,
                            mean: 0.0,
                            std: 0.0,
                            n: 0,
                        },
                        Vec::new(),
                    )
                })
                .1
                .push(v);
        }
    }
    groups
        .into_values()
        .map(|(mut row, xs)| {
            (row.mean, row.std) = mean_std(&xs);
            row.n = xs.len();
            row
        })
        .collect()
}

/// Runs every dataset × method × seed cell. A failing run (or dataset) is
/// recorded with its error and the suite carries on. `on_run` sees each run
/// as it completes.
pub fn run_experiment_suite(cfg: &SuiteConfig, mut on_run: impl FnMut(&SuiteRun)) -> Result<SuiteResult> {
    if cfg.methods.is_empty() || cfg.datasets.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::Config("a suite needs methods, datasets and seeds".into()));
    }
    let labels: Vec<String> = (0..cfg.methods.len()).map(|m| cfg.method_label(m)).collect::<Result<_>>()?;
    let mut runs = Vec::new();
    for ds in &cfg.datasets {
        let data = ds.spec.load();
        for (m, label) in labels.iter().enumerate() {
            for &seed in &cfg.seeds {
                let outcome = match &data {
                    Err(e) => Err(format!("dataset {}: {e}", ds.name)),
                    Ok(data) => cfg
                        .method_config(m, seed)
                        .map(|mut c| {
                            c.dataset = Some(ds.spec.clone());
                            c
                        })
                        .and_then(|c| train(&c, data))
                        .map_err(|e| e.to_string()),
                };
                let run = match outcome {
                    Ok(t) => SuiteRun {
                        method_index: m,
                        method: label.clone(),
                        dataset: ds.name.clone(),
                        seed,
                        record: Some(t.record),
                        error: None,
                    },
                    Err(e) => SuiteRun {
                        method_index: m,
                        method: label.clone(),
                        dataset: ds.name.clone(),
                        seed,
                        record: None,
                        error: Some(e),
                    },
                };
                on_run(&run);
                runs.push(run);
            }
        }
    }
    let table = aggregate(&runs);
    Ok(SuiteResult {
        name: cfg.name.clone(),
        runs,
        table,
    })
}
