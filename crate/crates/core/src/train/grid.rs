use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::TrainingData;
use crate::error::{Error, Result};
use crate::eval::MetricsReport;
use crate::sampling::Temperature;
use crate::train::{train, RunRecord, TrainConfig};

/// Metric used to pick a temperature, read from the final snapshot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionMetric {
    /// Model-dependent part of the joint KL to the ground truth
    /// (lower is better).
    KlJoint,
    /// Averaged `KL(P_i || g_i)` over training contexts (lower is better).
    KlTrue,
    Likelihood,
    Mpr,
    Prec(usize),
}

impl SelectionMetric {
    pub fn lower_is_better(self) -> bool {
        matches!(self, SelectionMetric::KlJoint | SelectionMetric::KlTrue)
    }

    /// Name of the metric in [`MetricsReport::flat`].
    pub fn report_key(self) -> String {
        match self {
            SelectionMetric::KlJoint => "kl_joint_model".into(),
            SelectionMetric::KlTrue => "kl_true_avg".into(),
            SelectionMetric::Likelihood => "likelihood".into(),
            SelectionMetric::Mpr => "mpr".into(),
            SelectionMetric::Prec(k) => format!("prec@{k}"),
        }
    }

    pub fn read(self, m: &MetricsReport) -> Option<f64> {
        m.metric(&self.report_key())
    }

    /// Whether `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        if self.lower_is_better() {
            a < b
        } else {
            a > b
        }
    }
}

impl fmt::Display for SelectionMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionMetric::KlJoint => f.write_str("kl_joint"),
            SelectionMetric::KlTrue => f.write_str("kl_true"),
            SelectionMetric::Likelihood => f.write_str("likelihood"),
            SelectionMetric::Mpr => f.write_str("mpr"),
            SelectionMetric::Prec(k) => write!(f, "prec@{k}"),
        }
    }
}

impl FromStr for SelectionMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Ok(match s.as_str() {
            "kl_joint" | "kl_joint_model" | "kl" => SelectionMetric::KlJoint,
            "kl_true" | "kl_true_avg" => SelectionMetric::KlTrue,
            "likelihood" => SelectionMetric::Likelihood,
            "mpr" => SelectionMetric::Mpr,
            other => {
                let k = other
                    .strip_prefix("prec@")
                    .and_then(|k| k.parse().ok())
                    .filter(|&k: &usize| k > 0)
                    .ok_or_else(|| Error::Config(format!("unknown selection metric {s:?}")))?;
                SelectionMetric::Prec(k)
            }
        })
    }
}

impl Serialize for SelectionMetric {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SelectionMetric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub temperature: Temperature,
    #[serde(default, with = "crate::float_serde::option")]
    pub value: Option<f64>,
    pub error: Option<String>,
    pub record: Option<RunRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub metric: SelectionMetric,
    pub best: Option<Temperature>,
    #[serde(default, with = "crate::float_serde::option")]
    pub best_value: Option<f64>,
    pub rows: Vec<GridRow>,
}

impl GridResult {
    pub fn values(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.value).collect()
    }

    /// `temperature,value,error` rows.
    pub fn to_csv(&self) -> String {
        let mut s = format!("temperature,{},error\n", self.metric);
        for r in &self.rows {
            let v = r.value.map(|v| v.to_string()).unwrap_or_default();
            let e = r.error.as_deref().unwrap_or("").replace([',', '\n'], " ");
            s.push_str(&format!("{},{v},{e}\n", r.temperature));
        }
        s
    }
}

/// Index of the best finite value; ties keep the earlier entry.
pub(crate) fn select_best(values: &[Option<f64>], metric: SelectionMetric) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, v) in values.iter().enumerate() {
        let Some(v) = v.filter(|v| v.is_finite()) else { continue };
        if best.is_none_or(|(_, b)| metric.better(v, b)) {
            best = Some((k, v));
        }
    }
    best.map(|b| b.0)
}

/// One full training run per temperature; failed runs stay in the table
/// with their error and are skipped by the selection.
pub fn grid_search_temperature(
    base: &TrainConfig,
    grid: &[Temperature],
    data: &TrainingData,
    metric: SelectionMetric,
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::Config("temperature grid is empty".into()));
    }
    if !base.method.uses_temperature() {
        return Err(Error::Config(format!("method {} has no temperature", base.method)));
    }
    let rows: Vec<GridRow> = grid
        .iter()
        .map(|&t| {
            let cfg = TrainConfig {
                temperature: t,
                ..base.clone()
            };
            match train(&cfg, data) {
                Ok(run) => {
                    let value = run.record.final_metrics().and_then(|m| metric.read(m));
                    GridRow {
                        temperature: t,
                        value,
                        error: value.is_none().then(|| format!("metric {metric} not available")),
                        record: Some(run.record),
                    }
                }
                Err(e) => GridRow {
                    temperature: t,
                    value: None,
                    error: Some(e.to_string()),
                    record: None,
                },
            }
        })
        .collect();
    let values: Vec<Option<f64>> = rows.iter().map(|r| r.value).collect();
    let best = select_best(&values, metric);
    Ok(GridResult {
        metric,
        best: best.map(|k| rows[k].temperature),
        best_value: best.and_then(|k| rows[k].value),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_names_round_trip() {
        for m in [
            SelectionMetric::KlJoint,
            SelectionMetric::KlTrue,
            SelectionMetric::Likelihood,
            SelectionMetric::Mpr,
            SelectionMetric::Prec(15),
        ] {
            assert_eq!(m.to_string().parse::<SelectionMetric>().unwrap(), m);
        }
        assert!("prec@0".parse::<SelectionMetric>().is_err());
    }

    #[test]
    fn selection_direction_and_ties() {
        let v = [Some(3.0), None, Some(1.0), Some(1.0), Some(f64::NAN)];
        assert_eq!(select_best(&v, SelectionMetric::KlJoint), Some(2));
        assert_eq!(select_best(&v, SelectionMetric::Mpr), Some(0));
        assert_eq!(select_best(&[None], SelectionMetric::Mpr), None);
    }
}
