use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::DatasetSpec;
use crate::error::{Error, Result};
use crate::eval::EvalOptions;
use crate::sampling::{Degeneracy, SamplerSpec, Temperature};

/// Training method: loss plus negative distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Full softmax.
    Mle,
    /// Sampled softmax, popularity proposal.
    Ss,
    /// Relaxed softmax, uniform negatives.
    Us,
    /// Relaxed softmax, popularity negatives.
    Ps,
    /// Relaxed softmax, Boltzmann negatives with uniform degeneracy.
    Ubs,
    /// Relaxed softmax, Boltzmann negatives with popularity degeneracy.
    Pbs,
    /// Relaxed softmax, Boltzmann negatives with the oracle `1/P_i`
    /// degeneracy (synthetic data only).
    Obs,
    /// Binary cross-entropy, popularity negatives.
    Bce,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Mle,
        Method::Ss,
        Method::Us,
        Method::Ps,
        Method::Ubs,
        Method::Pbs,
        Method::Obs,
        Method::Bce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mle => "MLE",
            Method::Ss => "SS",
            Method::Us => "US",
            Method::Ps => "PS",
            Method::Ubs => "UBS",
            Method::Pbs => "PBS",
            Method::Obs => "OBS",
            Method::Bce => "BCE",
        }
    }

    pub fn uses_temperature(self) -> bool {
        matches!(self, Method::Ubs | Method::Pbs | Method::Obs)
    }

    /// Negative distribution, `None` for the full softmax.
    pub fn sampler(self, temperature: Temperature, alpha: f64) -> Option<SamplerSpec> {
        let mut spec = match self {
            Method::Mle => return None,
            Method::Us => SamplerSpec::uniform(),
            Method::Ss | Method::Ps | Method::Bce => SamplerSpec::popularity(alpha),
            Method::Ubs => SamplerSpec::boltzmann(Degeneracy::Uniform, temperature),
            Method::Pbs => SamplerSpec::boltzmann(Degeneracy::Popularity, temperature),
            Method::Obs => SamplerSpec::boltzmann(Degeneracy::OracleInverseP, temperature),
        };
        spec.popularity_exponent = alpha;
        Some(spec)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adagrad,
    Adam,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    /// Linear decay to `min_lr_fraction * learning_rate` at the last step.
    #[default]
    Linear,
}

/// How per-pair gradients combine within a mini-batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    /// Negatives per positive pair for the relaxed softmax and BCE.
    pub n_negatives: usize,
    /// Negatives per positive pair for the sampled softmax.
    pub ss_negatives: usize,
    pub temperature: Temperature,
    pub popularity_exponent: f64,
    /// Normalize the relaxed softmax over the positive as well as the
    /// negatives (bounded loss); `false` is the negatives-only form.
    pub include_positive: bool,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many mini-batches, overriding `epochs` when smaller.
    pub max_steps: Option<usize>,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub min_lr_fraction: f64,
    pub optimizer: OptimizerKind,
    pub reduction: Reduction,
    pub d: usize,
    /// Defaults to `0.5 / d`.
    pub init_scale: Option<f64>,
    pub seed: u64,
    /// Build each Boltzmann distribution once per distinct context in a
    /// mini-batch. Parameters only change between mini-batches, so this
    /// reuses exactly the distribution a per-pair rebuild would produce.
    pub batch_cache: bool,
    /// Worker threads for lock-free asynchronous SGD; 1 is the
    /// deterministic single-threaded loop.
    pub threads: usize,
    /// Take an evaluation snapshot every this many steps (and always at the
    /// end).
    pub eval_every: Option<usize>,
    pub eval: EvalOptions,
    /// Data to train on when run through the CLI or a suite.
    pub dataset: Option<DatasetSpec>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::Mle,
            n_negatives: 5,
            ss_negatives: 50,
            temperature: Temperature::Finite(1.0),
            popularity_exponent: 1.0,
            include_positive: true,
            batch_size: 512,
            epochs: 1,
            max_steps: None,
            learning_rate: 0.025,
            lr_schedule: LrSchedule::Linear,
            min_lr_fraction: 1e-4,
            optimizer: OptimizerKind::Sgd,
            reduction: Reduction::Sum,
            d: 64,
            init_scale: None,
            seed: 0,
            batch_cache: false,
            threads: 1,
            eval_every: None,
            eval: EvalOptions::default(),
            dataset: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.epochs == 0 && self.max_steps.is_none() {
            return bad("epochs must be at least 1");
        }
        if self.max_steps == Some(0) {
            return bad("max_steps must be at least 1");
        }
        if self.d == 0 {
            return bad("d must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.min_lr_fraction) {
            return bad("min_lr_fraction must lie in [0, 1]");
        }
        if let Some(s) = self.init_scale {
            if !(s.is_finite() && s > 0.0) {
                return bad("init_scale must be positive");
            }
        }
        if self.method != Method::Mle && self.method != Method::Ss && self.n_negatives == 0 {
            return bad("n_negatives must be at least 1");
        }
        if self.method == Method::Ss && self.ss_negatives == 0 {
            return bad("ss_negatives must be at least 1");
        }
        if self.threads == 0 {
            return bad("threads must be at least 1");
        }
        if self.threads > 1 && self.optimizer != OptimizerKind::Sgd {
            return bad("multi-threaded training supports only the sgd optimizer");
        }
        if self.eval_every == Some(0) {
            return bad("eval_every must be at least 1");
        }
        if let Some(s) = self.sampler() {
            s.validate()?;
        }
        Ok(())
    }

    pub fn sampler(&self) -> Option<SamplerSpec> {
        self.method.sampler(self.temperature, self.popularity_exponent)
    }

    pub fn init_scale(&self) -> f64 {
        self.init_scale.unwrap_or_else(|| crate::model::default_init_scale(self.d))
    }

    /// Short label such as `UBS-T3` or `MLE`.
    pub fn label(&self) -> String {
        if self.method.uses_temperature() {
            format!("{}-T{}", self.method, self.temperature)
        } else {
            self.method.to_string()
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("config: {e}")))
    }

    /// Reads `.json` files as JSON and anything else as TOML.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    /// Applies `key = value` overrides; nested keys use dots
    /// (`eval.mpr_negatives=50`). Values are parsed as TOML, falling back to
    /// a plain string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut value = serde_json::to_value(self)?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            set_path(&mut value, key.trim(), parse_scalar(raw.trim()))?;
        }
        serde_json::from_value(value).map_err(|e| Error::Config(format!("override: {e}")))
    }

    /// Merges a JSON object of overrides (as used by suite entries).
    pub fn merged(&self, patch: &serde_json::Value) -> Result<Self> {
        let mut value = serde_json::to_value(self)?;
        merge(&mut value, patch);
        serde_json::from_value(value).map_err(|e| Error::Config(format!("config patch: {e}")))
    }
}

fn parse_scalar(raw: &str) -> serde_json::Value {
    #[derive(Deserialize)]
    struct Wrap {
        v: toml::Value,
    }
    match toml::from_str::<Wrap>(&format!("v = {raw}")) {
        Ok(w) => serde_json::to_value(w.v).unwrap_or_else(|_| serde_json::Value::String(raw.to_owned())),
        Err(_) => serde_json::Value::String(raw.to_owned()),
    }
}

fn set_path(value: &mut serde_json::Value, key: &str, new: serde_json::Value) -> Result<()> {
    let mut cur = value;
    let parts: Vec<&str> = key.split('.').collect();
    for (n, part) in parts.iter().enumerate() {
        if cur.is_null() {
            *cur = serde_json::Value::Object(Default::default());
        }
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override key {key:?} does not name a table")))?;
        if n + 1 == parts.len() {
            obj.insert((*part).to_owned(), new);
            return Ok(());
        }
        cur = obj.entry((*part).to_owned()).or_insert(serde_json::Value::Null);
    }
    Err(Error::Config("empty override key".into()))
}

fn merge(base: &mut serde_json::Value, patch: &serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_defaults() {
        let c = TrainConfig::from_toml_str("method = \"pbs\"\ntemperature = \"inf\"\n[eval]\nks = [1, 5]\n").unwrap();
        assert_eq!(c.method, Method::Pbs);
        assert_eq!(c.temperature, Temperature::Infinite);
        assert_eq!(c.eval.ks, vec![1, 5]);
        assert_eq!(c.n_negatives, 5);
        let back = TrainConfig::from_toml_str(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(TrainConfig::from_toml_str("nonsense = 1").is_err());
    }

    #[test]
    fn overrides_and_hash() {
        let c = TrainConfig::default();
        let o = c
            .with_overrides(&["method=ubs", "temperature=3", "eval.mpr_negatives=7", "learning_rate=0.5"])
            .unwrap();
        assert_eq!(o.method, Method::Ubs);
        assert_eq!(o.temperature, Temperature::Finite(3.0));
        assert_eq!(o.eval.mpr_negatives, 7);
        assert_ne!(o.hash(), c.hash());
        assert_eq!(c.hash(), TrainConfig::default().hash());
        assert_eq!(c.hash().len(), 16);
        assert!(c.with_overrides(&["method"]).is_err());
        assert!(c.with_overrides(&["method=xyz"]).is_err());
        assert_eq!(o.label(), "UBS-T3");
    }

    #[test]
    fn validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.batch_size = 0;
        assert!(c.validate().is_err());
        let c = TrainConfig {
            threads: 2,
            optimizer: OptimizerKind::Adam,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            method: Method::Ubs,
            temperature: Temperature::Finite(-1.0),
            ..Default::default()
        };
        assert!(c.validate().is_err());
        assert_eq!("ubs".parse::<Method>().unwrap(), Method::Ubs);
    }
}
