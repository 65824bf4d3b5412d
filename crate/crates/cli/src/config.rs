//! Flat run configuration: defaults, then a `key = value` file, then flags.

use std::fmt;
use std::path::{Path, PathBuf};

use loopbias::click::Eta;
use loopbias::config::{LoopConfig, NegativeSource, TrainConfig};
use loopbias::data::SequenceSpec;
use loopbias::encoders::EncoderKind;
use loopbias::losses::{DebiasCoefficients, EntropyDirection, LossOptions};
use loopbias::metrics::MetricSpec;
use serde::{Deserialize, Serialize};

/// A configuration problem; the process exits with status 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub corpus: Option<PathBuf>,
    pub sequences: Option<PathBuf>,
    // synthetic corpus
    pub pairs: usize,
    pub dim: usize,
    pub shift: f64,
    pub noise: f64,
    pub renormalize: bool,
    // synthetic sequences
    pub users: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub concentration: f64,
    pub drift: f64,
    // training
    pub encoder: EncoderKind,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub negatives: usize,
    pub negative_source: NegativeSource,
    pub max_history: usize,
    pub alpha: f64,
    pub beta: f64,
    pub entropy: EntropyDirection,
    pub mean_reduction: bool,
    // loop and evaluation
    pub eta: Eta,
    pub iterations: usize,
    pub candidate_negatives: usize,
    pub metrics: String,
    pub p: f64,
    pub p_grid: String,
    pub checkpoint: Option<PathBuf>,
    pub format: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let lc = LoopConfig::default();
        let t = &lc.train;
        let s = SequenceSpec::default();
        RunConfig {
            seed: lc.seed,
            out_dir: PathBuf::from("runs"),
            corpus: None,
            sequences: None,
            pairs: 200,
            dim: 16,
            shift: 0.5,
            noise: 0.05,
            renormalize: false,
            users: s.users,
            min_len: s.min_len,
            max_len: s.max_len,
            concentration: s.concentration,
            drift: s.drift,
            encoder: t.encoder,
            hidden: t.hidden,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            negatives: t.negatives,
            negative_source: t.negative_source,
            max_history: t.max_history,
            alpha: t.coeffs.alpha,
            beta: t.coeffs.beta,
            entropy: t.loss.entropy,
            mean_reduction: t.loss.mean_reduction,
            eta: lc.eta,
            iterations: lc.loop_iterations,
            candidate_negatives: lc.candidate_negatives,
            metrics: lc.specs.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
            p: 0.0,
            p_grid: "0:1:0.1".into(),
            checkpoint: None,
            format: "csv".into(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| config_error(format!("config {}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        toml::from_str(text).map_err(|e| config_error(e.message().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Apply one `key = value` override using the config file's syntax.
    pub fn set(&mut self, key: &str, value: &str) -> anyhow::Result<()> {
        let mut table = toml::Table::try_from(&*self).expect("run config serializes");
        let parsed = if Self::is_path(key) {
            toml::Value::String(value.to_string())
        } else {
            format!("v = {value}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()))
        };
        let parsed = match (table.get(key), parsed) {
            (Some(toml::Value::String(_)), v) if !v.is_str() => toml::Value::String(value.to_string()),
            (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
            (None, _) if !Self::is_path(key) => return Err(config_error(format!("unknown setting `{key}`"))),
            (_, v) => v,
        };
        table.insert(key.to_string(), parsed);
        *self = table
            .try_into()
            .map_err(|e: toml::de::Error| config_error(format!("{key}: {}", e.message())))?;
        Ok(())
    }

    fn is_path(key: &str) -> bool {
        matches!(key, "out_dir" | "corpus" | "sequences" | "checkpoint")
    }

    pub fn specs(&self) -> anyhow::Result<Vec<MetricSpec>> {
        self.metrics
            .split(',')
            .map(|s| s.trim().parse().map_err(|e| config_error(format!("metrics: {e}"))))
            .collect()
    }

    /// `start:end:step` or a comma-separated list.
    pub fn p_values(&self) -> anyhow::Result<Vec<f64>> {
        parse_grid(&self.p_grid).map_err(|m| config_error(format!("p_grid: {m}")))
    }

    pub fn sequence_spec(&self) -> SequenceSpec {
        SequenceSpec {
            users: self.users,
            min_len: self.min_len,
            max_len: self.max_len,
            concentration: self.concentration,
            drift: self.drift,
        }
    }

    pub fn loop_config(&self) -> anyhow::Result<LoopConfig> {
        let coeffs = DebiasCoefficients::new(self.alpha, self.beta).map_err(|e| config_error(e.to_string()))?;
        let config = LoopConfig {
            train: TrainConfig {
                encoder: self.encoder,
                hidden: self.hidden,
                epochs: self.epochs,
                batch_size: self.batch_size,
                learning_rate: self.learning_rate,
                negatives: self.negatives,
                negative_source: self.negative_source,
                max_history: self.max_history,
                coeffs,
                loss: LossOptions {
                    entropy: self.entropy,
                    mean_reduction: self.mean_reduction,
                },
                ..TrainConfig::default()
            },
            eta: self.eta,
            loop_iterations: self.iterations,
            candidate_negatives: self.candidate_negatives,
            specs: self.specs()?,
            seed: self.seed,
        };
        config.validate().map_err(|e| config_error(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.p) {
            return Err(config_error(format!("invalid p: {} is outside [0, 1]", self.p)));
        }
        if !matches!(self.format.as_str(), "csv" | "jsonl") {
            return Err(config_error(format!("invalid format: `{}` (expected csv or jsonl)", self.format)));
        }
        Ok(config)
    }
}

pub fn parse_grid(text: &str) -> Result<Vec<f64>, String> {
    let values: Vec<f64> = if let [start, end, step] = text.split(':').collect::<Vec<_>>()[..] {
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("not a number: `{s}`"));
        let (start, end, step) = (num(start)?, num(end)?, num(step)?);
        if step.is_nan() || step <= 0.0 || end < start {
            return Err(format!("need end >= start and step > 0 in `{text}`"));
        }
        let steps = ((end - start) / step + 1e-9).floor() as usize;
        (0..=steps).map(|i| start + i as f64 * (end - start) / steps.max(1) as f64).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| format!("not a number: `{s}`")))
            .collect::<Result<_, _>>()?
    };
    if values.is_empty() || values.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(format!("values must lie in [0, 1], got `{text}`"));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g = parse_grid("0:1:0.1").unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g[3], 0.3);
        assert_eq!(g[10], 1.0);
        assert_eq!(parse_grid("0, 0.5,1").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid("0.5:0.5:0.1").unwrap(), vec![0.5]);
        assert!(parse_grid("0:2:0.5").is_err());
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("x").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig::default();
        c.corpus = Some("data/c.txt".into());
        c.eta = Eta::new(2.0).unwrap();
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        let inf = RunConfig::from_toml(&RunConfig::default().to_toml()).unwrap();
        assert!(inf.eta.is_infinite());
    }

    #[test]
    fn overrides_use_file_syntax() {
        let mut c = RunConfig::default();
        c.set("pairs", "50").unwrap();
        c.set("learning_rate", "1").unwrap();
        c.set("eta", "inf").unwrap();
        c.set("encoder", "mean_pool").unwrap();
        c.set("corpus", "x.txt").unwrap();
        c.set("metrics", "ndcg@10").unwrap();
        assert_eq!(c.pairs, 50);
        assert_eq!(c.learning_rate, 1.0);
        assert_eq!(c.encoder, EncoderKind::MeanPool);
        assert_eq!(c.corpus, Some(PathBuf::from("x.txt")));
        assert!(c.set("bogus", "1").is_err());
        assert!(c.set("pairs", "many").is_err());
    }

    #[test]
    fn unknown_keys_in_files_are_rejected() {
        let err = RunConfig::from_toml("seed = 1\nlearnig_rate = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("learnig_rate"), "{err}");
    }

    #[test]
    fn validation_is_a_config_error() {
        let mut c = RunConfig::default();
        c.batch_size = 0;
        let err = c.loop_config().unwrap_err();
        assert!(err.downcast_ref::<ConfigError>().is_some());
        assert!(err.to_string().contains("batch_size"));
    }
}
