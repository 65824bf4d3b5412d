//! Experiment configuration.

use serde::{Deserialize, Serialize};

use crate::click::Eta;
use crate::encoders::EncoderKind;
use crate::error::{Error, Result};
use crate::losses::{DebiasCoefficients, LossOptions};
use crate::metrics::MetricSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Which copy of each negative pair a training instance uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeSource {
    /// Always the human copy, as in the original data.
    #[default]
    Human,
    /// The generated copy with probability equal to the current AIGC share.
    Ecosystem,
    /// Either copy with probability 1/2 in every round.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub encoder: EncoderKind,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam: AdamConfig,
    pub negatives: usize,
    pub negative_source: NegativeSource,
    pub max_history: usize,
    pub coeffs: DebiasCoefficients,
    pub loss: LossOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            encoder: EncoderKind::GatedRecurrent,
            hidden: 32,
            epochs: 5,
            batch_size: 128,
            learning_rate: 1e-3,
            adam: AdamConfig::default(),
            negatives: 4,
            negative_source: NegativeSource::default(),
            max_history: 10,
            coeffs: DebiasCoefficients::NONE,
            loss: LossOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden),
            ("batch_size", self.batch_size),
            ("max_history", self.max_history),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::invalid(field, "must be >= 1"));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate", "must be finite and > 0"));
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return Err(Error::invalid("adam", "need beta1, beta2 in [0, 1) and epsilon > 0"));
        }
        DebiasCoefficients::new(self.coeffs.alpha, self.coeffs.beta)?;
        Ok(())
    }
}

/// Everything the feedback loop and the ratio sweep need besides data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub train: TrainConfig,
    pub eta: Eta,
    pub loop_iterations: usize,
    /// Negative pairs per impression and per evaluation query; both copies of
    /// each join the list, with the target pair, for `2 * (n + 1)` candidates.
    pub candidate_negatives: usize,
    pub specs: Vec<MetricSpec>,
    pub seed: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            train: TrainConfig::default(),
            eta: Eta::INFINITE,
            loop_iterations: 10,
            candidate_negatives: 49,
            specs: MetricSpec::default_set(),
            seed: 0,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.loop_iterations == 0 {
            return Err(Error::invalid("loop_iterations", "must be >= 1"));
        }
        if self.specs.is_empty() {
            return Err(Error::invalid("specs", "need at least one metric"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_training_protocol() {
        let c = LoopConfig::default();
        assert_eq!(c.train.epochs, 5);
        assert_eq!(c.train.batch_size, 128);
        assert_eq!(c.train.learning_rate, 1e-3);
        assert_eq!(c.train.negatives, 4);
        assert_eq!(c.train.max_history, 10);
        assert_eq!(c.loop_iterations, 10);
        assert!(c.eta.is_infinite());
        c.validate().unwrap();
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = LoopConfig::default();
        c.train.learning_rate = 0.0;
        assert!(c.validate().unwrap_err().to_string().contains("learning_rate"));
        let mut c = LoopConfig::default();
        c.loop_iterations = 0;
        assert!(c.validate().unwrap_err().to_string().contains("loop_iterations"));
    }

    #[test]
    fn json_round_trip_keeps_infinite_eta() {
        let c = LoopConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        let back: LoopConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
