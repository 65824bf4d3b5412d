//! Position-based click simulation.
//!
//! A candidate at rank `k` is examined with probability `k^-eta`. Clicks
//! require relevance, and each impression yields exactly one click: the
//! examination weights are renormalized over the relevant candidates.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{ItemId, Source};
use crate::error::{Error, Result};
use crate::seed::Rng;

/// Position-bias severity, `+inf` allowed.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Eta(f64);

impl Eta {
    pub const INFINITE: Eta = Eta(f64::INFINITY);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value < 0.0 {
            return Err(Error::invalid("eta", format!("must be >= 0 or inf, got {value}")));
        }
        Ok(Eta(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl fmt::Display for Eta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for Eta {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "+inf" | "infinity" => Ok(Eta::INFINITE),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::invalid("eta", format!("not a number: `{other}`")))
                .and_then(Eta::new),
        }
    }
}

impl Serialize for Eta {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Eta {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Eta::new(v),
            Raw::Text(t) => t.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickConfig {
    pub eta: Eta,
    pub candidate_size: usize,
    pub seed: u64,
}

/// `P(examined | rank) = rank^-eta`.
pub fn examination_prob(rank: usize, eta: Eta) -> Result<f64> {
    if rank == 0 {
        return Err(Error::invalid("rank", "ranks start at 1"));
    }
    Ok(if eta.is_infinite() {
        if rank == 1 {
            1.0
        } else {
            0.0
        }
    } else if eta.0 == 0.0 {
        1.0
    } else {
        (rank as f64).powf(-eta.0)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickEntry {
    pub id: ItemId,
    pub source: Source,
    /// 1-based.
    pub rank: usize,
    pub prob: f64,
}

/// Click probabilities over the relevant candidates of one impression.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickDistribution {
    pub entries: Vec<ClickEntry>,
}

impl ClickDistribution {
    pub fn prob(&self, id: ItemId) -> f64 {
        self.entries.iter().find(|e| e.id == id).map_or(0.0, |e| e.prob)
    }
}

/// `ranking` is best-first `(id, source)`. Weight of a relevant item at
/// rank `k` is `k^-eta`, normalized over relevant items; with `eta = inf`
/// the best-ranked relevant item gets everything.
pub fn click_distribution(ranking: &[(ItemId, Source)], relevant: &[ItemId], eta: Eta) -> Result<ClickDistribution> {
    if relevant.is_empty() {
        return Err(Error::Empty("relevant set"));
    }
    let mut entries = Vec::with_capacity(relevant.len());
    for &id in relevant {
        let pos = ranking
            .iter()
            .position(|&(c, _)| c == id)
            .ok_or_else(|| Error::invalid("relevant", format!("item {id} is not in the ranking")))?;
        entries.push(ClickEntry {
            id,
            source: ranking[pos].1,
            rank: pos + 1,
            prob: 0.0,
        });
    }
    let best = entries.iter().map(|e| e.rank).min().unwrap_or(1);
    if eta.is_infinite() {
        for e in &mut entries {
            e.prob = if e.rank == best { 1.0 } else { 0.0 };
        }
    } else {
        // (k / best)^-eta keeps the leading weight at 1 for any eta.
        let weights: Vec<f64> = entries
            .iter()
            .map(|e| (e.rank as f64 / best as f64).powf(-eta.0))
            .collect();
        let total: f64 = weights.iter().sum();
        for (e, w) in entries.iter_mut().zip(weights) {
            e.prob = w / total;
        }
    }
    Ok(ClickDistribution { entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickOutcome {
    pub clicked_item: ItemId,
    pub clicked_source: Source,
    pub rank_of_click: usize,
}

pub fn sample_click(distribution: &ClickDistribution, rng: &mut Rng) -> Result<ClickOutcome> {
    let entries = &distribution.entries;
    if entries.is_empty() {
        return Err(Error::Empty("click distribution"));
    }
    let total: f64 = entries.iter().map(|e| e.prob).sum();
    if entries.iter().any(|e| e.prob.is_nan() || e.prob < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("click distribution", format!("probabilities sum to {total}")));
    }
    let draw: f64 = rng.random();
    let mut acc = 0.0;
    let mut chosen = entries.iter().rev().find(|e| e.prob > 0.0).unwrap_or(&entries[0]);
    for e in entries {
        acc += e.prob;
        if draw < acc && e.prob > 0.0 {
            chosen = e;
            break;
        }
    }
    Ok(ClickOutcome {
        clicked_item: chosen.id,
        clicked_source: chosen.source,
        rank_of_click: chosen.rank,
    })
}

/// Fraction of clicks that landed on generated items.
pub fn update_aigc_share(outcomes: &[ClickOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::Empty("click outcomes"));
    }
    let generated = outcomes
        .iter()
        .filter(|o| o.clicked_source == Source::Generated)
        .count();
    Ok(generated as f64 / outcomes.len() as f64)
}
