use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{random_unit, ItemId, PairedCorpus};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::seed::{self, Rng};

/// A user's chronologically ordered interactions. After [`expand_prefixes`]
/// the last item is the prediction target and the rest is its history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionSequence {
    pub user_id: u32,
    pub items: Vec<ItemId>,
    /// One per item, non-decreasing. Absent sequences use item positions.
    pub timestamps: Option<Vec<i64>>,
}

impl InteractionSequence {
    pub fn new(user_id: u32, items: Vec<ItemId>) -> Self {
        InteractionSequence {
            user_id,
            items,
            timestamps: None,
        }
    }

    pub fn with_timestamps(user_id: u32, items: Vec<ItemId>, timestamps: Vec<i64>) -> Result<Self> {
        if timestamps.len() != items.len() {
            return Err(Error::Dimension {
                expected: items.len(),
                found: timestamps.len(),
            });
        }
        if timestamps.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("timestamps", "must be non-decreasing"));
        }
        Ok(InteractionSequence {
            user_id,
            items,
            timestamps: Some(timestamps),
        })
    }

    pub fn history(&self) -> &[ItemId] {
        &self.items[..self.items.len().saturating_sub(1)]
    }

    pub fn target(&self) -> Option<ItemId> {
        self.items.last().copied()
    }

    /// Sort key of the target item.
    pub fn target_time(&self) -> i64 {
        match &self.timestamps {
            Some(ts) => ts.last().copied().unwrap_or(0),
            None => self.items.len() as i64 - 1,
        }
    }

    /// At least two items, history no longer than `max_history`, every id known.
    pub fn validate(&self, corpus: &PairedCorpus, max_history: usize) -> Result<()> {
        if self.items.len() < 2 {
            return Err(Error::invalid(
                "sequence",
                format!("user {} has fewer than 2 items", self.user_id),
            ));
        }
        if self.history().len() > max_history {
            return Err(Error::invalid(
                "sequence",
                format!(
                    "user {} history of {} exceeds max_history {max_history}",
                    self.user_id,
                    self.history().len()
                ),
            ));
        }
        for &id in &self.items {
            if !corpus.contains(id) {
                return Err(Error::UnknownItem(id.0));
            }
        }
        Ok(())
    }
}

/// A training example: history, the next item, and sampled negatives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainInstance {
    pub user_id: u32,
    pub history: Vec<ItemId>,
    pub positive: ItemId,
    pub negatives: Vec<ItemId>,
}

/// One sequence per (user, position t >= 1): the most recent `max_history`
/// items before t followed by item t. Timestamps carry over; sequences
/// without them get positions as times.
pub fn expand_prefixes(sequences: &[InteractionSequence], max_history: usize) -> Vec<InteractionSequence> {
    let mut out = Vec::new();
    for seq in sequences {
        for t in 1..seq.items.len() {
            let start = t.saturating_sub(max_history);
            let items = seq.items[start..=t].to_vec();
            let times = match &seq.timestamps {
                Some(ts) => ts[start..=t].to_vec(),
                None => (start as i64..=t as i64).collect(),
            };
            out.push(InteractionSequence {
                user_id: seq.user_id,
                items,
                timestamps: Some(times),
            });
        }
    }
    out
}

/// Chronological 7:3 split on target time, ties by user id ascending.
/// `|train| = floor(0.7 N)`.
pub fn split_train_test(
    sequences: &[InteractionSequence],
) -> Result<(Vec<InteractionSequence>, Vec<InteractionSequence>)> {
    if sequences.is_empty() {
        return Err(Error::Empty("sequence list"));
    }
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    order.sort_by_key(|&i| (sequences[i].target_time(), sequences[i].user_id));
    let n_train = sequences.len() * 7 / 10;
    let (train, test) = order.split_at(n_train);
    Ok((
        train.iter().map(|&i| sequences[i].clone()).collect(),
        test.iter().map(|&i| sequences[i].clone()).collect(),
    ))
}

/// `m` distinct items drawn uniformly without replacement, never the positive
/// or its counterpart.
pub fn sample_negatives(
    positive: ItemId,
    corpus: &PairedCorpus,
    m: usize,
    rng: &mut Rng,
) -> Result<Vec<ItemId>> {
    if corpus.len() < m + 2 {
        return Err(Error::CorpusTooSmall {
            needed: m + 2,
            available: corpus.len(),
        });
    }
    let other = corpus.counterpart(positive)?;
    let eligible: Vec<ItemId> = corpus
        .items()
        .iter()
        .map(|item| item.id)
        .filter(|&id| id != positive && id != other)
        .collect();
    Ok(index::sample(rng, eligible.len(), m)
        .into_iter()
        .map(|i| eligible[i])
        .collect())
}

/// `m` distinct pair ids other than `exclude`, uniform without replacement.
pub fn sample_negative_pairs(
    exclude: u32,
    pair_ids: &[u32],
    m: usize,
    rng: &mut Rng,
) -> Result<Vec<u32>> {
    let eligible = pair_ids.len() - usize::from(pair_ids.binary_search(&exclude).is_ok());
    if eligible < m {
        return Err(Error::CorpusTooSmall {
            needed: 2 * (m + 1),
            available: 2 * pair_ids.len(),
        });
    }
    let skip = pair_ids.partition_point(|&p| p < exclude);
    let skip_hit = pair_ids.get(skip) == Some(&exclude);
    Ok(index::sample(rng, eligible, m)
        .into_iter()
        .map(|i| {
            if skip_hit && i >= skip {
                pair_ids[i + 1]
            } else {
                pair_ids[i]
            }
        })
        .collect())
}

/// Parameters for synthetic user sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub users: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Inverse temperature of the item choice given the user's taste.
    pub concentration: f64,
    /// How far the taste moves toward each consumed item, in [0, 1].
    pub drift: f64,
}

impl Default for SequenceSpec {
    fn default() -> Self {
        SequenceSpec {
            users: 300,
            min_len: 5,
            max_len: 11,
            concentration: 10.0,
            drift: 0.5,
        }
    }
}

/// Sequences over human items only. Each user has a random unit taste vector
/// that drifts toward consumed items; the next item is drawn with probability
/// proportional to `exp(concentration * <taste, e>)` among unseen items.
pub fn generate_sequences(corpus: &PairedCorpus, spec: &SequenceSpec, seed: u64) -> Result<Vec<InteractionSequence>> {
    if spec.min_len < 2 || spec.max_len < spec.min_len {
        return Err(Error::invalid("sequence length", "need 2 <= min_len <= max_len"));
    }
    if !(0.0..=1.0).contains(&spec.drift) {
        return Err(Error::invalid("drift", "must lie in [0, 1]"));
    }
    let humans = corpus.human_ids();
    if humans.len() < spec.max_len {
        return Err(Error::CorpusTooSmall {
            needed: 2 * spec.max_len,
            available: corpus.len(),
        });
    }
    let embeddings: Vec<&[f64]> = humans
        .iter()
        .map(|&id| corpus.embedding(id))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(spec.users);
    for user in 0..spec.users {
        let mut rng = seed::rng(seed, &[seed::stream::SEQUENCES, user as u64]);
        let mut taste = random_unit(corpus.dim(), &mut rng);
        let len = rng.random_range(spec.min_len..=spec.max_len);
        let mut used = vec![false; humans.len()];
        let mut items = Vec::with_capacity(len);
        for _ in 0..len {
            let logits: Vec<f64> = embeddings
                .iter()
                .map(|e| spec.concentration * dot(&taste, e))
                .collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = logits
                .iter()
                .zip(&used)
                .map(|(l, &u)| if u { 0.0 } else { (l - max).exp() })
                .collect();
            let total: f64 = weights.iter().sum();
            let mut draw = rng.random::<f64>() * total;
            let mut pick = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
            for (k, &w) in weights.iter().enumerate() {
                if w > 0.0 && draw < w {
                    pick = k;
                    break;
                }
                draw -= w;
            }
            used[pick] = true;
            items.push(humans[pick]);
            let e = embeddings[pick];
            for (t, x) in taste.iter_mut().zip(e.iter()) {
                *t = (1.0 - spec.drift) * *t + spec.drift * x;
            }
            let n = crate::linalg::norm(&taste);
            if n > 1e-12 {
                taste.iter_mut().for_each(|t| *t /= n);
            }
        }
        out.push(InteractionSequence::new(user as u32, items));
    }
    Ok(out)
}
