//! Training, the click feedback loop and the history-ratio sweep.

mod feedback;
mod train;

use serde::{Deserialize, Serialize};

pub use feedback::{
    default_p_grid, evaluate_at, resample_history, run_feedback_loop, run_feedback_loop_with, sweep_history_ratio,
    sweep_with_params,
    train_phase_one, LoopOutput, SweepPoint,
};
pub use train::{mean_breakdown, train_iteration, Adam, TrainOutcome};

use crate::data::{expand_prefixes, split_train_test, InteractionSequence, ItemId, PairedCorpus};
use crate::error::{Error, Result};

/// A history and the item that followed it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseInstance {
    pub user_id: u32,
    pub history: Vec<ItemId>,
    pub target: ItemId,
}

/// Train and test instances from the chronological split of all prefixes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub train: Vec<BaseInstance>,
    pub test: Vec<BaseInstance>,
}

impl Dataset {
    pub fn prepare(corpus: &PairedCorpus, sequences: &[InteractionSequence], max_history: usize) -> Result<Self> {
        for seq in sequences {
            if let Some(&id) = seq.items.iter().find(|&&id| !corpus.contains(id)) {
                return Err(Error::UnknownItem(id.0));
            }
        }
        let (train, test) = split_train_test(&expand_prefixes(sequences, max_history))?;
        let base = |seqs: Vec<InteractionSequence>| -> Vec<BaseInstance> {
            seqs.into_iter()
                .map(|s| BaseInstance {
                    user_id: s.user_id,
                    history: s.history().to_vec(),
                    target: s.target().expect("prefixes have at least two items"),
                })
                .collect()
        };
        let (train, test) = (base(train), base(test));
        if train.is_empty() {
            return Err(Error::Empty("training split"));
        }
        if test.is_empty() {
            return Err(Error::Empty("test split"));
        }
        Ok(Dataset { train, test })
    }
}
