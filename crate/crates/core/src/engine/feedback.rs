use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::train::{mean_breakdown, train_iteration};
use super::Dataset;
use crate::click::{click_distribution, sample_click, update_aigc_share, ClickOutcome};
use crate::config::{LoopConfig, NegativeSource};
use crate::data::{sample_negative_pairs, InteractionSequence, ItemId, PairedCorpus, Source, TrainInstance};
use crate::encoders::ModelParams;
use crate::error::{Error, Result};
use crate::losses::LossBreakdown;
use crate::metrics::{evaluate_source_split, rank, score_case, EvalCase, SourceSplitReport};
use crate::records::BiasRecord;
use crate::seed::{self, stream, Rng};

/// Each position independently becomes the generated copy of its pair with
/// probability `p`, otherwise the human copy.
pub fn resample_history(history: &[ItemId], p: f64, corpus: &PairedCorpus, rng: &mut Rng) -> Result<Vec<ItemId>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid("p", format!("{p} is outside [0, 1]")));
    }
    history
        .iter()
        .map(|&id| {
            let pair = corpus.pair_of(id)?;
            let source = if rng.random::<f64>() < p {
                Source::Generated
            } else {
                Source::Human
            };
            corpus.copy_of(pair, source)
        })
        .collect()
}

fn generated_share(config: &LoopConfig, p: f64) -> f64 {
    match config.train.negative_source {
        NegativeSource::Ecosystem => p,
        NegativeSource::Uniform => 0.5,
        NegativeSource::Human => 0.0,
    }
}

/// Training negatives of instance `k`: the same pairs every iteration, each
/// taken as its generated copy with probability `share`.
fn training_negatives(
    k: usize,
    positive: ItemId,
    share: f64,
    corpus: &PairedCorpus,
    pair_ids: &[u32],
    config: &LoopConfig,
) -> Result<Vec<ItemId>> {
    let mut rng = seed::rng(config.seed, &[stream::NEGATIVES, k as u64]);
    let pairs = sample_negative_pairs(corpus.pair_of(positive)?, pair_ids, config.train.negatives, &mut rng)?;
    pairs
        .into_iter()
        .map(|pair| {
            let source = if rng.random::<f64>() < share {
                Source::Generated
            } else {
                Source::Human
            };
            corpus.copy_of(pair, source)
        })
        .collect()
}

fn initial_params(corpus: &PairedCorpus, config: &LoopConfig) -> Result<ModelParams> {
    let t = &config.train;
    ModelParams::init(t.encoder, corpus.dim(), t.hidden, t.max_history, config.seed)
}

fn train_on(
    instances: &[TrainInstance],
    corpus: &PairedCorpus,
    config: &LoopConfig,
) -> Result<(ModelParams, LossBreakdown)> {
    let outcome = train_iteration(instances, corpus, &config.train, initial_params(corpus, config)?, config.seed)?;
    let loss = mean_breakdown(instances, corpus, &outcome.params, &config.train)?;
    Ok((outcome.params, loss))
}

fn phase_one_instances(dataset: &Dataset, corpus: &PairedCorpus, config: &LoopConfig) -> Result<Vec<TrainInstance>> {
    let pair_ids = corpus.pair_ids();
    let share = generated_share(config, 0.0);
    dataset
        .train
        .iter()
        .enumerate()
        .map(|(k, b)| {
            Ok(TrainInstance {
                user_id: b.user_id,
                history: b.history.clone(),
                positive: b.target,
                negatives: training_negatives(k, b.target, share, corpus, &pair_ids, config)?,
            })
        })
        .collect()
}

/// Train on the original data, as the first loop iteration does.
pub fn train_phase_one(
    dataset: &Dataset,
    corpus: &PairedCorpus,
    config: &LoopConfig,
) -> Result<(ModelParams, LossBreakdown)> {
    config.validate()?;
    train_on(&phase_one_instances(dataset, corpus, config)?, corpus, config)
}

/// Test cases with histories resampled at `p`. The per-case draws do not
/// depend on `p`, so raising `p` only turns more positions generated.
fn eval_cases(dataset: &Dataset, p: f64, corpus: &PairedCorpus, config: &LoopConfig) -> Result<Vec<EvalCase>> {
    let pair_ids = corpus.pair_ids();
    dataset
        .test
        .par_iter()
        .enumerate()
        .map(|(k, b)| {
            let mut rng = seed::rng(config.seed, &[stream::EVAL, k as u64, 0]);
            let history = resample_history(&b.history, p, corpus, &mut rng)?;
            let target_pair = corpus.pair_of(b.target)?;
            let mut rng = seed::rng(config.seed, &[stream::EVAL, k as u64, 1]);
            let negative_pairs = sample_negative_pairs(target_pair, &pair_ids, config.candidate_negatives, &mut rng)?;
            Ok(EvalCase {
                history,
                target_pair,
                negative_pairs,
            })
        })
        .collect()
}

/// Source-split evaluation with test histories resampled at `p`.
pub fn evaluate_at(
    params: &ModelParams,
    dataset: &Dataset,
    p: f64,
    corpus: &PairedCorpus,
    config: &LoopConfig,
) -> Result<SourceSplitReport> {
    let cases = eval_cases(dataset, p, corpus, config)?;
    evaluate_source_split(params, &cases, corpus, &config.specs)
}

/// One impression per training instance: resample the history at `p`, rank
/// the target pair and sampled negative pairs with `params`, click.
fn simulate_clicks(
    dataset: &Dataset,
    params: &ModelParams,
    p: f64,
    iteration: usize,
    corpus: &PairedCorpus,
    config: &LoopConfig,
) -> Result<Vec<(Vec<ItemId>, ClickOutcome)>> {
    let pair_ids = corpus.pair_ids();
    let e = iteration as u64;
    dataset
        .train
        .par_iter()
        .enumerate()
        .map(|(k, b)| {
            let k = k as u64;
            let history = resample_history(&b.history, p, corpus, &mut seed::rng(config.seed, &[stream::RESAMPLE, k, e]))?;
            let target_pair = corpus.pair_of(b.target)?;
            let mut rng = seed::rng(config.seed, &[stream::CANDIDATES, k, e]);
            let negative_pairs = sample_negative_pairs(target_pair, &pair_ids, config.candidate_negatives, &mut rng)?;
            let case = EvalCase {
                history,
                target_pair,
                negative_pairs,
            };
            let ranking: Vec<(ItemId, Source)> = rank(score_case(&case, params, corpus)?)
                .into_iter()
                .map(|c| (c.id, c.source))
                .collect();
            let relevant = [
                corpus.copy_of(target_pair, Source::Human)?,
                corpus.copy_of(target_pair, Source::Generated)?,
            ];
            let dist = click_distribution(&ranking, &relevant, config.eta)?;
            let click = sample_click(&dist, &mut seed::rng(config.seed, &[stream::CLICK, k, e]))?;
            Ok((case.history, click))
        })
        .collect()
}

/// Records and checkpoints of a full loop run.
#[derive(Debug, Clone)]
pub struct LoopOutput {
    pub records: Vec<BiasRecord>,
    pub checkpoints: Vec<ModelParams>,
}

/// Iteration 1 trains on the original data and is evaluated at `p = 0`.
/// Iteration `e > 1` resamples training histories at `p_{e-1}`, collects one
/// click per instance from `f^{e-1}`, sets `p_e` to the generated click
/// share, retrains from the initial parameters, and evaluates at `p_e`.
pub fn run_feedback_loop(
    corpus: &PairedCorpus,
    sequences: &[InteractionSequence],
    config: &LoopConfig,
) -> Result<LoopOutput> {
    run_feedback_loop_with(corpus, sequences, config, |_, _| {})
}

/// As [`run_feedback_loop`], calling `on_iteration` after each iteration.
pub fn run_feedback_loop_with(
    corpus: &PairedCorpus,
    sequences: &[InteractionSequence],
    config: &LoopConfig,
    mut on_iteration: impl FnMut(&BiasRecord, &ModelParams),
) -> Result<LoopOutput> {
    config.validate()?;
    let dataset = Dataset::prepare(corpus, sequences, config.train.max_history)?;
    let pair_ids = corpus.pair_ids();
    let mut records = Vec::with_capacity(config.loop_iterations);
    let mut checkpoints: Vec<ModelParams> = Vec::with_capacity(config.loop_iterations);
    let mut p = 0.0;

    for iteration in 1..=config.loop_iterations {
        let instances = if iteration == 1 {
            phase_one_instances(&dataset, corpus, config)?
        } else {
            let previous = checkpoints.last().expect("iteration 1 stores a checkpoint");
            let clicks = simulate_clicks(&dataset, previous, p, iteration, corpus, config)?;
            let outcomes: Vec<ClickOutcome> = clicks.iter().map(|(_, c)| *c).collect();
            p = update_aigc_share(&outcomes)?;
            let share = generated_share(config, p);
            clicks
                .into_iter()
                .zip(&dataset.train)
                .enumerate()
                .map(|(k, ((history, click), b))| {
                    Ok(TrainInstance {
                        user_id: b.user_id,
                        history,
                        positive: click.clicked_item,
                        negatives: training_negatives(k, click.clicked_item, share, corpus, &pair_ids, config)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        };
        let (params, loss) = train_on(&instances, corpus, config)?;
        let report = evaluate_at(&params, &dataset, p, corpus, config)?;
        let record = BiasRecord::new(iteration, p, &report, loss);
        on_iteration(&record, &params);
        records.push(record);
        checkpoints.push(params);
    }
    Ok(LoopOutput { records, checkpoints })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub p: f64,
    pub report: SourceSplitReport,
}

/// `0.0, 0.1, ..., 1.0`.
pub fn default_p_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// Evaluate already-trained `params` at every `p`.
pub fn sweep_with_params(
    params: &ModelParams,
    dataset: &Dataset,
    corpus: &PairedCorpus,
    config: &LoopConfig,
    p_values: &[f64],
) -> Result<Vec<SweepPoint>> {
    if p_values.is_empty() {
        return Err(Error::Empty("p grid"));
    }
    p_values
        .iter()
        .map(|&p| {
            Ok(SweepPoint {
                p,
                report: evaluate_at(params, dataset, p, corpus, config)?,
            })
        })
        .collect()
}

/// Train once on the original data, then evaluate with test histories
/// resampled at each `p`.
pub fn sweep_history_ratio(
    corpus: &PairedCorpus,
    sequences: &[InteractionSequence],
    config: &LoopConfig,
    p_values: &[f64],
) -> Result<Vec<SweepPoint>> {
    config.validate()?;
    let dataset = Dataset::prepare(corpus, sequences, config.train.max_history)?;
    let (params, _) = train_phase_one(&dataset, corpus, config)?;
    sweep_with_params(&params, &dataset, corpus, config, p_values)
}
