//! Ranking metrics and source-bias measurement.
//!
//! A ranked candidate list contains both copies of the target item. Each
//! metric is computed twice on the same list: once with only the human copy
//! labelled relevant and once with only the generated copy. The relative
//! percentage difference between the two is the bias measure; negative
//! values mean the generated copy is favoured.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ItemId, PairedCorpus, Source};
use crate::encoders::{encode_history, ModelParams};
use crate::error::{Error, Result};
use crate::linalg::dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Ndcg,
    Map,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MetricSpec {
    pub kind: MetricKind,
    pub k: usize,
}

impl MetricSpec {
    pub fn new(kind: MetricKind, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("k", "must be >= 1"));
        }
        Ok(MetricSpec { kind, k })
    }

    /// NDCG@3, NDCG@5, MAP@3, MAP@5.
    pub fn default_set() -> Vec<MetricSpec> {
        vec![
            MetricSpec { kind: MetricKind::Ndcg, k: 3 },
            MetricSpec { kind: MetricKind::Ndcg, k: 5 },
            MetricSpec { kind: MetricKind::Map, k: 3 },
            MetricSpec { kind: MetricKind::Map, k: 5 },
        ]
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            MetricKind::Ndcg => "ndcg",
            MetricKind::Map => "map",
        }
    }

    pub fn compute(&self, ranked_relevance: &[bool]) -> Result<f64> {
        match self.kind {
            MetricKind::Ndcg => ndcg_at_k(ranked_relevance, self.k),
            MetricKind::Map => map_at_k(ranked_relevance, self.k),
        }
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.name(), self.k)
    }
}

impl FromStr for MetricSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, k) = s
            .split_once('@')
            .ok_or_else(|| Error::invalid("metric", format!("expected `<ndcg|map>@<k>`, got `{s}`")))?;
        let kind = match name.to_ascii_lowercase().as_str() {
            "ndcg" => MetricKind::Ndcg,
            "map" => MetricKind::Map,
            other => return Err(Error::invalid("metric", format!("unknown metric `{other}`"))),
        };
        let k = k
            .parse()
            .map_err(|_| Error::invalid("metric", format!("bad cutoff in `{s}`")))?;
        MetricSpec::new(kind, k)
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::invalid("k", "must be >= 1"))
    } else {
        Ok(())
    }
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Binary-gain NDCG@k; 0 when nothing is relevant.
pub fn ndcg_at_k(ranked_relevance: &[bool], k: usize) -> Result<f64> {
    check_k(k)?;
    let relevant = ranked_relevance.iter().filter(|&&r| r).count();
    if relevant == 0 {
        return Ok(0.0);
    }
    let mut dcg = 0.0;
    for (i, _) in ranked_relevance.iter().take(k).enumerate().filter(|(_, &r)| r) {
        dcg += discount(i + 1);
    }
    let mut ideal = 0.0;
    for rank in 1..=relevant.min(k) {
        ideal += discount(rank);
    }
    Ok(dcg / ideal)
}

/// Average precision truncated at k, normalized by `min(#relevant, k)`.
pub fn map_at_k(ranked_relevance: &[bool], k: usize) -> Result<f64> {
    check_k(k)?;
    let relevant = ranked_relevance.iter().filter(|&&r| r).count();
    if relevant == 0 {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &r) in ranked_relevance.iter().take(k).enumerate() {
        if r {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / relevant.min(k) as f64)
}

/// `(hgc - aigc) / ((hgc + aigc) / 2) * 100`, and 0 when both are 0.
pub fn relative_delta(metric_hgc: f64, metric_aigc: f64) -> Result<f64> {
    if !(metric_hgc >= 0.0 && metric_aigc >= 0.0) {
        return Err(Error::invalid(
            "metric",
            format!("relative delta needs non-negative metrics, got ({metric_hgc}, {metric_aigc})"),
        ));
    }
    let mean = (metric_hgc + metric_aigc) / 2.0;
    if mean == 0.0 {
        return Ok(0.0);
    }
    Ok((metric_hgc - metric_aigc) / mean * 100.0)
}

/// Mean of `|delta|` over a run.
pub fn avg_abs_delta(series: &[f64]) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::Empty("relative delta series"));
    }
    Ok(series.iter().map(|d| d.abs()).sum::<f64>() / series.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSplitResult {
    pub metric_hgc: f64,
    pub metric_aigc: f64,
    pub relative_delta: f64,
}

impl SourceSplitResult {
    pub fn from_metrics(metric_hgc: f64, metric_aigc: f64) -> Result<Self> {
        Ok(SourceSplitResult {
            metric_hgc,
            metric_aigc,
            relative_delta: relative_delta(metric_hgc, metric_aigc)?,
        })
    }
}

/// A scored candidate awaiting ranking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub id: ItemId,
    pub source: Source,
    pub score: f64,
}

/// Descending score; ties put the human copy first, then lower ids.
pub fn rank_order(a: &Scored, b: &Scored) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.source.cmp(&b.source))
        .then_with(|| a.id.cmp(&b.id))
}

pub fn rank(mut candidates: Vec<Scored>) -> Vec<Scored> {
    candidates.sort_by(rank_order);
    candidates
}

/// One evaluation query: a history and the pairs whose copies form the
/// candidate list (target pair plus negative pairs).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCase {
    pub history: Vec<ItemId>,
    pub target_pair: u32,
    pub negative_pairs: Vec<u32>,
}

/// Per-query metric values before averaging.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseMetrics {
    /// `(hgc, aigc)` per spec.
    pub split: Vec<(f64, f64)>,
    /// NDCG@3 with both copies relevant.
    pub overall_ndcg3: f64,
    /// Both copies of the target scored identically.
    pub tied: bool,
}

/// Metrics of one ranked list given the target's two copies.
pub fn case_metrics(
    ranked: &[Scored],
    human: ItemId,
    generated: ItemId,
    specs: &[MetricSpec],
) -> Result<CaseMetrics> {
    let labels = |want: &[ItemId]| -> Vec<bool> { ranked.iter().map(|c| want.contains(&c.id)).collect() };
    let human_labels = labels(&[human]);
    let generated_labels = labels(&[generated]);
    let split = specs
        .iter()
        .map(|s| Ok((s.compute(&human_labels)?, s.compute(&generated_labels)?)))
        .collect::<Result<Vec<_>>>()?;
    let score_of = |id| ranked.iter().find(|c| c.id == id).map(|c| c.score);
    Ok(CaseMetrics {
        split,
        overall_ndcg3: ndcg_at_k(&labels(&[human, generated]), 3)?,
        tied: score_of(human) == score_of(generated),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSplitReport {
    pub results: Vec<(MetricSpec, SourceSplitResult)>,
    pub overall_ndcg3: f64,
    pub ties: usize,
    pub cases: usize,
    pub candidates_per_case: usize,
}

impl SourceSplitReport {
    pub fn get(&self, spec: MetricSpec) -> Option<&SourceSplitResult> {
        self.results.iter().find(|(s, _)| *s == spec).map(|(_, r)| r)
    }
}

/// Averages per-case metrics in case order.
pub fn aggregate(per_case: &[CaseMetrics], specs: &[MetricSpec], candidates_per_case: usize) -> Result<SourceSplitReport> {
    if per_case.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let n = per_case.len() as f64;
    let mut results = Vec::with_capacity(specs.len());
    for (j, spec) in specs.iter().enumerate() {
        let (mut h, mut g) = (0.0, 0.0);
        for c in per_case {
            h += c.split[j].0;
            g += c.split[j].1;
        }
        results.push((*spec, SourceSplitResult::from_metrics(h / n, g / n)?));
    }
    let mut overall = 0.0;
    for c in per_case {
        overall += c.overall_ndcg3;
    }
    Ok(SourceSplitReport {
        results,
        overall_ndcg3: overall / n,
        ties: per_case.iter().filter(|c| c.tied).count(),
        cases: per_case.len(),
        candidates_per_case,
    })
}

/// Score every candidate of a case with the model.
pub fn score_case(case: &EvalCase, params: &ModelParams, corpus: &PairedCorpus) -> Result<Vec<Scored>> {
    let history = case
        .history
        .iter()
        .map(|&id| corpus.embedding(id))
        .collect::<Result<Vec<_>>>()?;
    let u = encode_history(&history, params)?.vector;
    let mut out = Vec::with_capacity(2 * (case.negative_pairs.len() + 1));
    for &pair in std::iter::once(&case.target_pair).chain(&case.negative_pairs) {
        for source in [Source::Human, Source::Generated] {
            let id = corpus.copy_of(pair, source)?;
            let score = dot(&u, &params.project(corpus.embedding(id)?)?);
            out.push(Scored { id, source, score });
        }
    }
    Ok(out)
}

/// Source-split evaluation of `params` over `cases`. Parallel over cases;
/// aggregation is in case order.
pub fn evaluate_source_split(
    params: &ModelParams,
    cases: &[EvalCase],
    corpus: &PairedCorpus,
    specs: &[MetricSpec],
) -> Result<SourceSplitReport> {
    if cases.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let per_case = cases
        .par_iter()
        .map(|case| {
            let ranked = rank(score_case(case, params, corpus)?);
            let human = corpus.copy_of(case.target_pair, Source::Human)?;
            let generated = corpus.copy_of(case.target_pair, Source::Generated)?;
            case_metrics(&ranked, human, generated, specs)
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate(&per_case, specs, 2 * (cases[0].negative_pairs.len() + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn at(rank: usize, len: usize) -> Vec<bool> {
        (1..=len).map(|r| r == rank).collect()
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&at(1, 6), 3).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&at(3, 6), 3).unwrap(), 0.5);
        assert_eq!(ndcg_at_k(&at(4, 6), 3).unwrap(), 0.0);
        assert_eq!(ndcg_at_k(&[false; 4], 3).unwrap(), 0.0);
        assert!(ndcg_at_k(&at(1, 2), 0).is_err());
    }

    #[test]
    fn map_examples() {
        assert_eq!(map_at_k(&at(1, 8), 5).unwrap(), 1.0);
        assert_eq!(map_at_k(&at(2, 8), 5).unwrap(), 0.5);
        assert_eq!(map_at_k(&at(6, 8), 5).unwrap(), 0.0);
        assert!(map_at_k(&at(1, 2), 0).is_err());
    }

    #[test]
    fn relative_delta_examples() {
        assert!((relative_delta(32.77, 41.28).unwrap() + 22.99).abs() < 0.01);
        assert_eq!(relative_delta(0.3, 0.3).unwrap(), 0.0);
        assert_eq!(relative_delta(0.4, 0.0).unwrap(), 200.0);
        assert_eq!(relative_delta(0.0, 0.0).unwrap(), 0.0);
        assert!(relative_delta(-0.1, 0.2).is_err());
    }

    #[test]
    fn avg_abs_delta_examples() {
        assert_eq!(avg_abs_delta(&[-10.0, 20.0, -30.0]).unwrap(), 20.0);
        assert_eq!(avg_abs_delta(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(avg_abs_delta(&[-7.5]).unwrap(), 7.5);
        assert!(avg_abs_delta(&[]).is_err());
    }

    fn scored(id: u32, source: Source, score: f64) -> Scored {
        Scored { id: ItemId(id), source, score }
    }

    #[test]
    fn generated_copy_on_top() {
        // ranking [G(pos), H(pos), neg, neg]
        let ranked = rank(vec![
            scored(10, Source::Generated, 0.9),
            scored(0, Source::Human, 0.8),
            scored(1, Source::Human, 0.1),
            scored(11, Source::Generated, 0.0),
        ]);
        let spec = MetricSpec::new(MetricKind::Ndcg, 3).unwrap();
        let m = case_metrics(&ranked, ItemId(0), ItemId(10), &[spec]).unwrap();
        let r = aggregate(&[m], &[spec], 4).unwrap();
        let res = r.get(spec).unwrap();
        assert!((res.metric_hgc - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert_eq!(res.metric_aigc, 1.0);
        // (1/log2(3) - 1) / ((1/log2(3) + 1) / 2) * 100
        assert!((res.relative_delta + 45.2589).abs() < 1e-3, "{}", res.relative_delta);
    }

    #[test]
    fn ties_rank_human_first() {
        let ranked = rank(vec![
            scored(5, Source::Generated, 0.5),
            scored(7, Source::Human, 0.5),
            scored(1, Source::Human, 0.5),
        ]);
        let ids: Vec<u32> = ranked.iter().map(|c| c.id.0).collect();
        assert_eq!(ids, vec![1, 7, 5]);
        let m = case_metrics(&ranked, ItemId(7), ItemId(5), &MetricSpec::default_set()).unwrap();
        assert!(m.tied);
        for (h, g) in m.split {
            assert!(h >= g);
        }
    }

    #[test]
    fn metric_spec_parsing() {
        assert_eq!("ndcg@5".parse::<MetricSpec>().unwrap(), MetricSpec { kind: MetricKind::Ndcg, k: 5 });
        assert_eq!("MAP@3".parse::<MetricSpec>().unwrap().to_string(), "map@3");
        assert!("ndcg@0".parse::<MetricSpec>().is_err());
        assert!("mrr@3".parse::<MetricSpec>().is_err());
    }

    proptest! {
        #[test]
        fn delta_is_antisymmetric_and_bounded(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let d = relative_delta(a, b).unwrap();
            prop_assert!((d + relative_delta(b, a).unwrap()).abs() < 1e-9);
            prop_assert!((-200.0..=200.0).contains(&d));
            prop_assert_eq!(d < 0.0, b > a);
        }

        #[test]
        fn metrics_are_monotone_in_rank(len in 2usize..20, rank in 2usize..20, k in 1usize..8) {
            prop_assume!(rank <= len);
            for spec in [MetricSpec { kind: MetricKind::Ndcg, k }, MetricSpec { kind: MetricKind::Map, k }] {
                let worse = spec.compute(&at(rank, len)).unwrap();
                let better = spec.compute(&at(rank - 1, len)).unwrap();
                prop_assert!(better >= worse);
                prop_assert!((0.0..=1.0).contains(&worse));
            }
        }
    }
}
