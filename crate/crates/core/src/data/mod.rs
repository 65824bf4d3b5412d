//! Paired corpora, interaction sequences and sampling.
//!
//! A [`PairedCorpus`] holds every item twice: the human-written original and
//! its generated rewrite. Both copies share a `pair_id`; only their base
//! embeddings differ.

mod io;
mod sequences;

pub use io::{
    load_corpus, read_corpus, read_corpus_binary, read_corpus_text, read_sequences,
    write_corpus_binary, write_corpus_text, write_sequences,
};
pub use sequences::{
    expand_prefixes, generate_sequences, sample_negative_pairs, sample_negatives,
    split_train_test, InteractionSequence, SequenceSpec, TrainInstance,
};

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Source {
    Human,
    Generated,
}

impl Source {
    pub fn tag(self) -> char {
        match self {
            Source::Human => 'H',
            Source::Generated => 'G',
        }
    }

    pub fn other(self) -> Source {
        match self {
            Source::Human => Source::Generated,
            Source::Generated => Source::Human,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub u32);

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub id: ItemId,
    pub source: Source,
    pub pair_id: u32,
    pub embedding: Vec<f64>,
}

/// Both copies of every item, with O(1) lookup by id and by pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedCorpus {
    items: Vec<Item>,
    dim: usize,
    index: HashMap<ItemId, usize>,
    pair_index: BTreeMap<u32, (ItemId, ItemId)>,
}

impl PairedCorpus {
    /// Validate and index a list of items. Errors carry 1-based positions in
    /// `items` as row numbers.
    pub fn new(items: Vec<Item>, dim: usize) -> Result<Self> {
        Self::with_rows(items, dim, |i| i + 1)
    }

    pub(crate) fn with_rows(
        items: Vec<Item>,
        dim: usize,
        row_of: impl Fn(usize) -> usize,
    ) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Empty("corpus"));
        }
        let mut index = HashMap::with_capacity(items.len());
        // per pair: (human, generated) as (id, row position)
        type Half = Option<(ItemId, usize)>;
        let mut halves: BTreeMap<u32, (Half, Half)> = BTreeMap::new();
        for (pos, item) in items.iter().enumerate() {
            let row = row_of(pos);
            if item.embedding.len() != dim {
                return Err(Error::RowDimension {
                    row,
                    expected: dim,
                    found: item.embedding.len(),
                });
            }
            if let Some(column) = item.embedding.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteRow { row, column: column + 4 });
            }
            if index.insert(item.id, pos).is_some() {
                return Err(Error::DuplicateId { row, id: item.id.0 });
            }
            let slot = halves.entry(item.pair_id).or_default();
            let half = match item.source {
                Source::Human => &mut slot.0,
                Source::Generated => &mut slot.1,
            };
            if half.is_some() {
                return Err(Error::Parse {
                    row,
                    message: format!(
                        "pair {} already has a {:?} item",
                        item.pair_id, item.source
                    ),
                });
            }
            *half = Some((item.id, pos));
        }
        let mut pair_index = BTreeMap::new();
        for (pair_id, halves) in halves {
            match halves {
                (Some((h, _)), Some((g, _))) => {
                    pair_index.insert(pair_id, (h, g));
                }
                (Some((_, pos)), None) => {
                    return Err(Error::DanglingPair {
                        row: row_of(pos),
                        pair_id,
                        missing: "Generated",
                    })
                }
                (None, Some((_, pos))) => {
                    return Err(Error::DanglingPair {
                        row: row_of(pos),
                        pair_id,
                        missing: "Human",
                    })
                }
                (None, None) => unreachable!(),
            }
        }
        Ok(PairedCorpus {
            items,
            dim,
            index,
            pair_index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn n_pairs(&self) -> usize {
        self.pair_index.len()
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn pair_index(&self) -> &BTreeMap<u32, (ItemId, ItemId)> {
        &self.pair_index
    }

    /// Pair ids in ascending order.
    pub fn pair_ids(&self) -> Vec<u32> {
        self.pair_index.keys().copied().collect()
    }

    pub fn contains(&self, id: ItemId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn item(&self, id: ItemId) -> Result<&Item> {
        self.index
            .get(&id)
            .map(|&pos| &self.items[pos])
            .ok_or(Error::UnknownItem(id.0))
    }

    pub fn embedding(&self, id: ItemId) -> Result<&[f64]> {
        self.item(id).map(|item| item.embedding.as_slice())
    }

    pub fn source(&self, id: ItemId) -> Result<Source> {
        self.item(id).map(|item| item.source)
    }

    pub fn pair_of(&self, id: ItemId) -> Result<u32> {
        self.item(id).map(|item| item.pair_id)
    }

    /// The other copy of `id`.
    pub fn counterpart(&self, id: ItemId) -> Result<ItemId> {
        let item = self.item(id)?;
        let &(h, g) = self
            .pair_index
            .get(&item.pair_id)
            .ok_or(Error::MissingCounterpart(id.0))?;
        Ok(if item.source == Source::Human { g } else { h })
    }

    /// The copy of pair `pair_id` from `source`.
    pub fn copy_of(&self, pair_id: u32, source: Source) -> Result<ItemId> {
        let &(h, g) = self
            .pair_index
            .get(&pair_id)
            .ok_or_else(|| Error::invalid("pair_id", format!("unknown pair {pair_id}")))?;
        Ok(match source {
            Source::Human => h,
            Source::Generated => g,
        })
    }

    pub fn human_ids(&self) -> Vec<ItemId> {
        self.pair_index.values().map(|&(h, _)| h).collect()
    }
}

/// Produces the embedding of an item's generated copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewriterOracle {
    /// Copies are read from a paired-embedding file.
    PairedFile,
    /// `e' = e + bias + noise_scale * g`, optionally renormalized.
    SyntheticShift {
        bias: Vec<f64>,
        noise_scale: f64,
        renormalize: bool,
    },
}

impl RewriterOracle {
    pub fn identity(dim: usize) -> Self {
        RewriterOracle::SyntheticShift {
            bias: vec![0.0; dim],
            noise_scale: 0.0,
            renormalize: false,
        }
    }

    /// A shift of Euclidean length `shift_norm` along a seeded random direction.
    pub fn random_shift(
        dim: usize,
        shift_norm: f64,
        noise_scale: f64,
        renormalize: bool,
        seed: u64,
    ) -> Self {
        let mut bias = random_unit(dim, &mut seed::rng(seed, &[seed::stream::REWRITE, u64::MAX]));
        for b in &mut bias {
            *b *= shift_norm;
        }
        RewriterOracle::SyntheticShift {
            bias,
            noise_scale,
            renormalize,
        }
    }

    /// Embedding of the generated copy of `human`. For `PairedFile` the copy
    /// is looked up in `corpus`.
    pub fn rewrite_item(&self, corpus: &PairedCorpus, human: ItemId, seed: u64) -> Result<Vec<f64>> {
        match self {
            RewriterOracle::PairedFile => {
                let other = corpus.counterpart(human)?;
                Ok(corpus.embedding(other)?.to_vec())
            }
            RewriterOracle::SyntheticShift { .. } => {
                synthetic_rewrite(corpus.embedding(human)?, self, seed)
            }
        }
    }
}

/// `normalize_if_flagged(e + bias + noise_scale * g)` with `g ~ N(0, I)` drawn
/// from `seed`.
pub fn synthetic_rewrite(e: &[f64], oracle: &RewriterOracle, seed: u64) -> Result<Vec<f64>> {
    let RewriterOracle::SyntheticShift {
        bias,
        noise_scale,
        renormalize,
    } = oracle
    else {
        return Err(Error::invalid(
            "oracle",
            "synthetic_rewrite needs a SyntheticShift oracle",
        ));
    };
    if bias.len() != e.len() {
        return Err(Error::Dimension {
            expected: e.len(),
            found: bias.len(),
        });
    }
    if !(*noise_scale >= 0.0 && noise_scale.is_finite()) {
        return Err(Error::invalid("noise_scale", "must be finite and >= 0"));
    }
    let mut out: Vec<f64> = e.iter().zip(bias).map(|(x, b)| x + b).collect();
    if *noise_scale > 0.0 {
        let mut rng = seed::rng(seed, &[seed::stream::REWRITE]);
        for o in &mut out {
            let g: f64 = StandardNormal.sample(&mut rng);
            *o += noise_scale * g;
        }
    }
    if *renormalize {
        let n = norm(&out);
        if n > 0.0 {
            out.iter_mut().for_each(|o| *o /= n);
        }
    }
    Ok(out)
}

pub(crate) fn random_unit(dim: usize, rng: &mut seed::Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Human items get ids `0..n_pairs`, their copies `n_pairs..2*n_pairs`, and
/// pair `k` links ids `k` and `n_pairs + k`.
pub fn generate_synthetic_corpus(
    n_pairs: usize,
    dim: usize,
    oracle: &RewriterOracle,
    seed: u64,
) -> Result<PairedCorpus> {
    if n_pairs == 0 {
        return Err(Error::invalid("n_pairs", "must be >= 1"));
    }
    if dim < 2 {
        return Err(Error::invalid("dim", "must be >= 2"));
    }
    if matches!(oracle, RewriterOracle::PairedFile) {
        return Err(Error::invalid(
            "oracle",
            "a synthetic corpus needs a SyntheticShift oracle",
        ));
    }
    let n = u32::try_from(n_pairs).map_err(|_| Error::invalid("n_pairs", "too large"))?;
    let mut rng = seed::rng(seed, &[seed::stream::CORPUS]);
    let humans: Vec<Vec<f64>> = (0..n_pairs).map(|_| random_unit(dim, &mut rng)).collect();
    let mut items = Vec::with_capacity(2 * n_pairs);
    for (k, e) in humans.iter().enumerate() {
        items.push(Item {
            id: ItemId(k as u32),
            source: Source::Human,
            pair_id: k as u32,
            embedding: e.clone(),
        });
    }
    for (k, e) in humans.iter().enumerate() {
        let copy = synthetic_rewrite(e, oracle, seed::derive(seed, &[seed::stream::REWRITE, k as u64]))?;
        items.push(Item {
            id: ItemId(n + k as u32),
            source: Source::Generated,
            pair_id: k as u32,
            embedding: copy,
        });
    }
    PairedCorpus::new(items, dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shift(bias: Vec<f64>, noise_scale: f64, renormalize: bool) -> RewriterOracle {
        RewriterOracle::SyntheticShift {
            bias,
            noise_scale,
            renormalize,
        }
    }

    #[test]
    fn identity_oracle_copies_exactly() {
        let corpus = generate_synthetic_corpus(3, 8, &RewriterOracle::identity(8), 7).unwrap();
        assert_eq!(corpus.len(), 6);
        for (&pair, &(h, g)) in corpus.pair_index() {
            assert_eq!(corpus.embedding(h).unwrap(), corpus.embedding(g).unwrap());
            assert_eq!(corpus.pair_of(h).unwrap(), pair);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let oracle = RewriterOracle::random_shift(8, 0.5, 0.1, true, 3);
        let a = generate_synthetic_corpus(3, 8, &oracle, 7).unwrap();
        let b = generate_synthetic_corpus(3, 8, &oracle, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_corpus(3, 8, &oracle, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn human_embeddings_are_unit_norm() {
        let corpus = generate_synthetic_corpus(20, 16, &RewriterOracle::identity(16), 1).unwrap();
        for id in corpus.human_ids() {
            assert!((norm(corpus.embedding(id).unwrap()) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_copy_offset_equals_shift() {
        let oracle = RewriterOracle::random_shift(16, 0.5, 0.0, false, 11);
        let RewriterOracle::SyntheticShift { bias, .. } = &oracle else {
            unreachable!()
        };
        let corpus = generate_synthetic_corpus(100, 16, &oracle, 1).unwrap();
        let mut mean = vec![0.0; 16];
        for &(h, g) in corpus.pair_index().values() {
            let (eh, eg) = (corpus.embedding(h).unwrap(), corpus.embedding(g).unwrap());
            for j in 0..16 {
                mean[j] += (eg[j] - eh[j]) / 100.0;
            }
        }
        for j in 0..16 {
            assert!((mean[j] - bias[j]).abs() < 1e-12);
        }
        assert!((norm(bias) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rewrite_examples() {
        let e = [1.0, 0.0];
        assert_eq!(synthetic_rewrite(&e, &shift(vec![0.0, 0.0], 0.0, false), 1).unwrap(), e);
        assert_eq!(
            synthetic_rewrite(&e, &shift(vec![0.0, 1.0], 0.0, false), 1).unwrap(),
            vec![1.0, 1.0]
        );
        let r = synthetic_rewrite(&e, &shift(vec![0.0, 1.0], 0.0, true), 1).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((r[0] - h).abs() < 1e-15 && (r[1] - h).abs() < 1e-15);
    }

    #[test]
    fn rewrite_rejects_dimension_mismatch() {
        let err = synthetic_rewrite(&[1.0, 0.0, 0.0], &shift(vec![0.0, 1.0], 0.0, false), 1);
        assert!(matches!(err, Err(Error::Dimension { expected: 3, found: 2 })));
    }

    #[test]
    fn paired_file_oracle_returns_counterpart() {
        let oracle = RewriterOracle::random_shift(4, 0.3, 0.0, false, 2);
        let corpus = generate_synthetic_corpus(2, 4, &oracle, 5).unwrap();
        let copy = RewriterOracle::PairedFile.rewrite_item(&corpus, ItemId(1), 0).unwrap();
        assert_eq!(copy, corpus.embedding(ItemId(3)).unwrap());
    }

    #[test]
    fn counterpart_is_an_involution() {
        let corpus = generate_synthetic_corpus(5, 4, &RewriterOracle::identity(4), 5).unwrap();
        for item in corpus.items() {
            let other = corpus.counterpart(item.id).unwrap();
            assert_ne!(corpus.source(other).unwrap(), item.source);
            assert_eq!(corpus.counterpart(other).unwrap(), item.id);
        }
    }

    #[test]
    fn pair_links_must_be_complete() {
        let items = vec![
            Item { id: ItemId(0), source: Source::Human, pair_id: 0, embedding: vec![1.0, 0.0] },
            Item { id: ItemId(1), source: Source::Generated, pair_id: 0, embedding: vec![1.0, 0.0] },
            Item { id: ItemId(2), source: Source::Human, pair_id: 1, embedding: vec![0.0, 1.0] },
        ];
        let err = PairedCorpus::new(items, 2).unwrap_err();
        assert!(matches!(err, Error::DanglingPair { row: 3, pair_id: 1, .. }));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn renormalized_rewrite_is_unit(
                e in proptest::collection::vec(-3.0f64..3.0, 6),
                bias in proptest::collection::vec(-1.0f64..1.0, 6),
                sigma in 0.0f64..0.5,
                seed in any::<u64>(),
            ) {
                let out = synthetic_rewrite(&e, &shift(bias, sigma, true), seed).unwrap();
                prop_assume!(out.iter().any(|x| *x != 0.0));
                prop_assert!((norm(&out) - 1.0).abs() < 1e-6);
            }

            #[test]
            fn pair_index_is_a_bijection(n in 1usize..40, seed in any::<u64>()) {
                let corpus = generate_synthetic_corpus(n, 3, &RewriterOracle::identity(3), seed).unwrap();
                let mut generated: Vec<ItemId> = corpus.pair_index().values().map(|&(_, g)| g).collect();
                generated.sort();
                generated.dedup();
                prop_assert_eq!(generated.len(), n);
                for &g in &generated {
                    prop_assert_eq!(corpus.source(g).unwrap(), Source::Generated);
                }
            }
        }
    }
}
