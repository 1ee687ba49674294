//! Dataset ordering: difficulty ranking, the NI/SI/SemI selection orders and
//! the shuffled ablation orders.
//!
//! Randomized strategies use ChaCha8 seeded with `seed_from_u64(seed)` and an
//! explicit Fisher–Yates shuffle (index `i` from `len-1` down to `1`, swap with
//! a uniform `j ∈ [0, i]` drawn by rejection sampling on `next_u64`). The
//! permutation for a given seed is therefore fixed by this module alone.

use std::cmp::Reverse;
use std::collections::HashMap;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetRecord, RecordSource};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CurriculumError {
    #[error("record {index} has no {field}, required by this ordering")]
    MissingProvenance { index: usize, field: &'static str },
    #[error("record {index} has source {origin:?}, which this ordering does not accept")]
    UnexpectedSource { index: usize, origin: RecordSource },
    #[error("unknown ordering strategy `{0}`")]
    UnknownStrategy(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderKind {
    /// SemI by descending test-case count.
    SemiRanked,
    /// SemI shuffled (ranking ablation).
    SemiUnranked,
    /// Problems shuffled, solutions assembled per problem, then records shuffled.
    NiShuffled,
    /// SI in generation order.
    SiGeneratedOrder,
    /// SI block in generation order, then SemI ranked.
    CombinedSiThenSemi,
    /// One shuffle over everything (ordering ablation).
    AllShuffled,
}

impl OrderKind {
    pub const ALL: [OrderKind; 6] = [
        Self::SemiRanked,
        Self::SemiUnranked,
        Self::NiShuffled,
        Self::SiGeneratedOrder,
        Self::CombinedSiThenSemi,
        Self::AllShuffled,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::SemiRanked => "semi-ranked",
            Self::SemiUnranked => "semi-unranked",
            Self::NiShuffled => "ni-shuffled",
            Self::SiGeneratedOrder => "si-generated-order",
            Self::CombinedSiThenSemi => "combined-si-then-semi",
            Self::AllShuffled => "all-shuffled",
        }
    }

    pub fn is_randomized(self) -> bool {
        matches!(
            self,
            Self::SemiUnranked | Self::NiShuffled | Self::AllShuffled
        )
    }
}

impl std::str::FromStr for OrderKind {
    type Err = CurriculumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| CurriculumError::UnknownStrategy(s.to_string()))
    }
}

impl std::fmt::Display for OrderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingStrategy {
    pub kind: OrderKind,
    pub seed: u64,
}

impl OrderingStrategy {
    pub fn new(kind: OrderKind, seed: u64) -> Self {
        Self { kind, seed }
    }
}

/// Seeded Fisher–Yates over ChaCha8.
pub struct SeededShuffler {
    rng: ChaCha8Rng,
}

impl SeededShuffler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform in `[0, bound)`.
    fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        let zone = u64::MAX - u64::MAX % bound;
        loop {
            let x = self.rng.next_u64();
            if x < zone {
                return x % bound;
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// Stable sort by non-increasing difficulty.
pub fn rank_by_difficulty<T>(mut items: Vec<T>, difficulty: impl Fn(&T) -> usize) -> Vec<T> {
    items.sort_by_key(|t| Reverse(difficulty(t)));
    items
}

fn require<T>(
    records: &[DatasetRecord],
    field: &'static str,
    get: impl Fn(&DatasetRecord) -> Option<T>,
) -> Result<Vec<T>, CurriculumError> {
    records
        .iter()
        .enumerate()
        .map(|(index, r)| get(r).ok_or(CurriculumError::MissingProvenance { index, field }))
        .collect()
}

fn ranked(records: Vec<DatasetRecord>) -> Result<Vec<DatasetRecord>, CurriculumError> {
    require(&records, "difficulty", |r| r.difficulty)?;
    Ok(rank_by_difficulty(records, |r| r.difficulty.unwrap_or(0)))
}

fn generated_order(records: Vec<DatasetRecord>) -> Result<Vec<DatasetRecord>, CurriculumError> {
    require(&records, "sequence", |r| r.provenance.sequence)?;
    let mut records = records;
    records.sort_by_key(|r| r.provenance.sequence);
    Ok(records)
}

fn ni_shuffled(
    records: Vec<DatasetRecord>,
    seed: u64,
) -> Result<Vec<DatasetRecord>, CurriculumError> {
    let ids = require(&records, "problem_id", |r| r.provenance.problem_id.clone())?;
    let mut problem_order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<DatasetRecord>> = HashMap::new();
    for (id, record) in ids.into_iter().zip(records) {
        let group = groups.entry(id.clone()).or_default();
        if group.is_empty() {
            problem_order.push(id);
        }
        group.push(record);
    }
    let mut rng = SeededShuffler::new(seed);
    rng.shuffle(&mut problem_order);
    let mut assembled: Vec<DatasetRecord> = problem_order
        .iter()
        .flat_map(|id| groups.remove(id).unwrap_or_default())
        .collect();
    rng.shuffle(&mut assembled);
    Ok(assembled)
}

/// Orders `records` according to `strategy`. Output is always a permutation of the input.
pub fn order_records(
    records: Vec<DatasetRecord>,
    strategy: &OrderingStrategy,
) -> Result<Vec<DatasetRecord>, CurriculumError> {
    match strategy.kind {
        OrderKind::SemiRanked => ranked(records),
        OrderKind::SemiUnranked | OrderKind::AllShuffled => {
            let mut records = records;
            SeededShuffler::new(strategy.seed).shuffle(&mut records);
            Ok(records)
        }
        OrderKind::NiShuffled => ni_shuffled(records, strategy.seed),
        OrderKind::SiGeneratedOrder => generated_order(records),
        OrderKind::CombinedSiThenSemi => {
            let mut si = Vec::new();
            let mut semi = Vec::new();
            for (index, r) in records.into_iter().enumerate() {
                match r.source {
                    RecordSource::Si => si.push(r),
                    RecordSource::Semi => semi.push(r),
                    origin => return Err(CurriculumError::UnexpectedSource { index, origin }),
                }
            }
            let mut out = generated_order(si)?;
            out.extend(ranked(semi)?);
            Ok(out)
        }
    }
}

/// The first `n` records of the strategy-ordered stream.
pub fn select_scale(
    records: Vec<DatasetRecord>,
    n: usize,
    strategy: &OrderingStrategy,
) -> Result<Vec<DatasetRecord>, CurriculumError> {
    let mut ordered = order_records(records, strategy)?;
    ordered.truncate(n);
    Ok(ordered)
}
