//! Counting scores from best-worst annotations.
//!
//! An item's raw score is `(best - worst) / appearances`, where appearances
//! counts the annotations made on tuples that contain the item. Raw scores lie
//! in [-1, 1] and are mapped linearly onto the unipolar range [0, 1].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::TupleDesign;
use crate::item::{ItemId, ItemSet};

/// One annotator's best/worst choice on one tuple.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Annotation {
    pub tuple_index: usize,
    pub annotator_id: String,
    pub best: ItemId,
    pub worst: ItemId,
    pub timestamp: Option<i64>,
}

impl Annotation {
    pub fn new(tuple_index: usize, annotator_id: impl Into<String>, best: ItemId, worst: ItemId) -> Self {
        Self {
            tuple_index,
            annotator_id: annotator_id.into(),
            best,
            worst,
            timestamp: None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoringError {
    #[error("annotation {index} references tuple {tuple} which is not in the design")]
    UnknownTuple { index: usize, tuple: usize },
    #[error("annotation {index} chooses item {item} which is not in tuple {tuple}")]
    NonMemberItem { index: usize, tuple: usize, item: ItemId },
    #[error("annotation {index} names item {item} as both best and worst")]
    BestEqualsWorst { index: usize, item: ItemId },
    #[error("raw score {0} is outside [-1, 1]")]
    OutOfRange(f64),
    #[error("bin width {0} must lie in (0, 1]")]
    InvalidBinWidth(f64),
}

impl ScoringError {
    /// Index of the offending annotation, when there is one.
    pub fn annotation_index(&self) -> Option<usize> {
        match self {
            ScoringError::UnknownTuple { index, .. }
            | ScoringError::NonMemberItem { index, .. }
            | ScoringError::BestEqualsWorst { index, .. } => Some(*index),
            _ => None,
        }
    }
}

/// Checks `annotation` against the design and returns its tuple.
pub fn check_annotation<'d>(
    design: &'d TupleDesign,
    index: usize,
    annotation: &Annotation,
) -> Result<&'d [ItemId], ScoringError> {
    let tuple = design.tuple(annotation.tuple_index).ok_or(ScoringError::UnknownTuple {
        index,
        tuple: annotation.tuple_index,
    })?;
    if annotation.best == annotation.worst {
        return Err(ScoringError::BestEqualsWorst { index, item: annotation.best });
    }
    for item in [annotation.best, annotation.worst] {
        if !tuple.contains(&item) {
            return Err(ScoringError::NonMemberItem { index, tuple: annotation.tuple_index, item });
        }
    }
    Ok(tuple)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemCounts {
    pub best_count: u32,
    pub worst_count: u32,
    pub appearance_count: u32,
}

impl ItemCounts {
    pub fn is_scored(&self) -> bool {
        self.appearance_count > 0
    }

    /// `None` for items that never appeared in an annotated tuple.
    pub fn raw_score(&self) -> Option<f64> {
        self.is_scored().then(|| {
            (f64::from(self.best_count) - f64::from(self.worst_count)) / f64::from(self.appearance_count)
        })
    }

    pub fn scaled_score(&self) -> Option<f64> {
        self.raw_score().map(|raw| (raw + 1.0) / 2.0)
    }
}

/// Per-item counts and scores.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreTable {
    entries: BTreeMap<ItemId, ItemCounts>,
    annotations: usize,
}

impl ScoreTable {
    pub fn get(&self, item: ItemId) -> Option<&ItemCounts> {
        self.entries.get(&item)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ItemId, &ItemCounts)> {
        self.entries.iter().map(|(&id, c)| (id, c))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of annotations folded into the table.
    pub fn annotation_count(&self) -> usize {
        self.annotations
    }

    pub fn scaled_score(&self, item: ItemId) -> Option<f64> {
        self.entries.get(&item).and_then(ItemCounts::scaled_score)
    }

    /// Scored items with their scaled scores, in id order.
    pub fn scaled_scores(&self) -> impl Iterator<Item = (ItemId, f64)> + '_ {
        self.entries
            .iter()
            .filter_map(|(&id, c)| c.scaled_score().map(|s| (id, s)))
    }

    /// Items present in the design but never annotated.
    pub fn unscored(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.entries
            .iter()
            .filter(|(_, c)| !c.is_scored())
            .map(|(&id, _)| id)
    }

    /// Adds another table's counts into this one. Counting is a commutative
    /// fold, so merged partial tables equal a single sequential pass.
    pub fn merge(&mut self, other: &ScoreTable) {
        for (&id, counts) in &other.entries {
            let entry = self.entries.entry(id).or_default();
            entry.best_count += counts.best_count;
            entry.worst_count += counts.worst_count;
            entry.appearance_count += counts.appearance_count;
        }
        self.annotations += other.annotations;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CountOptions {
    /// Drop repeated identical annotations (same annotator, tuple and choice),
    /// keeping the first.
    pub dedupe: bool,
}

pub fn count_scores(design: &TupleDesign, annotations: &[Annotation]) -> Result<ScoreTable, ScoringError> {
    count_scores_with(design, annotations, CountOptions::default())
}

pub fn count_scores_with(
    design: &TupleDesign,
    annotations: &[Annotation],
    options: CountOptions,
) -> Result<ScoreTable, ScoringError> {
    let mut table = ScoreTable {
        entries: design.items().map(|id| (id, ItemCounts::default())).collect(),
        annotations: 0,
    };
    let mut seen: BTreeSet<&Annotation> = BTreeSet::new();
    for (index, annotation) in annotations.iter().enumerate() {
        let tuple = check_annotation(design, index, annotation)?;
        if options.dedupe && !seen.insert(annotation) {
            continue;
        }
        for id in tuple {
            table.entries.entry(*id).or_default().appearance_count += 1;
        }
        table.entries.entry(annotation.best).or_default().best_count += 1;
        table.entries.entry(annotation.worst).or_default().worst_count += 1;
        table.annotations += 1;
    }
    Ok(table)
}

// Ord over annotations is only needed for dedupe bookkeeping.
impl PartialOrd for Annotation {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Annotation {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.tuple_index, &self.annotator_id, self.best, self.worst, self.timestamp).cmp(&(
            other.tuple_index,
            &other.annotator_id,
            other.best,
            other.worst,
            other.timestamp,
        ))
    }
}

/// Maps a raw score in [-1, 1] onto [0, 1].
pub fn rescale_unipolar(raw: f64) -> Result<f64, ScoringError> {
    if !(-1.0..=1.0).contains(&raw) {
        return Err(ScoringError::OutOfRange(raw));
    }
    Ok((raw + 1.0) / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairOrder {
    pub greater: ItemId,
    pub lesser: ItemId,
    pub source_annotation: usize,
}

/// Pairwise orders implied by one best/worst choice: best beats every other
/// item and every other item beats worst, `2n - 3` pairs in all.
pub fn infer_pairwise_orders(
    design: &TupleDesign,
    index: usize,
    annotation: &Annotation,
) -> Result<Vec<PairOrder>, ScoringError> {
    let tuple = check_annotation(design, index, annotation)?;
    let pair = |greater, lesser| PairOrder { greater, lesser, source_annotation: index };
    let mut pairs: Vec<PairOrder> = tuple
        .iter()
        .filter(|&&x| x != annotation.best)
        .map(|&x| pair(annotation.best, x))
        .collect();
    pairs.extend(
        tuple
            .iter()
            .filter(|&&x| x != annotation.best && x != annotation.worst)
            .map(|&x| pair(x, annotation.worst)),
    );
    Ok(pairs)
}

/// Scored items by descending scaled score; ties go to the smaller surface
/// string, then the smaller id.
pub fn rank_items(table: &ScoreTable, items: &ItemSet) -> Vec<(ItemId, f64)> {
    let mut ranked: Vec<(ItemId, f64)> = table.scaled_scores().collect();
    let surface = |id: ItemId| items.surface(id).unwrap_or("");
    ranked.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| surface(a.0).cmp(surface(b.0)))
            .then_with(|| a.0.cmp(&b.0))
    });
    ranked
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub start: f64,
    pub count: usize,
}

/// Counts scaled scores into equal-width bins covering [0, 1].
///
/// A score on a bin boundary belongs to the higher bin, except 1.0 which
/// stays in the last bin.
pub fn histogram(table: &ScoreTable, bin_width: f64) -> Result<Vec<HistogramBin>, ScoringError> {
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(ScoringError::InvalidBinWidth(bin_width));
    }
    // tolerate float noise so that 1/0.05 gives 20 bins, not 21
    const EPS: f64 = 1e-9;
    let bins = ((1.0 / bin_width) - EPS).ceil().max(1.0) as usize;
    let mut counts = vec![0usize; bins];
    for (_, score) in table.scaled_scores() {
        let q = score / bin_width;
        let nearest = q.round();
        let index = if (q - nearest).abs() < EPS { nearest } else { q.floor() };
        let index = (index.max(0.0) as usize).min(bins - 1);
        counts[index] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin { start: i as f64 * bin_width, count })
        .collect())
}
