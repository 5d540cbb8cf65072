//! Gold questions, annotator accuracy and lockout.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::TupleDesign;
use crate::item::ItemId;
use crate::scoring::Annotation;

pub const DEFAULT_GOLD_FRACTION: f64 = 0.05;
pub const DEFAULT_LOCKOUT_THRESHOLD: f64 = 0.70;
pub const DEFAULT_MIN_GOLD: u32 = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QualityError {
    #[error("gold fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("annotation is for tuple {found} but the gold question is tuple {expected}")]
    TupleMismatch { expected: usize, found: usize },
    #[error("gold question for tuple {0} is not in the design")]
    UnknownTuple(usize),
    #[error("gold question for tuple {tuple}: {reason}")]
    InvalidGold { tuple: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldQuestion {
    pub tuple_index: usize,
    pub expected_best: ItemId,
    pub expected_worst: ItemId,
}

impl GoldQuestion {
    pub fn check(&self, design: &TupleDesign) -> Result<(), QualityError> {
        let tuple = design
            .tuple(self.tuple_index)
            .ok_or(QualityError::UnknownTuple(self.tuple_index))?;
        let invalid = |reason: &str| QualityError::InvalidGold {
            tuple: self.tuple_index,
            reason: reason.to_string(),
        };
        if self.expected_best == self.expected_worst {
            return Err(invalid("expected best equals expected worst"));
        }
        if !tuple.contains(&self.expected_best) || !tuple.contains(&self.expected_worst) {
            return Err(invalid("expected answer is not in the tuple"));
        }
        Ok(())
    }
}

/// Picks `ceil(fraction * T)` tuples uniformly without replacement, returned in
/// index order. Expected answers are supplied elsewhere.
pub fn select_gold(design: &TupleDesign, fraction: f64, seed: u64) -> Result<Vec<usize>, QualityError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(QualityError::InvalidFraction(fraction));
    }
    let total = design.len();
    let wanted = ((fraction * total as f64).ceil() as usize).min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, total, wanted).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradedResponse {
    pub best_correct: bool,
    pub worst_correct: bool,
}

impl GradedResponse {
    pub fn is_fully_correct(&self) -> bool {
        self.best_correct && self.worst_correct
    }
}

pub fn grade_response(gold: &GoldQuestion, annotation: &Annotation) -> Result<GradedResponse, QualityError> {
    if annotation.tuple_index != gold.tuple_index {
        return Err(QualityError::TupleMismatch {
            expected: gold.tuple_index,
            found: annotation.tuple_index,
        });
    }
    Ok(GradedResponse {
        best_correct: annotation.best == gold.expected_best,
        worst_correct: annotation.worst == gold.expected_worst,
    })
}

/// Whether a gold question counts as one pair or two sub-answers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradingUnit {
    #[default]
    SubAnswer,
    Pair,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockoutPolicy {
    /// Lock when accuracy is strictly below this.
    pub threshold: f64,
    /// Graded units required before lockout can trigger.
    pub min_gold: u32,
    pub unit: GradingUnit,
}

impl Default for LockoutPolicy {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_LOCKOUT_THRESHOLD,
            min_gold: DEFAULT_MIN_GOLD,
            unit: GradingUnit::SubAnswer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorRecord {
    pub annotator_id: String,
    pub gold_attempted: u32,
    pub gold_correct: u32,
    pub locked_out: bool,
}

impl AnnotatorRecord {
    pub fn new(annotator_id: impl Into<String>) -> Self {
        Self {
            annotator_id: annotator_id.into(),
            gold_attempted: 0,
            gold_correct: 0,
            locked_out: false,
        }
    }

    pub fn accuracy(&self) -> Option<f64> {
        (self.gold_attempted > 0).then(|| f64::from(self.gold_correct) / f64::from(self.gold_attempted))
    }
}

/// Folds graded responses into the record and re-evaluates lockout after
/// each one. A locked record stays locked.
pub fn update_and_lockout(
    record: &AnnotatorRecord,
    graded: &[GradedResponse],
    policy: &LockoutPolicy,
) -> AnnotatorRecord {
    let mut next = record.clone();
    for response in graded {
        match policy.unit {
            GradingUnit::SubAnswer => {
                next.gold_attempted += 2;
                next.gold_correct += u32::from(response.best_correct) + u32::from(response.worst_correct);
            }
            GradingUnit::Pair => {
                next.gold_attempted += 1;
                next.gold_correct += u32::from(response.is_fully_correct());
            }
        }
        next.locked_out |= should_lock(&next, policy);
    }
    next
}

/// Same as [`update_and_lockout`] for a stream of individually graded units.
pub fn update_with_units(record: &AnnotatorRecord, units: &[bool], policy: &LockoutPolicy) -> AnnotatorRecord {
    let mut next = record.clone();
    for &correct in units {
        next.gold_attempted += 1;
        next.gold_correct += u32::from(correct);
        next.locked_out |= should_lock(&next, policy);
    }
    next
}

fn should_lock(record: &AnnotatorRecord, policy: &LockoutPolicy) -> bool {
    record.gold_attempted >= policy.min_gold
        && f64::from(record.gold_correct) < policy.threshold * f64::from(record.gold_attempted)
}

/// Splits annotations into those kept and those by locked-out annotators.
/// Both halves preserve input order.
pub fn filter_annotations(
    annotations: &[Annotation],
    records: &BTreeMap<String, AnnotatorRecord>,
) -> (Vec<Annotation>, Vec<Annotation>) {
    let locked: BTreeSet<&str> = records
        .values()
        .filter(|r| r.locked_out)
        .map(|r| r.annotator_id.as_str())
        .collect();
    annotations
        .iter()
        .cloned()
        .partition(|a| !locked.contains(a.annotator_id.as_str()))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterCounts {
    pub kept: usize,
    pub discarded: usize,
}

/// Kept/discarded counts per annotator.
pub fn filter_report(kept: &[Annotation], discarded: &[Annotation]) -> BTreeMap<String, FilterCounts> {
    let mut report: BTreeMap<String, FilterCounts> = BTreeMap::new();
    for a in kept {
        report.entry(a.annotator_id.clone()).or_default().kept += 1;
    }
    for a in discarded {
        report.entry(a.annotator_id.clone()).or_default().discarded += 1;
    }
    report
}
