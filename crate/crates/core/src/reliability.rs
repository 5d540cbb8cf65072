//! Correlation statistics and average split-half reliability.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::TupleDesign;
use crate::scoring::{count_scores, Annotation, ScoringError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReliabilityError {
    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two paired values, got {0}")]
    TooShort(usize),
    #[error("vector has zero variance")]
    DegenerateVector,
    #[error("tuple {tuple} has {count} annotation(s); split-half needs at least 2")]
    InsufficientAnnotations { tuple: usize, count: usize },
    #[error("trial count must be at least 1")]
    NoTrials,
    #[error("trial {trial}: {source}")]
    Trial { trial: usize, source: Box<ReliabilityError> },
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), ReliabilityError> {
    if x.len() != y.len() {
        return Err(ReliabilityError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(ReliabilityError::TooShort(x.len()));
    }
    Ok(())
}

/// Product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, ReliabilityError> {
    check_pair(x, y)?;
    let len = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / len;
    let mean_y = y.iter().sum::<f64>() / len;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(ReliabilityError::DegenerateVector);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing the mean of the positions they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Rank correlation: Pearson over average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, ReliabilityError> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShrConfig {
    pub trials: usize,
    pub rng_seed: u64,
}

impl Default for ShrConfig {
    fn default() -> Self {
        Self { trials: 100, rng_seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub pearson: f64,
    pub spearman: f64,
    /// Items scored in both halves.
    pub items_compared: usize,
    /// Items left out because one half never saw them.
    pub items_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrReport {
    pub mean_pearson: f64,
    pub mean_spearman: f64,
    pub per_trial: Vec<TrialResult>,
    pub trials_used: usize,
}

impl ShrReport {
    /// Tab-separated per-trial lines followed by a summary block, six decimals.
    pub fn to_text(&self) -> String {
        let mut out = String::from("trial\tpearson\tspearman\n");
        for (i, t) in self.per_trial.iter().enumerate() {
            out.push_str(&format!("{i}\t{:.6}\t{:.6}\n", t.pearson, t.spearman));
        }
        let compared: usize = self.per_trial.iter().map(|t| t.items_compared).sum();
        let excluded: usize = self.per_trial.iter().map(|t| t.items_excluded).sum();
        out.push('\n');
        out.push_str(&format!("trials\t{}\n", self.trials_used));
        out.push_str(&format!("mean_pearson\t{:.6}\n", self.mean_pearson));
        out.push_str(&format!("mean_spearman\t{:.6}\n", self.mean_spearman));
        out.push_str(&format!("items_compared_total\t{compared}\n"));
        out.push_str(&format!("items_excluded_total\t{excluded}\n"));
        out
    }
}

/// Average split-half reliability over `config.trials` random splits.
///
/// Each trial splits every tuple's annotations into two halves of equal size;
/// an odd leftover joins a random half. Trial `i` draws from its own stream of
/// the master seed, so results do not depend on scheduling.
pub fn split_half_reliability(
    design: &TupleDesign,
    annotations: &[Annotation],
    config: &ShrConfig,
) -> Result<ShrReport, ReliabilityError> {
    if config.trials == 0 {
        return Err(ReliabilityError::NoTrials);
    }
    // validate once up front so every trial sees well-formed input
    count_scores(design, annotations)?;

    let mut by_tuple: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, a) in annotations.iter().enumerate() {
        by_tuple.entry(a.tuple_index).or_default().push(i);
    }
    if let Some((&tuple, group)) = by_tuple.iter().find(|(_, g)| g.len() < 2) {
        return Err(ReliabilityError::InsufficientAnnotations { tuple, count: group.len() });
    }
    let groups: Vec<&Vec<usize>> = by_tuple.values().collect();

    let per_trial = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            run_trial(design, annotations, &groups, config.rng_seed, trial)
                .map_err(|e| ReliabilityError::Trial { trial, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let count = per_trial.len() as f64;
    let mean_pearson = per_trial.iter().map(|t| t.pearson).sum::<f64>() / count;
    let mean_spearman = per_trial.iter().map(|t| t.spearman).sum::<f64>() / count;
    Ok(ShrReport {
        mean_pearson,
        mean_spearman,
        trials_used: per_trial.len(),
        per_trial,
    })
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn run_trial(
    design: &TupleDesign,
    annotations: &[Annotation],
    groups: &[&Vec<usize>],
    seed: u64,
    trial: usize,
) -> Result<TrialResult, ReliabilityError> {
    let mut rng = trial_rng(seed, trial);
    let mut first = Vec::with_capacity(annotations.len() / 2 + groups.len());
    let mut second = Vec::with_capacity(annotations.len() / 2 + groups.len());
    for group in groups {
        let mut shuffled: Vec<usize> = group.to_vec();
        shuffled.shuffle(&mut rng);
        let half = shuffled.len() / 2;
        first.extend(shuffled[..half].iter().map(|&i| annotations[i].clone()));
        second.extend(shuffled[half..2 * half].iter().map(|&i| annotations[i].clone()));
        if shuffled.len() % 2 == 1 {
            let odd = annotations[shuffled[2 * half]].clone();
            if rng.random_bool(0.5) {
                first.push(odd);
            } else {
                second.push(odd);
            }
        }
    }
    let left = count_scores(design, &first)?;
    let right = count_scores(design, &second)?;

    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut excluded = 0;
    for (id, counts) in left.iter() {
        match (counts.scaled_score(), right.scaled_score(id)) {
            (Some(x), Some(y)) => {
                xs.push(x);
                ys.push(y);
            }
            (None, None) => {}
            _ => excluded += 1,
        }
    }
    Ok(TrialResult {
        pearson: pearson(&xs, &ys)?,
        spearman: spearman(&xs, &ys)?,
        items_compared: xs.len(),
        items_excluded: excluded,
    })
}
