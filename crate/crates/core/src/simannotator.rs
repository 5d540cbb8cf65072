//! Simulated annotators over latent intensities.
//!
//! Each simulated judgment perturbs every item's true intensity with
//! independent Gaussian noise and picks the arg-max as best and the arg-min as
//! worst.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::TupleDesign;
use crate::item::ItemId;
use crate::scoring::Annotation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("intensity {value} for item {item} is outside [0, 1]")]
    IntensityOutOfRange { item: ItemId, value: f64 },
    #[error("noise sd {0} must be finite and non-negative")]
    InvalidNoise(f64),
    #[error("item {0} has no latent intensity")]
    MissingItem(ItemId),
    #[error("gold error rate {0} is outside [0, 1]")]
    InvalidRate(f64),
    #[error("annotations per tuple must be at least 1")]
    NoAnnotators,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentIntensityModel {
    intensities: BTreeMap<ItemId, f64>,
    noise_sd: f64,
    rng_seed: u64,
}

impl LatentIntensityModel {
    pub fn new(intensities: BTreeMap<ItemId, f64>, noise_sd: f64, rng_seed: u64) -> Result<Self, SimError> {
        if !noise_sd.is_finite() || noise_sd < 0.0 {
            return Err(SimError::InvalidNoise(noise_sd));
        }
        for (&item, &value) in &intensities {
            if !(0.0..=1.0).contains(&value) {
                return Err(SimError::IntensityOutOfRange { item, value });
            }
        }
        Ok(Self { intensities, noise_sd, rng_seed })
    }

    /// Intensities drawn uniformly from [0, 1] for `items`.
    pub fn uniform(items: impl IntoIterator<Item = ItemId>, noise_sd: f64, rng_seed: u64) -> Result<Self, SimError> {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ 0x5E_ED1A_7E17_u64);
        let intensities = items.into_iter().map(|id| (id, rng.random::<f64>())).collect();
        Self::new(intensities, noise_sd, rng_seed)
    }

    pub fn intensity(&self, item: ItemId) -> Option<f64> {
        self.intensities.get(&item).copied()
    }

    pub fn intensities(&self) -> &BTreeMap<ItemId, f64> {
        &self.intensities
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }
}

/// Index of the first maximum and of the last minimum. They differ whenever
/// `values` has at least two entries.
pub fn best_worst_positions(values: &[f64]) -> (usize, usize) {
    let mut best = 0;
    let mut worst = values.len() - 1;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    for (i, v) in values.iter().enumerate().rev() {
        if *v < values[worst] {
            worst = i;
        }
    }
    (best, worst)
}

/// `per_tuple` simulated judgments for every tuple of the design. Tuple `t`
/// draws from stream `t` of the model seed. Annotator ids are `sim-0`,
/// `sim-1`, ... per tuple.
pub fn simulate_annotations(
    design: &TupleDesign,
    model: &LatentIntensityModel,
    per_tuple: usize,
) -> Result<Vec<Annotation>, SimError> {
    if per_tuple == 0 {
        return Err(SimError::NoAnnotators);
    }
    for tuple in design.tuples() {
        if let Some(&missing) = tuple.iter().find(|id| model.intensity(**id).is_none()) {
            return Err(SimError::MissingItem(missing));
        }
    }
    let noise = Normal::new(0.0, model.noise_sd).map_err(|_| SimError::InvalidNoise(model.noise_sd))?;

    let per_tuple_annotations: Vec<Vec<Annotation>> = design
        .tuples()
        .par_iter()
        .enumerate()
        .map(|(t, tuple)| {
            let mut rng = ChaCha8Rng::seed_from_u64(model.rng_seed);
            rng.set_stream(t as u64);
            let truth: Vec<f64> = tuple.iter().map(|id| model.intensities[id]).collect();
            (0..per_tuple)
                .map(|annotator| {
                    let perceived: Vec<f64> = truth.iter().map(|v| v + noise.sample(&mut rng)).collect();
                    let (best, worst) = best_worst_positions(&perceived);
                    Annotation::new(t, format!("sim-{annotator}"), tuple[best], tuple[worst])
                })
                .collect()
        })
        .collect();
    Ok(per_tuple_annotations.into_iter().flatten().collect())
}

/// Stream of graded gold sub-answers: each is correct with probability
/// `1 - error_rate`, independently.
#[derive(Debug, Clone)]
pub struct GoldBehavior {
    error_rate: f64,
    rng: ChaCha8Rng,
}

impl GoldBehavior {
    pub fn new(error_rate: f64, rng_seed: u64) -> Result<Self, SimError> {
        if !(0.0..=1.0).contains(&error_rate) {
            return Err(SimError::InvalidRate(error_rate));
        }
        Ok(Self { error_rate, rng: ChaCha8Rng::seed_from_u64(rng_seed) })
    }

    /// Stream `stream` of the seed, e.g. one per simulated annotator.
    pub fn with_stream(error_rate: f64, rng_seed: u64, stream: u64) -> Result<Self, SimError> {
        let mut behavior = Self::new(error_rate, rng_seed)?;
        behavior.rng.set_stream(stream);
        Ok(behavior)
    }
}

impl Iterator for GoldBehavior {
    type Item = bool;

    fn next(&mut self) -> Option<bool> {
        Some(self.rng.random::<f64>() >= self.error_rate)
    }
}

pub fn simulate_gold_behavior(error_rate: f64, rng_seed: u64) -> Result<GoldBehavior, SimError> {
    GoldBehavior::new(error_rate, rng_seed)
}
