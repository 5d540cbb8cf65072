use std::collections::BTreeMap;

use bwslex::design::{generate_design, DesignConfig};
use bwslex::item::ItemSet;
use bwslex::quality::{
    filter_annotations, grade_response, select_gold, update_and_lockout, update_with_units, AnnotatorRecord,
    GoldQuestion, GradingUnit, LockoutPolicy,
};
use bwslex::scoring::Annotation;
use bwslex::simannotator::GoldBehavior;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, DiscreteCDF};

/// Probability that the sequential lockout rule fires within `units` graded
/// sub-answers, by enumerating every outcome sequence.
fn enumerate_lockout(units: u32, error_rate: f64, threshold: f64, min_gold: u32) -> f64 {
    let mut total = 0.0;
    for pattern in 0u32..(1 << units) {
        let mut correct = 0u32;
        let mut locked = false;
        for step in 0..units {
            if pattern >> step & 1 == 1 {
                correct += 1;
            }
            let attempted = step + 1;
            if attempted >= min_gold && (correct as f64) < threshold * attempted as f64 {
                locked = true;
            }
        }
        if locked {
            let right = pattern.count_ones() as i32;
            total += (1.0 - error_rate).powi(right) * error_rate.powi(units as i32 - right);
        }
    }
    total
}

fn lockout_frequency(annotators: u64, units: usize, error_rate: f64, policy: &LockoutPolicy, seed: u64) -> f64 {
    let locked = (0..annotators)
        .filter(|&a| {
            let answers: Vec<bool> = GoldBehavior::with_stream(error_rate, seed, a).unwrap().take(units).collect();
            update_with_units(&AnnotatorRecord::new(format!("a{a}")), &answers, policy).locked_out
        })
        .count();
    locked as f64 / annotators as f64
}

#[test]
fn quarter_error_rate_matches_enumeration() {
    let policy = LockoutPolicy { threshold: 0.70, min_gold: 4, unit: GradingUnit::SubAnswer };
    let expected = enumerate_lockout(16, 0.25, 0.70, 4);
    let observed = lockout_frequency(10_000, 16, 0.25, &policy, 99);
    assert!((observed - expected).abs() < 0.02, "observed {observed} expected {expected}");
}

#[test]
fn end_of_batch_lockout_matches_binomial_tail() {
    // with min_gold equal to the batch size only the final accuracy matters
    let units = 20u32;
    let policy = LockoutPolicy { threshold: 0.70, min_gold: units, unit: GradingUnit::SubAnswer };
    // locked iff correct < 14, i.e. correct <= 13
    let tail = Binomial::new(0.75, units as u64).unwrap().cdf(13);
    assert!((enumerate_lockout(units, 0.25, 0.70, units) - tail).abs() < 1e-12);
    let observed = lockout_frequency(10_000, units as usize, 0.25, &policy, 5);
    assert!((observed - tail).abs() < 0.02, "observed {observed} tail {tail}");
}

#[test]
fn extreme_rates() {
    let policy = LockoutPolicy::default();
    assert_eq!(lockout_frequency(500, 40, 0.0, &policy, 1), 0.0);
    for a in 0..50 {
        let answers: Vec<bool> = GoldBehavior::with_stream(1.0, 3, a).unwrap().take(4).collect();
        let mut record = AnnotatorRecord::new("x");
        for (i, answer) in answers.iter().enumerate() {
            record = update_with_units(&record, &[*answer], &policy);
            assert_eq!(record.locked_out, i + 1 >= 4);
        }
    }
}

#[test]
fn batch_accuracy_equals_recount() {
    let items = ItemSet::from_terms((0..100).map(|i| format!("w{i}"))).unwrap();
    let design = generate_design(&items, &DesignConfig::with_seed(4)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let gold: Vec<GoldQuestion> = select_gold(&design, 0.05, 4)
        .unwrap()
        .into_iter()
        .map(|t| {
            let tuple = design.tuple(t).unwrap();
            GoldQuestion { tuple_index: t, expected_best: tuple[0], expected_worst: tuple[1] }
        })
        .collect();
    assert_eq!(gold.len(), 10);

    let responses: Vec<(GoldQuestion, Annotation)> = (0..300)
        .map(|_| {
            let g = gold[rng.random_range(0..gold.len())].clone();
            let mut picks = design.tuple(g.tuple_index).unwrap().to_vec();
            picks.shuffle(&mut rng);
            let a = Annotation::new(g.tuple_index, "w", picks[0], picks[1]);
            (g, a)
        })
        .collect();
    let graded: Vec<_> = responses.iter().map(|(g, a)| grade_response(g, a).unwrap()).collect();
    let never_lock = LockoutPolicy { min_gold: u32::MAX, ..LockoutPolicy::default() };
    let record = update_and_lockout(&AnnotatorRecord::new("w"), &graded, &never_lock);

    let mut right = 0;
    for (g, a) in &responses {
        right += u32::from(a.best == g.expected_best) + u32::from(a.worst == g.expected_worst);
    }
    assert_eq!(record.gold_attempted, 600);
    assert_eq!(record.gold_correct, right);
}

#[test]
fn gold_fraction_is_exact() {
    let items = ItemSet::from_terms((0..1500).map(|i| format!("w{i}"))).unwrap();
    let design = generate_design(&items, &DesignConfig::with_seed(2)).unwrap();
    assert_eq!(design.len(), 3000);
    let picked = select_gold(&design, 0.05, 17).unwrap();
    assert_eq!(picked.len(), 150);
    let mut unique = picked.clone();
    unique.dedup();
    assert_eq!(unique.len(), 150);
}

#[test]
fn filter_matches_id_lookup() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let annotations: Vec<Annotation> = (0..500)
        .map(|i| {
            Annotation::new(
                i,
                format!("w{}", rng.random_range(0..12)),
                bwslex::ItemId(0),
                bwslex::ItemId(1),
            )
        })
        .collect();
    let mut records = BTreeMap::new();
    for w in 0..12 {
        let mut record = AnnotatorRecord::new(format!("w{w}"));
        record.locked_out = w % 4 == 0;
        records.insert(record.annotator_id.clone(), record);
    }
    let (kept, discarded) = filter_annotations(&annotations, &records);
    let locked = |id: &str| ["w0", "w4", "w8"].contains(&id);
    let expected_kept: Vec<_> = annotations.iter().filter(|a| !locked(&a.annotator_id)).cloned().collect();
    let expected_gone: Vec<_> = annotations.iter().filter(|a| locked(&a.annotator_id)).cloned().collect();
    assert_eq!(kept, expected_kept);
    assert_eq!(discarded, expected_gone);
    assert_eq!(kept.len() + discarded.len(), annotations.len());
}

#[test]
fn lockout_is_monotone_under_more_responses() {
    let policy = LockoutPolicy::default();
    for seed in 0..200 {
        let answers: Vec<bool> = GoldBehavior::new(0.4, seed).unwrap().take(30).collect();
        let mut record = AnnotatorRecord::new("m");
        let mut was_locked = false;
        for chunk in answers.chunks(3) {
            record = update_with_units(&record, chunk, &policy);
            assert!(!was_locked || record.locked_out);
            was_locked = record.locked_out;
            assert!(record.gold_correct <= record.gold_attempted);
        }
    }
}
