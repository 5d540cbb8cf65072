//! One PASS/FAIL line per headline criterion. Each criterion is a list of
//! checks; `KNOWN_GAPS` names the checks that cannot hold (see README), and the
//! test fails if any other check fails or a known gap starts passing.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use bwslex::design::{generate_design, DesignConfig, TupleDesign};
use bwslex::formats::{parse_annotations, parse_design, parse_items};
use bwslex::item::{ItemId, ItemSet};
use bwslex::quality::{filter_annotations, update_with_units, AnnotatorRecord, LockoutPolicy};
use bwslex::reliability::{pearson, spearman, split_half_reliability, ShrConfig};
use bwslex::scoring::{count_scores, infer_pairwise_orders, rank_items, Annotation};
use bwslex::simannotator::{simulate_annotations, GoldBehavior, LatentIntensityModel};
use bwslex::termselect::{accumulate_stats, select_terms, CountMode, PmiMode, SelectionConfig};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KNOWN_GAPS: &[&str] = &["noiseless-exact-ranks", "pearson-hand-value"];

struct Check {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn check(id: &'static str, pass: bool, detail: impl Into<String>) -> Check {
    Check { id, pass, detail: detail.into() }
}

fn terms(n: usize) -> ItemSet {
    ItemSet::from_terms((0..n).map(|i| format!("t{i}"))).unwrap()
}

fn ladder(items: &ItemSet, sd: f64, seed: u64) -> LatentIntensityModel {
    let last = (items.len() - 1) as f64;
    let values = items.ids().into_iter().enumerate().map(|(i, id)| (id, i as f64 / last)).collect();
    LatentIntensityModel::new(values, sd, seed).unwrap()
}

// ---- design -------------------------------------------------------------

/// Independent check: counts, set-distinctness and pairwise overlap by brute
/// force over sorted tuples.
fn design_is_sound(design: &TupleDesign, n_items: usize) -> Result<(), String> {
    if design.len() != 2 * n_items {
        return Err(format!("{} tuples", design.len()));
    }
    let mut counts = vec![0usize; n_items];
    let sorted: Vec<Vec<u32>> = design
        .tuples()
        .iter()
        .map(|t| {
            let mut s: Vec<u32> = t.iter().map(|id| id.0).collect();
            s.sort_unstable();
            s
        })
        .collect();
    for t in &sorted {
        if t.len() != 4 || t.windows(2).any(|w| w[0] == w[1]) {
            return Err(format!("bad tuple {t:?}"));
        }
        for &id in t {
            counts[id as usize] += 1;
        }
    }
    if let Some((i, c)) = counts.iter().enumerate().find(|(_, &c)| c != 8) {
        return Err(format!("item {i} appears {c} times"));
    }
    for a in 0..sorted.len() {
        for b in a + 1..sorted.len() {
            let shared = sorted[a].iter().filter(|x| sorted[b].contains(x)).count();
            if shared == 4 {
                return Err(format!("tuples {a} and {b} are equal"));
            }
            if shared > 2 {
                return Err(format!("tuples {a} and {b} share {shared}"));
            }
        }
    }
    Ok(())
}

fn criterion_design() -> Vec<Check> {
    let mut checks = Vec::new();
    for (n, id) in [(20, "design-20"), (100, "design-100"), (1500, "design-1500")] {
        let items = terms(n);
        let start = Instant::now();
        let design = generate_design(&items, &DesignConfig::with_seed(42)).unwrap();
        let elapsed = start.elapsed().as_secs_f64();
        let sound = design_is_sound(&design, n);
        checks.push(check(id, sound.is_ok(), format!("N={n}: {} tuples, {}", design.len(), sound.err().unwrap_or("ok".into()))));
        if n == 1500 {
            checks.push(check("design-time", elapsed < 10.0, format!("N=1500 in {elapsed:.3}s")));
        }
    }
    checks
}

// ---- scoring -------------------------------------------------------------

fn recount(design: &TupleDesign, annotations: &[Annotation], item: ItemId) -> Option<f64> {
    let (mut best, mut worst, mut seen) = (0i64, 0i64, 0i64);
    for a in annotations {
        if design.tuples()[a.tuple_index].contains(&item) {
            seen += 1;
        }
        best += i64::from(a.best == item);
        worst += i64::from(a.worst == item);
    }
    (seen > 0).then(|| ((best - worst) as f64 / seen as f64 + 1.0) / 2.0)
}

fn random_annotations(design: &TupleDesign, count: usize, rng: &mut ChaCha8Rng) -> Vec<Annotation> {
    (0..count)
        .map(|_| {
            let t = rng.random_range(0..design.len());
            let picks: Vec<ItemId> = design.tuples()[t].choose_multiple(rng, 2).copied().collect();
            Annotation::new(t, format!("a{}", rng.random_range(0..9)), picks[0], picks[1])
        })
        .collect()
}

fn criterion_scoring() -> Vec<Check> {
    let items = terms(20);
    let mut mismatches = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for set in 0..1000u64 {
        let design = generate_design(&items, &DesignConfig::with_seed(set)).unwrap();
        let count = rng.random_range(1..120);
        let annotations = random_annotations(&design, count, &mut rng);
        let table = count_scores(&design, &annotations).unwrap();
        for id in items.ids() {
            if table.scaled_score(id) != recount(&design, &annotations, id) {
                mismatches += 1;
            }
        }
    }
    let design = generate_design(&items, &DesignConfig::with_seed(5)).unwrap();
    let mut complete = Vec::new();
    for rep in 0..4 {
        for (t, tuple) in design.tuples().iter().enumerate() {
            let picks: Vec<ItemId> = tuple.choose_multiple(&mut rng, 2).copied().collect();
            complete.push(Annotation::new(t, format!("r{rep}"), picks[0], picks[1]));
        }
    }
    let table = count_scores(&design, &complete).unwrap();
    let mean = table.scaled_scores().map(|(_, s)| s).sum::<f64>() / table.len() as f64;
    vec![
        check("recount-1000", mismatches == 0, format!("{mismatches} mismatched scores over 1000 sets")),
        check("balanced-mean", (mean - 0.5).abs() <= 1e-12, format!("mean {mean:.15}")),
    ]
}

// ---- pair inference --------------------------------------------------------

fn criterion_pairs() -> Vec<Check> {
    let mut wrong_counts = 0;
    let mut responses = 0;
    for n in 4..=7 {
        let items = terms(6 * n);
        let config = DesignConfig { tuple_size: n, ..DesignConfig::with_seed(n as u64) };
        let design = generate_design(&items, &config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        for (i, a) in random_annotations(&design, 500, &mut rng).iter().enumerate() {
            responses += 1;
            if infer_pairwise_orders(&design, i, a).unwrap().len() != 2 * n - 3 {
                wrong_counts += 1;
            }
        }
    }
    let items = ItemSet::from_terms(["A", "B", "C", "D"]).unwrap();
    let design = TupleDesign::from_parts(vec![items.ids()], DesignConfig::default(), false, items.ids());
    let a = Annotation::new(0, "x", ItemId(0), ItemId(3));
    let got: BTreeSet<(String, String)> = infer_pairwise_orders(&design, 0, &a)
        .unwrap()
        .into_iter()
        .map(|p| (items.surface(p.greater).unwrap().into(), items.surface(p.lesser).unwrap().into()))
        .collect();
    let expected: BTreeSet<(String, String)> = [("A", "B"), ("A", "C"), ("A", "D"), ("B", "D"), ("C", "D")]
        .into_iter()
        .map(|(x, y)| (x.to_string(), y.to_string()))
        .collect();
    vec![
        check("pairs-count", wrong_counts == 0, format!("{responses} responses, n=4..7, {wrong_counts} wrong")),
        check("pairs-example", got == expected, format!("{got:?}")),
    ]
}

// ---- recovery --------------------------------------------------------------

fn recovered(design: &TupleDesign, model: &LatentIntensityModel) -> (Vec<f64>, Vec<f64>) {
    let annotations = simulate_annotations(design, model, 4).unwrap();
    let table = count_scores(design, &annotations).unwrap();
    table.scaled_scores().map(|(id, s)| (s, model.intensity(id).unwrap())).unzip()
}

fn criterion_recovery() -> Vec<Check> {
    let items = terms(100);
    let mut rhos = Vec::new();
    for seed in 0..10 {
        let design = generate_design(&items, &DesignConfig::with_seed(seed)).unwrap();
        let (got, truth) = recovered(&design, &ladder(&items, 0.05, seed));
        rhos.push(spearman(&got, &truth).unwrap());
    }
    let worst = rhos.iter().copied().fold(f64::INFINITY, f64::min);

    let design = generate_design(&items, &DesignConfig::with_seed(42)).unwrap();
    let (got, truth) = recovered(&design, &ladder(&items, 0.0, 42));
    let rho = spearman(&got, &truth).unwrap();
    let mut inversions = 0;
    for i in 0..got.len() {
        for j in 0..got.len() {
            if truth[i] < truth[j] && got[i] > got[j] {
                inversions += 1;
            }
        }
    }
    vec![
        check("recovery-sd-0.05", worst >= 0.95, format!("min Spearman over 10 seeds {worst:.4}")),
        check(
            "noiseless-exact-ranks",
            rho == 1.0 && inversions == 0,
            format!("noiseless Spearman {rho:.4}, {inversions} strict inversions"),
        ),
    ]
}

// ---- split-half reliability ------------------------------------------------

fn criterion_shr() -> Vec<Check> {
    let items = terms(1500);
    let design = generate_design(&items, &DesignConfig::with_seed(7)).unwrap();
    let config = ShrConfig { trials: 100, rng_seed: 11 };

    let noiseless = LatentIntensityModel::uniform(items.ids(), 0.0, 7).unwrap();
    let clean = split_half_reliability(&design, &simulate_annotations(&design, &noiseless, 4).unwrap(), &config).unwrap();

    let noisy = LatentIntensityModel::uniform(items.ids(), 0.05, 7).unwrap();
    let annotations = simulate_annotations(&design, &noisy, 4).unwrap();
    let start = Instant::now();
    let report = split_half_reliability(&design, &annotations, &config).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    vec![
        check(
            "shr-noiseless",
            clean.mean_pearson >= 0.999 && clean.mean_spearman >= 0.999,
            format!("noiseless r={:.4} rho={:.4}", clean.mean_pearson, clean.mean_spearman),
        ),
        check(
            "shr-calibrated",
            report.mean_pearson >= 0.85 && report.mean_spearman >= 0.85,
            format!("sd 0.05 r={:.4} rho={:.4}", report.mean_pearson, report.mean_spearman),
        ),
        check("shr-time", elapsed < 60.0, format!("100 trials on N=1500 in {elapsed:.2}s")),
    ]
}

// ---- correlation -----------------------------------------------------------

fn criterion_correlation() -> Vec<Check> {
    let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 5.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let maps: [fn(f64) -> f64; 4] = [f64::exp, |v| v * v * v, |v| 3.0 * v - 7.0, f64::atan];
    let mut max_gap: f64 = 0.0;
    for i in 0..100 {
        let len = rng.random_range(5..60);
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..len).map(|_| rng.random_range(-3.0..3.0)).collect();
        let base = spearman(&x, &y).unwrap();
        let f = maps[i % maps.len()];
        let g = maps[(i + 1) % maps.len()];
        let fx: Vec<f64> = x.iter().map(|&v| f(v)).collect();
        let gy: Vec<f64> = y.iter().map(|&v| g(v)).collect();
        max_gap = max_gap.max((spearman(&fx, &gy).unwrap() - base).abs());
    }
    vec![
        check("pearson-hand-value", (r - 0.8).abs() <= 1e-12, format!("pearson = {r:.12} (target 0.8)")),
        check("spearman-monotone", max_gap <= 1e-12, format!("max change over 100 vectors {max_gap:e}")),
    ]
}

// ---- term selection --------------------------------------------------------

type Corpus = Vec<(String, Vec<String>)>;

const LABELS: [&str; 5] = ["anger", "fear", "joy", "sadness", "trust"];

/// 5000 documents, 500 terms, the first 50 tied to one label each, plus ten
/// rare label-exclusive terms seen 1..=10 times.
fn planted_corpus() -> (Corpus, BTreeSet<(String, String)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let term = |i: usize| format!("w{i:03}");
    let mut docs = Vec::new();
    let mut anger_docs = 0;
    for d in 0..5000 {
        let label = LABELS[d % 5];
        let mut words: Vec<String> = (0..50)
            .filter(|i| LABELS[i % 5] == label && rng.random_bool(0.2))
            .map(term)
            .collect();
        words.extend((50..500).filter(|_| rng.random_bool(0.02)).map(term));
        if label == "anger" {
            // rare{j} lands in j anger documents
            words.extend((1..=10).filter(|j| anger_docs < *j).map(|j| format!("rare{j}")));
            anger_docs += 1;
        }
        if words.is_empty() {
            words.push(term(50 + d % 450));
        }
        words.shuffle(&mut rng);
        docs.push((words.join(" "), vec![format!("#{label}")]));
    }
    let planted = (0..50).map(|i| (LABELS[i % 5].to_string(), term(i))).collect();
    (docs, planted)
}

fn criterion_pmi() -> Vec<Check> {
    let (docs, planted) = planted_corpus();
    let stats = accumulate_stats(docs.iter().map(|(t, l)| (t.as_str(), l.iter())), CountMode::Document).unwrap();
    let config = SelectionConfig { mode: PmiMode::Normalized, ..SelectionConfig::default() };
    let selected: BTreeSet<(String, String)> = select_terms(&stats, &config)
        .into_iter()
        .flat_map(|(label, terms)| terms.into_iter().map(move |t| (label.clone(), t.term)))
        .collect();
    let rare_freqs: Vec<u64> = (1..=10).map(|j| stats.freq_w[&format!("rare{j}")]).collect();
    let rare_selected = selected.iter().filter(|(_, t)| t.starts_with("rare")).count();
    vec![
        check(
            "pmi-planted",
            selected == planted,
            format!("{} selected, {} planted, {} in common", selected.len(), planted.len(), selected.intersection(&planted).count()),
        ),
        check(
            "pmi-floor",
            rare_freqs == (1..=10).collect::<Vec<u64>>() && rare_selected == 0,
            format!("{rare_selected} of 10 terms with freq 1..=10 selected"),
        ),
    ]
}

// ---- quality control -------------------------------------------------------

/// Exact lockout probability under the sequential rule, by enumerating every
/// outcome sequence of `units` graded sub-answers.
fn exact_lockout(units: u32, error_rate: f64, policy: &LockoutPolicy) -> f64 {
    let mut total = 0.0;
    for pattern in 0u32..(1 << units) {
        let mut correct = 0;
        let mut locked = false;
        for step in 0..units {
            correct += pattern >> step & 1;
            let attempted = step + 1;
            locked |= attempted >= policy.min_gold && (correct as f64) < policy.threshold * attempted as f64;
        }
        if locked {
            let right = pattern.count_ones() as i32;
            total += (1.0 - error_rate).powi(right) * error_rate.powi(units as i32 - right);
        }
    }
    total
}

fn criterion_quality() -> Vec<Check> {
    let policy = LockoutPolicy::default();
    let units = 20;
    let exact = exact_lockout(units, 0.5, &policy);
    let mut records = BTreeMap::new();
    for a in 0..10_000u64 {
        let answers: Vec<bool> = GoldBehavior::with_stream(0.5, 1234, a).unwrap().take(units as usize).collect();
        let record = update_with_units(&AnnotatorRecord::new(format!("a{a}")), &answers, &policy);
        records.insert(record.annotator_id.clone(), record);
    }
    let observed = records.values().filter(|r| r.locked_out).count() as f64 / 10_000.0;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<Annotation> = (0..20_000)
        .map(|i| Annotation::new(i, format!("a{}", rng.random_range(0..200)), ItemId(0), ItemId(1)))
        .collect();
    let (kept, discarded) = filter_annotations(&rows, &records);
    let locked_rows = rows.iter().filter(|a| records[&a.annotator_id].locked_out).count();
    let all_gone = kept.iter().all(|a| !records[&a.annotator_id].locked_out) && discarded.len() == locked_rows;
    vec![
        check(
            "lockout-rate",
            (observed - exact).abs() <= 0.02,
            format!("observed {observed:.4} vs exact {exact:.4} (10 gold questions, 20 sub-answers)"),
        ),
        check("filter-locked", all_gone, format!("{} of {locked_rows} locked rows discarded", discarded.len())),
    ]
}

// ---- CLI round trip --------------------------------------------------------

fn pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let terms: String = (0..300).map(|i| format!("word{i}\n")).collect();
    std::fs::write(dir.join("items.txt"), terms).unwrap();
    let steps: [&[&str]; 4] = [
        &["--seed", "42", "--out", "design.tsv", "design", "--items", "items.txt"],
        &["--seed", "7", "--out", "ann.csv", "simulate", "--design", "design.tsv", "--items", "items.txt", "--model-out", "model.tsv", "--noise-sd", "0.1"],
        &["--out", "lexicon.tsv", "score", "--design", "design.tsv", "--items", "items.txt", "--annotations", "ann.csv"],
        &["--seed", "3", "--out", "shr.tsv", "shr", "--design", "design.tsv", "--annotations", "ann.csv", "--trials", "25"],
    ];
    for args in steps {
        let out = Command::new(env!("CARGO_BIN_EXE_bwslex")).current_dir(dir).args(args).output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    ["design.tsv", "model.tsv", "ann.csv", "lexicon.tsv", "lexicon.tsv.hist.tsv", "shr.tsv"]
        .iter()
        .map(|name| (name.to_string(), std::fs::read(dir.join(name)).unwrap()))
        .collect()
}

fn criterion_cli() -> Vec<Check> {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline(a.path());
    let second = pipeline(b.path());
    let differing: Vec<&str> = first.iter().zip(&second).filter(|(x, y)| x.1 != y.1).map(|(x, _)| x.0.as_str()).collect();

    let read = |name: &str| std::fs::read_to_string(a.path().join(name)).unwrap();
    let items = parse_items(&read("items.txt")).unwrap();
    let design = parse_design(&read("design.tsv"), Some(&items)).unwrap();
    let table = count_scores(&design, &parse_annotations(&read("ann.csv")).unwrap()).unwrap();
    let in_process: String = rank_items(&table, &items)
        .into_iter()
        .map(|(id, s)| format!("{}\t{s:.3}\n", items.surface(id).unwrap()))
        .collect();
    let lexicon = read("lexicon.tsv");
    let three_decimals = lexicon.lines().all(|l| {
        let score = l.split('\t').nth(1).unwrap();
        score.len() == 5 && score.as_bytes()[1] == b'.' && score.parse::<f64>().is_ok()
    });
    vec![
        check("cli-deterministic", differing.is_empty(), format!("{} artifacts, differing: {differing:?}", first.len())),
        check("cli-matches-library", lexicon == in_process, format!("{} lexicon rows", lexicon.lines().count())),
        check("cli-three-decimals", three_decimals, "every score has the form d.ddd"),
    ]
}

#[test]
fn acceptance() {
    let criteria: Vec<(&str, Vec<Check>)> = vec![
        ("design constraints", criterion_design()),
        ("scoring oracle equivalence", criterion_scoring()),
        ("pair inference", criterion_pairs()),
        ("recovery under simulated noise", criterion_recovery()),
        ("split-half reliability", criterion_shr()),
        ("correlation statistics", criterion_correlation()),
        ("PMI term selection", criterion_pmi()),
        ("gold lockout and filtering", criterion_quality()),
        ("CLI round trip", criterion_cli()),
    ];
    let mut unexpected = Vec::new();
    for (name, checks) in &criteria {
        let pass = checks.iter().all(|c| c.pass);
        let details: Vec<String> = checks
            .iter()
            .map(|c| format!("{}{}: {}", if c.pass { "" } else { "FAILED " }, c.id, c.detail))
            .collect();
        println!("{} {name} | {}", if pass { "PASS" } else { "FAIL" }, details.join("; "));
        for c in checks {
            if c.pass == KNOWN_GAPS.contains(&c.id) {
                unexpected.push(c.id);
            }
        }
    }
    assert!(unexpected.is_empty(), "checks not in their expected state: {unexpected:?}");
}
