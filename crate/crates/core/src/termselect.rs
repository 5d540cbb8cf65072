//! Candidate-term selection from a label-annotated corpus.
//!
//! Each document carries one or more labels (e.g. emotion hashtags). Terms are
//! scored against each label with PMI:
//!
//! * `Literal`:    `log(freq(w,e) / (freq(w) * freq(e)))`
//! * `Normalized`: `log(freq(w,e) * D / (freq(w) * freq(e)))`, the usual
//!   probability form where `D` is the document count.
//!
//! In literal mode the ratio never exceeds one, so a positive threshold selects
//! nothing; the normalized form is the one that separates associated terms
//! from chance.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TermSelectError {
    #[error("document {0} has no text")]
    EmptyDocument(usize),
    #[error("document {0} has no labels")]
    NoLabels(usize),
    #[error("unknown term {0:?}")]
    UnknownTerm(String),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
}

/// How often a term is counted per document.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    /// At most once per document.
    #[default]
    Document,
    /// Once per token occurrence.
    Token,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PmiMode {
    #[default]
    Literal,
    Normalized,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledCorpusStats {
    pub freq_w: BTreeMap<String, u64>,
    pub freq_e: BTreeMap<String, u64>,
    pub freq_we: BTreeMap<(String, String), u64>,
    pub doc_count: u64,
}

impl LabeledCorpusStats {
    /// Adds another shard's counts. Merging is associative and commutative.
    pub fn merge(&mut self, other: &LabeledCorpusStats) {
        for (k, v) in &other.freq_w {
            *self.freq_w.entry(k.clone()).or_insert(0) += v;
        }
        for (k, v) in &other.freq_e {
            *self.freq_e.entry(k.clone()).or_insert(0) += v;
        }
        for (k, v) in &other.freq_we {
            *self.freq_we.entry(k.clone()).or_insert(0) += v;
        }
        self.doc_count += other.doc_count;
    }

    pub fn co_occurrence(&self, term: &str, label: &str) -> u64 {
        self.freq_we
            .get(&(term.to_string(), label.to_string()))
            .copied()
            .unwrap_or(0)
    }
}

/// Lowercased whitespace tokens. Hashtags, emoji and other social-media
/// tokens pass through unchanged.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Lowercased label with leading `#` marks removed.
pub fn normalize_label(label: &str) -> String {
    label.trim().trim_start_matches('#').to_lowercase()
}

pub fn accumulate_stats<'a, I, L>(documents: I, mode: CountMode) -> Result<LabeledCorpusStats, TermSelectError>
where
    I: IntoIterator<Item = (&'a str, L)>,
    L: IntoIterator,
    L::Item: AsRef<str>,
{
    let mut stats = LabeledCorpusStats::default();
    for (index, (text, labels)) in documents.into_iter().enumerate() {
        let labels: BTreeSet<String> = labels
            .into_iter()
            .map(|l| normalize_label(l.as_ref()))
            .filter(|l| !l.is_empty())
            .collect();
        if labels.is_empty() {
            return Err(TermSelectError::NoLabels(index));
        }
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(TermSelectError::EmptyDocument(index));
        }
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for token in tokens {
            *counts.entry(token).or_insert(0) += 1;
        }
        if mode == CountMode::Document {
            counts.values_mut().for_each(|c| *c = 1);
        }
        for label in &labels {
            *stats.freq_e.entry(label.clone()).or_insert(0) += 1;
        }
        for (term, count) in counts {
            for label in &labels {
                *stats.freq_we.entry((term.clone(), label.clone())).or_insert(0) += count;
            }
            *stats.freq_w.entry(term).or_insert(0) += count;
        }
        stats.doc_count += 1;
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Minimum term frequency, inclusive. 11 means "more than ten".
    pub min_term_freq: u64,
    /// Selected terms have PMI strictly above this.
    pub pmi_threshold: f64,
    pub log_base: f64,
    pub mode: PmiMode,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            min_term_freq: 11,
            pmi_threshold: 1.0,
            log_base: std::f64::consts::E,
            mode: PmiMode::Literal,
        }
    }
}

/// PMI of `term` with `label`; negative infinity when they never co-occur.
pub fn compute_pmi(
    stats: &LabeledCorpusStats,
    term: &str,
    label: &str,
    config: &SelectionConfig,
) -> Result<f64, TermSelectError> {
    let fw = *stats
        .freq_w
        .get(term)
        .filter(|&&f| f > 0)
        .ok_or_else(|| TermSelectError::UnknownTerm(term.to_string()))?;
    let fe = *stats
        .freq_e
        .get(label)
        .filter(|&&f| f > 0)
        .ok_or_else(|| TermSelectError::UnknownLabel(label.to_string()))?;
    Ok(pmi_from_counts(stats.co_occurrence(term, label), fw, fe, stats.doc_count, config))
}

fn pmi_from_counts(fwe: u64, fw: u64, fe: u64, docs: u64, config: &SelectionConfig) -> f64 {
    if fwe == 0 {
        return f64::NEG_INFINITY;
    }
    let mut ratio = fwe as f64 / (fw as f64 * fe as f64);
    if config.mode == PmiMode::Normalized {
        ratio *= docs as f64;
    }
    ratio.ln() / config.log_base.ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTerm {
    pub term: String,
    pub pmi: f64,
}

/// Per label, terms meeting the frequency floor with PMI above the threshold,
/// sorted by descending PMI then term.
pub fn select_terms(stats: &LabeledCorpusStats, config: &SelectionConfig) -> BTreeMap<String, Vec<ScoredTerm>> {
    let mut selected: BTreeMap<String, Vec<ScoredTerm>> = BTreeMap::new();
    for ((term, label), &fwe) in &stats.freq_we {
        let fw = stats.freq_w.get(term).copied().unwrap_or(0);
        if fw < config.min_term_freq {
            continue;
        }
        let fe = stats.freq_e.get(label).copied().unwrap_or(0);
        if fe == 0 {
            continue;
        }
        let pmi = pmi_from_counts(fwe, fw, fe, stats.doc_count, config);
        if pmi > config.pmi_threshold {
            selected
                .entry(label.clone())
                .or_default()
                .push(ScoredTerm { term: term.clone(), pmi });
        }
    }
    for terms in selected.values_mut() {
        terms.sort_by(|a, b| b.pmi.total_cmp(&a.pmi).then_with(|| a.term.cmp(&b.term)));
    }
    selected
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermSource {
    Corpus,
    Lexicon,
    Both,
}

impl TermSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            TermSource::Corpus => "corpus",
            TermSource::Lexicon => "lexicon",
            TermSource::Both => "both",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedTerm {
    pub term: String,
    pub source: TermSource,
    /// PMI when the term came from the corpus.
    pub pmi: Option<f64>,
}

/// Per-label union of corpus-selected terms and an existing lexicon. Corpus
/// terms keep their order; lexicon-only terms follow in lexicon order.
pub fn merge_sources(
    selected: &BTreeMap<String, Vec<ScoredTerm>>,
    lexicon: &BTreeMap<String, Vec<String>>,
) -> BTreeMap<String, Vec<MergedTerm>> {
    let labels: BTreeSet<&String> = selected.keys().chain(lexicon.keys()).collect();
    let mut merged = BTreeMap::new();
    for label in labels {
        let mut out: Vec<MergedTerm> = Vec::new();
        let mut position: HashMap<String, usize> = HashMap::new();
        for scored in selected.get(label).into_iter().flatten() {
            if position.contains_key(&scored.term) {
                continue;
            }
            position.insert(scored.term.clone(), out.len());
            out.push(MergedTerm {
                term: scored.term.clone(),
                source: TermSource::Corpus,
                pmi: Some(scored.pmi),
            });
        }
        for term in lexicon.get(label).into_iter().flatten() {
            match position.get(term) {
                Some(&i) => {
                    if out[i].source == TermSource::Corpus {
                        out[i].source = TermSource::Both;
                    }
                }
                None => {
                    position.insert(term.clone(), out.len());
                    out.push(MergedTerm { term: term.clone(), source: TermSource::Lexicon, pmi: None });
                }
            }
        }
        merged.insert(label.clone(), out);
    }
    merged
}
