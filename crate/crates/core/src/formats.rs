//! Plain-text file formats.
//!
//! | file        | layout                                                        |
//! |-------------|---------------------------------------------------------------|
//! | items       | one term per line, id = 0-based line number                   |
//! | design      | `key=value` header lines, then one tab-separated tuple a line |
//! | annotations | CSV `tuple_index,annotator_id,best_id,worst_id,timestamp`     |
//! | gold        | CSV `tuple_index,expected_best,expected_worst`                |
//! | model       | TSV `item_id<TAB>true_intensity`                              |
//! | corpus      | `text<TAB>label[,label...]`                                   |
//! | lexicon     | TSV `term<TAB>score`                                          |

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::design::{DesignConfig, TupleDesign};
use crate::item::{ItemId, ItemSet};
use crate::quality::GoldQuestion;
use crate::reliability::ShrReport;
use crate::scoring::{Annotation, HistogramBin};
use crate::termselect::MergedTerm;

pub const ANNOTATION_HEADER: &str = "tuple_index,annotator_id,best_id,worst_id,timestamp";
pub const GOLD_HEADER: &str = "tuple_index,expected_best,expected_worst";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn parse_err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse { line, message: message.into() }
}

/// Reads a term list. Blank trailing lines are ignored; a blank line in the
/// middle is an error since it would shift later ids.
pub fn parse_items(text: &str) -> Result<ItemSet, FormatError> {
    let lines: Vec<&str> = text.lines().collect();
    let end = lines.iter().rposition(|l| !l.trim().is_empty()).map_or(0, |p| p + 1);
    let mut terms = Vec::with_capacity(end);
    for (i, line) in lines[..end].iter().enumerate() {
        let term = line.trim_end_matches('\r');
        if term.trim().is_empty() {
            return Err(parse_err(i + 1, "empty term"));
        }
        terms.push(term.to_string());
    }
    ItemSet::from_terms(terms).map_err(|e| FormatError::Invalid(e.to_string()))
}

pub fn write_design(design: &TupleDesign) -> String {
    let config = design.config();
    let mut out = String::new();
    let _ = writeln!(out, "n={}", config.tuple_size);
    let _ = writeln!(out, "k={}", config.appearances_per_item);
    let _ = writeln!(out, "seed={}", config.rng_seed);
    let _ = writeln!(out, "max_overlap={}", config.max_overlap);
    let _ = writeln!(out, "relaxed_balance={}", design.balance().relaxed);
    for tuple in design.tuples() {
        let ids: Vec<String> = tuple.iter().map(ItemId::to_string).collect();
        out.push_str(&ids.join("\t"));
        out.push('\n');
    }
    out
}

/// Parses a design file. `items`, when given, supplies the item universe and
/// is checked against every id in the tuples.
pub fn parse_design(text: &str, items: Option<&ItemSet>) -> Result<TupleDesign, FormatError> {
    let mut config = DesignConfig::default();
    let mut relaxed = false;
    let mut tuples = Vec::new();
    let mut in_header = true;
    let mut seen = [false; 5];
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if in_header {
            if let Some((key, value)) = line.split_once('=') {
                let value = value.trim();
                let bad = |_| parse_err(line_no, format!("bad value for {key}: {value:?}"));
                let slot = match key.trim() {
                    "n" => {
                        config.tuple_size = value.parse().map_err(bad)?;
                        0
                    }
                    "k" => {
                        config.appearances_per_item = value.parse().map_err(bad)?;
                        1
                    }
                    "seed" => {
                        config.rng_seed = value.parse().map_err(bad)?;
                        2
                    }
                    "max_overlap" => {
                        config.max_overlap = value.parse().map_err(bad)?;
                        3
                    }
                    "relaxed_balance" => {
                        relaxed = value
                            .parse()
                            .map_err(|_| parse_err(line_no, format!("bad value for relaxed_balance: {value:?}")))?;
                        4
                    }
                    other => return Err(parse_err(line_no, format!("unknown header key {other:?}"))),
                };
                seen[slot] = true;
                continue;
            }
            in_header = false;
            if let Some(missing) = ["n", "k", "seed", "max_overlap", "relaxed_balance"]
                .iter()
                .zip(seen)
                .find(|(_, s)| !s)
            {
                return Err(parse_err(line_no, format!("header is missing {}", missing.0)));
            }
        }
        let tuple: Vec<ItemId> = line
            .split('\t')
            .map(|f| f.parse::<ItemId>().map_err(|_| parse_err(line_no, format!("bad item id {f:?}"))))
            .collect::<Result<_, _>>()?;
        if tuple.len() != config.tuple_size {
            return Err(parse_err(
                line_no,
                format!("tuple has {} items, header says n={}", tuple.len(), config.tuple_size),
            ));
        }
        if let Some(items) = items {
            if let Some(unknown) = tuple.iter().find(|id| !items.contains(**id)) {
                return Err(parse_err(line_no, format!("item id {unknown} is not in the items file")));
            }
        }
        tuples.push(tuple);
    }
    if in_header && seen.iter().any(|s| !s) {
        return Err(FormatError::Invalid("design file has an incomplete header".into()));
    }
    let universe: Vec<ItemId> = items.map(ItemSet::ids).unwrap_or_default();
    Ok(TupleDesign::from_parts(tuples, config, relaxed, universe))
}

pub fn write_annotations(annotations: &[Annotation]) -> String {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for a in annotations {
        let timestamp = a.timestamp.map(|t| t.to_string()).unwrap_or_default();
        writer
            .write_record([
                a.tuple_index.to_string(),
                a.annotator_id.clone(),
                a.best.to_string(),
                a.worst.to_string(),
                timestamp,
            ])
            .expect("writing to memory");
    }
    let body = String::from_utf8(writer.into_inner().expect("flush to memory")).expect("utf-8 csv");
    format!("{ANNOTATION_HEADER}\n{body}")
}

/// Parses annotation CSV. Error line numbers count the header as line 1.
pub fn parse_annotations(text: &str) -> Result<Vec<Annotation>, FormatError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let expected: Vec<&str> = ANNOTATION_HEADER.split(',').collect();
    let got: Vec<&str> = headers.iter().collect();
    if got != expected && got != expected[..4] {
        return Err(parse_err(1, format!("expected header {ANNOTATION_HEADER:?}")));
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        if record.len() < 4 || record.len() > 5 {
            return Err(parse_err(line, format!("expected 4 or 5 fields, got {}", record.len())));
        }
        let field = |j: usize, name: &str| -> Result<u64, FormatError> {
            record[j]
                .parse()
                .map_err(|_| parse_err(line, format!("bad {name} {:?}", &record[j])))
        };
        let timestamp = match record.get(4) {
            Some(t) if !t.is_empty() => {
                Some(t.parse().map_err(|_| parse_err(line, format!("bad timestamp {t:?}")))?)
            }
            _ => None,
        };
        out.push(Annotation {
            tuple_index: field(0, "tuple_index")? as usize,
            annotator_id: record[1].to_string(),
            best: ItemId(field(2, "best_id")? as u32),
            worst: ItemId(field(3, "worst_id")? as u32),
            timestamp,
        });
    }
    Ok(out)
}

pub fn write_gold(gold: &[GoldQuestion]) -> String {
    let mut out = format!("{GOLD_HEADER}\n");
    for g in gold {
        let _ = writeln!(out, "{},{},{}", g.tuple_index, g.expected_best, g.expected_worst);
    }
    out
}

pub fn parse_gold(text: &str) -> Result<Vec<GoldQuestion>, FormatError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == GOLD_HEADER => {}
        _ => return Err(parse_err(1, format!("expected header {GOLD_HEADER:?}"))),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(parse_err(i + 1, "expected 3 fields"));
        }
        let num = |s: &str| -> Result<u64, FormatError> {
            s.parse().map_err(|_| parse_err(i + 1, format!("bad number {s:?}")))
        };
        out.push(GoldQuestion {
            tuple_index: num(fields[0])? as usize,
            expected_best: ItemId(num(fields[1])? as u32),
            expected_worst: ItemId(num(fields[2])? as u32),
        });
    }
    Ok(out)
}

pub fn write_model(intensities: &BTreeMap<ItemId, f64>) -> String {
    let mut out = String::new();
    for (id, v) in intensities {
        let _ = writeln!(out, "{id}\t{v}");
    }
    out
}

pub fn parse_model(text: &str) -> Result<BTreeMap<ItemId, f64>, FormatError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, value) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(i + 1, "expected item_id<TAB>true_intensity"))?;
        let id: ItemId = id.parse().map_err(|_| parse_err(i + 1, format!("bad item id {id:?}")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| parse_err(i + 1, format!("bad intensity {value:?}")))?;
        if out.insert(id, value).is_some() {
            return Err(parse_err(i + 1, format!("duplicate item id {id}")));
        }
    }
    Ok(out)
}

/// One `(text, labels)` pair per non-blank line.
pub fn parse_corpus(text: &str) -> Result<Vec<(String, Vec<String>)>, FormatError> {
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (body, labels) = line
            .rsplit_once('\t')
            .ok_or_else(|| parse_err(i + 1, "expected text<TAB>label[,label...]"))?;
        let labels: Vec<String> = labels
            .split(',')
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        if labels.is_empty() {
            return Err(parse_err(i + 1, "document has no labels"));
        }
        if body.trim().is_empty() {
            return Err(parse_err(i + 1, "document has no text"));
        }
        docs.push((body.to_string(), labels));
    }
    Ok(docs)
}

/// Existing association lexicon: `label<TAB>term` per line.
pub fn parse_label_terms(text: &str) -> Result<BTreeMap<String, Vec<String>>, FormatError> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (label, term) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(i + 1, "expected label<TAB>term"))?;
        out.entry(crate::termselect::normalize_label(label))
            .or_default()
            .push(term.trim().to_lowercase());
    }
    Ok(out)
}

/// `term<TAB>score` rows with three decimals, or full precision.
pub fn write_lexicon(rows: &[(String, f64)], full_precision: bool) -> String {
    let mut out = String::new();
    for (term, score) in rows {
        if full_precision {
            let _ = writeln!(out, "{term}\t{score}");
        } else {
            let _ = writeln!(out, "{term}\t{score:.3}");
        }
    }
    out
}

pub fn parse_lexicon(text: &str) -> Result<Vec<(String, f64)>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (term, score) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(i + 1, "expected term<TAB>score"))?;
        let score = score
            .parse()
            .map_err(|_| parse_err(i + 1, format!("bad score {score:?}")))?;
        out.push((term.to_string(), score));
    }
    Ok(out)
}

pub fn write_histogram(bins: &[HistogramBin], bin_width: f64) -> String {
    let mut out = String::from("bin_start\tbin_end\tcount\n");
    for (i, bin) in bins.iter().enumerate() {
        let end = if i + 1 == bins.len() { 1.0 } else { bin.start + bin_width };
        let _ = writeln!(out, "{:.3}\t{:.3}\t{}", bin.start, end, bin.count);
    }
    out
}

/// `label<TAB>term<TAB>pmi<TAB>source`; lexicon-only terms carry `NA`.
pub fn write_selection(merged: &BTreeMap<String, Vec<MergedTerm>>) -> String {
    let mut out = String::from("label\tterm\tpmi\tsource\n");
    for (label, terms) in merged {
        for t in terms {
            let pmi = t.pmi.map_or_else(|| "NA".to_string(), |p| format!("{p:.6}"));
            let _ = writeln!(out, "{label}\t{}\t{pmi}\t{}", t.term, t.source.as_str());
        }
    }
    out
}

pub fn write_shr(report: &ShrReport) -> String {
    report.to_text()
}
