//! `bwslex`: command-line pipeline for best-worst scaling lexicons.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::collections::BTreeMap;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use bwslex::design::{generate_design, validate_design, DesignConfig, TupleDesign};
use bwslex::formats::{
    parse_annotations, parse_corpus, parse_design, parse_gold, parse_items, parse_label_terms, parse_model,
    write_annotations, write_design, write_histogram, write_lexicon, write_model, write_selection, write_shr,
};
use bwslex::item::{ItemId, ItemSet};
use bwslex::quality::LockoutPolicy;
use bwslex::reliability::{split_half_reliability, ShrConfig};
use bwslex::scoring::{count_scores, histogram, rank_items};
use bwslex::simannotator::{simulate_annotations, LatentIntensityModel};
use bwslex::termselect::{accumulate_stats, merge_sources, select_terms, CountMode, PmiMode, SelectionConfig};
use bwslex_service::{replay, AnnotationService, AppState, EventLog, ServiceConfig, TemplateStore};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "bwslex", version, about = "Build affect-intensity lexicons with best-worst scaling")]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file. Defaults to standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a tuple design from a term list.
    Design {
        #[arg(long)]
        items: PathBuf,
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        max_overlap: usize,
        /// Fail instead of padding when N*k is not a multiple of n.
        #[arg(long)]
        strict_balance: bool,
    },
    /// Check a design file against its constraints.
    Validate {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        items: Option<PathBuf>,
    },
    /// Count best-worst scores and write the lexicon.
    Score {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        /// Histogram output. Defaults to `<out>.hist.tsv` when `--out` is set.
        #[arg(long)]
        histogram: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        bin_width: f64,
        #[arg(long)]
        full_precision: bool,
    },
    /// Average split-half reliability.
    Shr {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Select label-associated terms from a labeled corpus.
    Pmi {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 11)]
        min_freq: u64,
        #[arg(long, default_value_t = 1.0)]
        threshold: f64,
        /// Multiply the ratio by the document count.
        #[arg(long)]
        normalized: bool,
        #[arg(long, value_enum, default_value_t = CountModeArg::Document)]
        count_mode: CountModeArg,
        /// Existing `label<TAB>term` lexicon to merge in.
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Simulate annotators from latent intensities.
    Simulate {
        #[arg(long)]
        design: PathBuf,
        /// `item_id<TAB>intensity` file.
        #[arg(long, required_unless_present = "items", conflicts_with = "items")]
        model: Option<PathBuf>,
        /// Draw intensities for these items instead of reading a model.
        #[arg(long)]
        items: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Spread::Uniform, requires = "items")]
        spread: Spread,
        /// Where to save drawn intensities.
        #[arg(long, requires = "items")]
        model_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        noise_sd: f64,
        #[arg(long, default_value_t = 4)]
        per_tuple: usize,
    },
    /// Run the annotation service.
    Serve {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long, default_value = "anger")]
        dimension: String,
        /// Directory of extra instruction templates (`*.json`).
        #[arg(long)]
        templates: Option<PathBuf>,
        /// Append-only response log, replayed on start.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, default_value_t = 4)]
        per_tuple: usize,
        #[arg(long, default_value_t = 0.05)]
        gold_rate: f64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CountModeArg {
    Document,
    Token,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Spread {
    /// Independent uniform draws on [0, 1].
    Uniform,
    /// Evenly spaced over [0, 1] in item order.
    Even,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Writes via a temporary file in the same directory, then renames.
fn write_atomic(path: &Path, contents: &str) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn emit(out: Option<&Path>, contents: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => write_atomic(path, contents),
        None => {
            std::io::stdout().write_all(contents.as_bytes())?;
            Ok(())
        }
    }
}

fn load_items(path: &Path) -> anyhow::Result<ItemSet> {
    let items = parse_items(&read(path)?).with_context(|| format!("items file {}", path.display()))?;
    if items.is_empty() {
        bail!("items file {} is empty", path.display());
    }
    Ok(items)
}

fn load_design(path: &Path, items: Option<&ItemSet>) -> anyhow::Result<TupleDesign> {
    parse_design(&read(path)?, items).with_context(|| format!("design file {}", path.display()))
}

fn load_annotations(path: &Path) -> anyhow::Result<Vec<bwslex::Annotation>> {
    parse_annotations(&read(path)?).with_context(|| format!("annotations file {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Design { items, n, k, max_overlap, strict_balance } => {
            let items = load_items(&items)?;
            let config = DesignConfig {
                tuple_size: n,
                appearances_per_item: k,
                rng_seed: cli.seed,
                max_overlap,
                allow_relaxed_balance: !strict_balance,
                ..DesignConfig::default()
            };
            let design = generate_design(&items, &config)?;
            emit(out, &write_design(&design))?;
            let balance = design.balance();
            eprintln!(
                "{} tuples over {} items; appearances per item {}..={}{}",
                design.len(),
                items.len(),
                balance.min_count(),
                balance.max_count(),
                if balance.relaxed { " (relaxed)" } else { "" }
            );
        }
        Command::Validate { design, items } => {
            let items = items.as_deref().map(load_items).transpose()?;
            let design = load_design(&design, items.as_ref())?;
            let report = validate_design(&design);
            let mut text = String::new();
            for v in &report.violations {
                text.push_str(&format!("{v}\n"));
            }
            if report.is_valid() {
                text.push_str(&format!("valid: {} tuples\n", design.len()));
            }
            emit(out, &text)?;
            if !report.is_valid() {
                bail!("design has {} violation(s)", report.violations.len());
            }
        }
        Command::Score { design, items, annotations, histogram: hist_path, bin_width, full_precision } => {
            let items = load_items(&items)?;
            let design = load_design(&design, Some(&items))?;
            let annotations = load_annotations(&annotations)?;
            let table = count_scores(&design, &annotations).map_err(|e| match e.annotation_index() {
                // header is line 1
                Some(i) => anyhow!("annotations line {}: {e}", i + 2),
                None => anyhow!(e),
            })?;
            let rows: Vec<(String, f64)> = rank_items(&table, &items)
                .into_iter()
                .map(|(id, score)| (items.surface(id).unwrap_or_default().to_string(), score))
                .collect();
            emit(out, &write_lexicon(&rows, full_precision))?;
            let hist_path = hist_path.or_else(|| out.map(|p| PathBuf::from(format!("{}.hist.tsv", p.display()))));
            if let Some(path) = hist_path {
                write_atomic(&path, &write_histogram(&histogram(&table, bin_width)?, bin_width))?;
            }
            let unscored = table.unscored().count();
            if unscored > 0 {
                eprintln!("{unscored} item(s) had no annotations and are not in the lexicon");
            }
        }
        Command::Shr { design, annotations, trials } => {
            let design = load_design(&design, None)?;
            let annotations = load_annotations(&annotations)?;
            let report = split_half_reliability(&design, &annotations, &ShrConfig { trials, rng_seed: cli.seed })?;
            match out {
                Some(path) => {
                    write_atomic(path, &write_shr(&report))?;
                    println!("mean_pearson\t{:.6}", report.mean_pearson);
                    println!("mean_spearman\t{:.6}", report.mean_spearman);
                }
                None => print!("{}", write_shr(&report)),
            }
        }
        Command::Pmi { corpus, min_freq, threshold, normalized, count_mode, lexicon } => {
            let docs = parse_corpus(&read(&corpus)?).with_context(|| format!("corpus file {}", corpus.display()))?;
            let mode = match count_mode {
                CountModeArg::Document => CountMode::Document,
                CountModeArg::Token => CountMode::Token,
            };
            let stats = accumulate_stats(docs.iter().map(|(t, l)| (t.as_str(), l.iter())), mode)?;
            let config = SelectionConfig {
                min_term_freq: min_freq,
                pmi_threshold: threshold,
                mode: if normalized { PmiMode::Normalized } else { PmiMode::Literal },
                ..SelectionConfig::default()
            };
            let selected = select_terms(&stats, &config);
            let existing = match lexicon {
                Some(path) => {
                    parse_label_terms(&read(&path)?).with_context(|| format!("lexicon file {}", path.display()))?
                }
                None => BTreeMap::new(),
            };
            emit(out, &write_selection(&merge_sources(&selected, &existing)))?;
        }
        Command::Simulate { design, model, items, spread, model_out, noise_sd, per_tuple } => {
            let design = load_design(&design, None)?;
            let model = match (model, items) {
                (Some(path), _) => {
                    let intensities =
                        parse_model(&read(&path)?).with_context(|| format!("model file {}", path.display()))?;
                    LatentIntensityModel::new(intensities, noise_sd, cli.seed)?
                }
                (None, Some(path)) => {
                    let items = load_items(&path)?;
                    let model = match spread {
                        Spread::Uniform => LatentIntensityModel::uniform(items.ids(), noise_sd, cli.seed)?,
                        Spread::Even => {
                            let last = items.len().saturating_sub(1).max(1) as f64;
                            let intensities: BTreeMap<ItemId, f64> =
                                items.ids().into_iter().enumerate().map(|(i, id)| (id, i as f64 / last)).collect();
                            LatentIntensityModel::new(intensities, noise_sd, cli.seed)?
                        }
                    };
                    if let Some(path) = model_out {
                        write_atomic(&path, &write_model(model.intensities()))?;
                    }
                    model
                }
                (None, None) => unreachable!("clap requires --model or --items"),
            };
            let annotations = simulate_annotations(&design, &model, per_tuple)?;
            emit(out, &write_annotations(&annotations))?;
        }
        Command::Serve { design, items, gold, dimension, templates, log, addr, per_tuple, gold_rate } => {
            tracing_subscriber::fmt().with_writer(std::io::stderr).init();
            let items = load_items(&items)?;
            let design = load_design(&design, Some(&items))?;
            let gold = match gold {
                Some(path) => parse_gold(&read(&path)?).with_context(|| format!("gold file {}", path.display()))?,
                None => Vec::new(),
            };
            let mut store = TemplateStore::builtin();
            if let Some(dir) = templates {
                store.load_dir(&dir)?;
            }
            if store.get(&dimension).is_none() {
                eprintln!("warning: no instruction template for `{dimension}`; sessions will be refused");
            }
            let config = ServiceConfig {
                dimension,
                per_tuple_target: per_tuple,
                gold_rate,
                policy: LockoutPolicy::default(),
                seed: cli.seed,
            };
            let mut service = AnnotationService::new(design, items, gold, store, config)?;
            let event_log = match log {
                Some(path) => {
                    let (event_log, events) = EventLog::open(&path)?;
                    replay(&mut service, &events)?;
                    eprintln!("replayed {} event(s) from {}", events.len(), path.display());
                    event_log
                }
                None => EventLog::in_memory(),
            };
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(bwslex_service::serve(AppState::new(service, event_log), addr))?;
        }
    }
    Ok(())
}
