use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fosgraph_core::classify::{write_results, Classifier, Selection, Status, Strategy};
use fosgraph_core::evaluate::{self, Prediction};
use fosgraph_core::graph::{Layer, MultilayerGraph, NodeKind, NormMode};
use fosgraph_core::ingest::{self, BuildConfig};
use fosgraph_core::propagate::{self, FosWeightTable, PropagationConfig};
use fosgraph_core::taxonomy::{self, ExclusionList, Taxonomy, MAX_LEVEL};
use fosgraph_core::venue::{NormalizerConfig, VenueAliasMap, VenueNormalizer, VenueResolver};
use fosgraph_core::ErrorKind;

/// Field-of-science classification from venue citation metadata.
#[derive(Debug, Parser)]
#[command(name = "fosgraph", version)]
struct Cli {
    /// Worker threads (0 = one per core)
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Stopword list replacing the built-in one
    #[arg(long, global = true)]
    stopwords: Option<PathBuf>,
    /// Boilerplate phrase list replacing the built-in one
    #[arg(long, global = true)]
    boilerplate: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the venue graph from publication records and seed venues
    Build(BuildArgs),
    /// Propagate FoS labels from seed venues and export the weight table
    Propagate(PropagateArgs),
    /// Classify publication records
    Classify(ClassifyArgs),
    /// Score classification results against gold labels
    Evaluate(EvaluateArgs),
    /// Print node and edge counts of a graph
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// Publication records, one JSON object per line
    #[arg(long)]
    records: PathBuf,
    /// FoS taxonomy (id, name, level, parent)
    #[arg(long)]
    taxonomy: PathBuf,
    /// Seed venues (journal name, FoS id, optional weight)
    #[arg(long)]
    seeds: PathBuf,
    /// Output graph file; the alias map is written next to it
    #[arg(long)]
    graph: PathBuf,
    /// Keep venue pairs cited strictly more often than this
    #[arg(long, default_value_t = 10.0)]
    threshold: f64,
    /// Drop references older than this many years
    #[arg(long, default_value_t = 10)]
    window: u32,
    /// Venue citation weight normalization: sum or max
    #[arg(long, default_value_t = NormMode::Sum)]
    norm_mode: NormMode,
    /// Venues never used as seeds, one name per line
    #[arg(long)]
    exclude: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PropagateArgs {
    /// Graph built by `build`
    #[arg(long)]
    graph: PathBuf,
    /// Output venue-FoS weight table
    #[arg(long)]
    table: PathBuf,
    /// Propagation rounds
    #[arg(long, default_value_t = 2)]
    rounds: u32,
    /// FoS labels kept per venue and level
    #[arg(long, default_value_t = 5)]
    keep_top: usize,
    /// Drop FoS weights below this after each round
    #[arg(long, default_value_t = 1e-4)]
    min_fos_weight: f64,
    /// Also write the coverage report here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    /// Graph built by `build`
    #[arg(long)]
    graph: PathBuf,
    /// Weight table written by `propagate`
    #[arg(long)]
    table: PathBuf,
    /// Publication records to classify
    #[arg(long)]
    records: PathBuf,
    /// Output results, one JSON object per line
    #[arg(long)]
    out: PathBuf,
    /// pub, ref or citref
    #[arg(long, default_value = "ref", value_parser = parse_strategy)]
    strategy: Strategy,
    /// Taxonomy level to classify at
    #[arg(long, default_value_t = 3)]
    level: u8,
    /// Number of labels returned [default: 1]
    #[arg(long, conflicts_with = "min_score")]
    top_t: Option<usize>,
    /// Return every label scoring above this instead of the top T
    #[arg(long)]
    min_score: Option<f64>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Results written by `classify`
    #[arg(long)]
    results: PathBuf,
    /// Gold labels (publication id, FoS id)
    #[arg(long)]
    gold: PathBuf,
    /// Output metrics report
    #[arg(long)]
    out: PathBuf,
    /// Credit the gold label when it is among the top T predictions
    #[arg(long, default_value_t = 1)]
    top_t: usize,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    graph: PathBuf,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse()
        .map_err(|e: fosgraph_core::classify::ClassifyError| e.to_string())
}

struct Failure {
    code: u8,
    message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl<E: Into<fosgraph_core::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let e = e.into();
        let code = match e.kind() {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Io => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn io_failure(context: &str, path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 3,
        message: format!("{context} {}: {e}", path.display()),
    }
}

fn require(kind: &str, path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure {
            code: 3,
            message: format!("{kind} file not found: {}", path.display()),
        })
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_failure("cannot create", path, e))
}

fn alias_path(graph: &Path) -> PathBuf {
    let mut s = graph.as_os_str().to_owned();
    s.push(".aliases.tsv");
    PathBuf::from(s)
}

fn normalizer(cli: &Cli) -> Result<VenueNormalizer, Failure> {
    let mut config = NormalizerConfig::default();
    if let Some(p) = &cli.stopwords {
        require("stopword", p)?;
        config = config.with_stopword_file(p)?;
    }
    if let Some(p) = &cli.boilerplate {
        require("boilerplate", p)?;
        config = config.with_boilerplate_file(p)?;
    }
    Ok(VenueNormalizer::new(config)?)
}

fn print_json(value: &serde_json::Value) {
    // a closed pipe on stdout is not worth failing over
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(value).expect("json value"));
}

fn build(cli: &Cli, args: &BuildArgs) -> Result<(), Failure> {
    require("records", &args.records)?;
    require("taxonomy", &args.taxonomy)?;
    require("seed", &args.seeds)?;
    if !args.threshold.is_finite() || args.threshold < 0.0 {
        return Err(usage(format!(
            "--threshold must be a non-negative number, got {}",
            args.threshold
        )));
    }
    let normalizer = normalizer(cli)?;
    let tax = Taxonomy::load(&args.taxonomy)?;
    let exclusions = match &args.exclude {
        Some(p) => {
            require("exclusion", p)?;
            ExclusionList::load(p, &normalizer)?
        }
        None => ExclusionList::new(),
    };
    let mut aliases = VenueAliasMap::new();
    let seeds = taxonomy::load_seeds(&args.seeds, &tax, &normalizer, &mut aliases, &exclusions)?;
    let parsed = ingest::parse_records(&args.records)?;
    let config = BuildConfig {
        threshold: args.threshold,
        window: args.window,
        norm_mode: args.norm_mode,
    };
    let (graph, mut stats) = ingest::build_graph(
        &parsed.records,
        &tax,
        &seeds.assignments,
        &normalizer,
        &mut aliases,
        &config,
    )?;
    stats.records_read += parsed.warnings.len();
    stats.records_skipped += parsed.warnings.len();
    graph.save(&args.graph)?;
    aliases.save(alias_path(&args.graph))?;
    log::info!(
        "graph: {} venues, {} venue edges kept of {}",
        stats.distinct_venues,
        stats.edges_surviving,
        stats.raw_edge_count
    );
    print_json(&serde_json::json!({
        "ingest": stats,
        "seed_rows_skipped": seeds.skipped.len(),
        "graph": graph_summary(&graph),
    }));
    Ok(())
}

fn graph_summary(graph: &MultilayerGraph) -> serde_json::Value {
    let kinds = [NodeKind::Publication, NodeKind::Venue, NodeKind::FosLabel];
    let nodes: serde_json::Map<String, serde_json::Value> = kinds
        .iter()
        .map(|k| (k.tag().to_owned(), graph.nodes_of_kind(*k).count().into()))
        .collect();
    let edges: serde_json::Map<String, serde_json::Value> = graph
        .layers()
        .map(|l| (l.to_string(), graph.edge_count(l).into()))
        .collect();
    serde_json::json!({ "nodes": nodes, "edges": edges })
}

fn load_graph(path: &Path) -> Result<(MultilayerGraph, Taxonomy), Failure> {
    require("graph", path)?;
    let graph = MultilayerGraph::load(path)?;
    let tax = Taxonomy::from_graph(&graph)?;
    Ok((graph, tax))
}

fn propagate_cmd(args: &PropagateArgs) -> Result<(), Failure> {
    let config = PropagationConfig {
        rounds: args.rounds,
        keep_top: args.keep_top,
        min_fos_weight: args.min_fos_weight,
        ..PropagationConfig::default()
    };
    config.validate()?;
    let (mut graph, tax) = load_graph(&args.graph)?;
    let seeds = propagate::seeds_from_graph(&graph);
    let outcome = propagate::run(&mut graph, &tax, &seeds, &config)?;
    let mut out = create(&args.table)?;
    outcome.table.write_to(&mut out)?;
    out.flush().map_err(|e| io_failure("cannot write", &args.table, e))?;
    let report = serde_json::json!({ "config": config, "coverage": outcome });
    if let Some(path) = &args.out {
        let mut f = create(path)?;
        writeln!(f, "{}", serde_json::to_string_pretty(&report).expect("json value"))
            .and_then(|_| f.flush())
            .map_err(|e| io_failure("cannot write", path, e))?;
    }
    print_json(&report);
    Ok(())
}

fn classify_cmd(cli: &Cli, args: &ClassifyArgs) -> Result<(), Failure> {
    if !(1..=MAX_LEVEL).contains(&args.level) {
        return Err(usage(format!("--level must be between 1 and {MAX_LEVEL}")));
    }
    let selection = Selection::from_options(args.top_t, args.min_score)?;
    let (_, tax) = load_graph(&args.graph)?;
    require("table", &args.table)?;
    require("records", &args.records)?;
    let table = FosWeightTable::load(&args.table)?;
    let aliases_file = alias_path(&args.graph);
    let aliases = if aliases_file.is_file() {
        VenueAliasMap::load(&aliases_file)?
    } else {
        log::warn!(
            "no alias map at {}; resolving venue names by rule only",
            aliases_file.display()
        );
        VenueAliasMap::new()
    };
    let resolver = VenueResolver::new(normalizer(cli)?, aliases);
    let records = ingest::parse_records(&args.records)?.records;
    let classifier = Classifier::new(&resolver, &table, &tax);
    let results = classifier.classify_records(&records, args.strategy, args.level, selection)?;
    let mut out = create(&args.out)?;
    write_results(&results, &mut out)?;
    out.flush().map_err(|e| io_failure("cannot write", &args.out, e))?;
    let unclassifiable = results.iter().filter(|r| r.status == Status::Unclassifiable).count();
    if unclassifiable > 0 {
        log::warn!("{unclassifiable} of {} records could not be classified", results.len());
    }
    print_json(&serde_json::json!({
        "records": results.len(),
        "unclassifiable": unclassifiable,
        "strategy": args.strategy,
        "level": args.level,
    }));
    Ok(())
}

fn evaluate_cmd(args: &EvaluateArgs) -> Result<(), Failure> {
    require("results", &args.results)?;
    require("gold", &args.gold)?;
    let predictions: Vec<Prediction> = evaluate::load_predictions(&args.results)?;
    let gold = evaluate::load_gold(&args.gold)?;
    let metrics = evaluate::evaluate(&predictions, &gold, args.top_t)?;
    let mut out = create(&args.out)?;
    evaluate::write_report(&metrics, &mut out)?;
    out.flush().map_err(|e| io_failure("cannot write", &args.out, e))?;
    print_json(&serde_json::json!({
        "k": metrics.k,
        "macro_f1": metrics.macro_f1,
        "micro_f1": metrics.micro_f1,
        "weighted_macro_f1": metrics.weighted_macro_f1,
        "total": metrics.total,
        "correct": metrics.correct,
    }));
    Ok(())
}

fn stats_cmd(args: &StatsArgs) -> Result<(), Failure> {
    let (graph, tax) = load_graph(&args.graph)?;
    let mut labeled = [0usize; MAX_LEVEL as usize];
    for (v, _) in graph.nodes_of_kind(NodeKind::Venue) {
        let mut seen = [false; MAX_LEVEL as usize];
        for (f, _) in graph.out_edges(v, Layer::VenueFos) {
            if let Some(level) = tax.level_of(graph.key(f)) {
                seen[level as usize - 1] = true;
            }
        }
        for (count, hit) in labeled.iter_mut().zip(seen) {
            *count += usize::from(hit);
        }
    }
    print_json(&serde_json::json!({
        "graph": graph_summary(&graph),
        "taxonomy_levels": tax.level_counts(),
        "labeled_venues": labeled,
        "provenance": graph.provenance(),
    }));
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Build(a) => build(cli, a),
        Command::Propagate(a) => propagate_cmd(a),
        Command::Classify(a) => classify_cmd(cli, a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Stats(a) => stats_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
