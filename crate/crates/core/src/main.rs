//! Batch command line over the pipeline stages.
//!
//! Data goes to files (or standard out with `-`); logs go to standard
//! error; each command prints its report as JSON unless the data itself
//! occupies standard out. Exit codes: 0 success, 1 fatal input error,
//! 2 configuration error.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use wikisat::embedding::{EmbeddingTable, SectionWeights};
use wikisat::error::{Error, Result};
use wikisat::labeler::KeywordHierarchy;
use wikisat::manifest::{default_exclusions, BuildOptions, MergeMap, RegionFilter};
use wikisat::pipeline::{self, ArticleRecord, LabeledRecord, PipelineConfig, ScorerSetup, WeightsSpec};
use wikisat::tiles::RegimeConfig;
use wikisat::wikitext;

#[derive(Parser)]
#[command(
    name = "wikisat",
    version,
    about = "Turn a wiki XML export into a weakly labeled satellite-image dataset manifest"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads; 0 means one per core. Output never depends on this.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Silence all logging.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Stream a dump and keep the geolocated standard articles.
    Extract(ExtractArgs),
    /// Assign keyword labels; optionally cross-check the embedding scorer.
    Label(LabelArgs),
    /// Rank candidate labels per record with the embedding scorer.
    Score(ScoreArgs),
    /// Plan tile grids for every record, before any filtering.
    Plan(PlanArgs),
    /// Filter, merge and plan labeled records into a manifest.
    Build(BuildArgs),
    /// Summarize an existing manifest.
    Stats(StatsArgs),
    /// Run extract, label and build in one process.
    Run(RunArgs),
}

#[derive(Args)]
struct ExtractArgs {
    /// Dump XML path; `-` reads standard input.
    dump: Option<PathBuf>,
    /// Records output path; `-` writes standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Run configuration supplying defaults for omitted flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct LabelArgs {
    /// Extracted records path; `-` reads standard input.
    records: Option<PathBuf>,
    /// Labeled records output path; `-` writes standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keyword hierarchy file; the shipped hierarchy when omitted.
    #[arg(long)]
    hierarchy: Option<PathBuf>,
    /// Token vector table; enables the scorer cross-check.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Fixed section weights: title,body,infobox,categories,hyperlinks.
    #[arg(long, value_delimiter = ',', conflicts_with = "fit_resolution")]
    weights: Option<Vec<f64>>,
    /// Fit section weights on the keyword labels at this grid resolution.
    #[arg(long)]
    fit_resolution: Option<f64>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    /// Labeled records path; `-` reads standard input.
    records: Option<PathBuf>,
    /// Ranked output path; `-` writes standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    hierarchy: Option<PathBuf>,
    /// Token vector table; required here.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', conflicts_with = "fit_resolution")]
    weights: Option<Vec<f64>>,
    #[arg(long)]
    fit_resolution: Option<f64>,
    /// Candidates kept per record.
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    /// Labeled records path; `-` reads standard input.
    records: Option<PathBuf>,
    /// Plans output path; `-` writes standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Regime membership file; the shipped one when omitted.
    #[arg(long)]
    regimes: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BuildArgs {
    /// Labeled records path; `-` reads standard input.
    records: Option<PathBuf>,
    /// Manifest output path. Written atomically, so not `-`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    hierarchy: Option<PathBuf>,
    /// Fine-to-coarse class map; no merging when omitted.
    #[arg(long)]
    merge_map: Option<PathBuf>,
    /// Spatial filter file; no filtering when omitted.
    #[arg(long)]
    region: Option<PathBuf>,
    #[arg(long)]
    regimes: Option<PathBuf>,
    /// Replace the built-in keyword exclusions; repeatable.
    #[arg(long = "exclude")]
    exclude: Vec<String>,
    /// Drop the built-in keyword exclusions.
    #[arg(long, conflicts_with = "exclude")]
    no_exclusions: bool,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    /// Manifest path.
    manifest: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.quiet);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn init_logging(quiet: bool) {
    let mut builder =
        env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"));
    builder.target(env_logger::Target::Stderr);
    if quiet {
        builder.filter_level(log::LevelFilter::Off);
    }
    let _ = builder.try_init();
}

fn run(cli: Cli) -> Result<()> {
    if cli.workers != 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }
    match cli.command {
        Command::Extract(args) => run_extract(args),
        Command::Label(args) => run_label(args),
        Command::Score(args) => run_score(args),
        Command::Plan(args) => run_plan(args),
        Command::Build(args) => run_build(args),
        Command::Stats(args) => run_stats(args),
        Command::Run(args) => run_run(args),
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<Option<PipelineConfig>> {
    path.as_deref().map(PipelineConfig::load).transpose()
}

/// Explicit flag, else the config-derived value, else an error naming what
/// is missing.
fn resolve_path(
    explicit: Option<PathBuf>,
    config: Option<&PipelineConfig>,
    derive: impl Fn(&PipelineConfig) -> PathBuf,
    what: &str,
) -> Result<PathBuf> {
    explicit
        .or_else(|| config.map(derive))
        .ok_or_else(|| Error::Config(format!("{what} is required, via flag or --config")))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if path.as_os_str() == "-" {
        return Ok(());
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(())
}

/// Print the report to standard out unless the data stream occupies it;
/// optionally persist it as a file too.
fn emit_report(report: &impl Serialize, data_out: &Path, report_path: Option<&Path>) -> Result<()> {
    if let Some(path) = report_path {
        pipeline::write_report(path, report)?;
    }
    if data_out.as_os_str() != "-" {
        let text = serde_json::to_string_pretty(report)
            .map_err(|e| Error::Config(format!("report serialization: {e}")))?;
        println!("{text}");
    }
    Ok(())
}

fn load_hierarchy(path: Option<PathBuf>) -> Result<KeywordHierarchy> {
    match path {
        Some(path) => KeywordHierarchy::load(&path),
        None => Ok(KeywordHierarchy::shipped_default()),
    }
}

fn load_regimes(path: Option<PathBuf>) -> Result<RegimeConfig> {
    match path {
        Some(path) => RegimeConfig::load(&path),
        None => Ok(RegimeConfig::default()),
    }
}

fn weights_array(raw: Vec<f64>) -> Result<[f64; 5]> {
    <[f64; 5]>::try_from(raw)
        .map_err(|v| Error::Config(format!("--weights needs 5 values, got {}", v.len())))
}

/// Assemble the optional scorer from flags, falling back to config values.
fn scorer_from(
    embeddings: Option<PathBuf>,
    weights: Option<[f64; 5]>,
    fit_resolution: Option<f64>,
    config: Option<&PipelineConfig>,
) -> Result<Option<ScorerSetup>> {
    let embeddings = embeddings.or_else(|| config.and_then(|c| c.embeddings.clone()));
    let weights = weights.or_else(|| config.and_then(|c| c.weights));
    let fit_resolution = fit_resolution.or_else(|| config.and_then(|c| c.fit_resolution));
    let Some(path) = embeddings else {
        if weights.is_some() || fit_resolution.is_some() {
            return Err(Error::Config(
                "--weights/--fit-resolution make no sense without --embeddings".to_string(),
            ));
        }
        return Ok(None);
    };
    let table = EmbeddingTable::load(&path)?;
    let spec = match (weights, fit_resolution) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "weights and fit_resolution are mutually exclusive".to_string(),
            ))
        }
        (Some(raw), None) => WeightsSpec::Fixed(SectionWeights::new(raw)?),
        (None, Some(resolution)) => WeightsSpec::Fit { resolution },
        (None, None) => WeightsSpec::Fixed(SectionWeights::uniform()),
    };
    Ok(Some(ScorerSetup { table, spec }))
}

fn run_extract(args: ExtractArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let dump = resolve_path(args.dump, config.as_ref(), |c| c.dump.clone(), "dump path")?;
    let out = resolve_path(args.out, config.as_ref(), |c| c.out_dir.join("records.jsonl"), "--out")?;
    ensure_parent(&out)?;
    let report = pipeline::cmd_extract(pipeline::reader_for(&dump)?, pipeline::writer_for(&out)?)?;
    emit_report(&report, &out, args.report.as_deref())
}

fn run_label(args: LabelArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let records_path = resolve_path(
        args.records,
        config.as_ref(),
        |c| c.out_dir.join("records.jsonl"),
        "records path",
    )?;
    let out = resolve_path(args.out, config.as_ref(), |c| c.out_dir.join("labeled.jsonl"), "--out")?;
    let hierarchy =
        load_hierarchy(args.hierarchy.or_else(|| config.as_ref().and_then(|c| c.hierarchy.clone())))?;
    let scorer = scorer_from(
        args.embeddings,
        args.weights.map(weights_array).transpose()?,
        args.fit_resolution,
        config.as_ref(),
    )?;
    let records: Vec<ArticleRecord> = pipeline::read_jsonl(pipeline::reader_for(&records_path)?)?;
    ensure_parent(&out)?;
    let report = pipeline::cmd_label(records, &hierarchy, scorer.as_ref(), pipeline::writer_for(&out)?)?;
    emit_report(&report, &out, args.report.as_deref())
}

fn run_score(args: ScoreArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let records_path = resolve_path(
        args.records,
        config.as_ref(),
        |c| c.out_dir.join("labeled.jsonl"),
        "records path",
    )?;
    let out = resolve_path(args.out, config.as_ref(), |c| c.out_dir.join("ranked.jsonl"), "--out")?;
    let hierarchy =
        load_hierarchy(args.hierarchy.or_else(|| config.as_ref().and_then(|c| c.hierarchy.clone())))?;
    let scorer = scorer_from(
        args.embeddings,
        args.weights.map(weights_array).transpose()?,
        args.fit_resolution,
        config.as_ref(),
    )?
    .ok_or_else(|| Error::Config("score needs --embeddings".to_string()))?;
    let top_k = args
        .top_k
        .or_else(|| config.as_ref().and_then(|c| c.top_k))
        .unwrap_or(5);
    let labeled: Vec<LabeledRecord> = pipeline::read_jsonl(pipeline::reader_for(&records_path)?)?;
    ensure_parent(&out)?;
    let report = pipeline::cmd_score(&labeled, &hierarchy, &scorer, top_k, pipeline::writer_for(&out)?)?;
    emit_report(&report, &out, args.report.as_deref())
}

fn run_plan(args: PlanArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let records_path = resolve_path(
        args.records,
        config.as_ref(),
        |c| c.out_dir.join("labeled.jsonl"),
        "records path",
    )?;
    let out = resolve_path(args.out, config.as_ref(), |c| c.out_dir.join("plans.jsonl"), "--out")?;
    let regimes = load_regimes(args.regimes.or_else(|| config.as_ref().and_then(|c| c.regimes.clone())))?;
    let labeled: Vec<LabeledRecord> = pipeline::read_jsonl(pipeline::reader_for(&records_path)?)?;
    ensure_parent(&out)?;
    let report = pipeline::cmd_plan(&labeled, &regimes, pipeline::writer_for(&out)?)?;
    emit_report(&report, &out, args.report.as_deref())
}

fn run_build(args: BuildArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let records_path = resolve_path(
        args.records,
        config.as_ref(),
        |c| c.out_dir.join("labeled.jsonl"),
        "records path",
    )?;
    let out = resolve_path(args.out, config.as_ref(), |c| c.out_dir.join("manifest.jsonl"), "--out")?;
    if out.as_os_str() == "-" {
        return Err(Error::Config("build writes atomically; --out must be a file".to_string()));
    }
    let hierarchy =
        load_hierarchy(args.hierarchy.or_else(|| config.as_ref().and_then(|c| c.hierarchy.clone())))?;
    let exclusions: BTreeSet<String> = if args.no_exclusions {
        BTreeSet::new()
    } else if !args.exclude.is_empty() {
        args.exclude.iter().map(|k| wikitext::normalize_label(k)).collect()
    } else if let Some(list) = config.as_ref().and_then(|c| c.exclusions.clone()) {
        list.iter().map(|k| wikitext::normalize_label(k)).collect()
    } else {
        default_exclusions()
    };
    let options = BuildOptions {
        region: args
            .region
            .or_else(|| config.as_ref().and_then(|c| c.region.clone()))
            .map(|p| RegionFilter::load(&p))
            .transpose()?,
        merge: args
            .merge_map
            .or_else(|| config.as_ref().and_then(|c| c.merge_map.clone()))
            .map(|p| MergeMap::load(&p))
            .transpose()?,
        regimes: load_regimes(args.regimes.or_else(|| config.as_ref().and_then(|c| c.regimes.clone())))?,
        exclusions,
    };
    let labeled: Vec<LabeledRecord> = pipeline::read_jsonl(pipeline::reader_for(&records_path)?)?;
    ensure_parent(&out)?;
    let report = pipeline::cmd_build(&labeled, &hierarchy, &options, &out)?;
    emit_report(&report, &out, args.report.as_deref())
}

fn run_stats(args: StatsArgs) -> Result<()> {
    let report = pipeline::cmd_stats(&args.manifest)?;
    emit_report(&report, Path::new(""), args.report.as_deref())
}

fn run_run(args: RunArgs) -> Result<()> {
    let config = PipelineConfig::load(&args.config)?;
    let report = pipeline::run_full(&config)?;
    emit_report(&report, Path::new(""), None)
}
