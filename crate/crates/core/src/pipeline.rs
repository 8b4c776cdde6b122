//! Batch stage orchestration: files in, files out.
//!
//! Each stage reads the previous stage's JSON-lines output, so a run can be
//! driven as one process or as separate invocations with identical results.
//! Reports go to their own JSON files; record streams never mix with them.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dump::{self, Article, DumpStats};
use crate::embedding::{
    fit_section_weights, rank_labels, tokenize, EmbeddingTable, LabelScore, SectionTokens,
    SectionWeights,
};
use crate::error::{Error, Result};
use crate::geo::{self, CoordForm, CoordOutcome, GeoCoordinate};
use crate::labeler::{label_corpus, KeywordHierarchy, LabelingStats, MatchChannel};
use crate::manifest::{
    build_manifest, class_histogram, default_exclusions, BuildOptions, BuildRecord, BuildStats,
    Histogram, MergeMap, RegionFilter,
};
use crate::tiles::{self, Regime, RegimeConfig, TileRequest};
use crate::wikitext;

/// A geolocated article, reduced to the fields later stages consume. Raw
/// markup is dropped here; nothing downstream reads it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleRecord {
    pub page_id: u64,
    pub title: String,
    pub lat: f64,
    pub lon: f64,
    pub coord_form: CoordForm,
    pub body: String,
    pub infobox_block: Option<String>,
    pub categories: Vec<String>,
    pub hyperlinks: Vec<String>,
}

impl ArticleRecord {
    fn from_article(article: &Article, coord: GeoCoordinate) -> ArticleRecord {
        ArticleRecord {
            page_id: article.page_id,
            title: article.title.clone(),
            lat: coord.lat,
            lon: coord.lon,
            coord_form: coord.form,
            body: article.body.clone(),
            infobox_block: article.infobox_block.clone(),
            categories: article.categories.clone(),
            hyperlinks: article.hyperlinks.clone(),
        }
    }

    pub fn coord(&self) -> GeoCoordinate {
        GeoCoordinate { lat: self.lat, lon: self.lon, form: self.coord_form }
    }

    fn into_article(self) -> (Article, GeoCoordinate) {
        let coord = self.coord();
        let article = Article {
            page_id: self.page_id,
            title: self.title,
            wikitext: String::new(),
            body: self.body,
            infobox_block: self.infobox_block,
            categories: self.categories,
            hyperlinks: self.hyperlinks,
        };
        (article, coord)
    }
}

/// An [`ArticleRecord`] plus its labeling outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub page_id: u64,
    pub title: String,
    pub lat: f64,
    pub lon: f64,
    pub coord_form: CoordForm,
    pub raw_label: Option<String>,
    pub keyword_label: Option<String>,
    pub cluster: Option<String>,
    pub matched_via: MatchChannel,
    pub body: String,
    pub infobox_block: Option<String>,
    pub categories: Vec<String>,
    pub hyperlinks: Vec<String>,
}

impl LabeledRecord {
    pub fn coord(&self) -> GeoCoordinate {
        GeoCoordinate { lat: self.lat, lon: self.lon, form: self.coord_form }
    }

    pub fn sections(&self) -> SectionTokens {
        SectionTokens::from_parts(
            &self.title,
            &self.body,
            self.infobox_block.as_deref(),
            &self.categories,
            &self.hyperlinks,
        )
    }

    fn build_record(&self) -> BuildRecord {
        BuildRecord {
            page_id: self.page_id,
            title: self.title.clone(),
            coord: self.coord(),
            raw_label: self.raw_label.clone(),
            keyword: self.keyword_label.clone(),
            infobox_block: self.infobox_block.clone(),
        }
    }
}

/// Read a JSON-lines stream. A bad line fails with its 1-based number.
pub fn read_jsonl<T: DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>> {
    let mut items = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| Error::JsonLine { line: idx as u64 + 1, source: e })?;
        items.push(item);
    }
    Ok(items)
}

fn write_jsonl<'a, T: Serialize + 'a>(
    mut writer: impl Write,
    items: impl IntoIterator<Item = &'a T>,
) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut writer, item)
            .map_err(|e| Error::Config(format!("record serialization: {e}")))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Write a report as pretty JSON with a trailing newline.
pub fn write_report(path: &Path, report: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Config(format!("report serialization: {e}")))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Tallies for one extraction pass.
/// `geolocated + coordinate_rejected + no_coordinate == dump.standard_articles`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractReport {
    pub dump: DumpStats,
    pub geolocated: u64,
    pub coordinate_rejected: u64,
    pub no_coordinate: u64,
}

/// Stream a dump, keep the geolocated standard articles, write them as
/// JSON lines. Serial by design: memory stays bounded by the largest page
/// regardless of dump length.
pub fn cmd_extract(dump_xml: impl BufRead, records_out: impl Write) -> Result<ExtractReport> {
    let mut writer = BufWriter::new(records_out);
    let mut report = ExtractReport::default();
    let mut stream = dump::stream_articles(dump_xml);
    for article in &mut stream {
        let article = article?;
        match geo::extract_coordinate_outcome(&article.wikitext) {
            CoordOutcome::Found(coord) => {
                report.geolocated += 1;
                let record = ArticleRecord::from_article(&article, coord);
                serde_json::to_writer(&mut writer, &record)
                    .map_err(|e| Error::Config(format!("record serialization: {e}")))?;
                writer.write_all(b"\n")?;
            }
            CoordOutcome::Rejected(rejection) => {
                report.coordinate_rejected += 1;
                log::debug!(
                    "page {} ({}): coordinate rejected: {rejection:?}",
                    article.page_id,
                    article.title
                );
            }
            CoordOutcome::NoTemplate => report.no_coordinate += 1,
        }
    }
    writer.flush()?;
    report.dump = stream.stats();
    Ok(report)
}

/// How the optional embedding scorer gets its weights.
#[derive(Debug, Clone)]
pub enum WeightsSpec {
    Fixed(SectionWeights),
    /// Fit on the keyword-labeled records at this grid resolution.
    Fit { resolution: f64 },
}

/// Embedding scorer configuration for the labeling stage.
pub struct ScorerSetup {
    pub table: EmbeddingTable,
    pub spec: WeightsSpec,
}

impl ScorerSetup {
    /// Hierarchy keywords whose every token has a vector; only these can be
    /// scored, so only these are candidates.
    pub fn candidates(&self, hierarchy: &KeywordHierarchy) -> Vec<String> {
        hierarchy
            .iter_keywords()
            .filter(|(keyword, _)| tokenize(keyword).iter().all(|t| self.table.contains(t)))
            .map(|(keyword, _)| keyword.to_string())
            .collect()
    }
}

/// How the embedding scorer compared against the keyword labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScorerReport {
    pub candidates: Vec<String>,
    /// Records whose keyword label was scoreable.
    pub compared: u64,
    pub agreed: u64,
    pub top1_agreement: f64,
    pub weights: [f64; 5],
    /// Present when the weights were fitted rather than supplied.
    pub fit_agreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelReport {
    pub stats: LabelingStats,
    pub raw_label_coverage: f64,
    pub labeled_fraction: f64,
    pub scorer: Option<ScorerReport>,
}

fn scorer_report(
    labeled: &[LabeledRecord],
    hierarchy: &KeywordHierarchy,
    scorer: &ScorerSetup,
) -> Result<ScorerReport> {
    let candidates = scorer.candidates(hierarchy);
    let comparable: Vec<(SectionTokens, String)> = labeled
        .iter()
        .filter_map(|record| {
            let keyword = record.keyword_label.as_ref()?;
            candidates.contains(keyword).then(|| (record.sections(), keyword.clone()))
        })
        .collect();

    let (weights, fit_agreement) = match &scorer.spec {
        WeightsSpec::Fixed(w) => (*w, None),
        WeightsSpec::Fit { resolution } => {
            let fit = fit_section_weights(&comparable, &candidates, &scorer.table, *resolution)?;
            (fit.weights, Some(fit.agreement))
        }
    };

    let agreed = comparable
        .par_iter()
        .map(|(sections, keyword)| -> Result<u64> {
            let ranked = rank_labels(sections, &candidates, &scorer.table, &weights)?;
            Ok(u64::from(ranked.first().is_some_and(|top| &top.label == keyword)))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;

    let compared = comparable.len() as u64;
    Ok(ScorerReport {
        candidates,
        compared,
        agreed,
        top1_agreement: if compared == 0 { 0.0 } else { agreed as f64 / compared as f64 },
        weights: weights.as_array(),
        fit_agreement,
    })
}

/// Label extracted records against a hierarchy; optionally compare the
/// embedding scorer's choices against the keyword labels.
pub fn cmd_label(
    records: Vec<ArticleRecord>,
    hierarchy: &KeywordHierarchy,
    scorer: Option<&ScorerSetup>,
    labeled_out: impl Write,
) -> Result<LabelReport> {
    let corpus: Vec<(Article, GeoCoordinate)> =
        records.into_iter().map(ArticleRecord::into_article).collect();
    let (labeled, stats) = label_corpus(corpus, hierarchy);
    let labeled: Vec<LabeledRecord> = labeled
        .into_iter()
        .map(|item| LabeledRecord {
            page_id: item.article.page_id,
            title: item.article.title,
            lat: item.coord.lat,
            lon: item.coord.lon,
            coord_form: item.coord.form,
            raw_label: item.raw_label.map(|r| r.as_str().to_string()),
            keyword_label: item.assignment.keyword,
            cluster: item.assignment.cluster,
            matched_via: item.assignment.matched_via,
            body: item.article.body,
            infobox_block: item.article.infobox_block,
            categories: item.article.categories,
            hyperlinks: item.article.hyperlinks,
        })
        .collect();

    write_jsonl(labeled_out, &labeled)?;

    let scorer = scorer.map(|s| scorer_report(&labeled, hierarchy, s)).transpose()?;
    Ok(LabelReport {
        raw_label_coverage: stats.raw_label_coverage(),
        labeled_fraction: stats.labeled_fraction(),
        stats,
        scorer,
    })
}

/// One article's candidate ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRecord {
    pub page_id: u64,
    pub title: String,
    pub ranked: Vec<LabelScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub records: u64,
    pub candidates: Vec<String>,
    pub top_k: usize,
    pub weights: [f64; 5],
}

/// Rank scoreable candidates for every record and keep the best `top_k`.
pub fn cmd_score(
    labeled: &[LabeledRecord],
    hierarchy: &KeywordHierarchy,
    scorer: &ScorerSetup,
    top_k: usize,
    ranked_out: impl Write,
) -> Result<ScoreReport> {
    let candidates = scorer.candidates(hierarchy);
    let weights = match &scorer.spec {
        WeightsSpec::Fixed(w) => *w,
        WeightsSpec::Fit { resolution } => {
            let comparable: Vec<(SectionTokens, String)> = labeled
                .iter()
                .filter_map(|record| {
                    let keyword = record.keyword_label.as_ref()?;
                    candidates.contains(keyword).then(|| (record.sections(), keyword.clone()))
                })
                .collect();
            fit_section_weights(&comparable, &candidates, &scorer.table, *resolution)?.weights
        }
    };
    let ranked: Vec<RankedRecord> = labeled
        .par_iter()
        .map(|record| {
            let mut scores =
                rank_labels(&record.sections(), &candidates, &scorer.table, &weights)?;
            scores.truncate(top_k);
            Ok(RankedRecord {
                page_id: record.page_id,
                title: record.title.clone(),
                ranked: scores,
            })
        })
        .collect::<Result<_>>()?;
    write_jsonl(ranked_out, &ranked)?;
    Ok(ScoreReport {
        records: ranked.len() as u64,
        candidates,
        top_k,
        weights: weights.as_array(),
    })
}

/// One article's planned capture, for inspection ahead of a build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub page_id: u64,
    pub title: String,
    pub keyword_label: Option<String>,
    pub regime: Regime,
    pub tiles: Vec<TileRequest>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PlanReport {
    pub planned: u64,
    pub rejected_polar: u64,
    pub total_tiles: u64,
}

/// Plan tiles for every record, unfiltered: unlabeled articles plan as
/// points so the geometry of the whole corpus is inspectable.
pub fn cmd_plan(
    labeled: &[LabeledRecord],
    regimes: &RegimeConfig,
    plans_out: impl Write,
) -> Result<PlanReport> {
    let mut report = PlanReport::default();
    let plans: Vec<Option<PlanRecord>> = labeled
        .par_iter()
        .map(|record| {
            let regime = record
                .keyword_label
                .as_deref()
                .map_or(Regime::Point, |keyword| regimes.classify(keyword));
            let area_km2 = match regime {
                Regime::Area => {
                    record.infobox_block.as_deref().and_then(tiles::parse_area_field)
                }
                _ => None,
            };
            match tiles::plan_tiles(record.coord(), regime, area_km2) {
                Ok(plan) => Ok(Some(PlanRecord {
                    page_id: record.page_id,
                    title: record.title.clone(),
                    keyword_label: record.keyword_label.clone(),
                    regime: plan.grid.regime,
                    tiles: plan.grid.tiles,
                    warnings: plan.warnings,
                })),
                Err(Error::PolarLatitude(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let kept: Vec<&PlanRecord> = plans.iter().flatten().collect();
    for plan in &kept {
        report.planned += 1;
        report.total_tiles += plan.tiles.len() as u64;
    }
    report.rejected_polar = labeled.len() as u64 - report.planned;
    write_jsonl(plans_out, kept.into_iter())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildReport {
    pub stats: BuildStats,
    pub histogram: Histogram,
}

/// Filter, merge and plan labeled records into a manifest file, then report
/// where every record went and how the classes are distributed.
pub fn cmd_build(
    labeled: &[LabeledRecord],
    hierarchy: &KeywordHierarchy,
    options: &BuildOptions,
    manifest_path: &Path,
) -> Result<BuildReport> {
    let records: Vec<BuildRecord> = labeled.iter().map(LabeledRecord::build_record).collect();
    let stats = build_manifest(records, hierarchy, options, manifest_path)?;
    let histogram = class_histogram(manifest_path)?;
    Ok(BuildReport { stats, histogram })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub entries: u64,
    pub total_tiles: u64,
    pub total_warnings: u64,
    pub histogram: Histogram,
}

/// Summarize an existing manifest.
pub fn cmd_stats(manifest_path: &Path) -> Result<StatsReport> {
    let entries = crate::manifest::read_manifest(manifest_path)?;
    let histogram = class_histogram(manifest_path)?;
    Ok(StatsReport {
        entries: entries.len() as u64,
        total_tiles: entries.iter().map(|e| e.tiles.len() as u64).sum(),
        total_warnings: entries.iter().map(|e| e.warnings.len() as u64).sum(),
        histogram,
    })
}

/// Whole-run configuration, loadable from a structured text file. Paths are
/// resolved relative to the process working directory. Absent optional paths
/// switch the matching feature off; hierarchy and regimes fall back to the
/// shipped defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub dump: PathBuf,
    pub out_dir: PathBuf,
    pub hierarchy: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub merge_map: Option<PathBuf>,
    pub region: Option<PathBuf>,
    pub regimes: Option<PathBuf>,
    /// Keywords kept out of manifests even when their cluster is visual.
    /// Absent means the built-in exclusions; empty means none.
    pub exclusions: Option<Vec<String>>,
    /// Fixed section weights for the scorer, in section order
    /// (title, body, infobox, categories, hyperlinks).
    pub weights: Option<[f64; 5]>,
    /// Weight-grid resolution; fits weights instead of fixing them.
    pub fit_resolution: Option<f64>,
    pub top_k: Option<usize>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let config: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_some() && self.fit_resolution.is_some() {
            return Err(Error::Config(
                "weights and fit_resolution are mutually exclusive".to_string(),
            ));
        }
        if self.dump.as_os_str().is_empty() {
            return Err(Error::Config("config must name a dump file".to_string()));
        }
        if self.out_dir.as_os_str().is_empty() {
            return Err(Error::Config("config must name an output directory".to_string()));
        }
        for path in [&Some(self.dump.clone()), &self.hierarchy, &self.embeddings, &self.merge_map, &self.region, &self.regimes]
            .into_iter()
            .flatten()
        {
            if path.as_os_str() != "-" && !path.exists() {
                return Err(Error::Config(format!("input {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    pub fn hierarchy(&self) -> Result<KeywordHierarchy> {
        match &self.hierarchy {
            Some(path) => KeywordHierarchy::load(path),
            None => Ok(KeywordHierarchy::shipped_default()),
        }
    }

    pub fn regimes(&self) -> Result<RegimeConfig> {
        match &self.regimes {
            Some(path) => RegimeConfig::load(path),
            None => Ok(RegimeConfig::default()),
        }
    }

    pub fn scorer(&self) -> Result<Option<ScorerSetup>> {
        let Some(path) = &self.embeddings else { return Ok(None) };
        let table = EmbeddingTable::load(path)?;
        let spec = match (self.weights, self.fit_resolution) {
            (Some(raw), None) => WeightsSpec::Fixed(SectionWeights::new(raw)?),
            (None, Some(resolution)) => WeightsSpec::Fit { resolution },
            (None, None) => WeightsSpec::Fixed(SectionWeights::uniform()),
            (Some(_), Some(_)) => unreachable!("validate rejects this combination"),
        };
        Ok(Some(ScorerSetup { table, spec }))
    }

    pub fn build_options(&self) -> Result<BuildOptions> {
        let exclusions: BTreeSet<String> = match &self.exclusions {
            Some(list) => list.iter().map(|k| wikitext::normalize_label(k)).collect(),
            None => default_exclusions(),
        };
        Ok(BuildOptions {
            region: self.region.as_deref().map(RegionFilter::load).transpose()?,
            merge: self.merge_map.as_deref().map(MergeMap::load).transpose()?,
            regimes: self.regimes()?,
            exclusions,
        })
    }
}

/// Reports of one full run, in stage order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FullReport {
    pub extract: ExtractReport,
    pub label: LabelReport,
    pub build: BuildReport,
}

fn open_input(path: &Path) -> Result<Box<dyn BufRead>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(std::io::stdin().lock()));
    }
    let file = fs::File::open(path).map_err(|e| {
        Error::Config(format!("cannot open input {}: {e}", path.display()))
    })?;
    Ok(Box::new(BufReader::new(file)))
}

fn create_output(path: &Path) -> Result<Box<dyn Write>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(std::io::stdout().lock()));
    }
    let file = fs::File::create(path)?;
    Ok(Box::new(BufWriter::new(file)))
}

/// Run extract, label and build in one process. Stage outputs land in
/// `out_dir` under fixed names, byte-identical to running the stages
/// separately.
pub fn run_full(config: &PipelineConfig) -> Result<FullReport> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir)?;
    let hierarchy = config.hierarchy()?;
    let out = |name: &str| config.out_dir.join(name);

    let extract = {
        let dump = open_input(&config.dump)?;
        let records_out = fs::File::create(out("records.jsonl"))?;
        cmd_extract(dump, BufWriter::new(records_out))?
    };
    write_report(&out("extract_report.json"), &extract)?;

    let records: Vec<ArticleRecord> =
        read_jsonl(BufReader::new(fs::File::open(out("records.jsonl"))?))?;
    let scorer = config.scorer()?;
    let label = {
        let labeled_out = fs::File::create(out("labeled.jsonl"))?;
        cmd_label(records, &hierarchy, scorer.as_ref(), BufWriter::new(labeled_out))?
    };
    write_report(&out("label_report.json"), &label)?;

    let labeled: Vec<LabeledRecord> =
        read_jsonl(BufReader::new(fs::File::open(out("labeled.jsonl"))?))?;
    let build = cmd_build(&labeled, &hierarchy, &config.build_options()?, &out("manifest.jsonl"))?;
    write_report(&out("build_report.json"), &build)?;

    Ok(FullReport { extract, label, build })
}

/// Open `path` for reading records, `-` meaning standard input.
pub fn reader_for(path: &Path) -> Result<Box<dyn BufRead>> {
    open_input(path)
}

/// Open `path` for writing records, `-` meaning standard output.
pub fn writer_for(path: &Path) -> Result<Box<dyn Write>> {
    create_output(path)
}
