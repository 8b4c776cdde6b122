//! Dataset manifest assembly.
//!
//! A manifest is JSON lines, one entry per kept article, sorted by page id.
//! Writes go through a temporary file and a rename so a crashed build never
//! leaves a half manifest behind. Two builds over the same inputs produce
//! byte-identical files.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoCoordinate;
use crate::labeler::KeywordHierarchy;
use crate::tiles::{self, Regime, RegimeConfig, TileRequest};
use crate::wikitext;

/// One manifest line. Field order is part of the format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub page_id: u64,
    pub title: String,
    pub lat: f64,
    pub lon: f64,
    pub raw_label: Option<String>,
    pub keyword_label: String,
    pub merged_label: Option<String>,
    pub regime: Regime,
    pub tiles: Vec<TileRequest>,
    pub warnings: Vec<String>,
}

/// Fine keyword to coarse class mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeMap {
    fine_to_coarse: BTreeMap<String, String>,
    coarse_count: usize,
}

#[derive(Deserialize)]
struct MergeFile {
    target: usize,
    merges: BTreeMap<String, Vec<String>>,
}

impl MergeMap {
    pub fn from_toml_str(text: &str) -> Result<MergeMap> {
        let file: MergeFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("merge map: {e}")))?;
        if file.merges.len() != file.target {
            return Err(Error::Config(format!(
                "merge map declares {} classes but defines {}",
                file.target,
                file.merges.len()
            )));
        }
        let mut fine_to_coarse = BTreeMap::new();
        for (coarse, fines) in &file.merges {
            if fines.is_empty() {
                return Err(Error::Config(format!("merged class {coarse:?} is empty")));
            }
            for fine in fines {
                let fine = wikitext::normalize_label(fine);
                if fine_to_coarse.insert(fine.clone(), coarse.clone()).is_some() {
                    return Err(Error::Config(format!(
                        "keyword {fine:?} merges into more than one class"
                    )));
                }
            }
        }
        Ok(MergeMap { fine_to_coarse, coarse_count: file.merges.len() })
    }

    pub fn load(path: &Path) -> Result<MergeMap> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read merge map {}: {e}", path.display()))
        })?;
        MergeMap::from_toml_str(&text)
    }

    /// The ten-class map this repository ships as its default.
    pub fn shipped_default() -> MergeMap {
        MergeMap::from_toml_str(include_str!(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../data/merge_map.toml"
        )))
        .expect("shipped merge map must be valid")
    }

    pub fn coarse_count(&self) -> usize {
        self.coarse_count
    }

    pub fn merge(&self, keyword: &str) -> Result<&str> {
        self.fine_to_coarse
            .get(keyword)
            .map(String::as_str)
            .ok_or_else(|| Error::UnmappedKeyword(keyword.to_string()))
    }

    /// Check the map covers every visual keyword of a hierarchy, so a build
    /// can fail before writing anything instead of midway through.
    pub fn validate_total(&self, hierarchy: &KeywordHierarchy) -> Result<()> {
        for keyword in hierarchy.visual_keywords() {
            if !self.fine_to_coarse.contains_key(keyword) {
                return Err(Error::UnmappedKeyword(keyword.to_string()));
            }
        }
        Ok(())
    }
}

/// Spatial corpus filter. Boundary points count as inside for both shapes.
#[derive(Debug, Clone, PartialEq)]
pub enum RegionFilter {
    BoundingBox { lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64 },
    /// Vertices as (lat, lon); the closing edge is implicit.
    Polygon(Vec<(f64, f64)>),
}

#[derive(Deserialize)]
struct RegionFile {
    bbox: Option<BboxDef>,
    polygon: Option<Vec<[f64; 2]>>,
}

#[derive(Deserialize)]
struct BboxDef {
    lat_min: f64,
    lat_max: f64,
    lon_min: f64,
    lon_max: f64,
}

impl RegionFilter {
    pub fn bounding_box(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> Result<RegionFilter> {
        let all = [lat_min, lat_max, lon_min, lon_max];
        if all.iter().any(|v| !v.is_finite()) || lat_min > lat_max || lon_min > lon_max {
            return Err(Error::Config(format!(
                "bounding box ({lat_min}, {lat_max}, {lon_min}, {lon_max}) is not ordered"
            )));
        }
        Ok(RegionFilter::BoundingBox { lat_min, lat_max, lon_min, lon_max })
    }

    /// Vertices as (lat, lon). At least three are required and the outline
    /// must not cross itself; a duplicated closing vertex is dropped.
    pub fn polygon(mut vertices: Vec<(f64, f64)>) -> Result<RegionFilter> {
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(Error::Config("polygon needs at least three vertices".to_string()));
        }
        if vertices.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::Config("polygon has a non-finite vertex".to_string()));
        }
        if has_self_intersection(&vertices) {
            return Err(Error::Config("polygon outline crosses itself".to_string()));
        }
        Ok(RegionFilter::Polygon(vertices))
    }

    pub fn from_toml_str(text: &str) -> Result<RegionFilter> {
        let file: RegionFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("region: {e}")))?;
        match (file.bbox, file.polygon) {
            (Some(b), None) => RegionFilter::bounding_box(b.lat_min, b.lat_max, b.lon_min, b.lon_max),
            (None, Some(points)) => {
                RegionFilter::polygon(points.into_iter().map(|[lat, lon]| (lat, lon)).collect())
            }
            _ => Err(Error::Config(
                "region file must define exactly one of bbox or polygon".to_string(),
            )),
        }
    }

    pub fn load(path: &Path) -> Result<RegionFilter> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read region {}: {e}", path.display()))
        })?;
        RegionFilter::from_toml_str(&text)
    }

    /// The continental Africa outline this repository ships.
    pub fn africa() -> RegionFilter {
        RegionFilter::from_toml_str(include_str!(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../data/africa.toml"
        )))
        .expect("shipped region must be valid")
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        match self {
            RegionFilter::BoundingBox { lat_min, lat_max, lon_min, lon_max } => {
                (*lat_min..=*lat_max).contains(&lat) && (*lon_min..=*lon_max).contains(&lon)
            }
            RegionFilter::Polygon(vertices) => polygon_contains(vertices, lat, lon),
        }
    }
}

/// Even-odd ray casting with an explicit boundary check, x = lon, y = lat.
fn polygon_contains(vertices: &[(f64, f64)], lat: f64, lon: f64) -> bool {
    let n = vertices.len();
    let mut inside = false;
    for i in 0..n {
        let (ay, ax) = vertices[i];
        let (by, bx) = vertices[(i + 1) % n];
        if on_segment(ax, ay, bx, by, lon, lat) {
            return true;
        }
        if (ay > lat) != (by > lat) {
            let cross_lon = ax + (lat - ay) / (by - ay) * (bx - ax);
            if lon < cross_lon {
                inside = !inside;
            }
        }
    }
    inside
}

fn on_segment(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> bool {
    let cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
    if cross.abs() > 1e-9 {
        return false;
    }
    px >= ax.min(bx) - 1e-12
        && px <= ax.max(bx) + 1e-12
        && py >= ay.min(by) - 1e-12
        && py <= ay.max(by) + 1e-12
}

/// Proper segment crossing for non-adjacent edge pairs, endpoints included.
fn has_self_intersection(vertices: &[(f64, f64)]) -> bool {
    let n = vertices.len();
    let edge = |i: usize| (vertices[i], vertices[(i + 1) % n]);
    for i in 0..n {
        for j in i + 1..n {
            // Adjacent edges share an endpoint by construction.
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (a, b) = edge(i);
            let (c, d) = edge(j);
            if segments_intersect(a, b, c, d) {
                return true;
            }
        }
    }
    false
}

fn segments_intersect(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let orient = |p: (f64, f64), q: (f64, f64), r: (f64, f64)| {
        (q.1 - p.1) * (r.0 - q.0) - (q.0 - p.0) * (r.1 - q.1)
    };
    let on = |p: (f64, f64), q: (f64, f64), r: (f64, f64)| {
        r.0 >= p.0.min(q.0) && r.0 <= p.0.max(q.0) && r.1 >= p.1.min(q.1) && r.1 <= p.1.max(q.1)
    };
    let d1 = orient(a, b, c);
    let d2 = orient(a, b, d);
    let d3 = orient(c, d, a);
    let d4 = orient(c, d, b);
    if ((d1 > 0.0) != (d2 > 0.0)) && ((d3 > 0.0) != (d4 > 0.0)) && d1 != 0.0 && d2 != 0.0 && d3 != 0.0 && d4 != 0.0
    {
        return true;
    }
    (d1 == 0.0 && on(a, b, c))
        || (d2 == 0.0 && on(a, b, d))
        || (d3 == 0.0 && on(c, d, a))
        || (d4 == 0.0 && on(c, d, b))
}

/// Keywords excluded from imagery despite sitting in visual clusters:
/// underground or enclosed subjects that overhead imagery cannot show.
pub fn default_exclusions() -> BTreeSet<String> {
    ["subway station", "cave"].iter().map(|s| s.to_string()).collect()
}

/// Whether a labeled article is worth capturing: its keyword must exist,
/// sit in a visual cluster, and not be excluded. Unlabeled articles are
/// never visual.
pub fn is_visual(
    keyword: Option<&str>,
    hierarchy: &KeywordHierarchy,
    exclusions: &BTreeSet<String>,
) -> bool {
    let Some(keyword) = keyword else { return false };
    if exclusions.contains(keyword) {
        return false;
    }
    hierarchy.cluster_of(keyword).is_some_and(|c| c.visual)
}

/// Everything the builder needs to know about one labeled, geolocated
/// article.
#[derive(Debug, Clone)]
pub struct BuildRecord {
    pub page_id: u64,
    pub title: String,
    pub coord: GeoCoordinate,
    pub raw_label: Option<String>,
    pub keyword: Option<String>,
    pub infobox_block: Option<String>,
}

/// Build-time policy: spatial filter, class merging, regime membership and
/// visual exclusions.
pub struct BuildOptions {
    pub region: Option<RegionFilter>,
    pub merge: Option<MergeMap>,
    pub regimes: RegimeConfig,
    pub exclusions: BTreeSet<String>,
}

impl Default for BuildOptions {
    fn default() -> BuildOptions {
        BuildOptions {
            region: None,
            merge: None,
            regimes: RegimeConfig::default(),
            exclusions: default_exclusions(),
        }
    }
}

/// Where each input record went. Every record lands in exactly one bucket:
/// `entries + unlabeled + filtered_nonvisual + filtered_region +
/// planning_rejected == records_seen`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BuildStats {
    pub records_seen: u64,
    pub entries: u64,
    pub unlabeled: u64,
    pub filtered_nonvisual: u64,
    pub filtered_region: u64,
    pub planning_rejected: u64,
    pub total_tiles: u64,
    pub warnings: u64,
    pub per_keyword: BTreeMap<String, u64>,
    pub per_merged: BTreeMap<String, u64>,
}

impl BuildStats {
    pub fn conservation_holds(&self) -> bool {
        self.entries
            + self.unlabeled
            + self.filtered_nonvisual
            + self.filtered_region
            + self.planning_rejected
            == self.records_seen
    }
}

enum Placed {
    Entry(Box<ManifestEntry>),
    Unlabeled,
    NonVisual,
    OutsideRegion,
    PlanningRejected,
}

fn place_record(record: &BuildRecord, options: &BuildOptions) -> Result<Placed> {
    let Some(keyword) = &record.keyword else {
        return Ok(Placed::Unlabeled);
    };
    // The visual check happened upstream; region and planning follow.
    if let Some(region) = &options.region {
        if !region.contains(record.coord.lat, record.coord.lon) {
            return Ok(Placed::OutsideRegion);
        }
    }
    let regime = options.regimes.classify(keyword);
    let area_km2 = match regime {
        Regime::Area => record.infobox_block.as_deref().and_then(tiles::parse_area_field),
        _ => None,
    };
    let plan = match tiles::plan_tiles(record.coord, regime, area_km2) {
        Ok(plan) => plan,
        Err(Error::PolarLatitude(_)) => return Ok(Placed::PlanningRejected),
        Err(e) => return Err(e),
    };
    let merged_label = match &options.merge {
        Some(map) => Some(map.merge(keyword)?.to_string()),
        None => None,
    };
    Ok(Placed::Entry(Box::new(ManifestEntry {
        page_id: record.page_id,
        title: record.title.clone(),
        lat: record.coord.lat,
        lon: record.coord.lon,
        raw_label: record.raw_label.clone(),
        keyword_label: keyword.clone(),
        merged_label,
        regime: plan.grid.regime,
        tiles: plan.grid.tiles,
        warnings: plan.warnings,
    })))
}

/// Assemble a manifest at `out_path` from labeled records. Records are
/// sorted by page id; ties keep input order. The output appears atomically
/// or not at all.
pub fn build_manifest(
    records: Vec<BuildRecord>,
    hierarchy: &KeywordHierarchy,
    options: &BuildOptions,
    out_path: &Path,
) -> Result<BuildStats> {
    if let Some(map) = &options.merge {
        map.validate_total(hierarchy)?;
    }
    let mut records = records;
    records.sort_by_key(|r| r.page_id);

    let mut stats = BuildStats { records_seen: records.len() as u64, ..BuildStats::default() };

    let placed: Vec<Placed> = records
        .par_iter()
        .map(|record| {
            // Visual filtering first: a non-visual subject is out no matter
            // where it sits.
            if record.keyword.is_some()
                && !is_visual(record.keyword.as_deref(), hierarchy, &options.exclusions)
            {
                return Ok(Placed::NonVisual);
            }
            place_record(record, options)
        })
        .collect::<Result<_>>()?;

    let tmp_path = out_path.with_extension("jsonl.tmp");
    let result = write_entries(&placed, &mut stats, &tmp_path);
    match result {
        Ok(()) => {
            fs::rename(&tmp_path, out_path)?;
            Ok(stats)
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp_path);
            Err(e)
        }
    }
}

fn write_entries(placed: &[Placed], stats: &mut BuildStats, tmp_path: &Path) -> Result<()> {
    let file = fs::File::create(tmp_path)?;
    let mut writer = BufWriter::new(file);
    for item in placed {
        match item {
            Placed::Entry(entry) => {
                stats.entries += 1;
                stats.total_tiles += entry.tiles.len() as u64;
                stats.warnings += entry.warnings.len() as u64;
                *stats.per_keyword.entry(entry.keyword_label.clone()).or_insert(0) += 1;
                if let Some(merged) = &entry.merged_label {
                    *stats.per_merged.entry(merged.clone()).or_insert(0) += 1;
                }
                serde_json::to_writer(&mut writer, entry.as_ref())
                    .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
                writer.write_all(b"\n")?;
            }
            Placed::Unlabeled => stats.unlabeled += 1,
            Placed::NonVisual => stats.filtered_nonvisual += 1,
            Placed::OutsideRegion => stats.filtered_region += 1,
            Placed::PlanningRejected => stats.planning_rejected += 1,
        }
    }
    writer.flush()?;
    Ok(())
}

/// Read a manifest back. Any undecodable line fails with its line number.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let file = fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut entries = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line)
            .map_err(|e| Error::JsonLine { line: idx as u64 + 1, source: e })?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Class frequencies of a manifest, by entry and by tile, fine and merged.
/// Rows sort by count descending, then label, so reports are stable.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Histogram {
    pub keyword_entries: Vec<(String, u64)>,
    pub keyword_tiles: Vec<(String, u64)>,
    pub merged_entries: Vec<(String, u64)>,
    pub merged_tiles: Vec<(String, u64)>,
}

fn sorted_rows(counts: HashMap<String, u64>) -> Vec<(String, u64)> {
    let mut rows: Vec<(String, u64)> = counts.into_iter().collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    rows
}

pub fn class_histogram(path: &Path) -> Result<Histogram> {
    let entries = read_manifest(path)?;
    let mut keyword_entries = HashMap::new();
    let mut keyword_tiles = HashMap::new();
    let mut merged_entries = HashMap::new();
    let mut merged_tiles = HashMap::new();
    for entry in &entries {
        let tiles = entry.tiles.len() as u64;
        *keyword_entries.entry(entry.keyword_label.clone()).or_insert(0) += 1;
        *keyword_tiles.entry(entry.keyword_label.clone()).or_insert(0) += tiles;
        if let Some(merged) = &entry.merged_label {
            *merged_entries.entry(merged.clone()).or_insert(0) += 1;
            *merged_tiles.entry(merged.clone()).or_insert(0) += tiles;
        }
    }
    Ok(Histogram {
        keyword_entries: sorted_rows(keyword_entries),
        keyword_tiles: sorted_rows(keyword_tiles),
        merged_entries: sorted_rows(merged_entries),
        merged_tiles: sorted_rows(merged_tiles),
    })
}
