//! Tile planning and imagery fetching.
//!
//! Every tile is 1000x1000 pixels at 0.3 m per pixel, so 300 m on a side.
//! Subjects that outgrow one tile get a k x k grid of tiles whose centers
//! are 150 m apart, i.e. adjacent tiles overlap by half. Grid side length in
//! kilometers is therefore 0.3 + 0.15 * (k - 1).

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoCoordinate;
use crate::wikitext;

pub const TILE_PIXELS: u32 = 1000;
pub const TILE_GSD_M: f64 = 0.3;
pub const TILE_SIZE_M: f64 = TILE_GSD_M * TILE_PIXELS as f64;
/// Center-to-center spacing inside a grid; adjacent tiles overlap by half.
pub const TILE_SPACING_M: f64 = 150.0;
/// Upper bound on the area a grid chases, in square kilometers.
pub const AREA_CAP_KM2: f64 = 2.0;
/// Grids never exceed 9 x 9; that is the cap area's grid.
pub const MAX_GRID_SIDE: u32 = 9;

/// Meters per degree of latitude, and per degree of longitude at the
/// equator, under the local equirectangular approximation.
pub const METERS_PER_DEGREE: f64 = 111_320.0;

/// One imagery request: a square crop centered on a point.
/// `size_m == gsd_m * pixels` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileRequest {
    #[serde(rename = "lat")]
    pub center_lat: f64,
    #[serde(rename = "lon")]
    pub center_lon: f64,
    pub size_m: f64,
    pub gsd_m: f64,
    pub pixels: u32,
}

impl TileRequest {
    pub fn centered_at(lat: f64, lon: f64) -> TileRequest {
        TileRequest {
            center_lat: lat,
            center_lon: lon,
            size_m: TILE_SIZE_M,
            gsd_m: TILE_GSD_M,
            pixels: TILE_PIXELS,
        }
    }
}

/// How a subject is captured, decided by its keyword label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// One centered tile.
    Point,
    /// A fixed 3 x 3 grid for elongated or sprawling subjects.
    Extended,
    /// A grid sized from the subject's reported surface area.
    Area,
}

/// Which keywords get which regime. Keywords in neither set are point
/// subjects. The sets must be disjoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegimeConfig {
    extended: BTreeSet<String>,
    area: BTreeSet<String>,
}

#[derive(Deserialize)]
struct RegimeFile {
    extended: Vec<String>,
    area: Vec<String>,
}

impl RegimeConfig {
    pub fn new(
        extended: impl IntoIterator<Item = String>,
        area: impl IntoIterator<Item = String>,
    ) -> Result<RegimeConfig> {
        let extended: BTreeSet<String> =
            extended.into_iter().map(|k| wikitext::normalize_label(&k)).collect();
        let area: BTreeSet<String> =
            area.into_iter().map(|k| wikitext::normalize_label(&k)).collect();
        if let Some(both) = extended.intersection(&area).next() {
            return Err(Error::Config(format!(
                "keyword {both:?} is in both the extended and area regime sets"
            )));
        }
        Ok(RegimeConfig { extended, area })
    }

    pub fn from_toml_str(text: &str) -> Result<RegimeConfig> {
        let file: RegimeFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("regimes: {e}")))?;
        RegimeConfig::new(file.extended, file.area)
    }

    pub fn load(path: &Path) -> Result<RegimeConfig> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read regimes {}: {e}", path.display()))
        })?;
        RegimeConfig::from_toml_str(&text)
    }

    pub fn classify(&self, keyword: &str) -> Regime {
        if self.extended.contains(keyword) {
            Regime::Extended
        } else if self.area.contains(keyword) {
            Regime::Area
        } else {
            Regime::Point
        }
    }
}

impl Default for RegimeConfig {
    fn default() -> RegimeConfig {
        RegimeConfig::from_toml_str(include_str!(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../data/regimes.toml"
        )))
        .expect("shipped regime sets must be valid")
    }
}

/// Local east/north offsets in meters to degree offsets at a latitude.
/// Within about a degree of the poles the longitude scale factor explodes,
/// so planning there is refused rather than silently wrong.
pub fn meters_to_degree_offsets(lat: f64, east_m: f64, north_m: f64) -> Result<(f64, f64)> {
    if !lat.is_finite() || lat.abs() >= 89.0 {
        return Err(Error::PolarLatitude(lat));
    }
    let dlat = north_m / METERS_PER_DEGREE;
    let dlon = east_m / (METERS_PER_DEGREE * lat.to_radians().cos());
    Ok((dlat, dlon))
}

/// Inverse of [`meters_to_degree_offsets`] at the same latitude.
pub fn degree_offsets_to_meters(lat: f64, dlat: f64, dlon: f64) -> (f64, f64) {
    let north_m = dlat * METERS_PER_DEGREE;
    let east_m = dlon * METERS_PER_DEGREE * lat.to_radians().cos();
    (east_m, north_m)
}

/// A planned capture: the tiles for one subject.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TileGrid {
    pub regime: Regime,
    /// Tiles per grid side; the grid holds `k * k` tiles.
    pub k: u32,
    pub tiles: Vec<TileRequest>,
}

/// A grid plus anything worth telling the operator about how it was chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct TilePlan {
    pub grid: TileGrid,
    pub warnings: Vec<String>,
}

/// Side length in kilometers of a k x k grid.
fn grid_side_km(k: u32) -> f64 {
    0.3 + 0.15 * (k - 1) as f64
}

/// Smallest k whose grid covers `area_km2` square kilometers, capped at
/// [`MAX_GRID_SIDE`]. The input must already be capped at [`AREA_CAP_KM2`].
fn area_grid_side(area_km2: f64) -> u32 {
    let mut k = 1u32;
    while k < MAX_GRID_SIDE && grid_side_km(k) * grid_side_km(k) < area_km2 {
        k += 1;
    }
    k
}

/// Plan the tiles for a subject at `coord` captured under `regime`.
/// `area_km2` feeds the area regime; without a usable value the plan
/// degrades to a single tile and says so in the warnings.
pub fn plan_tiles(
    coord: GeoCoordinate,
    regime: Regime,
    area_km2: Option<f64>,
) -> Result<TilePlan> {
    let mut warnings = Vec::new();
    let (k, regime) = match regime {
        Regime::Point => (1, Regime::Point),
        Regime::Extended => (3, Regime::Extended),
        Regime::Area => match area_km2.filter(|a| a.is_finite() && *a > 0.0) {
            Some(area) => (area_grid_side(area.min(AREA_CAP_KM2)), Regime::Area),
            None => {
                warnings.push(
                    "area regime without a usable area value; capturing a single tile"
                        .to_string(),
                );
                (1, Regime::Area)
            }
        },
    };
    let tiles = grid_tiles(coord, k)?;
    Ok(TilePlan { grid: TileGrid { regime, k, tiles }, warnings })
}

/// k x k tile centers spaced [`TILE_SPACING_M`] apart, centered on `coord`,
/// row-major from the southwest corner.
fn grid_tiles(coord: GeoCoordinate, k: u32) -> Result<Vec<TileRequest>> {
    let mut tiles = Vec::with_capacity((k * k) as usize);
    let half = (k - 1) as f64 / 2.0;
    for row in 0..k {
        for col in 0..k {
            let north_m = (row as f64 - half) * TILE_SPACING_M;
            let east_m = (col as f64 - half) * TILE_SPACING_M;
            let (dlat, dlon) = meters_to_degree_offsets(coord.lat, east_m, north_m)?;
            tiles.push(TileRequest::centered_at(coord.lat + dlat, coord.lon + dlon));
        }
    }
    Ok(tiles)
}

/// Pick the infobox's surface area in square kilometers. Keys are tried in a
/// fixed priority order; the first parseable hit wins. Thousands separators
/// and trailing units are tolerated.
pub fn parse_area_field(infobox_block: &str) -> Option<f64> {
    let params = wikitext::template_params(infobox_block);
    for (key, to_km2) in [("area_km2", 1.0), ("area_total_km2", 1.0), ("area_m2", 1e-6)] {
        let hit = params
            .iter()
            .find(|(k, _)| k == key)
            .and_then(|(_, v)| parse_leading_number(v));
        if let Some(value) = hit {
            return Some(value * to_km2);
        }
    }
    None
}

fn parse_leading_number(value: &str) -> Option<f64> {
    let cleaned = value.replace(',', "");
    let trimmed = cleaned.trim();
    let end = trimmed
        .char_indices()
        .take_while(|(_, c)| c.is_ascii_digit() || matches!(c, '.' | '-' | '+'))
        .map(|(i, c)| i + c.len_utf8())
        .last()?;
    trimmed[..end].parse::<f64>().ok().filter(|v| v.is_finite() && *v > 0.0)
}

/// Errors an imagery provider can report.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FetchError {
    /// The request violates the provider contract; retrying cannot help.
    #[error("invalid tile request: {0}")]
    InvalidRequest(String),
    /// Transient failure; retrying may help.
    #[error("transient fetch failure: {0}")]
    Retryable(String),
    /// The provider understood the request and definitively cannot serve it.
    #[error("permanent fetch failure: {0}")]
    Permanent(String),
}

/// Source of imagery bytes. Implementations must be deterministic for a
/// given request so that dataset builds are reproducible.
pub trait ImageryProvider: Sync {
    fn fetch_tile(&self, request: &TileRequest) -> std::result::Result<Vec<u8>, FetchError>;
}

/// Cache and request key for a tile: latitude, longitude and size, the
/// values that identify the crop.
pub fn request_key(request: &TileRequest) -> String {
    format!(
        "{:.6}_{:.6}_{}",
        request.center_lat, request.center_lon, request.size_m
    )
}

/// Deterministic stand-in for a real imagery endpoint: synthesizes a gray
/// PNG from the request key, optionally persisting tiles in a cache
/// directory keyed by [`request_key`].
pub struct MockImageryProvider {
    cache_dir: Option<PathBuf>,
    reachable: bool,
}

impl MockImageryProvider {
    pub fn new() -> MockImageryProvider {
        MockImageryProvider { cache_dir: None, reachable: true }
    }

    pub fn with_cache(dir: impl Into<PathBuf>) -> MockImageryProvider {
        MockImageryProvider { cache_dir: Some(dir.into()), reachable: true }
    }

    /// A provider whose endpoint is down; every fetch is retryable.
    pub fn unreachable() -> MockImageryProvider {
        MockImageryProvider { cache_dir: None, reachable: false }
    }

    fn synthesize(&self, request: &TileRequest, key: &str) -> Vec<u8> {
        let side = request.pixels;
        let mut state = fnv1a(key.as_bytes()) | 1;
        let mut pixels = Vec::with_capacity((side as usize) * (side as usize));
        for _ in 0..side as usize * side as usize {
            state = xorshift64(state);
            pixels.push((state >> 32) as u8);
        }
        let image = image::GrayImage::from_raw(side, side, pixels)
            .expect("buffer length matches dimensions");
        let mut bytes = Vec::new();
        image
            .write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)
            .expect("in-memory PNG encoding cannot fail");
        bytes
    }
}

impl Default for MockImageryProvider {
    fn default() -> MockImageryProvider {
        MockImageryProvider::new()
    }
}

impl ImageryProvider for MockImageryProvider {
    fn fetch_tile(&self, request: &TileRequest) -> std::result::Result<Vec<u8>, FetchError> {
        let key = request_key(request);
        if request.pixels == 0 {
            return Err(FetchError::InvalidRequest(format!(
                "zero-pixel tile requested at {key}"
            )));
        }
        if (request.gsd_m * request.pixels as f64 - request.size_m).abs() > 1e-9 {
            return Err(FetchError::InvalidRequest(format!(
                "size {} disagrees with gsd {} x pixels {} at {key}",
                request.size_m, request.gsd_m, request.pixels
            )));
        }
        if request.center_lat.abs() > 90.0 || request.center_lon.abs() > 180.0 {
            return Err(FetchError::Permanent(format!("outside coverage: {key}")));
        }
        if !self.reachable {
            return Err(FetchError::Retryable(format!("endpoint unreachable for {key}")));
        }
        if let Some(dir) = &self.cache_dir {
            let path = dir.join(format!("{key}.png"));
            if let Ok(bytes) = fs::read(&path) {
                return Ok(bytes);
            }
            let bytes = self.synthesize(request, &key);
            // Cache writes are best effort; the tile is already in hand.
            if fs::create_dir_all(dir).is_ok() {
                let _ = fs::write(&path, &bytes);
            }
            return Ok(bytes);
        }
        Ok(self.synthesize(request, &key))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn xorshift64(mut x: u64) -> u64 {
    x ^= x << 13;
    x ^= x >> 7;
    x ^= x << 17;
    x
}

/// Retry schedule for transient fetch failures: exponential backoff starting
/// at `base_delay`.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> RetryPolicy {
        RetryPolicy { max_attempts: 3, base_delay: Duration::from_millis(100) }
    }
}

/// Fetch one tile, retrying transient failures per the policy. Invalid and
/// permanent failures return immediately.
pub fn fetch_with_retry(
    provider: &dyn ImageryProvider,
    request: &TileRequest,
    policy: RetryPolicy,
) -> std::result::Result<Vec<u8>, FetchError> {
    let attempts = policy.max_attempts.max(1);
    let mut delay = policy.base_delay;
    let mut last = None;
    for attempt in 0..attempts {
        match provider.fetch_tile(request) {
            Ok(bytes) => return Ok(bytes),
            Err(FetchError::Retryable(message)) => {
                log::warn!("fetch attempt {} failed: {message}", attempt + 1);
                last = Some(FetchError::Retryable(message));
                if attempt + 1 < attempts {
                    thread::sleep(delay);
                    delay = delay.saturating_mul(2);
                }
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("loop ran at least once"))
}

/// Fetch a whole grid with a bounded number of requests in flight. Results
/// come back in tile order; any failure aborts the whole grid.
pub fn fetch_grid(
    provider: &dyn ImageryProvider,
    grid: &TileGrid,
    policy: RetryPolicy,
    max_in_flight: usize,
) -> std::result::Result<Vec<Vec<u8>>, FetchError> {
    use rayon::prelude::*;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight.max(1))
        .build()
        .map_err(|e| FetchError::Permanent(format!("worker pool: {e}")))?;
    pool.install(|| {
        grid.tiles
            .par_iter()
            .map(|tile| fetch_with_retry(provider, tile, policy))
            .collect()
    })
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Regime::Point => "point",
            Regime::Extended => "extended",
            Regime::Area => "area",
        };
        f.write_str(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::CoordForm;
    use std::sync::atomic::{AtomicU32, Ordering};

    fn at(lat: f64, lon: f64) -> GeoCoordinate {
        GeoCoordinate { lat, lon, form: CoordForm::Decimal }
    }

    #[test]
    fn regime_classification_uses_the_configured_sets() {
        let config = RegimeConfig::default();
        assert_eq!(config.classify("school"), Regime::Point);
        assert_eq!(config.classify("bridge"), Regime::Extended);
        assert_eq!(config.classify("forest"), Regime::Area);
        assert_eq!(config.classify("unheard of"), Regime::Point);
    }

    #[test]
    fn regime_sets_must_be_disjoint() {
        let clash = RegimeConfig::new(
            vec!["bridge".to_string()],
            vec!["Bridge".to_string()],
        );
        assert!(matches!(clash, Err(Error::Config(_))));
    }

    #[test]
    fn meter_offsets_scale_with_latitude() {
        let (dlat, dlon) = meters_to_degree_offsets(0.0, 150.0, 150.0).unwrap();
        assert!((dlat - 150.0 / METERS_PER_DEGREE).abs() < 1e-15);
        assert!((dlon - 150.0 / METERS_PER_DEGREE).abs() < 1e-15);

        // At 60 degrees north a longitude degree is half as wide.
        let (dlat60, dlon60) = meters_to_degree_offsets(60.0, 150.0, 150.0).unwrap();
        assert!((dlat60 - dlat).abs() < 1e-15);
        assert!((dlon60 - 2.0 * dlat60).abs() < 1e-9);
    }

    #[test]
    fn offsets_round_trip_through_meters() {
        for lat in [-75.0, -30.0, 0.0, 45.0, 88.0] {
            let (dlat, dlon) = meters_to_degree_offsets(lat, 150.0, -90.0).unwrap();
            let (east, north) = degree_offsets_to_meters(lat, dlat, dlon);
            assert!((east - 150.0).abs() < 1e-9, "lat {lat}");
            assert!((north + 90.0).abs() < 1e-9, "lat {lat}");
        }
    }

    #[test]
    fn polar_latitudes_are_refused() {
        assert!(matches!(
            meters_to_degree_offsets(89.5, 1.0, 1.0),
            Err(Error::PolarLatitude(_))
        ));
        assert!(matches!(
            plan_tiles(at(-89.9, 0.0), Regime::Point, None),
            Err(Error::PolarLatitude(_))
        ));
    }

    #[test]
    fn point_regime_is_one_centered_tile() {
        let plan = plan_tiles(at(0.3136, 32.5811), Regime::Point, None).unwrap();
        assert_eq!(plan.grid.k, 1);
        assert_eq!(plan.grid.tiles.len(), 1);
        assert!(plan.warnings.is_empty());
        let tile = plan.grid.tiles[0];
        assert_eq!((tile.center_lat, tile.center_lon), (0.3136, 32.5811));
        assert_eq!(tile.pixels, TILE_PIXELS);
        assert_eq!(tile.size_m, 300.0);
    }

    #[test]
    fn extended_regime_is_a_three_by_three() {
        let plan = plan_tiles(at(0.0, 10.0), Regime::Extended, None).unwrap();
        assert_eq!(plan.grid.k, 3);
        assert_eq!(plan.grid.tiles.len(), 9);
        // Corner tile offsets are 150 m in each axis; at the equator that is
        // 150 / 111320 degrees on both.
        let step = 150.0 / METERS_PER_DEGREE;
        let first = plan.grid.tiles[0];
        assert!((first.center_lat - (0.0 - step)).abs() < 1e-12);
        assert!((first.center_lon - (10.0 - step)).abs() < 1e-12);
        let center = plan.grid.tiles[4];
        assert!((center.center_lat).abs() < 1e-12);
        assert!((center.center_lon - 10.0).abs() < 1e-12);
    }

    #[test]
    fn grid_centroid_is_the_subject() {
        for k_source in [Regime::Extended, Regime::Point] {
            let plan = plan_tiles(at(-17.88, 30.8), k_source, None).unwrap();
            let n = plan.grid.tiles.len() as f64;
            let mean_lat: f64 = plan.grid.tiles.iter().map(|t| t.center_lat).sum::<f64>() / n;
            let mean_lon: f64 = plan.grid.tiles.iter().map(|t| t.center_lon).sum::<f64>() / n;
            assert!((mean_lat - -17.88).abs() < 1e-9);
            assert!((mean_lon - 30.8).abs() < 1e-9);
        }
    }

    #[test]
    fn area_grid_side_matches_examples() {
        // 0.09 km2 covers 0.05; 0.5 needs the fourth step (0.75^2 ≥ 0.5);
        // anything at or past the cap takes the largest grid.
        assert_eq!(area_grid_side(0.05), 1);
        assert_eq!(area_grid_side(0.5), 4);
        assert_eq!(area_grid_side(AREA_CAP_KM2), 9);
    }

    #[test]
    fn area_regime_caps_and_falls_back() {
        let plan = plan_tiles(at(-33.9, 23.0), Regime::Area, Some(10.0)).unwrap();
        assert_eq!(plan.grid.k, MAX_GRID_SIDE);
        assert_eq!(plan.grid.tiles.len(), 81);
        assert!(plan.warnings.is_empty());

        let plan = plan_tiles(at(-33.9, 23.0), Regime::Area, Some(0.5)).unwrap();
        assert_eq!(plan.grid.tiles.len(), 16);

        for missing in [None, Some(0.0), Some(-3.0), Some(f64::NAN)] {
            let plan = plan_tiles(at(-33.9, 23.0), Regime::Area, missing).unwrap();
            assert_eq!(plan.grid.k, 1, "{missing:?}");
            assert_eq!(plan.warnings.len(), 1);
            assert_eq!(plan.grid.regime, Regime::Area);
        }
    }

    #[test]
    fn minimal_grid_side_agrees_with_exhaustive_search() {
        // Independent check: walk areas in 0.01 steps and compare against
        // the smallest k found by brute force.
        let mut t = 0.01f64;
        while t <= 3.0 {
            let capped = t.min(AREA_CAP_KM2);
            let mut expected = MAX_GRID_SIDE;
            for k in 1..=MAX_GRID_SIDE {
                let side = 0.3 + 0.15 * (k - 1) as f64;
                if side * side >= capped {
                    expected = k;
                    break;
                }
            }
            assert_eq!(area_grid_side(capped), expected, "area {t}");
            t += 0.01;
        }
    }

    #[test]
    fn area_field_parsing_prefers_km2_keys() {
        let cases: &[(&str, Option<f64>)] = &[
            ("{{Infobox lake|area_km2 = 0.5}}", Some(0.5)),
            ("{{Infobox lake|area_km2=5.2|area_m2=1}}", Some(5.2)),
            ("{{Infobox island|area_m2 = 90000}}", Some(0.09)),
            ("{{Infobox forest|area_total_km2=1,250}}", Some(1250.0)),
            ("{{Infobox lake|area_km2 = 12 km<sup>2</sup>}}", Some(12.0)),
            ("{{Infobox lake|area_km2 = about right}}", None),
            ("{{Infobox lake|area_km2 = -4}}", None),
            ("{{Infobox lake|name=L}}", None),
            ("{{Infobox lake|area_m2=2000000|area_km2=0.5}}", Some(0.5)),
        ];
        for (block, want) in cases {
            let got = parse_area_field(block);
            match (got, want) {
                (Some(g), Some(w)) => assert!((g - w).abs() < 1e-12, "{block}"),
                (None, None) => {}
                other => panic!("{block}: {other:?}"),
            }
        }
    }

    #[test]
    fn mock_tiles_are_deterministic_and_decodable() {
        let provider = MockImageryProvider::new();
        let request = TileRequest::centered_at(-1.2741, 36.814);
        let a = provider.fetch_tile(&request).unwrap();
        let b = provider.fetch_tile(&request).unwrap();
        assert_eq!(a, b);
        let img = image::load_from_memory(&a).unwrap();
        assert_eq!((img.width(), img.height()), (1000, 1000));

        // A different center yields different bytes.
        let c = provider
            .fetch_tile(&TileRequest::centered_at(-1.2741, 36.8141))
            .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn request_keys_are_stable_and_rounded() {
        let request = TileRequest::centered_at(-1.2741, 36.8140001);
        assert_eq!(request_key(&request), "-1.274100_36.814000_300");
    }

    #[test]
    fn cache_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let provider = MockImageryProvider::with_cache(dir.path());
        let request = TileRequest::centered_at(5.0, 5.0);
        let first = provider.fetch_tile(&request).unwrap();
        let cached_path = dir.path().join("5.000000_5.000000_300.png");
        assert!(cached_path.exists());
        let second = provider.fetch_tile(&request).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn invalid_requests_are_rejected_without_retry() {
        let provider = MockImageryProvider::new();
        let mut request = TileRequest::centered_at(0.0, 0.0);
        request.pixels = 0;
        assert!(matches!(
            provider.fetch_tile(&request),
            Err(FetchError::InvalidRequest(_))
        ));

        let mut request = TileRequest::centered_at(0.0, 0.0);
        request.gsd_m = 0.5;
        assert!(matches!(
            provider.fetch_tile(&request),
            Err(FetchError::InvalidRequest(_))
        ));
    }

    #[test]
    fn unreachable_endpoint_is_retryable_and_retry_exhausts() {
        let provider = MockImageryProvider::unreachable();
        let request = TileRequest::centered_at(0.0, 0.0);
        assert!(matches!(
            provider.fetch_tile(&request),
            Err(FetchError::Retryable(_))
        ));
        let policy = RetryPolicy { max_attempts: 2, base_delay: Duration::from_millis(1) };
        assert!(matches!(
            fetch_with_retry(&provider, &request, policy),
            Err(FetchError::Retryable(_))
        ));
    }

    /// Fails transiently a fixed number of times, then serves.
    struct Flaky {
        failures_left: AtomicU32,
        inner: MockImageryProvider,
    }

    impl ImageryProvider for Flaky {
        fn fetch_tile(&self, request: &TileRequest) -> std::result::Result<Vec<u8>, FetchError> {
            let left = self.failures_left.load(Ordering::SeqCst);
            if left > 0 {
                self.failures_left.store(left - 1, Ordering::SeqCst);
                return Err(FetchError::Retryable("flaky".to_string()));
            }
            self.inner.fetch_tile(request)
        }
    }

    #[test]
    fn retry_recovers_from_transient_failures() {
        let provider = Flaky {
            failures_left: AtomicU32::new(2),
            inner: MockImageryProvider::new(),
        };
        let request = TileRequest::centered_at(1.0, 2.0);
        let policy = RetryPolicy { max_attempts: 3, base_delay: Duration::from_millis(1) };
        let bytes = fetch_with_retry(&provider, &request, policy).unwrap();
        assert_eq!(bytes, MockImageryProvider::new().fetch_tile(&request).unwrap());
    }

    #[test]
    fn grid_fetch_returns_tiles_in_order() {
        let provider = MockImageryProvider::new();
        let plan = plan_tiles(at(0.0, 0.0), Regime::Extended, None).unwrap();
        let tiles = fetch_grid(&provider, &plan.grid, RetryPolicy::default(), 4).unwrap();
        assert_eq!(tiles.len(), 9);
        for (request, bytes) in plan.grid.tiles.iter().zip(&tiles) {
            assert_eq!(bytes, &provider.fetch_tile(request).unwrap());
        }
    }
}
