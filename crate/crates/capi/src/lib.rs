//! C bindings for the wikisat pipeline.
//!
//! Conventions, which every function follows:
//!
//! - Fallible calls return a [`WikisatStatus`]; outputs travel through
//!   pointers and are written only on `OK` (lookup misses return
//!   `NOT_FOUND` and null out the result).
//! - On any non-`OK` status a message describing the failure is stored per
//!   thread; [`wikisat_last_error`] returns it. The pointer stays valid
//!   until the next failing call on the same thread.
//! - Returned strings are owned by the caller and must be released with
//!   [`wikisat_string_free`]. Handles (`WikisatHierarchy`,
//!   `WikisatRegimes`) are opaque and have a matching `_free` function.
//! - String arguments must be NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;

use wikisat::geo::{self, CoordOutcome, CoordRejection, Hemisphere};
use wikisat::labeler::{self, KeywordHierarchy, MatchChannel, RawLabel};
use wikisat::pipeline::PipelineConfig;
use wikisat::tiles::{self, Regime, RegimeConfig};
use wikisat::Error;

/// What a call did. Anything other than `Ok` leaves a message for
/// [`wikisat_last_error`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WikisatStatus {
    /// The call succeeded.
    Ok = 0,
    /// A fatal runtime failure: I/O, malformed input, an ill-conditioned
    /// computation.
    RuntimeError = 1,
    /// Bad configuration: unreadable config files, schema violations,
    /// inconsistent options.
    ConfigError = 2,
    /// A pointer was null, a string was not UTF-8, or a value was out of
    /// its documented range.
    BadArgument = 3,
    /// The input was understood but holds no answer (no coordinate, no
    /// infobox term, no area field).
    NotFound = 4,
    /// An internal invariant failed; the library state is still sound.
    Panic = 5,
}

/// How a subject is captured: one tile, a fixed 3 x 3 grid, or a grid sized
/// from the subject's reported surface area.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WikisatRegime {
    Point = 0,
    Extended = 1,
    Area = 2,
}

/// Which evidence produced a keyword label.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WikisatMatchChannel {
    /// The infobox term matched.
    RawLabel = 0,
    /// A category name matched.
    Category = 1,
    /// No keyword matched; the subject carries no label.
    Unlabeled = 2,
}

/// One imagery request: a square crop centered on a point.
/// `size_m == gsd_m * pixels` always holds.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WikisatTile {
    pub lat: f64,
    pub lon: f64,
    pub size_m: f64,
    pub gsd_m: f64,
    pub pixels: u32,
}

/// Ordered clusters of ordered keywords; the labeling priority structure.
pub struct WikisatHierarchy(KeywordHierarchy);

/// Which keywords get which capture regime.
pub struct WikisatRegimes(RegimeConfig);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

/// Record `message` and pass `status` through, so call sites read
/// `return fail(...)`.
fn fail(status: WikisatStatus, message: impl ToString) -> WikisatStatus {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(text).expect("NULs were just removed");
    });
    status
}

fn error_status(error: &Error) -> WikisatStatus {
    match error {
        Error::Config(_) => WikisatStatus::ConfigError,
        _ => WikisatStatus::RuntimeError,
    }
}

/// Run `body` with a panic barrier: unwinding must not cross the FFI
/// boundary.
fn guarded(body: impl FnOnce() -> WikisatStatus) -> WikisatStatus {
    match panic::catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(WikisatStatus::Panic, "internal panic"),
    }
}

/// Borrow a required UTF-8 string argument.
///
/// # Safety
/// `ptr`, when non-null, must point to a NUL-terminated buffer that outlives
/// the borrow.
unsafe fn str_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, WikisatStatus> {
    if ptr.is_null() {
        return Err(fail(WikisatStatus::BadArgument, format!("{name} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(WikisatStatus::BadArgument, format!("{name} is not valid UTF-8")))
}

/// Hand a string to the caller; it must come back through
/// [`wikisat_string_free`].
fn give_string(text: &str) -> *mut c_char {
    CString::new(text.replace('\0', " "))
        .expect("NULs were just removed")
        .into_raw()
}

fn describe_rejection(rejection: &CoordRejection) -> String {
    match rejection {
        CoordRejection::NonNumeric(field) => format!("field {field:?} is not a number"),
        CoordRejection::BadComponent => {
            "negative component, or a hemisphere letter missing or on the wrong axis".to_string()
        }
        CoordRejection::MinSecRange => "minutes or seconds at or above 60".to_string(),
        CoordRejection::BadShape(count) => {
            format!("{count} positional fields match no known template shape")
        }
        CoordRejection::OutOfRange { lat, lon } => {
            format!("latitude {lat} / longitude {lon} is out of range")
        }
    }
}

/// The library version as a static string; never null, never freed.
#[no_mangle]
pub extern "C" fn wikisat_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// The message of the most recent failure on the calling thread, empty
/// before the first failure. Never null; owned by the library.
#[no_mangle]
pub extern "C" fn wikisat_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Release a string returned by this library. Null is a no-op.
///
/// # Safety
/// `text` must have been returned by a `wikisat_` function and not freed
/// before.
#[no_mangle]
pub unsafe extern "C" fn wikisat_string_free(text: *mut c_char) {
    if !text.is_null() {
        drop(CString::from_raw(text));
    }
}

/// The keyword hierarchy shipped with the library. Never null.
#[no_mangle]
pub extern "C" fn wikisat_hierarchy_default() -> *mut WikisatHierarchy {
    Box::into_raw(Box::new(WikisatHierarchy(KeywordHierarchy::shipped_default())))
}

/// Parse a hierarchy from configuration text. On success `*out` owns the
/// handle; on failure it is null.
///
/// # Safety
/// `text` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wikisat_hierarchy_from_toml(
    text: *const c_char,
    out: *mut *mut WikisatHierarchy,
) -> WikisatStatus {
    guarded(|| {
        if out.is_null() {
            return fail(WikisatStatus::BadArgument, "out is null");
        }
        *out = std::ptr::null_mut();
        let text = match str_arg(text, "text") {
            Ok(text) => text,
            Err(status) => return status,
        };
        match KeywordHierarchy::from_toml_str(text) {
            Ok(hierarchy) => {
                *out = Box::into_raw(Box::new(WikisatHierarchy(hierarchy)));
                WikisatStatus::Ok
            }
            Err(error) => fail(error_status(&error), error),
        }
    })
}

/// Load a hierarchy from a configuration file. On success `*out` owns the
/// handle; on failure it is null.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wikisat_hierarchy_load(
    path: *const c_char,
    out: *mut *mut WikisatHierarchy,
) -> WikisatStatus {
    guarded(|| {
        if out.is_null() {
            return fail(WikisatStatus::BadArgument, "out is null");
        }
        *out = std::ptr::null_mut();
        let path = match str_arg(path, "path") {
            Ok(path) => path,
            Err(status) => return status,
        };
        match KeywordHierarchy::load(Path::new(path)) {
            Ok(hierarchy) => {
                *out = Box::into_raw(Box::new(WikisatHierarchy(hierarchy)));
                WikisatStatus::Ok
            }
            Err(error) => fail(error_status(&error), error),
        }
    })
}

/// Total keywords across all clusters; 0 for a null handle.
///
/// # Safety
/// `hierarchy`, when non-null, must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn wikisat_hierarchy_keyword_count(
    hierarchy: *const WikisatHierarchy,
) -> usize {
    match hierarchy.as_ref() {
        Some(handle) => handle.0.iter_keywords().count(),
        None => 0,
    }
}

/// Release a hierarchy handle. Null is a no-op.
///
/// # Safety
/// `hierarchy` must not be used after this call.
#[no_mangle]
pub unsafe extern "C" fn wikisat_hierarchy_free(hierarchy: *mut WikisatHierarchy) {
    if !hierarchy.is_null() {
        drop(Box::from_raw(hierarchy));
    }
}

/// The regime sets shipped with the library. Never null.
#[no_mangle]
pub extern "C" fn wikisat_regimes_default() -> *mut WikisatRegimes {
    Box::into_raw(Box::new(WikisatRegimes(RegimeConfig::default())))
}

/// Parse regime sets from configuration text. On success `*out` owns the
/// handle; on failure it is null.
///
/// # Safety
/// `text` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wikisat_regimes_from_toml(
    text: *const c_char,
    out: *mut *mut WikisatRegimes,
) -> WikisatStatus {
    guarded(|| {
        if out.is_null() {
            return fail(WikisatStatus::BadArgument, "out is null");
        }
        *out = std::ptr::null_mut();
        let text = match str_arg(text, "text") {
            Ok(text) => text,
            Err(status) => return status,
        };
        match RegimeConfig::from_toml_str(text) {
            Ok(regimes) => {
                *out = Box::into_raw(Box::new(WikisatRegimes(regimes)));
                WikisatStatus::Ok
            }
            Err(error) => fail(error_status(&error), error),
        }
    })
}

/// Load regime sets from a configuration file. On success `*out` owns the
/// handle; on failure it is null.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wikisat_regimes_load(
    path: *const c_char,
    out: *mut *mut WikisatRegimes,
) -> WikisatStatus {
    guarded(|| {
        if out.is_null() {
            return fail(WikisatStatus::BadArgument, "out is null");
        }
        *out = std::ptr::null_mut();
        let path = match str_arg(path, "path") {
            Ok(path) => path,
            Err(status) => return status,
        };
        match RegimeConfig::load(Path::new(path)) {
            Ok(regimes) => {
                *out = Box::into_raw(Box::new(WikisatRegimes(regimes)));
                WikisatStatus::Ok
            }
            Err(error) => fail(error_status(&error), error),
        }
    })
}

/// The capture regime of a keyword. Keywords in no configured set are
/// point subjects.
///
/// # Safety
/// `regimes` must be a live handle; `keyword` NUL-terminated; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn wikisat_regimes_classify(
    regimes: *const WikisatRegimes,
    keyword: *const c_char,
    out: *mut WikisatRegime,
) -> WikisatStatus {
    guarded(|| {
        let Some(handle) = regimes.as_ref() else {
            return fail(WikisatStatus::BadArgument, "regimes is null");
        };
        if out.is_null() {
            return fail(WikisatStatus::BadArgument, "out is null");
        }
        let keyword = match str_arg(keyword, "keyword") {
            Ok(keyword) => keyword,
            Err(status) => return status,
        };
        *out = match handle.0.classify(keyword) {
            Regime::Point => WikisatRegime::Point,
            Regime::Extended => WikisatRegime::Extended,
            Regime::Area => WikisatRegime::Area,
        };
        WikisatStatus::Ok
    })
}

/// Release a regimes handle. Null is a no-op.
///
/// # Safety
/// `regimes` must not be used after this call.
#[no_mangle]
pub unsafe extern "C" fn wikisat_regimes_free(regimes: *mut WikisatRegimes) {
    if !regimes.is_null() {
        drop(Box::from_raw(regimes));
    }
}

/// Scan markup for the page's title-displayed coordinate.
///
/// `NOT_FOUND` covers both a page without such a template and one whose
/// template does not parse; the error message tells them apart.
///
/// # Safety
/// `wikitext` must be NUL-terminated; `out_lat` and `out_lon` writable.
#[no_mangle]
pub unsafe extern "C" fn wikisat_extract_coordinate(
    wikitext: *const c_char,
    out_lat: *mut f64,
    out_lon: *mut f64,
) -> WikisatStatus {
    guarded(|| {
        if out_lat.is_null() || out_lon.is_null() {
            return fail(WikisatStatus::BadArgument, "out_lat or out_lon is null");
        }
        let text = match str_arg(wikitext, "wikitext") {
            Ok(text) => text,
            Err(status) => return status,
        };
        match geo::extract_coordinate_outcome(text) {
            CoordOutcome::Found(coord) => {
                *out_lat = coord.lat;
                *out_lon = coord.lon;
                WikisatStatus::Ok
            }
            CoordOutcome::NoTemplate => fail(
                WikisatStatus::NotFound,
                "no title-displayed coordinate template",
            ),
            CoordOutcome::Rejected(rejection) => {
                fail(WikisatStatus::NotFound, describe_rejection(&rejection))
            }
        }
    })
}

/// `deg + min/60 + sec/3600`, negated for south and west.
///
/// `hemisphere` is one of `N`, `S`, `E`, `W` (either case). Components must
/// be non-negative with minutes and seconds below 60.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wikisat_dms_to_decimal(
    degrees: f64,
    minutes: f64,
    seconds: f64,
    hemisphere: c_char,
    out: *mut f64,
) -> WikisatStatus {
    guarded(|| {
        if out.is_null() {
            return fail(WikisatStatus::BadArgument, "out is null");
        }
        let hemi = match (hemisphere as u8).to_ascii_uppercase() {
            b'N' => Hemisphere::North,
            b'S' => Hemisphere::South,
            b'E' => Hemisphere::East,
            b'W' => Hemisphere::West,
            other => {
                return fail(
                    WikisatStatus::BadArgument,
                    format!("hemisphere {:?} is not one of N, S, E, W", other as char),
                )
            }
        };
        match geo::dms_to_decimal(degrees, minutes, seconds, hemi) {
            Ok(value) => {
                *out = value;
                WikisatStatus::Ok
            }
            Err(rejection) => fail(WikisatStatus::BadArgument, describe_rejection(&rejection)),
        }
    })
}

/// Split a decimal coordinate into whole degrees and minutes, fractional
/// seconds, and a hemisphere letter (`N`/`S` when `is_latitude`, `E`/`W`
/// otherwise) carrying the sign.
///
/// # Safety
/// All four out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn wikisat_decimal_to_dms(
    value: f64,
    is_latitude: bool,
    out_degrees: *mut u32,
    out_minutes: *mut u32,
    out_seconds: *mut f64,
    out_hemisphere: *mut c_char,
) -> WikisatStatus {
    guarded(|| {
        if out_degrees.is_null()
            || out_minutes.is_null()
            || out_seconds.is_null()
            || out_hemisphere.is_null()
        {
            return fail(WikisatStatus::BadArgument, "an out pointer is null");
        }
        if !value.is_finite() {
            return fail(WikisatStatus::BadArgument, format!("value {value} is not finite"));
        }
        let (deg, min, sec, hemi) = geo::decimal_to_dms(value, is_latitude);
        *out_degrees = deg;
        *out_minutes = min;
        *out_seconds = sec;
        *out_hemisphere = match hemi {
            Hemisphere::North => b'N',
            Hemisphere::South => b'S',
            Hemisphere::East => b'E',
            Hemisphere::West => b'W',
        } as c_char;
        WikisatStatus::Ok
    })
}

/// The infobox term of an isolated infobox block: template name with the
/// leading `Infobox` word removed, normalized. `NOT_FOUND` without one.
///
/// # Safety
/// `infobox` must be NUL-terminated; `out_label` writable.
#[no_mangle]
pub unsafe extern "C" fn wikisat_raw_label_from_infobox(
    infobox: *const c_char,
    out_label: *mut *mut c_char,
) -> WikisatStatus {
    guarded(|| {
        if out_label.is_null() {
            return fail(WikisatStatus::BadArgument, "out_label is null");
        }
        *out_label = std::ptr::null_mut();
        let block = match str_arg(infobox, "infobox") {
            Ok(block) => block,
            Err(status) => return status,
        };
        match labeler::raw_label_from_infobox(block) {
            Some(label) => {
                *out_label = give_string(label.as_str());
                WikisatStatus::Ok
            }
            None => fail(WikisatStatus::NotFound, "no infobox term"),
        }
    })
}

/// The surface area in square kilometers stated by an infobox block, keys
/// tried in a fixed priority order. `NOT_FOUND` without a parseable value.
///
/// # Safety
/// `infobox` must be NUL-terminated; `out_area` writable.
#[no_mangle]
pub unsafe extern "C" fn wikisat_infobox_area_km2(
    infobox: *const c_char,
    out_area: *mut f64,
) -> WikisatStatus {
    guarded(|| {
        if out_area.is_null() {
            return fail(WikisatStatus::BadArgument, "out_area is null");
        }
        let block = match str_arg(infobox, "infobox") {
            Ok(block) => block,
            Err(status) => return status,
        };
        match tiles::parse_area_field(block) {
            Some(area) => {
                *out_area = area;
                WikisatStatus::Ok
            }
            None => fail(WikisatStatus::NotFound, "no parseable area field"),
        }
    })
}

/// Assign a keyword label: walk the hierarchy in order, trying the raw
/// label and then the categories for each keyword; the first hit decides.
///
/// `raw_label` may be null when the article has no infobox term.
/// `categories` holds `category_count` NUL-terminated names. When no
/// keyword matches, the call still returns `OK` with both strings null and
/// the channel `UNLABELED`.
///
/// # Safety
/// `hierarchy` must be a live handle; every category pointer non-null and
/// NUL-terminated; the three out pointers writable.
#[no_mangle]
pub unsafe extern "C" fn wikisat_assign_label(
    hierarchy: *const WikisatHierarchy,
    raw_label: *const c_char,
    categories: *const *const c_char,
    category_count: usize,
    out_keyword: *mut *mut c_char,
    out_cluster: *mut *mut c_char,
    out_channel: *mut WikisatMatchChannel,
) -> WikisatStatus {
    guarded(|| {
        let Some(handle) = hierarchy.as_ref() else {
            return fail(WikisatStatus::BadArgument, "hierarchy is null");
        };
        if out_keyword.is_null() || out_cluster.is_null() || out_channel.is_null() {
            return fail(WikisatStatus::BadArgument, "an out pointer is null");
        }
        *out_keyword = std::ptr::null_mut();
        *out_cluster = std::ptr::null_mut();
        let raw = if raw_label.is_null() {
            None
        } else {
            match str_arg(raw_label, "raw_label") {
                // An all-whitespace term normalizes to nothing: no raw label.
                Ok(term) => RawLabel::new(term),
                Err(status) => return status,
            }
        };
        if category_count > 0 && categories.is_null() {
            return fail(WikisatStatus::BadArgument, "categories is null");
        }
        let mut names = Vec::with_capacity(category_count);
        for i in 0..category_count {
            match str_arg(*categories.add(i), &format!("categories[{i}]")) {
                Ok(name) => names.push(name.to_string()),
                Err(status) => return status,
            }
        }
        let assignment = labeler::assign_keyword_label(raw.as_ref(), &names, &handle.0);
        if let (Some(keyword), Some(cluster)) = (&assignment.keyword, &assignment.cluster) {
            *out_keyword = give_string(keyword);
            *out_cluster = give_string(cluster);
        }
        *out_channel = match assignment.matched_via {
            MatchChannel::RawLabel => WikisatMatchChannel::RawLabel,
            MatchChannel::Category => WikisatMatchChannel::Category,
            MatchChannel::Unlabeled => WikisatMatchChannel::Unlabeled,
        };
        WikisatStatus::Ok
    })
}

/// Plan the tile grid for a subject, row-major from the southwest corner.
///
/// `area_km2` feeds the area regime; pass NaN, zero or a negative value
/// when no area is known (the plan then degrades to a single tile). The
/// call always writes the tile count to `*out_count`; pass a null `tiles`
/// to query the count, then call again with a buffer of at least that
/// capacity.
///
/// # Safety
/// `tiles`, when non-null, must point to `capacity` writable elements;
/// `out_count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wikisat_plan_tiles(
    lat: f64,
    lon: f64,
    regime: WikisatRegime,
    area_km2: f64,
    tiles: *mut WikisatTile,
    capacity: usize,
    out_count: *mut usize,
) -> WikisatStatus {
    guarded(|| {
        if out_count.is_null() {
            return fail(WikisatStatus::BadArgument, "out_count is null");
        }
        *out_count = 0;
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return fail(
                WikisatStatus::BadArgument,
                format!("({lat}, {lon}) is not a valid coordinate"),
            );
        }
        let coord = wikisat::geo::GeoCoordinate {
            lat,
            lon,
            form: wikisat::geo::CoordForm::Decimal,
        };
        let regime = match regime {
            WikisatRegime::Point => Regime::Point,
            WikisatRegime::Extended => Regime::Extended,
            WikisatRegime::Area => Regime::Area,
        };
        let area = (area_km2.is_finite() && area_km2 > 0.0).then_some(area_km2);
        let plan = match tiles::plan_tiles(coord, regime, area) {
            Ok(plan) => plan,
            Err(error @ Error::PolarLatitude(_)) => {
                return fail(WikisatStatus::BadArgument, error)
            }
            Err(error) => return fail(error_status(&error), error),
        };
        *out_count = plan.grid.tiles.len();
        if tiles.is_null() {
            return WikisatStatus::Ok;
        }
        if capacity < plan.grid.tiles.len() {
            return fail(
                WikisatStatus::BadArgument,
                format!("capacity {capacity} holds fewer than {} tiles", plan.grid.tiles.len()),
            );
        }
        for (i, tile) in plan.grid.tiles.iter().enumerate() {
            *tiles.add(i) = WikisatTile {
                lat: tile.center_lat,
                lon: tile.center_lon,
                size_m: tile.size_m,
                gsd_m: tile.gsd_m,
                pixels: tile.pixels,
            };
        }
        WikisatStatus::Ok
    })
}

/// Run the whole pipeline as configured by the file at `config_path`;
/// stage outputs land in the configured output directory.
///
/// When `out_report_json` is non-null it receives the run report as a JSON
/// string, owned by the caller.
///
/// # Safety
/// `config_path` must be NUL-terminated; `out_report_json`, when non-null,
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn wikisat_run_pipeline(
    config_path: *const c_char,
    out_report_json: *mut *mut c_char,
) -> WikisatStatus {
    guarded(|| {
        if !out_report_json.is_null() {
            *out_report_json = std::ptr::null_mut();
        }
        let path = match str_arg(config_path, "config_path") {
            Ok(path) => path,
            Err(status) => return status,
        };
        let config = match PipelineConfig::load(Path::new(path)) {
            Ok(config) => config,
            Err(error) => return fail(error_status(&error), error),
        };
        let report = match wikisat::pipeline::run_full(&config) {
            Ok(report) => report,
            Err(error) => return fail(error_status(&error), error),
        };
        if !out_report_json.is_null() {
            let json = match serde_json::to_string(&report) {
                Ok(json) => json,
                Err(error) => return fail(WikisatStatus::RuntimeError, error),
            };
            *out_report_json = give_string(&json);
        }
        WikisatStatus::Ok
    })
}
