//! Geographic coordinate extraction from article markup.
//!
//! Only the title-displayed coordinate template of a page is trusted: it is
//! the one that states where the subject itself is. Inline coordinates
//! mention other places and are ignored.

use serde::{Deserialize, Serialize};

use crate::dump::Article;
use crate::wikitext;

/// Which template family a coordinate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordForm {
    /// `{{coord|lat|lon|...}}` with signed decimal degrees.
    Decimal,
    /// `{{coord|d|m|s|N|d|m|s|E|...}}` and its shorter variants.
    Dms,
}

/// A validated article coordinate: `lat` in [-90, 90], `lon` in [-180, 180].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoCoordinate {
    pub lat: f64,
    pub lon: f64,
    pub form: CoordForm,
}

/// Compass hemisphere of one DMS half.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hemisphere {
    North,
    South,
    East,
    West,
}

impl Hemisphere {
    fn from_field(field: &str) -> Option<Hemisphere> {
        match field.trim() {
            f if f.eq_ignore_ascii_case("n") => Some(Hemisphere::North),
            f if f.eq_ignore_ascii_case("s") => Some(Hemisphere::South),
            f if f.eq_ignore_ascii_case("e") => Some(Hemisphere::East),
            f if f.eq_ignore_ascii_case("w") => Some(Hemisphere::West),
            _ => None,
        }
    }

    fn sign(self) -> f64 {
        match self {
            Hemisphere::North | Hemisphere::East => 1.0,
            Hemisphere::South | Hemisphere::West => -1.0,
        }
    }

    fn is_latitude(self) -> bool {
        matches!(self, Hemisphere::North | Hemisphere::South)
    }
}

/// Why a title-displayed template failed to yield a coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum CoordRejection {
    /// A positional field that should be a number is not.
    NonNumeric(String),
    /// Degrees, minutes or seconds are negative (signs belong on the
    /// hemisphere letter), or a hemisphere letter is missing or on the
    /// wrong axis.
    BadComponent,
    /// Minutes or seconds at or above 60.
    MinSecRange,
    /// The field count matches no known template shape.
    BadShape(usize),
    /// The resulting latitude or longitude is outside the valid range.
    OutOfRange { lat: f64, lon: f64 },
}

/// Outcome of scanning one page for its title coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum CoordOutcome {
    Found(GeoCoordinate),
    /// No title-displayed coordinate template on the page.
    NoTemplate,
    /// A title-displayed template exists but does not parse; the page is
    /// treated as non-geolocated and the reason is surfaced for tallies.
    Rejected(CoordRejection),
}

/// `deg + min/60 + sec/3600`, negated for south and west. Components must be
/// non-negative with minutes and seconds below 60.
pub fn dms_to_decimal(
    deg: f64,
    min: f64,
    sec: f64,
    hemi: Hemisphere,
) -> Result<f64, CoordRejection> {
    if !(deg >= 0.0 && min >= 0.0 && sec >= 0.0) {
        return Err(CoordRejection::BadComponent);
    }
    if min >= 60.0 || sec >= 60.0 {
        return Err(CoordRejection::MinSecRange);
    }
    Ok(hemi.sign() * (deg + min / 60.0 + sec / 3600.0))
}

/// Inverse of [`dms_to_decimal`] up to float rounding: whole degrees and
/// minutes, fractional seconds, hemisphere carrying the sign.
pub fn decimal_to_dms(value: f64, latitude: bool) -> (u32, u32, f64, Hemisphere) {
    let hemi = match (latitude, value < 0.0) {
        (true, false) => Hemisphere::North,
        (true, true) => Hemisphere::South,
        (false, false) => Hemisphere::East,
        (false, true) => Hemisphere::West,
    };
    let magnitude = value.abs();
    let deg = magnitude.floor();
    let rem_min = (magnitude - deg) * 60.0;
    let min = rem_min.floor();
    let sec = (rem_min - min) * 60.0;
    (deg as u32, min as u32, sec, hemi)
}

/// Scan markup for the first title-displayed coordinate template.
pub fn extract_coordinate_outcome(text: &str) -> CoordOutcome {
    let bytes = text.as_bytes();
    let mut i = 0;
    while let Some(rel) = find_subslice(&bytes[i..], b"{{") {
        let open = i + rel;
        i = open + 2;
        let Some(end) = wikitext::balanced_template_end(text, open) else {
            continue;
        };
        let block = &text[open..end];
        if !wikitext::template_name(block).eq_ignore_ascii_case("coord") {
            continue;
        }
        let fields = wikitext::template_fields(block);
        if !is_title_displayed(&fields) {
            continue;
        }
        // First title-displayed template decides; a later one cannot rescue
        // a page whose primary coordinate is broken.
        return match parse_coord_fields(&fields) {
            Ok(coord) => CoordOutcome::Found(coord),
            Err(rejection) => CoordOutcome::Rejected(rejection),
        };
    }
    CoordOutcome::NoTemplate
}

/// The coordinate of an article, if it has a valid title-displayed one.
pub fn extract_coordinate(article: &Article) -> Option<GeoCoordinate> {
    match extract_coordinate_outcome(&article.wikitext) {
        CoordOutcome::Found(coord) => Some(coord),
        _ => None,
    }
}

fn is_title_displayed(fields: &[&str]) -> bool {
    fields.iter().skip(1).any(|field| {
        let Some((key, value)) = field.split_once('=') else {
            return false;
        };
        key.trim().eq_ignore_ascii_case("display")
            && value.split(',').any(|part| part.trim().eq_ignore_ascii_case("title"))
    })
}

fn parse_coord_fields(fields: &[&str]) -> Result<GeoCoordinate, CoordRejection> {
    // Positional fields are the unnamed ones; `key=value` and `key:value`
    // fields configure display and metadata and carry no coordinate data.
    let positional: Vec<&str> = fields
        .iter()
        .skip(1)
        .filter(|f| !f.is_empty() && !f.contains('=') && !f.contains(':'))
        .copied()
        .collect();

    let (lat, lon, form) = match positional.len() {
        2 => {
            let lat = parse_number(positional[0])?;
            let lon = parse_number(positional[1])?;
            (lat, lon, CoordForm::Decimal)
        }
        4 => {
            let lat = parse_dms_half(&positional[0..1], positional[1], true)?;
            let lon = parse_dms_half(&positional[2..3], positional[3], false)?;
            (lat, lon, CoordForm::Dms)
        }
        6 => {
            let lat = parse_dms_half(&positional[0..2], positional[2], true)?;
            let lon = parse_dms_half(&positional[3..5], positional[5], false)?;
            (lat, lon, CoordForm::Dms)
        }
        8 => {
            let lat = parse_dms_half(&positional[0..3], positional[3], true)?;
            let lon = parse_dms_half(&positional[4..7], positional[7], false)?;
            (lat, lon, CoordForm::Dms)
        }
        n => return Err(CoordRejection::BadShape(n)),
    };

    if !(lat.is_finite() && lon.is_finite() && lat.abs() <= 90.0 && lon.abs() <= 180.0) {
        return Err(CoordRejection::OutOfRange { lat, lon });
    }
    Ok(GeoCoordinate { lat, lon, form })
}

/// One DMS half: 1 to 3 numeric fields followed by its hemisphere letter.
/// The hemisphere must sit on the matching axis, fixed by position: the
/// first half is latitude, the second longitude.
fn parse_dms_half(
    numbers: &[&str],
    hemi_field: &str,
    latitude: bool,
) -> Result<f64, CoordRejection> {
    let hemi = Hemisphere::from_field(hemi_field).ok_or(CoordRejection::BadComponent)?;
    if hemi.is_latitude() != latitude {
        return Err(CoordRejection::BadComponent);
    }
    let mut parts = [0.0f64; 3];
    for (slot, raw) in parts.iter_mut().zip(numbers) {
        *slot = parse_number(raw)?;
    }
    dms_to_decimal(parts[0], parts[1], parts[2], hemi)
}

fn parse_number(field: &str) -> Result<f64, CoordRejection> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| CoordRejection::NonNumeric(field.trim().to_string()))
}

fn find_subslice(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn found(text: &str) -> GeoCoordinate {
        match extract_coordinate_outcome(text) {
            CoordOutcome::Found(c) => c,
            other => panic!("expected a coordinate from {text:?}, got {other:?}"),
        }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9
    }

    #[test]
    fn decimal_template_parses_with_metadata_fields() {
        let c = found("{{coord|40.446|-79.982|region:US_type:city|display=title}}");
        assert!(close(c.lat, 40.446) && close(c.lon, -79.982));
        assert_eq!(c.form, CoordForm::Decimal);
    }

    #[test]
    fn dms_template_parses_all_components() {
        let c = found("{{coord|40|26|46|N|79|58|56|W|display=title}}");
        assert!(close(c.lat, 40.0 + 26.0 / 60.0 + 46.0 / 3600.0));
        assert!(close(c.lon, -(79.0 + 58.0 / 60.0 + 56.0 / 3600.0)));
        assert_eq!(c.form, CoordForm::Dms);
    }

    #[test]
    fn inline_coordinates_do_not_count() {
        let text = "{{coord|10|20}} and {{coord|10|20|display=inline}}";
        assert_eq!(extract_coordinate_outcome(text), CoordOutcome::NoTemplate);
    }

    #[test]
    fn first_title_displayed_template_wins() {
        let text = "{{coord|1|2|display=title}} {{coord|3|4|display=title}}";
        let c = found(text);
        assert!(close(c.lat, 1.0) && close(c.lon, 2.0));
    }

    #[test]
    fn broken_primary_template_is_not_rescued_by_a_later_one() {
        let text = "{{coord|95|0|0|N|10|0|0|E|display=title}} {{coord|3|4|display=title}}";
        assert!(matches!(
            extract_coordinate_outcome(text),
            CoordOutcome::Rejected(CoordRejection::OutOfRange { .. })
        ));
    }

    #[test]
    fn rejection_reasons_are_specific() {
        let cases: &[(&str, CoordRejection)] = &[
            (
                "{{coord|abc|12.3|display=title}}",
                CoordRejection::NonNumeric("abc".to_string()),
            ),
            ("{{coord|10|75|0|N|20|0|0|E|display=title}}", CoordRejection::MinSecRange),
            ("{{coord|10|0|75.5|N|20|0|0|E|display=title}}", CoordRejection::MinSecRange),
            ("{{coord|40|26|N|79|58|56|W|display=title}}", CoordRejection::BadShape(7)),
            ("{{coord|-40|26|46|N|79|58|56|W|display=title}}", CoordRejection::BadComponent),
            ("{{coord|40|26|46|E|79|58|56|W|display=title}}", CoordRejection::BadComponent),
            ("{{coord|12.5|display=title}}", CoordRejection::BadShape(1)),
            (
                "{{coord|95.0|10.0|display=title}}",
                CoordRejection::OutOfRange { lat: 95.0, lon: 10.0 },
            ),
        ];
        for (text, expected) in cases {
            match extract_coordinate_outcome(text) {
                CoordOutcome::Rejected(r) => assert_eq!(&r, expected, "for {text:?}"),
                other => panic!("expected rejection for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn hemisphere_axis_is_enforced_by_position() {
        // Longitude half must carry E or W.
        let text = "{{coord|40|26|46|N|79|58|56|S|display=title}}";
        assert!(matches!(
            extract_coordinate_outcome(text),
            CoordOutcome::Rejected(CoordRejection::BadComponent)
        ));
    }

    #[test]
    fn coordinate_fixture_table() {
        // Hand-checked snippets: expected values are written as the
        // arithmetic that defines them, not as rounded constants.
        let found_cases: &[(&str, f64, f64, CoordForm)] = &[
            ("{{coord|40.446|-79.982|display=title}}", 40.446, -79.982, CoordForm::Decimal),
            ("{{coord|0.3136|32.5811|display=title}}", 0.3136, 32.5811, CoordForm::Decimal),
            ("{{coord|-26.2041|28.0473|display=title}}", -26.2041, 28.0473, CoordForm::Decimal),
            ("{{Coord|48.8566|2.3522|display=title}}", 48.8566, 2.3522, CoordForm::Decimal),
            ("{{ coord |51.5|-0.1|display=title}}", 51.5, -0.1, CoordForm::Decimal),
            ("{{coord|90|180|display=title}}", 90.0, 180.0, CoordForm::Decimal),
            ("{{coord|-90|-180|display=title}}", -90.0, -180.0, CoordForm::Decimal),
            ("{{coord|0|0|display=title}}", 0.0, 0.0, CoordForm::Decimal),
            (
                "{{coord|12.5|region:KE|30.25|display=title|name=X}}",
                12.5,
                30.25,
                CoordForm::Decimal,
            ),
            ("{{coord|1.5|2.5|display=inline,title}}", 1.5, 2.5, CoordForm::Decimal),
            ("{{coord|1.5|2.5|display=title,inline}}", 1.5, 2.5, CoordForm::Decimal),
            ("{{coord|1.5|2.5|display = TITLE }}", 1.5, 2.5, CoordForm::Decimal),
            ("pre {{coord|7.25|-3.5|display=title}} post", 7.25, -3.5, CoordForm::Decimal),
            (
                "{{Infobox place|coordinates={{coord|5.5|6.5|display=title}}}}",
                5.5,
                6.5,
                CoordForm::Decimal,
            ),
            (
                "{{coord|40|26|46|N|79|58|56|W|display=title}}",
                40.0 + 26.0 / 60.0 + 46.0 / 3600.0,
                -(79.0 + 58.0 / 60.0 + 56.0 / 3600.0),
                CoordForm::Dms,
            ),
            (
                "{{coord|3|4|2|S|37|21|20|E|display=title}}",
                -(3.0 + 4.0 / 60.0 + 2.0 / 3600.0),
                37.0 + 21.0 / 60.0 + 20.0 / 3600.0,
                CoordForm::Dms,
            ),
            (
                "{{coord|23|58|13|n|32|52|38|e|display=title}}",
                23.0 + 58.0 / 60.0 + 13.0 / 3600.0,
                32.0 + 52.0 / 60.0 + 38.0 / 3600.0,
                CoordForm::Dms,
            ),
            (
                "{{coord|0|30|0|S|90|0|0|W|display=title}}",
                -0.5,
                -90.0,
                CoordForm::Dms,
            ),
            (
                "{{coord|10|20|30.5|N|60|50|40.25|E|display=title}}",
                10.0 + 20.0 / 60.0 + 30.5 / 3600.0,
                60.0 + 50.0 / 60.0 + 40.25 / 3600.0,
                CoordForm::Dms,
            ),
            ("{{coord|40|N|79|W|display=title}}", 40.0, -79.0, CoordForm::Dms),
            ("{{coord|6|N|3|E|display=title}}", 6.0, 3.0, CoordForm::Dms),
            ("{{coord|6|S|30|E|display=title}}", -6.0, 30.0, CoordForm::Dms),
            ("{{coord|12.5|N|30.25|E|display=title}}", 12.5, 30.25, CoordForm::Dms),
            (
                "{{coord|5|20|N|4|2|W|display=title}}",
                5.0 + 20.0 / 60.0,
                -(4.0 + 2.0 / 60.0),
                CoordForm::Dms,
            ),
            (
                "{{coord|26|6|S|28|6|E|display=title}}",
                -(26.0 + 6.0 / 60.0),
                28.0 + 6.0 / 60.0,
                CoordForm::Dms,
            ),
            (
                "{{coord|30|3|N|31|15|E|display=title}}",
                30.0 + 3.0 / 60.0,
                31.0 + 15.0 / 60.0,
                CoordForm::Dms,
            ),
            (
                "{{coord|0|59.9|N|0|59.9|E|display=title}}",
                59.9 / 60.0,
                59.9 / 60.0,
                CoordForm::Dms,
            ),
            (
                "{{coord|40|26|46|N|79|58|56|W|type:landmark|display=title|name=Y}}",
                40.0 + 26.0 / 60.0 + 46.0 / 3600.0,
                -(79.0 + 58.0 / 60.0 + 56.0 / 3600.0),
                CoordForm::Dms,
            ),
            (
                "{{coord|89|59|59|N|179|59|59|E|display=title}}",
                89.0 + 59.0 / 60.0 + 59.0 / 3600.0,
                179.0 + 59.0 / 60.0 + 59.0 / 3600.0,
                CoordForm::Dms,
            ),
            (
                "{{coord|90|0|0|S|180|0|0|W|display=title}}",
                -90.0,
                -180.0,
                CoordForm::Dms,
            ),
        ];
        for (text, lat, lon, form) in found_cases {
            let c = found(text);
            assert!(
                close(c.lat, *lat) && close(c.lon, *lon),
                "{text:?}: got ({}, {}), want ({lat}, {lon})",
                c.lat,
                c.lon
            );
            assert_eq!(c.form, *form, "{text:?}");
        }

        let absent_cases: &[&str] = &[
            "",
            "no templates at all",
            "{{coord|10|20}}",
            "{{coord|10|20|display=inline}}",
            "{{coords|10|20|display=title}}",
            "{{coordinate|10|20|display=title}}",
            "{{coord|10|20|display=titles}}",
            "{{Infobox place|coordinates={{coord|5.5|6.5}}}}",
            "{{coord|10|20|display=title",
            "plain {{other|display=title}} text",
        ];
        for text in absent_cases {
            assert_eq!(
                extract_coordinate_outcome(text),
                CoordOutcome::NoTemplate,
                "{text:?}"
            );
        }

        let rejected_cases: &[&str] = &[
            "{{coord|95|0|0|N|10|0|0|E|display=title}}",
            "{{coord|abc|12.3|display=title}}",
            "{{coord|10|75|0|N|20|0|0|E|display=title}}",
            "{{coord|10|0|60|N|20|0|0|E|display=title}}",
            "{{coord|40|26|N|79|58|56|W|display=title}}",
            "{{coord|1|2|3|display=title}}",
            "{{coord|1|2|3|4|5|display=title}}",
            "{{coord|-1|30|S|10|0|E|display=title}}",
            "{{coord|10|20|X|30|40|Y|display=title}}",
            "{{coord|40|N|79|Q|display=title}}",
            "{{coord|181|0|display=title}}",
            "{{coord|40|26|46|W|79|58|56|N|display=title}}",
        ];
        for text in rejected_cases {
            assert!(
                matches!(extract_coordinate_outcome(text), CoordOutcome::Rejected(_)),
                "{text:?} should be rejected"
            );
        }
    }

    #[test]
    fn dms_conversion_matches_hand_arithmetic() {
        let v = dms_to_decimal(40.0, 26.0, 46.0, Hemisphere::North).unwrap();
        assert!(close(v, 40.0 + 26.0 / 60.0 + 46.0 / 3600.0));
        let v = dms_to_decimal(79.0, 58.0, 56.0, Hemisphere::West).unwrap();
        assert!(close(v, -(79.0 + 58.0 / 60.0 + 56.0 / 3600.0)));
        let v = dms_to_decimal(0.0, 30.0, 0.0, Hemisphere::South).unwrap();
        assert!(close(v, -0.5));
    }

    #[test]
    fn dms_component_validation() {
        assert_eq!(
            dms_to_decimal(10.0, 60.0, 0.0, Hemisphere::North),
            Err(CoordRejection::MinSecRange)
        );
        assert_eq!(
            dms_to_decimal(10.0, 0.0, 60.0, Hemisphere::North),
            Err(CoordRejection::MinSecRange)
        );
        assert_eq!(
            dms_to_decimal(-1.0, 0.0, 0.0, Hemisphere::North),
            Err(CoordRejection::BadComponent)
        );
        assert_eq!(
            dms_to_decimal(10.0, -0.5, 0.0, Hemisphere::East),
            Err(CoordRejection::BadComponent)
        );
    }

    #[test]
    fn decimal_to_dms_decomposes_with_sign_on_hemisphere() {
        let (d, m, s, h) = decimal_to_dms(-(79.0 + 58.0 / 60.0 + 56.0 / 3600.0), false);
        assert_eq!((d, m), (79, 58));
        assert!((s - 56.0).abs() < 1e-6);
        assert_eq!(h, Hemisphere::West);

        let (d, m, s, h) = decimal_to_dms(0.5, true);
        assert_eq!((d, m, h), (0, 30, Hemisphere::North));
        assert!(s.abs() < 1e-9);
    }

    proptest::proptest! {
        // Round trip: decompose then recompose lands on the same value.
        #[test]
        fn dms_round_trip(value in -90.0f64..=90.0, latitude in proptest::bool::ANY) {
            let scaled = if latitude { value } else { value * 2.0 };
            let (d, m, s, h) = decimal_to_dms(scaled, latitude);
            let back = dms_to_decimal(d as f64, m as f64, s, h).unwrap();
            proptest::prop_assert!((back - scaled).abs() < 1e-9);
        }

        // South and west always negate, north and east never do.
        #[test]
        fn hemisphere_controls_sign(deg in 0.0f64..=89.0, min in 0.0f64..60.0, sec in 0.0f64..60.0) {
            let n = dms_to_decimal(deg, min, sec, Hemisphere::North).unwrap();
            let s = dms_to_decimal(deg, min, sec, Hemisphere::South).unwrap();
            let e = dms_to_decimal(deg, min, sec, Hemisphere::East).unwrap();
            let w = dms_to_decimal(deg, min, sec, Hemisphere::West).unwrap();
            proptest::prop_assert!(n >= 0.0 && e >= 0.0);
            proptest::prop_assert_eq!(n, -s);
            proptest::prop_assert_eq!(e, -w);
        }
    }
}
