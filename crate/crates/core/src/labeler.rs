//! Weak labeling of articles.
//!
//! The raw label is the infobox template's own term ("bridge" from
//! `{{Infobox bridge}}`). A curated keyword hierarchy then maps the raw
//! label, or failing that the categories, onto a fixed keyword vocabulary.
//! The hierarchy is ordered: earlier clusters, and earlier keywords within a
//! cluster, win. That ordering is the whole disambiguation mechanism, so it
//! is preserved exactly as configured.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dump::Article;
use crate::error::{Error, Result};
use crate::geo::GeoCoordinate;
use crate::wikitext;

/// Normalized infobox term: lowercase, single-spaced, non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawLabel(String);

impl RawLabel {
    pub fn new(term: &str) -> Option<RawLabel> {
        let normalized = wikitext::normalize_label(term);
        if normalized.is_empty() {
            None
        } else {
            Some(RawLabel(normalized))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RawLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One ordered group of keywords sharing a theme and a visual-class flag.
/// Non-visual clusters mark subjects that leave no stable footprint in
/// overhead imagery (events, people, organizations).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub name: String,
    pub visual: bool,
    pub keywords: Vec<String>,
}

/// The ordered keyword clusters. Construction validates everything the
/// matcher relies on; an instance is always internally consistent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordHierarchy {
    clusters: Vec<Cluster>,
}

#[derive(Deserialize)]
struct HierarchyFile {
    clusters: Vec<Cluster>,
}

impl KeywordHierarchy {
    /// Validates: at least one cluster, unique cluster names, non-empty and
    /// globally unique keywords. Keywords are normalized on the way in.
    pub fn new(clusters: Vec<Cluster>) -> Result<KeywordHierarchy> {
        if clusters.is_empty() {
            return Err(Error::Config("hierarchy has no clusters".to_string()));
        }
        let mut names = HashSet::new();
        let mut seen = HashSet::new();
        let mut normalized = Vec::with_capacity(clusters.len());
        for cluster in clusters {
            if !names.insert(cluster.name.clone()) {
                return Err(Error::Config(format!(
                    "duplicate cluster name {:?}",
                    cluster.name
                )));
            }
            let mut keywords = Vec::with_capacity(cluster.keywords.len());
            for keyword in &cluster.keywords {
                let keyword = wikitext::normalize_label(keyword);
                if keyword.is_empty() {
                    return Err(Error::Config(format!(
                        "cluster {:?} has an empty keyword",
                        cluster.name
                    )));
                }
                if !seen.insert(keyword.clone()) {
                    return Err(Error::Config(format!(
                        "keyword {keyword:?} appears more than once"
                    )));
                }
                keywords.push(keyword);
            }
            normalized.push(Cluster { keywords, ..cluster });
        }
        Ok(KeywordHierarchy { clusters: normalized })
    }

    pub fn from_toml_str(text: &str) -> Result<KeywordHierarchy> {
        let file: HierarchyFile = toml::from_str(text)
            .map_err(|e| Error::Config(format!("hierarchy: {e}")))?;
        KeywordHierarchy::new(file.clusters)
    }

    pub fn load(path: &Path) -> Result<KeywordHierarchy> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read hierarchy {}: {e}", path.display()))
        })?;
        KeywordHierarchy::from_toml_str(&text)
    }

    /// The hierarchy this repository ships as its default configuration.
    pub fn shipped_default() -> KeywordHierarchy {
        KeywordHierarchy::from_toml_str(include_str!(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../data/hierarchy.toml"
        )))
        .expect("shipped hierarchy must be valid")
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    /// Keywords in priority order, tagged with their cluster.
    pub fn iter_keywords(&self) -> impl Iterator<Item = (&str, &Cluster)> {
        self.clusters
            .iter()
            .flat_map(|c| c.keywords.iter().map(move |k| (k.as_str(), c)))
    }

    pub fn cluster_of(&self, keyword: &str) -> Option<&Cluster> {
        self.clusters
            .iter()
            .find(|c| c.keywords.iter().any(|k| k == keyword))
    }

    /// Keywords of visual clusters, in priority order.
    pub fn visual_keywords(&self) -> Vec<&str> {
        self.clusters
            .iter()
            .filter(|c| c.visual)
            .flat_map(|c| c.keywords.iter().map(String::as_str))
            .collect()
    }
}

/// Which evidence produced a keyword label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchChannel {
    RawLabel,
    Category,
    Unlabeled,
}

/// A keyword assignment. `keyword` and `cluster` are both present or both
/// absent; absent means no keyword matched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelAssignment {
    pub keyword: Option<String>,
    pub cluster: Option<String>,
    pub matched_via: MatchChannel,
}

impl LabelAssignment {
    fn unlabeled() -> LabelAssignment {
        LabelAssignment {
            keyword: None,
            cluster: None,
            matched_via: MatchChannel::Unlabeled,
        }
    }
}

/// The infobox term of an article: template name with the leading `Infobox`
/// word removed, normalized. Absent without an infobox or when nothing
/// follows the word.
pub fn extract_raw_label(article: &Article) -> Option<RawLabel> {
    raw_label_from_infobox(article.infobox_block.as_deref()?)
}

/// Same as [`extract_raw_label`] but from an already isolated infobox block.
pub fn raw_label_from_infobox(block: &str) -> Option<RawLabel> {
    let name = wikitext::template_name(block);
    let rest = name
        .get(..7)
        .filter(|head| head.eq_ignore_ascii_case("infobox"))
        .map(|_| &name[7..])?;
    RawLabel::new(rest)
}

/// Walk the hierarchy in order; for each keyword, try the raw label first,
/// then the categories. The first hit decides both keyword and channel, so a
/// later keyword can never override an earlier one, and for one keyword the
/// raw label outranks categories.
pub fn assign_keyword_label(
    raw_label: Option<&RawLabel>,
    categories: &[String],
    hierarchy: &KeywordHierarchy,
) -> LabelAssignment {
    let lowered: Vec<String> = categories
        .iter()
        .map(|c| c.replace('_', " ").to_lowercase())
        .collect();
    for (keyword, cluster) in hierarchy.iter_keywords() {
        let via = if raw_label.is_some_and(|r| r.as_str().contains(keyword)) {
            Some(MatchChannel::RawLabel)
        } else if lowered.iter().any(|c| c.contains(keyword)) {
            Some(MatchChannel::Category)
        } else {
            None
        };
        if let Some(matched_via) = via {
            return LabelAssignment {
                keyword: Some(keyword.to_string()),
                cluster: Some(cluster.name.clone()),
                matched_via,
            };
        }
    }
    LabelAssignment::unlabeled()
}

/// A geolocated article with its labeling outcome.
#[derive(Debug, Clone)]
pub struct LabeledArticle {
    pub article: Article,
    pub coord: GeoCoordinate,
    pub raw_label: Option<RawLabel>,
    pub assignment: LabelAssignment,
}

/// Corpus-level labeling tallies.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LabelingStats {
    pub articles: u64,
    pub with_raw_label: u64,
    pub labeled: u64,
    pub per_keyword: BTreeMap<String, u64>,
}

impl LabelingStats {
    pub fn raw_label_coverage(&self) -> f64 {
        ratio(self.with_raw_label, self.articles)
    }

    pub fn labeled_fraction(&self) -> f64 {
        ratio(self.labeled, self.articles)
    }

    fn absorb(&mut self, other: LabelingStats) {
        self.articles += other.articles;
        self.with_raw_label += other.with_raw_label;
        self.labeled += other.labeled;
        for (keyword, n) in other.per_keyword {
            *self.per_keyword.entry(keyword).or_insert(0) += n;
        }
    }

    fn record(&mut self, raw: Option<&RawLabel>, assignment: &LabelAssignment) {
        self.articles += 1;
        if raw.is_some() {
            self.with_raw_label += 1;
        }
        if let Some(keyword) = &assignment.keyword {
            self.labeled += 1;
            *self.per_keyword.entry(keyword.clone()).or_insert(0) += 1;
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Label a corpus of geolocated articles. Work is parallel per article;
/// output order and tallies are independent of worker count.
pub fn label_corpus(
    articles: Vec<(Article, GeoCoordinate)>,
    hierarchy: &KeywordHierarchy,
) -> (Vec<LabeledArticle>, LabelingStats) {
    let labeled: Vec<LabeledArticle> = articles
        .into_par_iter()
        .map(|(article, coord)| {
            let raw_label = extract_raw_label(&article);
            let assignment =
                assign_keyword_label(raw_label.as_ref(), &article.categories, hierarchy);
            LabeledArticle { article, coord, raw_label, assignment }
        })
        .collect();
    let stats = labeled
        .par_iter()
        .fold(LabelingStats::default, |mut stats, item| {
            stats.record(item.raw_label.as_ref(), &item.assignment);
            stats
        })
        .reduce(LabelingStats::default, |mut a, b| {
            a.absorb(b);
            a
        });
    (labeled, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dump::parse_article;
    use crate::geo::CoordForm;

    fn hierarchy() -> KeywordHierarchy {
        KeywordHierarchy::shipped_default()
    }

    fn raw(term: &str) -> RawLabel {
        RawLabel::new(term).unwrap()
    }

    #[test]
    fn raw_label_is_infobox_term() {
        let cases = [
            ("{{Infobox settlement|name=K}}", Some("settlement")),
            ("{{Infobox New York train station|name=X}}", Some("new york train station")),
            ("{{infobox  Bridge }}", Some("bridge")),
            ("{{Infobox}}", None),
            ("{{Infobox |name=Y}}", None),
        ];
        for (block, want) in cases {
            assert_eq!(
                raw_label_from_infobox(block).as_ref().map(RawLabel::as_str),
                want,
                "{block:?}"
            );
        }
    }

    #[test]
    fn article_without_infobox_has_no_raw_label() {
        let article = parse_article(1, "Plain", "just text [[link]]");
        assert_eq!(extract_raw_label(&article), None);
    }

    #[test]
    fn raw_label_channel_beats_categories_for_one_keyword() {
        let a = assign_keyword_label(
            Some(&raw("new york train station")),
            &["Rail infrastructure".to_string()],
            &hierarchy(),
        );
        assert_eq!(a.keyword.as_deref(), Some("train station"));
        assert_eq!(a.cluster.as_deref(), Some("Infrastructure"));
        assert_eq!(a.matched_via, MatchChannel::RawLabel);
    }

    #[test]
    fn categories_step_in_when_raw_label_misses() {
        let a = assign_keyword_label(
            None,
            &["Airports in Kenya".to_string(), "Transport".to_string()],
            &hierarchy(),
        );
        assert_eq!(a.keyword.as_deref(), Some("airport"));
        assert_eq!(a.matched_via, MatchChannel::Category);
    }

    #[test]
    fn earlier_keyword_in_category_beats_later_keyword_in_raw_label() {
        // "bank" precedes "building"; a bank-flavored category must win over
        // a building-flavored raw label even though raw labels are the
        // stronger channel per keyword.
        let a = assign_keyword_label(
            Some(&raw("building")),
            &["Banks of Egypt".to_string()],
            &hierarchy(),
        );
        assert_eq!(a.keyword.as_deref(), Some("bank"));
        assert_eq!(a.matched_via, MatchChannel::Category);
    }

    #[test]
    fn no_match_is_unlabeled() {
        let a = assign_keyword_label(
            Some(&raw("asteroid")),
            &["Minor planets".to_string()],
            &hierarchy(),
        );
        assert_eq!(
            a,
            LabelAssignment {
                keyword: None,
                cluster: None,
                matched_via: MatchChannel::Unlabeled,
            }
        );
    }

    #[test]
    fn matching_is_case_insensitive_substring() {
        let a = assign_keyword_label(None, &["Subway stations in Africa".to_string()], &hierarchy());
        assert_eq!(a.keyword.as_deref(), Some("subway station"));
        // And "airport" wins over "port" by cluster-internal order, not by
        // accident: the raw label contains both.
        let a = assign_keyword_label(Some(&raw("airport")), &[], &hierarchy());
        assert_eq!(a.keyword.as_deref(), Some("airport"));
    }

    #[test]
    fn shipped_hierarchy_shape_is_frozen() {
        let h = hierarchy();
        let names: Vec<&str> = h.clusters().iter().map(|c| c.name.as_str()).collect();
        assert_eq!(
            names,
            vec!["Ephemeral", "Buildings", "Infrastructure", "Place", "Nature", "Others"]
        );
        let visual: Vec<bool> = h.clusters().iter().map(|c| c.visual).collect();
        assert_eq!(visual, vec![false, true, true, true, true, false]);
        assert_eq!(h.visual_keywords().len(), 27);
        assert_eq!(h.cluster_of("train station").unwrap().name, "Infrastructure");
        assert_eq!(h.cluster_of("battle").unwrap().name, "Ephemeral");
        assert_eq!(h.cluster_of("skyscraper"), None);
    }

    #[test]
    fn hierarchy_validation_rejects_duplicates() {
        let dup_cluster = vec![
            Cluster { name: "A".into(), visual: true, keywords: vec!["x".into()] },
            Cluster { name: "A".into(), visual: true, keywords: vec!["y".into()] },
        ];
        assert!(matches!(KeywordHierarchy::new(dup_cluster), Err(Error::Config(_))));

        let dup_keyword = vec![
            Cluster { name: "A".into(), visual: true, keywords: vec!["x".into()] },
            Cluster { name: "B".into(), visual: true, keywords: vec!["X ".into()] },
        ];
        assert!(matches!(KeywordHierarchy::new(dup_keyword), Err(Error::Config(_))));

        assert!(matches!(KeywordHierarchy::new(Vec::new()), Err(Error::Config(_))));
    }

    fn coord() -> GeoCoordinate {
        GeoCoordinate { lat: 0.0, lon: 20.0, form: CoordForm::Decimal }
    }

    #[test]
    fn corpus_stats_count_coverage_and_keywords() {
        // Ten articles, eight with infoboxes, mixed outcomes.
        let mut corpus = Vec::new();
        for i in 0..8u64 {
            let markup = if i < 4 {
                "{{Infobox school|name=S}} text"
            } else {
                "{{Infobox hill|name=H}} text"
            };
            corpus.push((parse_article(i, &format!("A{i}"), markup), coord()));
        }
        corpus.push((parse_article(8, "B8", "no box [[Category:Lakes of Kenya]]"), coord()));
        corpus.push((parse_article(9, "B9", "no box, no categories"), coord()));

        let (labeled, stats) = label_corpus(corpus, &hierarchy());
        assert_eq!(labeled.len(), 10);
        assert_eq!(stats.articles, 10);
        assert_eq!(stats.with_raw_label, 8);
        assert!((stats.raw_label_coverage() - 0.8).abs() < 1e-12);
        assert_eq!(stats.labeled, 5);
        assert_eq!(stats.per_keyword.get("school"), Some(&4));
        assert_eq!(stats.per_keyword.get("lake"), Some(&1));
        // Output order follows input order.
        assert_eq!(labeled[8].assignment.keyword.as_deref(), Some("lake"));
        assert_eq!(labeled[9].assignment.matched_via, MatchChannel::Unlabeled);
    }

    #[test]
    fn empty_corpus_is_fine() {
        let (labeled, stats) = label_corpus(Vec::new(), &hierarchy());
        assert!(labeled.is_empty());
        assert_eq!(stats, LabelingStats::default());
        assert_eq!(stats.raw_label_coverage(), 0.0);
    }

    proptest::proptest! {
        // Whatever the inputs, the assignment is internally consistent:
        // keyword and cluster are both present or both absent, the keyword
        // really occurs in the claimed channel, and no earlier keyword
        // occurs in any channel.
        #[test]
        fn assignment_is_consistent(
            raw_term in proptest::option::of("[a-z ]{0,24}"),
            cats in proptest::collection::vec("[A-Za-z ]{0,24}", 0..4),
        ) {
            let h = hierarchy();
            let raw = raw_term.as_deref().and_then(RawLabel::new);
            let a = assign_keyword_label(raw.as_ref(), &cats, &h);
            let lowered: Vec<String> = cats.iter().map(|c| c.to_lowercase()).collect();
            let hit = |kw: &str| {
                raw.as_ref().is_some_and(|r| r.as_str().contains(kw))
                    || lowered.iter().any(|c| c.contains(kw))
            };
            match &a.keyword {
                Some(kw) => {
                    proptest::prop_assert!(a.cluster.is_some());
                    proptest::prop_assert!(hit(kw));
                    for (earlier, _) in h.iter_keywords() {
                        if earlier == kw {
                            break;
                        }
                        proptest::prop_assert!(!hit(earlier));
                    }
                }
                None => {
                    proptest::prop_assert!(a.cluster.is_none());
                    for (kw, _) in h.iter_keywords() {
                        proptest::prop_assert!(!hit(kw));
                    }
                }
            }
        }
    }
}
