//! Section-weighted embedding scorer.
//!
//! An article is split into five token sections. A candidate label scores as
//! the weighted sum over sections of the average cosine similarity between
//! the section's tokens and the label vector. Out-of-vocabulary tokens are
//! ignored; sections with no usable tokens drop out and their weight is
//! redistributed over the rest, so sparse articles are scored on what they
//! do have rather than dragged toward zero.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dump::Article;
use crate::error::{Error, Result};

/// The five scored sections of an article.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Title,
    Body,
    Infobox,
    Categories,
    Hyperlinks,
}

impl Section {
    pub const ALL: [Section; 5] = [
        Section::Title,
        Section::Body,
        Section::Infobox,
        Section::Categories,
        Section::Hyperlinks,
    ];

    pub fn index(self) -> usize {
        match self {
            Section::Title => 0,
            Section::Body => 1,
            Section::Infobox => 2,
            Section::Categories => 3,
            Section::Hyperlinks => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Section::Title => "title",
            Section::Body => "body",
            Section::Infobox => "infobox",
            Section::Categories => "categories",
            Section::Hyperlinks => "hyperlinks",
        }
    }
}

/// Lowercased alphanumeric tokens, punctuation discarded.
pub fn tokenize(text: &str) -> Vec<String> {
    text.chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Token lists per section, indexed by [`Section::index`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SectionTokens {
    tokens: [Vec<String>; 5],
}

impl SectionTokens {
    pub fn from_parts(
        title: &str,
        body: &str,
        infobox: Option<&str>,
        categories: &[String],
        hyperlinks: &[String],
    ) -> SectionTokens {
        SectionTokens {
            tokens: [
                tokenize(title),
                tokenize(body),
                tokenize(infobox.unwrap_or("")),
                tokenize(&categories.join(" ")),
                tokenize(&hyperlinks.join(" ")),
            ],
        }
    }

    pub fn get(&self, section: Section) -> &[String] {
        &self.tokens[section.index()]
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.iter().all(Vec::is_empty)
    }
}

/// Split an article into its five token sections.
pub fn section_partition(article: &Article) -> SectionTokens {
    SectionTokens::from_parts(
        &article.title,
        &article.body,
        article.infobox_block.as_deref(),
        &article.categories,
        &article.hyperlinks,
    )
}

/// Token vectors of one fixed dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<EmbeddingTable> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".to_string()));
        }
        Ok(EmbeddingTable { dim, vectors: HashMap::new() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: vector.len() });
        }
        self.vectors.insert(token.to_string(), vector);
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vectors.contains_key(token)
    }

    /// Parse the text format: one `token v1 .. vn` per line, optionally
    /// preceded by a `count dim` header line. The dimension is fixed by the
    /// header or the first entry; any later disagreement is an error.
    pub fn from_reader(reader: impl BufRead) -> Result<EmbeddingTable> {
        let mut table: Option<EmbeddingTable> = None;
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = idx as u64 + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts.next().expect("non-empty line has a first field");
            let values: Vec<&str> = parts.collect();
            if table.is_none() && values.len() == 1 {
                // Two numeric fields and nothing else: the header line.
                if token.parse::<u64>().is_ok() && values[0].parse::<u64>().is_ok() {
                    let dim = values[0].parse::<usize>().unwrap();
                    table = Some(EmbeddingTable::new(dim)?);
                    continue;
                }
            }
            let mut vector = Vec::with_capacity(values.len());
            for v in &values {
                let value: f64 = v.parse().map_err(|_| {
                    Error::Config(format!(
                        "embeddings line {line_no}: {v:?} is not a number"
                    ))
                })?;
                vector.push(value);
            }
            if table.is_none() {
                if vector.is_empty() {
                    return Err(Error::Config(format!(
                        "embeddings line {line_no}: entry {token:?} has no values"
                    )));
                }
                table = Some(EmbeddingTable::new(vector.len())?);
            }
            let t = table.as_mut().expect("table was just initialized");
            if vector.len() != t.dim {
                return Err(Error::Config(format!(
                    "embeddings line {line_no}: {token:?} has {} values, expected {}",
                    vector.len(),
                    t.dim
                )));
            }
            t.vectors.insert(token.to_string(), vector);
        }
        table.ok_or_else(|| Error::Config("embeddings file has no entries".to_string()))
    }

    pub fn load(path: &Path) -> Result<EmbeddingTable> {
        let file = File::open(path).map_err(|e| {
            Error::Config(format!("cannot read embeddings {}: {e}", path.display()))
        })?;
        EmbeddingTable::from_reader(BufReader::new(file))
    }

    /// Mean vector of a label's tokens. Every token must be present;
    /// otherwise the offending token is named in the error.
    pub fn label_vector(&self, label: &str) -> Result<Vec<f64>> {
        let tokens = tokenize(label);
        if tokens.is_empty() {
            return Err(Error::TokenNotInTable(label.to_string()));
        }
        let mut sum = vec![0.0; self.dim];
        for token in &tokens {
            let v = self
                .get(token)
                .ok_or_else(|| Error::TokenNotInTable(token.clone()))?;
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
        }
        let n = tokens.len() as f64;
        for s in &mut sum {
            *s /= n;
        }
        Ok(sum)
    }
}

/// Cosine similarity; zero vectors score 0 against everything.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), got: v.len() });
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (nu.sqrt() * nv.sqrt()))
}

/// Non-negative weights over the five sections, normalized to sum 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SectionWeights {
    weights: [f64; 5],
}

impl SectionWeights {
    pub fn new(raw: [f64; 5]) -> Result<SectionWeights> {
        if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(
                "section weights must be finite and non-negative".to_string(),
            ));
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Config("section weights must not all be zero".to_string()));
        }
        let mut weights = raw;
        for w in &mut weights {
            *w /= sum;
        }
        Ok(SectionWeights { weights })
    }

    pub fn uniform() -> SectionWeights {
        SectionWeights { weights: [0.2; 5] }
    }

    pub fn get(&self, section: Section) -> f64 {
        self.weights[section.index()]
    }

    pub fn as_array(&self) -> [f64; 5] {
        self.weights
    }
}

/// Per-section average similarity against one label vector. `None` marks a
/// section with no in-vocabulary tokens.
fn section_averages(
    sections: &SectionTokens,
    label_vec: &[f64],
    table: &EmbeddingTable,
) -> Result<[Option<f64>; 5]> {
    let mut averages = [None; 5];
    for section in Section::ALL {
        let mut sum = 0.0;
        let mut n = 0u32;
        for token in sections.get(section) {
            if let Some(v) = table.get(token) {
                sum += cosine(v, label_vec)?;
                n += 1;
            }
        }
        if n > 0 {
            averages[section.index()] = Some(sum / n as f64);
        }
    }
    Ok(averages)
}

/// Combine per-section averages under the given weights. Weight belonging to
/// empty sections is redistributed over the non-empty ones; an article with
/// no usable tokens at all scores 0.
fn weighted_score(averages: &[Option<f64>; 5], weights: &SectionWeights) -> f64 {
    let present_weight: f64 = Section::ALL
        .iter()
        .filter(|s| averages[s.index()].is_some())
        .map(|s| weights.get(*s))
        .sum();
    let present_count = averages.iter().flatten().count();
    if present_count == 0 {
        return 0.0;
    }
    let mut score = 0.0;
    for section in Section::ALL {
        let Some(avg) = averages[section.index()] else { continue };
        let w = if present_weight > 0.0 {
            weights.get(section) / present_weight
        } else {
            // All weight sits on empty sections; fall back to a uniform
            // split so the score stays defined.
            1.0 / present_count as f64
        };
        score += w * avg;
    }
    score
}

/// Score one candidate label against an article's sections.
pub fn label_score(
    sections: &SectionTokens,
    label: &str,
    table: &EmbeddingTable,
    weights: &SectionWeights,
) -> Result<f64> {
    let label_vec = table.label_vector(label)?;
    Ok(weighted_score(&section_averages(sections, &label_vec, table)?, weights))
}

/// One scored candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: String,
    pub score: f64,
}

/// Score all candidates and sort best first. Ties keep candidate order, so
/// the result is deterministic for a fixed candidate list.
pub fn rank_labels(
    sections: &SectionTokens,
    candidates: &[String],
    table: &EmbeddingTable,
    weights: &SectionWeights,
) -> Result<Vec<LabelScore>> {
    let mut scored = Vec::with_capacity(candidates.len());
    for label in candidates {
        scored.push(LabelScore {
            label: label.clone(),
            score: label_score(sections, label, table, weights)?,
        });
    }
    scored.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(scored)
}

/// Result of a weight fit: the winning grid point and its top-1 agreement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightFit {
    pub weights: SectionWeights,
    pub agreement: f64,
}

/// Exhaustive search over the simplex grid of section weights with the given
/// resolution, maximizing top-1 agreement between the scorer's best
/// candidate and each record's reference label.
///
/// Ties prefer the lexicographically smallest weight tuple in section order
/// (title, body, infobox, categories, hyperlinks), which makes the result
/// independent of evaluation order and of the worker count.
pub fn fit_section_weights(
    corpus: &[(SectionTokens, String)],
    candidates: &[String],
    table: &EmbeddingTable,
    resolution: f64,
) -> Result<WeightFit> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(Error::Config(format!(
            "weight grid resolution {resolution} is outside (0, 1]"
        )));
    }
    let steps = (1.0 / resolution).round() as u32;

    let reference: Vec<usize> = corpus
        .iter()
        .map(|(_, label)| {
            candidates.iter().position(|c| c == label).ok_or_else(|| {
                Error::Config(format!("corpus label {label:?} is not a candidate"))
            })
        })
        .collect::<Result<_>>()?;

    let label_vectors: Vec<Vec<f64>> = candidates
        .iter()
        .map(|label| table.label_vector(label))
        .collect::<Result<_>>()?;

    // Per record, per candidate: the section averages. Computed once; the
    // grid sweep then only reweights them.
    let averages: Vec<Vec<[Option<f64>; 5]>> = corpus
        .par_iter()
        .map(|(sections, _)| {
            label_vectors
                .iter()
                .map(|lv| section_averages(sections, lv, table))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let grid = simplex_grid(steps);
    let best = grid
        .into_par_iter()
        .map(|point| {
            let weights = weights_from_point(point, steps);
            let hits = averages
                .iter()
                .zip(&reference)
                .filter(|(record, label_idx)| {
                    argmax_score(record, &weights) == **label_idx
                })
                .count();
            (hits, point)
        })
        .reduce_with(|a, b| {
            // More hits wins; on equal hits the smaller tuple wins.
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Greater => a,
                std::cmp::Ordering::Less => b,
                std::cmp::Ordering::Equal => {
                    if a.1 <= b.1 {
                        a
                    } else {
                        b
                    }
                }
            }
        })
        .expect("grid is non-empty for any valid resolution");

    Ok(WeightFit {
        weights: weights_from_point(best.1, steps),
        agreement: best.0 as f64 / corpus.len() as f64,
    })
}

fn weights_from_point(point: [u32; 5], steps: u32) -> SectionWeights {
    let mut weights = [0.0; 5];
    for (w, p) in weights.iter_mut().zip(point) {
        *w = p as f64 / steps as f64;
    }
    SectionWeights { weights }
}

/// Index of the best-scoring candidate; ties keep the earliest.
fn argmax_score(record: &[[Option<f64>; 5]], weights: &SectionWeights) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (idx, averages) in record.iter().enumerate() {
        let score = weighted_score(averages, weights);
        if score > best_score {
            best = idx;
            best_score = score;
        }
    }
    best
}

/// All 5-tuples of non-negative integers summing to `steps`, in
/// lexicographic order.
fn simplex_grid(steps: u32) -> Vec<[u32; 5]> {
    let mut points = Vec::new();
    for a in 0..=steps {
        for b in 0..=steps - a {
            for c in 0..=steps - a - b {
                for d in 0..=steps - a - b - c {
                    points.push([a, b, c, d, steps - a - b - c - d]);
                }
            }
        }
    }
    points
}
