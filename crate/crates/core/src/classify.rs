//! Publication classification from venue metadata.
//!
//! A publication is linked to venues (where it was published, what it cites,
//! who cites it). Each strategy turns those links into a distribution `w(p, v)`
//! over resolved venues, and a label's score is `Σ_v w(p, v) · w(v, fos)`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::ingest::PublicationRecord;
use crate::propagate::FosWeightTable;
use crate::taxonomy::{Taxonomy, MAX_LEVEL};
use crate::venue::VenueResolver;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("classify: invalid configuration: {0}")]
    Config(String),
    #[error("classify: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Published-by: the publication's own venues, equally weighted.
    Pub,
    /// Venues of referenced works, weighted by reference count.
    Ref,
    /// References plus venues of citing works.
    Citref,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Pub => "pub",
            Strategy::Ref => "ref",
            Strategy::Citref => "citref",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = ClassifyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pub" => Ok(Strategy::Pub),
            "ref" => Ok(Strategy::Ref),
            "citref" => Ok(Strategy::Citref),
            other => Err(ClassifyError::Config(format!(
                "unknown strategy {other:?} (expected pub, ref or citref)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    TopT(usize),
    /// Every label scoring strictly above the floor.
    MinScore(f64),
}

impl Default for Selection {
    fn default() -> Self {
        Selection::TopT(1)
    }
}

impl Selection {
    /// Top-1 when neither is given; both at once is an error.
    pub fn from_options(top_t: Option<usize>, min_score: Option<f64>) -> Result<Self, ClassifyError> {
        match (top_t, min_score) {
            (Some(_), Some(_)) => Err(ClassifyError::Config(
                "top-T and min-score selection are mutually exclusive".into(),
            )),
            (Some(0), None) => Err(ClassifyError::Config("top-T must be at least 1".into())),
            (Some(t), None) => Ok(Selection::TopT(t)),
            (None, Some(s)) if !s.is_finite() => {
                Err(ClassifyError::Config(format!("min-score must be finite, got {s}")))
            }
            (None, Some(s)) => Ok(Selection::MinScore(s)),
            (None, None) => Ok(Selection::default()),
        }
    }

    pub fn apply(self, mut ranked: Vec<FosScore>) -> Vec<FosScore> {
        match self {
            Selection::TopT(t) => ranked.truncate(t),
            Selection::MinScore(floor) => ranked.retain(|s| s.score > floor),
        }
        ranked
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationRequest {
    pub id: String,
    pub strategy: Strategy,
    pub published: Vec<String>,
    pub references: Vec<String>,
    pub citations: Vec<String>,
    pub level: u8,
    pub selection: Selection,
}

impl ClassificationRequest {
    pub fn from_record(record: &PublicationRecord, strategy: Strategy, level: u8, selection: Selection) -> Self {
        Self {
            id: record.id.clone(),
            strategy,
            published: record.venues.clone(),
            references: record.references.iter().map(|r| r.venue.clone()).collect(),
            citations: record.citations.iter().map(|c| c.venue.clone()).collect(),
            level,
            selection,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FosScore {
    pub fos: String,
    pub score: f64,
    #[serde(skip)]
    pub contributions: Vec<(String, f64)>,
    pub ancestors: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Classified,
    Unclassifiable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    pub id: String,
    pub strategy: Strategy,
    pub level: u8,
    pub status: Status,
    pub labels: Vec<FosScore>,
    /// Venue entries (with multiplicity) that resolved to a labeled venue.
    pub matched_venues: usize,
    pub unmatched_venues: usize,
}

#[derive(Serialize)]
struct ResultLine<'a> {
    id: &'a str,
    strategy: Strategy,
    level: u8,
    labels: &'a [FosScore],
    unmatched_venues: usize,
}

impl ClassificationResult {
    /// One JSON object, no trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&ResultLine {
            id: &self.id,
            strategy: self.strategy,
            level: self.level,
            labels: &self.labels,
            unmatched_venues: self.unmatched_venues,
        })
        .expect("result serialization cannot fail")
    }
}

pub struct Classifier<'a> {
    resolver: &'a VenueResolver,
    table: &'a FosWeightTable,
    taxonomy: &'a Taxonomy,
}

impl<'a> Classifier<'a> {
    pub fn new(resolver: &'a VenueResolver, table: &'a FosWeightTable, taxonomy: &'a Taxonomy) -> Self {
        Self {
            resolver,
            table,
            taxonomy,
        }
    }

    /// Resolves raw names to venue keys labeled at `level`, with multiplicity.
    fn resolve_all(&self, names: &[String], level: u8) -> (Vec<String>, usize) {
        let mut hits = Vec::with_capacity(names.len());
        let mut misses = 0;
        for name in names {
            match self.resolver.resolve(name) {
                Some(key) if self.table.get(level, key.as_str()).is_some() => hits.push(key.into_string()),
                _ => misses += 1,
            }
        }
        (hits, misses)
    }

    /// Venue weights `w(p, v)` for the request's strategy.
    pub fn venue_weights(&self, request: &ClassificationRequest) -> (BTreeMap<String, f64>, usize, usize) {
        let level = request.level;
        let (hits, misses) = match request.strategy {
            Strategy::Pub => self.resolve_all(&request.published, level),
            Strategy::Ref => self.resolve_all(&request.references, level),
            Strategy::Citref => {
                let (mut hits, misses) = self.resolve_all(&request.references, level);
                let (more, more_misses) = self.resolve_all(&request.citations, level);
                hits.extend(more);
                (hits, misses + more_misses)
            }
        };
        let matched = hits.len();
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for h in hits {
            *counts.entry(h).or_insert(0) += 1;
        }
        let weights = match request.strategy {
            Strategy::Pub => {
                let n = counts.len() as f64;
                counts.into_keys().map(|v| (v, 1.0 / n)).collect()
            }
            Strategy::Ref | Strategy::Citref => {
                let n = matched as f64;
                counts.into_iter().map(|(v, c)| (v, c as f64 / n)).collect()
            }
        };
        (weights, matched, misses)
    }

    /// Every label with a positive score, ranked by (score desc, fos id asc),
    /// before selection.
    pub fn rank(&self, request: &ClassificationRequest) -> Result<ClassificationResult, ClassifyError> {
        if !(1..=MAX_LEVEL).contains(&request.level) {
            return Err(ClassifyError::Config(format!(
                "level must be between 1 and {MAX_LEVEL}, got {}",
                request.level
            )));
        }
        let (weights, matched, unmatched) = self.venue_weights(request);
        let mut scores: BTreeMap<&str, Vec<(String, f64)>> = BTreeMap::new();
        for (venue, w_pv) in &weights {
            for (fos, w_vf) in self.table.get(request.level, venue).unwrap_or_default() {
                scores.entry(fos).or_default().push((venue.clone(), w_pv * w_vf));
            }
        }
        let mut labels: Vec<FosScore> = scores
            .into_iter()
            .map(|(fos, contributions)| FosScore {
                fos: fos.to_owned(),
                score: contributions.iter().map(|(_, c)| c).sum(),
                ancestors: self
                    .taxonomy
                    .ancestors(fos)
                    .map(|a| a.into_iter().map(str::to_owned).collect())
                    .unwrap_or_default(),
                contributions,
            })
            .collect();
        labels.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.fos.cmp(&b.fos)));
        let status = if matched == 0 {
            Status::Unclassifiable
        } else {
            Status::Classified
        };
        Ok(ClassificationResult {
            id: request.id.clone(),
            strategy: request.strategy,
            level: request.level,
            status,
            labels,
            matched_venues: matched,
            unmatched_venues: unmatched,
        })
    }

    pub fn classify(&self, request: &ClassificationRequest) -> Result<ClassificationResult, ClassifyError> {
        let mut result = self.rank(request)?;
        result.labels = request.selection.apply(result.labels);
        Ok(result)
    }

    /// Classifies every record; output order follows input order.
    pub fn classify_records(
        &self,
        records: &[PublicationRecord],
        strategy: Strategy,
        level: u8,
        selection: Selection,
    ) -> Result<Vec<ClassificationResult>, ClassifyError> {
        records
            .par_iter()
            .map(|r| self.classify(&ClassificationRequest::from_record(r, strategy, level, selection)))
            .collect()
    }
}

pub fn write_results<W: Write>(results: &[ClassificationResult], out: &mut W) -> Result<(), ClassifyError> {
    for r in results {
        writeln!(out, "{}", r.to_json_line())?;
    }
    Ok(())
}
