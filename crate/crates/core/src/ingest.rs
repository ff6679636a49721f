//! Publication metadata ingestion and venue graph assembly.
//!
//! Pipeline order is fixed: venue names are deduplicated first, then every
//! (citing venue, cited venue) pair is counted, the counts are thresholded, and
//! finally each venue's outgoing weights are normalized. Seed venue → FoS
//! assignments are installed last as L4 edges.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, Layer, MultilayerGraph, NodeKind, NormMode};
use crate::taxonomy::{SeedAssignment, Taxonomy};
use crate::venue::{alias_form, VenueAliasMap, VenueKey, VenueNormalizer};

pub const MIN_PLAUSIBLE_YEAR: i32 = 1800;
pub const MAX_PLAUSIBLE_YEAR: i32 = 2100;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("ingest: invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("ingest: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VenueMention {
    pub venue: String,
    #[serde(default)]
    pub year: Option<i32>,
}

impl VenueMention {
    pub fn new(venue: impl Into<String>, year: Option<i32>) -> Self {
        Self {
            venue: venue.into(),
            year,
        }
    }
}

/// One line of the record file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicationRecord {
    pub id: String,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default)]
    pub venues: Vec<String>,
    pub year: i32,
    #[serde(default)]
    pub references: Vec<VenueMention>,
    #[serde(default)]
    pub citations: Vec<VenueMention>,
}

impl PublicationRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("record id is empty".into());
        }
        if !(MIN_PLAUSIBLE_YEAR..=MAX_PLAUSIBLE_YEAR).contains(&self.year) {
            return Err(format!(
                "year {} outside {MIN_PLAUSIBLE_YEAR}..={MAX_PLAUSIBLE_YEAR}",
                self.year
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseWarning {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedRecords {
    pub records: Vec<PublicationRecord>,
    pub warnings: Vec<ParseWarning>,
}

pub fn parse_records(path: impl AsRef<Path>) -> Result<ParsedRecords, IngestError> {
    parse_records_from(BufReader::new(File::open(path)?))
}

/// Parses newline-delimited JSON records. Malformed or invalid lines are
/// skipped with a line-numbered warning; blank lines are ignored.
pub fn parse_records_from<R: BufRead>(reader: R) -> Result<ParsedRecords, IngestError> {
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
    let parsed: Vec<Option<Result<PublicationRecord, ParseWarning>>> = lines
        .par_iter()
        .enumerate()
        .map(|(idx, line)| {
            if line.trim().is_empty() {
                return None;
            }
            let warn = |message: String| ParseWarning { line: idx + 1, message };
            Some(
                serde_json::from_str::<PublicationRecord>(line)
                    .map_err(|e| warn(e.to_string()))
                    .and_then(|r| r.validate().map(|()| r).map_err(warn)),
            )
        })
        .collect();
    let mut out = ParsedRecords::default();
    for item in parsed.into_iter().flatten() {
        match item {
            Ok(r) => out.records.push(r),
            Err(w) => {
                log::warn!("records line {}: skipped: {}", w.line, w.message);
                out.warnings.push(w);
            }
        }
    }
    Ok(out)
}

/// Drops references older than `window` years relative to the record.
/// References without a year are kept; citations are untouched. Returns the
/// filtered record and the number of references dropped.
pub fn apply_year_window(mut record: PublicationRecord, window: u32) -> (PublicationRecord, usize) {
    let before = record.references.len();
    let year = record.year;
    record.references.retain(|r| in_window(year, r.year, window));
    let dropped = before - record.references.len();
    (record, dropped)
}

fn in_window(pub_year: i32, ref_year: Option<i32>, window: u32) -> bool {
    ref_year.is_none_or(|y| i64::from(pub_year) - i64::from(y) <= i64::from(window))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildConfig {
    /// Venue pairs survive only with a count strictly above this.
    pub threshold: f64,
    /// Maximum age of a reference, in years.
    pub window: u32,
    pub norm_mode: NormMode,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            threshold: 10.0,
            window: 10,
            norm_mode: NormMode::Sum,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub records_read: usize,
    pub records_skipped: usize,
    /// Valid records none of whose published venues resolved.
    pub records_without_venue: usize,
    pub venue_mentions: u64,
    pub venues_resolved: u64,
    pub venues_unresolved: u64,
    pub distinct_venues: usize,
    pub raw_edge_count: usize,
    pub edges_surviving: usize,
    pub references_dropped_by_window: u64,
    pub seed_assignments: usize,
    pub seed_venues: usize,
    pub warnings: Vec<String>,
}

#[derive(Default)]
struct Tally {
    pairs: HashMap<(u32, u32), u64>,
    mentions: u64,
    resolved: u64,
    unresolved: u64,
    dropped: u64,
    unplaced: usize,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        let (mut big, small) = if self.pairs.len() >= other.pairs.len() {
            (std::mem::take(&mut self.pairs), other.pairs)
        } else {
            (other.pairs, std::mem::take(&mut self.pairs))
        };
        for (k, v) in small {
            *big.entry(k).or_insert(0) += v;
        }
        Tally {
            pairs: big,
            mentions: self.mentions + other.mentions,
            resolved: self.resolved + other.resolved,
            unresolved: self.unresolved + other.unresolved,
            dropped: self.dropped + other.dropped,
            unplaced: self.unplaced + other.unplaced,
        }
    }
}

fn mention_names<'a>(record: &'a PublicationRecord, window: u32) -> impl Iterator<Item = &'a str> + 'a {
    record
        .venues
        .iter()
        .map(String::as_str)
        .chain(
            record
                .references
                .iter()
                .filter(move |r| in_window(record.year, r.year, window))
                .map(|r| r.venue.as_str()),
        )
        .chain(record.citations.iter().map(|c| c.venue.as_str()))
}

/// Installs seed assignments as L4 edges, normalized to sum 1 per venue and
/// taxonomy level. Seeds naming labels outside `taxonomy` are ignored.
pub fn install_seed_edges(
    graph: &mut MultilayerGraph,
    taxonomy: &Taxonomy,
    seeds: &[SeedAssignment],
) -> Result<usize, GraphError> {
    let mut groups: BTreeMap<(&VenueKey, u8), Vec<(&str, f64)>> = BTreeMap::new();
    for s in seeds {
        if let Some(level) = taxonomy.level_of(&s.fos) {
            groups.entry((&s.venue, level)).or_default().push((&s.fos, s.weight));
        }
    }
    let mut installed = 0;
    for ((venue, _), entries) in groups {
        let total: f64 = entries.iter().map(|(_, w)| w).sum();
        if total <= 0.0 {
            continue;
        }
        let v = graph.add_node(NodeKind::Venue, venue.as_str())?;
        for (fos, w) in entries {
            let f = graph.add_node(NodeKind::FosLabel, fos)?;
            graph.upsert_edge(v, f, Layer::VenueFos, w / total)?;
            installed += 1;
        }
    }
    Ok(installed)
}

/// Builds the venue/FoS multilayer graph from publication records.
///
/// Every (published venue, referenced venue) pair and every (citing venue,
/// published venue) pair adds one to the L3 count of that directed pair; one
/// increment per reference or citation entry. Publication nodes are not kept.
pub fn build_graph(
    records: &[PublicationRecord],
    taxonomy: &Taxonomy,
    seeds: &[SeedAssignment],
    normalizer: &VenueNormalizer,
    aliases: &mut VenueAliasMap,
    config: &BuildConfig,
) -> Result<(MultilayerGraph, IngestStats), IngestError> {
    if !config.threshold.is_finite() || config.threshold < 0.0 {
        return Err(IngestError::Config(format!(
            "threshold must be a non-negative number, got {}",
            config.threshold
        )));
    }
    let mut stats = IngestStats {
        records_read: records.len(),
        ..IngestStats::default()
    };
    let valid: Vec<&PublicationRecord> = records
        .iter()
        .filter(|r| match r.validate() {
            Ok(()) => true,
            Err(msg) => {
                log::warn!("record {:?} skipped: {msg}", r.id);
                false
            }
        })
        .collect();
    stats.records_skipped = records.len() - valid.len();
    if valid.is_empty() {
        let msg = "no usable publication records; graph holds taxonomy and seeds only".to_owned();
        log::warn!("{msg}");
        stats.warnings.push(msg);
    }

    // Resolve every distinct raw form once.
    let mut form_counts: HashMap<Cow<'_, str>, u64> = HashMap::new();
    for r in &valid {
        for name in mention_names(r, config.window) {
            *form_counts.entry(alias_form(name)).or_insert(0) += 1;
        }
    }
    let mut fresh: Vec<&str> = form_counts
        .keys()
        .map(|f| f.as_ref())
        .filter(|f| !f.is_empty() && aliases.get(f).is_none())
        .collect();
    fresh.sort_unstable();
    let resolved: Vec<(&str, Option<VenueKey>)> = fresh.par_iter().map(|f| (*f, normalizer.resolve(f).ok())).collect();
    for (form, key) in resolved {
        if let Some(key) = key {
            aliases.record_with_count(form, key, 0);
        }
    }
    let mut sorted_forms: Vec<(&Cow<'_, str>, &u64)> = form_counts.iter().collect();
    sorted_forms.sort_unstable();
    for (form, n) in sorted_forms {
        aliases.bump(form, *n);
    }

    let mut venue_keys: BTreeSet<&str> = BTreeSet::new();
    for form in form_counts.keys() {
        if let Some(k) = aliases.get(form) {
            venue_keys.insert(k.as_str());
        }
    }
    for s in seeds {
        venue_keys.insert(s.venue.as_str());
    }
    let venue_index: HashMap<&str, u32> = venue_keys.iter().enumerate().map(|(i, k)| (*k, i as u32)).collect();
    let form_index: HashMap<&str, u32> = form_counts
        .keys()
        .filter_map(|f| {
            let key = aliases.get(f)?;
            Some((f.as_ref(), venue_index[key.as_str()]))
        })
        .collect();
    let lookup = |name: &str| form_index.get(alias_form(name).as_ref()).copied();

    let tally = valid
        .par_iter()
        .fold(Tally::default, |mut t, r| {
            let mut published: Vec<u32> = Vec::with_capacity(r.venues.len());
            for v in &r.venues {
                t.mentions += 1;
                match lookup(v) {
                    Some(i) => {
                        t.resolved += 1;
                        published.push(i);
                    }
                    None => t.unresolved += 1,
                }
            }
            published.sort_unstable();
            published.dedup();
            if published.is_empty() {
                t.unplaced += 1;
            }
            for reference in &r.references {
                if !in_window(r.year, reference.year, config.window) {
                    t.dropped += 1;
                    continue;
                }
                t.mentions += 1;
                match lookup(&reference.venue) {
                    Some(cited) => {
                        t.resolved += 1;
                        for &p in &published {
                            *t.pairs.entry((p, cited)).or_insert(0) += 1;
                        }
                    }
                    None => t.unresolved += 1,
                }
            }
            for citation in &r.citations {
                t.mentions += 1;
                match lookup(&citation.venue) {
                    Some(citing) => {
                        t.resolved += 1;
                        for &p in &published {
                            *t.pairs.entry((citing, p)).or_insert(0) += 1;
                        }
                    }
                    None => t.unresolved += 1,
                }
            }
            t
        })
        .reduce(Tally::default, Tally::merge);

    stats.venue_mentions = tally.mentions;
    stats.venues_resolved = tally.resolved;
    stats.venues_unresolved = tally.unresolved;
    stats.references_dropped_by_window = tally.dropped;
    stats.records_without_venue = tally.unplaced;
    stats.distinct_venues = venue_keys.len();
    stats.raw_edge_count = tally.pairs.len();

    let mut graph = MultilayerGraph::new();
    taxonomy.install(&mut graph)?;
    let venue_ids = venue_keys
        .iter()
        .map(|k| graph.add_node(NodeKind::Venue, k))
        .collect::<Result<Vec<_>, _>>()?;
    let mut pairs: Vec<((u32, u32), u64)> = tally.pairs.into_iter().collect();
    pairs.sort_unstable_by_key(|(k, _)| *k);
    for ((s, t), count) in pairs {
        graph.upsert_edge(
            venue_ids[s as usize],
            venue_ids[t as usize],
            Layer::VenueVenue,
            count as f64,
        )?;
    }
    graph.prune_layer(Layer::VenueVenue, config.threshold);
    stats.edges_surviving = graph.edge_count(Layer::VenueVenue);
    graph.normalize_outgoing(Layer::VenueVenue, config.norm_mode);

    stats.seed_assignments = install_seed_edges(&mut graph, taxonomy, seeds)?;
    stats.seed_venues = seeds.iter().map(|s| &s.venue).collect::<BTreeSet<_>>().len();

    graph.set_provenance("records", valid.len())?;
    graph.set_provenance("threshold", config.threshold)?;
    graph.set_provenance("window", config.window)?;
    graph.set_provenance("raw_edges", stats.raw_edge_count)?;
    graph.set_provenance("l4", "sum-per-level")?;
    Ok((graph, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::FosLabel;

    fn record(id: &str, venue: &str, year: i32, refs: &[(&str, Option<i32>)]) -> PublicationRecord {
        PublicationRecord {
            id: id.into(),
            title: None,
            venues: vec![venue.into()],
            year,
            references: refs.iter().map(|(v, y)| VenueMention::new(*v, *y)).collect(),
            citations: vec![],
        }
    }

    fn tiny_taxonomy() -> Taxonomy {
        Taxonomy::from_labels(vec![
            FosLabel {
                id: "sci".into(),
                name: "Sci".into(),
                level: 1,
                parent: None,
            },
            FosLabel {
                id: "phys".into(),
                name: "Phys".into(),
                level: 2,
                parent: Some("sci".into()),
            },
            FosLabel {
                id: "optics".into(),
                name: "Optics".into(),
                level: 3,
                parent: Some("phys".into()),
            },
        ])
        .unwrap()
    }

    #[test]
    fn parse_records_skips_malformed_lines() {
        let text = concat!(
            r#"{"id":"a","title":"T","venues":["X"],"year":2020,"references":[{"venue":"Y","year":2019}],"citations":[]}"#,
            "\n",
            "{not json\n",
            "\n",
            r#"{"id":"b","venues":["X"],"year":2020}"#,
            "\n",
            r#"{"id":"","venues":["X"],"year":2020}"#,
            "\n",
            r#"{"id":"c","venues":["X"],"year":1500}"#,
            "\n",
        );
        let parsed = parse_records_from(text.as_bytes()).unwrap();
        assert_eq!(parsed.records.len(), 2);
        assert_eq!(parsed.records[0].id, "a");
        assert_eq!(parsed.records[1].references, vec![]);
        let lines: Vec<usize> = parsed.warnings.iter().map(|w| w.line).collect();
        assert_eq!(lines, vec![2, 5, 6]);

        assert!(parse_records_from("".as_bytes()).unwrap().records.is_empty());
    }

    #[test]
    fn year_window_boundaries() {
        let r = record(
            "p",
            "A",
            2020,
            &[("B", Some(2012)), ("C", Some(2009)), ("D", Some(2010)), ("E", None)],
        );
        let (w, dropped) = apply_year_window(r.clone(), 10);
        assert_eq!(dropped, 1);
        let kept: Vec<&str> = w.references.iter().map(|m| m.venue.as_str()).collect();
        assert_eq!(kept, vec!["B", "D", "E"]);
        let (_, dropped) = apply_year_window(r, 0);
        assert_eq!(dropped, 3);
    }

    fn build(records: &[PublicationRecord], threshold: f64) -> (MultilayerGraph, IngestStats) {
        let mut aliases = VenueAliasMap::new();
        build_graph(
            records,
            &tiny_taxonomy(),
            &[],
            &VenueNormalizer::default(),
            &mut aliases,
            &BuildConfig {
                threshold,
                ..BuildConfig::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn threshold_is_strict() {
        let twelve: Vec<_> = (0..12)
            .map(|i| record(&format!("p{i}"), "Alpha", 2020, &[("Beta", Some(2019))]))
            .collect();
        let (g, stats) = build(&twelve, 10.0);
        let a = g.node_id(NodeKind::Venue, "alpha").unwrap();
        let b = g.node_id(NodeKind::Venue, "beta").unwrap();
        assert_eq!(g.edge_weight(a, b, Layer::VenueVenue), Some(1.0));
        assert_eq!(stats.raw_edge_count, 1);
        assert_eq!(stats.edges_surviving, 1);

        let (g, _) = build(&twelve[..10], 10.0);
        assert_eq!(g.edge_count(Layer::VenueVenue), 0);
    }

    #[test]
    fn citations_point_at_the_published_venue() {
        let mut r = record("p", "Alpha", 2020, &[]);
        r.citations = vec![VenueMention::new("Gamma", Some(2021))];
        let (g, _) = build(&[r], 0.0);
        let a = g.node_id(NodeKind::Venue, "alpha").unwrap();
        let c = g.node_id(NodeKind::Venue, "gamma").unwrap();
        assert_eq!(g.edge_weight(c, a, Layer::VenueVenue), Some(1.0));
        assert_eq!(g.edge_weight(a, c, Layer::VenueVenue), None);
    }

    #[test]
    fn unresolvable_venues_are_counted() {
        let records = vec![
            record("p1", "###", 2020, &[("Beta", Some(2019))]),
            record("p2", "Alpha", 2020, &[("2019", None), ("Beta", None)]),
        ];
        let (g, stats) = build(&records, 0.0);
        assert_eq!(stats.records_without_venue, 1);
        assert_eq!(stats.venue_mentions, 5);
        assert_eq!(stats.venues_resolved + stats.venues_unresolved, stats.venue_mentions);
        assert_eq!(stats.venues_unresolved, 2);
        assert_eq!(g.edge_count(Layer::VenueVenue), 1);
    }

    #[test]
    fn empty_corpus_warns() {
        let (g, stats) = build(&[], 10.0);
        assert_eq!(g.edge_count(Layer::VenueVenue), 0);
        assert_eq!(stats.warnings.len(), 1);
    }

    #[test]
    fn seeds_are_normalized_per_level() {
        let tax = tiny_taxonomy();
        let key = VenueKey::parse("optics letters").unwrap();
        let seeds = vec![
            SeedAssignment {
                venue: key.clone(),
                fos: "optics".into(),
                weight: 3.0,
            },
            SeedAssignment {
                venue: key.clone(),
                fos: "phys".into(),
                weight: 2.0,
            },
        ];
        let mut aliases = VenueAliasMap::new();
        let (g, stats) = build_graph(
            &[],
            &tax,
            &seeds,
            &VenueNormalizer::default(),
            &mut aliases,
            &BuildConfig::default(),
        )
        .unwrap();
        let v = g.node_id(NodeKind::Venue, "optics letters").unwrap();
        let f = g.node_id(NodeKind::FosLabel, "optics").unwrap();
        let p = g.node_id(NodeKind::FosLabel, "phys").unwrap();
        assert_eq!(g.edge_weight(v, f, Layer::VenueFos), Some(1.0));
        assert_eq!(g.edge_weight(v, p, Layer::VenueFos), Some(1.0));
        assert_eq!(stats.seed_assignments, 2);
        assert_eq!(stats.seed_venues, 1);
    }

    #[test]
    fn negative_threshold_rejected() {
        let mut aliases = VenueAliasMap::new();
        let err = build_graph(
            &[],
            &tiny_taxonomy(),
            &[],
            &VenueNormalizer::default(),
            &mut aliases,
            &BuildConfig {
                threshold: -1.0,
                ..BuildConfig::default()
            },
        );
        assert!(matches!(err, Err(IngestError::Config(_))));
    }
}
