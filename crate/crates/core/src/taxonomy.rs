//! Three-level FoS taxonomy and seed venue → FoS assignments.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::graph::{GraphError, Layer, MultilayerGraph, NodeKind};
use crate::venue::{VenueAliasMap, VenueKey, VenueNormalizer};

/// Deepest taxonomy level.
pub const MAX_LEVEL: u8 = 3;

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("taxonomy: line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("taxonomy: line {line}: duplicate label id {id:?}")]
    Duplicate { line: usize, id: String },
    #[error("taxonomy: line {line}: label {id:?} has unknown parent {parent:?}")]
    Orphan { line: usize, id: String, parent: String },
    #[error("taxonomy: line {line}: label {id:?} is part of a parent cycle")]
    Cycle { line: usize, id: String },
    #[error("taxonomy: line {line}: label {id:?} at level {level} has parent {parent:?} at level {parent_level}")]
    LevelMismatch {
        line: usize,
        id: String,
        level: u8,
        parent: String,
        parent_level: u8,
    },
    #[error("taxonomy: unknown label {0:?}")]
    UnknownLabel(String),
    #[error("taxonomy: graph holds an inconsistent hierarchy: {0}")]
    Graph(String),
    #[error("taxonomy: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FosLabel {
    pub id: String,
    pub name: String,
    pub level: u8,
    pub parent: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct Taxonomy {
    labels: Vec<FosLabel>,
    index: HashMap<String, usize>,
}

impl Taxonomy {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TaxonomyError> {
        Self::parse(BufReader::new(File::open(path)?))
    }

    /// Parses `id<TAB>name<TAB>level<TAB>parent` rows; `#` lines are comments.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self, TaxonomyError> {
        let mut rows = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 3 || cols.len() > 4 {
                return Err(TaxonomyError::Malformed {
                    line: lineno,
                    message: format!("expected 3 or 4 tab-separated columns, got {}", cols.len()),
                });
            }
            let id = cols[0].trim();
            if id.is_empty() || id.contains(' ') {
                return Err(TaxonomyError::Malformed {
                    line: lineno,
                    message: format!("label id {id:?} must be non-empty without spaces"),
                });
            }
            let level: u8 = match cols[2].trim().parse() {
                Ok(l) if (1..=MAX_LEVEL).contains(&l) => l,
                _ => {
                    return Err(TaxonomyError::Malformed {
                        line: lineno,
                        message: format!("level {:?} is not in 1..={MAX_LEVEL}", cols[2]),
                    })
                }
            };
            let parent = cols.get(3).map(|p| p.trim()).filter(|p| !p.is_empty());
            rows.push((
                lineno,
                FosLabel {
                    id: id.to_owned(),
                    name: cols[1].trim().to_owned(),
                    level,
                    parent: parent.map(str::to_owned),
                },
            ));
        }
        Self::from_rows(rows)
    }

    pub fn from_labels(labels: Vec<FosLabel>) -> Result<Self, TaxonomyError> {
        Self::from_rows(labels.into_iter().enumerate().map(|(i, l)| (i + 1, l)).collect())
    }

    fn from_rows(rows: Vec<(usize, FosLabel)>) -> Result<Self, TaxonomyError> {
        let mut index = HashMap::new();
        for (i, (line, label)) in rows.iter().enumerate() {
            if index.insert(label.id.clone(), i).is_some() {
                return Err(TaxonomyError::Duplicate {
                    line: *line,
                    id: label.id.clone(),
                });
            }
        }
        for (line, label) in &rows {
            let Some(parent) = &label.parent else {
                if label.level != 1 {
                    return Err(TaxonomyError::Malformed {
                        line: *line,
                        message: format!("level-{} label {:?} needs a parent", label.level, label.id),
                    });
                }
                continue;
            };
            let Some(&p) = index.get(parent) else {
                return Err(TaxonomyError::Orphan {
                    line: *line,
                    id: label.id.clone(),
                    parent: parent.clone(),
                });
            };
            // walk up; more steps than labels means a loop
            let mut cursor = Some(p);
            let mut steps = 0;
            while let Some(c) = cursor {
                if rows[c].1.id == label.id || steps > rows.len() {
                    return Err(TaxonomyError::Cycle {
                        line: *line,
                        id: label.id.clone(),
                    });
                }
                cursor = rows[c].1.parent.as_ref().and_then(|q| index.get(q)).copied();
                steps += 1;
            }
            let parent_level = rows[p].1.level;
            if parent_level + 1 != label.level {
                return Err(TaxonomyError::LevelMismatch {
                    line: *line,
                    id: label.id.clone(),
                    level: label.level,
                    parent: parent.clone(),
                    parent_level,
                });
            }
        }
        Ok(Self {
            labels: rows.into_iter().map(|(_, l)| l).collect(),
            index,
        })
    }

    /// Rebuilds the taxonomy from FoS nodes and hierarchy edges of a graph.
    /// Display names are not stored in graphs, so names equal ids.
    pub fn from_graph(graph: &MultilayerGraph) -> Result<Self, TaxonomyError> {
        let mut parent_of: BTreeMap<&str, &str> = BTreeMap::new();
        for layer in graph.layers() {
            if let Layer::FosHierarchy(_) = layer {
                for e in graph.edges(layer) {
                    let child = graph.key(e.source);
                    if parent_of.insert(child, graph.key(e.target)).is_some() {
                        return Err(TaxonomyError::Graph(format!("label {child:?} has several parents")));
                    }
                }
            }
        }
        let mut labels = Vec::new();
        for (_, id) in graph.nodes_of_kind(NodeKind::FosLabel) {
            let mut level = 1u8;
            let mut cursor = id;
            while let Some(p) = parent_of.get(cursor) {
                level += 1;
                if level > MAX_LEVEL {
                    return Err(TaxonomyError::Graph(format!("label {id:?} is deeper than {MAX_LEVEL}")));
                }
                cursor = p;
            }
            labels.push(FosLabel {
                id: id.to_owned(),
                name: id.to_owned(),
                level,
                parent: parent_of.get(id).map(|p| (*p).to_owned()),
            });
        }
        Self::from_labels(labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[FosLabel] {
        &self.labels
    }

    pub fn get(&self, id: &str) -> Option<&FosLabel> {
        self.index.get(id).map(|&i| &self.labels[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn level_of(&self, id: &str) -> Option<u8> {
        self.get(id).map(|l| l.level)
    }

    pub fn parent(&self, id: &str) -> Option<&str> {
        self.get(id).and_then(|l| l.parent.as_deref())
    }

    /// Number of labels at levels 1, 2 and 3.
    pub fn level_counts(&self) -> [usize; MAX_LEVEL as usize] {
        let mut counts = [0; MAX_LEVEL as usize];
        for l in &self.labels {
            counts[(l.level - 1) as usize] += 1;
        }
        counts
    }

    pub fn labels_at(&self, level: u8) -> impl Iterator<Item = &FosLabel> + '_ {
        self.labels.iter().filter(move |l| l.level == level)
    }

    /// Ancestors from the direct parent up to the level-1 root.
    pub fn ancestors(&self, id: &str) -> Result<Vec<&str>, TaxonomyError> {
        let mut label = self.get(id).ok_or_else(|| TaxonomyError::UnknownLabel(id.to_owned()))?;
        let mut out = Vec::new();
        while let Some(parent) = label.parent.as_deref() {
            out.push(parent);
            label = self
                .get(parent)
                .ok_or_else(|| TaxonomyError::UnknownLabel(parent.to_owned()))?;
        }
        Ok(out)
    }

    /// Ancestor of `id` at `level`, or `id` itself when it already sits there.
    pub fn ancestor_at(&self, id: &str, level: u8) -> Option<&str> {
        let mut label = self.get(id)?;
        while label.level > level {
            label = self.get(label.parent.as_deref()?)?;
        }
        (label.level == level).then_some(label.id.as_str())
    }

    /// Adds one FoS node per label and a child→parent hierarchy edge (weight 1)
    /// per parent link.
    pub fn install(&self, graph: &mut MultilayerGraph) -> Result<(), GraphError> {
        for label in &self.labels {
            graph.add_node(NodeKind::FosLabel, &label.id)?;
        }
        for label in &self.labels {
            if let Some(parent) = &label.parent {
                let c = graph.add_node(NodeKind::FosLabel, &label.id)?;
                let p = graph.add_node(NodeKind::FosLabel, parent)?;
                let layer = Layer::hierarchy_for_child_level(label.level);
                if graph.edge_weight(c, p, layer).is_none() {
                    graph.upsert_edge(c, p, layer, 1.0)?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedAssignment {
    pub venue: VenueKey,
    pub fos: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedSeed {
    pub line: usize,
    pub raw: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SeedReport {
    /// Merged assignments sorted by (venue, fos).
    pub assignments: Vec<SeedAssignment>,
    pub skipped: Vec<SkippedSeed>,
}

/// Canonical keys of venues never used as seeds (multidisciplinary journals).
#[derive(Debug, Clone, Default)]
pub struct ExclusionList {
    keys: HashSet<VenueKey>,
}

impl ExclusionList {
    pub fn new() -> Self {
        Self::default()
    }

    /// One raw journal name per line, resolved with `normalizer`.
    pub fn load(path: impl AsRef<Path>, normalizer: &VenueNormalizer) -> Result<Self, TaxonomyError> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_names(crate::venue::parse_list(&text).iter(), normalizer))
    }

    pub fn from_names<S: AsRef<str>>(names: impl Iterator<Item = S>, normalizer: &VenueNormalizer) -> Self {
        let keys = names.filter_map(|n| normalizer.resolve(n.as_ref()).ok()).collect();
        Self { keys }
    }

    pub fn contains(&self, key: &VenueKey) -> bool {
        self.keys.contains(key)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

/// Reads `raw journal<TAB>fos id[<TAB>weight]` rows. Journal names go through
/// the alias map; rows naming unknown labels, unresolvable or excluded venues,
/// or bad weights are skipped and reported. Duplicate (venue, fos) pairs are
/// merged by summing their weights.
pub fn load_seeds(
    path: impl AsRef<Path>,
    taxonomy: &Taxonomy,
    normalizer: &VenueNormalizer,
    aliases: &mut VenueAliasMap,
    exclusions: &ExclusionList,
) -> Result<SeedReport, TaxonomyError> {
    let reader = BufReader::new(File::open(path)?);
    parse_seeds(reader, taxonomy, normalizer, aliases, exclusions)
}

pub fn parse_seeds<R: BufRead>(
    reader: R,
    taxonomy: &Taxonomy,
    normalizer: &VenueNormalizer,
    aliases: &mut VenueAliasMap,
    exclusions: &ExclusionList,
) -> Result<SeedReport, TaxonomyError> {
    let mut merged: BTreeMap<(VenueKey, String), f64> = BTreeMap::new();
    let mut skipped = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let mut skip = |reason: String| {
            skipped.push(SkippedSeed {
                line: lineno,
                raw: line.clone(),
                reason,
            });
        };
        if cols.len() < 2 || cols.len() > 3 {
            skip(format!("expected 2 or 3 columns, got {}", cols.len()));
            continue;
        }
        let fos = cols[1].trim();
        if !taxonomy.contains(fos) {
            skip(format!("unknown FoS label {fos:?}"));
            continue;
        }
        let weight = match cols.get(2).map(|w| w.trim().parse::<f64>()) {
            None => 1.0,
            Some(Ok(w)) if w.is_finite() && w > 0.0 => w,
            Some(_) => {
                skip(format!("weight {:?} is not a positive number", cols[2]));
                continue;
            }
        };
        let venue = match normalizer.canonicalize(cols[0], aliases) {
            Ok(key) => key,
            Err(e) => {
                skip(e.to_string());
                continue;
            }
        };
        if exclusions.contains(&venue) {
            skip(format!("venue {venue:?} is on the exclusion list"));
            continue;
        }
        *merged.entry((venue, fos.to_owned())).or_insert(0.0) += weight;
    }
    for s in &skipped {
        log::warn!("seed line {}: skipped: {}", s.line, s.reason);
    }
    let assignments = merged
        .into_iter()
        .map(|((venue, fos), weight)| SeedAssignment { venue, fos, weight })
        .collect();
    Ok(SeedReport { assignments, skipped })
}
