//! Label propagation of venue → FoS weights over the venue citation layer.
//!
//! One round computes, for every venue `i` with cited neighbours `j`,
//! `w(i, k) = Σ_j w(i, j) · w(j, k)` from the previous round's table. Each
//! resulting distribution is sum-normalized, cut to `keep_top` labels, stripped
//! of labels below `min_fos_weight` and renormalized. Rounds are double
//! buffered so every venue update inside a round is independent.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{GraphError, Layer, MultilayerGraph, NodeId, NodeKind};
use crate::taxonomy::{SeedAssignment, Taxonomy, MAX_LEVEL};

#[derive(Debug, Error)]
pub enum PropagateError {
    #[error("propagate: invalid configuration: {0}")]
    Config(String),
    #[error("propagate: precondition violated: {0}")]
    Precondition(String),
    #[error("propagate: no seed assignments at any level")]
    EmptySeeds,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("propagate: table line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("propagate: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropagationConfig {
    pub rounds: u32,
    pub keep_top: usize,
    pub min_fos_weight: f64,
    pub preserve_isolated_seeds: bool,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            rounds: 2,
            keep_top: 5,
            min_fos_weight: 1e-4,
            preserve_isolated_seeds: true,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<(), PropagateError> {
        if self.rounds < 1 {
            return Err(PropagateError::Config("rounds must be at least 1".into()));
        }
        if self.keep_top < 1 {
            return Err(PropagateError::Config("keep_top must be at least 1".into()));
        }
        if !self.min_fos_weight.is_finite() || self.min_fos_weight < 0.0 {
            return Err(PropagateError::Config(format!(
                "min_fos_weight must be a non-negative number, got {}",
                self.min_fos_weight
            )));
        }
        Ok(())
    }
}

/// Venue → FoS weights per taxonomy level. Entries are sorted by descending
/// weight, ties by FoS id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FosWeightTable {
    levels: BTreeMap<u8, BTreeMap<String, Vec<(String, f64)>>>,
}

impl FosWeightTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replaces the entry for (`level`, `venue`); empty entries are removed.
    pub fn set(&mut self, level: u8, venue: &str, mut weights: Vec<(String, f64)>) {
        if weights.is_empty() {
            if let Some(m) = self.levels.get_mut(&level) {
                m.remove(venue);
            }
            return;
        }
        sort_weights(&mut weights);
        self.levels.entry(level).or_default().insert(venue.to_owned(), weights);
    }

    pub fn get(&self, level: u8, venue: &str) -> Option<&[(String, f64)]> {
        self.levels.get(&level)?.get(venue).map(Vec::as_slice)
    }

    pub fn venues_at(&self, level: u8) -> impl Iterator<Item = (&str, &[(String, f64)])> + '_ {
        self.levels
            .get(&level)
            .into_iter()
            .flat_map(|m| m.iter().map(|(k, v)| (k.as_str(), v.as_slice())))
    }

    pub fn levels(&self) -> impl Iterator<Item = u8> + '_ {
        self.levels.iter().filter(|(_, m)| !m.is_empty()).map(|(l, _)| *l)
    }

    pub fn labeled_count(&self, level: u8) -> usize {
        self.levels.get(&level).map_or(0, BTreeMap::len)
    }

    pub fn is_empty(&self) -> bool {
        self.levels.values().all(BTreeMap::is_empty)
    }

    /// Writes `venue\tlevel\tfos\tweight` lines sorted by venue, level and
    /// descending weight.
    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<(), PropagateError> {
        let mut rows: BTreeMap<(&str, u8), &[(String, f64)]> = BTreeMap::new();
        for (level, m) in &self.levels {
            for (venue, weights) in m {
                rows.insert((venue.as_str(), *level), weights);
            }
        }
        for ((venue, level), weights) in rows {
            for (fos, w) in weights {
                writeln!(out, "{venue}\t{level}\t{fos}\t{w}")?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PropagateError> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PropagateError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    pub fn read_from<R: Read>(reader: BufReader<R>) -> Result<Self, PropagateError> {
        let mut grouped: BTreeMap<(u8, String), Vec<(String, f64)>> = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| PropagateError::Parse { line: idx + 1, message };
            let cols: Vec<&str> = line.split('\t').collect();
            let [venue, level, fos, weight] = cols[..] else {
                return Err(err(format!("expected 4 columns, found {}", cols.len())));
            };
            let level: u8 = level.parse().map_err(|_| err(format!("bad level {level:?}")))?;
            let weight: f64 = weight.parse().map_err(|_| err(format!("bad weight {weight:?}")))?;
            if !weight.is_finite() || weight < 0.0 {
                return Err(err(format!("weight {weight} is not a non-negative number")));
            }
            grouped
                .entry((level, venue.to_owned()))
                .or_default()
                .push((fos.to_owned(), weight));
        }
        let mut table = Self::new();
        for ((level, venue), weights) in grouped {
            table.set(level, &venue, weights);
        }
        Ok(table)
    }
}

fn sort_weights(weights: &mut [(String, f64)]) {
    weights.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}

/// Venues carrying at least one FoS weight, indexed by level − 1.
pub fn coverage(table: &FosWeightTable) -> [usize; MAX_LEVEL as usize] {
    std::array::from_fn(|i| table.labeled_count(i as u8 + 1))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropagationOutcome {
    #[serde(skip)]
    pub table: FosWeightTable,
    /// Venues with direct seed weights per level, before roll-up.
    pub pre: [usize; MAX_LEVEL as usize],
    /// Coverage after round 0 (seeds plus roll-up) and after each round.
    pub per_round: Vec<[usize; MAX_LEVEL as usize]>,
    pub post: [usize; MAX_LEVEL as usize],
}

/// Dense per-level table: venue index → sorted (fos index, weight).
type Dense = Vec<Vec<(u32, f64)>>;

/// Compressed L3 adjacency plus the venue and FoS index spaces.
pub struct Propagator<'g> {
    venue_keys: Vec<&'g str>,
    venue_index: HashMap<&'g str, u32>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
    fos_ids: Vec<String>,
    fos_index: HashMap<String, u32>,
    config: PropagationConfig,
}

impl<'g> Propagator<'g> {
    /// Indexes venues in node id order and FoS labels in id order.
    pub fn new(
        graph: &'g MultilayerGraph,
        fos_ids: impl IntoIterator<Item = String>,
        config: PropagationConfig,
    ) -> Result<Self, PropagateError> {
        config.validate()?;
        if graph.edge_count(Layer::VenueVenue) > 0 && graph.normalization(Layer::VenueVenue).is_none() {
            return Err(PropagateError::Precondition(
                "venue citation layer L3 is not normalized".into(),
            ));
        }
        let venues: Vec<(NodeId, &'g str)> = graph.nodes_of_kind(NodeKind::Venue).collect();
        let dense: HashMap<NodeId, u32> = venues.iter().enumerate().map(|(i, (id, _))| (*id, i as u32)).collect();
        let mut offsets = Vec::with_capacity(venues.len() + 1);
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for (id, _) in &venues {
            for (t, w) in graph.out_edges(*id, Layer::VenueVenue) {
                targets.push(dense[&t]);
                weights.push(w);
            }
            offsets.push(targets.len());
        }
        let mut fos_ids: Vec<String> = fos_ids.into_iter().collect();
        fos_ids.sort_unstable();
        fos_ids.dedup();
        let fos_index = fos_ids.iter().enumerate().map(|(i, f)| (f.clone(), i as u32)).collect();
        Ok(Self {
            venue_index: venues.iter().enumerate().map(|(i, (_, k))| (*k, i as u32)).collect(),
            venue_keys: venues.into_iter().map(|(_, k)| k).collect(),
            offsets,
            targets,
            weights,
            fos_ids,
            fos_index,
            config,
        })
    }

    pub fn venue_count(&self) -> usize {
        self.venue_keys.len()
    }

    /// Sum-normalize, keep the `keep_top` heaviest, drop weights below
    /// `min_fos_weight`, renormalize.
    fn finalize(&self, acc: Vec<(u32, f64)>) -> Vec<(u32, f64)> {
        finalize_entry(acc, self.config.keep_top, self.config.min_fos_weight)
    }

    /// One propagation round over a dense table.
    fn step(&self, prev: &Dense) -> Dense {
        (0..self.venue_count())
            .into_par_iter()
            .map(|i| {
                let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
                if lo == hi {
                    return if self.config.preserve_isolated_seeds {
                        prev[i].clone()
                    } else {
                        Vec::new()
                    };
                }
                let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
                for e in lo..hi {
                    let w_ij = self.weights[e];
                    for &(k, w_jk) in &prev[self.targets[e] as usize] {
                        *acc.entry(k).or_insert(0.0) += w_ij * w_jk;
                    }
                }
                self.finalize(acc.into_iter().collect())
            })
            .collect()
    }

    fn to_dense(&self, table: &FosWeightTable, level: u8) -> Dense {
        let mut dense: Dense = vec![Vec::new(); self.venue_count()];
        for (venue, weights) in table.venues_at(level) {
            let Some(&i) = self.venue_index.get(venue) else {
                continue;
            };
            let mut row: Vec<(u32, f64)> = weights
                .iter()
                .filter_map(|(f, w)| self.fos_index.get(f).map(|k| (*k, *w)))
                .collect();
            row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            dense[i as usize] = row;
        }
        dense
    }

    fn write_dense(&self, dense: &Dense, level: u8, table: &mut FosWeightTable) {
        for (i, row) in dense.iter().enumerate() {
            if !row.is_empty() {
                let weights = row
                    .iter()
                    .map(|(k, w)| (self.fos_ids[*k as usize].clone(), *w))
                    .collect();
                table.set(level, self.venue_keys[i], weights);
            }
        }
    }

    /// Applies one round at `level` to `previous`, returning that level only.
    pub fn round(&self, level: u8, previous: &FosWeightTable) -> FosWeightTable {
        let next = self.step(&self.to_dense(previous, level));
        let mut table = FosWeightTable::new();
        self.write_dense(&next, level, &mut table);
        table
    }

    /// Round-0 tables: direct seeds per level, each coarser level topped up
    /// with the roll-up of the finer level through taxonomy parents.
    pub fn seed_tables(
        &self,
        taxonomy: &Taxonomy,
        seeds: &[SeedAssignment],
    ) -> (Vec<Dense>, [usize; MAX_LEVEL as usize]) {
        let n = self.venue_count();
        let mut direct: Vec<Vec<BTreeMap<u32, f64>>> = vec![vec![BTreeMap::new(); n]; MAX_LEVEL as usize];
        for s in seeds {
            let (Some(&i), Some(&k), Some(level)) = (
                self.venue_index.get(s.venue.as_str()),
                self.fos_index.get(&s.fos),
                taxonomy.level_of(&s.fos),
            ) else {
                log::warn!("seed {} -> {} ignored: venue or label not in graph", s.venue, s.fos);
                continue;
            };
            if s.weight > 0.0 {
                *direct[level as usize - 1][i as usize].entry(k).or_insert(0.0) += s.weight;
            }
        }
        let pre = std::array::from_fn(|l| direct[l].iter().filter(|m| !m.is_empty()).count());
        let parent: Vec<Option<u32>> = self
            .fos_ids
            .iter()
            .map(|f| taxonomy.parent(f).and_then(|p| self.fos_index.get(p).copied()))
            .collect();
        let mut tables: Vec<Dense> = vec![Vec::new(); MAX_LEVEL as usize];
        for level in (1..=MAX_LEVEL as usize).rev() {
            let finer = tables.get(level).filter(|t| !t.is_empty());
            let rows: Dense = (0..n)
                .map(|i| {
                    let mut acc = direct[level - 1][i].clone();
                    if let Some(finer) = finer {
                        for &(k, w) in &finer[i] {
                            if let Some(p) = parent[k as usize] {
                                *acc.entry(p).or_insert(0.0) += w;
                            }
                        }
                    }
                    self.finalize(acc.into_iter().collect())
                })
                .collect();
            tables[level - 1] = rows;
        }
        (tables, pre)
    }

    /// Seeds, roll-up and `config.rounds` rounds at every level.
    pub fn propagate(
        &self,
        taxonomy: &Taxonomy,
        seeds: &[SeedAssignment],
    ) -> Result<PropagationOutcome, PropagateError> {
        let (mut tables, pre) = self.seed_tables(taxonomy, seeds);
        if pre.iter().all(|c| *c == 0) {
            return Err(PropagateError::EmptySeeds);
        }
        let count = |tables: &[Dense]| -> [usize; MAX_LEVEL as usize] {
            std::array::from_fn(|l| tables[l].iter().filter(|r| !r.is_empty()).count())
        };
        let mut per_round = vec![count(&tables)];
        for round in 1..=self.config.rounds {
            tables = tables.iter().map(|t| self.step(t)).collect();
            let c = count(&tables);
            log::info!("propagation round {round}: labeled venues per level {c:?}");
            per_round.push(c);
        }
        let mut table = FosWeightTable::new();
        for (l, dense) in tables.iter().enumerate() {
            self.write_dense(dense, l as u8 + 1, &mut table);
        }
        let post = coverage(&table);
        Ok(PropagationOutcome {
            table,
            pre,
            per_round,
            post,
        })
    }
}

/// Shared post-processing of one venue's accumulated FoS weights.
pub fn finalize_entry(mut acc: Vec<(u32, f64)>, keep_top: usize, min_weight: f64) -> Vec<(u32, f64)> {
    let total: f64 = acc.iter().map(|(_, w)| w).sum();
    if total <= 0.0 || !total.is_finite() {
        return Vec::new();
    }
    for (_, w) in acc.iter_mut() {
        *w /= total;
    }
    acc.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    acc.truncate(keep_top);
    acc.retain(|(_, w)| *w >= min_weight && *w > 0.0);
    let total: f64 = acc.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return Vec::new();
    }
    for (_, w) in acc.iter_mut() {
        *w /= total;
    }
    acc
}

/// Seed assignments currently stored as L4 edges.
pub fn seeds_from_graph(graph: &MultilayerGraph) -> Vec<SeedAssignment> {
    graph
        .edges(Layer::VenueFos)
        .filter_map(|e| {
            Some(SeedAssignment {
                venue: crate::venue::VenueKey::parse(graph.key(e.source))?,
                fos: graph.key(e.target).to_owned(),
                weight: e.weight,
            })
        })
        .collect()
}

/// One propagation round at `level`: every venue with cited neighbours gets
/// the weighted aggregate of their previous FoS weights.
pub fn propagate_round(
    graph: &MultilayerGraph,
    level: u8,
    previous: &FosWeightTable,
    config: &PropagationConfig,
) -> Result<FosWeightTable, PropagateError> {
    let fos = graph.nodes_of_kind(NodeKind::FosLabel).map(|(_, k)| k.to_owned());
    let p = Propagator::new(graph, fos, config.clone())?;
    Ok(p.round(level, previous))
}

/// Full propagation from `seeds`. The final table replaces the graph's L4
/// layer.
pub fn run(
    graph: &mut MultilayerGraph,
    taxonomy: &Taxonomy,
    seeds: &[SeedAssignment],
    config: &PropagationConfig,
) -> Result<PropagationOutcome, PropagateError> {
    let outcome = {
        let fos = taxonomy.labels().iter().map(|l| l.id.clone());
        let p = Propagator::new(graph, fos, config.clone())?;
        p.propagate(taxonomy, seeds)?
    };
    write_back(graph, &outcome.table)?;
    Ok(outcome)
}

/// Replaces the L4 layer with the table's weights.
pub fn write_back(graph: &mut MultilayerGraph, table: &FosWeightTable) -> Result<(), PropagateError> {
    graph.clear_layer(Layer::VenueFos);
    for level in table.levels().collect::<Vec<_>>() {
        for (venue, weights) in table.venues_at(level) {
            let v = graph
                .node_id(NodeKind::Venue, venue)
                .ok_or_else(|| PropagateError::Precondition(format!("venue {venue:?} not in graph")))?;
            for (fos, w) in weights {
                let f = graph.add_node(NodeKind::FosLabel, fos)?;
                graph.upsert_edge(v, f, Layer::VenueFos, *w)?;
            }
        }
    }
    Ok(())
}
