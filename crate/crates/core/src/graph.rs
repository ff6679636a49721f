//! Multilayer directed weighted graph.
//!
//! Nodes are publications, venues and FoS labels. Every edge lives in exactly
//! one [`Layer`], and each layer fixes the node kinds allowed at its endpoints.
//! Edge storage is ordered (`BTreeMap`) so that iteration, serialization and
//! every derived computation are independent of insertion history.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Magic first field of the graph file header.
pub const GRAPH_MAGIC: &str = "fosgraph-graph";
/// Current graph file format version.
pub const GRAPH_VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph: invalid argument: {0}")]
    InvalidArgument(String),
    #[error("graph: unknown node {0}")]
    UnknownNode(NodeId),
    #[error(
        "graph: layer {layer} connects {expected_source} -> {expected_target}, got {source_kind} -> {target_kind}"
    )]
    LayerConstraint {
        layer: Layer,
        expected_source: NodeKind,
        expected_target: NodeKind,
        source_kind: NodeKind,
        target_kind: NodeKind,
    },
    #[error("graph: line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("graph: unsupported format version {found:?} (expected {expected:?})")]
    Version { found: String, expected: &'static str },
    #[error("graph: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Publication,
    Venue,
    FosLabel,
}

impl NodeKind {
    pub fn tag(self) -> &'static str {
        match self {
            NodeKind::Publication => "publication",
            NodeKind::Venue => "venue",
            NodeKind::FosLabel => "fos",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for NodeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "publication" => Ok(NodeKind::Publication),
            "venue" => Ok(NodeKind::Venue),
            "fos" => Ok(NodeKind::FosLabel),
            other => Err(format!("unknown node kind {other:?}")),
        }
    }
}

/// Edge layers. `FosHierarchy(k)` is the `L{5+k}` layer; by convention the
/// taxonomy installs child→parent edges of level `k + 2` labels there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Layer {
    /// L0: publication → FoS label.
    PubFos,
    /// L1: publication → cited publication.
    PubPub,
    /// L2: publication → publishing venue.
    PubVenue,
    /// L3: citing venue → cited venue.
    VenueVenue,
    /// L4: venue → FoS label.
    VenueFos,
    /// L5+k: FoS label → parent FoS label.
    FosHierarchy(u8),
}

impl Layer {
    /// Allowed `(source, target)` node kinds.
    pub fn endpoint_kinds(self) -> (NodeKind, NodeKind) {
        match self {
            Layer::PubFos => (NodeKind::Publication, NodeKind::FosLabel),
            Layer::PubPub => (NodeKind::Publication, NodeKind::Publication),
            Layer::PubVenue => (NodeKind::Publication, NodeKind::Venue),
            Layer::VenueVenue => (NodeKind::Venue, NodeKind::Venue),
            Layer::VenueFos => (NodeKind::Venue, NodeKind::FosLabel),
            Layer::FosHierarchy(_) => (NodeKind::FosLabel, NodeKind::FosLabel),
        }
    }

    /// Hierarchy layer holding the parent links of labels at `child_level` (2 or 3).
    pub fn hierarchy_for_child_level(child_level: u8) -> Layer {
        Layer::FosHierarchy(child_level.saturating_sub(2))
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Layer::PubFos => f.write_str("L0"),
            Layer::PubPub => f.write_str("L1"),
            Layer::PubVenue => f.write_str("L2"),
            Layer::VenueVenue => f.write_str("L3"),
            Layer::VenueFos => f.write_str("L4"),
            Layer::FosHierarchy(k) => write!(f, "L{}", 5 + u32::from(*k)),
        }
    }
}

impl FromStr for Layer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let n: u32 = s
            .strip_prefix('L')
            .and_then(|rest| rest.parse().ok())
            .ok_or_else(|| format!("malformed layer tag {s:?}"))?;
        Ok(match n {
            0 => Layer::PubFos,
            1 => Layer::PubPub,
            2 => Layer::PubVenue,
            3 => Layer::VenueVenue,
            4 => Layer::VenueFos,
            k if k - 5 <= u32::from(u8::MAX) => Layer::FosHierarchy((k - 5) as u8),
            _ => return Err(format!("layer tag {s:?} out of range")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    /// Divide each outgoing weight by the neighbourhood sum.
    #[default]
    Sum,
    /// Divide each outgoing weight by the neighbourhood maximum.
    Max,
}

impl fmt::Display for NormMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormMode::Sum => "sum",
            NormMode::Max => "max",
        })
    }
}

impl FromStr for NormMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sum" => Ok(NormMode::Sum),
            "max" => Ok(NormMode::Max),
            other => Err(format!("unknown normalization mode {other:?} (expected sum or max)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub kind: NodeKind,
    pub key: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub source: NodeId,
    pub target: NodeId,
    pub layer: Layer,
    pub weight: f64,
}

/// Outcome of [`MultilayerGraph::normalize_outgoing`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NormalizeReport {
    /// Nodes whose outgoing weights were rescaled.
    pub normalized: usize,
    /// Nodes left untouched because all their outgoing weights are zero.
    pub zero_weight: Vec<NodeId>,
}

type Adjacency = BTreeMap<NodeId, BTreeMap<NodeId, f64>>;

#[derive(Debug, Clone, Default)]
pub struct MultilayerGraph {
    nodes: Vec<Node>,
    index: HashMap<NodeKind, HashMap<String, NodeId>>,
    layers: BTreeMap<Layer, Adjacency>,
    normalized: BTreeMap<Layer, NormMode>,
    provenance: BTreeMap<String, String>,
}

fn check_text(what: &str, text: &str) -> Result<(), GraphError> {
    if text.is_empty() {
        return Err(GraphError::InvalidArgument(format!("{what} must be non-empty")));
    }
    if text.contains(['\t', '\n', '\r']) {
        return Err(GraphError::InvalidArgument(format!(
            "{what} {text:?} contains a tab or line break"
        )));
    }
    Ok(())
}

impl MultilayerGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id of the `(kind, key)` node, creating it if needed.
    pub fn add_node(&mut self, kind: NodeKind, key: &str) -> Result<NodeId, GraphError> {
        check_text("node key", key)?;
        if let Some(id) = self.node_id(kind, key) {
            return Ok(id);
        }
        let raw = u32::try_from(self.nodes.len())
            .map_err(|_| GraphError::InvalidArgument("node id space exhausted".into()))?;
        let id = NodeId(raw);
        self.nodes.push(Node {
            kind,
            key: key.to_owned(),
        });
        self.index.entry(kind).or_default().insert(key.to_owned(), id);
        Ok(id)
    }

    pub fn node_id(&self, kind: NodeKind, key: &str) -> Option<NodeId> {
        self.index.get(&kind).and_then(|m| m.get(key)).copied()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.index())
    }

    fn require(&self, id: NodeId) -> Result<&Node, GraphError> {
        self.node(id).ok_or(GraphError::UnknownNode(id))
    }

    /// Canonical key of an existing node. Panics on an id from another graph.
    pub fn key(&self, id: NodeId) -> &str {
        &self.nodes[id.index()].key
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node)> + '_ {
        self.nodes.iter().enumerate().map(|(i, n)| (NodeId(i as u32), n))
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = (NodeId, &str)> + '_ {
        self.nodes()
            .filter(move |(_, n)| n.kind == kind)
            .map(|(id, n)| (id, n.key.as_str()))
    }

    /// Adds `delta` to the `(source, target, layer)` edge, creating it when absent.
    /// Returns the accumulated weight.
    pub fn upsert_edge(&mut self, source: NodeId, target: NodeId, layer: Layer, delta: f64) -> Result<f64, GraphError> {
        if !delta.is_finite() || delta < 0.0 {
            return Err(GraphError::InvalidArgument(format!(
                "edge weight delta must be finite and non-negative, got {delta}"
            )));
        }
        let source_kind = self.require(source)?.kind;
        let target_kind = self.require(target)?.kind;
        let (expected_source, expected_target) = layer.endpoint_kinds();
        if source_kind != expected_source || target_kind != expected_target {
            return Err(GraphError::LayerConstraint {
                layer,
                expected_source,
                expected_target,
                source_kind,
                target_kind,
            });
        }
        self.normalized.remove(&layer);
        let weight = self
            .layers
            .entry(layer)
            .or_default()
            .entry(source)
            .or_default()
            .entry(target)
            .or_insert(0.0);
        *weight += delta;
        Ok(*weight)
    }

    pub fn edge_weight(&self, source: NodeId, target: NodeId, layer: Layer) -> Option<f64> {
        self.layers.get(&layer)?.get(&source)?.get(&target).copied()
    }

    /// Outgoing edges of `node` in `layer`, ordered by target id.
    pub fn out_edges(&self, node: NodeId, layer: Layer) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.layers
            .get(&layer)
            .and_then(|adj| adj.get(&node))
            .into_iter()
            .flat_map(|targets| targets.iter().map(|(t, w)| (*t, *w)))
    }

    pub fn out_degree(&self, node: NodeId, layer: Layer) -> usize {
        self.layers
            .get(&layer)
            .and_then(|adj| adj.get(&node))
            .map_or(0, BTreeMap::len)
    }

    /// Outgoing neighbours sorted by descending weight, ties broken by ascending
    /// target key.
    pub fn neighbors(&self, node: NodeId, layer: Layer) -> Result<Vec<(NodeId, f64)>, GraphError> {
        self.require(node)?;
        let mut out: Vec<(NodeId, f64)> = self.out_edges(node, layer).collect();
        out.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.key(a.0).cmp(self.key(b.0)))
                .then_with(|| a.0.cmp(&b.0))
        });
        Ok(out)
    }

    /// All edges of a layer ordered by (source id, target id).
    pub fn edges(&self, layer: Layer) -> impl Iterator<Item = Edge> + '_ {
        self.layers.get(&layer).into_iter().flat_map(move |adj| {
            adj.iter().flat_map(move |(s, targets)| {
                targets.iter().map(move |(t, w)| Edge {
                    source: *s,
                    target: *t,
                    layer,
                    weight: *w,
                })
            })
        })
    }

    pub fn edge_count(&self, layer: Layer) -> usize {
        self.layers
            .get(&layer)
            .map_or(0, |adj| adj.values().map(BTreeMap::len).sum())
    }

    pub fn total_edge_count(&self) -> usize {
        self.layers.keys().map(|l| self.edge_count(*l)).sum()
    }

    /// Layers that currently hold at least one edge.
    pub fn layers(&self) -> impl Iterator<Item = Layer> + '_ {
        self.layers
            .iter()
            .filter(|(_, adj)| adj.values().any(|t| !t.is_empty()))
            .map(|(l, _)| *l)
    }

    /// Removes every edge of `layer`; returns how many were dropped.
    pub fn clear_layer(&mut self, layer: Layer) -> usize {
        let removed = self.edge_count(layer);
        self.layers.remove(&layer);
        self.normalized.remove(&layer);
        removed
    }

    /// Rescales each node's outgoing weights in `layer` by their sum or maximum.
    pub fn normalize_outgoing(&mut self, layer: Layer, mode: NormMode) -> NormalizeReport {
        let mut report = NormalizeReport::default();
        if let Some(adj) = self.layers.get_mut(&layer) {
            for (source, targets) in adj.iter_mut() {
                let denom = match mode {
                    NormMode::Sum => targets.values().sum::<f64>(),
                    NormMode::Max => targets.values().copied().fold(0.0, f64::max),
                };
                if denom > 0.0 {
                    for w in targets.values_mut() {
                        *w /= denom;
                    }
                    report.normalized += 1;
                } else if !targets.is_empty() {
                    report.zero_weight.push(*source);
                }
            }
        }
        if !report.zero_weight.is_empty() {
            log::warn!(
                "{} node(s) in {layer} have only zero-weight outgoing edges; left unnormalized",
                report.zero_weight.len()
            );
        }
        self.normalized.insert(layer, mode);
        report
    }

    /// Normalization mode last applied to `layer`, if it has not been modified since.
    pub fn normalization(&self, layer: Layer) -> Option<NormMode> {
        self.normalized.get(&layer).copied()
    }

    /// Removes edges with weight `<= min_weight`; returns how many were dropped.
    pub fn prune_layer(&mut self, layer: Layer, min_weight: f64) -> usize {
        let Some(adj) = self.layers.get_mut(&layer) else {
            return 0;
        };
        let mut removed = 0;
        for targets in adj.values_mut() {
            let before = targets.len();
            targets.retain(|_, w| *w > min_weight);
            removed += before - targets.len();
        }
        adj.retain(|_, targets| !targets.is_empty());
        if removed > 0 {
            self.normalized.remove(&layer);
        }
        removed
    }

    pub fn provenance(&self) -> &BTreeMap<String, String> {
        &self.provenance
    }

    pub fn set_provenance(&mut self, key: &str, value: impl ToString) -> Result<(), GraphError> {
        check_text("provenance key", key)?;
        if key == "norm" || key.contains('=') {
            return Err(GraphError::InvalidArgument(format!(
                "provenance key {key:?} is reserved or contains '='"
            )));
        }
        let value = value.to_string();
        if value.contains(['\t', '\n', '\r']) {
            return Err(GraphError::InvalidArgument(format!(
                "provenance value {value:?} contains a tab or line break"
            )));
        }
        self.provenance.insert(key.to_owned(), value);
        Ok(())
    }

    /// Equality of node sets, edge sets, normalization flags and provenance,
    /// with edge weights compared to within `tolerance`.
    pub fn structurally_eq(&self, other: &Self, tolerance: f64) -> bool {
        if self.nodes != other.nodes || self.normalized != other.normalized || self.provenance != other.provenance {
            return false;
        }
        let mine: Vec<Layer> = self.layers().collect();
        let theirs: Vec<Layer> = other.layers().collect();
        if mine != theirs {
            return false;
        }
        mine.into_iter().all(|layer| {
            let a: Vec<Edge> = self.edges(layer).collect();
            let b: Vec<Edge> = other.edges(layer).collect();
            a.len() == b.len()
                && a.iter().zip(&b).all(|(x, y)| {
                    x.source == y.source && x.target == y.target && (x.weight - y.weight).abs() <= tolerance
                })
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    /// Writes the versioned text container: one header line, then `N` node
    /// lines in id order, then `E` edge lines in (layer, source, target) order.
    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<(), GraphError> {
        let norm: Vec<String> = self.normalized.iter().map(|(l, m)| format!("{l}:{m}")).collect();
        write!(out, "{GRAPH_MAGIC}\t{GRAPH_VERSION}\tnorm={}", norm.join(","))?;
        for (k, v) in &self.provenance {
            write!(out, "\t{k}={v}")?;
        }
        out.write_all(b"\n")?;
        for (id, node) in self.nodes() {
            writeln!(out, "N\t{id}\t{}\t{}", node.kind, node.key)?;
        }
        for layer in self.layers.keys() {
            for e in self.edges(*layer) {
                writeln!(out, "E\t{}\t{}\t{}\t{:.9}", e.source, e.target, e.layer, e.weight)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(reader: BufReader<R>) -> Result<Self, GraphError> {
        let mut lines = reader.lines().enumerate();
        let parse_err = |line: usize, message: String| GraphError::Parse { line, message };

        let header = match lines.next() {
            Some((_, line)) => line?,
            None => return Err(parse_err(1, "missing header line".into())),
        };
        let mut graph = MultilayerGraph::new();
        let mut fields = header.split('\t');
        if fields.next() != Some(GRAPH_MAGIC) {
            return Err(parse_err(1, format!("expected {GRAPH_MAGIC:?} header")));
        }
        match fields.next() {
            Some(GRAPH_VERSION) => {}
            found => {
                return Err(GraphError::Version {
                    found: found.unwrap_or_default().to_owned(),
                    expected: GRAPH_VERSION,
                })
            }
        }
        let mut normalized = BTreeMap::new();
        for field in fields {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| parse_err(1, format!("malformed header field {field:?}")))?;
            if k == "norm" {
                for entry in v.split(',').filter(|e| !e.is_empty()) {
                    let (l, m) = entry
                        .split_once(':')
                        .ok_or_else(|| parse_err(1, format!("malformed norm entry {entry:?}")))?;
                    let layer: Layer = l.parse().map_err(|e| parse_err(1, e))?;
                    let mode: NormMode = m.parse().map_err(|e| parse_err(1, e))?;
                    normalized.insert(layer, mode);
                }
            } else {
                graph.provenance.insert(k.to_owned(), v.to_owned());
            }
        }

        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            match cols.as_slice() {
                ["N", id, kind, key] => {
                    let id: u32 = id
                        .parse()
                        .map_err(|_| parse_err(lineno, format!("bad node id {id:?}")))?;
                    if id as usize != graph.nodes.len() {
                        return Err(parse_err(
                            lineno,
                            format!("node id {id} out of sequence (expected {})", graph.nodes.len()),
                        ));
                    }
                    let kind: NodeKind = kind.parse().map_err(|e| parse_err(lineno, e))?;
                    if graph.node_id(kind, key).is_some() {
                        return Err(parse_err(lineno, format!("duplicate node {kind} {key:?}")));
                    }
                    graph
                        .add_node(kind, key)
                        .map_err(|e| parse_err(lineno, e.to_string()))?;
                }
                ["E", s, t, layer, w] => {
                    let s: u32 = s
                        .parse()
                        .map_err(|_| parse_err(lineno, format!("bad source id {s:?}")))?;
                    let t: u32 = t
                        .parse()
                        .map_err(|_| parse_err(lineno, format!("bad target id {t:?}")))?;
                    let layer: Layer = layer.parse().map_err(|e| parse_err(lineno, e))?;
                    let w: f64 = w.parse().map_err(|_| parse_err(lineno, format!("bad weight {w:?}")))?;
                    let (s, t) = (NodeId(s), NodeId(t));
                    if graph.edge_weight(s, t, layer).is_some() {
                        return Err(parse_err(lineno, format!("duplicate edge {s} -> {t} in {layer}")));
                    }
                    graph
                        .upsert_edge(s, t, layer, w)
                        .map_err(|e| parse_err(lineno, e.to_string()))?;
                }
                _ => return Err(parse_err(lineno, format!("unrecognized record {line:?}"))),
            }
        }
        graph.normalized = normalized;
        Ok(graph)
    }
}
