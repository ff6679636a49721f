//! Field-of-science classification over a multilayer venue citation graph.
//!
//! The pipeline: [`ingest`] builds the venue graph from publication records,
//! [`propagate`] spreads FoS labels from seed venues, [`classify`] scores single
//! publications and [`evaluate`] computes F1 metrics against gold labels.

pub mod classify;
pub mod evaluate;
pub mod graph;
pub mod ingest;
pub mod propagate;
pub mod synth;
pub mod taxonomy;
pub mod venue;

use thiserror::Error;

pub use graph::{Layer, MultilayerGraph, NodeId, NodeKind, NormMode};
pub use propagate::{FosWeightTable, PropagationConfig};
pub use taxonomy::{SeedAssignment, Taxonomy};
pub use venue::{VenueKey, VenueNormalizer};

/// Broad failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] graph::GraphError),
    #[error(transparent)]
    Venue(#[from] venue::VenueError),
    #[error(transparent)]
    Taxonomy(#[from] taxonomy::TaxonomyError),
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error(transparent)]
    Propagate(#[from] propagate::PropagateError),
    #[error(transparent)]
    Classify(#[from] classify::ClassifyError),
    #[error(transparent)]
    Evaluate(#[from] evaluate::EvaluateError),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Graph(graph::GraphError::Io(_))
            | Error::Venue(venue::VenueError::Io(_))
            | Error::Taxonomy(taxonomy::TaxonomyError::Io(_))
            | Error::Ingest(ingest::IngestError::Io(_))
            | Error::Propagate(propagate::PropagateError::Io(_))
            | Error::Classify(classify::ClassifyError::Io(_))
            | Error::Evaluate(evaluate::EvaluateError::Io(_)) => ErrorKind::Io,
            Error::Ingest(ingest::IngestError::Config(_))
            | Error::Propagate(propagate::PropagateError::Config(_))
            | Error::Classify(classify::ClassifyError::Config(_))
            | Error::Evaluate(evaluate::EvaluateError::Config(_)) => ErrorKind::Usage,
            _ => ErrorKind::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
