use std::collections::{BTreeMap, BTreeSet};

use fosgraph_core::graph::{Layer, MultilayerGraph, NodeKind, NormMode};
use fosgraph_core::ingest::{build_graph, BuildConfig, PublicationRecord, VenueMention};
use fosgraph_core::taxonomy::{FosLabel, Taxonomy};
use fosgraph_core::venue::{VenueAliasMap, VenueNormalizer};
use proptest::prelude::*;

const POOL: &[&str] = &[
    "Optics Express",
    "OPTICS EXPRESS 2014",
    "Nano Letters",
    "Proceedings of the Nano Letters",
    "Empirical Methods in Natural Language Processing (EMNLP)",
    "EMNLP 2019",
    "Journal of Rural Studies",
    "Cell",
    "###",
    "2019",
];

fn taxonomy() -> Taxonomy {
    Taxonomy::from_labels(vec![FosLabel {
        id: "sci".into(),
        name: "Sci".into(),
        level: 1,
        parent: None,
    }])
    .unwrap()
}

fn records() -> impl Strategy<Value = Vec<PublicationRecord>> {
    let mention = (0..POOL.len(), prop::option::of(1990i32..=2021)).prop_map(|(i, y)| VenueMention::new(POOL[i], y));
    let record = (
        prop::collection::vec(0..POOL.len(), 0..3),
        2000i32..=2021,
        prop::collection::vec(mention.clone(), 0..8),
        prop::collection::vec(mention, 0..5),
    );
    prop::collection::vec(record, 0..40).prop_map(|rs| {
        rs.into_iter()
            .enumerate()
            .map(|(i, (venues, year, references, citations))| PublicationRecord {
                id: format!("r{i}"),
                title: None,
                venues: venues.into_iter().map(|v| POOL[v].to_owned()).collect(),
                year,
                references,
                citations,
            })
            .collect()
    })
}

/// Straightforward pair counting over resolved keys.
fn oracle_counts(records: &[PublicationRecord], window: u32) -> BTreeMap<(String, String), u64> {
    let n = VenueNormalizer::default();
    let key = |raw: &str| n.resolve(raw).ok().map(|k| k.into_string());
    let mut counts = BTreeMap::new();
    for r in records {
        let published: BTreeSet<String> = r.venues.iter().filter_map(|v| key(v)).collect();
        for reference in &r.references {
            if let Some(y) = reference.year {
                if r.year - y > window as i32 {
                    continue;
                }
            }
            if let Some(cited) = key(&reference.venue) {
                for p in &published {
                    *counts.entry((p.clone(), cited.clone())).or_insert(0) += 1;
                }
            }
        }
        for citation in &r.citations {
            if let Some(citing) = key(&citation.venue) {
                for p in &published {
                    *counts.entry((citing.clone(), p.clone())).or_insert(0) += 1;
                }
            }
        }
    }
    counts
}

fn l3_weights(g: &MultilayerGraph) -> BTreeMap<(String, String), f64> {
    g.edges(Layer::VenueVenue)
        .map(|e| ((g.key(e.source).to_owned(), g.key(e.target).to_owned()), e.weight))
        .collect()
}

fn build(records: &[PublicationRecord], config: &BuildConfig) -> MultilayerGraph {
    let mut aliases = VenueAliasMap::new();
    build_graph(
        records,
        &taxonomy(),
        &[],
        &VenueNormalizer::default(),
        &mut aliases,
        config,
    )
    .unwrap()
    .0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn tally_matches_brute_force(records in records(), threshold in 0u32..4, window in 0u32..12) {
        let config = BuildConfig { threshold: f64::from(threshold), window, norm_mode: NormMode::Sum };
        let mut aliases = VenueAliasMap::new();
        let (g, stats) =
            build_graph(&records, &taxonomy(), &[], &VenueNormalizer::default(), &mut aliases, &config).unwrap();
        let counts = oracle_counts(&records, window);
        prop_assert_eq!(stats.raw_edge_count, counts.len());
        let mut kept: BTreeMap<(String, String), f64> = counts
            .into_iter()
            .filter(|(_, c)| *c > u64::from(threshold))
            .map(|(k, c)| (k, c as f64))
            .collect();
        let mut totals: BTreeMap<String, f64> = BTreeMap::new();
        for ((s, _), c) in &kept {
            *totals.entry(s.clone()).or_insert(0.0) += c;
        }
        for ((s, _), w) in kept.iter_mut() {
            *w /= totals[s];
        }
        let got = l3_weights(&g);
        prop_assert_eq!(got.len(), kept.len());
        for (k, w) in &kept {
            prop_assert!((got[k] - w).abs() <= 1e-12, "{:?}: {} vs {}", k, got[k], w);
        }
        prop_assert_eq!(stats.edges_surviving, kept.len());
        prop_assert_eq!(stats.venues_resolved + stats.venues_unresolved, stats.venue_mentions);
    }

    #[test]
    fn build_is_normalized(records in records(), max in any::<bool>()) {
        let mode = if max { NormMode::Max } else { NormMode::Sum };
        let g = build(&records, &BuildConfig { threshold: 0.0, window: 10, norm_mode: mode });
        for (id, _) in g.nodes_of_kind(NodeKind::Venue).collect::<Vec<_>>() {
            let out: Vec<f64> = g.out_edges(id, Layer::VenueVenue).map(|(_, w)| w).collect();
            if out.is_empty() {
                continue;
            }
            match mode {
                NormMode::Sum => prop_assert!((out.iter().sum::<f64>() - 1.0).abs() <= 1e-9),
                NormMode::Max => prop_assert_eq!(out.iter().copied().fold(0.0, f64::max), 1.0),
            }
        }
    }

    #[test]
    fn build_ignores_worker_count(records in records()) {
        let config = BuildConfig { threshold: 0.0, ..BuildConfig::default() };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let mut bytes = Vec::new();
            pool.install(|| build(&records, &config)).write_to(&mut bytes).unwrap();
            bytes
        };
        prop_assert_eq!(run(1), run(4));
    }
}

#[test]
fn threshold_boundary_ten_versus_eleven() {
    let mut records = Vec::new();
    let mut push = |i: usize, venue: &str, cited: &str| {
        records.push(PublicationRecord {
            id: format!("p{i}"),
            title: None,
            venues: vec![venue.into()],
            year: 2020,
            references: vec![VenueMention::new(cited, Some(2018))],
            citations: vec![],
        });
    };
    for i in 0..10 {
        push(i, "Optics Express", "Nano Letters");
    }
    for i in 10..21 {
        push(i, "Cell", "Lancet");
    }
    let g = build(&records, &BuildConfig::default());
    let edges = l3_weights(&g);
    assert_eq!(edges.len(), 1);
    assert!(edges.contains_key(&("cell".to_owned(), "lancet".to_owned())));

    let all = build(
        &records,
        &BuildConfig {
            threshold: 0.0,
            ..BuildConfig::default()
        },
    );
    assert_eq!(l3_weights(&all).len(), 2);
}
