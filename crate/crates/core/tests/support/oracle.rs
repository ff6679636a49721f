//! Dense reference implementations and random fixtures shared by the
//! integration and acceptance tests.

#![allow(dead_code, clippy::needless_range_loop)]

use fosgraph_core::graph::{Layer, MultilayerGraph, NodeKind, NormMode};
use fosgraph_core::propagate::{FosWeightTable, PropagationConfig};
use fosgraph_core::taxonomy::{FosLabel, SeedAssignment, Taxonomy};
use fosgraph_core::venue::VenueKey;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Label {
    pub id: String,
    pub level: u8,
    pub parent: Option<usize>,
}

/// A random propagation problem in plain dense form.
#[derive(Debug, Clone)]
pub struct Case {
    pub venues: usize,
    /// (citing, cited, count)
    pub counts: Vec<(usize, usize, u32)>,
    /// Sorted by id.
    pub labels: Vec<Label>,
    /// (venue, label, weight)
    pub seeds: Vec<(usize, usize, f64)>,
    pub config: PropagationConfig,
}

/// Consonant-only suffixes never collide with stopwords, numerals or dates.
pub fn venue_key(i: usize) -> String {
    const C: &[u8] = b"bcdfghklmnpqrstz";
    let d = |x: usize| C[x % C.len()] as char;
    format!("venue {}{}{}", d(i / 256), d(i / 16), d(i))
}

pub fn random_case(seed: u64, max_venues: usize, max_labels: usize, max_rounds: u32) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let venues = rng.random_range(2..=max_venues);
    let mut counts = Vec::new();
    for i in 0..venues {
        for j in 0..venues {
            if rng.random_bool(0.15) {
                counts.push((i, j, rng.random_range(1..=20)));
            }
        }
    }
    let total = rng.random_range(3..=max_labels.max(3));
    let n1 = rng.random_range(1..=(total - 2).min(2));
    let n2 = rng.random_range(1..=(total - n1 - 1).min(3));
    let n3 = total - n1 - n2;
    let mut raw: Vec<(String, u8, Option<String>)> = Vec::new();
    for a in 0..n1 {
        raw.push((format!("l1_{a}"), 1, None));
    }
    for b in 0..n2 {
        let p = format!("l1_{}", rng.random_range(0..n1));
        raw.push((format!("l2_{b}"), 2, Some(p)));
    }
    for c in 0..n3 {
        let p = format!("l2_{}", rng.random_range(0..n2));
        raw.push((format!("l3_{c}"), 3, Some(p)));
    }
    raw.sort();
    let labels = raw
        .iter()
        .map(|(id, level, parent)| Label {
            id: id.clone(),
            level: *level,
            parent: parent.as_ref().map(|p| raw.iter().position(|r| &r.0 == p).unwrap()),
        })
        .collect::<Vec<_>>();
    let mut seeds = Vec::new();
    let n_seeds = rng.random_range(1..=venues.div_ceil(3));
    for _ in 0..n_seeds {
        let v = rng.random_range(0..venues);
        let l = rng.random_range(0..labels.len());
        seeds.push((v, l, rng.random_range(0.1..5.0)));
    }
    let config = PropagationConfig {
        rounds: rng.random_range(1..=max_rounds),
        keep_top: rng.random_range(1..=6),
        min_fos_weight: if rng.random_bool(0.5) { 1e-4 } else { 0.05 },
        preserve_isolated_seeds: rng.random_bool(0.7),
    };
    Case {
        venues,
        counts,
        labels,
        seeds,
        config,
    }
}

impl Case {
    pub fn taxonomy(&self) -> Taxonomy {
        Taxonomy::from_labels(
            self.labels
                .iter()
                .map(|l| FosLabel {
                    id: l.id.clone(),
                    name: l.id.clone(),
                    level: l.level,
                    parent: l.parent.map(|p| self.labels[p].id.clone()),
                })
                .collect(),
        )
        .unwrap()
    }

    pub fn graph(&self, taxonomy: &Taxonomy) -> MultilayerGraph {
        let mut g = MultilayerGraph::new();
        let ids: Vec<_> = (0..self.venues)
            .map(|i| g.add_node(NodeKind::Venue, &venue_key(i)).unwrap())
            .collect();
        taxonomy.install(&mut g).unwrap();
        for &(s, t, c) in &self.counts {
            g.upsert_edge(ids[s], ids[t], Layer::VenueVenue, f64::from(c)).unwrap();
        }
        g.normalize_outgoing(Layer::VenueVenue, NormMode::Sum);
        g
    }

    pub fn seed_assignments(&self) -> Vec<SeedAssignment> {
        self.seeds
            .iter()
            .map(|&(v, l, w)| SeedAssignment {
                venue: VenueKey::parse(&venue_key(v)).unwrap(),
                fos: self.labels[l].id.clone(),
                weight: w,
            })
            .collect()
    }

    /// Row-normalized citation matrix.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        let n = self.venues;
        let mut w = vec![vec![0.0; n]; n];
        for &(s, t, c) in &self.counts {
            w[s][t] += f64::from(c);
        }
        for row in &mut w {
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row.iter_mut().for_each(|x| *x /= total);
            }
        }
        w
    }
}

/// Normalize, keep the `keep_top` best labels of `level`, drop small ones,
/// renormalize. Other levels' columns are zeroed.
pub fn finalize_row(row: &[f64], labels: &[Label], level: u8, keep_top: usize, min_w: f64) -> Vec<f64> {
    let mut out = vec![0.0; row.len()];
    let total: f64 = (0..row.len())
        .filter(|&k| labels[k].level == level)
        .map(|k| row[k])
        .sum();
    if total <= 0.0 {
        return out;
    }
    let mut ranked: Vec<(usize, f64)> = (0..row.len())
        .filter(|&k| labels[k].level == level && row[k] > 0.0)
        .map(|k| (k, row[k] / total))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    ranked.truncate(keep_top);
    ranked.retain(|&(_, w)| w >= min_w);
    let total: f64 = ranked.iter().map(|p| p.1).sum();
    for (k, w) in ranked {
        out[k] = w / total;
    }
    out
}

/// Dense propagation: seed matrix with hierarchy roll-up, then `rounds`
/// multiplications by the citation matrix, finalizing every row.
/// Returns venue × label weights (all levels in one row).
pub fn dense_propagate(case: &Case) -> Vec<Vec<f64>> {
    let (n, m) = (case.venues, case.labels.len());
    let cfg = &case.config;
    let w = case.matrix();
    let mut direct = vec![vec![0.0; m]; n];
    for &(v, l, wt) in &case.seeds {
        direct[v][l] += wt;
    }
    let mut state = vec![vec![0.0; m]; n];
    for level in [3u8, 2, 1] {
        for i in 0..n {
            let mut row: Vec<f64> = (0..m)
                .map(|k| {
                    if case.labels[k].level == level {
                        direct[i][k]
                    } else {
                        0.0
                    }
                })
                .collect();
            for k in 0..m {
                if case.labels[k].level == level + 1 {
                    if let Some(p) = case.labels[k].parent {
                        row[p] += state[i][k];
                    }
                }
            }
            let fin = finalize_row(&row, &case.labels, level, cfg.keep_top, cfg.min_fos_weight);
            for k in 0..m {
                if case.labels[k].level == level {
                    state[i][k] = fin[k];
                }
            }
        }
    }
    for _ in 0..cfg.rounds {
        let mut next = vec![vec![0.0; m]; n];
        for i in 0..n {
            let isolated = w[i].iter().all(|x| *x == 0.0);
            if isolated {
                if cfg.preserve_isolated_seeds {
                    next[i] = state[i].clone();
                }
                continue;
            }
            let mut row = vec![0.0; m];
            for (k, slot) in row.iter_mut().enumerate() {
                for j in 0..n {
                    *slot += w[i][j] * state[j][k];
                }
            }
            for level in 1..=3u8 {
                let fin = finalize_row(&row, &case.labels, level, cfg.keep_top, cfg.min_fos_weight);
                for k in 0..m {
                    if case.labels[k].level == level {
                        next[i][k] = fin[k];
                    }
                }
            }
        }
        state = next;
    }
    state
}

/// Largest absolute difference between the table and the dense result, or
/// `None` when a venue/label pair is present in one and absent in the other.
pub fn max_deviation(case: &Case, table: &FosWeightTable, dense: &[Vec<f64>]) -> Option<f64> {
    let mut worst: f64 = 0.0;
    for (i, row) in dense.iter().enumerate() {
        let key = venue_key(i);
        for (k, label) in case.labels.iter().enumerate() {
            let got = table
                .get(label.level, &key)
                .and_then(|e| e.iter().find(|(f, _)| *f == label.id))
                .map(|(_, w)| *w);
            match (got, row[k] > 0.0) {
                (Some(g), true) => worst = worst.max((g - row[k]).abs()),
                (None, false) => {}
                _ => return None,
            }
        }
    }
    Some(worst)
}
