//! Deterministic synthetic corpora for tests and benchmarks.
//!
//! Venues get a home FoS label and a short list of preferred venues, mostly in
//! the same field. Records are published in one venue and cite mostly its
//! preferred venues, so venue pair counts clear the default threshold once the
//! corpus has a few dozen records per venue.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{PublicationRecord, VenueMention};
use crate::taxonomy::Taxonomy;
use crate::venue::VenueNormalizer;

const CONSONANTS: &[u8] = b"bcdfghklmnprstz";
const VOWELS: &[u8] = b"aeiou";
const SUFFIXES: &[&str] = &[
    "Letters",
    "Review",
    "Journal",
    "Transactions",
    "Reports",
    "Bulletin",
    "Annals",
    "Quarterly",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub records: usize,
    pub venues: usize,
    /// Number of level-3 labels venues are spread over.
    pub fields: usize,
    pub seed_fraction: f64,
    pub preferred: usize,
    /// Share of references drawn from the preferred list.
    pub locality: f64,
    pub max_references: usize,
    pub max_citations: usize,
    /// Share of venue mentions written with a decoration (year, prefix, case).
    pub decorated: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            records: 10_000,
            venues: 500,
            fields: 20,
            seed_fraction: 0.05,
            preferred: 6,
            locality: 0.85,
            max_references: 24,
            max_citations: 8,
            decorated: 0.1,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthVenue {
    pub name: String,
    pub key: String,
    pub home: String,
    pub preferred: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub venues: Vec<SynthVenue>,
    pub records: Vec<PublicationRecord>,
    /// (raw venue name, fos id, weight)
    pub seeds: Vec<(String, String, f64)>,
    /// (record id, home label of its venue)
    pub gold: Vec<(String, String)>,
}

fn word(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.random_range(2..=3);
    let mut w = String::new();
    for i in 0..syllables {
        let c = CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char;
        let v = VOWELS[rng.random_range(0..VOWELS.len())] as char;
        w.push(if i == 0 { c.to_ascii_uppercase() } else { c });
        w.push(v);
    }
    w
}

pub fn generate(taxonomy: &Taxonomy, config: &SynthConfig) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normalizer = VenueNormalizer::default();
    let leaves: Vec<&str> = taxonomy.labels_at(3).map(|l| l.id.as_str()).collect();
    assert!(!leaves.is_empty(), "taxonomy has no level-3 labels");
    let fields: Vec<&str> = (0..config.fields.clamp(1, leaves.len()))
        .map(|i| leaves[i * leaves.len() / config.fields.clamp(1, leaves.len())])
        .collect();

    let mut keys = HashSet::new();
    let mut venues: Vec<SynthVenue> = Vec::with_capacity(config.venues);
    while venues.len() < config.venues {
        let suffix = SUFFIXES[rng.random_range(0..SUFFIXES.len())];
        let name = format!("{} {} {}", word(&mut rng), word(&mut rng), suffix);
        let expected = name.to_lowercase();
        match normalizer.resolve(&name) {
            Ok(key) if key.as_str() == expected && keys.insert(expected.clone()) => {
                let home = fields[venues.len() % fields.len()].to_owned();
                venues.push(SynthVenue {
                    name,
                    key: expected,
                    home,
                    preferred: Vec::new(),
                });
            }
            _ => continue,
        }
    }
    let mut by_field: Vec<Vec<usize>> = vec![Vec::new(); fields.len()];
    for i in 0..venues.len() {
        by_field[i % fields.len()].push(i);
    }
    for i in 0..venues.len() {
        let same = &by_field[i % fields.len()];
        let mut pref = vec![i];
        while pref.len() < config.preferred.min(venues.len()).max(1) {
            let j = if rng.random_bool(0.8) {
                same[rng.random_range(0..same.len())]
            } else {
                rng.random_range(0..venues.len())
            };
            if !pref.contains(&j) {
                pref.push(j);
            }
            if same.len() <= pref.len() && venues.len() <= pref.len() {
                break;
            }
        }
        venues[i].preferred = pref;
    }

    let decorate = |rng: &mut ChaCha8Rng, name: &str, year: i32| -> String {
        if !rng.random_bool(config.decorated) {
            return name.to_owned();
        }
        match rng.random_range(0..3) {
            0 => format!("{name} {year}"),
            1 => format!("Proceedings of the {name}"),
            _ => name.to_uppercase(),
        }
    };
    let pick = |rng: &mut ChaCha8Rng, v: usize| -> usize {
        if rng.random_bool(config.locality) {
            let pref = &venues[v].preferred;
            pref[rng.random_range(0..pref.len())]
        } else {
            rng.random_range(0..venues.len())
        }
    };

    let mut records = Vec::with_capacity(config.records);
    let mut gold = Vec::with_capacity(config.records);
    for r in 0..config.records {
        let v = r % venues.len();
        let year = rng.random_range(2000..=2020);
        let n_refs = rng.random_range(1..=config.max_references.max(1));
        let references = (0..n_refs)
            .map(|_| {
                let j = pick(&mut rng, v);
                let ry = year - rng.random_range(0..=14);
                VenueMention::new(decorate(&mut rng, &venues[j].name, ry), Some(ry))
            })
            .collect();
        let n_cits = rng.random_range(0..=config.max_citations);
        let citations = (0..n_cits)
            .map(|_| {
                let j = pick(&mut rng, v);
                let cy = year + rng.random_range(0..=5);
                VenueMention::new(decorate(&mut rng, &venues[j].name, cy), Some(cy))
            })
            .collect();
        let id = format!("syn{r:07}");
        gold.push((id.clone(), venues[v].home.clone()));
        records.push(PublicationRecord {
            id,
            title: None,
            venues: vec![decorate(&mut rng, &venues[v].name, year)],
            year,
            references,
            citations,
        });
    }

    let n_seeds = ((venues.len() as f64 * config.seed_fraction).round() as usize).max(1);
    let mut seeds = Vec::new();
    for i in (0..venues.len()).step_by((venues.len() / n_seeds).max(1)).take(n_seeds) {
        let v = &venues[i];
        seeds.push((v.name.clone(), v.home.clone(), 1.0));
        if i % 10 == 0 {
            if let Some(parent) = taxonomy.parent(&v.home) {
                seeds.push((v.name.clone(), parent.to_owned(), 1.0));
            }
        }
    }
    SynthCorpus {
        venues,
        records,
        seeds,
        gold,
    }
}

impl SynthCorpus {
    /// Writes `records.jsonl`, `seeds.tsv` and `gold.tsv` into `dir`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> std::io::Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut out = BufWriter::new(fs::File::create(dir.join("records.jsonl"))?);
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        let mut out = BufWriter::new(fs::File::create(dir.join("seeds.tsv"))?);
        for (name, fos, w) in &self.seeds {
            writeln!(out, "{name}\t{fos}\t{w}")?;
        }
        out.flush()?;
        let mut out = BufWriter::new(fs::File::create(dir.join("gold.tsv"))?);
        for (id, fos) in &self.gold {
            writeln!(out, "{id}\t{fos}")?;
        }
        out.flush()
    }
}
