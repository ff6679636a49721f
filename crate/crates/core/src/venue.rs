//! Venue name cleaning, abbreviation extraction and the raw-name → key alias map.
//!
//! Venue names in bibliographic metadata are deposited free-form, so the same
//! conference shows up as "EMNLP 2019", "Proceedings of the 2020 Conference on
//! Empirical Methods in Natural Language Processing (EMNLP)" and so on. All of
//! them must land on one [`VenueKey`]. Resolution is rule based:
//!
//! 1. an abbreviation found inside parentheses, else next to a ` - ` separator,
//!    becomes the key;
//! 2. otherwise the cleaned full name ([`VenueNormalizer::preprocess`]) is the key.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_STOPWORDS: &str = include_str!("../config/stopwords.txt");
pub const DEFAULT_BOILERPLATE: &str = include_str!("../config/boilerplate.txt");

#[derive(Debug, Error)]
pub enum VenueError {
    #[error("venue: empty venue name")]
    EmptyInput,
    #[error("venue: {0:?} is empty after cleaning")]
    EmptyAfterClean(String),
    #[error("venue: {0:?} cannot be resolved to a venue key")]
    Unresolvable(String),
    #[error("venue: bad configuration: {0}")]
    Config(String),
    #[error("venue: alias map line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("venue: {0}")]
    Io(#[from] std::io::Error),
}

/// Canonical venue key: lowercase, single-spaced, trimmed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct VenueKey(String);

impl VenueKey {
    /// Accepts `text` only if it already satisfies the key invariants.
    pub fn parse(text: &str) -> Option<Self> {
        let ok = !text.is_empty()
            && text.trim() == text
            && !text.contains("  ")
            && !text.contains(['\t', '\n', '\r'])
            && !text.chars().any(char::is_uppercase)
            && text.chars().all(is_kept_char);
        ok.then(|| VenueKey(text.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for VenueKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for VenueKey {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

fn is_kept_char(c: char) -> bool {
    c.is_alphanumeric() || c == ' ' || c == '-' || c == '(' || c == ')'
}

static ROMAN_TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b[ivx]+\b").unwrap());
static ROMAN_VALID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^x{0,3}(ix|iv|v?i{0,3})$").unwrap());
static NUMBERS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b\d+(?:st|nd|rd|th)?\b|\b(?:(?:twenty|thirty|forty|fifty|sixty|seventy|eighty|ninety)[\s-])?(?:first|second|third|fourth|fifth|sixth|seventh|eighth|ninth|tenth|eleventh|twelfth|thirteenth|fourteenth|fifteenth|sixteenth|seventeenth|eighteenth|nineteenth|twentieth|thirtieth|fortieth|fiftieth|sixtieth|seventieth|eightieth|ninetieth|hundredth)\b",
    )
    .unwrap()
});
static DATES: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(?:january|february|march|april|may|june|july|august|september|october|november|december|jan|feb|mar|apr|jun|jul|aug|sept|sep|oct|nov|dec|monday|tuesday|wednesday|thursday|friday|saturday|sunday)\b",
    )
    .unwrap()
});
static SPECIAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[^\p{L}\p{N}\s\-()]").unwrap());
static PARENTHESIZED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\(([^()]*)\)").unwrap());
static DASH_SEPARATOR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+[-–—]+\s+").unwrap());
static DECORATION_TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^'?\d+(?:st|nd|rd|th)?$").unwrap());

/// Thresholds deciding whether a token looks like an abbreviation.
#[derive(Debug, Clone, PartialEq)]
pub struct AbbreviationRule {
    pub min_len: usize,
    pub max_len: usize,
    /// Minimum fraction of uppercase letters among the token's characters.
    pub min_upper_ratio: f64,
}

impl Default for AbbreviationRule {
    fn default() -> Self {
        Self {
            min_len: 2,
            max_len: 10,
            min_upper_ratio: 0.6,
        }
    }
}

impl AbbreviationRule {
    pub fn accepts(&self, token: &str) -> bool {
        let len = token.chars().count();
        if len < self.min_len || len > self.max_len {
            return false;
        }
        let upper = token.chars().filter(|c| c.is_uppercase()).count();
        upper as f64 / len as f64 >= self.min_upper_ratio
    }
}

#[derive(Debug, Clone)]
pub struct NormalizerConfig {
    pub stopwords: Vec<String>,
    pub boilerplate: Vec<String>,
    pub abbreviation: AbbreviationRule,
}

/// Parses a one-entry-per-line list; blank lines and `#` comments are ignored.
pub fn parse_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}

impl Default for NormalizerConfig {
    fn default() -> Self {
        Self {
            stopwords: parse_list(DEFAULT_STOPWORDS),
            boilerplate: parse_list(DEFAULT_BOILERPLATE),
            abbreviation: AbbreviationRule::default(),
        }
    }
}

impl NormalizerConfig {
    pub fn with_stopword_file(mut self, path: impl AsRef<Path>) -> Result<Self, VenueError> {
        self.stopwords = parse_list(&fs::read_to_string(path)?);
        Ok(self)
    }

    pub fn with_boilerplate_file(mut self, path: impl AsRef<Path>) -> Result<Self, VenueError> {
        self.boilerplate = parse_list(&fs::read_to_string(path)?);
        Ok(self)
    }
}

/// Case-insensitive whole-word alternation over `phrases`, longest first.
fn phrase_regex(phrases: &[String]) -> Result<Option<Regex>, VenueError> {
    let mut parts: Vec<String> = phrases
        .iter()
        .map(|p| p.split_whitespace().map(regex::escape).collect::<Vec<_>>().join(r"\s+"))
        .filter(|p| !p.is_empty())
        .collect();
    if parts.is_empty() {
        return Ok(None);
    }
    parts.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    parts.dedup();
    let pattern = format!(r"(?i)\b(?:{})\b", parts.join("|"));
    Regex::new(&pattern)
        .map(Some)
        .map_err(|e| VenueError::Config(e.to_string()))
}

/// Whitespace-trimmed, single-spaced form of a raw name; the alias map's key.
pub fn alias_form(raw: &str) -> Cow<'_, str> {
    let trimmed = raw.trim();
    let clean = !trimmed.contains(|c: char| c.is_whitespace() && c != ' ') && !trimmed.contains("  ");
    if clean {
        Cow::Borrowed(trimmed)
    } else {
        Cow::Owned(trimmed.split_whitespace().collect::<Vec<_>>().join(" "))
    }
}

#[derive(Debug, Clone)]
pub struct VenueNormalizer {
    config: NormalizerConfig,
    boilerplate: Option<Regex>,
    stopwords: Option<Regex>,
}

impl Default for VenueNormalizer {
    fn default() -> Self {
        Self::new(NormalizerConfig::default()).expect("default venue lists compile")
    }
}

impl VenueNormalizer {
    pub fn new(config: NormalizerConfig) -> Result<Self, VenueError> {
        Ok(Self {
            boilerplate: phrase_regex(&config.boilerplate)?,
            stopwords: phrase_regex(&config.stopwords)?,
            config,
        })
    }

    pub fn config(&self) -> &NormalizerConfig {
        &self.config
    }

    fn clean_once(&self, text: &str) -> String {
        let text = ROMAN_TOKEN.replace_all(text, |caps: &regex::Captures<'_>| {
            if ROMAN_VALID.is_match(&caps[0]) {
                " ".to_owned()
            } else {
                caps[0].to_owned()
            }
        });
        let text = NUMBERS.replace_all(&text, " ");
        let text = DATES.replace_all(&text, " ");
        let text = match &self.boilerplate {
            Some(re) => re.replace_all(&text, " "),
            None => text,
        };
        let text = match &self.stopwords {
            Some(re) => re.replace_all(&text, " "),
            None => text,
        };
        let text = SPECIAL.replace_all(&text, " ");
        text.split_whitespace()
            .map(|tok| {
                // some capitals (e.g. mathematical alphanumerics) have no lowercase form
                let lower: String = tok.to_lowercase().chars().filter(|c| !c.is_uppercase()).collect();
                lower.trim_matches('-').to_owned()
            })
            .filter(|tok| tok.chars().any(char::is_alphanumeric))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Removes numerals, dates, boilerplate phrases, stopwords and special
    /// characters, then lowercases and collapses whitespace. The result is a
    /// fixed point: cleaning it again changes nothing.
    pub fn preprocess(&self, raw: &str) -> Result<String, VenueError> {
        if raw.trim().is_empty() {
            return Err(VenueError::EmptyInput);
        }
        let mut current = self.clean_once(raw);
        for _ in 0..8 {
            let next = self.clean_once(&current);
            if next == current {
                break;
            }
            current = next;
        }
        if current.is_empty() {
            Err(VenueError::EmptyAfterClean(raw.to_owned()))
        } else {
            Ok(current)
        }
    }

    /// Single abbreviation-looking token in `segment`, ignoring year and
    /// ordinal decorations.
    fn segment_abbreviation(&self, segment: &str) -> Option<String> {
        let tokens: Vec<&str> = segment
            .split_whitespace()
            .map(|t| t.trim_matches(|c: char| matches!(c, ',' | '.' | ';' | ':')))
            .filter(|t| !t.is_empty() && !DECORATION_TOKEN.is_match(t))
            .collect();
        let [token] = tokens.as_slice() else {
            return None;
        };
        if !token.chars().all(|c| c.is_alphanumeric() || c == '-')
            || !token.chars().any(char::is_alphabetic)
            || !self.config.abbreviation.accepts(token)
            || ROMAN_VALID.is_match(token)
        {
            return None;
        }
        let lower = token.to_lowercase();
        // keys must survive preprocessing unchanged (rejects stopwords, numerals)
        match self.preprocess(&lower) {
            Ok(cleaned) if cleaned == lower => Some(lower),
            _ => None,
        }
    }

    /// Abbreviation from a parenthesized token, else from the segment after
    /// (then before) the last ` - ` separator. Returned lowercased.
    pub fn extract_abbreviation(&self, raw: &str) -> Option<String> {
        for caps in PARENTHESIZED.captures_iter(raw) {
            if let Some(abbr) = self.segment_abbreviation(&caps[1]) {
                return Some(abbr);
            }
        }
        let last_sep = DASH_SEPARATOR.find_iter(raw).last()?;
        let before = &raw[..last_sep.start()];
        let after = &raw[last_sep.end()..];
        self.segment_abbreviation(after)
            .or_else(|| self.segment_abbreviation(PARENTHESIZED.replace_all(before, " ").as_ref()))
    }

    /// Resolves a raw name to its key without touching any alias map.
    pub fn resolve(&self, raw: &str) -> Result<VenueKey, VenueError> {
        if raw.trim().is_empty() {
            return Err(VenueError::EmptyInput);
        }
        if let Some(abbr) = self.extract_abbreviation(raw) {
            return Ok(VenueKey(abbr));
        }
        match self.preprocess(raw) {
            Ok(clean) => Ok(VenueKey(clean)),
            Err(VenueError::EmptyAfterClean(_)) => Err(VenueError::Unresolvable(raw.to_owned())),
            Err(e) => Err(e),
        }
    }

    /// Resolves `raw` through `map`, recording the pairing on first sight.
    pub fn canonicalize(&self, raw: &str, map: &mut VenueAliasMap) -> Result<VenueKey, VenueError> {
        let form = alias_form(raw);
        if form.is_empty() {
            return Err(VenueError::EmptyInput);
        }
        if let Some(entry) = map.entries.get_mut(form.as_ref()) {
            entry.count += 1;
            return Ok(entry.key.clone());
        }
        let key = self.resolve(&form)?;
        map.entries.insert(
            form.into_owned(),
            AliasEntry {
                key: key.clone(),
                count: 1,
            },
        );
        Ok(key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliasEntry {
    pub key: VenueKey,
    /// How many times this raw form was canonicalized during the build.
    pub count: u64,
}

/// Raw (alias-form) venue names mapped to canonical keys.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VenueAliasMap {
    entries: BTreeMap<String, AliasEntry>,
}

impl VenueAliasMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, raw: &str) -> Option<&VenueKey> {
        self.entries.get(alias_form(raw).as_ref()).map(|e| &e.key)
    }

    pub fn entry(&self, raw: &str) -> Option<&AliasEntry> {
        self.entries.get(alias_form(raw).as_ref())
    }

    /// Records `raw → key`; an existing pairing is kept and its count bumped.
    pub fn record(&mut self, raw: &str, key: VenueKey) -> &VenueKey {
        self.record_with_count(raw, key, 1)
    }

    pub fn record_with_count(&mut self, raw: &str, key: VenueKey, count: u64) -> &VenueKey {
        let form = alias_form(raw).into_owned();
        let entry = self
            .entries
            .entry(form)
            .and_modify(|e| e.count += count)
            .or_insert(AliasEntry { key, count });
        &entry.key
    }

    /// Adds `n` to the count of a known form; unknown forms are ignored.
    pub fn bump(&mut self, raw: &str, n: u64) {
        if let Some(e) = self.entries.get_mut(alias_form(raw).as_ref()) {
            e.count += n;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &AliasEntry)> + '_ {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn distinct_keys(&self) -> usize {
        let mut keys: Vec<&VenueKey> = self.entries.values().map(|e| &e.key).collect();
        keys.sort();
        keys.dedup();
        keys.len()
    }

    /// Two-column TSV (alias form, key) sorted by the first column.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), VenueError> {
        let mut out = BufWriter::new(File::create(path)?);
        for (form, entry) in &self.entries {
            writeln!(out, "{form}\t{}", entry.key)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VenueError> {
        let reader = BufReader::new(File::open(path)?);
        let mut map = VenueAliasMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| VenueError::Parse { line: idx + 1, message };
            let (form, key) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected two tab-separated columns".into()))?;
            let key = VenueKey::parse(key).ok_or_else(|| parse_err(format!("invalid venue key {key:?}")))?;
            map.entries.insert(form.to_owned(), AliasEntry { key, count: 0 });
        }
        Ok(map)
    }
}

/// Read-only name resolution used at classification time: alias map first,
/// then the normalization rules.
#[derive(Debug, Clone, Default)]
pub struct VenueResolver {
    pub normalizer: VenueNormalizer,
    pub aliases: VenueAliasMap,
}

impl VenueResolver {
    pub fn new(normalizer: VenueNormalizer, aliases: VenueAliasMap) -> Self {
        Self { normalizer, aliases }
    }

    pub fn resolve(&self, raw: &str) -> Option<VenueKey> {
        if let Some(key) = self.aliases.get(raw) {
            return Some(key.clone());
        }
        self.normalizer.resolve(raw).ok()
    }
}
