//! Class-labelled dictionaries and longest-match post tagging.
//!
//! Dictionary files hold one `surface<TAB>canonical` entry per line (the
//! canonical column is optional). Every surface of the cannabis dictionary
//! resolves to `cannabis` as a natural product. Canonical names are also
//! surfaces of themselves.
//!
//! Overlapping candidate matches are resolved longest first; among equally
//! long candidates the leftmost wins.

mod automaton;
mod tokenize;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Timeline;
use crate::error::{Error, Result};
use automaton::{Occurrence, TokenAutomaton};

pub use tokenize::{normalize_surface, tokenize, Token};

pub const CANNABIS: &str = "cannabis";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermClass {
    Drug,
    Symptom,
    NaturalProduct,
}

impl TermClass {
    pub const ALL: [TermClass; 3] = [TermClass::Drug, TermClass::Symptom, TermClass::NaturalProduct];

    pub fn as_str(self) -> &'static str {
        match self {
            TermClass::Drug => "drug",
            TermClass::Symptom => "symptom",
            TermClass::NaturalProduct => "natural_product",
        }
    }
}

impl fmt::Display for TermClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TermClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "drug" => Ok(TermClass::Drug),
            "symptom" => Ok(TermClass::Symptom),
            "natural_product" | "np" => Ok(TermClass::NaturalProduct),
            other => Err(Error::Config(format!("unknown term class {other:?}"))),
        }
    }
}

/// Which dictionary a file provides. Cannabis files feed the natural-product
/// class under the single canonical term `cannabis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictionaryKind {
    Drug,
    Symptom,
    NaturalProduct,
    Cannabis,
}

impl DictionaryKind {
    pub fn class(self) -> TermClass {
        match self {
            DictionaryKind::Drug => TermClass::Drug,
            DictionaryKind::Symptom => TermClass::Symptom,
            DictionaryKind::NaturalProduct | DictionaryKind::Cannabis => TermClass::NaturalProduct,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub canonical: String,
    pub class: TermClass,
}

/// A dictionary match in a post, with half-open char offsets into the
/// normalized text (see [`normalized_text`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermMatch {
    #[serde(rename = "term")]
    pub canonical_term: String,
    pub class: TermClass,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagMatch {
    pub post_id: String,
    #[serde(flatten)]
    pub term: TermMatch,
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: BTreeMap<String, LexiconEntry>,
    classes: BTreeMap<String, TermClass>,
    stoplist: BTreeSet<String>,
    /// Pattern id -> surface key, for the non-stoplisted surfaces.
    patterns: Vec<String>,
    automaton: TokenAutomaton,
    warnings: Vec<String>,
}

/// Lowercased post text with each caption tag appended as ` #tag`.
pub fn normalized_text(text: &str, caption_tags: &[String]) -> String {
    let mut out = text.to_lowercase();
    for tag in caption_tags {
        out.push_str(" #");
        out.push_str(&tag.trim_start_matches('#').to_lowercase());
    }
    out
}

/// Token stream of a post: the text tokens followed by one token per caption
/// tag. Offsets point into [`normalized_text`].
pub fn post_tokens(text: &str, caption_tags: &[String]) -> Vec<Token> {
    let lowered = text.to_lowercase();
    let mut tokens = tokenize(&lowered);
    let mut offset = lowered.chars().count();
    for tag in caption_tags {
        let tag = tag.trim_start_matches('#').to_lowercase();
        let chars: Vec<char> = tag.chars().collect();
        // skip " #"
        offset += 2;
        let keep = |c: &char| c.is_alphanumeric() || *c == '_' || ('\u{0300}'..='\u{036f}').contains(c);
        let lead = chars.iter().take_while(|c| !keep(c)).count();
        let trail = chars.iter().rev().take_while(|c| !keep(c)).count();
        if lead < chars.len() {
            let body = &chars[lead..chars.len() - trail];
            tokens.push(Token {
                text: body
                    .iter()
                    .map(|&c| match c {
                        '\u{2019}' | '\u{02bc}' => '\'',
                        c => c,
                    })
                    .collect(),
                start: offset + lead,
                end: offset + chars.len() - trail,
                joins_prev: false,
                hashtag: true,
            });
        }
        offset += chars.len();
    }
    tokens
}

impl Lexicon {
    /// Builds a lexicon from `(surface, canonical, class)` triples.
    pub fn from_entries<I, S>(entries: I, stoplist: S) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String, TermClass)>,
        S: IntoIterator<Item = String>,
    {
        let mut builder = Builder::default();
        for (surface, canonical, class) in entries {
            builder.add(&surface, &canonical, class)?;
        }
        builder.finish(stoplist.into_iter().collect())
    }

    /// Loads dictionary files. Identical duplicate entries collapse; a surface
    /// or canonical term claimed by two different targets is an error.
    pub fn load(sources: &[(DictionaryKind, PathBuf)], stoplist: &BTreeSet<String>) -> Result<Self> {
        let mut builder = Builder::default();
        for (kind, path) in sources {
            let added = builder.add_file(*kind, path)?;
            if added == 0 {
                builder.warnings.push(format!("dictionary {} is empty", path.display()));
            }
        }
        builder.finish(stoplist.iter().cloned().collect())
    }

    pub fn entries(&self) -> &BTreeMap<String, LexiconEntry> {
        &self.entries
    }

    /// Canonical terms and their classes.
    pub fn terms(&self) -> &BTreeMap<String, TermClass> {
        &self.classes
    }

    pub fn class_of(&self, canonical: &str) -> Option<TermClass> {
        self.classes.get(canonical).copied()
    }

    pub fn stoplist(&self) -> &BTreeSet<String> {
        &self.stoplist
    }

    /// Looks up a normalized surface key, ignoring the stoplist.
    pub fn lookup(&self, surface_key: &str) -> Option<&LexiconEntry> {
        self.entries.get(surface_key)
    }

    pub fn is_stopped(&self, canonical: &str) -> bool {
        self.stoplist.contains(canonical)
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Tags one post's text and caption tags.
    pub fn tag_post(&self, text: &str, caption_tags: &[String]) -> Vec<TermMatch> {
        let tokens = post_tokens(text, caption_tags);
        let mut found = Vec::new();
        self.automaton
            .find_all(tokens.iter().map(|t| (t.text.as_str(), !t.joins_prev)), &mut found);
        select_longest(&mut found)
            .into_iter()
            .map(|occ| {
                let entry = &self.entries[&self.patterns[occ.pattern as usize]];
                TermMatch {
                    canonical_term: entry.canonical.clone(),
                    class: entry.class,
                    start: tokens[occ.start].start,
                    end: tokens[occ.end - 1].end,
                }
            })
            .collect()
    }
}

/// Keeps non-overlapping occurrences, longest first, then leftmost. Returns
/// them in text order.
fn select_longest(found: &mut [Occurrence]) -> Vec<Occurrence> {
    found.sort_by(|a, b| (b.end - b.start).cmp(&(a.end - a.start)).then(a.start.cmp(&b.start)));
    let mut taken: Vec<(usize, usize)> = Vec::new();
    let mut kept = Vec::new();
    for occ in found.iter() {
        if taken.iter().all(|&(s, e)| occ.end <= s || occ.start >= e) {
            taken.push((occ.start, occ.end));
            kept.push(*occ);
        }
    }
    kept.sort_by_key(|o| o.start);
    kept
}

#[derive(Default)]
struct Builder {
    entries: BTreeMap<String, LexiconEntry>,
    classes: BTreeMap<String, TermClass>,
    warnings: Vec<String>,
}

impl Builder {
    fn add(&mut self, surface: &str, canonical: &str, class: TermClass) -> Result<()> {
        let key = normalize_surface(surface);
        if key.is_empty() {
            return Err(Error::Config(format!(
                "surface form {surface:?} is empty after normalization"
            )));
        }
        let canonical = canonical
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_lowercase();
        let canonical = if canonical.is_empty() { key.clone() } else { canonical };

        match self.classes.get(&canonical) {
            Some(&prev) if prev != class => {
                return Err(Error::ConflictingClass {
                    term: canonical,
                    first: prev.to_string(),
                    second: class.to_string(),
                })
            }
            _ => {}
        }
        let entry = LexiconEntry { canonical, class };
        if let Some(prev) = self.entries.get(&key) {
            if *prev != entry {
                return Err(Error::ConflictingSurface {
                    surface: key,
                    first: format!("{} ({})", prev.canonical, prev.class),
                    second: format!("{} ({})", entry.canonical, entry.class),
                });
            }
            return Ok(());
        }
        self.classes.insert(entry.canonical.clone(), class);
        self.entries.insert(key, entry);
        Ok(())
    }

    fn add_file(&mut self, kind: DictionaryKind, path: &Path) -> Result<usize> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut added = 0;
        for (idx, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (surface, canonical) = match line.split_once('\t') {
                Some((s, c)) if !c.trim().is_empty() => (s, c.trim()),
                Some((s, _)) => (s, s),
                None => (line, line),
            };
            let canonical = if kind == DictionaryKind::Cannabis {
                CANNABIS
            } else {
                canonical
            };
            self.add(surface, canonical, kind.class()).map_err(|e| match e {
                Error::Config(message) => Error::Record {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message,
                },
                other => other,
            })?;
            added += 1;
        }
        Ok(added)
    }

    fn finish(mut self, stoplist: BTreeSet<String>) -> Result<Lexicon> {
        let canonicals: Vec<(String, TermClass)> = self.classes.iter().map(|(t, c)| (t.clone(), *c)).collect();
        for (canonical, class) in canonicals {
            if normalize_surface(&canonical).is_empty() {
                continue;
            }
            self.add(&canonical, &canonical, class)?;
        }
        let stoplist: BTreeSet<String> = stoplist
            .into_iter()
            .map(|s| s.trim().to_lowercase())
            .filter(|s| !s.is_empty())
            .collect();
        let patterns: Vec<String> = self
            .entries
            .iter()
            .filter(|(_, e)| !stoplist.contains(&e.canonical))
            .map(|(k, _)| k.clone())
            .collect();
        let automaton = TokenAutomaton::build(patterns.iter().map(|p| p.split(' ')));
        Ok(Lexicon {
            entries: self.entries,
            classes: self.classes,
            stoplist,
            patterns,
            automaton,
            warnings: self.warnings,
        })
    }
}

/// Reads a stoplist: one canonical term per line.
pub fn load_stoplist(path: impl AsRef<Path>) -> Result<BTreeSet<String>> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(raw
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedTimeline {
    pub timeline: Timeline,
    /// Matches per post, parallel to `timeline.posts`.
    pub matches: Vec<Vec<TermMatch>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermFrequency {
    pub term: String,
    pub class: TermClass,
    pub count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaggedCorpus {
    pub timelines: Vec<TaggedTimeline>,
}

impl TaggedCorpus {
    /// Total match occurrences per term, most frequent first.
    pub fn frequencies(&self) -> Vec<TermFrequency> {
        let mut counts: BTreeMap<(&str, TermClass), u64> = BTreeMap::new();
        for tl in &self.timelines {
            for m in tl.matches.iter().flatten() {
                *counts.entry((m.canonical_term.as_str(), m.class)).or_default() += 1;
            }
        }
        let mut table: Vec<TermFrequency> = counts
            .into_iter()
            .map(|((term, class), count)| TermFrequency {
                term: term.to_string(),
                class,
                count,
            })
            .collect();
        table.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.term.cmp(&b.term)));
        table
    }

    pub fn match_count(&self) -> usize {
        self.timelines.iter().flat_map(|t| &t.matches).map(Vec::len).sum()
    }

    /// Flat `{post_id, term, class, start, end}` records in corpus order.
    pub fn tag_matches(&self) -> impl Iterator<Item = TagMatch> + '_ {
        self.timelines.iter().flat_map(|tl| {
            tl.timeline.posts.iter().zip(&tl.matches).flat_map(|(post, ms)| {
                ms.iter().map(move |m| TagMatch {
                    post_id: post.post_id.clone(),
                    term: m.clone(),
                })
            })
        })
    }
}

/// Tags every post of every timeline.
pub fn tag_corpus(lexicon: &Lexicon, timelines: Vec<Timeline>) -> (TaggedCorpus, Vec<TermFrequency>) {
    let timelines: Vec<TaggedTimeline> = timelines
        .into_par_iter()
        .map(|timeline| {
            let matches = timeline
                .posts
                .iter()
                .map(|p| lexicon.tag_post(&p.text, &p.caption_tags))
                .collect();
            TaggedTimeline { timeline, matches }
        })
        .collect();
    let corpus = TaggedCorpus { timelines };
    let table = corpus.frequencies();
    (corpus, table)
}
