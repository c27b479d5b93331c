//! Per-window term co-occurrence counts.
//!
//! A window is one `(user, period)` bucket. Presence is binary: a term
//! mentioned five times in a window counts once. `r_ii` is the number of
//! windows containing term `i`, `r_ij` the number containing both.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Resolution;
use crate::error::{Error, Result};
use crate::lexicon::{TaggedCorpus, TermClass};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub class: TermClass,
}

/// `(user_id, period_id)` of a window.
pub type WindowId = (String, String);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceMatrix {
    resolution: Resolution,
    terms: Vec<Term>,
    diagonal: Vec<u64>,
    /// Off-diagonal counts keyed `(i, j)` with `i < j`; zero entries absent.
    pairs: BTreeMap<(u32, u32), u64>,
    /// Windows that contributed at least one term. `None` when read back from
    /// a serialized matrix.
    windows: Option<BTreeSet<WindowId>>,
}

struct Partial {
    diagonal: Vec<u64>,
    pairs: HashMap<(u32, u32), u64>,
    windows: Vec<WindowId>,
}

impl Partial {
    fn new(n: usize) -> Self {
        Partial {
            diagonal: vec![0; n],
            pairs: HashMap::new(),
            windows: Vec::new(),
        }
    }

    fn absorb(mut self, other: Partial) -> Partial {
        for (d, o) in self.diagonal.iter_mut().zip(other.diagonal) {
            *d += o;
        }
        for (k, v) in other.pairs {
            *self.pairs.entry(k).or_default() += v;
        }
        self.windows.extend(other.windows);
        self
    }
}

impl CooccurrenceMatrix {
    pub fn empty(resolution: Resolution) -> Self {
        CooccurrenceMatrix {
            resolution,
            terms: Vec::new(),
            diagonal: Vec::new(),
            pairs: BTreeMap::new(),
            windows: Some(BTreeSet::new()),
        }
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    /// Terms sorted by name.
    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.terms.binary_search_by(|t| t.name.as_str().cmp(name)).ok()
    }

    pub fn diagonal(&self, i: usize) -> u64 {
        self.diagonal[i]
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        if i == j {
            return self.diagonal[i];
        }
        let key = if i < j {
            (i as u32, j as u32)
        } else {
            (j as u32, i as u32)
        };
        self.pairs.get(&key).copied().unwrap_or(0)
    }

    /// Nonzero off-diagonal entries `(i, j, r_ij)` with `i < j`, in order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.pairs.iter().map(|(&(i, j), &r)| (i as usize, j as usize, r))
    }

    pub fn windows(&self) -> Option<&BTreeSet<WindowId>> {
        self.windows.as_ref()
    }

    /// Checks symmetry-derived bounds: `r_ij <= min(r_ii, r_jj)`.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.diagonal.len() != self.terms.len() {
            return Err("diagonal length differs from term count".into());
        }
        if self.terms.windows(2).any(|w| w[0].name >= w[1].name) {
            return Err("terms not strictly sorted".into());
        }
        for (i, j, r) in self.pairs() {
            if i >= j || j >= self.terms.len() {
                return Err(format!("bad pair index ({i}, {j})"));
            }
            if r == 0 || r > self.diagonal[i].min(self.diagonal[j]) {
                return Err(format!(
                    "r({},{})={r} exceeds min(r_ii={}, r_jj={})",
                    self.terms[i].name, self.terms[j].name, self.diagonal[i], self.diagonal[j]
                ));
            }
        }
        Ok(())
    }

    /// Writes the upper triangle as TSV behind a header of terms.
    pub fn write_tsv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "#resolution\t{}", self.resolution)?;
        for (term, diag) in self.terms.iter().zip(&self.diagonal) {
            writeln!(out, "#term\t{}\t{}\t{}", term.name, term.class, diag)?;
        }
        for (i, j, r) in self.pairs() {
            writeln!(out, "{}\t{}\t{}", self.terms[i].name, self.terms[j].name, r)?;
        }
        out.flush()
    }

    pub fn read_tsv(input: impl BufRead) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::artifact("co-occurrence TSV", format!("line {line}: {msg}"));
        let mut resolution = None;
        let mut terms = Vec::new();
        let mut diagonal = Vec::new();
        let mut raw_pairs = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::artifact("co-occurrence TSV", e.to_string()))?;
            let n = idx + 1;
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                ["#resolution", res] => resolution = Some(res.parse::<Resolution>()?),
                ["#term", name, class, diag] => {
                    terms.push(Term {
                        name: name.to_string(),
                        class: class.parse()?,
                    });
                    diagonal.push(diag.parse().map_err(|_| bad(n, "bad diagonal count"))?);
                }
                [a, b, r] => raw_pairs.push((
                    a.to_string(),
                    b.to_string(),
                    r.parse::<u64>().map_err(|_| bad(n, "bad count"))?,
                    n,
                )),
                [""] => {}
                _ => return Err(bad(n, "unexpected field count")),
            }
        }
        let mut matrix = CooccurrenceMatrix {
            resolution: resolution.ok_or_else(|| bad(0, "missing #resolution header"))?,
            terms,
            diagonal,
            pairs: BTreeMap::new(),
            windows: None,
        };
        for (a, b, r, n) in raw_pairs {
            let i = matrix.index_of(&a).ok_or_else(|| bad(n, "unknown term"))?;
            let j = matrix.index_of(&b).ok_or_else(|| bad(n, "unknown term"))?;
            let key = if i < j {
                (i as u32, j as u32)
            } else {
                (j as u32, i as u32)
            };
            matrix.pairs.insert(key, r);
        }
        matrix
            .check_invariants()
            .map_err(|m| Error::artifact("co-occurrence TSV", m))?;
        Ok(matrix)
    }
}

/// Counts co-occurrences of tagged terms at one resolution.
pub fn build_cooccurrence(tagged: &TaggedCorpus, resolution: Resolution) -> CooccurrenceMatrix {
    let mut classes: BTreeMap<&str, TermClass> = BTreeMap::new();
    for m in tagged.timelines.iter().flat_map(|t| t.matches.iter().flatten()) {
        classes.entry(m.canonical_term.as_str()).or_insert(m.class);
    }
    let terms: Vec<Term> = classes
        .iter()
        .map(|(name, class)| Term {
            name: name.to_string(),
            class: *class,
        })
        .collect();
    let index: HashMap<&str, u32> = classes.keys().enumerate().map(|(i, n)| (*n, i as u32)).collect();
    let n = terms.len();

    let partial = tagged
        .timelines
        .par_iter()
        .map(|tl| {
            let mut buckets: BTreeMap<String, BTreeSet<u32>> = BTreeMap::new();
            for (post, matches) in tl.timeline.posts.iter().zip(&tl.matches) {
                if matches.is_empty() {
                    continue;
                }
                let bucket = buckets.entry(resolution.period_id(&post.timestamp)).or_default();
                bucket.extend(matches.iter().map(|m| index[m.canonical_term.as_str()]));
            }
            let mut partial = Partial::new(n);
            for (period, ids) in buckets {
                let ids: Vec<u32> = ids.into_iter().collect();
                for (a, &i) in ids.iter().enumerate() {
                    partial.diagonal[i as usize] += 1;
                    for &j in &ids[a + 1..] {
                        *partial.pairs.entry((i, j)).or_default() += 1;
                    }
                }
                partial.windows.push((tl.timeline.user_id.clone(), period));
            }
            partial
        })
        .reduce(|| Partial::new(n), Partial::absorb);

    CooccurrenceMatrix {
        resolution,
        terms,
        diagonal: partial.diagonal,
        pairs: partial.pairs.into_iter().collect(),
        windows: Some(partial.windows.into_iter().collect()),
    }
}

/// Sums partial matrices built over disjoint sets of windows.
pub fn merge(partials: &[CooccurrenceMatrix]) -> Result<CooccurrenceMatrix> {
    let Some(first) = partials.first() else {
        return Err(Error::Merge("nothing to merge".into()));
    };
    let resolution = first.resolution;
    let mut classes: BTreeMap<&str, TermClass> = BTreeMap::new();
    let mut windows: BTreeSet<WindowId> = BTreeSet::new();
    for m in partials {
        if m.resolution != resolution {
            return Err(Error::Merge(format!(
                "resolutions differ ({resolution} vs {})",
                m.resolution
            )));
        }
        let Some(ws) = &m.windows else {
            return Err(Error::Merge(
                "window provenance unknown for a deserialized matrix".into(),
            ));
        };
        for w in ws {
            if !windows.insert(w.clone()) {
                return Err(Error::Merge(format!(
                    "window ({}, {}) appears in more than one partial",
                    w.0, w.1
                )));
            }
        }
        for t in &m.terms {
            match classes.get(t.name.as_str()) {
                Some(&c) if c != t.class => {
                    return Err(Error::ConflictingClass {
                        term: t.name.clone(),
                        first: c.to_string(),
                        second: t.class.to_string(),
                    })
                }
                _ => {
                    classes.insert(&t.name, t.class);
                }
            }
        }
    }

    let terms: Vec<Term> = classes
        .iter()
        .map(|(name, class)| Term {
            name: name.to_string(),
            class: *class,
        })
        .collect();
    let index: HashMap<&str, u32> = classes.keys().enumerate().map(|(i, n)| (*n, i as u32)).collect();
    let mut diagonal = vec![0u64; terms.len()];
    let mut pairs: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    for m in partials {
        let remap: Vec<u32> = m.terms.iter().map(|t| index[t.name.as_str()]).collect();
        for (i, d) in m.diagonal.iter().enumerate() {
            diagonal[remap[i] as usize] += d;
        }
        for (i, j, r) in m.pairs() {
            let (a, b) = (remap[i], remap[j]);
            let key = if a < b { (a, b) } else { (b, a) };
            *pairs.entry(key).or_default() += r;
        }
    }
    Ok(CooccurrenceMatrix {
        resolution,
        terms,
        diagonal,
        pairs,
        windows: Some(windows),
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::corpus::{parse_timestamp, Post, Timeline};
    use crate::lexicon::{TaggedTimeline, TermMatch};

    /// Tagged corpus from `(user, timestamp, terms)` rows; terms starting with
    /// `s` are symptoms, the rest drugs.
    pub(crate) fn tagged(rows: &[(&str, &str, &[&str])]) -> TaggedCorpus {
        let mut by_user: BTreeMap<&str, Vec<Post>> = BTreeMap::new();
        for (n, (user, ts, terms)) in rows.iter().enumerate() {
            by_user.entry(user).or_default().push(Post {
                post_id: format!("p{n:05}"),
                user_id: user.to_string(),
                timestamp: parse_timestamp(ts).unwrap().0,
                text: terms.join(" "),
                caption_tags: vec![],
            });
        }
        let timelines = by_user
            .into_iter()
            .map(|(user, posts)| {
                let timeline = Timeline::new(user, posts);
                let matches = timeline
                    .posts
                    .iter()
                    .map(|p| {
                        p.text
                            .split_whitespace()
                            .map(|t| TermMatch {
                                canonical_term: t.to_string(),
                                class: if t.starts_with('s') {
                                    TermClass::Symptom
                                } else {
                                    TermClass::Drug
                                },
                                start: 0,
                                end: 0,
                            })
                            .collect()
                    })
                    .collect();
                TaggedTimeline { timeline, matches }
            })
            .collect();
        TaggedCorpus { timelines }
    }

    #[test]
    fn lone_term_counts_windows() {
        let rows: Vec<(&str, &str, &[&str])> = vec![
            ("u1", "2015-01-01T10:00:00Z", &["x"]),
            ("u1", "2015-01-01T11:00:00Z", &["x", "x"]),
            ("u1", "2015-01-02T10:00:00Z", &["x"]),
            ("u2", "2015-01-01T10:00:00Z", &["x"]),
            ("u2", "2015-02-01T10:00:00Z", &["x"]),
            ("u3", "2015-03-01T10:00:00Z", &["x"]),
            ("u3", "2015-03-04T10:00:00Z", &[]),
        ];
        let m = build_cooccurrence(&tagged(&rows), Resolution::Day);
        assert_eq!(m.len(), 1);
        assert_eq!(m.diagonal(0), 5);
        assert_eq!(m.pairs().count(), 0);
        assert_eq!(m.index_of("y"), None);
        assert_eq!(m.windows().unwrap().len(), 5);
    }

    #[test]
    fn identical_presence_gives_equal_counts() {
        let rows: Vec<(&str, &str, &[&str])> = vec![
            ("u1", "2015-01-01T10:00:00Z", &["x"]),
            ("u1", "2015-01-01T12:00:00Z", &["sy"]),
            ("u1", "2015-01-03T10:00:00Z", &["x", "sy"]),
            ("u2", "2015-01-01T10:00:00Z", &["sy", "x"]),
        ];
        let m = build_cooccurrence(&tagged(&rows), Resolution::Day);
        let (x, y) = (m.index_of("x").unwrap(), m.index_of("sy").unwrap());
        assert_eq!((m.count(x, x), m.count(y, y), m.count(x, y)), (3, 3, 3));
        assert_eq!(m.count(y, x), 3);
        assert_eq!(m.terms()[y].class, TermClass::Symptom);
        m.check_invariants().unwrap();
    }

    #[test]
    fn empty_corpus_empty_matrix() {
        let m = build_cooccurrence(&TaggedCorpus::default(), Resolution::Week);
        assert!(m.is_empty());
    }

    #[test]
    fn merge_identity_and_blocks() {
        let a: Vec<(&str, &str, &[&str])> = vec![("u1", "2015-01-01T10:00:00Z", &["a", "b"])];
        let b: Vec<(&str, &str, &[&str])> = vec![("u2", "2015-01-01T10:00:00Z", &["c", "sd"])];
        let ma = build_cooccurrence(&tagged(&a), Resolution::Week);
        let mb = build_cooccurrence(&tagged(&b), Resolution::Week);
        let empty = CooccurrenceMatrix::empty(Resolution::Week);
        assert_eq!(merge(&[ma.clone(), empty]).unwrap(), ma);

        let merged = merge(&[ma.clone(), mb]).unwrap();
        assert_eq!(merged.len(), 4);
        let idx = |n: &str| merged.index_of(n).unwrap();
        assert_eq!(merged.count(idx("a"), idx("b")), 1);
        assert_eq!(merged.count(idx("c"), idx("sd")), 1);
        assert_eq!(merged.count(idx("a"), idx("c")), 0);
        assert_eq!(merged.count(idx("b"), idx("sd")), 0);

        let err = merge(&[ma.clone(), ma]).unwrap_err();
        assert!(err.to_string().contains("more than one partial"));
    }

    #[test]
    fn merge_rejects_mixed_resolutions() {
        let a = CooccurrenceMatrix::empty(Resolution::Week);
        let b = CooccurrenceMatrix::empty(Resolution::Day);
        assert!(merge(&[a, b]).is_err());
        assert!(merge(&[]).is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let rows: Vec<(&str, &str, &[&str])> = vec![
            ("u1", "2015-01-01T10:00:00Z", &["a", "b", "sx"]),
            ("u1", "2015-01-09T10:00:00Z", &["a", "sx"]),
        ];
        let m = build_cooccurrence(&tagged(&rows), Resolution::Week);
        let mut buf = Vec::new();
        m.write_tsv(&mut buf).unwrap();
        let back = CooccurrenceMatrix::read_tsv(buf.as_slice()).unwrap();
        assert_eq!(back.terms(), m.terms());
        assert_eq!(back.pairs().collect::<Vec<_>>(), m.pairs().collect::<Vec<_>>());
        assert!(back.windows().is_none());
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("#resolution\tweek\n#term\ta\tdrug\t2\n"));
    }
}
