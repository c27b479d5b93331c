//! Timestamped user timelines: loading, validation and calendar window bucketing.
//!
//! The input corpus is newline-delimited JSON, one post per line:
//!
//! ```text
//! {"post_id":"p1","user_id":"u1","timestamp":"2015-05-13T18:02:11Z","text":"...","tags":["fluoxetine"]}
//! ```
//!
//! Windows are calendar periods in UTC (ISO date, ISO week, calendar month)
//! scoped to a single user.

mod synth;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDateTime, SecondsFormat, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synth::{generate_synthetic_corpus, PlantSpec, PlantedChain, PlantedPair, SyntheticCorpus};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: String,
    pub user_id: String,
    #[serde(with = "timestamp_format")]
    pub timestamp: DateTime<Utc>,
    pub text: String,
    #[serde(rename = "tags", default)]
    pub caption_tags: Vec<String>,
}

/// All posts of one user, ascending by timestamp with ties broken by post id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeline {
    pub user_id: String,
    pub posts: Vec<Post>,
}

impl Timeline {
    /// Builds a timeline from posts of a single user, sorting them.
    pub fn new(user_id: impl Into<String>, mut posts: Vec<Post>) -> Self {
        sort_posts(&mut posts);
        Timeline {
            user_id: user_id.into(),
            posts,
        }
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }
}

fn sort_posts(posts: &mut [Post]) {
    posts.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.post_id.cmp(&b.post_id)));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    Day,
    Week,
    Month,
}

impl Resolution {
    pub const ALL: [Resolution; 3] = [Resolution::Day, Resolution::Week, Resolution::Month];

    pub fn as_str(self) -> &'static str {
        match self {
            Resolution::Day => "day",
            Resolution::Week => "week",
            Resolution::Month => "month",
        }
    }

    /// Canonical label of the calendar period containing `ts`.
    pub fn period_id(self, ts: &DateTime<Utc>) -> String {
        match self {
            Resolution::Day => format!("{:04}-{:02}-{:02}", ts.year(), ts.month(), ts.day()),
            Resolution::Week => {
                let week = ts.iso_week();
                format!("{:04}-W{:02}", week.year(), week.week())
            }
            Resolution::Month => format!("{:04}-{:02}", ts.year(), ts.month()),
        }
    }

    /// Checks that `period_id` has the shape this resolution produces.
    pub fn is_valid_period(self, period_id: &str) -> bool {
        let b = period_id.as_bytes();
        let digits = |r: std::ops::Range<usize>| b[r].iter().all(u8::is_ascii_digit);
        match self {
            Resolution::Day => {
                b.len() == 10
                    && digits(0..4)
                    && b[4] == b'-'
                    && digits(5..7)
                    && b[7] == b'-'
                    && digits(8..10)
                    && chrono::NaiveDate::parse_from_str(period_id, "%Y-%m-%d").is_ok()
            }
            Resolution::Week => {
                b.len() == 8 && digits(0..4) && &b[4..6] == b"-W" && digits(6..8) && {
                    let week: u32 = period_id[6..].parse().unwrap_or(0);
                    (1..=53).contains(&week)
                }
            }
            Resolution::Month => {
                b.len() == 7 && digits(0..4) && b[4] == b'-' && digits(5..7) && {
                    let month: u32 = period_id[5..].parse().unwrap_or(0);
                    (1..=12).contains(&month)
                }
            }
        }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "day" | "d" => Ok(Resolution::Day),
            "week" | "w" => Ok(Resolution::Week),
            "month" | "m" => Ok(Resolution::Month),
            other => Err(Error::Config(format!(
                "unknown resolution {other:?} (expected day, week or month)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WindowKey {
    pub user_id: String,
    pub resolution: Resolution,
    pub period_id: String,
}

/// Groups a timeline's post ids into per-user calendar windows.
pub fn bucketize(timeline: &Timeline, resolution: Resolution) -> BTreeMap<WindowKey, BTreeSet<String>> {
    let mut buckets: BTreeMap<WindowKey, BTreeSet<String>> = BTreeMap::new();
    for post in &timeline.posts {
        let key = WindowKey {
            user_id: timeline.user_id.clone(),
            resolution,
            period_id: resolution.period_id(&post.timestamp),
        };
        buckets.entry(key).or_default().insert(post.post_id.clone());
    }
    buckets
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

/// Summary emitted after loading a corpus file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    /// Non-blank lines read.
    pub records: usize,
    pub users: usize,
    pub posts: usize,
    pub malformed: usize,
    pub duplicates: usize,
    /// Records whose timestamp carried no offset and was read as UTC.
    pub naive_timestamps: usize,
    pub errors: Vec<RecordError>,
}

#[derive(Deserialize)]
struct RawRecord {
    post_id: Option<String>,
    user_id: Option<String>,
    timestamp: Option<String>,
    text: Option<String>,
    #[serde(default)]
    tags: Option<Vec<String>>,
}

/// Parses an RFC 3339 instant, truncated to whole seconds. Strings without an
/// offset are accepted as UTC; the flag reports that case.
pub fn parse_timestamp(s: &str) -> Option<(DateTime<Utc>, bool)> {
    let s = s.trim();
    if let Ok(ts) = DateTime::parse_from_rfc3339(s) {
        let ts = ts.with_timezone(&Utc);
        return Some((ts.with_nanosecond(0)?, false));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some((naive.and_utc().with_nanosecond(0)?, true));
        }
    }
    None
}

fn parse_record(line: &str) -> std::result::Result<(Post, bool), String> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let require = |field: Option<String>, name: &str| field.ok_or_else(|| format!("missing required field `{name}`"));
    let post_id = require(raw.post_id, "post_id")?;
    let user_id = require(raw.user_id, "user_id")?;
    let timestamp = require(raw.timestamp, "timestamp")?;
    let text = require(raw.text, "text")?;
    if post_id.is_empty() {
        return Err("empty `post_id`".into());
    }
    let (timestamp, naive) =
        parse_timestamp(&timestamp).ok_or_else(|| format!("unparseable timestamp {timestamp:?}"))?;
    let caption_tags = raw
        .tags
        .unwrap_or_default()
        .into_iter()
        .map(|t| t.trim_start_matches('#').to_string())
        .collect();
    Ok((
        Post {
            post_id,
            user_id,
            timestamp,
            text,
            caption_tags,
        },
        naive,
    ))
}

/// Reads a newline-delimited JSON corpus.
///
/// Only an unreadable file is fatal. Bad records are listed in the report with
/// their 1-based line number; a repeated `post_id` keeps the first occurrence.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<(Vec<Timeline>, LoadReport)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file)).map_err(|e| Error::io(path, e))
}

pub fn read_corpus(reader: impl BufRead) -> std::io::Result<(Vec<Timeline>, LoadReport)> {
    let mut report = LoadReport::default();
    let mut seen: HashSet<String> = HashSet::new();
    let mut by_user: BTreeMap<String, Vec<Post>> = BTreeMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        report.records += 1;
        match parse_record(&line) {
            Ok((post, naive)) => {
                if !seen.insert(post.post_id.clone()) {
                    report.duplicates += 1;
                    continue;
                }
                if naive {
                    report.naive_timestamps += 1;
                }
                by_user.entry(post.user_id.clone()).or_default().push(post);
            }
            Err(message) => {
                report.malformed += 1;
                report.errors.push(RecordError { line: idx + 1, message });
            }
        }
    }

    let timelines: Vec<Timeline> = by_user
        .into_iter()
        .map(|(user, posts)| Timeline::new(user, posts))
        .collect();
    report.users = timelines.len();
    report.posts = timelines.iter().map(Timeline::len).sum();
    Ok((timelines, report))
}

/// Writes timelines back out in the input format, users in order.
pub fn write_corpus(mut out: impl Write, timelines: &[Timeline]) -> std::io::Result<()> {
    for timeline in timelines {
        for post in &timeline.posts {
            serde_json::to_writer(&mut out, post)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()
}

pub(crate) mod timestamp_format {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&ts.to_rfc3339_opts(SecondsFormat::Secs, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        parse_timestamp(&raw)
            .map(|(ts, _)| ts)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid timestamp {raw:?}")))
    }
}
