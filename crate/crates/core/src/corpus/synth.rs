//! Synthetic corpora with planted associations.
//!
//! Planted terms never appear as background noise. A planted pair `(a, b)`
//! gets `events_per_plant` events: a `co_rate` share of them mention both
//! terms in one post, the rest mention one term alone, with lone `a` and lone
//! `b` mentions confined to complementary halves of the user population. A
//! chain `(a, b, c)` places `a`-`b` events in one half and `b`-`c` events in
//! the other, so `a` and `c` never share a user.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Post, Timeline};
use crate::error::{Error, Result};
use crate::lexicon::{tokenize, TermClass};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPair {
    pub a: String,
    pub b: String,
    pub co_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedChain {
    pub a: String,
    pub b: String,
    pub c: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub n_users: usize,
    pub n_posts: usize,
    pub vocab: Vec<(String, TermClass)>,
    pub planted_pairs: Vec<PlantedPair>,
    pub planted_chains: Vec<PlantedChain>,
    pub seed: u64,
    /// Events generated per planted pair and per chain link.
    pub events_per_plant: usize,
    /// Probability that a post carries one background term.
    pub noise_rate: f64,
    pub start: DateTime<Utc>,
    pub span_days: i64,
}

impl PlantSpec {
    /// A vocabulary of `vocab_size` terms (40% drugs, 40% symptoms, 20%
    /// natural products) with `n_pairs` drug/symptom pairs planted at
    /// `co_rate` and `n_chains` drug/natural-product/symptom chains.
    pub fn standard(
        n_users: usize,
        n_posts: usize,
        vocab_size: usize,
        n_pairs: usize,
        n_chains: usize,
        co_rate: f64,
        seed: u64,
    ) -> Result<Self> {
        let n_drugs = vocab_size * 2 / 5;
        let n_symptoms = vocab_size * 2 / 5;
        let n_np = vocab_size - n_drugs - n_symptoms;
        if n_pairs + n_chains > n_drugs.min(n_symptoms) || n_chains > n_np {
            return Err(Error::PlantSpec(format!(
                "vocabulary of {vocab_size} terms cannot host {n_pairs} pairs and {n_chains} chains"
            )));
        }
        let drug = |i: usize| format!("drug{i:03}");
        let symptom = |i: usize| format!("symptom{i:03}");
        let herb = |i: usize| format!("herb{i:03}");

        let mut vocab = Vec::with_capacity(vocab_size);
        vocab.extend((0..n_drugs).map(|i| (drug(i), TermClass::Drug)));
        vocab.extend((0..n_symptoms).map(|i| (symptom(i), TermClass::Symptom)));
        vocab.extend((0..n_np).map(|i| (herb(i), TermClass::NaturalProduct)));

        let planted_pairs = (0..n_pairs)
            .map(|i| PlantedPair {
                a: drug(i),
                b: symptom(i),
                co_rate,
            })
            .collect();
        let planted_chains = (0..n_chains)
            .map(|i| PlantedChain {
                a: drug(n_pairs + i),
                b: herb(i),
                c: symptom(n_pairs + i),
            })
            .collect();

        Ok(PlantSpec {
            n_users,
            n_posts,
            vocab,
            planted_pairs,
            planted_chains,
            seed,
            ..PlantSpec::default()
        })
    }
}

impl Default for PlantSpec {
    fn default() -> Self {
        PlantSpec {
            n_users: 0,
            n_posts: 0,
            vocab: Vec::new(),
            planted_pairs: Vec::new(),
            planted_chains: Vec::new(),
            seed: 0,
            events_per_plant: 40,
            noise_rate: 0.3,
            start: Utc.with_ymd_and_hms(2014, 1, 1, 0, 0, 0).unwrap(),
            span_days: 540,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub timelines: Vec<Timeline>,
    /// Ground truth: number of injected mentions per term.
    pub mentions: BTreeMap<String, u64>,
    /// Post ids carrying both terms, per planted pair (same order as the spec).
    pub pair_posts: Vec<Vec<String>>,
}

const FILLER: &[&str] = &[
    "today", "feeling", "with", "my", "friends", "morning", "again", "so", "tired", "love", "this", "new", "week",
    "hope", "better", "coffee", "home", "work", "night", "happy", "sunday", "life", "just", "really", "day", "gym",
    "walk", "later", "maybe", "weekend",
];

fn validate(spec: &PlantSpec) -> Result<HashMap<&str, TermClass>> {
    let bad = |msg: String| Err(Error::PlantSpec(msg));
    let mut classes: HashMap<&str, TermClass> = HashMap::new();
    for (term, class) in &spec.vocab {
        if tokenize(term).is_empty() {
            return bad(format!("vocabulary term {term:?} has no word characters"));
        }
        if let Some(prev) = classes.insert(term.as_str(), *class) {
            if prev != *class {
                return bad(format!("vocabulary term {term:?} listed as {prev} and {class}"));
            }
        }
    }
    if spec.n_posts < spec.n_users {
        return bad(format!("{} posts cannot cover {} users", spec.n_posts, spec.n_users));
    }
    if !(0.0..=1.0).contains(&spec.noise_rate) {
        return bad(format!("noise_rate {} outside [0, 1]", spec.noise_rate));
    }
    let planted = !spec.planted_pairs.is_empty() || !spec.planted_chains.is_empty();
    if planted && spec.n_users < 2 {
        return bad("planted associations need at least two users".into());
    }
    if spec.span_days < 1 {
        return bad("span_days must be positive".into());
    }

    // every planted term belongs to exactly one plant
    let mut owner: HashMap<String, String> = HashMap::new();
    let mut claim = |term: &str, plant: String| -> Result<()> {
        if !classes.contains_key(term) {
            return Err(Error::PlantSpec(format!(
                "{plant} uses {term:?}, which is not in the vocabulary"
            )));
        }
        if let Some(prev) = owner.get(term) {
            return Err(Error::PlantSpec(format!("{term:?} is used by both {prev} and {plant}")));
        }
        owner.insert(term.to_string(), plant);
        Ok(())
    };
    for pair in &spec.planted_pairs {
        if !(0.0..=1.0).contains(&pair.co_rate) {
            return bad(format!(
                "co_rate {} for ({}, {}) outside [0, 1]",
                pair.co_rate, pair.a, pair.b
            ));
        }
        if pair.a == pair.b {
            return bad(format!("planted pair ({0}, {0}) repeats a term", pair.a));
        }
        let name = format!("pair ({}, {})", pair.a, pair.b);
        claim(&pair.a, name.clone())?;
        claim(&pair.b, name)?;
    }
    for chain in &spec.planted_chains {
        if chain.a == chain.b || chain.b == chain.c || chain.a == chain.c {
            return bad(format!("chain ({}, {}, {}) repeats a term", chain.a, chain.b, chain.c));
        }
        let name = format!("chain ({}, {}, {})", chain.a, chain.b, chain.c);
        claim(&chain.a, name.clone())?;
        claim(&chain.b, name.clone())?;
        claim(&chain.c, name)?;
    }
    Ok(classes)
}

#[derive(Default)]
struct DraftPost {
    inline: Vec<String>,
    tags: Vec<String>,
}

struct Drafts {
    /// Per user, the global indices of that user's posts.
    by_user: Vec<Vec<usize>>,
    posts: Vec<DraftPost>,
    mentions: BTreeMap<String, u64>,
}

impl Drafts {
    fn inject(&mut self, rng: &mut ChaCha8Rng, post: usize, term: &str) {
        let single_token = tokenize(term).len() == 1 && !term.contains(char::is_whitespace);
        let draft = &mut self.posts[post];
        if single_token && rng.gen_bool(0.3) {
            draft.tags.push(term.to_string());
        } else if rng.gen_bool(0.25) {
            let mut chars = term.chars();
            let capitalized: String = chars
                .next()
                .map(|c| c.to_uppercase().chain(chars).collect())
                .unwrap_or_default();
            draft.inline.push(capitalized);
        } else {
            draft.inline.push(term.to_string());
        }
        *self.mentions.entry(term.to_string()).or_default() += 1;
    }

    fn random_post(&self, rng: &mut ChaCha8Rng, user: usize) -> usize {
        *self.by_user[user].choose(rng).expect("every user has a post")
    }
}

/// Generates a deterministic corpus for `spec`.
pub fn generate_synthetic_corpus(spec: &PlantSpec) -> Result<SyntheticCorpus> {
    let classes = validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let planted: BTreeSet<&str> = spec
        .planted_pairs
        .iter()
        .flat_map(|p| [p.a.as_str(), p.b.as_str()])
        .chain(
            spec.planted_chains
                .iter()
                .flat_map(|c| [c.a.as_str(), c.b.as_str(), c.c.as_str()]),
        )
        .collect();
    let background: Vec<&str> = spec
        .vocab
        .iter()
        .map(|(t, _)| t.as_str())
        .filter(|t| !planted.contains(t))
        .collect();
    debug_assert!(classes.len() >= background.len());

    let vocab_tokens: BTreeSet<String> = spec
        .vocab
        .iter()
        .flat_map(|(t, _)| tokenize(t))
        .map(|t| t.text)
        .collect();
    let mut filler: Vec<&str> = FILLER.iter().copied().filter(|w| !vocab_tokens.contains(*w)).collect();
    if filler.is_empty() {
        filler.push("zzz");
    }

    // post ownership: one post per user, the rest uniform
    let mut owners: Vec<usize> = (0..spec.n_users).collect();
    owners.extend((spec.n_users..spec.n_posts).map(|_| rng.gen_range(0..spec.n_users)));
    let mut drafts = Drafts {
        by_user: vec![Vec::new(); spec.n_users],
        posts: Vec::with_capacity(spec.n_posts),
        mentions: BTreeMap::new(),
    };
    for (idx, &user) in owners.iter().enumerate() {
        drafts.by_user[user].push(idx);
        drafts.posts.push(DraftPost::default());
    }

    for post in 0..spec.n_posts {
        if !background.is_empty() && rng.gen_bool(spec.noise_rate) {
            let term = background[rng.gen_range(0..background.len())];
            drafts.inject(&mut rng, post, term);
        }
    }

    let half = |rng: &mut ChaCha8Rng, parity: usize, offset: usize| -> usize {
        // users u with (u + offset) % 2 == parity
        loop {
            let u = rng.gen_range(0..spec.n_users);
            if (u + offset) % 2 == parity {
                return u;
            }
        }
    };

    let mut pair_posts = Vec::with_capacity(spec.planted_pairs.len());
    for (k, pair) in spec.planted_pairs.iter().enumerate() {
        let joint = (spec.events_per_plant as f64 * pair.co_rate).round() as usize;
        let mut posts = Vec::with_capacity(joint);
        for _ in 0..joint {
            let user = rng.gen_range(0..spec.n_users);
            let post = drafts.random_post(&mut rng, user);
            drafts.inject(&mut rng, post, &pair.a);
            drafts.inject(&mut rng, post, &pair.b);
            posts.push(post);
        }
        for solo in 0..spec.events_per_plant - joint {
            let (term, parity) = if solo % 2 == 0 { (&pair.a, 0) } else { (&pair.b, 1) };
            let user = half(&mut rng, parity, k);
            let post = drafts.random_post(&mut rng, user);
            drafts.inject(&mut rng, post, term);
        }
        pair_posts.push(posts);
    }

    for (k, chain) in spec.planted_chains.iter().enumerate() {
        for _ in 0..spec.events_per_plant {
            let user = half(&mut rng, 0, k);
            let post = drafts.random_post(&mut rng, user);
            drafts.inject(&mut rng, post, &chain.a);
            drafts.inject(&mut rng, post, &chain.b);

            let user = half(&mut rng, 1, k);
            let post = drafts.random_post(&mut rng, user);
            drafts.inject(&mut rng, post, &chain.b);
            drafts.inject(&mut rng, post, &chain.c);
        }
    }

    let span_secs = spec.span_days * 86_400;
    let post_id = |idx: usize| format!("p{idx:07}");
    let mut per_user: Vec<Vec<Post>> = vec![Vec::new(); spec.n_users];
    for (idx, draft) in drafts.posts.into_iter().enumerate() {
        let user = owners[idx];
        let n_words = rng.gen_range(3..9);
        let mut text = (0..n_words)
            .map(|_| *filler.choose(&mut rng).unwrap())
            .collect::<Vec<_>>()
            .join(" ");
        for term in &draft.inline {
            text.push_str(", ");
            text.push_str(term);
        }
        let offset = rng.gen_range(0..span_secs);
        per_user[user].push(Post {
            post_id: post_id(idx),
            user_id: format!("u{user:05}"),
            timestamp: spec.start + Duration::seconds(offset),
            text,
            caption_tags: draft.tags,
        });
    }

    let timelines = per_user
        .into_iter()
        .enumerate()
        .map(|(user, posts)| Timeline::new(format!("u{user:05}"), posts))
        .collect();
    let pair_posts = pair_posts
        .into_iter()
        .map(|posts| {
            let mut ids: Vec<String> = posts.into_iter().map(post_id).collect();
            ids.sort();
            ids.dedup();
            ids
        })
        .collect();

    Ok(SyntheticCorpus {
        timelines,
        mentions: drafts.mentions,
        pair_posts,
    })
}
