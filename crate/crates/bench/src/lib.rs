//! Fixtures shared by the benchmarks.

use drugnet::{
    build_cooccurrence, distance_from_proximity, generate_synthetic_corpus, proximity_from_counts, tag_corpus,
    DistanceGraph, Lexicon, PlantSpec, ProximityGraph, Resolution, TaggedCorpus, Timeline,
};

pub struct Fixture {
    pub lexicon: Lexicon,
    pub timelines: Vec<Timeline>,
}

/// A synthetic corpus of `users` timelines and `posts` posts over `vocab` terms.
pub fn fixture(users: usize, posts: usize, vocab: usize) -> Fixture {
    let spec = PlantSpec::standard(users, posts, vocab, 5, 3, 0.8, 42).expect("valid bench spec");
    let corpus = generate_synthetic_corpus(&spec).expect("synthetic corpus");
    let lexicon = Lexicon::from_entries(
        spec.vocab.iter().map(|(t, c)| (t.clone(), t.clone(), *c)),
        Vec::<String>::new(),
    )
    .expect("lexicon");
    Fixture {
        lexicon,
        timelines: corpus.timelines,
    }
}

impl Fixture {
    pub fn tagged(&self) -> TaggedCorpus {
        tag_corpus(&self.lexicon, self.timelines.clone()).0
    }
}

pub fn proximity(tagged: &TaggedCorpus, resolution: Resolution, support: u64) -> ProximityGraph {
    proximity_from_counts(&build_cooccurrence(tagged, resolution), support)
}

pub fn distance(tagged: &TaggedCorpus, resolution: Resolution, support: u64) -> DistanceGraph {
    distance_from_proximity(&proximity(tagged, resolution, support))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_produces_a_connected_graph() {
        let f = fixture(50, 3000, 40);
        let tagged = f.tagged();
        assert!(tagged.match_count() > 0);
        let g = proximity(&tagged, Resolution::Week, 1);
        assert!(g.edge_count() > 0);
    }
}
