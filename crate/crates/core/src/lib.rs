//! Class-labeled term co-occurrence networks from timestamped user posts.
//!
//! The pipeline runs corpus loading and windowing ([`corpus`]), dictionary
//! tagging ([`lexicon`]), per-window co-occurrence counting ([`cooccur`]),
//! proximity and distance graphs ([`netgraph`]), metric closure and pair
//! rankings ([`closure`]), PCA ([`spectra`]) and set queries ([`query`]).
//! [`pipeline`] chains the stages over an on-disk [`store::ArtifactStore`].

pub mod closure;
pub mod config;
pub mod cooccur;
pub mod corpus;
pub mod error;
pub mod export;
pub mod lexicon;
pub mod netgraph;
pub mod pipeline;
pub mod query;
pub mod spectra;
pub mod store;

pub use closure::{
    metric_closure, proximity_closure, rank_semimetric_pairs, top_direct_pairs, ClassFilter, ClosedDistanceGraph,
    DirectPair, SemiMetricPair, SemimetricScoring,
};
pub use config::PipelineConfig;
pub use cooccur::{build_cooccurrence, merge, CooccurrenceMatrix, Term};
pub use corpus::{
    bucketize, generate_synthetic_corpus, load_corpus, LoadReport, PlantSpec, Post, Resolution, SyntheticCorpus,
    Timeline, WindowKey,
};
pub use error::{Error, Result};
pub use lexicon::{tag_corpus, DictionaryKind, Lexicon, TagMatch, TaggedCorpus, TermClass, TermMatch};
pub use netgraph::{
    distance_from_proximity, distance_to_proximity, proximity_from_counts, proximity_to_distance, DistanceGraph,
    GraphKind, ProximityGraph, WeightedEdge,
};
pub use query::{run_query, Aggregate, AnswerSet, QuerySpec};
pub use spectra::{component_subgraph, component_terms, pca, PcaReport, PcaResult};
pub use store::{ArtifactStore, Stage};
