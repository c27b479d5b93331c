//! Pipeline stages over an [`ArtifactStore`].
//!
//! Each stage reads its upstream artifacts from the store (verifying them) and
//! writes its own. Downstream stages rebuild proximity graphs from the exact
//! co-occurrence counts rather than the rounded edge lists.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::closure::{
    metric_closure, proximity_closure, rank_semimetric_pairs, top_direct_pairs, ClosedDistanceGraph, DirectPair,
    SemiMetricPair,
};
use crate::config::PipelineConfig;
use crate::cooccur::{build_cooccurrence, CooccurrenceMatrix};
use crate::corpus::{load_corpus, read_corpus, write_corpus, LoadReport, Resolution, Timeline};
use crate::error::{Error, Result};
use crate::export::{
    read_closure_tsv, write_closure_tsv, write_direct_pairs, write_edge_list, write_graphml, write_semimetric_pairs,
};
use crate::lexicon::{load_stoplist, tag_corpus, Lexicon, TagMatch, TaggedCorpus, TaggedTimeline, TermMatch};
use crate::netgraph::{distance_from_proximity, proximity_from_counts, ProximityGraph};
use crate::spectra::{pca as run_pca, PcaReport};
use crate::store::{paths, ArtifactStore, Stage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagReport {
    pub posts: usize,
    pub matches: usize,
    pub terms: usize,
    pub lexicon_surfaces: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub resolution: Resolution,
    pub terms: usize,
    pub windows: usize,
    pub cooccurring_pairs: usize,
    pub edges: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosureSummary {
    pub resolution: Resolution,
    pub terms: usize,
    pub components: usize,
    pub reachable_pairs: usize,
}

fn render(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory cannot fail");
    buf
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn ingest(config: &PipelineConfig, store: &mut ArtifactStore) -> Result<LoadReport> {
    let (timelines, report) = load_corpus(&config.corpus)?;
    store.write(Stage::Ingest, paths::CORPUS, &render(|b| write_corpus(b, &timelines)))?;
    store.write(Stage::Ingest, paths::LOAD_REPORT, &json_bytes(&report)?)?;
    Ok(report)
}

pub fn load_timelines(store: &ArtifactStore) -> Result<Vec<Timeline>> {
    let bytes = store.read(Stage::Ingest, paths::CORPUS)?;
    let (timelines, report) =
        read_corpus(bytes.as_slice()).map_err(|e| Error::artifact(paths::CORPUS, e.to_string()))?;
    if report.malformed > 0 || report.duplicates > 0 {
        return Err(Error::artifact(paths::CORPUS, "stored corpus contains invalid records"));
    }
    Ok(timelines)
}

pub fn load_lexicon(config: &PipelineConfig) -> Result<Lexicon> {
    let stoplist = match &config.stoplist {
        Some(p) => load_stoplist(p)?,
        None => Default::default(),
    };
    Lexicon::load(&config.dictionaries, &stoplist)
}

pub fn tag(config: &PipelineConfig, store: &mut ArtifactStore) -> Result<TagReport> {
    let timelines = load_timelines(store)?;
    let lexicon = load_lexicon(config)?;
    let (tagged, frequencies) = tag_corpus(&lexicon, timelines);

    let mut tags = Vec::new();
    for m in tagged.tag_matches() {
        serde_json::to_writer(&mut tags, &m)?;
        tags.push(b'\n');
    }
    let mut table = String::from("term\tclass\tcount\n");
    for f in &frequencies {
        table.push_str(&format!("{}\t{}\t{}\n", f.term, f.class, f.count));
    }
    let report = TagReport {
        posts: tagged.timelines.iter().map(|t| t.timeline.len()).sum(),
        matches: tagged.match_count(),
        terms: frequencies.len(),
        lexicon_surfaces: lexicon.entries().len(),
        warnings: lexicon.warnings().to_vec(),
    };
    store.write(Stage::Tag, paths::TAGS, &tags)?;
    store.write(Stage::Tag, paths::FREQUENCIES, table.as_bytes())?;
    store.write(Stage::Tag, paths::TAG_REPORT, &json_bytes(&report)?)?;
    Ok(report)
}

pub fn load_tagged(store: &ArtifactStore) -> Result<TaggedCorpus> {
    let timelines = load_timelines(store)?;
    let text = store.read_string(Stage::Tag, paths::TAGS)?;
    let mut by_post: HashMap<String, Vec<TermMatch>> = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let m: TagMatch =
            serde_json::from_str(line).map_err(|e| Error::artifact(paths::TAGS, format!("line {}: {e}", idx + 1)))?;
        by_post.entry(m.post_id).or_default().push(m.term);
    }
    let timelines = timelines
        .into_iter()
        .map(|timeline| {
            let matches = timeline
                .posts
                .iter()
                .map(|p| by_post.remove(&p.post_id).unwrap_or_default())
                .collect();
            TaggedTimeline { timeline, matches }
        })
        .collect();
    if let Some(orphan) = by_post.keys().next() {
        return Err(Error::artifact(
            paths::TAGS,
            format!("match for unknown post {orphan:?}"),
        ));
    }
    Ok(TaggedCorpus { timelines })
}

pub fn build(config: &PipelineConfig, store: &mut ArtifactStore) -> Result<Vec<BuildSummary>> {
    let tagged = load_tagged(store)?;
    let mut summaries = Vec::new();
    for &res in &config.resolutions {
        let counts = build_cooccurrence(&tagged, res);
        let graph = proximity_from_counts(&counts, config.support_threshold);
        let stage = Stage::Build(res);
        store.write(stage, &paths::cooccurrence(res), &render(|b| counts.write_tsv(b)))?;
        store.write(stage, &paths::proximity(res), &render(|b| write_edge_list(&graph, b)))?;
        store.write(stage, &paths::graphml(res), &render(|b| write_graphml(&graph, b)))?;
        summaries.push(BuildSummary {
            resolution: res,
            terms: counts.len(),
            windows: counts.windows().map_or(0, |w| w.len()),
            cooccurring_pairs: counts.pairs().count(),
            edges: graph.edge_count(),
        });
    }
    Ok(summaries)
}

pub fn load_counts(store: &ArtifactStore, res: Resolution) -> Result<CooccurrenceMatrix> {
    let bytes = store.read(Stage::Build(res), &paths::cooccurrence(res))?;
    CooccurrenceMatrix::read_tsv(bytes.as_slice())
}

/// The direct proximity graph, recomputed from stored counts with the
/// support threshold the build ran with.
pub fn load_proximity(store: &ArtifactStore, res: Resolution) -> Result<ProximityGraph> {
    let counts = load_counts(store, res)?;
    let support = store
        .stage_params(Stage::Build(res))
        .and_then(|p| p.get("support_threshold"))
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::artifact(paths::cooccurrence(res), "build record lacks support_threshold"))?;
    Ok(proximity_from_counts(&counts, support))
}

pub fn closure(config: &PipelineConfig, store: &mut ArtifactStore) -> Result<Vec<ClosureSummary>> {
    let mut summaries = Vec::new();
    for &res in &config.resolutions {
        let graph = load_proximity(store, res)?;
        let closed = metric_closure(&distance_from_proximity(&graph));
        let closed_p = proximity_closure(&closed);
        let stage = Stage::Closure(res);
        store.write(stage, &paths::closure(res), &render(|b| write_closure_tsv(&closed, b)))?;
        store.write(
            stage,
            &paths::closed_proximity(res),
            &render(|b| write_edge_list(&closed_p, b)),
        )?;
        let components = closed.components().iter().max().map_or(0, |m| m + 1);
        summaries.push(ClosureSummary {
            resolution: res,
            terms: closed.len(),
            components,
            reachable_pairs: closed.finite_pairs().count(),
        });
    }
    Ok(summaries)
}

pub fn load_closure(store: &ArtifactStore, res: Resolution) -> Result<ClosedDistanceGraph> {
    let bytes = store.read(Stage::Closure(res), &paths::closure(res))?;
    read_closure_tsv(bytes.as_slice())
}

pub fn load_closed_proximity(store: &ArtifactStore, res: Resolution) -> Result<ProximityGraph> {
    Ok(proximity_closure(&load_closure(store, res)?))
}

pub fn rank_direct(
    config: &PipelineConfig,
    store: &mut ArtifactStore,
) -> Result<BTreeMap<Resolution, Vec<DirectPair>>> {
    let mut out = BTreeMap::new();
    for &res in &config.resolutions {
        let graph = load_proximity(store, res)?;
        let pairs = top_direct_pairs(&graph, &config.pair_filter, config.top_k);
        store.write(
            Stage::RankDirect(res),
            &paths::pairs_direct(res),
            &render(|b| write_direct_pairs(&pairs, b)),
        )?;
        out.insert(res, pairs);
    }
    Ok(out)
}

pub fn rank_semimetric(
    config: &PipelineConfig,
    store: &mut ArtifactStore,
) -> Result<BTreeMap<Resolution, Vec<SemiMetricPair>>> {
    let mut out = BTreeMap::new();
    for &res in &config.resolutions {
        let closed = load_closure(store, res)?;
        let direct = distance_from_proximity(&load_proximity(store, res)?);
        let pairs = rank_semimetric_pairs(&direct, &closed, &config.pair_filter, config.top_k, config.scoring)?;
        store.write(
            Stage::RankSemimetric(res),
            &paths::pairs_semimetric(res),
            &render(|b| write_semimetric_pairs(&pairs, b)),
        )?;
        out.insert(res, pairs);
    }
    Ok(out)
}

/// PCA per resolution. The component count is capped at the number of terms.
pub fn pca(config: &PipelineConfig, store: &mut ArtifactStore) -> Result<BTreeMap<Resolution, PcaReport>> {
    let mut out = BTreeMap::new();
    for &res in &config.resolutions {
        let graph = load_proximity(store, res)?;
        let k = config.pca_components.min(graph.len());
        let report = run_pca(&graph, k)?.report();
        store.write(Stage::Pca(res), &paths::pca(res), &json_bytes(&report)?)?;
        out.insert(res, report);
    }
    Ok(out)
}

pub fn load_pca(store: &ArtifactStore, res: Resolution) -> Result<PcaReport> {
    let bytes = store.read(Stage::Pca(res), &paths::pca(res))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::artifact(paths::pca(res), e.to_string()))
}

/// Every stage in order.
pub fn run_all(config: &PipelineConfig) -> Result<ArtifactStore> {
    let mut store = ArtifactStore::for_config(config)?;
    ingest(config, &mut store)?;
    tag(config, &mut store)?;
    build(config, &mut store)?;
    closure(config, &mut store)?;
    rank_direct(config, &mut store)?;
    rank_semimetric(config, &mut store)?;
    pca(config, &mut store)?;
    Ok(store)
}
