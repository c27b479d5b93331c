//! Proximity and distance graphs.
//!
//! Proximity is the Jaccard ratio of window sets,
//! `p_ij = r_ij / (r_ii + r_jj - r_ij)`, admitted only when the union count
//! `r_ii + r_jj - r_ij` reaches the support threshold. Distance is the
//! monotone map `d = 1/p - 1`; a zero proximity is an absent edge.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cooccur::{CooccurrenceMatrix, Term};
use crate::corpus::Resolution;
use crate::error::{Error, Result};

pub const DEFAULT_SUPPORT: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    /// Built from observed co-occurrences.
    Direct,
    /// Shortest-path closure of the distance graph, mapped back to proximity.
    Closed,
}

impl GraphKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GraphKind::Direct => "direct",
            GraphKind::Closed => "closed",
        }
    }
}

/// Window counts behind a direct edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Support {
    pub cooccurrences: u64,
    pub union: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedEdge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
    pub support: Option<Support>,
}

/// Sparse symmetric weighted graph over a sorted term list. Only `i < j`
/// edges are stored; self-loops are implicit.
#[derive(Debug, Clone, PartialEq)]
struct SparseGraph {
    terms: Vec<Term>,
    edges: BTreeMap<(u32, u32), (f64, Option<Support>)>,
    adjacency: Vec<Vec<(u32, f64)>>,
}

impl SparseGraph {
    fn new(terms: Vec<Term>, edges: BTreeMap<(u32, u32), (f64, Option<Support>)>) -> Self {
        let mut adjacency = vec![Vec::new(); terms.len()];
        for (&(i, j), &(w, _)) in &edges {
            adjacency[i as usize].push((j, w));
            adjacency[j as usize].push((i, w));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(n, _)| n);
        }
        SparseGraph {
            terms,
            edges,
            adjacency,
        }
    }

    fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let key = if i < j {
            (i as u32, j as u32)
        } else {
            (j as u32, i as u32)
        };
        self.edges.get(&key).map(|&(w, _)| w)
    }

    fn edges(&self) -> impl Iterator<Item = WeightedEdge> + '_ {
        self.edges.iter().map(|(&(i, j), &(weight, support))| WeightedEdge {
            i: i as usize,
            j: j as usize,
            weight,
            support,
        })
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.terms.binary_search_by(|t| t.name.as_str().cmp(name)).ok()
    }
}

macro_rules! graph_accessors {
    () => {
        pub fn resolution(&self) -> Resolution {
            self.resolution
        }

        pub fn kind(&self) -> GraphKind {
            self.kind
        }

        pub fn support_threshold(&self) -> u64 {
            self.support_threshold
        }

        pub fn terms(&self) -> &[Term] {
            &self.graph.terms
        }

        pub fn len(&self) -> usize {
            self.graph.terms.len()
        }

        pub fn is_empty(&self) -> bool {
            self.graph.terms.is_empty()
        }

        pub fn index_of(&self, name: &str) -> Option<usize> {
            self.graph.index_of(name)
        }

        /// Like [`Self::index_of`] but reports the missing term.
        pub fn require(&self, name: &str) -> Result<usize> {
            self.index_of(name)
                .ok_or_else(|| Error::UnknownTerm(name.to_string()))
        }

        /// Stored edges with `i < j`, ordered by `(i, j)`.
        pub fn edges(&self) -> impl Iterator<Item = WeightedEdge> + '_ {
            self.graph.edges()
        }

        pub fn edge_count(&self) -> usize {
            self.graph.edges.len()
        }

        /// Neighbours of `i` and edge weights, ordered by index.
        pub fn neighbors(&self, i: usize) -> &[(u32, f64)] {
            &self.graph.adjacency[i]
        }
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProximityGraph {
    resolution: Resolution,
    kind: GraphKind,
    support_threshold: u64,
    graph: SparseGraph,
}

impl ProximityGraph {
    graph_accessors!();

    /// Assembles a graph from explicit edges; weights must lie in (0, 1].
    pub fn from_edges(
        terms: Vec<Term>,
        resolution: Resolution,
        kind: GraphKind,
        support_threshold: u64,
        edges: impl IntoIterator<Item = WeightedEdge>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for e in edges {
            if e.i == e.j || e.i >= terms.len() || e.j >= terms.len() {
                return Err(Error::artifact(
                    "proximity graph",
                    format!("bad edge ({}, {})", e.i, e.j),
                ));
            }
            if !(e.weight > 0.0 && e.weight <= 1.0) {
                return Err(Error::artifact(
                    "proximity graph",
                    format!("weight {} outside (0, 1]", e.weight),
                ));
            }
            let key = if e.i < e.j {
                (e.i as u32, e.j as u32)
            } else {
                (e.j as u32, e.i as u32)
            };
            map.insert(key, (e.weight, e.support));
        }
        if terms.windows(2).any(|w| w[0].name >= w[1].name) {
            return Err(Error::artifact("proximity graph", "terms not strictly sorted"));
        }
        Ok(ProximityGraph {
            resolution,
            kind,
            support_threshold,
            graph: SparseGraph::new(terms, map),
        })
    }

    /// `p_ij`, with `p_ii = 1` and absent edges `0`.
    pub fn proximity(&self, i: usize, j: usize) -> f64 {
        if i == j {
            1.0
        } else {
            self.graph.weight(i, j).unwrap_or(0.0)
        }
    }

    /// Induced subgraph on `names`, keeping edges with `p >= min_weight`.
    pub fn subgraph<S: AsRef<str>>(&self, names: &[S], min_weight: f64) -> Result<ProximityGraph> {
        let mut idx: Vec<usize> = names.iter().map(|n| self.require(n.as_ref())).collect::<Result<_>>()?;
        idx.sort_unstable();
        idx.dedup();
        let terms: Vec<Term> = idx.iter().map(|&i| self.graph.terms[i].clone()).collect();
        let mut edges = Vec::new();
        for (a, &i) in idx.iter().enumerate() {
            for &(j, w) in self.neighbors(i) {
                if let Ok(b) = idx.binary_search(&(j as usize)) {
                    if a < b && w >= min_weight {
                        let support = self.graph.edges[&(i as u32, j)].1;
                        edges.push(WeightedEdge {
                            i: a,
                            j: b,
                            weight: w,
                            support,
                        });
                    }
                }
            }
        }
        ProximityGraph::from_edges(terms, self.resolution, self.kind, self.support_threshold, edges)
    }

    /// Dense adjacency with unit diagonal, row-major.
    pub fn dense(&self) -> Vec<f64> {
        let n = self.len();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0;
        }
        for e in self.edges() {
            a[e.i * n + e.j] = e.weight;
            a[e.j * n + e.i] = e.weight;
        }
        a
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceGraph {
    resolution: Resolution,
    kind: GraphKind,
    support_threshold: u64,
    graph: SparseGraph,
}

impl DistanceGraph {
    graph_accessors!();

    /// `d_ij` for a present edge; `Some(0.0)` on the diagonal.
    pub fn distance(&self, i: usize, j: usize) -> Option<f64> {
        if i == j {
            Some(0.0)
        } else {
            self.graph.weight(i, j)
        }
    }

    /// Builds a distance graph from explicit non-negative edge lengths.
    pub fn from_edges(
        terms: Vec<Term>,
        resolution: Resolution,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, j, d) in edges {
            if i == j || i >= terms.len() || j >= terms.len() || !d.is_finite() || d < 0.0 {
                return Err(Error::artifact("distance graph", format!("bad edge ({i}, {j}, {d})")));
            }
            let key = if i < j {
                (i as u32, j as u32)
            } else {
                (j as u32, i as u32)
            };
            map.insert(key, (d, None));
        }
        Ok(DistanceGraph {
            resolution,
            kind: GraphKind::Direct,
            support_threshold: DEFAULT_SUPPORT,
            graph: SparseGraph::new(terms, map),
        })
    }
}

/// `p = r_ij / (r_ii + r_jj - r_ij)` where the union count meets `support`;
/// a `support` of 0 behaves as 1.
pub fn proximity_from_counts(counts: &CooccurrenceMatrix, support: u64) -> ProximityGraph {
    let mut edges = BTreeMap::new();
    for (i, j, r) in counts.pairs() {
        let union = counts.diagonal(i) + counts.diagonal(j) - r;
        if r == 0 || union == 0 || union < support {
            continue;
        }
        edges.insert(
            (i as u32, j as u32),
            (
                r as f64 / union as f64,
                Some(Support {
                    cooccurrences: r,
                    union,
                }),
            ),
        );
    }
    ProximityGraph {
        resolution: counts.resolution(),
        kind: GraphKind::Direct,
        support_threshold: support,
        graph: SparseGraph::new(counts.terms().to_vec(), edges),
    }
}

/// `d = 1/p - 1`.
pub fn proximity_to_distance(p: f64) -> f64 {
    if p >= 1.0 {
        0.0
    } else {
        1.0 / p - 1.0
    }
}

/// `p = 1/(d + 1)`; infinite distance maps to 0.
pub fn distance_to_proximity(d: f64) -> f64 {
    if d.is_infinite() {
        0.0
    } else {
        1.0 / (d + 1.0)
    }
}

pub fn distance_from_proximity(proximity: &ProximityGraph) -> DistanceGraph {
    let edges = proximity
        .graph
        .edges
        .iter()
        .map(|(&k, &(p, support))| (k, (proximity_to_distance(p), support)))
        .collect();
    DistanceGraph {
        resolution: proximity.resolution,
        kind: proximity.kind,
        support_threshold: proximity.support_threshold,
        graph: SparseGraph::new(proximity.graph.terms.clone(), edges),
    }
}
