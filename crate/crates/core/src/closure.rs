//! Metric closure of distance graphs and pair rankings.
//!
//! The closure holds shortest-path lengths between every pair of terms in the
//! same connected component, computed with one Dijkstra run per source.
//! A direct edge whose length exceeds the shortest path between its ends is
//! semi-metric; the ratio `d_direct / d_closed` measures by how much.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cooccur::Term;
use crate::corpus::Resolution;
use crate::error::{Error, Result};
use crate::lexicon::TermClass;
use crate::netgraph::{distance_to_proximity, DistanceGraph, GraphKind, ProximityGraph, WeightedEdge};

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedDistanceGraph {
    resolution: Resolution,
    support_threshold: u64,
    terms: Vec<Term>,
    /// Row-major `n * n`; `INFINITY` between components.
    dist: Vec<f64>,
    components: Vec<usize>,
}

impl ClosedDistanceGraph {
    /// Assembles a closure from a dense distance matrix; used when reading
    /// stored artifacts. Components are recomputed from reachability.
    pub fn from_dense(
        terms: Vec<Term>,
        resolution: Resolution,
        support_threshold: u64,
        dist: Vec<f64>,
    ) -> Result<Self> {
        let n = terms.len();
        if dist.len() != n * n {
            return Err(Error::artifact("closure", "matrix size does not match term count"));
        }
        let mut components = vec![usize::MAX; n];
        let mut next = 0;
        for i in 0..n {
            if components[i] != usize::MAX {
                continue;
            }
            for j in 0..n {
                if dist[i * n + j].is_finite() {
                    components[j] = next;
                }
            }
            next += 1;
        }
        Ok(ClosedDistanceGraph {
            resolution,
            support_threshold,
            terms,
            dist,
            components,
        })
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    pub fn support_threshold(&self) -> u64 {
        self.support_threshold
    }

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

    /// Shortest-path length, `None` when unreachable.
    pub fn distance(&self, i: usize, j: usize) -> Option<f64> {
        let d = self.dist[i * self.terms.len() + j];
        d.is_finite().then_some(d)
    }

    /// Component label of each term; labels are assigned in term order.
    pub fn components(&self) -> &[usize] {
        &self.components
    }

    /// Finite pairs `(i, j, d)` with `i < j`.
    pub fn finite_pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.terms.len();
        (0..n).flat_map(move |i| (i + 1..n).filter_map(move |j| self.distance(i, j).map(|d| (i, j, d))))
    }

    /// The closure viewed as a distance graph with an edge for every
    /// reachable pair.
    pub fn as_distance_graph(&self) -> DistanceGraph {
        DistanceGraph::from_edges(self.terms.clone(), self.resolution, self.finite_pairs())
            .expect("closure distances are finite and non-negative")
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Frontier {
    dist: f64,
    node: u32,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest paths over non-negative edge lengths.
pub fn dijkstra(graph: &DistanceGraph, source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; graph.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Frontier {
        dist: 0.0,
        node: source as u32,
    });
    while let Some(Frontier { dist: d, node }) = heap.pop() {
        if d > dist[node as usize] {
            continue;
        }
        for &(next, w) in graph.neighbors(node as usize) {
            let candidate = d + w;
            if candidate < dist[next as usize] {
                dist[next as usize] = candidate;
                heap.push(Frontier {
                    dist: candidate,
                    node: next,
                });
            }
        }
    }
    dist
}

fn components(graph: &DistanceGraph) -> Vec<usize> {
    let n = graph.len();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        label[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for &(j, _) in graph.neighbors(i) {
                if label[j as usize] == usize::MAX {
                    label[j as usize] = next;
                    queue.push_back(j as usize);
                }
            }
        }
        next += 1;
    }
    label
}

/// All-pairs shortest paths, one Dijkstra run per source in parallel.
pub fn metric_closure(graph: &DistanceGraph) -> ClosedDistanceGraph {
    let n = graph.len();
    let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|s| dijkstra(graph, s)).collect();
    let mut dist = Vec::with_capacity(n * n);
    for row in rows {
        dist.extend(row);
    }
    // Dijkstra from i and from j may round differently; keep the matrix symmetric.
    for i in 0..n {
        for j in i + 1..n {
            let m = dist[i * n + j].min(dist[j * n + i]);
            dist[i * n + j] = m;
            dist[j * n + i] = m;
        }
    }
    ClosedDistanceGraph {
        resolution: graph.resolution(),
        support_threshold: graph.support_threshold(),
        terms: graph.terms().to_vec(),
        dist,
        components: components(graph),
    }
}

/// Maps closure distances back to proximity, `p = 1/(d + 1)`.
pub fn proximity_closure(closure: &ClosedDistanceGraph) -> ProximityGraph {
    let edges = closure.finite_pairs().map(|(i, j, d)| WeightedEdge {
        i,
        j,
        weight: distance_to_proximity(d),
        support: None,
    });
    ProximityGraph::from_edges(
        closure.terms.clone(),
        closure.resolution,
        GraphKind::Closed,
        closure.support_threshold,
        edges,
    )
    .expect("closure proximities lie in (0, 1]")
}

/// Which class combinations a pair ranking admits: one term from `first`,
/// the other from `second`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassFilter {
    pub first: BTreeSet<TermClass>,
    pub second: BTreeSet<TermClass>,
}

impl ClassFilter {
    pub fn any() -> Self {
        ClassFilter {
            first: TermClass::ALL.into(),
            second: TermClass::ALL.into(),
        }
    }

    /// Drugs and natural products against symptoms.
    pub fn drug_np_vs_symptom() -> Self {
        ClassFilter {
            first: [TermClass::Drug, TermClass::NaturalProduct].into(),
            second: [TermClass::Symptom].into(),
        }
    }

    /// Returns the pair oriented so that the first index satisfies `first`,
    /// or `None` if the pair does not qualify. Pairs qualifying both ways keep
    /// their given order.
    pub fn orient(&self, terms: &[Term], i: usize, j: usize) -> Option<(usize, usize)> {
        let (ci, cj) = (terms[i].class, terms[j].class);
        if self.first.contains(&ci) && self.second.contains(&cj) {
            Some((i, j))
        } else if self.first.contains(&cj) && self.second.contains(&ci) {
            Some((j, i))
        } else {
            None
        }
    }
}

impl Default for ClassFilter {
    fn default() -> Self {
        ClassFilter::any()
    }
}

impl fmt::Display for ClassFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |s: &BTreeSet<TermClass>| s.iter().map(|c| c.as_str()).collect::<Vec<_>>().join("+");
        write!(f, "{}:{}", join(&self.first), join(&self.second))
    }
}

impl FromStr for ClassFilter {
    type Err = Error;

    /// `any`, or `drug+natural_product:symptom` style.
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("any") {
            return Ok(ClassFilter::any());
        }
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("class filter {s:?} needs the form first:second")))?;
        let parse = |side: &str| -> Result<BTreeSet<TermClass>> {
            if side.eq_ignore_ascii_case("any") {
                return Ok(TermClass::ALL.into());
            }
            side.split('+').map(|c| c.trim().parse()).collect()
        };
        Ok(ClassFilter {
            first: parse(a)?,
            second: parse(b)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectPair {
    pub term_i: String,
    pub term_j: String,
    pub class_i: TermClass,
    pub class_j: TermClass,
    pub proximity: f64,
}

/// The `k` strongest direct edges passing `filter`, by proximity descending
/// then lexicographic pair.
pub fn top_direct_pairs(graph: &ProximityGraph, filter: &ClassFilter, k: usize) -> Vec<DirectPair> {
    let terms = graph.terms();
    let mut pairs: Vec<DirectPair> = graph
        .edges()
        .filter_map(|e| {
            let (a, b) = filter.orient(terms, e.i, e.j)?;
            Some(DirectPair {
                term_i: terms[a].name.clone(),
                term_j: terms[b].name.clone(),
                class_i: terms[a].class,
                class_j: terms[b].class,
                proximity: e.weight,
            })
        })
        .collect();
    pairs.sort_by(|x, y| {
        y.proximity
            .total_cmp(&x.proximity)
            .then_with(|| (&x.term_i, &x.term_j).cmp(&(&y.term_i, &y.term_j)))
    });
    pairs.truncate(k);
    pairs
}

/// How pairs without a direct edge are scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode", content = "distance")]
pub enum SemimetricScoring {
    /// Pairs without a direct edge form a tier above every finite ratio,
    /// ordered by closed proximity.
    #[default]
    Tiered,
    /// A missing direct edge counts as this distance; one tier ranked by ratio.
    AbsentAs(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiMetricPair {
    pub term_i: String,
    pub term_j: String,
    pub class_i: TermClass,
    pub class_j: TermClass,
    pub d_direct: Option<f64>,
    pub d_closed: f64,
    /// `d_direct / d_closed`; `None` for the indirect tier. Infinite when a
    /// positive direct distance closes to zero.
    pub ratio: Option<f64>,
    pub p_closed: f64,
}

impl SemiMetricPair {
    pub fn is_indirect(&self) -> bool {
        self.ratio.is_none()
    }
}

fn ratio(direct: f64, closed: f64) -> f64 {
    if closed > 0.0 {
        direct / closed
    } else if direct > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

/// Ranks reachable pairs by how strongly they break transitivity.
pub fn rank_semimetric_pairs(
    direct: &DistanceGraph,
    closure: &ClosedDistanceGraph,
    filter: &ClassFilter,
    k: usize,
    scoring: SemimetricScoring,
) -> Result<Vec<SemiMetricPair>> {
    if direct.terms() != closure.terms() {
        return Err(Error::Config(
            "distance graph and closure are over different term sets".into(),
        ));
    }
    let terms = closure.terms();
    let mut pairs: Vec<SemiMetricPair> = closure
        .finite_pairs()
        .filter_map(|(i, j, d_closed)| {
            let (a, b) = filter.orient(terms, i, j)?;
            let d_direct = direct.distance(i, j);
            let ratio = match (d_direct, scoring) {
                (Some(d), _) => Some(ratio(d, d_closed)),
                (None, SemimetricScoring::Tiered) => None,
                (None, SemimetricScoring::AbsentAs(c)) => Some(ratio(c, d_closed)),
            };
            Some(SemiMetricPair {
                term_i: terms[a].name.clone(),
                term_j: terms[b].name.clone(),
                class_i: terms[a].class,
                class_j: terms[b].class,
                d_direct,
                d_closed,
                ratio,
                p_closed: distance_to_proximity(d_closed),
            })
        })
        .collect();

    pairs.sort_by(|x, y| {
        let key = match (x.ratio, y.ratio) {
            (None, None) => y.p_closed.total_cmp(&x.p_closed),
            (None, Some(_)) => Ordering::Less,
            (Some(_), None) => Ordering::Greater,
            (Some(rx), Some(ry)) => ry.total_cmp(&rx),
        };
        key.then_with(|| (&x.term_i, &x.term_j).cmp(&(&y.term_i, &y.term_j)))
    });
    pairs.truncate(k);
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn terms(names: &[(&str, TermClass)]) -> Vec<Term> {
        names
            .iter()
            .map(|(n, c)| Term {
                name: n.to_string(),
                class: *c,
            })
            .collect()
    }

    fn plain(n: usize) -> Vec<Term> {
        (0..n)
            .map(|i| Term {
                name: format!("t{i:03}"),
                class: TermClass::Drug,
            })
            .collect()
    }

    fn floyd_warshall(n: usize, edges: &[(usize, usize, f64)]) -> Vec<f64> {
        let mut d = vec![f64::INFINITY; n * n];
        for i in 0..n {
            d[i * n + i] = 0.0;
        }
        for &(i, j, w) in edges {
            d[i * n + j] = d[i * n + j].min(w);
            d[j * n + i] = d[j * n + i].min(w);
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[i * n + k] + d[k * n + j];
                    if via < d[i * n + j] {
                        d[i * n + j] = via;
                    }
                }
            }
        }
        d
    }

    #[test]
    fn metric_triangle_unchanged() {
        let g = DistanceGraph::from_edges(plain(3), Resolution::Week, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let c = metric_closure(&g);
        for (i, j, d) in c.finite_pairs() {
            assert_eq!(Some(d), g.distance(i, j));
        }
    }

    #[test]
    fn chain_sums_path() {
        let g = DistanceGraph::from_edges(plain(4), Resolution::Week, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let c = metric_closure(&g);
        assert_eq!(c.distance(0, 2), Some(2.0));
        assert_eq!(c.distance(0, 3), None);
        assert_eq!(c.distance(3, 3), Some(0.0));
        assert_eq!(c.components(), &[0, 0, 0, 1]);
        let p = proximity_closure(&c);
        assert_eq!(p.kind(), GraphKind::Closed);
        assert_eq!(p.proximity(0, 2), 1.0 / 3.0);
        assert_eq!(p.proximity(0, 3), 0.0);
    }

    #[test]
    fn semimetric_ranking_orders_by_ratio() {
        // a-b direct 10, a-c-b path 1; d-e direct 4, d-f-e path 2
        let t = plain(6);
        let g = DistanceGraph::from_edges(
            t,
            Resolution::Week,
            [
                (0, 1, 10.0),
                (0, 2, 0.5),
                (2, 1, 0.5),
                (3, 4, 4.0),
                (3, 5, 1.0),
                (5, 4, 1.0),
            ],
        )
        .unwrap();
        let c = metric_closure(&g);
        let ranked = rank_semimetric_pairs(&g, &c, &ClassFilter::any(), 10, SemimetricScoring::Tiered).unwrap();
        assert_eq!((ranked[0].term_i.as_str(), ranked[0].term_j.as_str()), ("t000", "t001"));
        assert_eq!(ranked[0].ratio, Some(10.0));
        assert_eq!(ranked[1].ratio, Some(2.0));
        assert!(ranked[2..].iter().all(|p| p.ratio == Some(1.0)));
    }

    #[test]
    fn absent_edges_form_indirect_tier() {
        let t = terms(&[
            ("a", TermClass::Drug),
            ("b", TermClass::NaturalProduct),
            ("c", TermClass::Symptom),
            ("x", TermClass::Drug),
            ("y", TermClass::Symptom),
        ]);
        let g = DistanceGraph::from_edges(
            t,
            Resolution::Week,
            [(0, 1, 1.0), (1, 2, 1.0), (3, 4, 9.0), (3, 1, 9.0)],
        )
        .unwrap();
        let c = metric_closure(&g);
        let ranked = rank_semimetric_pairs(&g, &c, &ClassFilter::any(), 100, SemimetricScoring::Tiered).unwrap();
        assert!(ranked[0].is_indirect());
        assert_eq!((ranked[0].term_i.as_str(), ranked[0].term_j.as_str()), ("a", "c"));
        assert_eq!(ranked[0].d_closed, 2.0);
        let first_direct = ranked.iter().position(|p| !p.is_indirect()).unwrap();
        assert!(ranked[..first_direct].iter().all(SemiMetricPair::is_indirect));
        assert!(ranked[first_direct..].iter().all(|p| !p.is_indirect()));

        let filtered = rank_semimetric_pairs(
            &g,
            &c,
            &ClassFilter::drug_np_vs_symptom(),
            100,
            SemimetricScoring::Tiered,
        )
        .unwrap();
        assert!(filtered
            .iter()
            .all(|p| p.class_j == TermClass::Symptom && p.class_i != TermClass::Symptom));

        let flat = rank_semimetric_pairs(&g, &c, &ClassFilter::any(), 100, SemimetricScoring::AbsentAs(1e3)).unwrap();
        assert!(flat.iter().all(|p| p.ratio.is_some()));
    }

    #[test]
    fn direct_pairs_respect_filter_and_k() {
        let t = terms(&[
            ("a", TermClass::Drug),
            ("b", TermClass::Symptom),
            ("c", TermClass::Drug),
        ]);
        let p = ProximityGraph::from_edges(
            t,
            Resolution::Week,
            GraphKind::Direct,
            10,
            [
                WeightedEdge {
                    i: 0,
                    j: 1,
                    weight: 0.3,
                    support: None,
                },
                WeightedEdge {
                    i: 0,
                    j: 2,
                    weight: 0.9,
                    support: None,
                },
            ],
        )
        .unwrap();
        let top = top_direct_pairs(&p, &ClassFilter::drug_np_vs_symptom(), 5);
        assert_eq!(top.len(), 1);
        assert_eq!((top[0].term_i.as_str(), top[0].term_j.as_str()), ("a", "b"));
        assert_eq!(top_direct_pairs(&p, &ClassFilter::any(), 1)[0].proximity, 0.9);
        assert!(top_direct_pairs(&p, &ClassFilter::any(), 0).is_empty());
        // symptom listed second even when it sorts first
        let f: ClassFilter = "symptom:drug".parse().unwrap();
        assert_eq!(top_direct_pairs(&p, &f, 5)[0].term_i, "b");
    }

    #[test]
    fn class_filter_parsing() {
        let f: ClassFilter = "drug+natural_product:symptom".parse().unwrap();
        assert_eq!(f, ClassFilter::drug_np_vs_symptom());
        assert_eq!(f.to_string(), "drug+natural_product:symptom");
        assert!("drug".parse::<ClassFilter>().is_err());
        assert!("drug:pill".parse::<ClassFilter>().is_err());
    }

    fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>)> {
        (2usize..30).prop_flat_map(|n| {
            let edge = (0..n, 0..n, 0.0f64..20.0).prop_filter("no loops", |(i, j, _)| i != j);
            (Just(n), prop::collection::vec(edge, 0..n * 3))
        })
    }

    proptest! {
        #[test]
        fn matches_floyd_warshall((n, edges) in arb_graph()) {
            let mut dedup = std::collections::BTreeMap::new();
            for &(i, j, w) in &edges {
                dedup.insert((i.min(j), i.max(j)), w);
            }
            let edges: Vec<_> = dedup.into_iter().map(|((i, j), w)| (i, j, w)).collect();
            let g = DistanceGraph::from_edges(plain(n), Resolution::Day, edges.iter().copied()).unwrap();
            let c = metric_closure(&g);
            let oracle = floyd_warshall(n, &edges);
            for i in 0..n {
                for j in 0..n {
                    let o = oracle[i * n + j];
                    match c.distance(i, j) {
                        Some(d) => prop_assert!((d - o).abs() <= 1e-9, "({i},{j}) {d} vs {o}"),
                        None => prop_assert!(o.is_infinite()),
                    }
                }
            }
            // idempotent
            let again = metric_closure(&c.as_distance_graph());
            for (i, j, d) in c.finite_pairs() {
                prop_assert!((again.distance(i, j).unwrap() - d).abs() <= 1e-9);
            }
        }
    }
}
