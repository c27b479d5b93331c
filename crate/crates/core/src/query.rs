//! Set queries over a proximity graph.
//!
//! For a query set `Q`, each other term `x` scores `Φ({p(x, q) : q ∈ Q})`
//! with `Φ` one of min, max or mean, and missing edges counting as zero.
//! Terms scoring at least `alpha` form the answer, strongest first.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Resolution;
use crate::error::{Error, Result};
use crate::lexicon::TermClass;
use crate::netgraph::{GraphKind, ProximityGraph};

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    Min,
    Max,
    Avg,
}

impl Aggregate {
    pub fn apply(self, values: impl IntoIterator<Item = f64>) -> f64 {
        let mut n = 0usize;
        let mut acc = match self {
            Aggregate::Min => f64::INFINITY,
            Aggregate::Max => f64::NEG_INFINITY,
            Aggregate::Avg => 0.0,
        };
        for v in values {
            n += 1;
            acc = match self {
                Aggregate::Min => acc.min(v),
                Aggregate::Max => acc.max(v),
                Aggregate::Avg => acc + v,
            };
        }
        match (self, n) {
            (_, 0) => 0.0,
            (Aggregate::Avg, n) => acc / n as f64,
            _ => acc,
        }
    }
}

impl fmt::Display for Aggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregate::Min => "min",
            Aggregate::Max => "max",
            Aggregate::Avg => "avg",
        })
    }
}

impl FromStr for Aggregate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "min" => Ok(Aggregate::Min),
            "max" => Ok(Aggregate::Max),
            "avg" | "mean" => Ok(Aggregate::Avg),
            other => Err(Error::Query(format!(
                "unknown operator {other:?} (expected min, max or avg)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub terms: Vec<String>,
    pub phi: Aggregate,
    pub alpha: f64,
    pub graph: GraphKind,
}

impl QuerySpec {
    pub fn new<S: Into<String>>(terms: impl IntoIterator<Item = S>, phi: Aggregate, alpha: f64) -> Self {
        QuerySpec {
            terms: terms.into_iter().map(Into::into).collect(),
            phi,
            alpha,
            graph: GraphKind::Direct,
        }
    }

    pub fn on(mut self, graph: GraphKind) -> Self {
        self.graph = graph;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub term: String,
    pub class: TermClass,
    pub score: f64,
}

/// Identifies the graph an answer set was computed on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub resolution: Resolution,
    pub kind: GraphKind,
    pub support_threshold: u64,
    pub n_terms: usize,
    pub n_edges: usize,
}

impl GraphMeta {
    pub fn of(graph: &ProximityGraph) -> Self {
        GraphMeta {
            resolution: graph.resolution(),
            kind: graph.kind(),
            support_threshold: graph.support_threshold(),
            n_terms: graph.len(),
            n_edges: graph.edge_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSet {
    pub answers: Vec<Answer>,
    pub graph_meta: GraphMeta,
}

/// Evaluates `spec` against `graph`, which must be of the kind the spec asks for.
pub fn run_query(graph: &ProximityGraph, spec: &QuerySpec) -> Result<AnswerSet> {
    if spec.terms.is_empty() {
        return Err(Error::Query("query needs at least one term".into()));
    }
    if !(0.0..=1.0).contains(&spec.alpha) {
        return Err(Error::Query(format!("alpha {} outside [0, 1]", spec.alpha)));
    }
    if graph.kind() != spec.graph {
        return Err(Error::Query(format!(
            "query targets the {} graph but a {} graph was supplied",
            spec.graph.as_str(),
            graph.kind().as_str()
        )));
    }
    let mut query: Vec<usize> = spec
        .terms
        .iter()
        .map(|t| graph.require(t.trim()))
        .collect::<Result<_>>()?;
    query.sort_unstable();
    query.dedup();

    let n = graph.len();
    // column of proximities to each query term
    let mut weights = vec![vec![0.0; query.len()]; n];
    for (qi, &q) in query.iter().enumerate() {
        for &(x, p) in graph.neighbors(q) {
            weights[x as usize][qi] = p;
        }
    }

    let terms = graph.terms();
    let mut answers: Vec<Answer> = (0..n)
        .filter(|x| query.binary_search(x).is_err())
        .filter_map(|x| {
            let score = spec.phi.apply(weights[x].iter().copied());
            (score >= spec.alpha).then(|| Answer {
                term: terms[x].name.clone(),
                class: terms[x].class,
                score,
            })
        })
        .collect();
    answers.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.term.cmp(&b.term)));
    Ok(AnswerSet {
        answers,
        graph_meta: GraphMeta::of(graph),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cooccur::Term;
    use crate::netgraph::WeightedEdge;

    fn graph() -> ProximityGraph {
        let names = ["anorexia", "anxiety", "fluoxetine", "isolated", "pain"];
        let terms = names
            .iter()
            .map(|n| Term {
                name: n.to_string(),
                class: TermClass::Symptom,
            })
            .collect();
        let e = |i, j, w| WeightedEdge {
            i,
            j,
            weight: w,
            support: None,
        };
        ProximityGraph::from_edges(
            terms,
            Resolution::Week,
            GraphKind::Direct,
            10,
            [e(0, 1, 0.4), e(0, 4, 0.1), e(2, 1, 0.3), e(2, 4, 0.2), e(0, 2, 0.5)],
        )
        .unwrap()
    }

    #[test]
    fn single_term_lists_neighbours() {
        let g = graph();
        for phi in [Aggregate::Min, Aggregate::Max, Aggregate::Avg] {
            let a = run_query(&g, &QuerySpec::new(["fluoxetine"], phi, 0.25)).unwrap();
            let got: Vec<_> = a.answers.iter().map(|x| (x.term.as_str(), x.score)).collect();
            assert_eq!(got, [("anorexia", 0.5), ("anxiety", 0.3)]);
        }
    }

    #[test]
    fn min_requires_every_query_term() {
        let g = graph();
        let a = run_query(&g, &QuerySpec::new(["fluoxetine", "anorexia"], Aggregate::Min, 0.05)).unwrap();
        let got: Vec<_> = a.answers.iter().map(|x| x.term.as_str()).collect();
        assert_eq!(got, ["anxiety", "pain"]);
        assert_eq!(a.answers[0].score, 0.3);

        let a = run_query(&g, &QuerySpec::new(["fluoxetine", "isolated"], Aggregate::Min, 0.01)).unwrap();
        assert!(a.answers.is_empty());
    }

    #[test]
    fn avg_and_max() {
        let g = graph();
        let a = run_query(&g, &QuerySpec::new(["fluoxetine", "anorexia"], Aggregate::Avg, 0.0)).unwrap();
        assert_eq!(a.answers[0].term, "anxiety");
        assert!((a.answers[0].score - 0.35).abs() < 1e-15);
        // alpha 0 admits zero scores
        assert_eq!(a.answers.last().unwrap().term, "isolated");
        let a = run_query(&g, &QuerySpec::new(["fluoxetine", "anorexia"], Aggregate::Max, 0.2)).unwrap();
        let got: Vec<_> = a.answers.iter().map(|x| x.term.as_str()).collect();
        assert_eq!(got, ["anxiety", "pain"]);
    }

    #[test]
    fn validation_errors() {
        let g = graph();
        let empty: [&str; 0] = [];
        assert!(run_query(&g, &QuerySpec::new(empty, Aggregate::Min, 0.1)).is_err());
        let err = run_query(&g, &QuerySpec::new(["zoloft"], Aggregate::Min, 0.1)).unwrap_err();
        assert!(err.to_string().contains("zoloft"));
        assert!(run_query(&g, &QuerySpec::new(["pain"], Aggregate::Min, 1.5)).is_err());
        assert!(run_query(&g, &QuerySpec::new(["pain"], Aggregate::Min, 0.1).on(GraphKind::Closed)).is_err());
    }

    #[test]
    fn operator_parsing() {
        assert_eq!("MIN".parse::<Aggregate>().unwrap(), Aggregate::Min);
        assert_eq!("avg".parse::<Aggregate>().unwrap(), Aggregate::Avg);
        assert!("median".parse::<Aggregate>().is_err());
    }
}
