//! Principal component analysis of the proximity adjacency matrix.
//!
//! Rows are terms as observations, columns are terms as variables. Columns
//! are mean-centred (no scaling) and the covariance `XᵀX / (n - 1)` is
//! eigendecomposed. Each eigenvector is signed so its largest-magnitude
//! loading is positive.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::cooccur::Term;
use crate::error::{Error, Result};
use crate::netgraph::ProximityGraph;

pub const DEFAULT_CORRELATION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    pub terms: Vec<Term>,
    /// Full spectrum, non-increasing.
    pub eigenvalues: Vec<f64>,
    /// Retained eigenvectors, one `Vec` of length `n` per component.
    pub loadings: Vec<Vec<f64>>,
    /// Per component, each term's coordinate.
    pub scores: Vec<Vec<f64>>,
    /// `correlations[term][component]`: Pearson correlation of the term's
    /// adjacency column with the component scores.
    pub correlations: Vec<Vec<f64>>,
    pub total_variance: f64,
    column_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermComponents {
    pub term: String,
    pub class: crate::lexicon::TermClass,
    pub scores: Vec<f64>,
    pub correlations: Vec<f64>,
}

/// JSON form of a PCA run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaReport {
    pub n_components: usize,
    pub total_variance: f64,
    pub eigenvalues: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub terms: Vec<TermComponents>,
}

impl PcaResult {
    pub fn n_components(&self) -> usize {
        self.loadings.len()
    }

    /// Rebuilds the centred matrix from the retained components (row-major).
    pub fn reconstruct_centered(&self) -> Vec<f64> {
        let n = self.column_means.len();
        let mut out = vec![0.0; n * n];
        for (scores, loading) in self.scores.iter().zip(&self.loadings) {
            for r in 0..n {
                for c in 0..n {
                    out[r * n + c] += scores[r] * loading[c];
                }
            }
        }
        out
    }

    pub fn column_means(&self) -> &[f64] {
        &self.column_means
    }

    pub fn report(&self) -> PcaReport {
        let total = self.total_variance;
        PcaReport {
            n_components: self.n_components(),
            total_variance: total,
            eigenvalues: self.eigenvalues.clone(),
            explained_variance_ratio: self
                .eigenvalues
                .iter()
                .map(|v| if total > 0.0 { v / total } else { 0.0 })
                .collect(),
            terms: self
                .terms
                .iter()
                .enumerate()
                .map(|(i, t)| TermComponents {
                    term: t.name.clone(),
                    class: t.class,
                    scores: self.scores.iter().map(|s| s[i]).collect(),
                    correlations: self.correlations[i].clone(),
                })
                .collect(),
        }
    }
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 1e-24 || syy <= 1e-24 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// PCA of the graph's dense adjacency (unit diagonal).
pub fn pca(graph: &ProximityGraph, n_components: usize) -> Result<PcaResult> {
    if graph.len() < 2 {
        return Err(Error::Pca(format!("need at least 2 terms, graph has {}", graph.len())));
    }
    let n = graph.len();
    let mut result = pca_dense(&graph.dense(), n, n_components)?;
    result.terms = graph.terms().to_vec();
    Ok(result)
}

/// PCA of a square row-major matrix; terms are left empty.
pub fn pca_dense(matrix: &[f64], n: usize, n_components: usize) -> Result<PcaResult> {
    if n_components == 0 {
        return Err(Error::Pca("n_components must be positive".into()));
    }
    if n_components > n {
        return Err(Error::Pca(format!("n_components {n_components} exceeds {n} terms")));
    }
    if n < 2 || matrix.len() != n * n {
        return Err(Error::Pca(format!(
            "expected a square matrix of side >= 2, got {} values",
            matrix.len()
        )));
    }

    let mut x = DMatrix::from_row_slice(n, n, matrix);
    let column_means: Vec<f64> = (0..n).map(|c| x.column(c).mean()).collect();
    for (c, mean) in column_means.iter().enumerate() {
        x.column_mut(c).add_scalar_mut(-mean);
    }
    let mut cov = x.transpose() * &x / (n as f64 - 1.0);
    // symmetrize away rounding noise
    cov = (&cov + cov.transpose()) * 0.5;
    let total_variance = cov.trace();

    let max_iter = 1000 * n;
    let eig = SymmetricEigen::try_new(cov, f64::EPSILON, max_iter).ok_or_else(|| {
        Error::Pca(format!(
            "eigendecomposition did not converge within {max_iter} iterations (n = {n}, trace = {total_variance:e})"
        ))
    })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();

    let mut loadings = Vec::with_capacity(n_components);
    let mut scores = Vec::with_capacity(n_components);
    for &idx in order.iter().take(n_components) {
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let pivot = v
            .iter()
            .enumerate()
            .fold(0, |best, (i, a)| if a.abs() > v[best].abs() { i } else { best });
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|a| *a = -*a);
        }
        let s = &x * DMatrix::from_column_slice(n, 1, &v);
        scores.push(s.iter().copied().collect::<Vec<f64>>());
        loadings.push(v);
    }

    let columns: Vec<Vec<f64>> = (0..n).map(|c| (0..n).map(|r| matrix[r * n + c]).collect()).collect();
    let correlations = columns
        .iter()
        .map(|col| scores.iter().map(|s| pearson(col, s)).collect())
        .collect();

    Ok(PcaResult {
        terms: Vec::new(),
        eigenvalues,
        loadings,
        scores,
        correlations,
        total_variance,
        column_means,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatedTerm {
    pub term: String,
    pub correlation: f64,
}

/// Terms with correlation `>= threshold` and `<= -threshold` on `component`
/// (0-based), each list ordered by decreasing magnitude then name.
pub fn component_terms(
    result: &PcaResult,
    component: usize,
    threshold: f64,
) -> Result<(Vec<CorrelatedTerm>, Vec<CorrelatedTerm>)> {
    split_by_correlation(
        result.terms.iter().map(|t| t.name.as_str()).zip(&result.correlations),
        result.n_components(),
        component,
        threshold,
    )
}

impl PcaReport {
    /// As [`component_terms`], from a stored report.
    pub fn component_terms(
        &self,
        component: usize,
        threshold: f64,
    ) -> Result<(Vec<CorrelatedTerm>, Vec<CorrelatedTerm>)> {
        split_by_correlation(
            self.terms.iter().map(|t| (t.term.as_str(), &t.correlations)),
            self.n_components,
            component,
            threshold,
        )
    }
}

fn split_by_correlation<'a>(
    rows: impl Iterator<Item = (&'a str, &'a Vec<f64>)>,
    n_components: usize,
    component: usize,
    threshold: f64,
) -> Result<(Vec<CorrelatedTerm>, Vec<CorrelatedTerm>)> {
    if component >= n_components {
        return Err(Error::Pca(format!(
            "component {component} out of range (retained {n_components})"
        )));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Pca(format!("threshold {threshold} outside (0, 1]")));
    }
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (name, corr) in rows {
        let c = corr[component];
        let entry = CorrelatedTerm {
            term: name.to_string(),
            correlation: c,
        };
        if c >= threshold {
            pos.push(entry);
        } else if c <= -threshold {
            neg.push(entry);
        }
    }
    let by_mag = |a: &CorrelatedTerm, b: &CorrelatedTerm| {
        b.correlation
            .abs()
            .total_cmp(&a.correlation.abs())
            .then_with(|| a.term.cmp(&b.term))
    };
    pos.sort_by(by_mag);
    neg.sort_by(by_mag);
    Ok((pos, neg))
}

/// Induced subgraph on `terms` keeping edges with `p >= min_weight`.
pub fn component_subgraph<S: AsRef<str>>(
    graph: &ProximityGraph,
    terms: &[S],
    min_weight: f64,
) -> Result<ProximityGraph> {
    graph.subgraph(terms, min_weight)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Resolution;
    use crate::lexicon::TermClass;
    use crate::netgraph::{GraphKind, WeightedEdge};

    fn cliques(a: usize, b: usize) -> ProximityGraph {
        let terms: Vec<Term> = (0..a + b)
            .map(|i| Term {
                name: format!("t{i:02}"),
                class: TermClass::Symptom,
            })
            .collect();
        let mut edges = Vec::new();
        for i in 0..a + b {
            for j in i + 1..a + b {
                if (i < a) == (j < a) {
                    edges.push(WeightedEdge {
                        i,
                        j,
                        weight: 1.0,
                        support: None,
                    });
                }
            }
        }
        ProximityGraph::from_edges(terms, Resolution::Week, GraphKind::Direct, 10, edges).unwrap()
    }

    #[test]
    fn identical_rows_have_no_variance() {
        let g = cliques(5, 0);
        let r = pca(&g, 2).unwrap();
        assert!(r.eigenvalues[0].abs() < 1e-12);
        assert!(r.total_variance.abs() < 1e-12);
    }

    #[test]
    fn two_cliques_are_rank_one() {
        let r = pca(&cliques(4, 3), 3).unwrap();
        let above = r.eigenvalues.iter().filter(|&&v| v > 1e-9).count();
        assert_eq!(above, 1);
        assert!(r.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn blocks_split_by_correlation_sign() {
        let r = pca(&cliques(4, 3), 1).unwrap();
        let (pos, neg) = component_terms(&r, 0, 0.5).unwrap();
        let mut names: Vec<Vec<&str>> = [&pos, &neg]
            .iter()
            .map(|l| l.iter().map(|t| t.term.as_str()).collect())
            .collect();
        names.sort();
        assert_eq!(names, vec![vec!["t00", "t01", "t02", "t03"], vec!["t04", "t05", "t06"]]);
        assert!(pos.iter().chain(&neg).all(|t| (t.correlation.abs() - 1.0).abs() < 1e-9));
    }

    #[test]
    fn argument_errors() {
        let g = cliques(3, 3);
        assert!(pca(&g, 0).is_err());
        assert!(pca(&g, 7).is_err());
        assert!(pca(&cliques(1, 0), 1).is_err());
        let r = pca(&g, 2).unwrap();
        assert!(component_terms(&r, 2, 0.5).is_err());
        assert!(component_terms(&r, 0, 0.0).is_err());
        assert!(component_terms(&r, 0, 1.0).is_ok());
    }

    #[test]
    fn deterministic_signs() {
        let g = cliques(4, 3);
        let a = pca(&g, 3).unwrap();
        let b = pca(&g, 3).unwrap();
        assert_eq!(a, b);
        for v in &a.loadings {
            let max = v.iter().fold(0.0f64, |m, x| if x.abs() > m.abs() { *x } else { m });
            assert!(max > 0.0);
        }
    }

    #[test]
    fn subgraph_threshold() {
        let g = cliques(3, 2);
        let s = component_subgraph(&g, &["t00", "t01", "t03"], 0.0).unwrap();
        assert_eq!(s.edge_count(), 1);
        let s = component_subgraph(&g, &["t00", "t01"], 1.5).unwrap();
        assert_eq!(s.edge_count(), 0);
        assert!(component_subgraph(&g, &["missing"], 0.0).is_err());
    }
}
