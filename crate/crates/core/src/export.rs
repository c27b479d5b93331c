//! Text serializations of graphs, closures and rankings.
//!
//! Edge lists and rankings round weights to six decimals. The closure TSV
//! keeps full precision so it reads back exactly.

use std::io::{BufRead, Write};

use crate::closure::{ClosedDistanceGraph, DirectPair, SemiMetricPair};
use crate::cooccur::Term;
use crate::corpus::Resolution;
use crate::error::{Error, Result};
use crate::netgraph::{proximity_to_distance, ProximityGraph};

fn fixed(x: f64) -> String {
    if x.is_infinite() {
        "inf".to_string()
    } else {
        format!("{x:.6}")
    }
}

/// `term_i  term_j  p  d` for every edge, `i < j` in term order.
pub fn write_edge_list(graph: &ProximityGraph, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "term_i\tterm_j\tp\td")?;
    let terms = graph.terms();
    for e in graph.edges() {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            terms[e.i].name,
            terms[e.j].name,
            fixed(e.weight),
            fixed(proximity_to_distance(e.weight))
        )?;
    }
    out.flush()
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// GraphML with node class and edge `p`, `d` and support counts.
pub fn write_graphml(graph: &ProximityGraph, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    writeln!(out, r#"<graphml xmlns="http://graphml.graphdrawing.org/xmlns">"#)?;
    writeln!(
        out,
        r#"  <key id="label" for="node" attr.name="label" attr.type="string"/>"#
    )?;
    writeln!(
        out,
        r#"  <key id="class" for="node" attr.name="class" attr.type="string"/>"#
    )?;
    writeln!(out, r#"  <key id="p" for="edge" attr.name="p" attr.type="double"/>"#)?;
    writeln!(out, r#"  <key id="d" for="edge" attr.name="d" attr.type="double"/>"#)?;
    writeln!(
        out,
        r#"  <key id="support" for="edge" attr.name="support" attr.type="long"/>"#
    )?;
    writeln!(
        out,
        r#"  <key id="union" for="edge" attr.name="union" attr.type="long"/>"#
    )?;
    writeln!(
        out,
        r#"  <graph id="{}-{}" edgedefault="undirected">"#,
        graph.kind().as_str(),
        graph.resolution()
    )?;
    let terms = graph.terms();
    for (i, t) in terms.iter().enumerate() {
        writeln!(
            out,
            r#"    <node id="n{i}"><data key="label">{}</data><data key="class">{}</data></node>"#,
            xml_escape(&t.name),
            t.class
        )?;
    }
    for e in graph.edges() {
        write!(
            out,
            r#"    <edge source="n{}" target="n{}"><data key="p">{}</data><data key="d">{}</data>"#,
            e.i,
            e.j,
            fixed(e.weight),
            fixed(proximity_to_distance(e.weight))
        )?;
        if let Some(s) = e.support {
            write!(
                out,
                r#"<data key="support">{}</data><data key="union">{}</data>"#,
                s.cooccurrences, s.union
            )?;
        }
        writeln!(out, "</edge>")?;
    }
    writeln!(out, "  </graph>")?;
    writeln!(out, "</graphml>")?;
    out.flush()
}

/// Header of terms, then `term_i  term_j  d_closed` for each reachable pair.
pub fn write_closure_tsv(closure: &ClosedDistanceGraph, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "#resolution\t{}", closure.resolution())?;
    writeln!(out, "#support\t{}", closure.support_threshold())?;
    for t in closure.terms() {
        writeln!(out, "#term\t{}\t{}", t.name, t.class)?;
    }
    let terms = closure.terms();
    for (i, j, d) in closure.finite_pairs() {
        writeln!(out, "{}\t{}\t{}", terms[i].name, terms[j].name, d)?;
    }
    out.flush()
}

pub fn read_closure_tsv(input: impl BufRead) -> Result<ClosedDistanceGraph> {
    let bad = |line: usize, msg: &str| Error::artifact("closure TSV", format!("line {line}: {msg}"));
    let mut resolution: Option<Resolution> = None;
    let mut support = None;
    let mut terms: Vec<Term> = Vec::new();
    let mut rows = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::artifact("closure TSV", e.to_string()))?;
        let n = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.as_slice() {
            ["#resolution", r] => resolution = Some(r.parse()?),
            ["#support", s] => support = Some(s.parse::<u64>().map_err(|_| bad(n, "bad support"))?),
            ["#term", name, class] => terms.push(Term {
                name: name.to_string(),
                class: class.parse()?,
            }),
            [a, b, d] => {
                let d: f64 = d.parse().map_err(|_| bad(n, "bad distance"))?;
                if !(d >= 0.0 && d.is_finite()) {
                    return Err(bad(n, "distance must be finite and non-negative"));
                }
                rows.push((a.to_string(), b.to_string(), d, n));
            }
            [""] => {}
            _ => return Err(bad(n, "unexpected field count")),
        }
    }
    let n = terms.len();
    let mut dist = vec![f64::INFINITY; n * n];
    for i in 0..n {
        dist[i * n + i] = 0.0;
    }
    let index = |name: &str| terms.binary_search_by(|t| t.name.as_str().cmp(name)).ok();
    for (a, b, d, line) in rows {
        let (i, j) = match (index(&a), index(&b)) {
            (Some(i), Some(j)) if i != j => (i, j),
            _ => return Err(bad(line, "unknown term or self pair")),
        };
        dist[i * n + j] = d;
        dist[j * n + i] = d;
    }
    ClosedDistanceGraph::from_dense(
        terms,
        resolution.ok_or_else(|| bad(0, "missing #resolution header"))?,
        support.ok_or_else(|| bad(0, "missing #support header"))?,
        dist,
    )
}

pub fn write_direct_pairs(pairs: &[DirectPair], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "term_i\tterm_j\tclass_i\tclass_j\tp")?;
    for p in pairs {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            p.term_i,
            p.term_j,
            p.class_i,
            p.class_j,
            fixed(p.proximity)
        )?;
    }
    out.flush()
}

/// Absent direct distances print as `inf`; the indirect tier's ratio as `INDIRECT`.
pub fn write_semimetric_pairs(pairs: &[SemiMetricPair], mut out: impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "term_i\tterm_j\tclass_i\tclass_j\td_direct\td_closed\tratio\tp_closed"
    )?;
    for p in pairs {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            p.term_i,
            p.term_j,
            p.class_i,
            p.class_j,
            p.d_direct.map_or_else(|| "inf".to_string(), fixed),
            fixed(p.d_closed),
            p.ratio.map_or_else(|| "INDIRECT".to_string(), fixed),
            fixed(p.p_closed)
        )?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closure::{metric_closure, rank_semimetric_pairs, ClassFilter, SemimetricScoring};
    use crate::lexicon::TermClass;
    use crate::netgraph::{distance_from_proximity, GraphKind, Support, WeightedEdge};

    fn graph() -> ProximityGraph {
        let terms = ["a&b", "c", "d", "e"]
            .iter()
            .map(|n| Term {
                name: n.to_string(),
                class: TermClass::Drug,
            })
            .collect();
        let edges = [
            WeightedEdge {
                i: 0,
                j: 1,
                weight: 0.5,
                support: Some(Support {
                    cooccurrences: 10,
                    union: 20,
                }),
            },
            WeightedEdge {
                i: 1,
                j: 2,
                weight: 1.0 / 3.0,
                support: None,
            },
            WeightedEdge {
                i: 0,
                j: 2,
                weight: 0.1,
                support: None,
            },
        ];
        ProximityGraph::from_edges(terms, Resolution::Day, GraphKind::Direct, 10, edges).unwrap()
    }

    fn text(f: impl FnOnce(&mut Vec<u8>)) -> String {
        let mut buf = Vec::new();
        f(&mut buf);
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn edge_list_rounds_to_six_places() {
        let s = text(|b| write_edge_list(&graph(), b).unwrap());
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "term_i\tterm_j\tp\td");
        assert_eq!(lines[1], "a&b\tc\t0.500000\t1.000000");
        assert_eq!(lines[2], "a&b\td\t0.100000\t9.000000");
        assert_eq!(lines[3], "c\td\t0.333333\t2.000000");
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn graphml_escapes_and_carries_support() {
        let s = text(|b| write_graphml(&graph(), b).unwrap());
        assert!(s.contains("a&amp;b"));
        assert!(s.contains(r#"<data key="support">10</data><data key="union">20</data>"#));
        assert_eq!(s.matches("<node ").count(), 4);
        assert_eq!(s.matches("<edge ").count(), 3);
    }

    #[test]
    fn closure_round_trips_exactly() {
        let closure = metric_closure(&distance_from_proximity(&graph()));
        let s = text(|b| write_closure_tsv(&closure, b).unwrap());
        let back = read_closure_tsv(s.as_bytes()).unwrap();
        assert_eq!(back, closure);
        // the isolated term stays unreachable
        assert_eq!(back.distance(0, 3), None);
    }

    #[test]
    fn closure_reader_rejects_garbage() {
        assert!(read_closure_tsv("#term\ta\tdrug\n".as_bytes()).is_err());
        let s = "#resolution\tday\n#support\t10\n#term\ta\tdrug\n#term\tb\tdrug\na\tz\t1\n";
        assert!(read_closure_tsv(s.as_bytes()).is_err());
        let s = "#resolution\tday\n#support\t10\n#term\ta\tdrug\n#term\tb\tdrug\na\tb\t-1\n";
        assert!(read_closure_tsv(s.as_bytes()).is_err());
    }

    #[test]
    fn semimetric_rows_mark_indirect_tier() {
        let g = graph();
        let d = distance_from_proximity(&g);
        let c = metric_closure(&d);
        let pairs = rank_semimetric_pairs(&d, &c, &ClassFilter::any(), 10, SemimetricScoring::Tiered).unwrap();
        let s = text(|b| write_semimetric_pairs(&pairs, b).unwrap());
        let lines: Vec<&str> = s.lines().collect();
        // a&b-d: direct 9 vs path 1 + 2 = 3
        assert_eq!(lines[1], "a&b\td\tdrug\tdrug\t9.000000\t3.000000\t3.000000\t0.250000");
        assert_eq!(lines.len(), 4);

        let mut gapped = pairs.clone();
        gapped[0].d_direct = None;
        gapped[0].ratio = None;
        let s = text(|b| write_semimetric_pairs(&gapped, b).unwrap());
        assert!(s.lines().nth(1).unwrap().contains("\tinf\t3.000000\tINDIRECT\t"));
    }
}
