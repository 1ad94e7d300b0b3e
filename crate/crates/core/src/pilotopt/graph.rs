//! Conflict graphs over clusters and their text format.
//!
//! The text format is DIMACS-like:
//!
//! ```text
//! c cells 2 clusters 3
//! p edge 6 4
//! e 1 2
//! ```
//!
//! Vertices are 1-based in the file. The `c cells L clusters C` comment is
//! optional and records the cluster layout.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::pilotopt::interference::InterferenceMatrix;

/// Simple undirected graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    adj: Vec<Vec<bool>>,
    edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            adj: vec![vec![false; n]; n],
            edges: BTreeSet::new(),
        }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Self::new(n);
        for (u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<()> {
        if u >= self.n || v >= self.n {
            return Err(Error::domain(format!("edge ({u}, {v}) outside {} vertices", self.n)));
        }
        if u == v {
            return Err(Error::domain(format!("self-loop at vertex {u}")));
        }
        self.adj[u][v] = true;
        self.adj[v][u] = true;
        self.edges.insert((u.min(v), u.max(v)));
        Ok(())
    }

    pub fn vertices(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u][v]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].iter().filter(|&&b| b).count()
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[v].iter().enumerate().filter(|(_, &b)| b).map(|(u, _)| u)
    }

    /// True if no edge joins two vertices of the same color.
    pub fn is_proper(&self, colors: &[usize]) -> bool {
        colors.len() == self.n && self.edges().all(|(u, v)| colors[u] != colors[v])
    }
}

/// Conflict graph induced by an interference threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceGraph {
    pub graph: Graph,
    pub threshold: f64,
    pub cells: usize,
    pub clusters: usize,
}

/// Edges where `max(I[a][b], I[b][a]) > threshold`, plus every pair of
/// clusters in the same cell (they always need distinct pilots).
pub fn build_graph(im: &InterferenceMatrix, threshold: f64) -> Result<InterferenceGraph> {
    if !(threshold >= 0.0) {
        return Err(Error::domain(format!("threshold {threshold} must be non-negative")));
    }
    let n = im.nodes();
    let mut graph = Graph::new(n);
    for a in 0..n {
        for b in a + 1..n {
            if im.same_cell(a, b) || im.get(a, b).max(im.get(b, a)) > threshold {
                graph.add_edge(a, b)?;
            }
        }
    }
    Ok(InterferenceGraph {
        graph,
        threshold,
        cells: im.cells,
        clusters: im.clusters,
    })
}

pub fn write_dimacs<W: Write>(mut out: W, graph: &Graph, layout: Option<(usize, usize)>) -> Result<()> {
    if let Some((cells, clusters)) = layout {
        writeln!(out, "c cells {cells} clusters {clusters}")?;
    }
    writeln!(out, "p edge {} {}", graph.vertices(), graph.edge_count())?;
    for (u, v) in graph.edges() {
        writeln!(out, "e {} {}", u + 1, v + 1)?;
    }
    Ok(())
}

/// A graph read from text, with the cluster layout if the file names one.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphFile {
    pub graph: Graph,
    pub layout: Option<(usize, usize)>,
}

pub fn read_dimacs<R: BufRead>(input: R) -> Result<GraphFile> {
    let mut graph: Option<Graph> = None;
    let mut declared = 0;
    let mut layout = None;
    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        let num = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::parse(lineno, format!("`{s}` is not a non-negative integer")))
        };
        match toks.as_slice() {
            [] => {}
            ["c", "cells", l, "clusters", c] => layout = Some((num(l)?, num(c)?)),
            ["c", ..] => {}
            ["p", "edge", n, m] => {
                if graph.is_some() {
                    return Err(Error::parse(lineno, "duplicate problem line"));
                }
                graph = Some(Graph::new(num(n)?));
                declared = num(m)?;
            }
            ["e", u, v] => {
                let g = graph
                    .as_mut()
                    .ok_or_else(|| Error::parse(lineno, "edge before the problem line"))?;
                let (u, v) = (num(u)?, num(v)?);
                if u == 0 || v == 0 {
                    return Err(Error::parse(lineno, "vertices are numbered from 1"));
                }
                g.add_edge(u - 1, v - 1).map_err(|e| Error::parse(lineno, e.to_string()))?;
            }
            _ => return Err(Error::parse(lineno, format!("unrecognized line `{line}`"))),
        }
    }
    let graph = graph.ok_or_else(|| Error::parse(0, "missing `p edge` line"))?;
    if graph.edge_count() != declared {
        log::warn!(
            "graph declares {declared} edges but lists {} distinct ones",
            graph.edge_count()
        );
    }
    if let Some((l, c)) = layout {
        if l * c != graph.vertices() {
            return Err(Error::parse(0, format!("layout {l} x {c} does not match {} vertices", graph.vertices())));
        }
    }
    Ok(GraphFile { graph, layout })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(seed: u64, cells: usize, clusters: usize) -> InterferenceMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = cells * clusters;
        let v = (0..n * n).map(|_| rng.random_range(0.0..2.0)).collect();
        InterferenceMatrix::from_values(cells, clusters, v).unwrap()
    }

    #[test]
    fn high_threshold_leaves_cliques() {
        let im = random_matrix(1, 3, 3);
        let g = build_graph(&im, 10.0).unwrap();
        assert_eq!(g.graph.edge_count(), 3 * 3);
        for (u, v) in g.graph.edges() {
            assert!(im.same_cell(u, v));
        }
    }

    #[test]
    fn zero_threshold_connects_positive_pairs() {
        let im = random_matrix(2, 3, 2);
        let g = build_graph(&im, 0.0).unwrap();
        assert_eq!(g.graph.edge_count(), 6 * 5 / 2);
        assert!(build_graph(&im, -1.0).is_err());
    }

    #[test]
    fn median_threshold_edge_count() {
        let im = random_matrix(3, 4, 3);
        let n = im.nodes();
        let mut sym = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if !im.same_cell(a, b) {
                    sym.push(im.get(a, b).max(im.get(b, a)));
                }
            }
        }
        let mut sorted = sym.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        let above = sym.iter().filter(|&&v| v > median).count();
        let g = build_graph(&im, median).unwrap();
        assert_eq!(g.graph.edge_count(), above + 4 * 3);
    }

    #[test]
    fn dimacs_round_trip() {
        let im = random_matrix(4, 3, 2);
        let g = build_graph(&im, 1.0).unwrap();
        let mut buf = Vec::new();
        write_dimacs(&mut buf, &g.graph, Some((3, 2))).unwrap();
        let back = read_dimacs(buf.as_slice()).unwrap();
        assert_eq!(back.graph, g.graph);
        assert_eq!(back.layout, Some((3, 2)));
    }

    #[test]
    fn dimacs_errors_carry_line_numbers() {
        let err = read_dimacs("p edge 3 1\ne 1 x\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = read_dimacs("e 1 2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = read_dimacs("p edge 3 1\ne 1 4\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(read_dimacs("c nothing\n".as_bytes()).is_err());
        assert!(read_dimacs("c cells 2 clusters 2\np edge 3 0\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn raising_threshold_shrinks_edge_set(seed in 0u64..10_000, t1 in 0.0f64..2.0, dt in 0.0f64..1.0) {
            let im = random_matrix(seed, 3, 3);
            let lo = build_graph(&im, t1).unwrap();
            let hi = build_graph(&im, t1 + dt).unwrap();
            prop_assert!(hi.graph.edges().all(|(u, v)| lo.graph.has_edge(u, v)));
        }
    }
}
