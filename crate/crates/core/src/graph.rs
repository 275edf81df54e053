use std::collections::BTreeSet;
use std::io::{Read, Write};

use rand::Rng;

use crate::attributes::csv_err;
use crate::error::{PanError, Result};
use crate::linalg::Matrix;
use crate::rng::{rng_from_seed, PanRng};
use crate::scalar::Scalar;

/// Undirected similarity graph. Edges are stored once as `(lo, hi)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SimilarityGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl SimilarityGraph {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            edges: BTreeSet::new(),
        }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Self::empty(n);
        for (i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    /// Complete graph over `nodes`; every other node stays isolated.
    pub fn clique(n: usize, nodes: &[usize]) -> Result<Self> {
        let mut g = Self::empty(n);
        for (a, &i) in nodes.iter().enumerate() {
            for &j in &nodes[a + 1..] {
                if i != j {
                    g.add_edge(i, j)?;
                }
            }
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<bool> {
        for idx in [i, j] {
            if idx >= self.n {
                return Err(PanError::Index { index: idx, len: self.n });
            }
        }
        if i == j {
            return Err(PanError::contract(format!("self-edge on node {i}")));
        }
        Ok(self.edges.insert((i.min(j), i.max(j))))
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn edges(&self) -> impl ExactSizeIterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == i || b == i).count()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    /// Number of unordered non-adjacent node pairs.
    pub fn non_edge_count(&self) -> usize {
        self.n * self.n.saturating_sub(1) / 2 - self.edges.len()
    }

    /// Subgraph over `nodes`, relabelled `0..nodes.len()` in the given order.
    pub fn induced(&self, nodes: &[usize]) -> Result<SimilarityGraph> {
        let mut local = vec![usize::MAX; self.n];
        for (k, &i) in nodes.iter().enumerate() {
            if i >= self.n {
                return Err(PanError::Index { index: i, len: self.n });
            }
            local[i] = k;
        }
        let mut g = SimilarityGraph::empty(nodes.len());
        for &(a, b) in &self.edges {
            if local[a] != usize::MAX && local[b] != usize::MAX {
                g.add_edge(local[a], local[b])?;
            }
        }
        Ok(g)
    }

    /// Same node set, keeping only edges with both endpoints in `nodes`.
    pub fn restricted_to(&self, nodes: &[usize]) -> SimilarityGraph {
        let mut keep = vec![false; self.n];
        for &i in nodes {
            if i < self.n {
                keep[i] = true;
            }
        }
        SimilarityGraph {
            n: self.n,
            edges: self
                .edges
                .iter()
                .copied()
                .filter(|&(a, b)| keep[a] && keep[b])
                .collect(),
        }
    }

    pub fn read_csv<R: Read>(reader: R, path: &str, n: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
        let h: Vec<&str> = headers.iter().collect();
        if h != ["i", "j"] {
            return Err(PanError::Parse {
                path: path.to_string(),
                line: 1,
                message: format!("expected header i,j, found {h:?}"),
            });
        }
        let mut g = Self::empty(n);
        for (r, rec) in rdr.records().enumerate() {
            let line = r + 2;
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|e| PanError::Parse {
                    path: path.to_string(),
                    line,
                    message: format!("bad node index {s:?}: {e}"),
                })
            };
            if rec.len() != 2 {
                return Err(PanError::Parse {
                    path: path.to_string(),
                    line,
                    message: format!("expected 2 cells, found {}", rec.len()),
                });
            }
            let (i, j) = (parse(&rec[0])?, parse(&rec[1])?);
            g.add_edge(i, j).map_err(|e| PanError::Consistency(format!("{path}: line {line}: {e}")))?;
        }
        Ok(g)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["i", "j"]).map_err(|e| csv_err("graph", e))?;
        for (i, j) in self.edges() {
            w.write_record([i.to_string(), j.to_string()])
                .map_err(|e| csv_err("graph", e))?;
        }
        w.flush().map_err(|e| PanError::io("graph", e))?;
        Ok(())
    }
}

/// `D^{-1/2} (A + I) D^{-1/2}` with `D` the degree matrix of `A + I`.
pub fn normalize_adjacency<T: Scalar>(g: &SimilarityGraph) -> Matrix<T> {
    let n = g.n();
    let inv_sqrt: Vec<T> = g
        .degrees()
        .into_iter()
        .map(|d| T::one() / T::from_usize_lossy(d + 1).sqrt())
        .collect();
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        a.set(i, i, inv_sqrt[i] * inv_sqrt[i]);
    }
    for (i, j) in g.edges() {
        let v = inv_sqrt[i] * inv_sqrt[j];
        a.set(i, j, v);
        a.set(j, i, v);
    }
    a
}

/// Removes each edge independently with probability `p`.
pub fn drop_edges(g: &SimilarityGraph, p: f64, seed: u64) -> Result<SimilarityGraph> {
    drop_edges_with(g, p, &mut rng_from_seed(seed))
}

pub fn drop_edges_with(g: &SimilarityGraph, p: f64, rng: &mut PanRng) -> Result<SimilarityGraph> {
    if !(0.0..1.0).contains(&p) {
        return Err(PanError::contract(format!("edge dropout {p} outside [0, 1)")));
    }
    if p == 0.0 {
        return Ok(g.clone());
    }
    Ok(SimilarityGraph {
        n: g.n,
        edges: g
            .edges
            .iter()
            .copied()
            .filter(|_| rng.random::<f64>() >= p)
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_graph_normalizes_to_identity() {
        let a: Matrix = normalize_adjacency(&SimilarityGraph::empty(3));
        assert_eq!(a, Matrix::identity(3));
    }

    #[test]
    fn single_edge_is_half_everywhere() {
        let g = SimilarityGraph::from_edges(2, [(0, 1)]).unwrap();
        let a: Matrix = normalize_adjacency(&g);
        for v in a.as_slice() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn path_graph_matches_formula() {
        let g = SimilarityGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let a: Matrix = normalize_adjacency(&g);
        let adj = [[1.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0]];
        let deg: Vec<f64> = adj.iter().map(|r| r.iter().sum()).collect();
        for i in 0..3 {
            for j in 0..3 {
                let expect = adj[i][j] / (deg[i] * deg[j]).sqrt();
                assert!((a.get(i, j) - expect).abs() < 1e-15);
                assert_eq!(a.get(i, j).to_bits(), a.get(j, i).to_bits());
            }
        }
    }

    #[test]
    fn self_edges_rejected_and_edges_deduplicated() {
        let mut g = SimilarityGraph::empty(3);
        assert!(g.add_edge(1, 1).is_err());
        assert!(g.add_edge(0, 2).unwrap());
        assert!(!g.add_edge(2, 0).unwrap());
        assert!(g.has_edge(2, 0));
        assert!(g.add_edge(0, 3).is_err());
    }

    #[test]
    fn edge_dropout() {
        let n = 200;
        let g = SimilarityGraph::from_edges(
            n,
            (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).take(10_000),
        )
        .unwrap();
        assert_eq!(drop_edges(&g, 0.0, 1).unwrap(), g);
        let a = drop_edges(&g, 0.15, 5).unwrap();
        assert_eq!(a, drop_edges(&g, 0.15, 5).unwrap());
        let kept = a.edge_count() as f64 / 10_000.0;
        let sd = (0.85 * 0.15 / 10_000f64).sqrt();
        assert!((kept - 0.85).abs() < 3.0 * sd, "{kept}");
        assert!(drop_edges(&g, 1.0, 1).is_err());
    }

    #[test]
    fn induced_relabels() {
        let g = SimilarityGraph::from_edges(5, [(0, 1), (1, 4), (2, 3)]).unwrap();
        let sub = g.induced(&[4, 1, 2]).unwrap();
        assert_eq!(sub.edges().collect::<Vec<_>>(), vec![(0, 1)]);
        assert_eq!(g.restricted_to(&[1, 4, 2]).edge_count(), 1);
    }

    #[test]
    fn csv_round_trip() {
        let g = SimilarityGraph::from_edges(4, [(0, 3), (1, 2)]).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert_eq!(SimilarityGraph::read_csv(buf.as_slice(), "mem", 4).unwrap(), g);
        assert!(SimilarityGraph::read_csv("i,j\n0,9\n".as_bytes(), "mem", 4).is_err());
    }
}
