//! Balanced positive and negative pair sampling over a similarity graph.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PanError, Result};
use crate::graph::SimilarityGraph;
use crate::rng::PanRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSample {
    pub i: usize,
    pub j: usize,
    pub e: u8,
}

/// Draws `count_per_class` edges and `count_per_class` non-edges, both with
/// replacement. Positives come first.
pub fn sample_pairs(
    g: &SimilarityGraph,
    count_per_class: usize,
    rng: &mut PanRng,
) -> Result<Vec<PairSample>> {
    if g.edge_count() == 0 {
        return Err(PanError::Sampling(format!(
            "graph on {} nodes has no edges to sample positives from",
            g.n()
        )));
    }
    if g.non_edge_count() == 0 {
        return Err(PanError::Sampling(format!(
            "graph on {} nodes is complete; no negatives exist",
            g.n()
        )));
    }
    let edges: Vec<(usize, usize)> = g.edges().collect();
    let mut out = Vec::with_capacity(2 * count_per_class);
    for _ in 0..count_per_class {
        let (i, j) = edges[rng.random_range(0..edges.len())];
        out.push(PairSample { i, j, e: 1 });
    }
    let n = g.n();
    while out.len() < 2 * count_per_class {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i != j && !g.has_edge(i, j) {
            out.push(PairSample { i, j, e: 0 });
        }
    }
    Ok(out)
}

/// Samples on the subgraph induced by `nodes` and maps indices back.
pub fn sample_pairs_within(
    g: &SimilarityGraph,
    nodes: &[usize],
    count_per_class: usize,
    rng: &mut PanRng,
) -> Result<Vec<PairSample>> {
    let sub = g.induced(nodes)?;
    Ok(sample_pairs(&sub, count_per_class, rng)?
        .into_iter()
        .map(|s| PairSample {
            i: nodes[s.i],
            j: nodes[s.j],
            e: s.e,
        })
        .collect())
}

pub fn shuffle_pairs(pairs: &mut [PairSample], rng: &mut PanRng) {
    pairs.shuffle(rng);
}
