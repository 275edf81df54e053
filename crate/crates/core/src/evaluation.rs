//! End-task metrics over any pair scorer.
//!
//! Ties are broken toward the lowest index everywhere.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::attributes::{AttributeTable, CombineFn};
use crate::error::{PanError, Result};
use crate::graph::SimilarityGraph;
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitbQuestion {
    pub question_items: Vec<usize>,
    pub candidates: Vec<usize>,
    pub answer_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub n_way: usize,
    pub k_shot: usize,
    /// `n_way` lists of `k_shot` item indices.
    pub support: Vec<Vec<usize>>,
    /// `(item, slot)` with `slot` indexing into `support`.
    pub query: Vec<(usize, usize)>,
    /// Dataset class label behind each slot.
    pub classes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    /// Half-width of a 95% normal interval, when one applies.
    pub interval: Option<f64>,
    pub count: usize,
}

impl MetricReport {
    pub fn new(metric: &str, value: f64, count: usize) -> Self {
        Self {
            metric: metric.to_string(),
            value,
            interval: None,
            count,
        }
    }
}

/// Something that scores item pairs.
///
/// `graph` is defined over the rows of `x` and serves as encoder context;
/// models without a graph encoder ignore it.
pub trait PairScorer {
    fn score_pairs(&self, x: &Matrix<f64>, graph: &SimilarityGraph, pairs: &[(usize, usize)]) -> Result<Vec<f64>>;
}

/// Per-condition outputs, `pairs x M` each.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionScores {
    pub rho: Matrix<f64>,
    pub omega: Matrix<f64>,
}

pub trait ConditionModel: PairScorer {
    fn condition_scores(
        &self,
        x: &Matrix<f64>,
        graph: &SimilarityGraph,
        pairs: &[(usize, usize)],
    ) -> Result<ConditionScores>;
}

/// Rows of `features` listed in `items`, with `edges` given in local indices.
fn local_context(
    features: &Matrix<f64>,
    items: &[usize],
    edges: impl IntoIterator<Item = (usize, usize)>,
) -> Result<(Matrix<f64>, SimilarityGraph)> {
    let x = features.gather_rows(items)?;
    let g = SimilarityGraph::from_edges(items.len(), edges)?;
    Ok((x, g))
}

fn clique_edges(nodes: std::ops::Range<usize>) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in nodes.clone() {
        for b in a + 1..nodes.end {
            out.push((a, b));
        }
    }
    out
}

/// Index of the first maximum.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(k);
        }
    }
    best
}

/// Scores every candidate of `q` as the sum of its scores with the question
/// items, which are joined into a clique for encoder context.
pub fn fitb_candidate_scores(model: &dyn PairScorer, q: &FitbQuestion, features: &Matrix<f64>) -> Result<Vec<f64>> {
    if q.candidates.is_empty() {
        return Err(PanError::contract("question has no candidates"));
    }
    if q.answer_index >= q.candidates.len() {
        return Err(PanError::Index {
            index: q.answer_index,
            len: q.candidates.len(),
        });
    }
    let nq = q.question_items.len();
    let items: Vec<usize> = q.question_items.iter().chain(&q.candidates).copied().collect();
    let (x, g) = local_context(features, &items, clique_edges(0..nq))?;
    let pairs: Vec<(usize, usize)> = (0..q.candidates.len())
        .flat_map(|c| (0..nq).map(move |i| (i, nq + c)))
        .collect();
    let s = model.score_pairs(&x, &g, &pairs)?;
    Ok((0..q.candidates.len())
        .map(|c| s[c * nq..(c + 1) * nq].iter().sum())
        .collect())
}

pub fn fitb_accuracy(model: &dyn PairScorer, questions: &[FitbQuestion], features: &Matrix<f64>) -> Result<MetricReport> {
    if questions.is_empty() {
        return Err(PanError::contract("no questions to evaluate"));
    }
    let mut correct = 0usize;
    for q in questions {
        let scores = fitb_candidate_scores(model, q, features)?;
        if argmax_first(&scores) == Some(q.answer_index) {
            correct += 1;
        }
    }
    Ok(MetricReport::new("fitb_accuracy", correct as f64 / questions.len() as f64, questions.len()))
}

/// Mean score over all unordered pairs of the set, encoded without context.
pub fn set_score(model: &dyn PairScorer, set: &[usize], features: &Matrix<f64>) -> Result<f64> {
    if set.len() < 2 {
        return Err(PanError::Contract(format!("set {set:?} has fewer than 2 items")));
    }
    let (x, g) = local_context(features, set, [])?;
    let pairs = clique_edges(0..set.len());
    let s = model.score_pairs(&x, &g, &pairs)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from midranks.
pub fn mann_whitney_auc(positive: &[f64], negative: &[f64]) -> Result<f64> {
    if positive.is_empty() || negative.is_empty() {
        return Err(PanError::contract("AUC needs at least one positive and one negative"));
    }
    let mut all: Vec<(f64, bool)> = positive
        .iter()
        .map(|&s| (s, true))
        .chain(negative.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < all.len() {
        let mut end = start;
        while end < all.len() && all[end].0 == all[start].0 {
            end += 1;
        }
        let midrank = (start + end + 1) as f64 / 2.0;
        rank_sum += midrank * all[start..end].iter().filter(|e| e.1).count() as f64;
        start = end;
    }
    let (np, nn) = (positive.len() as f64, negative.len() as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

pub fn compatibility_auc(
    model: &dyn PairScorer,
    positive_sets: &[Vec<usize>],
    negative_sets: &[Vec<usize>],
    features: &Matrix<f64>,
) -> Result<MetricReport> {
    let score = |sets: &[Vec<usize>]| -> Result<Vec<f64>> { sets.iter().map(|s| set_score(model, s, features)).collect() };
    let auc = mann_whitney_auc(&score(positive_sets)?, &score(negative_sets)?)?;
    Ok(MetricReport::new("compatibility_auc", auc, positive_sets.len() + negative_sets.len()))
}

/// Predicted slot for every query of the episode, in query order.
pub fn few_shot_predictions(model: &dyn PairScorer, ep: &Episode, features: &Matrix<f64>) -> Result<Vec<usize>> {
    if ep.support.len() != ep.n_way || ep.support.iter().any(|s| s.len() != ep.k_shot) || ep.k_shot == 0 {
        return Err(PanError::contract("episode support does not match n_way x k_shot"));
    }
    let ns = ep.n_way * ep.k_shot;
    let mut items: Vec<usize> = ep.support.iter().flatten().copied().collect();
    items.extend(ep.query.iter().map(|q| q.0));
    let edges: Vec<(usize, usize)> = (0..ep.n_way)
        .flat_map(|c| clique_edges(c * ep.k_shot..(c + 1) * ep.k_shot))
        .collect();
    let (x, g) = local_context(features, &items, edges)?;
    let pairs: Vec<(usize, usize)> = (0..ep.query.len())
        .flat_map(|q| (0..ns).map(move |s| (ns + q, s)))
        .collect();
    let s = model.score_pairs(&x, &g, &pairs)?;
    Ok((0..ep.query.len())
        .map(|q| {
            let row = &s[q * ns..(q + 1) * ns];
            let class_scores: Vec<f64> = (0..ep.n_way)
                .map(|c| row[c * ep.k_shot..(c + 1) * ep.k_shot].iter().sum::<f64>() / ep.k_shot as f64)
                .collect();
            argmax_first(&class_scores).unwrap_or(0)
        })
        .collect())
}

/// Mean and `1.96 * sd / sqrt(n)` with the sample standard deviation; the
/// interval is zero for a single value.
pub fn mean_and_interval(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * var.sqrt() / n.sqrt())
}

pub fn few_shot_accuracy(model: &dyn PairScorer, episodes: &[Episode], features: &Matrix<f64>) -> Result<MetricReport> {
    if episodes.is_empty() {
        return Err(PanError::contract("no episodes to evaluate"));
    }
    let mut accs = Vec::with_capacity(episodes.len());
    let (mut hits, mut asked) = (0usize, 0usize);
    for ep in episodes {
        let pred = few_shot_predictions(model, ep, features)?;
        let correct = pred.iter().zip(&ep.query).filter(|(p, q)| **p == q.1).count();
        hits += correct;
        asked += ep.query.len();
        accs.push(correct as f64 / ep.query.len().max(1) as f64);
    }
    // Pooled counts equal the per-episode mean when episodes share a size,
    // without the roundoff of summing ratios.
    let (_, interval) = mean_and_interval(&accs);
    let mean = hits as f64 / asked.max(1) as f64;
    Ok(MetricReport {
        metric: "few_shot_accuracy".into(),
        value: mean,
        interval: Some(interval),
        count: episodes.len(),
    })
}

/// Fraction of queries with a same-label gallery item among the `k` best
/// scores of their row.
pub fn recall_from_scores(scores: &[Vec<f64>], query_labels: &[usize], gallery_labels: &[usize], k: usize) -> Result<f64> {
    if k == 0 || gallery_labels.is_empty() {
        return Err(PanError::contract("recall needs k >= 1 and a nonempty gallery"));
    }
    if k > gallery_labels.len() {
        return Err(PanError::Contract(format!(
            "k={k} exceeds gallery size {}",
            gallery_labels.len()
        )));
    }
    if scores.len() != query_labels.len() {
        return Err(PanError::Length {
            op: "recall",
            expected: query_labels.len(),
            actual: scores.len(),
        });
    }
    let mut hits = 0usize;
    for (row, &ql) in scores.iter().zip(query_labels) {
        let mut order: Vec<usize> = (0..gallery_labels.len()).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        if order[..k].iter().any(|&g| gallery_labels[g] == ql) {
            hits += 1;
        }
    }
    Ok(hits as f64 / query_labels.len().max(1) as f64)
}

/// Ranks the gallery per query by model score, or by negative Euclidean
/// distance when no model is given. Model scoring sees query and gallery
/// stacked in one matrix with no graph context.
pub fn recall_at_k(
    query_features: &Matrix<f64>,
    gallery_features: &Matrix<f64>,
    query_labels: &[usize],
    gallery_labels: &[usize],
    k: usize,
    model: Option<&dyn PairScorer>,
) -> Result<MetricReport> {
    let (nq, ng) = (query_features.rows(), gallery_features.rows());
    if query_labels.len() != nq || gallery_labels.len() != ng {
        return Err(PanError::contract("label counts must match feature rows"));
    }
    if query_features.cols() != gallery_features.cols() {
        return Err(PanError::dim("recall features", query_features.shape(), gallery_features.shape()));
    }
    let scores: Vec<Vec<f64>> = match model {
        None => (0..nq)
            .map(|q| {
                (0..ng)
                    .map(|g| {
                        -query_features
                            .row(q)
                            .iter()
                            .zip(gallery_features.row(g))
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .collect()
            })
            .collect(),
        Some(m) => {
            let mut data = query_features.as_slice().to_vec();
            data.extend_from_slice(gallery_features.as_slice());
            let x = Matrix::new(nq + ng, query_features.cols(), data)?;
            let g = SimilarityGraph::empty(nq + ng);
            let pairs: Vec<(usize, usize)> = (0..nq).flat_map(|q| (0..ng).map(move |j| (q, nq + j))).collect();
            let s = m.score_pairs(&x, &g, &pairs)?;
            s.chunks(ng.max(1)).map(<[f64]>::to_vec).collect()
        }
    };
    let r = recall_from_scores(&scores, query_labels, gallery_labels, k)?;
    Ok(MetricReport::new(&format!("recall_at_{k}"), r, nq))
}

/// Mean over positives of the precision among items scoring at least as high
/// as that positive. `None` unless both classes are present.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut seen, mut seen_pos, mut total) = (0usize, 0usize, 0.0);
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let group_pos = order[start..end].iter().filter(|&&i| labels[i]).count();
        seen += end - start;
        seen_pos += group_pos;
        total += group_pos as f64 * seen_pos as f64 / seen as f64;
        start = end;
    }
    Some(total / pos as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionAp {
    pub condition: usize,
    pub ap: Option<f64>,
    pub positives: usize,
    pub negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeMapReport {
    pub report: MetricReport,
    pub per_condition: Vec<ConditionAp>,
    /// Conditions left out of the mean because AP is undefined for them.
    pub skipped: Vec<usize>,
}

/// Per-condition AP from precomputed `rho` (`pairs x M`).
pub fn attribute_map_from_scores(
    rho: &Matrix<f64>,
    pairs: &[(usize, usize)],
    table: &AttributeTable,
    fa: CombineFn,
) -> Result<AttributeMapReport> {
    let len = fa.label_len(table.m());
    if rho.cols() < len {
        return Err(PanError::Contract(format!(
            "model has {} conditions but {fa} labels need {len}",
            rho.cols()
        )));
    }
    if rho.rows() != pairs.len() {
        return Err(PanError::Length {
            op: "attribute_map",
            expected: pairs.len(),
            actual: rho.rows(),
        });
    }
    let labels = pairs
        .iter()
        .map(|&(i, j)| table.pair_label(i, j, fa))
        .collect::<Result<Vec<_>>>()?;
    let mut per_condition = Vec::with_capacity(len);
    let mut skipped = Vec::new();
    let mut aps = Vec::new();
    for c in 0..len {
        let (mut s, mut l) = (Vec::new(), Vec::new());
        for (r, lab) in labels.iter().enumerate() {
            if lab.mask[c] == 1 {
                s.push(rho.get(r, c));
                l.push(lab.labels[c] == 1);
            }
        }
        let positives = l.iter().filter(|&&b| b).count();
        let ap = average_precision(&s, &l);
        match ap {
            Some(v) => aps.push(v),
            None => skipped.push(c),
        }
        per_condition.push(ConditionAp {
            condition: c,
            ap,
            positives,
            negatives: l.len() - positives,
        });
    }
    let value = if aps.is_empty() { f64::NAN } else { aps.iter().sum::<f64>() / aps.len() as f64 };
    Ok(AttributeMapReport {
        report: MetricReport::new("attribute_map", value, aps.len()),
        per_condition,
        skipped,
    })
}

/// Scores pairs with no graph context and reports per-condition AP.
pub fn attribute_map(
    model: &dyn ConditionModel,
    features: &Matrix<f64>,
    pairs: &[(usize, usize)],
    table: &AttributeTable,
    fa: CombineFn,
) -> Result<AttributeMapReport> {
    let g = SimilarityGraph::empty(features.rows());
    let cs = model.condition_scores(features, &g, pairs)?;
    attribute_map_from_scores(&cs.rho, pairs, table, fa)
}

/// Average rank of each column over rows; rank 1 is the highest score and
/// ties go to the lower column.
pub fn average_ranks(scores: &Matrix<f64>) -> Vec<f64> {
    let m = scores.cols();
    let mut sums = vec![0.0; m];
    for r in 0..scores.rows() {
        let row = scores.row(r);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        for (rank, &c) in order.iter().enumerate() {
            sums[c] += (rank + 1) as f64;
        }
    }
    let n = scores.rows().max(1) as f64;
    sums.into_iter().map(|s| s / n).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub attribute: usize,
    pub relevance_mean_rank: f64,
    pub relevance_sd: f64,
    pub contribution_mean_rank: f64,
    pub contribution_sd: f64,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregates per-run average ranks: mean and sample standard deviation
/// across runs (zero for one run).
pub fn rank_report_from_scores(runs: &[ConditionScores]) -> Result<Vec<RankRow>> {
    let first = runs.first().ok_or_else(|| PanError::contract("rank report needs at least one run"))?;
    let m = first.omega.cols();
    let mut rel = Vec::with_capacity(runs.len());
    let mut con = Vec::with_capacity(runs.len());
    for (k, run) in runs.iter().enumerate() {
        if run.omega.cols() != m || run.rho.shape() != run.omega.shape() {
            return Err(PanError::Contract(format!(
                "run {k} has {} conditions, run 0 has {m}",
                run.omega.cols()
            )));
        }
        rel.push(average_ranks(&run.omega));
        con.push(average_ranks(&run.rho.zip_map(&run.omega, "contribution", |a, b| a * b)?));
    }
    Ok((0..m)
        .map(|a| {
            let (rm, rs) = mean_sd(&rel.iter().map(|r| r[a]).collect::<Vec<_>>());
            let (cm, cs) = mean_sd(&con.iter().map(|r| r[a]).collect::<Vec<_>>());
            RankRow {
                attribute: a,
                relevance_mean_rank: rm,
                relevance_sd: rs,
                contribution_mean_rank: cm,
                contribution_sd: cs,
            }
        })
        .collect())
}

pub fn attribute_rank_report(
    runs: &[&dyn ConditionModel],
    features: &Matrix<f64>,
    pairs: &[(usize, usize)],
) -> Result<Vec<RankRow>> {
    let g = SimilarityGraph::empty(features.rows());
    let scores = runs
        .iter()
        .map(|m| m.condition_scores(features, &g, pairs))
        .collect::<Result<Vec<_>>>()?;
    rank_report_from_scores(&scores)
}

pub fn write_rank_report_csv<W: Write>(rows: &[RankRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r).map_err(|e| crate::attributes::csv_err("rank report", e))?;
    }
    w.flush().map_err(|e| PanError::io("rank report", e))
}

/// Fraction of labeled pairs whose score falls on the correct side of 0.5.
pub fn pair_accuracy(scores: &[f64], links: &[bool]) -> Result<f64> {
    if scores.len() != links.len() || scores.is_empty() {
        return Err(PanError::Length {
            op: "pair_accuracy",
            expected: links.len(),
            actual: scores.len(),
        });
    }
    let correct = scores.iter().zip(links).filter(|(s, l)| (**s >= 0.5) == **l).count();
    Ok(correct as f64 / scores.len() as f64)
}
