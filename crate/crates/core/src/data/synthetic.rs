//! Synthetic datasets with known structure.
//!
//! The manifestation generator gives every present attribute one of `K`
//! hidden variants, each realized as its own feature axis. Two items link
//! when they share at least one attribute and every shared attribute agrees
//! in variant, so binary presence alone cannot recover the link.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::attributes::AttributeTable;
use crate::error::{PanError, Result};
use crate::graph::SimilarityGraph;
use crate::linalg::Matrix;
use crate::rng::{PanRng, SeedStream};

use super::bundle::DatasetBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    CompatibilityManifestation,
    FewshotClusters,
    LinearSeparable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub task_kind: TaskKind,
    pub n_items: usize,
    pub d: usize,
    pub m_attributes: usize,
    pub noise_sd: f64,
    pub manifestation_count: usize,
    /// Probability that an item carries a given attribute.
    pub prevalence: f64,
    /// Number of classes for the few-shot generator.
    pub classes: usize,
    /// Scale of the class or attribute signal.
    pub separation: f64,
    /// Number of item types for set-completion questions.
    pub categories: usize,
    /// Noise on every axis of the manifestation generator; `noise_sd` there
    /// applies only along the axes of present attributes.
    pub background_sd: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            task_kind: TaskKind::CompatibilityManifestation,
            n_items: 500,
            d: 16,
            m_attributes: 6,
            noise_sd: 0.1,
            manifestation_count: 2,
            prevalence: 0.5,
            classes: 30,
            separation: 1.0,
            categories: 4,
            background_sd: 0.02,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_items < 1 || self.d < 1 || self.m_attributes < 1 || self.classes < 1 || self.categories < 1 {
            return Err(PanError::contract("synthetic counts must all be at least 1"));
        }
        for sd in [self.noise_sd, self.background_sd] {
            if !(sd >= 0.0) || !sd.is_finite() {
                return Err(PanError::contract("noise levels must be finite and nonnegative"));
            }
        }
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return Err(PanError::contract("prevalence must lie strictly between 0 and 1"));
        }
        if !self.separation.is_finite() {
            return Err(PanError::contract("separation must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    /// Best balanced pair accuracy attainable from binary attribute presence.
    pub presence_only_bayes_rate: f64,
    /// Probability that a random pair is linked.
    pub link_rate: f64,
    pub attributes: usize,
    pub manifestation_count: usize,
    pub prevalence: f64,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub bundle: DatasetBundle,
    pub oracle: Option<OracleReport>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Presence-only Bayes rate under balanced classes.
///
/// Given presence, the link probability depends only on the number `s` of
/// attributes both items carry: zero when `s = 0`, else `K^-s`. Patterns
/// are therefore grouped by `s`.
pub fn presence_only_bayes(m: usize, k: usize, q: f64) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(PanError::contract("manifestation_count must be at least 1"));
    }
    let both = q * q;
    let groups: Vec<(f64, f64)> = (0..=m)
        .map(|s| {
            let mass = binomial(m, s) * both.powi(s as i32) * (1.0 - both).powi((m - s) as i32);
            let link = if s == 0 { 0.0 } else { (k as f64).powi(-(s as i32)) };
            (mass, link)
        })
        .collect();
    let link_rate: f64 = groups.iter().map(|(w, l)| w * l).sum();
    if link_rate <= 0.0 || link_rate >= 1.0 {
        return Ok((1.0, link_rate));
    }
    let rate = 0.5
        * groups
            .iter()
            .map(|(w, l)| (w * l / link_rate).max(w * (1.0 - l) / (1.0 - link_rate)))
            .sum::<f64>();
    Ok((rate, link_rate))
}

fn assign_splits(n: usize, names: [&str; 3], rng: &mut PanRng) -> BTreeMap<String, Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let a = (0.6 * n as f64).round() as usize;
    let b = a + (0.2 * n as f64).round() as usize;
    let mut splits = BTreeMap::new();
    for (name, range) in names.into_iter().zip([0..a, a..b.min(n), b.min(n)..n]) {
        let mut idx = perm[range].to_vec();
        idx.sort_unstable();
        splits.insert(name.to_string(), idx);
    }
    splits
}

fn noise_matrix(n: usize, d: usize, sd: f64, rng: &mut PanRng) -> Result<Vec<f64>> {
    if sd == 0.0 {
        return Ok(vec![0.0; n * d]);
    }
    let normal = Normal::new(0.0, sd).map_err(|e| PanError::Generation(e.to_string()))?;
    Ok((0..n * d).map(|_| normal.sample(rng)).collect())
}

/// Rounds through `f32` so the features survive a `PANF` round trip.
fn finish_features(n: usize, d: usize, data: Vec<f64>) -> Result<Matrix<f64>> {
    Matrix::new(n, d, data.into_iter().map(|v| v as f32 as f64).collect())
}

/// Links every pair for which `linked` holds, among items of the same split.
fn split_graph(
    n: usize,
    splits: &BTreeMap<String, Vec<usize>>,
    linked: impl Fn(usize, usize) -> bool,
) -> Result<SimilarityGraph> {
    let mut g = SimilarityGraph::empty(n);
    for items in splits.values() {
        for (a, &i) in items.iter().enumerate() {
            for &j in &items[a + 1..] {
                if linked(i, j) {
                    g.add_edge(i, j)?;
                }
            }
        }
    }
    Ok(g)
}

/// Greedy cliques of size 2 to 5 within each split.
fn sample_outfits(g: &SimilarityGraph, splits: &BTreeMap<String, Vec<usize>>, rng: &mut PanRng) -> Vec<Vec<usize>> {
    let mut outfits = Vec::new();
    for items in splits.values() {
        for _ in 0..items.len() / 4 {
            let target = rng.random_range(2..=5usize);
            let mut pool = items.clone();
            pool.shuffle(rng);
            let mut outfit = vec![pool[0]];
            for &c in &pool[1..] {
                if outfit.len() == target {
                    break;
                }
                if outfit.iter().all(|&o| g.has_edge(o, c)) {
                    outfit.push(c);
                }
            }
            if outfit.len() >= 2 {
                outfits.push(outfit);
            }
        }
    }
    outfits
}

pub fn gen_compatibility_manifestation(spec: &SyntheticSpec, seed: u64) -> Result<Generated> {
    spec.validate()?;
    let (n, d, m, k) = (spec.n_items, spec.d, spec.m_attributes, spec.manifestation_count);
    if k == 0 {
        return Err(PanError::contract("manifestation_count must be at least 1"));
    }
    if m * k > d {
        return Err(PanError::Contract(format!(
            "{m} attributes with {k} manifestations need {} feature axes, but d={d}",
            m * k
        )));
    }
    let streams = SeedStream::new(seed);
    let mut rng = streams.rng("attributes");
    let mut values = vec![0u8; n * m];
    let mut variant = vec![0usize; n * m];
    for idx in 0..n * m {
        if rng.random::<f64>() < spec.prevalence {
            values[idx] = 1;
            variant[idx] = rng.random_range(0..k);
        }
    }
    let mut data = noise_matrix(n, d, spec.background_sd, &mut streams.rng("noise"))?;
    let shade = noise_matrix(n, m, spec.noise_sd, &mut streams.rng("manifestation-noise"))?;
    for i in 0..n {
        for a in 0..m {
            if values[i * m + a] == 1 {
                data[i * d + a * k + variant[i * m + a]] += spec.separation + shade[i * m + a];
            }
        }
    }
    let features = finish_features(n, d, data)?;
    let splits = assign_splits(n, ["train", "val", "test"], &mut streams.rng("splits"));
    let linked = |i: usize, j: usize| {
        let mut shared = false;
        for a in 0..m {
            if values[i * m + a] == 1 && values[j * m + a] == 1 {
                if variant[i * m + a] != variant[j * m + a] {
                    return false;
                }
                shared = true;
            }
        }
        shared
    };
    let graph = split_graph(n, &splits, linked)?;
    let mut crng = streams.rng("categories");
    let categories = (0..n).map(|_| crng.random_range(0..spec.categories)).collect();
    let outfits = sample_outfits(&graph, &splits, &mut streams.rng("outfits"));
    let (rate, link_rate) = presence_only_bayes(m, k, spec.prevalence)?;
    Ok(Generated {
        bundle: DatasetBundle {
            features,
            attributes: Some(AttributeTable::fully_labeled(n, m, values)?),
            graph,
            splits,
            categories: Some(categories),
            outfits: Some(outfits),
        },
        oracle: Some(OracleReport {
            presence_only_bayes_rate: rate,
            link_rate,
            attributes: m,
            manifestation_count: k,
            prevalence: spec.prevalence,
        }),
    })
}

/// Class signatures over mutually exclusive attribute pairs `(2t, 2t+1)`;
/// an odd final attribute is free.
fn draw_signatures(classes: usize, m: usize, rng: &mut PanRng) -> Result<Vec<Vec<u8>>> {
    let capacity = 3f64.powi((m / 2) as i32) * if m % 2 == 1 { 2.0 } else { 1.0 };
    if (classes as f64) > capacity {
        return Err(PanError::Generation(format!(
            "{m} attributes allow only {capacity} distinct class signatures, {classes} requested"
        )));
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(classes);
    while out.len() < classes {
        let mut sig = vec![0u8; m];
        for t in 0..m / 2 {
            match rng.random_range(0..3) {
                1 => sig[2 * t] = 1,
                2 => sig[2 * t + 1] = 1,
                _ => {}
            }
        }
        if m % 2 == 1 {
            sig[m - 1] = rng.random_range(0..2);
        }
        if seen.insert(sig.clone()) {
            out.push(sig);
        }
    }
    Ok(out)
}

/// Gaussian class clusters whose centers are `separation` times the sum of
/// the class's attribute axes. Splits are by class: `base`, `val`, `novel`.
pub fn gen_few_shot_clusters(spec: &SyntheticSpec, seed: u64) -> Result<Generated> {
    spec.validate()?;
    let (c, d, m) = (spec.classes, spec.d, spec.m_attributes);
    if m > d {
        return Err(PanError::Contract(format!("{m} attributes need at least {m} feature axes, but d={d}")));
    }
    let per_class = spec.n_items / c;
    if per_class == 0 {
        return Err(PanError::Contract(format!("{} items cannot fill {c} classes", spec.n_items)));
    }
    let n = per_class * c;
    let streams = SeedStream::new(seed);
    let signatures = draw_signatures(c, m, &mut streams.rng("signatures"))?;
    let labels: Vec<usize> = (0..n).map(|i| i / per_class).collect();
    let mut data = noise_matrix(n, d, spec.noise_sd, &mut streams.rng("noise"))?;
    let mut values = vec![0u8; n * m];
    for i in 0..n {
        let sig = &signatures[labels[i]];
        values[i * m..(i + 1) * m].copy_from_slice(sig);
        for a in 0..m {
            if sig[a] == 1 {
                data[i * d + a] += spec.separation;
            }
        }
    }
    let features = finish_features(n, d, data)?;
    let class_splits = assign_splits(c, ["base", "val", "novel"], &mut streams.rng("splits"));
    let splits = class_splits
        .into_iter()
        .map(|(name, classes)| {
            let items = (0..n).filter(|i| classes.contains(&labels[*i])).collect();
            (name, items)
        })
        .collect();
    let graph = split_graph(n, &splits, |i, j| labels[i] == labels[j])?;
    Ok(Generated {
        bundle: DatasetBundle {
            features,
            attributes: Some(AttributeTable::fully_labeled(n, m, values)?),
            graph,
            splits,
            categories: Some(labels),
            outfits: None,
        },
        oracle: None,
    })
}

/// Items with random attribute bits; coordinate `a` sits at
/// `±separation / 2` by the sign of attribute `a`. Items link iff their
/// attribute vectors are identical.
pub fn gen_linear_separable(spec: &SyntheticSpec, seed: u64) -> Result<Generated> {
    spec.validate()?;
    let (n, d, m) = (spec.n_items, spec.d, spec.m_attributes);
    if m > d {
        return Err(PanError::Contract(format!("{m} attributes need at least {m} feature axes, but d={d}")));
    }
    let streams = SeedStream::new(seed);
    let mut rng = streams.rng("attributes");
    let values: Vec<u8> = (0..n * m).map(|_| rng.random_range(0..2u8)).collect();
    let mut data = noise_matrix(n, d, spec.noise_sd, &mut streams.rng("noise"))?;
    for i in 0..n {
        for a in 0..m {
            let sign = if values[i * m + a] == 1 { 1.0 } else { -1.0 };
            data[i * d + a] += sign * spec.separation / 2.0;
        }
    }
    let features = finish_features(n, d, data)?;
    let splits = assign_splits(n, ["train", "val", "test"], &mut streams.rng("splits"));
    let graph = split_graph(n, &splits, |i, j| values[i * m..(i + 1) * m] == values[j * m..(j + 1) * m])?;
    let categories = (0..n)
        .map(|i| values[i * m..(i + 1) * m].iter().fold(0usize, |acc, &b| 2 * acc + b as usize))
        .collect();
    Ok(Generated {
        bundle: DatasetBundle {
            features,
            attributes: Some(AttributeTable::fully_labeled(n, m, values)?),
            graph,
            splits,
            categories: Some(categories),
            outfits: None,
        },
        oracle: None,
    })
}

pub fn generate(spec: &SyntheticSpec, seed: u64) -> Result<Generated> {
    match spec.task_kind {
        TaskKind::CompatibilityManifestation => gen_compatibility_manifestation(spec, seed),
        TaskKind::FewshotClusters => gen_few_shot_clusters(spec, seed),
        TaskKind::LinearSeparable => gen_linear_separable(spec, seed),
    }
}
