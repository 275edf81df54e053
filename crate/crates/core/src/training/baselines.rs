//! Comparison models: triplet Siamese embedding with a link layer, a
//! hard-sharing multitask network, and a two-stage attribute pipeline.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attributes::AttributeTable;
use crate::autodiff::{Parameterized, Tape, Var};
use crate::data::bundle::DatasetBundle;
use crate::encoders::{Encoder, EncoderSpec};
use crate::error::{PanError, Result};
use crate::evaluation::PairScorer;
use crate::graph::SimilarityGraph;
use crate::linalg::{Elementwise, Matrix};
use crate::rng::{PanRng, SeedStream};
use crate::scalar::Scalar;

use super::adam::Adam;
use super::loss::triplet_loss_on_tape;
use super::pan::{epoch_batches, HistoryRow, SplitSampler, TrainConfig};
use super::sampling::PairSample;

fn uniform<T: Scalar>(rows: usize, cols: usize, fan_in: usize, rng: &mut PanRng) -> Matrix<T> {
    let b = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..rows * cols).map(|_| T::lit(rng.random_range(-b..=b))).collect();
    Matrix::new(rows, cols, data).expect("finite draws")
}

/// Dense logistic layer on `|h_i - h_j|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LinkHead<T: Scalar = f64> {
    pub w: Matrix<T>,
    pub b: Matrix<T>,
}

impl<T: Scalar> LinkHead<T> {
    fn init(d: usize, rng: &mut PanRng) -> Self {
        Self {
            w: uniform(d, 1, d, rng),
            b: Matrix::zeros(1, 1),
        }
    }

    fn bind(&self, tape: &mut Tape<T>) -> Result<(Var, Var)> {
        Ok((tape.param("link.w", self.w.clone())?, tape.param("link.b", self.b.clone())?))
    }

    fn on_tape(tape: &mut Tape<T>, vars: (Var, Var), hi: Var, hj: Var) -> Result<Var> {
        let d = tape.sub(hi, hj)?;
        let d = tape.abs(d)?;
        let z = tape.matmul(d, vars.0)?;
        let z = tape.add_row_broadcast(z, vars.1)?;
        tape.sigmoid(z)
    }

    fn score(&self, h: &Matrix<T>, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        let (l, r): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let d = h
            .gather_rows(&l)?
            .elementwise(Elementwise::Subtract, Some(&h.gather_rows(&r)?))?
            .elementwise(Elementwise::Abs, None)?;
        let p = d
            .matmul(&self.w)?
            .add_row_broadcast(&self.b)?
            .elementwise(Elementwise::Sigmoid, None)?;
        Ok(p.as_slice().iter().map(|v| v.to_f64_lossy()).collect())
    }
}

impl<T: Scalar> Parameterized<T> for LinkHead<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Matrix<T>)) {
        f("link.w", &self.w);
        f("link.b", &self.b);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Matrix<T>)) {
        f("link.w", &mut self.w);
        f("link.b", &mut self.b);
    }
}

fn link_bce<T: Scalar>(tape: &mut Tape<T>, p: Var, batch: &[PairSample]) -> Result<Var> {
    let n = batch.len();
    let target = Matrix::new(n, 1, batch.iter().map(|s| T::lit(s.e as f64)).collect())?;
    let l = tape.bce_rows(p, target, Matrix::filled(n, 1, T::one()))?;
    tape.mean(l)
}

fn finite(value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(PanError::Numeric(format!("training loss is {value}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SiameseModel<T: Scalar = f64> {
    pub encoder: Encoder<T>,
    pub link: LinkHead<T>,
}

impl<T: Scalar> PairScorer for SiameseModel<T> {
    fn score_pairs(&self, x: &Matrix<f64>, _graph: &SimilarityGraph, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        let h = self.encoder.encode(&x.cast::<T>(), None)?;
        self.link.score(&h, pairs)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Every linked pair as an anchor/positive, with one random unlinked
/// negative for the anchor.
pub fn sample_triplets(graph: &SimilarityGraph, nodes: &[usize], rng: &mut PanRng) -> Result<Vec<Triplet>> {
    let sub = graph.induced(nodes)?;
    if sub.edge_count() == 0 || sub.non_edge_count() == 0 {
        return Err(PanError::Sampling(
            "triplets need both linked and unlinked pairs in the training split".into(),
        ));
    }
    let n = sub.n();
    let mut out = Vec::with_capacity(sub.edge_count());
    for (a, p) in sub.edges() {
        if sub.degree(a) + 1 >= n {
            continue;
        }
        let neg = loop {
            let z = rng.random_range(0..n);
            if z != a && !sub.has_edge(a, z) {
                break z;
            }
        };
        out.push(Triplet {
            anchor: nodes[a],
            positive: nodes[p],
            negative: nodes[neg],
        });
    }
    if out.is_empty() {
        return Err(PanError::Sampling("no anchor has an unlinked partner".into()));
    }
    Ok(out)
}

pub const SIAMESE_BATCH: usize = 96;

/// Triplet training of the encoder (96 triplets per step), then a link layer
/// on frozen embeddings.
pub fn train_siamese_baseline<T: Scalar>(
    dataset: &DatasetBundle,
    encoder_spec: &EncoderSpec,
    margin: f64,
    cfg: &TrainConfig,
) -> Result<(SiameseModel<T>, Vec<HistoryRow>)> {
    cfg.validate()?;
    if !(margin >= 0.0) {
        return Err(PanError::Contract(format!("margin must be nonnegative, got {margin}")));
    }
    if encoder_spec.is_graph() {
        return Err(PanError::contract("the siamese baseline embeds items independently; use identity or mlp"));
    }
    let streams = SeedStream::new(cfg.seed);
    let nodes = dataset.split(&cfg.train_split)?;
    let mut encoder: Encoder<T> = Encoder::init(encoder_spec, dataset.features.cols(), &mut streams.rng("init.encoder"))?;
    let mut link = LinkHead::init(encoder.output_dim(), &mut streams.rng("init.link"));
    let x = dataset.features.cast::<T>();
    let mut history = Vec::new();
    let mut adam = Adam::new(cfg.adam, cfg.learning_rate)?;
    for epoch in 0..cfg.epochs {
        let wrap = |e: PanError| PanError::Training {
            epoch,
            source: Box::new(e),
        };
        let mut rng = streams.rng_indexed("triplets", epoch as u64);
        let mut triplets = sample_triplets(&dataset.graph, nodes, &mut rng).map_err(wrap)?;
        shuffle_slice(&mut triplets, &mut rng);
        let mut total = 0.0;
        let chunks: Vec<&[Triplet]> = triplets.chunks(SIAMESE_BATCH).collect();
        for chunk in &chunks {
            let mut step = || -> Result<f64> {
                let mut tape = Tape::new();
                let vars = encoder.bind(&mut tape, true)?;
                let gather = |tape: &mut Tape<T>, f: fn(&Triplet) -> usize| -> Result<Var> {
                    let idx: Vec<usize> = chunk.iter().map(f).collect();
                    let rows = tape.constant(x.gather_rows(&idx)?);
                    encoder.forward_on_tape(tape, &vars, rows, None, None)
                };
                let a = gather(&mut tape, |t| t.anchor)?;
                let p = gather(&mut tape, |t| t.positive)?;
                let n = gather(&mut tape, |t| t.negative)?;
                let loss = triplet_loss_on_tape(&mut tape, a, p, n, T::lit(margin))?;
                let value = finite(tape.value(loss).item().to_f64_lossy())?;
                let grads = tape.backward(loss)?;
                adam.step(&mut encoder, &grads)?;
                Ok(value)
            };
            total += step().map_err(wrap)?;
        }
        history.push(HistoryRow {
            epoch,
            train_loss: total / chunks.len() as f64,
            val_metric: None,
        });
    }
    let h = encoder.encode(&x, None)?;
    let sampler = SplitSampler::new(&dataset.graph, nodes)?;
    let mut adam = Adam::new(cfg.adam, cfg.learning_rate)?;
    for epoch in 0..cfg.epochs {
        let wrap = |e: PanError| PanError::Training {
            epoch,
            source: Box::new(e),
        };
        let pairs = sampler
            .sample(cfg.pairs_per_class, &mut streams.rng_indexed("link.pairs", epoch as u64))
            .map_err(wrap)?;
        let mut step = || -> Result<()> {
            let mut tape = Tape::new();
            let vars = link.bind(&mut tape)?;
            let (l, r): (Vec<usize>, Vec<usize>) = pairs.iter().map(|s| (s.i, s.j)).unzip();
            let hi = tape.constant(h.gather_rows(&l)?);
            let hj = tape.constant(h.gather_rows(&r)?);
            let p = LinkHead::on_tape(&mut tape, vars, hi, hj)?;
            let loss = link_bce(&mut tape, p, &pairs)?;
            finite(tape.value(loss).item().to_f64_lossy())?;
            let grads = tape.backward(loss)?;
            adam.step(&mut link, &grads)
        };
        step().map_err(wrap)?;
    }
    Ok((SiameseModel { encoder, link }, history))
}

fn shuffle_slice<X>(v: &mut [X], rng: &mut PanRng) {
    use rand::seq::SliceRandom;
    v.shuffle(rng);
}

/// Per-image logistic attribute predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AttributeHead<T: Scalar = f64> {
    pub w: Matrix<T>,
    pub b: Matrix<T>,
}

impl<T: Scalar> AttributeHead<T> {
    fn init(d: usize, m: usize, rng: &mut PanRng) -> Self {
        Self {
            w: uniform(d, m, d, rng),
            b: Matrix::zeros(1, m),
        }
    }

    fn bind(&self, tape: &mut Tape<T>) -> Result<(Var, Var)> {
        Ok((tape.param("attr.w", self.w.clone())?, tape.param("attr.b", self.b.clone())?))
    }

    pub fn predict(&self, h: &Matrix<T>) -> Result<Matrix<T>> {
        h.matmul(&self.w)?
            .add_row_broadcast(&self.b)?
            .elementwise(Elementwise::Sigmoid, None)
    }
}

impl<T: Scalar> Parameterized<T> for AttributeHead<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Matrix<T>)) {
        f("attr.w", &self.w);
        f("attr.b", &self.b);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Matrix<T>)) {
        f("attr.w", &mut self.w);
        f("attr.b", &mut self.b);
    }
}

/// Attribute targets and mask for `items` as `items x m` matrices.
fn item_targets<T: Scalar>(table: &AttributeTable, items: &[usize]) -> Result<(Matrix<T>, Matrix<T>)> {
    let m = table.m();
    let mut y = Vec::with_capacity(items.len() * m);
    let mut k = Vec::with_capacity(items.len() * m);
    for &i in items {
        if i >= table.n() {
            return Err(PanError::Index { index: i, len: table.n() });
        }
        y.extend(table.values(i).iter().map(|&v| T::lit(v as f64)));
        k.extend(table.mask(i).iter().map(|&v| T::lit(v as f64)));
    }
    Ok((Matrix::new(items.len(), m, y)?, Matrix::new(items.len(), m, k)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MultitaskModel<T: Scalar = f64> {
    pub encoder: Encoder<T>,
    pub link: LinkHead<T>,
    pub attributes: Option<AttributeHead<T>>,
}

impl<T: Scalar> Parameterized<T> for MultitaskModel<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Matrix<T>)) {
        self.encoder.visit_params(f);
        self.link.visit_params(f);
        if let Some(a) = &self.attributes {
            a.visit_params(f);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Matrix<T>)) {
        self.encoder.visit_params_mut(f);
        self.link.visit_params_mut(f);
        if let Some(a) = &mut self.attributes {
            a.visit_params_mut(f);
        }
    }
}

impl<T: Scalar> MultitaskModel<T> {
    pub fn encode(&self, x: &Matrix<f64>, graph: &SimilarityGraph) -> Result<Matrix<T>> {
        self.encoder.encode(&x.cast::<T>(), Some(graph))
    }

    /// Per-item attribute probabilities, when the model has an attribute head.
    pub fn predict_attributes(&self, x: &Matrix<f64>, graph: &SimilarityGraph) -> Result<Option<Matrix<T>>> {
        match &self.attributes {
            Some(head) => Ok(Some(head.predict(&self.encode(x, graph)?)?)),
            None => Ok(None),
        }
    }
}

impl<T: Scalar> PairScorer for MultitaskModel<T> {
    fn score_pairs(&self, x: &Matrix<f64>, graph: &SimilarityGraph, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        self.link.score(&self.encode(x, graph)?, pairs)
    }
}

fn train_shared<T: Scalar>(
    dataset: &DatasetBundle,
    encoder_spec: &EncoderSpec,
    cfg: &TrainConfig,
    with_attributes: bool,
) -> Result<(MultitaskModel<T>, Vec<HistoryRow>)> {
    cfg.validate()?;
    let table = match with_attributes {
        true => Some(
            dataset
                .attributes
                .as_ref()
                .ok_or_else(|| PanError::contract("the multitask baseline needs an attribute table"))?,
        ),
        false => None,
    };
    let streams = SeedStream::new(cfg.seed);
    let encoder: Encoder<T> = Encoder::init(encoder_spec, dataset.features.cols(), &mut streams.rng("init.encoder"))?;
    let d = encoder.output_dim();
    let link = LinkHead::init(d, &mut streams.rng("init.link"));
    let attributes = table.map(|t| AttributeHead::init(d, t.m(), &mut streams.rng("init.attr")));
    let mut model = MultitaskModel {
        encoder,
        link,
        attributes,
    };
    let nodes = dataset.split(&cfg.train_split)?;
    let sampler = SplitSampler::new(&dataset.graph, nodes)?;
    let train_graph = dataset.graph.restricted_to(nodes);
    let x = dataset.features.cast::<T>();
    let lambda = T::lit(cfg.lambda);
    let mut adam = Adam::new(cfg.adam, cfg.learning_rate)?;
    let mut history = Vec::new();
    for epoch in 0..cfg.epochs {
        let wrap = |e: PanError| PanError::Training {
            epoch,
            source: Box::new(e),
        };
        let pairs = sampler
            .sample(cfg.pairs_per_class, &mut streams.rng_indexed("pairs", epoch as u64))
            .map_err(wrap)?;
        let mut dropout = streams.rng_indexed("dropout", epoch as u64);
        let adjacency = model
            .encoder
            .adjacency(Some(&train_graph), Some(&mut dropout))
            .map_err(wrap)?;
        let batches = epoch_batches(pairs, cfg.mode, &mut streams.rng_indexed("shuffle", epoch as u64));
        let mut total = 0.0;
        for batch in &batches {
            let mut step = || -> Result<f64> {
                let mut tape = Tape::new();
                let enc_vars = model.encoder.bind(&mut tape, true)?;
                let link_vars = model.link.bind(&mut tape)?;
                let xv = tape.constant(x.clone());
                let h = model
                    .encoder
                    .forward_on_tape(&mut tape, &enc_vars, xv, adjacency.as_ref(), Some(&mut dropout))?;
                let (l, r): (Vec<usize>, Vec<usize>) = batch.iter().map(|s| (s.i, s.j)).unzip();
                let hi = tape.gather_rows(h, l.clone())?;
                let hj = tape.gather_rows(h, r.clone())?;
                let p = LinkHead::on_tape(&mut tape, link_vars, hi, hj)?;
                let mut loss = link_bce(&mut tape, p, batch)?;
                if let (Some(head), Some(table)) = (&model.attributes, table) {
                    let items: Vec<usize> = l.iter().chain(&r).copied().collect::<BTreeSet<_>>().into_iter().collect();
                    let (y, mask) = item_targets::<T>(table, &items)?;
                    if lambda != T::zero() && mask.as_slice().iter().any(|&v| v != T::zero()) {
                        let (w, b) = head.bind(&mut tape)?;
                        let hs = tape.gather_rows(h, items)?;
                        let z = tape.matmul(hs, w)?;
                        let z = tape.add_row_broadcast(z, b)?;
                        let a = tape.sigmoid(z)?;
                        let attr = tape.bce_rows(a, y, mask)?;
                        let attr = tape.mean(attr)?;
                        let attr = tape.scale(attr, lambda)?;
                        loss = tape.add(loss, attr)?;
                    }
                }
                let value = finite(tape.value(loss).item().to_f64_lossy())?;
                let grads = tape.backward(loss)?;
                adam.step(&mut model, &grads)?;
                Ok(value)
            };
            total += step().map_err(wrap)?;
        }
        history.push(HistoryRow {
            epoch,
            train_loss: total / batches.len() as f64,
            val_metric: None,
        });
    }
    Ok((model, history))
}

/// Shared encoder with a link head and a per-image attribute head; the
/// attribute loss is weighted by `cfg.lambda`.
pub fn train_multitask_baseline<T: Scalar>(
    dataset: &DatasetBundle,
    encoder_spec: &EncoderSpec,
    cfg: &TrainConfig,
) -> Result<(MultitaskModel<T>, Vec<HistoryRow>)> {
    train_shared(dataset, encoder_spec, cfg, true)
}

/// The multitask network without its attribute head.
pub fn train_link_only<T: Scalar>(
    dataset: &DatasetBundle,
    encoder_spec: &EncoderSpec,
    cfg: &TrainConfig,
) -> Result<(MultitaskModel<T>, Vec<HistoryRow>)> {
    train_shared(dataset, encoder_spec, cfg, false)
}

/// Stage 1 predicts attributes per image from raw features; stage 2 maps
/// `[a_i; a_j]` to a link logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AttrSimilarityModel<T: Scalar = f64> {
    pub attributes: AttributeHead<T>,
    pub pair_w: Matrix<T>,
    pub pair_b: Matrix<T>,
}

impl<T: Scalar> AttrSimilarityModel<T> {
    /// Scores pairs from given per-item attribute vectors (`n x m`).
    pub fn score_from_attributes(&self, a: &Matrix<T>, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        let z = pair_inputs(a, pairs)?.matmul(&self.pair_w)?.add_row_broadcast(&self.pair_b)?;
        let p = z.elementwise(Elementwise::Sigmoid, None)?;
        Ok(p.as_slice().iter().map(|v| v.to_f64_lossy()).collect())
    }
}

impl<T: Scalar> PairScorer for AttrSimilarityModel<T> {
    fn score_pairs(&self, x: &Matrix<f64>, _graph: &SimilarityGraph, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        let a = self.attributes.predict(&x.cast::<T>())?;
        self.score_from_attributes(&a, pairs)
    }
}

fn pair_inputs<T: Scalar>(a: &Matrix<T>, pairs: &[(usize, usize)]) -> Result<Matrix<T>> {
    let m = a.cols();
    let mut data = Vec::with_capacity(pairs.len() * 2 * m);
    for &(i, j) in pairs {
        if i >= a.rows() || j >= a.rows() {
            return Err(PanError::Index {
                index: i.max(j),
                len: a.rows(),
            });
        }
        data.extend_from_slice(a.row(i));
        data.extend_from_slice(a.row(j));
    }
    Matrix::new(pairs.len(), 2 * m, data)
}

/// Ground-truth attribute matrix with unlabeled entries set to zero.
pub fn attribute_matrix<T: Scalar>(table: &AttributeTable) -> Matrix<T> {
    let m = table.m();
    let data = (0..table.n())
        .flat_map(|i| (0..m).map(move |k| T::lit((table.values(i)[k] & table.mask(i)[k]) as f64)))
        .collect();
    Matrix::new(table.n(), m, data).expect("binary entries are finite")
}

/// Two-stage pipeline. With `ground_truth_inputs`, stage 2 trains on the
/// table's labels instead of stage-1 predictions.
pub fn train_attr_similarity_baseline<T: Scalar>(
    dataset: &DatasetBundle,
    cfg: &TrainConfig,
    ground_truth_inputs: bool,
) -> Result<(AttrSimilarityModel<T>, Vec<HistoryRow>)> {
    cfg.validate()?;
    let table = dataset
        .attributes
        .as_ref()
        .ok_or_else(|| PanError::contract("the attribute-similarity baseline needs an attribute table"))?;
    let streams = SeedStream::new(cfg.seed);
    let d = dataset.features.cols();
    let m = table.m();
    let mut head = AttributeHead::init(d, m, &mut streams.rng("init.attr"));
    let nodes = dataset.split(&cfg.train_split)?;
    let x = dataset.features.cast::<T>();
    let xs = x.gather_rows(nodes)?;
    let (y, mask) = item_targets::<T>(table, nodes)?;
    let mut adam = Adam::new(cfg.adam, cfg.learning_rate)?;
    let mut history = Vec::new();
    for epoch in 0..cfg.epochs {
        let mut step = || -> Result<f64> {
            let mut tape = Tape::new();
            let (w, b) = head.bind(&mut tape)?;
            let xv = tape.constant(xs.clone());
            let z = tape.matmul(xv, w)?;
            let z = tape.add_row_broadcast(z, b)?;
            let a = tape.sigmoid(z)?;
            let l = tape.bce_rows(a, y.clone(), mask.clone())?;
            let l = tape.mean(l)?;
            let value = finite(tape.value(l).item().to_f64_lossy())?;
            let grads = tape.backward(l)?;
            adam.step(&mut head, &grads)?;
            Ok(value)
        };
        let loss = step().map_err(|e| PanError::Training {
            epoch,
            source: Box::new(e),
        })?;
        history.push(HistoryRow {
            epoch,
            train_loss: loss,
            val_metric: None,
        });
    }
    let a = if ground_truth_inputs {
        attribute_matrix::<T>(table)
    } else {
        head.predict(&x)?
    };
    let mut pair = PairHead {
        w: uniform(2 * m, 1, 2 * m, &mut streams.rng("init.pair")),
        b: Matrix::zeros(1, 1),
    };
    let sampler = SplitSampler::new(&dataset.graph, nodes)?;
    let mut adam = Adam::new(cfg.adam, cfg.learning_rate)?;
    for epoch in 0..cfg.epochs {
        let wrap = |e: PanError| PanError::Training {
            epoch,
            source: Box::new(e),
        };
        let pairs = sampler
            .sample(cfg.pairs_per_class, &mut streams.rng_indexed("pairs", epoch as u64))
            .map_err(wrap)?;
        let batches = epoch_batches(pairs, cfg.mode, &mut streams.rng_indexed("shuffle", epoch as u64));
        for batch in &batches {
            let mut step = || -> Result<()> {
                let idx: Vec<(usize, usize)> = batch.iter().map(|s| (s.i, s.j)).collect();
                let mut tape = Tape::new();
                let w = tape.param("pair.w", pair.w.clone())?;
                let b = tape.param("pair.b", pair.b.clone())?;
                let inp = tape.constant(pair_inputs(&a, &idx)?);
                let z = tape.matmul(inp, w)?;
                let z = tape.add_row_broadcast(z, b)?;
                let p = tape.sigmoid(z)?;
                let loss = link_bce(&mut tape, p, batch)?;
                finite(tape.value(loss).item().to_f64_lossy())?;
                let grads = tape.backward(loss)?;
                adam.step(&mut pair, &grads)
            };
            step().map_err(wrap)?;
        }
    }
    Ok((
        AttrSimilarityModel {
            attributes: head,
            pair_w: pair.w,
            pair_b: pair.b,
        },
        history,
    ))
}

struct PairHead<T: Scalar> {
    w: Matrix<T>,
    b: Matrix<T>,
}

impl<T: Scalar> Parameterized<T> for PairHead<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Matrix<T>)) {
        f("pair.w", &self.w);
        f("pair.b", &self.b);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Matrix<T>)) {
        f("pair.w", &mut self.w);
        f("pair.b", &mut self.b);
    }
}
