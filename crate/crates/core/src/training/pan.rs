//! The PAN training loop.

use serde::{Deserialize, Serialize};

use crate::attributes::{AttributeTable, CombineFn};
use crate::autodiff::Tape;
use crate::csm::{init_params_with, CsmConfig, Supervision};
use crate::data::bundle::DatasetBundle;
use crate::data::tasks::build_episodes;
use crate::encoders::{Encoder, EncoderSpec};
use crate::error::{PanError, Result};
use crate::evaluation::{few_shot_accuracy, mann_whitney_auc, Episode, PairScorer};
use crate::graph::SimilarityGraph;
use crate::linalg::Matrix;
use crate::rng::SeedStream;
use crate::scalar::Scalar;

use super::adam::{Adam, AdamConfig};
use super::loss::{batch_loss_on_tape, AttributeTargets};
use super::model::ModelBundle;
use super::sampling::{sample_pairs, shuffle_pairs, PairSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    SingleBatch,
    Minibatch { batch_size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Validation {
    None,
    /// AUC over balanced pairs drawn once from the validation split.
    PairAuc { pairs_per_class: usize },
    FewShot {
        way: usize,
        shot: usize,
        query: usize,
        episodes: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub mode: TrainMode,
    pub seed: u64,
    pub adam: AdamConfig,
    pub fa: CombineFn,
    pub validation_every: usize,
    /// Positives (and as many negatives) drawn per epoch.
    pub pairs_per_class: usize,
    pub validation: Validation,
    pub train_split: String,
    pub val_split: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            learning_rate: 0.001,
            epochs: 1000,
            mode: TrainMode::SingleBatch,
            seed: 0,
            adam: AdamConfig::default(),
            fa: CombineFn::Or,
            validation_every: 50,
            pairs_per_class: 1000,
            validation: Validation::PairAuc { pairs_per_class: 500 },
            train_split: "train".into(),
            val_split: "val".into(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(PanError::Contract(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(PanError::Contract(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.pairs_per_class == 0 {
            return Err(PanError::contract("pairs_per_class must be at least 1"));
        }
        if let TrainMode::Minibatch { batch_size: 0 } = self.mode {
            return Err(PanError::contract("batch size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T: Scalar = f64> {
    pub model: ModelBundle<T>,
    pub history: Vec<HistoryRow>,
    pub best_epoch: Option<usize>,
    pub best_val: Option<f64>,
}

pub fn write_history_csv<W: std::io::Write>(rows: &[HistoryRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "train_loss", "val_metric"])
        .map_err(|e| crate::attributes::csv_err("history", e))?;
    for r in rows {
        w.write_record([
            r.epoch.to_string(),
            format!("{:?}", r.train_loss),
            r.val_metric.map(|v| format!("{v:?}")).unwrap_or_default(),
        ])
        .map_err(|e| crate::attributes::csv_err("history", e))?;
    }
    w.flush().map_err(|e| PanError::io("history", e))
}

/// Pair sampler over the subgraph induced by one split.
pub(crate) struct SplitSampler {
    nodes: Vec<usize>,
    sub: SimilarityGraph,
}

impl SplitSampler {
    pub(crate) fn new(graph: &SimilarityGraph, nodes: &[usize]) -> Result<Self> {
        Ok(Self {
            nodes: nodes.to_vec(),
            sub: graph.induced(nodes)?,
        })
    }

    pub(crate) fn sample(&self, count: usize, rng: &mut crate::rng::PanRng) -> Result<Vec<PairSample>> {
        Ok(sample_pairs(&self.sub, count, rng)?
            .into_iter()
            .map(|s| PairSample {
                i: self.nodes[s.i],
                j: self.nodes[s.j],
                e: s.e,
            })
            .collect())
    }
}

/// Balanced held-out pairs from `split`.
pub fn held_out_pairs(dataset: &DatasetBundle, split: &str, count_per_class: usize, seed: u64) -> Result<Vec<PairSample>> {
    let sampler = SplitSampler::new(&dataset.graph, dataset.split(split)?)?;
    sampler.sample(count_per_class, &mut SeedStream::new(seed).rng("held-out"))
}

/// Pair labels padded with masked zeros up to `m` conditions.
pub fn attribute_targets<T: Scalar>(
    table: &AttributeTable,
    pairs: &[PairSample],
    fa: CombineFn,
    m: usize,
) -> Result<AttributeTargets<T>> {
    let len = fa.label_len(table.m());
    if len > m {
        return Err(PanError::Contract(format!("{fa} labels need {len} conditions, model has {m}")));
    }
    let mut labels = vec![T::zero(); pairs.len() * m];
    let mut mask = vec![T::zero(); pairs.len() * m];
    for (r, p) in pairs.iter().enumerate() {
        let lab = table.pair_label(p.i, p.j, fa)?;
        for c in 0..len {
            labels[r * m + c] = T::lit(lab.labels[c] as f64);
            mask[r * m + c] = T::lit(lab.mask[c] as f64);
        }
    }
    Ok(AttributeTargets {
        labels: Matrix::new(pairs.len(), m, labels)?,
        mask: Matrix::new(pairs.len(), m, mask)?,
    })
}

fn check_supervision<'a>(dataset: &'a DatasetBundle, csm: &CsmConfig, fa: CombineFn) -> Result<Option<&'a AttributeTable>> {
    csm.validate()?;
    if csm.supervision == Supervision::Unsupervised {
        return Ok(None);
    }
    let table = dataset
        .attributes
        .as_ref()
        .ok_or_else(|| PanError::contract("supervised conditions need an attribute table"))?;
    let len = fa.label_len(table.m());
    if csm.supervised_len() != len {
        return Err(PanError::Contract(format!(
            "{} supervised conditions configured, but {fa} labels over {} attributes have length {len}",
            csm.supervised_len(),
            table.m()
        )));
    }
    Ok(Some(table))
}

enum Validator {
    None,
    Pairs(Vec<PairSample>),
    Episodes(Vec<Episode>),
}

impl Validator {
    fn new(dataset: &DatasetBundle, cfg: &TrainConfig, streams: &SeedStream) -> Result<Self> {
        if cfg.validation_every == 0 {
            return Ok(Self::None);
        }
        Ok(match cfg.validation {
            Validation::None => Self::None,
            Validation::PairAuc { pairs_per_class } => {
                let sampler = SplitSampler::new(&dataset.graph, dataset.split(&cfg.val_split)?)?;
                Self::Pairs(sampler.sample(pairs_per_class, &mut streams.rng("validation"))?)
            }
            Validation::FewShot {
                way,
                shot,
                query,
                episodes,
            } => Self::Episodes(build_episodes(
                dataset,
                &cfg.val_split,
                way,
                shot,
                query,
                episodes,
                streams.child("validation").root(),
            )?),
        })
    }

    fn score(&self, model: &dyn PairScorer, features: &Matrix<f64>) -> Result<Option<f64>> {
        match self {
            Self::None => Ok(None),
            Self::Pairs(pairs) => {
                let g = SimilarityGraph::empty(features.rows());
                let idx: Vec<(usize, usize)> = pairs.iter().map(|p| (p.i, p.j)).collect();
                let s = model.score_pairs(features, &g, &idx)?;
                let pos: Vec<f64> = s.iter().zip(pairs).filter(|(_, p)| p.e == 1).map(|(v, _)| *v).collect();
                let neg: Vec<f64> = s.iter().zip(pairs).filter(|(_, p)| p.e == 0).map(|(v, _)| *v).collect();
                Ok(Some(mann_whitney_auc(&pos, &neg)?))
            }
            Self::Episodes(eps) => Ok(Some(few_shot_accuracy(model, eps, features)?.value)),
        }
    }
}

/// Splits one epoch's pairs into optimizer steps.
pub(crate) fn epoch_batches(
    mut pairs: Vec<PairSample>,
    mode: TrainMode,
    rng: &mut crate::rng::PanRng,
) -> Vec<Vec<PairSample>> {
    match mode {
        TrainMode::SingleBatch => vec![pairs],
        TrainMode::Minibatch { batch_size } => {
            shuffle_pairs(&mut pairs, rng);
            pairs.chunks(batch_size).map(<[PairSample]>::to_vec).collect()
        }
    }
}

pub fn init_model<T: Scalar>(
    encoder_spec: &EncoderSpec,
    in_dim: usize,
    csm: &CsmConfig,
    streams: &SeedStream,
) -> Result<ModelBundle<T>> {
    let encoder = Encoder::init(encoder_spec, in_dim, &mut streams.rng("init.encoder"))?;
    let params = init_params_with(encoder.output_dim(), csm.m, &mut streams.rng("init.csm"))?;
    ModelBundle::new(encoder, params, csm.relevance_enabled)
}

/// Minimizes the pair objective on the training split and returns the
/// checkpoint with the best validation metric (the final one when no
/// validation runs).
pub fn train_pan<T: Scalar>(
    dataset: &DatasetBundle,
    encoder_spec: &EncoderSpec,
    csm: &CsmConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    dataset.validate()?;
    let table = check_supervision(dataset, csm, cfg.fa)?;
    let streams = SeedStream::new(cfg.seed);
    let mut model: ModelBundle<T> = init_model(encoder_spec, dataset.features.cols(), csm, &streams)?;
    let mut outcome = TrainOutcome {
        model: model.clone(),
        history: Vec::new(),
        best_epoch: None,
        best_val: None,
    };
    if cfg.epochs == 0 {
        return Ok(outcome);
    }
    let train_nodes = dataset.split(&cfg.train_split)?;
    let sampler = SplitSampler::new(&dataset.graph, train_nodes)?;
    let train_graph = dataset.graph.restricted_to(train_nodes);
    let validator = Validator::new(dataset, cfg, &streams)?;
    let x = dataset.features.cast::<T>();
    let lambda = T::lit(cfg.lambda);
    let mut adam = Adam::new(cfg.adam, cfg.learning_rate)?;

    for epoch in 0..cfg.epochs {
        let wrap = |e: PanError| PanError::Training {
            epoch,
            source: Box::new(e),
        };
        let pairs = sampler.sample(cfg.pairs_per_class, &mut streams.rng_indexed("pairs", epoch as u64)).map_err(wrap)?;
        let mut dropout = streams.rng_indexed("dropout", epoch as u64);
        let adjacency = model
            .encoder
            .adjacency(Some(&train_graph), Some(&mut dropout))
            .map_err(wrap)?;
        let batches = epoch_batches(pairs, cfg.mode, &mut streams.rng_indexed("shuffle", epoch as u64));
        let mut loss_sum = 0.0;
        for batch in &batches {
            let mut step = || -> Result<f64> {
                let targets = match table {
                    Some(t) => Some(attribute_targets::<T>(t, batch, cfg.fa, csm.m)?),
                    None => None,
                };
                let links: Vec<T> = batch.iter().map(|p| T::lit(p.e as f64)).collect();
                let idx: Vec<(usize, usize)> = batch.iter().map(|p| (p.i, p.j)).collect();
                let mut tape = Tape::new();
                let vars = model.bind(&mut tape)?;
                let xv = tape.constant(x.clone());
                let out = model.forward_on_tape(&mut tape, &vars, xv, adjacency.as_ref(), Some(&mut dropout), &idx)?;
                let loss = batch_loss_on_tape(&mut tape, out.p, out.rho, &links, targets.as_ref(), lambda)?;
                let value = tape.value(loss).item().to_f64_lossy();
                if !value.is_finite() {
                    return Err(PanError::Numeric(format!("training loss is {value}")));
                }
                let grads = tape.backward(loss)?;
                if !grads.is_finite() {
                    return Err(PanError::Numeric("gradient has non-finite entries".into()));
                }
                adam.step(&mut model, &grads)?;
                Ok(value)
            };
            loss_sum += step().map_err(wrap)?;
        }
        let is_val_epoch = cfg.validation_every > 0 && ((epoch + 1) % cfg.validation_every == 0 || epoch + 1 == cfg.epochs);
        let val = if is_val_epoch {
            validator.score(&model, &dataset.features).map_err(wrap)?
        } else {
            None
        };
        if let Some(v) = val {
            if outcome.best_val.is_none_or(|b| v > b) {
                outcome.best_val = Some(v);
                outcome.best_epoch = Some(epoch);
                outcome.model = model.clone();
            }
        }
        outcome.history.push(HistoryRow {
            epoch,
            train_loss: loss_sum / batches.len() as f64,
            val_metric: val,
        });
    }
    if outcome.best_epoch.is_none() {
        outcome.model = model;
    }
    Ok(outcome)
}

