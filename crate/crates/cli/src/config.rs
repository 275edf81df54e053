//! Resolved run configurations. Each is built from defaults, then an
//! optional JSON file with snake_case keys, then command-line flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use pan_core::csm::CsmConfig;
use pan_core::data::synthetic::{SyntheticSpec, TaskKind};
use pan_core::encoders::{Activation, EncoderSpec};
use pan_core::training::{TrainConfig, TrainMode, Validation};
use pan_core::{CombineFn, DatasetBundle};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::{EncoderArg, EvalOptions, GenArgs, ModeArg, ModelArgs, OnOff, TaskArg, ValidationArg};

pub const SEED_ENV: &str = "PAN_SEED";

/// Unsupervised condition count when the bundle has no attributes.
pub const DEFAULT_LATENT_CONDITIONS: usize = 5;
pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_BATCH: usize = 96;

pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => Ok(Some(
            s.trim().parse().with_context(|| format!("{SEED_ENV}={s:?} is not an unsigned integer"))?,
        )),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => bail!("{SEED_ENV}: {e}"),
    }
}

/// Parses `path` into `T`, returning the raw value as well so callers can
/// tell which keys were given.
fn load_file<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<(T, Value)> {
    let Some(path) = path else {
        return Ok((T::default(), Value::Null));
    };
    let bytes = std::fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
    let raw: Value = serde_json::from_slice(&bytes).with_context(|| format!("parsing config {}", path.display()))?;
    let cfg = serde_json::from_value(raw.clone()).with_context(|| format!("config {}", path.display()))?;
    Ok((cfg, raw))
}

fn has_key(raw: &Value, path: &[&str]) -> bool {
    let mut v = raw;
    for k in path {
        match v.get(k) {
            Some(next) => v = next,
            None => return false,
        }
    }
    true
}

/// Flag, then config file, then `$PAN_SEED`, then 0.
fn resolve_seed(flag: Option<u64>, raw: &Value, key: &[&str], from_file: u64) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if has_key(raw, key) {
        return Ok(from_file);
    }
    Ok(env_seed()?.unwrap_or(0))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub seed: u64,
    pub synthetic: SyntheticSpec,
}

impl GenConfig {
    pub fn resolve(a: &GenArgs) -> Result<Self> {
        let (mut cfg, raw): (GenConfig, _) = load_file(a.config.as_deref())?;
        cfg.seed = resolve_seed(a.seed, &raw, &["seed"], cfg.seed)?;
        let s = &mut cfg.synthetic;
        if let Some(t) = a.task {
            s.task_kind = match t {
                TaskArg::CompatManifest => TaskKind::CompatibilityManifestation,
                TaskArg::Fewshot => TaskKind::FewshotClusters,
                TaskArg::Separable => TaskKind::LinearSeparable,
            };
        }
        set(&mut s.n_items, a.items);
        set(&mut s.d, a.dim);
        set(&mut s.m_attributes, a.attrs);
        set(&mut s.manifestation_count, a.manifestations);
        set(&mut s.noise_sd, a.noise);
        set(&mut s.background_sd, a.background_noise);
        set(&mut s.prevalence, a.prevalence);
        set(&mut s.classes, a.classes);
        set(&mut s.separation, a.separation);
        set(&mut s.categories, a.categories);
        s.validate()?;
        Ok(cfg)
    }
}

/// Maps the default `train`/`test` names onto a base/val/novel bundle when
/// the requested split is absent.
pub fn split_for(bundle: &DatasetBundle, name: &str) -> String {
    let alias = match name {
        "train" => "base",
        "test" => "novel",
        _ => return name.to_string(),
    };
    if !bundle.splits.contains_key(name) && bundle.splits.contains_key(alias) {
        alias.to_string()
    } else {
        name.to_string()
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Pan,
    Siamese,
    Multitask,
    LinkOnly,
    AttrSim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SupervisionKind {
    #[default]
    Supervised,
    Unsupervised,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeSource {
    #[default]
    Labels,
    /// Every label masked out.
    None,
    /// Labeled values replaced by coin flips.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    pub model: ModelKind,
    pub encoder: EncoderSpec,
    pub supervision: SupervisionKind,
    /// Total condition count; derived from the bundle when absent.
    pub conditions: Option<usize>,
    /// Extra unsupervised conditions in hybrid mode.
    pub latent_conditions: usize,
    pub relevance: bool,
    pub attributes: AttributeSource,
    pub margin: f64,
    pub train: TrainConfig,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Pan,
            encoder: EncoderSpec::Identity,
            supervision: SupervisionKind::Supervised,
            conditions: None,
            latent_conditions: 2,
            relevance: true,
            attributes: AttributeSource::Labels,
            margin: 0.2,
            train: TrainConfig::default(),
        }
    }
}

impl TrainRunConfig {
    pub fn load(path: Option<&Path>, flags: &ModelArgs) -> Result<Self> {
        let (mut cfg, raw): (TrainRunConfig, _) = load_file(path)?;
        cfg.train.seed = resolve_seed(flags.seed, &raw, &["train", "seed"], cfg.train.seed)?;
        cfg.apply(flags)?;
        Ok(cfg)
    }

    fn apply(&mut self, a: &ModelArgs) -> Result<()> {
        set(&mut self.model, a.model);
        set(&mut self.supervision, a.supervision);
        if a.conditions.is_some() {
            self.conditions = a.conditions;
        }
        set(&mut self.latent_conditions, a.latent);
        if let Some(r) = a.relevance {
            self.relevance = r == OnOff::On;
        }
        if let Some(src) = a.attribute_source() {
            self.attributes = src;
        }
        set(&mut self.margin, a.margin);
        self.apply_encoder(a)?;

        let t = &mut self.train;
        set(&mut t.fa, a.fa);
        set(&mut t.lambda, a.lambda);
        set(&mut t.epochs, a.epochs);
        set(&mut t.learning_rate, a.lr);
        set(&mut t.pairs_per_class, a.pairs_per_class);
        set(&mut t.validation_every, a.validation_every);
        match a.mode {
            Some(ModeArg::SingleBatch) => t.mode = TrainMode::SingleBatch,
            Some(ModeArg::Minibatch) => {
                t.mode = TrainMode::Minibatch {
                    batch_size: a.batch_size.unwrap_or(DEFAULT_BATCH),
                }
            }
            None => {
                if let (Some(b), TrainMode::Minibatch { batch_size }) = (a.batch_size, &mut t.mode) {
                    *batch_size = b;
                }
            }
        }
        if let Some(v) = a.validation {
            t.validation = match v {
                ValidationArg::None => Validation::None,
                ValidationArg::PairAuc => Validation::PairAuc { pairs_per_class: 500 },
                ValidationArg::FewShot => Validation::FewShot {
                    way: 5,
                    shot: 5,
                    query: 16,
                    episodes: 100,
                },
            };
        }
        t.validate()?;
        Ok(())
    }

    fn apply_encoder(&mut self, a: &ModelArgs) -> Result<()> {
        let kind = a.encoder.or(match self.encoder {
            EncoderSpec::Identity => None,
            EncoderSpec::Mlp { .. } => Some(EncoderArg::Mlp),
            EncoderSpec::Gcn { .. } => Some(EncoderArg::Gcn),
        });
        let Some(kind) = kind else {
            return Ok(());
        };
        let touched = a.encoder.is_some()
            || a.hidden.is_some()
            || a.layers.is_some()
            || a.layer_dropout.is_some()
            || a.edge_dropout.is_some();
        if !touched {
            return Ok(());
        }
        self.encoder = match (kind, &self.encoder) {
            (EncoderArg::Identity, _) => EncoderSpec::Identity,
            (EncoderArg::Mlp, current) => {
                let (depth, width, activation) = match current {
                    EncoderSpec::Mlp { layer_dims, activation } => {
                        (layer_dims.len(), layer_dims.last().copied().unwrap_or(DEFAULT_HIDDEN), *activation)
                    }
                    _ => (1, DEFAULT_HIDDEN, Activation::Relu),
                };
                let depth = a.layers.unwrap_or(depth);
                let width = a.hidden.unwrap_or(width);
                EncoderSpec::Mlp {
                    layer_dims: vec![width; depth],
                    activation,
                }
            }
            (EncoderArg::Gcn, current) => {
                let mut spec = match current {
                    EncoderSpec::Gcn { .. } => current.clone(),
                    _ => EncoderSpec::gcn(2, DEFAULT_HIDDEN),
                };
                if let EncoderSpec::Gcn {
                    num_layers,
                    hidden_dim,
                    layer_dropout,
                    edge_dropout,
                    ..
                } = &mut spec
                {
                    set(num_layers, a.layers);
                    set(hidden_dim, a.hidden);
                    set(layer_dropout, a.layer_dropout);
                    set(edge_dropout, a.edge_dropout);
                }
                spec
            }
        };
        self.encoder.validate()?;
        Ok(())
    }

    /// Supervised label length for this config on `bundle`, if attributes apply.
    fn label_len(&self, bundle: &DatasetBundle) -> Option<usize> {
        bundle.attributes.as_ref().map(|t| self.train.fa.label_len(t.m()))
    }

    /// Fills in the condition count and returns the CSM configuration.
    pub fn resolve_csm(&mut self, bundle: &DatasetBundle) -> Result<CsmConfig> {
        let csm = match self.supervision {
            SupervisionKind::Unsupervised => {
                let m = self
                    .conditions
                    .or_else(|| self.label_len(bundle))
                    .unwrap_or(DEFAULT_LATENT_CONDITIONS);
                CsmConfig::unsupervised(m)
            }
            SupervisionKind::Supervised => {
                let Some(len) = self.label_len(bundle) else {
                    bail!("supervised training needs a bundle with attributes");
                };
                let m = self.conditions.unwrap_or(len);
                if m != len {
                    bail!(
                        "{} labels over this bundle need exactly {len} supervised conditions, got {m}",
                        self.train.fa
                    );
                }
                CsmConfig::supervised(m)
            }
            SupervisionKind::Hybrid => {
                let Some(len) = self.label_len(bundle) else {
                    bail!("hybrid training needs a bundle with attributes");
                };
                let m = self.conditions.unwrap_or(len + self.latent_conditions);
                if m <= len {
                    bail!("hybrid training needs more than {len} conditions, got {m}");
                }
                self.latent_conditions = m - len;
                CsmConfig::hybrid(len, m - len)
            }
        };
        let csm = csm.with_relevance(self.relevance);
        csm.validate()?;
        self.conditions = Some(csm.m);
        Ok(csm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EvalTask {
    Fitb,
    Auc,
    Fewshot,
    Recall,
    AttrMap,
    RankReport,
    PairAccuracy,
}

impl EvalTask {
    pub fn name(self) -> &'static str {
        match self {
            EvalTask::Fitb => "fitb",
            EvalTask::Auc => "auc",
            EvalTask::Fewshot => "fewshot",
            EvalTask::Recall => "recall",
            EvalTask::AttrMap => "attr-map",
            EvalTask::RankReport => "rank-report",
            EvalTask::PairAccuracy => "pair-accuracy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub split: String,
    pub seed: u64,
    pub choices: usize,
    pub way: usize,
    pub shot: usize,
    pub query: usize,
    pub episodes: usize,
    pub k: usize,
    pub eval_pairs: usize,
    pub fa: CombineFn,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            split: "test".into(),
            seed: 0,
            choices: 4,
            way: 5,
            shot: 5,
            query: 16,
            episodes: 600,
            k: 1,
            eval_pairs: 1000,
            fa: CombineFn::Or,
        }
    }
}

impl EvalConfig {
    pub fn load(path: Option<&Path>, seed: Option<u64>, fa: Option<CombineFn>, o: &EvalOptions) -> Result<Self> {
        let (mut cfg, raw): (EvalConfig, _) = load_file(path)?;
        cfg.seed = resolve_seed(seed, &raw, &["seed"], cfg.seed)?;
        set(&mut cfg.fa, fa);
        cfg.apply(o);
        cfg.check()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &EvalOptions) {
        if let Some(s) = &o.split {
            self.split = s.clone();
        }
        set(&mut self.choices, o.choices);
        set(&mut self.way, o.way);
        set(&mut self.shot, o.shot);
        set(&mut self.query, o.query);
        set(&mut self.episodes, o.episodes.map(|e| e as usize));
        set(&mut self.k, o.k.map(|k| k as usize));
        set(&mut self.eval_pairs, o.eval_pairs);
    }

    pub fn check(&self) -> Result<()> {
        if self.episodes == 0 || self.k == 0 || self.choices == 0 || self.eval_pairs == 0 {
            bail!("episodes, k, choices and eval_pairs must be at least 1");
        }
        if self.way == 0 || self.shot == 0 || self.query == 0 {
            bail!("way, shot and query must be at least 1");
        }
        Ok(())
    }
}
