use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pan_core::data::bundle::{sha256_hex, to_json_bytes, MANIFEST_FILE};
use pan_core::evaluation::{ConditionModel, PairScorer};
use pan_core::training::model::MODEL_FORMAT;
use pan_core::training::{AttrSimilarityModel, MultitaskModel, SiameseModel};
use pan_core::PanModel;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const RUN_FORMAT: &str = "pan-run/1";
pub const BASELINE_FORMAT: &str = "pan-baseline/1";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const HISTORY_FILE: &str = "history.csv";

/// What a run consumed and produced. Free of timestamps and absolute paths
/// so repeated runs are byte-identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub command: String,
    pub version: String,
    pub config: Value,
    /// Input name to SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<Value>,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            format: RUN_FORMAT.into(),
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: serde_json::to_value(config)?,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            summary: None,
        })
    }

    pub fn add_input(&mut self, name: &str, path: &Path) -> Result<()> {
        self.inputs.insert(name.into(), hash_file(path)?);
        Ok(())
    }

    /// Writes `bytes` under `dir` and records its hash.
    pub fn emit(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.insert(name.into(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST_FILE), self)
    }
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    std::fs::write(path, to_json_bytes(value)?).with_context(|| format!("writing {}", path.display()))
}

pub fn create_dir(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.to_path_buf())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Baseline {
    Siamese { weights: SiameseModel<f64> },
    Multitask { weights: MultitaskModel<f64> },
    LinkOnly { weights: MultitaskModel<f64> },
    AttrSim { weights: AttrSimilarityModel<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BaselineFile {
    format: String,
    #[serde(flatten)]
    baseline: Baseline,
}

#[derive(Debug, Clone)]
pub enum Checkpoint {
    Pan(PanModel),
    Baseline(Baseline),
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(match self {
            Checkpoint::Pan(m) => m.to_json()?,
            Checkpoint::Baseline(b) => to_json_bytes(&BaselineFile {
                format: BASELINE_FORMAT.into(),
                baseline: b.clone(),
            })?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
        let raw: Value = serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))?;
        match raw.get("format").and_then(Value::as_str) {
            Some(MODEL_FORMAT) => Ok(Checkpoint::Pan(PanModel::load(path)?)),
            Some(BASELINE_FORMAT) => {
                let f: BaselineFile = serde_json::from_value(raw).with_context(|| format!("{}", path.display()))?;
                Ok(Checkpoint::Baseline(f.baseline))
            }
            other => bail!("{}: unrecognized checkpoint format {other:?}", path.display()),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Checkpoint::Pan(m) => m.input_dim(),
            Checkpoint::Baseline(b) => match b {
                Baseline::Siamese { weights } => weights.encoder.in_dim,
                Baseline::Multitask { weights } | Baseline::LinkOnly { weights } => weights.encoder.in_dim,
                Baseline::AttrSim { weights } => weights.attributes.w.rows(),
            },
        }
    }

    pub fn scorer(&self) -> &dyn PairScorer {
        match self {
            Checkpoint::Pan(m) => m,
            Checkpoint::Baseline(b) => match b {
                Baseline::Siamese { weights } => weights,
                Baseline::Multitask { weights } | Baseline::LinkOnly { weights } => weights,
                Baseline::AttrSim { weights } => weights,
            },
        }
    }

    pub fn conditions(&self) -> Option<&dyn ConditionModel> {
        match self {
            Checkpoint::Pan(m) => Some(m),
            Checkpoint::Baseline(_) => None,
        }
    }
}
