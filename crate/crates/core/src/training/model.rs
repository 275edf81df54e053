//! Trained PAN model: encoder head plus similarity module.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Parameterized, Tape, Var};
use crate::csm::{forward_on_tape, forward_rows, CsmParameters, CsmTapeOutput, CsmVars};
use crate::encoders::Encoder;
use crate::error::{PanError, Result};
use crate::evaluation::{ConditionModel, ConditionScores, PairScorer};
use crate::graph::SimilarityGraph;
use crate::linalg::Matrix;
use crate::rng::PanRng;
use crate::scalar::Scalar;

pub const MODEL_FORMAT: &str = "pan-model/1";

/// Checkpoint contents. Only architecture and weights are stored, so two
/// runs that learn identical weights produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ModelBundle<T: Scalar = f64> {
    pub format: String,
    pub encoder: Encoder<T>,
    pub csm: CsmParameters<T>,
    pub relevance_enabled: bool,
}

pub struct BoundModel {
    pub encoder: Vec<(Var, Option<Var>)>,
    pub csm: CsmVars,
}

impl<T: Scalar> ModelBundle<T> {
    pub fn new(encoder: Encoder<T>, csm: CsmParameters<T>, relevance_enabled: bool) -> Result<Self> {
        csm.validate()?;
        if encoder.output_dim() != csm.feature_dim() {
            return Err(PanError::Contract(format!(
                "encoder outputs d={} but the similarity module expects d={}",
                encoder.output_dim(),
                csm.feature_dim()
            )));
        }
        Ok(Self {
            format: MODEL_FORMAT.into(),
            encoder,
            csm,
            relevance_enabled,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.in_dim
    }

    pub fn conditions(&self) -> usize {
        self.csm.conditions()
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> Result<BoundModel> {
        Ok(BoundModel {
            encoder: self.encoder.bind(tape, true)?,
            csm: self.csm.bind(tape)?,
        })
    }

    /// Encodes all rows of `x` and scores `pairs` on the tape.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape<T>,
        vars: &BoundModel,
        x: Var,
        adjacency: Option<&Matrix<T>>,
        dropout_rng: Option<&mut PanRng>,
        pairs: &[(usize, usize)],
    ) -> Result<CsmTapeOutput> {
        let h = self.encoder.forward_on_tape(tape, &vars.encoder, x, adjacency, dropout_rng)?;
        let (left, right): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let hi = tape.gather_rows(h, left)?;
        let hj = tape.gather_rows(h, right)?;
        forward_on_tape(tape, &vars.csm, hi, hj, self.relevance_enabled)
    }

    fn check_input(&self, x: &Matrix<f64>) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(PanError::Contract(format!(
                "model expects feature dimension {}, data has {}",
                self.input_dim(),
                x.cols()
            )));
        }
        Ok(())
    }

    /// Evaluation-mode `(rho, omega, p)` for `pairs` of rows of `x`.
    pub fn evaluate(
        &self,
        x: &Matrix<f64>,
        graph: &SimilarityGraph,
        pairs: &[(usize, usize)],
    ) -> Result<(Matrix<T>, Matrix<T>, Matrix<T>)> {
        self.check_input(x)?;
        let h = self.encoder.encode(&x.cast::<T>(), Some(graph))?;
        let (left, right): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        forward_rows(&h.gather_rows(&left)?, &h.gather_rows(&right)?, &self.csm, self.relevance_enabled)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        crate::data::bundle::to_json_bytes(self)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| PanError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| PanError::io(path, e))?;
        let model: Self = serde_json::from_slice(&bytes)?;
        if model.format != MODEL_FORMAT {
            return Err(PanError::Contract(format!(
                "{} is not a {MODEL_FORMAT} checkpoint",
                path.display()
            )));
        }
        Self::new(model.encoder, model.csm, model.relevance_enabled)
    }
}

impl<T: Scalar> Parameterized<T> for ModelBundle<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Matrix<T>)) {
        self.encoder.visit_params(f);
        self.csm.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Matrix<T>)) {
        self.encoder.visit_params_mut(f);
        self.csm.visit_params_mut(f);
    }
}

impl<T: Scalar> PairScorer for ModelBundle<T> {
    fn score_pairs(&self, x: &Matrix<f64>, graph: &SimilarityGraph, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        let (_, _, p) = self.evaluate(x, graph, pairs)?;
        Ok(p.as_slice().iter().map(|v| v.to_f64_lossy()).collect())
    }
}

impl<T: Scalar> ConditionModel for ModelBundle<T> {
    fn condition_scores(
        &self,
        x: &Matrix<f64>,
        graph: &SimilarityGraph,
        pairs: &[(usize, usize)],
    ) -> Result<ConditionScores> {
        let (rho, omega, _) = self.evaluate(x, graph, pairs)?;
        Ok(ConditionScores {
            rho: rho.cast(),
            omega: omega.cast(),
        })
    }
}
