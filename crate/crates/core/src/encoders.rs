//! Trainable heads over precomputed features: identity, MLP, and a graph
//! convolutional encoder with layer dropout and edge dropout.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Parameterized, Tape, Var};
use crate::error::{PanError, Result};
use crate::graph::{drop_edges_with, normalize_adjacency, SimilarityGraph};
use crate::linalg::Matrix;
use crate::rng::{rng_from_seed, PanRng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderSpec {
    Identity,
    /// Dense layers with the given output widths; the activation applies to
    /// every layer but the last.
    Mlp {
        layer_dims: Vec<usize>,
        activation: Activation,
    },
    Gcn {
        num_layers: usize,
        hidden_dim: usize,
        layer_dropout: f64,
        edge_dropout: f64,
        #[serde(default)]
        activation: Activation,
    },
}

impl EncoderSpec {
    pub fn gcn(num_layers: usize, hidden_dim: usize) -> Self {
        EncoderSpec::Gcn {
            num_layers,
            hidden_dim,
            layer_dropout: 0.5,
            edge_dropout: 0.15,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EncoderSpec::Identity => Ok(()),
            EncoderSpec::Mlp { layer_dims, .. } => {
                if layer_dims.is_empty() || layer_dims.contains(&0) {
                    return Err(PanError::contract("mlp needs at least one non-empty layer"));
                }
                Ok(())
            }
            EncoderSpec::Gcn {
                num_layers,
                hidden_dim,
                layer_dropout,
                edge_dropout,
                ..
            } => {
                if *num_layers == 0 || *hidden_dim == 0 {
                    return Err(PanError::contract("gcn needs num_layers >= 1 and hidden_dim >= 1"));
                }
                for p in [layer_dropout, edge_dropout] {
                    if !(0.0..1.0).contains(p) {
                        return Err(PanError::contract(format!("dropout {p} outside [0, 1)")));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn output_dim(&self, in_dim: usize) -> usize {
        match self {
            EncoderSpec::Identity => in_dim,
            EncoderSpec::Mlp { layer_dims, .. } => *layer_dims.last().unwrap_or(&in_dim),
            EncoderSpec::Gcn { hidden_dim, .. } => *hidden_dim,
        }
    }

    pub fn is_graph(&self) -> bool {
        matches!(self, EncoderSpec::Gcn { .. })
    }

    fn layer_dims(&self) -> Vec<usize> {
        match self {
            EncoderSpec::Identity => Vec::new(),
            EncoderSpec::Mlp { layer_dims, .. } => layer_dims.clone(),
            EncoderSpec::Gcn {
                num_layers,
                hidden_dim,
                ..
            } => vec![*hidden_dim; *num_layers],
        }
    }

    fn activation(&self) -> Activation {
        match self {
            EncoderSpec::Identity => Activation::Linear,
            EncoderSpec::Mlp { activation, .. } | EncoderSpec::Gcn { activation, .. } => *activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Layer<T: Scalar = f64> {
    pub w: Matrix<T>,
    pub b: Option<Matrix<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Encoder<T: Scalar = f64> {
    pub spec: EncoderSpec,
    pub in_dim: usize,
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Encoder<T> {
    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`; MLP biases zero.
    pub fn init(spec: &EncoderSpec, in_dim: usize, rng: &mut PanRng) -> Result<Self> {
        spec.validate()?;
        if in_dim == 0 {
            return Err(PanError::contract("encoder input dimension must be at least 1"));
        }
        let with_bias = matches!(spec, EncoderSpec::Mlp { .. });
        let mut fan_in = in_dim;
        let mut layers = Vec::new();
        for out in spec.layer_dims() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let data = (0..fan_in * out)
                .map(|_| T::lit(rng.random_range(-bound..=bound)))
                .collect();
            layers.push(Layer {
                w: Matrix::from_raw(fan_in, out, data),
                b: with_bias.then(|| Matrix::zeros(1, out)),
            });
            fan_in = out;
        }
        Ok(Self {
            spec: spec.clone(),
            in_dim,
            layers,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim(self.in_dim)
    }

    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Result<Vec<(Var, Option<Var>)>> {
        self.layers
            .iter()
            .enumerate()
            .map(|(k, layer)| {
                let w = if trainable {
                    tape.param(&format!("enc.{k}.w"), layer.w.clone())?
                } else {
                    tape.constant(layer.w.clone())
                };
                let b = match &layer.b {
                    Some(b) if trainable => Some(tape.param(&format!("enc.{k}.b"), b.clone())?),
                    Some(b) => Some(tape.constant(b.clone())),
                    None => None,
                };
                Ok((w, b))
            })
            .collect()
    }

    /// Dense adjacency used as context: `None` for non-graph encoders. In
    /// training mode edges are dropped first.
    pub fn adjacency(
        &self,
        graph: Option<&SimilarityGraph>,
        edge_rng: Option<&mut PanRng>,
    ) -> Result<Option<Matrix<T>>> {
        let EncoderSpec::Gcn { edge_dropout, .. } = &self.spec else {
            return Ok(None);
        };
        let g = graph.ok_or_else(|| PanError::contract("graph encoder needs a graph"))?;
        Ok(Some(match edge_rng {
            Some(rng) => normalize_adjacency(&drop_edges_with(g, *edge_dropout, rng)?),
            None => normalize_adjacency(g),
        }))
    }

    /// Records the encoder over all rows of `x`.
    ///
    /// `adjacency` comes from [`Encoder::adjacency`]. When `dropout_rng` is
    /// given the graph encoder applies inverted dropout to every layer input.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape<T>,
        vars: &[(Var, Option<Var>)],
        x: Var,
        adjacency: Option<&Matrix<T>>,
        mut dropout_rng: Option<&mut PanRng>,
    ) -> Result<Var> {
        let (rows, cols) = tape.value(x).shape();
        if cols != self.in_dim {
            return Err(PanError::dim("encoder input", (rows, cols), (rows, self.in_dim)));
        }
        let activation = self.spec.activation();
        let last = vars.len().saturating_sub(1);
        match &self.spec {
            EncoderSpec::Identity => Ok(x),
            EncoderSpec::Mlp { .. } => {
                let mut h = x;
                for (k, &(w, b)) in vars.iter().enumerate() {
                    h = tape.matmul(h, w)?;
                    if let Some(b) = b {
                        h = tape.add_row_broadcast(h, b)?;
                    }
                    if k < last && activation == Activation::Relu {
                        h = tape.relu(h)?;
                    }
                }
                Ok(h)
            }
            EncoderSpec::Gcn { layer_dropout, .. } => {
                let adjacency = adjacency.ok_or_else(|| PanError::contract("graph encoder needs a graph"))?;
                if adjacency.rows() != rows {
                    return Err(PanError::Contract(format!(
                        "graph has {} nodes but features have {rows} rows",
                        adjacency.rows()
                    )));
                }
                let a = tape.constant(adjacency.clone());
                let mut h = x;
                for (k, &(w, _)) in vars.iter().enumerate() {
                    if let Some(rng) = dropout_rng.as_deref_mut() {
                        if *layer_dropout > 0.0 {
                            let (r, c) = tape.value(h).shape();
                            let keep = T::one() / T::lit(1.0 - layer_dropout);
                            let data = (0..r * c)
                                .map(|_| {
                                    if rng.random::<f64>() < *layer_dropout {
                                        T::zero()
                                    } else {
                                        keep
                                    }
                                })
                                .collect();
                            let mask = tape.constant(Matrix::from_raw(r, c, data));
                            h = tape.mul(h, mask)?;
                        }
                    }
                    let hw = tape.matmul(h, w)?;
                    h = tape.matmul(a, hw)?;
                    if k < last && activation == Activation::Relu {
                        h = tape.relu(h)?;
                    }
                }
                Ok(h)
            }
        }
    }

    fn run(&self, x: &Matrix<T>, graph: Option<&SimilarityGraph>, rng: Option<&mut PanRng>) -> Result<Matrix<T>> {
        if matches!(self.spec, EncoderSpec::Identity) {
            return Ok(x.clone());
        }
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false)?;
        let xv = tape.constant(x.clone());
        let out = match rng {
            Some(rng) => {
                let a = self.adjacency(graph, Some(&mut *rng))?;
                self.forward_on_tape(&mut tape, &vars, xv, a.as_ref(), Some(rng))?
            }
            None => {
                let a = self.adjacency(graph, None)?;
                self.forward_on_tape(&mut tape, &vars, xv, a.as_ref(), None)?
            }
        };
        Ok(tape.value(out).clone())
    }

    /// Forward pass outside of training.
    pub fn encode(&self, x: &Matrix<T>, graph: Option<&SimilarityGraph>) -> Result<Matrix<T>> {
        self.run(x, graph, None)
    }

    /// Forward pass with edge and layer dropout drawn from `seed`.
    pub fn encode_training(&self, x: &Matrix<T>, graph: Option<&SimilarityGraph>, seed: u64) -> Result<Matrix<T>> {
        self.run(x, graph, Some(&mut rng_from_seed(seed)))
    }
}

/// Spec-level entry point: `training` selects dropout, `seed` drives it.
pub fn encode<T: Scalar>(
    encoder: &Encoder<T>,
    x: &Matrix<T>,
    graph: Option<&SimilarityGraph>,
    training: bool,
    seed: u64,
) -> Result<Matrix<T>> {
    if encoder.spec.is_graph() && graph.is_none() {
        return Err(PanError::contract("graph encoder needs a graph"));
    }
    if training {
        encoder.encode_training(x, graph, seed)
    } else {
        encoder.encode(x, graph)
    }
}

impl<T: Scalar> Parameterized<T> for Encoder<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Matrix<T>)) {
        for (k, layer) in self.layers.iter().enumerate() {
            f(&format!("enc.{k}.w"), &layer.w);
            if let Some(b) = &layer.b {
                f(&format!("enc.{k}.b"), b);
            }
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Matrix<T>)) {
        for (k, layer) in self.layers.iter_mut().enumerate() {
            f(&format!("enc.{k}.w"), &mut layer.w);
            if let Some(b) = &mut layer.b {
                f(&format!("enc.{k}.b"), b);
            }
        }
    }
}
