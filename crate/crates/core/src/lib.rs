//! Pairwise attribute-informed similarity networks over precomputed features.
//!
//! The crate is generic over the scalar type; [`Dense2D`] and friends fix it
//! to `f64`, which is what training and evaluation use by default.

pub mod attributes;
pub mod autodiff;
pub mod csm;
pub mod data;
pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod graph;
pub mod linalg;
pub mod rng;
pub mod scalar;
pub mod training;

pub use attributes::{combine_pair, AttributeTable, CombineFn, PairAttributeLabel};
pub use autodiff::{GradientStore, ParamMap, Parameterized, Tape, Var};
pub use csm::{csm_batch_forward, csm_forward, CsmConfig, CsmOutput, CsmParameters, Supervision};
pub use encoders::{Activation, Encoder, EncoderSpec};
pub use error::{PanError, Result};
pub use graph::{drop_edges, normalize_adjacency, SimilarityGraph};
pub use linalg::{Elementwise, Matrix};
pub use rng::{PanRng, SeedStream};
pub use scalar::Scalar;
pub use data::{DatasetBundle, SyntheticSpec, TaskKind};
pub use evaluation::{ConditionModel, Episode, FitbQuestion, MetricReport, PairScorer};
pub use training::{ModelBundle, TrainConfig, TrainMode};

pub type Dense2D = Matrix<f64>;
pub type Dense2DF32 = Matrix<f32>;
pub type FeatureMatrix = Matrix<f64>;
pub type CsmParams = CsmParameters<f64>;
pub type CsmParamsF32 = CsmParameters<f32>;
pub type PanModel = ModelBundle<f64>;
pub type PanModelF32 = ModelBundle<f32>;
