//! Objective, sampling, optimizer, and the training loops.

pub mod adam;
pub mod baselines;
pub mod loss;
pub mod model;
pub mod pan;
pub mod sampling;

pub use adam::{Adam, AdamConfig};
pub use baselines::{
    train_attr_similarity_baseline, train_link_only, train_multitask_baseline, train_siamese_baseline,
    AttrSimilarityModel, MultitaskModel, SiameseModel,
};
pub use loss::{batch_loss_on_tape, total_loss, triplet_loss_on_tape, AttributeTargets};
pub use model::ModelBundle;
pub use pan::{held_out_pairs, init_model, train_pan, write_history_csv, HistoryRow, TrainConfig, TrainMode, TrainOutcome, Validation};
pub use sampling::{sample_pairs, sample_pairs_within, PairSample};
