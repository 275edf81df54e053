//! Dataset files, synthetic generators and evaluation task builders.

pub mod bundle;
pub mod features;
pub mod synthetic;
pub mod tasks;

pub use bundle::{BundleManifest, DatasetBundle};
pub use features::{load_features, load_panf, read_feature_csv, read_panf, write_feature_csv, write_panf};
pub use synthetic::{
    gen_compatibility_manifestation, gen_few_shot_clusters, gen_linear_separable, generate, presence_only_bayes,
    Generated, OracleReport, SyntheticSpec, TaskKind,
};
pub use tasks::{build_episodes, build_fitb_questions, resample_negative_sets};
