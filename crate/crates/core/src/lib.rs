//! Dynamic ensemble selection where the competence of each base classifier
//! is predicted by a meta-classifier trained on meta-features extracted from
//! local regions, output profiles and posterior estimates.
//!
//! Modules follow the pipeline order: data handling, the base pool, regions
//! of competence, meta-features, the meta-classifier, the selection engine,
//! reference techniques, statistical tests, and the experiment harness.

pub mod base;
pub mod baselines;
pub mod dataset;
pub mod descore;
pub mod error;
pub mod harness;
pub mod metaclassifier;
pub mod metafeatures;
pub mod region;
pub mod seed;
pub mod stats;

pub use base::{bagging_pool, train_perceptron, LinearClassifier, PerceptronConfig, Pool};
pub use baselines::{Baseline, BaselineConfig};
pub use dataset::{generate, load_csv, Dataset, LabelColumn, Partition};
pub use descore::{DesConfig, Evaluation, MetaDes, Mode, QueryRecord};
pub use error::{Error, Result};
pub use harness::{
    emit_tables, run_experiment, run_replication, ExperimentConfig, Method, RunResult, TableFormat,
    TableOptions,
};
pub use metaclassifier::{train_meta, CompetenceModel, NaiveBayesModel};
pub use metafeatures::{build_meta_dataset, MetaDataset, MetaParams, MetaVector, PosteriorTarget};
pub use region::ReferenceSet;
pub use stats::{AccuracyTable, WilcoxonResult};
