//! Supervised and unsupervised model selection for pruned Naive Bayes
//! classifiers.
//!
//! A pruned Naive Bayes structure keeps the class as the root and chooses
//! which features receive an arc from it. This crate scores every such
//! structure under several criteria (marginal likelihood, prequential class
//! score, cross-validation, plug-in likelihoods, BIC), selects the best one
//! exhaustively, and runs a repeated train/test protocol that measures how
//! well each criterion picks classifiers.
//!
//! ```
//! use nbselect::{score_uevi, Dataset, Structure};
//!
//! // feature, class
//! let data = Dataset::from_codes(&[2], 2, &[vec![0, 0], vec![1, 1]]).unwrap();
//! let with_arc = score_uevi(&data, Structure::full(1)).unwrap();
//! let without = score_uevi(&data, Structure::empty(1)).unwrap();
//! assert!(with_arc.value() > without.value());
//! ```

pub mod criteria;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod nbmodel;
pub mod search;
pub mod seed;
pub mod synth;

pub use criteria::{
    bic_dimension, feature_prequential, kfold_mean_loss, log_evidence, score_bic, score_kfold,
    score_loocv, score_preq, score_preq_avg, score_sevi_approx, score_sevi_exact, score_trloss,
    score_uevi, sequential_log_evidence, CriterionKind, CriterionSpec, Score, CRITERION_NAMES,
    DEFAULT_EXACT_BUDGET, DEFAULT_FOLDS,
};
pub use dataset::{
    discretize_column, load_csv, read_csv, split_half, stratified_order, subsample, ClassColumn,
    CsvOptions, Dataset, Discretization, Ordering, RowRef, Schema, VarKind, Variable, DEFAULT_BINS,
    MISSING_LABEL,
};
pub use error::{Error, Result};
pub use experiment::{
    compare_reports, evaluate_loss, evaluate_losses, relative_prediction_gain, run_experiment,
    Comparison, ExperimentConfig, ExperimentReport, LossPair, SelectionLoss,
};
pub use nbmodel::{
    log_sum_exp, ClassDistribution, Direction, LossKind, PluginParameters, PluginPrediction,
    Structure, SuffStats,
};
pub use search::{
    enumerate_structures, select_best, ScoreTable, SearchOptions, Selection, DEFAULT_FEATURE_CAP,
    MAX_FEATURE_CAP,
};
pub use synth::SyntheticSpec;
