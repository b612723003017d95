//! Fold plans, extremely randomized trees and the stacking pipeline.

mod folds;
mod stack;
mod trees;

pub use folds::{make_folds, FoldPlan};
pub use stack::{
    default_c, external_holdout_auc, fit_base, oof_predictions, parse_external, preprocess_views,
    regression_columns, stack_cv_mse, train_stacked, BaseOptions, BaseReport, ExternalClassifier,
    ExternalDoc, FeatureSet, PairC, StackConfig, StackedModel, TrainReport,
};
pub use trees::{
    train_extratrees, train_extratrees_with, ExtraTreesModel, ForestParams, MetaFeatures, Node, Tree,
};
