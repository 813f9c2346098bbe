//! First-level forecasters: regression trees, random forest, gradient boosting and RBF support vector regression.

pub mod boosting;
pub mod forest;
pub mod svr;
pub mod tree;

pub use boosting::{gb_fit, gb_predict, BoostParams, BoostedTrees};
pub use forest::{rf_fit, rf_predict, ForestParams, RegressionForest};
pub use svr::{svr_fit, svr_predict, SupportVectorRegressor, SvrParams};
pub use tree::{fit_tree, Node, RegressionTree, TreeParams};
