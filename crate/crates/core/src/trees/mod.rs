//! Classification and regression trees, random forests and boosting.

pub(crate) mod binned;
pub mod custom;
pub mod forest;
pub mod gbm;
pub mod tree;

pub use custom::{ColumnScreen, CustomGbm, CustomGbmParams};
pub use forest::{Forest, ForestParams, Resample};
pub use gbm::{Gbm, GbmParams, LEAF_CLIP};
pub use tree::{fit_tree, Split, SplitCriterion, Tree, TreeNode, TreeParams};
