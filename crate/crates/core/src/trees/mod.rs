//! Regression trees, random forests and gradient-boosted trees.

mod cart;
mod forest;
mod gbt;
mod grow;

pub use cart::{fit_tree, TreeParams, UNLIMITED_DEPTH};
pub use forest::{rf_fit, rf_predict, ForestModel, ForestParams};
pub use gbt::{gbt_fit, gbt_predict, GbtModel, GbtParams};
pub use grow::{Tree, TreeNode};
