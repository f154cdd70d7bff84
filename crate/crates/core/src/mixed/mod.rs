//! Mixed categorical/continuous models on strongly decomposable forests.
//!
//! Pairwise mutual information drives a greedy forest search, fitted
//! forests are oriented into single-parent DAGs, and missing cells are
//! completed by exact tree propagation.

pub mod forest;
pub mod mi;
pub mod model;
pub mod propagate;

pub use forest::{learn_sd_forest, ForestMode, SdForest};
pub use mi::{all_pair_weights, EdgePenalty, EdgeWeight, PairOutcome};
pub use model::{fit_marginals, orient_single_parent, Conditional, SingleParentDag};
pub use propagate::{conditional_sample, log_marginal, Posterior};
