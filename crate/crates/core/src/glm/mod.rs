//! Variable selection in logistic regression with missing mixed predictors.

pub mod design;
pub mod lasso;
pub mod mcem;

pub use design::{DummyDesign, GlmModel};
pub use lasso::{bic_choose, group_lasso_path, lambda_grid, GroupLassoOptions, GroupLassoProblem, LassoFit};
pub use mcem::{gems_glm, imputation_baseline, mc_e_step, q1_tilde, q2_tilde, GlmConfig, GlmResult, ImputedBatch};
