//! Linear models: standardization, LASSO by coordinate descent, the LARS
//! homotopy path with AIC-based penalty selection, and the multi-horizon
//! LEAR forecaster built from them.

mod cov;
mod lars;
mod lasso;
mod lear;
mod standardize;

pub use cov::CovSystem;
pub use lars::{lars_path, lars_path_cov, select_knot_aic, select_lambda_aic, LarsKnot, LarsPath};
pub use lasso::{
    kkt_violation, lasso_cd, lasso_cd_cov, lasso_objective, lambda_max, soft_threshold, CdOptions,
    LassoFit,
};
pub use lear::{lear_fit, lear_refit, LearConfig, LearModel, LEAR_MIN_SAMPLES};
pub use standardize::{Standardizer, SCALE_FLOOR};
