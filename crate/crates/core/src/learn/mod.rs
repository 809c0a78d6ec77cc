//! Training-time machinery: stagewise regression, budgeted feature-group
//! selection and the over/under-prediction table.

mod dataset;
mod lut;
mod model;
mod ridge;
mod select;
mod stagewise;

pub use dataset::{rmse, Dataset};
pub use lut::{apply_lut, build_lut, ErrorLUT, LutBin, MIN_BIN_SAMPLES};
pub use model::{train_depth_model, train_variant, DepthModel, ModelVariant, TrainOptions, MODEL_VERSION};
pub use ridge::{fit_ridge, RidgeFit, Standardizer};
pub use select::{greedy_order, select_budgeted_groups, subset_error, BudgetPlan, PlanStep};
pub use stagewise::{basis, train_stagewise, Stage, StagewiseRegressor, BASIS_DIMS};
