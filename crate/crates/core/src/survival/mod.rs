//! Survival-day prediction from a representative slice and age.

mod baseline;
mod input;
mod net;
mod scale;
mod split;
mod train;

pub use baseline::{baseline_features, polynomial_baseline, PolynomialModel, MAX_POLY_DEGREE, RIDGE_LAMBDA};
pub use input::{axial_areas, build_input, select_slice, truth_regions, SlicePolicy, SurvivalInput, SURVIVAL_CHANNELS};
pub use net::{stack_inputs, SurvivalNetConfig};
pub use scale::{
    accuracy, round_days, scale_age, scale_survival, unscale_survival, DEFAULT_TOLERANCE_DAYS, MAX_AGE_YEARS, MAX_SURVIVAL_DAYS,
};
pub use split::{Split, SplitSpec};
pub use train::{train_survival, write_predictions_csv, EpochRecord, SurvivalFit, SurvivalModel, SurvivalSample, SurvivalTrainConfig};
