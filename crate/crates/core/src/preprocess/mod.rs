//! Bias-field correction, histogram matching, intensity normalization and
//! slice augmentation.

mod augment;
mod bias;
mod histogram;
mod normalize;
mod pipeline;

pub use augment::{augment, AugmentOp, MAX_RESCALE, MIN_RESCALE};
pub use bias::{correct_bias, fit_bias, BiasModel};
pub use histogram::{build_reference_histogram, histogram_match, Histogram, Matched, DEFAULT_BINS};
pub use normalize::{normalize_intensity, NormTarget, Normalized};
pub use pipeline::{preprocess_case, PreprocessConfig, PreprocessReport, Preprocessor};
