//! Conditional adversarial segmentation: U-Net generator, patch
//! discriminator, turn-taking training and three-axis inference.

mod data;
mod discriminator;
mod generator;
mod infer;
mod train;

pub use data::{BatchRef, Schedule, SegDataset, BACKGROUND};
pub use discriminator::{DiscriminatorConfig, LEAKY_SLOPE};
pub use generator::{GeneratorConfig, IMAGE_CHANNELS, REGION_CHANNELS};
pub use infer::{binarize, enforce_nesting, regions_to_labels, segment_case, SegModel};
pub use train::{LossLog, SegTrainConfig, StepRecord, Trainer};
