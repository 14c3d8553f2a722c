//! Brain-tumour sub-region segmentation with a conditional adversarial
//! U-Net, survival-day regression, and the supporting volume I/O,
//! preprocessing and evaluation code.

pub mod cli;
pub mod config;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod preprocess;
pub mod segnet;
pub mod survival;
pub mod testkit;
pub mod verify;
pub mod volume;

pub use error::{Error, Result};
pub use tumorseg_tensor as tensor;
