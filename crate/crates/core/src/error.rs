use thiserror::Error;
use tumorseg_tensor::TensorError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("invalid label value {0} (expected one of 0, 1, 2, 3, 4)")]
    InvalidLabel(f32),
    #[error("non-finite intensity at voxel {0}")]
    NonFinite(usize),
    #[error("case {case}: missing modality {modality}")]
    MissingModality { case: String, modality: String },
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("no foreground voxels above the threshold")]
    EmptyForeground,
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("model has not been trained")]
    ModelNotReady,
    #[error("training diverged at step {step} (d_loss {d_loss}, g_loss {g_loss})")]
    TrainingDiverged { step: u64, d_loss: f64, g_loss: f64 },
    #[error("survival training diverged at epoch {epoch} (loss {loss})")]
    SurvivalDiverged { epoch: u64, loss: f64 },
    #[error("case {0} has no clinical record")]
    MissingClinical(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
