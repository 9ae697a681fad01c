use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid bounding box on image `{image_id}`: {reason}")]
    InvalidBox { image_id: String, reason: String },
    #[error("image `{image_id}` is {width}x{height}, smaller than the {size}x{size} crop")]
    ImageTooSmall { image_id: String, width: u32, height: u32, size: u32 },
    #[error("cannot split an empty dataset")]
    EmptyDataset,
    #[error("split ratio {0} is outside (0, 1)")]
    InvalidRatio(f64),
    #[error("unknown op kind `{0}`")]
    UnknownOp(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("parameter `{name}` = {value} is out of range")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("box lists differ between generated and original image `{0}`")]
    BoxMismatch(String),
    #[error("box index {index} out of range for image with {count} boxes")]
    BoxIndex { index: usize, count: usize },
    #[error("non-finite loss at step {step}")]
    Diverged { step: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}
