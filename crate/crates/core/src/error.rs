use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid radiometric calibration: k must be finite and nonzero (got {k})")]
    InvalidCalibration { k: f64 },

    #[error("empty sequence: at least one nonempty grid is required")]
    EmptySequence,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("pixel ({u}, {v}) outside {width}x{height} image")]
    PixelOutOfBounds {
        u: usize,
        v: usize,
        width: usize,
        height: usize,
    },

    #[error("non-finite value produced at field layer {layer}")]
    NonFiniteParameter { layer: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("image {width}x{height} is smaller than the {kernel}x{kernel} window")]
    ImageTooSmall {
        width: usize,
        height: usize,
        kernel: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite {term} at step {step}")]
    NonFiniteLoss { step: u64, term: &'static str },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
}
