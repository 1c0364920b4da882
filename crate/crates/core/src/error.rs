use alloc::string::String;
use alloc::vec::Vec;

use crate::tensor::Shape;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// One field that differs between a recorded run and a replay request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    pub field: String,
    pub recorded: String,
    pub requested: String,
}

impl core::fmt::Display for Mismatch {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "{}: recorded {} but got {}",
            self.field, self.recorded, self.requested
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: Shape, actual: Shape },
    #[error("buffer of {len} values does not match shape {shape}")]
    BufferLength { shape: Shape, len: usize },
    #[error("video has no frames")]
    EmptyVideo,
    #[error("frame {index} has shape {actual}, expected {expected}")]
    InconsistentFrame {
        index: usize,
        expected: Shape,
        actual: Shape,
    },
    #[error("resolution {width}x{height} is not divisible by scale factor {factor}")]
    Indivisible {
        width: usize,
        height: usize,
        factor: usize,
    },
    #[error("invalid grid layout: {0}")]
    Layout(String),
    #[error("invalid frame order: {0}")]
    InvalidOrder(String),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("timestep {0} is not part of the schedule")]
    StepNotInSchedule(usize),
    #[error("step order violated: {0}")]
    StepOrder(String),
    #[error("adapter error: {0}")]
    Adapter(String),
    #[error("noise predictor failed at timestep {step}: {message}")]
    Predictor { step: usize, message: String },
    #[error("condition extraction failed on frame {frame}: {message}")]
    Extractor { frame: usize, message: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("replay refused: {}", join_mismatches(.0))]
    ReplayMismatch(Vec<Mismatch>),
    #[error("replay output digest {actual} differs from recorded {recorded}")]
    ReplayDiverged { recorded: String, actual: String },
}

fn join_mismatches(items: &[Mismatch]) -> String {
    use core::fmt::Write;
    let mut out = String::new();
    for (i, m) in items.iter().enumerate() {
        if i > 0 {
            out.push_str("; ");
        }
        let _ = write!(out, "{m}");
    }
    out
}
