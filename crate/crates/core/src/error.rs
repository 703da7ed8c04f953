use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced anywhere in the codec.
///
/// Variants fall into two families that the command line maps to distinct
/// exit codes: validation failures (bad input, bad arguments, mismatched
/// models) and corruption failures (a bitstream or checkpoint that does not
/// decode).
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("corrupt stream: {0}")]
    Corruption(String),
    #[error("crc mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("model hash mismatch: container expects {expected:#010x}, checkpoint is {actual:#010x}")]
    ModelMismatch { expected: u32, actual: u32 },
    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn corruption(msg: impl Into<String>) -> Self {
        Error::Corruption(msg.into())
    }

    /// Process exit code: 2 for validation problems (including a checkpoint
    /// that does not match the container), 3 for corrupt data.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Corruption(_) | Error::Checksum { .. } => 3,
            _ => 2,
        }
    }
}
