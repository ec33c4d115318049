use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("velocity aliasing: {count} voxel(s) with |v| >= venc ({venc} cm/s)")]
    Aliasing { count: usize, venc: f64 },

    #[error("noise calibration failed: {0}")]
    Calibration(String),

    #[error("empty flow mask")]
    EmptyMask,

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("size guard: N_h = {voxels} exceeds the dense limit of {limit}")]
    SizeGuard { voxels: usize, limit: usize },

    #[error("dense factorization failed: {0}")]
    Factorization(String),

    #[error("volume file parse error at byte offset {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("frame {frame}, channel {channel}: {source}")]
    Context {
        frame: usize,
        channel: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn mismatch(msg: impl Into<String>) -> Self {
        Error::GridMismatch(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn in_channel(self, frame: usize, channel: &'static str) -> Self {
        Error::Context { frame, channel, source: Box::new(self) }
    }

    /// Strips frame/channel context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }
}
