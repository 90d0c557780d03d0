use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("event #{position} at ({x}, {y}) is outside the {width}x{height} sensor")]
    OutOfBounds {
        position: u64,
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },

    #[error("event #{position} has t={t}us, earlier than the previous t={previous}us")]
    OutOfOrder {
        position: u64,
        t: i64,
        previous: i64,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("scene: shape {shape} leaves the sensor at t={t:.6}s")]
    SceneBounds { shape: usize, t: f64 },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
