use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid move: {0}")]
    InvalidMove(String),

    #[error("predictive undefined: leaf holds {n} points, at least {required} required")]
    UndefinedPredictive { n: usize, required: usize },

    #[error("Gram matrix is singular even after jitter")]
    SingularGram,

    #[error("degenerate box: dimension {0} has zero width")]
    DegenerateBox(usize),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error at row {row}: {message}")]
    Data { row: usize, message: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::TomlDe(_) | Error::TomlSer(_) => 1,
            Error::Data { .. } | Error::Dataset(_) | Error::Csv(_) | Error::Io(_) | Error::Json(_) => 2,
            Error::Snapshot(_) => 2,
            Error::InvalidMove(_)
            | Error::UndefinedPredictive { .. }
            | Error::SingularGram
            | Error::DegenerateBox(_)
            | Error::LengthMismatch { .. }
            | Error::Numerical(_) => 3,
        }
    }
}
