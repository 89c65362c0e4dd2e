use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("coordinate {value} out of range for depth {depth}")]
    CoordinateOutOfRange { value: u32, depth: u8 },

    #[error("depth {0} not supported (1..=21)")]
    UnsupportedDepth(u8),

    #[error("empty point cloud")]
    EmptyCloud,

    #[error("invalid cloud: {0}")]
    InvalidCloud(String),

    #[error("level {level} out of range (max {max})")]
    LevelOutOfRange { level: usize, max: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("numerical rank error: {0}")]
    NumericalRank(String),

    #[error("rank accounting: null space has {actual} columns, expected {expected}")]
    RankAccounting { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("truncated stream: {0}")]
    Truncated(&'static str),

    #[error("entropy model error: {0}")]
    Model(String),

    #[error("corrupt stream: {0}")]
    Corrupt(String),

    #[error("bad magic or version")]
    BadMagic,

    #[error("unknown byte codec id {0}")]
    UnknownCodec(u8),

    #[error("ply: malformed header: {0}")]
    PlyHeader(String),

    #[error("ply: truncated payload: {0}")]
    PlyTruncated(String),

    #[error("ply: unsupported property type `{0}`")]
    PlyUnsupportedType(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
