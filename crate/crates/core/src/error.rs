use std::path::PathBuf;

use crate::adaptive::PipelineStats;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image codec error on {path}: {message}")]
    Codec { path: PathBuf, message: String },

    // imaging
    #[error("invalid image: {0}")]
    BadImage(String),
    #[error("no frames found in {0}")]
    NoFrames(PathBuf),
    #[error("inconsistent frames: {0}")]
    InconsistentFrames(String),
    #[error("bad frame file name: {0}")]
    BadFrameName(String),
    #[error("bad resize: {0}")]
    BadResize(String),

    // blur synthesis
    #[error("blur window [{start}, {start}+{level}) exceeds sequence of {len} frames")]
    WindowOutOfRange { start: usize, level: usize, len: usize },
    #[error("sequence of {len} frames is shorter than max level {max_level}")]
    SequenceTooShort { len: usize, max_level: usize },
    #[error("bad argument: {0}")]
    BadArgument(String),

    // dataset
    #[error("level L={0} unavailable")]
    LevelUnavailable(u32),
    #[error("bad ground truth: {0}")]
    BadGroundTruth(String),
    #[error("bad manifest: {0}")]
    BadManifest(String),
    #[error("missing image {0}")]
    MissingImage(PathBuf),

    // descriptors
    #[error("bad descriptor configuration: {0}")]
    BadConfig(String),
    #[error("dimension mismatch: {0} vs {1}")]
    BadDimensions(usize, usize),
    #[error("bad descriptor file format: {0}")]
    BadFormat(String),
    #[error("truncated descriptor file: {0}")]
    Truncated(String),

    // evaluation
    #[error("ground truth has no positives")]
    NoGroundTruth,
    #[error("precision-recall curve is empty")]
    EmptyCurve,

    // blur detection
    #[error("image {width}x{height} is smaller than 3x3")]
    TooSmall { width: usize, height: usize },
    #[error("bad calibration input: {0}")]
    BadCalibration(String),

    // adaptive pipeline
    #[error("deblurrer failed: {0}")]
    DeblurFailed(String),
    #[error("deblurrer output incomplete: missing {0}")]
    IncompleteOutput(String),
    #[error("deblurrer output invalid: {0}")]
    BadOutput(String),
    #[error("deblurrer timed out after {0:.1} s")]
    Timeout(f64),
    #[error("bad power log: {0}")]
    BadPowerLog(String),
    #[error("pipeline aborted at query {query}: {source}")]
    Aborted {
        query: usize,
        stats: Box<PipelineStats>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
