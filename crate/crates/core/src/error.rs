use thiserror::Error;

use crate::model::Timestamp;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("time {t} outside stream span [{start}, {end}]")]
    OutOfRange {
        t: Timestamp,
        start: Timestamp,
        end: Timestamp,
    },

    #[error("tracking lost at {t}: {reason}")]
    TrackingLost { t: Timestamp, reason: String },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("alignment failed: {0}")]
    Alignment(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
