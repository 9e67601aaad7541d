use thiserror::Error;

/// Errors shared by every module in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument or configuration failed.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A frequency does not lie on the grid of the active frequency space.
    #[error("frequency {bpm} BPM is not on the {low}..{high} BPM grid (resolution {resolution} BPM)")]
    OffGridFrequency {
        bpm: f64,
        low: f64,
        high: f64,
        resolution: f64,
    },

    /// Decryption: a key frequency has no matching instance in the ciphertext.
    #[error("ciphertext is missing key frequency {bpm} BPM")]
    MissingKeyElement { bpm: f64 },

    /// Decryption: after removing the key, the remainder is not a single element.
    #[error("ciphertext minus key left {remaining} elements, expected exactly 1")]
    AmbiguousCiphertext { remaining: usize },

    /// Two signals that must share a sample rate do not.
    #[error("sample rate mismatch: {a} Hz vs {b} Hz")]
    RateMismatch { a: f64, b: f64 },

    /// Two signals that must share a length differ by more than one sample.
    #[error("length mismatch: {a} vs {b} samples")]
    LengthMismatch { a: usize, b: usize },

    /// A serialized artifact does not match its documented layout.
    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
