use thiserror::Error;

pub type Result<T> = std::result::Result<T, DdError>;

#[derive(Debug, Error)]
pub enum DdError {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("path {index} has fractional delay {delay}; only integer sample delays are supported")]
    FractionalDelay { index: usize, delay: f64 },

    #[error("delay {delay} outside the supported range 0..={max}")]
    DelayOutOfRange { delay: f64, max: usize },

    #[error("channel prefix does not match the waveform: {0}")]
    PrefixMismatch(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("degenerate search grid: {0}")]
    DegenerateGrid(String),

    #[error("guard region exceeds the frame: {0}")]
    GuardExceedsFrame(String),

    #[error("enumeration of {required} candidates exceeds the cap of {cap}; enable subsampling")]
    CapExceeded { required: u128, cap: u128 },

    #[error("matrix of size {0} is too large to materialize")]
    TooLarge(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl DdError {
    /// Errors caused by the numbers themselves rather than the setup.
    pub fn is_numerical(&self) -> bool {
        matches!(self, DdError::Singular(_) | DdError::DegenerateGrid(_))
    }

    /// Errors a user can fix by changing the configuration.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            DdError::Empty(_)
                | DdError::SizeMismatch { .. }
                | DdError::InvalidConfig(_)
                | DdError::FractionalDelay { .. }
                | DdError::DelayOutOfRange { .. }
                | DdError::PrefixMismatch(_)
                | DdError::GuardExceedsFrame(_)
                | DdError::CapExceeded { .. }
                | DdError::TooLarge(_)
                | DdError::Json(_)
        )
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(DdError::SizeMismatch { expected, got });
    }
    Ok(())
}
