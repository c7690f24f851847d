use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("class id {class} out of range for {num_classes} classes")]
    Class { class: usize, num_classes: usize },

    #[error("{0}")]
    ClassCount(String),

    #[error("invalid score {value} at pixel {index}: scores must be finite and non-negative")]
    InvalidScore { index: usize, value: f64 },

    #[error("invalid probabilities at pixel {index}: {reason}")]
    InvalidProbabilities { index: usize, reason: String },

    #[error("budget of {requested} exceeds the {available} available")]
    Budget { requested: u64, available: u64 },

    #[error("pixel ({image}, {row}, {col}) is already in the active label store")]
    DuplicatePixel { image: u32, row: u32, col: u32 },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("selection is empty")]
    EmptySelection,

    #[error("invalid `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
