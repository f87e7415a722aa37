use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("empty (group, label) cell in reweighing: counts A0={a0} A1={a1} B0={b0} B1={b1}")]
    DegenerateCell { a0: usize, a1: usize, b0: usize, b1: usize },

    #[error("all sample weights are zero")]
    ZeroWeights,

    #[error("background sample is empty")]
    EmptyBackground,

    #[error("exact Shapley enumeration supports at most {max} features, got {got}; use a sampling explainer")]
    TooManyFeatures { got: usize, max: usize },

    #[error("no persisted model for cell {0}")]
    MissingModel(String),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("config write error: {0}")]
    TomlSer(#[from] toml::ser::Error),
}

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
