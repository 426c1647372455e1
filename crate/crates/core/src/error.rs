use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("instance infeasible: {agents} agents but only {slots} capacity slots")]
    Infeasible { agents: usize, slots: u64 },

    #[error("threshold {g_bar} exceeds the maximum achievable mean outcome {g_max}")]
    ThresholdInfeasible { g_bar: f64, g_max: f64 },

    #[error("enumeration budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{file}:{line}:{column}: {message}")]
    Parse {
        file: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
