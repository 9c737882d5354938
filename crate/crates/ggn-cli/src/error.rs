use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// `pointer` is a JSON pointer into the config ("" for the whole document)
    #[error("config error at '{pointer}': {message}")]
    Config { pointer: String, message: String },
    #[error("solver error at iteration {iteration}: {message}")]
    Solver { iteration: usize, message: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn config(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            pointer: pointer.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Io(_) => 4,
            CliError::Solver { .. } | CliError::Numerical(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
