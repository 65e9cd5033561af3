use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("error ({module}): {source}")]
    Numeric { module: &'static str, source: holderlab::Error },
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numeric { .. } | CliError::Io(_) => 2,
        }
    }

    /// Attaches the module name to a library error; bad-input errors stay config errors.
    pub fn from_lib(module: &'static str, e: holderlab::Error) -> Self {
        if e.is_config() {
            CliError::Config(format!("{module}: {e}"))
        } else {
            CliError::Numeric { module, source: e }
        }
    }
}

impl From<holderlab::Error> for CliError {
    fn from(e: holderlab::Error) -> Self {
        CliError::from_lib("core-ifs", e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
