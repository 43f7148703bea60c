use ftn_core::error::FtnError;

/// Exit status 1 for bad configuration, 2 for failures while running.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<FtnError> for CliError {
    /// Errors a different configuration would avoid count as config errors.
    fn from(e: FtnError) -> Self {
        use FtnError::*;
        match e {
            UnsupportedOrder(_)
            | InvalidParameter(_)
            | NonFinite(_)
            | IllConditioned(_)
            | SpectralZeros { .. }
            | MissingFactor
            | SearchSpaceTooLarge { .. }
            | NotNyquist(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
