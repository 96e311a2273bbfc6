use bi_ice::Error;
use serde::Serialize;

/// A failed invocation: exit code plus a machine-readable description.
#[derive(Debug, Serialize)]
pub struct Failure {
    #[serde(skip)]
    pub code: u8,
    pub error: &'static str,
    pub message: String,
}

impl Failure {
    pub fn usage(error: &'static str, message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            error,
            message: message.into(),
        }
    }

    /// A problem with a file or setting supplied by the user.
    pub fn input(e: Error) -> Self {
        Failure::usage(kind(&e), e.to_string())
    }
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::Shape { .. } => "shape",
        Error::Contract(_) => "contract",
        Error::Config(_) => "config",
        Error::Format { .. } => "format",
        Error::Training { .. } => "training",
        Error::Evaluation(_) => "evaluation",
        Error::Io { .. } => "io",
        Error::Json { .. } => "json",
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Format { .. } => 2,
            _ => 1,
        };
        Failure {
            code,
            error: kind(&e),
            message: e.to_string(),
        }
    }
}
