use std::fmt;

use mebn::dataset::DatasetError;
use mebn::eval::EvalError;
use mebn::learn::LearnError;
use mebn::mapper::MapperError;
use mebn::mtheory::ModelError;
use mebn::relational::RelationalError;
use mebn::script::ScriptError;
use mebn::ssbn::InferError;

/// A failure printed as `CODE: detail`.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub detail: String,
}

impl CliError {
    pub fn new(code: &'static str, detail: impl Into<String>) -> Self {
        CliError {
            code,
            detail: detail.into(),
        }
    }

    pub fn config(detail: impl Into<String>) -> Self {
        CliError::new("E_CONFIG", detail)
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::new("E_IO", format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.detail)
    }
}

macro_rules! coded {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::new(e.code(), e.to_string())
            }
        }
    )*};
}

coded!(RelationalError, MapperError, DatasetError, LearnError, InferError, EvalError, ScriptError);

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::new("E_MODEL", e.to_string())
    }
}
