use std::fmt;

use phasezoo::Error;

/// A command failure and the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
    /// Cell keys, for partial-zoo failures.
    pub cells: Vec<String>,
}

pub const EXIT_ERROR: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: message.into(),
            cells: Vec::new(),
        }
    }

    pub fn partial(message: impl Into<String>, cells: Vec<String>) -> Self {
        Failure {
            code: EXIT_PARTIAL,
            message: message.into(),
            cells,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::IncompleteZoo { cells } => {
                Failure::partial(format!("zoo is incomplete: {} cells unfinished", cells.len()), cells)
            }
            Error::InvalidSpec(_) | Error::Schema(_) => Failure::config(e.to_string()),
            other => Failure {
                code: EXIT_ERROR,
                message: other.to_string(),
                cells: Vec::new(),
            },
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)?;
        if !self.cells.is_empty() {
            write!(f, "\nincomplete cells: {}", self.cells.join(", "))?;
        }
        Ok(())
    }
}
