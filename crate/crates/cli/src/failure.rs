use std::fmt;

/// Error classes with distinct exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Unreadable or invalid configuration (2).
    Config(String),
    /// The run itself failed (3).
    Runtime(String),
    /// A checked property did not hold (4).
    Assertion(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
            Failure::Assertion(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Runtime(m) => write!(f, "{m}"),
            Failure::Assertion(m) => write!(f, "check failed: {m}"),
        }
    }
}

pub trait OrRuntime<T> {
    fn runtime(self) -> Result<T, Failure>;
    fn config(self) -> Result<T, Failure>;
}

impl<T, E: fmt::Display> OrRuntime<T> for Result<T, E> {
    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.to_string()))
    }

    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.to_string()))
    }
}
