//! Exit-code taxonomy: 0 pass or skip, 2 configuration, 3 solver, 4 verdict.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Invalid config or violated experiment precondition.
    Config(String),
    /// Non-convergence, lookup or output failures.
    Solver(String),
    /// The experiment ran and its verdict failed.
    Verdict(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Verdict(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Solver(m) => write!(f, "solver error: {m}"),
            CliError::Verdict(m) => write!(f, "verdict failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<hemosim::Error> for CliError {
    fn from(e: hemosim::Error) -> Self {
        use hemosim::Error as E;
        match e {
            E::Domain { .. } | E::Config(_) | E::UnboundedTau0 { .. } | E::Precondition(_) | E::Json(_) => {
                CliError::Config(e.to_string())
            }
            E::NonConvergence { .. } | E::LookupOutOfWindow { .. } | E::Warmup(_) | E::Format(_) | E::Io(_) => {
                CliError::Solver(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Solver(format!("output: {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taxonomy_is_stable() {
        assert_eq!(CliError::Config(String::new()).exit_code(), 2);
        assert_eq!(CliError::Solver(String::new()).exit_code(), 3);
        assert_eq!(CliError::Verdict(String::new()).exit_code(), 4);
        let e: CliError = hemosim::Error::Precondition("x".into()).into();
        assert_eq!(e.exit_code(), 2);
        let e: CliError = hemosim::Error::NonConvergence {
            window: 0,
            iterations: 1,
            last_delta: 1.0,
        }
        .into();
        assert_eq!(e.exit_code(), 3);
    }
}
