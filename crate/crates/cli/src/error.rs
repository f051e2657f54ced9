//! Configuration errors and the process exit-code table.

use std::fmt;

use pnvflow_core::Error as CoreError;

pub const EXIT_PASS: i32 = 0;
/// I/O and other failures outside the table below.
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CONSTRAINT: i32 = 3;
pub const EXIT_EVOLUTION: i32 = 4;
pub const EXIT_VERIFICATION: i32 = 5;

/// A scenario that cannot be run as written. `location` names the file or
/// key at fault.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub location: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(location: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            location: location.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error in {}: {}", self.location, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// A run that stopped early with a known exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Aborted {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for Aborted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Aborted {}

/// Exit code for a core error that escaped the pipeline.
pub fn core_exit_code(e: &CoreError) -> i32 {
    use CoreError::*;
    match e {
        InvalidSpec(_)
        | Parse { .. }
        | UnknownIdentifier { .. }
        | ZeroVector
        | NonZeroMean { .. }
        | NonPositiveWarp { .. }
        | BadW0Shape(_)
        | InvalidInput(_)
        | DimensionUnsupported(_) => EXIT_CONFIG,
        ClosednessViolated { .. }
        | AsymmetricW { .. }
        | ConstraintViolation { .. }
        | SingularMetric { .. }
        | NotPositiveDefinite { .. } => EXIT_CONSTRAINT,
        DegenerateU { .. } | StepRejected { .. } | Blowup { .. } | NonPositiveLapse { .. } => {
            EXIT_EVOLUTION
        }
        Signature(_) | NonRealCurrent { .. } => EXIT_VERIFICATION,
        SlotOutOfRange { .. } | EmptyMask | Shape(_) | Format(_) | Io(_) | Json(_) => EXIT_FAILURE,
    }
}

/// True for the errors that end a time integration early.
pub fn is_evolution_abort(e: &CoreError) -> bool {
    core_exit_code(e) == EXIT_EVOLUTION
}

/// Walks the cause chain for a [`ConfigError`] or a core error.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return EXIT_CONFIG;
        }
        if let Some(a) = cause.downcast_ref::<Aborted>() {
            return a.code;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return core_exit_code(e);
        }
    }
    EXIT_FAILURE
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table() {
        assert_eq!(
            core_exit_code(&CoreError::InvalidInput("x".into())),
            EXIT_CONFIG
        );
        assert_eq!(
            core_exit_code(&CoreError::DegenerateU { t: 0.1, min_u: 0.0 }),
            EXIT_EVOLUTION
        );
        let e = anyhow::Error::new(ConfigError::new("a.toml", "bad")).context("loading");
        assert_eq!(exit_code(&e), EXIT_CONFIG);
        let e = anyhow::Error::new(CoreError::Signature("x".into()));
        assert_eq!(exit_code(&e), EXIT_VERIFICATION);
        assert_eq!(exit_code(&anyhow::anyhow!("other")), EXIT_FAILURE);
    }
}
