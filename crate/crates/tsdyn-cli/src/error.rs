use thiserror::Error;
use tsdyn::dde::DdeError;
use tsdyn::expr::ExprError;
use tsdyn::stability::StabilityError;
use tsdyn::tscale::ScaleError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("unknown example `{0}`")]
    UnknownExample(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn config(ctx: &str, e: impl std::fmt::Display) -> CliError {
        CliError::Config(format!("{ctx}: {e}"))
    }

    /// Short tag printed after `ERROR`.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::UnknownExample(_) => "unknown-example",
            CliError::Numeric(_) => "numeric",
            CliError::Io(_) => "io",
        }
    }

    pub fn exit_status(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::UnknownExample(_) | CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

fn is_syntax(e: &ExprError) -> bool {
    matches!(e, ExprError::Syntax { .. } | ExprError::UnknownIdentifier { .. })
}

impl From<DdeError> for CliError {
    fn from(e: DdeError) -> Self {
        match &e {
            DdeError::Expr(x) if is_syntax(x) => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<ExprError> for CliError {
    fn from(e: ExprError) -> Self {
        if is_syntax(&e) {
            CliError::Config(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

impl From<ScaleError> for CliError {
    fn from(e: ScaleError) -> Self {
        DdeError::from(e).into()
    }
}

impl From<StabilityError> for CliError {
    fn from(e: StabilityError) -> Self {
        match e {
            StabilityError::Dde(d) => d.into(),
            StabilityError::BadTheta(_) => CliError::Config(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
