use std::path::{Path, PathBuf};
use std::process::ExitCode;

use batsim_core::ability::AbilityError;
use batsim_core::converter::ConverterError;
use batsim_core::simulator::SimError;
use batsim_core::strategy::StrategyError;
use batsim_core::transition::TransitionError;
use thiserror::Error;

/// Harness failure, classified by exit code.
#[derive(Debug, Error)]
pub enum HarnessError {
    /// Exit code 2.
    #[error("config error: {0}")]
    Config(String),
    /// Exit code 3.
    #[error("data error: {0}")]
    Data(String),
    /// Exit code 4.
    #[error("runtime error: {0}")]
    Runtime(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Data(_) => 3,
            HarnessError::Runtime(_) => 4,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        HarnessError::Data(format!("{}: {e}", path.display()))
    }

    pub fn missing(path: PathBuf) -> Self {
        HarnessError::Config(format!("file not found: {}", path.display()))
    }
}

impl From<HarnessError> for ExitCode {
    fn from(e: HarnessError) -> Self {
        ExitCode::from(e.exit_code())
    }
}

impl From<TransitionError> for HarnessError {
    fn from(e: TransitionError) -> Self {
        match e {
            TransitionError::NonAbsorbing(_) | TransitionError::NoConvergence(_) => HarnessError::Runtime(e.to_string()),
            _ => HarnessError::Data(e.to_string()),
        }
    }
}

impl From<AbilityError> for HarnessError {
    fn from(e: AbilityError) -> Self {
        match e {
            AbilityError::InvalidParameters(_) => HarnessError::Config(e.to_string()),
            AbilityError::Infeasible { .. } => HarnessError::Runtime(e.to_string()),
            _ => HarnessError::Data(e.to_string()),
        }
    }
}

impl From<ConverterError> for HarnessError {
    fn from(e: ConverterError) -> Self {
        match e {
            ConverterError::InsufficientPlayers(_)
            | ConverterError::InvalidConfig(_)
            | ConverterError::InvalidCost(_)
            | ConverterError::DatasetTooSmall(_) => HarnessError::Config(e.to_string()),
            ConverterError::ShapeMismatch(_) => HarnessError::Data(e.to_string()),
            ConverterError::Ability(a) => a.into(),
            _ => HarnessError::Runtime(e.to_string()),
        }
    }
}

impl From<StrategyError> for HarnessError {
    fn from(e: StrategyError) -> Self {
        match e {
            StrategyError::Converter(c) => c.into(),
            StrategyError::Ability(a) => a.into(),
            _ => HarnessError::Config(e.to_string()),
        }
    }
}

impl From<SimError> for HarnessError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidLineup(_) => HarnessError::Data(e.to_string()),
            SimError::NoGames | SimError::NoWorkers => HarnessError::Config(e.to_string()),
            SimError::ThreadPool(_) => HarnessError::Runtime(e.to_string()),
        }
    }
}
