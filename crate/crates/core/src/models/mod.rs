//! Adjustment strategies that turn assessments into change requests.

pub mod dscript;
pub mod metrics;
pub mod probabilistic;

use thiserror::Error;

use crate::adjustment::{ChangeError, FactorId};
use crate::telemetry::VarId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("weight matrix references unknown variable `{0}`")]
    UnknownVariable(VarId),
    #[error("no multiplier for factor `{0}`")]
    UnknownFactor(FactorId),
    #[error("script references unknown rule {0}")]
    UnknownRule(u32),
    #[error("only {eligible} eligible rules for a script of size {size}")]
    NotEnoughRules { eligible: usize, size: usize },
    #[error("probability validation: {0}")]
    Probability(String),
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("model config: {0}")]
    Config(String),
    #[error(transparent)]
    Change(#[from] ChangeError),
}
