use thiserror::Error;

/// A parameter failed validation.
#[derive(Clone, Debug, PartialEq, Error)]
#[error("invalid parameter `{field}`: {reason}")]
pub struct ParamError {
    pub field: String,
    pub reason: String,
}

impl ParamError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("non-finite state for agent {agent} at t = {time:.3} s")]
    NonFinite { agent: usize, time: f64 },
    #[error("could not place {n} agents at least {min_distance} m apart")]
    Placement { n: usize, min_distance: f64 },
}
