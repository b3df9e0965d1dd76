use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    /// The state left the finite region or crossed the blow-up cap.
    #[error("numerical blow-up at step {step} (t = {time}){}", trajectory_suffix(.trajectory))]
    BlowUp {
        step: usize,
        time: f64,
        trajectory: Option<u64>,
    },
}

fn trajectory_suffix(trajectory: &Option<u64>) -> String {
    match trajectory {
        Some(idx) => format!(" in trajectory {idx}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Attach a trajectory index to a blow-up error; other variants pass through.
    pub fn with_trajectory(self, index: u64) -> Self {
        match self {
            Error::BlowUp { step, time, .. } => Error::BlowUp {
                step,
                time,
                trajectory: Some(index),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
