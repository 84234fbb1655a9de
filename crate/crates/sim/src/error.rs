use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Core(#[from] sgmpc_core::Error),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("infeasible at t = 0: {0}")]
    InitiallyInfeasible(String),
    #[error("trial {trial} (seed {seed}) failed at t = {t}: {source}")]
    Trial {
        trial: usize,
        seed: u64,
        t: usize,
        source: sgmpc_core::Error,
    },
    #[error("trial {trial} (seed {seed}) produced a non-finite state at t = {t}")]
    NonFiniteState { trial: usize, seed: u64, t: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type SimResult<T> = std::result::Result<T, SimError>;
