//! Error taxonomy: configuration errors (wiring, files, validation) and
//! runtime errors (solver and module failures during a run).

use thiserror::Error;

#[derive(Error, Debug)]
pub enum ConfigError {
    #[error("duplicate module id `{0}`")]
    DuplicateModule(String),
    #[error("unknown module `{0}`")]
    UnknownModule(String),
    #[error("unknown port `{module}.{port}`")]
    UnknownPort { module: String, port: String },
    #[error("feedthrough entry references unknown port `{module}.{port}`")]
    InvalidFeedthrough { module: String, port: String },
    #[error("port `{module}.{port}` is not an {expected} port")]
    WrongDirection { module: String, port: String, expected: &'static str },
    #[error("value kind mismatch connecting {from} ({from_kind:?}) to {to} ({to_kind:?})")]
    KindMismatch { from: String, to: String, from_kind: crate::value::ValueKind, to_kind: crate::value::ValueKind },
    #[error("connection {from} -> {to} closes a direct-feedthrough algebraic loop")]
    AlgebraicLoop { from: String, to: String },
    #[error("discrete-time module `{0}` requires a period > 0")]
    InvalidPeriod(String),
    #[error("sampling period must be > 0 (got {0})")]
    InvalidSamplePeriod(f64),
    #[error("input `{0}` is already driven by a connection")]
    AlreadyConnected(String),
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("{path}: {msg}")]
    File { path: String, msg: String },
    #[error("dangling reference `{reference}` in {context}")]
    DanglingReference { reference: String, context: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Error, Debug)]
pub enum SimError {
    #[error("module `{module}`: {msg}")]
    Module { module: String, msg: String },
    #[error("solver failure in `{module}`: {msg}")]
    Solver { module: String, msg: String },
    #[error("event budget exhausted after {0} events (divergence?)")]
    EventBudget(u64),
    #[error("microstep bound exceeded at t={0}s (unexpected same-instant cascade)")]
    MicrostepOverflow(f64),
    #[error("load flow did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
}
