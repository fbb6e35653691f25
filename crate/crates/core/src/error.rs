use alloc::string::String;

use thiserror::Error;

/// Errors raised by the simulation core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("operator is not unitary (max deviation {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("invalid subsystem selection: {0}")]
    InvalidSubsystem(String),

    #[error("register label {0} is already in use")]
    DuplicateRegister(String),

    #[error("register {0} is not live")]
    UnknownRegister(String),

    #[error("register {0} is held in the commitment vault")]
    RegisterVaulted(String),

    #[error("branch cap of {cap} exceeded")]
    BranchCapExceeded { cap: usize },

    #[error("dense expansion of dimension {dim} exceeds cap {cap}")]
    DenseCapExceeded { dim: usize, cap: usize },

    #[error("control register {0} must occupy its own factor")]
    ControlNotSeparable(String),

    #[error("register {0} is already committed")]
    DoubleCommit(String),

    #[error("unknown commitment id {0}")]
    UnknownCommitment(usize),

    #[error("commitment {0} was already unveiled")]
    AlreadyUnveiled(usize),

    #[error("invalid protocol configuration: {0}")]
    InvalidConfig(String),

    #[error("unveil set does not match the requested test set")]
    UnveilMismatch,

    #[error("infeasible subset selection: {0}")]
    InfeasibleSubsets(String),

    #[error("malformed subsets: {0}")]
    MalformedSubsets(String),

    #[error("protocol flow violated: {0}")]
    Protocol(String),

    #[error("good-branch parity is not deterministic (P(0) = {p_zero})")]
    NonDeterministicParity { p_zero: f64 },

    #[error("effective state amplitudes inconsistent: good-branch weight {weight}")]
    InconsistentEffectiveState { weight: f64 },

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("a decoding target was already measured in this session")]
    TargetAlreadyDecoded,

    #[error("Alice's reduced states differ (trace distance {distance:e}); no Bob-local switch exists")]
    AliceReductionMismatch { distance: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = core::result::Result<T, Error>;
