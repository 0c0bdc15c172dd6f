//! Bandit optimization for structured polynomial rewards.
//!
//! The reward classes covered here are non-concave: quadratic forms
//! (eigenvector reward), low-rank linear reward over matrix actions,
//! symmetric and asymmetric homogeneous degree-p polynomials, and
//! noiseless polynomial families with a finite hard case. The solvers
//! are zeroth-order gradient-style methods: a noisy power method and
//! subspace iteration for the quadratic classes, phased elimination
//! with zeroth-order updates for tensors, polynomial identification
//! for the noiseless case, plus finite-arm UCB and lifted-feature
//! LinUCB baselines and an explore-then-commit regret layer.
//!
//! [`harness`] wires everything into seeded, reproducible experiments
//! with CSV traces and log-log scaling fits.

pub mod baselines;
pub mod env;
pub mod harness;
pub mod noiseless;
pub mod rl;
pub mod spectral;
pub mod stream;
pub mod tensor;
pub mod util;
pub mod zorder;

pub use env::{Action, BanditSession, ModelKind, RegretLedger, RewardModel};
pub use harness::{ExperimentConfig, RegretTrace};

/// Library-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("action violates the {set} norm constraint: |a| = {norm}")]
    NormViolation { set: &'static str, norm: f64 },
    #[error("action kind does not match the model's action set")]
    ActionKindMismatch,
    #[error("invalid model parameters: {0}")]
    InvalidModel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("pull budget exhausted after {0} pulls")]
    BudgetExhausted(u64),
    #[error("probe batch resampled {0} times without producing valid norms")]
    ProbeResampleLimit(u32),
    #[error("candidate pool is empty after elimination at stage {0}")]
    EmptyPool(usize),
    #[error("model class not separated after {0} actions")]
    NotSeparated(u64),
    #[error("fit failed: residual {residual:.3e} above tolerance after {restarts} restarts")]
    FitFailed { residual: f64, restarts: usize },
    #[error("recovery failed at level {level}: {reason}")]
    RecoveryFailed { level: usize, reason: String },
    #[error("feature dimension {0} exceeds the configured cap {1}")]
    FeatureCapExceeded(usize, usize),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
