//! Error type shared by every module in the crate.

use thiserror::Error;

#[derive(Error, Debug, Clone)]
pub enum QomgError {
    /// Truncated basis cannot hold the requested state to the required tail mass.
    #[error("Fock cutoff too small: {what} (tail mass {tail:.3e} > allowed {allowed:.3e})")]
    CutoffTooSmall { what: String, tail: f64, allowed: f64 },

    /// Finite-difference step failed the delta vs delta/2 consistency check.
    #[error("finite-difference step too large: results at delta and delta/2 differ by {rel_diff:.3e} (allowed {allowed:.3e})")]
    StepTooLarge { rel_diff: f64, allowed: f64 },

    /// Integrator produced trace drift or negativity beyond tolerance.
    #[error("integrator unstable: {what}; use a smaller step than h = {h:.3e}")]
    StepUnstable { what: String, h: f64 },

    /// Operation requires a drive-free Hamiltonian.
    #[error("operation requires drive amplitude 0, got |eps| = {eps:.3e}")]
    NonzeroDrive { eps: f64 },

    /// Effective mechanical frequency vanished.
    #[error("effective mechanical frequency is zero (omega_m = 0 and Omega = 0)")]
    ZeroFrequency,

    /// Closed-form moment tables hold for real nonnegative mechanical amplitude only.
    #[error("closed-form path requires a real nonnegative mechanical amplitude, got beta = {re:.3e}{im:+.3e}i")]
    BetaNotRealNonneg { re: f64, im: f64 },

    /// Mismatched spaces or vector/matrix dimensions.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Quadrature grid failed to reach unit normalization after refinement.
    #[error("quadrature grid inadequate: |integral - 1| = {defect:.3e} after {rounds} refinement rounds")]
    GridInadequate { defect: f64, rounds: usize },

    /// Eigensolver did not converge.
    #[error("eigendecomposition failed to converge for a {dim}x{dim} matrix")]
    EigenFailure { dim: usize },

    /// A scalar input is outside its documented domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Config file parse or validation failure.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, QomgError>;

impl QomgError {
    /// Exit-code class used by the CLI: 1 config, 2 numerical precondition.
    pub fn exit_code(&self) -> i32 {
        match self {
            QomgError::Config(_) | QomgError::InvalidInput(_) => 1,
            _ => 2,
        }
    }
}
