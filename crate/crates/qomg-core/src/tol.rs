//! Central numerical tolerances.
//!
//! Every cross-check in the crate pulls its threshold from here so the
//! relationships between them (construction < validation < cross-oracle)
//! stay auditable in one place.

/// Max elementwise |H - H^dagger| for anything claiming to be Hermitian.
pub const HERMITICITY: f64 = 1e-10;

/// |norm^2 - 1| for state vectors claiming normalization.
pub const STATE_NORM: f64 = 1e-8;

/// |trace - 1| for density operators.
pub const DENSITY_TRACE: f64 = 1e-8;

/// Eigenvalue floor for density operators (roundoff negativity allowance).
pub const DENSITY_EIG_FLOOR: f64 = -1e-8;

/// Poisson tail mass allowed beyond a Fock cutoff for coherent states.
pub const COHERENT_TAIL: f64 = 1e-10;

/// Orthonormality / spectral reconstruction tolerance for eigendecompositions.
pub const EIGEN_ORTHO: f64 = 1e-8;

/// Partial trace must preserve the trace to this.
pub const PTRACE_TRACE: f64 = 1e-10;

/// Relative agreement required between the closed-form moment tables and the
/// brute-force generator-matrix expectations.
pub const MOMENT_ORACLE_REL: f64 = 1e-6;

/// Relative agreement between closed-form and finite-difference QFI.
pub const QFI_CROSS_REL: f64 = 1e-4;

/// Fidelity deficit allowed against the matrix-exponential evolution oracle.
pub const EVOLVE_ORACLE_FID: f64 = 1e-6;

/// Norm deficit allowed before renormalizing an exactly evolved state.
pub const EVOLVE_NORM_DEFICIT: f64 = 1e-8;

/// Pointwise agreement between the two quadrature-distribution paths.
pub const QUAD_TWO_PATH: f64 = 1e-8;

/// |integral of P(x) - 1| defining quadrature-grid adequacy.
pub const GRID_NORMALIZATION: f64 = 1e-6;

/// Probability floor: grid points with P below this times max(P) contribute
/// nothing to the classical Fisher integrand.
pub const CFI_PROB_FLOOR: f64 = 1e-14;

/// Richardson consistency: relative change allowed between finite-difference
/// results at delta and delta/2.
pub const RICHARDSON_REL: f64 = 1e-4;

/// Trace drift allowed over a full master-equation run.
pub const LINDBLAD_TRACE_DRIFT: f64 = 1e-6;

/// Coherent-state tail mass allowed when truncating the master-equation
/// initial state (looser than COHERENT_TAIL: dense-density runs cannot
/// afford the cutoffs the pure-state paths use).
pub const LINDBLAD_INIT_TAIL: f64 = 1e-6;

/// Negativity allowed in integrated density operators.
pub const LINDBLAD_EIG_FLOOR: f64 = -1e-6;

/// Spectral support cutoff for the mixed-state QFI double sum.
pub const SPECTRAL_SUPPORT: f64 = 1e-10;

/// Target overlap deficit 1 - |<psi(Omega-d)|psi(Omega+d)>| that the
/// adaptive finite-difference step aims for (keeps F*delta^2 ~ 1e-6).
pub const FD_OVERLAP_TARGET: f64 = 5e-7;

/// Overlap deficit above which the adaptive step controller shrinks delta.
pub const FD_OVERLAP_MAX: f64 = 2e-6;
