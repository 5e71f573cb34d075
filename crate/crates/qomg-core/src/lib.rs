//! Simulation kernels for a Kerr-nonlinear optomechanical gyroscope.
//!
//! A rotating optomechanical cavity encodes the platform rotation rate Omega
//! in its dynamics through the centrifugal shift of the mechanical frequency
//! and a rotation-induced displacement coupling. This crate computes how much
//! information about Omega the light/mechanics state carries:
//!
//! - closed-form quantum Fisher information for coherent-state inputs under
//!   the drive-free Hamiltonian ([`qfi`]),
//! - the exact drive-free evolution and a finite-difference QFI that serves
//!   as its independent cross-check ([`evolution`]),
//! - quadrature-measurement statistics and classical Fisher information
//!   ([`measurement`]),
//! - driven/dissipative dynamics via a Lindblad master equation with
//!   mixed-state QFI ([`open_system`]),
//! - scenario sweeps with deterministic CSV output ([`experiments`]).
//!
//! Every closed-form quantity is backed by a brute-force oracle on a
//! truncated Fock space (explicit generator matrices, dense matrix
//! exponentials, numerical partial traces); the [`oracle`] module bundles
//! those checks into runnable suites.
//!
//! Conventions fixed across the crate:
//! - two-mode tensor ordering is cavity-major (cavity index varies slowest),
//! - the drive-free solution and everything derived from it live in the
//!   interaction picture of the photon-number-diagonal Hamiltonian part,
//!   which carries no Omega dependence and so drops out of all Fisher
//!   information quantities,
//! - quantities with phases beyond f64 reach run through the double-double
//!   scalars in [`dd`].

pub mod dd;
pub mod error;
pub mod tol;

pub mod linalg;

pub mod hilbert;
pub mod model;

pub mod qfi;

pub mod evolution;
pub mod measurement;
pub mod open_system;

pub mod experiments;
pub mod oracle;

pub use error::{QomgError, Result};

pub use hilbert::{DensityOperator, LinearOperator, Mode, StateVector, TruncatedSpace};
pub use model::{DerivedParams, InitialState, SystemParams, UnitSystem};
