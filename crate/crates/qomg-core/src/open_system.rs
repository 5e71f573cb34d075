//! Master-equation dynamics with cavity photon loss, the mixed-state QFI it
//! implies, and a pure-state QFI route for driven runs.
//!
//! The integrator is a fixed-step RK4 on the dense density matrix. Three
//! structural facts keep it fast and well conditioned:
//!
//! * The Hamiltonian has only three bands in the product basis (diagonal,
//!   mechanical sideband at offset 1, drive at offset dim_mech), so H*rho is
//!   computed by banded column sweeps instead of a dense product.
//! * For Hermitian rho, rho*H = (H*rho)^dagger, so each stage needs a single
//!   banded product; the commutator -i(X - X^dagger) and the dissipator are
//!   then assembled in one pass over index pairs, which also makes every
//!   stage Hermitian by construction.
//! * Without a drive the Hamiltonian commutes with the photon number, so the
//!   fast linear part of the cavity diagonal can be rotated away exactly: the
//!   photon-loss dissipator is invariant under e^{-i c t n} because the
//!   rotation multiplies the lowering operator by a global phase. The
//!   integrator then resolves only the slow scales (mechanical frequency and
//!   coupling) and the rotation is restored as a diagonal phase at readout.
//!
//! Rotation-rate derivatives never come from subtracting two forward runs.
//! The pair (mean, difference) of the states at Omega +/- delta obeys a
//! closed linear system,
//!
//!   d(mean)/dt = L[H](mean) + (1/4) L[dH](diff),
//!   d(diff)/dt = L[H](diff) + L[dH](mean),
//!
//! with dH = H(Omega+delta) - H(Omega-delta) evaluated in double-double
//! arithmetic, so the difference is integrated on its own scale and the
//! usual catastrophic cancellation of finite differences never happens.
//!
//! Truncating the generator is not the same as projecting the exact state:
//! population reaching the top mechanical level scatters instead of leaving,
//! and that boundary error dominates everything else in the integrator. The
//! runs therefore carry a few guard levels above the requested mechanical
//! cutoff and project the result back, which buys orders of magnitude of
//! accuracy for a modest quadratic cost factor.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::dd::Dd;
use crate::error::{QomgError, Result};
use crate::evolution::dd_derive_at;
use crate::hilbert::{coherent_amplitudes, DensityOperator, Mode, TruncatedSpace};
use crate::linalg;
use crate::model::{DerivedParams, InitialState, SystemParams, UnitMode};
use crate::tol;

// ---------------------------------------------------------------------------
// Banded Hamiltonian
// ---------------------------------------------------------------------------

/// Hamiltonian in angular-frequency units (hbar divided out) stored as its
/// three bands. `mech[i]` couples basis state i to i+1 (same photon number,
/// neighbouring phonon level, zero across block edges); `drive[i]` couples i
/// to i+dim_mech (neighbouring photon number, same phonon level).
struct BandedOp {
    d: usize,
    dm: usize,
    diag: Vec<f64>,
    mech: Vec<f64>,
    drive: Vec<C64>,
}

impl BandedOp {
    /// Bands at the evaluation point of `derived`. `rotate_out` is the
    /// linear cavity frequency removed by the rotating frame (0 to stay in
    /// the full frame); `zero_h` empties the Hamiltonian for decay-only
    /// reference runs.
    fn center(
        params: &SystemParams,
        derived: &DerivedParams,
        space: TruncatedSpace,
        rotate_out: f64,
        zero_h: bool,
    ) -> BandedOp {
        let (dc, dm) = (space.dim_cavity(), space.dim_mech());
        let d = space.dim_total();
        let mut diag = vec![0.0; d];
        let mut mech = vec![0.0; d];
        let mut drive = Vec::new();
        if !zero_h {
            let wc = params.cavity_frame_frequency();
            let eta0 = params.eta0;
            for n in 0..dc {
                let nf = n as f64;
                let diag_c = (wc - eta0) * nf + eta0 * nf * nf - rotate_out * nf;
                let coupling =
                    (derived.g0 - derived.g_nl) * nf + derived.g_nl * nf * nf - derived.chi;
                for k in 0..dm {
                    let i = space.index(n, k);
                    diag[i] = diag_c + derived.omega_m_tilde * k as f64;
                    if k + 1 < dm {
                        mech[i] = coupling * ((k + 1) as f64).sqrt();
                    }
                }
            }
            let eps = params.drive_epsilon();
            if eps != C64::new(0.0, 0.0) {
                // upper band <n,k|H|n+1,k> = conj(eps) sqrt(n+1)
                drive = vec![C64::new(0.0, 0.0); d];
                for n in 0..dc.saturating_sub(1) {
                    let amp = ((n + 1) as f64).sqrt();
                    for k in 0..dm {
                        drive[space.index(n, k)] = eps.conj() * amp;
                    }
                }
            }
        }
        BandedOp { d, dm, diag, mech, drive }
    }

    /// H(x_plus) - H(x_minus), with every coefficient differenced in
    /// double-double before rounding, so the bands carry the full relative
    /// precision of the derivative signal even when x_plus - x_minus is ten
    /// orders below the parameters themselves. The drive and the bare cavity
    /// diagonal are rotation-independent and drop out.
    fn delta(
        params: &SystemParams,
        derived: &DerivedParams,
        space: TruncatedSpace,
        x_plus: Dd,
        x_minus: Dd,
    ) -> Result<BandedOp> {
        let dp = dd_derive_at(params, derived.units, x_plus)?;
        let dm_ = dd_derive_at(params, derived.units, x_minus)?;
        let (dc, dm) = (space.dim_cavity(), space.dim_mech());
        let d = space.dim_total();
        let d_omega = (dp.omega_m_tilde - dm_.omega_m_tilde).f64();
        let mut diag = vec![0.0; d];
        let mut mech = vec![0.0; d];
        for n in 0..dc {
            let nf = n as f64;
            // difference of omega_m_tilde * E_n between the two rates
            let e_p = (dp.g0_tilde - dp.g_nl_tilde).mul_f64(nf)
                + dp.g_nl_tilde.mul_f64(nf * nf)
                - dp.chi_tilde;
            let e_m = (dm_.g0_tilde - dm_.g_nl_tilde).mul_f64(nf)
                + dm_.g_nl_tilde.mul_f64(nf * nf)
                - dm_.chi_tilde;
            let d_coupling = (dp.omega_m_tilde * e_p - dm_.omega_m_tilde * e_m).f64();
            for k in 0..dm {
                let i = space.index(n, k);
                diag[i] = d_omega * k as f64;
                if k + 1 < dm {
                    mech[i] = d_coupling * ((k + 1) as f64).sqrt();
                }
            }
        }
        Ok(BandedOp { d, dm, diag, mech, drive: Vec::new() })
    }

    /// out = H v for a single column.
    fn apply_col(&self, v: &[C64], out: &mut [C64]) {
        let d = self.d;
        for i in 0..d {
            out[i] = self.diag[i] * v[i];
        }
        for i in 0..d - 1 {
            out[i] += self.mech[i] * v[i + 1];
        }
        for i in 0..d - 1 {
            out[i + 1] += self.mech[i] * v[i];
        }
        if !self.drive.is_empty() {
            let dm = self.dm;
            for i in 0..d - dm {
                out[i] += self.drive[i] * v[i + dm];
            }
            for i in 0..d - dm {
                out[i + dm] += self.drive[i].conj() * v[i];
            }
        }
    }

    /// out = H a for a dense column-major matrix.
    fn apply_matrix(&self, a: &[C64], out: &mut [C64]) {
        let d = self.d;
        for j in 0..d {
            self.apply_col(&a[j * d..(j + 1) * d], &mut out[j * d..(j + 1) * d]);
        }
    }
}

// ---------------------------------------------------------------------------
// Lindblad right-hand side
// ---------------------------------------------------------------------------

/// Per-basis-state cavity data for the dissipator.
struct CavityIndex {
    n_of: Vec<f64>,
    /// sqrt(n+1), the lowering amplitude from the block above.
    s_of: Vec<f64>,
}

impl CavityIndex {
    fn new(space: TruncatedSpace) -> CavityIndex {
        let d = space.dim_total();
        let dm = space.dim_mech();
        let mut n_of = vec![0.0; d];
        let mut s_of = vec![0.0; d];
        for i in 0..d {
            let n = (i / dm) as f64;
            n_of[i] = n;
            s_of[i] = (n + 1.0).sqrt();
        }
        CavityIndex { n_of, s_of }
    }
}

/// out = -i(x1 - x1^dagger) + q*(-i)(x2 - x2^dagger) + kappa D(rho), where
/// x1 = H rho and x2 = dH sigma are precomputed banded products and
/// D(rho) = a rho a^dagger - (1/2){n, rho}. Walking pairs (i >= j) and
/// mirroring makes the result Hermitian to the last bit.
fn assemble_rhs(
    out: &mut [C64],
    rho: &[C64],
    x1: &[C64],
    x2: Option<(&[C64], f64)>,
    idx: &CavityIndex,
    dm: usize,
    kappa: f64,
    d: usize,
) {
    for j in 0..d {
        let nj = idx.n_of[j];
        let sj = idx.s_of[j];
        let shift_col = (j + dm) * d + dm;
        for i in j..d {
            let diff = x1[i + j * d] - x1[j + i * d].conj();
            let mut val = C64::new(diff.im, -diff.re);
            if let Some((x2m, q)) = x2 {
                let diff2 = x2m[i + j * d] - x2m[j + i * d].conj();
                val += q * C64::new(diff2.im, -diff2.re);
            }
            if kappa != 0.0 {
                let mut dis = -0.5 * (idx.n_of[i] + nj) * rho[i + j * d];
                if i + dm < d && j + dm < d {
                    dis += idx.s_of[i] * sj * rho[shift_col + i];
                }
                val += kappa * dis;
            }
            out[i + j * d] = val;
            if i != j {
                out[j + i * d] = val.conj();
            }
        }
    }
}

// ---------------------------------------------------------------------------
// RK4 driver on flat complex buffers
// ---------------------------------------------------------------------------

fn axpy(out: &mut [C64], base: &[C64], k: &[C64], c: f64) {
    for i in 0..out.len() {
        out[i] = base[i] + c * k[i];
    }
}

fn rk4_run(
    y: &mut [C64],
    h: f64,
    n_steps: usize,
    rhs: &mut dyn FnMut(&[C64], &mut [C64]),
    after_step: &mut dyn FnMut(&mut [C64], usize) -> Result<()>,
) -> Result<()> {
    let len = y.len();
    let mut k1 = vec![C64::new(0.0, 0.0); len];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut tmp = k1.clone();
    for step in 0..n_steps {
        rhs(y, &mut k1);
        axpy(&mut tmp, y, &k1, 0.5 * h);
        rhs(&tmp, &mut k2);
        axpy(&mut tmp, y, &k2, 0.5 * h);
        rhs(&tmp, &mut k3);
        axpy(&mut tmp, y, &k3, h);
        rhs(&tmp, &mut k4);
        let w = h / 6.0;
        for i in 0..len {
            y[i] += w * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        }
        after_step(y, step + 1)?;
    }
    Ok(())
}

fn hermitize(m: &mut [C64], d: usize) {
    for j in 0..d {
        m[j + j * d] = C64::new(m[j + j * d].re, 0.0);
        for i in j + 1..d {
            let avg = 0.5 * (m[i + j * d] + m[j + i * d].conj());
            m[i + j * d] = avg;
            m[j + i * d] = avg.conj();
        }
    }
}

fn trace_re(m: &[C64], d: usize) -> f64 {
    (0..d).map(|i| m[i + i * d].re).sum()
}

/// rho -> U rho U^dagger with U = e^{-i angle n}: each entry picks up
/// e^{-i angle (n_i - n_j)}.
fn rotate_photon_phases(m: &mut [C64], d: usize, dm: usize, angle: f64) {
    if angle == 0.0 {
        return;
    }
    let dc = d / dm;
    let ph: Vec<C64> = (0..dc).map(|n| C64::from_polar(1.0, -angle * n as f64)).collect();
    for j in 0..d {
        let pj = ph[j / dm].conj();
        for i in 0..d {
            m[i + j * d] *= ph[i / dm] * pj;
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration and initial state
// ---------------------------------------------------------------------------

/// Hamiltonian entering the master equation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HamiltonianTerm {
    /// The full model Hamiltonian at the evaluation point.
    #[default]
    FromParams,
    /// No Hamiltonian: bare photon decay, for analytically solvable
    /// reference runs.
    Zero,
}

/// Extra mechanical levels integrated beyond the requested cutoff so the
/// truncation boundary error stays well below the returned state.
pub const DEFAULT_MECH_GUARD: usize = 3;

/// Fixed-step master-equation run description.
#[derive(Clone, Copy, Debug)]
pub struct LindbladConfig {
    /// Cavity energy decay rate.
    pub kappa: f64,
    /// RK4 step.
    pub h: f64,
    /// Duration of the run.
    pub t_final: f64,
    pub hamiltonian: HamiltonianTerm,
    /// Mechanical guard levels carried internally and projected away.
    pub guard_levels: usize,
}

impl LindbladConfig {
    /// Run description with the default step and guard for the unit system.
    pub fn with_defaults(kappa: f64, t_final: f64, derived: &DerivedParams) -> LindbladConfig {
        LindbladConfig {
            kappa,
            h: default_step(derived),
            t_final,
            hamiltonian: HamiltonianTerm::FromParams,
            guard_levels: DEFAULT_MECH_GUARD,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(QomgError::InvalidInput(format!(
                "integration step must be positive and finite, got {}",
                self.h
            )));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(QomgError::InvalidInput(format!(
                "integration time must be non-negative, got {}",
                self.t_final
            )));
        }
        if self.kappa < 0.0 {
            return Err(QomgError::InvalidInput(format!(
                "decay rate must be non-negative, got {}",
                self.kappa
            )));
        }
        Ok(())
    }
}

/// Default RK4 step: 1/400 of a mechanical period at laboratory scales,
/// 1/4000 of the unit-frequency period in dimensionless mode (where the
/// rotating frame leaves couplings of order one or below).
pub fn default_step(derived: &DerivedParams) -> f64 {
    match derived.units.mode {
        UnitMode::Si => (2.0 * std::f64::consts::PI / derived.omega_m_tilde) / 400.0,
        UnitMode::Dimensionless => 2.0 * std::f64::consts::PI / 4000.0,
    }
}

/// Truncated product coherent state |alpha> (x) |beta> as a flat column-major
/// density matrix, renormalized so the trace is exactly one.
fn initial_density(init: &InitialState, space: TruncatedSpace) -> Result<Vec<C64>> {
    let (dc, dm) = (space.dim_cavity(), space.dim_mech());
    let cav = coherent_amplitudes(init.alpha, dc);
    let mech = coherent_amplitudes(init.beta, dm);
    for (what, amps) in [("cavity", &cav), ("mechanical", &mech)] {
        let kept: f64 = amps.iter().map(|c| c.norm_sqr()).sum();
        if 1.0 - kept > tol::LINDBLAD_INIT_TAIL {
            return Err(QomgError::CutoffTooSmall {
                what: format!("{what} coherent tail in master-equation run"),
                tail: 1.0 - kept,
                allowed: tol::LINDBLAD_INIT_TAIL,
            });
        }
    }
    let d = space.dim_total();
    let mut psi = vec![C64::new(0.0, 0.0); d];
    for n in 0..dc {
        for k in 0..dm {
            psi[space.index(n, k)] = cav[n] * mech[k];
        }
    }
    let norm: f64 = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    for c in &mut psi {
        *c /= norm;
    }
    let mut rho = vec![C64::new(0.0, 0.0); d * d];
    for j in 0..d {
        for i in 0..d {
            rho[i + j * d] = psi[i] * psi[j].conj();
        }
    }
    Ok(rho)
}

fn step_count(t_final: f64, h: f64) -> usize {
    if t_final == 0.0 {
        0
    } else {
        // the slack keeps an exactly-divisible duration from picking up a
        // 1-ulp extra step
        ((t_final / h - 1e-9).ceil() as usize).max(1)
    }
}

/// Requested space extended by the mechanical guard levels.
fn guarded_space(space: TruncatedSpace, guard: usize) -> Result<TruncatedSpace> {
    TruncatedSpace::new(space.dim_cavity() - 1, space.dim_mech() - 1 + guard)
}

/// Map snapshot times onto step boundaries: returns the step count, the
/// effective step, and one step index per requested time. Times must be
/// non-decreasing and lie within the run.
fn snapshot_steps(t_final: f64, h: f64, times: &[f64]) -> Result<(usize, f64, Vec<usize>)> {
    let n_steps = step_count(t_final, h);
    let h_eff = if n_steps > 0 { t_final / n_steps as f64 } else { h };
    let mut snap_steps = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        if !(0.0..=t_final + 0.5 * h_eff).contains(&t) {
            return Err(QomgError::InvalidInput(format!(
                "snapshot time {t} outside the run [0, {t_final}]"
            )));
        }
        if k > 0 && t < times[k - 1] {
            return Err(QomgError::InvalidInput(
                "snapshot times must be non-decreasing".into(),
            ));
        }
        snap_steps.push(((t / h_eff).round() as usize).min(n_steps));
    }
    Ok((n_steps, h_eff, snap_steps))
}

/// Sub-block of an inner-space matrix with the guard levels dropped,
/// renormalized to unit trace.
fn project_from_guarded(
    space: TruncatedSpace,
    inner: TruncatedSpace,
    flat: &[C64],
) -> Vec<C64> {
    let (dc, dm) = (space.dim_cavity(), space.dim_mech());
    let d = space.dim_total();
    let di = inner.dim_total();
    let mut out = vec![C64::new(0.0, 0.0); d * d];
    for nj in 0..dc {
        for kj in 0..dm {
            let j = space.index(nj, kj);
            let j_in = inner.index(nj, kj);
            for ni in 0..dc {
                for ki in 0..dm {
                    out[space.index(ni, ki) + j * d] =
                        flat[inner.index(ni, ki) + j_in * di];
                }
            }
        }
    }
    let tr: f64 = (0..d).map(|i| out[i + i * d].re).sum();
    for c in &mut out {
        *c /= tr;
    }
    out
}

// ---------------------------------------------------------------------------
// Master-equation runs
// ---------------------------------------------------------------------------

/// State after integrating the master equation for `config.t_final`.
pub fn lindblad_evolve(
    params: &SystemParams,
    derived: &DerivedParams,
    init: &InitialState,
    config: &LindbladConfig,
    space: TruncatedSpace,
) -> Result<DensityOperator> {
    let mut traj =
        lindblad_evolve_trajectory(params, derived, init, config, space, &[config.t_final])?;
    Ok(traj.pop().expect("one snapshot was requested"))
}

/// States at the requested times along a single integration. Each time is
/// snapped to the nearest step boundary; the times must be non-decreasing
/// and lie within the run.
pub fn lindblad_evolve_trajectory(
    params: &SystemParams,
    derived: &DerivedParams,
    init: &InitialState,
    config: &LindbladConfig,
    space: TruncatedSpace,
    times: &[f64],
) -> Result<Vec<DensityOperator>> {
    config.validate()?;
    let (n_steps, h_eff, snap_steps) = snapshot_steps(config.t_final, config.h, times)?;

    let zero_h = config.hamiltonian == HamiltonianTerm::Zero;
    // the linear cavity diagonal can only be factored out when the
    // Hamiltonian conserves the photon number
    let rotate_out = if zero_h || params.drive_amplitude != 0.0 {
        0.0
    } else {
        params.cavity_frame_frequency()
    };
    let inner = guarded_space(space, config.guard_levels)?;
    let bands = BandedOp::center(params, derived, inner, rotate_out, zero_h);
    let idx = CavityIndex::new(inner);
    let d = inner.dim_total();
    let dm = inner.dim_mech();
    let kappa = config.kappa;

    let mut rho = initial_density(init, inner)?;
    let mut x = vec![C64::new(0.0, 0.0); d * d];
    let mut out = Vec::with_capacity(times.len());

    let d_req = space.dim_total();
    let capture = |rho: &[C64], step: usize, out: &mut Vec<DensityOperator>| {
        for (req, &s) in snap_steps.iter().enumerate() {
            if s == step && out.len() == req {
                let mut mat = project_from_guarded(space, inner, rho);
                rotate_photon_phases(
                    &mut mat,
                    d_req,
                    space.dim_mech(),
                    rotate_out * (step as f64) * h_eff,
                );
                let mat = DMatrix::from_column_slice(d_req, d_req, &mat);
                out.push(DensityOperator { space, mode: Mode::Both, mat });
            }
        }
    };
    capture(&rho, 0, &mut out);

    let mut rhs = |state: &[C64], deriv: &mut [C64]| {
        bands.apply_matrix(state, &mut x);
        assemble_rhs(deriv, state, &x, None, &idx, dm, kappa, d);
    };
    let mut after = |state: &mut [C64], step: usize| -> Result<()> {
        hermitize(state, d);
        let drift = (trace_re(state, d) - 1.0).abs();
        if drift > tol::LINDBLAD_TRACE_DRIFT {
            return Err(QomgError::StepUnstable {
                what: format!("master-equation trace drifted by {drift:.3e}"),
                h: h_eff,
            });
        }
        capture(state, step, &mut out);
        Ok(())
    };
    rk4_run(&mut rho, h_eff, n_steps, &mut rhs, &mut after)?;

    if out.len() != times.len() {
        return Err(QomgError::InvalidInput(
            "snapshot times could not all be matched to step boundaries".into(),
        ));
    }
    Ok(out)
}

/// <n> of the cavity factor (works on cavity-only and product-space states).
pub fn mean_cavity_number(rho: &DensityOperator) -> Result<f64> {
    let d = rho.mat.nrows();
    match rho.mode {
        Mode::Cavity => Ok((0..d).map(|n| n as f64 * rho.mat[(n, n)].re).sum()),
        Mode::Both => {
            let dm = rho.space.dim_mech();
            Ok((0..d).map(|i| (i / dm) as f64 * rho.mat[(i, i)].re).sum())
        }
        Mode::Mech => Err(QomgError::InvalidInput(
            "mean cavity number of a mechanics-only state".into(),
        )),
    }
}

// ---------------------------------------------------------------------------
// Mixed-state QFI
// ---------------------------------------------------------------------------

/// Finite-difference Fisher information with its step-convergence data.
#[derive(Clone, Copy, Debug)]
pub struct FdQfiMixed {
    /// Estimate at the refined step (delta/2).
    pub value: f64,
    /// Base rotation-rate step.
    pub delta: f64,
    /// Estimate at the unrefined step.
    pub coarse: f64,
}

/// Integrate the coupled (mean, difference) pair for the states at
/// Omega +/- delta; returns the two flat matrices per requested snapshot
/// time, on the guarded space.
fn integrate_pair_snapshots(
    params: &SystemParams,
    derived: &DerivedParams,
    init: &InitialState,
    config: &LindbladConfig,
    space: TruncatedSpace,
    delta: f64,
    times: &[f64],
) -> Result<(Vec<(Vec<C64>, Vec<C64>)>, TruncatedSpace)> {
    let zero_h = config.hamiltonian == HamiltonianTerm::Zero;
    let rotate_out = if zero_h || params.drive_amplitude != 0.0 {
        0.0
    } else {
        params.cavity_frame_frequency()
    };
    let inner = guarded_space(space, config.guard_levels)?;
    let bands = BandedOp::center(params, derived, inner, rotate_out, zero_h);
    let x_plus = Dd::from_f64(derived.omega_eval) + Dd::from_f64(delta);
    let x_minus = Dd::from_f64(derived.omega_eval) - Dd::from_f64(delta);
    let dbands = if zero_h {
        BandedOp {
            d: inner.dim_total(),
            dm: inner.dim_mech(),
            diag: vec![0.0; inner.dim_total()],
            mech: vec![0.0; inner.dim_total()],
            drive: Vec::new(),
        }
    } else {
        BandedOp::delta(params, derived, inner, x_plus, x_minus)?
    };
    let idx = CavityIndex::new(inner);
    let d = inner.dim_total();
    let dm = inner.dim_mech();
    let l = d * d;
    let kappa = config.kappa;
    let (n_steps, h_eff, snap_steps) = snapshot_steps(config.t_final, config.h, times)?;

    // state = [mean | difference]; both start from the same rho with the
    // difference at zero
    let mut y = vec![C64::new(0.0, 0.0); 2 * l];
    let rho0 = initial_density(init, inner)?;
    y[..l].copy_from_slice(&rho0);

    let mut out: Vec<(Vec<C64>, Vec<C64>)> = Vec::with_capacity(times.len());
    let capture = |state: &[C64], step: usize, out: &mut Vec<(Vec<C64>, Vec<C64>)>| {
        for (req, &s) in snap_steps.iter().enumerate() {
            if s == step && out.len() == req {
                let (m, sig) = state.split_at(l);
                out.push((m.to_vec(), sig.to_vec()));
            }
        }
    };
    capture(&y, 0, &mut out);

    let mut x1 = vec![C64::new(0.0, 0.0); l];
    let mut x2 = vec![C64::new(0.0, 0.0); l];
    let mut rhs = |state: &[C64], deriv: &mut [C64]| {
        let (m, s) = state.split_at(l);
        let (dm_out, ds_out) = deriv.split_at_mut(l);
        bands.apply_matrix(m, &mut x1);
        dbands.apply_matrix(s, &mut x2);
        assemble_rhs(dm_out, m, &x1, Some((&x2, 0.25)), &idx, dm, kappa, d);
        bands.apply_matrix(s, &mut x1);
        dbands.apply_matrix(m, &mut x2);
        assemble_rhs(ds_out, s, &x1, Some((&x2, 1.0)), &idx, dm, kappa, d);
    };
    let mut after = |state: &mut [C64], step: usize| -> Result<()> {
        let (m, s) = state.split_at_mut(l);
        hermitize(m, d);
        hermitize(s, d);
        let drift = (trace_re(m, d) - 1.0).abs();
        if drift > tol::LINDBLAD_TRACE_DRIFT {
            return Err(QomgError::StepUnstable {
                what: format!("master-equation trace drifted by {drift:.3e}"),
                h: h_eff,
            });
        }
        capture(state, step, &mut out);
        Ok(())
    };
    rk4_run(&mut y, h_eff, n_steps, &mut rhs, &mut after)?;
    if out.len() != times.len() {
        return Err(QomgError::InvalidInput(
            "snapshot times could not all be matched to step boundaries".into(),
        ));
    }
    Ok((out, inner))
}

/// Final-state pair; thin wrapper over the snapshot walk.
fn integrate_pair(
    params: &SystemParams,
    derived: &DerivedParams,
    init: &InitialState,
    config: &LindbladConfig,
    space: TruncatedSpace,
    delta: f64,
) -> Result<(Vec<C64>, Vec<C64>, TruncatedSpace)> {
    let (mut snaps, inner) =
        integrate_pair_snapshots(params, derived, init, config, space, delta, &[config.t_final])?;
    let (m, s) = snaps.pop().expect("one snapshot was requested");
    Ok((m, s, inner))
}

/// Fisher information of the decohered state by the spectral formula
/// F = 2 sum_{ij} |<i|d rho|j>|^2 / (P_i + P_j) over the populated pairs,
/// with d rho from difference propagation at delta and the consistency of
/// delta against delta/2 enforced. The eigenbasis of the refined mean state
/// is used for both estimates so the comparison isolates the step.
pub fn qfi_mixed(
    params: &SystemParams,
    derived: &DerivedParams,
    init: &InitialState,
    config: &LindbladConfig,
    space: TruncatedSpace,
    delta_omega: Option<f64>,
) -> Result<FdQfiMixed> {
    config.validate()?;
    let delta = delta_omega
        .unwrap_or_else(|| 1e-6 * derived.omega_eval.abs().max(params.omega_m));
    if !(delta > 0.0) {
        return Err(QomgError::InvalidInput(format!(
            "finite-difference step must be positive, got {delta}"
        )));
    }

    let (_, sig_coarse, _) = integrate_pair(params, derived, init, config, space, delta)?;
    let (mean_fine, sig_fine, inner) =
        integrate_pair(params, derived, init, config, space, delta / 2.0)?;

    // the spectral sum runs on the guarded space; the guard populations are
    // negligible and the value is frame-invariant, so no projection is needed
    let d = inner.dim_total();
    let basis = eigenbasis(&mean_fine, d)?;
    let coarse = fisher_in_basis(&basis, &sig_coarse, d, delta);
    let fine = fisher_in_basis(&basis, &sig_fine, d, delta / 2.0);
    let rel = (coarse - fine).abs() / fine.abs().max(1e-300);
    if rel > tol::RICHARDSON_REL && (coarse - fine).abs() > 1e-300 {
        return Err(QomgError::StepTooLarge { rel_diff: rel, allowed: tol::RICHARDSON_REL });
    }
    Ok(FdQfiMixed { value: fine, delta, coarse })
}

/// Eigendecomposition of a mean state with populations clamped at zero.
struct SpectralBasis {
    pops: Vec<f64>,
    vecs: DMatrix<C64>,
}

fn eigenbasis(mean: &[C64], d: usize) -> Result<SpectralBasis> {
    let center = DMatrix::from_column_slice(d, d, mean);
    let (vals, vecs) = linalg::hermitian_eigen(&center)?;
    Ok(SpectralBasis { pops: vals.iter().map(|p| p.max(0.0)).collect(), vecs })
}

/// F = 2 sum |<i|d rho|j>|^2 / (P_i + P_j) with d rho = sig / (2 step).
fn fisher_in_basis(basis: &SpectralBasis, sig: &[C64], d: usize, step: f64) -> f64 {
    let sig_m = DMatrix::from_column_slice(d, d, sig);
    let m = basis.vecs.adjoint() * sig_m * &basis.vecs;
    let mut acc = 0.0;
    for j in 0..d {
        for i in 0..d {
            let w = basis.pops[i] + basis.pops[j];
            if w > tol::SPECTRAL_SUPPORT {
                let deriv = m[(i, j)].norm_sqr() / (2.0 * step) / (2.0 * step);
                acc += 2.0 * deriv / w;
            }
        }
    }
    acc
}

fn mixed_fd_step(
    params: &SystemParams,
    derived: &DerivedParams,
    delta_omega: Option<f64>,
) -> Result<f64> {
    let delta = delta_omega
        .unwrap_or_else(|| 1e-6 * derived.omega_eval.abs().max(params.omega_m));
    if !(delta > 0.0) {
        return Err(QomgError::InvalidInput(format!(
            "finite-difference step must be positive, got {delta}"
        )));
    }
    Ok(delta)
}

/// Mixed-state QFI at the base step only, skipping the delta/2 refinement.
/// Sweep runners use this next to a fully refined witness point evaluated
/// under the same step policy; it is not meant for isolated estimates.
pub(crate) fn qfi_mixed_unrefined(
    params: &SystemParams,
    derived: &DerivedParams,
    init: &InitialState,
    config: &LindbladConfig,
    space: TruncatedSpace,
    delta_omega: Option<f64>,
) -> Result<f64> {
    config.validate()?;
    let delta = mixed_fd_step(params, derived, delta_omega)?;
    let (mean, sig, inner) = integrate_pair(params, derived, init, config, space, delta)?;
    let d = inner.dim_total();
    let basis = eigenbasis(&mean, d)?;
    Ok(fisher_in_basis(&basis, &sig, d, delta))
}

/// Mixed-state QFI at several times along one difference-propagation run.
#[derive(Clone, Debug)]
pub struct TrajectoryQfi {
    /// Base-step estimates, one per requested time.
    pub values: Vec<f64>,
    /// Fully refined estimate at the last time, with its step-consistency
    /// data. The finite-difference error grows along the run, so the last
    /// time bounds the whole trajectory.
    pub witness: FdQfiMixed,
}

/// QFI of the decohered state at each requested time, sharing a single
/// integration of the coupled (mean, difference) pair. The delta/2
/// refinement and its consistency gate run at the final time only.
pub fn qfi_mixed_trajectory(
    params: &SystemParams,
    derived: &DerivedParams,
    init: &InitialState,
    config: &LindbladConfig,
    space: TruncatedSpace,
    times: &[f64],
    delta_omega: Option<f64>,
) -> Result<TrajectoryQfi> {
    config.validate()?;
    if times.is_empty() {
        return Err(QomgError::InvalidInput("trajectory needs at least one time".into()));
    }
    let delta = mixed_fd_step(params, derived, delta_omega)?;

    let (snaps, inner) =
        integrate_pair_snapshots(params, derived, init, config, space, delta, times)?;
    let d = inner.dim_total();
    let mut values = Vec::with_capacity(snaps.len());
    for (mean, sig) in &snaps {
        let basis = eigenbasis(mean, d)?;
        values.push(fisher_in_basis(&basis, sig, d, delta));
    }

    let last = *times.last().expect("times is non-empty");
    let (mut fine_snaps, _) = integrate_pair_snapshots(
        params, derived, init, config, space, delta / 2.0, &[last],
    )?;
    let (mean_fine, sig_fine) = fine_snaps.pop().expect("one snapshot was requested");
    let basis = eigenbasis(&mean_fine, d)?;
    let (_, sig_coarse) = snaps.last().expect("times is non-empty");
    let coarse = fisher_in_basis(&basis, sig_coarse, d, delta);
    let fine = fisher_in_basis(&basis, &sig_fine, d, delta / 2.0);
    let rel = (coarse - fine).abs() / fine.abs().max(1e-300);
    if rel > tol::RICHARDSON_REL && (coarse - fine).abs() > 1e-300 {
        return Err(QomgError::StepTooLarge { rel_diff: rel, allowed: tol::RICHARDSON_REL });
    }
    Ok(TrajectoryQfi { values, witness: FdQfiMixed { value: fine, delta, coarse } })
}

// ---------------------------------------------------------------------------
// Driven pure-state QFI
// ---------------------------------------------------------------------------

/// State-vector RK4 for the coupled (mean, difference) pair in the full
/// frame; returns both vectors on the guarded space.
fn integrate_driven_pair(
    params: &SystemParams,
    derived: &DerivedParams,
    init: &InitialState,
    t: f64,
    space: TruncatedSpace,
    h: f64,
    delta: f64,
) -> Result<(Vec<C64>, Vec<C64>, TruncatedSpace)> {
    let space = guarded_space(space, DEFAULT_MECH_GUARD)?;
    let bands = BandedOp::center(params, derived, space, 0.0, false);
    let x_plus = Dd::from_f64(derived.omega_eval) + Dd::from_f64(delta);
    let x_minus = Dd::from_f64(derived.omega_eval) - Dd::from_f64(delta);
    let dbands = BandedOp::delta(params, derived, space, x_plus, x_minus)?;
    let d = space.dim_total();
    let n_steps = step_count(t, h);

    let (dc, dmm) = (space.dim_cavity(), space.dim_mech());
    let cav = coherent_amplitudes(init.alpha, dc);
    let mech = coherent_amplitudes(init.beta, dmm);
    for (what, amps) in [("cavity", &cav), ("mechanical", &mech)] {
        let kept: f64 = amps.iter().map(|c| c.norm_sqr()).sum();
        if 1.0 - kept > tol::LINDBLAD_INIT_TAIL {
            return Err(QomgError::CutoffTooSmall {
                what: format!("{what} coherent tail in driven run"),
                tail: 1.0 - kept,
                allowed: tol::LINDBLAD_INIT_TAIL,
            });
        }
    }
    let mut y = vec![C64::new(0.0, 0.0); 2 * d];
    for n in 0..dc {
        for k in 0..dmm {
            y[space.index(n, k)] = cav[n] * mech[k];
        }
    }
    let norm: f64 = y[..d].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    for c in &mut y[..d] {
        *c /= norm;
    }

    let mut x1 = vec![C64::new(0.0, 0.0); d];
    let mut x2 = vec![C64::new(0.0, 0.0); d];
    let mi = C64::new(0.0, -1.0);
    let mut rhs = |state: &[C64], deriv: &mut [C64]| {
        let (s, df) = state.split_at(d);
        let (ds_out, dd_out) = deriv.split_at_mut(d);
        bands.apply_col(s, &mut x1);
        dbands.apply_col(df, &mut x2);
        for i in 0..d {
            ds_out[i] = mi * (x1[i] + 0.25 * x2[i]);
        }
        bands.apply_col(df, &mut x1);
        dbands.apply_col(s, &mut x2);
        for i in 0..d {
            dd_out[i] = mi * (x1[i] + x2[i]);
        }
    };
    let mut after = |_: &mut [C64], _: usize| -> Result<()> { Ok(()) };
    rk4_run(&mut y, if n_steps > 0 { t / n_steps as f64 } else { h }, n_steps, &mut rhs, &mut after)?;

    let df = y.split_off(d);
    let norm_drift = (y.iter().map(|c| c.norm_sqr()).sum::<f64>() - 1.0).abs();
    if norm_drift > tol::LINDBLAD_TRACE_DRIFT {
        return Err(QomgError::StepUnstable {
            what: format!("driven state norm drifted by {norm_drift:.3e}"),
            h,
        });
    }
    Ok((y, df, space))
}

fn pure_fisher_from_pair(s: &[C64], df: &[C64], delta: f64) -> f64 {
    let s2: f64 = s.iter().map(|c| c.norm_sqr()).sum();
    let d2: f64 = df.iter().map(|c| c.norm_sqr()).sum();
    let sd: C64 = s.iter().zip(df).map(|(a, b)| a.conj() * b).sum();
    // F = 4(<dpsi|dpsi> - |<psi|dpsi>|^2) with dpsi ~ diff/(2 delta)
    (d2 / s2 - sd.norm_sqr() / (s2 * s2)) / (delta * delta)
}

/// QFI of the driven closed system (kappa must be zero) by state-vector
/// integration of the (mean, difference) pair in the full frame. The cavity
/// cutoff is raised until the top two photon levels hold less than 1e-8 of
/// the final state, so drive-induced growth cannot silently clip.
pub fn qfi_driven_pure(
    params: &SystemParams,
    derived: &DerivedParams,
    init: &InitialState,
    t: f64,
    space: TruncatedSpace,
    h: Option<f64>,
    delta_omega: Option<f64>,
) -> Result<FdQfiMixed> {
    if params.kappa != 0.0 {
        return Err(QomgError::InvalidInput(format!(
            "driven pure-state QFI needs kappa = 0, got {}",
            params.kappa
        )));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(QomgError::InvalidInput(format!(
            "evolution time must be non-negative, got {t}"
        )));
    }
    let h = h.unwrap_or_else(|| default_step(derived));
    if !(h > 0.0) {
        return Err(QomgError::InvalidInput(format!(
            "integration step must be positive, got {h}"
        )));
    }
    let delta = delta_omega
        .unwrap_or_else(|| 1e-6 * derived.omega_eval.abs().max(params.omega_m));
    if !(delta > 0.0) {
        return Err(QomgError::InvalidInput(format!(
            "finite-difference step must be positive, got {delta}"
        )));
    }

    let mut space_cur = space;
    let mut accepted = None;
    for _ in 0..6 {
        if space_cur.dim_cavity() < 3 {
            space_cur = TruncatedSpace::new(3, space_cur.dim_mech() - 1)?;
            continue;
        }
        let (s, df, inner) =
            integrate_driven_pair(params, derived, init, t, space_cur, h, delta)?;
        let dmm = inner.dim_mech();
        let dc = inner.dim_cavity();
        let pop = |n: usize| -> f64 {
            (0..dmm).map(|k| s[inner.index(n, k)].norm_sqr()).sum()
        };
        let top_two = pop(dc - 1) + pop(dc - 2);
        if top_two < 1e-8 {
            accepted = Some((s, df));
            break;
        }
        space_cur = TruncatedSpace::new(dc - 1 + 8, space_cur.dim_mech() - 1)?;
    }
    let (s, df) = accepted.ok_or_else(|| QomgError::CutoffTooSmall {
        what: "drive kept populating the top photon levels after repeated cutoff increases"
            .into(),
        tail: 1e-8,
        allowed: 1e-8,
    })?;

    let coarse = pure_fisher_from_pair(&s, &df, delta);
    let (s2, df2, _) =
        integrate_driven_pair(params, derived, init, t, space_cur, h, delta / 2.0)?;
    let fine = pure_fisher_from_pair(&s2, &df2, delta / 2.0);
    let rel = (coarse - fine).abs() / fine.abs().max(1e-300);
    if rel > tol::RICHARDSON_REL && (coarse - fine).abs() > 1e-300 {
        return Err(QomgError::StepTooLarge { rel_diff: rel, allowed: tol::RICHARDSON_REL });
    }
    Ok(FdQfiMixed { value: fine, delta, coarse })
}
