//! Exact time evolution of the driving-free model and a finite-difference
//! QFI that is independent of the closed-form generator.
//!
//! With the photon-number diagonal factored out (it commutes with everything
//! and carries no rotation dependence), the evolved product state is
//!
//!   |psi(t)> = sum_n c_n e^{i xi_n} |n> (x) |mu_n>,
//!   E_n  = (g0_tilde - g_nl_tilde) n + g_nl_tilde n^2 - chi_tilde,
//!   mu_n = beta e^{-i theta} - E_n (1 - e^{-i theta}),
//!   xi_n = E_n^2 (theta - sin theta) - E_n beta_tilde,
//!
//! with theta = omega_m_tilde t and beta_tilde = Re(beta) sin(theta)
//! + Im(beta)(1 - cos(theta)). The phases reach 1e20 rad at laboratory-scale
//! parameters while finite differencing needs them to ~1e-10 rad, so every
//! phase-bearing quantity here is evaluated in double-double arithmetic and
//! only reduced to f64 after common parts cancel.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::dd::{im_conj_prod, Dd, DdC, DD_ONE};
use crate::error::{QomgError, Result};
use crate::hilbert::{coherent_amplitudes, DensityOperator, Mode, StateVector, TruncatedSpace};
use crate::model::{DerivedParams, InitialState, SystemParams, UnitMode, UnitSystem};
use crate::tol;

// ---------------------------------------------------------------------------
// Double-double parameter derivation
// ---------------------------------------------------------------------------

/// Tilded couplings at rotation rate x, all in double-double precision.
#[derive(Clone, Copy, Debug)]
pub(crate) struct DdDerived {
    pub omega_m_tilde: Dd,
    pub g0_tilde: Dd,
    pub g_nl_tilde: Dd,
    pub chi_tilde: Dd,
}

fn dd_pow32(w: Dd) -> Dd {
    w * w.sqrt()
}

/// Double-double mirror of `model::derive_at`: same primitives, same
/// rotation scaling, evaluated without rounding to f64 in between.
pub(crate) fn dd_derive_at(
    params: &SystemParams,
    units: UnitSystem,
    x: Dd,
) -> Result<DdDerived> {
    let wm = Dd::from_f64(params.omega_m);
    let wt = (wm * wm + x * x).sqrt();
    if wt.hi == 0.0 {
        return Err(QomgError::ZeroFrequency);
    }
    let wref = {
        let xr = Dd::from_f64(params.omega_rotation);
        (wm * wm + xr * xr).sqrt()
    };
    if wref.hi == 0.0 {
        return Err(QomgError::ZeroFrequency);
    }
    let c_g = dd_pow32(wref).mul_f64(params.g0_tilde);
    let g0_tilde = c_g / dd_pow32(wt);
    let g_nl_tilde = g0_tilde.mul_f64(params.gnl_ratio);

    let chi_tilde = match units.mode {
        UnitMode::Si => {
            // chi/Omega^2 = D sqrt(m / (2 hbar omega_m_tilde))
            let inner = Dd::from_f64(params.mass_m)
                / (wt.mul_f64(2.0 * units.hbar));
            let chi_over_sq = inner.sqrt().mul_f64(params.distance_d);
            chi_over_sq * x * x / wt
        }
        UnitMode::Dimensionless => {
            if params.omega_rotation == 0.0 {
                Dd::from_f64(0.0)
            } else {
                let c_chi = dd_pow32(wref).mul_f64(params.chi_tilde_ref)
                    / (Dd::from_f64(params.omega_rotation) * Dd::from_f64(params.omega_rotation));
                c_chi * x * x / dd_pow32(wt)
            }
        }
    };
    Ok(DdDerived { omega_m_tilde: wt, g0_tilde, g_nl_tilde, chi_tilde })
}

// ---------------------------------------------------------------------------
// State terms
// ---------------------------------------------------------------------------

/// Per-level evolution data in double-double form.
pub(crate) struct DdTerms {
    pub theta: Dd,
    pub tau: Dd,
    pub beta_tilde: Dd,
    pub e: Vec<Dd>,
    pub mu: Vec<DdC>,
    pub xi: Vec<Dd>,
}

pub(crate) fn dd_terms(
    params: &SystemParams,
    units: UnitSystem,
    init: &InitialState,
    x: Dd,
    t: f64,
    n_levels: usize,
) -> Result<DdTerms> {
    let d = dd_derive_at(params, units, x)?;
    let theta = d.omega_m_tilde.mul_f64(t);
    let (sin_t, cos_t) = theta.sin_cos();
    let tau = theta - sin_t;
    let beta_tilde = sin_t.mul_f64(init.beta.re) + (DD_ONE - cos_t).mul_f64(init.beta.im);
    // e^{-i theta} and 1 - e^{-i theta}
    let rot = DdC::new(cos_t, -sin_t);
    let one_minus_rot = DdC::new(DD_ONE - cos_t, sin_t);
    let beta = DdC::from_f64(init.beta.re, init.beta.im);
    let lin = d.g0_tilde - d.g_nl_tilde;

    let mut e = Vec::with_capacity(n_levels);
    let mut mu = Vec::with_capacity(n_levels);
    let mut xi = Vec::with_capacity(n_levels);
    for n in 0..n_levels {
        let nf = n as f64;
        let e_n = lin.mul_f64(nf) + d.g_nl_tilde.mul_f64(nf * nf) - d.chi_tilde;
        let mu_n = beta * rot - one_minus_rot.scale(e_n);
        let xi_n = e_n * e_n * tau - e_n * beta_tilde;
        e.push(e_n);
        mu.push(mu_n);
        xi.push(xi_n);
    }
    Ok(DdTerms { theta, tau, beta_tilde, e, mu, xi })
}

/// f64 view of the exact-evolution building blocks at the evaluation point
/// of `derived` (diagnostics and cross-checks; internal computations keep
/// the double-double values).
#[derive(Clone, Debug)]
pub struct StateTerms {
    pub theta: f64,
    pub tau: f64,
    pub beta_tilde: f64,
    pub e_n: Vec<f64>,
    pub mu_n: Vec<C64>,
    /// xi_n reduced mod 2 pi (the raw values overflow f64 resolution).
    pub phase_n: Vec<f64>,
}

pub fn state_terms(
    params: &SystemParams,
    derived: &DerivedParams,
    init: &InitialState,
    t: f64,
    n_levels: usize,
) -> Result<StateTerms> {
    let terms = dd_terms(
        params,
        derived.units,
        init,
        Dd::from_f64(derived.omega_eval),
        t,
        n_levels,
    )?;
    Ok(StateTerms {
        theta: terms.theta.f64(),
        tau: terms.tau.f64(),
        beta_tilde: terms.beta_tilde.f64(),
        e_n: terms.e.iter().map(|v| v.f64()).collect(),
        mu_n: terms.mu.iter().map(|v| v.to_c64()).collect(),
        phase_n: terms.xi.iter().map(|v| v.rem_2pi().f64()).collect(),
    })
}

// ---------------------------------------------------------------------------
// Exact evolution on a truncated space
// ---------------------------------------------------------------------------

fn poisson_tail(amps: &[C64]) -> f64 {
    let kept: f64 = amps.iter().map(|c| c.norm_sqr()).sum();
    (1.0 - kept).max(0.0)
}

/// Exact evolved state with the default coherent-tail tolerance.
pub fn evolve_exact(
    params: &SystemParams,
    derived: &DerivedParams,
    init: &InitialState,
    t: f64,
    space: TruncatedSpace,
) -> Result<StateVector> {
    evolve_exact_with_tail_tol(params, derived, init, t, space, tol::COHERENT_TAIL)
}

/// Exact evolved state, accepting a caller-chosen truncation-tail tolerance
/// (runs pinned to a fixed space can pass a looser bound than the default).
/// Errors with `CutoffTooSmall` before assembling anything when either mode
/// would leak more probability than `tail_tol`.
pub fn evolve_exact_with_tail_tol(
    params: &SystemParams,
    derived: &DerivedParams,
    init: &InitialState,
    t: f64,
    space: TruncatedSpace,
    tail_tol: f64,
) -> Result<StateVector> {
    let dc = space.dim_cavity();
    let dm = space.dim_mech();
    let cav = coherent_amplitudes(init.alpha, dc);
    let cav_tail = poisson_tail(&cav);
    if cav_tail > tail_tol {
        return Err(QomgError::CutoffTooSmall {
            what: "cavity coherent tail".into(),
            tail: cav_tail,
            allowed: tail_tol,
        });
    }

    let terms = dd_terms(
        params,
        derived.units,
        init,
        Dd::from_f64(derived.omega_eval),
        t,
        dc,
    )?;

    // displaced mechanical amplitudes, checked before assembly; what matters
    // is the probability the full state leaks, so each level's tail is
    // weighted by its cavity population
    let mut mech = Vec::with_capacity(dc);
    let mut spill = 0.0f64;
    for n in 0..dc {
        let amps = coherent_amplitudes(terms.mu[n].to_c64(), dm);
        spill += cav[n].norm_sqr() * poisson_tail(&amps);
        mech.push(amps);
    }
    if spill > tail_tol {
        return Err(QomgError::CutoffTooSmall {
            what: "displaced mechanical tail".into(),
            tail: spill,
            allowed: tail_tol,
        });
    }

    let mut amp = nalgebra::DVector::<C64>::zeros(space.dim_total());
    for n in 0..dc {
        let phase = C64::from_polar(1.0, terms.xi[n].rem_2pi().f64());
        let weight = cav[n] * phase;
        for k in 0..dm {
            amp[space.index(n, k)] = weight * mech[n][k];
        }
    }
    let norm_sq: f64 = amp.iter().map(|c| c.norm_sqr()).sum();
    let deficit = (1.0 - norm_sq).abs();
    let deficit_gate = tol::EVOLVE_NORM_DEFICIT.max(2.5 * tail_tol);
    if deficit > deficit_gate {
        return Err(QomgError::CutoffTooSmall {
            what: "assembled state norm deficit".into(),
            tail: deficit,
            allowed: deficit_gate,
        });
    }
    amp /= C64::new(norm_sq.sqrt(), 0.0);
    StateVector::new(space, Mode::Both, amp)
}

// ---------------------------------------------------------------------------
// Reduced cavity state (mechanics traced out in closed form)
// ---------------------------------------------------------------------------

/// Reduced cavity density matrix of the evolved state. Never represents the
/// mechanical mode on a grid: the pair overlaps <mu_n' | mu_n> are evaluated
/// analytically, so this works at parameters where the displaced amplitudes
/// are far beyond any representable cutoff. Only `space.dim_cavity()` is
/// read from the space.
pub fn reduced_cavity_state(
    params: &SystemParams,
    derived: &DerivedParams,
    init: &InitialState,
    t: f64,
    space: TruncatedSpace,
) -> Result<DensityOperator> {
    let dc = space.dim_cavity();
    let cav = coherent_amplitudes(init.alpha, dc);
    let kept: f64 = cav.iter().map(|c| c.norm_sqr()).sum();
    let cav_tail = 1.0 - kept;
    if cav_tail > tol::COHERENT_TAIL {
        return Err(QomgError::CutoffTooSmall {
            what: "cavity coherent tail".into(),
            tail: cav_tail,
            allowed: tol::COHERENT_TAIL,
        });
    }
    let terms = dd_terms(
        params,
        derived.units,
        init,
        Dd::from_f64(derived.omega_eval),
        t,
        dc,
    )?;

    let mut mat = DMatrix::<C64>::zeros(dc, dc);
    for n in 0..dc {
        mat[(n, n)] = C64::new(cav[n].norm_sqr() / kept, 0.0);
        for np in 0..n {
            // <n| rho_c |n'> = c_n c_n'* e^{i(xi_n - xi_n')} <mu_n' | mu_n>
            let dphi = terms.xi[n] - terms.xi[np] + im_conj_prod(terms.mu[np], terms.mu[n]);
            let dmu = (terms.mu[n] - terms.mu[np]).to_c64();
            let mag = (-0.5 * dmu.norm_sqr()).exp();
            let val = cav[n] * cav[np].conj() / kept
                * C64::from_polar(mag, dphi.rem_2pi().f64());
            mat[(n, np)] = val;
            mat[(np, n)] = val.conj();
        }
    }
    DensityOperator::new(space, Mode::Cavity, mat)
}

// ---------------------------------------------------------------------------
// Finite-difference QFI via analytic overlaps
// ---------------------------------------------------------------------------

/// Result of the finite-difference QFI estimate.
#[derive(Clone, Copy, Debug)]
pub struct FdQfi {
    /// Estimate at the refined step (delta/2).
    pub value: f64,
    /// Step actually used after auto-shrinking, before halving.
    pub delta: f64,
    /// Estimate at the unrefined step, kept for step-convergence reporting.
    pub coarse: f64,
    /// 1 - |<psi(Omega+delta)|psi(Omega-delta)>| at the accepted step.
    pub overlap_deficit: f64,
}

struct GaugedTerms {
    /// Phase of level n relative to the reference level, gauge-aligned to
    /// the centre point; kept in double-double until pairs are differenced.
    phi: Vec<Dd>,
    /// mu_n(x) - mu_n(centre); small, safe in f64 after the dd subtraction.
    delta_mu: Vec<C64>,
}

fn gauged_terms(raw: &DdTerms, center_mu: &[DdC], n0: usize) -> GaugedTerms {
    let n_levels = raw.e.len();
    let mut xi_prime = Vec::with_capacity(n_levels);
    for n in 0..n_levels {
        // xi'_n = xi_n + Im(mu_n(centre)* mu_n(x)): splits the mechanical
        // overlap phase so that pair phases become differences of per-state
        // quantities plus an O(delta^2) remainder handled below
        xi_prime.push(raw.xi[n] + im_conj_prod(center_mu[n], raw.mu[n]));
    }
    let phi = (0..n_levels).map(|n| xi_prime[n] - xi_prime[n0]).collect();
    let delta_mu = (0..n_levels)
        .map(|n| (raw.mu[n] - center_mu[n]).to_c64())
        .collect();
    GaugedTerms { phi, delta_mu }
}

/// <psi(a)|psi(b)> in the gauge where the reference level's phase is removed.
fn overlap(a: &GaugedTerms, b: &GaugedTerms, weights: &[f64]) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for (n, &w) in weights.iter().enumerate() {
        let d_ab = b.delta_mu[n] - a.delta_mu[n];
        let mag = (-0.5 * d_ab.norm_sqr()).exp();
        // remainder of the mechanical overlap phase not captured by xi'
        let resid = (a.delta_mu[n].conj() * b.delta_mu[n]).im;
        let phase = (b.phi[n] - a.phi[n]).rem_2pi().f64() + resid;
        acc += C64::from_polar(w * mag, phase);
    }
    acc
}

fn fd_estimate(
    params: &SystemParams,
    units: UnitSystem,
    init: &InitialState,
    t: f64,
    n_levels: usize,
    weights: &[f64],
    n0: usize,
    center: f64,
    delta: f64,
    map: &dyn Fn(Dd) -> Dd,
) -> Result<(f64, f64)> {
    let xc = map(Dd::from_f64(center));
    let xp = map(Dd::from_f64(center) + Dd::from_f64(delta));
    let xm = map(Dd::from_f64(center) - Dd::from_f64(delta));
    let raw_c = dd_terms(params, units, init, xc, t, n_levels)?;
    let raw_p = dd_terms(params, units, init, xp, t, n_levels)?;
    let raw_m = dd_terms(params, units, init, xm, t, n_levels)?;
    let g_c = gauged_terms(&raw_c, &raw_c.mu, n0);
    let g_p = gauged_terms(&raw_p, &raw_c.mu, n0);
    let g_m = gauged_terms(&raw_m, &raw_c.mu, n0);

    let o_pm = overlap(&g_p, &g_m, weights);
    let o_cp = overlap(&g_c, &g_p, weights);
    let o_cm = overlap(&g_c, &g_m, weights);

    let a_term = (2.0 - 2.0 * o_pm.re) / (4.0 * delta * delta);
    let b_term = (o_cp - o_cm) / C64::new(2.0 * delta, 0.0);
    let deficit = (1.0 - o_pm.norm()).max(0.0);
    Ok((4.0 * (a_term - b_term.norm_sqr()), deficit))
}

fn qfi_fd(
    params: &SystemParams,
    derived: &DerivedParams,
    init: &InitialState,
    t: f64,
    n_levels: usize,
    delta_omega: Option<f64>,
    map: &dyn Fn(Dd) -> Dd,
) -> Result<FdQfi> {
    let cav = coherent_amplitudes(init.alpha, n_levels);
    let kept: f64 = cav.iter().map(|c| c.norm_sqr()).sum();
    let cav_tail = 1.0 - kept;
    if cav_tail > tol::COHERENT_TAIL {
        return Err(QomgError::CutoffTooSmall {
            what: "cavity coherent tail".into(),
            tail: cav_tail,
            allowed: tol::COHERENT_TAIL,
        });
    }
    let weights: Vec<f64> = cav.iter().map(|c| c.norm_sqr() / kept).collect();
    let n0 = weights
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);

    let center = derived.omega_eval;
    let mut delta = delta_omega
        .unwrap_or_else(|| 1e-6 * center.abs().max(params.omega_m));
    if !(delta > 0.0) {
        return Err(QomgError::InvalidInput(format!(
            "finite-difference step must be positive, got {delta}"
        )));
    }

    // rescale the step until the probe-state overlap deficit sits in its
    // target window: too large means the pair decoheres across the step, too
    // small means the signal drowns in rounding noise; the step stays local
    // (capped well below the frequency scale) and a zero deficit means the
    // family is constant at this resolution, so the estimate is zero anyway
    let delta_cap = 0.1 * center.abs().max(params.omega_m);
    let mut estimate = None;
    for _ in 0..64 {
        let (f, deficit) = fd_estimate(
            params, derived.units, init, t, n_levels, &weights, n0, center, delta, map,
        )?;
        if deficit == 0.0
            || (tol::FD_OVERLAP_TARGET * 1e-2..=tol::FD_OVERLAP_MAX).contains(&deficit)
        {
            estimate = Some((f, deficit));
            break;
        }
        let next =
            (delta * (tol::FD_OVERLAP_TARGET / deficit).sqrt().clamp(1e-8, 1e3)).min(delta_cap);
        if next == delta {
            estimate = Some((f, deficit));
            break;
        }
        delta = next;
    }
    let (coarse, deficit) = estimate.ok_or(QomgError::StepUnstable {
        what: "finite-difference step auto-shrink did not converge".into(),
        h: delta,
    })?;

    let (fine, _) = fd_estimate(
        params, derived.units, init, t, n_levels, &weights, n0, center, delta / 2.0, map,
    )?;
    let rel = (coarse - fine).abs() / fine.abs().max(1e-300);
    if rel > tol::RICHARDSON_REL && (coarse - fine).abs() > 1e-300 {
        return Err(QomgError::StepTooLarge { rel_diff: rel, allowed: tol::RICHARDSON_REL });
    }
    Ok(FdQfi { value: fine, delta, coarse, overlap_deficit: deficit })
}

/// QFI of the exactly evolved pure state by central differences of analytic
/// overlaps: F = 4 [ (2 - 2 Re<psi_+|psi_->)/(4 delta^2) - |<psi_0|
/// (|psi_+> - |psi_->)/(2 delta)|^2 ].
///
/// The step starts at 1e-6 max(|Omega|, omega_m), is rescaled until the
/// probe-state overlap deficit sits in its target window, and must pass the
/// delta vs delta/2 consistency check (`StepTooLarge` otherwise). Only the
/// cavity dimension of `space` is used; the mechanical overlaps are closed
/// form.
pub fn qfi_pure_numeric(
    params: &SystemParams,
    derived: &DerivedParams,
    init: &InitialState,
    t: f64,
    space: TruncatedSpace,
    delta_omega: Option<f64>,
) -> Result<FdQfi> {
    qfi_fd(params, derived, init, t, space.dim_cavity(), delta_omega, &|x| x)
}

/// Null test of the difference machinery: the rotation argument is pinned to
/// the evaluation point, so the state family is constant and the estimate
/// must come out exactly zero.
pub fn qfi_pure_numeric_frozen(
    params: &SystemParams,
    derived: &DerivedParams,
    init: &InitialState,
    t: f64,
    space: TruncatedSpace,
    delta_omega: Option<f64>,
) -> Result<FdQfi> {
    let center = Dd::from_f64(derived.omega_eval);
    qfi_fd(params, derived, init, t, space.dim_cavity(), delta_omega, &move |_x| center)
}
