//! Runnable cross-check suites: every closed-form quantity in the crate is
//! re-derived here by a slower independent route (explicit matrices, dense
//! matrix exponentials, numerical partial traces, analytic decay laws) and
//! compared at fixed tolerances.
//!
//! The suites are grouped per module and return structured results rather
//! than asserting, so the command-line tool can print one line per check and
//! exit nonzero only at the end.

use std::time::Instant;

use num_complex::Complex64 as C64;

use crate::error::{QomgError, Result};
use crate::evolution::{evolve_exact_with_tail_tol, qfi_pure_numeric, state_terms};
use crate::hilbert::{
    annihilation, coherent_state, creation, hermite_values, number, tensor_state, Mode,
    StateVector, TruncatedSpace,
};
use crate::linalg::{expm_hermitian, frobenius_distance, hermiticity_defect, trace_distance};
use crate::measurement::{
    cfi, quadrature_distribution, quadrature_distribution_hermite, QuadratureGrid,
};
use crate::model::{
    derive, derive_at, displacement_coefficient, hamiltonian_driving_free, hamiltonian_full,
    Config, InitialState, SystemParams, UnitMode, UnitSystem,
};
use crate::open_system::{
    lindblad_evolve, mean_cavity_number, qfi_driven_pure, qfi_mixed, LindbladConfig,
};
use crate::qfi::{generator_matrix, qfi_closed_form};
use crate::tol;

/// Outcome of one cross-check.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Measured numbers on success, the error on failure.
    pub detail: String,
    pub seconds: f64,
}

/// All checks of one module.
#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub module: String,
    pub checks: Vec<CheckResult>,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Suite names in run order.
pub const SUITES: [&str; 6] =
    ["hilbert", "model", "qfi", "evolution", "measurement", "open-system"];

/// Run one suite by name, or every suite for "all".
pub fn run_suite(module: &str) -> Result<Vec<SuiteReport>> {
    let run_one = |name: &str| -> SuiteReport {
        let t0 = Instant::now();
        let checks = match name {
            "hilbert" => hilbert_checks(),
            "model" => model_checks(),
            "qfi" => qfi_checks(),
            "evolution" => evolution_checks(),
            "measurement" => measurement_checks(),
            "open-system" => open_system_checks(),
            _ => unreachable!(),
        };
        SuiteReport { module: name.into(), checks, seconds: t0.elapsed().as_secs_f64() }
    };
    match module {
        "all" => Ok(SUITES.iter().map(|n| run_one(n)).collect()),
        name if SUITES.contains(&name) => Ok(vec![run_one(name)]),
        "open_system" => Ok(vec![run_one("open-system")]),
        other => Err(QomgError::Config(format!(
            "unknown oracle suite \"{other}\" (one of: {}, all)",
            SUITES.join(", ")
        ))),
    }
}

fn check(out: &mut Vec<CheckResult>, name: &str, f: impl FnOnce() -> Result<String>) {
    let t0 = Instant::now();
    let (passed, detail) = match f() {
        Ok(d) => (true, d),
        Err(e) => (false, e.to_string()),
    };
    out.push(CheckResult {
        name: name.into(),
        passed,
        detail,
        seconds: t0.elapsed().as_secs_f64(),
    });
}

fn ensure(cond: bool, msg: String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(QomgError::InvalidInput(msg))
    }
}

/// Order-one dimensionless operating point where dense linear algebra is
/// cheap; couplings are small enough that modest cutoffs hold the state.
fn order_one() -> (SystemParams, UnitSystem) {
    let mut p = SystemParams::reference_dimensionless();
    p.omega_m = 0.9;
    p.omega_rotation = 0.35;
    p.chi_tilde_ref = 0.15;
    p.g0_tilde = 0.1;
    (p, UnitSystem::dimensionless())
}

/// A second, unrelated operating point for the same checks.
fn order_one_b() -> (SystemParams, UnitSystem) {
    let mut p = SystemParams::reference_dimensionless();
    p.omega_m = 1.1;
    p.omega_rotation = 0.4;
    p.chi_tilde_ref = 0.3;
    p.g0_tilde = 0.2;
    p.gnl_ratio = 0.25;
    (p, UnitSystem::dimensionless())
}

// ---------------------------------------------------------------------------
// Shared brute-force routes (also used by the acceptance tests)
// ---------------------------------------------------------------------------

/// QFI by brute force: 4 Var(G) of the explicit estimation generator in the
/// initial coherent product state on a truncated space. Independent of the
/// moment-polynomial reductions behind [`qfi_closed_form`].
pub fn qfi_brute_force(
    derived: &crate::model::DerivedParams,
    alpha: C64,
    beta: C64,
    t: f64,
    space: TruncatedSpace,
) -> Result<f64> {
    let g = generator_matrix(derived, t, space)?;
    let psi = tensor_state(
        &coherent_state(space, Mode::Cavity, alpha)?,
        &coherent_state(space, Mode::Mech, beta)?,
    )?;
    let g_psi = g.apply(&psi)?;
    let mean = psi.inner(&g_psi)?.re;
    let second = g_psi.inner(&g_psi)?.re;
    Ok(4.0 * (second - mean * mean))
}

/// Exact evolved state carried to the laboratory picture: the solver works
/// in the interaction picture of the photon-number-diagonal Hamiltonian
/// part, which commutes with everything else, so multiplying level n by
/// exp(-i ((wc - eta0) n + eta0 n^2) t) restores the full-picture state.
pub fn to_full_picture(
    params: &SystemParams,
    psi: &StateVector,
    t: f64,
) -> Result<StateVector> {
    let wc = params.cavity_frame_frequency();
    let space = psi.space;
    let mut amp = psi.amp.clone();
    for n in 0..space.dim_cavity() {
        let nf = n as f64;
        let phase = -((wc - params.eta0) * nf + params.eta0 * nf * nf) * t;
        let rot = C64::from_polar(1.0, phase);
        for k in 0..space.dim_mech() {
            amp[space.index(n, k)] *= rot;
        }
    }
    StateVector::new(space, Mode::Both, amp)
}

/// Drive-free evolution by dense matrix exponential of the full Hamiltonian,
/// with no reuse of the closed-form solution.
pub fn evolve_dense_expm(
    params: &SystemParams,
    derived: &crate::model::DerivedParams,
    init: &InitialState,
    t: f64,
    space: TruncatedSpace,
) -> Result<StateVector> {
    let h = hamiltonian_driving_free(params, derived, space)?;
    let u = expm_hermitian(&h.mat, C64::new(0.0, -t / derived.units.hbar))?;
    let psi0 = tensor_state(
        &coherent_state(space, Mode::Cavity, init.alpha)?,
        &coherent_state(space, Mode::Mech, init.beta)?,
    )?;
    StateVector::new(space, Mode::Both, &u * &psi0.amp)
}

// ---------------------------------------------------------------------------
// hilbert
// ---------------------------------------------------------------------------

fn hilbert_checks() -> Vec<CheckResult> {
    let mut out = Vec::new();
    let space = TruncatedSpace::new(24, 18).unwrap();

    check(&mut out, "ladder commutator [a, a+] = 1 below the cutoff", || {
        let mut worst = 0f64;
        for mode in [Mode::Cavity, Mode::Mech] {
            let a = annihilation(space, mode);
            let adag = creation(space, mode);
            let comm = &a.mat * &adag.mat - &adag.mat * &a.mat;
            let dim = space.dim_of(mode);
            // the commutator is the identity except at the truncation edge
            for i in 0..dim - 1 {
                for j in 0..dim - 1 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    worst = worst.max((comm[(i, j)] - C64::from(want)).norm());
                }
            }
        }
        ensure(worst < 1e-12, format!("commutator defect {worst:.3e}"))?;
        Ok(format!("largest interior defect {worst:.3e}"))
    });

    check(&mut out, "number operator equals a+ a", || {
        let a = annihilation(space, Mode::Cavity);
        let n = number(space, Mode::Cavity);
        let diff = frobenius_distance(&(&a.mat.adjoint() * &a.mat), &n.mat);
        ensure(diff < 1e-12, format!("difference {diff:.3e}"))?;
        Ok(format!("Frobenius difference {diff:.3e}"))
    });

    check(&mut out, "coherent state is an annihilation eigenstate", || {
        let alpha = C64::new(1.4, -0.6);
        let psi = coherent_state(space, Mode::Cavity, alpha)?;
        let a = annihilation(space, Mode::Cavity);
        let lhs = a.apply(&psi)?;
        let mut resid = 0.0;
        // exclude the truncation edge, where a|alpha> must lose the n_max term
        for i in 0..space.dim_cavity() - 1 {
            resid += (lhs.amp[i] - alpha * psi.amp[i]).norm_sqr();
        }
        let resid = resid.sqrt();
        ensure(resid < 1e-8, format!("eigen residual {resid:.3e}"))?;
        Ok(format!("residual {resid:.3e} at |alpha| = {:.2}", alpha.norm()))
    });

    check(&mut out, "partial trace preserves trace and product purity", || {
        let psi = tensor_state(
            &coherent_state(space, Mode::Cavity, C64::new(1.0, 0.3))?,
            &coherent_state(space, Mode::Mech, C64::new(0.4, -0.2))?,
        )?;
        let rho_c = crate::hilbert::partial_trace_mech(&psi.projector())?;
        let tr = rho_c.trace();
        let pur = rho_c.purity();
        ensure(
            (tr.re - 1.0).abs() < tol::PTRACE_TRACE && tr.im.abs() < tol::PTRACE_TRACE,
            format!("trace {tr}"),
        )?;
        ensure((pur - 1.0).abs() < 1e-8, format!("purity {pur}"))?;
        Ok(format!("trace defect {:.3e}, purity defect {:.3e}", (tr.re - 1.0).abs(), (pur - 1.0).abs()))
    });

    check(&mut out, "Hermite recurrence against direct polynomial values", || {
        // H_0..H_5 at a few points, coefficients written out by hand
        let direct = |x: f64| -> [f64; 6] {
            [
                1.0,
                2.0 * x,
                4.0 * x * x - 2.0,
                8.0 * x.powi(3) - 12.0 * x,
                16.0 * x.powi(4) - 48.0 * x * x + 12.0,
                32.0 * x.powi(5) - 160.0 * x.powi(3) + 120.0 * x,
            ]
        };
        let mut worst = 0f64;
        for x in [-1.7, -0.3, 0.0, 0.9, 2.2] {
            let h = hermite_values(x, 5)?;
            let d = direct(x);
            for k in 0..6 {
                worst = worst.max((h[k] - d[k]).abs() / d[k].abs().max(1.0));
            }
        }
        ensure(worst < 1e-12, format!("relative defect {worst:.3e}"))?;
        Ok(format!("largest relative defect {worst:.3e}"))
    });

    check(&mut out, "oscillator eigenfunctions are orthonormal", || {
        // trapezoid integration of psi_m psi_n on a wide fine grid
        let (lo, hi, steps) = (-9.0f64, 9.0f64, 3600usize);
        let dx = (hi - lo) / steps as f64;
        let up_to = 6usize;
        let mut gram = vec![vec![0.0f64; up_to + 1]; up_to + 1];
        for i in 0..=steps {
            let x = lo + dx * i as f64;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            let vals = crate::hilbert::oscillator_eigenfunctions(x, up_to);
            for m in 0..=up_to {
                for n in 0..=up_to {
                    gram[m][n] += w * dx * vals[m] * vals[n];
                }
            }
        }
        let mut worst = 0f64;
        for m in 0..=up_to {
            for n in 0..=up_to {
                let want = if m == n { 1.0 } else { 0.0 };
                worst = worst.max((gram[m][n] - want).abs());
            }
        }
        ensure(worst < 1e-10, format!("Gram defect {worst:.3e}"))?;
        Ok(format!("largest Gram defect {worst:.3e}"))
    });

    out
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

fn model_checks() -> Vec<CheckResult> {
    let mut out = Vec::new();

    check(&mut out, "effective frequency obeys omega~^2 = omega_m^2 + Omega^2", || {
        let (p, u) = order_one();
        let mut worst = 0f64;
        for w in [0.0, 0.1, 0.35, 2.0] {
            let d = derive_at(&p, u, w)?;
            let want = (p.omega_m * p.omega_m + w * w).sqrt();
            worst = worst.max((d.omega_m_tilde - want).abs() / want);
        }
        ensure(worst < 1e-14, format!("relative defect {worst:.3e}"))?;
        Ok(format!("largest relative defect {worst:.3e}"))
    });

    check(&mut out, "couplings anchored at the reference scale as omega~^(-3/2)", || {
        let (p, u) = order_one();
        let d_ref = derive(&p, u)?;
        let d2 = derive_at(&p, u, 2.0 * p.omega_rotation)?;
        let ratio = (d_ref.omega_m_tilde / d2.omega_m_tilde).powf(1.5);
        let g_defect = (d2.g0_tilde - d_ref.g0_tilde * ratio).abs() / d_ref.g0_tilde;
        // chi scales with the rotation rate squared on top of the same power
        let chi_want = d_ref.chi_tilde * 4.0 * ratio;
        let chi_defect = (d2.chi_tilde - chi_want).abs() / chi_want;
        ensure(g_defect < 1e-14, format!("coupling scaling defect {g_defect:.3e}"))?;
        ensure(chi_defect < 1e-14, format!("displacement scaling defect {chi_defect:.3e}"))?;
        Ok(format!("coupling defect {g_defect:.3e}, displacement defect {chi_defect:.3e}"))
    });

    check(&mut out, "level displacement matches its quadratic form", || {
        let (p, u) = order_one_b();
        let d = derive(&p, u)?;
        let mut worst = 0f64;
        for n in 0..12usize {
            let nf = n as f64;
            let want = (d.g0_tilde - d.g_nl_tilde) * nf + d.g_nl_tilde * nf * nf - d.chi_tilde;
            worst = worst.max((displacement_coefficient(&d, n) - want).abs());
        }
        ensure(worst < 1e-14, format!("defect {worst:.3e}"))?;
        Ok(format!("largest defect {worst:.3e}"))
    });

    check(&mut out, "Hamiltonians are Hermitian and agree when the drive is off", || {
        let (mut p, u) = order_one();
        let d = derive(&p, u)?;
        let space = TruncatedSpace::new(8, 8)?;
        let h_free = hamiltonian_driving_free(&p, &d, space)?;
        let h_full = hamiltonian_full(&p, &d, space)?;
        let herm = h_full.hermiticity_defect().max(h_free.hermiticity_defect());
        let agree = frobenius_distance(&h_free.mat, &h_full.mat);
        ensure(herm < tol::HERMITICITY, format!("hermiticity defect {herm:.3e}"))?;
        ensure(agree < 1e-14, format!("drive-free mismatch {agree:.3e}"))?;
        p.drive_amplitude = 0.02;
        p.drive_phase = 0.7;
        let h_driven = hamiltonian_full(&p, &derive(&p, u)?, space)?;
        let herm2 = h_driven.hermiticity_defect();
        ensure(herm2 < tol::HERMITICITY, format!("driven hermiticity defect {herm2:.3e}"))?;
        Ok(format!("hermiticity {herm:.3e}/{herm2:.3e}, drive-free agreement {agree:.3e}"))
    });

    check(&mut out, "config parsing round-trips and rejects bad keys", || {
        for mode in [UnitMode::Si, UnitMode::Dimensionless] {
            let cfg = Config::default_for(mode);
            derive(&cfg.params, cfg.units)?;
        }
        ensure(
            Config::parse("nonsense_key = 1.0\n").is_err(),
            "unknown key was accepted".into(),
        )?;
        ensure(
            Config::parse("units = \"SI\"\nchi_tilde = 1.0\n").is_err(),
            "chi_tilde in SI mode was accepted".into(),
        )?;
        Ok("defaults derive cleanly; unknown and mode-incompatible keys rejected".into())
    });

    out
}

// ---------------------------------------------------------------------------
// qfi
// ---------------------------------------------------------------------------

fn qfi_checks() -> Vec<CheckResult> {
    let mut out = Vec::new();

    check(&mut out, "closed form vs generator variance, first operating point", || {
        let (p, u) = order_one();
        let d = derive(&p, u)?;
        let space = TruncatedSpace::new(34, 22)?;
        let mut worst = 0f64;
        for (alpha, beta) in [(C64::from(2.0), C64::from(1.0)), (C64::new(1.0, 0.8), C64::from(0.5))] {
            for frac in [0.3, 1.0, 2.0] {
                let t = frac * std::f64::consts::PI / d.omega_m_tilde;
                let brute = qfi_brute_force(&d, alpha, beta, t, space)?;
                if beta.im == 0.0 && beta.re >= 0.0 {
                    let closed = qfi_closed_form(&d, alpha, beta, t)?;
                    let rel = (brute - closed).abs() / closed.abs().max(1e-300);
                    worst = worst.max(rel);
                }
            }
        }
        ensure(
            worst < tol::MOMENT_ORACLE_REL,
            format!("relative mismatch {worst:.3e}"),
        )?;
        Ok(format!("largest relative mismatch {worst:.3e}"))
    });

    check(&mut out, "closed form vs generator variance, second operating point", || {
        let (p, u) = order_one_b();
        let d = derive(&p, u)?;
        let space = TruncatedSpace::new(34, 22)?;
        let mut worst = 0f64;
        for frac in [0.5, 1.7] {
            let t = frac * std::f64::consts::PI / d.omega_m_tilde;
            let brute = qfi_brute_force(&d, C64::from(1.5), C64::from(0.8), t, space)?;
            let closed = qfi_closed_form(&d, C64::from(1.5), C64::from(0.8), t)?;
            worst = worst.max((brute - closed).abs() / closed.abs().max(1e-300));
        }
        ensure(
            worst < tol::MOMENT_ORACLE_REL,
            format!("relative mismatch {worst:.3e}"),
        )?;
        Ok(format!("largest relative mismatch {worst:.3e}"))
    });

    check(&mut out, "information vanishes at zero rotation and grows from it", || {
        let (p, u) = order_one();
        let d0 = derive_at(&p, u, 0.0)?;
        let t = 2.0 * std::f64::consts::PI / d0.omega_m_tilde;
        let f0 = qfi_closed_form(&d0, C64::from(1.0), C64::from(1.0), t)?;
        ensure(f0 == 0.0, format!("nonzero information {f0:.3e} at zero rotation"))?;
        let d1 = derive_at(&p, u, 0.1)?;
        let f1 = qfi_closed_form(&d1, C64::from(1.0), C64::from(1.0), t)?;
        ensure(f1 > 0.0, format!("information {f1:.3e} not positive"))?;
        Ok(format!("F(0) = 0 exactly, F(0.1) = {f1:.6e}"))
    });

    check(&mut out, "generator matrix is Hermitian", || {
        let (p, u) = order_one_b();
        let d = derive(&p, u)?;
        let space = TruncatedSpace::new(12, 10)?;
        let g = generator_matrix(&d, 1.3, space)?;
        let defect = hermiticity_defect(&g.mat);
        ensure(defect < tol::HERMITICITY, format!("defect {defect:.3e}"))?;
        Ok(format!("hermiticity defect {defect:.3e}"))
    });

    out
}

// ---------------------------------------------------------------------------
// evolution
// ---------------------------------------------------------------------------

fn evolution_checks() -> Vec<CheckResult> {
    let mut out = Vec::new();

    check(&mut out, "closed-form state vs dense matrix exponential", || {
        // small amplitudes and couplings keep the quadratically growing
        // level displacements inside a dense-friendly mechanical factor
        let space = TruncatedSpace::new(20, 44)?;
        let points: [(f64, f64, f64, f64, f64, C64, C64, f64); 3] = [
            // (omega_m, Omega, chi_ref, g0, gnl_ratio, alpha, beta, t_frac)
            (0.9, 0.35, 0.15, 0.10, 0.10, C64::new(0.8, 0.0), C64::new(0.4, 0.3), 0.8),
            (1.1, 0.40, 0.20, 0.12, 0.15, C64::new(0.5, -0.4), C64::new(0.6, 0.0), 1.6),
            (0.7, 0.20, 0.10, 0.08, 0.0, C64::new(0.4, 0.5), C64::new(0.0, 0.5), 2.0),
        ];
        let mut worst = 0f64;
        for (wm, wr, chi, g0, gnl, alpha, beta, frac) in points {
            let mut p = SystemParams::reference_dimensionless();
            p.omega_m = wm;
            p.omega_rotation = wr;
            p.chi_tilde_ref = chi;
            p.g0_tilde = g0;
            p.gnl_ratio = gnl;
            let u = UnitSystem::dimensionless();
            let d = derive(&p, u)?;
            let t = frac * std::f64::consts::PI / d.omega_m_tilde;
            let init = InitialState::new(alpha, beta);
            let psi = evolve_exact_with_tail_tol(&p, &d, &init, t, space, 1e-8)?;
            let closed = to_full_picture(&p, &psi, t)?;
            let dense = evolve_dense_expm(&p, &d, &init, t, space)?;
            let fid = crate::hilbert::fidelity_states(&closed, &dense)?;
            worst = worst.max(1.0 - fid);
        }
        ensure(
            worst < tol::EVOLVE_ORACLE_FID,
            format!("fidelity deficit {worst:.3e}"),
        )?;
        Ok(format!("largest fidelity deficit {worst:.3e}"))
    });

    check(&mut out, "evolution preserves overlaps between states", || {
        // unitarity: <psi_a(t)|psi_b(t)> must equal the analytic overlap of
        // the initial coherent products, phases included
        let (p, u) = order_one();
        let d = derive(&p, u)?;
        let a = InitialState::new(C64::new(0.6, 0.0), C64::new(0.3, 0.0));
        let b = InitialState::new(C64::new(0.3, 0.4), C64::new(0.2, -0.3));
        let space = TruncatedSpace::new(22, 30)?;
        let coherent_overlap = |x: C64, y: C64| -> C64 {
            (C64::from(-0.5 * (x.norm_sqr() + y.norm_sqr())) + x.conj() * y).exp()
        };
        let want = coherent_overlap(a.alpha, b.alpha) * coherent_overlap(a.beta, b.beta);
        let mut worst = 0f64;
        for frac in [0.4, 1.3] {
            let t = frac * std::f64::consts::PI / d.omega_m_tilde;
            let psi_a = evolve_exact_with_tail_tol(&p, &d, &a, t, space, 1e-8)?;
            let psi_b = evolve_exact_with_tail_tol(&p, &d, &b, t, space, 1e-8)?;
            worst = worst.max((psi_a.inner(&psi_b)? - want).norm());
        }
        ensure(worst < 1e-6, format!("overlap drift {worst:.3e}"))?;
        Ok(format!("largest overlap drift {worst:.3e} against the analytic value"))
    });

    check(&mut out, "overlap-route estimate vs dense finite differences", || {
        let (mut p, u) = order_one();
        p.gnl_ratio = 0.1;
        let d = derive(&p, u)?;
        let init = InitialState::new(C64::new(0.8, 0.0), C64::new(0.6, 0.0));
        let t = 1.1 * std::f64::consts::PI / d.omega_m_tilde;
        let space = TruncatedSpace::new(33, 1)?;
        let fd = qfi_pure_numeric(&p, &d, &init, t, space, None)?;
        // dense route: same central-difference formula, but the states come
        // from dense matrix exponentials (the diagonal-part rotation carries
        // no rotation-rate dependence and cancels in the overlaps)
        let dense_space = TruncatedSpace::new(20, 40)?;
        let delta = fd.delta;
        let psi0 = evolve_dense_expm(&p, &d, &init, t, dense_space)?;
        let dp = derive_at(&p, u, d.omega_eval + delta)?;
        let dm = derive_at(&p, u, d.omega_eval - delta)?;
        let plus = evolve_dense_expm(&p, &dp, &init, t, dense_space)?;
        let minus = evolve_dense_expm(&p, &dm, &init, t, dense_space)?;
        let overlap_pm = plus.inner(&minus)?;
        let mut deriv_amp = plus.amp.clone();
        deriv_amp -= &minus.amp;
        deriv_amp /= C64::from(2.0 * delta);
        let deriv = StateVector::new(dense_space, Mode::Both, deriv_amp)?;
        let proj = psi0.inner(&deriv)?;
        let dense_f =
            4.0 * ((2.0 - 2.0 * overlap_pm.re) / (4.0 * delta * delta) - proj.norm_sqr());
        let rel = (dense_f - fd.value).abs() / fd.value.abs().max(1e-300);
        ensure(rel < 1e-5, format!("route mismatch {rel:.3e}"))?;
        Ok(format!("route mismatch {rel:.3e} at delta = {delta:.3e}"))
    });

    check(&mut out, "mechanical displacement returns to its start each period", || {
        let (p, u) = order_one_b();
        let d = derive(&p, u)?;
        let init = InitialState::new(C64::from(1.0), C64::new(0.3, 0.2));
        let t = 2.0 * std::f64::consts::PI / d.omega_m_tilde;
        let terms = state_terms(&p, &d, &init, t, 8)?;
        let mut worst = 0f64;
        for mu in &terms.mu_n {
            worst = worst.max((mu - init.beta).norm());
        }
        ensure(worst < 1e-9, format!("return defect {worst:.3e}"))?;
        Ok(format!("largest return defect {worst:.3e}"))
    });

    out
}

// ---------------------------------------------------------------------------
// measurement
// ---------------------------------------------------------------------------

fn measurement_checks() -> Vec<CheckResult> {
    let mut out = Vec::new();

    check(&mut out, "quadrature distribution normalizes to one", || {
        let (p, u) = order_one();
        let d = derive(&p, u)?;
        let init = InitialState::new(C64::new(1.5, 0.0), C64::from(0.6));
        let t = 0.9 / d.omega_m_tilde;
        let mut worst = 0f64;
        for phi in [0.0, 0.7, std::f64::consts::FRAC_PI_2] {
            let grid = QuadratureGrid::auto(33, phi);
            let curve = quadrature_distribution(&p, &d, &init, t, &grid)?;
            worst = worst.max((curve.trapezoid() - 1.0).abs());
        }
        ensure(worst < tol::GRID_NORMALIZATION, format!("normalization defect {worst:.3e}"))?;
        Ok(format!("largest normalization defect {worst:.3e}"))
    });

    check(&mut out, "projection route vs Hermite-series route", || {
        let (p, u) = order_one_b();
        let d = derive(&p, u)?;
        let init = InitialState::new(C64::new(1.1, 0.4), C64::from(0.5));
        let t = 1.4 / d.omega_m_tilde;
        let grid = QuadratureGrid::auto(33, 0.4);
        let a = quadrature_distribution(&p, &d, &init, t, &grid)?;
        let b = quadrature_distribution_hermite(&p, &d, &init, t, &grid)?;
        let mut worst = 0f64;
        for (pa, pb) in a.ps.iter().zip(&b.ps) {
            worst = worst.max((pa - pb).abs());
        }
        ensure(worst < tol::QUAD_TWO_PATH, format!("route mismatch {worst:.3e}"))?;
        Ok(format!("largest pointwise mismatch {worst:.3e}"))
    });

    check(&mut out, "classical information never exceeds the quantum bound", || {
        let (p, u) = order_one();
        let d = derive(&p, u)?;
        let init = InitialState::new(C64::new(5f64.sqrt(), 0.0), C64::from(1.0));
        let mut ratios = Vec::new();
        for frac in [0.6, 1.0] {
            for phi in [0.0, 1.1] {
                let t = frac * std::f64::consts::PI / d.omega_m_tilde;
                let grid = QuadratureGrid::auto(33, phi);
                let c = cfi(&p, &d, &init, t, &grid, None)?;
                let q = qfi_closed_form(&d, init.alpha, init.beta, t)?;
                ensure(
                    c.value <= q * (1.0 + 1e-9),
                    format!("classical {c:.6e} exceeds quantum {q:.6e}", c = c.value),
                )?;
                ratios.push(c.value / q);
            }
        }
        Ok(format!(
            "ratios {}",
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ")
        ))
    });

    out
}

// ---------------------------------------------------------------------------
// open-system
// ---------------------------------------------------------------------------

fn open_system_checks() -> Vec<CheckResult> {
    let mut out = Vec::new();

    check(&mut out, "decay-free master equation vs closed-form state", || {
        let (p, u) = order_one();
        let d = derive(&p, u)?;
        let init = InitialState::new(C64::new(0.5, 0.0), C64::new(0.3, 0.0));
        let t = 1.0;
        let space = TruncatedSpace::new(8, 8)?;
        let config = LindbladConfig::with_defaults(0.0, t, &d);
        let rho = lindblad_evolve(&p, &d, &init, &config, space)?;
        // the integrator reports the laboratory picture; carry the
        // closed-form interaction-picture state there before comparing
        let psi =
            to_full_picture(&p, &evolve_exact_with_tail_tol(&p, &d, &init, t, space, 1e-8)?, t)?;
        let dist = trace_distance(&rho.mat, &psi.projector().mat)?;
        ensure(dist < tol::LINDBLAD_TRACE_DRIFT, format!("trace distance {dist:.3e}"))?;
        Ok(format!("trace distance {dist:.3e}"))
    });

    check(&mut out, "trace, Hermiticity, and positivity are preserved under decay", || {
        let (mut p, u) = order_one();
        p.kappa = 0.25;
        p.drive_amplitude = 0.01;
        let d = derive(&p, u)?;
        let init = InitialState::new(C64::new(0.8, 0.0), C64::new(0.4, 0.0));
        let config = LindbladConfig::with_defaults(p.kappa, 2.0, &d);
        let rho = lindblad_evolve(&p, &d, &init, &config, TruncatedSpace::new(8, 7)?)?;
        let tr = rho.trace();
        let herm = hermiticity_defect(&rho.mat);
        let (eigs, _) = crate::linalg::hermitian_eigen(&rho.mat)?;
        ensure(
            (tr.re - 1.0).abs() < tol::LINDBLAD_TRACE_DRIFT,
            format!("trace drift {:.3e}", (tr.re - 1.0).abs()),
        )?;
        ensure(herm < tol::HERMITICITY, format!("hermiticity defect {herm:.3e}"))?;
        ensure(
            eigs[0] > tol::LINDBLAD_EIG_FLOOR,
            format!("eigenvalue {:.3e} below the integrator floor", eigs[0]),
        )?;
        Ok(format!(
            "trace drift {:.3e}, hermiticity {herm:.3e}, lowest eigenvalue {:.3e}",
            (tr.re - 1.0).abs(),
            eigs[0]
        ))
    });

    check(&mut out, "photon number decays exactly exponentially without drive", || {
        // the drive-free Hamiltonian commutes with the photon number, so
        // d<n>/dt = -kappa <n> holds exactly and the integrator must track
        // it; the only error source left is the mass projected away with the
        // mechanical guard, kept negligible by a roomy mechanical factor
        let (mut p, u) = order_one();
        p.kappa = 0.3;
        let d = derive(&p, u)?;
        let init = InitialState::new(C64::new(0.7, 0.0), C64::new(0.3, 0.0));
        let t = 1.2;
        let config = LindbladConfig::with_defaults(p.kappa, t, &d);
        let rho = lindblad_evolve(&p, &d, &init, &config, TruncatedSpace::new(9, 12)?)?;
        let n = mean_cavity_number(&rho)?;
        let want = init.alpha.norm_sqr() * (-p.kappa * t).exp();
        let rel = (n - want).abs() / want;
        ensure(rel < 1e-7, format!("decay-law defect {rel:.3e}"))?;
        Ok(format!("relative defect {rel:.3e} against n0 exp(-kappa t)"))
    });

    check(&mut out, "mixed-state estimate is stable under step halving", || {
        let (mut p, u) = order_one();
        p.kappa = 0.25;
        let d = derive(&p, u)?;
        let init = InitialState::new(C64::new(0.9, 0.0), C64::new(0.4, 0.0));
        let space = TruncatedSpace::new(8, 7)?;
        let t = 1.5;
        let base = LindbladConfig::with_defaults(p.kappa, t, &d);
        let f1 = qfi_mixed(&p, &d, &init, &base, space, None)?.value;
        let mut halved = base.clone();
        halved.h /= 2.0;
        let f2 = qfi_mixed(&p, &d, &init, &halved, space, None)?.value;
        let rel = (f1 - f2).abs() / f2.abs().max(1e-300);
        ensure(rel < 1e-6, format!("step sensitivity {rel:.3e}"))?;
        Ok(format!("step-halving relative change {rel:.3e}"))
    });

    check(&mut out, "driven estimator reduces to the closed form at zero drive", || {
        let (p, u) = order_one();
        let d = derive(&p, u)?;
        let init = InitialState::new(C64::new(0.7, 0.0), C64::new(0.4, 0.0));
        let t = 1.5;
        let f_driven = qfi_driven_pure(&p, &d, &init, t, TruncatedSpace::new(10, 9)?, None, None)?;
        let f_closed = qfi_closed_form(&d, init.alpha, init.beta, t)?;
        let rel = (f_driven.value - f_closed).abs() / f_closed.abs().max(1e-300);
        ensure(rel < 1e-4, format!("mismatch {rel:.3e}"))?;
        Ok(format!("relative mismatch {rel:.3e}"))
    });

    check(&mut out, "mixed-state estimate loses information as decay grows", || {
        let (p, u) = order_one();
        let init = InitialState::new(C64::new(0.9, 0.0), C64::new(0.4, 0.0));
        let space = TruncatedSpace::new(8, 7)?;
        let t = 2.0;
        let mut prev = f64::INFINITY;
        let mut vals = Vec::new();
        for kappa in [0.0, 0.15, 0.4] {
            let mut pk = p;
            pk.kappa = kappa;
            let dk = derive(&pk, u)?;
            let config = LindbladConfig::with_defaults(kappa, t, &dk);
            let f = qfi_mixed(&pk, &dk, &init, &config, space, None)?.value;
            ensure(
                f < prev,
                format!("information did not decrease: {f:.6e} after {prev:.6e}"),
            )?;
            vals.push(format!("{f:.4e}"));
            prev = f;
        }
        Ok(format!("F over kappa 0/0.15/0.4: {}", vals.join(" > ")))
    });

    out
}
