//! Acceptance gate: one test per numbered criterion. Each test prints a
//! `criterion N: pass` line (shown with --nocapture) and enforces the
//! stated runtime budget on top of its numerical assertions.

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qomg_core::evolution::{evolve_exact_with_tail_tol, qfi_pure_numeric};
use qomg_core::hilbert::{coherent_state, fidelity_states, tensor_state, Mode, TruncatedSpace};
use qomg_core::linalg::trace_distance;
use qomg_core::measurement::{cfi, cfi_phase_scan, QuadratureGrid};
use qomg_core::model::{derive, Config, InitialState, SystemParams, UnitMode, UnitSystem};
use qomg_core::open_system::{lindblad_evolve, qfi_mixed, LindbladConfig};
use qomg_core::oracle::{evolve_dense_expm, to_full_picture};
use qomg_core::qfi::{coefficients, moment_table, qfi_closed_form, GeneratorCoefficients};
use qomg_core::QomgError;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn si_point() -> (SystemParams, UnitSystem, InitialState) {
    let c = Config::default_for(UnitMode::Si);
    (c.params, c.units, c.init)
}

fn dimensionless_point() -> (SystemParams, UnitSystem, InitialState) {
    let c = Config::default_for(UnitMode::Dimensionless);
    (c.params, c.units, c.init)
}

fn pass(n: u32, budget_s: f64, t0: Instant, detail: &str) {
    let dt = t0.elapsed().as_secs_f64();
    println!("criterion {n}: pass ({dt:.1} s) {detail}");
    assert!(dt < budget_s, "criterion {n} took {dt:.1} s, budget {budget_s} s");
}

#[test]
fn criterion_01_closed_form_matches_numeric_information() {
    let t0 = Instant::now();
    let (p, u, init) = si_point();
    let d = derive(&p, u).unwrap();
    let space = TruncatedSpace::new(
        TruncatedSpace::cutoff_for_amplitude(init.alpha.norm()) - 1,
        1,
    )
    .unwrap();
    let mut worst = 0f64;
    for frac in [0.25, 0.5, 1.0] {
        let t = frac * TWO_PI / d.omega_m_tilde;
        let closed = qfi_closed_form(&d, init.alpha, init.beta, t).unwrap();
        let numeric = qfi_pure_numeric(&p, &d, &init, t, space, None).unwrap();
        worst = worst.max(rel(numeric.value, closed));
        assert!(
            rel(numeric.coarse, numeric.value) < 1e-4,
            "step-halving residual {:e} at frac {frac}",
            rel(numeric.coarse, numeric.value)
        );
    }
    assert!(worst < 1e-4, "closed form vs numeric relative error {worst:e}");
    pass(1, 10.0, t0, &format!("closed vs numeric relative error <= {worst:.2e}"));
}

/// One generator piece as an explicit matrix: cavity-number polynomials on
/// the diagonal, a single mechanical ladder rung for the linear-in-b parts.
fn piece_matrix(co: &GeneratorCoefficients, space: TruncatedSpace, i: usize) -> DMatrix<C64> {
    let (dc, dm, d) = (space.dim_cavity(), space.dim_mech(), space.dim_total());
    let mut m = DMatrix::<C64>::zeros(d, d);
    for n in 0..dc {
        let nf = n as f64;
        let (scalar, lin): (f64, C64) = match i {
            0 => (co.r1 * nf.powi(4), C64::new(0.0, 0.0)),
            1 => (co.r2 * nf.powi(3), C64::new(0.0, 0.0)),
            2 => (co.r4 * nf * nf, co.r3 * nf * nf),
            3 => (co.r6 * nf, co.r5 * nf),
            _ => (0.0, co.r8),
        };
        for k in 0..dm {
            let row = space.index(n, k);
            let harmonic = if i == 4 { co.r7 * k as f64 } else { 0.0 };
            m[(row, row)] = C64::new(scalar + harmonic, 0.0);
            if k + 1 < dm {
                let amp = ((k + 1) as f64).sqrt();
                let col = space.index(n, k + 1);
                m[(row, col)] += lin * amp;
                m[(col, row)] += lin.conj() * amp;
            }
        }
    }
    m
}

#[test]
fn criterion_02_moment_table_matches_matrix_expectations() {
    let t0 = Instant::now();
    let (p, u, _) = si_point();
    let d = derive(&p, u).unwrap();
    let space = TruncatedSpace::new(40, 20).unwrap();
    let period = TWO_PI / d.omega_m_tilde;
    let mut worst = 0f64;
    for t in [0.37 * period, period] {
        let co = coefficients(&d, t);
        let pieces: Vec<DMatrix<C64>> =
            (0..5).map(|i| piece_matrix(&co, space, i)).collect();
        for n_c in [1.0f64, 2.0, 4.0] {
            for n_m in [0.0f64, 1.0] {
                let alpha = C64::from(n_c.sqrt());
                let beta = C64::from(n_m.sqrt());
                let table = moment_table(&d, alpha, beta, t).unwrap();
                let cav = coherent_state(space, Mode::Cavity, alpha).unwrap();
                let mech = coherent_state(space, Mode::Mech, beta).unwrap();
                let psi = tensor_state(&cav, &mech).unwrap().amp;

                let mut centered = Vec::with_capacity(5);
                for (i, g) in pieces.iter().enumerate() {
                    let g_psi = g * &psi;
                    let mean = psi.dotc(&g_psi).re;
                    let denom = table.mean[i].abs().max(1e-9 * table.var[i].sqrt());
                    worst = worst.max((mean - table.mean[i]).abs() / denom.max(1e-300));
                    centered.push(g_psi - &psi * C64::from(mean));
                }
                for i in 0..5 {
                    let var = centered[i].norm_squared();
                    worst = worst.max(rel(var, table.var[i]));
                }
                for j in 0..5 {
                    for k in (j + 1)..5 {
                        let cov = centered[j].dotc(&centered[k]).re;
                        let denom = table.cov[j][k]
                            .abs()
                            .max(1e-9 * (table.var[j] * table.var[k]).sqrt());
                        worst = worst.max((cov - table.cov[j][k]).abs() / denom.max(1e-300));
                    }
                }
            }
        }
    }
    assert!(worst < 1e-6, "moment table vs matrix expectations: {worst:e}");
    pass(2, 30.0, t0, &format!("worst moment mismatch {worst:.2e} over 12 states"));
}

#[test]
fn criterion_03_exact_evolution_matches_dense_exponential() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20260825);
    let space = TruncatedSpace::new(15, 32).unwrap();
    let u = UnitSystem::dimensionless();
    let mut worst = 0f64;
    for _ in 0..10 {
        let mut p = SystemParams::reference_dimensionless();
        p.omega_m = rng.random_range(0.8..1.1);
        p.omega_rotation = rng.random_range(0.2..0.35);
        p.chi_tilde_ref = rng.random_range(0.05..0.15);
        p.g0_tilde = rng.random_range(0.06..0.1);
        p.gnl_ratio = rng.random_range(0.0..0.1);
        let alpha = C64::new(rng.random_range(-0.42..0.42), rng.random_range(-0.42..0.42));
        let beta = C64::new(rng.random_range(-0.45..0.45), rng.random_range(-0.45..0.45));
        let init = InitialState::new(alpha, beta);
        let d = derive(&p, u).unwrap();
        let t = rng.random_range(0.3..2.0) * std::f64::consts::PI / d.omega_m_tilde;

        let psi = evolve_exact_with_tail_tol(&p, &d, &init, t, space, 1e-8).unwrap();
        let closed = to_full_picture(&p, &psi, t).unwrap();
        let dense = evolve_dense_expm(&p, &d, &init, t, space).unwrap();
        let fid = fidelity_states(&closed, &dense).unwrap();
        worst = worst.max(1.0 - fid);
    }
    assert!(worst < 1e-6, "fidelity deficit {worst:e}");
    pass(3, 20.0, t0, &format!("largest fidelity deficit {worst:.2e} over 10 random points"));
}

#[test]
fn criterion_04_measurement_information_bounded_by_quantum_limit() {
    let t0 = Instant::now();
    let (p, u, _) = si_point();
    let d = derive(&p, u).unwrap();
    let period = TWO_PI / d.omega_m_tilde;

    // 3x3 grid in (t, phi) at total excitation 4, cavity fraction 0.9
    let init = InitialState::from_population(4.0, 0.9).unwrap();
    let cutoff = TruncatedSpace::cutoff_for_amplitude(init.alpha.norm());
    for frac in [0.25, 0.5, 1.0] {
        let t = frac * period;
        let qfi = qfi_closed_form(&d, init.alpha, init.beta, t).unwrap();
        for phi in [0.0, std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_2] {
            let grid = QuadratureGrid::auto(cutoff, phi);
            let c = cfi(&p, &d, &init, t, &grid, None).unwrap();
            assert!(
                c.value <= qfi * (1.0 + 1e-6),
                "classical information {:.6e} exceeds the quantum bound {qfi:.6e} at frac {frac}, phi {phi}",
                c.value
            );
        }
    }

    // saturation check at the scenario configuration: phi = 0, one
    // mechanical period, N in {2,4,6,8} with cavity fraction 0.9; the
    // best-phase scan and a linear-coupling control are reported so a
    // failure here localizes to the physics, not the machinery
    let scan_phis: Vec<f64> =
        (0..24).map(|k| k as f64 * std::f64::consts::PI / 24.0).collect();
    let mut worst_ratio = f64::INFINITY;
    let mut best_over_phi = 0f64;
    let mut report = String::new();
    for total in [2.0, 4.0, 6.0, 8.0] {
        let init = InitialState::from_population(total, 0.9).unwrap();
        let cutoff = TruncatedSpace::cutoff_for_amplitude(init.alpha.norm());
        let grid = QuadratureGrid::auto(cutoff, 0.0);
        let qfi = qfi_closed_form(&d, init.alpha, init.beta, period).unwrap();
        let c = cfi(&p, &d, &init, period, &grid, None).unwrap();
        assert!(
            rel(c.coarse, c.value) < 1e-4,
            "step-halving residual {:e} at N = {total}",
            rel(c.coarse, c.value)
        );
        let scan = cfi_phase_scan(&p, &d, &init, period, &scan_phis).unwrap();
        let best = scan.cfis[scan.best] / qfi;
        worst_ratio = worst_ratio.min(c.value / qfi);
        best_over_phi = best_over_phi.max(best);
        report.push_str(&format!("N={total}: ratio {:.3} (best phase {best:.3}); ", c.value / qfi));
    }

    // control: with the quadratic coupling off the same pipeline saturates,
    // so a deficit above comes from the quadratic-phase state itself
    let mut p_lin = p;
    p_lin.gnl_ratio = 0.0;
    let d_lin = derive(&p_lin, u).unwrap();
    let init5 = InitialState::new(C64::from(5f64.sqrt()), C64::from(1.0));
    let q_lin = qfi_closed_form(&d_lin, init5.alpha, init5.beta, period).unwrap();
    let scan_lin = cfi_phase_scan(&p_lin, &d_lin, &init5, period, &scan_phis).unwrap();
    let control = scan_lin.cfis[scan_lin.best] / q_lin;

    assert!(
        worst_ratio >= 0.95,
        "quadrature saturation not reached: {report}best over phase {best_over_phi:.3}, \
         linear-coupling control {control:.3}"
    );
    pass(4, 60.0, t0, &format!("bound holds on the grid; worst ratio {worst_ratio:.4}"));
}

#[test]
fn criterion_05_dissipation_free_channel_matches_unitary_evolution() {
    let t0 = Instant::now();
    let (p, u, init) = dimensionless_point();
    let d = derive(&p, u).unwrap();
    let space = TruncatedSpace::new(20, 12).unwrap();
    let t = TWO_PI;

    let config = LindbladConfig::with_defaults(0.0, t, &d);
    let rho = lindblad_evolve(&p, &d, &init, &config, space).unwrap();
    let psi = evolve_exact_with_tail_tol(&p, &d, &init, t, space, 1e-6).unwrap();
    let lab = to_full_picture(&p, &psi, t).unwrap();
    let dist = trace_distance(&rho.mat, &lab.projector().mat).unwrap();
    assert!(dist < 1e-6, "trace distance {dist:e}");
    pass(5, 30.0, t0, &format!("trace distance {dist:.2e} at one full period"));
}

#[test]
fn criterion_06_information_decreases_with_loss() {
    let t0 = Instant::now();
    let (base, u, init) = dimensionless_point();
    let space = TruncatedSpace::new(20, 12).unwrap();
    let t = TWO_PI;
    let mut values = Vec::new();
    for kappa in [0.0, 0.1, 0.3] {
        let mut p = base;
        p.kappa = kappa;
        let d = derive(&p, u).unwrap();
        let config = LindbladConfig::with_defaults(kappa, t, &d);
        let f = qfi_mixed(&p, &d, &init, &config, space, None).unwrap();
        assert!(
            rel(f.coarse, f.value) < 1e-4,
            "step-halving residual {:e} at kappa = {kappa}",
            rel(f.coarse, f.value)
        );
        values.push(f.value);
    }
    assert!(
        values[0] > values[1] && values[1] > values[2],
        "information not ordered: {values:?}"
    );
    pass(
        6,
        300.0,
        t0,
        &format!(
            "F(0)/F(0.1) = {:.3}, F(0.1)/F(0.3) = {:.3}",
            values[0] / values[1],
            values[1] / values[2]
        ),
    );
}

#[test]
fn criterion_07_scaling_exceeds_heisenberg() {
    let t0 = Instant::now();
    let cfg = Config::default_for(UnitMode::Si);
    let result = qomg_core::experiments::run_scenario_by_name(&cfg, "fig4", &[]).unwrap();
    let col = result
        .columns
        .iter()
        .position(|c| c == "qfi_u0.9")
        .expect("column present");
    let mut logs = Vec::new();
    for (row, &n) in result.rows.iter().zip(&[2.0f64, 4.0, 6.0, 8.0, 10.0]) {
        let f = match &row[col] {
            qomg_core::experiments::CellValue::Number(v) => *v,
            other => panic!("cell failed: {other:?}"),
        };
        assert!(f > n * n, "information {f:.3e} below N^2 at N = {n}");
        logs.push((n.ln(), f.ln()));
    }
    let xbar = logs.iter().map(|(x, _)| x).sum::<f64>() / logs.len() as f64;
    let ybar = logs.iter().map(|(_, y)| y).sum::<f64>() / logs.len() as f64;
    let slope = logs.iter().map(|(x, y)| (x - xbar) * (y - ybar)).sum::<f64>()
        / logs.iter().map(|(x, _)| (x - xbar) * (x - xbar)).sum::<f64>();
    assert!(slope > 2.0, "log-log slope {slope:.3} does not exceed 2");
    pass(7, 60.0, t0, &format!("log-log slope {slope:.3} at cavity fraction 0.9"));
}

#[test]
fn criterion_08_kerr_ordering_and_gain() {
    let t0 = Instant::now();
    let (base, u, init) = si_point();
    let mut values = Vec::new();
    for ratio in [0.0, 0.1, 0.3] {
        let mut p = base;
        p.gnl_ratio = ratio;
        let d = derive(&p, u).unwrap();
        let t = TWO_PI / d.omega_m_tilde;
        values.push(qfi_closed_form(&d, init.alpha, init.beta, t).unwrap());
    }
    assert!(
        values[2] > values[1] && values[1] > values[0],
        "information not ordered: {values:?}"
    );
    let gain = values[2] / values[0];
    assert!(gain > 2.0, "end-to-end gain {gain:.3} not above 2");
    pass(8, 10.0, t0, &format!("gain {gain:.1} from quadratic coupling at one period"));
}

#[test]
fn criterion_09_oracle_suite_runs_clean() {
    let t0 = Instant::now();
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_qomg"))
        .args(["oracle", "all"])
        .output()
        .expect("binary runs");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}\n{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("checks passed"), "{stdout}");
    assert!(!stdout.contains("FAIL"), "{stdout}");
    let checks = stdout.matches("[pass]").count();
    pass(9, 600.0, t0, &format!("{checks} oracle checks passed"));
}

#[test]
fn criterion_10_finite_difference_step_hygiene() {
    let t0 = Instant::now();
    let (p, u, init) = si_point();
    let d = derive(&p, u).unwrap();
    let space = TruncatedSpace::new(
        TruncatedSpace::cutoff_for_amplitude(init.alpha.norm()) - 1,
        1,
    )
    .unwrap();
    let t = 0.25 * TWO_PI / d.omega_m_tilde;

    // the auto-tuned step passes the delta vs delta/2 comparison
    let fd = qfi_pure_numeric(&p, &d, &init, t, space, None).unwrap();
    assert!(rel(fd.coarse, fd.value) < 1e-4);

    // on the dissipative path the step is taken verbatim, so a deliberately
    // coarse one must be rejected by the same gate, not silently accepted
    let mut op = SystemParams::reference_dimensionless();
    op.omega_m = 0.9;
    op.omega_rotation = 0.35;
    op.chi_tilde_ref = 0.15;
    op.g0_tilde = 0.1;
    op.kappa = 0.1;
    let od = derive(&op, UnitSystem::dimensionless()).unwrap();
    let oinit = InitialState::new(C64::from(0.5), C64::from(0.3));
    let config = LindbladConfig::with_defaults(op.kappa, 1.0, &od);
    let err = qfi_mixed(
        &op,
        &od,
        &oinit,
        &config,
        TruncatedSpace::new(6, 5).unwrap(),
        Some(0.3 * op.omega_rotation),
    )
    .expect_err("coarse step must fail");
    assert!(
        matches!(err, QomgError::StepTooLarge { .. }),
        "unexpected rejection path: {err}"
    );
    pass(10, 60.0, t0, "step-halving gate accepts the tuned step and rejects a coarse one");
}
