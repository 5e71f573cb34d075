//! Results quoted on a truncated basis must not move when the basis grows.

use num_complex::Complex64 as C64;
use qomg_core::hilbert::TruncatedSpace;
use qomg_core::model::{derive, Config, InitialState, SystemParams, UnitMode, UnitSystem};
use qomg_core::open_system::{
    lindblad_evolve, mean_cavity_number, qfi_mixed, LindbladConfig,
};

fn order_one_point() -> (SystemParams, UnitSystem, InitialState) {
    let mut p = SystemParams::reference_dimensionless();
    p.omega_m = 0.9;
    p.omega_rotation = 0.35;
    p.chi_tilde_ref = 0.15;
    p.g0_tilde = 0.1;
    (p, UnitSystem::dimensionless(), InitialState::new(C64::from(0.5), C64::from(0.3)))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn dissipative_information_stable_under_basis_growth() {
    let (mut p, u, init) = order_one_point();
    p.kappa = 0.2;
    let d = derive(&p, u).unwrap();
    let config = LindbladConfig::with_defaults(p.kappa, 1.5, &d);

    let small = qfi_mixed(&p, &d, &init, &config, TruncatedSpace::new(8, 6).unwrap(), None)
        .unwrap()
        .value;
    let big = qfi_mixed(&p, &d, &init, &config, TruncatedSpace::new(18, 16).unwrap(), None)
        .unwrap()
        .value;
    assert!(
        rel(small, big) < 1e-4,
        "information moved under basis growth: {small:e} vs {big:e}"
    );
}

#[test]
fn mean_photon_number_stable_under_basis_growth() {
    let (mut p, u, init) = order_one_point();
    p.kappa = 0.3;
    let d = derive(&p, u).unwrap();
    let config = LindbladConfig::with_defaults(p.kappa, 1.2, &d);

    let small = lindblad_evolve(&p, &d, &init, &config, TruncatedSpace::new(8, 6).unwrap())
        .map(|rho| mean_cavity_number(&rho).unwrap())
        .unwrap();
    let big = lindblad_evolve(&p, &d, &init, &config, TruncatedSpace::new(14, 10).unwrap())
        .map(|rho| mean_cavity_number(&rho).unwrap())
        .unwrap();
    assert!(
        rel(small, big) < 1e-6,
        "photon number moved under basis growth: {small:e} vs {big:e}"
    );
}

/// Expensive variant at the weak-rotation operating point; run with --ignored.
#[test]
#[ignore]
fn laboratory_point_information_stable_under_basis_growth() {
    let cfg = Config::default_for(UnitMode::Dimensionless);
    let mut p = cfg.params;
    p.kappa = 0.1;
    let d = derive(&p, cfg.units).unwrap();
    let t = 2.0 * std::f64::consts::PI;
    let config = LindbladConfig::with_defaults(p.kappa, t, &d);

    let small = qfi_mixed(&p, &d, &cfg.init, &config, TruncatedSpace::new(20, 12).unwrap(), None)
        .unwrap()
        .value;
    let big = qfi_mixed(&p, &d, &cfg.init, &config, TruncatedSpace::new(26, 18).unwrap(), None)
        .unwrap()
        .value;
    assert!(
        rel(small, big) < 1e-3,
        "information moved under basis growth: {small:e} vs {big:e}"
    );
}
