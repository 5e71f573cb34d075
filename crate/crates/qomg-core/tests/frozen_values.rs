//! Reference values frozen after cross-validation against the brute-force
//! oracles. These pins catch silent drift in the closed-form pipeline; the
//! independent derivations live in the oracle suites and acceptance tests.

use num_complex::Complex64 as C64;
use qomg_core::model::{derive, InitialState, SystemParams, UnitSystem};
use qomg_core::qfi::qfi_closed_form;

fn si_point() -> (SystemParams, UnitSystem, InitialState) {
    (
        SystemParams::reference_si(),
        UnitSystem::si(),
        InitialState::new(C64::new(5f64.sqrt(), 0.0), C64::new(1.0, 0.0)),
    )
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn derived_frequencies_at_the_laboratory_point() {
    let (p, u, _) = si_point();
    let d = derive(&p, u).unwrap();
    assert!(rel(d.omega_m_tilde, 6.28318390626917753e4) < 1e-14);
    assert!(rel(d.chi_tilde, 5.53015443152744198e9) < 1e-13);
}

#[test]
fn closed_form_information_at_the_laboratory_point() {
    let (p, u, init) = si_point();
    let d = derive(&p, u).unwrap();
    let period = 2.0 * std::f64::consts::PI / d.omega_m_tilde;
    for (frac, want) in [
        (0.25, 1.36749920368163520e16),
        (0.5, 4.07334394491210624e17),
        (1.0, 1.62738326464096819e18),
    ] {
        let f = qfi_closed_form(&d, init.alpha, init.beta, frac * period).unwrap();
        assert!(rel(f, want) < 1e-12, "frac {frac}: {f:e} vs {want:e}");
    }
}

#[test]
fn kerr_ratio_gain_at_one_period() {
    let (p, u, init) = si_point();
    let mut fs = Vec::new();
    for (ratio, want) in [
        (0.0, 9.62948688956205440e16),
        (0.1, 3.94808958630697408e17),
        (0.3, 1.62738326464096819e18),
    ] {
        let mut pr = p;
        pr.gnl_ratio = ratio;
        let d = derive(&pr, u).unwrap();
        let t = 2.0 * std::f64::consts::PI / d.omega_m_tilde;
        let f = qfi_closed_form(&d, init.alpha, init.beta, t).unwrap();
        assert!(rel(f, want) < 1e-12, "ratio {ratio}: {f:e} vs {want:e}");
        fs.push(f);
    }
    assert!(fs[2] > fs[1] && fs[1] > fs[0]);
    assert!(fs[2] / fs[0] > 2.0);
}

#[test]
fn closed_form_information_at_the_dimensionless_point() {
    let p = SystemParams::reference_dimensionless();
    let u = UnitSystem::dimensionless();
    let d = derive(&p, u).unwrap();
    assert!(rel(d.omega_m_tilde, 6.28318390626917856e-11) < 1e-14);
    let init = InitialState::new(C64::new(5f64.sqrt(), 0.0), C64::new(1.0, 0.0));
    let f = qfi_closed_form(&d, init.alpha, init.beta, 2.0 * std::f64::consts::PI).unwrap();
    assert!(rel(f, 6.23102117283244504e23) < 1e-12, "{f:e}");
}
