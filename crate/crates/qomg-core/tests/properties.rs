//! Randomized invariants of the public API.

use num_complex::Complex64 as C64;
use proptest::prelude::*;
use qomg_core::evolution::state_terms;
use qomg_core::hilbert::{
    coherent_state, partial_trace_mech, tensor_state, Mode, TruncatedSpace,
};
use qomg_core::model::{
    derive, derive_at, displacement_coefficient, InitialState, SystemParams, UnitSystem,
};
use qomg_core::open_system::{lindblad_evolve, LindbladConfig};
use qomg_core::qfi::qfi_closed_form;

fn tame_params(
    omega_m: f64,
    omega_rotation: f64,
    chi: f64,
    g0: f64,
    gnl_ratio: f64,
) -> (SystemParams, UnitSystem) {
    let mut p = SystemParams::reference_dimensionless();
    p.omega_m = omega_m;
    p.omega_rotation = omega_rotation;
    p.chi_tilde_ref = chi;
    p.g0_tilde = g0;
    p.gnl_ratio = gnl_ratio;
    (p, UnitSystem::dimensionless())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn effective_frequency_identity(wm in 0.0f64..10.0, wr in 0.0f64..10.0) {
        let (p, u) = tame_params(wm.max(1e-3), 0.1, 0.0, 0.1, 0.3);
        let d = derive_at(&p, u, wr).unwrap();
        let want = (p.omega_m * p.omega_m + wr * wr).sqrt();
        prop_assert!((d.omega_m_tilde - want).abs() <= 1e-14 * want.max(1.0));
    }

    #[test]
    fn displacement_coefficient_is_the_documented_quadratic(
        chi in 0.0f64..0.5,
        g0 in 0.0f64..0.5,
        ratio in 0.0f64..1.0,
        n in 0usize..40,
    ) {
        let (p, u) = tame_params(0.9, 0.2, chi, g0, ratio);
        let d = derive(&p, u).unwrap();
        let nf = n as f64;
        let want = (d.g0_tilde - d.g_nl_tilde) * nf + d.g_nl_tilde * nf * nf - d.chi_tilde;
        prop_assert!((displacement_coefficient(&d, n) - want).abs() < 1e-12 * (1.0 + want.abs()));
    }

    #[test]
    fn csv_style_scientific_formatting_round_trips(v in -1e30f64..1e30) {
        let s = format!("{v:.11e}");
        let back: f64 = s.parse().unwrap();
        prop_assert!((back - v).abs() <= 5e-12 * v.abs().max(1e-300));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn information_is_nonnegative_even_and_zero_at_rest(
        wm in 0.5f64..1.5,
        wr in 0.01f64..0.5,
        chi in 0.0f64..0.3,
        g0 in 0.0f64..0.3,
        ratio in 0.0f64..1.0,
        amp in 0.1f64..1.5,
        phase in 0.0f64..(2.0 * std::f64::consts::PI),
        beta in 0.0f64..1.0,
        frac in 0.01f64..2.0,
    ) {
        let (p, u) = tame_params(wm, wr, chi, g0, ratio);
        let alpha = C64::from_polar(amp, phase);
        let beta = C64::from(beta);
        let d = derive(&p, u).unwrap();
        let t = frac * 2.0 * std::f64::consts::PI / d.omega_m_tilde;
        let f = qfi_closed_form(&d, alpha, beta, t).unwrap();
        prop_assert!(f >= 0.0, "negative information {f:e}");

        let d_neg = derive_at(&p, u, -wr).unwrap();
        let f_neg = qfi_closed_form(&d_neg, alpha, beta, t).unwrap();
        prop_assert!((f - f_neg).abs() <= 1e-10 * f.abs().max(1e-300), "odd part {f:e} vs {f_neg:e}");

        let d0 = derive_at(&p, u, 0.0).unwrap();
        prop_assert_eq!(qfi_closed_form(&d0, alpha, beta, t).unwrap(), 0.0);
    }

    #[test]
    fn coherent_products_trace_out_cleanly(
        ar in -1.2f64..1.2,
        ai in -1.2f64..1.2,
        br in -1.0f64..1.0,
        bi in -1.0f64..1.0,
    ) {
        let space = TruncatedSpace::new(29, 24).unwrap();
        let cav = coherent_state(space, Mode::Cavity, C64::new(ar, ai)).unwrap();
        let mech = coherent_state(space, Mode::Mech, C64::new(br, bi)).unwrap();
        cav.assert_normalized().unwrap();
        let psi = tensor_state(&cav, &mech).unwrap();
        let rho_c = partial_trace_mech(&psi.projector()).unwrap();
        let tr = rho_c.trace();
        prop_assert!((tr.re - 1.0).abs() < 1e-9 && tr.im.abs() < 1e-12);
        prop_assert!((rho_c.purity() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn mechanics_returns_to_its_start_after_one_period(
        wm in 0.5f64..1.5,
        wr in 0.01f64..0.5,
        chi in 0.0f64..0.3,
        g0 in 0.0f64..0.3,
        ratio in 0.0f64..1.0,
        br in -0.8f64..0.8,
        bi in -0.8f64..0.8,
    ) {
        let (p, u) = tame_params(wm, wr, chi, g0, ratio);
        let d = derive(&p, u).unwrap();
        let init = InitialState::new(C64::from(0.5), C64::new(br, bi));
        let t = 2.0 * std::f64::consts::PI / d.omega_m_tilde;
        let terms = state_terms(&p, &d, &init, t, 8).unwrap();
        for mu in &terms.mu_n {
            prop_assert!((mu - init.beta).norm() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn dissipative_evolution_conserves_probability(
        kappa in 0.0f64..0.5,
        t in 0.2f64..0.8,
    ) {
        let (p, u) = tame_params(0.9, 0.35, 0.15, 0.1, 0.3);
        let mut p = p;
        p.kappa = kappa;
        let d = derive(&p, u).unwrap();
        let init = InitialState::new(C64::from(0.5), C64::from(0.3));
        let config = LindbladConfig::with_defaults(kappa, t, &d);
        let rho = lindblad_evolve(&p, &d, &init, &config, TruncatedSpace::new(6, 6).unwrap()).unwrap();
        let tr = rho.trace();
        prop_assert!((tr.re - 1.0).abs() < 1e-6 && tr.im.abs() < 1e-9);
    }
}
