use num_complex::Complex64 as C64;
use qomg_core::hilbert::TruncatedSpace;
use qomg_core::measurement::{cfi, QuadratureGrid};
use qomg_core::model::{derive, Config, InitialState, UnitMode};
use qomg_core::qfi::qfi_closed_form;

fn best_ratio(p: &qomg_core::SystemParams, u: qomg_core::UnitSystem, init: &InitialState, t: f64) -> (f64, f64) {
    let d = derive(p, u).unwrap();
    let q = qfi_closed_form(&d, init.alpha, init.beta, t).unwrap();
    let cutoff = TruncatedSpace::cutoff_for_amplitude(init.alpha.norm());
    let mut best = (0.0f64, 0.0f64);
    for k in 0..180 {
        let phi = k as f64 * std::f64::consts::PI / 180.0;
        let grid = QuadratureGrid::auto(cutoff, phi);
        if let Ok(f) = cfi(p, &d, init, t, &grid, None) {
            if f.value / q > best.0 {
                best = (f.value / q, phi);
            }
        }
    }
    best
}

fn main() {
    let c = Config::default_for(UnitMode::Si);
    let d = derive(&c.params, c.units).unwrap();
    let t = 2.0 * std::f64::consts::PI / d.omega_m_tilde;
    let init = InitialState::new(C64::from(5f64.sqrt()), C64::from(1.0));
    let (r, phi) = best_ratio(&c.params, c.units, &init, t);
    println!("Nc=5 Nm=1 gnl=0.3: best {r:.4} at phi={phi:.3}");
    for total in [2.0, 8.0] {
        let init = InitialState::from_population(total, 0.9).unwrap();
        let (r, phi) = best_ratio(&c.params, c.units, &init, t);
        println!("N={total} u=0.9 gnl=0.3: best {r:.4} at phi={phi:.3}");
    }
}
