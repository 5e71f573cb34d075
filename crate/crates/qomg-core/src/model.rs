//! Physical parameters, unit systems, derived rotation-dependent couplings,
//! and the Hamiltonian builders.
//!
//! The system is a driven optomechanical cavity with an intrinsic Kerr term,
//! mounted on a platform rotating at angular velocity Omega (the estimation
//! parameter). In the rotating frame the mechanical frequency stiffens to
//! omega_m_tilde = sqrt(omega_m^2 + Omega^2) and the centrifugal force adds a
//! displacement coupling chi = D*Omega^2*sqrt(m/(2*hbar*omega_m_tilde)).
//!
//! Couplings that the config fixes only at one reference rotation rate are
//! backed out to rotation-independent primitives, so every derived quantity
//! can be re-evaluated at a shifted Omega for finite differencing. See
//! [`derive_at`].

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{QomgError, Result};
use crate::hilbert::{LinearOperator, Mode, TruncatedSpace};

/// Reduced Planck constant in J*s.
pub const HBAR_SI: f64 = 1.0545718e-34;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnitMode {
    Si,
    Dimensionless,
}

/// Unit convention. In dimensionless mode all frequencies are measured in
/// units of the cavity frequency (so the stored omega_c must be exactly 1)
/// and hbar = 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitSystem {
    pub mode: UnitMode,
    pub hbar: f64,
    /// Size of one frequency unit: 1 rad/s in SI mode, the cavity frequency
    /// in dimensionless mode (bookkeeping only; nothing is converted).
    pub frequency_unit: f64,
}

impl UnitSystem {
    pub fn si() -> UnitSystem {
        UnitSystem { mode: UnitMode::Si, hbar: HBAR_SI, frequency_unit: 1.0 }
    }

    /// Dimensionless units with the cavity frequency as the unit.
    pub fn dimensionless() -> UnitSystem {
        UnitSystem { mode: UnitMode::Dimensionless, hbar: 1.0, frequency_unit: 1.0 }
    }
}

/// Raw inputs. Frequencies are angular (rad/s in SI mode, units of omega_c in
/// dimensionless mode); masses kg; lengths m.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemParams {
    pub omega_c: f64,
    pub omega_m: f64,
    /// Oscillator mass; feeds chi in SI mode, unused in dimensionless mode.
    pub mass_m: f64,
    /// Distance of the oscillator from the rotation axis.
    pub distance_d: f64,
    /// Cavity length; part of the nominal geometry but the single-photon
    /// coupling is fixed through `g0_tilde` instead (its absolute scale is a
    /// free input of the model).
    pub length_l0: f64,
    /// Kerr coefficient at equilibrium.
    pub eta0: f64,
    /// G_NL / g0, rotation-independent.
    pub gnl_ratio: f64,
    /// g0 / omega_m_tilde at the reference rotation rate `omega_rotation`.
    pub g0_tilde: f64,
    /// chi / omega_m_tilde at the reference rotation rate; read only in
    /// dimensionless mode (SI mode derives chi from D and m).
    pub chi_tilde_ref: f64,
    /// Reference rotation rate: the Omega at which g0_tilde (and, in
    /// dimensionless mode, chi_tilde_ref) are quoted, and the default
    /// evaluation point.
    pub omega_rotation: f64,
    /// |epsilon| of the cavity drive.
    pub drive_amplitude: f64,
    /// Drive phase phi_d; epsilon = |epsilon| e^{i phi_d}.
    pub drive_phase: f64,
    /// Cavity decay rate.
    pub kappa: f64,
    /// Optional replacement for omega_c in the Hamiltonian diagonal (the
    /// frame kept by the model retains the bare cavity frequency; this is the
    /// escape hatch for a detuned frame).
    pub detuning: Option<f64>,
}

impl SystemParams {
    /// Frequency multiplying the photon-number diagonal.
    pub fn cavity_frame_frequency(&self) -> f64 {
        self.detuning.unwrap_or(self.omega_c)
    }

    pub fn drive_epsilon(&self) -> C64 {
        C64::from_polar(self.drive_amplitude, self.drive_phase)
    }

    /// Laboratory-scale reference point: omega_m = 62.8 krad/s, Omega = 2
    /// krad/s, m = 1e-7 kg, D = 1 mm, ratio G_NL/g0 = 0.3.
    pub fn reference_si() -> SystemParams {
        SystemParams {
            omega_c: 1.0e15,
            omega_m: 62.8e3,
            mass_m: 1.0e-7,
            distance_d: 1.0e-3,
            length_l0: 1.0e-3,
            eta0: 0.0,
            gnl_ratio: 0.3,
            g0_tilde: 1.0,
            chi_tilde_ref: 0.0,
            omega_rotation: 2.0e3,
            drive_amplitude: 0.0,
            drive_phase: 0.0,
            kappa: 0.0,
            detuning: None,
        }
    }

    /// Same physical point rescaled to cavity-frequency units
    /// (omega_c = 1, omega_m = 62.8e-12, Omega = 2e-12). chi_tilde is an
    /// independent input here; see the config documentation.
    pub fn reference_dimensionless() -> SystemParams {
        SystemParams {
            omega_c: 1.0,
            omega_m: 62.8e-12,
            mass_m: 0.0,
            distance_d: 0.0,
            length_l0: 0.0,
            eta0: 0.0,
            gnl_ratio: 0.3,
            g0_tilde: 1.0,
            chi_tilde_ref: 1.0e9,
            omega_rotation: 2.0e-12,
            drive_amplitude: 0.0,
            drive_phase: 0.0,
            kappa: 0.0,
            detuning: None,
        }
    }

    pub fn validate(&self, units: UnitSystem) -> Result<()> {
        let nonneg = [
            ("omega_c", self.omega_c),
            ("omega_m", self.omega_m),
            ("eta0", self.eta0),
            ("gnl_ratio", self.gnl_ratio),
            ("drive_amplitude", self.drive_amplitude),
            ("kappa", self.kappa),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) {
                return Err(QomgError::InvalidInput(format!("{name} must be >= 0, got {v}")));
            }
        }
        match units.mode {
            UnitMode::Si => {
                if !(self.mass_m > 0.0) {
                    return Err(QomgError::InvalidInput(format!(
                        "mass must be > 0 in SI mode, got {}",
                        self.mass_m
                    )));
                }
                if !(self.length_l0 > 0.0) {
                    return Err(QomgError::InvalidInput(format!(
                        "length_L0 must be > 0 in SI mode, got {}",
                        self.length_l0
                    )));
                }
                if !(self.distance_d >= 0.0) {
                    return Err(QomgError::InvalidInput(format!(
                        "distance_D must be >= 0, got {}",
                        self.distance_d
                    )));
                }
            }
            UnitMode::Dimensionless => {
                if self.omega_c != 1.0 {
                    return Err(QomgError::InvalidInput(format!(
                        "dimensionless mode requires omega_c = 1 exactly, got {}",
                        self.omega_c
                    )));
                }
                if self.omega_rotation == 0.0 && self.chi_tilde_ref != 0.0 {
                    return Err(QomgError::InvalidInput(
                        "chi_tilde is quoted at the reference rotation rate; with \
                         omega_rotation = 0 its rotation-independent prefactor is \
                         undetermined (set chi_tilde = 0 or a nonzero omega_rotation)"
                            .into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Initial product state |alpha> (cavity) x |beta> (mechanics).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialState {
    pub alpha: C64,
    pub beta: C64,
}

impl InitialState {
    pub fn new(alpha: C64, beta: C64) -> InitialState {
        InitialState { alpha, beta }
    }

    /// Split a total excitation number N with cavity fraction u:
    /// alpha = sqrt(uN), beta = sqrt((1-u)N), both real.
    pub fn from_population(n_total: f64, u: f64) -> Result<InitialState> {
        if !(n_total >= 0.0) {
            return Err(QomgError::InvalidInput(format!("N must be >= 0, got {n_total}")));
        }
        if !(0.0..=1.0).contains(&u) {
            return Err(QomgError::InvalidInput(format!("u must be in [0,1], got {u}")));
        }
        Ok(InitialState {
            alpha: C64::new((u * n_total).sqrt(), 0.0),
            beta: C64::new(((1.0 - u) * n_total).sqrt(), 0.0),
        })
    }

    pub fn n_cavity(&self) -> f64 {
        self.alpha.norm_sqr()
    }

    pub fn n_mech(&self) -> f64 {
        self.beta.norm_sqr()
    }

    pub fn n_total(&self) -> f64 {
        self.n_cavity() + self.n_mech()
    }

    /// Cavity population fraction u = N_c/N (0 when the state is vacuum).
    pub fn population_ratio(&self) -> f64 {
        let n = self.n_total();
        if n == 0.0 {
            0.0
        } else {
            self.n_cavity() / n
        }
    }
}

/// Rotation-dependent derived quantities, evaluated at `omega_eval`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivedParams {
    pub omega_eval: f64,
    pub omega_m_tilde: f64,
    pub g0: f64,
    pub g_nl: f64,
    pub chi: f64,
    pub g0_tilde: f64,
    pub g_nl_tilde: f64,
    pub chi_tilde: f64,
    /// chi / Omega^2, finite for every Omega including 0 (chi scales as
    /// Omega^2); this is the combination entering the 4*omega_m_tilde^2/Omega^2
    /// terms of the estimation generator with the pole cancelled.
    pub chi_over_omega_sq: f64,
    pub eta0: f64,
    pub units: UnitSystem,
}

/// Derived quantities at the configured reference rotation rate.
pub fn derive(params: &SystemParams, units: UnitSystem) -> Result<DerivedParams> {
    derive_at(params, units, params.omega_rotation)
}

/// Derived quantities at an arbitrary rotation rate.
///
/// The rotation dependence flows through the primitives, not the quoted
/// values: g0_tilde(Omega) = c_g * omega_m_tilde^{-3/2} with
/// c_g = g0_tilde_ref * omega_m_tilde_ref^{3/2} (the single-photon coupling
/// scales with the zero-point width), the ratio G_NL/g0 is
/// rotation-independent, and chi/Omega^2 = D*sqrt(m/(2*hbar*omega_m_tilde))
/// in SI mode or c_chi * omega_m_tilde^{-1/2} in dimensionless mode.
pub fn derive_at(params: &SystemParams, units: UnitSystem, omega: f64) -> Result<DerivedParams> {
    params.validate(units)?;
    let omega_m_tilde = params.omega_m.hypot(omega);
    if omega_m_tilde == 0.0 {
        return Err(QomgError::ZeroFrequency);
    }
    let pow32 = |w: f64| w * w.sqrt();
    let omega_ref_tilde = params.omega_m.hypot(params.omega_rotation);
    if omega_ref_tilde == 0.0 {
        return Err(QomgError::ZeroFrequency);
    }
    let c_g = params.g0_tilde * pow32(omega_ref_tilde);
    let g0_tilde = c_g / pow32(omega_m_tilde);
    let g0 = g0_tilde * omega_m_tilde;
    let g_nl_tilde = params.gnl_ratio * g0_tilde;
    let g_nl = params.gnl_ratio * g0;

    let chi_over_omega_sq = match units.mode {
        UnitMode::Si => {
            params.distance_d * (params.mass_m / (2.0 * units.hbar * omega_m_tilde)).sqrt()
        }
        UnitMode::Dimensionless => {
            if params.omega_rotation == 0.0 {
                0.0
            } else {
                let c_chi = params.chi_tilde_ref * pow32(omega_ref_tilde)
                    / (params.omega_rotation * params.omega_rotation);
                c_chi / omega_m_tilde.sqrt()
            }
        }
    };
    let chi = chi_over_omega_sq * omega * omega;
    let chi_tilde = chi / omega_m_tilde;

    Ok(DerivedParams {
        omega_eval: omega,
        omega_m_tilde,
        g0,
        g_nl,
        chi,
        g0_tilde,
        g_nl_tilde,
        chi_tilde,
        chi_over_omega_sq,
        eta0: params.eta0,
        units,
    })
}

/// Photon-number displacement of the mechanical equilibrium, in units of
/// omega_m_tilde: E_n = (g0_tilde - g_nl_tilde) n + g_nl_tilde n^2 - chi_tilde.
pub fn displacement_coefficient(derived: &DerivedParams, n: usize) -> f64 {
    let nf = n as f64;
    (derived.g0_tilde - derived.g_nl_tilde) * nf + derived.g_nl_tilde * nf * nf
        - derived.chi_tilde
}

/// Full Hamiltonian including the drive:
/// hbar[(omega_c - eta0) n + eta0 n^2] + hbar omega_m_tilde b'b
/// + hbar[(g0 - G_NL) n + G_NL n^2 - chi](b + b') + hbar(eps a' + eps* a).
pub fn hamiltonian_full(
    params: &SystemParams,
    derived: &DerivedParams,
    space: TruncatedSpace,
) -> Result<LinearOperator> {
    let hbar = derived.units.hbar;
    let wc = params.cavity_frame_frequency();
    let eta0 = params.eta0;
    let eps = params.drive_epsilon();

    let (dc, dm) = (space.dim_cavity(), space.dim_mech());
    let d = space.dim_total();
    let mut mat = DMatrix::<C64>::zeros(d, d);

    for n in 0..dc {
        let nf = n as f64;
        let diag_c = (wc - eta0) * nf + eta0 * nf * nf;
        let coupling = (derived.g0 - derived.g_nl) * nf + derived.g_nl * nf * nf - derived.chi;
        for k in 0..dm {
            let i = space.index(n, k);
            mat[(i, i)] = C64::new(hbar * (diag_c + derived.omega_m_tilde * k as f64), 0.0);
            // (b + b') within the photon-number block
            if k + 1 < dm {
                let v = C64::new(hbar * coupling * ((k + 1) as f64).sqrt(), 0.0);
                mat[(space.index(n, k + 1), i)] += v;
                mat[(i, space.index(n, k + 1))] += v;
            }
            // drive eps a' + eps* a: <n+1,k|H|n,k> = hbar eps sqrt(n+1)
            if n + 1 < dc {
                let amp = hbar * ((n + 1) as f64).sqrt();
                let j = space.index(n + 1, k);
                mat[(j, i)] += eps * amp;
                mat[(i, j)] += eps.conj() * amp;
            }
        }
    }
    LinearOperator::new(space, Mode::Both, mat)
}

/// Driving-free Hamiltonian assembled from the tilded quantities:
/// hbar omega_m_tilde [ b'b + E_n (b + b') ] plus the photon-number diagonal.
/// Requires a zero drive amplitude.
pub fn hamiltonian_driving_free(
    params: &SystemParams,
    derived: &DerivedParams,
    space: TruncatedSpace,
) -> Result<LinearOperator> {
    if params.drive_amplitude != 0.0 {
        return Err(QomgError::NonzeroDrive { eps: params.drive_amplitude });
    }
    let hbar = derived.units.hbar;
    let wc = params.cavity_frame_frequency();
    let eta0 = params.eta0;
    let wt = derived.omega_m_tilde;

    let (dc, dm) = (space.dim_cavity(), space.dim_mech());
    let d = space.dim_total();
    let mut mat = DMatrix::<C64>::zeros(d, d);
    for n in 0..dc {
        let nf = n as f64;
        let diag_c = (wc - eta0) * nf + eta0 * nf * nf;
        let e_n = displacement_coefficient(derived, n);
        for k in 0..dm {
            let i = space.index(n, k);
            mat[(i, i)] = C64::new(hbar * (diag_c + wt * k as f64), 0.0);
            if k + 1 < dm {
                let v = C64::new(hbar * wt * e_n * ((k + 1) as f64).sqrt(), 0.0);
                mat[(space.index(n, k + 1), i)] += v;
                mat[(i, space.index(n, k + 1))] += v;
            }
        }
    }
    LinearOperator::new(space, Mode::Both, mat)
}

// ---------------------------------------------------------------------------
// Config files
// ---------------------------------------------------------------------------

/// One `[scenario.<name>]` table: numeric overrides applied when running the
/// named scenario, plus the run declaration for user-defined scenarios.
#[derive(Clone, Debug, Default)]
pub struct ScenarioSpec {
    /// Parameter overrides (keys from the flat config vocabulary).
    pub overrides: BTreeMap<String, f64>,
    /// Evaluation engine name (user-defined scenarios only).
    pub engine: Option<String>,
    /// Swept parameter key (user-defined scenarios only).
    pub sweep_key: Option<String>,
    /// Swept values, in row order.
    pub sweep_values: Vec<f64>,
    /// Evolution time in the config's units; engine-dependent default.
    pub time: Option<f64>,
}

/// Parsed configuration: base parameters plus per-scenario overrides.
#[derive(Clone, Debug)]
pub struct Config {
    pub params: SystemParams,
    pub init: InitialState,
    pub units: UnitSystem,
    /// `[scenario.<name>]` tables by scenario name.
    pub scenario_overrides: BTreeMap<String, ScenarioSpec>,
}

const NUMERIC_KEYS: &[&str] = &[
    "omega_c",
    "omega_m",
    "mass",
    "distance_D",
    "length_L0",
    "eta0",
    "gnl_ratio",
    "g0_tilde",
    "chi_tilde",
    "omega_rotation",
    "drive_amplitude",
    "drive_phase",
    "kappa",
    "detuning",
    "alpha_re",
    "alpha_im",
    "beta_re",
    "beta_im",
];

impl Config {
    /// Baseline configuration in the requested unit mode (the reference
    /// parameter points with alpha = sqrt(5), beta = 1).
    pub fn default_for(mode: UnitMode) -> Config {
        let (params, units) = match mode {
            UnitMode::Si => (SystemParams::reference_si(), UnitSystem::si()),
            UnitMode::Dimensionless => {
                (SystemParams::reference_dimensionless(), UnitSystem::dimensionless())
            }
        };
        Config {
            params,
            init: InitialState::new(C64::new(5f64.sqrt(), 0.0), C64::new(1.0, 0.0)),
            units,
            scenario_overrides: BTreeMap::new(),
        }
    }

    /// Parse a TOML config. Flat keys override the mode's defaults; unknown
    /// keys are a hard error. The `units` key ("SI" | "dimensionless")
    /// selects the default set and is read first.
    pub fn parse(text: &str) -> Result<Config> {
        let table: toml::Table = text
            .parse()
            .map_err(|e| QomgError::Config(format!("TOML parse error: {e}")))?;

        let mode = match table.get("units") {
            None => UnitMode::Si,
            Some(toml::Value::String(s)) => match s.as_str() {
                "SI" | "si" => UnitMode::Si,
                "dimensionless" => UnitMode::Dimensionless,
                other => {
                    return Err(QomgError::Config(format!(
                        "units must be \"SI\" or \"dimensionless\", got \"{other}\""
                    )))
                }
            },
            Some(other) => {
                return Err(QomgError::Config(format!(
                    "units must be a string, got {other}"
                )))
            }
        };
        let mut cfg = Config::default_for(mode);

        for (key, value) in &table {
            match key.as_str() {
                "units" => {}
                "scenario" => {
                    let scen_table = value.as_table().ok_or_else(|| {
                        QomgError::Config("scenario must be a table of tables".into())
                    })?;
                    for (name, overrides) in scen_table {
                        let ov_table = overrides.as_table().ok_or_else(|| {
                            QomgError::Config(format!("scenario.{name} must be a table"))
                        })?;
                        let mut spec = ScenarioSpec::default();
                        for (k, v) in ov_table {
                            match k.as_str() {
                                "engine" => {
                                    spec.engine = Some(as_string(&format!("scenario.{name}.engine"), v)?);
                                }
                                "sweep" => {
                                    let key = as_string(&format!("scenario.{name}.sweep"), v)?;
                                    if !NUMERIC_KEYS.contains(&key.as_str()) {
                                        return Err(QomgError::Config(format!(
                                            "scenario.{name}.sweep: \"{key}\" is not a \
                                             parameter key (known keys: {})",
                                            NUMERIC_KEYS.join(", ")
                                        )));
                                    }
                                    spec.sweep_key = Some(key);
                                }
                                "values" => {
                                    let arr = v.as_array().ok_or_else(|| {
                                        QomgError::Config(format!(
                                            "scenario.{name}.values must be an array of numbers"
                                        ))
                                    })?;
                                    spec.sweep_values = arr
                                        .iter()
                                        .map(|x| as_number(&format!("scenario.{name}.values"), x))
                                        .collect::<Result<_>>()?;
                                }
                                "time" => {
                                    spec.time =
                                        Some(as_number(&format!("scenario.{name}.time"), v)?);
                                }
                                key if NUMERIC_KEYS.contains(&key) => {
                                    spec.overrides.insert(k.clone(), as_number(k, v)?);
                                }
                                other => {
                                    return Err(QomgError::Config(format!(
                                        "unknown key \"{other}\" in scenario.{name}"
                                    )));
                                }
                            }
                        }
                        cfg.scenario_overrides.insert(name.clone(), spec);
                    }
                }
                k if NUMERIC_KEYS.contains(&k) => {
                    cfg.set_numeric(k, as_number(k, value)?)?;
                }
                other => {
                    return Err(QomgError::Config(format!(
                        "unknown config key \"{other}\" (known keys: units, scenario, {})",
                        NUMERIC_KEYS.join(", ")
                    )))
                }
            }
        }
        cfg.params.validate(cfg.units)?;
        Ok(cfg)
    }

    /// Apply one `key=value` override (the CLI `--param` form).
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (key, value) = spec.split_once('=').ok_or_else(|| {
            QomgError::Config(format!("override \"{spec}\" is not of the form key=value"))
        })?;
        if key == "units" {
            return Err(QomgError::Config(
                "units cannot be overridden on the command line; set it in the config file"
                    .into(),
            ));
        }
        let v: f64 = value.trim().parse().map_err(|_| {
            QomgError::Config(format!("override {key}: \"{value}\" is not a number"))
        })?;
        self.set_numeric(key.trim(), v)
    }

    /// Parameters with a scenario's overrides applied (params unchanged when
    /// the scenario has no table).
    pub fn for_scenario(&self, scenario: &str) -> Result<(SystemParams, InitialState)> {
        let mut cfg = self.clone();
        if let Some(spec) = self.scenario_overrides.get(scenario) {
            for (k, v) in &spec.overrides {
                cfg.set_numeric(k, *v)?;
            }
        }
        cfg.params.validate(cfg.units)?;
        Ok((cfg.params, cfg.init))
    }

    pub(crate) fn set_numeric(&mut self, key: &str, v: f64) -> Result<()> {
        if !v.is_finite() {
            return Err(QomgError::Config(format!("{key} must be finite, got {v}")));
        }
        let p = &mut self.params;
        match key {
            "omega_c" => p.omega_c = v,
            "omega_m" => p.omega_m = v,
            "mass" => p.mass_m = v,
            "distance_D" => p.distance_d = v,
            "length_L0" => p.length_l0 = v,
            "eta0" => p.eta0 = v,
            "gnl_ratio" => p.gnl_ratio = v,
            "g0_tilde" => p.g0_tilde = v,
            "chi_tilde" => {
                if self.units.mode == UnitMode::Si {
                    return Err(QomgError::Config(
                        "chi_tilde is a dimensionless-mode input; SI mode derives chi \
                         from distance_D and mass"
                            .into(),
                    ));
                }
                p.chi_tilde_ref = v;
            }
            "omega_rotation" => p.omega_rotation = v,
            "drive_amplitude" => p.drive_amplitude = v,
            "drive_phase" => p.drive_phase = v,
            "kappa" => p.kappa = v,
            "detuning" => p.detuning = Some(v),
            "alpha_re" => self.init.alpha.re = v,
            "alpha_im" => self.init.alpha.im = v,
            "beta_re" => self.init.beta.re = v,
            "beta_im" => self.init.beta.im = v,
            other => {
                return Err(QomgError::Config(format!(
                    "unknown config key \"{other}\" (known keys: {})",
                    NUMERIC_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }
}

fn as_number(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        other => Err(QomgError::Config(format!("{key} must be a number, got {other}"))),
    }
}

fn as_string(key: &str, v: &toml::Value) -> Result<String> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        other => Err(QomgError::Config(format!("{key} must be a string, got {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use approx::assert_relative_eq;

    #[test]
    fn zero_rotation_gives_bare_frequency_and_no_chi() {
        let mut p = SystemParams::reference_si();
        p.omega_rotation = 0.0;
        let d = derive(&p, UnitSystem::si()).unwrap();
        assert_eq!(d.omega_m_tilde, p.omega_m);
        assert_eq!(d.chi, 0.0);
        assert!(d.chi_over_omega_sq > 0.0);
    }

    #[test]
    fn reference_si_point_matches_direct_arithmetic() {
        let p = SystemParams::reference_si();
        let d = derive(&p, UnitSystem::si()).unwrap();
        assert_relative_eq!(
            d.omega_m_tilde,
            (62800.0f64 * 62800.0 + 2000.0 * 2000.0).sqrt(),
            max_relative = 1e-15
        );
        let chi_direct = 1.0e-3
            * 2000.0f64.powi(2)
            * (1.0e-7 / (2.0 * HBAR_SI * d.omega_m_tilde)).sqrt();
        assert_relative_eq!(d.chi, chi_direct, max_relative = 1e-12);
        assert_relative_eq!(d.chi_tilde, d.chi / d.omega_m_tilde, max_relative = 1e-15);
        // frozen from the expression above: chi_tilde at this point
        assert_relative_eq!(d.chi_tilde, 5.5297e9, max_relative = 1e-3);
    }

    #[test]
    fn coupling_primitives_are_rotation_independent() {
        let p = SystemParams::reference_si();
        let u = UnitSystem::si();
        let d1 = derive_at(&p, u, 500.0).unwrap();
        let d2 = derive_at(&p, u, 9000.0).unwrap();
        let pow32 = |w: f64| w * w.sqrt();
        assert_relative_eq!(
            d1.g0_tilde * pow32(d1.omega_m_tilde),
            d2.g0_tilde * pow32(d2.omega_m_tilde),
            max_relative = 1e-12
        );
        assert_relative_eq!(d1.g_nl / d1.g0, d2.g_nl / d2.g0, max_relative = 1e-12);
        // and at the reference point g0_tilde equals the quoted input
        let dref = derive(&p, u).unwrap();
        assert_relative_eq!(dref.g0_tilde, p.g0_tilde, max_relative = 1e-14);
    }

    #[test]
    fn frequency_derivative_matches_finite_differences() {
        let p = SystemParams::reference_si();
        let u = UnitSystem::si();
        for omega in [1.0e2f64, 1.0e3, 5.0e3, 1.0e4] {
            // step scaled to omega_m_tilde, not omega: a step of 1e-6*omega at
            // omega = 100 would drown the difference quotient in rounding noise
            let h = 1e-6 * omega.max(p.omega_m);
            let dp = derive_at(&p, u, omega + h).unwrap().omega_m_tilde;
            let dm = derive_at(&p, u, omega - h).unwrap().omega_m_tilde;
            let fd = (dp - dm) / (2.0 * h);
            let d0 = derive_at(&p, u, omega).unwrap();
            let analytic = omega / d0.omega_m_tilde;
            assert_relative_eq!(fd, analytic, max_relative = 1e-6);
        }
    }

    #[test]
    fn dimensionless_mode_rejects_rescaled_cavity_frequency() {
        let mut p = SystemParams::reference_dimensionless();
        p.omega_c = 2.0;
        assert!(derive(&p, UnitSystem::dimensionless()).is_err());
    }

    #[test]
    fn dimensionless_chi_scales_as_omega_squared_near_reference() {
        let p = SystemParams::reference_dimensionless();
        let u = UnitSystem::dimensionless();
        let dref = derive(&p, u).unwrap();
        assert_relative_eq!(dref.chi_tilde, p.chi_tilde_ref, max_relative = 1e-14);
        let d2 = derive_at(&p, u, 2.0 * p.omega_rotation).unwrap();
        // exact scaling: chi_tilde * omega_m_tilde^{3/2} / Omega^2 is invariant
        let pow32 = |w: f64| w * w.sqrt();
        assert_relative_eq!(
            d2.chi_tilde * pow32(d2.omega_m_tilde) / (2.0 * p.omega_rotation).powi(2),
            dref.chi_tilde * pow32(dref.omega_m_tilde) / p.omega_rotation.powi(2),
            max_relative = 1e-12
        );
        // omega_m_tilde barely moves here, so chi_tilde is close to 4x
        assert_relative_eq!(d2.chi_tilde, 4.0 * dref.chi_tilde, max_relative = 1e-2);
    }

    #[test]
    fn hamiltonian_builders_agree_and_are_hermitian() {
        let p = SystemParams::reference_dimensionless();
        let u = UnitSystem::dimensionless();
        let d = derive(&p, u).unwrap();
        let space = TruncatedSpace::new(6, 5).unwrap();
        let hf = hamiltonian_full(&p, &d, space).unwrap();
        let hd = hamiltonian_driving_free(&p, &d, space).unwrap();
        assert!(hf.hermiticity_defect() < 1e-10);
        let scale = hf.mat.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let diff = linalg::frobenius_distance(&hf.mat, &hd.mat);
        assert!(diff <= 1e-10 * scale, "builders disagree: {diff:.3e} vs scale {scale:.3e}");
    }

    #[test]
    fn vacuum_expectation_vanishes_without_drive() {
        let p = SystemParams::reference_si();
        let u = UnitSystem::si();
        let d = derive(&p, u).unwrap();
        let space = TruncatedSpace::new(4, 4).unwrap();
        let h = hamiltonian_full(&p, &d, space).unwrap();
        assert_eq!(h.mat[(0, 0)], C64::new(0.0, 0.0));
    }

    #[test]
    fn hamiltonian_is_linear_in_drive() {
        let u = UnitSystem::dimensionless();
        let space = TruncatedSpace::new(4, 3).unwrap();
        let mut p = SystemParams::reference_dimensionless();
        let build = |p: &SystemParams| {
            let d = derive(p, u).unwrap();
            hamiltonian_full(p, &d, space).unwrap().mat
        };
        p.drive_amplitude = 0.0;
        let h0 = build(&p);
        p.drive_amplitude = 3.0e-2;
        let h1 = build(&p);
        p.drive_amplitude = 5.0e-2;
        let h2 = build(&p);
        p.drive_amplitude = 8.0e-2;
        let h12 = build(&p);
        let resid = (&h12 + &h0 - &h1 - &h2).iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(resid < 1e-14, "drive nonlinearity {resid:.3e}");
    }

    #[test]
    fn driving_free_requires_zero_drive() {
        let mut p = SystemParams::reference_dimensionless();
        p.drive_amplitude = 1e-2;
        let d = derive(&p, UnitSystem::dimensionless()).unwrap();
        let space = TruncatedSpace::new(3, 3).unwrap();
        match hamiltonian_driving_free(&p, &d, space) {
            Err(QomgError::NonzeroDrive { .. }) => {}
            other => panic!("expected NonzeroDrive, got {other:?}"),
        }
    }

    #[test]
    fn driving_free_is_block_diagonal_with_displaced_spectrum() {
        let mut p = SystemParams::reference_dimensionless();
        // order-one couplings so every block is well resolved
        p.omega_m = 1.3e-2;
        p.omega_rotation = 4.0e-3;
        p.chi_tilde_ref = 0.2;
        let u = UnitSystem::dimensionless();
        let d = derive(&p, u).unwrap();
        // photon numbers 0..=2: the largest displacement is E_2 = 2.4, well
        // inside a 61-level mechanical cutoff
        let space = TruncatedSpace::new(2, 60).unwrap();
        let h = hamiltonian_driving_free(&p, &d, space).unwrap();
        // no coupling between different photon numbers
        for n in 0..space.dim_cavity() {
            for np in 0..space.dim_cavity() {
                if n == np {
                    continue;
                }
                for k in 0..space.dim_mech() {
                    for kp in 0..space.dim_mech() {
                        assert_eq!(h.mat[(space.index(n, k), space.index(np, kp))], C64::new(0.0, 0.0));
                    }
                }
            }
        }
        // low-lying eigenvalues per block: (wc-eta0)n + eta0 n^2 + wt(k - E_n^2)
        for n in 0..space.dim_cavity() {
            let mut block = DMatrix::<C64>::zeros(space.dim_mech(), space.dim_mech());
            for k in 0..space.dim_mech() {
                for kp in 0..space.dim_mech() {
                    block[(k, kp)] = h.mat[(space.index(n, k), space.index(n, kp))];
                }
            }
            let (vals, _) = linalg::hermitian_eigen(&block).unwrap();
            let e_n = displacement_coefficient(&d, n);
            let nf = n as f64;
            let base = (p.cavity_frame_frequency() - p.eta0) * nf + p.eta0 * nf * nf;
            for k in 0..6 {
                let expect = base + d.omega_m_tilde * (k as f64 - e_n * e_n);
                assert_relative_eq!(vals[k], expect, epsilon = 1e-10, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn config_roundtrip_defaults_and_overrides() {
        let text = r#"
units = "dimensionless"
kappa = 0.1
alpha_re = 2.0
alpha_im = 0.0

[scenario.fig8]
kappa = 0.3
"#;
        let cfg = Config::parse(text).unwrap();
        assert_eq!(cfg.params.kappa, 0.1);
        assert_eq!(cfg.init.alpha, C64::new(2.0, 0.0));
        assert_eq!(cfg.init.beta, C64::new(1.0, 0.0));
        let (p8, _) = cfg.for_scenario("fig8").unwrap();
        assert_eq!(p8.kappa, 0.3);
        let (p2, _) = cfg.for_scenario("fig2").unwrap();
        assert_eq!(p2.kappa, 0.1);
    }

    #[test]
    fn scenario_tables_carry_run_declarations() {
        let text = r#"
units = "dimensionless"

[scenario.myscan]
engine = "analytic"
sweep = "omega_rotation"
values = [1e-12, 2e-12, 4e-12]
time = 6.0
kappa = 0.05
"#;
        let cfg = Config::parse(text).unwrap();
        let spec = &cfg.scenario_overrides["myscan"];
        assert_eq!(spec.engine.as_deref(), Some("analytic"));
        assert_eq!(spec.sweep_key.as_deref(), Some("omega_rotation"));
        assert_eq!(spec.sweep_values, vec![1e-12, 2e-12, 4e-12]);
        assert_eq!(spec.time, Some(6.0));
        assert_eq!(spec.overrides["kappa"], 0.05);
        assert!(Config::parse("[scenario.x]\nsweep = \"bogus\"").is_err());
    }

    #[test]
    fn config_rejects_unknown_keys_and_si_chi_tilde() {
        assert!(matches!(
            Config::parse("omega_q = 3.0"),
            Err(QomgError::Config(_))
        ));
        assert!(matches!(
            Config::parse("units = \"SI\"\nchi_tilde = 1e9"),
            Err(QomgError::Config(_))
        ));
        let mut cfg = Config::default_for(UnitMode::Si);
        assert!(cfg.apply_override("units=dimensionless").is_err());
        assert!(cfg.apply_override("kappa=0.25").is_ok());
        assert_eq!(cfg.params.kappa, 0.25);
    }

    #[test]
    fn population_split_examples() {
        let s = InitialState::from_population(6.0, 0.5).unwrap();
        assert_relative_eq!(s.n_cavity(), 3.0, max_relative = 1e-14);
        assert_relative_eq!(s.n_mech(), 3.0, max_relative = 1e-14);
        let s = InitialState::from_population(4.0, 1.0).unwrap();
        assert_eq!(s.beta, C64::new(0.0, 0.0));
        assert!(InitialState::from_population(4.0, 1.5).is_err());
    }
}
