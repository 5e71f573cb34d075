//! Scenario sweeps with deterministic CSV output and a JSON metadata sidecar.
//!
//! A scenario is a row axis (the swept quantity), a set of columns (engine
//! evaluations under per-column parameter settings, or reference curves),
//! and a time specification. The builtin scenarios fig2..fig10 pin their own
//! canonical base parameters; config files customize them through
//! `[scenario.<name>]` tables (parameter overrides, `values`, `time`), and
//! user-defined scenarios additionally declare `engine` and `sweep` there.
//!
//! Rotation-rate sweeps evaluate through [`derive_at`] so the device
//! constants stay anchored at the configured reference rate; overriding
//! `omega_rotation` in a config instead moves the quote point itself.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{QomgError, Result};
use crate::evolution::qfi_pure_numeric;
use crate::hilbert::TruncatedSpace;
use crate::measurement::{cfi, QuadratureGrid};
use crate::model::{
    derive, derive_at, Config, DerivedParams, InitialState, ScenarioSpec, SystemParams,
    UnitMode, UnitSystem,
};
use crate::open_system::{
    qfi_driven_pure, qfi_mixed, qfi_mixed_trajectory, qfi_mixed_unrefined, FdQfiMixed,
    LindbladConfig, DEFAULT_MECH_GUARD,
};
use crate::qfi::qfi_closed_form;
use crate::tol;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

// ---------------------------------------------------------------------------
// Scenario description
// ---------------------------------------------------------------------------

/// How a cell is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Engine {
    /// Closed-form QFI (drive-free, real mechanical amplitude).
    Analytic,
    /// Finite-difference QFI from the exact drive-free state.
    Exact,
    /// Quadrature-measurement classical Fisher information.
    Cfi,
    /// Master-equation QFI by difference propagation (mixed states).
    Lindblad,
    /// Driven pure-state QFI by state-vector difference propagation.
    Driven,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Analytic => "analytic",
            Engine::Exact => "exact",
            Engine::Cfi => "cfi",
            Engine::Lindblad => "lindblad",
            Engine::Driven => "driven",
        }
    }

    pub fn parse(s: &str) -> Result<Engine> {
        match s {
            "analytic" => Ok(Engine::Analytic),
            "exact" => Ok(Engine::Exact),
            "cfi" => Ok(Engine::Cfi),
            "lindblad" => Ok(Engine::Lindblad),
            "driven" => Ok(Engine::Driven),
            other => Err(QomgError::Config(format!(
                "unknown engine \"{other}\" (one of: analytic, exact, cfi, lindblad, driven)"
            ))),
        }
    }
}

/// The swept quantity labelling the rows.
#[derive(Clone, Debug, PartialEq)]
pub enum Axis {
    /// A flat config key, set per row.
    Param(String),
    /// Rotation rate evaluated away from the configured reference (the
    /// device constants stay quoted at the reference rate).
    Rotation,
    /// Phase omega_m_tilde * t; each row evaluates at t = x / omega_m_tilde.
    Theta,
    /// Absolute evolution time in the scenario's units.
    Time,
    /// Total excitation split into coherent amplitudes by the population
    /// ratio (the column's, falling back to the scenario's).
    TotalN,
}

/// Evolution time for rows that do not sweep time themselves.
#[derive(Clone, Copy, Debug)]
pub enum TimeSpec {
    /// omega_m_tilde * t (one mechanical period is `Theta(2 pi)`).
    Theta(f64),
    /// Time in the scenario's units.
    Absolute(f64),
}

#[derive(Clone, Debug)]
pub enum ColumnKind {
    Engine(Engine),
    /// Standard-quantum-limit reference, F = N.
    Sql,
    /// Heisenberg-limit reference, F = N^2.
    Hl,
}

/// One computed column.
#[derive(Clone, Debug)]
pub struct ColumnSpec {
    pub header: String,
    pub kind: ColumnKind,
    /// key = value parameter settings applied for this column.
    pub overrides: Vec<(String, f64)>,
    /// Rotation rate evaluated away from the reference (fig2's panels).
    pub rotation: Option<f64>,
    /// Population ratio for the TotalN axis.
    pub ratio_u: Option<f64>,
    /// Homodyne phase (cfi engine).
    pub phi: f64,
}

impl ColumnSpec {
    fn engine(header: impl Into<String>, engine: Engine) -> ColumnSpec {
        ColumnSpec {
            header: header.into(),
            kind: ColumnKind::Engine(engine),
            overrides: Vec::new(),
            rotation: None,
            ratio_u: None,
            phi: 0.0,
        }
    }

    fn with(mut self, key: &str, v: f64) -> ColumnSpec {
        self.overrides.push((key.to_string(), v));
        self
    }
}

/// A full sweep description; builtins come from [`Scenario::builtin`],
/// user-defined ones from `[scenario.<name>]` config tables.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub params: SystemParams,
    pub init: InitialState,
    pub units: UnitSystem,
    pub axis: Axis,
    /// CSV header of the row-axis column.
    pub axis_label: String,
    pub values: Vec<f64>,
    pub time: TimeSpec,
    pub columns: Vec<ColumnSpec>,
    /// Default population ratio for the TotalN axis.
    pub ratio_u: f64,
    /// Pinned Fock cutoffs for master-equation columns; `None` sizes them
    /// from the initial amplitudes.
    pub space: Option<(usize, usize)>,
}

/// Builtin scenario names with one-line descriptions, in run-order.
pub fn available_scenarios() -> Vec<(&'static str, &'static str)> {
    vec![
        ("fig2", "QFI vs omega_tilde*t for Kerr ratios {0, 0.1, 0.3} at 2 and 4 krad/s (SI)"),
        ("fig3", "QFI vs rotation rate over [1e2, 1e4] rad/s, Kerr-ratio columns (SI)"),
        ("fig4", "QFI vs total excitation N for population ratios {0.1, 0.5, 0.9} with SQL/HL (SI)"),
        ("fig5", "QFI and quadrature CFI vs total excitation N at u = 0.9 (SI)"),
        ("fig6a", "driven QFI vs drive amplitude at T = 2 pi (dimensionless)"),
        ("fig6b", "driven QFI vs drive phase at amplitude 1e-2, T = 2 pi (dimensionless)"),
        ("fig7", "dissipative QFI vs time for Kerr ratios {0, 0.1, 0.3} at kappa = 0.1 (dimensionless)"),
        ("fig8", "dissipative QFI vs time for kappa {0, 0.1, 0.3} at Kerr ratio 0.3 (dimensionless)"),
        ("fig9", "dissipative QFI vs rotation rate for kappa {0, 0.1, 0.3} at T = 2 pi (dimensionless)"),
        ("fig10", "dissipative QFI vs total excitation N for kappa {0, 0.1, 0.3} with SQL/HL (dimensionless)"),
    ]
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    linspace(a.log10(), b.log10(), n).into_iter().map(|e| 10f64.powf(e)).collect()
}

impl Scenario {
    /// Builtin scenario by name with the config's `[scenario.<name>]` table
    /// applied; any other name must be declared in the config.
    pub fn builtin(name: &str, cfg: &Config) -> Result<Scenario> {
        let mut s = match name {
            "fig2" => fig2(),
            "fig3" => fig3(),
            "fig4" => fig4(),
            "fig5" => fig5(),
            "fig6a" => fig6(true),
            "fig6b" => fig6(false),
            "fig7" => fig7(),
            "fig8" => fig8(),
            "fig9" => fig9(),
            "fig10" => fig10(),
            other => {
                let spec = cfg.scenario_overrides.get(other).ok_or_else(|| {
                    QomgError::Config(format!(
                        "unknown scenario \"{other}\" (builtin: fig2..fig10; user scenarios \
                         are declared in [scenario.{other}] config tables)"
                    ))
                })?;
                return Scenario::custom(other, cfg, spec);
            }
        };
        if let Some(spec) = cfg.scenario_overrides.get(name) {
            if spec.engine.is_some() || spec.sweep_key.is_some() {
                return Err(QomgError::Config(format!(
                    "scenario {name} is builtin; its engine and sweep are fixed \
                     (override parameters, values, or time instead)"
                )));
            }
            s.apply_table(spec)?;
        }
        Ok(s)
    }

    fn custom(name: &str, cfg: &Config, spec: &ScenarioSpec) -> Result<Scenario> {
        let engine = Engine::parse(spec.engine.as_deref().unwrap_or("analytic"))?;
        let key = spec.sweep_key.clone().ok_or_else(|| {
            QomgError::Config(format!(
                "scenario {name}: set sweep = \"<parameter key>\" in its config table"
            ))
        })?;
        let (params, init) = cfg.for_scenario(name)?;
        let time = match spec.time {
            Some(t) => TimeSpec::Absolute(t),
            None => TimeSpec::Theta(TWO_PI),
        };
        let axis = if key == "omega_rotation" { Axis::Rotation } else { Axis::Param(key.clone()) };
        let header = match engine {
            Engine::Cfi => "cfi",
            _ => "qfi",
        };
        Ok(Scenario {
            name: name.to_string(),
            params,
            init,
            units: cfg.units,
            axis,
            axis_label: key,
            values: spec.sweep_values.clone(),
            time,
            columns: vec![ColumnSpec::engine(header, engine)],
            ratio_u: 0.9,
            space: None,
        })
    }

    /// The sweep as (parameter name, values).
    pub fn sweep(&self) -> (&str, &[f64]) {
        (&self.axis_label, &self.values)
    }

    /// Apply a `key=value` parameter override to the scenario base.
    pub fn apply_param(&mut self, spec: &str) -> Result<()> {
        let (key, value) = spec.split_once('=').ok_or_else(|| {
            QomgError::Config(format!("override \"{spec}\" is not of the form key=value"))
        })?;
        let v: f64 = value.trim().parse().map_err(|_| {
            QomgError::Config(format!("override {key}: \"{value}\" is not a number"))
        })?;
        self.set_key(key.trim(), v)
    }

    fn set_key(&mut self, key: &str, v: f64) -> Result<()> {
        let mut shim = self.shim();
        shim.set_numeric(key, v)?;
        self.params = shim.params;
        self.init = shim.init;
        Ok(())
    }

    fn shim(&self) -> Config {
        Config {
            params: self.params.clone(),
            init: self.init,
            units: self.units,
            scenario_overrides: BTreeMap::new(),
        }
    }

    fn apply_table(&mut self, spec: &ScenarioSpec) -> Result<()> {
        for (k, v) in &spec.overrides {
            self.set_key(k, *v)?;
        }
        if let Some(t) = spec.time {
            self.time = TimeSpec::Absolute(t);
        }
        if !spec.sweep_values.is_empty() {
            self.values = spec.sweep_values.clone();
        }
        Ok(())
    }

    /// Static precondition checks: recognized axis key, engine/sweep
    /// compatibility, population ratios in range, usable time grid.
    pub fn validate(&self) -> Result<()> {
        for &v in &self.values {
            if !v.is_finite() {
                return Err(QomgError::InvalidInput(format!(
                    "sweep value {v} is not finite"
                )));
            }
        }
        if let Axis::Param(key) = &self.axis {
            let mut shim = self.shim();
            shim.set_numeric(key, self.values.first().copied().unwrap_or(0.0))?;
        }
        if self.axis == Axis::Time {
            for w in self.values.windows(2) {
                if w[1] < w[0] {
                    return Err(QomgError::InvalidInput(
                        "time sweep values must be non-decreasing".into(),
                    ));
                }
            }
            if self.values.first().is_some_and(|&t| t < 0.0) {
                return Err(QomgError::InvalidInput("time sweep values must be >= 0".into()));
            }
        }
        for col in &self.columns {
            let engine = match &col.kind {
                ColumnKind::Sql | ColumnKind::Hl => {
                    if self.axis != Axis::TotalN {
                        return Err(QomgError::InvalidInput(format!(
                            "column {} is a reference curve and needs a total-excitation sweep",
                            col.header
                        )));
                    }
                    continue;
                }
                ColumnKind::Engine(e) => *e,
            };
            let mut shim = self.shim();
            for (k, v) in &col.overrides {
                shim.set_numeric(k, *v)?;
            }
            if self.axis == Axis::TotalN {
                let u = col.ratio_u.unwrap_or(self.ratio_u);
                if !(0.0..=1.0).contains(&u) {
                    return Err(QomgError::InvalidInput(format!(
                        "column {}: population ratio {u} outside [0, 1]",
                        col.header
                    )));
                }
            }
            match engine {
                Engine::Analytic | Engine::Exact | Engine::Cfi => {
                    let swept_drive = self.axis == Axis::Param("drive_amplitude".into())
                        && self.values.iter().any(|&v| v != 0.0);
                    if shim.params.drive_amplitude != 0.0 || swept_drive {
                        return Err(QomgError::NonzeroDrive {
                            eps: shim.params.drive_amplitude.max(
                                self.values.iter().cloned().fold(0.0, f64::max),
                            ),
                        });
                    }
                    if engine == Engine::Analytic && self.axis != Axis::TotalN {
                        let beta = shim.init.beta;
                        if beta.im != 0.0 || beta.re < 0.0 {
                            return Err(QomgError::BetaNotRealNonneg {
                                re: beta.re,
                                im: beta.im,
                            });
                        }
                    }
                }
                Engine::Driven => {
                    let swept_kappa = self.axis == Axis::Param("kappa".into())
                        && self.values.iter().any(|&v| v != 0.0);
                    if shim.params.kappa != 0.0 || swept_kappa {
                        return Err(QomgError::InvalidInput(format!(
                            "column {}: the driven pure-state engine requires kappa = 0",
                            col.header
                        )));
                    }
                }
                Engine::Lindblad => {}
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Builtin definitions
// ---------------------------------------------------------------------------

const KERR_RATIOS: [f64; 3] = [0.0, 0.1, 0.3];
const DECAY_RATES: [f64; 3] = [0.0, 0.1, 0.3];
/// Pinned cutoffs for the reference-point master-equation runs.
const OPEN_SPACE: (usize, usize) = (20, 12);

fn si_base() -> (SystemParams, InitialState, UnitSystem) {
    let params = SystemParams::reference_si();
    let init = InitialState::new(5f64.sqrt().into(), 1.0.into());
    (params, init, UnitSystem::si())
}

fn dimensionless_base() -> (SystemParams, InitialState, UnitSystem) {
    let params = SystemParams::reference_dimensionless();
    let init = InitialState::new(5f64.sqrt().into(), 1.0.into());
    (params, init, UnitSystem::dimensionless())
}

fn fig2() -> Scenario {
    let (params, init, units) = si_base();
    let mut columns = Vec::new();
    for omega in [2e3, 4e3] {
        for r in KERR_RATIOS {
            let mut c = ColumnSpec::engine(
                format!("qfi_gnl{r}_omega{omega}"),
                Engine::Analytic,
            )
            .with("gnl_ratio", r);
            c.rotation = Some(omega);
            columns.push(c);
        }
    }
    Scenario {
        name: "fig2".into(),
        params,
        init,
        units,
        axis: Axis::Theta,
        axis_label: "omega_tilde_t".into(),
        values: linspace(0.0, TWO_PI, 81),
        time: TimeSpec::Theta(TWO_PI),
        columns,
        ratio_u: 0.9,
        space: None,
    }
}

fn fig3() -> Scenario {
    let (params, init, units) = si_base();
    let columns = KERR_RATIOS
        .iter()
        .map(|&r| ColumnSpec::engine(format!("qfi_gnl{r}"), Engine::Analytic).with("gnl_ratio", r))
        .collect();
    Scenario {
        name: "fig3".into(),
        params,
        init,
        units,
        axis: Axis::Rotation,
        axis_label: "omega_rotation".into(),
        values: logspace(1e2, 1e4, 50),
        time: TimeSpec::Theta(TWO_PI),
        columns,
        ratio_u: 0.9,
        space: None,
    }
}

fn fig4() -> Scenario {
    let (params, init, units) = si_base();
    let mut columns: Vec<ColumnSpec> = [0.1, 0.5, 0.9]
        .iter()
        .map(|&u| {
            let mut c = ColumnSpec::engine(format!("qfi_u{u}"), Engine::Analytic);
            c.ratio_u = Some(u);
            c
        })
        .collect();
    columns.push(ColumnSpec { kind: ColumnKind::Sql, ..ColumnSpec::engine("sql", Engine::Analytic) });
    columns.push(ColumnSpec { kind: ColumnKind::Hl, ..ColumnSpec::engine("hl", Engine::Analytic) });
    Scenario {
        name: "fig4".into(),
        params,
        init,
        units,
        axis: Axis::TotalN,
        axis_label: "total_excitation".into(),
        values: vec![2.0, 4.0, 6.0, 8.0, 10.0],
        time: TimeSpec::Theta(TWO_PI),
        columns,
        ratio_u: 0.9,
        space: None,
    }
}

fn fig5() -> Scenario {
    let (params, init, units) = si_base();
    Scenario {
        name: "fig5".into(),
        params,
        init,
        units,
        axis: Axis::TotalN,
        axis_label: "total_excitation".into(),
        values: vec![2.0, 4.0, 6.0, 8.0],
        time: TimeSpec::Theta(TWO_PI),
        columns: vec![
            ColumnSpec::engine("qfi", Engine::Analytic),
            ColumnSpec::engine("cfi", Engine::Cfi),
        ],
        ratio_u: 0.9,
        space: None,
    }
}

fn fig6(amplitude_scan: bool) -> Scenario {
    let (mut params, init, units) = dimensionless_base();
    let (name, axis_key, values) = if amplitude_scan {
        ("fig6a", "drive_amplitude", linspace(0.0, 1e-2, 11))
    } else {
        params.drive_amplitude = 1e-2;
        ("fig6b", "drive_phase", linspace(0.0, TWO_PI, 17))
    };
    Scenario {
        name: name.into(),
        params,
        init,
        units,
        axis: Axis::Param(axis_key.into()),
        axis_label: axis_key.into(),
        values,
        time: TimeSpec::Absolute(TWO_PI),
        columns: vec![ColumnSpec::engine("qfi", Engine::Driven)],
        ratio_u: 0.9,
        space: Some(OPEN_SPACE),
    }
}

fn fig7() -> Scenario {
    let (mut params, init, units) = dimensionless_base();
    params.kappa = 0.1;
    let columns = KERR_RATIOS
        .iter()
        .map(|&r| ColumnSpec::engine(format!("qfi_gnl{r}"), Engine::Lindblad).with("gnl_ratio", r))
        .collect();
    Scenario {
        name: "fig7".into(),
        params,
        init,
        units,
        axis: Axis::Time,
        axis_label: "time".into(),
        values: linspace(0.0, TWO_PI, 33),
        time: TimeSpec::Absolute(TWO_PI),
        columns,
        ratio_u: 0.9,
        space: Some(OPEN_SPACE),
    }
}

fn fig8() -> Scenario {
    let (params, init, units) = dimensionless_base();
    let columns = DECAY_RATES
        .iter()
        .map(|&k| ColumnSpec::engine(format!("qfi_kappa{k}"), Engine::Lindblad).with("kappa", k))
        .collect();
    Scenario {
        name: "fig8".into(),
        params,
        init,
        units,
        axis: Axis::Time,
        axis_label: "time".into(),
        values: linspace(0.0, TWO_PI, 33),
        time: TimeSpec::Absolute(TWO_PI),
        columns,
        ratio_u: 0.9,
        space: Some(OPEN_SPACE),
    }
}

fn fig9() -> Scenario {
    let (params, init, units) = dimensionless_base();
    let columns = DECAY_RATES
        .iter()
        .map(|&k| ColumnSpec::engine(format!("qfi_kappa{k}"), Engine::Lindblad).with("kappa", k))
        .collect();
    Scenario {
        name: "fig9".into(),
        params,
        init,
        units,
        axis: Axis::Rotation,
        axis_label: "omega_rotation".into(),
        values: logspace(1e-13, 1e-11, 9),
        time: TimeSpec::Absolute(TWO_PI),
        columns,
        ratio_u: 0.9,
        space: Some(OPEN_SPACE),
    }
}

fn fig10() -> Scenario {
    let (params, init, units) = dimensionless_base();
    let mut columns: Vec<ColumnSpec> = DECAY_RATES
        .iter()
        .map(|&k| ColumnSpec::engine(format!("qfi_kappa{k}"), Engine::Lindblad).with("kappa", k))
        .collect();
    columns.push(ColumnSpec { kind: ColumnKind::Sql, ..ColumnSpec::engine("sql", Engine::Analytic) });
    columns.push(ColumnSpec { kind: ColumnKind::Hl, ..ColumnSpec::engine("hl", Engine::Analytic) });
    Scenario {
        name: "fig10".into(),
        params,
        init,
        units,
        axis: Axis::TotalN,
        axis_label: "total_excitation".into(),
        values: vec![2.0, 4.0, 6.0, 8.0],
        time: TimeSpec::Absolute(TWO_PI),
        columns,
        ratio_u: 0.9,
        space: None,
    }
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

/// A computed cell: a number or an error marker.
#[derive(Clone, Debug, PartialEq)]
pub enum CellValue {
    Number(f64),
    Error(String),
}

impl CellValue {
    /// CSV rendering: scientific notation with 12 significant digits, or
    /// `error:<tag>` for failed points.
    pub fn csv(&self) -> String {
        match self {
            CellValue::Number(v) => format!("{v:.11e}"),
            CellValue::Error(tag) => format!("error:{tag}"),
        }
    }
}

/// Reproducibility record carried next to every table.
#[derive(Clone, Debug, Serialize)]
pub struct RunMetadata {
    pub scenario: String,
    pub units: String,
    pub axis: String,
    pub rows: usize,
    pub engines: Vec<String>,
    /// Basis truncation actually used, one entry per column.
    pub truncation: Vec<String>,
    pub fd_step_policy: String,
    pub integrator: Option<String>,
    /// Step-halving consistency results at the witness points.
    pub witness_checks: Vec<String>,
    pub errors: Vec<String>,
    pub code_version: String,
    /// Informational only; excluded from the determinism contract.
    pub wall_time_s: f64,
}

/// One scenario's table plus its metadata.
#[derive(Clone, Debug)]
pub struct ScanResult {
    pub scenario: String,
    /// Header row: the axis label, then one entry per column.
    pub columns: Vec<String>,
    pub rows: Vec<Vec<CellValue>>,
    pub metadata: RunMetadata,
}

impl ScanResult {
    pub fn error_count(&self) -> usize {
        self.rows
            .iter()
            .flatten()
            .filter(|c| matches!(c, CellValue::Error(_)))
            .count()
    }

    /// The deterministic CSV body (header plus rows, `\n` line endings).
    pub fn csv_body(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(CellValue::csv).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Write `<name>.csv` and `<name>.meta.json` into `dir`; returns both
    /// paths.
    pub fn write_files(&self, dir: &Path) -> std::io::Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{}.csv", self.scenario));
        let meta_path = dir.join(format!("{}.meta.json", self.scenario));
        std::fs::write(&csv_path, self.csv_body())?;
        let mut meta = serde_json::to_string_pretty(&self.metadata).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string())
        })?;
        meta.push('\n');
        std::fs::write(&meta_path, meta)?;
        Ok((csv_path, meta_path))
    }
}

/// Short stable token identifying an error class in CSV cells.
fn error_tag(e: &QomgError) -> &'static str {
    match e {
        QomgError::CutoffTooSmall { .. } => "cutoff_too_small",
        QomgError::StepTooLarge { .. } => "step_too_large",
        QomgError::StepUnstable { .. } => "step_unstable",
        QomgError::NonzeroDrive { .. } => "nonzero_drive",
        QomgError::ZeroFrequency => "zero_frequency",
        QomgError::BetaNotRealNonneg { .. } => "beta_not_real",
        QomgError::DimensionMismatch(_) => "dimension_mismatch",
        QomgError::GridInadequate { .. } => "grid_inadequate",
        QomgError::EigenFailure { .. } => "eigen_failure",
        QomgError::InvalidInput(_) => "invalid_input",
        QomgError::Config(_) => "config",
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Reference and HL proportionality constants are one: F = N and F = N^2.
pub fn reference_curves(n_list: &[f64]) -> Result<ScanResult> {
    for &n in n_list {
        if !(n > 0.0) {
            return Err(QomgError::InvalidInput(format!(
                "reference curves need positive N, got {n}"
            )));
        }
    }
    let rows = n_list
        .iter()
        .map(|&n| {
            vec![CellValue::Number(n), CellValue::Number(n), CellValue::Number(n * n)]
        })
        .collect();
    Ok(ScanResult {
        scenario: "reference".into(),
        columns: vec!["total_excitation".into(), "sql".into(), "hl".into()],
        rows,
        metadata: RunMetadata {
            scenario: "reference".into(),
            units: "none".into(),
            axis: "total_excitation".into(),
            rows: n_list.len(),
            engines: vec![],
            truncation: vec![],
            fd_step_policy: "none".into(),
            integrator: None,
            witness_checks: vec![],
            errors: vec![],
            code_version: env!("CARGO_PKG_VERSION").into(),
            wall_time_s: 0.0,
        },
    })
}

/// N split by the population ratio: (N_cavity, N_mech) = (uN, (1-u)N).
pub fn population_split(n_total: f64, u: f64) -> Result<(f64, f64)> {
    let init = InitialState::from_population(n_total, u)?;
    Ok((init.n_cavity(), init.n_mech()))
}

/// Parameters and initial state of one cell (column settings plus the row's
/// axis value applied to the scenario base).
fn cell_inputs(s: &Scenario, col: &ColumnSpec, x: f64) -> Result<(SystemParams, InitialState)> {
    let mut shim = s.shim();
    for (k, v) in &col.overrides {
        shim.set_numeric(k, *v)?;
    }
    match &s.axis {
        Axis::Param(key) => shim.set_numeric(key, x)?,
        Axis::TotalN => {
            shim.init = InitialState::from_population(x, col.ratio_u.unwrap_or(s.ratio_u))?;
        }
        Axis::Rotation | Axis::Theta | Axis::Time => {}
    }
    shim.params.validate(shim.units)?;
    Ok((shim.params, shim.init))
}

/// Derived parameters of one cell, evaluated away from the reference
/// rotation rate when the axis or column asks for it.
fn cell_derived(
    s: &Scenario,
    col: &ColumnSpec,
    params: &SystemParams,
    x: f64,
) -> Result<DerivedParams> {
    let rotation = match &s.axis {
        Axis::Rotation => Some(x),
        _ => col.rotation,
    };
    match rotation {
        Some(w) => derive_at(params, s.units, w),
        None => derive(params, s.units),
    }
}

fn resolve_time(axis: &Axis, time: TimeSpec, x: f64, omega_m_tilde: f64) -> f64 {
    match axis {
        Axis::Theta => x / omega_m_tilde,
        Axis::Time => x,
        _ => match time {
            TimeSpec::Theta(th) => th / omega_m_tilde,
            TimeSpec::Absolute(t) => t,
        },
    }
}

/// Smallest cutoff M with the Poisson(mean) mass above M below the
/// master-equation initial-tail budget with a factor-ten margin.
fn poisson_cutoff(mean: f64) -> Result<usize> {
    let tail = tol::LINDBLAD_INIT_TAIL / 10.0;
    if mean <= 0.0 {
        return Ok(0);
    }
    let mut term = (-mean).exp();
    let mut acc = term;
    let mut n = 0usize;
    while 1.0 - acc > tail {
        if n >= 4000 || term == 0.0 {
            return Err(QomgError::InvalidInput(format!(
                "initial occupation {mean} too large for a master-equation basis"
            )));
        }
        n += 1;
        term *= mean / n as f64;
        acc += term;
    }
    Ok(n)
}

/// Master-equation cutoffs: the scenario's pinned pair, or sized from the
/// initial amplitudes with floors giving dynamical headroom.
fn open_space(s: &Scenario, init: &InitialState) -> Result<TruncatedSpace> {
    match s.space {
        Some((nc, nm)) => TruncatedSpace::new(nc, nm),
        None => {
            let nc = poisson_cutoff(init.alpha.norm_sqr())?.max(8);
            let nm = poisson_cutoff(init.beta.norm_sqr())?.max(6);
            TruncatedSpace::new(nc, nm)
        }
    }
}

fn pure_space(init: &InitialState) -> Result<TruncatedSpace> {
    TruncatedSpace::new(TruncatedSpace::cutoff_for_amplitude(init.alpha.norm()) - 1, 1)
}

struct CellOut {
    value: std::result::Result<f64, QomgError>,
    witness: Option<FdQfiMixed>,
}

fn eval_cell(s: &Scenario, col: &ColumnSpec, x: f64, witness_row: bool) -> CellOut {
    match eval_cell_inner(s, col, x, witness_row) {
        Ok((v, w)) => CellOut { value: Ok(v), witness: w },
        Err(e) => CellOut { value: Err(e), witness: None },
    }
}

fn eval_cell_inner(
    s: &Scenario,
    col: &ColumnSpec,
    x: f64,
    witness_row: bool,
) -> Result<(f64, Option<FdQfiMixed>)> {
    let engine = match &col.kind {
        ColumnKind::Sql => return Ok((x, None)),
        ColumnKind::Hl => return Ok((x * x, None)),
        ColumnKind::Engine(e) => *e,
    };
    let (params, init) = cell_inputs(s, col, x)?;
    let derived = cell_derived(s, col, &params, x)?;
    let t = resolve_time(&s.axis, s.time, x, derived.omega_m_tilde);
    match engine {
        Engine::Analytic => Ok((qfi_closed_form(&derived, init.alpha, init.beta, t)?, None)),
        Engine::Exact => {
            let space = pure_space(&init)?;
            Ok((qfi_pure_numeric(&params, &derived, &init, t, space, None)?.value, None))
        }
        Engine::Cfi => {
            let dim = TruncatedSpace::cutoff_for_amplitude(init.alpha.norm());
            let grid = QuadratureGrid::auto(dim, col.phi);
            Ok((cfi(&params, &derived, &init, t, &grid, None)?.value, None))
        }
        Engine::Driven => {
            let space = open_space(s, &init)?;
            Ok((qfi_driven_pure(&params, &derived, &init, t, space, None, None)?.value, None))
        }
        Engine::Lindblad => {
            let space = open_space(s, &init)?;
            let config = LindbladConfig::with_defaults(params.kappa, t, &derived);
            if witness_row {
                let r = qfi_mixed(&params, &derived, &init, &config, space, None)?;
                Ok((r.value, Some(r)))
            } else {
                let v = qfi_mixed_unrefined(&params, &derived, &init, &config, space, None)?;
                Ok((v, None))
            }
        }
    }
}

/// One master-equation column over a whole time sweep, sharing a single
/// difference-propagation run with the step-halving witness at the final
/// time.
fn eval_time_column(s: &Scenario, col: &ColumnSpec) -> Result<(Vec<f64>, FdQfiMixed)> {
    let t_final = *s.values.last().expect("trajectory mode needs values");
    let (params, init) = cell_inputs(s, col, t_final)?;
    let derived = cell_derived(s, col, &params, t_final)?;
    let space = open_space(s, &init)?;
    let config = LindbladConfig::with_defaults(params.kappa, t_final, &derived);
    let traj = qfi_mixed_trajectory(&params, &derived, &init, &config, space, &s.values, None)?;
    Ok((traj.values, traj.witness))
}

fn witness_note(header: &str, w: &FdQfiMixed) -> String {
    let rel = (w.coarse - w.value).abs() / w.value.abs().max(1e-300);
    format!(
        "{header}: rotation step {:.6e}, step-halving rel diff {:.3e}",
        w.delta, rel
    )
}

/// Per-column description of the basis truncation the engines will use.
fn truncation_notes(s: &Scenario) -> Vec<String> {
    let fmt_range = |lo: usize, hi: usize| {
        if lo == hi { format!("{lo}") } else { format!("{lo}..{hi}") }
    };
    s.columns
        .iter()
        .map(|col| {
            let engine = match &col.kind {
                ColumnKind::Sql | ColumnKind::Hl => {
                    return format!("{}: reference curve (no truncation)", col.header)
                }
                ColumnKind::Engine(e) => *e,
            };
            let what = match engine {
                Engine::Analytic => "closed form (no truncation)".to_string(),
                Engine::Exact | Engine::Cfi => {
                    let mut dims: Vec<usize> = Vec::new();
                    for &x in &s.values {
                        if let Ok((_, init)) = cell_inputs(s, col, x) {
                            dims.push(TruncatedSpace::cutoff_for_amplitude(init.alpha.norm()));
                        }
                    }
                    match (dims.iter().min(), dims.iter().max()) {
                        (Some(&lo), Some(&hi)) => format!(
                            "cavity levels {} (mechanics in closed form)",
                            fmt_range(lo, hi)
                        ),
                        _ => "cavity sizing unavailable".to_string(),
                    }
                }
                Engine::Lindblad | Engine::Driven => {
                    let mut cs: Vec<usize> = Vec::new();
                    let mut ms: Vec<usize> = Vec::new();
                    for &x in &s.values {
                        if let Ok((_, init)) = cell_inputs(s, col, x) {
                            if let Ok(sp) = open_space(s, &init) {
                                cs.push(sp.dim_cavity() - 1);
                                ms.push(sp.dim_mech() - 1);
                            }
                        }
                    }
                    match (cs.iter().min(), cs.iter().max(), ms.iter().min(), ms.iter().max()) {
                        (Some(&c0), Some(&c1), Some(&m0), Some(&m1)) => format!(
                            "cavity cutoff {}, mech cutoff {} (+{} mechanical guard levels)",
                            fmt_range(c0, c1),
                            fmt_range(m0, m1),
                            DEFAULT_MECH_GUARD
                        ),
                        _ => "basis sizing unavailable".to_string(),
                    }
                }
            };
            format!("{}: {}", col.header, what)
        })
        .collect()
}

/// Run a scenario: deterministic table, per-point errors recorded in-row.
pub fn run_scenario(s: &Scenario) -> Result<ScanResult> {
    let start = Instant::now();
    s.validate()?;
    let ncols = s.columns.len();
    let nrows = s.values.len();

    let mut witness_checks = Vec::new();
    let mut errors = Vec::new();
    let mut rows: Vec<Vec<CellValue>> = Vec::with_capacity(nrows);

    let trajectory_mode = s.axis == Axis::Time
        && nrows > 0
        && s.columns
            .iter()
            .all(|c| matches!(c.kind, ColumnKind::Engine(Engine::Lindblad)));

    if trajectory_mode {
        let col_outs: Vec<Result<(Vec<f64>, FdQfiMixed)>> =
            s.columns.par_iter().map(|col| eval_time_column(s, col)).collect();
        for (ri, &x) in s.values.iter().enumerate() {
            let mut row = Vec::with_capacity(ncols + 1);
            row.push(CellValue::Number(x));
            for (ci, out) in col_outs.iter().enumerate() {
                match out {
                    Ok((vals, _)) => row.push(CellValue::Number(vals[ri])),
                    Err(e) => row.push(CellValue::Error(error_tag(e).into())),
                }
                if ri == 0 {
                    match out {
                        Ok((_, w)) => witness_checks
                            .push(witness_note(&s.columns[ci].header, w)),
                        Err(e) => errors
                            .push(format!("column {}: {e}", s.columns[ci].header)),
                    }
                }
            }
            rows.push(row);
        }
    } else {
        let outs: Vec<CellOut> = (0..nrows * ncols)
            .into_par_iter()
            .map(|idx| {
                let (ri, ci) = (idx / ncols, idx % ncols);
                eval_cell(s, &s.columns[ci], s.values[ri], ri == 0)
            })
            .collect();
        for (ri, &x) in s.values.iter().enumerate() {
            let mut row = Vec::with_capacity(ncols + 1);
            row.push(CellValue::Number(x));
            for ci in 0..ncols {
                let out = &outs[ri * ncols + ci];
                match &out.value {
                    Ok(v) => row.push(CellValue::Number(*v)),
                    Err(e) => {
                        errors.push(format!(
                            "row {ri} ({x:e}), column {}: {e}",
                            s.columns[ci].header
                        ));
                        row.push(CellValue::Error(error_tag(e).into()));
                    }
                }
                if let Some(w) = &out.witness {
                    witness_checks.push(witness_note(&s.columns[ci].header, w));
                }
            }
            rows.push(row);
        }
    }

    let mut columns = Vec::with_capacity(ncols + 1);
    columns.push(s.axis_label.clone());
    columns.extend(s.columns.iter().map(|c| c.header.clone()));

    let uses_integrator = s.columns.iter().any(|c| {
        matches!(c.kind, ColumnKind::Engine(Engine::Lindblad | Engine::Driven))
    });
    let integrator = uses_integrator.then(|| match s.units.mode {
        UnitMode::Si => "fixed-step RK4, h = mechanical period / 400".to_string(),
        UnitMode::Dimensionless => "fixed-step RK4, h = 2 pi / 4000".to_string(),
    });

    let mut engines: Vec<String> = Vec::new();
    for c in &s.columns {
        let name = match &c.kind {
            ColumnKind::Engine(e) => e.name().to_string(),
            ColumnKind::Sql | ColumnKind::Hl => "reference".to_string(),
        };
        if !engines.contains(&name) {
            engines.push(name);
        }
    }

    let metadata = RunMetadata {
        scenario: s.name.clone(),
        units: match s.units.mode {
            UnitMode::Si => "SI".into(),
            UnitMode::Dimensionless => "dimensionless".into(),
        },
        axis: s.axis_label.clone(),
        rows: nrows,
        engines,
        truncation: truncation_notes(s),
        fd_step_policy: format!(
            "central differences at delta = 1e-6 * max(|Omega|, omega_m); delta/2 \
             consistency within {:.0e} at witness points (first row or final time)",
            tol::RICHARDSON_REL
        ),
        integrator,
        witness_checks,
        errors,
        code_version: env!("CARGO_PKG_VERSION").into(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };

    Ok(ScanResult { scenario: s.name.clone(), columns, rows, metadata })
}

/// Build and run a scenario by name, with `key=value` command-line overrides
/// applied to its base parameters.
pub fn run_scenario_by_name(cfg: &Config, name: &str, overrides: &[String]) -> Result<ScanResult> {
    let mut s = Scenario::builtin(name, cfg)?;
    for spec in overrides {
        s.apply_param(spec)?;
    }
    run_scenario(&s)
}

/// Dry-run precondition check of every builtin and declared scenario;
/// returns one summary line per scenario.
pub fn validate_config(cfg: &Config) -> Result<Vec<String>> {
    let mut lines = Vec::new();
    let mut names: Vec<String> =
        available_scenarios().iter().map(|(n, _)| n.to_string()).collect();
    for name in cfg.scenario_overrides.keys() {
        if !names.contains(name) {
            names.push(name.clone());
        }
    }
    for name in &names {
        let s = Scenario::builtin(name, cfg)?;
        s.validate()?;
        lines.push(format!(
            "{name}: ok ({} rows x {} columns, {} engine)",
            s.values.len(),
            s.columns.len(),
            s.columns
                .iter()
                .map(|c| match &c.kind {
                    ColumnKind::Engine(e) => e.name(),
                    _ => "reference",
                })
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect::<Vec<_>>()
                .join("/")
        ));
    }
    Ok(lines)
}
