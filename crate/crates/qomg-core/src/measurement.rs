//! Homodyne quadrature statistics of the cavity output and the classical
//! Fisher information they carry about the rotation rate.
//!
//! The measured observable is X_phi = (a e^{-i phi} + a' e^{i phi})/sqrt(2).
//! Its distribution is the diagonal of the reduced cavity state in the
//! quadrature basis, P(x) = <x|rho_c|x>_phi; the mechanical mode is traced
//! out in closed form by [`crate::evolution::reduced_cavity_state`], so this
//! works at laboratory-scale parameters where the mechanical displacements
//! are far beyond any representable cutoff.

use num_complex::Complex64 as C64;

use crate::error::{QomgError, Result};
use crate::evolution::{qfi_pure_numeric, reduced_cavity_state};
use crate::hilbert::{
    hermite_values, oscillator_eigenfunctions, DensityOperator, TruncatedSpace,
};
use crate::model::{derive_at, DerivedParams, InitialState, SystemParams};
use crate::tol;

/// Uniform symmetric grid for the quadrature axis.
#[derive(Clone, Copy, Debug)]
pub struct QuadratureGrid {
    pub phi: f64,
    pub x_max: f64,
    pub n_points: usize,
}

impl QuadratureGrid {
    /// Grid sized for a cavity state truncated at `dim_cavity` levels: the
    /// classical turning point of the top level plus a five-unit margin.
    pub fn auto(dim_cavity: usize, phi: f64) -> QuadratureGrid {
        QuadratureGrid {
            phi,
            x_max: (2.0 * (dim_cavity.saturating_sub(1)) as f64).sqrt() + 5.0,
            n_points: 801,
        }
    }

    pub fn xs(&self) -> Vec<f64> {
        let n = self.n_points.max(2);
        let step = 2.0 * self.x_max / (n - 1) as f64;
        (0..n).map(|i| -self.x_max + step * i as f64).collect()
    }

    fn doubled(&self) -> QuadratureGrid {
        QuadratureGrid { n_points: self.n_points * 2 - 1, ..*self }
    }
}

/// Sampled distribution with its trapezoid normalization defect.
#[derive(Clone, Debug)]
pub struct ProbabilityCurve {
    pub phi: f64,
    pub xs: Vec<f64>,
    pub ps: Vec<f64>,
    pub normalization_defect: f64,
}

impl ProbabilityCurve {
    pub fn trapezoid(&self) -> f64 {
        let mut acc = 0.0;
        for i in 1..self.xs.len() {
            acc += 0.5 * (self.ps[i] + self.ps[i - 1]) * (self.xs[i] - self.xs[i - 1]);
        }
        acc
    }
}

fn curve_from_kernel(rho: &DensityOperator, grid: &QuadratureGrid) -> ProbabilityCurve {
    let d = rho.mat.nrows();
    let xs = grid.xs();
    let mut ps = Vec::with_capacity(xs.len());
    // phase factors e^{i m phi} of the quadrature eigenvectors
    let phases: Vec<C64> = (0..d)
        .map(|m| C64::from_polar(1.0, m as f64 * grid.phi))
        .collect();
    for &x in &xs {
        let h = oscillator_eigenfunctions(x, d - 1);
        let v: Vec<C64> = (0..d).map(|m| phases[m] * h[m]).collect();
        // P = v' rho v
        let mut acc = C64::new(0.0, 0.0);
        for n in 0..d {
            let mut row = C64::new(0.0, 0.0);
            for m in 0..d {
                row += rho.mat[(n, m)] * v[m];
            }
            acc += v[n].conj() * row;
        }
        ps.push(acc.re.max(0.0));
    }
    let mut curve = ProbabilityCurve { phi: grid.phi, xs, ps, normalization_defect: 0.0 };
    curve.normalization_defect = (curve.trapezoid() - 1.0).abs();
    curve
}

const MAX_REFINE_ROUNDS: usize = 4;

fn refine_to_normalization(
    rho: &DensityOperator,
    grid: &QuadratureGrid,
) -> Result<(ProbabilityCurve, QuadratureGrid)> {
    let mut g = *grid;
    for round in 0..=MAX_REFINE_ROUNDS {
        let curve = curve_from_kernel(rho, &g);
        if curve.normalization_defect <= tol::GRID_NORMALIZATION {
            return Ok((curve, g));
        }
        if round < MAX_REFINE_ROUNDS {
            g = g.doubled();
        } else {
            return Err(QomgError::GridInadequate {
                defect: curve.normalization_defect,
                rounds: MAX_REFINE_ROUNDS,
            });
        }
    }
    unreachable!()
}

fn cavity_space(init: &InitialState) -> Result<TruncatedSpace> {
    let dim = TruncatedSpace::cutoff_for_amplitude(init.alpha.norm());
    TruncatedSpace::new(dim - 1, 1)
}

/// Quadrature distribution of the evolved reduced cavity state. The grid
/// auto-refines (doubling the point count, same extent) until the trapezoid
/// normalization closes to within 1e-6; `GridInadequate` if four doublings
/// do not get there.
pub fn quadrature_distribution(
    params: &SystemParams,
    derived: &DerivedParams,
    init: &InitialState,
    t: f64,
    grid: &QuadratureGrid,
) -> Result<ProbabilityCurve> {
    let space = cavity_space(init)?;
    let rho = reduced_cavity_state(params, derived, init, t, space)?;
    Ok(refine_to_normalization(&rho, grid)?.0)
}

/// Same distribution assembled from the textbook Hermite-polynomial form
/// P(x) = e^{-x^2}/sqrt(pi) * sum_{n n'} rho_{n n'} H_n(x) H_n'(x)
/// e^{-i(n-n')phi} / sqrt(2^{n+n'} n! n'!), with no eigenfunction recurrence.
/// Kept as an independent cross-check of [`quadrature_distribution`]; no
/// auto-refinement.
pub fn quadrature_distribution_hermite(
    params: &SystemParams,
    derived: &DerivedParams,
    init: &InitialState,
    t: f64,
    grid: &QuadratureGrid,
) -> Result<ProbabilityCurve> {
    let space = cavity_space(init)?;
    let rho = reduced_cavity_state(params, derived, init, t, space)?;
    let d = rho.mat.nrows();

    // sqrt(2^n n!) by direct accumulation
    let mut root_norm = Vec::with_capacity(d);
    let mut acc = 1.0f64;
    for n in 0..d {
        if n > 0 {
            acc *= 2.0 * n as f64;
        }
        root_norm.push(acc.sqrt());
    }
    let inv_root_pi = 1.0 / std::f64::consts::PI.sqrt();

    let xs = grid.xs();
    let mut ps = Vec::with_capacity(xs.len());
    for &x in &xs {
        let h = hermite_values(x, d - 1)?;
        let gauss = (-x * x).exp() * inv_root_pi;
        let mut p = 0.0;
        for n in 0..d {
            let hn = h[n] / root_norm[n];
            p += rho.mat[(n, n)].re * hn * hn;
            for np in 0..n {
                let hnp = h[np] / root_norm[np];
                let phase = C64::from_polar(1.0, -((n - np) as f64) * grid.phi);
                p += 2.0 * (rho.mat[(n, np)] * phase).re * hn * hnp;
            }
        }
        ps.push(gauss * p);
    }
    let mut curve = ProbabilityCurve { phi: grid.phi, xs, ps, normalization_defect: 0.0 };
    curve.normalization_defect = (curve.trapezoid() - 1.0).abs();
    Ok(curve)
}

/// Finite-difference classical Fisher information.
#[derive(Clone, Copy, Debug)]
pub struct FdCfi {
    /// Estimate at the refined step (delta/2).
    pub value: f64,
    /// Step used before halving (shared with the state-overlap policy).
    pub delta: f64,
    /// Estimate at the unrefined step.
    pub coarse: f64,
}

fn cfi_integral(center: &ProbabilityCurve, plus: &ProbabilityCurve, minus: &ProbabilityCurve, two_delta: f64) -> f64 {
    let p_max = center.ps.iter().cloned().fold(0.0, f64::max);
    let floor = tol::CFI_PROB_FLOOR * p_max;
    let n = center.xs.len();
    let mut integrand = Vec::with_capacity(n);
    for i in 0..n {
        let p = center.ps[i];
        if p <= floor {
            integrand.push(0.0);
        } else {
            let dp = (plus.ps[i] - minus.ps[i]) / two_delta;
            integrand.push(dp * dp / p);
        }
    }
    let mut acc = 0.0;
    for i in 1..n {
        acc += 0.5 * (integrand[i] + integrand[i - 1]) * (center.xs[i] - center.xs[i - 1]);
    }
    acc
}

/// CFI of the quadrature measurement by central differences of the
/// distribution over the rotation rate.
///
/// The step delta is taken from the same auto-shrinking state-overlap
/// policy as the finite-difference QFI (which is evaluated as part of the
/// step selection), then the delta vs delta/2 consistency of the CFI itself
/// is enforced. Probability below 1e-14 of the peak contributes nothing.
pub fn cfi(
    params: &SystemParams,
    derived: &DerivedParams,
    init: &InitialState,
    t: f64,
    grid: &QuadratureGrid,
    delta_omega: Option<f64>,
) -> Result<FdCfi> {
    let space = cavity_space(init)?;
    let qfi_probe = qfi_pure_numeric(params, derived, init, t, space, delta_omega)?;
    let delta = qfi_probe.delta;
    let center_omega = derived.omega_eval;

    let rho_c = reduced_cavity_state(params, derived, init, t, space)?;
    let (center_curve, grid_used) = refine_to_normalization(&rho_c, grid)?;

    let curve_at = |omega: f64| -> Result<ProbabilityCurve> {
        let d = derive_at(params, derived.units, omega)?;
        let rho = reduced_cavity_state(params, &d, init, t, space)?;
        Ok(curve_from_kernel(&rho, &grid_used))
    };

    let value_at_step = |step: f64| -> Result<f64> {
        // snap to representable points and divide by their true separation
        let xp = center_omega + step;
        let xm = center_omega - step;
        let plus = curve_at(xp)?;
        let minus = curve_at(xm)?;
        Ok(cfi_integral(&center_curve, &plus, &minus, xp - xm))
    };

    let coarse = value_at_step(delta)?;
    let fine = value_at_step(delta / 2.0)?;
    let rel = (coarse - fine).abs() / fine.abs().max(1e-300);
    if rel > tol::RICHARDSON_REL && (coarse - fine).abs() > 1e-300 {
        return Err(QomgError::StepTooLarge { rel_diff: rel, allowed: tol::RICHARDSON_REL });
    }
    Ok(FdCfi { value: fine, delta, coarse })
}

/// CFI as a function of the homodyne phase.
#[derive(Clone, Debug)]
pub struct PhaseScan {
    pub phis: Vec<f64>,
    pub cfis: Vec<f64>,
    /// Index of the best phase.
    pub best: usize,
}

pub fn cfi_phase_scan(
    params: &SystemParams,
    derived: &DerivedParams,
    init: &InitialState,
    t: f64,
    phis: &[f64],
) -> Result<PhaseScan> {
    if phis.is_empty() {
        return Err(QomgError::InvalidInput("phase scan needs at least one phase".into()));
    }
    let dim = TruncatedSpace::cutoff_for_amplitude(init.alpha.norm());
    let mut cfis = Vec::with_capacity(phis.len());
    for &phi in phis {
        let grid = QuadratureGrid::auto(dim, phi);
        cfis.push(cfi(params, derived, init, t, &grid, None)?.value);
    }
    let best = cfis
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(PhaseScan { phis: phis.to_vec(), cfis, best })
}
