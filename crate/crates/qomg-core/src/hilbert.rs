//! Truncated-Fock-space states and operators.
//!
//! Two bosonic modes: the cavity field and the mechanical oscillator. All
//! two-mode objects use cavity-major ordering, index(n, k) = n * dim_mech + k,
//! so the cavity index varies slowest. Every constructor that claims
//! normalization enforces it; cutoff adequacy is checked through Poisson tail
//! masses rather than silently truncating.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{QomgError, Result};
use crate::linalg;
use crate::tol;

/// Which single-mode factor an object lives on, or the full tensor product.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Cavity,
    Mech,
    Both,
}

/// Fock cutoffs for the two factors; retained levels are 0..=n_max.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TruncatedSpace {
    pub n_max_cavity: usize,
    pub n_max_mech: usize,
}

impl TruncatedSpace {
    pub fn new(n_max_cavity: usize, n_max_mech: usize) -> Result<TruncatedSpace> {
        if n_max_cavity < 1 || n_max_mech < 1 {
            return Err(QomgError::InvalidInput(format!(
                "cutoffs must be >= 1, got ({n_max_cavity}, {n_max_mech})"
            )));
        }
        Ok(TruncatedSpace { n_max_cavity, n_max_mech })
    }

    pub fn dim_cavity(&self) -> usize {
        self.n_max_cavity + 1
    }

    pub fn dim_mech(&self) -> usize {
        self.n_max_mech + 1
    }

    pub fn dim_total(&self) -> usize {
        self.dim_cavity() * self.dim_mech()
    }

    pub fn dim_of(&self, mode: Mode) -> usize {
        match mode {
            Mode::Cavity => self.dim_cavity(),
            Mode::Mech => self.dim_mech(),
            Mode::Both => self.dim_total(),
        }
    }

    /// Two-mode flat index, cavity-major.
    pub fn index(&self, n_cavity: usize, k_mech: usize) -> usize {
        debug_assert!(n_cavity < self.dim_cavity() && k_mech < self.dim_mech());
        n_cavity * self.dim_mech() + k_mech
    }

    /// Default cutoff for a coherent amplitude: max(30, |a|^2 + 8|a| + 10),
    /// which keeps the Poisson tail below 1e-10 for the amplitudes studied.
    pub fn cutoff_for_amplitude(amp_mag: f64) -> usize {
        let need = (amp_mag * amp_mag + 8.0 * amp_mag + 10.0).ceil() as usize;
        need.max(30)
    }
}

/// Complex amplitude vector on one factor or on the full product space.
#[derive(Clone, Debug)]
pub struct StateVector {
    pub space: TruncatedSpace,
    pub mode: Mode,
    pub amp: DVector<C64>,
}

impl StateVector {
    pub fn new(space: TruncatedSpace, mode: Mode, amp: DVector<C64>) -> Result<StateVector> {
        if amp.len() != space.dim_of(mode) {
            return Err(QomgError::DimensionMismatch(format!(
                "state length {} does not match {:?} dimension {}",
                amp.len(),
                mode,
                space.dim_of(mode)
            )));
        }
        Ok(StateVector { space, mode, amp })
    }

    pub fn norm(&self) -> f64 {
        self.amp.norm()
    }

    /// <self|other>
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        self.check_same_shape(other)?;
        Ok(self.amp.dotc(&other.amp))
    }

    pub fn check_same_shape(&self, other: &StateVector) -> Result<()> {
        if self.space != other.space || self.mode != other.mode {
            return Err(QomgError::DimensionMismatch(
                "states live on different spaces".into(),
            ));
        }
        Ok(())
    }

    /// |self><self|
    pub fn projector(&self) -> DensityOperator {
        let n = self.amp.len();
        let mat = DMatrix::from_fn(n, n, |i, j| self.amp[i] * self.amp[j].conj());
        DensityOperator { space: self.space, mode: self.mode, mat }
    }

    pub fn assert_normalized(&self) -> Result<()> {
        let defect = (self.norm() * self.norm() - 1.0).abs();
        if defect > tol::STATE_NORM {
            return Err(QomgError::InvalidInput(format!(
                "state norm^2 deviates from 1 by {defect:.3e}"
            )));
        }
        Ok(())
    }
}

/// Square complex matrix acting on one factor or on the product space.
#[derive(Clone, Debug)]
pub struct LinearOperator {
    pub space: TruncatedSpace,
    pub mode: Mode,
    pub mat: DMatrix<C64>,
}

impl LinearOperator {
    pub fn new(space: TruncatedSpace, mode: Mode, mat: DMatrix<C64>) -> Result<LinearOperator> {
        let d = space.dim_of(mode);
        if mat.nrows() != d || mat.ncols() != d {
            return Err(QomgError::DimensionMismatch(format!(
                "operator shape {}x{} does not match {:?} dimension {}",
                mat.nrows(),
                mat.ncols(),
                mode,
                d
            )));
        }
        Ok(LinearOperator { space, mode, mat })
    }

    pub fn apply(&self, v: &StateVector) -> Result<StateVector> {
        if v.space != self.space || v.mode != self.mode {
            return Err(QomgError::DimensionMismatch(
                "operator and state live on different spaces".into(),
            ));
        }
        Ok(StateVector { space: self.space, mode: self.mode, amp: &self.mat * &v.amp })
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.mat)
    }
}

/// Density operator with the validation thresholds of the crate.
#[derive(Clone, Debug)]
pub struct DensityOperator {
    pub space: TruncatedSpace,
    pub mode: Mode,
    pub mat: DMatrix<C64>,
}

impl DensityOperator {
    pub fn new(space: TruncatedSpace, mode: Mode, mat: DMatrix<C64>) -> Result<DensityOperator> {
        let d = space.dim_of(mode);
        if mat.nrows() != d || mat.ncols() != d {
            return Err(QomgError::DimensionMismatch(format!(
                "density matrix shape {}x{} does not match {:?} dimension {}",
                mat.nrows(),
                mat.ncols(),
                mode,
                d
            )));
        }
        Ok(DensityOperator { space, mode, mat })
    }

    pub fn trace(&self) -> C64 {
        (0..self.mat.nrows()).map(|i| self.mat[(i, i)]).sum()
    }

    pub fn purity(&self) -> f64 {
        (&self.mat * &self.mat)
            .diagonal()
            .iter()
            .map(|c| c.re)
            .sum()
    }

    /// Hermiticity, unit trace and eigenvalue floor checks in one place.
    pub fn validate(&self) -> Result<()> {
        let herm = linalg::hermiticity_defect(&self.mat);
        if herm > tol::HERMITICITY {
            return Err(QomgError::InvalidInput(format!(
                "density matrix Hermiticity defect {herm:.3e}"
            )));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > tol::DENSITY_TRACE || tr.im.abs() > tol::DENSITY_TRACE {
            return Err(QomgError::InvalidInput(format!(
                "density matrix trace {tr} deviates from 1"
            )));
        }
        let (vals, _) = linalg::hermitian_eigen(&self.mat)?;
        if vals[0] < tol::DENSITY_EIG_FLOOR {
            return Err(QomgError::InvalidInput(format!(
                "density matrix eigenvalue {:.3e} below floor",
                vals[0]
            )));
        }
        Ok(())
    }
}

/// Lowering operator on the requested factor: <n-1|a|n> = sqrt(n).
pub fn annihilation(space: TruncatedSpace, mode: Mode) -> LinearOperator {
    let d = space.dim_of(single(mode));
    let mut mat = DMatrix::zeros(d, d);
    for n in 1..d {
        mat[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    LinearOperator { space, mode: single(mode), mat }
}

/// Raising operator on the requested factor.
pub fn creation(space: TruncatedSpace, mode: Mode) -> LinearOperator {
    let a = annihilation(space, mode);
    LinearOperator { space, mode: a.mode, mat: a.mat.adjoint() }
}

/// Number operator on the requested factor.
pub fn number(space: TruncatedSpace, mode: Mode) -> LinearOperator {
    let d = space.dim_of(single(mode));
    let mat = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            C64::new(i as f64, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    LinearOperator { space, mode: single(mode), mat }
}

/// Identity on the requested factor (or the product space).
pub fn identity(space: TruncatedSpace, mode: Mode) -> LinearOperator {
    LinearOperator { space, mode, mat: DMatrix::identity(space.dim_of(mode), space.dim_of(mode)) }
}

fn single(mode: Mode) -> Mode {
    match mode {
        Mode::Both => panic!("single-mode operator requested on the product space"),
        m => m,
    }
}

/// Lift a single-mode operator to the product space by tensoring with the
/// identity on the other factor.
pub fn lift(op: &LinearOperator) -> LinearOperator {
    match op.mode {
        Mode::Cavity => tensor(op, &identity(op.space, Mode::Mech)).expect("shapes fixed"),
        Mode::Mech => tensor(&identity(op.space, Mode::Cavity), op).expect("shapes fixed"),
        Mode::Both => op.clone(),
    }
}

/// Kronecker product cavity (x) mech in the crate's cavity-major ordering.
pub fn tensor(cavity_op: &LinearOperator, mech_op: &LinearOperator) -> Result<LinearOperator> {
    if cavity_op.mode != Mode::Cavity || mech_op.mode != Mode::Mech {
        return Err(QomgError::DimensionMismatch(
            "tensor expects (cavity factor, mech factor)".into(),
        ));
    }
    if cavity_op.space != mech_op.space {
        return Err(QomgError::DimensionMismatch(
            "tensor factors declared on different spaces".into(),
        ));
    }
    Ok(LinearOperator {
        space: cavity_op.space,
        mode: Mode::Both,
        mat: linalg::kron(&cavity_op.mat, &mech_op.mat),
    })
}

/// Product state cavity (x) mech.
pub fn tensor_state(cavity: &StateVector, mech: &StateVector) -> Result<StateVector> {
    if cavity.mode != Mode::Cavity || mech.mode != Mode::Mech || cavity.space != mech.space {
        return Err(QomgError::DimensionMismatch(
            "tensor_state expects (cavity state, mech state) on one space".into(),
        ));
    }
    Ok(StateVector {
        space: cavity.space,
        mode: Mode::Both,
        amp: linalg::kron_vec(&cavity.amp, &mech.amp),
    })
}

/// Coherent state with the crate-default tail tolerance.
pub fn coherent_state(space: TruncatedSpace, mode: Mode, amplitude: C64) -> Result<StateVector> {
    coherent_state_with_tail_tol(space, mode, amplitude, tol::COHERENT_TAIL)
}

/// Coherent state |amplitude> on one factor.
///
/// Errors with CutoffTooSmall unless the Poisson mass beyond the cutoff is
/// below `tail_tol`; the retained amplitudes are renormalized to exactly 1.
pub fn coherent_state_with_tail_tol(
    space: TruncatedSpace,
    mode: Mode,
    amplitude: C64,
    tail_tol: f64,
) -> Result<StateVector> {
    let mode = single(mode);
    let d = space.dim_of(mode);
    let amps = coherent_amplitudes(amplitude, d);
    let mass: f64 = amps.iter().map(|c| c.norm_sqr()).sum();
    let tail = 1.0 - mass;
    if tail > tail_tol {
        return Err(QomgError::CutoffTooSmall {
            what: format!("coherent state |alpha| = {:.4} on {:?} cutoff {}", amplitude.norm(), mode, d - 1),
            tail,
            allowed: tail_tol,
        });
    }
    let scale = C64::new(1.0 / mass.sqrt(), 0.0);
    let amp = DVector::from_iterator(d, amps.into_iter().map(|c| c * scale));
    Ok(StateVector { space, mode, amp })
}

/// Unnormalized truncated coherent coefficients e^{-|a|^2/2} a^n / sqrt(n!).
pub fn coherent_amplitudes(amplitude: C64, dim: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(dim);
    let mut c = C64::new((-amplitude.norm_sqr() / 2.0).exp(), 0.0);
    for n in 0..dim {
        if n > 0 {
            c *= amplitude / C64::new((n as f64).sqrt(), 0.0);
        }
        out.push(c);
    }
    out
}

/// Physicists' Hermite polynomials H_0..H_up_to at x by the three-term
/// recurrence. Errors once values leave the safely representable range.
pub fn hermite_values(x: f64, up_to: usize) -> Result<Vec<f64>> {
    const OVERFLOW_GUARD: f64 = 1e290;
    let mut out = Vec::with_capacity(up_to + 1);
    out.push(1.0);
    if up_to == 0 {
        return Ok(out);
    }
    out.push(2.0 * x);
    for m in 1..up_to {
        let next = 2.0 * x * out[m] - 2.0 * (m as f64) * out[m - 1];
        if !next.is_finite() || next.abs() > OVERFLOW_GUARD {
            return Err(QomgError::InvalidInput(format!(
                "Hermite recurrence overflow at order {} for x = {x}",
                m + 1
            )));
        }
        out.push(next);
    }
    Ok(out)
}

/// Normalized oscillator eigenfunctions h_m(x) = H_m(x) e^{-x^2/2} /
/// (pi^{1/4} sqrt(2^m m!)), by the stable scaled recurrence. These are the
/// magnitudes of <m|x>; they stay O(1) for all m, x.
pub fn oscillator_eigenfunctions(x: f64, up_to: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(up_to + 1);
    let h0 = std::f64::consts::PI.powf(-0.25) * (-x * x / 2.0).exp();
    out.push(h0);
    if up_to == 0 {
        return out;
    }
    out.push(x * std::f64::consts::SQRT_2 * h0);
    for m in 1..up_to {
        let mf = m as f64;
        let next = x * (2.0 / (mf + 1.0)).sqrt() * out[m] - (mf / (mf + 1.0)).sqrt() * out[m - 1];
        out.push(next);
    }
    out
}

/// Quadrature eigenstate |x>_phi of X_phi = (a e^{-i phi} + a' e^{i phi})
/// / sqrt(2), amplitudes <m|x>_phi = h_m(x) e^{i m phi} (|x>_phi =
/// e^{i phi n} |x>_0). Continuum-normalized: the vector is the raw amplitude
/// list, not a unit vector.
pub fn quadrature_eigenstate(space: TruncatedSpace, x: f64, phi: f64) -> StateVector {
    let d = space.dim_cavity();
    let h = oscillator_eigenfunctions(x, d - 1);
    let amp = DVector::from_iterator(
        d,
        (0..d).map(|m| C64::from_polar(h[m], (m as f64) * phi)),
    );
    StateVector { space, mode: Mode::Cavity, amp }
}

/// Trace out the mechanical factor of a two-mode density operator.
pub fn partial_trace_mech(rho: &DensityOperator) -> Result<DensityOperator> {
    if rho.mode != Mode::Both {
        return Err(QomgError::DimensionMismatch(
            "partial trace expects a two-mode density operator".into(),
        ));
    }
    let space = rho.space;
    let (dc, dm) = (space.dim_cavity(), space.dim_mech());
    let mut out = DMatrix::zeros(dc, dc);
    for n in 0..dc {
        for np in 0..dc {
            let mut s = C64::new(0.0, 0.0);
            for k in 0..dm {
                s += rho.mat[(space.index(n, k), space.index(np, k))];
            }
            out[(n, np)] = s;
        }
    }
    Ok(DensityOperator { space, mode: Mode::Cavity, mat: out })
}

/// Partial trace over the mechanical factor of a pure two-mode state.
pub fn reduced_cavity_of_state(psi: &StateVector) -> Result<DensityOperator> {
    if psi.mode != Mode::Both {
        return Err(QomgError::DimensionMismatch(
            "reduction expects a two-mode state".into(),
        ));
    }
    let space = psi.space;
    let (dc, dm) = (space.dim_cavity(), space.dim_mech());
    let mut out = DMatrix::zeros(dc, dc);
    for n in 0..dc {
        for np in 0..dc {
            let mut s = C64::new(0.0, 0.0);
            for k in 0..dm {
                s += psi.amp[space.index(n, k)] * psi.amp[space.index(np, k)].conj();
            }
            out[(n, np)] = s;
        }
    }
    Ok(DensityOperator { space, mode: Mode::Cavity, mat: out })
}

/// Ascending eigenvalues and orthonormal eigenvectors of a Hermitian density
/// operator.
pub fn hermitian_eigendecomposition(
    rho: &DensityOperator,
) -> Result<(Vec<f64>, Vec<StateVector>)> {
    let herm = linalg::hermiticity_defect(&rho.mat);
    if herm > tol::HERMITICITY {
        return Err(QomgError::InvalidInput(format!(
            "eigendecomposition input Hermiticity defect {herm:.3e}"
        )));
    }
    let (vals, vecs) = linalg::hermitian_eigen(&rho.mat)?;
    let states = (0..vals.len())
        .map(|k| StateVector {
            space: rho.space,
            mode: rho.mode,
            amp: vecs.column(k).into_owned(),
        })
        .collect();
    Ok((vals.iter().copied().collect(), states))
}

/// |<a|b>|^2 for states, Uhlmann fidelity for density operators.
pub fn fidelity_states(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr())
}

pub fn fidelity_density(a: &DensityOperator, b: &DensityOperator) -> Result<f64> {
    if a.space != b.space || a.mode != b.mode {
        return Err(QomgError::DimensionMismatch(
            "fidelity of operators on different spaces".into(),
        ));
    }
    linalg::uhlmann_fidelity(&a.mat, &b.mat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn space() -> TruncatedSpace {
        TruncatedSpace::new(40, 8).unwrap()
    }

    #[test]
    fn commutator_is_identity_below_cutoff() {
        let sp = space();
        let a = annihilation(sp, Mode::Cavity);
        let ad = creation(sp, Mode::Cavity);
        let comm = &a.mat * &ad.mat - &ad.mat * &a.mat;
        // [a, a^dag] = 1 except in the last retained level, where truncation
        // replaces the diagonal entry with -n_max.
        let d = sp.dim_cavity();
        for i in 0..d - 1 {
            // sqrt(n+1)^2 rounds at the last bit, so allow a few ulps
            assert_relative_eq!(comm[(i, i)].re, 1.0, max_relative = 1e-13);
        }
        assert_relative_eq!(comm[(d - 1, d - 1)].re, -((d - 1) as f64), max_relative = 1e-13);
    }

    #[test]
    fn coherent_state_moments_match_poisson() {
        let sp = space();
        let alpha = C64::new(1.3, -0.7);
        let psi = coherent_state(sp, Mode::Cavity, alpha).unwrap();
        psi.assert_normalized().unwrap();
        let n = number(sp, Mode::Cavity);
        let mean = psi.inner(&n.apply(&psi).unwrap()).unwrap();
        assert_relative_eq!(mean.re, alpha.norm_sqr(), epsilon = 1e-9);
        assert!(mean.im.abs() < 1e-12);
        // a|alpha> = alpha|alpha>
        let a = annihilation(sp, Mode::Cavity);
        let eig = psi.inner(&a.apply(&psi).unwrap()).unwrap();
        assert_relative_eq!(eig.re, alpha.re, epsilon = 1e-9);
        assert_relative_eq!(eig.im, alpha.im, epsilon = 1e-9);
    }

    #[test]
    fn coherent_state_tail_guard_fires() {
        let sp = TruncatedSpace::new(5, 5).unwrap();
        let err = coherent_state(sp, Mode::Cavity, C64::new(3.0, 0.0)).unwrap_err();
        match err {
            QomgError::CutoffTooSmall { tail, allowed, .. } => {
                assert!(tail > allowed);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn tensor_ordering_is_cavity_major() {
        let sp = TruncatedSpace::new(2, 3).unwrap();
        let nc = number(sp, Mode::Cavity);
        let lifted = lift(&nc);
        for n in 0..sp.dim_cavity() {
            for k in 0..sp.dim_mech() {
                let i = sp.index(n, k);
                assert_relative_eq!(lifted.mat[(i, i)].re, n as f64, max_relative = 1e-15);
            }
        }
    }

    #[test]
    fn partial_trace_of_product_state_recovers_cavity_factor() {
        let sp = TruncatedSpace::new(30, 30).unwrap();
        let c = coherent_state(sp, Mode::Cavity, C64::new(1.0, 0.5)).unwrap();
        let m = coherent_state(sp, Mode::Mech, C64::new(-0.3, 0.9)).unwrap();
        let joint = tensor_state(&c, &m).unwrap();
        let red = reduced_cavity_of_state(&joint).unwrap();
        red.validate().unwrap();
        let direct = c.projector();
        assert!(linalg::frobenius_distance(&red.mat, &direct.mat) < 1e-12);

        let red2 = partial_trace_mech(&joint.projector()).unwrap();
        assert!(linalg::frobenius_distance(&red2.mat, &direct.mat) < 1e-12);
    }

    #[test]
    fn oscillator_eigenfunctions_match_raw_hermite_route() {
        // At moderate order both routes are exact; the scaled recurrence must
        // agree with H_m e^{-x^2/2} / sqrt(2^m m! sqrt(pi)).
        let x = 1.7;
        let up_to = 25;
        let h = hermite_values(x, up_to).unwrap();
        let scaled = oscillator_eigenfunctions(x, up_to);
        let mut two_m_mfact = 1.0f64;
        for m in 0..=up_to {
            if m > 0 {
                two_m_mfact *= 2.0 * m as f64;
            }
            let norm = (two_m_mfact * std::f64::consts::PI.sqrt()).sqrt();
            let expect = h[m] * (-x * x / 2.0).exp() / norm;
            assert_relative_eq!(scaled[m], expect, epsilon = 1e-12, max_relative = 1e-10);
        }
    }

    #[test]
    fn quadrature_eigenstates_resolve_identity_on_low_levels() {
        // Integrating |x>_phi <x|_phi dx over a wide grid reproduces the
        // identity on levels far below the cutoff.
        let sp = TruncatedSpace::new(12, 1).unwrap();
        let phi = 0.6;
        let (x_max, steps) = (8.0, 1600);
        let dx = 2.0 * x_max / steps as f64;
        let d = sp.dim_cavity();
        let mut acc = DMatrix::<C64>::zeros(d, d);
        for i in 0..=steps {
            let x = -x_max + i as f64 * dx;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            let v = quadrature_eigenstate(sp, x, phi);
            for r in 0..d {
                for c in 0..d {
                    acc[(r, c)] += v.amp[r] * v.amp[c].conj() * w * dx;
                }
            }
        }
        for r in 0..8 {
            for c in 0..8 {
                let expect = if r == c { 1.0 } else { 0.0 };
                assert!((acc[(r, c)].re - expect).abs() < 1e-8, "({r},{c}) re {}", acc[(r, c)].re);
                assert!(acc[(r, c)].im.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn cutoff_rule_floors_at_thirty() {
        assert_eq!(TruncatedSpace::cutoff_for_amplitude(0.0), 30);
        assert_eq!(TruncatedSpace::cutoff_for_amplitude(1.0), 30);
        let big = TruncatedSpace::cutoff_for_amplitude(4.0);
        assert_eq!(big, (16.0f64 + 32.0 + 10.0).ceil() as usize);
    }
}
