//! Closed-form quantum Fisher information for the rotation rate.
//!
//! For the driving-free Hamiltonian the unitary at time t is known in closed
//! form, and the estimation generator i U'(dU/dOmega) collapses to a
//! polynomial in the photon number operator n plus linear mechanical terms:
//!
//!   Gen = -(Omega / 2 omega_m_tilde^3) * [ R1 n^4 + R2 n^3
//!         + (R3 b + R3* b' + R4) n^2 + (R5 b + R5* b' + R6) n
//!         + R7 b'b + R8 b + R8* b' ]
//!
//! The QFI of the evolved product state |alpha> x |beta> is 4 Var(Gen), which
//! reduces to Poisson moments of |alpha|^2; [`moment_table`] carries the five
//! variances and the non-vanishing symmetrized covariances, and
//! [`qfi_closed_form`] assembles them. [`generator_matrix`] builds Gen as an
//! explicit matrix so the polynomial reductions can be cross-checked by brute
//! force on a truncated space.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{QomgError, Result};
use crate::hilbert::{LinearOperator, Mode, TruncatedSpace};
use crate::model::DerivedParams;

/// Coefficients of the estimation generator at fixed time. Units are mixed
/// (each multiplies a different operator monomial); the combination
/// (Omega^2/omega_m_tilde^6) * quadratic-in-R has units of time squared.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorCoefficients {
    pub r1: f64,
    pub r2: f64,
    pub r3: C64,
    pub r4: f64,
    pub r5: C64,
    pub r6: f64,
    pub r7: f64,
    pub r8: C64,
    /// omega_m_tilde * t.
    pub theta: f64,
}

/// Generator coefficients at evolution time t.
///
/// Writing A = g0 - G_NL, B = G_NL, theta = omega_m_tilde t,
/// C1 = theta - sin(theta), C2 = C1 + i(1 - cos(theta)), and
/// chi_w = 4 omega_m_tilde^2 (chi/Omega^2) (finite at every Omega):
///
///   R1 = 6 B^2 C1 / w        R2 = 12 A B C1 / w
///   R3 = B (3 C2 - theta)    R4 = (2 C1/w)(3A^2 - 6 B chi + B chi_w)
///   R5 = A (3 C2 - theta)    R6 = (2 A C1/w)(chi_w - 6 chi)
///   R7 = 2 w^2 t             R8 = chi_w (C2 - theta) - chi (3 C2 - theta)
///
/// with w = omega_m_tilde. All eight vanish at t = 0.
pub fn coefficients(derived: &DerivedParams, t: f64) -> GeneratorCoefficients {
    let w = derived.omega_m_tilde;
    let a = derived.g0 - derived.g_nl;
    let b = derived.g_nl;
    let chi = derived.chi;
    let chi_w = 4.0 * w * w * derived.chi_over_omega_sq;

    let theta = w * t;
    let (sin_t, cos_t) = theta.sin_cos();
    let c1 = theta - sin_t;
    let c2 = C64::new(c1, 1.0 - cos_t);
    let three_c2_minus_theta = 3.0 * c2 - C64::new(theta, 0.0);
    let c2_minus_theta = c2 - C64::new(theta, 0.0);

    GeneratorCoefficients {
        r1: 6.0 * b * b * c1 / w,
        r2: 12.0 * a * b * c1 / w,
        r3: three_c2_minus_theta * b,
        r4: (2.0 * c1 / w) * (3.0 * a * a - 6.0 * b * chi + b * chi_w),
        r5: three_c2_minus_theta * a,
        r6: (2.0 * a * c1 / w) * (chi_w - 6.0 * chi),
        r7: 2.0 * w * w * t,
        r8: c2_minus_theta * chi_w - three_c2_minus_theta * chi,
        theta,
    }
}

/// Means, variances, and symmetrized covariances of the five generator
/// pieces in the product state |alpha> x |beta|:
///
///   G1 = R1 n^4, G2 = R2 n^3, G3 = (R3 b + R3* b' + R4) n^2,
///   G4 = (R5 b + R5* b' + R6) n, G5 = R7 b'b + R8 b + R8* b'.
///
/// Valid for real nonnegative beta (the linear mechanical means close over
/// Poisson moments only in that case).
#[derive(Clone, Copy, Debug)]
pub struct MomentTable {
    pub mean: [f64; 5],
    pub var: [f64; 5],
    /// Symmetrized covariances; index [j][k] for j < k, zero elsewhere.
    /// c15 and c25 vanish identically.
    pub cov: [[f64; 5]; 5],
}

impl MomentTable {
    /// Sum var_i + 2 sum_{j<k} cov_jk = Var(G1 + ... + G5).
    pub fn total_variance(&self) -> f64 {
        let mut s: f64 = self.var.iter().sum();
        for j in 0..5 {
            for k in (j + 1)..5 {
                s += 2.0 * self.cov[j][k];
            }
        }
        s
    }
}

/// Closed-form moment table. N = |alpha|^2 and s = beta (which must be real
/// and nonnegative); only Poisson number moments of the cavity and first
/// mechanical moments enter.
pub fn moment_table(
    derived: &DerivedParams,
    alpha: C64,
    beta: C64,
    t: f64,
) -> Result<MomentTable> {
    if beta.im != 0.0 || beta.re < 0.0 {
        return Err(QomgError::BetaNotRealNonneg { re: beta.re, im: beta.im });
    }
    let co = coefficients(derived, t);
    let n = alpha.norm_sqr();
    let s = beta.re;
    let m = s * s;

    // Central Poisson moments enter through these power sums.
    let n2 = n * n;
    let n3 = n2 * n;
    let n4 = n3 * n;
    let n5 = n4 * n;
    let n6 = n5 * n;
    let n7 = n6 * n;

    let r1 = co.r1;
    let r2 = co.r2;
    let r7 = co.r7;
    let s3 = 2.0 * co.r3.re * s + co.r4;
    let s4 = 2.0 * co.r5.re * s + co.r6;

    // raw Poisson moments <n^k>
    let p1 = n;
    let p2 = n2 + n;
    let p3 = n3 + 3.0 * n2 + n;
    let p4 = n4 + 6.0 * n3 + 7.0 * n2 + n;

    let mean = [
        r1 * p4,
        r2 * p3,
        s3 * p2,
        s4 * p1,
        r7 * m + 2.0 * co.r8.re * s,
    ];

    let var = [
        r1 * r1 * (16.0 * n7 + 216.0 * n6 + 964.0 * n5 + 1640.0 * n4 + 952.0 * n3 + 126.0 * n2 + n),
        r2 * r2 * (9.0 * n5 + 54.0 * n4 + 84.0 * n3 + 30.0 * n2 + n),
        s3 * s3 * (4.0 * n3 + 6.0 * n2 + n) + co.r3.norm_sqr() * (n4 + 6.0 * n3 + 7.0 * n2 + n),
        s4 * s4 * n + co.r5.norm_sqr() * (n2 + n),
        r7 * r7 * m + 2.0 * r7 * co.r8.re * s + co.r8.norm_sqr(),
    ];

    let mut cov = [[0.0; 5]; 5];
    cov[0][1] = r1 * r2 * (12.0 * n6 + 114.0 * n5 + 322.0 * n4 + 291.0 * n3 + 62.0 * n2 + n);
    cov[0][2] = r1 * s3 * (8.0 * n5 + 52.0 * n4 + 82.0 * n3 + 30.0 * n2 + n);
    cov[0][3] = r1 * s4 * (4.0 * n4 + 18.0 * n3 + 14.0 * n2 + n);
    cov[1][2] = r2 * s3 * (6.0 * n4 + 21.0 * n3 + 14.0 * n2 + n);
    cov[1][3] = r2 * s4 * (3.0 * n3 + 6.0 * n2 + n);
    cov[2][3] = s3 * s4 * (2.0 * n2 + n)
        + (co.r3 * co.r5.conj()).re * (n3 + 3.0 * n2 + n);
    cov[2][4] = (co.r3.re * r7 * s + (co.r3 * co.r8.conj()).re) * (n2 + n);
    cov[3][4] = n * (co.r5.re * r7 * s + (co.r5 * co.r8.conj()).re);
    // cov[0][4] and cov[1][4] vanish: G1, G2 are cavity-only and G5 is
    // mechanics-only with zero mean subtracted.

    Ok(MomentTable { mean, var, cov })
}

/// Closed-form QFI: (Omega^2 / omega_m_tilde^6) * Var(G1 + ... + G5).
/// Exactly zero at Omega = 0 (the generator carries an overall factor Omega).
pub fn qfi_closed_form(
    derived: &DerivedParams,
    alpha: C64,
    beta: C64,
    t: f64,
) -> Result<f64> {
    let table = moment_table(derived, alpha, beta, t)?;
    let omega = derived.omega_eval;
    let w = derived.omega_m_tilde;
    let w6 = w.powi(6);
    Ok(omega * omega / w6 * table.total_variance())
}

/// The estimation generator as an explicit matrix (prefactor included), for
/// brute-force cross-checks of the moment reductions.
pub fn generator_matrix(
    derived: &DerivedParams,
    t: f64,
    space: TruncatedSpace,
) -> Result<LinearOperator> {
    let co = coefficients(derived, t);
    let (dc, dm) = (space.dim_cavity(), space.dim_mech());
    let d = space.dim_total();
    let mut mat = DMatrix::<C64>::zeros(d, d);
    let pref = -derived.omega_eval / (2.0 * derived.omega_m_tilde.powi(3));

    for n in 0..dc {
        let nf = n as f64;
        let n2 = nf * nf;
        let poly_diag = co.r1 * n2 * n2 + co.r2 * n2 * nf;
        // b-linear coefficient for this photon number: R3 n^2 + R5 n + R8
        let lin = co.r3 * n2 + co.r5 * nf + co.r8;
        let scalar = co.r4 * n2 + co.r6 * nf;
        for k in 0..dm {
            let i = space.index(n, k);
            mat[(i, i)] = C64::new(pref * (poly_diag + scalar + co.r7 * k as f64), 0.0);
            if k + 1 < dm {
                // <n,k| c b |n,k+1> = c sqrt(k+1); conjugate above the diagonal
                let amp = ((k + 1) as f64).sqrt() * pref;
                let j = space.index(n, k + 1);
                mat[(i, j)] += lin * amp;
                mat[(j, i)] += lin.conj() * amp;
            }
        }
    }
    LinearOperator::new(space, Mode::Both, mat)
}
