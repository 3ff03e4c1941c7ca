//! Dense complex linear-algebra kernels for the beamforming solver.
//!
//! Two primitives are exposed: the dominant generalized eigenvector of a
//! Hermitian / Hermitian-positive-definite matrix pair, and a real linear
//! solve with a reciprocal-condition estimate. Problem sizes here are tiny
//! (at most the antenna count), so everything is direct and dense.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;
use thiserror::Error;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Relative Frobenius tolerance for accepting a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Reciprocal-condition threshold below which a solve is declared singular.
pub const RCOND_SINGULAR: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("matrix dimensions do not match: {0}")]
    DimensionMismatch(String),
    #[error("matrix deviates from Hermitian beyond tolerance (relative deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("matrix is singular or near-singular (rcond {rcond:.3e})")]
    Singular { rcond: f64 },
}

/// A pair (X, Y) with X Hermitian and Y Hermitian positive definite,
/// the operands of a generalized Rayleigh quotient vᴴXv / vᴴYv.
///
/// Inputs are symmetrized as (X + Xᴴ)/2 on construction to absorb round-off;
/// deviation beyond [`HERMITIAN_TOL`] (relative, Frobenius) is rejected.
#[derive(Debug, Clone)]
pub struct HermitianPair {
    x: CMat,
    y: CMat,
}

impl HermitianPair {
    pub fn new(x: CMat, y: CMat) -> Result<Self, NumericsError> {
        if !x.is_square() || !y.is_square() || x.nrows() != y.nrows() {
            return Err(NumericsError::DimensionMismatch(format!(
                "X is {}x{}, Y is {}x{}",
                x.nrows(),
                x.ncols(),
                y.nrows(),
                y.ncols()
            )));
        }
        let x = symmetrize(x)?;
        let y = symmetrize(y)?;
        Ok(Self { x, y })
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn x(&self) -> &CMat {
        &self.x
    }

    pub fn y(&self) -> &CMat {
        &self.y
    }
}

/// Replace `m` by its Hermitian part, rejecting matrices whose skew part is
/// too large to be round-off.
fn symmetrize(m: CMat) -> Result<CMat, NumericsError> {
    let herm = (&m + m.adjoint()).scale(0.5);
    let denom = herm.norm().max(1.0);
    let dev = (&m - &herm).norm() / denom;
    if dev > HERMITIAN_TOL {
        return Err(NumericsError::NotHermitian(dev));
    }
    Ok(herm)
}

/// Dominant generalized eigenvector result: unit-norm, phase-canonicalized
/// vector and the attained (maximal) Rayleigh quotient.
#[derive(Debug, Clone)]
pub struct EigResult {
    pub vector: CVec,
    pub value: f64,
}

/// Maximizer of the generalized Rayleigh quotient vᴴXv / vᴴYv.
///
/// Reduces via the factorization Y = LLᴴ to a standard Hermitian eigenproblem
/// on L⁻¹ X L⁻ᴴ, takes the top eigenvector u, and maps it back as L⁻ᴴ u.
/// The returned vector is normalized and phase-canonicalized.
pub fn dominant_gen_eigvec(pair: &HermitianPair) -> Result<EigResult, NumericsError> {
    let chol: Cholesky<Complex64, Dyn> =
        Cholesky::new(pair.y.clone()).ok_or(NumericsError::NotPositiveDefinite)?;
    let l = chol.l();
    // The complex factorization happily takes sqrt of a negative pivot, so
    // positive definiteness must be checked on the diagonal explicitly.
    for i in 0..l.nrows() {
        let pivot = l[(i, i)];
        if !(pivot.re > 0.0) || pivot.im.abs() > 1e-12 * pivot.re.abs().max(1.0) {
            return Err(NumericsError::NotPositiveDefinite);
        }
    }

    // S = L⁻¹ X L⁻ᴴ, computed by two triangular solves.
    let t = l
        .solve_lower_triangular(&pair.x)
        .ok_or(NumericsError::NotPositiveDefinite)?;
    let s = l
        .solve_lower_triangular(&t.adjoint())
        .ok_or(NumericsError::NotPositiveDefinite)?
        .adjoint();
    let s = (&s + s.adjoint()).scale(0.5);

    let eig = s.symmetric_eigen();
    let (top, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });
    let u = eig.eigenvectors.column(top).into_owned();

    // Map back: v = L⁻ᴴ u.
    let mut v = l
        .adjoint()
        .solve_upper_triangular(&u)
        .ok_or(NumericsError::NotPositiveDefinite)?;
    let norm = v.norm();
    v.unscale_mut(norm);
    canonicalize_phase(&mut v);

    Ok(EigResult {
        vector: v,
        value: eig.eigenvalues[top],
    })
}

/// Rotate a complex vector by a unit-modulus scalar so that its
/// largest-magnitude entry (lowest index on ties) is real and nonnegative.
pub fn canonicalize_phase(v: &mut CVec) {
    let mut idx = 0;
    let mut best = 0.0f64;
    for (i, z) in v.iter().enumerate() {
        let m = z.norm();
        if m > best {
            best = m;
            idx = i;
        }
    }
    if best > 0.0 {
        let phase = v[idx] / Complex64::from(best);
        let rot = phase.conj();
        for z in v.iter_mut() {
            *z *= rot;
        }
    }
}

/// Evaluate the generalized Rayleigh quotient vᴴXv / vᴴYv.
pub fn rayleigh_quotient(pair: &HermitianPair, v: &CVec) -> f64 {
    let num = (v.adjoint() * &pair.x * v)[(0, 0)].re;
    let den = (v.adjoint() * &pair.y * v)[(0, 0)].re;
    num / den
}

/// Solution of a real linear system with a reciprocal-condition estimate.
#[derive(Debug, Clone)]
pub struct LinearSolution {
    pub x: DVector<f64>,
    pub rcond: f64,
}

/// Solve Ax = b for real square A via LU, reporting 1/(‖A‖₁·‖A⁻¹‖₁).
///
/// Declares the system [`NumericsError::Singular`] when the factorization
/// fails or the reciprocal condition falls below [`RCOND_SINGULAR`].
pub fn solve_linear(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<LinearSolution, NumericsError> {
    if !a.is_square() || a.nrows() != b.len() {
        return Err(NumericsError::DimensionMismatch(format!(
            "A is {}x{}, b has length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let lu = a.clone().lu();
    let inv = lu
        .try_inverse()
        .ok_or(NumericsError::Singular { rcond: 0.0 })?;
    let rcond = 1.0 / (norm_1(a) * norm_1(&inv)).max(f64::MIN_POSITIVE);
    if rcond < RCOND_SINGULAR {
        return Err(NumericsError::Singular { rcond });
    }
    Ok(LinearSolution { x: &inv * b, rcond })
}

fn norm_1(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
