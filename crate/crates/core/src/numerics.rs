//! Dense complex-Hermitian linear algebra primitives shared by all other
//! modules: validated Hermitian storage, matrix square roots, log-determinants
//! and positive-definite solves.
//!
//! Factorizations are delegated to `nalgebra` (Cholesky, Hermitian
//! eigendecomposition); this module owns the validation, clamping, and
//! fallback policies.

use nalgebra::{Cholesky, Complex, ComplexField, DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{real, to_f64, Real};

/// Dense complex matrix with no structural invariants beyond its shape.
pub type ComplexMatrix<T> = DMatrix<Complex<T>>;

/// Construction tolerance for the Hermitian symmetry check.
///
/// 1e-12 absolute, widened to a few ulps for scalar types whose epsilon is
/// coarser than that (f32).
fn hermitian_tolerance<T: Real>() -> T {
    let eps: T = T::default_epsilon() * real(8.0);
    real::<T>(1e-12).max(eps)
}

/// Relative eigenvalue floor below which a matrix stops counting as PSD.
fn psd_tolerance<T: Real>() -> T {
    let eps: T = T::default_epsilon() * real(64.0);
    real::<T>(1e-10).max(eps)
}

/// Complex Hermitian matrix in dense row-major storage.
///
/// The stored matrix is exactly equal to its conjugate transpose: inputs that
/// pass the construction tolerance are symmetrized, so downstream consumers
/// never see asymmetry at the ulp level.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix<T: Real> {
    m: ComplexMatrix<T>,
}

impl<T: Real> HermitianMatrix<T> {
    /// Validates that `m` is square and Hermitian within tolerance, then
    /// stores the symmetrized matrix `(m + m^H) / 2`.
    pub fn new(m: ComplexMatrix<T>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "Hermitian matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let tol = hermitian_tolerance::<T>();
        let mut max_dev = T::zero();
        for i in 0..m.nrows() {
            for j in i..m.ncols() {
                let dev = (m[(i, j)] - m[(j, i)].conj()).modulus();
                max_dev = max_dev.max(dev);
            }
        }
        if max_dev > tol {
            return Err(Error::NotHermitian {
                max_dev: to_f64(max_dev),
            });
        }
        Ok(Self::symmetrize(m))
    }

    /// Builds from a generator over the upper triangle; the lower triangle is
    /// mirrored by conjugation, so the result is Hermitian by construction.
    pub fn from_upper_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut m = ComplexMatrix::<T>::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = Complex::new(f(i, i).re, T::zero());
            for j in (i + 1)..dim {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v.conj();
            }
        }
        Self { m }
    }

    /// `X X^H`, Hermitian nonnegative definite by construction.
    pub fn gram(x: &ComplexMatrix<T>) -> Self {
        let g = x * x.adjoint();
        Self::symmetrize(g)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: ComplexMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            m: ComplexMatrix::zeros(dim, dim),
        }
    }

    /// `c * I`.
    pub fn scaled_identity(dim: usize, c: T) -> Self {
        Self {
            m: ComplexMatrix::identity(dim, dim) * Complex::new(c, T::zero()),
        }
    }

    /// Diagonal matrix from real entries.
    pub fn from_real_diagonal(diag: &[T]) -> Self {
        let mut m = ComplexMatrix::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex::new(d, T::zero());
        }
        Self { m }
    }

    /// Wraps a matrix already known to be exactly Hermitian (real-weighted
    /// sums of stored Hermitian matrices preserve the invariant bitwise).
    pub(crate) fn from_hermitian_unchecked(m: ComplexMatrix<T>) -> Self {
        Self { m }
    }

    fn symmetrize(m: ComplexMatrix<T>) -> Self {
        let half = Complex::new(real::<T>(0.5), T::zero());
        let sym = (&m + m.adjoint()) * half;
        Self { m: sym }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.m
    }

    pub fn into_matrix(self) -> ComplexMatrix<T> {
        self.m
    }

    /// Real trace.
    pub fn trace(&self) -> T {
        self.m.diagonal().iter().map(|c| c.re).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> T {
        self.m.norm()
    }

    /// `self * c` for real `c`.
    pub fn scaled(&self, c: T) -> Self {
        Self {
            m: &self.m * Complex::new(c, T::zero()),
        }
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<T> {
        let eig = SymmetricEigen::new(self.m.clone());
        let mut vals: Vec<T> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).expect("eigenvalues are ordered reals"));
        vals
    }

    /// Checks the PSD invariant: smallest eigenvalue no further below zero
    /// than the relative floor allows.
    pub fn check_psd(&self) -> Result<()> {
        if self.dim() == 0 {
            return Ok(());
        }
        let vals = self.eigenvalues();
        let min = vals[0];
        let max = *vals.last().unwrap();
        if min < -psd_tolerance::<T>() * T::one().max(max) {
            return Err(Error::NotPsd {
                min_eig: to_f64(min),
            });
        }
        Ok(())
    }
}

/// `sum_i w_i * terms_i + shift * I`, the resolvent-argument shape used by
/// every fixed-point equation.
pub fn weighted_sum<'a, T: Real>(
    dim: usize,
    terms: impl IntoIterator<Item = (T, &'a HermitianMatrix<T>)>,
    shift: T,
) -> Result<HermitianMatrix<T>> {
    let mut acc = ComplexMatrix::<T>::identity(dim, dim) * Complex::new(shift, T::zero());
    for (w, r) in terms {
        if r.dim() != dim {
            return Err(Error::DimensionMismatch(format!(
                "weighted_sum term is {}x{}, expected {dim}x{dim}",
                r.dim(),
                r.dim()
            )));
        }
        acc += r.matrix() * Complex::new(w, T::zero());
    }
    Ok(HermitianMatrix { m: acc })
}

/// Real trace of the product of two Hermitian matrices.
///
/// Uses tr(AB) = sum_ij A_ij conj(B_ij); the result is real when both
/// operands are Hermitian.
pub fn trace_product<T: Real>(a: &HermitianMatrix<T>, b: &HermitianMatrix<T>) -> T {
    trace_product_raw(&a.m, &b.m)
}

/// [`trace_product`] on raw buffers that are Hermitian by construction.
pub(crate) fn trace_product_raw<T: Real>(a: &ComplexMatrix<T>, b: &ComplexMatrix<T>) -> T {
    debug_assert_eq!(a.nrows(), b.nrows());
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x.re * y.re + x.im * y.im;
    }
    acc
}

/// Hermitian PSD square root via eigendecomposition.
///
/// Eigenvalues in `[-1e-10 * max(1, lambda_max), 0)` are clamped to zero;
/// anything further below zero is an error.
pub fn hermitian_sqrt<T: Real>(m: &HermitianMatrix<T>) -> Result<HermitianMatrix<T>> {
    if m.dim() == 0 {
        return Ok(m.clone());
    }
    let eig = SymmetricEigen::new(m.m.clone());
    let max = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(T::zero(), |a, b| a.max(b));
    let floor = -psd_tolerance::<T>() * T::one().max(max);
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < floor {
            return Err(Error::NotPsd {
                min_eig: to_f64(*v),
            });
        }
        *v = v.max(T::zero()).sqrt();
    }
    let dim = m.dim();
    let mut scaled = eig.eigenvectors.clone();
    for j in 0..dim {
        let s = Complex::new(roots[j], T::zero());
        scaled.column_mut(j).scale_mut(s.re);
    }
    let s = &scaled * eig.eigenvectors.adjoint();
    Ok(HermitianMatrix::symmetrize(s))
}

/// Natural log of the determinant of a Hermitian positive-definite matrix,
/// computed from a Cholesky factorization (never forming the determinant).
///
/// On pivot failure the eigendecomposition is tried before reporting NotPd,
/// which rescues nearly singular but still positive spectra.
pub fn logdet_hpd<T: Real>(m: &HermitianMatrix<T>) -> Result<T> {
    match Cholesky::new(m.m.clone()) {
        Some(chol) => {
            let acc = chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|c| c.re.ln())
                .sum::<T>();
            Ok(acc * real(2.0))
        }
        None => {
            let vals = SymmetricEigen::new(m.m.clone()).eigenvalues;
            if vals.iter().any(|&v| v <= T::zero()) {
                return Err(Error::not_pd("log-determinant"));
            }
            Ok(vals.iter().map(|&v| v.ln()).sum())
        }
    }
}

/// Solves `m * X = rhs` for Hermitian positive-definite `m` via Cholesky.
pub fn solve_hpd<T: Real>(
    m: &HermitianMatrix<T>,
    rhs: &ComplexMatrix<T>,
) -> Result<ComplexMatrix<T>> {
    if rhs.nrows() != m.dim() {
        return Err(Error::DimensionMismatch(format!(
            "solve_hpd rhs has {} rows, matrix is {}x{}",
            rhs.nrows(),
            m.dim(),
            m.dim()
        )));
    }
    let chol = Cholesky::new(m.m.clone()).ok_or_else(|| Error::not_pd("solve"))?;
    Ok(chol.solve(rhs))
}

/// Inverse of a Hermitian positive-definite matrix via Cholesky.
pub fn inverse_hpd<T: Real>(m: &HermitianMatrix<T>) -> Result<HermitianMatrix<T>> {
    let chol = Cholesky::new(m.m.clone()).ok_or_else(|| Error::not_pd("inverse"))?;
    Ok(HermitianMatrix::symmetrize(chol.inverse()))
}
