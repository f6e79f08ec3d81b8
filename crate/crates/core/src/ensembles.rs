//! Reproducible sampling of Haar semi-unitary precoders and correlated
//! complex Gaussian channel matrices.
//!
//! All sampling is driven by [`RngStream`]: a counter-based ChaCha generator
//! keyed by `(seed, stream_id)`, so replications are order-independent and
//! identical streams reproduce bit-identical draws on every platform.

use nalgebra::{Complex, ComplexField, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::{hermitian_sqrt, ComplexMatrix, HermitianMatrix};
use crate::scalar::{real, to_f64, Real};

/// Independent, replayable random stream: same `(seed, stream_id)` always
/// produces the same sequence, distinct stream ids give independent streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Instantiates the generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// `n_cols` orthonormal columns of a Haar-distributed unitary matrix.
///
/// Invariant: `W^H W = I` within 1e-10 entrywise, checked on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiUnitaryMatrix<T: Real> {
    w: ComplexMatrix<T>,
}

impl<T: Real> SemiUnitaryMatrix<T> {
    pub fn new(w: ComplexMatrix<T>) -> Result<Self> {
        if w.ncols() > w.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "semi-unitary matrix cannot be wide: {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        let gram = w.adjoint() * &w;
        let tol = real::<T>(1e-10).max(T::default_epsilon() * real(512.0));
        let mut max_dev = T::zero();
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let target = if i == j {
                    Complex::new(T::one(), T::zero())
                } else {
                    Complex::new(T::zero(), T::zero())
                };
                max_dev = max_dev.max((gram[(i, j)] - target).modulus());
            }
        }
        if max_dev > tol {
            return Err(Error::DimensionMismatch(format!(
                "columns not orthonormal (max deviation {:.3e})",
                to_f64(max_dev)
            )));
        }
        Ok(Self { w })
    }

    pub fn rows(&self) -> usize {
        self.w.nrows()
    }

    pub fn cols(&self) -> usize {
        self.w.ncols()
    }

    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.w
    }
}

/// One draw of a circularly-symmetric complex Gaussian with per-entry
/// variance `variance` (real and imaginary parts carry half each).
#[inline]
fn complex_gaussian<T: Real>(rng: &mut ChaCha8Rng, std_each: T) -> Complex<T>
where
    StandardNormal: Distribution<T>,
{
    let re: T = rng.sample(StandardNormal);
    let im: T = rng.sample(StandardNormal);
    Complex::new(re * std_each, im * std_each)
}

/// Matrix with i.i.d. CN(0, `variance`) entries, drawn in column-major order.
pub fn sample_gaussian_matrix<T: Real>(
    rows: usize,
    cols: usize,
    variance: T,
    rng: &mut ChaCha8Rng,
) -> ComplexMatrix<T>
where
    StandardNormal: Distribution<T>,
{
    assert!(variance > T::zero(), "entry variance must be positive");
    let std_each = (variance * real(0.5)).sqrt();
    ComplexMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng, std_each))
}

/// Samples `n_cols` columns of an `n_rows x n_rows` Haar unitary via the
/// polar construction `W = X (X^H X)^{-1/2}` applied to a rectangular
/// standard Gaussian block.
///
/// Resamples internally up to 3 times if the Gram matrix is numerically
/// singular, then fails with `SingularGram`.
pub fn sample_haar_columns<T: Real>(
    n_rows: usize,
    n_cols: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SemiUnitaryMatrix<T>>
where
    StandardNormal: Distribution<T>,
{
    if n_cols > n_rows || n_cols == 0 {
        return Err(Error::DimensionMismatch(format!(
            "need 1 <= n_cols <= n_rows, got {n_rows}x{n_cols}"
        )));
    }
    const ATTEMPTS: usize = 3;
    let floor = real::<T>(1e-12).max(T::default_epsilon() * real(64.0));
    for _ in 0..ATTEMPTS {
        let x = sample_gaussian_matrix(n_rows, n_cols, T::one(), rng);
        let gram = x.adjoint() * &x;
        let eig = SymmetricEigen::new(gram);
        let max = eig
            .eigenvalues
            .iter()
            .copied()
            .fold(T::zero(), |a, b| a.max(b));
        let min = eig.eigenvalues.iter().copied().fold(max, |a, b| a.min(b));
        if min <= floor * max.max(T::one()) {
            continue;
        }
        // X U diag(1/sqrt(lambda)) U^H
        let mut scaled = eig.eigenvectors.clone();
        for j in 0..n_cols {
            let inv_root = T::one() / eig.eigenvalues[j].sqrt();
            scaled.column_mut(j).scale_mut(inv_root);
        }
        let w = &x * (scaled * eig.eigenvectors.adjoint());
        return SemiUnitaryMatrix::new(w);
    }
    Err(Error::SingularGram { attempts: ATTEMPTS })
}

/// Samples a fading channel whose `j`th column is `R_j^{1/2} z_j` with
/// `z_j` i.i.d. CN(0, 1/N); columns are drawn in ascending order.
pub fn sample_channel_fading<T: Real>(
    correlations: &[HermitianMatrix<T>],
    rng: &mut ChaCha8Rng,
) -> Result<ComplexMatrix<T>>
where
    StandardNormal: Distribution<T>,
{
    let sqrts = correlations
        .iter()
        .map(hermitian_sqrt)
        .collect::<Result<Vec<_>>>()?;
    sample_channel_from_sqrts(&sqrts, rng)
}

/// As [`sample_channel_fading`] but with the correlation square roots
/// precomputed (the per-replication hot path).
pub fn sample_channel_from_sqrts<T: Real>(
    sqrts: &[HermitianMatrix<T>],
    rng: &mut ChaCha8Rng,
) -> Result<ComplexMatrix<T>>
where
    StandardNormal: Distribution<T>,
{
    let n = sqrts.first().map(|s| s.dim()).unwrap_or(0);
    if sqrts.iter().any(|s| s.dim() != n) || n == 0 {
        return Err(Error::DimensionMismatch(
            "column correlation matrices must share one positive dimension".into(),
        ));
    }
    let std_each = (real::<T>(0.5) / real::<T>(n as f64)).sqrt();
    let mut h = ComplexMatrix::<T>::zeros(n, sqrts.len());
    for (j, sqrt_j) in sqrts.iter().enumerate() {
        let z = ComplexMatrix::from_fn(n, 1, |_, _| complex_gaussian(rng, std_each));
        h.column_mut(j).copy_from(&(sqrt_j.matrix() * z));
    }
    Ok(h)
}

/// Samples the Kronecker channel `R^{1/2} Z T^{1/2}` with `Z` i.i.d.
/// CN(0, 1/N), `N` the receive dimension.
pub fn sample_kronecker_channel<T: Real>(
    r: &HermitianMatrix<T>,
    t: &HermitianMatrix<T>,
    rng: &mut ChaCha8Rng,
) -> Result<ComplexMatrix<T>>
where
    StandardNormal: Distribution<T>,
{
    let r_sqrt = hermitian_sqrt(r)?;
    let t_sqrt = hermitian_sqrt(t)?;
    sample_kronecker_from_sqrts(&r_sqrt, &t_sqrt, rng)
}

/// As [`sample_kronecker_channel`] with precomputed square roots.
pub fn sample_kronecker_from_sqrts<T: Real>(
    r_sqrt: &HermitianMatrix<T>,
    t_sqrt: &HermitianMatrix<T>,
    rng: &mut ChaCha8Rng,
) -> Result<ComplexMatrix<T>>
where
    StandardNormal: Distribution<T>,
{
    let n = r_sqrt.dim();
    let z = sample_gaussian_matrix(n, t_sqrt.dim(), T::one() / real(n as f64), rng);
    Ok(r_sqrt.matrix() * z * t_sqrt.matrix())
}

/// Reduction of a Kronecker channel to per-column correlations:
/// diagonalizing the transmit correlation `t` leaves column `j` with
/// covariance `path_loss * t_j * r`, `t_j` the `j`th eigenvalue of `t`.
pub fn kronecker_column_scales<T: Real>(t: &HermitianMatrix<T>, path_loss: T) -> Result<Vec<T>> {
    t.check_psd()?;
    let mut scales = t.eigenvalues();
    scales.reverse(); // descending, a fixed documented order
    for s in scales.iter_mut() {
        *s = (*s * path_loss).max(T::zero());
    }
    Ok(scales)
}
