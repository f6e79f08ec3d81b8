//! Deterministic-equivalent performance formulas evaluated from converged
//! fixed points: mutual information, MMSE SINR, normalized sum rate, and the
//! Stieltjes transform at real negative argument.
//!
//! All values are in nats; unit conversion is a presentation concern.

use crate::error::{Error, Result};
use crate::numerics::{inverse_hpd, logdet_hpd, weighted_sum, ComplexMatrix, HermitianMatrix};
use crate::scalar::{real, Real};
use crate::solver::{
    ColumnCorrelations, Dims, FadingSolution, QuasiStaticSolution, VarianceProfileSolution,
};

use nalgebra::Complex;

/// Deterministic-equivalent values for one scenario at one noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport<T: Real> {
    /// Nats per channel use per receive antenna.
    pub mutual_info: T,
    /// Per signal user, per stream, linear scale.
    pub sinr: Vec<Vec<T>>,
    /// Nats, normalized by the receive dimension.
    pub mmse_sum_rate: T,
    /// Stieltjes transform at `-sigma2`; quasi-static scenarios only.
    pub stieltjes: Option<T>,
}

/// The per-user correction terms shared by the quasi-static and fading
/// mutual-information formulas:
///
/// ```text
/// (1/N) logdet([c_bar - v v_bar] I + v P) + (1 - c) c_bar log(c_bar - v v_bar) - c_bar log(c_bar)
/// ```
///
/// For full-stream users (c = 1) the middle term carries coefficient zero
/// and the log-det argument collapses to `c_bar I`, so the whole correction
/// vanishes identically.
fn haar_correction<T: Real>(
    value: T,
    value_bar: T,
    powers: &[T],
    dims: &Dims,
    k: usize,
) -> Result<T> {
    let u = dims.users[k];
    if u.streams == 0 {
        return Ok(T::zero());
    }
    let c_bar: T = dims.antenna_ratio(k);
    let c: T = dims.load(k);
    let q = c_bar - value * value_bar;
    let inv_rx = dims.inv_rx::<T>();

    let mut logdet = T::zero();
    for &p in powers {
        let arg = q + value * p;
        if arg <= T::zero() {
            return Err(Error::not_pd(format!(
                "mutual-information correction, user {k}"
            )));
        }
        logdet += arg.ln();
    }
    let middle = if u.streams == u.tx {
        T::zero()
    } else {
        if q <= T::zero() {
            return Err(Error::not_pd(format!(
                "mutual-information correction, user {k}"
            )));
        }
        (T::one() - c) * c_bar * q.ln()
    };
    Ok(logdet * inv_rx + middle - c_bar * c_bar.ln())
}

/// Deterministic mutual information under the quasi-static model.
pub fn det_mutual_info_quasi_static<T: Real>(
    sol: &QuasiStaticSolution<T>,
    r: &[HermitianMatrix<T>],
    powers: &[Vec<T>],
    dims: &Dims,
    sigma2: T,
) -> Result<T> {
    let weights: Vec<T> = sol.a_bar.iter().map(|&ab| ab / sigma2).collect();
    let m = weighted_sum(dims.rx, weights.into_iter().zip(r.iter()), T::one())?;
    let mut total = logdet_hpd(&m).map_err(|_| Error::not_pd("mutual-information log-det"))?
        * dims.inv_rx::<T>();
    for k in 0..dims.users.len() {
        total += haar_correction(sol.a[k], sol.a_bar[k], &powers[k], dims, k)?;
    }
    Ok(total)
}

/// Resolvent-argument sum `(1/N) sum_kj [w_k R_kj / (1 + w_k zeta_kj)]`
/// scaled by `pre` and shifted by `shift * I`.
fn fading_weighted_matrix<T: Real>(
    r: &[ColumnCorrelations<T>],
    weights: &[T],
    zeta: &[Vec<T>],
    dims: &Dims,
    pre: T,
    shift: T,
) -> HermitianMatrix<T> {
    let inv_rx = dims.inv_rx::<T>();
    let mut acc = ComplexMatrix::<T>::zeros(dims.rx, dims.rx);
    for i in 0..dims.rx {
        acc[(i, i)] = Complex::new(shift, T::zero());
    }
    for (k, cols) in r.iter().enumerate() {
        let coeffs: Vec<T> = zeta[k]
            .iter()
            .map(|&z| pre * weights[k] * inv_rx / (T::one() + weights[k] * z))
            .collect();
        cols.add_weighted_into(&mut acc, &coeffs);
    }
    HermitianMatrix::from_hermitian_unchecked(acc)
}

/// The log-det functional of the fading resolvent,
/// `V_N = (1/N) logdet(I + (1/sigma2) (1/N) sum b_bar R / (1 + b_bar zeta))
///  - sum_k b_bar_k b_k + (1/N) sum_kj log(1 + b_bar_k zeta_kj)`.
fn fading_v_bar<T: Real>(
    sol: &FadingSolution<T>,
    r: &[ColumnCorrelations<T>],
    dims: &Dims,
    sigma2: T,
) -> Result<T> {
    let inv_rx = dims.inv_rx::<T>();
    let m = fading_weighted_matrix(r, &sol.b_bar, &sol.zeta, dims, T::one() / sigma2, T::one());
    let mut v = logdet_hpd(&m).map_err(|_| Error::not_pd("variance-profile log-det"))? * inv_rx;
    for k in 0..dims.users.len() {
        v -= sol.b_bar[k] * sol.b[k];
        for &z in &sol.zeta[k] {
            v += (T::one() + sol.b_bar[k] * z).ln() * inv_rx;
        }
    }
    Ok(v)
}

/// Deterministic mutual information under the fading model.
pub fn det_mutual_info_fading<T: Real>(
    sol: &FadingSolution<T>,
    r: &[ColumnCorrelations<T>],
    powers: &[Vec<T>],
    dims: &Dims,
    sigma2: T,
) -> Result<T> {
    let mut total = fading_v_bar(sol, r, dims, sigma2)?;
    for k in 0..dims.users.len() {
        total += haar_correction(sol.b[k], sol.b_bar[k], &powers[k], dims, k)?;
    }
    Ok(total)
}

fn sinr_from_pair<T: Real>(value: T, value_bar: T, c_bar: T, p_entry: T, k: usize) -> Result<T> {
    let denom = c_bar - value * value_bar;
    if denom <= T::zero() {
        return Err(Error::not_pd(format!("SINR denominator, user {k}")));
    }
    Ok(p_entry * value / denom)
}

/// MMSE SINR deterministic equivalent `p a_k / (c_bar_k - a_k a_bar_k)`.
pub fn det_sinr_quasi_static<T: Real>(
    sol: &QuasiStaticSolution<T>,
    dims: &Dims,
    k: usize,
    p_entry: T,
) -> Result<T> {
    sinr_from_pair(sol.a[k], sol.a_bar[k], dims.antenna_ratio(k), p_entry, k)
}

/// MMSE SINR deterministic equivalent `p b_k / (c_bar_k - b_k b_bar_k)`.
pub fn det_sinr_fading<T: Real>(
    sol: &FadingSolution<T>,
    dims: &Dims,
    k: usize,
    p_entry: T,
) -> Result<T> {
    sinr_from_pair(sol.b[k], sol.b_bar[k], dims.antenna_ratio(k), p_entry, k)
}

fn sum_rate_from<T: Real>(
    sinr_of: impl Fn(usize, T) -> Result<T>,
    powers: &[Vec<T>],
    dims: &Dims,
) -> Result<T> {
    let inv_rx = dims.inv_rx::<T>();
    let mut acc = T::zero();
    for (k, p) in powers.iter().enumerate() {
        for &pe in p {
            acc += (T::one() + sinr_of(k, pe)?).ln();
        }
    }
    Ok(acc * inv_rx)
}

/// Normalized MMSE sum rate `(1/N) sum_kj log(1 + sinr_kj)` over all users.
pub fn det_mmse_sum_rate_quasi_static<T: Real>(
    sol: &QuasiStaticSolution<T>,
    powers: &[Vec<T>],
    dims: &Dims,
) -> Result<T> {
    sum_rate_from(|k, p| det_sinr_quasi_static(sol, dims, k, p), powers, dims)
}

/// Normalized MMSE sum rate for the fading model.
pub fn det_mmse_sum_rate_fading<T: Real>(
    sol: &FadingSolution<T>,
    powers: &[Vec<T>],
    dims: &Dims,
) -> Result<T> {
    sum_rate_from(|k, p| det_sinr_fading(sol, dims, k, p), powers, dims)
}

/// Deterministic Stieltjes transform at `z = -sigma2`:
/// `(1/N) tr (sum_k a_bar_k R_k + sigma2 I)^{-1}`.
pub fn det_stieltjes<T: Real>(
    sol: &QuasiStaticSolution<T>,
    r: &[HermitianMatrix<T>],
    dims: &Dims,
    sigma2: T,
) -> Result<T> {
    let m = weighted_sum(dims.rx, sol.a_bar.iter().copied().zip(r.iter()), sigma2)?;
    let inv = inverse_hpd(&m).map_err(|_| Error::not_pd("Stieltjes resolvent"))?;
    Ok(inv.trace() * dims.inv_rx::<T>())
}

/// The log-det functional of the variance-profile model:
/// `(1/N) logdet(I + (1/sigma2)(1/N) sum_j R_j/(1+delta_j))
///  + (1/N) sum_j log(1+delta_j) - (1/N) sum_j delta_j/(1+delta_j)`.
pub fn det_vn_variance_profile<T: Real>(
    sol: &VarianceProfileSolution<T>,
    columns: &ColumnCorrelations<T>,
    rx: usize,
    sigma2: T,
) -> Result<T> {
    let inv_rx = T::one() / real::<T>(rx as f64);
    let mut acc = ComplexMatrix::<T>::identity(rx, rx);
    let coeffs: Vec<T> = sol
        .delta
        .iter()
        .map(|&d| inv_rx / (sigma2 * (T::one() + d)))
        .collect();
    columns.add_weighted_into(&mut acc, &coeffs);
    let m = HermitianMatrix::from_hermitian_unchecked(acc);
    let mut v = logdet_hpd(&m).map_err(|_| Error::not_pd("variance-profile log-det"))? * inv_rx;
    for &d in &sol.delta {
        v += (T::one() + d).ln() * inv_rx;
        v -= d / (T::one() + d) * inv_rx;
    }
    Ok(v)
}
