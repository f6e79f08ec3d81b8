//! Fixed-point solvers for the fundamental equations of isometrically
//! precoded channels: the quasi-static system, the fading system with
//! per-column correlations, the i.i.d.-precoder comparison system, and the
//! variance-profile system.
//!
//! Iteration schedules, lag structure, and initial values follow the
//! certified algorithms exactly; there is no damping or acceleration. The
//! stopping rule is the max-abs successive change over all unknowns, and
//! accepted solutions are re-substituted into every equation to report a
//! true residual.

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::numerics::{
    inverse_hpd, trace_product, trace_product_raw, weighted_sum, ComplexMatrix, HermitianMatrix,
};
use crate::scalar::{real, to_f64, Real};

/// Tolerances and iteration caps for all solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T: Real> {
    /// Max-abs-change stopping tolerance, also the accepted-equation
    /// residual bound.
    pub tol: T,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            tol: real(1e-10),
            max_outer: 10_000,
            max_inner: 10_000,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    fn validate(&self) -> Result<()> {
        if !(self.tol > T::zero()) || self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::DimensionMismatch(
                "solver config requires tol > 0 and positive iteration caps".into(),
            ));
        }
        Ok(())
    }

    /// Inner loops stop at half the outer tolerance: tight enough that the
    /// final equation residual stays under `tol`, loose enough to remain
    /// reachable in f64 when the unknowns are of magnitude `1/sigma2`.
    fn inner_tol(&self) -> T {
        self.tol * real(0.5)
    }
}

/// Per-user antenna and stream counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UserDims {
    /// Transmit antennas N_k.
    pub tx: usize,
    /// Streams n_k (columns of the precoder), n_k <= N_k.
    pub streams: usize,
}

/// System dimensions: receive antennas and the per-user counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dims {
    pub rx: usize,
    pub users: Vec<UserDims>,
}

impl Dims {
    pub fn new(rx: usize, users: Vec<UserDims>) -> Self {
        Self { rx, users }
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    /// Stream load c_k = n_k / N_k.
    pub fn load<T: Real>(&self, k: usize) -> T {
        real::<T>(self.users[k].streams as f64) / real::<T>(self.users[k].tx as f64)
    }

    /// Antenna ratio c̄_k = N_k / N.
    pub fn antenna_ratio<T: Real>(&self, k: usize) -> T {
        real::<T>(self.users[k].tx as f64) / real::<T>(self.rx as f64)
    }

    pub fn inv_rx<T: Real>(&self) -> T {
        T::one() / real::<T>(self.rx as f64)
    }
}

/// Channel column covariances for one user: either arbitrary per-column
/// matrices, or a common base scaled per column (the diagonalized Kronecker
/// form, which the solvers exploit).
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnCorrelations<T: Real> {
    Scaled {
        base: HermitianMatrix<T>,
        scales: Vec<T>,
    },
    General(Vec<HermitianMatrix<T>>),
}

impl<T: Real> ColumnCorrelations<T> {
    pub fn from_matrices(columns: Vec<HermitianMatrix<T>>) -> Self {
        ColumnCorrelations::General(columns)
    }

    /// Number of columns N_k.
    pub fn len(&self) -> usize {
        match self {
            ColumnCorrelations::Scaled { scales, .. } => scales.len(),
            ColumnCorrelations::General(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Receive dimension N.
    pub fn dim(&self) -> Option<usize> {
        match self {
            ColumnCorrelations::Scaled { base, .. } => Some(base.dim()),
            ColumnCorrelations::General(v) => v.first().map(|m| m.dim()),
        }
    }

    /// Materializes column `j`'s covariance matrix.
    pub fn column(&self, j: usize) -> HermitianMatrix<T> {
        match self {
            ColumnCorrelations::Scaled { base, scales } => base.scaled(scales[j]),
            ColumnCorrelations::General(v) => v[j].clone(),
        }
    }

    fn check(&self, rx: usize, expected_cols: usize, user: usize) -> Result<()> {
        if self.len() != expected_cols {
            return Err(Error::DimensionMismatch(format!(
                "user {user}: {} column correlations for {expected_cols} transmit antennas",
                self.len()
            )));
        }
        let ok = match self {
            ColumnCorrelations::Scaled { base, scales } => {
                base.dim() == rx && scales.iter().all(|s| *s >= T::zero())
            }
            ColumnCorrelations::General(v) => v.iter().all(|m| m.dim() == rx),
        };
        if !ok {
            return Err(Error::DimensionMismatch(format!(
                "user {user}: column correlations must be {rx}x{rx} with nonnegative scales"
            )));
        }
        Ok(())
    }

    /// `acc += sum_j coeffs[j] * R_j`.
    pub(crate) fn add_weighted_into(&self, acc: &mut ComplexMatrix<T>, coeffs: &[T]) {
        match self {
            ColumnCorrelations::Scaled { base, scales } => {
                let w: T = coeffs.iter().zip(scales.iter()).map(|(c, s)| *c * *s).sum();
                acc.zip_apply(base.matrix(), |a, b| *a += b * Complex::new(w, T::zero()));
            }
            ColumnCorrelations::General(v) => {
                for (c, m) in coeffs.iter().zip(v.iter()) {
                    acc.zip_apply(m.matrix(), |a, b| *a += b * Complex::new(*c, T::zero()));
                }
            }
        }
    }

    /// `tr(R_j M)` for every column `j`.
    pub(crate) fn traces_with(&self, m: &HermitianMatrix<T>) -> Vec<T> {
        self.traces_with_matrix(m.matrix())
    }

    /// As [`Self::traces_with`] against a raw (Hermitian) matrix buffer.
    pub(crate) fn traces_with_matrix(&self, m: &ComplexMatrix<T>) -> Vec<T> {
        match self {
            ColumnCorrelations::Scaled { base, scales } => {
                let t = trace_product_raw(base.matrix(), m);
                scales.iter().map(|s| *s * t).collect()
            }
            ColumnCorrelations::General(v) => {
                v.iter().map(|r| trace_product_raw(r.matrix(), m)).collect()
            }
        }
    }
}

/// Converged quasi-static fixed point `(a_k, a_bar_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiStaticSolution<T: Real> {
    pub a: Vec<T>,
    pub a_bar: Vec<T>,
    /// Max equation residual after re-substitution.
    pub residual: T,
    pub outer_iters: usize,
}

/// Converged fading fixed point `(b_k, b_bar_k, zeta_kj)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingSolution<T: Real> {
    pub b: Vec<T>,
    pub b_bar: Vec<T>,
    pub zeta: Vec<Vec<T>>,
    pub residual: T,
    pub outer_iters: usize,
}

/// Converged variance-profile fixed point: per-column `delta_j` and the
/// resolvent `T_N(-sigma^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceProfileSolution<T: Real> {
    pub delta: Vec<T>,
    pub t_matrix: HermitianMatrix<T>,
    pub residual: T,
    pub iters: usize,
}

/// Slack allowed on the open constraint `a_k a_bar_k < c_k c_bar_k`;
/// converged values beyond it are treated as non-convergence.
fn boundary_slack<T: Real>() -> T {
    real(1e-12)
}

fn check_noise<T: Real>(sigma2: T) -> Result<()> {
    if !(sigma2 > T::zero()) || !sigma2.is_finite_real() {
        return Err(Error::InvalidNoise(to_f64(sigma2)));
    }
    Ok(())
}

fn check_dims_powers<T: Real>(dims: &Dims, powers: &[Vec<T>]) -> Result<()> {
    if dims.rx == 0 || dims.users.is_empty() {
        return Err(Error::DimensionMismatch(
            "need at least one user and one receive antenna".into(),
        ));
    }
    if powers.len() != dims.users.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} power vectors for {} users",
            powers.len(),
            dims.users.len()
        )));
    }
    for (k, (u, p)) in dims.users.iter().zip(powers.iter()).enumerate() {
        if u.tx == 0 {
            return Err(Error::DimensionMismatch(format!(
                "user {k}: zero transmit antennas"
            )));
        }
        if u.streams > u.tx {
            return Err(Error::InvalidLoadFactor {
                user: k,
                streams: u.streams,
                tx: u.tx,
            });
        }
        if p.len() != u.streams {
            return Err(Error::DimensionMismatch(format!(
                "user {k}: {} power entries for {} streams",
                p.len(),
                u.streams
            )));
        }
        if p.iter().any(|v| *v < T::zero() || !v.is_finite_real()) {
            return Err(Error::DimensionMismatch(format!(
                "user {k}: power loading entries must be finite and nonnegative"
            )));
        }
    }
    Ok(())
}

/// Detects full-stream users (n_k = N_k) and returns the fixed value their
/// `a_bar` / `b_bar` takes: `Some(p_k)` when `P_k = p_k I`, `None` for
/// regular users. Full-stream users with non-uniform power are unsupported.
pub fn full_stream_pins<T: Real>(dims: &Dims, powers: &[Vec<T>]) -> Result<Vec<Option<T>>> {
    check_dims_powers(dims, powers)?;
    let mut pins = Vec::with_capacity(dims.users.len());
    for (k, (u, p)) in dims.users.iter().zip(powers.iter()).enumerate() {
        if u.streams == u.tx && u.streams > 0 {
            let p0 = p[0];
            let tol = real::<T>(1e-12) * T::one().max(p0);
            if p.iter().any(|v| (*v - p0).abs() > tol) {
                return Err(Error::UnsupportedFullStream { user: k });
            }
            pins.push(Some(p0));
        } else {
            pins.push(None);
        }
    }
    Ok(pins)
}

/// One evaluation of the power-side equation right-hand side:
/// `(1/N) tr P (x P + [c_bar - x y] I)^{-1}` for diagonal `P`.
fn power_rhs<T: Real>(x: T, y: T, powers: &[T], c_bar: T, inv_rx: T) -> T {
    let mut acc = T::zero();
    for &p in powers {
        acc += p / (c_bar - x * y + x * p);
    }
    acc * inv_rx
}

/// Inner fixed point in `y`: `y = (1/N) tr P (x P + [c_bar - x y] I)^{-1}`,
/// monotone from `y^(0) = 0`, unique in `[0, c c_bar / x)`.
fn inner_power_fixed_point<T: Real>(
    x: T,
    powers: &[T],
    c_bar: T,
    inv_rx: T,
    cfg: &SolverConfig<T>,
) -> Result<T> {
    if powers.is_empty() {
        return Ok(T::zero());
    }
    if x == T::zero() {
        return Ok(power_rhs(T::zero(), T::zero(), powers, c_bar, inv_rx));
    }
    let tol = cfg.inner_tol();
    let mut y = T::zero();
    let mut delta = T::zero();
    for _ in 0..cfg.max_inner {
        let next = power_rhs(x, y, powers, c_bar, inv_rx);
        delta = (next - y).abs();
        y = next;
        if delta <= tol {
            return Ok(y);
        }
    }
    Err(Error::NonConvergence {
        iters: cfg.max_inner,
        residual: to_f64(delta),
    })
}

/// `(1/N) tr R_k (sum_j w_j R_j + sigma2 I)^{-1}` for every `k`.
fn resolvent_traces<T: Real>(
    r: &[HermitianMatrix<T>],
    weights: &[T],
    sigma2: T,
    dims: &Dims,
) -> Result<Vec<T>> {
    let m = weighted_sum(dims.rx, weights.iter().copied().zip(r.iter()), sigma2)?;
    let minv = inverse_hpd(&m).map_err(|_| Error::not_pd("quasi-static resolvent"))?;
    let inv_rx = dims.inv_rx::<T>();
    Ok(r.iter()
        .map(|rk| trace_product(rk, &minv) * inv_rx)
        .collect())
}

fn check_quasi_static_inputs<T: Real>(
    r: &[HermitianMatrix<T>],
    powers: &[Vec<T>],
    dims: &Dims,
    sigma2: T,
    cfg: &SolverConfig<T>,
) -> Result<()> {
    cfg.validate()?;
    check_noise(sigma2)?;
    check_dims_powers(dims, powers)?;
    if r.len() != dims.users.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} gain matrices for {} users",
            r.len(),
            dims.users.len()
        )));
    }
    if r.iter().any(|m| m.dim() != dims.rx) {
        return Err(Error::DimensionMismatch(format!(
            "gain matrices must be {0}x{0}",
            dims.rx
        )));
    }
    Ok(())
}

/// Solves the quasi-static fundamental system
///
/// ```text
/// a_bar_k = (1/N) tr P_k (a_k P_k + [c_bar_k - a_k a_bar_k] I)^{-1}
/// a_k     = (1/N) tr R_k (sum_j a_bar_j R_j + sigma2 I)^{-1}
/// ```
///
/// by the certified two-level iteration from all-zero initial values.
/// Full-stream users (n_k = N_k, uniform power p_k) have `a_bar_k` pinned to
/// `p_k` and excluded from the constraint `a_k a_bar_k < c_k c_bar_k`.
pub fn solve_quasi_static<T: Real>(
    r: &[HermitianMatrix<T>],
    powers: &[Vec<T>],
    dims: &Dims,
    sigma2: T,
    cfg: &SolverConfig<T>,
) -> Result<QuasiStaticSolution<T>> {
    let zeros = vec![T::zero(); dims.users.len()];
    solve_quasi_static_with_init(r, powers, dims, sigma2, cfg, &zeros)
}

/// [`solve_quasi_static`] from an arbitrary nonnegative starting point for
/// the `a_k`; the fixed point is unique, so every start converges to it.
pub fn solve_quasi_static_with_init<T: Real>(
    r: &[HermitianMatrix<T>],
    powers: &[Vec<T>],
    dims: &Dims,
    sigma2: T,
    cfg: &SolverConfig<T>,
    init_a: &[T],
) -> Result<QuasiStaticSolution<T>> {
    check_quasi_static_inputs(r, powers, dims, sigma2, cfg)?;
    let pins = full_stream_pins(dims, powers)?;
    let k_users = dims.users.len();
    if init_a.len() != k_users || init_a.iter().any(|v| *v < T::zero()) {
        return Err(Error::DimensionMismatch(
            "initial a must be nonnegative, one per user".into(),
        ));
    }
    let inv_rx = dims.inv_rx::<T>();

    let abar_of = |k: usize, a_k: T| -> Result<T> {
        match pins[k] {
            Some(p) => Ok(p),
            None => inner_power_fixed_point(a_k, &powers[k], dims.antenna_ratio(k), inv_rx, cfg),
        }
    };

    let mut a = init_a.to_vec();
    let mut abar = Vec::with_capacity(k_users);
    for k in 0..k_users {
        abar.push(abar_of(k, a[k])?);
    }

    let mut delta = T::zero();
    for t in 1..=cfg.max_outer {
        let a_next = resolvent_traces(r, &abar, sigma2, dims)?;
        let mut abar_next = Vec::with_capacity(k_users);
        for k in 0..k_users {
            abar_next.push(abar_of(k, a_next[k])?);
        }
        delta = T::zero();
        for k in 0..k_users {
            delta = delta
                .max((a_next[k] - a[k]).abs())
                .max((abar_next[k] - abar[k]).abs());
        }
        a = a_next;
        abar = abar_next;

        if delta <= cfg.tol {
            let a_eq = resolvent_traces(r, &abar, sigma2, dims)?;
            let mut residual = T::zero();
            for k in 0..k_users {
                residual = residual.max((a_eq[k] - a[k]).abs());
                if pins[k].is_none() && !powers[k].is_empty() {
                    let rhs = power_rhs(a[k], abar[k], &powers[k], dims.antenna_ratio(k), inv_rx);
                    residual = residual.max((rhs - abar[k]).abs());
                }
            }
            if residual <= cfg.tol {
                check_haar_constraints(&a, &abar, &pins, dims)?;
                return Ok(QuasiStaticSolution {
                    a,
                    a_bar: abar,
                    residual,
                    outer_iters: t,
                });
            }
        }
    }
    Err(Error::NonConvergence {
        iters: cfg.max_outer,
        residual: to_f64(delta),
    })
}

fn check_haar_constraints<T: Real>(
    val: &[T],
    val_bar: &[T],
    pins: &[Option<T>],
    dims: &Dims,
) -> Result<()> {
    let slack = boundary_slack::<T>();
    for k in 0..dims.users.len() {
        let product = val[k] * val_bar[k];
        if val[k] < T::zero() || val_bar[k] < T::zero() || !product.is_finite_real() {
            return Err(Error::NonConvergence {
                iters: 0,
                residual: to_f64(product),
            });
        }
        if pins[k].is_none() && dims.users[k].streams > 0 {
            let bound = dims.load::<T>(k) * dims.antenna_ratio::<T>(k);
            if product >= bound + slack {
                return Err(Error::NonConvergence {
                    iters: 0,
                    residual: to_f64(product - bound),
                });
            }
        }
    }
    Ok(())
}

/// Solves the i.i.d.-precoder comparison system, which differs from the
/// quasi-static one only by the missing `- a_k a_bar_k` correction:
///
/// ```text
/// a_bar_k = (1/N) sum_l p_kl / (a_k p_kl + 1)
/// a_k     = (1/N) tr R_k (sum_j a_bar_j R_j + sigma2 I)^{-1}
/// ```
///
/// Zero-padding the power matrices leaves both equations unchanged, so the
/// extension convention needs no special handling here.
pub fn solve_quasi_static_iid<T: Real>(
    r: &[HermitianMatrix<T>],
    powers: &[Vec<T>],
    dims: &Dims,
    sigma2: T,
    cfg: &SolverConfig<T>,
) -> Result<QuasiStaticSolution<T>> {
    check_quasi_static_inputs(r, powers, dims, sigma2, cfg)?;
    let k_users = dims.users.len();
    let inv_rx = dims.inv_rx::<T>();

    let abar_of = |a_k: T, p: &[T]| -> T {
        p.iter().map(|&pl| pl / (a_k * pl + T::one())).sum::<T>() * inv_rx
    };

    let mut a = vec![T::zero(); k_users];
    let mut abar: Vec<T> = (0..k_users).map(|k| abar_of(a[k], &powers[k])).collect();
    let mut delta = T::zero();
    for t in 1..=cfg.max_outer {
        let a_next = resolvent_traces(r, &abar, sigma2, dims)?;
        let abar_next: Vec<T> = (0..k_users)
            .map(|k| abar_of(a_next[k], &powers[k]))
            .collect();
        delta = T::zero();
        for k in 0..k_users {
            delta = delta
                .max((a_next[k] - a[k]).abs())
                .max((abar_next[k] - abar[k]).abs());
        }
        a = a_next;
        abar = abar_next;
        if delta <= cfg.tol {
            let a_eq = resolvent_traces(r, &abar, sigma2, dims)?;
            let residual = (0..k_users)
                .map(|k| (a_eq[k] - a[k]).abs())
                .fold(T::zero(), |m, v| m.max(v));
            if residual <= cfg.tol {
                return Ok(QuasiStaticSolution {
                    a,
                    a_bar: abar,
                    residual,
                    outer_iters: t,
                });
            }
        }
    }
    Err(Error::NonConvergence {
        iters: cfg.max_outer,
        residual: to_f64(delta),
    })
}

fn check_fading_inputs<T: Real>(
    r: &[ColumnCorrelations<T>],
    powers: &[Vec<T>],
    dims: &Dims,
    sigma2: T,
    cfg: &SolverConfig<T>,
) -> Result<()> {
    cfg.validate()?;
    check_noise(sigma2)?;
    check_dims_powers(dims, powers)?;
    if r.len() != dims.users.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} correlation sets for {} users",
            r.len(),
            dims.users.len()
        )));
    }
    for (k, (cols, u)) in r.iter().zip(dims.users.iter()).enumerate() {
        cols.check(dims.rx, u.tx, k)?;
    }
    Ok(())
}

/// In-place Cholesky inversion of a Hermitian positive-definite matrix:
/// factors `a = L L^H` in the lower triangle, inverts the factor, and writes
/// `a^{-1} = L^{-H} L^{-1}` (exactly Hermitian) into `out`. `a` is destroyed.
///
/// Allocation-free; this is the inner-iteration hot path of the fading
/// solvers.
fn invert_hpd_in_place<T: Real>(
    a: &mut ComplexMatrix<T>,
    out: &mut ComplexMatrix<T>,
) -> Result<()> {
    let n = a.nrows();
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= a[(j, k)].norm_sqr();
        }
        if !(d > T::zero()) || !d.is_finite_real() {
            return Err(Error::not_pd("resolvent factorization"));
        }
        let root = d.sqrt();
        a[(j, j)] = Complex::new(root, T::zero());
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= a[(i, k)] * a[(j, k)].conj();
            }
            a[(i, j)] = s / root;
        }
    }
    // Invert the lower-triangular factor in place: column j reads original
    // entries from columns right of j and already-inverted entries below the
    // diagonal of column j.
    for j in 0..n {
        a[(j, j)] = Complex::new(T::one() / a[(j, j)].re, T::zero());
        for i in (j + 1)..n {
            let mut s = Complex::new(T::zero(), T::zero());
            for k in j..i {
                s += a[(i, k)] * a[(k, j)];
            }
            let inv_lii = T::one() / a[(i, i)].re;
            a[(i, j)] = -s * inv_lii;
        }
    }
    // out = L^{-H} L^{-1}; entry (i, j) with i <= j sums over rows k >= j.
    for i in 0..n {
        for j in i..n {
            let mut s = Complex::new(T::zero(), T::zero());
            for k in j..n {
                s += a[(k, i)].conj() * a[(k, j)];
            }
            if i == j {
                out[(i, i)] = Complex::new(s.re, T::zero());
            } else {
                out[(i, j)] = s;
                out[(j, i)] = s.conj();
            }
        }
    }
    Ok(())
}

/// Scratch matrices for the fading inner loops.
struct FadingWorkspace<T: Real> {
    m: ComplexMatrix<T>,
    minv: ComplexMatrix<T>,
}

impl<T: Real> FadingWorkspace<T> {
    fn new(rx: usize) -> Self {
        Self {
            m: ComplexMatrix::zeros(rx, rx),
            minv: ComplexMatrix::zeros(rx, rx),
        }
    }
}

/// Builds the fading resolvent argument
/// `(1/N) sum_kj [b_bar_k / (1 + b_bar_k zeta_kj)] R_kj + sigma2 I`
/// and inverts it into `ws.minv`.
fn fading_resolvent<T: Real>(
    r: &[ColumnCorrelations<T>],
    bbar: &[T],
    zeta: &[Vec<T>],
    sigma2: T,
    dims: &Dims,
    ws: &mut FadingWorkspace<T>,
) -> Result<()> {
    let inv_rx = dims.inv_rx::<T>();
    ws.m.fill(Complex::new(T::zero(), T::zero()));
    for i in 0..dims.rx {
        ws.m[(i, i)] = Complex::new(sigma2, T::zero());
    }
    let mut coeffs = Vec::new();
    for (k, cols) in r.iter().enumerate() {
        coeffs.clear();
        coeffs.extend(
            zeta[k]
                .iter()
                .map(|&z| bbar[k] * inv_rx / (T::one() + bbar[k] * z)),
        );
        cols.add_weighted_into(&mut ws.m, &coeffs);
    }
    invert_hpd_in_place(&mut ws.m, &mut ws.minv).map_err(|_| Error::not_pd("fading resolvent"))
}

/// Inner-iteration strategy for the `zeta` block.
enum ZetaEngine<T: Real> {
    /// Every user shares one correlation base: the resolvent stays in that
    /// base's eigenbasis and each iteration is O(N) scalar work.
    CommonEigen { eigenvalues: Vec<T> },
    /// General correlations: one matrix inversion per iteration.
    Matrix,
}

fn zeta_engine<T: Real>(r: &[ColumnCorrelations<T>]) -> ZetaEngine<T> {
    if let Some(ColumnCorrelations::Scaled { base: first, .. }) = r.first() {
        let shared = r
            .iter()
            .all(|c| matches!(c, ColumnCorrelations::Scaled { base, .. } if base == first));
        if shared {
            return ZetaEngine::CommonEigen {
                eigenvalues: first.eigenvalues(),
            };
        }
    }
    ZetaEngine::Matrix
}

/// Inner fixed point for the `zeta_kj` block at frozen `b_bar`, restarted
/// from `1/sigma2` as the certified schedule prescribes.
fn inner_zeta<T: Real>(
    r: &[ColumnCorrelations<T>],
    bbar: &[T],
    sigma2: T,
    dims: &Dims,
    cfg: &SolverConfig<T>,
    ws: &mut FadingWorkspace<T>,
    engine: &ZetaEngine<T>,
) -> Result<Vec<Vec<T>>> {
    let inv_rx = dims.inv_rx::<T>();
    let tol = cfg.inner_tol();
    let mut zeta: Vec<Vec<T>> = r
        .iter()
        .map(|cols| vec![T::one() / sigma2; cols.len()])
        .collect();
    let mut delta = T::zero();
    match engine {
        ZetaEngine::CommonEigen { eigenvalues } => {
            for _ in 0..cfg.max_inner {
                let mut g = T::zero();
                for (k, cols) in r.iter().enumerate() {
                    let ColumnCorrelations::Scaled { scales, .. } = cols else {
                        unreachable!()
                    };
                    for (s, z) in scales.iter().zip(zeta[k].iter()) {
                        g += bbar[k] * *s / (T::one() + bbar[k] * *z);
                    }
                }
                g *= inv_rx;
                let tau = eigenvalues.iter().map(|&l| l / (g * l + sigma2)).sum::<T>() * inv_rx;
                delta = T::zero();
                for (k, cols) in r.iter().enumerate() {
                    let ColumnCorrelations::Scaled { scales, .. } = cols else {
                        unreachable!()
                    };
                    for (j, &s) in scales.iter().enumerate() {
                        let next = s * tau;
                        delta = delta.max((next - zeta[k][j]).abs());
                        zeta[k][j] = next;
                    }
                }
                if delta <= tol {
                    return Ok(zeta);
                }
            }
        }
        ZetaEngine::Matrix => {
            for _ in 0..cfg.max_inner {
                fading_resolvent(r, bbar, &zeta, sigma2, dims, ws)?;
                delta = T::zero();
                for (k, cols) in r.iter().enumerate() {
                    let traces = cols.traces_with_matrix(&ws.minv);
                    for (j, tr) in traces.into_iter().enumerate() {
                        let next = tr * inv_rx;
                        delta = delta.max((next - zeta[k][j]).abs());
                        zeta[k][j] = next;
                    }
                }
                if delta <= tol {
                    return Ok(zeta);
                }
            }
        }
    }
    Err(Error::NonConvergence {
        iters: cfg.max_inner,
        residual: to_f64(delta),
    })
}

/// Solves the fading fundamental system
///
/// ```text
/// b_bar_k = (1/N) tr P_k (b_k P_k + [c_bar_k - b_k b_bar_k] I)^{-1}
/// b_k     = (1/N) sum_j zeta_kj / (1 + b_bar_k zeta_kj)
/// zeta_kj = (1/N) tr R_kj ((1/N) sum_{k'j'} b_bar_k' R_k'j' / (1 + b_bar_k' zeta_k'j') + sigma2 I)^{-1}
/// ```
///
/// with the certified lag structure: within outer step `t`, the `b_bar` and
/// `zeta` inner loops both consume `b^(t-1)` / `b_bar^(t-1)` from the
/// previous outer step, and `b^(t)` is assembled from the fresh `zeta^(t)`
/// with the lagged `b_bar^(t-1)`. Inner initial values are `b_bar = 0` and
/// `zeta = 1/sigma2`.
pub fn solve_fading<T: Real>(
    r: &[ColumnCorrelations<T>],
    powers: &[Vec<T>],
    dims: &Dims,
    sigma2: T,
    cfg: &SolverConfig<T>,
) -> Result<FadingSolution<T>> {
    let zeros = vec![T::zero(); dims.users.len()];
    solve_fading_with_init(r, powers, dims, sigma2, cfg, &zeros)
}

/// [`solve_fading`] from an arbitrary nonnegative starting point for the
/// `b_k`.
pub fn solve_fading_with_init<T: Real>(
    r: &[ColumnCorrelations<T>],
    powers: &[Vec<T>],
    dims: &Dims,
    sigma2: T,
    cfg: &SolverConfig<T>,
    init_b: &[T],
) -> Result<FadingSolution<T>> {
    check_fading_inputs(r, powers, dims, sigma2, cfg)?;
    let pins = full_stream_pins(dims, powers)?;
    let k_users = dims.users.len();
    if init_b.len() != k_users || init_b.iter().any(|v| *v < T::zero()) {
        return Err(Error::DimensionMismatch(
            "initial b must be nonnegative, one per user".into(),
        ));
    }
    let inv_rx = dims.inv_rx::<T>();
    let mut ws = FadingWorkspace::new(dims.rx);
    let engine = zeta_engine(r);

    let bbar_of = |k: usize, b_k: T| -> Result<T> {
        match pins[k] {
            Some(p) => Ok(p),
            None => inner_power_fixed_point(b_k, &powers[k], dims.antenna_ratio(k), inv_rx, cfg),
        }
    };

    let mut b = init_b.to_vec();
    let mut bbar = Vec::with_capacity(k_users);
    for k in 0..k_users {
        bbar.push(bbar_of(k, b[k])?);
    }
    let mut zeta: Option<Vec<Vec<T>>> = None;

    let mut delta = T::zero();
    for t in 1..=cfg.max_outer {
        let mut bbar_next = Vec::with_capacity(k_users);
        for k in 0..k_users {
            bbar_next.push(bbar_of(k, b[k])?);
        }
        let zeta_next = inner_zeta(r, &bbar, sigma2, dims, cfg, &mut ws, &engine)?;
        let b_next: Vec<T> = (0..k_users)
            .map(|k| {
                zeta_next[k]
                    .iter()
                    .map(|&z| z / (T::one() + bbar[k] * z))
                    .sum::<T>()
                    * inv_rx
            })
            .collect();

        delta = T::zero();
        for k in 0..k_users {
            delta = delta
                .max((b_next[k] - b[k]).abs())
                .max((bbar_next[k] - bbar[k]).abs());
        }
        match &zeta {
            Some(prev) => {
                for (zp, zn) in prev.iter().zip(zeta_next.iter()) {
                    for (a, b) in zp.iter().zip(zn.iter()) {
                        delta = delta.max((*a - *b).abs());
                    }
                }
            }
            None => delta = real(1e30),
        }
        b = b_next;
        bbar = bbar_next;
        zeta = Some(zeta_next);

        if delta <= cfg.tol {
            let z = zeta.as_ref().unwrap();
            fading_resolvent(r, &bbar, z, sigma2, dims, &mut ws)?;
            let mut residual = T::zero();
            for (k, cols) in r.iter().enumerate() {
                let traces = cols.traces_with_matrix(&ws.minv);
                for (j, tr) in traces.into_iter().enumerate() {
                    residual = residual.max((tr * inv_rx - z[k][j]).abs());
                }
                let b_eq = z[k]
                    .iter()
                    .map(|&zz| zz / (T::one() + bbar[k] * zz))
                    .sum::<T>()
                    * inv_rx;
                residual = residual.max((b_eq - b[k]).abs());
                if pins[k].is_none() && !powers[k].is_empty() {
                    let rhs = power_rhs(b[k], bbar[k], &powers[k], dims.antenna_ratio(k), inv_rx);
                    residual = residual.max((rhs - bbar[k]).abs());
                }
            }
            if residual <= cfg.tol {
                check_haar_constraints(&b, &bbar, &pins, dims)?;
                if z.iter().flatten().any(|v| *v < T::zero()) {
                    return Err(Error::NonConvergence {
                        iters: t,
                        residual: to_f64(residual),
                    });
                }
                return Ok(FadingSolution {
                    b,
                    b_bar: bbar,
                    zeta: zeta.unwrap(),
                    residual,
                    outer_iters: t,
                });
            }
        }
    }
    Err(Error::NonConvergence {
        iters: cfg.max_outer,
        residual: to_f64(delta),
    })
}

/// Solves the variance-profile system for a channel with independent
/// columns of covariance `R_j`:
///
/// ```text
/// delta_j = (1/N) tr R_j T,   T = ((1/N) sum_j R_j / (1 + delta_j) + sigma2 I)^{-1}
/// ```
///
/// single-level iteration from `delta_j = 1/sigma2`.
pub fn solve_variance_profile<T: Real>(
    columns: &ColumnCorrelations<T>,
    rx: usize,
    sigma2: T,
    cfg: &SolverConfig<T>,
) -> Result<VarianceProfileSolution<T>> {
    cfg.validate()?;
    check_noise(sigma2)?;
    if columns.is_empty() {
        return Err(Error::DimensionMismatch(
            "variance profile needs at least one column".into(),
        ));
    }
    columns.check(rx, columns.len(), 0)?;
    let n_cols = columns.len();
    let inv_rx = T::one() / real::<T>(rx as f64);
    let mut ws = FadingWorkspace::new(rx);
    let engine = zeta_engine(std::slice::from_ref(columns));

    let resolvent = |delta: &[T], ws: &mut FadingWorkspace<T>| -> Result<HermitianMatrix<T>> {
        ws.m.fill(Complex::new(T::zero(), T::zero()));
        for i in 0..rx {
            ws.m[(i, i)] = Complex::new(sigma2, T::zero());
        }
        let coeffs: Vec<T> = delta.iter().map(|&d| inv_rx / (T::one() + d)).collect();
        columns.add_weighted_into(&mut ws.m, &coeffs);
        invert_hpd_in_place(&mut ws.m, &mut ws.minv)
            .map_err(|_| Error::not_pd("variance-profile resolvent"))?;
        Ok(HermitianMatrix::from_hermitian_unchecked(ws.minv.clone()))
    };

    let mut delta = vec![T::one() / sigma2; n_cols];
    let mut change = T::zero();
    for t in 1..=cfg.max_outer {
        match &engine {
            ZetaEngine::CommonEigen { eigenvalues } => {
                let ColumnCorrelations::Scaled { scales, .. } = columns else {
                    unreachable!()
                };
                let g = scales
                    .iter()
                    .zip(delta.iter())
                    .map(|(&s, &d)| s / (T::one() + d))
                    .sum::<T>()
                    * inv_rx;
                let tau = eigenvalues.iter().map(|&l| l / (g * l + sigma2)).sum::<T>() * inv_rx;
                change = T::zero();
                for (d, &s) in delta.iter_mut().zip(scales.iter()) {
                    let next = s * tau;
                    change = change.max((next - *d).abs());
                    *d = next;
                }
            }
            ZetaEngine::Matrix => {
                let minv = resolvent(&delta, &mut ws)?;
                let traces = columns.traces_with(&minv);
                change = T::zero();
                for (d, tr) in delta.iter_mut().zip(traces.into_iter()) {
                    let next = tr * inv_rx;
                    change = change.max((next - *d).abs());
                    *d = next;
                }
            }
        }
        if change <= cfg.tol {
            // Verification always goes through the matrix route, which also
            // cross-checks the eigenbasis shortcut.
            let minv = resolvent(&delta, &mut ws)?;
            let traces = columns.traces_with(&minv);
            let residual = delta
                .iter()
                .zip(traces.iter())
                .map(|(d, tr)| (*tr * inv_rx - *d).abs())
                .fold(T::zero(), |m, v| m.max(v));
            if residual <= cfg.tol {
                if delta.iter().any(|d| *d < T::zero()) {
                    return Err(Error::NonConvergence {
                        iters: t,
                        residual: to_f64(residual),
                    });
                }
                return Ok(VarianceProfileSolution {
                    delta,
                    t_matrix: minv,
                    residual,
                    iters: t,
                });
            }
        }
    }
    Err(Error::NonConvergence {
        iters: cfg.max_outer,
        residual: to_f64(change),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SolverConfig<f64> {
        SolverConfig::default()
    }

    fn single_user_dims(rx: usize, tx: usize, streams: usize) -> Dims {
        Dims::new(rx, vec![UserDims { tx, streams }])
    }

    #[test]
    fn closed_form_two_antenna_instance() {
        // K=1, N=2, N_1=2, n_1=1, P=[1], R=I_2, sigma2=1: the system reduces
        // to a_bar = (1 + a_bar)/4, so a_bar = 1/3 and a = 3/4.
        let dims = single_user_dims(2, 2, 1);
        let r = vec![HermitianMatrix::<f64>::identity(2)];
        let p = vec![vec![1.0]];
        let sol = solve_quasi_static(&r, &p, &dims, 1.0, &cfg()).unwrap();
        assert!((sol.a[0] - 0.75).abs() < 1e-10, "a = {}", sol.a[0]);
        assert!(
            (sol.a_bar[0] - 1.0 / 3.0).abs() < 1e-10,
            "a_bar = {}",
            sol.a_bar[0]
        );
        assert!(sol.residual <= 1e-10);
    }

    #[test]
    fn zero_power_decouples() {
        let dims = single_user_dims(3, 3, 2);
        let r = vec![HermitianMatrix::<f64>::scaled_identity(3, 2.0)];
        let p = vec![vec![0.0, 0.0]];
        let sigma2 = 0.7;
        let sol = solve_quasi_static(&r, &p, &dims, sigma2, &cfg()).unwrap();
        assert_eq!(sol.a_bar[0], 0.0);
        let expect = 2.0 * 3.0 / (3.0 * sigma2); // tr(R)/(N sigma2)
        assert!((sol.a[0] - expect).abs() < 1e-10);
    }

    #[test]
    fn high_noise_first_order_limit() {
        let dims = single_user_dims(4, 4, 2);
        let r = vec![HermitianMatrix::<f64>::from_real_diagonal(&[
            1.0, 2.0, 3.0, 4.0,
        ])];
        let p = vec![vec![1.0, 2.0]];
        let sigma2 = 1.0e6;
        let sol = solve_quasi_static(&r, &p, &dims, sigma2, &cfg()).unwrap();
        let expect = 10.0 / (4.0 * sigma2);
        assert!(((sol.a[0] - expect) / expect).abs() < 1e-3);
    }

    #[test]
    fn invalid_inputs_rejected() {
        let dims = single_user_dims(2, 2, 3);
        let r = vec![HermitianMatrix::<f64>::identity(2)];
        let p = vec![vec![1.0, 1.0, 1.0]];
        assert!(matches!(
            solve_quasi_static(&r, &p, &dims, 1.0, &cfg()),
            Err(Error::InvalidLoadFactor { .. })
        ));

        let dims = single_user_dims(2, 2, 1);
        let p = vec![vec![1.0]];
        assert!(matches!(
            solve_quasi_static(&r, &p, &dims, -1.0, &cfg()),
            Err(Error::InvalidNoise(_))
        ));
    }

    #[test]
    fn full_stream_pins_uniform_and_rejects_nonuniform() {
        let dims = single_user_dims(4, 2, 2);
        let pins = full_stream_pins(&dims, &[vec![2.0, 2.0]]).unwrap();
        assert_eq!(pins, vec![Some(2.0)]);

        assert!(matches!(
            full_stream_pins(&dims, &[vec![1.0, 2.0]]),
            Err(Error::UnsupportedFullStream { user: 0 })
        ));

        let dims = single_user_dims(4, 2, 1);
        let pins = full_stream_pins(&dims, &[vec![7.0]]).unwrap();
        assert_eq!(pins, vec![None]);
    }

    #[test]
    fn full_stream_quasi_static_pins_a_bar() {
        let dims = single_user_dims(4, 4, 4);
        let r = vec![HermitianMatrix::<f64>::identity(4)];
        let p = vec![vec![2.0; 4]];
        let sol = solve_quasi_static(&r, &p, &dims, 1.0, &cfg()).unwrap();
        assert_eq!(sol.a_bar[0], 2.0);
        // a = (1/N) tr R (2 R + I)^{-1} = 1/3.
        assert!((sol.a[0] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn iid_differs_from_haar() {
        let dims = single_user_dims(2, 2, 1);
        let r = vec![HermitianMatrix::<f64>::identity(2)];
        let p = vec![vec![1.0]];
        let haar = solve_quasi_static(&r, &p, &dims, 1.0, &cfg()).unwrap();
        let iid = solve_quasi_static_iid(&r, &p, &dims, 1.0, &cfg()).unwrap();
        // Closed form for the iid system: 2 y^2 + 3 y - 1 = 0.
        let expect = (-3.0 + 17.0f64.sqrt()) / 4.0;
        assert!(
            (iid.a_bar[0] - expect).abs() < 1e-10,
            "iid a_bar {}",
            iid.a_bar[0]
        );
        assert!((haar.a_bar[0] - iid.a_bar[0]).abs() > 1e-3);
    }

    #[test]
    fn iid_matches_haar_at_zero_power() {
        let dims = single_user_dims(3, 3, 2);
        let r = vec![HermitianMatrix::<f64>::scaled_identity(3, 1.5)];
        let p = vec![vec![0.0, 0.0]];
        let haar = solve_quasi_static(&r, &p, &dims, 2.0, &cfg()).unwrap();
        let iid = solve_quasi_static_iid(&r, &p, &dims, 2.0, &cfg()).unwrap();
        assert!((haar.a[0] - iid.a[0]).abs() < 1e-12);
        assert_eq!(haar.a_bar[0], 0.0);
        assert_eq!(iid.a_bar[0], 0.0);
    }

    #[test]
    fn fading_marcenko_pastur_closed_form() {
        // K=1, P=I, n=N=N_1, R_1j=I: zeta = (-1 + sqrt(1 + 4/sigma2))/2.
        let n = 8;
        let dims = single_user_dims(n, n, n);
        let r = vec![ColumnCorrelations::Scaled {
            base: HermitianMatrix::<f64>::identity(n),
            scales: vec![1.0; n],
        }];
        let p = vec![vec![1.0; n]];
        for &sigma2 in &[0.1, 1.0, 10.0] {
            let sol = solve_fading(&r, &p, &dims, sigma2, &cfg()).unwrap();
            let expect = (-1.0 + (1.0 + 4.0 / sigma2).sqrt()) / 2.0;
            assert_eq!(sol.b_bar[0], 1.0);
            for z in &sol.zeta[0] {
                assert!(
                    (z - expect).abs() < 1e-9,
                    "sigma2={sigma2}: zeta {z} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn fading_zero_channel() {
        let dims = single_user_dims(4, 3, 2);
        let r = vec![ColumnCorrelations::General(
            vec![HermitianMatrix::<f64>::zeros(4); 3],
        )];
        let p = vec![vec![1.0, 2.0]];
        let sol = solve_fading(&r, &p, &dims, 1.0, &cfg()).unwrap();
        assert!(sol.zeta[0].iter().all(|z| *z == 0.0));
        assert_eq!(sol.b[0], 0.0);
        // b_bar = (1/(N c_bar)) sum p = (1+2)/(4 * 3/4) = 1.
        assert!((sol.b_bar[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn variance_profile_marcenko_pastur_and_zero() {
        let n = 6;
        let cols = ColumnCorrelations::Scaled {
            base: HermitianMatrix::<f64>::identity(n),
            scales: vec![1.0; n],
        };
        let sol = solve_variance_profile(&cols, n, 1.0, &cfg()).unwrap();
        let expect = (5.0f64.sqrt() - 1.0) / 2.0;
        for d in &sol.delta {
            assert!((d - expect).abs() < 1e-9);
        }

        let zero = ColumnCorrelations::General(vec![HermitianMatrix::<f64>::zeros(3); 2]);
        let sol = solve_variance_profile(&zero, 3, 2.0, &cfg()).unwrap();
        assert!(sol.delta.iter().all(|d| *d == 0.0));
        let t_diag = sol.t_matrix.matrix()[(0, 0)].re;
        assert!((t_diag - 0.5).abs() < 1e-12);
    }

    #[test]
    fn variance_profile_single_column_bisection_oracle() {
        // n=1, R_1 = I_N: delta solves delta = 1/((1/N)/(1+delta) + sigma2).
        let n = 5;
        let sigma2 = 0.8;
        let cols = ColumnCorrelations::General(vec![HermitianMatrix::<f64>::identity(n)]);
        let sol = solve_variance_profile(&cols, n, sigma2, &cfg()).unwrap();

        let f = |d: f64| 1.0 / ((1.0 / n as f64) / (1.0 + d) + sigma2) - d;
        let (mut lo, mut hi) = (0.0f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!(
            (sol.delta[0] - lo).abs() < 1e-9,
            "{} vs {}",
            sol.delta[0],
            lo
        );
    }

    #[test]
    fn in_place_inversion_matches_cholesky_route() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(61);
        for n in [1usize, 2, 5, 10] {
            let x = crate::ensembles::sample_gaussian_matrix::<f64>(n, n + 2, 1.0, &mut rng);
            let m = HermitianMatrix::gram(&x);
            let reference = inverse_hpd(&m).unwrap();
            let mut work = m.matrix().clone();
            let mut out = ComplexMatrix::<f64>::zeros(n, n);
            invert_hpd_in_place(&mut work, &mut out).unwrap();
            let dev = (&out - reference.matrix()).norm() / reference.norm();
            assert!(dev < 1e-12, "n={n}: inverse deviation {dev:.2e}");
        }

        // Non-positive-definite input is rejected.
        let d = HermitianMatrix::from_real_diagonal(&[1.0, 0.0]);
        let mut work = d.matrix().clone();
        let mut out = ComplexMatrix::<f64>::zeros(2, 2);
        assert!(invert_hpd_in_place(&mut work, &mut out).is_err());
    }

    #[test]
    fn solvers_are_generic_over_the_scalar_type() {
        // Same square-channel fixed point in f32 at a tolerance that single
        // precision can reach.
        let n = 4;
        let dims = single_user_dims(n, n, n);
        let r = vec![ColumnCorrelations::Scaled {
            base: HermitianMatrix::<f32>::identity(n),
            scales: vec![1.0f32; n],
        }];
        let p = vec![vec![1.0f32; n]];
        let cfg32 = SolverConfig::<f32> {
            tol: 1e-5,
            ..SolverConfig::default()
        };
        let sol = solve_fading(&r, &p, &dims, 1.0f32, &cfg32).unwrap();
        let expect = (5.0f32.sqrt() - 1.0) / 2.0;
        for z in &sol.zeta[0] {
            assert!((z - expect).abs() < 1e-3, "f32 zeta {z}");
        }
    }

    #[test]
    fn fading_kronecker_scaled_equals_general() {
        // The Scaled fast path and the General path must produce identical
        // fixed points for the same correlations.
        let n = 4;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let x = crate::ensembles::sample_gaussian_matrix::<f64>(n, n, 1.0, &mut rng);
        let base = HermitianMatrix::gram(&x).scaled(1.0 / n as f64);
        let scales = vec![0.3, 1.1, 2.4];
        let scaled = ColumnCorrelations::Scaled {
            base: base.clone(),
            scales: scales.clone(),
        };
        let general = ColumnCorrelations::General(scales.iter().map(|&s| base.scaled(s)).collect());
        let dims = single_user_dims(n, 3, 2);
        let p = vec![vec![0.5, 1.5]];
        let a = solve_fading(std::slice::from_ref(&scaled), &p, &dims, 0.5, &cfg()).unwrap();
        let b = solve_fading(std::slice::from_ref(&general), &p, &dims, 0.5, &cfg()).unwrap();
        assert!((a.b[0] - b.b[0]).abs() < 1e-12);
        assert!((a.b_bar[0] - b.b_bar[0]).abs() < 1e-12);
        for (za, zb) in a.zeta[0].iter().zip(b.zeta[0].iter()) {
            assert!((za - zb).abs() < 1e-11);
        }
    }
}
