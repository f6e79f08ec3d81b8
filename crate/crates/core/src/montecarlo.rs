//! Exact finite-dimension metrics for sampled channel/precoder realizations
//! and a deterministic replication engine.
//!
//! Replication r consumes the stream `(seed, r + 1)` in a fixed order (per
//! user: channel draw if fading, then precoder draw), so results are a pure
//! function of `(scenario, seed, n_reps)` and independent of the worker
//! count. Aggregation is a sequential compensated pass over the ordered
//! per-replication values.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{logdet_hpd, solve_hpd, weighted_sum, ComplexMatrix, HermitianMatrix};
use crate::scalar::{real, to_f64, Real};
use crate::scenario::{ChannelSampler, ScenarioSpec};

use nalgebra::Complex;
use rand_distr::{Distribution, StandardNormal};

/// Aggregate statistics of one metric over a replication batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationStats<T: Real> {
    pub metric_name: String,
    pub mean: T,
    pub std_dev: T,
    pub std_err: T,
    pub n_reps: usize,
    pub seed: u64,
}

/// Metrics the replication engine can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    /// Normalized mutual information (interference treated as noise when the
    /// scenario carries an interference partition).
    MutualInfo,
    /// Normalized MMSE sum rate over the scenario's signal users.
    MmseSumRate,
}

impl MetricKind {
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::MutualInfo => "mutual_info",
            MetricKind::MmseSumRate => "mmse_sum_rate",
        }
    }
}

/// `B = sum_k H_k W_k P_k W_k^H H_k^H`, Hermitian PSD by construction.
pub fn build_b<T: Real>(
    h: &[ComplexMatrix<T>],
    w: &[ComplexMatrix<T>],
    powers: &[Vec<T>],
) -> Result<HermitianMatrix<T>> {
    if h.len() != w.len() || h.len() != powers.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} channels, {} precoders, {} power vectors",
            h.len(),
            w.len(),
            powers.len()
        )));
    }
    let n = h.first().map(|m| m.nrows()).unwrap_or(0);
    let mut b = ComplexMatrix::<T>::zeros(n, n);
    for (k, ((hk, wk), pk)) in h.iter().zip(w.iter()).zip(powers.iter()).enumerate() {
        if hk.nrows() != n || hk.ncols() != wk.nrows() || wk.ncols() != pk.len() {
            return Err(Error::DimensionMismatch(format!(
                "user {k}: H is {}x{}, W is {}x{}, P has {} entries",
                hk.nrows(),
                hk.ncols(),
                wk.nrows(),
                wk.ncols(),
                pk.len()
            )));
        }
        if pk.is_empty() {
            continue;
        }
        // H W diag(sqrt p) has Gram exactly the user's contribution.
        let mut hw = hk * wk;
        for (j, &p) in pk.iter().enumerate() {
            if p < T::zero() {
                return Err(Error::DimensionMismatch(format!(
                    "user {k}: negative power"
                )));
            }
            hw.column_mut(j).scale_mut(p.sqrt());
        }
        b += &hw * hw.adjoint();
    }
    HermitianMatrix::new(b)
}

/// Normalized mutual information `(1/N) logdet(I + B / sigma2)` in nats.
pub fn empirical_mutual_info<T: Real>(b: &HermitianMatrix<T>, sigma2: T) -> Result<T> {
    if !(sigma2 > T::zero()) {
        return Err(Error::InvalidNoise(to_f64(sigma2)));
    }
    let n = b.dim();
    if n == 0 {
        return Ok(T::zero());
    }
    let m = weighted_sum(n, [(T::one() / sigma2, b)], T::one())?;
    Ok(logdet_hpd(&m)? / real(n as f64))
}

/// Exact MMSE SINR for stream `(k, j)` by the direct route: remove the
/// stream's rank-one term from `B` and solve one positive-definite system.
pub fn empirical_mmse_sinr<T: Real>(
    h: &[ComplexMatrix<T>],
    w: &[ComplexMatrix<T>],
    powers: &[Vec<T>],
    sigma2: T,
    k: usize,
    j: usize,
) -> Result<T> {
    if !(sigma2 > T::zero()) {
        return Err(Error::InvalidNoise(to_f64(sigma2)));
    }
    let b = build_b(h, w, powers)?;
    let n = b.dim();
    if k >= h.len() || j >= powers[k].len() {
        return Err(Error::DimensionMismatch(format!("no stream ({k}, {j})")));
    }
    let p = powers[k][j];
    let hw = &h[k] * w[k].columns(j, 1);
    let downdated = b.matrix() - (&hw * hw.adjoint()) * Complex::new(p, T::zero());
    let shifted = HermitianMatrix::new(
        downdated + ComplexMatrix::identity(n, n) * Complex::new(sigma2, T::zero()),
    )?;
    let x = solve_hpd(&shifted, &hw)?;
    let q = (hw.adjoint() * x)[(0, 0)].re;
    Ok(p * q.max(T::zero()))
}

/// Guard on the Sherman-Morrison denominator `1 - p q`; below it the
/// downdate is refactorized directly.
fn downdate_floor<T: Real>() -> T {
    real(1e-8)
}

/// All per-stream SINRs of the requested users from one factorization of
/// `(B + sigma2 I)`, using the rank-one identity `gamma = p q / (1 - p q)`
/// with `q = w^H H^H (B + sigma2 I)^{-1} H w`; refactorizes the downdated
/// system whenever the denominator is smaller than the guard.
pub fn empirical_sinrs<T: Real>(
    h: &[ComplexMatrix<T>],
    w: &[ComplexMatrix<T>],
    powers: &[Vec<T>],
    sigma2: T,
    users: &[usize],
) -> Result<Vec<Vec<T>>> {
    if !(sigma2 > T::zero()) {
        return Err(Error::InvalidNoise(to_f64(sigma2)));
    }
    let b = build_b(h, w, powers)?;
    let n = b.dim();
    let shifted = weighted_sum(n, [(T::one(), &b)], sigma2)?;
    let floor = downdate_floor::<T>();
    let mut out = Vec::with_capacity(users.len());
    for &k in users {
        if k >= h.len() {
            return Err(Error::DimensionMismatch(format!("no user {k}")));
        }
        let hw_all = &h[k] * &w[k];
        let solved = solve_hpd(&shifted, &hw_all)?;
        let mut gammas = Vec::with_capacity(powers[k].len());
        for j in 0..powers[k].len() {
            let p = powers[k][j];
            let q = (hw_all.column(j).adjoint() * solved.column(j))[(0, 0)].re;
            let denom = T::one() - p * q;
            if denom > floor {
                gammas.push((p * q / denom).max(T::zero()));
            } else {
                gammas.push(empirical_mmse_sinr(h, w, powers, sigma2, k, j)?);
            }
        }
        out.push(gammas);
    }
    Ok(out)
}

/// Normalized MMSE sum rate `(1/N) sum_kj log(1 + gamma_kj)` over all users.
pub fn empirical_mmse_sum_rate<T: Real>(
    h: &[ComplexMatrix<T>],
    w: &[ComplexMatrix<T>],
    powers: &[Vec<T>],
    sigma2: T,
) -> Result<T> {
    let n = h.first().map(|m| m.nrows()).unwrap_or(0);
    let users: Vec<usize> = (0..h.len()).collect();
    let sinrs = empirical_sinrs(h, w, powers, sigma2, &users)?;
    let acc: T = sinrs.iter().flatten().map(|&g| (T::one() + g).ln()).sum();
    Ok(acc / real(n as f64))
}

/// One realization's metric values in the order of `metrics`.
fn evaluate_replication<T: Real>(
    scenario: &ScenarioSpec<T>,
    sampler: &ChannelSampler<T>,
    metrics: &[MetricKind],
    sigma2: T,
    stream_seed: u64,
    replication: u64,
) -> Result<Vec<T>>
where
    StandardNormal: Distribution<T>,
{
    let (h, w) = sampler.draw(stream_seed, replication + 1)?;
    let powers = scenario.powers();
    let mut out = Vec::with_capacity(metrics.len());
    for metric in metrics {
        match metric {
            MetricKind::MutualInfo => {
                let b_full = build_b(&h, &w, &powers)?;
                let mut value = empirical_mutual_info(&b_full, sigma2)?;
                let interferers = scenario.interference_users();
                if !interferers.is_empty() {
                    let hi: Vec<_> = interferers.iter().map(|&k| h[k].clone()).collect();
                    let wi: Vec<_> = interferers.iter().map(|&k| w[k].clone()).collect();
                    let pi: Vec<_> = interferers.iter().map(|&k| powers[k].clone()).collect();
                    let b_int = build_b(&hi, &wi, &pi)?;
                    value -= empirical_mutual_info(&b_int, sigma2)?;
                }
                out.push(value);
            }
            MetricKind::MmseSumRate => {
                let signal = scenario.signal_users.clone();
                let sinrs = empirical_sinrs(&h, &w, &powers, sigma2, &signal)?;
                let acc: T = sinrs.iter().flatten().map(|&g| (T::one() + g).ln()).sum();
                out.push(acc / real(scenario.rx as f64));
            }
        }
    }
    Ok(out)
}

/// Neumaier compensated sum over an ordered slice.
fn compensated_sum<T: Real>(values: impl Iterator<Item = T>) -> T {
    let mut sum = T::zero();
    let mut comp = T::zero();
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn stats_from_values<T: Real>(name: &str, values: &[T], seed: u64) -> ReplicationStats<T> {
    let n = values.len();
    let nf: T = real(n as f64);
    let mean = compensated_sum(values.iter().copied()) / nf;
    let std_dev = if n > 1 {
        let ss = compensated_sum(values.iter().map(|&v| (v - mean) * (v - mean)));
        (ss / (nf - T::one())).sqrt()
    } else {
        T::zero()
    };
    let std_err = std_dev / nf.sqrt();
    ReplicationStats {
        metric_name: name.to_string(),
        mean,
        std_dev,
        std_err,
        n_reps: n,
        seed,
    }
}

/// Runs `n_reps` independent replications of the scenario at one noise level
/// and aggregates each requested metric.
///
/// Quasi-static scenarios resample only the precoders (the channel is part
/// of the scenario); fading scenarios resample channels and precoders. Any
/// replication failure aborts the batch, reporting the replication index.
pub fn run_replications<T: Real>(
    scenario: &ScenarioSpec<T>,
    metrics: &[MetricKind],
    sigma2: T,
    n_reps: usize,
    seed: u64,
) -> Result<Vec<ReplicationStats<T>>>
where
    StandardNormal: Distribution<T>,
{
    if n_reps == 0 {
        return Err(Error::DimensionMismatch(
            "replication count must be at least 1".into(),
        ));
    }
    scenario.validate()?;
    let sampler = scenario.sampler()?;
    let rows: Vec<Result<Vec<T>>> = (0..n_reps as u64)
        .into_par_iter()
        .map(|rep| {
            evaluate_replication(scenario, &sampler, metrics, sigma2, seed, rep).map_err(|e| {
                Error::ReplicationFailed {
                    replication: rep,
                    source: Box::new(e),
                }
            })
        })
        .collect();

    // Scan in replication order so the reported failure index is the first
    // one, independent of scheduling.
    let mut per_metric: Vec<Vec<T>> = vec![Vec::with_capacity(n_reps); metrics.len()];
    for row in rows {
        let values = row?;
        for (acc, v) in per_metric.iter_mut().zip(values) {
            acc.push(v);
        }
    }
    Ok(metrics
        .iter()
        .zip(per_metric.iter())
        .map(|(m, vals)| stats_from_values(m.name(), vals, seed))
        .collect())
}
