//! Structural invariants checked on randomized inputs: matrix-square-root
//! reconstruction, monotonicity of the fixed points and metrics in the noise
//! level, the Stieltjes-transform derivative and integral identities, and
//! concentration of the Monte Carlo estimates with growing dimension.

use detequiv::ensembles::{sample_gaussian_matrix, RngStream};
use detequiv::metrics::{
    det_mmse_sum_rate_quasi_static, det_mutual_info_quasi_static, det_sinr_quasi_static,
    det_stieltjes,
};
use detequiv::montecarlo::{run_replications, MetricKind};
use detequiv::numerics::{hermitian_sqrt, HermitianMatrix};
use detequiv::scenario::{build_three_cell_sdma, rate_with_interference_det};
use detequiv::solver::{solve_quasi_static, Dims, SolverConfig, UserDims};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn cfg() -> SolverConfig<f64> {
    SolverConfig::default()
}

fn random_psd(dim: usize, rng: &mut ChaCha8Rng) -> HermitianMatrix<f64> {
    let x = sample_gaussian_matrix::<f64>(dim, dim, 1.0, rng);
    HermitianMatrix::gram(&x).scaled(1.0 / dim as f64)
}

#[test]
fn hermitian_sqrt_idempotent_up_to_dim_64() {
    let mut rng = RngStream::new(51, 0).rng();
    for &dim in &[1usize, 2, 5, 16, 33, 64] {
        let m = random_psd(dim, &mut rng);
        let s = hermitian_sqrt(&m).unwrap();
        let rel = (s.matrix() * s.matrix() - m.matrix()).norm() / m.norm().max(1.0);
        assert!(rel <= 1e-9, "dim {dim}: reconstruction error {rel:.3e}");
    }
}

/// One random multi-user quasi-static instance.
fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<HermitianMatrix<f64>>, Vec<Vec<f64>>, Dims) {
    let k_users = rng.random_range(1..=3);
    let rx = rng.random_range(4..=12);
    let mut users = Vec::new();
    let mut r = Vec::new();
    let mut p = Vec::new();
    for _ in 0..k_users {
        let tx = rng.random_range(2..=rx.max(3));
        let streams = rng.random_range(1..tx.max(2));
        users.push(UserDims { tx, streams });
        r.push(random_psd(rx, rng));
        p.push((0..streams).map(|_| rng.random_range(0.2..2.0)).collect());
    }
    (r, p, Dims::new(rx, users))
}

#[test]
fn fixed_point_strictly_decreasing_in_noise() {
    let mut rng = RngStream::new(52, 0).rng();
    for _ in 0..5 {
        let (r, p, dims) = random_instance(&mut rng);
        let grid = [0.2, 0.5, 1.0, 2.0, 5.0, 20.0];
        let mut last: Option<(Vec<f64>, f64, f64, f64)> = None;
        for &sigma2 in &grid {
            let sol = solve_quasi_static(&r, &p, &dims, sigma2, &cfg()).unwrap();
            let mi = det_mutual_info_quasi_static(&sol, &r, &p, &dims, sigma2).unwrap();
            let rate = det_mmse_sum_rate_quasi_static(&sol, &p, &dims).unwrap();
            let gamma = det_sinr_quasi_static(&sol, &dims, 0, p[0][0]).unwrap();
            if let Some((a_prev, mi_prev, rate_prev, g_prev)) = &last {
                for (cur, prev) in sol.a.iter().zip(a_prev) {
                    assert!(cur < prev, "a not strictly decreasing");
                }
                assert!(mi < *mi_prev, "mutual information not decreasing");
                assert!(rate < *rate_prev, "sum rate not decreasing");
                assert!(gamma < *g_prev, "SINR not decreasing");
            }
            last = Some((sol.a.clone(), mi, rate, gamma));
        }
    }
}

#[test]
fn mutual_info_bounded_by_gain_over_noise() {
    // ||B|| <= K max ||P|| max ||R||, so I <= log(1 + KPR/s2) <= KPR/s2.
    let mut rng = RngStream::new(53, 0).rng();
    let (r, p, dims) = random_instance(&mut rng);
    let k = dims.users.len() as f64;
    let pmax = p.iter().flatten().fold(0.0f64, |m, &v| m.max(v));
    let rmax = r
        .iter()
        .map(|m| *m.eigenvalues().last().unwrap())
        .fold(0.0f64, f64::max);
    for &sigma2 in &[0.1, 1.0, 10.0, 1000.0] {
        let sol = solve_quasi_static(&r, &p, &dims, sigma2, &cfg()).unwrap();
        let mi = det_mutual_info_quasi_static(&sol, &r, &p, &dims, sigma2).unwrap();
        assert!(mi >= -1e-12);
        assert!(
            mi <= k * pmax * rmax / sigma2 + 1e-12,
            "bound violated at {sigma2}"
        );
    }
}

#[test]
fn derivative_identity_via_finite_differences() {
    let mut rng = RngStream::new(54, 0).rng();
    let (r, p, dims) = random_instance(&mut rng);
    let tight = SolverConfig {
        tol: 1e-13,
        ..cfg()
    };
    for &sigma2 in &[0.5f64, 2.0] {
        let h = 1e-4 * sigma2;
        let mi = |s: f64| {
            let sol = solve_quasi_static(&r, &p, &dims, s, &tight).unwrap();
            det_mutual_info_quasi_static(&sol, &r, &p, &dims, s).unwrap()
        };
        let fd = (mi(sigma2 + h) - mi(sigma2 - h)) / (2.0 * h);
        let sol = solve_quasi_static(&r, &p, &dims, sigma2, &tight).unwrap();
        let analytic = -1.0 / sigma2 + det_stieltjes(&sol, &r, &dims, sigma2).unwrap();
        let rel = (fd - analytic).abs() / analytic.abs().max(1e-12);
        assert!(
            rel < 1e-5,
            "sigma2={sigma2}: fd {fd} vs {analytic} (rel {rel:.2e})"
        );
    }
}

/// Adaptive Simpson quadrature.
fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 40)
}

#[test]
fn shannon_transform_consistency() {
    // I(sigma2) = integral over t in [sigma2, inf) of (1/t - m(-t)) dt,
    // truncated at T_max with tail below KPR/T_max.
    let lambda = [0.5, 1.0, 2.0, 3.0];
    let r = vec![HermitianMatrix::from_real_diagonal(&lambda)];
    let p = vec![vec![1.0, 2.0]];
    let dims = Dims::new(4, vec![UserDims { tx: 3, streams: 2 }]);
    let sigma2 = 1.0;

    let sol = solve_quasi_static(&r, &p, &dims, sigma2, &cfg()).unwrap();
    let mi = det_mutual_info_quasi_static(&sol, &r, &p, &dims, sigma2).unwrap();

    let kpr = 1.0 * 2.0 * 3.0; // K * max P * max ||R||
    let t_max = kpr / 2.5e-5;
    let integrand = |t: f64| {
        let s = solve_quasi_static(&r, &p, &dims, t, &cfg()).unwrap();
        1.0 / t - det_stieltjes(&s, &r, &dims, t).unwrap()
    };
    let integral = adaptive_simpson(&integrand, sigma2, t_max, 2.5e-5);
    assert!(
        (mi - integral).abs() < 1e-4,
        "mutual info {mi} vs Shannon integral {integral}"
    );
}

#[test]
fn difference_of_logdets_is_nonnegative() {
    for seed in [1u64, 2, 3] {
        let scenario = build_three_cell_sdma(0.6f64, 3, 12, 6, seed).unwrap();
        for &sigma2 in &[0.05, 0.5, 5.0] {
            let v = rate_with_interference_det(&scenario, sigma2, &cfg()).unwrap();
            assert!(v >= -1e-12, "seed {seed}, sigma2 {sigma2}: {v}");
        }
    }
}

#[test]
fn fading_solution_satisfies_all_three_equations() {
    // Substitute the returned fixed point into every equation of the fading
    // system, recomputing each right-hand side from scratch here.
    use detequiv::numerics::{inverse_hpd, trace_product, weighted_sum};
    use detequiv::solver::{solve_fading, solve_fading_with_init, ColumnCorrelations};

    let mut rng = RngStream::new(55, 0).rng();
    let rx = 6;
    let users = vec![
        UserDims { tx: 4, streams: 2 },
        UserDims { tx: 3, streams: 2 },
    ];
    let r: Vec<ColumnCorrelations<f64>> = users
        .iter()
        .map(|u| ColumnCorrelations::General((0..u.tx).map(|_| random_psd(rx, &mut rng)).collect()))
        .collect();
    let p = vec![vec![1.2, 0.4], vec![0.9, 1.6]];
    let dims = Dims::new(rx, users);
    let sigma2 = 0.6;
    let sol = solve_fading(&r, &p, &dims, sigma2, &cfg()).unwrap();

    // zeta equations: rebuild the resolvent argument by hand.
    let mut terms: Vec<(f64, HermitianMatrix<f64>)> = Vec::new();
    for (k, cols) in r.iter().enumerate() {
        if let ColumnCorrelations::General(mats) = cols {
            for (j, m) in mats.iter().enumerate() {
                let w = sol.b_bar[k] / (rx as f64 * (1.0 + sol.b_bar[k] * sol.zeta[k][j]));
                terms.push((w, m.clone()));
            }
        }
    }
    let m = weighted_sum(rx, terms.iter().map(|(w, m)| (*w, m)), sigma2).unwrap();
    let minv = inverse_hpd(&m).unwrap();
    for (k, cols) in r.iter().enumerate() {
        if let ColumnCorrelations::General(mats) = cols {
            for (j, rm) in mats.iter().enumerate() {
                let rhs = trace_product(rm, &minv) / rx as f64;
                assert!((rhs - sol.zeta[k][j]).abs() <= 1e-10, "zeta ({k},{j})");
                assert!(sol.zeta[k][j] >= 0.0);
            }
        }
        // b equation.
        let b_rhs = sol.zeta[k]
            .iter()
            .map(|&z| z / (1.0 + sol.b_bar[k] * z))
            .sum::<f64>()
            / rx as f64;
        assert!((b_rhs - sol.b[k]).abs() <= 1e-10, "b equation, user {k}");
        // b_bar equation.
        let c_bar: f64 = dims.antenna_ratio(k);
        let bb_rhs = p[k]
            .iter()
            .map(|&pe| pe / (c_bar - sol.b[k] * sol.b_bar[k] + sol.b[k] * pe))
            .sum::<f64>()
            / rx as f64;
        assert!(
            (bb_rhs - sol.b_bar[k]).abs() <= 1e-10,
            "b_bar equation, user {k}"
        );
        // Range constraint.
        let bound = dims.load::<f64>(k) * c_bar;
        assert!(sol.b[k] * sol.b_bar[k] < bound + 1e-12);
    }

    // Restart independence of the fading iteration.
    for init in [vec![0.3, 1.0], vec![2.0, 0.01]] {
        let alt = solve_fading_with_init(&r, &p, &dims, sigma2, &cfg(), &init).unwrap();
        for k in 0..2 {
            assert!((alt.b[k] - sol.b[k]).abs() < 1e-8);
            assert!((alt.b_bar[k] - sol.b_bar[k]).abs() < 1e-8);
        }
    }
}

#[test]
fn monte_carlo_concentrates_with_dimension() {
    // Scaling (N, N_i, n) by 2 shrinks both the spread of I_N and its
    // distance to the deterministic equivalent.
    let sigma2 = 0.5;
    let mut stds = Vec::new();
    let mut devs = Vec::new();
    for (n_rx, n_tx, n_streams) in [(8usize, 4usize, 2usize), (16, 8, 4), (32, 16, 8)] {
        let scenario = build_three_cell_sdma(0.5f64, n_streams, n_rx, n_tx, 4242).unwrap();
        let det = rate_with_interference_det(&scenario, sigma2, &cfg()).unwrap();
        let stats =
            run_replications(&scenario, &[MetricKind::MutualInfo], sigma2, 400, 77).unwrap();
        stds.push(stats[0].std_dev);
        devs.push((stats[0].mean - det).abs());
    }
    assert!(
        stds[0] > stds[1] && stds[1] > stds[2],
        "stds not decreasing: {stds:?}"
    );
    assert!(
        devs[2] < devs[0],
        "deterministic-equivalent deviation not shrinking: {devs:?}"
    );
}
