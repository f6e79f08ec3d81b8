//! Minimal library walkthrough: solve the fading fixed point for an
//! uncorrelated square channel, evaluate the deterministic metrics, and
//! compare against Monte Carlo replications of the exact finite-dimension
//! system.

use detequiv::montecarlo::{run_replications, MetricKind};
use detequiv::numerics::HermitianMatrix;
use detequiv::scenario::{evaluate_deterministic, ScenarioSpec, UserChannel, UserSpec};
use detequiv::solver::ColumnCorrelations;

fn main() {
    // One user, 8 antennas everywhere, identity column correlations, full
    // stream load with unit power: the spectrum follows the square-channel
    // limit law and everything has a closed form.
    let n = 8;
    let scenario: ScenarioSpec<f64> = ScenarioSpec {
        rx: n,
        users: vec![UserSpec {
            tx: n,
            streams: n,
            power: vec![1.0; n],
            channel: UserChannel::Fading(ColumnCorrelations::Scaled {
                base: HermitianMatrix::identity(n),
                scales: vec![1.0; n],
            }),
        }],
        signal_users: vec![0],
        sigma2_grid: vec![1.0],
    };

    let cfg = detequiv::SolverConfigF64::default();
    for snr_db in [-5.0f64, 0.0, 5.0, 10.0] {
        let sigma2 = 10f64.powf(-snr_db / 10.0);
        let (report, diag) = evaluate_deterministic(&scenario, sigma2, &cfg).unwrap();
        let stats = run_replications(
            &scenario,
            &[MetricKind::MutualInfo, MetricKind::MmseSumRate],
            sigma2,
            500,
            7,
        )
        .unwrap();
        let zeta = (-1.0 + (1.0 + 4.0 / sigma2).sqrt()) / 2.0;
        println!(
            "SNR {snr_db:>5} dB | det I = {:.5} (closed form {:.5}), MC I = {:.5} ± {:.5} | \
             det R = {:.5}, MC R = {:.5} | {} outer iterations",
            report.mutual_info,
            (1.0 + zeta + 1.0 / sigma2).ln() - zeta / (1.0 + zeta),
            stats[0].mean,
            stats[0].std_err,
            report.mmse_sum_rate,
            stats[1].mean,
            diag.outer_iters,
        );
    }
}
