use std::f64::consts::PI;

use proptest::prelude::*;
use wva_core::closed_form::{h_direct, ProtocolConfig};
use wva_core::estimation::{
    crb_check, default_interval, mle_estimate, observed_information, optimal_information_time,
    optimal_sensitivity_time, sample_outcomes, sensitivity, CrbConfig, Measurement, Strategy,
};
use wva_core::noise::system_density;
use wva_core::state::Povm;
use wva_core::Error;

fn sigma_x_family(t: f64, xi: f64) -> impl Fn(f64) -> wva_core::Result<Vec<f64>> {
    move |d| system_density(d, t, 1.0, xi).map(|rho| Povm::sigma_x().probabilities(&rho))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn counts_sum_to_trials(xi in 0.0..=1.0f64, db in -1.0..1.0f64, n in 1u64..100_000, seed in any::<u64>()) {
        let rho = system_density(db, 1.0, 1.0, xi).unwrap();
        let record = sample_outcomes(&rho, &Povm::sigma_x(), n, seed).unwrap();
        prop_assert_eq!(record.counts.iter().sum::<u64>(), n);
    }

    #[test]
    fn estimate_stays_in_interval(xi in 0.2..=1.0f64, db in -1.0..1.0f64, seed in any::<u64>()) {
        let t = 1.0;
        let rho = system_density(db, t, 1.0, xi).unwrap();
        let record = sample_outcomes(&rho, &Povm::sigma_x(), 500, seed).unwrap();
        let (lo, hi) = default_interval(t);
        let est = mle_estimate(&record, sigma_x_family(t, xi), (lo, hi)).unwrap();
        prop_assert!((lo..=hi).contains(&est.delta_b_hat));
    }
}

#[test]
fn sampled_counts_within_five_sigma() {
    let rho = system_density(0.4, 1.2, 1.0, 0.8).unwrap();
    let p = Povm::sigma_x().probabilities(&rho)[0];
    let n = 100_000u64;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    for seed in 0..50 {
        let record = sample_outcomes(&rho, &Povm::sigma_x(), n, seed).unwrap();
        assert!((record.counts[0] as f64 - n as f64 * p).abs() <= 5.0 * sd, "seed {seed}");
    }
}

#[test]
fn zero_trials_rejected() {
    let rho = system_density(0.0, 1.0, 1.0, 1.0).unwrap();
    assert!(sample_outcomes(&rho, &Povm::sigma_x(), 0, 1).is_err());
}

#[test]
fn mle_is_close_to_truth() {
    let (t, xi, truth) = (1.0, 0.9, 0.3);
    let family = sigma_x_family(t, xi);
    let f = wva_core::fisher::classical_fisher(&family, truth, 1e-5).unwrap();
    let n = 20_000;
    let rho = system_density(truth, t, 1.0, xi).unwrap();
    let record = sample_outcomes(&rho, &Povm::sigma_x(), n, 7).unwrap();
    let est = mle_estimate(&record, &family, default_interval(t)).unwrap();
    assert!((est.delta_b_hat - truth).abs() < 5.0 / (n as f64 * f).sqrt());
    assert!(est.warnings.is_empty());
}

#[test]
fn observed_information_converges() {
    let (t, xi, truth) = (1.0, 0.85, 0.2);
    let family = sigma_x_family(t, xi);
    let f = wva_core::fisher::classical_fisher(&family, truth, 1e-5).unwrap();
    let rho = system_density(truth, t, 1.0, xi).unwrap();
    let mut medians = Vec::new();
    for n in [100u64, 1_000, 10_000] {
        let mut deviations: Vec<f64> = (0..50)
            .map(|rep| {
                let record = sample_outcomes(&rho, &Povm::sigma_x(), n, 1_000 + rep).unwrap();
                let est = mle_estimate(&record, &family, default_interval(t)).unwrap();
                let obs = observed_information(&record, &family, est.delta_b_hat, 1e-4).unwrap();
                (obs - f).abs() / f
            })
            .collect();
        deviations.sort_by(f64::total_cmp);
        medians.push(0.5 * (deviations[24] + deviations[25]));
    }
    assert!(medians[0] > medians[1] && medians[1] > medians[2], "{medians:?}");
}

#[test]
fn direct_readout_reaches_bound() {
    let cfg = ProtocolConfig::wva(1.0, PI, (-0.2f64).exp(), 1.0, 0.0);
    let report = crb_check(&CrbConfig::new(cfg, Strategy::Direct, Measurement::SigmaX)).unwrap();
    assert!((0.85..=1.35).contains(&report.ratio), "{}", report.ratio);
    assert!(report.empirical_variance >= 0.0);
    let again = crb_check(&CrbConfig::new(cfg, Strategy::Direct, Measurement::SigmaX)).unwrap();
    assert_eq!(report, again);
}

#[test]
fn incoherent_system_has_no_bound() {
    let cfg = ProtocolConfig::wva(1.0, PI, 0.0, 1.0, 0.0);
    assert!(matches!(
        crb_check(&CrbConfig::new(cfg, Strategy::Direct, Measurement::SigmaX)),
        Err(Error::ZeroInformation)
    ));
}

#[test]
fn sensitivity_optimum_for_exponential_dephasing() {
    for gamma in [0.1, 1.0, 10.0] {
        let h = |t: f64| Ok(h_direct(t, (-gamma * t).exp()));
        let best = optimal_sensitivity_time(h, 1e-3 / gamma, 10.0 / gamma).unwrap();
        assert!((best.t * 2.0 * gamma - 1.0).abs() < 1e-6, "gamma {gamma}: {}", best.t);
        let peak = optimal_information_time(h, 0.0, 10.0 / gamma).unwrap();
        assert!((peak.t * gamma - 1.0).abs() < 1e-6, "gamma {gamma}: {}", peak.t);
    }
}

#[test]
fn coherent_sensitivity_decreases() {
    let s: Vec<f64> = (1..50).map(|k| sensitivity(k as f64 * 0.1, h_direct(k as f64 * 0.1, 1.0)).unwrap()).collect();
    assert!(s.windows(2).all(|w| w[1] < w[0]));
    assert!((s[9] - 1.0).abs() < 1e-15);
    assert!(sensitivity(1.0, 0.0).is_err());
}
