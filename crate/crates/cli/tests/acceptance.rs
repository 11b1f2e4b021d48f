//! Acceptance run: every criterion at its stated tolerance, one line each.

use std::f64::consts::{PI, TAU};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::Rng;
use wva_core::closed_form::{self as cf, ProtocolConfig};
use wva_core::estimation::{crb_check, experiment_rng, optimal_information_time, CrbConfig, Measurement, Strategy};
use wva_core::noise::{AttenuationModel, PopulationModel};
use wva_core::oracle::{self, CircuitSpec};
use wva_core::Error;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn fail(e: impl std::fmt::Display) -> Outcome {
    outcome(false, format!("error: {e}"))
}

fn within_budget(elapsed: Duration, budget: Duration) -> String {
    format!("{:.2}s of {:.0}s budget", elapsed.as_secs_f64(), budget.as_secs_f64())
}

fn ratio_never_exceeds_one() -> Outcome {
    let start = Instant::now();
    let mut rng = experiment_rng(2024, 1);
    let (mut worst, mut evaluated, mut degenerate) = (f64::NEG_INFINITY, 0usize, 0usize);
    for _ in 0..100_000 {
        let g = rng.gen_range(0.0..=1.0);
        let rel = rng.gen_range(0.0..TAU);
        let xi = rng.gen_range(0.0..=1.0);
        let t = rng.gen_range(1e-3..=5.0);
        let phase = rng.gen_range(0.0..TAU);
        match cf::wva_report(&ProtocolConfig::wva(g, rel, xi, t, phase / t)) {
            Ok(r) => {
                worst = worst.max(r.ratio_direct);
                evaluated += 1;
            }
            Err(Error::Degenerate { .. }) => degenerate += 1,
            Err(e) => return fail(e),
        }
    }
    let elapsed = start.elapsed();
    let budget = Duration::from_secs(5);
    outcome(
        worst <= 1.0 + 1e-12 && evaluated + degenerate == 100_000 && elapsed < budget,
        format!(
            "max ratio {worst:.15} over {evaluated} points ({degenerate} degenerate), {}",
            within_budget(elapsed, budget)
        ),
    )
}

fn strong_measurement_anchor() -> Outcome {
    let mut rng = experiment_rng(2024, 2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let cfg = ProtocolConfig::wva(1.0, rng.gen_range(0.0..TAU), rng.gen_range(0.0..=1.0), rng.gen_range(1e-3..=5.0), 0.0);
        match cf::wva_report(&cfg) {
            Ok(r) => worst = worst.max((r.ratio_direct - 0.5).abs()),
            Err(e) => return fail(e),
        }
    }
    outcome(worst <= 1e-15, format!("max |ratio - 0.5| = {worst:e} over 1000 points"))
}

fn decoherence_free_recovery() -> Outcome {
    match cf::wva_report(&ProtocolConfig::wva(1e-3, PI, 1.0, 1.0, 0.0)) {
        Ok(r) => outcome(r.ratio_direct >= 0.999999, format!("ratio {:.10}", r.ratio_direct)),
        Err(e) => fail(e),
    }
}

fn catastrophic_decoherence() -> Outcome {
    match cf::wva_report(&ProtocolConfig::wva(0.02, PI, 0.99, 1.0, 0.0)) {
        Ok(r) => outcome((r.ratio_direct - 0.047).abs() <= 1e-3, format!("ratio {:.6}", r.ratio_direct)),
        Err(e) => fail(e),
    }
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let grid = oracle::default_verification_grid();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(1).build() {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let report = match pool.install(|| oracle::verify_closed_forms(&grid, 1e-6)) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let elapsed = start.elapsed();
    let budget = Duration::from_secs(60);
    outcome(
        report.passed && report.total_points == 10_000 && report.max_deviation < 1e-6 && elapsed < budget,
        format!(
            "max deviation {:.3e} over {} points ({} skipped, {} precision warnings), single thread, {}",
            report.max_deviation,
            report.evaluated_points,
            report.skipped_points.len(),
            report.precision_warnings,
            within_budget(elapsed, budget)
        ),
    )
}

fn branch_identities() -> Outcome {
    let (mut additivity, mut excess, mut count) = (0.0f64, f64::NEG_INFINITY, 0usize);
    for point in oracle::default_verification_grid().points() {
        let cfg = match point.protocol_config() {
            Ok(c) => c,
            Err(e) => return fail(e),
        };
        match cf::wva_report(&cfg) {
            Ok(r) => {
                additivity = additivity.max((r.q * r.h_wva + (1.0 - r.q) * r.h_perp - r.h_total).abs());
                excess = excess.max(r.h_total - r.h_d);
                count += 1;
            }
            Err(Error::Degenerate { .. }) => {}
            Err(e) => return fail(e),
        }
    }
    let mut noiseless = 0.0f64;
    for k in 1..=1000 {
        let g = k as f64 / 1000.0;
        for t in [0.5, 1.0, 1.5, 3.0] {
            match cf::wva_report(&ProtocolConfig::wva(g, PI, 1.0, t, 0.4)) {
                Ok(r) => noiseless = noiseless.max((r.h_total - t * t).abs()),
                Err(e) => return fail(e),
            }
        }
    }
    outcome(
        additivity <= 1e-10 && excess <= 1e-12 && noiseless <= 1e-10,
        format!(
            "additivity residual {additivity:.2e} and max(H_total - H_d) = {excess:.2e} over {count} points; \
             |H_total - t^2| at xi=1 {noiseless:.2e}"
        ),
    )
}

fn population_independence() -> Outcome {
    let (t, delta_b) = (1.0, 0.2);
    let (mut worst, mut count) = (0.0f64, 0usize);
    for i in 0..10 {
        for j in 0..10 {
            for k in 0..10 {
                let t1 = 0.5 + 4.5 * i as f64 / 9.0;
                let g = 0.1 + 0.9 * j as f64 / 9.0;
                let rel = 1.8 * PI * k as f64 / 9.0;
                let relaxation = PopulationModel::Relaxation { t1 };
                let xi = match relaxation.evaluate(t) {
                    Ok((_, xi)) => xi,
                    Err(e) => return fail(e),
                };
                let cfg = ProtocolConfig::wva(g, rel, xi, t, delta_b);
                let unpolarized = PopulationModel::dephasing(AttenuationModel::Constant { xi0: xi });
                let run = |model: &PopulationModel| {
                    CircuitSpec::with_population_model(cfg, model).and_then(|s| oracle::simulate_protocol(&s))
                };
                match (run(&relaxation), run(&unpolarized)) {
                    (Ok(a), Ok(b)) => {
                        worst = worst.max((a.h_numeric - b.h_numeric).abs() / b.h_numeric.abs().max(1e-12));
                        count += 1;
                    }
                    (Err(e), _) | (_, Err(e)) => return fail(e),
                }
            }
        }
    }
    outcome(
        worst < 1e-8 && count == 1000,
        format!("max relative difference {worst:.2e} over {count} points (T1 in [0.5, 5], G in [0.1, 1])"),
    )
}

fn meter_noise_anchors() -> Outcome {
    let (mut worst_closed, mut worst_circuit) = (0.0f64, 0.0f64);
    for sigma in [1.0, 0.9, 0.5, 0.2] {
        for t in [0.5, 1.0, 2.0] {
            for (g, expected) in [(1.0, 0.5 * sigma * sigma * t * t), (1e-3, sigma * sigma * t * t)] {
                let cfg = ProtocolConfig::wva(g, PI, 1.0, t, 0.3).with_sigma(sigma);
                let closed = match cf::noisy_meter_report(&cfg) {
                    Ok(r) => r.q_h_wva_tilde,
                    Err(e) => return fail(e),
                };
                let circuit = match oracle::simulate_protocol(&CircuitSpec::noisy_meter(cfg)) {
                    Ok(r) => r.q * r.h_numeric,
                    Err(e) => return fail(e),
                };
                worst_closed = worst_closed.max((closed - expected).abs() / expected);
                worst_circuit = worst_circuit.max((circuit - expected).abs() / expected);
            }
        }
    }
    outcome(
        worst_closed <= 1e-5 && worst_circuit <= 1e-5,
        format!(
            "max relative deviation at G = 1 and G = 1e-3: closed form {worst_closed:.2e}, circuit {worst_circuit:.2e}"
        ),
    )
}

fn optimal_time_anchor() -> Outcome {
    let mut details = Vec::new();
    let mut passed = true;
    for gamma in [0.1, 1.0, 10.0] {
        let h = |t: f64| Ok(cf::h_direct(t, (-gamma * t).exp()));
        match optimal_information_time(h, 0.0, 20.0 / gamma) {
            Ok(best) => {
                let rel = (best.t * gamma - 1.0).abs();
                passed &= rel < 1e-6;
                details.push(format!("gamma {gamma}: t* = {:.9} (rel {rel:.1e})", best.t));
            }
            Err(e) => return fail(e),
        }
    }
    outcome(passed, details.join("; "))
}

fn cramer_rao_saturation() -> Outcome {
    let start = Instant::now();
    let band = 0.85..=1.35;
    let direct_cfg = ProtocolConfig::wva(1.0, PI, (-0.2f64).exp(), 1.0, 0.0);
    let direct = match crb_check(&CrbConfig::new(direct_cfg, Strategy::Direct, Measurement::SigmaX)) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let star = ProtocolConfig::wva(0.02, PI, 1.0, 1.0, 0.0);
    let mut post_config = CrbConfig::new(star, Strategy::Postselected, Measurement::Optimal);
    post_config.n_trials = 10_000_000;
    let post = match crb_check(&post_config) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let q_h_wva = match cf::wva_report(&star) {
        Ok(r) => r.q_h_wva,
        Err(e) => return fail(e),
    };
    let against_closed = post.empirical_variance * post.n_trials as f64 * q_h_wva;
    let elapsed = start.elapsed();
    let budget = Duration::from_secs(120);
    outcome(
        band.contains(&direct.ratio)
            && band.contains(&post.ratio)
            && band.contains(&against_closed)
            && direct.warnings.is_empty()
            && post.warnings.is_empty()
            && elapsed < budget,
        format!(
            "direct N=1e3 M=300 ratio {:.3}; postselected N=1e7 (mean {:.0} accepted) M=300 ratio {:.3}, \
             variance x N qH_wva = {against_closed:.3}; {}",
            direct.ratio,
            post.mean_accepted,
            post.ratio,
            within_budget(elapsed, budget)
        ),
    )
}

fn column(path: &Path, name: &str) -> Result<Vec<Option<f64>>, String> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let idx = reader
        .headers()
        .map_err(|e| e.to_string())?
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| format!("no column {name} in {}", path.display()))?;
    reader
        .records()
        .map(|r| {
            let r = r.map_err(|e| e.to_string())?;
            match &r[idx] {
                "degenerate" => Ok(None),
                v => v.parse().map(Some).map_err(|e| format!("{v}: {e}")),
            }
        })
        .collect()
}

fn figure_regeneration() -> Outcome {
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return fail(e),
    };
    let out = dir.path().to_string_lossy().into_owned();
    for fig in ["fig2", "fig4"] {
        match Command::new(env!("CARGO_BIN_EXE_wva")).args(["figure", fig, "--out", &out]).output() {
            Ok(o) if o.status.success() => {}
            Ok(o) => return outcome(false, format!("figure {fig} exited with {}", o.status)),
            Err(e) => return fail(e),
        }
    }
    let ratio = match column(&dir.path().join("fig2_q_h_wva_over_h_d.csv"), "q_h_wva_over_h_d") {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let defined: Vec<f64> = ratio.iter().flatten().copied().collect();
    let max = defined.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let fig4 = dir.path().join("fig4.csv");
    let read = |name: &str| column(&fig4, name);
    let (t, gamma, h_d, q_h) = match (read("t"), read("gamma"), read("h_d"), read("q_h_wva")) {
        (Ok(a), Ok(b), Ok(c), Ok(d)) => (a, b, c, d),
        (Err(e), ..) | (_, Err(e), ..) | (.., Err(e), _) | (.., Err(e)) => return fail(e),
    };
    let (mut checked, mut violations) = (0usize, 0usize);
    for k in 0..t.len() {
        if let (Some(t), Some(gamma), Some(h_d), Some(q_h)) = (t[k], gamma[k], h_d[k], q_h[k]) {
            if t > 0.0 && gamma > 0.0 {
                checked += 1;
                violations += usize::from(q_h >= h_d);
            }
        }
    }
    outcome(
        max <= 1.0 && !defined.is_empty() && checked > 0 && violations == 0,
        format!(
            "fig2 ratio pane max {max:.15} over {} cells ({} degenerate); fig4 qH_wva < H_d at {checked} of {checked} \
             points with t, gamma > 0 ({violations} violations)",
            defined.len(),
            ratio.len() - defined.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("postselected ratio never exceeds one", ratio_never_exceeds_one),
        ("strong measurement gives exactly one half", strong_measurement_anchor),
        ("decoherence-free weak coupling recovers unity", decoherence_free_recovery),
        ("small attenuation is catastrophic", catastrophic_decoherence),
        ("closed forms match circuit simulation", oracle_equivalence),
        ("branch additivity and total information bound", branch_identities),
        ("population does not affect the information", population_independence),
        ("meter-noise anchors", meter_noise_anchors),
        ("optimal time for exponential dephasing", optimal_time_anchor),
        ("maximum likelihood saturates the Cramer-Rao bound", cramer_rao_saturation),
        ("figure regeneration", figure_regeneration),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let label = if result.passed { "PASS" } else { "FAIL" };
        failed += usize::from(!result.passed);
        println!(
            "[{label}] criterion {:>2}: {name} ({:.2}s): {}",
            k + 1,
            start.elapsed().as_secs_f64(),
            result.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
