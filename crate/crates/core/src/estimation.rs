//! Monte-Carlo sampling of measurement records and maximum-likelihood
//! estimation of the field offset.

use std::f64::consts::FRAC_PI_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::ProtocolConfig;
use crate::eigen::eigh_2x2;
use crate::error::{Error, Result};
use crate::fisher::{self, default_step, NORMALIZATION_TOLERANCE};
use crate::oracle::{Branch, CircuitSpec};
use crate::optimize::{self, DEFAULT_GRID_POINTS, DEFAULT_WIDTH};
use crate::state::{Povm, QubitState};

/// Expected information `N·F` below which the Cramér–Rao bound is not
/// expected to be tight.
pub const ASYMPTOTIC_INFORMATION: f64 = 100.0;

/// Per-trial Fisher information (relative to `t²`) treated as zero.
pub const ZERO_INFORMATION: f64 = 1e-12;

/// Random stream for experiment `index` under `seed`.
pub fn experiment_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub counts: Vec<u64>,
    pub n: u64,
    pub seed: u64,
}

fn check_probabilities(p: &[f64]) -> Result<()> {
    if p.iter().any(|x| !x.is_finite() || *x < -NORMALIZATION_TOLERANCE) {
        return Err(Error::NonFinite);
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::ProbabilityNormalization(total));
    }
    Ok(())
}

/// Multinomial draw of `n` trials as a chain of conditional binomials.
pub fn multinomial(probabilities: &[f64], n: u64, rng: &mut ChaCha8Rng) -> Result<Vec<u64>> {
    check_probabilities(probabilities)?;
    let mut counts = vec![0u64; probabilities.len()];
    let mut left = n;
    let mut mass = 1.0;
    for (k, &p) in probabilities.iter().enumerate() {
        if left == 0 {
            break;
        }
        if k + 1 == probabilities.len() {
            counts[k] = left;
            break;
        }
        let cond = if mass > 0.0 { (p.max(0.0) / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(left, cond)
            .map_err(|e| Error::Domain(e.to_string()))?
            .sample(rng);
        counts[k] = draw;
        left -= draw;
        mass -= p.max(0.0);
    }
    Ok(counts)
}

/// Measure `n` copies of `rho` with `povm`.
pub fn sample_outcomes(rho: &QubitState, povm: &Povm, n: u64, seed: u64) -> Result<OutcomeRecord> {
    if n == 0 {
        return Err(Error::Domain("at least one trial is needed".into()));
    }
    let counts = multinomial(&povm.probabilities(rho), n, &mut experiment_rng(seed, 0))?;
    Ok(OutcomeRecord { counts, n, seed })
}

/// `Σ n_k ln p_k`
pub fn log_likelihood(counts: &[u64], probabilities: &[f64]) -> f64 {
    counts
        .iter()
        .zip(probabilities)
        .filter(|(n, _)| **n > 0)
        .map(|(&n, &p)| if p > 0.0 { n as f64 * p.ln() } else { f64::NEG_INFINITY })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimationWarning {
    /// Maximum on an end of the search interval; the likelihood may wrap.
    Boundary,
    /// The likelihood does not depend on the parameter.
    FlatLikelihood,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub delta_b_hat: f64,
    pub log_likelihood: f64,
    pub n_evaluations: usize,
    pub warnings: Vec<EstimationWarning>,
}

/// Search interval `(−π/(2t), π/(2t))` around zero.
pub fn default_interval(t: f64) -> (f64, f64) {
    (-FRAC_PI_2 / t, FRAC_PI_2 / t)
}

/// Maximum-likelihood `δB` for `record` under the outcome model `family`.
pub fn mle_estimate<F>(record: &OutcomeRecord, family: F, interval: (f64, f64)) -> Result<EstimationResult>
where
    F: Fn(f64) -> Result<Vec<f64>>,
{
    let mut failure = None;
    let objective = |x: f64| match family(x) {
        Ok(p) if p.len() == record.counts.len() => log_likelihood(&record.counts, &p),
        Ok(p) => {
            failure.get_or_insert(Error::Domain(format!(
                "model has {} outcomes, record has {}",
                p.len(),
                record.counts.len()
            )));
            f64::NEG_INFINITY
        }
        Err(e) => {
            failure.get_or_insert(e);
            f64::NEG_INFINITY
        }
    };
    let m = optimize::maximize(objective, interval.0, interval.1, DEFAULT_GRID_POINTS, DEFAULT_WIDTH)?;
    if let Some(e) = failure {
        return Err(e);
    }
    let mut warnings = Vec::new();
    if m.flat {
        warnings.push(EstimationWarning::FlatLikelihood);
    }
    if m.at_boundary {
        warnings.push(EstimationWarning::Boundary);
    }
    Ok(EstimationResult {
        delta_b_hat: m.x,
        log_likelihood: m.value,
        n_evaluations: m.evaluations,
        warnings,
    })
}

/// Observed information per trial, `−∂²ℓ/∂δB² / N`, at `at`.
pub fn observed_information<F>(record: &OutcomeRecord, family: F, at: f64, step: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<Vec<f64>>,
{
    let ll = |x: f64| family(x).map(|p| log_likelihood(&record.counts, &p));
    let second = (ll(at + step)? - 2.0 * ll(at)? + ll(at - step)?) / (step * step);
    Ok(-second / record.n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Measure the system directly.
    Direct,
    /// Couple to the meter, keep runs whose system readout passes the
    /// postselection, and measure the meter.
    Postselected,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Measurement {
    SigmaX,
    /// Sharp measurement along `cos φ σx + sin φ σy`.
    Equatorial { phi: f64 },
    /// Eigenbasis of the symmetric logarithmic derivative at the true `δB`.
    Optimal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrbConfig {
    /// Protocol and true field offset `cfg.delta_b`.
    pub cfg: ProtocolConfig,
    pub strategy: Strategy,
    pub measurement: Measurement,
    /// Trials per experiment, before postselection.
    pub n_trials: u64,
    pub n_experiments: usize,
    pub seed: u64,
    /// Defaults to `(−π/(2t), π/(2t))` for direct readout and
    /// `δB ± sin(Gπ/2)/t` for postselected readout.
    pub interval: Option<(f64, f64)>,
}

impl CrbConfig {
    pub fn new(cfg: ProtocolConfig, strategy: Strategy, measurement: Measurement) -> Self {
        CrbConfig {
            cfg,
            strategy,
            measurement,
            n_trials: 1000,
            n_experiments: 300,
            seed: 42,
            interval: None,
        }
    }

    fn interval(&self) -> (f64, f64) {
        self.interval.unwrap_or_else(|| match self.strategy {
            Strategy::Direct => default_interval(self.cfg.t),
            Strategy::Postselected => {
                let half = (self.cfg.g * FRAC_PI_2).sin() / self.cfg.t;
                (self.cfg.delta_b - half, self.cfg.delta_b + half)
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CrbWarning {
    /// `N·F` below the asymptotic regime.
    Asymptotics { expected_information: f64 },
    /// Experiments whose estimate landed on the interval boundary.
    BoundaryEstimates { count: usize },
    /// Experiments with no accepted trials, excluded from the statistics.
    EmptyExperiments { count: usize },
    FlatLikelihood { count: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrbReport {
    pub strategy: Strategy,
    pub true_delta_b: f64,
    pub n_trials: u64,
    pub n_experiments: usize,
    pub seed: u64,
    /// Fisher information per trial, including the postselection factor `q`.
    pub fisher_information: f64,
    /// Postselection probability at the true `δB` (1 for direct readout).
    pub q: f64,
    pub mean_accepted: f64,
    pub mean_estimate: f64,
    pub empirical_variance: f64,
    /// `1/(N·F)`
    pub crb: f64,
    pub ratio: f64,
    pub warnings: Vec<CrbWarning>,
}

struct Model {
    spec: CircuitSpec,
    strategy: Strategy,
    povm: Povm,
}

impl Model {
    fn state(&self, delta_b: f64) -> Result<(QubitState, f64)> {
        match self.strategy {
            Strategy::Direct => Ok((self.spec.system_state(delta_b)?, 1.0)),
            Strategy::Postselected => self.spec.conditional_meter(delta_b, Branch::Accepted),
        }
    }

    fn probabilities(&self, delta_b: f64) -> Result<Vec<f64>> {
        Ok(self.povm.probabilities(&self.state(delta_b)?.0))
    }
}

fn build_povm(spec: &CircuitSpec, strategy: Strategy, measurement: Measurement) -> Result<Povm> {
    match measurement {
        Measurement::SigmaX => Ok(Povm::sigma_x()),
        Measurement::Equatorial { phi } => Ok(Povm::equatorial(phi)),
        Measurement::Optimal => {
            let probe = Model {
                spec: *spec,
                strategy,
                povm: Povm::sigma_x(),
            };
            let db = spec.cfg.delta_b;
            let rho = probe.state(db)?.0;
            let drho = fisher::matrix_derivative(|x| probe.state(x).map(|s| *s.0.matrix()), db, default_step(db))?;
            let sld = fisher::symmetric_log_derivative(&rho, &drho);
            Povm::projective(&eigh_2x2(&sld).eigenvectors)
        }
    }
}

/// Run `n_experiments` independent estimation experiments and compare the
/// spread of the estimates with the Cramér–Rao bound `1/(N·F)`.
pub fn crb_check(config: &CrbConfig) -> Result<CrbReport> {
    let cfg = config.cfg;
    cfg.validate()?;
    if config.n_trials == 0 || config.n_experiments < 2 {
        return Err(Error::Domain("need at least one trial and two experiments".into()));
    }
    let spec = CircuitSpec::main_text(cfg);
    let model = Model {
        spec,
        strategy: config.strategy,
        povm: build_povm(&spec, config.strategy, config.measurement)?,
    };
    let db = cfg.delta_b;
    let (_, q) = model.state(db)?;
    let f_meter = fisher::classical_fisher(|x| model.probabilities(x), db, default_step(db))?;
    let fisher_information = q * f_meter;
    if fisher_information <= ZERO_INFORMATION * cfg.t.powi(2).max(f64::MIN_POSITIVE) {
        return Err(Error::ZeroInformation);
    }
    let crb = 1.0 / (config.n_trials as f64 * fisher_information);
    let truth = model.probabilities(db)?;
    let interval = config.interval();

    let runs: Vec<Result<Option<(f64, u64, EstimationResult)>>> = (0..config.n_experiments as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = experiment_rng(config.seed, i);
            let accepted = match config.strategy {
                Strategy::Direct => config.n_trials,
                Strategy::Postselected => Binomial::new(config.n_trials, q.clamp(0.0, 1.0))
                    .map_err(|e| Error::Domain(e.to_string()))?
                    .sample(&mut rng),
            };
            if accepted == 0 {
                return Ok(None);
            }
            let record = OutcomeRecord {
                counts: multinomial(&truth, accepted, &mut rng)?,
                n: accepted,
                seed: config.seed,
            };
            let est = mle_estimate(&record, |x| model.probabilities(x), interval)?;
            Ok(Some((est.delta_b_hat, accepted, est)))
        })
        .collect();

    let mut estimates = Vec::with_capacity(runs.len());
    let (mut empty, mut boundary, mut flat, mut accepted_total) = (0, 0, 0, 0u64);
    for run in runs {
        match run? {
            None => empty += 1,
            Some((x, n, est)) => {
                estimates.push(x);
                accepted_total += n;
                boundary += est.warnings.contains(&EstimationWarning::Boundary) as usize;
                flat += est.warnings.contains(&EstimationWarning::FlatLikelihood) as usize;
            }
        }
    }
    if estimates.len() < 2 {
        return Err(Error::Domain("fewer than two experiments produced an estimate".into()));
    }
    let m = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / m;
    let variance = estimates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);

    let mut warnings = Vec::new();
    let expected_information = config.n_trials as f64 * fisher_information;
    if expected_information < ASYMPTOTIC_INFORMATION {
        warnings.push(CrbWarning::Asymptotics { expected_information });
    }
    if boundary > 0 {
        warnings.push(CrbWarning::BoundaryEstimates { count: boundary });
    }
    if empty > 0 {
        warnings.push(CrbWarning::EmptyExperiments { count: empty });
    }
    if flat > 0 {
        warnings.push(CrbWarning::FlatLikelihood { count: flat });
    }

    Ok(CrbReport {
        strategy: config.strategy,
        true_delta_b: db,
        n_trials: config.n_trials,
        n_experiments: config.n_experiments,
        seed: config.seed,
        fisher_information,
        q,
        mean_accepted: accepted_total as f64 / m,
        mean_estimate: mean,
        empirical_variance: variance,
        crb,
        ratio: variance / crb,
        warnings,
    })
}

/// Uncertainty per root total time under repeat-and-reset, `√(t/H(t))`.
pub fn sensitivity(t: f64, h: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("t must be positive, got {t}")));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Domain(format!("information must be positive, got {h}")));
    }
    Ok((t / h).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub t: f64,
    pub value: f64,
}

fn search<F: Fn(f64) -> f64>(f: F, t_min: f64, t_max: f64) -> Result<Optimum> {
    let m = optimize::maximize(f, t_min, t_max, DEFAULT_GRID_POINTS, DEFAULT_WIDTH * t_max.max(1.0))?;
    Ok(Optimum { t: m.x, value: m.value })
}

/// Time in `[t_min, t_max]` maximizing `H(t)`.
pub fn optimal_information_time<F>(h_of_t: F, t_min: f64, t_max: f64) -> Result<Optimum>
where
    F: Fn(f64) -> Result<f64>,
{
    search(|t| h_of_t(t).unwrap_or(f64::NAN), t_min, t_max)
}

/// Time in `[t_min, t_max]` minimizing `S(t) = √(t/H(t))`.
pub fn optimal_sensitivity_time<F>(h_of_t: F, t_min: f64, t_max: f64) -> Result<Optimum>
where
    F: Fn(f64) -> Result<f64>,
{
    let best = search(
        |t| h_of_t(t).and_then(|h| sensitivity(t, h)).map(|s| -s).unwrap_or(f64::NAN),
        t_min,
        t_max,
    )?;
    Ok(Optimum { t: best.t, value: -best.value })
}
