//! Brute-force two-qubit simulation of the sensing protocol: prepare the
//! system, let it precess and dephase, couple it to the meter, postselect,
//! and differentiate the resulting meter state numerically. The analytical
//! expressions are only consulted when computing deviations.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::{self as cf, ProtocolConfig, SINGULARITY_THRESHOLD};
use crate::error::{Error, Result};
use crate::fisher::{self, default_step};
use crate::grid::{Axis, GridPoint, Param, SweepGrid};
use crate::matrix::{kron, pauli, CVector, Mat2, Mat4};
use crate::noise::{system_density, PopulationModel};
use crate::state::{self, KrausChannel, Povm, QubitState, TwoQubitState};

pub const MIN_STEP: f64 = 1e-7;
pub const MAX_STEP: f64 = 1e-3;

/// Relative disagreement between the `h` and `h/2` estimates that raises a
/// precision warning.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-4;

pub const DEFAULT_TOLERANCE: f64 = 1e-6;

/// Relative deviations are taken against `max(|closed|, DEVIATION_FLOOR·scale)`
/// where `scale` is `t²` for information quantities, `1` for probabilities and
/// `1/2` for meter coherences.
pub const DEVIATION_FLOOR: f64 = 1e-9;

/// `Θ − θ` used to exercise the general-angle meter state.
pub const GENERAL_CONTROL_OFFSET: f64 = 0.7;

const MAX_REPORTED_FAILURES: usize = 100;

/// Finite-difference step used by the oracle, `5·10⁻⁵ · max(1, |δB|)`.
/// Larger than the general default so that round-off in weakly coupled meter
/// families stays well below the verification tolerance.
pub fn verification_step(delta_b: f64) -> f64 {
    5.0 * default_step(delta_b)
}

/// `M(G) = Π₊⊗I + Π₋⊗diag(e^{−iGπ/2}, e^{iGπ/2})`, with `Π₊ − Π₋ = cos Θ σy − sin Θ σx`
/// acting on the system (left factor).
pub fn measurement_unitary(g: f64, control_angle: f64) -> Result<Mat4> {
    if !g.is_finite() || !(0.0..=1.0).contains(&g) {
        return Err(Error::Domain(format!("G = {g} outside [0, 1]")));
    }
    if !control_angle.is_finite() {
        return Err(Error::NonFinite);
    }
    let obs = pauli::sigma_y().scale_re(control_angle.cos()) - pauli::sigma_x().scale_re(control_angle.sin());
    let plus = (Mat2::identity() + obs).scale_re(0.5);
    let minus = (Mat2::identity() - obs).scale_re(0.5);
    let kick = Mat2::diagonal([
        Complex64::from_polar(1.0, -g * FRAC_PI_2),
        Complex64::from_polar(1.0, g * FRAC_PI_2),
    ]);
    Ok(kron(&plus, &Mat2::identity()) + kron(&minus, &kick))
}

/// Meter preparation, the −1 eigenstate of `σy`.
pub fn initial_meter() -> QubitState {
    let s = FRAC_1_SQRT_2;
    QubitState::pure(&[Complex64::new(s, 0.0), Complex64::new(0.0, -s)]).expect("normalized ket")
}

/// System preparation before precession, `(|0⟩ + i|1⟩)/√2`.
pub fn initial_system() -> QubitState {
    let s = FRAC_1_SQRT_2;
    QubitState::pure(&[Complex64::new(s, 0.0), Complex64::new(0.0, s)]).expect("normalized ket")
}

/// Precession for time `t` in field offset `δB`.
pub fn free_evolution(delta_b: f64, t: f64) -> Mat2 {
    let half = 0.5 * delta_b * t;
    Mat2::diagonal([Complex64::from_polar(1.0, -half), Complex64::from_polar(1.0, half)])
}

/// `(|0⟩ + i e^{iθ}|1⟩)/√2`
pub fn postselection_ket(theta: f64) -> CVector<2> {
    state::equatorial_ket(theta + FRAC_PI_2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePlacement {
    /// The system dephases by `Ξ` before the coupling; the meter is clean.
    SystemBeforeCoupling,
    /// The system is clean; the meter dephases by `Σ` after postselection.
    MeterAfterPostselection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemPrep {
    /// Pure preparation, precession, then the phase-damping channel.
    Dephasing,
    /// Posited state with population `R = 2ρ₀₀` and coherence `Ξ`.
    Populated { population: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// System found in `|ψ_f⟩`.
    Accepted,
    /// System found in the orthogonal state.
    Rejected,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub cfg: ProtocolConfig,
    pub noise_placement: NoisePlacement,
    pub prep: SystemPrep,
}

impl CircuitSpec {
    pub fn main_text(cfg: ProtocolConfig) -> Self {
        CircuitSpec {
            cfg,
            noise_placement: NoisePlacement::SystemBeforeCoupling,
            prep: SystemPrep::Dephasing,
        }
    }

    pub fn noisy_meter(cfg: ProtocolConfig) -> Self {
        CircuitSpec {
            cfg,
            noise_placement: NoisePlacement::MeterAfterPostselection,
            prep: SystemPrep::Dephasing,
        }
    }

    /// Take `(R, Ξ)` from `model` at `cfg.t`. Unpolarized models go through
    /// the dephasing channel; the others posit the state directly.
    pub fn with_population_model(mut cfg: ProtocolConfig, model: &PopulationModel) -> Result<Self> {
        let (population, xi) = model.check_positivity(cfg.t)?;
        cfg.xi = xi;
        let prep = match model {
            PopulationModel::Unpolarized { .. } => SystemPrep::Dephasing,
            _ => SystemPrep::Populated { population },
        };
        Ok(CircuitSpec {
            cfg,
            noise_placement: NoisePlacement::SystemBeforeCoupling,
            prep,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        if self.noise_placement == NoisePlacement::MeterAfterPostselection && self.prep != SystemPrep::Dephasing {
            return Err(Error::Domain("meter noise requires an unpolarized system".into()));
        }
        Ok(())
    }

    fn system_xi(&self) -> f64 {
        match self.noise_placement {
            NoisePlacement::SystemBeforeCoupling => self.cfg.xi,
            NoisePlacement::MeterAfterPostselection => 1.0,
        }
    }

    /// System state just before the coupling, at field offset `delta_b`.
    pub fn system_state(&self, delta_b: f64) -> Result<QubitState> {
        match self.prep {
            SystemPrep::Dephasing => {
                let precessed = initial_system().evolve(&free_evolution(delta_b, self.cfg.t))?;
                KrausChannel::dephasing(self.system_xi())?.apply(&precessed)
            }
            SystemPrep::Populated { population } => {
                system_density(delta_b, self.cfg.t, population, self.system_xi())
            }
        }
    }

    pub fn coupled_state(&self, delta_b: f64) -> Result<TwoQubitState> {
        self.validate()?;
        let joint = state::product_state(&self.system_state(delta_b)?, &initial_meter());
        joint.evolve(&measurement_unitary(self.cfg.g, self.cfg.control_angle)?)
    }

    fn meter_noise(&self, meter: QubitState) -> Result<QubitState> {
        match self.noise_placement {
            NoisePlacement::SystemBeforeCoupling => Ok(meter),
            NoisePlacement::MeterAfterPostselection => KrausChannel::dephasing(self.cfg.sigma)?.apply(&meter),
        }
    }

    /// Meter conditioned on a system readout, and that readout's probability.
    pub fn conditional_meter(&self, delta_b: f64, branch: Branch) -> Result<(QubitState, f64)> {
        let theta = match branch {
            Branch::Accepted => self.cfg.theta,
            Branch::Rejected => self.cfg.theta + PI,
        };
        let (meter, q) = state::postselect_system(&self.coupled_state(delta_b)?, &postselection_ket(theta))?;
        Ok((self.meter_noise(meter)?, q))
    }

    /// Meter with the system traced out.
    pub fn unconditioned_meter(&self, delta_b: f64) -> Result<QubitState> {
        let meter = state::partial_trace_system(&self.coupled_state(delta_b)?)?;
        self.meter_noise(meter)
    }
}

/// Finite-difference QFI with its step-halving diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QfiEstimate {
    /// Richardson-extrapolated estimate.
    pub value: f64,
    /// Plain central difference at `step`.
    pub coarse: f64,
    /// Plain central difference at `step/2`.
    pub fine: f64,
    pub step: f64,
    pub precision_warning: bool,
}

fn check_step(step: f64) -> Result<()> {
    if !(MIN_STEP..=MAX_STEP).contains(&step) {
        return Err(Error::Domain(format!("step {step} outside [{MIN_STEP}, {MAX_STEP}]")));
    }
    Ok(())
}

/// QFI of a one-parameter qubit family at `delta_b`.
pub fn qfi_of_family<F>(family: F, delta_b: f64, step: f64) -> Result<QfiEstimate>
where
    F: Fn(f64) -> Result<QubitState>,
{
    check_step(step)?;
    let rho = family(delta_b)?;
    let matrices = |x: f64| family(x).map(|r| *r.matrix());
    let (coarse_d, fine_d) = fisher::matrix_central_pair(&matrices, delta_b, step)?;
    let rich = (fine_d.scale_re(4.0) - coarse_d).scale_re(1.0 / 3.0);
    let value = fisher::qfi_spectral(&rho, &rich)?;
    let coarse = fisher::qfi_spectral(&rho, &coarse_d)?;
    let fine = fisher::qfi_spectral(&rho, &fine_d)?;
    let precision_warning = (coarse - fine).abs() > CONSISTENCY_TOLERANCE * value.max(1e-10);
    Ok(QfiEstimate {
        value,
        coarse,
        fine,
        step,
        precision_warning,
    })
}

/// QFI of the postselected meter family.
pub fn qfi_numeric(spec: &CircuitSpec, step: f64) -> Result<QfiEstimate> {
    qfi_of_family(
        |x| spec.conditional_meter(x, Branch::Accepted).map(|m| m.0),
        spec.cfg.delta_b,
        step,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    FDirect,
    HDirect,
    HAnc,
    HAncOptimal,
    Eta12,
    Eta12General,
    Q,
    HWva,
    QHWva,
    HPerp,
    HTotal,
    HEquatorial,
    HAncTilde,
    HWvaTilde,
    QTilde,
    QHWvaTilde,
}

impl Quantity {
    pub const ALL: [Quantity; 16] = [
        Quantity::FDirect,
        Quantity::HDirect,
        Quantity::HAnc,
        Quantity::HAncOptimal,
        Quantity::Eta12,
        Quantity::Eta12General,
        Quantity::Q,
        Quantity::HWva,
        Quantity::QHWva,
        Quantity::HPerp,
        Quantity::HTotal,
        Quantity::HEquatorial,
        Quantity::HAncTilde,
        Quantity::HWvaTilde,
        Quantity::QTilde,
        Quantity::QHWvaTilde,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::FDirect => "f_direct",
            Quantity::HDirect => "h_direct",
            Quantity::HAnc => "h_anc",
            Quantity::HAncOptimal => "h_anc_optimal",
            Quantity::Eta12 => "eta12",
            Quantity::Eta12General => "eta12_general",
            Quantity::Q => "q",
            Quantity::HWva => "h_wva",
            Quantity::QHWva => "q_h_wva",
            Quantity::HPerp => "h_perp",
            Quantity::HTotal => "h_total",
            Quantity::HEquatorial => "h_equatorial",
            Quantity::HAncTilde => "h_anc_tilde",
            Quantity::HWvaTilde => "h_wva_tilde",
            Quantity::QTilde => "q_tilde",
            Quantity::QHWvaTilde => "q_h_wva_tilde",
        }
    }

    fn scale(self, t: f64) -> f64 {
        match self {
            Quantity::Eta12 | Quantity::Eta12General => 0.5,
            Quantity::Q | Quantity::QTilde => 1.0,
            _ => t * t,
        }
    }
}

impl std::str::FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Quantity::ALL
            .into_iter()
            .find(|q| q.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown quantity `{s}`")))
    }
}

/// `|oracle − closed| / max(|closed|, DEVIATION_FLOOR·scale)`
pub fn relative_deviation(oracle: Complex64, closed: Complex64, scale: f64) -> f64 {
    let denom = closed.norm().max(DEVIATION_FLOOR * scale).max(f64::MIN_POSITIVE);
    (oracle - closed).norm() / denom
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleResult {
    /// Postselected meter, including any meter noise.
    pub meter: QubitState,
    pub q: f64,
    pub h_numeric: f64,
    pub precision_warning: bool,
    /// Relative deviation from each applicable analytical expression.
    pub deviations: BTreeMap<Quantity, f64>,
}

fn is_main_angle(cfg: &ProtocolConfig) -> bool {
    let d = (cfg.control_angle - cfg.theta - FRAC_PI_2).rem_euclid(TAU);
    d < 1e-12 || TAU - d < 1e-12
}

fn tolerate_singular<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Singular { .. } | Error::Degenerate { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Run the full circuit once and compare against the analytical forms that
/// apply to `spec`.
pub fn simulate_protocol(spec: &CircuitSpec) -> Result<OracleResult> {
    spec.validate()?;
    let cfg = spec.cfg;
    let (meter, q) = spec.conditional_meter(cfg.delta_b, Branch::Accepted)?;
    let est = qfi_numeric(spec, verification_step(cfg.delta_b))?;
    let h_numeric = est.value;

    let mut deviations = BTreeMap::new();
    let mut note = |quantity: Quantity, oracle: Complex64, closed: Complex64| {
        deviations.insert(quantity, relative_deviation(oracle, closed, quantity.scale(cfg.t)));
    };
    let eta12 = meter.element(0, 1);
    let real = |x: f64| Complex64::new(x, 0.0);
    match spec.noise_placement {
        NoisePlacement::SystemBeforeCoupling => {
            if let Some(m) = tolerate_singular(cf::meter_state_general(&cfg))? {
                note(Quantity::Eta12General, eta12, m.coherence());
            }
            note(Quantity::Q, real(q), real(cf::postselection_probability_general(&cfg)));
            if is_main_angle(&cfg) {
                if let Some(r) = tolerate_singular(cf::wva_report(&cfg))? {
                    note(Quantity::HWva, real(h_numeric), real(r.h_wva));
                    note(Quantity::QHWva, real(q * h_numeric), real(r.q_h_wva));
                }
            }
        }
        NoisePlacement::MeterAfterPostselection => {
            let clean = ProtocolConfig { xi: 1.0, ..cfg };
            if let Some(m) = tolerate_singular(cf::meter_state_general(&clean))? {
                note(Quantity::Eta12General, eta12, m.coherence() * cfg.sigma);
            }
            note(Quantity::QTilde, real(q), real(cf::postselection_probability_general(&clean)));
            if is_main_angle(&cfg) {
                if let Some(r) = tolerate_singular(cf::noisy_meter_report(&cfg))? {
                    note(Quantity::HWvaTilde, real(h_numeric), real(r.h_wva_tilde));
                    note(Quantity::QHWvaTilde, real(q * h_numeric), real(r.q_h_wva_tilde));
                }
            }
        }
    }

    Ok(OracleResult {
        meter,
        q,
        h_numeric,
        precision_warning: est.precision_warning,
        deviations,
    })
}

/// One closed-form/oracle comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub quantity: Quantity,
    /// Real part, or modulus for complex quantities.
    pub closed: f64,
    pub oracle: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub point: GridPoint,
    #[serde(flatten)]
    pub comparison: Comparison,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointError {
    pub point: GridPoint,
    pub message: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QuantityStats {
    pub compared: usize,
    /// Points where the analytical form is singular.
    pub skipped: usize,
    pub max_deviation: f64,
    pub mean_deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub tolerance: f64,
    pub total_points: usize,
    pub evaluated_points: usize,
    /// Points where a postselection branch vanishes or `G = 0`.
    pub skipped_points: Vec<GridPoint>,
    pub precision_warnings: usize,
    pub max_deviation: f64,
    pub quantities: BTreeMap<Quantity, QuantityStats>,
    pub failure_count: usize,
    /// Worst offenders first, truncated.
    pub failures: Vec<Failure>,
    pub errors: Vec<PointError>,
    pub passed: bool,
}

/// Standard 10⁴-point grid over `(G, θ − tδB, Ξ, δB)` at `t = 1.5`, `Σ = 0.9`.
pub fn default_verification_grid() -> SweepGrid {
    SweepGrid::new(
        vec![
            Axis::new(Param::G, 0.02, 1.0, 10),
            Axis::new(Param::Theta, 0.0, 1.8 * PI, 10),
            Axis::new(Param::Xi, 0.0, 1.0, 10),
            Axis::new(Param::DeltaB, -2.0, 2.0, 10),
        ],
        BTreeMap::from([(Param::T, 1.5), (Param::Sigma, 0.9)]),
    )
    .expect("static grid is valid")
}

struct PointComparisons {
    rows: Vec<Comparison>,
    skipped: Vec<Quantity>,
    warning: bool,
}

struct Collector<'a, B> {
    out: PointComparisons,
    t: f64,
    bias: &'a B,
}

impl<B: Fn(Quantity) -> f64> Collector<'_, B> {
    fn push(&mut self, quantity: Quantity, closed: Result<Complex64>, oracle: Complex64) -> Result<()> {
        match tolerate_singular(closed)? {
            None => self.out.skipped.push(quantity),
            Some(c) => {
                let closed = c * (self.bias)(quantity);
                let complex = matches!(quantity, Quantity::Eta12 | Quantity::Eta12General);
                let view = |z: Complex64| if complex { z.norm() } else { z.re };
                self.out.rows.push(Comparison {
                    quantity,
                    closed: view(closed),
                    oracle: view(oracle),
                    deviation: relative_deviation(oracle, closed, quantity.scale(self.t)),
                });
            }
        }
        Ok(())
    }

    fn real(&mut self, quantity: Quantity, closed: Result<f64>, oracle: f64) -> Result<()> {
        self.push(quantity, closed.map(|c| Complex64::new(c, 0.0)), Complex64::new(oracle, 0.0))
    }

    fn qfi(&mut self, est: QfiEstimate) -> f64 {
        self.out.warning |= est.precision_warning;
        est.value
    }
}

fn compare_point<B: Fn(Quantity) -> f64>(cfg: &ProtocolConfig, bias: &B) -> Result<Option<PointComparisons>> {
    let report = match tolerate_singular(cf::wva_report(cfg))? {
        Some(r) => r,
        None => return Ok(None),
    };
    if (cfg.g * FRAC_PI_2).sin().powi(2) <= SINGULARITY_THRESHOLD {
        return Ok(None);
    }
    let db = cfg.delta_b;
    let step = verification_step(db);
    let mut acc = Collector {
        out: PointComparisons {
            rows: Vec::new(),
            skipped: Vec::new(),
            warning: false,
        },
        t: cfg.t,
        bias,
    };
    let main = CircuitSpec::main_text(*cfg);

    let h_d = qfi_of_family(|x| main.system_state(x), db, step)?;
    let h_d = acc.qfi(h_d);
    acc.real(Quantity::HDirect, Ok(report.h_d), h_d)?;
    let povm = Povm::sigma_x();
    let f_d = fisher::classical_fisher(|x| Ok(povm.probabilities(&main.system_state(x)?)), db, step)?;
    acc.real(Quantity::FDirect, cf::f_direct(cfg), f_d)?;

    let accepted = |x: f64| main.conditional_meter(x, Branch::Accepted).map(|m| m.0);
    let (meter, q) = main.conditional_meter(db, Branch::Accepted)?;
    let h_wva = qfi_of_family(accepted, db, step)?;
    let h_wva = acc.qfi(h_wva);
    let eta12 = meter.element(0, 1);
    acc.push(Quantity::Eta12, cf::meter_state_simplified(cfg).map(|m| m.coherence()), eta12)?;
    acc.real(Quantity::Q, Ok(report.q), q)?;
    acc.real(Quantity::HWva, Ok(report.h_wva), h_wva)?;
    acc.real(Quantity::QHWva, Ok(report.q_h_wva), q * h_wva)?;
    let d_eta = fisher::matrix_derivative(|x| accepted(x).map(|m| *m.matrix()), db, step)?[(0, 1)] * 2.0;
    let equatorial = cf::qfi_equatorial(2.0 * eta12.re, 2.0 * eta12.im, d_eta.re, d_eta.im);
    acc.real(Quantity::HEquatorial, equatorial, h_wva)?;

    let (_, q_perp) = main.conditional_meter(db, Branch::Rejected)?;
    let h_perp = qfi_of_family(|x| main.conditional_meter(x, Branch::Rejected).map(|m| m.0), db, step)?;
    let h_perp = acc.qfi(h_perp);
    acc.real(Quantity::HPerp, Ok(report.h_perp), h_perp)?;
    acc.real(Quantity::HTotal, Ok(report.h_total), q * h_wva + q_perp * h_perp)?;

    let h_anc = qfi_of_family(|x| main.unconditioned_meter(x), db, step)?;
    let h_anc = acc.qfi(h_anc);
    acc.real(Quantity::HAnc, cf::h_anc(cfg), h_anc)?;
    let unbiased = CircuitSpec::main_text(cfg.with_control_angle(cfg.phase() + FRAC_PI_2));
    let h_opt = qfi_of_family(|x| unbiased.unconditioned_meter(x), db, step)?;
    let h_opt = acc.qfi(h_opt);
    acc.real(Quantity::HAncOptimal, cf::h_anc_optimal(cfg), h_opt)?;

    let general_cfg = cfg.with_control_angle(cfg.theta + GENERAL_CONTROL_OFFSET);
    match CircuitSpec::main_text(general_cfg).conditional_meter(db, Branch::Accepted) {
        Ok((m, _)) => acc.push(
            Quantity::Eta12General,
            cf::meter_state_general(&general_cfg).map(|m| m.coherence()),
            m.element(0, 1),
        )?,
        Err(Error::UndefinedConditionalState(_)) => acc.out.skipped.push(Quantity::Eta12General),
        Err(e) => return Err(e),
    }

    let noisy_quantities = [Quantity::QTilde, Quantity::HWvaTilde, Quantity::QHWvaTilde, Quantity::HAncTilde];
    match tolerate_singular(cf::noisy_meter_report(cfg))? {
        None => acc.out.skipped.extend(noisy_quantities),
        Some(nr) => {
            let noisy = CircuitSpec::noisy_meter(*cfg);
            let (_, q_tilde) = noisy.conditional_meter(db, Branch::Accepted)?;
            let h_tilde = qfi_of_family(|x| noisy.conditional_meter(x, Branch::Accepted).map(|m| m.0), db, step)?;
            let h_tilde = acc.qfi(h_tilde);
            acc.real(Quantity::QTilde, Ok(nr.q_tilde), q_tilde)?;
            acc.real(Quantity::HWvaTilde, Ok(nr.h_wva_tilde), h_tilde)?;
            acc.real(Quantity::QHWvaTilde, Ok(nr.q_h_wva_tilde), q_tilde * h_tilde)?;
            let strong = CircuitSpec::noisy_meter(ProtocolConfig {
                g: 1.0,
                control_angle: cfg.phase() + FRAC_PI_2,
                ..*cfg
            });
            let h_strong = qfi_of_family(|x| strong.unconditioned_meter(x), db, step)?;
            let h_strong = acc.qfi(h_strong);
            acc.real(Quantity::HAncTilde, Ok(nr.h_anc_tilde), h_strong)?;
        }
    }
    Ok(Some(acc.out))
}

/// Compare every analytical expression with the circuit simulation at each
/// grid point. The grid must bind `G`, `theta` (relative), `t` and one of
/// `xi`/`gamma`.
pub fn verify_closed_forms(grid: &SweepGrid, tolerance: f64) -> Result<DeviationReport> {
    verify_closed_forms_with(grid, tolerance, &|_| 1.0)
}

/// As [`verify_closed_forms`], with each analytical value multiplied by
/// `bias(quantity)` before comparison. A bias other than 1 is a negative
/// control.
pub fn verify_closed_forms_with<B>(grid: &SweepGrid, tolerance: f64, bias: &B) -> Result<DeviationReport>
where
    B: Fn(Quantity) -> f64 + Sync,
{
    grid.validate()?;
    grid.require(&[Param::G, Param::Theta, Param::T])?;
    if !grid.has(Param::Xi) && !grid.has(Param::Gamma) {
        return Err(Error::Grid("grid binds neither `xi` nor `gamma`".into()));
    }
    if !(tolerance > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tolerance}")));
    }
    let points = grid.points();
    let outcomes: Vec<Result<Option<PointComparisons>>> = points
        .par_iter()
        .map(|p| compare_point(&p.protocol_config()?, bias))
        .collect();

    let mut report = DeviationReport {
        tolerance,
        total_points: points.len(),
        evaluated_points: 0,
        skipped_points: Vec::new(),
        precision_warnings: 0,
        max_deviation: 0.0,
        quantities: BTreeMap::new(),
        failure_count: 0,
        failures: Vec::new(),
        errors: Vec::new(),
        passed: false,
    };
    let mut sums: BTreeMap<Quantity, f64> = BTreeMap::new();
    for (point, outcome) in points.into_iter().zip(outcomes) {
        let cmp = match outcome {
            Ok(Some(c)) => c,
            Ok(None) => {
                report.skipped_points.push(point);
                continue;
            }
            Err(e) => {
                report.errors.push(PointError {
                    point,
                    message: e.to_string(),
                });
                continue;
            }
        };
        report.evaluated_points += 1;
        report.precision_warnings += cmp.warning as usize;
        for q in cmp.skipped {
            report.quantities.entry(q).or_default().skipped += 1;
        }
        for row in cmp.rows {
            let stats = report.quantities.entry(row.quantity).or_default();
            stats.compared += 1;
            stats.max_deviation = stats.max_deviation.max(row.deviation);
            *sums.entry(row.quantity).or_default() += row.deviation;
            report.max_deviation = report.max_deviation.max(row.deviation);
            if !(row.deviation <= tolerance) {
                report.failure_count += 1;
                report.failures.push(Failure {
                    point: point.clone(),
                    comparison: row,
                });
            }
        }
    }
    for (q, stats) in report.quantities.iter_mut() {
        if stats.compared > 0 {
            stats.mean_deviation = sums[q] / stats.compared as f64;
        }
    }
    report
        .failures
        .sort_by(|a, b| b.comparison.deviation.total_cmp(&a.comparison.deviation));
    report.failures.truncate(MAX_REPORTED_FAILURES);
    report.passed = report.failure_count == 0 && report.errors.is_empty() && report.evaluated_points > 0;
    Ok(report)
}
