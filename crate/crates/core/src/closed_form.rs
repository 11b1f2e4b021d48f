//! Analytical Fisher-information expressions for the direct, ancilla and
//! postselected (weak-value-amplified) sensing strategies.
//!
//! All information quantities are in units of time² (gyromagnetic ratio 1).
//! Writing `c = cos(Gπ/2)`, `s = sin(Gπ/2)` and `r = θ − tδB`:
//!
//! | quantity | expression |
//! |----------|------------|
//! | `F_d`    | `t² cos²(tδB) Ξ² / (1 − Ξ² sin²(tδB))` |
//! | `H_d`    | `Ξ² t²` |
//! | `H_anc`  | `Ξ² t² s² sin²(Θ − tδB) / (1 − Ξ² cos²(Θ − tδB))` |
//! | `A`      | `(1 + Ξ c cos r)⁻²` |
//! | `q`      | `(1 + Ξ c cos r) / 2 = 1/(2√A)` |
//! | `H_wva`  | `H_d s² A` |
//! | `q H_wva`| `Ξ² t² s² / (2(1 + Ξ c cos r))` |
//! | `(1−q) H⊥` | `Ξ² t² s² / (2(1 − Ξ c cos r))` |
//! | `H_total`| `Ξ² t² s² / (1 − Ξ² c² cos² r)` |
//!
//! Angles are measured in the equatorial plane from the `+y` axis: the
//! system Bloch vector sits at `tδB`, the postselection state
//! `(|0⟩ + i e^{iθ}|1⟩)/√2` at `θ`, and the control observable
//! `cos Θ σy − sin Θ σx` at `Θ`. In this frame the simplified meter state
//! corresponds to `Θ = θ + π/2`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Mat2, I};
use crate::state::QubitState;

/// Denominators at or below this are treated as singular.
pub const SINGULARITY_THRESHOLD: f64 = 1e-12;

/// Purity defect below which the equatorial QFI switches to its pure limit.
pub const PURE_LIMIT_THRESHOLD: f64 = 1e-9;

/// Every tunable of the two-qubit protocol.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Measurement strength `G ∈ [0, 1]`.
    pub g: f64,
    /// Postselection angle `θ` (absolute, rad).
    pub theta: f64,
    /// Control-observable angle `Θ` (rad).
    pub control_angle: f64,
    pub delta_b: f64,
    pub t: f64,
    /// System attenuation `Ξ(t)`.
    pub xi: f64,
    /// Meter attenuation `Σ(t)`.
    #[serde(default = "one")]
    pub sigma: f64,
}

fn one() -> f64 {
    1.0
}

impl ProtocolConfig {
    /// Main-text configuration: `θ = θ_rel + tδB` and `Θ = θ + π/2`.
    pub fn wva(g: f64, theta_rel: f64, xi: f64, t: f64, delta_b: f64) -> Self {
        let theta = theta_rel + t * delta_b;
        ProtocolConfig {
            g,
            theta,
            control_angle: theta + FRAC_PI_2,
            delta_b,
            t,
            xi,
            sigma: 1.0,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_control_angle(mut self, control_angle: f64) -> Self {
        self.control_angle = control_angle;
        self
    }

    /// `θ − tδB`
    pub fn theta_rel(&self) -> f64 {
        self.theta - self.t * self.delta_b
    }

    /// Accumulated phase `tδB`.
    pub fn phase(&self) -> f64 {
        self.t * self.delta_b
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("G", self.g),
            ("theta", self.theta),
            ("Theta", self.control_angle),
            ("delta_b", self.delta_b),
            ("t", self.t),
            ("xi", self.xi),
            ("sigma", self.sigma),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Domain(format!("{name} is not finite")));
        }
        if !(0.0..=1.0).contains(&self.g) {
            return Err(Error::Domain(format!("G = {} outside [0, 1]", self.g)));
        }
        if !(0.0..=1.0).contains(&self.xi) {
            return Err(Error::Domain(format!("xi = {} outside [0, 1]", self.xi)));
        }
        if !(0.0..=1.0).contains(&self.sigma) {
            return Err(Error::Domain(format!("sigma = {} outside [0, 1]", self.sigma)));
        }
        if self.t < 0.0 {
            return Err(Error::Domain(format!("t = {} is negative", self.t)));
        }
        Ok(())
    }

    fn strength(&self) -> (f64, f64) {
        let half = self.g * FRAC_PI_2;
        (half.cos(), half.sin())
    }

    /// `Ξ cos(Gπ/2) cos(θ − tδB)`, the overlap term shared by every
    /// postselected expression.
    pub fn overlap(&self) -> f64 {
        self.xi * self.strength().0 * self.theta_rel().cos()
    }
}

/// Meter qubit confined to the equatorial plane, `η₁₁ = 1/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeterState {
    pub eta: QubitState,
}

impl MeterState {
    /// Coherences exceeding the pure-state bound `|η₁₂| = 1/2` by less than
    /// a relative [`PURE_LIMIT_THRESHOLD`] (cancellation round-off near the
    /// singular points) are pulled back onto it.
    pub fn from_coherence(eta12: Complex64) -> Result<Self> {
        let modulus = eta12.norm();
        let eta12 = if modulus > 0.5 && modulus <= 0.5 * (1.0 + PURE_LIMIT_THRESHOLD) {
            eta12 * (0.5 / modulus)
        } else {
            eta12
        };
        let half = Complex64::new(0.5, 0.0);
        let eta = QubitState::new(Mat2::from_rows([[half, eta12], [eta12.conj(), half]]))?;
        Ok(MeterState { eta })
    }

    pub fn coherence(&self) -> Complex64 {
        self.eta.element(0, 1)
    }

    /// `x + iy = 2η₁₂`
    pub fn bloch_xy(&self) -> (f64, f64) {
        let c = self.coherence() * 2.0;
        (c.re, c.im)
    }
}

fn nonsingular(what: &'static str, denominator: f64) -> Result<f64> {
    if denominator <= SINGULARITY_THRESHOLD {
        Err(Error::Singular { what, denominator })
    } else {
        Ok(denominator)
    }
}

fn nondegenerate(what: &'static str, denominator: f64) -> Result<f64> {
    if denominator <= SINGULARITY_THRESHOLD {
        Err(Error::Degenerate { what, denominator })
    } else {
        Ok(denominator)
    }
}

/// Classical Fisher information of a sharp `σx` measurement on the system.
pub fn f_direct(cfg: &ProtocolConfig) -> Result<f64> {
    cfg.validate()?;
    let phase = cfg.phase();
    let den = nonsingular("F_d", 1.0 - (cfg.xi * phase.sin()).powi(2))?;
    Ok((cfg.t * phase.cos() * cfg.xi).powi(2) / den)
}

/// Quantum Fisher information of the system itself, `Ξ² t²`.
pub fn h_direct(t: f64, xi: f64) -> f64 {
    xi * xi * t * t
}

/// QFI of the meter after an arbitrary-strength coupling with the system
/// traced out, at the configured control angle.
pub fn h_anc(cfg: &ProtocolConfig) -> Result<f64> {
    cfg.validate()?;
    let (_, s) = cfg.strength();
    let off = cfg.control_angle - cfg.phase();
    let den = nonsingular("H_anc", 1.0 - (cfg.xi * off.cos()).powi(2))?;
    Ok((cfg.xi * cfg.t * s * off.sin()).powi(2) / den)
}

/// `H_anc` with the control observable unbiased w.r.t. the system state,
/// `Θ = tδB + π/2`: `Ξ² t² sin²(Gπ/2)`.
pub fn h_anc_optimal(cfg: &ProtocolConfig) -> Result<f64> {
    cfg.validate()?;
    let (_, s) = cfg.strength();
    Ok(h_direct(cfg.t, cfg.xi) * s * s)
}

/// Postselected meter for `Θ = θ + π/2`; depends on `θ − tδB` only.
pub fn meter_state_simplified(cfg: &ProtocolConfig) -> Result<MeterState> {
    cfg.validate()?;
    let (c, s) = cfg.strength();
    let r = cfg.theta_rel();
    let den = nondegenerate("meter state", 2.0 * (1.0 + cfg.xi * c * r.cos()))?;
    let num = Complex64::new(cfg.xi * s * r.sin(), c + cfg.xi * r.cos());
    let eta12 = Complex64::from_polar(1.0, -FRAC_PI_2 * cfg.g) * num / den;
    MeterState::from_coherence(eta12)
}

/// Postselected meter for independent `θ` and `Θ`.
pub fn meter_state_general(cfg: &ProtocolConfig) -> Result<MeterState> {
    cfg.validate()?;
    let (th, big, phase, xi) = (cfg.theta, cfg.control_angle, cfg.phase(), cfg.xi);
    let (c2, s2) = cfg.strength();
    let c4sq = (cfg.g * FRAC_PI_4).cos().powi(2);
    let s4sq = (cfg.g * FRAC_PI_4).sin().powi(2);
    let inner = Complex64::new(
        c4sq * (th - phase).cos() - (th - 2.0 * big + phase).cos() * s4sq,
        (big - phase).cos() * s2,
    );
    let num = I * 4.0
        * Complex64::from_polar(1.0, -FRAC_PI_2 * cfg.g)
        * (Complex64::new(c2, (th - big).cos() * s2) + inner * xi);
    let norm = 1.0 + (c4sq * (th - phase).cos() + (th - 2.0 * big + phase).cos() * s4sq) * xi;
    let norm = nondegenerate("meter state", norm)?;
    MeterState::from_coherence(num / (8.0 * norm))
}

/// Amplification factor `A = (1 + Ξ cos(Gπ/2) cos(θ − tδB))⁻²`.
pub fn a_factor(cfg: &ProtocolConfig) -> Result<f64> {
    let den = nondegenerate("A", 1.0 + cfg.overlap())?;
    Ok(den.powi(-2))
}

/// Postselection success probability `(1 + Ξ cos(Gπ/2) cos(θ − tδB)) / 2`.
pub fn postselection_probability(cfg: &ProtocolConfig) -> f64 {
    0.5 * (1.0 + cfg.overlap())
}

/// Postselection success probability for independent `θ` and `Θ`.
pub fn postselection_probability_general(cfg: &ProtocolConfig) -> f64 {
    let (th, big, phase) = (cfg.theta, cfg.control_angle, cfg.phase());
    let c4sq = (cfg.g * FRAC_PI_4).cos().powi(2);
    let s4sq = (cfg.g * FRAC_PI_4).sin().powi(2);
    0.5 * (1.0 + (c4sq * (th - phase).cos() + (th - 2.0 * big + phase).cos() * s4sq) * cfg.xi)
}

/// Every postselected-strategy quantity at one configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WvaReport {
    pub a_factor: f64,
    pub q: f64,
    pub h_d: f64,
    /// `H_anc` at its optimal control angle.
    pub h_anc: f64,
    pub h_wva: f64,
    pub q_h_wva: f64,
    pub h_perp: f64,
    pub h_total: f64,
    /// `q H_wva / H_d`
    pub ratio_direct: f64,
    /// `q H_wva / H_anc`
    pub ratio_anc: f64,
}

/// Evaluate the postselected strategy. Points where either postselection
/// branch has vanishing probability are reported as degenerate.
pub fn wva_report(cfg: &ProtocolConfig) -> Result<WvaReport> {
    cfg.validate()?;
    let (_, s) = cfg.strength();
    let x = cfg.overlap();
    let plus = nondegenerate("postselected branch", 1.0 + x)?;
    let minus = nondegenerate("orthogonal branch", 1.0 - x)?;
    let h_d = h_direct(cfg.t, cfg.xi);
    let a = plus.powi(-2);
    let s2 = s * s;
    let info = h_d * s2;
    Ok(WvaReport {
        a_factor: a,
        q: 0.5 * plus,
        h_d,
        h_anc: info,
        h_wva: info * a,
        q_h_wva: info / (2.0 * plus),
        h_perp: info / (minus * minus),
        h_total: info / (plus * minus),
        ratio_direct: s2 / (2.0 * plus),
        ratio_anc: 1.0 / (2.0 * plus),
    })
}

/// `q H_wva / H_d` at antiparallel pre/postselection, `θ − tδB = π`:
/// `sin²(Gπ/2) / (2(1 − Ξ cos(Gπ/2)))`. At `Ξ = 1` this is evaluated in its
/// limit form `(1 + cos(Gπ/2))/2`, which stays finite at `G = 0`.
pub fn ratio_direct_antiparallel(g: f64, xi: f64) -> Result<f64> {
    let c = (g * FRAC_PI_2).cos();
    if xi == 1.0 {
        return Ok(0.5 * (1.0 + c));
    }
    let s = (g * FRAC_PI_2).sin();
    let den = nondegenerate("ratio", 1.0 - xi * c)?;
    Ok(s * s / (2.0 * den))
}

/// QFI of an equatorial qubit with `x + iy = 2η₁₂` and parameter derivatives
/// `(dx, dy)`.
pub fn qfi_equatorial(x: f64, y: f64, dx: f64, dy: f64) -> Result<f64> {
    let r2 = x * x + y * y;
    if r2 > 1.0 + PURE_LIMIT_THRESHOLD {
        return Err(Error::Domain(format!("Bloch radius² {r2} exceeds 1")));
    }
    if (1.0 - r2).abs() < PURE_LIMIT_THRESHOLD {
        return Ok(dx * dx + dy * dy);
    }
    let num = (y * y - 1.0) * dx * dx - 2.0 * x * y * dx * dy + (x * x - 1.0) * dy * dy;
    Ok((num / (r2 - 1.0)).max(0.0))
}

/// Noisy-meter scenario: noiseless system, meter coherences attenuated by `Σ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyMeterReport {
    /// Strong unpostselected readout, `Σ² t²`.
    pub h_anc_tilde: f64,
    pub h_wva_tilde: f64,
    pub q_tilde: f64,
    pub q_h_wva_tilde: f64,
}

pub fn noisy_meter_report(cfg: &ProtocolConfig) -> Result<NoisyMeterReport> {
    cfg.validate()?;
    let (c, s) = cfg.strength();
    let plus = nondegenerate("noisy-meter postselection", 1.0 + c * cfg.theta_rel().cos())?;
    let base = (cfg.sigma * cfg.t).powi(2);
    Ok(NoisyMeterReport {
        h_anc_tilde: base,
        h_wva_tilde: base * s * s / (plus * plus),
        q_tilde: 0.5 * plus,
        q_h_wva_tilde: base * s * s / (2.0 * plus),
    })
}

/// Time maximizing `H_d` under exponential dephasing, `1/Γ`.
pub fn optimal_time_exponential(gamma: f64) -> f64 {
    1.0 / gamma
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cfg(g: f64, rel: f64, xi: f64, t: f64) -> ProtocolConfig {
        ProtocolConfig::wva(g, rel, xi, t, 0.37)
    }

    #[test]
    fn f_direct_at_optimal_and_pessimal_angles() {
        let c = ProtocolConfig { delta_b: 0.0, ..cfg(0.5, 0.0, 0.5, 2.0) };
        assert!((f_direct(&c).unwrap() - 1.0).abs() < 1e-15);
        let c = ProtocolConfig { delta_b: FRAC_PI_2 / 2.0, ..cfg(0.5, 0.0, 0.5, 2.0) };
        assert!(f_direct(&c).unwrap().abs() < 1e-15);
        let c = ProtocolConfig { delta_b: FRAC_PI_2, t: 1.0, ..cfg(0.5, 0.0, 1.0, 1.0) };
        assert!(matches!(f_direct(&c), Err(Error::Singular { .. })));
    }

    #[test]
    fn h_anc_limits() {
        let c = cfg(1.0, 0.3, 0.8, 2.0);
        let opt = c.with_control_angle(c.phase() + FRAC_PI_2);
        assert!((h_anc(&opt).unwrap() - h_direct(2.0, 0.8)).abs() < 1e-14);
        assert_eq!(h_anc(&cfg(0.0, 0.3, 0.8, 2.0)).unwrap(), 0.0);
        let c = cfg(0.3, 0.3, 0.8, 2.0);
        let opt = c.with_control_angle(c.phase() + FRAC_PI_2);
        let expect = 0.64 * 4.0 * (0.15 * PI).sin().powi(2);
        assert!((h_anc(&opt).unwrap() - expect).abs() < 1e-14);
        assert!((h_anc_optimal(&c).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn general_meter_reduces_to_simplified() {
        for &(g, rel, xi) in &[(0.5, 2.0, 0.8), (0.1, PI, 1.0), (0.9, 0.2, 0.3)] {
            let c = cfg(g, rel, xi, 1.3);
            let a = meter_state_general(&c).unwrap();
            let b = meter_state_simplified(&c).unwrap();
            assert!(a.eta.matrix().max_abs_diff(b.eta.matrix()) < 1e-12);
            let q = postselection_probability_general(&c);
            assert!((q - postselection_probability(&c)).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_strength_leaves_meter_unchanged() {
        let c = cfg(0.0, 1.1, 0.6, 1.0).with_control_angle(0.4);
        let m = meter_state_general(&c).unwrap();
        assert!((m.coherence() - Complex64::new(0.0, 0.5)).norm() < 1e-15);
        let m = meter_state_simplified(&cfg(0.0, 1.1, 0.6, 1.0)).unwrap();
        assert!((m.coherence() - Complex64::new(0.0, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn vanishing_normalization_is_flagged() {
        let c = cfg(0.0, PI, 1.0, 1.0);
        assert!(matches!(meter_state_simplified(&c), Err(Error::Degenerate { .. })));
        assert!(matches!(meter_state_general(&c), Err(Error::Degenerate { .. })));
        assert!(matches!(wva_report(&c), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn strong_measurement_throws_away_half() {
        let r = wva_report(&cfg(1.0, 0.77, 0.4, 3.0)).unwrap();
        assert_eq!(r.ratio_direct, 0.5);
        assert!((r.q_h_wva / r.h_d - 0.5).abs() < 1e-15);
    }

    #[test]
    fn star_point_numbers() {
        let r = wva_report(&cfg(0.02, PI, 1.0, 1.0)).unwrap();
        let c = (0.01 * PI).cos();
        assert!((r.h_wva / r.h_d - (1.0 + c) / (1.0 - c)).abs() < 1e-9);
        assert!((r.h_wva / r.h_d - 4052.0).abs() < 1.0);
        assert!((r.ratio_direct - (1.0 + c) / 2.0).abs() < 1e-12);
        assert!(r.ratio_direct <= 1.0);

        let r = wva_report(&cfg(0.02, PI, 0.99, 1.0)).unwrap();
        assert!((r.ratio_direct - 0.047).abs() < 1e-3);
    }

    #[test]
    fn decoherence_free_recovers_unity() {
        let r = wva_report(&cfg(1e-3, PI, 1.0, 1.0)).unwrap();
        assert!(r.ratio_direct >= 0.999999);
        let lim = ratio_direct_antiparallel(1e-3, 1.0).unwrap();
        assert!((lim - r.ratio_direct).abs() < 1e-9);
        assert_eq!(ratio_direct_antiparallel(0.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn additivity_and_bounds() {
        let r = wva_report(&cfg(0.4, 2.3, 0.7, 1.9)).unwrap();
        assert!((r.q * r.h_wva + (1.0 - r.q) * r.h_perp - r.h_total).abs() < 1e-12);
        assert!(r.h_total <= r.h_d + 1e-12);
        assert!((r.q - 0.5 / r.a_factor.sqrt()).abs() < 1e-15);
        for g in [0.01, 0.3, 0.7, 1.0] {
            let r = wva_report(&cfg(g, PI, 1.0, 1.7)).unwrap();
            assert!((r.h_total - 1.7 * 1.7).abs() < 1e-10);
        }
    }

    #[test]
    fn equatorial_qfi_matches_direct_family() {
        let (t, xi, db): (f64, f64, f64) = (1.4, 0.6, 0.3);
        let p = t * db;
        let (x, y) = (-xi * p.sin(), -xi * p.cos());
        let (dx, dy) = (-xi * t * p.cos(), xi * t * p.sin());
        assert!((qfi_equatorial(x, y, dx, dy).unwrap() - xi * xi * t * t).abs() < 1e-12);
        assert_eq!(qfi_equatorial(x, y, 0.0, 0.0).unwrap(), 0.0);
        let (x, y) = (-p.sin(), -p.cos());
        let (dx, dy) = (-t * p.cos(), t * p.sin());
        assert!((qfi_equatorial(x, y, dx, dy).unwrap() - t * t).abs() < 1e-12);
        assert!(qfi_equatorial(1.0, 0.5, 0.0, 0.0).is_err());
    }

    #[test]
    fn noisy_meter_anchors() {
        let base = cfg(1.0, PI, 1.0, 1.5).with_sigma(0.8);
        let r = noisy_meter_report(&base).unwrap();
        assert!((r.q_h_wva_tilde - 0.64 * 2.25 / 2.0).abs() < 1e-14);
        assert!((r.h_anc_tilde - 0.64 * 2.25).abs() < 1e-14);

        let r = noisy_meter_report(&cfg(0.5, PI, 1.0, 1.0).with_sigma(0.9)).unwrap();
        assert!((r.q_h_wva_tilde - 0.81 * (PI / 8.0).cos().powi(2)).abs() < 1e-14);

        let r = noisy_meter_report(&cfg(1e-3, PI, 1.0, 1.0).with_sigma(0.9)).unwrap();
        assert!((r.q_h_wva_tilde / r.h_anc_tilde - 1.0).abs() < 1e-5);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(cfg(1.2, 0.0, 0.5, 1.0).validate().is_err());
        assert!(cfg(0.5, 0.0, -0.1, 1.0).validate().is_err());
        assert!(cfg(0.5, 0.0, 0.5, -1.0).validate().is_err());
        assert!(cfg(0.5, f64::NAN, 0.5, 1.0).validate().is_err());
    }
}
