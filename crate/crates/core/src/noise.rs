//! Decoherence laws for the sensing qubit and the time-evolved system state.
//!
//! The state in the rotating frame is
//!
//! ```text
//! 2ρ₁₁(t) = R(t)
//! 2ρ₁₂(t) = −i e^{−i δB t} Ξ(t)
//! ```
//!
//! with `R ≡ 1` for pure dephasing. Positivity requires `Ξ² ≤ R(2 − R)`.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Mat2;
use crate::state::{QubitState, STATE_TOLERANCE};

/// Coherence attenuation law `Ξ(t) ∈ [0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttenuationModel {
    /// `Ξ = e^{−Γt}`
    ExponentialDephasing { gamma: f64 },
    /// `Ξ = e^{−Γt²}` (1/f-type decay)
    GaussianDecay { gamma: f64 },
    Constant { xi0: f64 },
    Tabulated(XiTable),
}

impl AttenuationModel {
    pub fn xi(&self, t: f64) -> Result<f64> {
        xi_eval(self, t)
    }
}

/// `Ξ(t)` for the given law.
pub fn xi_eval(model: &AttenuationModel, t: f64) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time must be finite and non-negative, got {t}")));
    }
    let xi = match model {
        AttenuationModel::ExponentialDephasing { gamma } => {
            check_rate(*gamma)?;
            (-gamma * t).exp()
        }
        AttenuationModel::GaussianDecay { gamma } => {
            check_rate(*gamma)?;
            (-gamma * t * t).exp()
        }
        AttenuationModel::Constant { xi0 } => {
            if !(0.0..=1.0).contains(xi0) {
                return Err(Error::Domain(format!("constant attenuation {xi0} outside [0, 1]")));
            }
            *xi0
        }
        AttenuationModel::Tabulated(table) => table.interpolate(t)?,
    };
    Ok(xi.clamp(0.0, 1.0))
}

fn check_rate(gamma: f64) -> Result<()> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("decay rate must be non-negative, got {gamma}")));
    }
    Ok(())
}

/// Sampled `(t, Ξ)` pairs, strictly increasing in `t`; linear interpolation,
/// no extrapolation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct XiTable {
    samples: Vec<(f64, f64)>,
}

impl XiTable {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Domain("attenuation table needs at least two samples".into()));
        }
        if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Domain("attenuation table times must be strictly increasing".into()));
        }
        if let Some(&(t, xi)) = samples
            .iter()
            .find(|(t, xi)| !t.is_finite() || !(0.0..=1.0).contains(xi))
        {
            return Err(Error::Domain(format!("invalid table sample t = {t}, xi = {xi}")));
        }
        Ok(XiTable { samples })
    }

    /// Two-column CSV with header `t,xi`.
    pub fn from_csv_reader<R: std::io::Read>(rdr: R) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(rdr);
        let headers = csv.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "xi" {
            return Err(Error::Parse(format!("expected header `t,xi`, got `{}`", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let mut samples = Vec::new();
        for rec in csv.deserialize::<(f64, f64)>() {
            samples.push(rec?);
        }
        XiTable::new(samples)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::from_csv_reader(f)
    }

    pub fn range(&self) -> (f64, f64) {
        (self.samples[0].0, self.samples[self.samples.len() - 1].0)
    }

    fn interpolate(&self, t: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        if t < lo || t > hi {
            return Err(Error::Domain(format!("t = {t} outside tabulated range [{lo}, {hi}]")));
        }
        let idx = self.samples.partition_point(|s| s.0 <= t).clamp(1, self.samples.len() - 1);
        let (t0, x0) = self.samples[idx - 1];
        let (t1, x1) = self.samples[idx];
        Ok(x0 + (x1 - x0) * (t - t0) / (t1 - t0))
    }
}

impl TryFrom<Vec<(f64, f64)>> for XiTable {
    type Error = Error;
    fn try_from(v: Vec<(f64, f64)>) -> Result<Self> {
        XiTable::new(v)
    }
}

impl From<XiTable> for Vec<(f64, f64)> {
    fn from(t: XiTable) -> Self {
        t.samples
    }
}

/// Joint population/coherence law. `R` is stored as `2ρ₁₁`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PopulationModel {
    /// `R ≡ 1` with the given coherence law.
    Unpolarized { attenuation: AttenuationModel },
    /// `R = e^{−t/T1}`, `Ξ = e^{−t/(2T1)}`
    Relaxation { t1: f64 },
    /// Independent laws for `R(t)` and `Ξ(t)`; `R` is read from a `[0, 1]`
    /// profile.
    Custom {
        population: AttenuationModel,
        attenuation: AttenuationModel,
    },
}

impl PopulationModel {
    pub fn dephasing(attenuation: AttenuationModel) -> Self {
        PopulationModel::Unpolarized { attenuation }
    }

    /// `(R(t), Ξ(t))`
    pub fn evaluate(&self, t: f64) -> Result<(f64, f64)> {
        match self {
            PopulationModel::Unpolarized { attenuation } => Ok((1.0, attenuation.xi(t)?)),
            PopulationModel::Relaxation { t1 } => {
                if !(*t1 > 0.0) {
                    return Err(Error::Domain(format!("T1 must be positive, got {t1}")));
                }
                if !(t >= 0.0) {
                    return Err(Error::Domain(format!("time must be non-negative, got {t}")));
                }
                Ok(((-t / t1).exp(), (-t / (2.0 * t1)).exp()))
            }
            PopulationModel::Custom { population, attenuation } => {
                Ok((population.xi(t)?, attenuation.xi(t)?))
            }
        }
    }

    /// Whether `Ξ² ≤ R(2 − R)` holds at `t`.
    pub fn check_positivity(&self, t: f64) -> Result<(f64, f64)> {
        let (r, xi) = self.evaluate(t)?;
        check_population_bound(t, r, xi)?;
        Ok((r, xi))
    }
}

pub(crate) fn check_population_bound(t: f64, r: f64, xi: f64) -> Result<()> {
    if !(0.0..=2.0).contains(&r) {
        return Err(Error::Domain(format!("population R = {r} outside [0, 2]")));
    }
    let bound = r * (2.0 - r);
    if xi * xi > bound + STATE_TOLERANCE {
        return Err(Error::ModelPositivity { t, xi_sq: xi * xi, bound });
    }
    Ok(())
}

/// The sensing qubit after free evolution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SystemState {
    pub rho: QubitState,
    pub t: f64,
    pub delta_b: f64,
    pub population: f64,
    pub xi: f64,
}

/// Density matrix from explicit `(δB, t, R, Ξ)`.
pub fn system_density(delta_b: f64, t: f64, population: f64, xi: f64) -> Result<QubitState> {
    check_population_bound(t, population, xi)?;
    let coh = Complex64::new(0.0, -0.5) * Complex64::from_polar(xi, -delta_b * t);
    QubitState::new(Mat2::from_rows([
        [Complex64::new(0.5 * population, 0.0), coh],
        [coh.conj(), Complex64::new(1.0 - 0.5 * population, 0.0)],
    ]))
}

/// Evolve the system under `model` for time `t` in field offset `delta_b`.
pub fn system_state(delta_b: f64, t: f64, model: &PopulationModel) -> Result<SystemState> {
    let (population, xi) = model.check_positivity(t)?;
    let rho = system_density(delta_b, t, population, xi)?;
    Ok(SystemState { rho, t, delta_b, population, xi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::I;

    #[test]
    fn decay_laws() {
        let exp = AttenuationModel::ExponentialDephasing { gamma: 1.0 };
        assert_eq!(xi_eval(&exp, 0.0).unwrap(), 1.0);
        assert!((xi_eval(&exp, 1.0).unwrap() - 0.36787944117144233).abs() < 1e-15);
        let gauss = AttenuationModel::GaussianDecay { gamma: 2.0 };
        // series oracle for e^{-0.5}
        let series: f64 = (0..30)
            .scan(1.0, |term, k| {
                let out = *term;
                *term *= -0.5 / (k as f64 + 1.0);
                Some(out)
            })
            .sum();
        assert!((xi_eval(&gauss, 0.5).unwrap() - series).abs() < 1e-15);
    }

    #[test]
    fn negative_time_is_rejected() {
        let exp = AttenuationModel::ExponentialDephasing { gamma: 1.0 };
        assert!(matches!(xi_eval(&exp, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn table_interpolates_and_refuses_extrapolation() {
        let table = XiTable::new(vec![(0.0, 1.0), (1.0, 0.5), (3.0, 0.1)]).unwrap();
        let m = AttenuationModel::Tabulated(table);
        assert!((m.xi(0.5).unwrap() - 0.75).abs() < 1e-15);
        assert!((m.xi(2.0).unwrap() - 0.3).abs() < 1e-15);
        assert!((m.xi(3.0).unwrap() - 0.1).abs() < 1e-15);
        assert!(m.xi(3.5).is_err());
        assert!(XiTable::new(vec![(0.0, 1.0), (0.0, 0.5)]).is_err());
        assert!(XiTable::new(vec![(0.0, 1.0), (1.0, 1.5)]).is_err());
    }

    #[test]
    fn table_from_csv() {
        let src = "t,xi\n0,1\n0.5,0.8\n1.0,0.2\n";
        let t = XiTable::from_csv_reader(src.as_bytes()).unwrap();
        assert_eq!(t.range(), (0.0, 1.0));
        assert!(XiTable::from_csv_reader("time,xi\n0,1\n1,0\n".as_bytes()).is_err());
    }

    #[test]
    fn initial_state_is_pure_in_plane() {
        let models = [
            PopulationModel::dephasing(AttenuationModel::ExponentialDephasing { gamma: 3.0 }),
            PopulationModel::dephasing(AttenuationModel::GaussianDecay { gamma: 0.2 }),
            PopulationModel::Relaxation { t1: 0.7 },
        ];
        for m in &models {
            let s = system_state(0.9, 0.0, m).unwrap();
            assert!((s.rho.element(0, 1) * 2.0 - (-I)).norm() < 1e-15);
            assert!((s.rho.purity() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dephased_state_at_unit_time() {
        let m = PopulationModel::dephasing(AttenuationModel::ExponentialDephasing { gamma: 1.0 });
        let s = system_state(0.0, 1.0, &m).unwrap();
        let expect = -I * (-1.0_f64).exp();
        assert!((s.rho.element(0, 1) * 2.0 - expect).norm() < 1e-15);
    }

    #[test]
    fn relaxation_populations() {
        let s = system_state(0.4, 1.0, &PopulationModel::Relaxation { t1: 2.0 }).unwrap();
        assert!((2.0 * s.rho.element(0, 0).re - (-0.5_f64).exp()).abs() < 1e-15);
        assert!((2.0 * s.rho.element(0, 1).norm() - (-0.25_f64).exp()).abs() < 1e-15);
        assert!(s.rho.spectral_decompose().min_eigenvalue() >= -1e-12);
    }

    #[test]
    fn positivity_violation_names_the_time() {
        let m = PopulationModel::Custom {
            population: AttenuationModel::Constant { xi0: 0.1 },
            attenuation: AttenuationModel::Constant { xi0: 0.9 },
        };
        match system_state(0.0, 2.5, &m) {
            Err(Error::ModelPositivity { t, .. }) => assert_eq!(t, 2.5),
            other => panic!("expected positivity error, got {other:?}"),
        }
    }
}
