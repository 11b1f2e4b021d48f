//! Rectangular parameter grids shared by the sweeps and the verifier.
//!
//! The `theta` axis is always the relative angle `θ − tδB`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::closed_form::ProtocolConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Param {
    #[serde(rename = "G")]
    G,
    #[serde(rename = "theta")]
    Theta,
    #[serde(rename = "xi")]
    Xi,
    #[serde(rename = "gamma")]
    Gamma,
    #[serde(rename = "t")]
    T,
    #[serde(rename = "delta_b")]
    DeltaB,
    #[serde(rename = "sigma")]
    Sigma,
}

impl Param {
    pub const ALL: [Param; 7] = [
        Param::G,
        Param::Theta,
        Param::Xi,
        Param::Gamma,
        Param::T,
        Param::DeltaB,
        Param::Sigma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::G => "G",
            Param::Theta => "theta",
            Param::Xi => "xi",
            Param::Gamma => "gamma",
            Param::T => "t",
            Param::DeltaB => "delta_b",
            Param::Sigma => "sigma",
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Param::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Grid(format!("unknown parameter `{s}`")))
    }
}

/// Inclusive, evenly spaced axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: Param,
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Axis {
    pub fn new(name: Param, min: f64, max: f64, steps: usize) -> Self {
        Axis { name, min, max, steps }
    }

    pub fn values(&self) -> Vec<f64> {
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|k| {
                if k + 1 == self.steps {
                    self.max
                } else {
                    self.min + (self.max - self.min) * k as f64 / last
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub axes: Vec<Axis>,
    #[serde(default)]
    pub fixed: BTreeMap<Param, f64>,
}

impl SweepGrid {
    pub fn new(axes: Vec<Axis>, fixed: BTreeMap<Param, f64>) -> Result<Self> {
        let grid = SweepGrid { axes, fixed };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::Grid("grid has no axes".into()));
        }
        for (k, axis) in self.axes.iter().enumerate() {
            if self.axes[..k].iter().any(|a| a.name == axis.name) {
                return Err(Error::Grid(format!("axis `{}` repeated", axis.name)));
            }
            if self.fixed.contains_key(&axis.name) {
                return Err(Error::Grid(format!("`{}` is both an axis and fixed", axis.name)));
            }
            if axis.steps < 2 {
                return Err(Error::Grid(format!("axis `{}` needs at least 2 steps", axis.name)));
            }
            if !axis.min.is_finite() || !axis.max.is_finite() {
                return Err(Error::Grid(format!("axis `{}` has non-finite bounds", axis.name)));
            }
        }
        if let Some((p, _)) = self.fixed.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Grid(format!("fixed value for `{p}` is not finite")));
        }
        Ok(())
    }

    pub fn has(&self, p: Param) -> bool {
        self.fixed.contains_key(&p) || self.axes.iter().any(|a| a.name == p)
    }

    /// Fail unless every listed parameter is an axis or fixed.
    pub fn require(&self, params: &[Param]) -> Result<()> {
        let missing: Vec<_> = params.iter().filter(|p| !self.has(**p)).map(|p| p.name()).collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Grid(format!("unbound parameters: {}", missing.join(", "))))
        }
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.steps).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All points, first axis varying slowest.
    pub fn points(&self) -> Vec<GridPoint> {
        let values: Vec<Vec<f64>> = self.axes.iter().map(Axis::values).collect();
        let mut out = Vec::with_capacity(self.len());
        let mut idx = vec![0usize; self.axes.len()];
        loop {
            let mut map = self.fixed.clone();
            for (k, axis) in self.axes.iter().enumerate() {
                map.insert(axis.name, values[k][idx[k]]);
            }
            out.push(GridPoint(map));
            let mut k = self.axes.len();
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < self.axes[k].steps {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
}

/// One grid point, every bound parameter by name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GridPoint(pub BTreeMap<Param, f64>);

impl GridPoint {
    pub fn get(&self, p: Param) -> Option<f64> {
        self.0.get(&p).copied()
    }

    pub fn require(&self, p: Param) -> Result<f64> {
        self.get(p)
            .ok_or_else(|| Error::Grid(format!("parameter `{p}` is not bound")))
    }

    /// Main-text configuration at this point. `xi` defaults to `e^{−Γt}`
    /// when only `gamma` is bound, `delta_b` to 0 and `sigma` to 1.
    pub fn protocol_config(&self) -> Result<ProtocolConfig> {
        let t = self.require(Param::T)?;
        let xi = match (self.get(Param::Xi), self.get(Param::Gamma)) {
            (Some(xi), _) => xi,
            (None, Some(gamma)) => (-gamma * t).exp(),
            (None, None) => return Err(Error::Grid("neither `xi` nor `gamma` is bound".into())),
        };
        let delta_b = self.get(Param::DeltaB).unwrap_or(0.0);
        let cfg = ProtocolConfig::wva(self.require(Param::G)?, self.require(Param::Theta)?, xi, t, delta_b)
            .with_sigma(self.get(Param::Sigma).unwrap_or(1.0));
        cfg.validate()?;
        Ok(cfg)
    }
}
