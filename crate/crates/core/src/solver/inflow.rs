use std::f64::consts::SQRT_2;

use crate::config::{InflowConfig, ScenarioConfig};

/// Prescribed incoming distribution on a face, separated into a space-time
/// amplitude and an angular profile in `c = Ω·n` (negative for incoming directions).
#[derive(Debug, Clone, PartialEq)]
pub enum Inflow {
    Vacuum,
    Isotropic {
        value: f64,
    },
    Beam {
        energy: f64,
        energy_sigma: f64,
        center: Vec<f64>,
        width: f64,
        angular_sigma: f64,
        /// `ε(t) = e_max − rate·t`
        e_max: f64,
        rate: f64,
    },
}

impl Inflow {
    pub fn from_config(cfg: &InflowConfig, scenario: &ScenarioConfig) -> Inflow {
        match cfg {
            InflowConfig::Vacuum => Inflow::Vacuum,
            InflowConfig::Isotropic { value } => Inflow::Isotropic { value: *value },
            InflowConfig::Beam {
                energy,
                energy_sigma,
                center,
                width,
                angular_sigma,
            } => Inflow::Beam {
                energy: *energy,
                energy_sigma: *energy_sigma,
                center: center.clone(),
                width: *width,
                angular_sigma: *angular_sigma,
                e_max: scenario.from_time(0.0),
                rate: scenario.from_time(0.0) - scenario.from_time(1.0),
            },
        }
    }

    pub fn is_vacuum(&self) -> bool {
        matches!(self, Inflow::Vacuum)
            || matches!(self, Inflow::Isotropic { value } if *value == 0.0)
    }

    /// Angular factor for `c = Ω·n < 0`.
    pub fn angular(&self, c: f64) -> f64 {
        match self {
            Inflow::Vacuum => 0.0,
            Inflow::Isotropic { .. } => 1.0,
            Inflow::Beam { angular_sigma, .. } => {
                (-((c + 1.0) / (SQRT_2 * angular_sigma)).powi(2)).exp()
            }
        }
    }

    /// Space-time factor at pseudo-time `t` and transverse coordinates.
    pub fn amplitude(&self, t: f64, transverse: &[f64]) -> f64 {
        match self {
            Inflow::Vacuum => 0.0,
            Inflow::Isotropic { value } => *value,
            Inflow::Beam {
                energy,
                energy_sigma,
                center,
                width,
                e_max,
                rate,
                ..
            } => {
                let e = e_max - rate * t;
                let r2: f64 = transverse
                    .iter()
                    .zip(center)
                    .map(|(x, c)| (x - c) * (x - c))
                    .sum();
                (-((e - energy) / (SQRT_2 * energy_sigma)).powi(2)).exp()
                    * (-r2 / (2.0 * width * width)).exp()
            }
        }
    }

    /// Full incoming distribution.
    pub fn psi(&self, t: f64, transverse: &[f64], c: f64) -> f64 {
        if c >= 0.0 {
            return 0.0;
        }
        self.amplitude(t, transverse) * self.angular(c)
    }
}
