//! JSON scenario description. Parsing rejects unknown keys, and
//! [`ScenarioConfig::validate`] checks ranges and cross-field consistency
//! before anything is allocated.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::onsager::Face;
use crate::pn::ScatteringSpectrum;
use crate::sphharm::Axis;

/// `1 J/m` in `keV/nm`.
pub const JOULE_PER_METER_IN_KEV_PER_NM: f64 = 6.241_509_074e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub model: ModelConfig,
    pub domain: DomainConfig,
    #[serde(default)]
    pub boundaries: Vec<BoundaryConfig>,
    pub initial: InitialConfig,
    pub integration: IntegrationConfig,
    pub outputs: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub order: usize,
    pub scattering: ScatteringConfig,
    #[serde(default)]
    pub stopping: Option<StoppingConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScatteringConfig {
    None,
    /// Conservative isotropic scattering, `σ_s = σ_t = sigma`.
    Isotropic {
        sigma: f64,
    },
    HenyeyGreenstein {
        sigma_s: f64,
        g: f64,
        sigma_t: f64,
    },
    /// Legendre-moment table file, relative paths resolved against the config file.
    Table {
        path: PathBuf,
    },
}

/// Constant stopping power in SI units; lengths are then in nm and energies in keV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingConfig {
    /// Mass stopping power in (J/m)/(kg/m³). The sign is ignored.
    pub power: f64,
    /// Mass density in kg/m³.
    pub density: f64,
}

impl StoppingConfig {
    /// `|S|ρ` in keV/nm.
    pub fn kev_per_nm(&self) -> f64 {
        self.power.abs() * self.density * JOULE_PER_METER_IN_KEV_PER_NM
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    /// Discretized axes, e.g. `["x"]` or `["x", "z"]`; the solution is
    /// constant along the others.
    pub axes: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    #[default]
    Onsager,
    /// Full Marshak matrix `M̃` instead of `LÂ`; not energy stable.
    UnstableMarshak,
}

fn default_alpha() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    pub face: String,
    #[serde(rename = "type", default)]
    pub kind: BoundaryKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub inflow: InflowConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InflowConfig {
    #[default]
    Vacuum,
    Isotropic {
        value: f64,
    },
    /// `exp(−((ε−ε₀)/(√2σ_ε))²)·exp(−|x−c|²/(2σ_x²))·exp(−((Ω·n+1)/(√2σ_Ω))²)`;
    /// energy mode only. `center` lists one coordinate per transverse discretized axis.
    Beam {
        energy: f64,
        energy_sigma: f64,
        #[serde(default)]
        center: Vec<f64>,
        width: f64,
        angular_sigma: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    None,
    /// Isotropic Gaussian bulk in a single moment; `normalized` scales it to unit mass.
    GaussianBulk {
        center: Vec<f64>,
        sigma: f64,
        #[serde(default = "zero_moment")]
        moment: (usize, i64),
        #[serde(default)]
        normalized: bool,
    },
    /// `exp(−|x−c|²/(2σ²))·(isotropic + direction·Ω)`
    AngularBulk {
        center: Vec<f64>,
        sigma: f64,
        isotropic: f64,
        direction: [f64; 3],
    },
    /// Moments `(l, k, amplitude)` times `exp(−((x−c)/width)²)` along the
    /// first axis. With `odd_from`, the odd moments of that face are set from
    /// its boundary matrix applied to the even ones.
    MomentProfile {
        #[serde(default)]
        center: f64,
        width: f64,
        moments: Vec<(usize, i64, f64)>,
        #[serde(default)]
        odd_from: Option<String>,
    },
}

fn zero_moment() -> (usize, i64) {
    (0, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyRange {
    pub max: f64,
    pub min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationConfig {
    pub cfl: f64,
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub energy: Option<EnergyRange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Times, or energies in energy mode.
    #[serde(default)]
    pub snapshots: Vec<f64>,
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads and validates; relative table paths are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let ScatteringConfig::Table { path: table } = &mut cfg.model.scattering {
            if table.is_relative() {
                if let Some(dir) = path.parent() {
                    *table = dir.join(&*table);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn energy_mode(&self) -> bool {
        self.integration.energy.is_some()
    }

    pub fn axes(&self) -> Result<Vec<Axis>> {
        self.domain
            .axes
            .iter()
            .map(|a| match a.as_str() {
                "x" => Ok(Axis::X),
                "y" => Ok(Axis::Y),
                "z" => Ok(Axis::Z),
                other => Err(Error::Config(format!("unknown axis '{other}'"))),
            })
            .collect()
    }

    /// Pseudo-time of an energy, or the value itself in time mode.
    pub fn to_time(&self, value: f64) -> f64 {
        match (&self.integration.energy, &self.model.stopping) {
            (Some(range), Some(s)) => (range.max - value) / s.kev_per_nm(),
            _ => value,
        }
    }

    /// Energy at a pseudo-time, or the time itself in time mode.
    pub fn from_time(&self, t: f64) -> f64 {
        match (&self.integration.energy, &self.model.stopping) {
            (Some(range), Some(s)) => range.max - t * s.kev_per_nm(),
            _ => t,
        }
    }

    pub fn end_time(&self) -> f64 {
        match (&self.integration.energy, self.integration.t_end) {
            (Some(range), _) => self.to_time(range.min),
            (None, Some(t)) => t,
            (None, None) => 0.0,
        }
    }

    pub fn scattering(&self) -> Result<ScatteringSpectrum> {
        let spec = match &self.model.scattering {
            ScatteringConfig::None => ScatteringSpectrum::none(),
            ScatteringConfig::Isotropic { sigma } => ScatteringSpectrum::isotropic(*sigma),
            ScatteringConfig::HenyeyGreenstein {
                sigma_s,
                g,
                sigma_t,
            } => ScatteringSpectrum::henyey_greenstein(*sigma_s, *g, *sigma_t),
            ScatteringConfig::Table { path } => ScatteringSpectrum::load_table(path)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!(
                "scenario name '{}' must be a plain file stem",
                self.name
            ));
        }
        if self.model.order == 0 || self.model.order > 21 {
            return bad(format!("order {} outside 1..=21", self.model.order));
        }
        let axes = self.axes()?;
        let d = axes.len();
        if d == 0 || d > 3 {
            return bad(format!("need 1 to 3 axes, got {d}"));
        }
        if self.domain.lower.len() != d
            || self.domain.upper.len() != d
            || self.domain.cells.len() != d
        {
            return bad("domain lower/upper/cells must have one entry per axis".into());
        }
        for (i, a) in axes.iter().enumerate() {
            if axes[..i].contains(a) {
                return bad(format!("axis {} listed twice", a.name()));
            }
            let (lo, hi) = (self.domain.lower[i], self.domain.upper[i]);
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return bad(format!("empty extent [{lo}, {hi}] on axis {}", a.name()));
            }
            if self.domain.cells[i] < 4 {
                return bad(format!("axis {} needs at least 4 cells", a.name()));
            }
        }
        match &self.model.scattering {
            ScatteringConfig::Isotropic { sigma } if !(*sigma >= 0.0) => {
                return bad(format!("negative cross section {sigma}"));
            }
            ScatteringConfig::HenyeyGreenstein {
                sigma_s,
                g,
                sigma_t,
            } => {
                if !(*sigma_s >= 0.0 && *sigma_t >= *sigma_s) {
                    return bad(format!(
                        "need 0 <= sigma_s <= sigma_t, got {sigma_s}, {sigma_t}"
                    ));
                }
                if !(-1.0 < *g && *g < 1.0) {
                    return bad(format!("anisotropy g={g} outside (-1, 1)"));
                }
            }
            _ => {}
        }
        let mut seen = Vec::new();
        for b in &self.boundaries {
            let face = Face::parse(&b.face)?;
            if !axes.contains(&face.axis) {
                return bad(format!("face {} is not on a discretized axis", b.face));
            }
            if seen.contains(&face) {
                return bad(format!("face {} configured twice", b.face));
            }
            seen.push(face);
            if !b.alpha.is_finite() {
                return bad(format!("alpha on {} is not finite", b.face));
            }
            match &b.inflow {
                InflowConfig::Beam {
                    center,
                    width,
                    angular_sigma,
                    energy_sigma,
                    ..
                } => {
                    if !self.energy_mode() {
                        return bad("beam inflow requires an energy range".into());
                    }
                    if center.len() != d - 1 {
                        return bad(format!(
                            "beam center needs {} transverse coordinates, got {}",
                            d - 1,
                            center.len()
                        ));
                    }
                    if !(*width > 0.0 && *angular_sigma > 0.0 && *energy_sigma > 0.0) {
                        return bad("beam widths must be positive".into());
                    }
                }
                InflowConfig::Isotropic { value } if !value.is_finite() => {
                    return bad("isotropic inflow value is not finite".into());
                }
                _ => {}
            }
        }
        match &self.initial {
            InitialConfig::GaussianBulk {
                center,
                sigma,
                moment,
                ..
            } => {
                if center.len() != d || !(*sigma > 0.0) {
                    return bad("gaussian_bulk needs one center per axis and sigma > 0".into());
                }
                if moment.1.unsigned_abs() as usize > moment.0 || moment.0 > self.model.order {
                    return bad(format!("moment {moment:?} not in the basis"));
                }
            }
            InitialConfig::AngularBulk { center, sigma, .. } => {
                if center.len() != d || !(*sigma > 0.0) {
                    return bad("angular_bulk needs one center per axis and sigma > 0".into());
                }
            }
            InitialConfig::MomentProfile {
                width,
                moments,
                odd_from,
                ..
            } => {
                if !(*width > 0.0) {
                    return bad("moment_profile width must be positive".into());
                }
                for (l, k, _) in moments {
                    if k.unsigned_abs() as usize > *l || *l > self.model.order {
                        return bad(format!("moment ({l},{k}) not in the basis"));
                    }
                }
                if let Some(face) = odd_from {
                    let f = Face::parse(face)?;
                    if f.axis != axes[0] {
                        return bad(format!("odd_from face {face} must lie on the first axis"));
                    }
                }
            }
            InitialConfig::None => {}
        }
        let cfl = self.integration.cfl;
        if !(cfl > 0.0 && cfl <= 1.0) {
            return bad(format!("cfl {cfl} outside (0, 1]"));
        }
        match (&self.integration.energy, self.integration.t_end) {
            (Some(range), None) => {
                if self.model.stopping.is_none() {
                    return bad("energy range requires a stopping power".into());
                }
                if !(range.max > range.min) {
                    return bad(format!(
                        "energy range {} -> {} must decrease",
                        range.max, range.min
                    ));
                }
                if let Some(s) = &self.model.stopping {
                    if !(s.power != 0.0 && s.density > 0.0) {
                        return bad("stopping power and density must be nonzero".into());
                    }
                }
                for e in &self.outputs.snapshots {
                    if !(range.min <= *e && *e <= range.max) {
                        return bad(format!("snapshot energy {e} outside the energy range"));
                    }
                }
            }
            (None, Some(t)) => {
                if !(t > 0.0) {
                    return bad(format!("t_end {t} must be positive"));
                }
                if self.model.stopping.is_some() {
                    return bad("stopping power given without an energy range".into());
                }
                for s in &self.outputs.snapshots {
                    if !(0.0 <= *s && *s <= t) {
                        return bad(format!("snapshot time {s} outside [0, {t}]"));
                    }
                }
            }
            _ => return bad("set exactly one of integration.t_end and integration.energy".into()),
        }
        Ok(())
    }
}
