//! Strang-split time (or energy) integration of the semi-discrete P_N system.

mod inflow;
mod operator;

use std::path::PathBuf;

use nalgebra::DVector;
use serde::Serialize;

use crate::config::{InitialConfig, ScenarioConfig};
use crate::error::{Error, Result};
use crate::onsager::Face;
use crate::sphharm::Restriction;

pub use inflow::Inflow;
pub use operator::{
    axis_nodes, BoundaryFace, BoundaryNode, Discretization, FaceBlock, Family, Fields,
};

/// Family grid functions at a time.
#[derive(Debug, Clone, Serialize)]
pub struct SolverState {
    pub t: f64,
    pub fields: Fields,
}

/// Energy per accepted step and the accumulated boundary source `∫Σ w gᵀg dt`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct EnergyLog {
    pub t: Vec<f64>,
    pub energy: Vec<f64>,
    pub source: Vec<f64>,
}

impl EnergyLog {
    pub fn push(&mut self, t: f64, energy: f64, source: f64) {
        self.t.push(t);
        self.energy.push(energy);
        self.source.push(source);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn initial(&self) -> f64 {
        self.energy.first().copied().unwrap_or(0.0)
    }

    pub fn last(&self) -> f64 {
        self.energy.last().copied().unwrap_or(0.0)
    }

    /// `E(0) + C ∫Σ gᵀg` at every logged step.
    pub fn bound(&self, c: f64) -> Vec<f64> {
        let e0 = self.initial();
        self.source.iter().map(|s| e0 + c * s).collect()
    }

    /// Energy at `t` by linear interpolation.
    pub fn at(&self, t: f64) -> f64 {
        let i = self.t.partition_point(|&s| s < t);
        if i == 0 {
            return self.energy[0];
        }
        if i >= self.len() {
            return self.last();
        }
        let (t0, t1) = (self.t[i - 1], self.t[i]);
        let w = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
        self.energy[i - 1] * (1.0 - w) + self.energy[i] * w
    }

    /// Largest per-step relative increase `(E_{n+1} − E_n)/E_0`.
    pub fn max_relative_increase(&self) -> f64 {
        let e0 = self.initial().max(f64::MIN_POSITIVE);
        self.energy
            .windows(2)
            .map(|w| (w[1] - w[0]) / e0)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Outcome of the discrete energy-bound check.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundCheck {
    pub pass: bool,
    pub constant: f64,
    /// Largest `E(t) − bound(t)`; negative when the bound holds with room to spare.
    pub worst_excess: f64,
    pub tolerance: f64,
}

/// Checks `E(t) ≤ E(0) + C ∫Σ gᵀg + tol` along the whole log, `tol = 1e-8·E(0)`.
pub fn energy_bound_check(log: &EnergyLog, constant: f64) -> BoundCheck {
    let tolerance = 1e-8 * log.initial();
    let worst_excess = log
        .energy
        .iter()
        .zip(log.bound(constant))
        .map(|(e, b)| e - b)
        .fold(f64::NEG_INFINITY, f64::max);
    BoundCheck {
        pass: worst_excess <= tolerance,
        constant,
        worst_excess,
        tolerance,
    }
}

/// `u_0^0` on the all-even family grid.
#[derive(Debug, Clone, Serialize)]
pub struct Snapshot {
    /// Pseudo-time of the snapshot.
    pub t: f64,
    /// Requested label: time, or energy in energy mode.
    pub label: f64,
    pub coords: Vec<Vec<f64>>,
    pub u00: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: EnergyLog,
    pub snapshots: Vec<Snapshot>,
    pub steps: usize,
    pub dt: f64,
    pub state: SolverState,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Written as JSON when the run hits a non-finite value.
    pub dump_path: Option<PathBuf>,
    /// Overrides the configured end (time, or energy in energy mode).
    pub end: Option<f64>,
}

/// A configured scenario with its assembled discretization.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: ScenarioConfig,
    pub disc: Discretization,
}

struct Workspace {
    k: [Fields; 4],
    tmp: Fields,
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let disc = Discretization::from_config(&config)?;
        Ok(Simulation { config, disc })
    }

    /// `cfl · h_min / λ_max`
    pub fn max_dt(&self) -> f64 {
        self.config.integration.cfl * self.disc.dt_limit()
    }

    pub fn initial_state(&self) -> Result<SolverState> {
        let disc = &self.disc;
        let mut fields = disc.zeros();
        let basis = disc.system.basis();
        let d = disc.tensor.dims();
        let gauss = |x: &[f64], c: &[f64], s: f64| {
            let r2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            (-r2 / (2.0 * s * s)).exp()
        };
        match &self.config.initial {
            InitialConfig::None => {}
            InitialConfig::GaussianBulk {
                center,
                sigma,
                moment,
                normalized,
            } => {
                let scale = if *normalized {
                    (sigma * (2.0 * std::f64::consts::PI).sqrt())
                        .powi(d as i32)
                        .recip()
                } else {
                    1.0
                };
                let (fam, j) = disc.locate(basis.position(moment.0, moment.1)?);
                self.fill(&mut fields, fam, j, |x| scale * gauss(x, center, *sigma));
            }
            InitialConfig::AngularBulk {
                center,
                sigma,
                isotropic,
                direction,
            } => {
                let quad = basis.quadrature(Restriction::Full);
                let mut coef = vec![0.0; basis.dim()];
                for (omega, w) in quad.iter() {
                    let c = omega.components();
                    let psi = isotropic + c.iter().zip(direction).map(|(a, b)| a * b).sum::<f64>();
                    for (x, y) in coef.iter_mut().zip(basis.eval(*omega)) {
                        *x += w * psi * y;
                    }
                }
                for (p, &c) in coef.iter().enumerate() {
                    if c.abs() < 1e-14 {
                        continue;
                    }
                    let (fam, j) = disc.locate(p);
                    self.fill(&mut fields, fam, j, |x| c * gauss(x, center, *sigma));
                }
            }
            InitialConfig::MomentProfile {
                center,
                width,
                moments,
                odd_from,
            } => {
                let profile = |x: &[f64]| (-((x[0] - center) / width).powi(2)).exp();
                let mut amp = vec![0.0; basis.dim()];
                for &(l, k, a) in moments {
                    amp[basis.position(l, k)?] = a;
                }
                if let Some(label) = odd_from {
                    let face = Face::parse(label)?;
                    let bf = disc
                        .faces
                        .iter()
                        .find(|f| f.face == face)
                        .ok_or_else(|| Error::Config(format!("no face {label}")))?;
                    let even = basis.even(face.axis);
                    let ue = DVector::from_fn(even.len(), |i, _| amp[even[i]]);
                    let uo = &bf.m_full * ue;
                    for (i, &p) in basis.odd(face.axis).iter().enumerate() {
                        amp[p] = uo[i];
                    }
                }
                for (p, &a) in amp.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    let (fam, j) = disc.locate(p);
                    self.fill(&mut fields, fam, j, |x| a * profile(x));
                }
            }
        }
        Ok(SolverState { t: 0.0, fields })
    }

    fn fill(&self, fields: &mut Fields, fam: usize, j: usize, f: impl Fn(&[f64]) -> f64) {
        let w = self.disc.families[fam].width();
        for node in 0..self.disc.families[fam].nodes {
            let x = self.disc.node_position(fam, node);
            fields[fam][node * w + j] = f(&x);
        }
    }

    fn workspace(&self) -> Workspace {
        Workspace {
            k: [
                self.disc.zeros(),
                self.disc.zeros(),
                self.disc.zeros(),
                self.disc.zeros(),
            ],
            tmp: self.disc.zeros(),
        }
    }

    /// One Strang step: half relaxation, RK4 transport, half relaxation.
    /// Returns the Simpson-integrated boundary source over the step.
    pub fn step_strang(&self, state: &mut SolverState, dt: f64) -> Result<f64> {
        let mut ws = self.workspace();
        self.step_with(state, dt, &mut ws)
    }

    fn step_with(&self, state: &mut SolverState, dt: f64, ws: &mut Workspace) -> Result<f64> {
        let limit = self.disc.dt_limit();
        if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt, limit });
        }
        let disc = &self.disc;
        let t = state.t;
        disc.relax(&mut state.fields, 0.5 * dt);
        let u = &state.fields;
        let axpy = |out: &mut Fields, base: &Fields, k: &Fields, c: f64| {
            for ((o, b), kk) in out.iter_mut().zip(base).zip(k) {
                for ((x, y), z) in o.iter_mut().zip(b).zip(kk) {
                    *x = y + c * z;
                }
            }
        };
        let [k1, k2, k3, k4] = &mut ws.k;
        disc.rhs(t, u, k1);
        axpy(&mut ws.tmp, u, k1, 0.5 * dt);
        disc.rhs(t + 0.5 * dt, &ws.tmp, k2);
        axpy(&mut ws.tmp, u, k2, 0.5 * dt);
        disc.rhs(t + 0.5 * dt, &ws.tmp, k3);
        axpy(&mut ws.tmp, u, k3, dt);
        disc.rhs(t + dt, &ws.tmp, k4);
        for (a, v) in state.fields.iter_mut().enumerate() {
            for (i, x) in v.iter_mut().enumerate() {
                *x += dt / 6.0 * (k1[a][i] + 2.0 * k2[a][i] + 2.0 * k3[a][i] + k4[a][i]);
            }
        }
        disc.relax(&mut state.fields, 0.5 * dt);
        state.t = t + dt;
        Ok(dt / 6.0
            * (disc.source_rate(t)
                + 4.0 * disc.source_rate(t + 0.5 * dt)
                + disc.source_rate(t + dt)))
    }

    /// Integrates from the initial state to the configured end, landing exactly on snapshot times.
    pub fn run(&self, opts: &RunOptions) -> Result<RunOutput> {
        let state = self.initial_state()?;
        self.run_from(state, opts)
    }

    pub fn run_from(&self, mut state: SolverState, opts: &RunOptions) -> Result<RunOutput> {
        let cfg = &self.config;
        let t_end = opts
            .end
            .map(|e| cfg.to_time(e))
            .unwrap_or_else(|| cfg.end_time());
        let mut requested: Vec<(f64, f64)> = cfg
            .outputs
            .snapshots
            .iter()
            .map(|&s| (cfg.to_time(s), s))
            .filter(|(t, _)| *t <= t_end * (1.0 + 1e-12))
            .collect();
        requested.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut targets: Vec<f64> = requested
            .iter()
            .map(|r| r.0)
            .filter(|t| *t > state.t)
            .collect();
        targets.push(t_end);
        targets.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));

        let dt_max = self.max_dt();
        let mut ws = self.workspace();
        let mut log = EnergyLog::default();
        let mut source = 0.0;
        log.push(state.t, self.disc.energy(&state.fields), 0.0);
        let mut snapshots = Vec::new();
        let take = |state: &SolverState, snaps: &mut Vec<Snapshot>| {
            for (t, label) in &requested {
                if (t - state.t).abs() <= 1e-9 * t.abs().max(1.0) {
                    snaps.push(self.snapshot(state, *label));
                }
            }
        };
        take(&state, &mut snapshots);
        let mut steps = 0;
        let mut dt_used = dt_max;
        for target in targets {
            let span = target - state.t;
            if span <= 0.0 {
                continue;
            }
            let n = (span / dt_max - 1e-9).ceil().max(1.0) as usize;
            let dt = span / n as f64;
            dt_used = dt;
            for _ in 0..n {
                let previous = state.clone();
                source += self.step_with(&mut state, dt, &mut ws)?;
                steps += 1;
                let e = self.disc.energy(&state.fields);
                if !e.is_finite() {
                    if let Some(path) = &opts.dump_path {
                        let text = serde_json::to_string(&previous).expect("state serializes");
                        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
                    }
                    return Err(Error::NonFinite { t: state.t });
                }
                log.push(state.t, e, source);
            }
            state.t = target;
            take(&state, &mut snapshots);
        }
        Ok(RunOutput {
            log,
            snapshots,
            steps,
            dt: dt_used,
            state,
        })
    }

    pub fn snapshot(&self, state: &SolverState, label: f64) -> Snapshot {
        let fam = &self.disc.families[0];
        let w = fam.width();
        let coords = (0..fam.nodes)
            .map(|n| self.disc.node_position(0, n))
            .collect();
        let u00 = (0..fam.nodes).map(|n| state.fields[0][n * w]).collect();
        Snapshot {
            t: state.t,
            label,
            coords,
            u00,
        }
    }
}
