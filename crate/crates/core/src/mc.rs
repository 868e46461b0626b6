//! Monte Carlo particle transport on the scenario box: free flights with
//! exponential path lengths, survival-weighted scattering, escape through
//! every face, and track-length tallies of `u_0^0` on the solver cells.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erf;

use crate::config::{InflowConfig, InitialConfig, ScatteringConfig, ScenarioConfig};
use crate::error::{Error, Result};
use crate::onsager::{Face, Side};
use crate::pn::{Kernel, ScatteringSpectrum};
use crate::sphharm::{gauss_legendre, Axis};

fn norm_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / SQRT_2))
}

/// Sampler for the deflection cosine.
#[derive(Debug, Clone)]
enum Deflection {
    None,
    Isotropic,
    HenyeyGreenstein(f64),
    /// Legendre density `f(μ) = Σ (2l+1)/2 (σ_l/σ_0) P_l(μ)` with a rejection bound.
    Table {
        coef: Vec<f64>,
        bound: f64,
    },
}

fn legendre_density(coef: &[f64], mu: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, mu);
    let mut total = coef[0] * p0;
    if coef.len() > 1 {
        total += coef[1] * p1;
    }
    for (l, c) in coef.iter().enumerate().skip(2) {
        let p2 = ((2 * l - 1) as f64 * mu * p1 - (l - 1) as f64 * p0) / l as f64;
        total += c * p2;
        p0 = p1;
        p1 = p2;
    }
    total
}

impl Deflection {
    fn new(spec: &ScatteringSpectrum) -> Result<Self> {
        Ok(match &spec.kernel {
            Kernel::None => Deflection::None,
            Kernel::Isotropic { .. } => Deflection::Isotropic,
            Kernel::HenyeyGreenstein { g, .. } => {
                if g.abs() < 1e-12 {
                    Deflection::Isotropic
                } else {
                    Deflection::HenyeyGreenstein(*g)
                }
            }
            Kernel::Table { moments } => {
                let s0 = moments[0];
                if !(s0 > 0.0) {
                    return Err(Error::NotSampleable(
                        "zeroth moment must be positive".into(),
                    ));
                }
                let coef: Vec<f64> = moments
                    .iter()
                    .enumerate()
                    .map(|(l, s)| (2 * l + 1) as f64 / 2.0 * s / s0)
                    .collect();
                let mut lo = f64::INFINITY;
                let mut hi = 0.0f64;
                for i in 0..=4000 {
                    let v = legendre_density(&coef, -1.0 + i as f64 / 2000.0);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                if lo < -1e-10 {
                    return Err(Error::NotSampleable(format!(
                        "truncated Legendre series is negative (minimum {lo:.3e})"
                    )));
                }
                Deflection::Table {
                    coef,
                    bound: hi * 1.05,
                }
            }
        })
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Deflection::None => 1.0,
            Deflection::Isotropic => 2.0 * rng.random::<f64>() - 1.0,
            Deflection::HenyeyGreenstein(g) => {
                let xi: f64 = rng.random();
                let s = (1.0 - g * g) / (1.0 - g + 2.0 * g * xi);
                ((1.0 + g * g - s * s) / (2.0 * g)).clamp(-1.0, 1.0)
            }
            Deflection::Table { coef, bound } => loop {
                let mu = 2.0 * rng.random::<f64>() - 1.0;
                if rng.random::<f64>() * bound <= legendre_density(coef, mu) {
                    return mu;
                }
            },
        }
    }
}

fn isotropic_direction<R: Rng>(rng: &mut R) -> [f64; 3] {
    let mu = 2.0 * rng.random::<f64>() - 1.0;
    let phi = 2.0 * PI * rng.random::<f64>();
    let s = (1.0 - mu * mu).max(0.0).sqrt();
    [s * phi.cos(), s * phi.sin(), mu]
}

/// Rotates `d` by polar cosine `mu` and azimuth `phi` about itself.
fn deflect(d: [f64; 3], mu: f64, phi: f64) -> [f64; 3] {
    let s = (1.0 - mu * mu).max(0.0).sqrt();
    let (cp, sp) = (phi.cos(), phi.sin());
    let out = if d[2].abs() > 0.99999 {
        let sign = d[2].signum();
        [s * cp, s * sp * sign, mu * sign]
    } else {
        let r = (1.0 - d[2] * d[2]).sqrt();
        [
            mu * d[0] + s * (d[0] * d[2] * cp - d[1] * sp) / r,
            mu * d[1] + s * (d[1] * d[2] * cp + d[0] * sp) / r,
            mu * d[2] - s * r * cp,
        ]
    };
    let n = (out[0] * out[0] + out[1] * out[1] + out[2] * out[2]).sqrt();
    [out[0] / n, out[1] / n, out[2] / n]
}

/// Direction whose cosine with `axis_dir` (a unit coordinate vector times ±1) is `c`.
fn direction_about(axis: Axis, sign: f64, c: f64, phi: f64) -> [f64; 3] {
    let s = (1.0 - c * c).max(0.0).sqrt();
    let (a, b) = match axis {
        Axis::X => (1, 2),
        Axis::Y => (2, 0),
        Axis::Z => (0, 1),
    };
    let mut d = [0.0; 3];
    d[axis.index()] = sign * c;
    d[a] = s * phi.cos();
    d[b] = s * phi.sin();
    d
}

#[derive(Debug, Clone)]
enum Source {
    /// Isotropic Gaussian bulk.
    Bulk {
        center: Vec<f64>,
        sigma: f64,
    },
    /// Gaussian bulk with angular density `a + b·Ω`.
    Linear {
        center: Vec<f64>,
        sigma: f64,
        a: f64,
        b: [f64; 3],
    },
    Beam {
        face: Face,
        slot: usize,
        t0: f64,
        t_sigma: f64,
        center: Vec<f64>,
        width: f64,
        angular_sigma: f64,
    },
    IsotropicInflow {
        face: Face,
        slot: usize,
    },
}

#[derive(Debug, Clone)]
struct WeightedSource {
    source: Source,
    mass: f64,
}

/// Cell-averaged fluence density for one snapshot window.
#[derive(Debug, Clone, Serialize)]
pub struct TallyGrid {
    pub label: f64,
    pub t: f64,
    pub window: (f64, f64),
    pub shape: Vec<usize>,
    /// Cell centers, row-major with the last axis fastest.
    pub coords: Vec<Vec<f64>>,
    pub value: Vec<f64>,
    pub std_err: Vec<f64>,
}

impl TallyGrid {
    /// Flat index of the cell containing `x` along axis 0, and so on.
    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.shape)
            .fold(0, |acc, (i, n)| acc * n + i)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct McResult {
    pub particles: u64,
    pub seed: u64,
    pub batches: usize,
    pub tallies: Vec<TallyGrid>,
}

#[derive(Debug, Clone)]
pub struct McOptions {
    pub particles: u64,
    pub seed: u64,
    pub batches: usize,
    /// Width of the time window around each snapshot; defaults to the smallest cell size.
    pub window: Option<f64>,
}

impl McOptions {
    pub fn new(particles: u64, seed: u64) -> Self {
        McOptions {
            particles,
            seed,
            batches: 64,
            window: None,
        }
    }
}

struct Geometry {
    axes: Vec<Axis>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cells: Vec<usize>,
    h: Vec<f64>,
}

impl Geometry {
    fn inside(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    fn cell_count(&self) -> usize {
        self.cells.iter().product()
    }

    /// Distance along `u` (components on discretized axes) until leaving the box.
    fn exit_distance(&self, x: &[f64], u: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        for k in 0..x.len() {
            if u[k] > 0.0 {
                best = best.min((self.upper[k] - x[k]) / u[k]);
            } else if u[k] < 0.0 {
                best = best.min((self.lower[k] - x[k]) / u[k]);
            }
        }
        best.max(0.0)
    }

    /// Adds `w × (path length in cell)` for the segment `x + s·u`, `s ∈ [0, len]`.
    fn deposit(&self, x: &[f64], u: &[f64], len: f64, w: f64, acc: &mut [f64]) {
        let d = x.len();
        let mut idx = [0usize; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        let mut step = [0i64; 3];
        for k in 0..d {
            let rel = (x[k] - self.lower[k]) / self.h[k];
            let mut i = rel.floor() as i64;
            if u[k] < 0.0 && (rel - rel.round()).abs() < 1e-12 {
                i = rel.round() as i64 - 1;
            }
            let i = i.clamp(0, self.cells[k] as i64 - 1);
            idx[k] = i as usize;
            if u[k] > 0.0 {
                step[k] = 1;
                t_max[k] = (self.lower[k] + (i + 1) as f64 * self.h[k] - x[k]) / u[k];
                t_delta[k] = self.h[k] / u[k];
            } else if u[k] < 0.0 {
                step[k] = -1;
                t_max[k] = (self.lower[k] + i as f64 * self.h[k] - x[k]) / u[k];
                t_delta[k] = -self.h[k] / u[k];
            }
        }
        let mut s = 0.0;
        loop {
            let (k, next) = (0..d)
                .map(|k| (k, t_max[k]))
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            let end = next.min(len);
            let flat = (0..d).fold(0, |acc, j| acc * self.cells[j] + idx[j]);
            if end > s {
                acc[flat] += w * (end - s);
            }
            if next >= len {
                break;
            }
            s = next;
            let ni = idx[k] as i64 + step[k];
            if ni < 0 || ni >= self.cells[k] as i64 {
                break;
            }
            idx[k] = ni as usize;
            t_max[k] += t_delta[k];
        }
    }
}

struct Windows {
    spans: Vec<(f64, f64)>,
}

/// Runs the oracle on a scenario. Energy-mode scenarios use pseudo-time (path length).
pub fn simulate(cfg: &ScenarioConfig, opts: &McOptions) -> Result<McResult> {
    cfg.validate()?;
    if opts.particles == 0 || opts.batches == 0 {
        return Err(Error::InvalidInput(
            "need at least one particle and one batch".into(),
        ));
    }
    let spectrum = cfg.scattering()?;
    let deflection = Deflection::new(&spectrum)?;
    let sigma_t = spectrum.sigma_t;
    let survival = if sigma_t > 0.0 {
        spectrum.sigma_s() / sigma_t
    } else {
        1.0
    };
    let axes = cfg.axes()?;
    let d = axes.len();
    let geo = Geometry {
        axes: axes.clone(),
        lower: cfg.domain.lower.clone(),
        upper: cfg.domain.upper.clone(),
        cells: cfg.domain.cells.clone(),
        h: (0..d)
            .map(|k| (cfg.domain.upper[k] - cfg.domain.lower[k]) / cfg.domain.cells[k] as f64)
            .collect(),
    };
    let t_end = cfg.end_time();
    let sources = build_sources(cfg, &geo, t_end)?;
    let total_mass: f64 = sources.iter().map(|s| s.mass).sum();

    let width = opts
        .window
        .unwrap_or_else(|| geo.h.iter().cloned().fold(f64::INFINITY, f64::min));
    let labels: Vec<f64> = cfg.outputs.snapshots.clone();
    let windows = Windows {
        spans: labels
            .iter()
            .map(|&l| {
                let t = cfg.to_time(l);
                ((t - width / 2.0).max(0.0), (t + width / 2.0).min(t_end))
            })
            .collect(),
    };
    let ncell = geo.cell_count();
    let nwin = windows.spans.len();

    let batches = opts.batches;
    let per_batch: Vec<u64> = (0..batches as u64)
        .map(|b| opts.particles / batches as u64 + u64::from(b < opts.particles % batches as u64))
        .collect();
    let sums: Vec<Vec<f64>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(b as u64);
            let mut acc = vec![0.0; nwin * ncell];
            let n_b = per_batch[b];
            if n_b == 0 || total_mass == 0.0 {
                return acc;
            }
            // deterministic split of the batch between sources, proportional to mass
            let mut counts: Vec<u64> = sources
                .iter()
                .map(|s| (s.mass / total_mass * n_b as f64).floor() as u64)
                .collect();
            let assigned: u64 = counts.iter().sum();
            if let Some(c) = counts
                .iter_mut()
                .zip(&sources)
                .filter(|(_, s)| s.mass > 0.0)
                .map(|(c, _)| c)
                .next()
            {
                *c += n_b - assigned;
            }
            for (src, &count) in sources.iter().zip(&counts) {
                if count == 0 {
                    continue;
                }
                let w = src.mass / (count as f64 * batches as f64);
                for _ in 0..count {
                    let (mut x, mut dir, mut t) = sample_source(&src.source, &geo, t_end, &mut rng);
                    let mut weight = w;
                    loop {
                        let u: Vec<f64> = geo.axes.iter().map(|a| dir[a.index()]).collect();
                        let flight = if sigma_t > 0.0 {
                            -(1.0 - rng.random::<f64>()).ln() / sigma_t
                        } else {
                            f64::INFINITY
                        };
                        let exit = geo.exit_distance(&x, &u);
                        let remaining = t_end - t;
                        let len = flight.min(exit).min(remaining);
                        for (wi, &(a, b)) in windows.spans.iter().enumerate() {
                            let lo = a.max(t);
                            let hi = b.min(t + len);
                            if hi > lo {
                                let start: Vec<f64> =
                                    x.iter().zip(&u).map(|(p, v)| p + (lo - t) * v).collect();
                                geo.deposit(
                                    &start,
                                    &u,
                                    hi - lo,
                                    weight,
                                    &mut acc[wi * ncell..(wi + 1) * ncell],
                                );
                            }
                        }
                        if flight >= exit || flight >= remaining {
                            break;
                        }
                        for (p, v) in x.iter_mut().zip(&u) {
                            *p += flight * v;
                        }
                        t += flight;
                        weight *= survival;
                        let mu = deflection.sample(&mut rng);
                        let phi = 2.0 * PI * rng.random::<f64>();
                        dir = deflect(dir, mu, phi);
                    }
                }
            }
            acc
        })
        .collect();

    let volume: f64 = geo.h.iter().product();
    let norm = (4.0 * PI).sqrt();
    let coords: Vec<Vec<f64>> = (0..ncell)
        .map(|flat| {
            let mut rem = flat;
            let mut c = vec![0.0; d];
            for k in (0..d).rev() {
                let i = rem % geo.cells[k];
                rem /= geo.cells[k];
                c[k] = geo.lower[k] + (i as f64 + 0.5) * geo.h[k];
            }
            c
        })
        .collect();
    let mut tallies = Vec::with_capacity(nwin);
    for (wi, (&label, &(a, b))) in labels.iter().zip(&windows.spans).enumerate() {
        let span = b - a;
        let scale = if span > 0.0 {
            1.0 / (span * volume * norm)
        } else {
            0.0
        };
        let mut value = vec![0.0; ncell];
        let mut std_err = vec![0.0; ncell];
        for c in 0..ncell {
            let xs: Vec<f64> = sums
                .iter()
                .map(|s| s[wi * ncell + c] * batches as f64 * scale)
                .collect();
            let mean = xs.iter().sum::<f64>() / batches as f64;
            let var = if batches > 1 {
                xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (batches - 1) as f64
            } else {
                0.0
            };
            value[c] = mean;
            std_err[c] = (var / batches as f64).sqrt();
        }
        tallies.push(TallyGrid {
            label,
            t: cfg.to_time(label),
            window: (a, b),
            shape: geo.cells.clone(),
            coords: coords.clone(),
            value,
            std_err,
        });
    }
    Ok(McResult {
        particles: opts.particles,
        seed: opts.seed,
        batches,
        tallies,
    })
}

fn build_sources(cfg: &ScenarioConfig, geo: &Geometry, t_end: f64) -> Result<Vec<WeightedSource>> {
    let d = geo.axes.len();
    let mut out = Vec::new();
    let inside_mass = |center: &[f64], sigma: f64| -> f64 {
        (0..d)
            .map(|k| {
                sigma
                    * (2.0 * PI).sqrt()
                    * (norm_cdf((geo.upper[k] - center[k]) / sigma)
                        - norm_cdf((geo.lower[k] - center[k]) / sigma))
            })
            .product()
    };
    match &cfg.initial {
        InitialConfig::None => {}
        InitialConfig::GaussianBulk {
            center,
            sigma,
            moment,
            normalized,
        } => {
            if *moment != (0, 0) {
                return Err(Error::NotSampleable(format!(
                    "initial moment {moment:?} is not a non-negative distribution"
                )));
            }
            let scale = if *normalized {
                (sigma * (2.0 * PI).sqrt()).powi(d as i32).recip()
            } else {
                1.0
            };
            out.push(WeightedSource {
                source: Source::Bulk {
                    center: center.clone(),
                    sigma: *sigma,
                },
                mass: (4.0 * PI).sqrt() * scale * inside_mass(center, *sigma),
            });
        }
        InitialConfig::AngularBulk {
            center,
            sigma,
            isotropic,
            direction,
        } => {
            let bn = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
            if *isotropic < bn {
                return Err(Error::NotSampleable(
                    "angular profile a + b·Ω takes negative values".into(),
                ));
            }
            out.push(WeightedSource {
                source: Source::Linear {
                    center: center.clone(),
                    sigma: *sigma,
                    a: *isotropic,
                    b: *direction,
                },
                mass: inside_mass(center, *sigma) * 4.0 * PI * isotropic,
            });
        }
        InitialConfig::MomentProfile { .. } => {
            return Err(Error::NotSampleable(
                "moment profiles do not define a non-negative distribution".into(),
            ));
        }
    }
    for b in &cfg.boundaries {
        let face = Face::parse(&b.face)?;
        let slot = geo
            .axes
            .iter()
            .position(|a| *a == face.axis)
            .expect("validated face");
        let transverse: Vec<usize> = (0..d).filter(|&k| k != slot).collect();
        let area: f64 = transverse
            .iter()
            .map(|&k| geo.upper[k] - geo.lower[k])
            .product();
        match &b.inflow {
            InflowConfig::Vacuum => {}
            InflowConfig::Isotropic { value } => {
                if *value < 0.0 {
                    return Err(Error::NotSampleable("negative inflow".into()));
                }
                out.push(WeightedSource {
                    source: Source::IsotropicInflow { face, slot },
                    mass: value * PI * area * t_end,
                });
            }
            InflowConfig::Beam {
                energy,
                energy_sigma,
                center,
                width,
                angular_sigma,
            } => {
                let rate = cfg.from_time(0.0) - cfg.from_time(1.0);
                let t0 = (cfg.from_time(0.0) - energy) / rate;
                let t_sigma = energy_sigma / rate;
                let time_mass = t_sigma
                    * (2.0 * PI).sqrt()
                    * (norm_cdf((t_end - t0) / t_sigma) - norm_cdf(-t0 / t_sigma));
                let space_mass: f64 = transverse
                    .iter()
                    .zip(center)
                    .map(|(&k, c)| {
                        width
                            * (2.0 * PI).sqrt()
                            * (norm_cdf((geo.upper[k] - c) / width)
                                - norm_cdf((geo.lower[k] - c) / width))
                    })
                    .product();
                let (nodes, weights) = gauss_legendre(400);
                let angular_mass: f64 = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(x, w)| {
                        let c = 0.5 * (x + 1.0);
                        0.5 * w * c * (-((1.0 - c) / (SQRT_2 * angular_sigma)).powi(2)).exp()
                    })
                    .sum::<f64>()
                    * 2.0
                    * PI;
                out.push(WeightedSource {
                    source: Source::Beam {
                        face,
                        slot,
                        t0,
                        t_sigma,
                        center: center.clone(),
                        width: *width,
                        angular_sigma: *angular_sigma,
                    },
                    mass: time_mass * space_mass * angular_mass,
                });
            }
        }
    }
    Ok(out)
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box–Muller
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

fn sample_source<R: Rng>(
    src: &Source,
    geo: &Geometry,
    t_end: f64,
    rng: &mut R,
) -> (Vec<f64>, [f64; 3], f64) {
    let d = geo.axes.len();
    let bulk = |center: &[f64], sigma: f64, rng: &mut R| loop {
        let x: Vec<f64> = (0..d).map(|k| center[k] + sigma * gaussian(rng)).collect();
        if geo.inside(&x) {
            return x;
        }
    };
    let face_point =
        |face: &Face, slot: usize, rng: &mut R, pick: &mut dyn FnMut(usize, &mut R) -> f64| {
            let mut x = vec![0.0; d];
            for k in 0..d {
                x[k] = if k == slot {
                    match face.side {
                        Side::Low => geo.lower[k],
                        Side::High => geo.upper[k],
                    }
                } else {
                    pick(k, rng)
                };
            }
            x
        };
    match src {
        Source::Bulk { center, sigma } => {
            (bulk(center, *sigma, rng), isotropic_direction(rng), 0.0)
        }
        Source::Linear {
            center,
            sigma,
            a,
            b,
        } => {
            let x = bulk(center, *sigma, rng);
            let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dir = loop {
                let dir = isotropic_direction(rng);
                let f = a + dir.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
                if rng.random::<f64>() * (a + bn) <= f {
                    break dir;
                }
            };
            (x, dir, 0.0)
        }
        Source::Beam {
            face,
            slot,
            t0,
            t_sigma,
            center,
            width,
            angular_sigma,
        } => {
            let t = loop {
                let t = t0 + t_sigma * gaussian(rng);
                if (0.0..=t_end).contains(&t) {
                    break t;
                }
            };
            let transverse: Vec<usize> = (0..d).filter(|&k| k != *slot).collect();
            let mut pick = |k: usize, rng: &mut R| loop {
                let j = transverse.iter().position(|&q| q == k).unwrap();
                let v = center[j] + width * gaussian(rng);
                if geo.lower[k] <= v && v <= geo.upper[k] {
                    return v;
                }
            };
            let x = face_point(face, *slot, rng, &mut pick);
            // c = −Ω·n has density ∝ c·exp(−((1−c)/(√2σ))²) on (0, 1]
            let c = loop {
                let c = 1.0 - (angular_sigma * gaussian(rng)).abs();
                if c > 0.0 && rng.random::<f64>() <= c {
                    break c;
                }
            };
            let phi = 2.0 * PI * rng.random::<f64>();
            let inward = -face.side.sign();
            (x, direction_about(face.axis, inward, c, phi), t)
        }
        Source::IsotropicInflow { face, slot } => {
            let t = t_end * rng.random::<f64>();
            let mut pick = |k: usize, rng: &mut R| {
                geo.lower[k] + (geo.upper[k] - geo.lower[k]) * rng.random::<f64>()
            };
            let x = face_point(face, *slot, rng, &mut pick);
            let c = rng.random::<f64>().sqrt();
            let phi = 2.0 * PI * rng.random::<f64>();
            let inward = -face.side.sign();
            (x, direction_about(face.axis, inward, c, phi), t)
        }
    }
}

/// Analytic bin averages for a tally when the scenario is 1D free streaming of
/// a normalized `u_0^0` Gaussian with vacuum inflow, `None` otherwise.
pub fn free_streaming_reference(cfg: &ScenarioConfig, tally: &TallyGrid) -> Option<Vec<f64>> {
    if cfg.domain.axes.len() != 1
        || cfg.energy_mode()
        || cfg.model.scattering != ScatteringConfig::None
    {
        return None;
    }
    if cfg
        .boundaries
        .iter()
        .any(|b| b.inflow != InflowConfig::Vacuum)
    {
        return None;
    }
    let InitialConfig::GaussianBulk {
        center,
        sigma,
        moment: (0, 0),
        normalized: true,
    } = &cfg.initial
    else {
        return None;
    };
    let domain = (cfg.domain.lower[0], cfg.domain.upper[0]);
    let h = (domain.1 - domain.0) / cfg.domain.cells[0] as f64;
    Some(
        tally
            .coords
            .iter()
            .map(|c| {
                free_streaming_average(
                    center[0],
                    *sigma,
                    domain,
                    (c[0] - h / 2.0, c[0] + h / 2.0),
                    tally.window,
                )
            })
            .collect(),
    )
}

/// Exact free-streaming `u_0^0` on `[lower, upper]` for normalized Gaussian
/// initial data, averaged over `[a, b] × [t0, t1]`:
/// `u(t, x) = (1/2t)[Φ((min(x+t, upper)−μ)/σ) − Φ((max(x−t, lower)−μ)/σ)]`.
pub fn free_streaming_average(
    center: f64,
    sigma: f64,
    domain: (f64, f64),
    cell: (f64, f64),
    window: (f64, f64),
) -> f64 {
    let point = |t: f64, x: f64| {
        if t <= 0.0 {
            return (-((x - center) / sigma).powi(2) / 2.0).exp() / (sigma * (2.0 * PI).sqrt());
        }
        let hi = (x + t).min(domain.1);
        let lo = (x - t).max(domain.0);
        if hi <= lo {
            return 0.0;
        }
        (norm_cdf((hi - center) / sigma) - norm_cdf((lo - center) / sigma)) / (2.0 * t)
    };
    let (nodes, weights) = gauss_legendre(12);
    let mut total = 0.0;
    for (xt, wt) in nodes.iter().zip(&weights) {
        let t = window.0 + 0.5 * (xt + 1.0) * (window.1 - window.0);
        for (xx, wx) in nodes.iter().zip(&weights) {
            let x = cell.0 + 0.5 * (xx + 1.0) * (cell.1 - cell.0);
            total += 0.25 * wt * wx * point(t, x);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deflection_keeps_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut d = [0.0, 0.0, 1.0];
        for _ in 0..1000 {
            d = deflect(
                d,
                2.0 * rng.random::<f64>() - 1.0,
                6.0 * rng.random::<f64>(),
            );
            let n: f64 = d.iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn deflection_angle_is_respected() {
        let d = [0.6, 0.0, 0.8];
        let e = deflect(d, 0.3, 1.1);
        let dot: f64 = d.iter().zip(&e).map(|(a, b)| a * b).sum();
        assert!((dot - 0.3).abs() < 1e-12);
    }

    #[test]
    fn hg_mean_cosine() {
        let k = Deflection::HenyeyGreenstein(0.6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let mean: f64 = (0..n).map(|_| k.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.6).abs() < 0.005, "{mean}");
    }

    #[test]
    fn negative_table_is_not_sampleable() {
        let spec = ScatteringSpectrum {
            sigma_t: 1.0,
            kernel: Kernel::Table {
                moments: vec![1.0, -0.99, 0.0, 0.0],
            },
        };
        assert!(matches!(
            Deflection::new(&spec),
            Err(Error::NotSampleable(_))
        ));
    }

    #[test]
    fn deposit_sums_to_length() {
        let geo = Geometry {
            axes: vec![Axis::X, Axis::Z],
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 2.0],
            cells: vec![4, 8],
            h: vec![0.25, 0.25],
        };
        let mut acc = vec![0.0; 32];
        geo.deposit(&[0.1, 0.0], &[0.3, 0.9], 1.5, 1.0, &mut acc);
        assert!((acc.iter().sum::<f64>() - 1.5).abs() < 1e-12);
        assert!(acc[0] > 0.0);
    }

    #[test]
    fn analytic_average_at_start_is_gaussian() {
        let v = free_streaming_average(0.0, 0.2, (-1.0, 1.0), (-0.005, 0.005), (0.0, 1e-9));
        assert!((v - 1.0 / (0.2 * (2.0 * PI).sqrt())).abs() < 1e-3);
    }
}
