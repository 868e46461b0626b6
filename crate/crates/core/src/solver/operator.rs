//! Semi-discrete operator: per-family transport couplings on the staggered
//! tensor grids plus SAT boundary terms.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::config::{BoundaryKind, ScenarioConfig};
use crate::error::{Error, Result};
use crate::onsager::{boundary_source, marshak_matrix, onsager_bc, Face, Side};
use crate::pn::{scattering_diagonal, PnSystem};
use crate::sbp::{sat_penalties, tensorize, StaggeredGrid1d, TensorGrid};
use crate::solver::inflow::Inflow;
use crate::sphharm::build_quadrature;

const COUPLING_ZERO: f64 = 1e-13;

/// Moments sharing one parity pattern over the discretized axes, and the grid they live on.
#[derive(Debug, Clone)]
pub struct Family {
    /// Basis positions, ascending.
    pub moments: Vec<usize>,
    pub shape: Vec<usize>,
    pub strides: Vec<usize>,
    pub nodes: usize,
    /// Discrete norm weights per node.
    pub weights: Vec<f64>,
}

impl Family {
    pub fn width(&self) -> usize {
        self.moments.len()
    }

    pub fn len(&self) -> usize {
        self.nodes * self.moments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn unflatten(&self, mut flat: usize, idx: &mut [usize; 3]) {
        for k in (0..self.shape.len()).rev() {
            idx[k] = flat % self.shape[k];
            flat /= self.shape[k];
        }
    }
}

/// Sparse block of `A^(axis)` mapping family `src` moments to the owning family's moments.
#[derive(Debug, Clone)]
struct Coupling {
    src: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

/// Matching boundary nodes of an odd/even family pair on one face.
#[derive(Debug, Clone)]
pub struct BoundaryNode {
    pub odd: usize,
    pub even: usize,
    /// Product of transverse norm entries.
    pub weight: f64,
    /// Node coordinates along the transverse discretized axes.
    pub transverse: Vec<f64>,
}

/// SAT data for one odd/even family pair on one face.
#[derive(Debug, Clone)]
pub struct FaceBlock {
    pub fam_odd: usize,
    pub fam_even: usize,
    /// Boundary matrix in `u^o = m u^e + g`.
    pub m: DMatrix<f64>,
    pub tau_odd: DMatrix<f64>,
    pub tau_even: DMatrix<f64>,
    /// Angular part of `g` for unit inflow amplitude.
    pub g_dir: DVector<f64>,
    pub p_odd: f64,
    pub p_even: f64,
    pub nodes: Vec<BoundaryNode>,
    pub bound_constant: f64,
}

#[derive(Debug, Clone)]
pub struct BoundaryFace {
    pub face: Face,
    pub slot: usize,
    pub kind: BoundaryKind,
    pub alpha: f64,
    pub inflow: Inflow,
    pub blocks: Vec<FaceBlock>,
    /// Full-face boundary matrices (odd × even of the face axis), used for initial data.
    pub m_full: DMatrix<f64>,
    pub l_inverse_norm: f64,
    pub m_norm: f64,
}

impl BoundaryFace {
    pub fn bound_constant(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.bound_constant)
            .fold(0.0, f64::max)
    }
}

/// Everything needed to evaluate the semi-discrete right-hand side.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub system: PnSystem,
    pub tensor: TensorGrid,
    pub families: Vec<Family>,
    couplings: Vec<Vec<Coupling>>,
    /// Relaxation rates per family moment (`σ_l − σ_t` ≤ 0).
    pub relaxation: Vec<Vec<f64>>,
    pub faces: Vec<BoundaryFace>,
    /// Largest characteristic speed over the discretized axes.
    pub lambda_max: f64,
}

/// Family grid functions: `fields[a][node * width + moment]`.
pub type Fields = Vec<Vec<f64>>;

impl Discretization {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        let order = cfg.model.order;
        let spectrum = cfg.scattering()?;
        let system = PnSystem::assemble(order)?;
        let relax = scattering_diagonal(&spectrum, system.basis())?;
        let system = system.with_relaxation(relax)?;
        let axes = cfg.axes()?;
        let grids = axes
            .iter()
            .enumerate()
            .map(|(i, a)| {
                StaggeredGrid1d::new(
                    cfg.domain.lower[i],
                    cfg.domain.upper[i],
                    cfg.domain.cells[i],
                )
                .map(|g| (*a, g))
            })
            .collect::<Result<Vec<_>>>()?;
        let tensor = tensorize(&grids)?;
        let mut faces_cfg = Vec::new();
        for (k, axis) in axes.iter().enumerate() {
            for side in [Side::Low, Side::High] {
                let face = Face::new(*axis, side);
                let spec = cfg
                    .boundaries
                    .iter()
                    .find(|b| Face::parse(&b.face).map(|f| f == face).unwrap_or(false));
                let (kind, alpha, inflow) = match spec {
                    Some(b) => (b.kind, b.alpha, Inflow::from_config(&b.inflow, cfg)),
                    None => (BoundaryKind::Onsager, 1.0, Inflow::Vacuum),
                };
                faces_cfg.push((k, face, kind, alpha, inflow));
            }
        }
        Self::build(system, tensor, faces_cfg)
    }

    /// Assembles from parts; `faces` lists `(axis slot, face, kind, alpha, inflow)`.
    pub fn build(
        system: PnSystem,
        tensor: TensorGrid,
        faces: Vec<(usize, Face, BoundaryKind, f64, Inflow)>,
    ) -> Result<Self> {
        let basis = system.basis().clone();
        let d = tensor.dims();
        let families: Vec<Family> = (0..tensor.family_count())
            .map(|a| {
                let moments = (0..basis.dim())
                    .filter(|&p| {
                        (0..d).all(|k| {
                            let odd =
                                basis.parity(tensor.axes[k], p) == crate::sphharm::Parity::Odd;
                            odd == TensorGrid::is_odd(a, k)
                        })
                    })
                    .collect();
                Family {
                    moments,
                    shape: tensor.shape(a),
                    strides: tensor.strides(a),
                    nodes: tensor.node_count(a),
                    weights: tensor.weights(a),
                }
            })
            .collect();

        let mut couplings = Vec::with_capacity(families.len());
        for (a, fam) in families.iter().enumerate() {
            let mut per_axis = Vec::with_capacity(d);
            for k in 0..d {
                let src = TensorGrid::complement(a, k);
                let mat = system.transport(tensor.axes[k]);
                let src_moments = &families[src].moments;
                let mut rows = Vec::with_capacity(fam.width());
                for &r in &fam.moments {
                    let mut row = Vec::new();
                    for c in 0..basis.dim() {
                        let v = mat[(r, c)];
                        if v.abs() <= COUPLING_ZERO {
                            continue;
                        }
                        match src_moments.binary_search(&c) {
                            Ok(j) => row.push((j, v)),
                            Err(_) => {
                                return Err(Error::Assembly(format!(
                                    "axis {} couples moment {r} outside its partner family",
                                    tensor.axes[k].name()
                                )))
                            }
                        }
                    }
                    rows.push(row);
                }
                per_axis.push(Coupling { src, rows });
            }
            couplings.push(per_axis);
        }

        let relaxation = families
            .iter()
            .map(|f| f.moments.iter().map(|&p| system.relaxation()[p]).collect())
            .collect();

        let mut built = Vec::with_capacity(faces.len());
        for (slot, face, kind, alpha, inflow) in faces {
            built.push(build_face(
                &system, &tensor, &families, slot, face, kind, alpha, inflow,
            )?);
        }

        let lambda_max = tensor
            .axes
            .iter()
            .map(|ax| {
                let a = system.a_hat(*ax);
                if a.nrows() == 0 {
                    0.0
                } else {
                    a.clone().singular_values().max()
                }
            })
            .fold(0.0, f64::max);

        Ok(Discretization {
            system,
            tensor,
            families,
            couplings,
            relaxation,
            faces: built,
            lambda_max,
        })
    }

    pub fn zeros(&self) -> Fields {
        self.families.iter().map(|f| vec![0.0; f.len()]).collect()
    }

    pub fn h_min(&self) -> f64 {
        self.tensor
            .sbp
            .iter()
            .map(|s| s.h())
            .fold(f64::INFINITY, f64::min)
    }

    /// Stability limit `h_min / λ_max` for CFL number one.
    pub fn dt_limit(&self) -> f64 {
        self.h_min() / self.lambda_max
    }

    /// Largest `C` over all face blocks.
    pub fn bound_constant(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| f.bound_constant())
            .fold(0.0, f64::max)
    }

    /// Discrete energy `Σ_a ‖u^a‖²_{h_a}`.
    pub fn energy(&self, fields: &Fields) -> f64 {
        self.families
            .iter()
            .zip(fields)
            .map(|(fam, u)| {
                if fam.width() == 0 {
                    return 0.0;
                }
                u.chunks(fam.width())
                    .zip(&fam.weights)
                    .map(|(v, w)| w * v.iter().map(|x| x * x).sum::<f64>())
                    .sum::<f64>()
            })
            .sum()
    }

    /// Weighted boundary source norm `Σ_faces Σ_nodes w gᵀg` at time `t`.
    pub fn source_rate(&self, t: f64) -> f64 {
        let mut total = 0.0;
        for face in &self.faces {
            if face.inflow.is_vacuum() {
                continue;
            }
            for block in &face.blocks {
                let gg = block.g_dir.norm_squared();
                if gg == 0.0 {
                    continue;
                }
                for node in &block.nodes {
                    let a = face.inflow.amplitude(t, &node.transverse);
                    total += node.weight * a * a * gg;
                }
            }
        }
        total
    }

    /// Transport plus SAT increment at time `t`.
    pub fn rhs(&self, t: f64, u: &Fields, out: &mut Fields) {
        let d = self.tensor.dims();
        for (a, fam) in self.families.iter().enumerate() {
            let width = fam.width();
            if width == 0 {
                continue;
            }
            let couplings = &self.couplings[a];
            out[a].par_chunks_mut(width).enumerate().for_each_init(
                || Vec::<f64>::new(),
                |dv, (node, o)| {
                    let mut idx = [0usize; 3];
                    fam.unflatten(node, &mut idx);
                    o.iter_mut().for_each(|x| *x = 0.0);
                    for (k, cp) in couplings.iter().enumerate().take(d) {
                        let src = &self.families[cp.src];
                        let sw = src.width();
                        if sw == 0 {
                            continue;
                        }
                        let base: usize = (0..d)
                            .filter(|&j| j != k)
                            .map(|j| idx[j] * src.strides[j])
                            .sum();
                        dv.clear();
                        dv.resize(sw, 0.0);
                        let stencil = &self.tensor.sbp[k].d(TensorGrid::is_odd(a, k))[idx[k]];
                        let us = &u[cp.src];
                        for &(j, c) in stencil {
                            let off = (base + j * src.strides[k]) * sw;
                            for (x, y) in dv.iter_mut().zip(&us[off..off + sw]) {
                                *x += c * y;
                            }
                        }
                        for (x, row) in o.iter_mut().zip(&cp.rows) {
                            let mut s = 0.0;
                            for &(j, v) in row {
                                s += v * dv[j];
                            }
                            *x -= s;
                        }
                    }
                },
            );
        }
        self.add_sat(t, u, out);
    }

    fn add_sat(&self, t: f64, u: &Fields, out: &mut Fields) {
        for face in &self.faces {
            for block in &face.blocks {
                let (fo, fe) = (block.fam_odd, block.fam_even);
                let (ro, re) = (self.families[fo].width(), self.families[fe].width());
                let gnorm = block.g_dir.amax();
                let mut resid = DVector::zeros(ro);
                for node in &block.nodes {
                    let uo = &u[fo][node.odd * ro..(node.odd + 1) * ro];
                    let ue =
                        DVector::from_column_slice(&u[fe][node.even * re..(node.even + 1) * re]);
                    let mue = &block.m * &ue;
                    let amp = if gnorm > 0.0 {
                        face.inflow.amplitude(t, &node.transverse)
                    } else {
                        0.0
                    };
                    for i in 0..ro {
                        resid[i] = uo[i] - mue[i] - amp * block.g_dir[i];
                    }
                    let to = &block.tau_odd * &resid / block.p_odd;
                    for (x, v) in out[fo][node.odd * ro..(node.odd + 1) * ro]
                        .iter_mut()
                        .zip(to.iter())
                    {
                        *x += v;
                    }
                    if block.tau_even.amax() > 0.0 {
                        let te = &block.tau_even * &resid / block.p_even;
                        for (x, v) in out[fe][node.even * re..(node.even + 1) * re]
                            .iter_mut()
                            .zip(te.iter())
                        {
                            *x += v;
                        }
                    }
                }
            }
        }
    }

    /// Multiplies every moment by `exp(q·dt)`.
    pub fn relax(&self, u: &mut Fields, dt: f64) {
        for ((fam, q), v) in self.families.iter().zip(&self.relaxation).zip(u.iter_mut()) {
            let w = fam.width();
            if w == 0 || q.iter().all(|x| *x == 0.0) {
                continue;
            }
            let f: Vec<f64> = q.iter().map(|x| (x * dt).exp()).collect();
            v.par_chunks_mut(w).for_each(|c| {
                for (x, s) in c.iter_mut().zip(&f) {
                    *x *= s;
                }
            });
        }
    }

    /// Coordinates of a family node.
    pub fn node_position(&self, family: usize, node: usize) -> Vec<f64> {
        let idx = self.tensor.multi_index(family, node);
        self.tensor.position(family, &idx)
    }

    /// Family and in-family offset of a basis position.
    pub fn locate(&self, position: usize) -> (usize, usize) {
        for (a, fam) in self.families.iter().enumerate() {
            if let Ok(j) = fam.moments.binary_search(&position) {
                return (a, j);
            }
        }
        unreachable!("every basis position belongs to a family")
    }
}

#[allow(clippy::too_many_arguments)]
fn build_face(
    system: &PnSystem,
    tensor: &TensorGrid,
    families: &[Family],
    slot: usize,
    face: Face,
    kind: BoundaryKind,
    alpha: f64,
    inflow: Inflow,
) -> Result<BoundaryFace> {
    let basis = system.basis();
    let axis = face.axis;
    let obc = onsager_bc(system, face)?;
    let quad = basis.quadrature(face.outgoing());
    let marshak = marshak_matrix(basis, face, &quad)?;
    let m_full = match kind {
        BoundaryKind::Onsager => obc.m.clone(),
        BoundaryKind::UnstableMarshak => marshak.matrix.clone(),
    };
    let g_full = inflow_moments(system, face, &inflow)?;
    let odd_all = basis.odd(axis);
    let even_all = basis.even(axis);
    let sbp = &tensor.sbp[slot];
    let mut blocks = Vec::new();
    for fo in 0..families.len() {
        if !TensorGrid::is_odd(fo, slot) {
            continue;
        }
        let fe = TensorGrid::with_parity(fo, slot, false);
        let rows: Vec<usize> = families[fo]
            .moments
            .iter()
            .map(|p| odd_all.iter().position(|q| q == p).expect("odd moment"))
            .collect();
        let cols: Vec<usize> = families[fe]
            .moments
            .iter()
            .map(|p| even_all.iter().position(|q| q == p).expect("even moment"))
            .collect();
        if rows.is_empty() {
            continue;
        }
        let leak = rows
            .iter()
            .flat_map(|&i| {
                (0..odd_all.len())
                    .filter(|j| !rows.contains(j))
                    .map(move |j| (i, j))
            })
            .map(|(i, j)| obc.l[(i, j)].abs())
            .fold(0.0, f64::max);
        if leak > 1e-12 {
            return Err(Error::Assembly(format!(
                "L on face {} couples parity families (|entry| = {leak:e})",
                face.label()
            )));
        }
        let sub = |m: &DMatrix<f64>, r: &[usize], c: &[usize]| {
            DMatrix::from_fn(r.len(), c.len(), |i, j| m[(r[i], c[j])])
        };
        let l = sub(&obc.l, &rows, &rows);
        let a_hat = sub(&obc.a_hat, &rows, &cols);
        let penalty = sat_penalties(&l, &a_hat, alpha, face.side)?;
        let m = sub(&m_full, &rows, &cols);
        let g_dir = DVector::from_fn(rows.len(), |i, _| g_full[families[fo].moments[i]]);
        let nodes = boundary_nodes(tensor, &families[fo], &families[fe], fo, slot, face.side);
        blocks.push(FaceBlock {
            fam_odd: fo,
            fam_even: fe,
            m,
            tau_odd: penalty.tau_odd,
            tau_even: penalty.tau_even,
            g_dir,
            p_odd: sbp.boundary_weight(true, face.side),
            p_even: sbp.boundary_weight(false, face.side),
            nodes,
            bound_constant: penalty.bound_constant,
        });
    }
    let m_norm = if m_full.is_empty() {
        0.0
    } else {
        m_full.clone().singular_values().max()
    };
    Ok(BoundaryFace {
        face,
        slot,
        kind,
        alpha,
        inflow,
        blocks,
        m_full,
        l_inverse_norm: obc.l_inverse_norm(),
        m_norm,
    })
}

fn boundary_nodes(
    tensor: &TensorGrid,
    fam_odd: &Family,
    fam_even: &Family,
    fo: usize,
    slot: usize,
    side: Side,
) -> Vec<BoundaryNode> {
    let d = tensor.dims();
    let io = match side {
        Side::Low => 0,
        Side::High => fam_odd.shape[slot] - 1,
    };
    let ie = match side {
        Side::Low => 0,
        Side::High => fam_even.shape[slot] - 1,
    };
    let transverse_shape: Vec<usize> = (0..d)
        .filter(|&j| j != slot)
        .map(|j| fam_odd.shape[j])
        .collect();
    let count: usize = transverse_shape.iter().product();
    let mut out = Vec::with_capacity(count);
    for t in 0..count {
        let mut idx = vec![0; d];
        let mut rem = t;
        for (pos, j) in (0..d)
            .filter(|&j| j != slot)
            .enumerate()
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
        {
            idx[j] = rem % transverse_shape[pos];
            rem /= transverse_shape[pos];
        }
        idx[slot] = io;
        let odd: usize = idx.iter().zip(&fam_odd.strides).map(|(i, s)| i * s).sum();
        idx[slot] = ie;
        let even: usize = idx.iter().zip(&fam_even.strides).map(|(i, s)| i * s).sum();
        idx[slot] = io;
        let pos = tensor.position(fo, &idx);
        let transverse = (0..d).filter(|&j| j != slot).map(|j| pos[j]).collect();
        out.push(BoundaryNode {
            odd,
            even,
            weight: tensor.transverse_weight(fo, slot, &idx),
            transverse,
        });
    }
    out
}

/// Resolution of the half-sphere rule for inflow profiles, which need not be polynomial.
const INFLOW_QUADRATURE: i64 = 160;

/// Full odd-moment vector of the face source for unit amplitude.
fn inflow_moments(system: &PnSystem, face: Face, inflow: &Inflow) -> Result<Vec<f64>> {
    let basis = system.basis();
    let n = basis.odd(face.axis).len();
    let mut full = vec![0.0; basis.dim()];
    if inflow.is_vacuum() {
        return Ok(full);
    }
    let order = (INFLOW_QUADRATURE).max(4 * basis.order() as i64);
    let quad = build_quadrature(order, face.incoming())?;
    let g = boundary_source(
        basis,
        face,
        |omega| inflow.angular(face.normal_component(omega)),
        &quad,
    )?;
    debug_assert_eq!(g.len(), n);
    for (i, &p) in basis.odd(face.axis).iter().enumerate() {
        full[p] = g[i];
    }
    Ok(full)
}

/// Coordinates of the grid for an axis slot, for either parity.
pub fn axis_nodes(tensor: &TensorGrid, slot: usize, odd: bool) -> Vec<f64> {
    let g = &tensor.sbp[slot].grid;
    if odd {
        g.odd_nodes()
    } else {
        g.even_nodes()
    }
}
