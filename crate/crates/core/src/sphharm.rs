//! Real spherical harmonics, per-axis reflection parity and product
//! quadrature on the sphere and on half-spheres.
//!
//! Directions are parametrised as `Ω = (√(1−μ²)cos φ, √(1−μ²)sin φ, μ)`.
//! The basis is orthonormal with respect to the unweighted surface measure
//! and contains no net Condon–Shortley phase: the `(−1)^|k|` in the
//! normalisation cancels the phase carried by the associated Legendre
//! functions, so that e.g. `Y_1^1 = √(3/4π) Ω₁`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Cartesian axis `e₁`, `e₂` or `e₃`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    /// Zero-based component index.
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Axis> {
        Axis::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }

    /// The two remaining axes in cyclic order, used as the local frame of a
    /// half-sphere quadrature around `self`.
    fn transverse(self) -> (Axis, Axis) {
        match self {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::Z, Axis::X),
            Axis::Z => (Axis::X, Axis::Y),
        }
    }
}

/// Behaviour of a function under reflection of one Cartesian direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn flip(self) -> Parity {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }
}

/// Degree `l` and order `k` of a real spherical harmonic `Y_l^k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ShIndex {
    l: usize,
    k: i64,
}

impl ShIndex {
    pub fn new(l: usize, k: i64) -> Result<Self> {
        if k.unsigned_abs() as usize > l {
            return Err(Error::InvalidInput(format!(
                "spherical harmonic order |k|={} exceeds degree l={}",
                k.abs(),
                l
            )));
        }
        Ok(ShIndex { l, k })
    }

    pub fn l(self) -> usize {
        self.l
    }

    pub fn k(self) -> i64 {
        self.k
    }

    /// Position in the `(l, k)` lexicographic basis ordering.
    pub fn flat(self) -> usize {
        self.l * self.l + (self.k + self.l as i64) as usize
    }

    pub fn from_flat(pos: usize) -> ShIndex {
        let l = (pos as f64).sqrt().floor() as usize;
        // guard against rounding of the square root
        let l = if (l + 1) * (l + 1) <= pos { l + 1 } else { l };
        let k = pos as i64 - (l * l) as i64 - l as i64;
        ShIndex { l, k }
    }
}

/// Unit vector on the sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction([f64; 3]);

impl Direction {
    const UNIT_TOL: f64 = 1e-14;

    pub fn new(components: [f64; 3]) -> Result<Self> {
        let norm = components.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > Self::UNIT_TOL * 4.0 {
            return Err(Error::InvalidInput(format!(
                "direction {components:?} is not unit length (norm {norm})"
            )));
        }
        Ok(Direction(components))
    }

    /// Normalises an arbitrary nonzero vector.
    pub fn normalized(v: [f64; 3]) -> Self {
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        Direction([v[0] / norm, v[1] / norm, v[2] / norm])
    }

    pub fn from_angles(mu: f64, phi: f64) -> Self {
        let s = (1.0 - mu * mu).max(0.0).sqrt();
        Direction([s * phi.cos(), s * phi.sin(), mu])
    }

    pub fn components(&self) -> [f64; 3] {
        self.0
    }

    pub fn component(&self, axis: Axis) -> f64 {
        self.0[axis.index()]
    }

    /// Polar cosine `μ = Ω₃`.
    pub fn mu(&self) -> f64 {
        self.0[2]
    }

    pub fn phi(&self) -> f64 {
        self.0[1].atan2(self.0[0])
    }
}

/// Mirror image `Ω − 2(e_i·Ω)e_i`.
pub fn reflect(omega: Direction, axis: Axis) -> Direction {
    let mut c = omega.0;
    c[axis.index()] = -c[axis.index()];
    Direction(c)
}

/// Associated Legendre functions `P_l^m(x)` for fixed `m` and all
/// `l = m..=lmax`, including the Condon–Shortley phase.
fn assoc_legendre_column(m: usize, lmax: usize, x: f64, out: &mut [f64]) {
    debug_assert!(out.len() > lmax - m);
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = 1.0;
    let mut odd = 1.0;
    for _ in 0..m {
        pmm *= -odd * s;
        odd += 2.0;
    }
    out[0] = pmm;
    if lmax == m {
        return;
    }
    let mut prev = pmm;
    let mut cur = x * (2 * m + 1) as f64 * pmm;
    out[1] = cur;
    for l in (m + 2)..=lmax {
        let next = ((2 * l - 1) as f64 * x * cur - (l + m - 1) as f64 * prev) / (l - m) as f64;
        prev = cur;
        cur = next;
        out[l - m] = cur;
    }
}

/// `C_{l,m} = (−1)^m √((2l+1)/(2π) · (l−m)!/(l+m)!)`.
fn normalization(l: usize, m: usize) -> f64 {
    let mut ratio = 1.0;
    for j in (l - m + 1)..=(l + m) {
        ratio /= j as f64;
    }
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    sign * ((2 * l + 1) as f64 / (2.0 * PI) * ratio).sqrt()
}

/// Evaluates a single real spherical harmonic.
pub fn eval_sh(idx: ShIndex, omega: Direction) -> f64 {
    let m = idx.k.unsigned_abs() as usize;
    let mut col = vec![0.0; idx.l - m + 1];
    assoc_legendre_column(m, idx.l, omega.mu(), &mut col);
    let plm = col[idx.l - m];
    let phi = omega.phi();
    let angular = match idx.k {
        k if k > 0 => (m as f64 * phi).cos(),
        0 => std::f64::consts::FRAC_1_SQRT_2,
        _ => (m as f64 * phi).sin(),
    };
    normalization(idx.l, m) * plm * angular
}

/// Evaluates every harmonic up to degree `n` at `omega`, in basis order.
pub fn eval_all(n: usize, omega: Direction, out: &mut [f64]) {
    let count = (n + 1) * (n + 1);
    assert!(out.len() >= count, "output buffer too small");
    let mu = omega.mu();
    let phi = omega.phi();
    let mut col = vec![0.0; n + 1];
    for m in 0..=n {
        assoc_legendre_column(m, n, mu, &mut col);
        let (c, s) = if m == 0 {
            (std::f64::consts::FRAC_1_SQRT_2, 0.0)
        } else {
            let a = m as f64 * phi;
            (a.cos(), a.sin())
        };
        for l in m..=n {
            let base = normalization(l, m) * col[l - m];
            if m == 0 {
                out[l * l + l] = base * c;
            } else {
                out[l * l + l + m] = base * c;
                out[l * l + l - m] = base * s;
            }
        }
    }
}

/// Closed-form parity of `Y_l^k` under reflection of `axis`.
pub fn classify_parity(axis: Axis, idx: ShIndex) -> Parity {
    let odd = match axis {
        Axis::X => {
            if idx.k < 0 {
                idx.k % 2 == 0
            } else {
                idx.k % 2 != 0
            }
        }
        Axis::Y => idx.k < 0,
        Axis::Z => (idx.l as i64 + idx.k) % 2 != 0,
    };
    if odd {
        Parity::Odd
    } else {
        Parity::Even
    }
}

/// Parity flags of every basis function for each Cartesian axis.
#[derive(Debug, Clone)]
pub struct ParityTable {
    order: usize,
    flags: [Vec<Parity>; 3],
}

impl ParityTable {
    pub fn new(order: usize) -> Self {
        let m = (order + 1) * (order + 1);
        let flags = Axis::ALL.map(|axis| {
            (0..m)
                .map(|p| classify_parity(axis, ShIndex::from_flat(p)))
                .collect()
        });
        ParityTable { order, flags }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, axis: Axis, pos: usize) -> Parity {
        self.flags[axis.index()][pos]
    }

    pub fn count(&self, axis: Axis, parity: Parity) -> usize {
        self.flags[axis.index()]
            .iter()
            .filter(|&&p| p == parity)
            .count()
    }
}

/// Domain of a [`SphereQuadrature`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Restriction {
    Full,
    /// `{Ω : sign·Ω_axis > 0}` where `positive` selects the sign.
    Half {
        axis: Axis,
        positive: bool,
    },
}

/// Product rule on the sphere or on a half-sphere.
#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    nodes: Vec<Direction>,
    weights: Vec<f64>,
    restriction: Restriction,
}

impl SphereQuadrature {
    pub fn nodes(&self) -> &[Direction] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn restriction(&self) -> Restriction {
        self.restriction
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Direction, f64)> {
        self.nodes.iter().zip(self.weights.iter().copied())
    }

    pub fn integrate(&self, f: impl Fn(&Direction) -> f64) -> f64 {
        self.iter().map(|(d, w)| w * f(d)).sum()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 {
                1.0
            } else if n == 1 {
                z
            } else {
                p1
            };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Builds a product rule exact for products of harmonics up to total degree
/// `2n + 2` on its domain: Gauss–Legendre in the cosine relative to the
/// restriction axis times `2n + 3` equispaced azimuths.
pub fn build_quadrature(n: i64, restriction: Restriction) -> Result<SphereQuadrature> {
    if n < 0 {
        return Err(Error::InvalidInput(format!(
            "quadrature degree must be non-negative, got {n}"
        )));
    }
    let n = n as usize;
    let n_az = 2 * n + 3;
    let dphi = 2.0 * PI / n_az as f64;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    match restriction {
        Restriction::Full => {
            let (mus, ws) = gauss_legendre(n + 2);
            for (&mu, &w) in mus.iter().zip(&ws) {
                for j in 0..n_az {
                    nodes.push(Direction::from_angles(mu, (j as f64 + 0.5) * dphi));
                    weights.push(w * dphi);
                }
            }
        }
        Restriction::Half { axis, positive } => {
            // Gauss–Legendre mapped onto (0, 1]; the equator is never a node.
            let (ts, ws) = gauss_legendre(n + 2);
            let (a1, a2) = axis.transverse();
            let sign = if positive { 1.0 } else { -1.0 };
            for (&t, &w) in ts.iter().zip(&ws) {
                let c = 0.5 * (t + 1.0);
                let s = (1.0 - c * c).max(0.0).sqrt();
                for j in 0..n_az {
                    let psi = (j as f64 + 0.5) * dphi;
                    let mut v = [0.0; 3];
                    v[axis.index()] = sign * c;
                    v[a1.index()] = s * psi.cos();
                    v[a2.index()] = s * psi.sin();
                    nodes.push(Direction(v));
                    weights.push(0.5 * w * dphi);
                }
            }
        }
    }
    Ok(SphereQuadrature {
        nodes,
        weights,
        restriction,
    })
}
