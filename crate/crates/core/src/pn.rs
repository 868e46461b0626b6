//! Assembly of the P_N moment system: transport matrices, their odd/even
//! block form per axis, and the diagonal scattering relaxation.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sphharm::{
    build_quadrature, eval_all, Axis, Direction, Parity, ParityTable, Restriction, ShIndex,
    SphereQuadrature,
};

/// Moment ordering and per-axis parity bookkeeping for a basis up to degree `N`.
#[derive(Debug, Clone)]
pub struct MomentBasis {
    order: usize,
    parity: ParityTable,
    odd: [Vec<usize>; 3],
    even: [Vec<usize>; 3],
}

impl MomentBasis {
    pub fn new(order: usize) -> Self {
        let parity = ParityTable::new(order);
        let m = (order + 1) * (order + 1);
        let split = |axis: Axis, p: Parity| -> Vec<usize> {
            (0..m).filter(|&i| parity.get(axis, i) == p).collect()
        };
        let odd = Axis::ALL.map(|a| split(a, Parity::Odd));
        let even = Axis::ALL.map(|a| split(a, Parity::Even));
        MomentBasis {
            order,
            parity,
            odd,
            even,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Total number of moments `(N+1)²`.
    pub fn dim(&self) -> usize {
        (self.order + 1) * (self.order + 1)
    }

    /// `N(N+1)/2`
    pub fn odd_count(&self) -> usize {
        self.order * (self.order + 1) / 2
    }

    /// `(N+1)(N+2)/2`
    pub fn even_count(&self) -> usize {
        (self.order + 1) * (self.order + 2) / 2
    }

    pub fn index(&self, pos: usize) -> ShIndex {
        ShIndex::from_flat(pos)
    }

    pub fn position(&self, l: usize, k: i64) -> Result<usize> {
        let idx = ShIndex::new(l, k)?;
        if l > self.order {
            return Err(Error::InvalidInput(format!(
                "moment ({l},{k}) outside basis of order {}",
                self.order
            )));
        }
        Ok(idx.flat())
    }

    pub fn parity(&self, axis: Axis, pos: usize) -> Parity {
        self.parity.get(axis, pos)
    }

    pub fn parity_table(&self) -> &ParityTable {
        &self.parity
    }

    /// Basis positions odd under reflection of `axis`, ascending.
    pub fn odd(&self, axis: Axis) -> &[usize] {
        &self.odd[axis.index()]
    }

    pub fn even(&self, axis: Axis) -> &[usize] {
        &self.even[axis.index()]
    }

    /// Odd-first permutation: entry `j` is the basis position placed at slot `j`.
    pub fn permutation(&self, axis: Axis) -> Vec<usize> {
        self.odd(axis)
            .iter()
            .chain(self.even(axis))
            .copied()
            .collect()
    }

    pub fn inverse_permutation(&self, axis: Axis) -> Vec<usize> {
        let perm = self.permutation(axis);
        let mut inv = vec![0; perm.len()];
        for (slot, &pos) in perm.iter().enumerate() {
            inv[pos] = slot;
        }
        inv
    }

    /// Quadrature exact for every product that occurs in assembly.
    pub fn quadrature(&self, restriction: Restriction) -> SphereQuadrature {
        build_quadrature(self.order as i64, restriction).expect("order is non-negative")
    }

    /// Evaluates the whole basis at `omega`.
    pub fn eval(&self, omega: Direction) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        eval_all(self.order, omega, &mut y);
        y
    }
}

/// Transport matrices of the P_N system and the diagonal relaxation.
#[derive(Debug, Clone)]
pub struct PnSystem {
    basis: MomentBasis,
    full: [DMatrix<f64>; 3],
    blocks: [DMatrix<f64>; 3],
    relaxation: Vec<f64>,
}

/// Threshold below which assembled entries are treated as structural zeros.
pub const STRUCTURAL_ZERO: f64 = 1e-12;

/// Assembles `A^(i) = ⟨Ω_i Y, Yᵀ⟩` by quadrature and extracts `Â^(i)`.
pub fn assemble_transport(basis: &MomentBasis, quad: &SphereQuadrature) -> Result<PnSystem> {
    let m = basis.dim();
    let mut full = [
        DMatrix::zeros(m, m),
        DMatrix::zeros(m, m),
        DMatrix::zeros(m, m),
    ];
    let mut y = vec![0.0; m];
    for (omega, w) in quad.iter() {
        eval_all(basis.order(), *omega, &mut y);
        let c = omega.components();
        for (mat, ci) in full.iter_mut().zip(c) {
            let wc = w * ci;
            for j in 0..m {
                let a = wc * y[j];
                for k in j..m {
                    mat[(j, k)] += a * y[k];
                }
            }
        }
    }
    for mat in full.iter_mut() {
        for j in 0..m {
            for k in 0..j {
                mat[(j, k)] = mat[(k, j)];
            }
        }
    }
    let system = PnSystem::from_full(basis.clone(), full);
    system.check_block_purity(STRUCTURAL_ZERO)?;
    Ok(system)
}

impl PnSystem {
    /// Convenience constructor using the basis' own exact quadrature.
    pub fn assemble(order: usize) -> Result<Self> {
        let basis = MomentBasis::new(order);
        let quad = basis.quadrature(Restriction::Full);
        assemble_transport(&basis, &quad)
    }

    fn from_full(basis: MomentBasis, full: [DMatrix<f64>; 3]) -> Self {
        let blocks = Axis::ALL.map(|axis| {
            let odd = basis.odd(axis);
            let even = basis.even(axis);
            DMatrix::from_fn(odd.len(), even.len(), |i, j| {
                full[axis.index()][(odd[i], even[j])]
            })
        });
        let relaxation = vec![0.0; basis.dim()];
        PnSystem {
            basis,
            full,
            blocks,
            relaxation,
        }
    }

    pub fn basis(&self) -> &MomentBasis {
        &self.basis
    }

    pub fn order(&self) -> usize {
        self.basis.order()
    }

    /// Full symmetric `A^(i)` in basis order.
    pub fn transport(&self, axis: Axis) -> &DMatrix<f64> {
        &self.full[axis.index()]
    }

    /// Odd–even coupling block `Â^(i)`, rows `basis.odd(axis)`, columns `basis.even(axis)`.
    pub fn a_hat(&self, axis: Axis) -> &DMatrix<f64> {
        &self.blocks[axis.index()]
    }

    /// `A^(i)` in odd-first order.
    pub fn permuted(&self, axis: Axis) -> DMatrix<f64> {
        let perm = self.basis.permutation(axis);
        let a = &self.full[axis.index()];
        DMatrix::from_fn(perm.len(), perm.len(), |i, j| a[(perm[i], perm[j])])
    }

    pub fn relaxation(&self) -> &[f64] {
        &self.relaxation
    }

    pub fn with_relaxation(mut self, diag: Vec<f64>) -> Result<Self> {
        if diag.len() != self.basis.dim() {
            return Err(Error::InvalidInput(format!(
                "relaxation diagonal has {} entries, basis has {}",
                diag.len(),
                self.basis.dim()
            )));
        }
        if let Some(v) = diag.iter().find(|&&v| v > 1e-12) {
            return Err(Error::InvalidInput(format!(
                "relaxation entry {v} is positive"
            )));
        }
        self.relaxation = diag;
        Ok(self)
    }

    /// Largest magnitude in the odd–odd and even–even blocks of each axis.
    pub fn block_impurity(&self) -> f64 {
        let mut worst = 0.0f64;
        for axis in Axis::ALL {
            let a = &self.full[axis.index()];
            for group in [self.basis.odd(axis), self.basis.even(axis)] {
                for &i in group {
                    for &j in group {
                        worst = worst.max(a[(i, j)].abs());
                    }
                }
            }
        }
        worst
    }

    fn check_block_purity(&self, tol: f64) -> Result<()> {
        let worst = self.block_impurity();
        if worst > tol {
            return Err(Error::Assembly(format!(
                "parity diagonal block entry of magnitude {worst:e} exceeds {tol:e}"
            )));
        }
        Ok(())
    }

    /// Adds `delta` to the symmetric pair `(row, col)` of `A^(axis)`.
    /// Exists so that verification suites can be exercised on corrupted data.
    pub fn perturb_entry(&mut self, axis: Axis, row: usize, col: usize, delta: f64) {
        let a = &mut self.full[axis.index()];
        a[(row, col)] += delta;
        if row != col {
            a[(col, row)] += delta;
        }
        let rebuilt = PnSystem::from_full(self.basis.clone(), self.full.clone());
        self.blocks = rebuilt.blocks;
    }
}

/// Residual of both odd/even recursion identities at `omega`, over all
/// rows whose degree is below `N` (so both neighbours are in the basis).
pub fn recursion_check(system: &PnSystem, axis: Axis, omega: Direction) -> f64 {
    let basis = system.basis();
    let n = basis.order();
    let y = basis.eval(omega);
    let w = omega.component(axis);
    let a_hat = system.a_hat(axis);
    let odd = basis.odd(axis);
    let even = basis.even(axis);
    let mut worst = 0.0f64;
    for (i, &row) in odd.iter().enumerate() {
        if basis.index(row).l() >= n {
            continue;
        }
        let rhs: f64 = even
            .iter()
            .enumerate()
            .map(|(j, &c)| a_hat[(i, j)] * y[c])
            .sum();
        worst = worst.max((w * y[row] - rhs).abs());
    }
    for (j, &col) in even.iter().enumerate() {
        if basis.index(col).l() >= n {
            continue;
        }
        let rhs: f64 = odd
            .iter()
            .enumerate()
            .map(|(i, &r)| a_hat[(i, j)] * y[r])
            .sum();
        worst = worst.max((w * y[col] - rhs).abs());
    }
    worst
}

/// Angular shape of a rotation-invariant deflection kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// No scattering.
    None,
    /// Uniform deflection with total scattering cross section `sigma_s`.
    Isotropic { sigma_s: f64 },
    /// Henyey–Greenstein deflection with anisotropy `g`.
    HenyeyGreenstein { sigma_s: f64, g: f64 },
    /// Tabulated Legendre moments `σ_l`, `l = 0..`.
    Table { moments: Vec<f64> },
}

/// Legendre moments `σ_l = 2π∫σ_s(μ)P_l(μ)dμ` of the kernel plus total cross section.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringSpectrum {
    pub sigma_t: f64,
    pub kernel: Kernel,
}

impl ScatteringSpectrum {
    pub fn none() -> Self {
        ScatteringSpectrum {
            sigma_t: 0.0,
            kernel: Kernel::None,
        }
    }

    /// Conservative isotropic scattering with `σ_t = σ_0 = sigma`.
    pub fn isotropic(sigma: f64) -> Self {
        ScatteringSpectrum {
            sigma_t: sigma,
            kernel: Kernel::Isotropic { sigma_s: sigma },
        }
    }

    pub fn henyey_greenstein(sigma_s: f64, g: f64, sigma_t: f64) -> Self {
        ScatteringSpectrum {
            sigma_t,
            kernel: Kernel::HenyeyGreenstein { sigma_s, g },
        }
    }

    /// Parses a moment table: a `sigma_t <value>` header followed by one
    /// `l σ_l` pair per line. Blank lines and `#` comments are ignored.
    pub fn parse_table(text: &str) -> Result<Self> {
        let mut sigma_t = None;
        let mut moments: Vec<Option<f64>> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let head = parts.next().unwrap_or_default();
            let value = parts.next().ok_or_else(|| {
                Error::InvalidInput(format!("line {}: expected two fields", lineno + 1))
            })?;
            if parts.next().is_some() {
                return Err(Error::InvalidInput(format!(
                    "line {}: trailing fields",
                    lineno + 1
                )));
            }
            let value: f64 = value.parse().map_err(|_| {
                Error::InvalidInput(format!("line {}: bad number '{value}'", lineno + 1))
            })?;
            if head == "sigma_t" {
                if sigma_t.is_some() {
                    return Err(Error::InvalidInput("duplicate sigma_t header".into()));
                }
                sigma_t = Some(value);
                continue;
            }
            if sigma_t.is_none() {
                return Err(Error::InvalidInput(
                    "moment table must start with a 'sigma_t <value>' header".into(),
                ));
            }
            let l: usize = head.parse().map_err(|_| {
                Error::InvalidInput(format!("line {}: bad degree '{head}'", lineno + 1))
            })?;
            if moments.len() <= l {
                moments.resize(l + 1, None);
            }
            if moments[l].replace(value).is_some() {
                return Err(Error::InvalidInput(format!("degree {l} listed twice")));
            }
        }
        let sigma_t =
            sigma_t.ok_or_else(|| Error::InvalidInput("missing sigma_t header".into()))?;
        let moments = moments
            .into_iter()
            .enumerate()
            .map(|(l, v)| v.ok_or_else(|| Error::InvalidInput(format!("degree {l} missing"))))
            .collect::<Result<Vec<_>>>()?;
        let spec = ScatteringSpectrum {
            sigma_t,
            kernel: Kernel::Table { moments },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load_table(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_table(&text)
    }

    /// `σ_l` for `l = 0..=order`.
    pub fn moments(&self, order: usize) -> Result<Vec<f64>> {
        match &self.kernel {
            Kernel::None => Ok(vec![0.0; order + 1]),
            Kernel::Isotropic { sigma_s } => Ok((0..=order)
                .map(|l| if l == 0 { *sigma_s } else { 0.0 })
                .collect()),
            Kernel::HenyeyGreenstein { sigma_s, g } => {
                Ok((0..=order).map(|l| sigma_s * g.powi(l as i32)).collect())
            }
            Kernel::Table { moments } => {
                if moments.len() <= order {
                    return Err(Error::InvalidInput(format!(
                        "moment table provides degrees 0..={}, order {order} required",
                        moments.len() as i64 - 1
                    )));
                }
                Ok(moments[..=order].to_vec())
            }
        }
    }

    pub fn sigma_s(&self) -> f64 {
        match &self.kernel {
            Kernel::None => 0.0,
            Kernel::Isotropic { sigma_s } | Kernel::HenyeyGreenstein { sigma_s, .. } => *sigma_s,
            Kernel::Table { moments } => moments.first().copied().unwrap_or(0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_t >= 0.0) || !self.sigma_t.is_finite() {
            return Err(Error::InvalidInput(format!(
                "total cross section must be non-negative, got {}",
                self.sigma_t
            )));
        }
        let sigma0 = self.sigma_s();
        if sigma0 < 0.0 {
            return Err(Error::InvalidInput(format!(
                "scattering cross section must be non-negative, got {sigma0}"
            )));
        }
        if sigma0 > self.sigma_t + 1e-12 {
            return Err(Error::InvalidInput(format!(
                "sigma_0={sigma0} exceeds sigma_t={}: relaxation would be positive",
                self.sigma_t
            )));
        }
        if let Kernel::HenyeyGreenstein { g, .. } = self.kernel {
            if !(-1.0 < g && g < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "Henyey-Greenstein anisotropy g={g} outside (-1, 1)"
                )));
            }
        }
        if let Kernel::Table { moments } = &self.kernel {
            if let Some((l, v)) = moments
                .iter()
                .enumerate()
                .find(|(_, v)| v.abs() > sigma0 + 1e-12)
            {
                return Err(Error::InvalidInput(format!(
                    "|sigma_{l}|={} exceeds sigma_0={sigma0}",
                    v.abs()
                )));
            }
        }
        Ok(())
    }
}

/// Relaxation eigenvalue `σ_l − σ_t` for every basis position.
pub fn scattering_diagonal(spec: &ScatteringSpectrum, basis: &MomentBasis) -> Result<Vec<f64>> {
    spec.validate()?;
    let moments = spec.moments(basis.order())?;
    Ok((0..basis.dim())
        .map(|p| moments[basis.index(p).l()] - spec.sigma_t)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn test2_block_row() {
        let sys = PnSystem::assemble(2).unwrap();
        let b = sys.basis();
        let odd = b.odd(Axis::X);
        let even = b.even(Axis::X);
        let row = odd
            .iter()
            .position(|&p| p == b.position(1, 1).unwrap())
            .unwrap();
        let want = [(0usize, 0i64, 0.5773), (2, 0, -0.2581), (2, 2, 0.4472)];
        for (l, k, v) in want {
            let col = even
                .iter()
                .position(|&p| p == b.position(l, k).unwrap())
                .unwrap();
            let got = sys.a_hat(Axis::X)[(row, col)];
            assert!((got - v).abs() < 1e-4, "({l},{k}): {got}");
        }
    }

    #[test]
    fn first_order_z_coupling() {
        let sys = PnSystem::assemble(1).unwrap();
        let a = sys.transport(Axis::Z);
        assert!((a[(2, 0)] - 1.0 / 3f64.sqrt()).abs() < 1e-14);
        for axis in Axis::ALL {
            assert!(sys.transport(axis)[(0, 0)].abs() < 1e-15);
        }
    }

    #[test]
    fn permutation_is_bijection() {
        let b = MomentBasis::new(6);
        for axis in Axis::ALL {
            let p = b.permutation(axis);
            let inv = b.inverse_permutation(axis);
            for i in 0..b.dim() {
                assert_eq!(inv[p[i]], i);
                assert_eq!(p[inv[i]], i);
            }
            assert_eq!(b.odd(axis).len(), b.odd_count());
        }
    }

    #[test]
    fn recursion_identities() {
        let sys = PnSystem::assemble(5).unwrap();
        let d = Direction::normalized([0.3, -0.4, 0.5]);
        for axis in Axis::ALL {
            assert!(recursion_check(&sys, axis, d) < 1e-12);
        }
        let pole = Direction::new([1.0, 0.0, 0.0]).unwrap();
        assert!(recursion_check(&sys, Axis::X, pole) < 1e-12);
        let trivial = PnSystem::assemble(0).unwrap();
        assert_eq!(recursion_check(&trivial, Axis::Z, pole), 0.0);
    }

    #[test]
    fn tampered_entry_breaks_purity() {
        let mut sys = PnSystem::assemble(3).unwrap();
        let b = sys.basis().clone();
        let (i, j) = (b.even(Axis::Z)[0], b.even(Axis::Z)[1]);
        sys.perturb_entry(Axis::Z, i, j, 1e-6);
        assert!(sys.block_impurity() > 1e-7);
        assert!(sys.check_block_purity(STRUCTURAL_ZERO).is_err());
    }

    #[test]
    fn isotropic_diagonal() {
        let b = MomentBasis::new(3);
        let sigma = 2.5;
        let q = scattering_diagonal(&ScatteringSpectrum::isotropic(sigma), &b).unwrap();
        assert_eq!(q[0], 0.0);
        assert!(q[1..].iter().all(|&v| (v + sigma).abs() < 1e-15));
    }

    #[test]
    fn henyey_greenstein_diagonal() {
        let b = MomentBasis::new(3);
        let spec = ScatteringSpectrum::henyey_greenstein(1.0, 0.5, 1.0);
        let q = scattering_diagonal(&spec, &b).unwrap();
        assert!((q[b.position(2, 1).unwrap()] + 0.75).abs() < 1e-15);
    }

    #[test]
    fn henyey_greenstein_moments_by_quadrature() {
        // σ_l = 2π∫p(μ)P_l(μ)dμ with the normalised HG density
        let g: f64 = 0.5;
        let (x, w) = crate::sphharm::gauss_legendre(200);
        for l in 0..5 {
            let mut acc = 0.0;
            for (&mu, &wi) in x.iter().zip(&w) {
                let p = (1.0 - g * g) / (4.0 * PI * (1.0 + g * g - 2.0 * g * mu).powf(1.5));
                acc += wi * 2.0 * PI * p * legendre(l, mu);
            }
            assert!((acc - g.powi(l as i32)).abs() < 1e-10, "l={l}: {acc}");
        }
    }

    fn legendre(l: usize, x: f64) -> f64 {
        let (mut p0, mut p1) = (1.0, x);
        if l == 0 {
            return 1.0;
        }
        for k in 2..=l {
            let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        p1
    }

    #[test]
    fn rejects_gain() {
        let spec = ScatteringSpectrum {
            sigma_t: 1.0,
            kernel: Kernel::Isotropic { sigma_s: 1.5 },
        };
        assert!(scattering_diagonal(&spec, &MomentBasis::new(1)).is_err());
    }

    #[test]
    fn table_parsing() {
        let text = "# copper, simplified\nsigma_t 0.1\n0 0.1\n1 0.06\n2 0.036\n";
        let spec = ScatteringSpectrum::parse_table(text).unwrap();
        assert_eq!(spec.sigma_t, 0.1);
        assert_eq!(spec.moments(2).unwrap(), vec![0.1, 0.06, 0.036]);
        assert!(spec.moments(3).is_err());
        assert!(ScatteringSpectrum::parse_table("0 1.0\n").is_err());
        assert!(ScatteringSpectrum::parse_table("sigma_t 1\n0 1\n2 0.5\n").is_err());
        assert!(ScatteringSpectrum::parse_table("sigma_t 1\n0 0.5\n1 0.7\n").is_err());
    }
}
