//! Second-order staggered summation-by-parts operators, SAT penalty
//! matrices, and their tensor-product extension to 2D/3D boxes.

use nalgebra::{DMatrix, SymmetricEigen};
use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::onsager::Side;
use crate::sphharm::Axis;

type Q = Ratio<i64>;

/// Uniform interval split into `cells` cells. Odd variables live on the
/// `cells + 1` integer nodes, even variables on the boundaries plus the
/// `cells` midpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaggeredGrid1d {
    pub lower: f64,
    pub upper: f64,
    pub cells: usize,
}

impl StaggeredGrid1d {
    pub fn new(lower: f64, upper: f64, cells: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && upper > lower) {
            return Err(Error::InvalidInput(format!(
                "empty interval [{lower}, {upper}]"
            )));
        }
        if cells == 0 {
            return Err(Error::InvalidInput("grid needs at least one cell".into()));
        }
        Ok(StaggeredGrid1d {
            lower,
            upper,
            cells,
        })
    }

    pub fn h(&self) -> f64 {
        (self.upper - self.lower) / self.cells as f64
    }

    pub fn odd_len(&self) -> usize {
        self.cells + 1
    }

    pub fn even_len(&self) -> usize {
        self.cells + 2
    }

    pub fn len(&self, odd: bool) -> usize {
        if odd {
            self.odd_len()
        } else {
            self.even_len()
        }
    }

    pub fn odd_node(&self, i: usize) -> f64 {
        if i == self.cells {
            self.upper
        } else {
            self.lower + i as f64 * self.h()
        }
    }

    pub fn even_node(&self, j: usize) -> f64 {
        if j == 0 {
            self.lower
        } else if j == self.cells + 1 {
            self.upper
        } else {
            self.lower + (j as f64 - 0.5) * self.h()
        }
    }

    pub fn node(&self, odd: bool, i: usize) -> f64 {
        if odd {
            self.odd_node(i)
        } else {
            self.even_node(i)
        }
    }

    pub fn odd_nodes(&self) -> Vec<f64> {
        (0..self.odd_len()).map(|i| self.odd_node(i)).collect()
    }

    pub fn even_nodes(&self) -> Vec<f64> {
        (0..self.even_len()).map(|j| self.even_node(j)).collect()
    }
}

/// Sparse row: `(column, coefficient)`.
pub type Stencil = Vec<(usize, f64)>;

/// Staggered SBP pair. `Q`, `P` are stored h-free and exact; the floating
/// point stencils of `D = P⁻¹Q` include the `1/h` factor.
#[derive(Debug, Clone)]
pub struct SbpPair {
    pub grid: StaggeredGrid1d,
    q_odd: Vec<Vec<(usize, Q)>>,
    q_even: Vec<Vec<(usize, Q)>>,
    p_odd: Vec<Q>,
    p_even: Vec<Q>,
    d_odd: Vec<Stencil>,
    d_even: Vec<Stencil>,
}

/// Free closure parameter: weight of the second even-grid row. Any value in
/// (0, 1) gives a valid pair.
const CLOSURE_WEIGHT: (i64, i64) = (1, 2);

pub fn build_sbp_pair(grid: StaggeredGrid1d) -> Result<SbpPair> {
    let n = grid.cells;
    if n < 4 {
        return Err(Error::Closure(format!(
            "need at least 4 cells for non-overlapping closures, got {n}"
        )));
    }
    let one = Q::from_integer(1);
    let zero = Q::from_integer(0);
    let p1 = Q::new(CLOSURE_WEIGHT.0, CLOSURE_WEIGHT.1);
    // constants annihilated by Q^o = B − (Q^e)ᵀ in its first rows force p0 + p1 = 1
    let p0 = one - p1;

    let (ne, no) = (n + 2, n + 1);
    let mut qe = vec![vec![zero; no]; ne];
    qe[0][0] = -p0;
    qe[0][1] = p0;
    qe[1][0] = -p1;
    qe[1][1] = p1;
    for (j, row) in qe.iter_mut().enumerate().take(n).skip(2) {
        row[j - 1] = -one;
        row[j] = one;
    }
    for i in 0..2 {
        for j in 0..no {
            qe[ne - 1 - i][no - 1 - j] = -qe[i][j];
        }
    }
    let mut qo = vec![vec![zero; ne]; no];
    for i in 0..no {
        for j in 0..ne {
            qo[i][j] = -qe[j][i];
        }
    }
    qo[0][0] -= one;
    qo[no - 1][ne - 1] += one;

    // h-free node coordinates
    let xo: Vec<Q> = (0..no).map(|i| Q::from_integer(i as i64)).collect();
    let xe: Vec<Q> = (0..ne)
        .map(|j| match j {
            0 => zero,
            j if j == ne - 1 => Q::from_integer(n as i64),
            j => Q::new(2 * j as i64 - 1, 2),
        })
        .collect();
    let dot = |row: &[Q], x: &[Q]| row.iter().zip(x).fold(zero, |acc, (a, b)| acc + *a * *b);
    // diagonal norms from exactness on linears: P_ii = (Q x)_i
    let p_odd: Vec<Q> = qo.iter().map(|row| dot(row, &xe)).collect();
    let p_even: Vec<Q> = qe.iter().map(|row| dot(row, &xo)).collect();

    for (name, q, p) in [("odd", &qo, &p_odd), ("even", &qe, &p_even)] {
        for (i, row) in q.iter().enumerate() {
            let s = row.iter().fold(zero, |a, b| a + *b);
            if s != zero {
                return Err(Error::Closure(format!(
                    "{name} row {i} does not annihilate constants"
                )));
            }
            if p[i] <= zero {
                return Err(Error::Closure(format!(
                    "{name} norm entry {i} is not positive"
                )));
            }
        }
    }
    let interior_ok = (2..no - 2).all(|i| {
        (0..ne).all(|j| {
            let want = if j == i + 1 {
                one
            } else if j == i {
                -one
            } else {
                zero
            };
            qo[i][j] == want && p_odd[i] == one
        })
    });
    if !interior_ok {
        return Err(Error::Closure(
            "interior odd rows are not central differences".into(),
        ));
    }

    let sparse = |q: Vec<Vec<Q>>| -> Vec<Vec<(usize, Q)>> {
        q.into_iter()
            .map(|row| {
                row.into_iter()
                    .enumerate()
                    .filter(|(_, v)| *v != zero)
                    .collect()
            })
            .collect()
    };
    let q_odd = sparse(qo);
    let q_even = sparse(qe);
    let h = grid.h();
    let stencils = |q: &[Vec<(usize, Q)>], p: &[Q]| -> Vec<Stencil> {
        q.iter()
            .zip(p)
            .map(|(row, pi)| {
                row.iter()
                    .map(|(j, v)| (*j, to_f64(*v / *pi) / h))
                    .collect()
            })
            .collect()
    };
    let d_odd = stencils(&q_odd, &p_odd);
    let d_even = stencils(&q_even, &p_even);
    Ok(SbpPair {
        grid,
        q_odd,
        q_even,
        p_odd,
        p_even,
        d_odd,
        d_even,
    })
}

fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

impl SbpPair {
    pub fn h(&self) -> f64 {
        self.grid.h()
    }

    /// Norm weights including `h`.
    pub fn p_odd(&self) -> Vec<f64> {
        self.p_odd.iter().map(|p| to_f64(*p) * self.h()).collect()
    }

    pub fn p_even(&self) -> Vec<f64> {
        self.p_even.iter().map(|p| to_f64(*p) * self.h()).collect()
    }

    pub fn p(&self, odd: bool) -> Vec<f64> {
        if odd {
            self.p_odd()
        } else {
            self.p_even()
        }
    }

    /// Boundary norm entry `P_{⋆⋆}` (with `h`) for the grid of the given parity.
    pub fn boundary_weight(&self, odd: bool, side: Side) -> f64 {
        let p = if odd { &self.p_odd } else { &self.p_even };
        let v = match side {
            Side::Low => p[0],
            Side::High => p[p.len() - 1],
        };
        to_f64(v) * self.h()
    }

    pub fn q_odd_dense(&self) -> DMatrix<f64> {
        dense(&self.q_odd, self.grid.odd_len(), self.grid.even_len())
    }

    pub fn q_even_dense(&self) -> DMatrix<f64> {
        dense(&self.q_even, self.grid.even_len(), self.grid.odd_len())
    }

    /// Number of entries where `Q^o + (Q^e)ᵀ − B` is nonzero, in exact arithmetic.
    pub fn sbp_identity_defects(&self) -> usize {
        let (no, ne) = (self.grid.odd_len(), self.grid.even_len());
        let mut sum = vec![vec![Q::from_integer(0); ne]; no];
        for (i, row) in self.q_odd.iter().enumerate() {
            for (j, v) in row {
                sum[i][*j] += *v;
            }
        }
        for (j, row) in self.q_even.iter().enumerate() {
            for (i, v) in row {
                sum[*i][j] += *v;
            }
        }
        sum[0][0] += Q::from_integer(1);
        sum[no - 1][ne - 1] -= Q::from_integer(1);
        sum.iter()
            .flatten()
            .filter(|v| **v != Q::from_integer(0))
            .count()
    }

    /// Stencils of `D^o`, mapping even-grid values to odd nodes.
    pub fn d_odd(&self) -> &[Stencil] {
        &self.d_odd
    }

    /// Stencils of `D^e`, mapping odd-grid values to even nodes.
    pub fn d_even(&self) -> &[Stencil] {
        &self.d_even
    }

    /// Stencils of the operator producing values on the grid of parity `odd`.
    pub fn d(&self, odd: bool) -> &[Stencil] {
        if odd {
            &self.d_odd
        } else {
            &self.d_even
        }
    }

    pub fn apply_d_odd(&self, even_values: &[f64]) -> Vec<f64> {
        apply(&self.d_odd, even_values)
    }

    pub fn apply_d_even(&self, odd_values: &[f64]) -> Vec<f64> {
        apply(&self.d_even, odd_values)
    }
}

fn dense(rows: &[Vec<(usize, Q)>], m: usize, n: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row {
            out[(i, *j)] = to_f64(*v);
        }
    }
    out
}

fn apply(stencils: &[Stencil], u: &[f64]) -> Vec<f64> {
    stencils
        .iter()
        .map(|row| row.iter().map(|(j, c)| c * u[*j]).sum())
        .collect()
}

/// SAT penalty matrices for one face.
#[derive(Debug, Clone)]
pub struct SatPenalty {
    pub side: Side,
    pub alpha: f64,
    /// `r×r`, negative semidefinite.
    pub tau_odd: DMatrix<f64>,
    /// `s×r`
    pub tau_even: DMatrix<f64>,
    /// `max{‖τ^o‖₂, ‖L⁻¹ + (τ^o)ᵀ‖₂}`
    pub bound_constant: f64,
}

pub fn sat_penalties(
    l: &DMatrix<f64>,
    a_hat: &DMatrix<f64>,
    alpha: f64,
    side: Side,
) -> Result<SatPenalty> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::PenaltyOutOfRange(alpha));
    }
    let r = l.nrows();
    if r == 0 {
        return Ok(SatPenalty {
            side,
            alpha,
            tau_odd: DMatrix::zeros(0, 0),
            tau_even: DMatrix::zeros(a_hat.ncols(), 0),
            bound_constant: 0.0,
        });
    }
    let eig = SymmetricEigen::new(l.clone());
    if eig.eigenvalues.min() < 1e-10 {
        return Err(Error::NotPositiveDefinite(eig.eigenvalues.min()));
    }
    let l_inv = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v))
        * eig.eigenvectors.transpose();
    let l_inv = (&l_inv + l_inv.transpose()) * 0.5;
    let tau_odd = &l_inv * -alpha;
    let coupled = (a_hat + &tau_odd * l * a_hat).transpose();
    let tau_even = match side {
        Side::Low => -coupled,
        Side::High => coupled,
    };

    let l_half = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt))
        * eig.eigenvectors.transpose();
    let stab = &l_half * (-tau_odd.transpose()) * &l_half;
    let stab_max = SymmetricEigen::new((&stab + stab.transpose()) * 0.5)
        .eigenvalues
        .max();
    let tau_max = SymmetricEigen::new((&tau_odd + tau_odd.transpose()) * 0.5)
        .eigenvalues
        .max();
    if stab_max > 1.0 + 1e-10 || tau_max > 1e-12 {
        return Err(Error::PenaltyOutOfRange(alpha));
    }
    let norm = |m: DMatrix<f64>| m.singular_values().max();
    let bound_constant = norm(tau_odd.clone()).max(norm(&l_inv + tau_odd.transpose()));
    Ok(SatPenalty {
        side,
        alpha,
        tau_odd,
        tau_even,
        bound_constant,
    })
}

/// Parity families on a tensor grid. Bit `k` of a family index is set when
/// the family is odd along the `k`-th discretized axis.
#[derive(Debug, Clone)]
pub struct TensorGrid {
    pub axes: Vec<Axis>,
    pub sbp: Vec<SbpPair>,
}

impl TensorGrid {
    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn family_count(&self) -> usize {
        1 << self.dims()
    }

    pub fn is_odd(family: usize, k: usize) -> bool {
        family >> k & 1 == 1
    }

    /// `c_k(a)`: flips the parity along axis `k`.
    pub fn complement(family: usize, k: usize) -> usize {
        family ^ (1 << k)
    }

    pub fn with_parity(family: usize, k: usize, odd: bool) -> usize {
        if odd {
            family | 1 << k
        } else {
            family & !(1 << k)
        }
    }

    pub fn shape(&self, family: usize) -> Vec<usize> {
        (0..self.dims())
            .map(|k| self.sbp[k].grid.len(Self::is_odd(family, k)))
            .collect()
    }

    pub fn node_count(&self, family: usize) -> usize {
        self.shape(family).iter().product()
    }

    /// Row-major strides, last axis contiguous.
    pub fn strides(&self, family: usize) -> Vec<usize> {
        let shape = self.shape(family);
        let mut strides = vec![1; shape.len()];
        for k in (0..shape.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * shape[k + 1];
        }
        strides
    }

    pub fn multi_index(&self, family: usize, mut flat: usize) -> Vec<usize> {
        let shape = self.shape(family);
        let mut idx = vec![0; shape.len()];
        for k in (0..shape.len()).rev() {
            idx[k] = flat % shape[k];
            flat /= shape[k];
        }
        idx
    }

    pub fn position(&self, family: usize, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(k, &i)| self.sbp[k].grid.node(Self::is_odd(family, k), i))
            .collect()
    }

    /// Diagonal norm weights: Kronecker product of per-axis `P` factors.
    pub fn weights(&self, family: usize) -> Vec<f64> {
        let factors: Vec<Vec<f64>> = (0..self.dims())
            .map(|k| self.sbp[k].p(Self::is_odd(family, k)))
            .collect();
        (0..self.node_count(family))
            .map(|flat| {
                self.multi_index(family, flat)
                    .iter()
                    .enumerate()
                    .map(|(k, &i)| factors[k][i])
                    .product()
            })
            .collect()
    }

    /// Boundary weight `w_i` of a node on the face `k` of family grid `family`:
    /// the product of transverse `P` entries.
    pub fn transverse_weight(&self, family: usize, k: usize, idx: &[usize]) -> f64 {
        (0..self.dims())
            .filter(|&j| j != k)
            .map(|j| self.sbp[j].p(Self::is_odd(family, j))[idx[j]])
            .product()
    }

    /// `D_k` applied to a scalar field on family `c_k(a)`, giving values on family `a`.
    pub fn derivative(&self, family: usize, k: usize, field: &[f64]) -> Vec<f64> {
        let src = Self::complement(family, k);
        let src_strides = self.strides(src);
        let stencils = self.sbp[k].d(Self::is_odd(family, k));
        (0..self.node_count(family))
            .map(|flat| {
                let idx = self.multi_index(family, flat);
                let base: usize = idx
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != k)
                    .map(|(j, i)| i * src_strides[j])
                    .sum();
                stencils[idx[k]]
                    .iter()
                    .map(|(j, c)| c * field[base + j * src_strides[k]])
                    .sum()
            })
            .collect()
    }
}

pub fn tensorize(grids: &[(Axis, StaggeredGrid1d)]) -> Result<TensorGrid> {
    if grids.is_empty() || grids.len() > 3 {
        return Err(Error::InvalidInput(format!(
            "need 1 to 3 discretized axes, got {}",
            grids.len()
        )));
    }
    for (i, (a, _)) in grids.iter().enumerate() {
        if grids[..i].iter().any(|(b, _)| b == a) {
            return Err(Error::InvalidInput(format!(
                "axis {} listed twice",
                a.name()
            )));
        }
    }
    let sbp = grids
        .iter()
        .map(|(_, g)| build_sbp_pair(*g))
        .collect::<Result<Vec<_>>>()?;
    Ok(TensorGrid {
        axes: grids.iter().map(|(a, _)| *a).collect(),
        sbp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(n: usize) -> SbpPair {
        build_sbp_pair(StaggeredGrid1d::new(-1.0, 2.0, n).unwrap()).unwrap()
    }

    #[test]
    fn identity_is_exact() {
        for n in [4, 5, 8, 16, 64] {
            assert_eq!(pair(n).sbp_identity_defects(), 0);
        }
    }

    #[test]
    fn too_few_cells() {
        let g = StaggeredGrid1d::new(0.0, 1.0, 3).unwrap();
        assert!(matches!(build_sbp_pair(g), Err(Error::Closure(_))));
    }

    #[test]
    fn exact_on_linears() {
        let p = pair(10);
        let xe = p.grid.even_nodes();
        let xo = p.grid.odd_nodes();
        let d = p.apply_d_odd(&xe.iter().map(|x| 3.0 * x - 1.0).collect::<Vec<_>>());
        assert!(d.iter().all(|v| (v - 3.0).abs() < 1e-13));
        let d = p.apply_d_even(&xo.iter().map(|x| 2.0 - x).collect::<Vec<_>>());
        assert!(d.iter().all(|v| (v + 1.0).abs() < 1e-13));
        assert!(p
            .apply_d_odd(&vec![4.0; xe.len()])
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn norms_integrate_constants() {
        let p = pair(12);
        let len = p.grid.upper - p.grid.lower;
        assert!((p.p_odd().iter().sum::<f64>() - len).abs() < 1e-13);
        assert!((p.p_even().iter().sum::<f64>() - len).abs() < 1e-13);
        assert!(p.p_odd().iter().chain(p.p_even().iter()).all(|v| *v > 0.0));
    }

    #[test]
    fn interior_is_central() {
        let p = pair(9);
        let h = p.h();
        assert_eq!(p.d_odd()[4], vec![(4, -1.0 / h), (5, 1.0 / h)]);
        assert_eq!(p.d_even()[4], vec![(3, -1.0 / h), (4, 1.0 / h)]);
    }

    #[test]
    fn alpha_zero_and_one() {
        let l = DMatrix::from_element(1, 1, 1.5);
        let a = DMatrix::from_row_slice(1, 3, &[0.5, -0.25, 0.4]);
        let s = sat_penalties(&l, &a, 1.0, Side::High).unwrap();
        assert!((s.tau_odd[(0, 0)] + 2.0 / 3.0).abs() < 1e-15);
        assert!(s.tau_even.amax() < 1e-15);
        let s = sat_penalties(&l, &a, 0.0, Side::Low).unwrap();
        assert_eq!(s.tau_odd.amax(), 0.0);
        assert!((&s.tau_even + a.transpose()).amax() < 1e-15);
        let s = sat_penalties(&l, &a, 0.0, Side::High).unwrap();
        assert!((&s.tau_even - a.transpose()).amax() < 1e-15);
    }

    #[test]
    fn alpha_out_of_range() {
        let l = DMatrix::from_element(1, 1, 1.5);
        let a = DMatrix::from_element(1, 1, 1.0);
        let err = sat_penalties(&l, &a, 1.5, Side::Low).unwrap_err();
        assert!(err.to_string().contains("x'L(-tau)'Lx <= x'Lx"));
        assert!(sat_penalties(&l, &a, -0.1, Side::Low).is_err());
    }

    #[test]
    fn tensor_shapes() {
        let t = tensorize(&[
            (Axis::X, StaggeredGrid1d::new(0.0, 1.0, 4).unwrap()),
            (Axis::Z, StaggeredGrid1d::new(0.0, 2.0, 6).unwrap()),
        ])
        .unwrap();
        assert_eq!(t.family_count(), 4);
        assert_eq!(t.shape(0), vec![6, 8]);
        assert_eq!(t.shape(1), vec![5, 8]);
        assert_eq!(t.shape(3), vec![5, 7]);
        assert_eq!(t.strides(3), vec![7, 1]);
        assert_eq!(t.multi_index(3, 9), vec![1, 2]);
        let total: f64 = t.weights(2).iter().sum();
        assert!((total - 2.0).abs() < 1e-13);
    }

    #[test]
    fn duplicate_axis_rejected() {
        let g = StaggeredGrid1d::new(0.0, 1.0, 4).unwrap();
        assert!(tensorize(&[(Axis::X, g), (Axis::X, g)]).is_err());
    }
}
