//! Marshak and Onsager boundary matrices for axis-aligned faces, the
//! boundary source from an inflow distribution, and the characteristic
//! structure of the boundary-normal transport matrix.

use std::f64::consts::SQRT_2;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::pn::{MomentBasis, PnSystem};
use crate::sphharm::{Axis, Direction, Restriction, SphereQuadrature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Low,
    High,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Low => -1.0,
            Side::High => 1.0,
        }
    }
}

/// Axis-aligned boundary face with outward normal `∓e_axis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Face {
    pub axis: Axis,
    pub side: Side,
}

impl Face {
    pub fn new(axis: Axis, side: Side) -> Self {
        Face { axis, side }
    }

    pub fn normal(&self) -> [f64; 3] {
        let mut n = [0.0; 3];
        n[self.axis.index()] = self.side.sign();
        n
    }

    /// `Ω·n`
    pub fn normal_component(&self, omega: &Direction) -> f64 {
        self.side.sign() * omega.component(self.axis)
    }

    /// Half-sphere of outgoing directions `Ω·n > 0`.
    pub fn outgoing(&self) -> Restriction {
        Restriction::Half {
            axis: self.axis,
            positive: self.side == Side::High,
        }
    }

    /// Half-sphere of incoming directions `Ω·n < 0`.
    pub fn incoming(&self) -> Restriction {
        Restriction::Half {
            axis: self.axis,
            positive: self.side == Side::Low,
        }
    }

    /// Short label such as `x-` or `z+`.
    pub fn label(&self) -> String {
        let s = match self.side {
            Side::Low => '-',
            Side::High => '+',
        };
        format!("{}{}", self.axis.name(), s)
    }

    pub fn parse(label: &str) -> Result<Face> {
        let mut chars = label.chars();
        let axis = match chars.next() {
            Some('x') => Axis::X,
            Some('y') => Axis::Y,
            Some('z') => Axis::Z,
            _ => return Err(Error::Config(format!("unknown face '{label}'"))),
        };
        let side = match chars.next() {
            Some('-') => Side::Low,
            Some('+') => Side::High,
            _ => return Err(Error::Config(format!("unknown face '{label}'"))),
        };
        if chars.next().is_some() {
            return Err(Error::Config(format!("unknown face '{label}'")));
        }
        Ok(Face { axis, side })
    }
}

/// Full Marshak coupling `M̃ = 2⟨Y^o, (Y^e)ᵀ⟩_{n+}`.
#[derive(Debug, Clone)]
pub struct MarshakMatrix {
    pub face: Face,
    pub matrix: DMatrix<f64>,
}

fn require_restriction(quad: &SphereQuadrature, want: Restriction, what: &str) -> Result<()> {
    if quad.restriction() != want {
        return Err(Error::InvalidInput(format!(
            "{what} needs a quadrature on {want:?}, got {:?}",
            quad.restriction()
        )));
    }
    Ok(())
}

/// Accumulates `Σ_q w_q f(Ω_q) a(Ω_q) b(Ω_q)ᵀ` over the given position lists.
fn half_moment_matrix(
    basis: &MomentBasis,
    quad: &SphereQuadrature,
    rows: &[usize],
    cols: &[usize],
    weight: impl Fn(&Direction) -> f64,
) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), cols.len());
    for (omega, w) in quad.iter() {
        let y = basis.eval(*omega);
        let f = w * weight(omega);
        for (i, &r) in rows.iter().enumerate() {
            let a = f * y[r];
            for (j, &c) in cols.iter().enumerate() {
                out[(i, j)] += a * y[c];
            }
        }
    }
    out
}

pub fn marshak_matrix(
    basis: &MomentBasis,
    face: Face,
    quad: &SphereQuadrature,
) -> Result<MarshakMatrix> {
    require_restriction(quad, face.outgoing(), "Marshak matrix")?;
    let matrix = half_moment_matrix(
        basis,
        quad,
        basis.odd(face.axis),
        basis.even(face.axis),
        |_| 2.0,
    );
    Ok(MarshakMatrix { face, matrix })
}

/// `L = 2∫_{Ω·n>0} (Ω·n)⁻¹ Y^o (Y^o)ᵀ dΩ`; symmetric positive definite.
pub fn onsager_l(basis: &MomentBasis, face: Face, quad: &SphereQuadrature) -> Result<DMatrix<f64>> {
    require_restriction(quad, face.outgoing(), "Onsager L")?;
    let odd = basis.odd(face.axis);
    let mut l = half_moment_matrix(basis, quad, odd, odd, |omega| {
        2.0 / face.normal_component(omega)
    });
    l = (&l + l.transpose()) * 0.5;
    if l.nrows() > 0 {
        let smallest = SymmetricEigen::new(l.clone()).eigenvalues.min();
        if smallest < 1e-10 {
            return Err(Error::NotPositiveDefinite(smallest));
        }
    }
    Ok(l)
}

/// Onsager boundary condition `u^o = M u^e + g` with `M = ±LÂ`.
#[derive(Debug, Clone)]
pub struct OnsagerBoundary {
    pub face: Face,
    /// Symmetric positive definite, `r×r`.
    pub l: DMatrix<f64>,
    /// Unsigned `Â^(axis)`, `r×s`.
    pub a_hat: DMatrix<f64>,
    /// `+LÂ` on high faces and `−LÂ` on low faces.
    pub m: DMatrix<f64>,
}

impl OnsagerBoundary {
    /// `Â^(n) = ±Â`, the flux block relative to the outward normal.
    pub fn a_hat_normal(&self) -> DMatrix<f64> {
        &self.a_hat * self.face.side.sign()
    }

    /// `‖L⁻¹‖₂`
    pub fn l_inverse_norm(&self) -> f64 {
        if self.l.nrows() == 0 {
            return 0.0;
        }
        1.0 / SymmetricEigen::new(self.l.clone()).eigenvalues.min()
    }

    /// `u^o − (M u^e + g)`
    pub fn residual(
        &self,
        u_odd: &DVector<f64>,
        u_even: &DVector<f64>,
        g: &DVector<f64>,
    ) -> DVector<f64> {
        u_odd - (&self.m * u_even + g)
    }
}

pub fn onsager_bc(system: &PnSystem, face: Face) -> Result<OnsagerBoundary> {
    let basis = system.basis();
    let quad = basis.quadrature(face.outgoing());
    let l = onsager_l(basis, face, &quad)?;
    let a_hat = system.a_hat(face.axis).clone();
    let m = &l * &a_hat * face.side.sign();
    Ok(OnsagerBoundary { face, l, a_hat, m })
}

/// `g = 2⟨ψ_in, Y^o⟩_{n−}` over the incoming half-sphere.
pub fn boundary_source(
    basis: &MomentBasis,
    face: Face,
    psi_in: impl Fn(&Direction) -> f64,
    quad: &SphereQuadrature,
) -> Result<DVector<f64>> {
    require_restriction(quad, face.incoming(), "boundary source")?;
    let odd = basis.odd(face.axis);
    let mut g = DVector::zeros(odd.len());
    for (omega, w) in quad.iter() {
        let psi = psi_in(omega);
        if psi == 0.0 {
            continue;
        }
        let y = basis.eval(*omega);
        for (i, &r) in odd.iter().enumerate() {
            g[i] += 2.0 * w * psi * y[r];
        }
    }
    Ok(g)
}

/// Orthogonal eigendecomposition of an Onsager-compatible matrix built from `Â`.
#[derive(Debug, Clone)]
pub struct Eigenstructure {
    /// Positive singular values of `Â`, descending.
    pub lambda_p: DVector<f64>,
    /// `r×r` orthogonal.
    pub x_hat: DMatrix<f64>,
    /// `s×r` with orthonormal columns.
    pub x_tilde: DMatrix<f64>,
    /// `s×(s−r)` orthonormal basis of `ker Â`.
    pub x_kernel: DMatrix<f64>,
}

impl Eigenstructure {
    pub fn incoming_count(&self) -> usize {
        self.lambda_p.len()
    }

    pub fn kernel_dim(&self) -> usize {
        self.x_kernel.ncols()
    }

    /// Eigenvector matrix `X` with column blocks ordered (outgoing, standing, incoming).
    pub fn x(&self) -> DMatrix<f64> {
        let r = self.x_hat.nrows();
        let s = self.x_tilde.nrows();
        let k = self.x_kernel.ncols();
        let mut x = DMatrix::zeros(r + s, r + s);
        let c = 1.0 / SQRT_2;
        x.view_mut((0, 0), (r, r)).copy_from(&(&self.x_hat * c));
        x.view_mut((0, r + k), (r, r)).copy_from(&(&self.x_hat * c));
        x.view_mut((r, 0), (s, r)).copy_from(&(&self.x_tilde * c));
        x.view_mut((r, r), (s, k)).copy_from(&self.x_kernel);
        x.view_mut((r, r + k), (s, r))
            .copy_from(&(&self.x_tilde * -c));
        x
    }

    /// Diagonal of `Λ = diag(Λ_p, 0, −Λ_p)`.
    pub fn lambda(&self) -> DVector<f64> {
        let r = self.lambda_p.len();
        let k = self.x_kernel.ncols();
        DVector::from_fn(2 * r + k, |i, _| {
            if i < r {
                self.lambda_p[i]
            } else if i < r + k {
                0.0
            } else {
                -self.lambda_p[i - r - k]
            }
        })
    }

    /// Outgoing and incoming characteristic variables `(w₊, w₋)`.
    pub fn characteristic_variables(
        &self,
        u_odd: &DVector<f64>,
        u_even: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let a = self.x_hat.transpose() * u_odd;
        let b = self.x_tilde.transpose() * u_even;
        ((&a + &b) / SQRT_2, (&a - &b) / SQRT_2)
    }
}

/// Builds the eigenstructure from the singular triplets of `Â`.
pub fn eigenstructure(a_hat: &DMatrix<f64>) -> Result<Eigenstructure> {
    let (r, s) = a_hat.shape();
    if r > s {
        return Err(Error::InvalidInput(format!(
            "flux block must have at most as many rows as columns, got {r}x{s}"
        )));
    }
    if r == 0 {
        return Ok(Eigenstructure {
            lambda_p: DVector::zeros(0),
            x_hat: DMatrix::zeros(0, 0),
            x_tilde: DMatrix::zeros(s, 0),
            x_kernel: DMatrix::identity(s, s),
        });
    }
    // left singular vectors from the symmetric problem ÂÂᵀ = X̂Λ_p²X̂ᵀ
    let gram = a_hat * a_hat.transpose();
    let sym = SymmetricEigen::new((&gram + gram.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| sym.eigenvalues[j].total_cmp(&sym.eigenvalues[i]));
    let lambda_p =
        DVector::from_iterator(r, order.iter().map(|&i| sym.eigenvalues[i].max(0.0).sqrt()));
    let smallest = lambda_p[r - 1];
    if smallest <= 1e-10 {
        return Err(Error::RankDeficient { smallest });
    }
    let x_hat = DMatrix::from_fn(r, r, |i, j| sym.eigenvectors[(i, order[j])]);
    let x_tilde = a_hat.transpose() * &x_hat * DMatrix::from_diagonal(&lambda_p.map(|v| 1.0 / v));
    let projector = DMatrix::identity(s, s) - &x_tilde * x_tilde.transpose();
    let eig = SymmetricEigen::new(projector);
    let kernel_cols: Vec<usize> = (0..s).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    if kernel_cols.len() != s - r {
        return Err(Error::Assembly(format!(
            "kernel completion found {} vectors, expected {}",
            kernel_cols.len(),
            s - r
        )));
    }
    let x_kernel = DMatrix::from_fn(s, s - r, |i, j| eig.eigenvectors[(i, kernel_cols[j])]);
    Ok(Eigenstructure {
        lambda_p,
        x_hat,
        x_tilde,
        x_kernel,
    })
}

/// `(L X̂ Λ_p + X̂) w₋ = (L X̂ Λ_p − X̂) w₊ + √2 g`
#[derive(Debug, Clone)]
pub struct CharacteristicForm {
    pub coef_in: DMatrix<f64>,
    pub coef_out: DMatrix<f64>,
    pub src_scale: f64,
    /// Condition number of `X̂ᵀ L X̂ + Λ_p⁻¹`.
    pub condition: f64,
}

impl CharacteristicForm {
    /// Incoming waves determined by the outgoing ones and the source.
    pub fn incoming(&self, w_out: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
        let rhs = &self.coef_out * w_out + g * self.src_scale;
        self.coef_in
            .clone()
            .lu()
            .solve(&rhs)
            .expect("coefficient matrix is invertible")
    }

    pub fn residual(
        &self,
        w_out: &DVector<f64>,
        w_in: &DVector<f64>,
        g: &DVector<f64>,
    ) -> DVector<f64> {
        &self.coef_in * w_in - &self.coef_out * w_out - g * self.src_scale
    }
}

/// `eig` must be the eigenstructure of the face-normal block `bc.a_hat_normal()`.
pub fn characteristic_form(
    bc: &OnsagerBoundary,
    eig: &Eigenstructure,
) -> Result<CharacteristicForm> {
    let lx = &bc.l * &eig.x_hat;
    let scaled = DMatrix::from_fn(lx.nrows(), lx.ncols(), |i, j| lx[(i, j)] * eig.lambda_p[j]);
    let coef_in = &scaled + &eig.x_hat;
    let coef_out = &scaled - &eig.x_hat;
    let r = eig.lambda_p.len();
    let mut inner = eig.x_hat.transpose() * &lx;
    for i in 0..r {
        inner[(i, i)] += 1.0 / eig.lambda_p[i];
    }
    let condition = if r == 0 {
        1.0
    } else {
        let ev = SymmetricEigen::new((&inner + inner.transpose()) * 0.5).eigenvalues;
        let (lo, hi) = (ev.min(), ev.max());
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    };
    if condition > 1e12 {
        return Err(Error::IllConditioned(condition));
    }
    Ok(CharacteristicForm {
        coef_in,
        coef_out,
        src_scale: SQRT_2,
        condition,
    })
}
