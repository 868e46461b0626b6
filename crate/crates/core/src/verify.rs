//! Self-checks of the assembled operators, runnable on corrupted data.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::Result;
use crate::onsager::{eigenstructure, marshak_matrix, onsager_bc, Face, Side};
use crate::pn::{recursion_check, MomentBasis, PnSystem};
use crate::sbp::{build_sbp_pair, sat_penalties, StaggeredGrid1d};
use crate::sphharm::{Axis, Direction};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Check {
            name: name.to_string(),
            pass,
            detail,
        }
    }
}

/// Deliberate corruption applied to every assembled system before checking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tamper {
    /// Adds `delta` to the `(Y_1^1, Y_0^0)` entry of `A^(x)`.
    Transport(f64),
    None,
}

fn system(order: usize, tamper: Tamper) -> Result<PnSystem> {
    let mut sys = PnSystem::assemble(order)?;
    if let Tamper::Transport(delta) = tamper {
        let b = sys.basis().clone();
        sys.perturb_entry(Axis::X, b.position(1, 1)?, b.position(0, 0)?, delta);
    }
    Ok(sys)
}

/// Row `Y_1^1` and columns `Y_0^0, Y_2^0, Y_2^2` of an odd×even block for the x axis.
pub fn test2_row(basis: &MomentBasis, mat: &DMatrix<f64>) -> Result<[f64; 3]> {
    let odd = basis.odd(Axis::X);
    let even = basis.even(Axis::X);
    let p11 = basis.position(1, 1)?;
    let row = odd
        .iter()
        .position(|&p| p == p11)
        .expect("Y_1^1 is odd in x");
    let mut out = [0.0; 3];
    for (o, (l, k)) in out.iter_mut().zip([(0, 0), (2, 0), (2, 2)]) {
        let p = basis.position(l, k)?;
        let col = even.iter().position(|&q| q == p).expect("even in x");
        *o = mat[(row, col)];
    }
    Ok(out)
}

/// Agreement to four printed decimals; printed values are truncated, not rounded.
pub fn agrees_to_4_decimals(got: &[f64], want: &[f64]) -> bool {
    got.iter()
        .zip(want)
        .all(|(g, w)| (g * 1e4).trunc() == (w * 1e4).round())
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("({})", parts.join(", "))
}

pub fn golden_matrices(tamper: Tamper) -> Result<Vec<Check>> {
    let sys = system(2, tamper)?;
    let basis = sys.basis();
    let face = Face::new(Axis::X, Side::High);
    let a = test2_row(basis, sys.a_hat(Axis::X))?;
    let m = marshak_matrix(basis, face, &basis.quadrature(face.outgoing()))?;
    let mt = test2_row(basis, &m.matrix)?;
    let product = mt[0] + 2.5 * mt[1] - mt[2];
    Ok(vec![
        Check::new(
            "golden A-hat row",
            agrees_to_4_decimals(&a, &[0.5773, -0.2581, 0.4472]),
            fmt(&a),
        ),
        Check::new(
            "golden Marshak row",
            agrees_to_4_decimals(&mt, &[0.8660, -0.2420, 0.4192]),
            fmt(&mt),
        ),
        Check::new(
            "Marshak applied to Test-2 data",
            agrees_to_4_decimals(&[product], &[-0.1583]),
            format!("{product:.6}"),
        ),
    ])
}

pub fn first_order_closed_forms(tamper: Tamper) -> Result<Vec<Check>> {
    let sys = system(1, tamper)?;
    let face = Face::new(Axis::Z, Side::High);
    let bc = onsager_bc(&sys, face)?;
    let m = marshak_matrix(sys.basis(), face, &sys.basis().quadrature(face.outgoing()))?;
    let l = bc.l[(0, 0)];
    let mk = m.matrix[(0, 0)];
    Ok(vec![
        Check::new("P1 L = 3/2", (l - 1.5).abs() < 1e-12, format!("{l:.15}")),
        Check::new(
            "P1 Marshak = sqrt(3)/2",
            (mk - 3f64.sqrt() / 2.0).abs() < 1e-12,
            format!("{mk:.15}"),
        ),
    ])
}

/// `max |M̃ − LÂ|` over columns of even degree below `N`.
pub fn truncation_defect(sys: &PnSystem, axis: Axis) -> Result<f64> {
    let basis = sys.basis();
    let face = Face::new(axis, Side::High);
    let bc = onsager_bc(sys, face)?;
    let m = marshak_matrix(basis, face, &basis.quadrature(face.outgoing()))?;
    let mut worst = 0.0f64;
    for (j, &p) in basis.even(axis).iter().enumerate() {
        if basis.index(p).l() >= basis.order() {
            continue;
        }
        for i in 0..bc.m.nrows() {
            worst = worst.max((m.matrix[(i, j)] - bc.m[(i, j)]).abs());
        }
    }
    Ok(worst)
}

pub fn truncation_locality(tamper: Tamper) -> Result<Vec<Check>> {
    let mut worst = 0.0f64;
    for n in 1..=7 {
        let sys = system(n, tamper)?;
        for axis in Axis::ALL {
            worst = worst.max(truncation_defect(&sys, axis)?);
        }
    }
    Ok(vec![Check::new(
        "truncation locality N<=7",
        worst < 1e-11,
        format!("{worst:.2e}"),
    )])
}

pub fn eigen_checks(tamper: Tamper) -> Result<Vec<Check>> {
    let mut recon = 0.0f64;
    let mut symmetric = true;
    let mut counts = true;
    for n in 1..=9 {
        let sys = system(n, tamper)?;
        for axis in Axis::ALL {
            let eig = eigenstructure(sys.a_hat(axis))?;
            let x = eig.x();
            let lam = eig.lambda();
            let a = sys.permuted(axis);
            recon = recon.max((&x * DMatrix::from_diagonal(&lam) * x.transpose() - a).amax());
            let mut sorted: Vec<f64> = lam.iter().cloned().collect();
            sorted.sort_by(f64::total_cmp);
            let k = sorted.len();
            symmetric &= (0..k).all(|i| (sorted[i] + sorted[k - 1 - i]).abs() < 1e-10);
            counts &= eig.kernel_dim() == n + 1 && eig.incoming_count() == n * (n + 1) / 2;
        }
    }
    Ok(vec![
        Check::new(
            "eigen reconstruction N<=9",
            recon < 1e-10,
            format!("{recon:.2e}"),
        ),
        Check::new("symmetric spectrum", symmetric, String::new()),
        Check::new("kernel N+1, incoming N(N+1)/2", counts, String::new()),
    ])
}

pub fn recursion_checks(tamper: Tamper) -> Result<Vec<Check>> {
    let sys = system(6, tamper)?;
    let omega = Direction::normalized([0.3, -0.5, 0.81]);
    let worst = Axis::ALL
        .iter()
        .map(|&a| recursion_check(&sys, a, omega))
        .fold(0.0, f64::max);
    let purity = sys.block_impurity();
    Ok(vec![
        Check::new(
            "three-term recursion",
            worst < 1e-12,
            format!("{worst:.2e}"),
        ),
        Check::new(
            "parity block purity",
            purity < 1e-13,
            format!("{purity:.2e}"),
        ),
    ])
}

pub fn sbp_checks() -> Result<Vec<Check>> {
    let mut defects = 0;
    let mut exact = 0.0f64;
    for cells in [8, 16, 64] {
        let pair = build_sbp_pair(StaggeredGrid1d::new(-0.3, 1.1, cells)?)?;
        defects += pair.sbp_identity_defects();
        let g = pair.grid;
        for odd_out in [true, false] {
            let src = if odd_out {
                g.even_nodes()
            } else {
                g.odd_nodes()
            };
            // constant 2 has derivative 0, the identity has derivative 1
            for (slope, offset) in [(0.0, 2.0), (1.0, 0.0)] {
                let vals: Vec<f64> = src.iter().map(|x| slope * x + offset).collect();
                let d = if odd_out {
                    pair.apply_d_odd(&vals)
                } else {
                    pair.apply_d_even(&vals)
                };
                exact = exact.max(d.iter().map(|v| (v - slope).abs()).fold(0.0, f64::max));
            }
        }
    }
    Ok(vec![
        Check::new(
            "SBP identity exact",
            defects == 0,
            format!("{defects} defects"),
        ),
        Check::new(
            "derivative exact on linears",
            exact < 1e-12,
            format!("{exact:.2e}"),
        ),
    ])
}

pub fn penalty_checks(tamper: Tamper) -> Result<Vec<Check>> {
    let sys = system(5, tamper)?;
    let mut ok = true;
    let mut detail = String::new();
    for axis in Axis::ALL {
        for side in [Side::Low, Side::High] {
            let bc = onsager_bc(&sys, Face::new(axis, side))?;
            for alpha in [0.0, 0.5, 1.0] {
                if let Err(e) = sat_penalties(&bc.l, &bc.a_hat, alpha, side) {
                    ok = false;
                    detail = e.to_string();
                }
            }
        }
    }
    let bc = onsager_bc(&sys, Face::new(Axis::X, Side::High))?;
    let rejects = sat_penalties(&bc.l, &bc.a_hat, 1.5, Side::High).is_err();
    Ok(vec![
        Check::new("admissible penalties", ok, detail),
        Check::new("out-of-range penalty rejected", rejects, String::new()),
    ])
}

/// Runs every suite; assembly failures become failed checks.
pub fn run_all(tamper: Tamper) -> Vec<Check> {
    let suites: Vec<(&str, Result<Vec<Check>>)> = vec![
        ("golden matrices", golden_matrices(tamper)),
        ("closed forms", first_order_closed_forms(tamper)),
        ("truncation locality", truncation_locality(tamper)),
        ("eigenstructure", eigen_checks(tamper)),
        ("recursion", recursion_checks(tamper)),
        ("sbp", sbp_checks()),
        ("penalties", penalty_checks(tamper)),
    ];
    let mut out = Vec::new();
    for (name, res) in suites {
        match res {
            Ok(checks) => out.extend(checks),
            Err(e) => out.push(Check::new(name, false, e.to_string())),
        }
    }
    out
}
