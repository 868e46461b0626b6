use nalgebra::{DMatrix, SymmetricEigen};
use onsager_pn::pn::{
    recursion_check, scattering_diagonal, MomentBasis, PnSystem, ScatteringSpectrum,
};
use onsager_pn::sphharm::{
    build_quadrature, classify_parity, eval_sh, reflect, Axis, Direction, Restriction, ShIndex,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_direction(rng: &mut impl Rng) -> Direction {
    let mu: f64 = 2.0 * rng.random::<f64>() - 1.0;
    Direction::from_angles(mu, 2.0 * std::f64::consts::PI * rng.random::<f64>())
}

#[test]
fn gram_matrix_is_identity_up_to_13() {
    for n in [1, 4, 9, 13] {
        let basis = MomentBasis::new(n);
        let quad = basis.quadrature(Restriction::Full);
        let m = basis.dim();
        let mut gram = DMatrix::<f64>::zeros(m, m);
        for (omega, w) in quad.iter() {
            let y = basis.eval(*omega);
            for i in 0..m {
                for j in 0..m {
                    gram[(i, j)] += w * y[i] * y[j];
                }
            }
        }
        let err = (gram - DMatrix::identity(m, m)).amax();
        assert!(err < 1e-11, "N={n}: {err:e}");
    }
}

#[test]
fn reflection_parity_on_random_directions() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let omega = random_direction(&mut rng);
        for axis in Axis::ALL {
            let mirrored = reflect(omega, axis);
            for l in 0..=9 {
                for k in -(l as i64)..=l as i64 {
                    let idx = ShIndex::new(l, k).unwrap();
                    let sign = classify_parity(axis, idx).sign();
                    let a = eval_sh(idx, mirrored);
                    let b = sign * eval_sh(idx, omega);
                    assert!((a - b).abs() < 1e-13, "{axis:?} ({l},{k})");
                }
            }
        }
    }
}

#[test]
fn halves_add_up_to_the_sphere() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let basis = MomentBasis::new(6);
    let full = basis.quadrature(Restriction::Full);
    for axis in Axis::ALL {
        let up = basis.quadrature(Restriction::Half {
            axis,
            positive: true,
        });
        let down = basis.quadrature(Restriction::Half {
            axis,
            positive: false,
        });
        for _ in 0..20 {
            let a: Vec<f64> = (0..basis.dim())
                .map(|_| rng.random::<f64>() - 0.5)
                .collect();
            let b: Vec<f64> = (0..basis.dim())
                .map(|_| rng.random::<f64>() - 0.5)
                .collect();
            let inner = |q: &onsager_pn::sphharm::SphereQuadrature| {
                q.integrate(|o| {
                    let y = basis.eval(*o);
                    let fa: f64 = y.iter().zip(&a).map(|(u, v)| u * v).sum();
                    let fb: f64 = y.iter().zip(&b).map(|(u, v)| u * v).sum();
                    fa * fb
                })
            };
            let split = inner(&up) + inner(&down);
            assert!((split - inner(&full)).abs() < 1e-11);
        }
    }
}

#[test]
fn half_sphere_dipole_by_brute_force() {
    // ∫_{Ω_z>0} Y_1^0 Y_0^0 = √3/4 with a rule unrelated to the basis degree
    let quad = build_quadrature(
        40,
        Restriction::Half {
            axis: Axis::Z,
            positive: true,
        },
    )
    .unwrap();
    let y10 = ShIndex::new(1, 0).unwrap();
    let y00 = ShIndex::new(0, 0).unwrap();
    let v = quad.integrate(|o| eval_sh(y10, *o) * eval_sh(y00, *o));
    assert!((v - 3f64.sqrt() / 4.0).abs() < 1e-13);
}

#[test]
fn spectrum_is_symmetric_with_n_plus_one_zeros() {
    for n in 1..=9 {
        let sys = PnSystem::assemble(n).unwrap();
        for axis in Axis::ALL {
            let mut ev: Vec<f64> = SymmetricEigen::new(sys.transport(axis).clone())
                .eigenvalues
                .iter()
                .cloned()
                .collect();
            ev.sort_by(f64::total_cmp);
            let m = ev.len();
            for i in 0..m {
                assert!((ev[i] + ev[m - 1 - i]).abs() < 1e-10);
            }
            assert_eq!(ev.iter().filter(|v| v.abs() < 1e-10).count(), n + 1);
            assert!(ev[m - 1] <= 1.0);
            let sv = sys.a_hat(axis).singular_values();
            assert!(sv.min() > 1e-10);
        }
    }
}

#[test]
fn counting_per_axis() {
    for n in 0..=13 {
        let basis = MomentBasis::new(n);
        for axis in Axis::ALL {
            assert_eq!(basis.odd(axis).len(), n * (n + 1) / 2);
            assert_eq!(basis.even(axis).len(), (n + 1) * (n + 2) / 2);
        }
    }
}

#[test]
fn recursion_residuals_at_random_directions_and_poles() {
    let sys = PnSystem::assemble(5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let omega = random_direction(&mut rng);
        assert!(recursion_check(&sys, Axis::Z, omega) < 1e-12);
    }
    let pole = Direction::new([1.0, 0.0, 0.0]).unwrap();
    assert!(recursion_check(&sys, Axis::X, pole) < 1e-12);
    let trivial = PnSystem::assemble(0).unwrap();
    assert_eq!(trivial.a_hat(Axis::X).nrows(), 0);
}

#[test]
fn first_order_coupling_closed_form() {
    let sys = PnSystem::assemble(1).unwrap();
    let b = sys.basis();
    let a = sys.transport(Axis::Z)[(b.position(1, 0).unwrap(), b.position(0, 0).unwrap())];
    assert!((a - 1.0 / 3f64.sqrt()).abs() < 1e-14);
    for axis in Axis::ALL {
        let p = b.position(0, 0).unwrap();
        assert!(sys.transport(axis)[(p, p)].abs() < 1e-15);
    }
}

#[test]
fn scattering_entries() {
    let basis = MomentBasis::new(4);
    let iso = scattering_diagonal(&ScatteringSpectrum::isotropic(2.0), &basis).unwrap();
    assert!(iso[0].abs() < 1e-14);
    for p in 1..basis.dim() {
        assert!((iso[p] + 2.0).abs() < 1e-14);
    }
    let hg = scattering_diagonal(
        &ScatteringSpectrum::henyey_greenstein(1.0, 0.5, 1.0),
        &basis,
    )
    .unwrap();
    let p20 = basis.position(2, 0).unwrap();
    assert!((hg[p20] + 0.75).abs() < 1e-14);
}
