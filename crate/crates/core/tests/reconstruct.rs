//! Phase-only samples and their inversion.

use degenlab_core::discretization::{Potentials, ScalarField};
use degenlab_core::reconstruct::{phase_only_at, phase_only_samples, recover_v_fixed_q, round_trip_residual, FrequencyGrid, Geometry};
use degenlab_core::Complex64 as C;
use proptest::prelude::*;

fn bump(c: [f64; 2], sigma: f64) -> Potentials {
    Potentials::new(ScalarField::gaussian(1.0, &c, sigma), ScalarField::constant(0.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Real differences give `T(−k) = conj T(k)`.
    #[test]
    fn samples_are_hermitian(cx in -0.3f64..0.3, cy in 0.3f64..0.7, s in prop::sample::select(vec![0.5, 0.75])) {
        let geom = Geometry::new(&[-0.5, 0.0], &[1.0, 1.0]).unwrap();
        let p1 = bump([cx, cy], 0.12);
        let grid = FrequencyGrid::new(&geom, s, 30.0, 16).unwrap();
        let t = phase_only_samples(&geom, s, &p1, &Potentials::zero(), &grid).unwrap();
        prop_assert!(t.hermitian_defect() <= 1e-12 * t.max_abs());
    }

    /// The map is linear in the potential difference.
    #[test]
    fn samples_are_linear(a in -2.0f64..2.0, kx in -20.0f64..20.0, ky in -20.0f64..20.0) {
        let geom = Geometry::new(&[-0.5, 0.0], &[1.0, 1.0]).unwrap();
        let p = bump([0.1, 0.5], 0.15);
        let scaled = Potentials::new(ScalarField::gaussian(a, &[0.1, 0.5], 0.15), ScalarField::constant(0.0));
        let k = [[kx, ky, 0.0]];
        let t1 = phase_only_at(&geom, 0.75, &p, &Potentials::zero(), &k).unwrap()[0];
        let ta = phase_only_at(&geom, 0.75, &scaled, &Potentials::zero(), &k).unwrap()[0];
        prop_assert!((ta - t1 * C::new(a, 0.0)).norm() <= 1e-12 * t1.norm().max(1e-300) * a.abs().max(1.0));
    }
}

/// At `s = 1/2` the zero frequency is the plain integral of δV.
#[test]
fn zero_frequency_is_the_mass() {
    let geom = Geometry::new(&[-0.5, 0.0], &[1.0, 1.0]).unwrap();
    let p = Potentials::new(ScalarField::constant(2.0), ScalarField::constant(0.0));
    let t = phase_only_at(&geom, 0.5, &p, &Potentials::zero(), &[[0.0; 3]]).unwrap()[0];
    assert!((t - C::new(2.0, 0.0)).norm() < 1e-13);
}

#[test]
fn inversion_reproduces_its_samples() {
    let geom = Geometry::new(&[-0.5, 0.0], &[1.0, 1.0]).unwrap();
    let p = bump([0.0, 0.5], 0.1);
    // Natural spacing 2π/L: the box transform is then an exact inverse.
    let grid = FrequencyGrid::new(&geom, 0.5, 0.0, 16).unwrap();
    let t = phase_only_samples(&geom, 0.5, &p, &Potentials::zero(), &grid).unwrap();
    let rec = recover_v_fixed_q(&t, 32).unwrap();
    assert!(round_trip_residual(&t, &rec) < 1e-10);
    assert!(rec.imag_residue < 1e-8);
}
