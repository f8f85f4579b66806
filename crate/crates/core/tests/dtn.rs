//! DtN matrices: symmetry, container round trip, cache.

use std::sync::Arc;

use degenlab_core::discretization::{assemble, MeshSpec, Potentials, ScalarField, WeightSpec};
use degenlab_core::dtn::{compute_dtn, symmetry_defect, DtNMatrix, DtnCache};
use degenlab_core::io::{decode_container, encode_container, read_container, write_container, Kind};
use degenlab_core::Error;
use proptest::prelude::*;

fn small(s: f64, v: f64) -> DtNMatrix {
    let mesh = Arc::new(MeshSpec::new(&[1.0, 1.0], &[6, 6], 0.7).build().unwrap());
    let pots = Potentials::new(ScalarField::gaussian(v, &[0.5, 0.5], 0.2), ScalarField::constant(0.3));
    let asm = assemble(&mesh, &WeightSpec::vertical(s).unwrap(), &pots, 0.0).unwrap();
    compute_dtn(&asm).unwrap()
}

#[test]
fn real_potentials_give_a_hermitian_map() {
    for s in [0.3, 0.5, 0.75] {
        let m = small(s, 2.0);
        assert!(symmetry_defect(&m) < 1e-12, "s={s}");
        // Constants are not annihilated once q ≠ 0 but the quadratic form stays positive here.
        let one = vec![degenlab_core::Complex64::new(1.0, 0.0); m.dim()];
        assert!(m.pairing(&one, &one).re > 0.0);
    }
}

#[test]
fn container_round_trip_and_kind_check() {
    let m = small(0.5, 1.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    write_container(&path, Kind::DtN, &m.encode()).unwrap();
    let back = DtNMatrix::decode(&read_container(&path, Kind::DtN).unwrap()).unwrap();
    assert_eq!(back, m);
    let bytes = std::fs::read(&path).unwrap();
    assert!(matches!(decode_container(&bytes[..5], Kind::DtN), Err(Error::Format(_))));
}

#[test]
fn cache_returns_the_stored_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let cache = DtnCache::new(dir.path());
    let m = small(0.75, 1.0);
    let (a, hit) = cache.get_or_compute("k", || Ok(m.clone())).unwrap();
    assert!(!hit);
    let (b, hit) = cache.get_or_compute("k", || panic!("must not recompute")).unwrap();
    assert!(hit);
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Corrupted payloads are rejected, never panicking.
    #[test]
    fn truncated_payloads_are_rejected(cut in 0usize..600) {
        let m = small(0.5, 0.5);
        let bytes = encode_container(Kind::DtN, &m.encode());
        let cut = cut.min(bytes.len() - 1);
        let r = decode_container(&bytes[..cut], Kind::DtN).and_then(DtNMatrix::decode);
        prop_assert!(r.is_err());
    }
}
