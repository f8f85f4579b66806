//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use degenlab_core::discretization::{assemble, Mesh, MeshSpec, Potentials, ScalarField, SystemAssembly, WeightSpec};

pub fn mesh(cells: &[usize]) -> Arc<Mesh> {
    let lengths = vec![1.0; cells.len()];
    Arc::new(MeshSpec::new(&lengths, cells, 0.7).build().expect("valid mesh"))
}

pub fn potentials() -> Potentials {
    Potentials::new(ScalarField::gaussian(2.0, &[0.5, 0.5, 0.5], 0.2), ScalarField::constant(0.5))
}

pub fn system(cells: &[usize], s: f64) -> SystemAssembly {
    assemble(&mesh(cells), &WeightSpec::vertical(s).expect("valid s"), &potentials(), 0.0).expect("assembles")
}
