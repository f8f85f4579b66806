//! Graded box meshes, weight-exact quadrature and assembly of the weighted forms.

pub mod assembly;
pub mod cellquad;
pub mod fields;
pub mod mesh;
pub mod norms;
pub mod weight;

pub use cellquad::weighted_centroids;
pub use assembly::{assemble, assemble_cells, assemble_facets, CellCoefficients, SystemAssembly};
pub use fields::{CompiledScalar, Potentials, ScalarField, VectorField};
pub use mesh::{build_graded_box, BoundaryTag, DofPartition, Facet, Mesh, MeshSpec, Point, TagRule};
pub use norms::{error_norms, eval_field, extend_trace, weighted_norms, NormOperators, WeightedNorms};
pub use weight::{WeightMode, WeightSpec};
pub use crate::quadrature::weighted_cell_moment;
