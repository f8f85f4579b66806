//! Complex geometrical optics: frequency data, remainder solves and decay sweeps, the
//! Carleman ratio and trace-inequality constants.

pub mod carleman;
pub mod params;
pub mod remainder;
pub mod traces;

pub use carleman::{carleman_ratio, carleman_sweep, CarlemanField, CarlemanReport, CarlemanSetup, CarlemanTerms, Jet2, Q_SMALL};
pub use params::{construct_xi, CgoParams};
pub use remainder::{
    assemble_remainder, boundary_layer, cgo_source, decay_sweep, fit_window, remainder_form, solve_remainder, BcMode, CgoSource, Remainder, RemainderNorms, SweepPoint, SweepReport,
};
pub use traces::{mu_grid, trace_inequality_ratio, trace_study, TraceMode, TraceNorms, TraceStudy};
