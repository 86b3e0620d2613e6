//! Full model: the extracellular field on a masked Cartesian grid coupled to
//! the cells through point sources.

pub mod grid;
pub mod sim;
pub mod snapshot;
pub mod solver;

pub use grid::{build_grid, deposit_and_sample, FieldGrid, SourceStencil};
pub use sim::{simulate_full, FullModel, FullRun, FullSettings, MassAudit};
pub use snapshot::Snapshot;
pub use solver::{PcgSolver, SolveStats};
