//! Schur-complement domain decomposition for 2D time-harmonic acoustic
//! scattering by clouds of sound-soft obstacles.
//!
//! The pipeline builds one Robin-to-Robin map per box of a rectangular grid
//! from Nyström-discretized boundary integral equations, merges the maps
//! hierarchically by eliminating interface Robin data, couples the merged
//! interior map to an exterior map on the outer boundary, and recovers
//! scatterer densities, near fields and far fields.

pub mod bio;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod merge;
pub mod oracle;
pub mod rtr;
pub mod solve;
pub mod specfun;

pub use error::{Error, Result};
pub use geometry::{generate_cloud, BoxGrid, MeshedBoundary, Point, Rect, Scatterer, ScattererShape, Side, Topology};
pub use linalg::{CMat, DenseLu};
pub use merge::{hierarchical_merge, BackSubRecord, MergeTree};
pub use oracle::{compare_far_fields, global_bie_solve, mie_far_field, FarFieldSamples};
pub use rtr::{BoundaryPartition, BoxBoundary, Coupling, RtrMap, SegmentId, TraceMap};
pub use solve::{rcs_db, ConditionBounds, DdSolver, Discretization, IncidentField, SolveOutput};
pub use specfun::Wavenumber;

pub use num_complex::Complex64;
