//! Evolution of Riemannian initial data `(g, W, U, u)` into Lorentzian
//! metrics with a parallel null vector, plus the diagnostics that verify the
//! result: slice constraints, spacetime curvature identities and parallel
//! spinor transport in dimension `2+1`.
//!
//! Fields live on uniform [`Chart`]s and are differentiated with fourth-order
//! central differences (one-sided near open boundaries).

// Negated comparisons double as NaN checks.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod chart;
pub mod constraints;
pub mod dump;
pub mod error;
pub mod evolution;
pub mod expr;
pub mod fields;
pub mod geometry;
pub mod initial_data;
pub mod linalg;
pub mod report;
pub mod spacetime;
pub mod spin;

pub use chart::{build_chart, Boundary, Chart, ChartSpec, GridFunction, Mask};
pub use error::{Error, Result};
pub use evolution::{evolve, Evolution, EvolutionState, MonitorRecord, MonitorTrace, SystemKind};
pub use expr::{parse_expression, Expr};
pub use fields::{LapseField, Symmetry, TensorField, Valence};
pub use geometry::GeometryCache;
pub use initial_data::{InitialData, Provenance, TorusField};
pub use report::{ConvergenceTable, ResidualEntry, ResidualReport};
pub use spacetime::{BlockAnalysis, SpacetimeBlock};
pub use spin::SpinorField;
