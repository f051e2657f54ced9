//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use pnvflow_core::initial_data::gen_conformal_torus;
use pnvflow_core::{
    build_chart, parse_expression, Chart, ChartSpec, InitialData, LapseField, TorusField,
};

pub fn torus_chart(n: usize) -> Arc<Chart> {
    build_chart(ChartSpec::periodic_cube(2, n)).expect("periodic cube")
}

/// Conformally flat torus data with a Killing-compatible seed, the heaviest
/// bundled generator.
pub fn torus_data(n: usize) -> InitialData {
    let sigma = parse_expression("0.2*cos(x1)*cos(x2)").expect("expression");
    gen_conformal_torus(
        torus_chart(n),
        &sigma,
        [1.0, 0.0, 1.0],
        &TorusField::Builtin { c: 1.0 },
        LapseField::constant(1.0),
    )
    .expect("torus data")
}
