//! End-to-end runs against closed-form solutions.

use std::f64::consts::PI;

use pnvflow_core::constraints::{constraint_report, ConstraintTolerances};
use pnvflow_core::evolution::{initial_state, initial_state_unchecked};
use pnvflow_core::initial_data::{
    codazzi_oracle_metric, gen_circle_codazzi, gen_conformal_torus, gen_flat,
};
use pnvflow_core::spacetime::{codazzi_oracle_block, NABLA_V};
use pnvflow_core::*;

fn circle(n: usize) -> InitialData {
    let c = build_chart(ChartSpec::periodic_cube(1, n)).unwrap();
    gen_circle_codazzi(
        c,
        &parse_expression("0.3*sin(x1)").unwrap(),
        LapseField::constant(1.0),
    )
    .unwrap()
}

fn max_diff(a: &TensorField, b: &TensorField) -> f64 {
    a.sub(b).unwrap().max_abs()
}

#[test]
fn circle_metric_follows_closed_form() {
    let data = circle(128);
    let tol = ConstraintTolerances::truncation(10.0, data.chart.min_spacing());
    let s = initial_state(&data, &tol).unwrap();
    let evo = evolve(SystemKind::PnvB, &s, &data.lapse, 1.0, 2.0 * PI / 256.0).unwrap();
    let exact = codazzi_oracle_metric(&data, 1.0).unwrap();
    assert!(max_diff(&evo.state.g, &exact) < 1e-6);
    for p in 0..data.chart.len() {
        let w = 0.3 * data.chart.coord(p, 0).sin();
        assert!((exact.comps[0][p] - (1.0 - w).powi(2)).abs() < 1e-14);
    }
    let a = BlockAnalysis::new(&evo.block).unwrap();
    assert!(a.parallel_vector_residual().unwrap().linf(NABLA_V) < 1e-5);
}

#[test]
fn evolved_and_closed_form_blocks_agree() {
    let data = circle(64);
    let h = data.chart.min_spacing();
    let s = initial_state_unchecked(&data).unwrap();
    let evo = evolve(SystemKind::PnvB, &s, &data.lapse, 0.5, 0.5 * h).unwrap();
    let oracle = codazzi_oracle_block(&data, 0.0, evo.dt, evo.steps + 1).unwrap();
    let last = oracle.len() - 1;
    assert_eq!(evo.block.len(), oracle.len());
    let a = &evo.block.levels[last].g;
    let b = &oracle.levels[last].g;
    assert!(max_diff(a, b) < 1e-6);
}

#[test]
fn flat_data_is_stationary_under_every_system() {
    let c = build_chart(ChartSpec::periodic_cube(2, 16)).unwrap();
    let data = gen_flat(c.clone(), &[0.6, 0.8], LapseField::constant(1.0)).unwrap();
    let report = constraint_report(&data, &ConstraintTolerances::truncation(1.0, 1e-6)).unwrap();
    assert!(report.all_pass(), "{report:?}");
    let s = initial_state_unchecked(&data).unwrap();
    for kind in [SystemKind::PnvA, SystemKind::PnvB, SystemKind::RicciFlat] {
        let evo = evolve(kind, &s, &data.lapse, 0.5, 0.1).unwrap();
        assert!(max_diff(&evo.state.g, &data.g) < 1e-14, "{kind:?}");
        assert!(evo.state.k.max_abs() < 1e-14, "{kind:?}");
    }
}

#[test]
fn torus_constraints_converge_at_fourth_order() {
    let sigma = parse_expression("0.2*cos(x1)*cos(x2)").unwrap();
    let mut rows = Vec::new();
    for n in [16, 32, 64] {
        let c = build_chart(ChartSpec::periodic_cube(2, n)).unwrap();
        let data = gen_conformal_torus(
            c.clone(),
            &sigma,
            [1.0, 0.0, 1.0],
            &TorusField::Builtin { c: 1.0 },
            LapseField::constant(1.0),
        )
        .unwrap();
        let r = constraint_report(
            &data,
            &ConstraintTolerances::truncation(10.0, c.min_spacing()),
        )
        .unwrap();
        assert!(r.all_pass(), "{r:?}");
        rows.push((n, c.min_spacing(), r.linf("vector_constraint")));
    }
    let t = ConvergenceTable::from_errors("vector_constraint", &rows);
    assert!(t.min_order().unwrap() > 3.5, "{t:?}");
}
