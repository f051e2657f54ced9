//! Property tests for algebraic and discrete invariants.

use std::f64::consts::PI;

use pnvflow_core::constraints::{constraint_report, ConstraintTolerances};
use pnvflow_core::fields::metric_inverse;
use pnvflow_core::initial_data::{gen_flat, periodic_antiderivative, split_rank_one};
use pnvflow_core::spin::{clifford_defect, dirac_current};
use pnvflow_core::*;
use proptest::prelude::*;

fn torus(n: usize) -> std::sync::Arc<Chart> {
    build_chart(ChartSpec::periodic_cube(2, n)).unwrap()
}

fn conformal(n: usize, a: f64, kx: f64, ky: f64) -> TensorField {
    let c = torus(n);
    let e: Vec<f64> = (0..c.len())
        .map(|p| (2.0 * a * (kx * c.coord(p, 0)).cos() * (ky * c.coord(p, 1)).sin()).exp())
        .collect();
    TensorField::metric(
        c,
        vec![e.clone(), vec![0.0; e.len()], vec![0.0; e.len()], e],
    )
    .unwrap()
}

#[test]
fn clifford_relations_hold() {
    assert!(clifford_defect() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rank_one_split_round_trips(theta in 0.0f64..PI, c in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0]) {
        let n = [theta.cos(), theta.sin()];
        let w0: Vec<f64> = (0..4).map(|k| c * n[k / 2] * n[k % 2]).collect();
        let (m, c2) = split_rank_one(&w0, 2).unwrap();
        prop_assert!((c2 - c).abs() < 1e-12);
        for k in 0..4 {
            prop_assert!((c2 * m[k / 2] * m[k % 2] - w0[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn antiderivative_inverts_the_derivative(a in -2.0f64..2.0, b in -2.0f64..2.0, k in 1usize..6) {
        let n = 64;
        let x: Vec<f64> = (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect();
        let k = k as f64;
        let w: Vec<f64> = x.iter().map(|x| a * (k * x).sin() + b * (k * x).cos()).collect();
        let f = periodic_antiderivative(&w, 2.0 * PI);
        let exact = |x: f64| (-a * (k * x).cos() + b * (k * x).sin()) / k;
        for (i, x) in x.iter().enumerate() {
            prop_assert!((f[i] - (exact(*x) - exact(0.0))).abs() < 1e-12);
        }
    }

    #[test]
    fn metric_inverse_is_an_inverse(a in 0.5f64..3.0, c in 0.5f64..3.0, s in -0.9f64..0.9) {
        let ch = torus(8);
        let len = ch.len();
        let b = s * (a * c).sqrt();
        let g = TensorField::metric(ch, vec![vec![a; len], vec![b; len], vec![b; len], vec![c; len]]).unwrap();
        let gi = metric_inverse(&g).unwrap();
        for p in 0..len {
            for i in 0..2 {
                for j in 0..2 {
                    let v: f64 = (0..2).map(|k| g.comps[i * 2 + k][p] * gi.comps[k * 2 + j][p]).sum();
                    let delta = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((v - delta).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn christoffel_symbols_are_symmetric(a in -0.3f64..0.3, kx in 1.0f64..3.0, ky in 1.0f64..3.0) {
        let geo = GeometryCache::new(&conformal(16, a, kx.round(), ky.round())).unwrap();
        for k in 0..2 {
            prop_assert_eq!(&geo.gamma.comps[k * 4 + 1], &geo.gamma.comps[k * 4 + 2]);
        }
        let ric = geo.ricci();
        prop_assert!(ric.symmetry_defect(1.0) < 1e-12);
    }

    #[test]
    fn flat_data_satisfies_constraints_exactly(theta in 0.0f64..2.0 * PI, scale in 0.1f64..4.0) {
        let u0 = [scale * theta.cos(), scale * theta.sin()];
        let data = gen_flat(torus(8), &u0, LapseField::constant(1.0)).unwrap();
        let r = constraint_report(&data, &ConstraintTolerances::truncation(1.0, 1e-4)).unwrap();
        for e in &r.entries {
            prop_assert!(e.linf < 1e-13, "{} = {}", e.name, e.linf);
        }
    }

    #[test]
    fn dirac_current_of_a_seed_is_its_square(amp in 0.1f64..2.0) {
        let g = conformal(8, 0.0, 1.0, 1.0);
        let gamma: Vec<f64> = (0..g.chart.len()).map(|p| amp * (1.0 + 0.1 * g.chart.coord(p, 0).sin())).collect();
        let psi = SpinorField::from_seed(g.chart.clone(), &gamma).unwrap();
        let (_, norm) = dirac_current(&psi, &g).unwrap();
        for (p, v) in norm.iter().enumerate() {
            prop_assert!((v - gamma[p] * gamma[p]).abs() < 1e-12 * gamma[p] * gamma[p]);
        }
    }
}
