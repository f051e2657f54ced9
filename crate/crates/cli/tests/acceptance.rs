//! Acceptance criteria. Runs without the libtest harness so that every
//! criterion prints one `PASS`/`FAIL` line; exits nonzero if any fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use pnvflow_cli::pipeline::{self, probe_residuals, run_grid, run_ladder, Verb};
use pnvflow_cli::report::Timings;
use pnvflow_cli::scenario::{Check, Scenario};
use pnvflow_core::chart::{build_chart, ChartSpec};
use pnvflow_core::evolution::{evolve, initial_state_unchecked, SystemKind};
use pnvflow_core::expr::parse_expression;
use pnvflow_core::fields::{LapseField, TensorField};
use pnvflow_core::geometry::GeometryCache;
use pnvflow_core::initial_data::{gen_circle_codazzi, gen_flat, InitialData};
use pnvflow_core::report::ConvergenceTable;
use pnvflow_core::spacetime::{
    codazzi_oracle_block, BlockAnalysis, CODAZZI_AMBIENT, GAUSS, MAINARDI,
};

const LADDER: [usize; 3] = [32, 64, 128];
const MIN_ORDER: f64 = 3.5;

// Criterion 1
const ORACLE_METRIC_TOL: f64 = 1e-6;
const ORACLE_NABLA_V_TOL: f64 = 1e-5;
const ORACLE_RUNTIME: Duration = Duration::from_secs(30);
// Criterion 3
const TRIVIAL_TOL: f64 = 1e-12;
// Criterion 4
const SYMMETRY_TOL: f64 = 1e-12;
const DEFECT_AGREEMENT_TOL: f64 = 1e-10;
// Criterion 5
const DRIFT_FACTOR: f64 = 10.0;
// Criteria 6 and 9: `C·h⁴` with this `C`
const IDENTITY_CONSTANT: f64 = 10.0;
const RICCI_TOL: f64 = 1e-4;
// Criterion 7
const SPINOR_TOL: f64 = 1e-4;
// Criterion 8
const CROSS_SYSTEM_TOL: f64 = 1e-8;
// Criterion 9
const STATIONARY_TOL: f64 = 1e-12;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);
/// `(points, h, error)` rows keyed by residual name.
type Series = Vec<(String, Vec<(usize, f64, f64)>)>;

fn scenario(name: &str) -> Scenario {
    let path: PathBuf = [
        env!("CARGO_MANIFEST_DIR"),
        "..",
        "..",
        "scenarios",
        &format!("{name}.toml"),
    ]
    .iter()
    .collect();
    Scenario::load(&path).unwrap_or_else(|e| panic!("{e}"))
}

fn checks(list: &[Check]) -> BTreeSet<Check> {
    list.iter().copied().collect()
}

fn ensure(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn order_ok(t: &ConvergenceTable) -> bool {
    t.exact_zero || t.min_order().is_some_and(|o| o >= MIN_ORDER)
}

fn fmt_order(t: &ConvergenceTable) -> String {
    match t.min_order() {
        Some(o) => format!("{o:.2}"),
        None => "exact".into(),
    }
}

fn circle_product(n: usize) -> InitialData {
    let c = build_chart(ChartSpec::periodic_cube(2, n)).unwrap();
    gen_circle_codazzi(
        c,
        &parse_expression("0.3*sin(x1)").unwrap(),
        LapseField::constant(1.0),
    )
    .unwrap()
}

fn max_abs_diff(a: &TensorField, b: &TensorField) -> f64 {
    a.comps
        .iter()
        .zip(&b.comps)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let scn = scenario("circle_codazzi_oracle");
    let spec = scn.chart.spec().unwrap();
    ensure(
        spec.points == vec![128],
        format!("scenario grid {:?}", spec.points),
    )?;
    let start = Instant::now();
    let run = run_grid(
        &scn,
        &spec,
        &checks(&[Check::Constraints, Check::Evolve, Check::Spacetime]),
        true,
        true,
    )
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let evo = run.evolution.as_ref().ok_or("no evolution")?;
    let g = run
        .dumps
        .tensors
        .iter()
        .find(|(n, _, _)| n == "g")
        .map(|(_, f, _)| f)
        .ok_or("no final metric")?;
    let t = evo.t_end;
    let chart = g.chart.clone();
    let err = (0..chart.len())
        .map(|p| {
            let x = chart.coord(p, 0);
            (g.comps[0][p] - (1.0 - t * 0.3 * x.sin()).powi(2)).abs()
        })
        .fold(0.0, f64::max);
    let nabla = run
        .check(pipeline::CHECK_PARALLEL_VECTOR)
        .and_then(|c| c.get("nabla_v"))
        .ok_or("no nabla_v")?
        .linf;
    let msg = format!(
        "g11 error {err:.2e} (≤ {ORACLE_METRIC_TOL:e}), ‖∇̄V‖∞ {nabla:.2e} (≤ {ORACLE_NABLA_V_TOL:e}), {:.2} s, dt {:.5}",
        elapsed.as_secs_f64(),
        evo.dt
    );
    ensure(
        err <= ORACLE_METRIC_TOL
            && nabla <= ORACLE_NABLA_V_TOL
            && elapsed < ORACLE_RUNTIME
            && t == 1.0,
        msg.clone(),
    )?;
    Ok(msg)
}

fn conformal_torus_tables() -> Vec<ConvergenceTable> {
    let sigma = |x: f64, y: f64| 0.2 * x.cos() * y.cos();
    let dsigma = |x: f64, y: f64| [-0.2 * x.sin() * y.cos(), -0.2 * x.cos() * y.sin()];
    let lap = |x: f64, y: f64| -0.4 * x.cos() * y.cos();
    let mut gamma_rows = Vec::new();
    let mut ricci_rows = Vec::new();
    for n in LADDER {
        let c = build_chart(ChartSpec::periodic_cube(2, n)).unwrap();
        let len = c.len();
        let e: Vec<f64> = (0..len)
            .map(|p| (2.0 * sigma(c.coord(p, 0), c.coord(p, 1))).exp())
            .collect();
        let g = TensorField::metric(
            c.clone(),
            vec![e.clone(), vec![0.0; len], vec![0.0; len], e],
        )
        .unwrap();
        let geo = GeometryCache::new(&g).unwrap();
        let (mut eg, mut er) = (0.0f64, 0.0f64);
        for p in 0..len {
            let (x, y) = (c.coord(p, 0), c.coord(p, 1));
            let ds = dsigma(x, y);
            let e = (2.0 * sigma(x, y)).exp();
            let k = -lap(x, y) / e;
            for a in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        let d = |u: usize, v: usize| if u == v { 1.0 } else { 0.0 };
                        let exact = d(a, i) * ds[j] + d(a, j) * ds[i] - d(i, j) * ds[a];
                        eg = eg.max((geo.gamma_at(a, i, j, p) - exact).abs());
                    }
                    let exact = k * if a == i { e } else { 0.0 };
                    er = er.max((geo.ricci().comps[a * 2 + i][p] - exact).abs());
                }
            }
        }
        let h = c.min_spacing();
        gamma_rows.push((n, h, eg));
        ricci_rows.push((n, h, er));
    }
    vec![
        ConvergenceTable::from_errors("conformal_torus/christoffel", &gamma_rows),
        ConvergenceTable::from_errors("conformal_torus/ricci", &ricci_rows),
    ]
}

fn criterion_2() -> Outcome {
    let mut tables = conformal_torus_tables();
    for name in [
        "flat_trivial",
        "circle_codazzi_oracle",
        "torus_spinor",
        "warped",
        "open_codazzi",
    ] {
        let mut scn = scenario(name);
        let mut cfg = scn.convergence_config();
        cfg.ladder = LADDER.to_vec();
        cfg.checks = vec![Check::Constraints];
        cfg.probe = false;
        scn.convergence = Some(cfg);
        let results = run_ladder(&scn, 0, &mut Timings::default()).map_err(|e| e.to_string())?;
        for r in results {
            if ["vector_constraint", "norm_constraint", "w_symmetry"]
                .iter()
                .any(|c| r.table.name == format!("constraints/{c}"))
            {
                let mut t = r.table;
                t.name = format!("{name}/{}", t.name);
                tables.push(t);
            }
        }
    }
    let circle = scenario("circle_codazzi_oracle");
    let results = run_ladder(&circle, 0, &mut Timings::default()).map_err(|e| e.to_string())?;
    let nabla = results
        .iter()
        .find(|r| r.table.name == "parallel_vector/nabla_v")
        .ok_or("no nabla_v table")?;
    tables.push(ConvergenceTable {
        name: "circle_oracle/nabla_v".into(),
        ..nabla.table.clone()
    });
    let mut probe: Series = Vec::new();
    for n in LADDER {
        let (h, r) = probe_residuals(2, n, 0.1, 7).map_err(|e| e.to_string())?;
        for name in [GAUSS, CODAZZI_AMBIENT, MAINARDI] {
            let row = (n, h, r.linf(name));
            match probe.iter_mut().find(|(k, _)| k == name) {
                Some((_, v)) => v.push(row),
                None => probe.push((name.to_string(), vec![row])),
            }
        }
    }
    for (name, rows) in probe {
        tables.push(ConvergenceTable::from_errors(
            format!("random_block/{name}"),
            &rows,
        ));
    }
    let bad: Vec<String> = tables
        .iter()
        .filter(|t| !order_ok(t))
        .map(|t| format!("{} ({})", t.name, fmt_order(t)))
        .collect();
    let worst = tables
        .iter()
        .filter_map(|t| t.min_order().map(|o| (o, t.name.clone())))
        .fold((f64::INFINITY, String::new()), |a, b| {
            if b.0 < a.0 {
                b
            } else {
                a
            }
        });
    ensure(
        bad.is_empty(),
        format!("orders below {MIN_ORDER}: {}", bad.join(", ")),
    )?;
    Ok(format!(
        "{} tables, lowest order {:.2} ({})",
        tables.len(),
        worst.0,
        worst.1
    ))
}

fn criterion_3() -> Outcome {
    let scn = scenario("flat_trivial");
    let out = pipeline::execute(&scn, Verb::Verify, scn.seed).map_err(|e| e.to_string())?;
    let mut worst = (0.0f64, String::from("all entries"));
    let mut count = 0;
    for c in &out.report.checks {
        for e in &c.residuals.entries {
            count += 1;
            if e.linf > worst.0 || e.linf.is_nan() {
                worst = (e.linf, format!("{}/{}", c.name, e.name));
            }
        }
    }
    for r in &out.report.convergence {
        for row in &r.table.rows {
            count += 1;
            if row.error > worst.0 || row.error.is_nan() {
                worst = (row.error, format!("{} at N = {}", r.table.name, row.points));
            }
        }
    }
    let msg = format!("{count} residuals, largest {:.2e} ({})", worst.0, worst.1);
    ensure(worst.0 <= TRIVIAL_TOL && out.report.pass, msg.clone())?;
    Ok(msg)
}

fn criterion_4() -> Outcome {
    let scn = scenario("torus_spinor");
    let data = scn
        .build_data(&scn.chart.spec().unwrap())
        .map_err(|e| e.to_string())?;
    let state = initial_state_unchecked(&data).unwrap();
    let dt = 0.25 * data.chart.min_spacing();
    let b = evolve(SystemKind::PnvB, &state, &data.lapse, 0.5, dt).map_err(|e| e.to_string())?;
    let asym = b
        .trace
        .records
        .iter()
        .map(|r| r.stage_asymmetry.max(r.symmetry_defect))
        .fold(0.0, f64::max);
    let a = evolve(SystemKind::PnvA, &state, &data.lapse, 0.5, dt).map_err(|e| e.to_string())?;
    let mut gap = 0.0f64;
    let mut defect = 0.0f64;
    for r in &a.trace.records {
        let d = r
            .dnabla_defect
            .ok_or("PNV_A record without an independent defect")?;
        gap = gap.max((d - r.symmetry_defect).abs());
        defect = defect.max(r.symmetry_defect);
    }
    let msg = format!(
        "PNV_B antisymmetric part {asym:.2e} (≤ {SYMMETRY_TOL:e}); PNV_A defect {defect:.2e}, monitor vs d^∇ gap {gap:.2e} (≤ {DEFECT_AGREEMENT_TOL:e})"
    );
    ensure(
        asym <= SYMMETRY_TOL && gap <= DEFECT_AGREEMENT_TOL && defect > 0.0,
        msg.clone(),
    )?;
    Ok(msg)
}

fn criterion_5() -> Outcome {
    let scn = scenario("torus_spinor");
    let spec = scn.chart.spec().unwrap();
    ensure(
        spec.points == vec![64, 64],
        format!("grid {:?}", spec.points),
    )?;
    let run = run_grid(
        &scn,
        &spec,
        &checks(&[Check::Constraints, Check::Evolve]),
        true,
        false,
    )
    .map_err(|e| e.to_string())?;
    let trace = run.trace.as_ref().ok_or("no trace")?;
    let first = &trace.records[0];
    let vmax = trace.max_of(|r| r.vector_constraint);
    let nmax = trace.max_of(|r| r.norm_constraint);
    let vg = vmax / first.vector_constraint.max(pipeline::DRIFT_FLOOR);
    let nbase = first
        .norm_constraint
        .max(first.vector_constraint)
        .max(pipeline::DRIFT_FLOOR);
    let ng = nmax / nbase;
    let msg = format!(
        "vector {:.2e} → max {vmax:.2e} (×{vg:.2}); norm {:.2e} → max {nmax:.2e} (×{ng:.2e} of the truncation baseline {nbase:.2e})",
        first.vector_constraint, first.norm_constraint
    );
    ensure(vg <= DRIFT_FACTOR && ng <= DRIFT_FACTOR, msg.clone())?;
    Ok(msg)
}

fn ricci_report(a: &BlockAnalysis, h: f64) -> Result<(f64, f64), String> {
    let r = a.ricci_structure_residuals().map_err(|e| e.to_string())?;
    let limit = IDENTITY_CONSTANT * h.powi(4);
    let mut ric = 0.0f64;
    let mut slice = 0.0f64;
    for e in &r.entries {
        if e.name.starts_with("slice_") {
            slice = slice.max(e.linf);
            ensure(
                e.linf <= limit,
                format!("{} = {:.2e} > {limit:.2e}", e.name, e.linf),
            )?;
        } else {
            ric = ric.max(e.linf);
            ensure(
                e.linf <= RICCI_TOL,
                format!("{} = {:.2e} > {RICCI_TOL:e}", e.name, e.linf),
            )?;
        }
    }
    Ok((ric, slice))
}

fn criterion_6() -> Outcome {
    let data = circle_product(64);
    let h = data.chart.min_spacing();
    let block = codazzi_oracle_block(&data, 0.0, 0.5 * h, 21).map_err(|e| e.to_string())?;
    let a = BlockAnalysis::new(&block).map_err(|e| e.to_string())?;
    let (ro, so) = ricci_report(&a, h)?;
    let scn = scenario("torus_spinor");
    let data = scn
        .build_data(&scn.chart.spec().unwrap())
        .map_err(|e| e.to_string())?;
    let h = data.chart.min_spacing();
    let state = initial_state_unchecked(&data).unwrap();
    let dt = pipeline::step_size(&scn, &scn.chart.spec().unwrap()).map_err(|e| e.to_string())?;
    let evo = evolve(SystemKind::PnvB, &state, &data.lapse, 0.5, dt).map_err(|e| e.to_string())?;
    let a = BlockAnalysis::new(&evo.block).map_err(|e| e.to_string())?;
    let (re, se) = ricci_report(&a, h)?;
    Ok(format!(
        "oracle: Ric/scal {ro:.2e}, slice identities {so:.2e}; evolved torus: Ric/scal {re:.2e}, slice identities {se:.2e} (≤ {RICCI_TOL:e}, ≤ {IDENTITY_CONSTANT}·h⁴ = {:.2e})",
        IDENTITY_CONSTANT * h.powi(4)
    ))
}

fn criterion_7() -> Outcome {
    let scn = scenario("torus_spinor");
    let out = pipeline::execute(&scn, Verb::Verify, scn.seed).map_err(|e| e.to_string())?;
    let r = &out.report;
    let slice = r.check(pipeline::CHECK_SPIN_SLICE).ok_or("no spin_slice")?;
    let transport = r
        .check(pipeline::CHECK_SPIN_TRANSPORT)
        .ok_or("no spin_transport")?;
    ensure(
        slice.pass,
        format!(
            "slice identities fail: {:?}",
            slice.residuals.failures().collect::<Vec<_>>()
        ),
    )?;
    let mut lowest = f64::INFINITY;
    for e in &slice.residuals.entries {
        let t = r
            .convergence_table(&format!("{}/{}", pipeline::CHECK_SPIN_SLICE, e.name))
            .ok_or(format!("no table for {}", e.name))?;
        ensure(
            order_ok(&t.table),
            format!("{} order {}", e.name, fmt_order(&t.table)),
        )?;
        lowest = lowest.min(t.table.min_order().unwrap_or(f64::INFINITY));
    }
    let get = |n: &str| transport.get(n).map(|e| e.linf).unwrap_or(f64::NAN);
    let (nabla, current, vphi) = (
        get("parallel_spinor_spatial"),
        get("dirac_current_minus_v"),
        get("v_dot_phi"),
    );
    let msg = format!(
        "slice identities lowest order {lowest:.2}; ∇φ {nabla:.2e}, V_φ−V {current:.2e}, V·φ {vphi:.2e} (≤ {SPINOR_TOL:e})"
    );
    ensure(
        nabla <= SPINOR_TOL && current <= SPINOR_TOL && vphi <= SPINOR_TOL && r.pass,
        msg.clone(),
    )?;
    Ok(msg)
}

fn criterion_8() -> Outcome {
    let data = circle_product(64);
    let state = initial_state_unchecked(&data).unwrap();
    let dt = 0.5 * data.chart.min_spacing();
    let a = evolve(SystemKind::PnvA, &state, &data.lapse, 0.5, dt).map_err(|e| e.to_string())?;
    let b = evolve(SystemKind::PnvB, &state, &data.lapse, 0.5, dt).map_err(|e| e.to_string())?;
    let dg = max_abs_diff(&a.state.g, &b.state.g);
    let du = max_abs_diff(&a.state.big_u, &b.state.big_u);
    let ds = a
        .state
        .u
        .iter()
        .zip(&b.state.u)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scn = scenario("open_codazzi");
    let spec = scn.chart.spec().unwrap();
    let run =
        run_grid(&scn, &spec, &checks(&[Check::Evolve]), true, false).map_err(|e| e.to_string())?;
    let cross = run
        .check(pipeline::CHECK_CROSS_SYSTEM)
        .ok_or("no cross-system check")?;
    let open = cross
        .residuals
        .entries
        .iter()
        .map(|e| e.linf)
        .fold(0.0, f64::max);
    let worst = dg.max(du).max(ds).max(open);
    let msg = format!(
        "circle product max |A − B| over g, U, u: {dg:.2e}, {du:.2e}, {ds:.2e}; open Codazzi {open:.2e} (≤ {CROSS_SYSTEM_TOL:e})"
    );
    ensure(worst <= CROSS_SYSTEM_TOL, msg.clone())?;
    Ok(msg)
}

fn criterion_9() -> Outcome {
    let c = build_chart(ChartSpec::periodic_cube(2, 32)).unwrap();
    let data = gen_flat(c.clone(), &[0.6, 0.8], LapseField::constant(1.0)).unwrap();
    let state = initial_state_unchecked(&data).unwrap();
    let evo = evolve(
        SystemKind::RicciFlat,
        &state,
        &data.lapse,
        1.0,
        0.5 * c.min_spacing(),
    )
    .map_err(|e| e.to_string())?;
    let drift = max_abs_diff(&evo.state.g, &data.g).max(evo.state.k.max_abs());
    let data = circle_product(64);
    let h = data.chart.min_spacing();
    let block = codazzi_oracle_block(&data, 0.0, 0.5 * h, 21).map_err(|e| e.to_string())?;
    let a = BlockAnalysis::new(&block).map_err(|e| e.to_string())?;
    let rel = a.ricci_flat_relations().map_err(|e| e.to_string())?;
    let limit = IDENTITY_CONSTANT * h.powi(4);
    let worst = rel.entries.iter().map(|e| e.linf).fold(0.0, f64::max);
    let msg = format!(
        "RICCI_FLAT drift {drift:.2e} (≤ {STATIONARY_TOL:e}); oracle-slice relations {worst:.2e} (≤ {limit:.2e})"
    );
    ensure(drift <= STATIONARY_TOL && worst <= limit, msg.clone())?;
    Ok(msg)
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("codazzi oracle end-to-end", criterion_1),
        ("convergence orders", criterion_2),
        ("trivial exactness", criterion_3),
        ("symmetry guarantees", criterion_4),
        ("constraint drift", criterion_5),
        ("ricci structure", criterion_6),
        ("spinor pipeline", criterion_7),
        ("cross-system agreement", criterion_8),
        ("ricci-flat baseline", criterion_9),
    ];
    let only: Option<usize> = std::env::args().nth(1).and_then(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail} [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail} [{secs:.1} s]", i + 1)
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
