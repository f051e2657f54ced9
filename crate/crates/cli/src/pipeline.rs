//! Stages of a scenario run: constraints, evolution, spacetime checks,
//! spinor checks and refinement ladders.

use std::collections::BTreeSet;
use std::time::Instant;

use anyhow::Context as _;
use pnvflow_core::chart::{build_chart, ChartSpec};
use pnvflow_core::constraints::{constraint_report, first_order_mask, ConstraintTolerances};
use pnvflow_core::evolution::{
    evolve, initial_state_unchecked, Evolution, MonitorTrace, SystemKind,
};
use pnvflow_core::fields::TensorField;
use pnvflow_core::geometry::GeometryCache;
use pnvflow_core::initial_data::InitialData;
use pnvflow_core::report::{ConvergenceTable, ResidualEntry, ResidualReport};
use pnvflow_core::spacetime::{
    assemble, codazzi_oracle_block, lorentz_geometry, BlockAnalysis, RandomMetric, SpacetimeBlock,
    CODAZZI_AMBIENT, GAUSS, MAINARDI, MIN_LEVELS,
};
use pnvflow_core::spin::{
    embed_seed, killing_consequence_residuals, w_killing_residual, BlockSpin, SpinorField,
};

use crate::error::{
    is_evolution_abort, Aborted, ConfigError, EXIT_CONSTRAINT, EXIT_EVOLUTION, EXIT_PASS,
    EXIT_VERIFICATION,
};
use crate::report::{
    CheckReport, ConvergenceResult, EvolutionSummary, FieldDumps, Report, Timings,
    REPORT_SCHEMA_VERSION,
};
use crate::scenario::{Check, Generator, Scenario, Tolerances};

/// Baselines below this are treated as this value when measuring growth.
pub const DRIFT_FLOOR: f64 = 1e-13;
/// Levels of the closed-form comparison block.
pub const ORACLE_BLOCK_LEVELS: usize = 2 * MIN_LEVELS + 1;
/// Levels of the random probe block.
pub const PROBE_LEVELS: usize = MIN_LEVELS + 1;
pub const PROBE_CFL: f64 = 0.5;

pub const CHECK_CONSTRAINTS: &str = "constraints";
pub const CHECK_EVOLUTION: &str = "evolution";
pub const CHECK_ORACLE: &str = "oracle";
pub const CHECK_CROSS_SYSTEM: &str = "cross_system";
pub const CHECK_PARALLEL_VECTOR: &str = "parallel_vector";
pub const CHECK_GCM: &str = "gcm";
pub const CHECK_RICCI_STRUCTURE: &str = "ricci_structure";
pub const CHECK_RICCI_FLAT_RELATIONS: &str = "ricci_flat_relations";
pub const CHECK_ORACLE_SPACETIME: &str = "oracle_spacetime";
pub const CHECK_SPIN_SLICE: &str = "spin_slice";
pub const CHECK_SPIN_TRANSPORT: &str = "spin_transport";
pub const CHECK_PROBE: &str = "probe";

pub const VECTOR_GROWTH: &str = "vector_constraint_growth";
pub const NORM_GROWTH: &str = "norm_constraint_growth";
pub const STAGE_ASYMMETRY: &str = "stage_asymmetry";
pub const SYMMETRY_DEFECT: &str = "symmetry_defect";
pub const DEFECT_AGREEMENT: &str = "defect_agreement";
pub const STATIONARITY: &str = "stationarity";
pub const RETRANSPORT: &str = "retransport";

/// What a CLI verb runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    Check,
    Evolve,
    Verify,
    Spin,
    Convergence,
}

impl Verb {
    pub fn as_str(self) -> &'static str {
        match self {
            Verb::Check => "check",
            Verb::Evolve => "evolve",
            Verb::Verify => "verify",
            Verb::Spin => "spin",
            Verb::Convergence => "convergence",
        }
    }

    /// Checks of a single-grid run, and whether a ladder follows.
    pub fn plan(self, scn: &Scenario) -> Result<(BTreeSet<Check>, bool), ConfigError> {
        use Check::*;
        let (checks, ladder): (BTreeSet<Check>, bool) = match self {
            Verb::Check => ([Constraints].into(), false),
            Verb::Evolve => ([Constraints, Evolve].into(), false),
            Verb::Spin => ([Constraints, Evolve, Spin].into(), false),
            Verb::Convergence => (BTreeSet::new(), true),
            Verb::Verify => {
                let mut s = scn.check_set();
                let ladder = s.remove(&Convergence);
                s.insert(Constraints);
                (s, ladder)
            }
        };
        scn.validate_pipeline(&checks, self.as_str())?;
        if ladder {
            scn.validate_convergence()?;
        }
        Ok((checks, ladder))
    }
}

/// Everything a single-grid run produces.
#[derive(Debug, Default)]
pub struct GridRun {
    pub h: f64,
    pub checks: Vec<CheckReport>,
    pub evolution: Option<EvolutionSummary>,
    pub trace: Option<MonitorTrace>,
    pub abort: Option<Aborted>,
    pub timings: Timings,
    pub dumps: FieldDumps,
}

impl GridRun {
    pub fn check(&self, name: &str) -> Option<&CheckReport> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Ctx<'a> {
    tol: &'a Tolerances,
    h: f64,
}

impl Ctx<'_> {
    /// Applies the scenario-wide cap to a tolerance.
    fn cap(&self, t: Option<f64>) -> Option<f64> {
        match (t, self.tol.all_residuals) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    fn h4(&self, constant: f64) -> f64 {
        constant * self.h.powi(4)
    }
}

fn retol(mut r: ResidualReport, f: impl Fn(&str) -> Option<f64>) -> ResidualReport {
    for e in &mut r.entries {
        *e = ResidualEntry::new(e.name.clone(), e.linf, e.l2, f(&e.name));
    }
    r
}

fn scalar_entry(name: &str, value: f64, tol: Option<f64>) -> ResidualEntry {
    ResidualEntry::new(name, value, value, tol)
}

fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

fn state_diff(g: [&TensorField; 2], big_u: [&TensorField; 2], u: [&[f64]; 2]) -> [f64; 3] {
    [
        max_diff(&g[0].comps, &g[1].comps),
        max_diff(&big_u[0].comps, &big_u[1].comps),
        max_diff(&[u[0].to_vec()], &[u[1].to_vec()]),
    ]
}

/// Step size on `spec`: the scenario step rescaled with `h`, capped so the
/// block has at least [`MIN_LEVELS`] levels.
pub fn step_size(scn: &Scenario, spec: &ChartSpec) -> anyhow::Result<f64> {
    let evo = scn.evolution_config()?;
    let base = build_chart(scn.chart.spec()?)?.min_spacing();
    let h = build_chart(spec.clone())?.min_spacing();
    let dt0 = evo.dt.unwrap_or(evo.cfl * base);
    Ok((dt0 * h / base).min(evo.t_end / (MIN_LEVELS - 1) as f64))
}

fn timed<T>(timings: &mut Timings, stage: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    timings.record(stage, start.elapsed().as_secs_f64());
    out
}

/// Runs `checks` on one grid. `enforce` stops at failed initial constraints.
pub fn run_grid(
    scn: &Scenario,
    spec: &ChartSpec,
    checks: &BTreeSet<Check>,
    enforce: bool,
    dumps: bool,
) -> anyhow::Result<GridRun> {
    let mut run = GridRun::default();
    let data = timed(&mut run.timings, "generate", || scn.build_data(spec))?;
    run.h = data.chart.min_spacing();
    let ctx = Ctx {
        tol: &scn.tolerances,
        h: run.h,
    };
    if dumps {
        run.dumps.tensors.extend([
            ("g0".into(), data.g.clone(), Some(0.0)),
            ("w0".into(), data.w.clone(), Some(0.0)),
            ("big_u0".into(), data.big_u.clone(), Some(0.0)),
            (
                "u0".into(),
                TensorField::scalar_from(data.chart.clone(), data.u.clone()),
                Some(0.0),
            ),
        ]);
    }

    let report = timed(&mut run.timings, "constraints", || {
        constraints_check(&ctx, &data)
    })?;
    let ok = report.pass;
    run.checks.push(report);
    if enforce && !ok {
        run.abort = Some(Aborted {
            code: EXIT_CONSTRAINT,
            message: "initial data violate the constraints".into(),
        });
        return Ok(run);
    }

    let mut evolution = None;
    if checks.contains(&Check::Evolve) {
        let cfg = scn.evolution_config()?;
        let dt = step_size(scn, spec)?;
        let state = initial_state_unchecked(&data)?;
        let result = timed(&mut run.timings, "evolve", || {
            evolve(cfg.system, &state, &data.lapse, cfg.t_end, dt)
        });
        let evo = match result {
            Ok(e) => e,
            Err(e) if is_evolution_abort(&e) => {
                run.abort = Some(Aborted {
                    code: EXIT_EVOLUTION,
                    message: format!("evolution aborted: {e}"),
                });
                return Ok(run);
            }
            Err(e) => return Err(e.into()),
        };
        run.checks
            .push(evolution_check(&ctx, scn, cfg.system, &evo));
        if scn.generator.has_codazzi_oracle()
            && scn.unit_lapse()
            && cfg.system != SystemKind::RicciFlat
        {
            run.checks.push(oracle_check(&ctx, &data, &evo)?);
        }
        if let Some(other) = cfg.compare {
            let alt = timed(&mut run.timings, "compare", || {
                evolve(other, &state, &data.lapse, cfg.t_end, dt)
            })
            .with_context(|| format!("evolving the comparison system {other}"))?;
            let d = state_diff(
                [&evo.state.g, &alt.state.g],
                [&evo.state.big_u, &alt.state.big_u],
                [&evo.state.u, &alt.state.u],
            );
            let t = ctx.cap(Some(scn.tolerances.cross_system));
            let mut r = ResidualReport::default();
            r.push(scalar_entry("metric_difference", d[0], t));
            r.push(scalar_entry("big_u_difference", d[1], t));
            r.push(scalar_entry("u_difference", d[2], t));
            run.checks.push(CheckReport::new(CHECK_CROSS_SYSTEM, r));
        }
        run.evolution = Some(EvolutionSummary {
            system: cfg.system,
            t_end: cfg.t_end,
            dt: evo.dt,
            steps: evo.steps,
            min_u: evo
                .trace
                .records
                .iter()
                .map(|r| r.min_u)
                .fold(f64::INFINITY, f64::min),
            min_eig_g: evo
                .trace
                .records
                .iter()
                .map(|r| r.min_eig_g)
                .fold(f64::INFINITY, f64::min),
        });
        run.trace = Some(evo.trace.clone());
        if dumps {
            let t = Some(evo.state.t);
            run.dumps.tensors.extend([
                ("g".into(), evo.state.g.clone(), t),
                ("big_u".into(), evo.state.big_u.clone(), t),
                (
                    "u".into(),
                    TensorField::scalar_from(data.chart.clone(), evo.state.u.clone()),
                    t,
                ),
            ]);
        }
        evolution = Some(evo);
    }

    let mut analysis = None;
    if checks.contains(&Check::Spacetime) {
        let evo = evolution.as_ref().expect("spacetime runs after evolve");
        let system = evo_system(scn);
        let a = timed(
            &mut run.timings,
            "spacetime",
            || -> anyhow::Result<BlockAnalysis> {
                let a = BlockAnalysis::new(&evo.block)?;
                let pnv = system != SystemKind::RicciFlat;
                run.checks.extend(spacetime_checks(&ctx, &a, pnv, "")?);
                Ok(a)
            },
        )?;
        if scn.generator.has_codazzi_oracle() && scn.unit_lapse() {
            let levels = evo.block.len().min(ORACLE_BLOCK_LEVELS);
            let block = codazzi_oracle_block(&data, 0.0, evo.dt, levels)?;
            let report = timed(&mut run.timings, "oracle_spacetime", || {
                oracle_spacetime(&ctx, &block)
            })?;
            run.checks.push(report);
        }
        analysis = Some(a);
    }

    if checks.contains(&Check::Spin) {
        let seed = data.spinor_seed().ok_or_else(|| {
            ConfigError::new(
                "checks",
                "`spin` needs two-dimensional data with U a positive multiple of ∂1",
            )
        })?;
        let phi0 = SpinorField::from_seed(data.chart.clone(), &seed)?;
        let report = timed(&mut run.timings, "spin_slice", || {
            spin_slice_check(&ctx, &data, &phi0)
        })?;
        run.checks.push(report);
        if let Some(evo) = &evolution {
            let (report, phi) = timed(&mut run.timings, "spin_transport", || {
                spin_transport_check(&ctx, &evo.block, analysis.as_ref(), &phi0)
            })?;
            run.checks.push(report);
            if dumps {
                run.dumps.spinors.push(("phi".into(), phi, None));
            }
        }
        if dumps {
            run.dumps.spinors.push(("phi0".into(), phi0, Some(0.0)));
        }
    }
    Ok(run)
}

fn evo_system(scn: &Scenario) -> SystemKind {
    scn.evolution
        .as_ref()
        .map_or(SystemKind::PnvB, |e| e.system)
}

fn constraints_check(ctx: &Ctx, data: &InitialData) -> anyhow::Result<CheckReport> {
    let tol = ConstraintTolerances::truncation(ctx.tol.constraint_constant, ctx.h);
    let r = constraint_report(data, &tol)?;
    let r = retol(r.clone(), |name| {
        ctx.cap(r.get(name).and_then(|e| e.tolerance))
    });
    Ok(CheckReport::new(CHECK_CONSTRAINTS, r))
}

fn evolution_check(ctx: &Ctx, scn: &Scenario, system: SystemKind, evo: &Evolution) -> CheckReport {
    let recs = &evo.trace.records;
    let max = |f: &dyn Fn(&pnvflow_core::evolution::MonitorRecord) -> f64| {
        recs.iter().map(f).fold(0.0, f64::max)
    };
    let first = &recs[0];
    let vmax = max(&|r| r.vector_constraint);
    let nmax = max(&|r| r.norm_constraint);
    let vbase = first.vector_constraint.max(DRIFT_FLOOR);
    let nbase = first
        .norm_constraint
        .max(first.vector_constraint)
        .max(DRIFT_FLOOR);
    let mut r = ResidualReport::default();
    r.push(scalar_entry("vector_constraint", vmax, ctx.cap(None)));
    r.push(scalar_entry("norm_constraint", nmax, ctx.cap(None)));
    let drift = Some(ctx.tol.drift_factor);
    r.push(scalar_entry(VECTOR_GROWTH, vmax / vbase, drift));
    r.push(scalar_entry(NORM_GROWTH, nmax / nbase, drift));
    let stage = max(&|r| r.stage_asymmetry.max(r.symmetry_defect));
    match system {
        SystemKind::PnvA => {
            r.push(scalar_entry(
                SYMMETRY_DEFECT,
                max(&|r| r.symmetry_defect),
                ctx.cap(None),
            ));
            let gap = max(&|r| {
                r.dnabla_defect
                    .map_or(f64::INFINITY, |d| (d - r.symmetry_defect).abs())
            });
            r.push(scalar_entry(
                DEFECT_AGREEMENT,
                gap,
                ctx.cap(Some(ctx.tol.defect_agreement)),
            ));
        }
        _ => r.push(scalar_entry(
            STAGE_ASYMMETRY,
            stage,
            ctx.cap(Some(ctx.tol.symmetry)),
        )),
    }
    r.push(scalar_entry(
        "resymmetrization",
        max(&|r| r.resymmetrization),
        ctx.cap(None),
    ));
    if matches!(scn.generator, Generator::Flat { .. }) {
        let first = &evo.block.levels[0];
        let d = state_diff(
            [&evo.state.g, &first.g],
            [&evo.state.big_u, &first.big_u],
            [&evo.state.u, &first.u],
        );
        let worst = d.into_iter().fold(0.0, f64::max);
        r.push(scalar_entry(
            STATIONARITY,
            worst,
            ctx.cap(Some(ctx.tol.symmetry)),
        ));
    }
    CheckReport::new(CHECK_EVOLUTION, r)
}

fn oracle_check(ctx: &Ctx, data: &InitialData, evo: &Evolution) -> anyhow::Result<CheckReport> {
    let exact = codazzi_oracle_block(data, evo.state.t, 1.0, 1)?;
    let lev = &exact.levels[0];
    let d = state_diff(
        [&evo.state.g, &lev.g],
        [&evo.state.big_u, &lev.big_u],
        [&evo.state.u, &lev.u],
    );
    let t = ctx.cap(Some(ctx.tol.oracle));
    let mut r = ResidualReport::default();
    r.push(scalar_entry("metric_vs_oracle", d[0], t));
    r.push(scalar_entry("big_u_vs_oracle", d[1], t));
    r.push(scalar_entry("u_vs_oracle", d[2], t));
    Ok(CheckReport::new(CHECK_ORACLE, r))
}

fn is_slice_identity(name: &str) -> bool {
    name.starts_with("slice_")
}

fn spacetime_checks(
    ctx: &Ctx,
    a: &BlockAnalysis,
    pnv: bool,
    prefix: &str,
) -> anyhow::Result<Vec<CheckReport>> {
    let name = |s: &str| format!("{prefix}{s}");
    let identity = Some(ctx.h4(ctx.tol.identity_constant));
    let nabla = if pnv { Some(ctx.tol.nabla_v) } else { None };
    let curvature = if pnv { Some(ctx.tol.curvature) } else { None };
    Ok(vec![
        CheckReport::new(
            name(CHECK_PARALLEL_VECTOR),
            retol(a.parallel_vector_residual()?, |_| ctx.cap(nabla)),
        ),
        CheckReport::new(
            name(CHECK_GCM),
            retol(a.gcm_residuals()?, |_| ctx.cap(identity)),
        ),
        CheckReport::new(
            name(CHECK_RICCI_STRUCTURE),
            retol(a.ricci_structure_residuals()?, |n| {
                ctx.cap(if is_slice_identity(n) {
                    identity
                } else {
                    curvature
                })
            }),
        ),
        CheckReport::new(
            name(CHECK_RICCI_FLAT_RELATIONS),
            retol(a.ricci_flat_relations()?, |_| ctx.cap(identity)),
        ),
    ])
}

fn oracle_spacetime(ctx: &Ctx, block: &SpacetimeBlock) -> anyhow::Result<CheckReport> {
    let a = BlockAnalysis::new(block)?;
    let mut r = ResidualReport::default();
    for c in spacetime_checks(ctx, &a, true, "")? {
        if c.name != CHECK_GCM {
            r.extend(c.residuals);
        }
    }
    Ok(CheckReport::new(CHECK_ORACLE_SPACETIME, r))
}

fn spin_slice_check(
    ctx: &Ctx,
    data: &InitialData,
    phi0: &SpinorField,
) -> anyhow::Result<CheckReport> {
    let geo = GeometryCache::new(&data.g)?;
    let mask = first_order_mask(&data.chart);
    let tol = ctx.cap(Some(ctx.h4(ctx.tol.spinor_constant)));
    let mut r = w_killing_residual(phi0, &data.w, &geo)?.report(&mask, tol)?;
    r.extend(killing_consequence_residuals(
        phi0, &data.w, &geo, &mask, tol,
    )?);
    Ok(CheckReport::new(CHECK_SPIN_SLICE, r))
}

fn spin_transport_check(
    ctx: &Ctx,
    block: &SpacetimeBlock,
    analysis: Option<&BlockAnalysis>,
    phi0: &SpinorField,
) -> anyhow::Result<(CheckReport, SpinorField)> {
    let owned;
    let (ab, lgeo) = match analysis {
        Some(a) => (&a.block, &a.lgeo),
        None => {
            let ab = assemble(block)?;
            let lgeo = lorentz_geometry(&ab)?;
            owned = (ab, lgeo);
            (&owned.0, &owned.1)
        }
    };
    let bs = BlockSpin::new(ab, lgeo)?;
    let phi = bs.transport(&embed_seed(phi0), 0)?;
    let tol = ctx.cap(Some(ctx.tol.spinor));
    let mut r = bs.parallel_spinor_residual(&phi, &ab.mask(2, 2), tol)?;
    let last = ab.levels - 1;
    let slen = ab.slice_len();
    let back = bs.transport(&phi.values[last * slen..], last)?;
    let err = (0..slen)
        .map(|p| {
            let (a, b) = (back.values[p], phi0.values[p]);
            (a[0] - b[0]).norm().max((a[1] - b[1]).norm())
        })
        .fold(0.0, f64::max);
    r.push(scalar_entry(RETRANSPORT, err, tol));
    Ok((CheckReport::new(CHECK_SPIN_TRANSPORT, r), phi))
}

/// `(points, h, error)` on one rung.
type LadderRow = (usize, f64, f64);

/// Residuals of the random probe block on an `n`-point periodic grid.
pub fn probe_residuals(
    dim: usize,
    n: usize,
    amplitude: f64,
    seed: u64,
) -> anyhow::Result<(f64, ResidualReport)> {
    let chart = build_chart(ChartSpec::periodic_cube(dim.max(2), n))?;
    let h = chart.min_spacing();
    let rm = RandomMetric::new(&chart, amplitude, seed);
    let (block, exact) = rm.block(chart, PROBE_LEVELS, 0.0, PROBE_CFL * h)?;
    let a = BlockAnalysis::with_time_derivatives(&block, &exact)?;
    let mut r = a.gcm_residuals()?;
    r.extend(a.ricci_flat_relations()?);
    Ok((h, r))
}

fn is_gated(gated: &[String], key: &str) -> bool {
    let bare = key.rsplit('/').next().unwrap_or(key);
    gated.iter().any(|g| g == key || g == bare)
        || [GAUSS, CODAZZI_AMBIENT, MAINARDI]
            .iter()
            .any(|n| key == format!("{CHECK_PROBE}/{n}"))
}

/// Reruns the ladder checks on every grid and tabulates observed orders.
pub fn run_ladder(
    scn: &Scenario,
    seed: u64,
    timings: &mut Timings,
) -> anyhow::Result<Vec<ConvergenceResult>> {
    let cfg = scn.convergence_config();
    let mut checks: BTreeSet<Check> = cfg.checks.iter().copied().collect();
    checks.insert(Check::Constraints);
    let base = scn.chart.spec()?;
    let mut series: Vec<(String, Vec<LadderRow>)> = Vec::new();
    let mut add = |key: String, row: LadderRow| match series.iter_mut().find(|(k, _)| *k == key) {
        Some((_, v)) => v.push(row),
        None => series.push((key, vec![row])),
    };
    for &n in &cfg.ladder {
        let run = run_grid(scn, &base.with_points(n), &checks, false, false)
            .with_context(|| format!("ladder grid N = {n}"))?;
        if let Some(a) = run.abort {
            return Err(Aborted {
                code: a.code,
                message: format!("ladder grid N = {n}: {}", a.message),
            }
            .into());
        }
        for (stage, secs) in &run.timings.stages {
            timings.record(&format!("ladder_{n}_{stage}"), *secs);
        }
        for c in &run.checks {
            for e in &c.residuals.entries {
                if c.name == CHECK_EVOLUTION && e.name.ends_with("_growth") {
                    continue;
                }
                add(format!("{}/{}", c.name, e.name), (n, run.h, e.linf));
            }
        }
        if cfg.probe {
            let (h, r) = timed(timings, &format!("ladder_{n}_probe"), || {
                probe_residuals(scn.dim(), n, cfg.probe_amplitude, seed)
            })?;
            for e in &r.entries {
                add(format!("{CHECK_PROBE}/{}", e.name), (n, h, e.linf));
            }
        }
    }
    Ok(series
        .into_iter()
        .map(|(key, rows)| {
            let gated = is_gated(&cfg.gated, &key);
            ConvergenceResult::new(
                ConvergenceTable::from_errors(key, &rows),
                gated,
                cfg.min_order,
            )
        })
        .collect())
}

/// A finished run: the report plus the side outputs.
#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub trace: Option<MonitorTrace>,
    pub timings: Timings,
    pub dumps: FieldDumps,
}

pub fn execute(scn: &Scenario, verb: Verb, seed: u64) -> anyhow::Result<Outcome> {
    let (checks, ladder) = verb.plan(scn)?;
    let mut timings = Timings::default();
    let mut run = GridRun::default();
    if !checks.is_empty() {
        run = run_grid(scn, &scn.chart.spec()?, &checks, true, scn.output.dumps)?;
        timings = std::mem::take(&mut run.timings);
    }
    let convergence = if ladder && run.abort.is_none() {
        run_ladder(scn, seed, &mut timings)?
    } else {
        Vec::new()
    };
    let pass = run.abort.is_none()
        && run.checks.iter().all(|c| c.pass)
        && convergence.iter().all(|c| c.pass);
    let exit_code = match &run.abort {
        Some(a) => a.code,
        None if pass => EXIT_PASS,
        None => EXIT_VERIFICATION,
    };
    let report = Report {
        schema_version: REPORT_SCHEMA_VERSION,
        tool: format!("pnvflow {}", env!("CARGO_PKG_VERSION")),
        command: verb.as_str().into(),
        seed,
        scenario: scn.clone(),
        checks: run.checks,
        evolution: run.evolution,
        convergence,
        abort: run.abort.map(|a| a.message),
        pass,
        exit_code,
    };
    Ok(Outcome {
        report,
        trace: run.trace,
        timings,
        dumps: run.dumps,
    })
}
