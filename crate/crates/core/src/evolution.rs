//! Method-of-lines integration of the second-order systems for `(g_t, U_t, u_t)`.
//!
//! The unknowns are carried as the first-order system `(g, k, U, P, u, v)`
//! with `k = ġ`, `P = U̇`, `v = u̇`, advanced by classical RK4.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::chart::Chart;
use crate::constraints::{
    constraint_report, first_order_mask, norm_constraint, vector_constraint, ConstraintTolerances,
};
use crate::error::{Error, Result};
use crate::fields::{reduce, LapseField, LapseSample, NormKind, TensorField, Valence};
use crate::geometry::{
    dnabla, hessian_from_gradient, lower_endomorphism, second_fundamental_form, weingarten,
    GeometryCache,
};
use crate::initial_data::InitialData;
use crate::linalg::{is_positive_definite, symmetric_eigenvalues, MAX_DIM};
use crate::spacetime::{SliceLevel, SpacetimeBlock};

/// Evolution aborts when `min u` drops below this fraction of its initial minimum.
pub const DEGENERATE_U_FRACTION: f64 = 1e-8;
/// Field norms above this multiple of their initial size count as blow-up.
pub const BLOWUP_FACTOR: f64 = 1e12;
pub const DEFAULT_CFL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SystemKind {
    RicciFlat,
    PnvA,
    PnvB,
}

impl SystemKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SystemKind::RicciFlat => "RICCI_FLAT",
            SystemKind::PnvA => "PNV_A",
            SystemKind::PnvB => "PNV_B",
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "RICCI_FLAT" => Ok(SystemKind::RicciFlat),
            "PNV_A" => Ok(SystemKind::PnvA),
            "PNV_B" => Ok(SystemKind::PnvB),
            other => Err(Error::InvalidInput(format!(
                "unknown system kind `{other}`"
            ))),
        }
    }
}

/// One time level of the first-order system.
#[derive(Debug, Clone)]
pub struct EvolutionState {
    pub t: f64,
    pub g: TensorField,
    /// `ġ`
    pub k: TensorField,
    pub big_u: TensorField,
    /// `U̇`
    pub p: TensorField,
    pub u: Vec<f64>,
    /// `u̇`
    pub v: Vec<f64>,
}

impl EvolutionState {
    pub fn chart(&self) -> &Arc<Chart> {
        &self.g.chart
    }

    /// `W_t = −g⁻¹k / (2λ)`.
    pub fn weingarten(&self, geo: &GeometryCache, lambda: &[f64]) -> Result<TensorField> {
        let ii = second_fundamental_form(&self.k, lambda)?;
        Ok(weingarten(&ii, &geo.ginv))
    }

    fn field_sizes(&self) -> [(&'static str, f64); 6] {
        let m = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        [
            ("g", self.g.max_abs()),
            ("k", self.k.max_abs()),
            ("U", self.big_u.max_abs()),
            ("P", self.p.max_abs()),
            ("u", m(&self.u)),
            ("v", m(&self.v)),
        ]
    }

    fn min_u(&self) -> f64 {
        self.u.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// States that the RK4 driver can combine linearly.
pub trait OdeState: Sized {
    /// `self + a·d`
    fn axpy(&self, a: f64, d: &Self) -> Result<Self>;
}

impl OdeState for Vec<f64> {
    fn axpy(&self, a: f64, d: &Self) -> Result<Self> {
        if self.len() != d.len() {
            return Err(Error::Shape("state length mismatch".into()));
        }
        Ok(self.iter().zip(d).map(|(x, y)| x + a * y).collect())
    }
}

impl OdeState for EvolutionState {
    fn axpy(&self, a: f64, d: &Self) -> Result<Self> {
        Ok(Self {
            t: self.t,
            g: self.g.axpy(a, &d.g)?,
            k: self.k.axpy(a, &d.k)?,
            big_u: self.big_u.axpy(a, &d.big_u)?,
            p: self.p.axpy(a, &d.p)?,
            u: self.u.axpy(a, &d.u)?,
            v: self.v.axpy(a, &d.v)?,
        })
    }
}

/// One classical RK4 step for `y' = f(t, y)`. `fix` runs on every stage
/// state and on the result.
pub fn rk4<S: OdeState>(
    y: &S,
    t: f64,
    dt: f64,
    mut f: impl FnMut(f64, &S) -> Result<S>,
    mut fix: impl FnMut(&mut S) -> Result<()>,
) -> Result<S> {
    let k1 = f(t, y)?;
    rk4_from(y, t, dt, k1, &mut f, &mut fix)
}

fn rk4_from<S: OdeState>(
    y: &S,
    t: f64,
    dt: f64,
    k1: S,
    f: &mut impl FnMut(f64, &S) -> Result<S>,
    fix: &mut impl FnMut(&mut S) -> Result<()>,
) -> Result<S> {
    let mut y2 = y.axpy(0.5 * dt, &k1)?;
    fix(&mut y2)?;
    let k2 = f(t + 0.5 * dt, &y2)?;
    let mut y3 = y.axpy(0.5 * dt, &k2)?;
    fix(&mut y3)?;
    let k3 = f(t + 0.5 * dt, &y3)?;
    let mut y4 = y.axpy(dt, &k3)?;
    fix(&mut y4)?;
    let k4 = f(t + dt, &y4)?;
    let mut out = y
        .axpy(dt / 6.0, &k1)?
        .axpy(dt / 3.0, &k2)?
        .axpy(dt / 3.0, &k3)?
        .axpy(dt / 6.0, &k4)?;
    fix(&mut out)?;
    Ok(out)
}

/// Checks the constraints of `data` against `tol` and builds the state
/// `g₀ = g, ġ₀ = −2λ₀II, U₀ = U, U̇₀ = u grad λ₀ + λ₀W(U), u₀ = u, u̇₀ = dλ₀(U)`.
pub fn initial_state(data: &InitialData, tol: &ConstraintTolerances) -> Result<EvolutionState> {
    let report = constraint_report(data, tol)?;
    if let Some(f) = report.failures().next() {
        return Err(Error::ConstraintViolation {
            name: f.name.clone(),
            residual: f.linf,
            tolerance: f.tolerance.unwrap_or(0.0),
        });
    }
    initial_state_unchecked(data)
}

/// [`initial_state`] without the constraint check.
pub fn initial_state_unchecked(data: &InitialData) -> Result<EvolutionState> {
    let chart = data.chart.clone();
    let n = chart.dim();
    let lam = data.lapse.sample(&chart, 0.0)?;
    let mut ii = lower_endomorphism(&data.w, &data.g);
    ii.symmetrize();
    let two_lam: Vec<f64> = lam.lambda.iter().map(|l| -2.0 * l).collect();
    let k = ii.scale_by(&two_lam);
    let geo = GeometryCache::new(&data.g)?;
    let wu = data.w.apply(&data.big_u)?;
    let mut p = TensorField::zeros(chart.clone(), Valence::VECTOR);
    let mut v = vec![0.0; chart.len()];
    for node in 0..chart.len() {
        for i in 0..n {
            let mut grad = 0.0;
            for j in 0..n {
                grad += geo.ginv.comps[i * n + j][node] * lam.grad[j][node];
            }
            p.comps[i][node] = data.u[node] * grad + lam.lambda[node] * wu.comps[i][node];
            v[node] += lam.grad[i][node] * data.big_u.comps[i][node];
        }
    }
    Ok(EvolutionState {
        t: 0.0,
        g: data.g.clone(),
        k,
        big_u: data.big_u.clone(),
        p,
        u: data.u.clone(),
        v,
    })
}

/// Second time derivatives `(g̈, Ü, ü)` at one state.
#[derive(Debug, Clone)]
pub struct Rhs {
    pub gdd: TensorField,
    pub big_u_dd: TensorField,
    pub udd: Vec<f64>,
    /// Largest `½|g̈_ij − g̈_ji|` before the symmetric part was taken.
    pub asymmetry: f64,
}

/// Per-node inputs gathered into small dense arrays.
#[derive(Default)]
struct Node {
    g: [f64; MAX_DIM * MAX_DIM],
    gi: [f64; MAX_DIM * MAX_DIM],
    k: [f64; MAX_DIM * MAX_DIM],
    h: [f64; MAX_DIM * MAX_DIM],
    bu: [f64; MAX_DIM],
    p: [f64; MAX_DIM],
    dl: [f64; MAX_DIM],
    dtdl: [f64; MAX_DIM],
}

/// Evaluates the right-hand side of `kind`. `u_floor` is the `DegenerateU`
/// threshold on `min u` (ignored for `RICCI_FLAT`).
pub fn rhs(kind: SystemKind, s: &EvolutionState, lapse: &LapseSample, u_floor: f64) -> Result<Rhs> {
    let chart = s.chart().clone();
    let n = chart.dim();
    let len = chart.len();
    if kind != SystemKind::RicciFlat {
        let min_u = s.min_u();
        if !(min_u >= u_floor) || !(min_u > 0.0) {
            return Err(Error::DegenerateU { t: s.t, min_u });
        }
    }
    let geo = GeometryCache::new(&s.g)?;
    let hess = hessian_from_gradient(&geo, &lapse.grad);
    let inv_l: Vec<f64> = lapse.lambda.iter().map(|l| 1.0 / l).collect();
    let d = match kind {
        SystemKind::RicciFlat => None,
        _ => Some(dnabla(&geo, &s.k.scale_by(&inv_l))),
    };
    let riem = (kind == SystemKind::PnvB).then(|| geo.riemann());
    let ric = (kind == SystemKind::RicciFlat).then(|| geo.ricci());

    let mut gdd = TensorField::zeros(chart.clone(), Valence::BILINEAR);
    let mut big_u_dd = TensorField::zeros(chart.clone(), Valence::VECTOR);
    let mut udd = vec![0.0; len];
    let mut asymmetry: f64 = 0.0;
    let mut nd = Node::default();
    let mut out = [0.0; MAX_DIM * MAX_DIM];
    for node in 0..len {
        for c in 0..n * n {
            nd.g[c] = s.g.comps[c][node];
            nd.gi[c] = geo.ginv.comps[c][node];
            nd.k[c] = s.k.comps[c][node];
            nd.h[c] = hess.comps[c][node];
        }
        for i in 0..n {
            nd.bu[i] = s.big_u.comps[i][node];
            nd.p[i] = s.p.comps[i][node];
            nd.dl[i] = lapse.grad[i][node];
            nd.dtdl[i] = lapse.dt_grad[i][node];
        }
        let lam = lapse.lambda[node];
        let lt = lapse.dt[node] / lam;
        let u = s.u[node];

        // m = g⁻¹k, kk = k g⁻¹ k
        let mut m = [0.0; MAX_DIM * MAX_DIM];
        let mut kk = [0.0; MAX_DIM * MAX_DIM];
        for a in 0..n {
            for j in 0..n {
                m[a * n + j] = (0..n).map(|b| nd.gi[a * n + b] * nd.k[b * n + j]).sum();
            }
        }
        for i in 0..n {
            for j in 0..n {
                kk[i * n + j] = (0..n).map(|a| nd.k[i * n + a] * m[a * n + j]).sum();
            }
        }

        match kind {
            SystemKind::RicciFlat => {
                let tr: f64 = (0..n).map(|a| m[a * n + a]).sum();
                let ric = ric.expect("ricci");
                for c in 0..n * n {
                    out[c] = (lt - 0.5 * tr) * nd.k[c] + kk[c] + 2.0 * lam * nd.h[c]
                        - 2.0 * lam * lam * ric.comps[c][node];
                }
            }
            SystemKind::PnvA | SystemKind::PnvB => {
                let d = d.as_ref().expect("dnabla");
                // x_ij = d^∇(k/λ)(U, ∂_i, ∂_j)
                let mut x = [0.0; MAX_DIM * MAX_DIM];
                for i in 0..n {
                    for j in 0..n {
                        x[i * n + j] = (0..n)
                            .map(|a| nd.bu[a] * d.comps[(a * n + i) * n + j][node])
                            .sum();
                    }
                }
                let l2u = lam * lam / u;
                for i in 0..n {
                    for j in 0..n {
                        let c = i * n + j;
                        let common = 0.5 * kk[c] + lt * nd.k[c] + 2.0 * lam * nd.h[c];
                        out[c] = if kind == SystemKind::PnvA {
                            l2u * x[j * n + i] + common
                        } else {
                            l2u * (x[c] + x[j * n + i]) + common
                        };
                    }
                }
                if kind == SystemKind::PnvB {
                    let riem = riem.expect("riemann");
                    let mut ku = [0.0; MAX_DIM];
                    for i in 0..n {
                        ku[i] = (0..n).map(|a| nd.k[i * n + a] * nd.bu[a]).sum();
                    }
                    let kuu: f64 = (0..n).map(|i| ku[i] * nd.bu[i]).sum();
                    // ru_ij = R(∂_i, U, U, ∂_j)
                    let mut ru = [0.0; MAX_DIM * MAX_DIM];
                    for i in 0..n {
                        for j in 0..n {
                            let mut acc = 0.0;
                            for a in 0..n {
                                for b in 0..n {
                                    acc += riem.comps[((i * n + a) * n + b) * n + j][node]
                                        * nd.bu[a]
                                        * nd.bu[b];
                                }
                            }
                            ru[i * n + j] = acc;
                        }
                    }
                    let cr = lam * lam / (u * u);
                    let cq = 0.5 / (u * u);
                    for i in 0..n {
                        for j in 0..n {
                            let c = i * n + j;
                            out[c] +=
                                cr * (ru[c] + ru[j * n + i]) + cq * (nd.k[c] * kuu - ku[i] * ku[j]);
                        }
                    }
                }

                // Ü and ü
                let mut gradl = [0.0; MAX_DIM];
                let mut comm = [0.0; MAX_DIM];
                for i in 0..n {
                    gradl[i] = (0..n).map(|j| nd.gi[i * n + j] * nd.dl[j]).sum();
                }
                for i in 0..n {
                    comm[i] = (0..n)
                        .map(|b| -m[i * n + b] * gradl[b] + nd.gi[i * n + b] * nd.dtdl[b])
                        .sum();
                }
                let dlu: f64 = (0..n).map(|a| nd.dl[a] * nd.bu[a]).sum();
                let v = s.v[node];
                let mut low = [0.0; MAX_DIM];
                for i in 0..n {
                    let mut acc = 0.0;
                    for a in 0..n {
                        acc += -0.5 * l2u * x[i * n + a] * nd.bu[a]
                            - 0.5 * lt * nd.k[i * n + a] * nd.bu[a]
                            - lam * nd.h[i * n + a] * nd.bu[a]
                            - nd.k[i * n + a] * nd.p[a]
                            + u * nd.g[i * n + a] * comm[a]
                            + 0.5 * u * nd.k[i * n + a] * gradl[a];
                    }
                    low[i] = acc + (2.0 * v - dlu) * nd.dl[i];
                }
                for j in 0..n {
                    big_u_dd.comps[j][node] = (0..n).map(|i| nd.gi[j * n + i] * low[i]).sum();
                }
                let mut acc = 0.0;
                for i in 0..n {
                    let mut comm_low = 0.0;
                    let mut kg = 0.0;
                    for a in 0..n {
                        comm_low += nd.g[i * n + a] * comm[a];
                        kg += nd.k[i * n + a] * gradl[a];
                    }
                    acc += comm_low * nd.bu[i] + 2.0 * nd.dl[i] * nd.p[i] + 1.5 * kg * nd.bu[i]
                        - u * nd.dl[i] * gradl[i];
                }
                udd[node] = acc;
            }
        }
        for i in 0..n {
            for j in 0..n {
                gdd.comps[i * n + j][node] = out[i * n + j];
                if j > i {
                    asymmetry = asymmetry.max(0.5 * (out[i * n + j] - out[j * n + i]).abs());
                }
            }
        }
    }
    gdd.symmetrize();
    Ok(Rhs {
        gdd,
        big_u_dd,
        udd,
        asymmetry,
    })
}

/// Largest `½|λ²/u · d^∇(k/λ)(∂_i, ∂_j, U)|`: by the Bianchi identity this is
/// the antisymmetric part of the `PNV_A` right-hand side, computed without it.
pub fn dnabla_asymmetry(s: &EvolutionState, lapse: &LapseSample) -> Result<f64> {
    let n = s.g.dim();
    let geo = GeometryCache::new(&s.g)?;
    let inv_l: Vec<f64> = lapse.lambda.iter().map(|l| 1.0 / l).collect();
    let d = dnabla(&geo, &s.k.scale_by(&inv_l));
    let mut worst: f64 = 0.0;
    for node in 0..s.g.len() {
        let lam = lapse.lambda[node];
        let f = lam * lam / s.u[node];
        for i in 0..n {
            for j in i + 1..n {
                let y: f64 = (0..n)
                    .map(|c| d.comps[(i * n + j) * n + c][node] * s.big_u.comps[c][node])
                    .sum();
                worst = worst.max(0.5 * (f * y).abs());
            }
        }
    }
    Ok(worst)
}

/// One row of the monitor trace, describing an accepted state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct MonitorRecord {
    pub step: usize,
    pub t: f64,
    /// `‖∇U + uW‖∞` on the first-order mask.
    pub vector_constraint: f64,
    /// `‖g(U,U) − u²‖∞`
    pub norm_constraint: f64,
    /// Antisymmetric part of `g̈` at this state.
    pub symmetry_defect: f64,
    /// The same quantity from `d^∇(k/λ)(·,·,U)`; `PNV_A` only.
    pub dnabla_defect: Option<f64>,
    /// Largest antisymmetric part of `g̈` over the stages of the step that
    /// produced this state.
    pub stage_asymmetry: f64,
    /// Largest antisymmetric part removed from `g` or `k` by re-symmetrization.
    pub resymmetrization: f64,
    pub min_u: f64,
    pub min_eig_g: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct MonitorTrace {
    pub records: Vec<MonitorRecord>,
}

impl MonitorTrace {
    pub const CSV_HEADER: &'static str = "step,t,vector_constraint,norm_constraint,symmetry_defect,dnabla_defect,stage_asymmetry,resymmetrization,min_u,min_eig_g";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let dn = r
                .dnabla_defect
                .map(|v| format!("{v:e}"))
                .unwrap_or_default();
            s.push_str(&format!(
                "{},{},{:e},{:e},{:e},{},{:e},{:e},{:e},{:e}\n",
                r.step,
                r.t,
                r.vector_constraint,
                r.norm_constraint,
                r.symmetry_defect,
                dn,
                r.stage_asymmetry,
                r.resymmetrization,
                r.min_u,
                r.min_eig_g
            ));
        }
        s
    }

    pub fn max_of(&self, f: impl Fn(&MonitorRecord) -> f64) -> f64 {
        self.records.iter().map(f).fold(0.0, f64::max)
    }
}

/// Result of [`evolve`].
#[derive(Debug, Clone)]
pub struct Evolution {
    pub state: EvolutionState,
    pub block: SpacetimeBlock,
    pub trace: MonitorTrace,
    pub dt: f64,
    pub steps: usize,
}

/// Number of steps and the step size actually used: `dt` is shrunk so that
/// it divides `t_end − t0`.
pub fn step_plan(t0: f64, t_end: f64, dt: f64) -> Result<(usize, f64)> {
    let span = t_end - t0;
    if !(dt > 0.0) || !(span > 0.0) || !span.is_finite() {
        return Err(Error::InvalidInput(format!(
            "need dt > 0 and t_end > t0 (dt = {dt}, t0 = {t0}, t_end = {t_end})"
        )));
    }
    let steps = ((span / dt) - 1e-9).ceil().max(1.0) as usize;
    Ok((steps, span / steps as f64))
}

fn min_eigenvalue(g: &TensorField) -> f64 {
    let n = g.dim();
    let mut a = [0.0; MAX_DIM * MAX_DIM];
    let mut worst = f64::INFINITY;
    for node in 0..g.len() {
        g.fill_matrix(node, &mut a);
        worst = worst.min(symmetric_eigenvalues(&a, n)[0]);
    }
    worst
}

fn check_stage(s: &mut EvolutionState, resym: &mut f64) -> Result<()> {
    *resym = resym.max(s.g.symmetrize()).max(s.k.symmetrize());
    let n = s.g.dim();
    let mut a = [0.0; MAX_DIM * MAX_DIM];
    for node in 0..s.g.len() {
        s.g.fill_matrix(node, &mut a);
        if !is_positive_definite(&a, n, 0.0) {
            return Err(Error::StepRejected {
                t: s.t,
                reason: format!("g not positive definite at node {node}"),
            });
        }
    }
    if let Some((node, u)) = s.u.iter().enumerate().find(|(_, u)| !(**u > 0.0)) {
        return Err(Error::StepRejected {
            t: s.t,
            reason: format!("u = {u:e} at node {node}"),
        });
    }
    Ok(())
}

fn monitor(
    kind: SystemKind,
    s: &EvolutionState,
    lapse: &LapseSample,
    r: &Rhs,
    step: usize,
) -> Result<MonitorRecord> {
    let chart = s.chart();
    let geo = GeometryCache::new(&s.g)?;
    let w = s.weingarten(&geo, &lapse.lambda)?;
    let vc = vector_constraint(&geo, &s.big_u, &s.u, &w);
    let mag: Vec<f64> = crate::fields::pointwise_norm_sq(&vc, &geo.g, &geo.ginv)?
        .into_iter()
        .map(|v| v.max(0.0).sqrt())
        .collect();
    let mask = first_order_mask(chart);
    let nc: Vec<f64> = norm_constraint(&s.g, &s.big_u, &s.u)
        .iter()
        .map(|v| v.abs())
        .collect();
    Ok(MonitorRecord {
        step,
        t: s.t,
        vector_constraint: reduce(&mag, NormKind::Linf, &mask)?,
        norm_constraint: reduce(&nc, NormKind::Linf, &mask)?,
        symmetry_defect: r.asymmetry,
        dnabla_defect: match kind {
            SystemKind::PnvA => Some(dnabla_asymmetry(s, lapse)?),
            _ => None,
        },
        stage_asymmetry: 0.0,
        resymmetrization: 0.0,
        min_u: s.min_u(),
        min_eig_g: min_eigenvalue(&s.g),
    })
}

fn level(s: &EvolutionState, lapse: &LapseSample) -> SliceLevel {
    SliceLevel {
        t: s.t,
        g: s.g.clone(),
        big_u: s.big_u.clone(),
        u: s.u.clone(),
        lambda: lapse.lambda.clone(),
    }
}

fn derivative(s: &EvolutionState, r: Rhs) -> EvolutionState {
    EvolutionState {
        t: s.t,
        g: s.k.clone(),
        k: r.gdd,
        big_u: s.p.clone(),
        p: r.big_u_dd,
        u: s.v.clone(),
        v: r.udd,
    }
}

/// One RK4 step; returns the new state and the largest stage asymmetry and
/// re-symmetrization defect.
pub fn rk4_step(
    kind: SystemKind,
    state: &EvolutionState,
    dt: f64,
    lapse: &LapseField,
    u_floor: f64,
) -> Result<(EvolutionState, f64, f64)> {
    let chart = state.chart().clone();
    let l0 = lapse.sample(&chart, state.t)?;
    let k1 = rhs(kind, state, &l0, u_floor)?;
    step_with(kind, state, dt, lapse, u_floor, k1)
}

fn step_with(
    kind: SystemKind,
    state: &EvolutionState,
    dt: f64,
    lapse: &LapseField,
    u_floor: f64,
    k1: Rhs,
) -> Result<(EvolutionState, f64, f64)> {
    let chart = state.chart().clone();
    let t0 = state.t;
    let mut asym = k1.asymmetry;
    let mut resym: f64 = 0.0;
    let d1 = derivative(state, k1);
    let mut f = |t: f64, s: &EvolutionState| -> Result<EvolutionState> {
        let mut s = s.clone();
        s.t = t;
        let l = lapse.sample(&chart, t)?;
        let r = rhs(kind, &s, &l, u_floor)?;
        asym = asym.max(r.asymmetry);
        Ok(derivative(&s, r))
    };
    let mut fix = |s: &mut EvolutionState| check_stage(s, &mut resym);
    let mut out = rk4_from(state, t0, dt, d1, &mut f, &mut fix)?;
    out.t = t0 + dt;
    Ok((out, asym, resym))
}

/// Integrates from `state` to `t_end` with a step no larger than `dt`,
/// recording every accepted level.
pub fn evolve(
    kind: SystemKind,
    state: &EvolutionState,
    lapse: &LapseField,
    t_end: f64,
    dt: f64,
) -> Result<Evolution> {
    let chart = state.chart().clone();
    let (steps, dt) = step_plan(state.t, t_end, dt)?;
    let t0 = state.t;
    let u_floor = DEGENERATE_U_FRACTION * state.min_u();
    let scales = state.field_sizes().map(|(_, v)| v.max(1.0));

    let mut block = SpacetimeBlock::new(chart.clone(), dt);
    let mut trace = MonitorTrace::default();
    let mut s = state.clone();
    let mut l = lapse.sample(&chart, s.t)?;
    let mut r = rhs(kind, &s, &l, u_floor)?;
    trace.records.push(monitor(kind, &s, &l, &r, 0)?);
    block.push(level(&s, &l))?;
    for step in 1..=steps {
        let (mut next, asym, resym) = step_with(kind, &s, dt, lapse, u_floor, r)?;
        next.t = t0 + step as f64 * dt;
        for ((name, value), scale) in next.field_sizes().iter().zip(&scales) {
            if !value.is_finite() || *value > BLOWUP_FACTOR * scale {
                return Err(Error::Blowup {
                    t: next.t,
                    field: (*name).into(),
                    value: *value,
                });
            }
        }
        s = next;
        l = lapse.sample(&chart, s.t)?;
        r = rhs(kind, &s, &l, u_floor)?;
        let mut rec = monitor(kind, &s, &l, &r, step)?;
        rec.stage_asymmetry = asym;
        rec.resymmetrization = resym;
        trace.records.push(rec);
        block.push(level(&s, &l))?;
    }
    Ok(Evolution {
        state: s,
        block,
        trace,
        dt,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{build_chart, ChartSpec};
    use crate::expr::parse_expression;
    use crate::initial_data::{gen_circle_codazzi, gen_conformal_torus, gen_flat, TorusField};

    fn circle(n: usize) -> InitialData {
        let c = build_chart(ChartSpec::periodic_cube(1, n)).unwrap();
        gen_circle_codazzi(
            c,
            &parse_expression("0.3*sin(x1)").unwrap(),
            LapseField::constant(1.0),
        )
        .unwrap()
    }

    #[test]
    fn scalar_ode_is_fourth_order() {
        let solve = |steps: usize| {
            let dt = 1.0 / steps as f64;
            let mut y = vec![1.0, 0.0];
            for i in 0..steps {
                y = rk4(
                    &y,
                    i as f64 * dt,
                    dt,
                    |_, y| Ok(vec![y[1], -y[0]]),
                    |_| Ok(()),
                )
                .unwrap();
            }
            (y[0] - 1f64.cos()).abs()
        };
        let (e1, e2) = (solve(20), solve(40));
        assert!((e1 / e2).log2() > 3.8, "{e1} {e2}");
    }

    #[test]
    fn flat_initial_state() {
        let c = build_chart(ChartSpec::periodic_cube(2, 8)).unwrap();
        let d = gen_flat(c, &[1.0, 0.0], LapseField::constant(1.0)).unwrap();
        let s = initial_state(&d, &ConstraintTolerances::truncation(1.0, 0.1)).unwrap();
        assert_eq!(s.k.max_abs(), 0.0);
        assert_eq!(s.p.max_abs(), 0.0);
        assert!(s.v.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn flat_is_stationary_for_every_system() {
        let c = build_chart(ChartSpec::periodic_cube(2, 8)).unwrap();
        let d = gen_flat(c, &[0.6, 0.8], LapseField::constant(1.0)).unwrap();
        let s = initial_state_unchecked(&d).unwrap();
        for kind in [SystemKind::RicciFlat, SystemKind::PnvA, SystemKind::PnvB] {
            let e = evolve(kind, &s, &d.lapse, 0.5, 0.1).unwrap();
            assert!(e.state.g.sub(&s.g).unwrap().max_abs() <= 1e-14);
            assert!(e.state.big_u.sub(&s.big_u).unwrap().max_abs() <= 1e-14);
            assert_eq!(e.block.levels.len(), 6);
        }
    }

    #[test]
    fn circle_initial_state() {
        let d = circle(32);
        let s = initial_state_unchecked(&d).unwrap();
        for node in 0..32 {
            let x = d.chart.coord(node, 0);
            let w = 0.3 * x.sin();
            assert!((s.k.comps[0][node] + 2.0 * w).abs() < 1e-12);
            assert!((s.p.comps[0][node] - d.u[node] * w).abs() < 1e-12);
        }
        // 2u u̇₀ = 2g(U̇₀,U₀) − 2λ II(U₀,U₀)
        let gpu = s.g.eval2(&s.p, &s.big_u);
        let iuu = s.k.scale(-0.5).eval2(&s.big_u, &s.big_u);
        for node in 0..32 {
            let lhs = 2.0 * s.u[node] * s.v[node];
            assert!((lhs - (2.0 * gpu[node] - 2.0 * iuu[node])).abs() < 1e-12);
        }
    }

    #[test]
    fn circle_second_derivative_matches_closed_form() {
        let d = circle(64);
        let s = initial_state_unchecked(&d).unwrap();
        let l = d.lapse.sample(&d.chart, 0.0).unwrap();
        let rb = rhs(SystemKind::PnvB, &s, &l, 0.0).unwrap();
        let ra = rhs(SystemKind::PnvA, &s, &l, 0.0).unwrap();
        for node in 0..64 {
            let w = 0.3 * d.chart.coord(node, 0).sin();
            assert!((rb.gdd.comps[0][node] - 2.0 * w * w).abs() < 1e-10);
        }
        assert!(ra.gdd.sub(&rb.gdd).unwrap().max_abs() < 1e-12);
        assert!(ra.big_u_dd.sub(&rb.big_u_dd).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn circle_oracle_short_run() {
        let d = circle(64);
        let s = initial_state_unchecked(&d).unwrap();
        let e = evolve(SystemKind::PnvB, &s, &d.lapse, 0.5, 0.05).unwrap();
        assert_eq!(e.steps, 10);
        for node in 0..64 {
            let w = 0.3 * d.chart.coord(node, 0).sin();
            let exact = (1.0 - 0.5 * w).powi(2);
            assert!((e.state.g.comps[0][node] - exact).abs() < 1e-8);
        }
        assert_eq!(e.trace.records.len(), 11);
    }

    #[test]
    fn pnv_b_rhs_is_symmetric_on_torus() {
        let c = build_chart(ChartSpec::periodic_cube(2, 32)).unwrap();
        let sigma = parse_expression("0.2*cos(x1)*cos(x2)").unwrap();
        let d = gen_conformal_torus(
            c,
            &sigma,
            [1.0, 0.0, 1.0],
            &TorusField::Builtin { c: 1.0 },
            LapseField::constant(1.0),
        )
        .unwrap();
        let s = initial_state_unchecked(&d).unwrap();
        let l = d.lapse.sample(&d.chart, 0.0).unwrap();
        let rb = rhs(SystemKind::PnvB, &s, &l, 0.0).unwrap();
        assert!(rb.asymmetry <= 1e-12, "{}", rb.asymmetry);
        let ra = rhs(SystemKind::PnvA, &s, &l, 0.0).unwrap();
        let est = dnabla_asymmetry(&s, &l).unwrap();
        assert!(
            (ra.asymmetry - est).abs() <= 1e-10,
            "{} {}",
            ra.asymmetry,
            est
        );
    }

    #[test]
    fn step_plan_divides_interval() {
        let (n, dt) = step_plan(0.0, 1.0, 2.0 * std::f64::consts::PI / 256.0).unwrap();
        assert_eq!(n, 41);
        assert!((dt * 41.0 - 1.0).abs() < 1e-15);
        assert!(step_plan(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn degenerate_u_aborts() {
        let d = circle(16);
        let mut s = initial_state_unchecked(&d).unwrap();
        s.u[3] = 1e-12;
        let l = d.lapse.sample(&d.chart, 0.0).unwrap();
        assert!(matches!(
            rhs(SystemKind::PnvB, &s, &l, 1e-8),
            Err(Error::DegenerateU { .. })
        ));
    }

    #[test]
    fn csv_has_one_row_per_record() {
        let d = circle(16);
        let s = initial_state_unchecked(&d).unwrap();
        let e = evolve(SystemKind::PnvA, &s, &d.lapse, 0.2, 0.05).unwrap();
        let csv = e.trace.to_csv();
        assert_eq!(csv.lines().count(), e.trace.records.len() + 1);
        assert!(csv.starts_with("step,t,"));
    }
}
