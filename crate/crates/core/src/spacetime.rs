//! The Lorentzian block `ḡ = −λ²dt² + g_t` assembled from a time history, and
//! residuals of the parallel null vector and curvature identities computed
//! directly from it.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chart::{build_chart, interior_mask_axes, Boundary, Chart, ChartSpec, Mask};
use crate::constraints::ricci_flat_constraint_residuals;
use crate::error::{Error, Result};
use crate::fields::{euclidean_pointwise, pointwise_norm_sq, Symmetry, TensorField, Valence};
use crate::geometry::{
    covariant_derivative, divergence, dnabla, hessian, trace, weingarten, GeometryCache,
};
use crate::initial_data::{codazzi_oracle_metric, InitialData};
use crate::linalg::{invert, is_positive_definite, MAX_DIM};
use crate::report::{ResidualEntry, ResidualReport};

/// Fewest time levels a block may hold.
pub const MIN_LEVELS: usize = 10;
/// Time-axis mask width for residuals built from first derivatives of `ḡ`.
pub const FIRST_ORDER_WIDTH: usize = 2;
/// Time-axis mask width for curvature residuals.
pub const CURVATURE_WIDTH: usize = 4;
/// `N = U/u` is only formed where `u` exceeds this.
pub const U_EPSILON: f64 = 1e-8;

pub const NABLA_V: &str = "nabla_v";
pub const NABLA_V_PROJECTED: &str = "nabla_v_projected";
pub const NULL_NORM: &str = "null_norm";
pub const SPLIT_SPATIAL: &str = "split_spatial";
pub const SPLIT_TIME_VECTOR: &str = "split_time_vector";
pub const SPLIT_TIME_SCALAR: &str = "split_time_scalar";
pub const GAUSS: &str = "gauss";
pub const CODAZZI_AMBIENT: &str = "codazzi_ambient";
pub const MAINARDI: &str = "mainardi";
pub const RIC_TT_NN: &str = "ric_tt_minus_nn";
pub const RIC_TT_NT: &str = "ric_tt_minus_nt";
pub const RIC_PERP: &str = "ric_perp";
pub const SCAL_BAR: &str = "scal_bar";
pub const RIC_RANK: &str = "ric_rank_one";
pub const SLICE_TRACE_PERP: &str = "slice_trace_dnabla_perp";
pub const SLICE_TRACE_VECTOR: &str = "slice_trace_dnabla_vector";
pub const SLICE_SCALAR: &str = "slice_scalar_identity";
pub const SLICE_RIC_PERP: &str = "slice_ricci_perp";
pub const SLICE_RIC_MIXED: &str = "slice_ricci_mixed";
pub const SLICE_RIC_NN: &str = "slice_ricci_nn";
pub const HAMILTONIAN_RELATION: &str = "hamiltonian_relation";
pub const MOMENTUM_RELATION: &str = "momentum_relation";

/// Slice data at one time level.
#[derive(Debug, Clone)]
pub struct SliceLevel {
    pub t: f64,
    pub g: TensorField,
    pub big_u: TensorField,
    pub u: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// Equally spaced time levels on one spatial chart.
#[derive(Debug, Clone)]
pub struct SpacetimeBlock {
    pub chart: Arc<Chart>,
    pub dt: f64,
    pub levels: Vec<SliceLevel>,
}

impl SpacetimeBlock {
    pub fn new(chart: Arc<Chart>, dt: f64) -> Self {
        Self {
            chart,
            dt,
            levels: Vec::new(),
        }
    }

    pub fn push(&mut self, level: SliceLevel) -> Result<()> {
        let len = self.chart.len();
        if level.g.len() != len || level.u.len() != len || level.lambda.len() != len {
            return Err(Error::Shape("level does not match the block chart".into()));
        }
        if let Some(last) = self.levels.last() {
            let gap = level.t - last.t;
            if (gap - self.dt).abs() > 1e-9 * self.dt.max(1.0) {
                return Err(Error::Shape(format!(
                    "level spacing {gap} differs from dt = {}",
                    self.dt
                )));
            }
        }
        self.levels.push(level);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.t).collect()
    }

    /// The last `count` levels (or all of them).
    pub fn tail(&self, count: usize) -> SpacetimeBlock {
        let start = self.levels.len().saturating_sub(count);
        Self {
            chart: self.chart.clone(),
            dt: self.dt,
            levels: self.levels[start..].to_vec(),
        }
    }
}

/// The assembled `(n+1)`-dimensional metric and null vector. Axis 0 of
/// `chart` is time (OPEN); block node `l·len + p` is slice node `p` at level `l`.
#[derive(Debug, Clone)]
pub struct AssembledBlock {
    pub chart: Arc<Chart>,
    pub slice_chart: Arc<Chart>,
    pub gbar: TensorField,
    /// `V = (u/λ)∂_t − U`
    pub v: TensorField,
    pub lambda: Vec<f64>,
    pub u: Vec<f64>,
    pub levels: usize,
}

impl AssembledBlock {
    pub fn slice_len(&self) -> usize {
        self.slice_chart.len()
    }

    /// Block mask with `time` nodes excluded at each end of the time axis and
    /// `space` nodes at OPEN spatial boundaries.
    pub fn mask(&self, time: usize, space: usize) -> Mask {
        let mut w = vec![space; self.chart.dim()];
        w[0] = time;
        interior_mask_axes(&self.chart, &w)
    }

    /// Levels whose slices lie inside a time mask of width `w`.
    pub fn interior_levels(&self, w: usize) -> std::ops::Range<usize> {
        w..self.levels.saturating_sub(w)
    }
}

/// Builds `ḡ` (`ḡ₀₀ = −λ²`, `ḡ₀ᵢ = 0`, `ḡᵢⱼ = g_t`) and checks its signature.
pub fn assemble(block: &SpacetimeBlock) -> Result<AssembledBlock> {
    let levels = block.levels.len();
    if levels < MIN_LEVELS {
        return Err(Error::InvalidSpec(format!(
            "a block needs at least {MIN_LEVELS} levels, got {levels}"
        )));
    }
    let sc = block.chart.clone();
    let n = sc.dim();
    if n + 1 > MAX_DIM {
        return Err(Error::DimensionUnsupported(n));
    }
    let n1 = n + 1;
    let slen = sc.len();
    let t0 = block.levels[0].t;
    let t1 = block.levels[levels - 1].t;
    let mut spec = ChartSpec::new(vec![[t0, t1]], vec![levels], vec![Boundary::Open]);
    spec.extents.extend(sc.spec().extents.iter().copied());
    spec.points.extend(sc.spec().points.iter().copied());
    spec.boundary.extend(sc.spec().boundary.iter().copied());
    let chart = build_chart(spec)?;
    let len = chart.len();

    let mut gbar = TensorField::zeros(chart.clone(), Valence::BILINEAR);
    let mut v = TensorField::zeros(chart.clone(), Valence::VECTOR);
    let mut lambda = vec![0.0; len];
    let mut u = vec![0.0; len];
    let mut a = [0.0; MAX_DIM * MAX_DIM];
    for (l, lev) in block.levels.iter().enumerate() {
        for p in 0..slen {
            let bp = l * slen + p;
            let lam = lev.lambda[p];
            if !(lam > 0.0) {
                return Err(Error::Signature(format!(
                    "lapse {lam} at t = {}, node {p}",
                    lev.t
                )));
            }
            lev.g.fill_matrix(p, &mut a);
            if !is_positive_definite(&a, n, 0.0) {
                return Err(Error::Signature(format!(
                    "spatial metric not positive definite at t = {}, node {p}",
                    lev.t
                )));
            }
            gbar.comps[0][bp] = -lam * lam;
            for i in 0..n {
                for j in 0..n {
                    gbar.comps[(i + 1) * n1 + j + 1][bp] = lev.g.comps[i * n + j][p];
                }
                v.comps[i + 1][bp] = -lev.big_u.comps[i][p];
            }
            v.comps[0][bp] = lev.u[p] / lam;
            lambda[bp] = lam;
            u[bp] = lev.u[p];
        }
    }
    gbar.symmetry = Symmetry::Sym2;
    Ok(AssembledBlock {
        chart,
        slice_chart: sc,
        gbar,
        v,
        lambda,
        u,
        levels,
    })
}

/// Levi-Civita data of `ḡ`; the Ricci trace `g^{il}R_{ijkl}` automatically
/// carries the `−R̄(T,·,·,T)` term.
pub fn lorentz_geometry(ab: &AssembledBlock) -> Result<GeometryCache> {
    GeometryCache::new(&ab.gbar)
}

/// Time derivative of per-level arrays, using the block's time stencil.
fn time_derivative(chart: &Chart, levels: &[&[f64]]) -> Vec<Vec<f64>> {
    let slen = levels[0].len();
    let stacked: Vec<f64> = levels.iter().flat_map(|v| v.iter().copied()).collect();
    let d = chart.diff(&stacked, 0);
    d.chunks(slen).map(|c| c.to_vec()).collect()
}

fn time_derivative_fields(chart: &Chart, fields: &[TensorField]) -> Vec<TensorField> {
    let ncomp = fields[0].comps.len();
    let mut out: Vec<TensorField> = fields
        .iter()
        .map(|f| {
            let mut z = f.clone();
            z.metric = false;
            z
        })
        .collect();
    for c in 0..ncomp {
        let per: Vec<&[f64]> = fields.iter().map(|f| f.comps[c].as_slice()).collect();
        for (l, d) in time_derivative(chart, &per).into_iter().enumerate() {
            out[l].comps[c] = d;
        }
    }
    out
}

/// Analysis of one assembled block: ambient geometry plus per-level slice
/// quantities derived from the stored history by time differencing.
pub struct BlockAnalysis {
    pub block: AssembledBlock,
    pub lgeo: GeometryCache,
    pub levels: Vec<SliceLevel>,
    /// `ġ_t` per level.
    pub gdot: Vec<TensorField>,
    /// `II_t = −ġ_t/(2λ)` per level.
    pub ii: Vec<TensorField>,
    /// `∂_t II_t` per level.
    pub iidot: Vec<TensorField>,
    pub udot: Vec<Vec<f64>>,
    pub big_udot: Vec<TensorField>,
}

struct Slice {
    geo: GeometryCache,
    ii: TensorField,
    w: TensorField,
    hess: TensorField,
}

fn frobenius(values: impl Iterator<Item = f64>) -> f64 {
    values.map(|v| v * v).sum::<f64>().sqrt()
}

/// Gram–Schmidt frame with respect to `g` (row-major `n×n`), starting from
/// `first` and continuing with coordinate vectors.
fn frame(g: &[f64], n: usize, first: &[f64]) -> Vec<[f64; MAX_DIM]> {
    let ip = |a: &[f64], b: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += g[i * n + j] * a[i] * b[j];
            }
        }
        s
    };
    let mut out: Vec<[f64; MAX_DIM]> = Vec::with_capacity(n);
    let mut cands: Vec<[f64; MAX_DIM]> = Vec::with_capacity(n + 1);
    let mut f = [0.0; MAX_DIM];
    f[..n].copy_from_slice(&first[..n]);
    cands.push(f);
    for i in 0..n {
        let mut e = [0.0; MAX_DIM];
        e[i] = 1.0;
        cands.push(e);
    }
    for mut c in cands {
        if out.len() == n {
            break;
        }
        for e in &out {
            let p = ip(&c, e);
            for i in 0..n {
                c[i] -= p * e[i];
            }
        }
        let norm = ip(&c, &c).max(0.0).sqrt();
        if norm > 1e-6 {
            for x in c.iter_mut().take(n) {
                *x /= norm;
            }
            out.push(c);
        }
    }
    out
}

/// Closed-form time derivatives of a block's history, used in place of time
/// differencing on the slice side of the curvature identities.
#[derive(Debug, Clone)]
pub struct TimeDerivatives {
    pub gdot: Vec<TensorField>,
    pub gddot: Vec<TensorField>,
    pub lambda_dot: Vec<Vec<f64>>,
}

impl BlockAnalysis {
    pub fn new(block: &SpacetimeBlock) -> Result<Self> {
        Self::build(block, None)
    }

    /// Like [`BlockAnalysis::new`], but `II` and `∂_t II` come from `exact`.
    pub fn with_time_derivatives(block: &SpacetimeBlock, exact: &TimeDerivatives) -> Result<Self> {
        Self::build(block, Some(exact))
    }

    fn build(block: &SpacetimeBlock, exact: Option<&TimeDerivatives>) -> Result<Self> {
        let ab = assemble(block)?;
        let lgeo = lorentz_geometry(&ab)?;
        let chart = ab.chart.clone();
        let gdot = match exact {
            Some(e) => e.gdot.clone(),
            None => {
                let gs: Vec<TensorField> = block.levels.iter().map(|l| l.g.clone()).collect();
                time_derivative_fields(&chart, &gs)
            }
        };
        let ii: Vec<TensorField> = gdot
            .iter()
            .zip(&block.levels)
            .map(|(k, l)| {
                let s: Vec<f64> = l.lambda.iter().map(|x| -0.5 / x).collect();
                let mut f = k.scale_by(&s);
                f.symmetry = Symmetry::Sym2;
                f
            })
            .collect();
        let iidot = match exact {
            // ∂_t(−ġ/2λ) = −g̈/2λ + ġλ̇/2λ²
            Some(e) => block
                .levels
                .iter()
                .enumerate()
                .map(|(l, lev)| {
                    let a: Vec<f64> = lev.lambda.iter().map(|x| -0.5 / x).collect();
                    let b: Vec<f64> = lev
                        .lambda
                        .iter()
                        .zip(&e.lambda_dot[l])
                        .map(|(x, d)| 0.5 * d / (x * x))
                        .collect();
                    e.gddot[l].scale_by(&a).add(&e.gdot[l].scale_by(&b))
                })
                .collect::<Result<Vec<_>>>()?,
            None => time_derivative_fields(&chart, &ii),
        };
        let us: Vec<&[f64]> = block.levels.iter().map(|l| l.u.as_slice()).collect();
        let udot = time_derivative(&chart, &us);
        let bus: Vec<TensorField> = block.levels.iter().map(|l| l.big_u.clone()).collect();
        let big_udot = time_derivative_fields(&chart, &bus);
        Ok(Self {
            block: ab,
            lgeo,
            levels: block.levels.clone(),
            gdot,
            ii,
            iidot,
            udot,
            big_udot,
        })
    }

    fn slice(&self, l: usize) -> Result<Slice> {
        let lev = &self.levels[l];
        let geo = GeometryCache::new(&lev.g)?;
        let w = weingarten(&self.ii[l], &geo.ginv);
        let hess = hessian(&geo, &lev.lambda);
        Ok(Slice {
            geo,
            ii: self.ii[l].clone(),
            w,
            hess,
        })
    }

    fn finish(&self, names: &[&str], vals: Vec<Vec<f64>>, mask: &Mask) -> Result<ResidualReport> {
        let mut r = ResidualReport::default();
        for (name, v) in names.iter().zip(vals) {
            r.push(ResidualEntry::from_pointwise(*name, &v, mask, None)?);
        }
        Ok(r)
    }

    /// `∇̄V` from the Christoffel symbols of `ḡ`.
    pub fn nabla_v(&self) -> TensorField {
        covariant_derivative(&self.lgeo, &self.block.v)
    }

    /// `‖∇̄V‖` and its `T⊥` projection, `ḡ(V,V)`, and the split residuals
    /// `∇U + uW`, `U̇ − u grad λ − λW(U)`, `u̇ − dλ(U)` per slice.
    pub fn parallel_vector_residual(&self) -> Result<ResidualReport> {
        let ab = &self.block;
        let n1 = ab.chart.dim();
        let n = n1 - 1;
        let slen = ab.slice_len();
        let len = ab.chart.len();
        let nv = self.nabla_v();
        let full = euclidean_pointwise(&nv);
        // spatial rows and spatial derivative directions
        let mut proj = vec![0.0; len];
        for (p, out) in proj.iter_mut().enumerate() {
            let mut s = 0.0;
            for nu in 1..n1 {
                for mu in 1..n1 {
                    let x = nv.comps[nu * n1 + mu][p];
                    s += x * x;
                }
            }
            *out = s.sqrt();
        }
        let vv: Vec<f64> = ab
            .gbar
            .eval2(&ab.v, &ab.v)
            .iter()
            .map(|x| x.abs())
            .collect();
        let mut spatial = vec![0.0; len];
        let mut tvec = vec![0.0; len];
        let mut tsc = vec![0.0; len];
        for l in ab.interior_levels(FIRST_ORDER_WIDTH) {
            let lev = &self.levels[l];
            let geo = GeometryCache::new(&lev.g)?;
            let w = weingarten(&self.ii[l], &geo.ginv);
            let vc = crate::constraints::vector_constraint(&geo, &lev.big_u, &lev.u, &w);
            let mag = pointwise_norm_sq(&vc, &geo.g, &geo.ginv)?;
            let dl = self.block.slice_chart.gradient(&lev.lambda);
            let wu = w.apply(&lev.big_u)?;
            let udot = &self.big_udot[l];
            let mut res = TensorField::zeros(ab.slice_chart.clone(), Valence::VECTOR);
            for p in 0..slen {
                let mut dlu = 0.0;
                for i in 0..n {
                    let grad: f64 = (0..n)
                        .map(|j| geo.ginv.comps[i * n + j][p] * dl[j][p])
                        .sum();
                    res.comps[i][p] =
                        udot.comps[i][p] - lev.u[p] * grad - lev.lambda[p] * wu.comps[i][p];
                    dlu += dl[i][p] * lev.big_u.comps[i][p];
                }
                tsc[l * slen + p] = (self.udot[l][p] - dlu).abs();
                spatial[l * slen + p] = mag[p].max(0.0).sqrt();
            }
            let rm = pointwise_norm_sq(&res, &geo.g, &geo.ginv)?;
            for p in 0..slen {
                tvec[l * slen + p] = rm[p].max(0.0).sqrt();
            }
        }
        let mask = ab.mask(FIRST_ORDER_WIDTH, 2);
        self.finish(
            &[
                NABLA_V,
                NABLA_V_PROJECTED,
                NULL_NORM,
                SPLIT_SPATIAL,
                SPLIT_TIME_VECTOR,
                SPLIT_TIME_SCALAR,
            ],
            vec![full, proj, vv, spatial, tvec, tsc],
            &mask,
        )
    }

    /// Gauss, Codazzi and Mainardi identities, ambient side minus slice side.
    pub fn gcm_residuals(&self) -> Result<ResidualReport> {
        let ab = &self.block;
        let n1 = ab.chart.dim();
        let n = n1 - 1;
        let slen = ab.slice_len();
        let len = ab.chart.len();
        let rb = self.lgeo.riemann();
        let mut gauss = vec![0.0; len];
        let mut codazzi = vec![0.0; len];
        let mut mainardi = vec![0.0; len];
        let r4 = |i: usize, j: usize, k: usize, l: usize| ((i * n1 + j) * n1 + k) * n1 + l;
        for l in ab.interior_levels(CURVATURE_WIDTH) {
            let s = self.slice(l)?;
            let rs = s.geo.riemann();
            let dii = dnabla(&s.geo, &s.ii);
            let iid = &self.iidot[l];
            for p in 0..slen {
                let bp = l * slen + p;
                let lam = ab.lambda[bp];
                let ii = |a: usize, b: usize| s.ii.comps[a * n + b][p];
                let mut sg = 0.0;
                let mut sc = 0.0;
                let mut sm = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            for m in 0..n {
                                let amb = rb.comps[r4(i + 1, j + 1, k + 1, m + 1)][bp];
                                let sl = rs.comps[((i * n + j) * n + k) * n + m][p]
                                    - ii(i, k) * ii(j, m)
                                    + ii(i, m) * ii(j, k);
                                sg += (amb - sl).powi(2);
                            }
                            let amb = rb.comps[r4(i + 1, j + 1, k + 1, 0)][bp] / lam;
                            sc += (amb - dii.comps[(i * n + j) * n + k][p]).powi(2);
                        }
                        let amb = rb.comps[r4(i + 1, 0, 0, j + 1)][bp] / (lam * lam);
                        let iw: f64 = (0..n).map(|a| ii(i, a) * s.w.comps[a * n + j][p]).sum();
                        let sl = iw + (iid.comps[i * n + j][p] + s.hess.comps[i * n + j][p]) / lam;
                        sm += (amb - sl).powi(2);
                    }
                }
                gauss[bp] = sg.sqrt();
                codazzi[bp] = sc.sqrt();
                mainardi[bp] = sm.sqrt();
            }
        }
        let mask = ab.mask(CURVATURE_WIDTH, 4);
        self.finish(
            &[GAUSS, CODAZZI_AMBIENT, MAINARDI],
            vec![gauss, codazzi, mainardi],
            &mask,
        )
    }

    /// Ricci structure forced by a parallel null spinor and the slice
    /// identities that follow from it.
    pub fn ricci_structure_residuals(&self) -> Result<ResidualReport> {
        let ab = &self.block;
        let n1 = ab.chart.dim();
        let n = n1 - 1;
        let slen = ab.slice_len();
        let len = ab.chart.len();
        let ric = self.lgeo.ricci();
        let scal = self.lgeo.scal();
        let names = [
            RIC_TT_NN,
            RIC_TT_NT,
            RIC_PERP,
            SCAL_BAR,
            RIC_RANK,
            SLICE_TRACE_PERP,
            SLICE_TRACE_VECTOR,
            SLICE_SCALAR,
            SLICE_RIC_PERP,
            SLICE_RIC_MIXED,
            SLICE_RIC_NN,
        ];
        let mut vals = vec![vec![0.0; len]; names.len()];
        let mut gm = [0.0; MAX_DIM * MAX_DIM];
        for l in ab.interior_levels(CURVATURE_WIDTH) {
            let lev = &self.levels[l];
            let s = self.slice(l)?;
            let dii = dnabla(&s.geo, &s.ii);
            let tr = trace(&s.ii, &s.geo.ginv);
            let norm2 = pointwise_norm_sq(&s.ii, &s.geo.g, &s.geo.ginv)?;
            let div = divergence(&s.geo, &s.ii);
            let dtr = self.block.slice_chart.gradient(&tr);
            let sric = s.geo.ricci();
            let sscal = s.geo.scal();
            for p in 0..slen {
                let bp = l * slen + p;
                let lam = ab.lambda[bp];
                let u = lev.u[p];
                if u <= U_EPSILON {
                    continue;
                }
                let rb = |a: usize, b: usize| ric.comps[a * n1 + b][bp];
                let mut nvec = [0.0; MAX_DIM];
                for i in 0..n {
                    nvec[i] = lev.big_u.comps[i][p] / u;
                }
                // ambient vectors: time component first
                let amb = |x: &[f64]| -> [f64; MAX_DIM] {
                    let mut o = [0.0; MAX_DIM];
                    o[1..n1].copy_from_slice(&x[..n]);
                    o
                };
                let tvec = {
                    let mut o = [0.0; MAX_DIM];
                    o[0] = 1.0 / lam;
                    o
                };
                let rbar = |x: &[f64], y: &[f64]| -> f64 {
                    let mut acc = 0.0;
                    for a in 0..n1 {
                        for b in 0..n1 {
                            acc += rb(a, b) * x[a] * y[b];
                        }
                    }
                    acc
                };
                let nb = amb(&nvec);
                let rtt = rbar(&tvec, &tvec);
                vals[0][bp] = (rtt - rbar(&nb, &nb)).abs();
                vals[1][bp] = (rtt - rbar(&nb, &tvec)).abs();
                lev.g.fill_matrix(p, &mut gm);
                let fr = frame(&gm, n, &nvec);
                let mut perp: f64 = 0.0;
                for ea in fr.iter().skip(1) {
                    let ea = amb(ea);
                    perp = perp.max(rbar(&ea, &tvec).abs());
                    for eb in &fr {
                        perp = perp.max(rbar(&ea, &amb(eb)).abs());
                    }
                }
                vals[2][bp] = perp;
                vals[3][bp] = scal[bp].abs();
                // V♭ = (−λu, −g U)
                let mut vflat = [0.0; MAX_DIM];
                vflat[0] = -lam * u;
                for i in 0..n {
                    vflat[i + 1] = -(0..n)
                        .map(|j| gm[i * n + j] * lev.big_u.comps[j][p])
                        .sum::<f64>();
                }
                let f = rtt / (u * u);
                vals[4][bp] = frobenius(
                    (0..n1 * n1).map(|c| rb(c / n1, c % n1) - f * vflat[c / n1] * vflat[c % n1]),
                );

                // slice identities
                let tau = |x: &[f64]| -> f64 {
                    let mut acc = 0.0;
                    for a in 0..n {
                        for j in 0..n {
                            for k in 0..n {
                                acc += x[a]
                                    * s.geo.ginv.comps[j * n + k][p]
                                    * dii.comps[(a * n + j) * n + k][p];
                            }
                        }
                    }
                    acc
                };
                let tau_n = tau(&nvec);
                vals[5][bp] = fr.iter().skip(1).map(|e| tau(e).abs()).fold(0.0, f64::max);
                // τ(N)N − (div II + d tr II)♯, measured with g
                let mut cov = [0.0; MAX_DIM];
                let mut nlow = [0.0; MAX_DIM];
                for i in 0..n {
                    nlow[i] = (0..n).map(|j| gm[i * n + j] * nvec[j]).sum();
                    cov[i] = tau_n * nlow[i] - (div.comps[i][p] + dtr[i][p]);
                }
                let mut q = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        q += s.geo.ginv.comps[i * n + j][p] * cov[i] * cov[j];
                    }
                }
                vals[6][bp] = q.max(0.0).sqrt();
                vals[7][bp] = (2.0 * tau_n - (sscal[p] - norm2[p] + tr[p] * tr[p])).abs();
                // E(X,Y) = Ric(X,Y) − II(WX,Y) + tr II · II(X,Y)
                let e = |x: &[f64], y: &[f64]| -> f64 {
                    let mut acc = 0.0;
                    for a in 0..n {
                        for b in 0..n {
                            let iiw: f64 = (0..n)
                                .map(|c| s.w.comps[c * n + a][p] * s.ii.comps[c * n + b][p])
                                .sum();
                            acc += x[a]
                                * y[b]
                                * (sric.comps[a * n + b][p] - iiw
                                    + tr[p] * s.ii.comps[a * n + b][p]);
                        }
                    }
                    acc
                };
                let dn = |x: &[f64], y: &[f64]| -> f64 {
                    let mut acc = 0.0;
                    for a in 0..n {
                        for b in 0..n {
                            for c in 0..n {
                                acc += nvec[a] * x[b] * y[c] * dii.comps[(a * n + b) * n + c][p];
                            }
                        }
                    }
                    acc
                };
                let mut rperp: f64 = 0.0;
                let mut rmixed: f64 = 0.0;
                for ea in fr.iter().skip(1) {
                    rmixed = rmixed.max(e(ea, &nvec).abs());
                    for eb in fr.iter().skip(1) {
                        rperp = rperp.max((e(ea, eb) - dn(ea, eb)).abs());
                    }
                }
                vals[8][bp] = rperp;
                vals[9][bp] = rmixed;
                vals[10][bp] = (e(&nvec, &nvec) - tau_n).abs();
            }
        }
        let mask = ab.mask(CURVATURE_WIDTH, 4);
        self.finish(&names, vals, &mask)
    }

    /// `scal − |II|² + (tr II)² = scal̄ + 2Ric̄(T,T)` and
    /// `d tr II + div II = Ric̄(·,T)` on every interior slice.
    pub fn ricci_flat_relations(&self) -> Result<ResidualReport> {
        let ab = &self.block;
        let n1 = ab.chart.dim();
        let n = n1 - 1;
        let slen = ab.slice_len();
        let len = ab.chart.len();
        let ric = self.lgeo.ricci();
        let scal = self.lgeo.scal();
        let mut ham = vec![0.0; len];
        let mut mom = vec![0.0; len];
        for l in ab.interior_levels(CURVATURE_WIDTH) {
            let s = self.slice(l)?;
            let (h, m) = ricci_flat_constraint_residuals(&s.geo, &s.ii)?;
            for p in 0..slen {
                let bp = l * slen + p;
                let lam = ab.lambda[bp];
                let rtt = ric.comps[0][bp] / (lam * lam);
                ham[bp] = (h[p] - (scal[bp] + 2.0 * rtt)).abs();
                mom[bp] =
                    frobenius((0..n).map(|i| m.comps[i][p] - ric.comps[(i + 1) * n1][bp] / lam));
            }
        }
        let mask = ab.mask(CURVATURE_WIDTH, 4);
        self.finish(
            &[HAMILTONIAN_RELATION, MOMENTUM_RELATION],
            vec![ham, mom],
            &mask,
        )
    }
}

/// Closed-form block of the unit-lapse evolution of Codazzi data:
/// `g_t = g((1 − tW)²·,·)`, `U_t = (1 − tW)⁻¹U`, `u_t = u`, at
/// `t = t0 + l·dt`.
pub fn codazzi_oracle_block(
    data: &InitialData,
    t0: f64,
    dt: f64,
    levels: usize,
) -> Result<SpacetimeBlock> {
    let chart = data.chart.clone();
    let n = chart.dim();
    let len = chart.len();
    let mut block = SpacetimeBlock::new(chart.clone(), dt);
    let mut a = [0.0; MAX_DIM * MAX_DIM];
    for l in 0..levels {
        let t = t0 + l as f64 * dt;
        let g = codazzi_oracle_metric(data, t)?;
        let mut big_u = TensorField::zeros(chart.clone(), Valence::VECTOR);
        for p in 0..len {
            for i in 0..n {
                for j in 0..n {
                    let d = if i == j { 1.0 } else { 0.0 };
                    a[i * n + j] = d - t * data.w.comps[i * n + j][p];
                }
            }
            let (inv, _) = invert(&a, n).ok_or_else(|| {
                Error::Signature(format!("1 − tW is singular at t = {t}, node {p}"))
            })?;
            for i in 0..n {
                big_u.comps[i][p] = (0..n)
                    .map(|j| inv[i * n + j] * data.big_u.comps[j][p])
                    .sum();
            }
        }
        block.push(SliceLevel {
            t,
            g,
            big_u,
            u: data.u.clone(),
            lambda: vec![1.0; len],
        })?;
    }
    Ok(block)
}

/// Smooth random `(g_t, λ)`: each entry of `g − δ` and `λ − 1` is a sum of
/// low Fourier modes in `(t, x)` with amplitude `amp`.
#[derive(Debug, Clone)]
pub struct RandomMetric {
    dim: usize,
    amp: f64,
    entries: Vec<Vec<Mode>>,
    lapse: Vec<Mode>,
}

#[derive(Debug, Clone)]
struct Mode {
    k: Vec<f64>,
    omega: f64,
    phase: f64,
    a: f64,
}

impl Mode {
    /// Value and first two time derivatives of `a cos(k·x + ωt + φ)`.
    fn eval(&self, t: f64, x: &[f64]) -> [f64; 3] {
        let kx: f64 = self.k.iter().zip(x).map(|(k, x)| k * x).sum();
        let arg = kx + self.omega * t + self.phase;
        let (s, c) = arg.sin_cos();
        [
            self.a * c,
            -self.a * self.omega * s,
            -self.a * self.omega * self.omega * c,
        ]
    }
}

const MODES_PER_ENTRY: usize = 3;

impl RandomMetric {
    /// Draws modes with integer wave numbers in `[−2, 2]` per axis of `chart`.
    pub fn new(chart: &Chart, amp: f64, seed: u64) -> Self {
        let n = chart.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut modes = |count: usize| -> Vec<Mode> {
            (0..count)
                .map(|_| Mode {
                    k: (0..n)
                        .map(|ax| {
                            let [a, b] = chart.spec().extents[ax];
                            let base = 2.0 * std::f64::consts::PI / (b - a);
                            base * rng.gen_range(-2i32..=2) as f64
                        })
                        .collect(),
                    omega: rng.gen_range(-1.0..1.0),
                    phase: rng.gen_range(0.0..2.0 * std::f64::consts::PI),
                    a: rng.gen_range(-1.0..1.0),
                })
                .collect()
        };
        let entries = (0..n * (n + 1) / 2)
            .map(|_| modes(MODES_PER_ENTRY))
            .collect();
        let lapse = modes(MODES_PER_ENTRY);
        Self {
            dim: n,
            amp,
            entries,
            lapse,
        }
    }

    fn sum(&self, ms: &[Mode], t: f64, x: &[f64]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for m in ms {
            let v = m.eval(t, x);
            for i in 0..3 {
                out[i] += self.amp * v[i] / ms.len() as f64;
            }
        }
        out
    }

    /// `(g, ġ, g̈)` at one point, row-major.
    pub fn metric(&self, t: f64, x: &[f64]) -> [Vec<f64>; 3] {
        let n = self.dim;
        let mut out = [vec![0.0; n * n], vec![0.0; n * n], vec![0.0; n * n]];
        let mut e = 0;
        for i in 0..n {
            for j in i..n {
                let v = self.sum(&self.entries[e], t, x);
                for d in 0..3 {
                    let base = if d == 0 && i == j { 1.0 } else { 0.0 };
                    out[d][i * n + j] = base + v[d];
                    out[d][j * n + i] = base + v[d];
                }
                e += 1;
            }
        }
        out
    }

    /// `(λ, λ̇)` at one point.
    pub fn lapse(&self, t: f64, x: &[f64]) -> (f64, f64) {
        let v = self.sum(&self.lapse, t, x);
        (1.0 + v[0], v[1])
    }

    /// `levels` equally spaced levels centred at `t0` with `U = ∂_1`,
    /// `u = |∂_1|`, together with the exact time derivatives.
    pub fn block(
        &self,
        chart: Arc<Chart>,
        levels: usize,
        t0: f64,
        dt: f64,
    ) -> Result<(SpacetimeBlock, TimeDerivatives)> {
        if chart.dim() != self.dim {
            return Err(Error::Shape(
                "chart dimension differs from the random metric".into(),
            ));
        }
        let n = self.dim;
        let len = chart.len();
        let start = t0 - dt * (levels as f64 - 1.0) / 2.0;
        let mut block = SpacetimeBlock::new(chart.clone(), dt);
        let mut exact = TimeDerivatives {
            gdot: Vec::with_capacity(levels),
            gddot: Vec::with_capacity(levels),
            lambda_dot: Vec::with_capacity(levels),
        };
        let mut x = vec![0.0; n];
        for l in 0..levels {
            let t = start + l as f64 * dt;
            let mut comps = [
                vec![vec![0.0; len]; n * n],
                vec![vec![0.0; len]; n * n],
                vec![vec![0.0; len]; n * n],
            ];
            let mut lambda = vec![0.0; len];
            let mut lambda_dot = vec![0.0; len];
            for p in 0..len {
                chart.fill_point(p, &mut x);
                let m = self.metric(t, &x);
                for d in 0..3 {
                    for c in 0..n * n {
                        comps[d][c][p] = m[d][c];
                    }
                }
                (lambda[p], lambda_dot[p]) = self.lapse(t, &x);
            }
            let [g, gd, gdd] = comps;
            let g = TensorField::metric(chart.clone(), g)?;
            let mut big_u = TensorField::zeros(chart.clone(), Valence::VECTOR);
            big_u.comps[0].fill(1.0);
            let u = g.comps[0].iter().map(|v| v.sqrt()).collect();
            block.push(SliceLevel {
                t,
                g,
                big_u,
                u,
                lambda,
            })?;
            exact.gdot.push(TensorField::from_components(
                chart.clone(),
                Valence::BILINEAR,
                Symmetry::Sym2,
                gd,
            )?);
            exact.gddot.push(TensorField::from_components(
                chart.clone(),
                Valence::BILINEAR,
                Symmetry::Sym2,
                gdd,
            )?);
            exact.lambda_dot.push(lambda_dot);
        }
        Ok((block, exact))
    }
}
