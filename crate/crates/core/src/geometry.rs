//! Discrete Levi-Civita calculus on a single chart.
//!
//! Conventions: `R(X,Y) = [∇_X, ∇_Y] − ∇_[X,Y]`, stored lowered as
//! `R_{ijkl} = g(R(∂_i,∂_j)∂_k, ∂_l)`; `Ric(Y,Z) = tr(X ↦ R(X,Y)Z)`, so round
//! spheres have positive scalar curvature. The same code runs in Lorentzian
//! signature; nothing here assumes positive definiteness.

use std::sync::{Arc, OnceLock};

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::fields::{
    component_count, flatten, metric_inverse, unflatten, Symmetry, TensorField, Valence,
};

/// Overall sign of the curvature operator relative to the commutator
/// definition above.
pub const CURVATURE_SIGN: f64 = 1.0;

/// Metric, inverse, connection and lazily computed curvature of one slice.
#[derive(Debug)]
pub struct GeometryCache {
    pub g: TensorField,
    pub ginv: TensorField,
    /// Christoffel symbols of the first kind `Γ_{l,jk} = g(∇_{∂j}∂_k, ∂_l)`.
    pub gamma_low: TensorField,
    /// `Γ^k_{ij}`, flat index `(k, i, j)`.
    pub gamma: TensorField,
    riemann: OnceLock<TensorField>,
    ricci: OnceLock<TensorField>,
    scal: OnceLock<Vec<f64>>,
}

impl GeometryCache {
    pub fn new(g: &TensorField) -> Result<Self> {
        if g.valence != Valence::BILINEAR {
            return Err(Error::Shape("metric must be a covariant 2-tensor".into()));
        }
        let ginv = metric_inverse(g)?;
        let chart = g.chart.clone();
        let n = chart.dim();
        let dg: Vec<Vec<Vec<f64>>> = g.comps.iter().map(|c| chart.gradient(c)).collect();
        let mut gamma_low = TensorField::zeros(chart.clone(), Valence::new(0, 3));
        for l in 0..n {
            for j in 0..n {
                for k in j..n {
                    let a = &dg[k * n + l][j];
                    let b = &dg[j * n + l][k];
                    let c = &dg[j * n + k][l];
                    let v: Vec<f64> = (0..chart.len())
                        .map(|p| 0.5 * (a[p] + b[p] - c[p]))
                        .collect();
                    gamma_low.comps[(l * n + k) * n + j] = v.clone();
                    gamma_low.comps[(l * n + j) * n + k] = v;
                }
            }
        }
        let mut gamma = TensorField::zeros(chart.clone(), Valence::new(1, 2));
        for k in 0..n {
            for i in 0..n {
                for j in i..n {
                    let mut v = vec![0.0; chart.len()];
                    for l in 0..n {
                        let gi = &ginv.comps[k * n + l];
                        let gl = &gamma_low.comps[(l * n + i) * n + j];
                        for p in 0..v.len() {
                            v[p] += gi[p] * gl[p];
                        }
                    }
                    gamma.comps[(k * n + j) * n + i] = v.clone();
                    gamma.comps[(k * n + i) * n + j] = v;
                }
            }
        }
        Ok(Self {
            g: g.clone(),
            ginv,
            gamma_low,
            gamma,
            riemann: OnceLock::new(),
            ricci: OnceLock::new(),
            scal: OnceLock::new(),
        })
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.g.chart
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    /// `Γ^k_{ij}` at one node.
    #[inline]
    pub fn gamma_at(&self, k: usize, i: usize, j: usize, node: usize) -> f64 {
        let n = self.dim();
        self.gamma.comps[(k * n + i) * n + j][node]
    }

    /// Fully covariant Riemann tensor `R_{ijkl}`.
    pub fn riemann(&self) -> &TensorField {
        self.riemann.get_or_init(|| riemann_lowered(self))
    }

    pub fn ricci(&self) -> &TensorField {
        self.ricci.get_or_init(|| ricci(self.riemann(), &self.ginv))
    }

    pub fn scal(&self) -> &[f64] {
        self.scal
            .get_or_init(|| trace(self.ricci(), &self.ginv))
            .as_slice()
    }
}

/// `Γ^k_{ij} = ½ g^{kl}(∂_i g_{jl} + ∂_j g_{il} − ∂_l g_{ij})`.
pub fn christoffel(g: &TensorField) -> Result<TensorField> {
    Ok(GeometryCache::new(g)?.gamma)
}

fn riemann_lowered(geo: &GeometryCache) -> TensorField {
    let chart = geo.chart().clone();
    let n = geo.dim();
    let len = chart.len();
    // dgl[a][(l,j,k)] = ∂_a Γ_{l,jk}
    let dgl: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|a| {
            geo.gamma_low
                .comps
                .iter()
                .map(|c| chart.diff(c, a))
                .collect()
        })
        .collect();
    let gl = |l: usize, j: usize, k: usize| &geo.gamma_low.comps[(l * n + j) * n + k];
    let gu = |k: usize, i: usize, j: usize| &geo.gamma.comps[(k * n + i) * n + j];
    let mut r = TensorField::zeros(chart, Valence::new(0, 4));
    // R(∂i,∂j,∂k,∂l) = ∂_iΓ_{l,jk} − ∂_jΓ_{l,ik} − Γ_{m,il}Γ^m_{jk} + Γ_{m,jl}Γ^m_{ik}
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            for k in 0..n {
                for l in 0..n {
                    if k == l {
                        continue;
                    }
                    let a = &dgl[i][(l * n + j) * n + k];
                    let b = &dgl[j][(l * n + i) * n + k];
                    let mut v: Vec<f64> = (0..len).map(|p| a[p] - b[p]).collect();
                    for m in 0..n {
                        let (x1, y1) = (gl(m, i, l), gu(m, j, k));
                        let (x2, y2) = (gl(m, j, l), gu(m, i, k));
                        for p in 0..len {
                            v[p] += x2[p] * y2[p] - x1[p] * y1[p];
                        }
                    }
                    if CURVATURE_SIGN != 1.0 {
                        v.iter_mut().for_each(|x| *x *= CURVATURE_SIGN);
                    }
                    r.comps[((i * n + j) * n + k) * n + l] = v;
                }
            }
        }
    }
    r
}

/// `R^l_{kij}` with `R(∂_i,∂_j)∂_k = R^l_{kij} ∂_l`, flat index `(l, k, i, j)`.
pub fn riemann_up(geo: &GeometryCache) -> TensorField {
    let n = geo.dim();
    let rl = geo.riemann();
    let mut out = TensorField::zeros(geo.chart().clone(), Valence::new(1, 3));
    for l in 0..n {
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let dst = &mut out.comps[((l * n + k) * n + i) * n + j];
                    for m in 0..n {
                        let gi = &geo.ginv.comps[l * n + m];
                        let src = &rl.comps[((i * n + j) * n + k) * n + m];
                        for p in 0..dst.len() {
                            dst[p] += gi[p] * src[p];
                        }
                    }
                }
            }
        }
    }
    out
}

/// `Ric_{jk} = g^{il} R_{ijkl}`.
pub fn ricci(riemann: &TensorField, ginv: &TensorField) -> TensorField {
    let n = ginv.dim();
    let mut out = TensorField::zeros(ginv.chart.clone(), Valence::BILINEAR);
    for j in 0..n {
        for k in 0..n {
            let dst = &mut out.comps[j * n + k];
            for i in 0..n {
                for l in 0..n {
                    let gi = &ginv.comps[i * n + l];
                    let src = &riemann.comps[((i * n + j) * n + k) * n + l];
                    for p in 0..dst.len() {
                        dst[p] += gi[p] * src[p];
                    }
                }
            }
        }
    }
    out.symmetrize();
    out
}

pub fn scalar_curvature(ric: &TensorField, ginv: &TensorField) -> Vec<f64> {
    trace(ric, ginv)
}

/// `tr_g h = g^{ij} h_{ij}`.
pub fn trace(h: &TensorField, ginv: &TensorField) -> Vec<f64> {
    let mut out = vec![0.0; h.len()];
    for (a, b) in h.comps.iter().zip(&ginv.comps) {
        for p in 0..out.len() {
            out[p] += a[p] * b[p];
        }
    }
    out
}

/// Trace of an endomorphism field.
pub fn endo_trace(w: &TensorField) -> Vec<f64> {
    let n = w.dim();
    let mut out = vec![0.0; w.len()];
    for a in 0..n {
        for (o, v) in out.iter_mut().zip(&w.comps[a * n + a]) {
            *o += v;
        }
    }
    out
}

/// `∇T`, with the derivative index inserted as the first covariant slot.
pub fn covariant_derivative(geo: &GeometryCache, t: &TensorField) -> TensorField {
    let chart = geo.chart();
    let n = geo.dim();
    let len = chart.len();
    let (up, down) = (t.valence.up, t.valence.down);
    let rank = up + down;
    let partials: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|i| t.comps.iter().map(|c| chart.diff(c, i)).collect())
        .collect();
    let valence = Valence::new(up, down + 1);
    let mut out = TensorField::zeros(chart.clone(), valence);
    for c_out in 0..component_count(n, rank + 1) {
        let idx = unflatten(c_out, n, rank + 1);
        let i = idx[up];
        let mut base: Vec<usize> = idx.clone();
        base.remove(up);
        let c_in = flatten(&base, n);
        let mut v = partials[i][c_in].clone();
        let mut tmp = base.clone();
        for slot in 0..rank {
            let orig = base[slot];
            for c in 0..n {
                tmp[slot] = c;
                let src = &t.comps[flatten(&tmp, n)];
                let gam = if slot < up {
                    &geo.gamma.comps[(orig * n + i) * n + c]
                } else {
                    &geo.gamma.comps[(c * n + i) * n + orig]
                };
                let sign = if slot < up { 1.0 } else { -1.0 };
                for p in 0..len {
                    v[p] += sign * gam[p] * src[p];
                }
            }
            tmp[slot] = orig;
        }
        out.comps[c_out] = v;
    }
    out
}

/// `d^∇h(X,Y,Z) = (∇_X h)(Y,Z) − (∇_Y h)(X,Z)` for a covariant 2-tensor.
pub fn dnabla(geo: &GeometryCache, h: &TensorField) -> TensorField {
    let dh = covariant_derivative(geo, h);
    antisymmetrize_derivative(&dh)
}

/// Builds `D_{abc} = T_{abc} − T_{bac}` from a covariant 3-tensor.
pub fn antisymmetrize_derivative(dh: &TensorField) -> TensorField {
    let n = dh.dim();
    let mut out = TensorField::zeros(dh.chart.clone(), Valence::new(0, 3));
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                if a == b {
                    continue;
                }
                let x = &dh.comps[(a * n + b) * n + c];
                let y = &dh.comps[(b * n + a) * n + c];
                out.comps[(a * n + b) * n + c] = x.iter().zip(y).map(|(p, q)| p - q).collect();
            }
        }
    }
    out
}

/// `div h(X) = −g^{ij} (∇_i h)(∂_j, X)`, the sign for which
/// `tr_g d^∇h(X,·,·) = div h(X) + d tr h(X)`.
pub fn divergence(geo: &GeometryCache, h: &TensorField) -> TensorField {
    let n = geo.dim();
    let dh = covariant_derivative(geo, h);
    let mut out = TensorField::zeros(geo.chart().clone(), Valence::COVECTOR);
    for x in 0..n {
        let dst = &mut out.comps[x];
        for i in 0..n {
            for j in 0..n {
                let gi = &geo.ginv.comps[i * n + j];
                let src = &dh.comps[(i * n + j) * n + x];
                for p in 0..dst.len() {
                    dst[p] -= gi[p] * src[p];
                }
            }
        }
    }
    out
}

/// Differential of a scalar field as a covector.
pub fn differential(chart: &Arc<Chart>, f: &[f64]) -> TensorField {
    TensorField {
        chart: chart.clone(),
        valence: Valence::COVECTOR,
        symmetry: Symmetry::None,
        metric: false,
        comps: chart.gradient(f),
    }
}

/// `Hess f = ∇df`, symmetrized over the two derivative orders.
pub fn hessian(geo: &GeometryCache, f: &[f64]) -> TensorField {
    hessian_from_gradient(geo, &geo.chart().gradient(f))
}

/// Hessian from given partial derivatives `∂_i f`.
pub fn hessian_from_gradient(geo: &GeometryCache, df: &[Vec<f64>]) -> TensorField {
    let chart = geo.chart();
    let n = geo.dim();
    let ddf: Vec<Vec<Vec<f64>>> = df.iter().map(|d| chart.gradient(d)).collect();
    let mut out = TensorField::zeros(chart.clone(), Valence::BILINEAR);
    for i in 0..n {
        for j in i..n {
            let mut v: Vec<f64> = (0..chart.len())
                .map(|p| 0.5 * (ddf[i][j][p] + ddf[j][i][p]))
                .collect();
            for (k, dk) in df.iter().enumerate() {
                let gam = &geo.gamma.comps[(k * n + i) * n + j];
                for p in 0..v.len() {
                    v[p] -= gam[p] * dk[p];
                }
            }
            out.comps[j * n + i] = v.clone();
            out.comps[i * n + j] = v;
        }
    }
    out.symmetry = Symmetry::Sym2;
    out
}

/// `Δf = tr_g Hess f`.
pub fn laplacian(geo: &GeometryCache, f: &[f64]) -> Vec<f64> {
    trace(&hessian(geo, f), &geo.ginv)
}

/// `(μ∧h)(X,Y,Z) = μ(X)h(Y,Z) − μ(Y)h(X,Z)`.
pub fn wedge_mu_h(mu: &TensorField, h: &TensorField) -> TensorField {
    let n = h.dim();
    let mut out = TensorField::zeros(h.chart.clone(), Valence::new(0, 3));
    for x in 0..n {
        for y in 0..n {
            if x == y {
                continue;
            }
            for z in 0..n {
                let (mx, my) = (&mu.comps[x], &mu.comps[y]);
                let (hy, hx) = (&h.comps[y * n + z], &h.comps[x * n + z]);
                out.comps[(x * n + y) * n + z] = (0..h.len())
                    .map(|p| mx[p] * hy[p] - my[p] * hx[p])
                    .collect();
            }
        }
    }
    out
}

/// `II = −ġ / (2λ)`.
pub fn second_fundamental_form(gdot: &TensorField, lambda: &[f64]) -> Result<TensorField> {
    if let Some(min) = lambda.iter().copied().reduce(f64::min) {
        if min <= 0.0 {
            return Err(Error::NonPositiveLapse { t: f64::NAN, min });
        }
    }
    let s: Vec<f64> = lambda.iter().map(|l| -0.5 / l).collect();
    let mut ii = gdot.scale_by(&s);
    ii.symmetry = gdot.symmetry;
    Ok(ii)
}

/// `W = g⁻¹ II`, i.e. `W^a_b = g^{ac} II_{cb}`.
pub fn weingarten(ii: &TensorField, ginv: &TensorField) -> TensorField {
    let n = ii.dim();
    let mut w = TensorField::zeros(ii.chart.clone(), Valence::ENDOMORPHISM);
    for a in 0..n {
        for b in 0..n {
            let dst = &mut w.comps[a * n + b];
            for c in 0..n {
                let gi = &ginv.comps[a * n + c];
                let h = &ii.comps[c * n + b];
                for p in 0..dst.len() {
                    dst[p] += gi[p] * h[p];
                }
            }
        }
    }
    w
}

/// `II(X,Y) = g(W X, Y)`, i.e. `II_{ab} = g_{ac} W^c_b` (not symmetrized).
pub fn lower_endomorphism(w: &TensorField, g: &TensorField) -> TensorField {
    let n = w.dim();
    let mut out = TensorField::zeros(w.chart.clone(), Valence::BILINEAR);
    for a in 0..n {
        for b in 0..n {
            let dst = &mut out.comps[a * n + b];
            for c in 0..n {
                let gl = &g.comps[a * n + c];
                let wc = &w.comps[c * n + b];
                for p in 0..dst.len() {
                    dst[p] += gl[p] * wc[p];
                }
            }
        }
    }
    out
}

/// `grad f = g^{ij} ∂_j f`.
pub fn gradient(geo: &GeometryCache, df: &TensorField) -> TensorField {
    let n = geo.dim();
    let mut out = TensorField::zeros(geo.chart().clone(), Valence::VECTOR);
    for i in 0..n {
        let dst = &mut out.comps[i];
        for j in 0..n {
            let gi = &geo.ginv.comps[i * n + j];
            for p in 0..dst.len() {
                dst[p] += gi[p] * df.comps[j][p];
            }
        }
    }
    out
}
