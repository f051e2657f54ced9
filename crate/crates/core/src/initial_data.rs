//! Analytic generators of initial data `(g, W, U, u)` solving
//! `∇U + uW = 0`, `g(U,U) = u²`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::chart::{Boundary, Chart};
use crate::error::{Error, Result};
use crate::expr::{BinOp, Expr, Func};
use crate::fields::{LapseField, TensorField, Valence};
use crate::linalg;

/// Generator name and parameters, echoed into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Provenance {
    pub generator: String,
    pub params: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(generator: &str, params: &[(&str, String)]) -> Self {
        Self {
            generator: generator.to_string(),
            params: params
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InitialData {
    pub chart: Arc<Chart>,
    pub g: TensorField,
    /// Weingarten-type endomorphism `W^a_b`.
    pub w: TensorField,
    /// The vector field `U`.
    pub big_u: TensorField,
    /// `u = |U|_g > 0`.
    pub u: Vec<f64>,
    pub lapse: LapseField,
    pub provenance: Provenance,
}

impl InitialData {
    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    /// Checks positivity of `u`, `g(U,U) = u²` (relative `1e-10`) and
    /// g-symmetry of `W` (relative `1e-12`).
    pub fn validate(&self) -> Result<()> {
        let min_u = self.u.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min_u > 0.0) {
            return Err(Error::InvalidInput(format!(
                "u must be positive (min {min_u:e})"
            )));
        }
        let uu = self.g.eval2(&self.big_u, &self.big_u);
        for (node, (a, u)) in uu.iter().zip(&self.u).enumerate() {
            if (a - u * u).abs() > 1e-10 * u * u {
                return Err(Error::InvalidInput(format!(
                    "g(U,U) differs from u² at node {node}"
                )));
            }
        }
        let asym = g_asymmetry(&self.g, &self.w);
        let scale = self.w.max_abs().max(1.0) * self.g.max_abs().max(1.0);
        if asym > 1e-12 * scale {
            return Err(Error::AsymmetricW {
                residual: asym,
                tolerance: 1e-12 * scale,
            });
        }
        Ok(())
    }

    /// Scalar `γ = √u` of the slice spinor `φ = γ·v`, available when the data
    /// is two-dimensional and `U` is a positive multiple of `∂_1`, so that
    /// `U = u e₁` for the Gram–Schmidt frame starting at `∂_1`.
    pub fn spinor_seed(&self) -> Option<Vec<f64>> {
        if self.dim() != 2 {
            return None;
        }
        let along = self.big_u.comps[1].iter().all(|v| *v == 0.0)
            && self.big_u.comps[0].iter().all(|v| *v > 0.0);
        along.then(|| self.u.iter().map(|u| u.sqrt()).collect())
    }
}

/// Largest `|g(WX,Y) − g(X,WY)|` over coordinate vectors and nodes.
pub fn g_asymmetry(g: &TensorField, w: &TensorField) -> f64 {
    let n = g.dim();
    let mut worst: f64 = 0.0;
    for node in 0..g.len() {
        for a in 0..n {
            for b in a + 1..n {
                let mut s = 0.0;
                for m in 0..n {
                    s += g.comps[a * n + m][node] * w.comps[m * n + b][node]
                        - g.comps[b * n + m][node] * w.comps[m * n + a][node];
                }
                worst = worst.max(s.abs());
            }
        }
    }
    worst
}

/// Replaces `W` by its g-symmetric part `½(W + g⁻¹Wᵀg)`.
fn g_symmetrize(g: &TensorField, w: &mut TensorField) {
    let n = g.dim();
    let mut gm = [0.0; linalg::MAX_DIM * linalg::MAX_DIM];
    for node in 0..g.len() {
        g.fill_matrix(node, &mut gm);
        let (gi, _) = linalg::invert(&gm, n).expect("metric checked nondegenerate");
        // II_ab = g_am W^m_b, symmetrized, raised again
        let mut ii = [0.0; linalg::MAX_DIM * linalg::MAX_DIM];
        for a in 0..n {
            for b in 0..n {
                ii[a * n + b] = (0..n)
                    .map(|m| gm[a * n + m] * w.comps[m * n + b][node])
                    .sum();
            }
        }
        for a in 0..n {
            for b in a + 1..n {
                let s = 0.5 * (ii[a * n + b] + ii[b * n + a]);
                ii[a * n + b] = s;
                ii[b * n + a] = s;
            }
        }
        for a in 0..n {
            for b in 0..n {
                w.comps[a * n + b][node] = (0..n).map(|m| gi[a * n + m] * ii[m * n + b]).sum();
            }
        }
    }
}

fn sample(chart: &Chart, e: &Expr) -> Vec<f64> {
    let mut x = vec![0.0; chart.dim()];
    (0..chart.len())
        .map(|node| {
            chart.fill_point(node, &mut x);
            e.eval(0.0, &x)
        })
        .collect()
}

fn check_expr_dim(e: &Expr, n: usize, what: &str) -> Result<()> {
    if e.max_coord() > n {
        return Err(Error::InvalidInput(format!(
            "{what} uses x{} on a {n}-dimensional chart",
            e.max_coord()
        )));
    }
    Ok(())
}

/// Flat metric with constant `U = U0`, `W = 0`.
pub fn gen_flat(chart: Arc<Chart>, u0: &[f64], lapse: LapseField) -> Result<InitialData> {
    let n = chart.dim();
    if u0.len() != n {
        return Err(Error::InvalidInput(format!(
            "U0 has {} entries for dimension {n}",
            u0.len()
        )));
    }
    let norm = u0.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    let mut big_u = TensorField::zeros(chart.clone(), Valence::VECTOR);
    for (c, v) in big_u.comps.iter_mut().zip(u0) {
        c.fill(*v);
    }
    Ok(InitialData {
        g: TensorField::identity_metric(chart.clone()),
        w: TensorField::zeros(chart.clone(), Valence::ENDOMORPHISM),
        big_u,
        u: vec![norm; chart.len()],
        lapse,
        provenance: Provenance::new("flat", &[("U0", format!("{u0:?}"))]),
        chart,
    })
}

/// Periodic antiderivative of zero-mean samples on a uniform periodic axis of
/// length `period`, computed spectrally and normalized to vanish at node 0.
pub fn periodic_antiderivative(w: &[f64], period: f64) -> Vec<f64> {
    let n = w.len();
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = w.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let signed = if k <= n / 2 {
            k as f64
        } else {
            k as f64 - n as f64
        };
        if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
            *c = Complex64::new(0.0, 0.0);
        } else {
            let kappa = 2.0 * std::f64::consts::PI * signed / period;
            *c /= Complex64::new(0.0, kappa);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let f0 = buf[0].re / n as f64;
    buf.iter().map(|c| c.re / n as f64 - f0).collect()
}

/// Codazzi data on a periodic chart whose first axis is a circle:
/// `g = δ`, `W = w(x1) ∂_1⊗dx¹`, `u = exp(−∫w)`, `U = u ∂_1`.
/// In dimension one this is the general Codazzi solution on the circle; in
/// higher dimension it is its product with a flat torus.
pub fn gen_circle_codazzi(chart: Arc<Chart>, w: &Expr, lapse: LapseField) -> Result<InitialData> {
    let n = chart.dim();
    if !chart.is_periodic() {
        return Err(Error::InvalidInput(
            "circle data needs a periodic chart".into(),
        ));
    }
    if w.max_coord() > 1 || w.uses_time() {
        return Err(Error::InvalidInput("w must depend on x1 only".into()));
    }
    let xs = chart.axis_coords(0);
    let line: Vec<f64> = xs.iter().map(|x| w.eval(0.0, &[*x])).collect();
    let mean = line.iter().sum::<f64>() / line.len() as f64;
    if mean.abs() > 1e-10 {
        return Err(Error::NonZeroMean { mean });
    }
    let [a, b] = chart.spec().extents[0];
    let anti = periodic_antiderivative(&line, b - a);
    let u_line: Vec<f64> = anti.iter().map(|f| (-f).exp()).collect();
    let len = chart.len();
    let idx = |node: usize| chart.axis_index(node, 0);
    let u: Vec<f64> = (0..len).map(|p| u_line[idx(p)]).collect();
    let mut big_u = TensorField::zeros(chart.clone(), Valence::VECTOR);
    big_u.comps[0] = u.clone();
    let mut wf = TensorField::zeros(chart.clone(), Valence::ENDOMORPHISM);
    wf.comps[0] = (0..len).map(|p| line[idx(p)]).collect();
    Ok(InitialData {
        g: TensorField::identity_metric(chart.clone()),
        w: wf,
        big_u,
        u,
        lapse,
        provenance: Provenance::new(
            "circle_codazzi",
            &[("w", w.to_string()), ("dim", n.to_string())],
        ),
        chart,
    })
}

/// Closed vector field on the torus: either `(f, h)` expressions or the
/// built-in choice `f = C e^{−2σ}`, `h = 0`.
#[derive(Debug, Clone)]
pub enum TorusField {
    Builtin { c: f64 },
    Explicit { f: Expr, h: Expr },
}

/// Conformal torus `g = e^{2σ}(a dθ² + 2b dθdρ + c dρ²)` with
/// `U = f∂_θ + h∂_ρ`, `u = |U|_g` and `W = −∇U/u`.
pub fn gen_conformal_torus(
    chart: Arc<Chart>,
    sigma: &Expr,
    abc: [f64; 3],
    field: &TorusField,
    lapse: LapseField,
) -> Result<InitialData> {
    if chart.dim() != 2 || !chart.is_periodic() {
        return Err(Error::InvalidInput(
            "conformal torus needs a 2D periodic chart".into(),
        ));
    }
    let [a, b, c] = abc;
    if !(a > 0.0 && c > 0.0 && a * c > b * b) {
        return Err(Error::InvalidInput(format!(
            "need a, c > 0 and ac > b² (a={a}, b={b}, c={c})"
        )));
    }
    check_expr_dim(sigma, 2, "sigma")?;
    let (f, h) = match field {
        TorusField::Builtin { c: k } => {
            // f = k·exp(−2σ)
            let minus2s = Expr::Binary(
                BinOp::Mul,
                Box::new(Expr::Num(-2.0)),
                Box::new(sigma.clone()),
            );
            let f = Expr::Binary(
                BinOp::Mul,
                Box::new(Expr::Num(*k)),
                Box::new(Expr::Call(Func::Exp, Box::new(minus2s))),
            );
            (f, Expr::Num(0.0))
        }
        TorusField::Explicit { f, h } => {
            check_expr_dim(f, 2, "f")?;
            check_expr_dim(h, 2, "h")?;
            (f.clone(), h.clone())
        }
    };
    let len = chart.len();
    let a0 = [a, b, b, c];
    let (ai, _) = linalg::invert(&a0, 2).unwrap();
    let mut gm = vec![vec![0.0; len]; 4];
    let mut big_u = TensorField::zeros(chart.clone(), Valence::VECTOR);
    let mut u = vec![0.0; len];
    let mut w = TensorField::zeros(chart.clone(), Valence::ENDOMORPHISM);
    let mut closed: f64 = 0.0;
    let mut flat_scale: f64 = 0.0;
    let mut x = [0.0; 2];
    for node in 0..len {
        chart.fill_point(node, &mut x);
        let s = sigma.eval(0.0, &x);
        let e2 = (2.0 * s).exp();
        let ds = [sigma.d_dx(0.0, &x, 0), sigma.d_dx(0.0, &x, 1)];
        for k in 0..4 {
            gm[k][node] = e2 * a0[k];
        }
        let uv = [f.eval(0.0, &x), h.eval(0.0, &x)];
        let norm2 = e2 * (a * uv[0] * uv[0] + 2.0 * b * uv[0] * uv[1] + c * uv[1] * uv[1]);
        if !(norm2 > 0.0) {
            return Err(Error::InvalidInput(format!("U vanishes at node {node}")));
        }
        let un = norm2.sqrt();
        big_u.comps[0][node] = uv[0];
        big_u.comps[1][node] = uv[1];
        u[node] = un;
        let du = [
            [f.d_dx(0.0, &x, 0), f.d_dx(0.0, &x, 1)],
            [h.d_dx(0.0, &x, 0), h.d_dx(0.0, &x, 1)],
        ];
        // Γ^k_ij = δ^k_j ∂_iσ + δ^k_i ∂_jσ − A_ij (A⁻¹)^{kl} ∂_lσ
        let gamma = |k: usize, i: usize, j: usize| {
            let d = |p: usize, q: usize| if p == q { 1.0 } else { 0.0 };
            d(k, j) * ds[i] + d(k, i) * ds[j]
                - a0[i * 2 + j] * (ai[k * 2] * ds[0] + ai[k * 2 + 1] * ds[1])
        };
        for al in 0..2 {
            for i in 0..2 {
                let nabla = du[al][i] + (0..2).map(|k| gamma(al, i, k) * uv[k]).sum::<f64>();
                w.comps[al * 2 + i][node] = -nabla / un;
            }
        }
        // d(U♭) with U♭ = e^{2σ}(a f + b h, b f + c h)
        let flat = |y: &[f64]| {
            let e = (2.0 * sigma.eval(0.0, y)).exp();
            let (fv, hv) = (f.eval(0.0, y), h.eval(0.0, y));
            [e * (a * fv + b * hv), e * (b * fv + c * hv)]
        };
        let step = crate::expr::OFFGRID_STEP;
        let deriv = |axis: usize, comp: usize| {
            let mut acc = 0.0;
            for (k, wgt) in [(1.0, 45.0), (2.0, -9.0), (3.0, 1.0)] {
                let mut p = x;
                p[axis] += k * step;
                let mut m = x;
                m[axis] -= k * step;
                acc += wgt * (flat(&p)[comp] - flat(&m)[comp]);
            }
            acc / (60.0 * step)
        };
        closed = closed.max((deriv(0, 1) - deriv(1, 0)).abs());
        let fl = flat(&x);
        flat_scale = flat_scale.max(fl[0].abs()).max(fl[1].abs());
    }
    let hmax = (0..2).map(|ax| chart.spacing(ax)).fold(0.0, f64::max);
    let tol = 10.0 * hmax.powi(4) * flat_scale.max(1.0);
    if closed > tol {
        return Err(Error::ClosednessViolated {
            residual: closed,
            tolerance: tol,
        });
    }
    let g = TensorField::metric(chart.clone(), gm)?;
    let asym = g_asymmetry(&g, &w);
    let wtol = 10.0 * hmax.powi(4) * w.max_abs().max(1.0) * g.max_abs();
    if asym > wtol {
        return Err(Error::AsymmetricW {
            residual: asym,
            tolerance: wtol,
        });
    }
    g_symmetrize(&g, &mut w);
    let field_desc = match field {
        TorusField::Builtin { c } => format!("builtin(c={c})"),
        TorusField::Explicit { f, h } => format!("f={f}; h={h}"),
    };
    Ok(InitialData {
        g,
        w,
        big_u,
        u,
        lapse,
        provenance: Provenance::new(
            "conformal_torus",
            &[
                ("sigma", sigma.to_string()),
                ("abc", format!("{abc:?}")),
                ("U", field_desc),
            ],
        ),
        chart,
    })
}

/// Warped product `ds² + h(s)² g_F` over a flat fiber, `U = h∂_s`, `u = h`,
/// `W = −(ln h)'·Id`. Axis 0 is `s`.
pub fn gen_warped(chart: Arc<Chart>, h: &Expr, lapse: LapseField) -> Result<InitialData> {
    if h.max_coord() > 1 || h.uses_time() {
        return Err(Error::InvalidInput("h must depend on x1 only".into()));
    }
    let n = chart.dim();
    let [a, b] = chart.spec().extents[0];
    let hv = sample(&chart, h);
    let min = hv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::NonPositiveWarp { min });
    }
    if chart.boundary(0) == Boundary::Periodic {
        let (ha, hb) = (h.eval(0.0, &[a]), h.eval(0.0, &[b]));
        if (ha - hb).abs() > 1e-10 * ha.abs().max(1.0) {
            return Err(Error::InvalidInput(
                "h must be periodic on a periodic s-axis".into(),
            ));
        }
    }
    let len = chart.len();
    let mut gm = vec![vec![0.0; len]; n * n];
    gm[0].fill(1.0);
    for i in 1..n {
        gm[i * n + i] = hv.iter().map(|v| v * v).collect();
    }
    let bvals: Vec<f64> = (0..len)
        .map(|p| {
            let s = chart.coord(p, 0);
            -h.d_dx(0.0, &[s], 0) / hv[p]
        })
        .collect();
    let mut w = TensorField::zeros(chart.clone(), Valence::ENDOMORPHISM);
    for i in 0..n {
        w.comps[i * n + i] = bvals.clone();
    }
    let mut big_u = TensorField::zeros(chart.clone(), Valence::VECTOR);
    big_u.comps[0] = hv.clone();
    let g = TensorField::metric(chart.clone(), gm)?;
    Ok(InitialData {
        g,
        w,
        big_u,
        u: hv,
        lapse,
        provenance: Provenance::new("warped", &[("h", h.to_string())]),
        chart,
    })
}

/// Flat open box with constant Codazzi tensor `W0 = c n̂⊗n̂♭`:
/// `u = exp(−c⟨n̂,x⟩)`, `U = u n̂`.
pub fn gen_open_codazzi(
    chart: Arc<Chart>,
    nhat: &[f64],
    c: f64,
    lapse: LapseField,
) -> Result<InitialData> {
    let n = chart.dim();
    if nhat.len() != n {
        return Err(Error::BadW0Shape(format!(
            "n̂ has {} entries for dimension {n}",
            nhat.len()
        )));
    }
    let norm = nhat.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::BadW0Shape(format!("|n̂| = {norm}, expected 1")));
    }
    if (0..n).any(|ax| chart.boundary(ax) != Boundary::Open) {
        return Err(Error::InvalidInput(
            "open Codazzi data needs an OPEN chart".into(),
        ));
    }
    let len = chart.len();
    let mut x = vec![0.0; n];
    let u: Vec<f64> = (0..len)
        .map(|p| {
            chart.fill_point(p, &mut x);
            let s: f64 = x.iter().zip(nhat).map(|(a, b)| a * b).sum();
            (-c * s).exp()
        })
        .collect();
    let mut big_u = TensorField::zeros(chart.clone(), Valence::VECTOR);
    for i in 0..n {
        big_u.comps[i] = u.iter().map(|v| v * nhat[i]).collect();
    }
    let mut w = TensorField::zeros(chart.clone(), Valence::ENDOMORPHISM);
    for i in 0..n {
        for j in 0..n {
            w.comps[i * n + j].fill(c * nhat[i] * nhat[j]);
        }
    }
    Ok(InitialData {
        g: TensorField::identity_metric(chart.clone()),
        w,
        big_u,
        u,
        lapse,
        provenance: Provenance::new(
            "open_codazzi",
            &[("n", format!("{nhat:?}")), ("c", c.to_string())],
        ),
        chart,
    })
}

/// Closed-form metric `g_t(X,Y) = g((1 − tW)X, (1 − tW)Y)` of the evolution
/// with unit lapse from data whose `W` is a Codazzi tensor.
pub fn codazzi_oracle_metric(data: &InitialData, t: f64) -> Result<TensorField> {
    let n = data.dim();
    let len = data.chart.len();
    let mut comps = vec![vec![0.0; len]; n * n];
    for p in 0..len {
        // A = 1 − tW, g_t = Aᵀ g A
        let a = |i: usize, j: usize| {
            let d = if i == j { 1.0 } else { 0.0 };
            d - t * data.w.comps[i * n + j][p]
        };
        for i in 0..n {
            for j in 0..n {
                let mut v = 0.0;
                for k in 0..n {
                    for l in 0..n {
                        v += a(k, i) * data.g.comps[k * n + l][p] * a(l, j);
                    }
                }
                comps[i * n + j][p] = v;
            }
        }
    }
    TensorField::metric(data.chart.clone(), comps)
}

/// Decomposes a symmetric matrix of the form `c n̂⊗n̂` into `(n̂, c)`.
pub fn split_rank_one(w0: &[f64], n: usize) -> Result<(Vec<f64>, f64)> {
    if w0.len() != n * n {
        return Err(Error::BadW0Shape(format!("expected {} entries", n * n)));
    }
    let c: f64 = (0..n).map(|i| w0[i * n + i]).sum();
    if c == 0.0 {
        if w0.iter().all(|v| *v == 0.0) {
            let mut e = vec![0.0; n];
            e[0] = 1.0;
            return Ok((e, 0.0));
        }
        return Err(Error::BadW0Shape("traceless nonzero matrix".into()));
    }
    let col = (0..n)
        .max_by(|&i, &j| w0[i * n + i].abs().total_cmp(&w0[j * n + j].abs()))
        .unwrap();
    let mut v: Vec<f64> = (0..n).map(|i| w0[i * n + col]).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    for i in 0..n {
        for j in 0..n {
            if (w0[i * n + j] - c * v[i] * v[j]).abs() > 1e-12 * c.abs().max(1.0) {
                return Err(Error::BadW0Shape("matrix is not c·n̂⊗n̂".into()));
            }
        }
    }
    Ok((v, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{build_chart, ChartSpec};
    use crate::expr::parse_expression;

    fn e(s: &str) -> Expr {
        parse_expression(s).unwrap()
    }

    #[test]
    fn flat_generator() {
        let c = build_chart(ChartSpec::periodic_cube(2, 8)).unwrap();
        let d = gen_flat(c.clone(), &[1.0, 0.0], LapseField::constant(1.0)).unwrap();
        assert!(d.u.iter().all(|v| *v == 1.0));
        d.validate().unwrap();
        let c1 = build_chart(ChartSpec::periodic_cube(1, 8)).unwrap();
        let d = gen_flat(c1, &[2.0], LapseField::constant(1.0)).unwrap();
        assert!(d.u.iter().all(|v| *v == 2.0));
        assert!(matches!(
            gen_flat(c, &[0.0, 0.0], LapseField::constant(1.0)),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn spectral_antiderivative_is_exact_for_trig() {
        let n = 32;
        let xs: Vec<f64> = (0..n)
            .map(|i| i as f64 * 2.0 * std::f64::consts::PI / n as f64)
            .collect();
        let w: Vec<f64> = xs.iter().map(|x| 0.3 * x.sin()).collect();
        let f = periodic_antiderivative(&w, 2.0 * std::f64::consts::PI);
        for (x, v) in xs.iter().zip(&f) {
            assert!((v - (0.3 - 0.3 * x.cos())).abs() < 1e-14);
        }
    }

    #[test]
    fn circle_codazzi() {
        let c = build_chart(ChartSpec::periodic_cube(1, 64)).unwrap();
        let d =
            gen_circle_codazzi(c.clone(), &e("0.3*sin(x1)"), LapseField::constant(1.0)).unwrap();
        d.validate().unwrap();
        // u = exp(0.3 cos x) up to a constant factor
        let ratio = d.u[0] / (0.3f64).exp();
        for node in 0..64 {
            let x = c.coord(node, 0);
            assert!((d.u[node] - ratio * (0.3 * x.cos()).exp()).abs() < 1e-13);
        }
        let z = gen_circle_codazzi(c.clone(), &e("0"), LapseField::constant(1.0)).unwrap();
        assert!(z.u.iter().all(|v| *v == 1.0));
        assert!(matches!(
            gen_circle_codazzi(c, &e("0.1 + sin(x1)"), LapseField::constant(1.0)),
            Err(Error::NonZeroMean { .. })
        ));
    }

    #[test]
    fn conformal_torus_builtin() {
        let c = build_chart(ChartSpec::periodic_cube(2, 32)).unwrap();
        let sigma = e("0.2*cos(x1)*cos(x2)");
        let d = gen_conformal_torus(
            c.clone(),
            &sigma,
            [1.0, 0.0, 1.0],
            &TorusField::Builtin { c: 1.0 },
            LapseField::constant(1.0),
        )
        .unwrap();
        d.validate().unwrap();
        for node in 0..c.len() {
            let s = sigma.eval(0.0, &c.point(node));
            assert!((d.u[node] - (-s).exp()).abs() < 1e-14);
        }
        assert!(d.spinor_seed().is_some());

        let flat = gen_conformal_torus(
            c.clone(),
            &e("0"),
            [1.0, 0.0, 1.0],
            &TorusField::Explicit {
                f: e("1"),
                h: e("0"),
            },
            LapseField::constant(1.0),
        )
        .unwrap();
        assert_eq!(flat.w.max_abs(), 0.0);
        assert!(flat.u.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn conformal_torus_rejects_non_closed() {
        let c = build_chart(ChartSpec::periodic_cube(2, 16)).unwrap();
        let r = gen_conformal_torus(
            c.clone(),
            &e("0"),
            [1.0, 0.0, 1.0],
            &TorusField::Explicit {
                f: e("2 + sin(x2)"),
                h: e("0"),
            },
            LapseField::constant(1.0),
        );
        assert!(matches!(r, Err(Error::ClosednessViolated { .. })));
        let r = gen_conformal_torus(
            c,
            &e("0"),
            [1.0, 2.0, 1.0],
            &TorusField::Builtin { c: 1.0 },
            LapseField::constant(1.0),
        );
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn warped_generator() {
        let c = build_chart(ChartSpec::periodic_cube(2, 32)).unwrap();
        let d = gen_warped(c.clone(), &e("exp(0.2*sin(x1))"), LapseField::constant(1.0)).unwrap();
        d.validate().unwrap();
        for node in 0..c.len() {
            let s = c.coord(node, 0);
            assert!((d.w.comps[0][node] + 0.2 * s.cos()).abs() < 1e-12);
            assert!((d.w.comps[3][node] + 0.2 * s.cos()).abs() < 1e-12);
        }
        let d = gen_warped(c.clone(), &e("2 + sin(x1)"), LapseField::constant(1.0)).unwrap();
        for node in 0..c.len() {
            let s = c.coord(node, 0);
            assert!((d.w.comps[0][node] + s.cos() / (2.0 + s.sin())).abs() < 1e-12);
        }
        let one = gen_warped(c.clone(), &e("1"), LapseField::constant(1.0)).unwrap();
        assert_eq!(one.w.max_abs(), 0.0);
        assert!(matches!(
            gen_warped(c, &e("sin(x1)"), LapseField::constant(1.0)),
            Err(Error::NonPositiveWarp { .. })
        ));
    }

    #[test]
    fn open_codazzi_generator() {
        let c = build_chart(ChartSpec::new(
            vec![[0.0, 1.0], [0.0, 1.0]],
            vec![17, 17],
            vec![Boundary::Open, Boundary::Open],
        ))
        .unwrap();
        let d = gen_open_codazzi(c.clone(), &[1.0, 0.0], 0.5, LapseField::constant(1.0)).unwrap();
        d.validate().unwrap();
        for node in 0..c.len() {
            assert!((d.u[node] - (-0.5 * c.coord(node, 0)).exp()).abs() < 1e-15);
        }
        let z = gen_open_codazzi(c.clone(), &[0.6, 0.8], 0.0, LapseField::constant(1.0)).unwrap();
        assert_eq!(z.w.max_abs(), 0.0);
        assert!(matches!(
            gen_open_codazzi(c, &[1.0, 1.0], 0.5, LapseField::constant(1.0)),
            Err(Error::BadW0Shape(_))
        ));
        let (v, k) = split_rank_one(&[0.18, 0.24, 0.24, 0.32], 2).unwrap();
        assert!((k - 0.5).abs() < 1e-15 && (v[0] - 0.6).abs() < 1e-15);
        assert!(split_rank_one(&[1.0, 0.0, 0.0, 1.0], 2).is_err());
    }
}
