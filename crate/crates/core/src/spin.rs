//! Two-dimensional spinor calculus on a slice and its Lorentzian extension to
//! a three-dimensional block.
//!
//! Clifford multiplication follows `X·X = −g(X,X)`. On the slice the frame
//! generators are `e₁ = diag(i, −i)` and `e₂ = [[0,1],[−1,0]]`, with the unit
//! spinor `v = (1, 0)` satisfying `e₁·v = iv`. In the block the generators are
//! `T̄ = i e₁e₂` (so `T̄² = +1` while `ḡ(T,T) = −1`) and `Ē_j = −i T̄ e_j`,
//! which makes the slice action `X·φ = i T̄·X̄·φ` hold identically.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::chart::{Chart, Mask};
use crate::error::{Error, Result};
use crate::fields::{TensorField, Valence};
use crate::geometry::{covariant_derivative, endo_trace, hessian, GeometryCache};
use crate::report::{ResidualEntry, ResidualReport};
use crate::spacetime::AssembledBlock;

pub type Spinor = [Complex64; 2];
pub type Mat2 = [[Complex64; 2]; 2];

/// Largest imaginary part tolerated in a Dirac current component, relative
/// to `max(1, ‖ψ‖²)`.
pub const CURRENT_IMAG_TOL: f64 = 1e-12;

pub const W_KILLING: &str = "w_killing";
pub const SPINOR_NULL: &str = "spinor_null";
pub const KILLING_DU: &str = "killing_du";
pub const KILLING_NABLA_U: &str = "killing_nabla_u";
pub const KILLING_W_U: &str = "killing_w_u_plus_grad_u";
pub const KILLING_DNABLA_W: &str = "killing_dnabla_w_u";
pub const KILLING_HESS: &str = "killing_hessian";
pub const KILLING_DIRAC: &str = "killing_dirac";
pub const PARALLEL_SPATIAL: &str = "parallel_spinor_spatial";
pub const PARALLEL_TIME: &str = "parallel_spinor_time";
pub const V_DOT_PHI: &str = "v_dot_phi";
pub const CURRENT_MINUS_V: &str = "dirac_current_minus_v";
pub const NORM_MINUS_U: &str = "spinor_norm_minus_u";

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn apply(m: &Mat2, s: &Spinor) -> Spinor {
    [
        m[0][0] * s[0] + m[0][1] * s[1],
        m[1][0] * s[0] + m[1][1] * s[1],
    ]
}

fn mat_scale(m: &Mat2, c: Complex64) -> Mat2 {
    [[m[0][0] * c, m[0][1] * c], [m[1][0] * c, m[1][1] * c]]
}

fn mat_add(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] + b[0][0], a[0][1] + b[0][1]],
        [a[1][0] + b[1][0], a[1][1] + b[1][1]],
    ]
}

fn axpy(a: &Spinor, c: Complex64, b: &Spinor) -> Spinor {
    [a[0] + c * b[0], a[1] + c * b[1]]
}

/// Positive-definite fiber product `(a, b) = Σ a_k conj(b_k)`.
pub fn inner(a: &Spinor, b: &Spinor) -> Complex64 {
    a[0] * b[0].conj() + a[1] * b[1].conj()
}

pub fn norm_sq(a: &Spinor) -> f64 {
    a[0].norm_sqr() + a[1].norm_sqr()
}

/// Riemannian generators `(e₁, e₂)`.
pub fn riemannian_generators() -> [Mat2; 2] {
    [[[I, ZERO], [ZERO, -I]], [[ZERO, ONE], [-ONE, ZERO]]]
}

/// Lorentzian generators `(T̄, Ē₁, Ē₂)`.
pub fn lorentzian_generators() -> [Mat2; 3] {
    let [e1, e2] = riemannian_generators();
    let t = mat_scale(&mat_mul(&e1, &e2), I);
    let minus_i_t = mat_scale(&t, -I);
    [t, mat_mul(&minus_i_t, &e1), mat_mul(&minus_i_t, &e2)]
}

/// Unit spinor with `e₁·v = iv`.
pub fn unit_spinor() -> Spinor {
    [ONE, ZERO]
}

/// Largest entry of `s_a s_b + s_b s_a + 2 ε_a δ_ab` over generator pairs,
/// with `ε = +1` on the slice and `ε = (−1, 1, 1)` in the block.
pub fn clifford_defect() -> f64 {
    let mut worst: f64 = 0.0;
    let mut check = |gens: &[Mat2], eps: &[f64]| {
        for a in 0..gens.len() {
            for b in 0..gens.len() {
                let s = mat_add(&mat_mul(&gens[a], &gens[b]), &mat_mul(&gens[b], &gens[a]));
                for i in 0..2 {
                    for j in 0..2 {
                        let expect = if a == b && i == j { -2.0 * eps[a] } else { 0.0 };
                        worst = worst.max((s[i][j] - Complex64::new(expect, 0.0)).norm());
                    }
                }
            }
        }
    };
    check(&riemannian_generators(), &[1.0, 1.0]);
    check(&lorentzian_generators(), &[-1.0, 1.0, 1.0]);
    worst
}

/// Two complex components per node.
#[derive(Debug, Clone)]
pub struct SpinorField {
    pub chart: Arc<Chart>,
    pub values: Vec<Spinor>,
}

impl SpinorField {
    pub fn zeros(chart: Arc<Chart>) -> Self {
        let len = chart.len();
        Self {
            chart,
            values: vec![[ZERO; 2]; len],
        }
    }

    /// `φ = γ·v` for a real function `γ`.
    pub fn from_seed(chart: Arc<Chart>, gamma: &[f64]) -> Result<Self> {
        if gamma.len() != chart.len() {
            return Err(Error::Shape("spinor seed does not match chart".into()));
        }
        let v = unit_spinor();
        let values = gamma.iter().map(|g| [v[0] * *g, v[1] * *g]).collect();
        Ok(Self { chart, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn component(&self, k: usize) -> Vec<Complex64> {
        self.values.iter().map(|s| s[k]).collect()
    }

    /// `∂_axis φ`, one spinor per node.
    pub fn diff(&self, axis: usize) -> Vec<Spinor> {
        let d0 = self.chart.diff(&self.component(0), axis);
        let d1 = self.chart.diff(&self.component(1), axis);
        d0.into_iter().zip(d1).map(|(a, b)| [a, b]).collect()
    }

    /// Interleaved `(re, im)` pairs, component-major.
    pub fn interleaved(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(4 * self.len());
        for k in 0..2 {
            for s in &self.values {
                out.push(s[k].re);
                out.push(s[k].im);
            }
        }
        out
    }
}

/// Gram–Schmidt frame of a 2D metric starting from `∂₁`.
pub fn slice_frame(g: &TensorField) -> Result<[TensorField; 2]> {
    if g.dim() != 2 {
        return Err(Error::DimensionUnsupported(g.dim()));
    }
    let chart = g.chart.clone();
    let mut e1 = TensorField::zeros(chart.clone(), Valence::VECTOR);
    let mut e2 = TensorField::zeros(chart, Valence::VECTOR);
    for p in 0..g.len() {
        let (a, b, c) = (g.comps[0][p], g.comps[1][p], g.comps[3][p]);
        let ([x1, _], [y1, y2]) = frame2(a, b, c);
        e1.comps[0][p] = x1;
        e2.comps[0][p] = y1;
        e2.comps[1][p] = y2;
    }
    Ok([e1, e2])
}

/// Frame vectors for `g = [[a,b],[b,c]]`: `e₁ = ∂₁/√a`,
/// `e₂ = (∂₂ − (b/a)∂₁)/√(c − b²/a)`.
fn frame2(a: f64, b: f64, c: f64) -> ([f64; 2], [f64; 2]) {
    let s = a.sqrt();
    let r = (c - b * b / a).sqrt();
    ([1.0 / s, 0.0], [-b / (a * r), 1.0 / r])
}

/// `ω₁₂(∂_i) = g(∇_{∂_i} e₁, e₂)` for the Gram–Schmidt frame.
pub fn spin_connection_2d(geo: &GeometryCache) -> Result<TensorField> {
    let [e1, e2] = slice_frame(&geo.g)?;
    Ok(connection_form(geo, &e1, &e2))
}

fn connection_form(geo: &GeometryCache, e1: &TensorField, e2: &TensorField) -> TensorField {
    let n = 2;
    let de1 = covariant_derivative(geo, e1);
    let mut omega = TensorField::zeros(geo.chart().clone(), Valence::COVECTOR);
    for i in 0..n {
        for p in 0..geo.len() {
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    s += geo.g.comps[a * n + b][p] * de1.comps[a * n + i][p] * e2.comps[b][p];
                }
            }
            omega.comps[i][p] = s;
        }
    }
    omega
}

/// Dirac current `g(U_ψ, X) = −i(X·ψ, ψ)` and `u_ψ = ‖ψ‖²`.
pub fn dirac_current(psi: &SpinorField, g: &TensorField) -> Result<(TensorField, Vec<f64>)> {
    let frame = slice_frame(g)?;
    let gens = riemannian_generators();
    let mut big_u = TensorField::zeros(g.chart.clone(), Valence::VECTOR);
    let mut u = vec![0.0; psi.len()];
    for (p, s) in psi.values.iter().enumerate() {
        u[p] = norm_sq(s);
        let c = current_components(&gens, s)?;
        for (j, cj) in c.iter().enumerate() {
            for a in 0..2 {
                big_u.comps[a][p] += cj * frame[j].comps[a][p];
            }
        }
    }
    Ok((big_u, u))
}

/// Frame components `−i(e_j·ψ, ψ)`, rejected when not real.
fn current_components(gens: &[Mat2; 2], s: &Spinor) -> Result<[f64; 2]> {
    let scale = norm_sq(s).max(1.0);
    let mut out = [0.0; 2];
    for (j, e) in gens.iter().enumerate() {
        let c = -I * inner(&apply(e, s), s);
        let imag = c.im.abs() / scale;
        if imag > CURRENT_IMAG_TOL {
            return Err(Error::NonRealCurrent { imag });
        }
        out[j] = c.re;
    }
    Ok(out)
}

/// Frame components `g(Y, e_k)` of a vector field at one node.
fn frame_components(g: &TensorField, frame: &[TensorField; 2], y: [f64; 2], p: usize) -> [f64; 2] {
    let mut out = [0.0; 2];
    for (k, e) in frame.iter().enumerate() {
        for a in 0..2 {
            for b in 0..2 {
                out[k] += g.comps[a * 2 + b][p] * y[a] * e.comps[b][p];
            }
        }
    }
    out
}

fn clifford_slice(c: [f64; 2], s: &Spinor) -> Spinor {
    let gens = riemannian_generators();
    let a = apply(&gens[0], s);
    let b = apply(&gens[1], s);
    [a[0] * c[0] + b[0] * c[1], a[1] * c[0] + b[1] * c[1]]
}

/// Pointwise values of `∇^S_{e_j}φ` and related slice quantities.
struct SliceSpin {
    frame: [TensorField; 2],
    /// `∇^S_{e_j}φ` for `j = 1, 2`.
    nabla: [Vec<Spinor>; 2],
}

fn slice_spin(phi: &SpinorField, geo: &GeometryCache) -> Result<SliceSpin> {
    let frame = slice_frame(&geo.g)?;
    let omega = connection_form(geo, &frame[0], &frame[1]);
    let gens = riemannian_generators();
    let e12 = mat_mul(&gens[0], &gens[1]);
    let d = [phi.diff(0), phi.diff(1)];
    let mut nabla = [vec![[ZERO; 2]; phi.len()], vec![[ZERO; 2]; phi.len()]];
    for (j, e) in frame.iter().enumerate() {
        for p in 0..phi.len() {
            let mut acc = [ZERO; 2];
            for i in 0..2 {
                let x = e.comps[i][p];
                let rot = apply(&e12, &phi.values[p]);
                let half = Complex64::new(0.5 * omega.comps[i][p], 0.0);
                acc[0] += (d[i][p][0] + half * rot[0]) * x;
                acc[1] += (d[i][p][1] + half * rot[1]) * x;
            }
            nabla[j][p] = acc;
        }
    }
    Ok(SliceSpin { frame, nabla })
}

/// Residuals of `∇^S_Xφ = (i/2)W(X)·φ` on the frame vectors and of
/// `U_φ·φ = i u_φ φ`.
#[derive(Debug, Clone)]
pub struct WKillingResidual {
    pub nabla: [Vec<Spinor>; 2],
    pub null: Vec<Spinor>,
}

impl WKillingResidual {
    pub fn report(&self, mask: &Mask, tolerance: Option<f64>) -> Result<ResidualReport> {
        let mut r = ResidualReport::default();
        let pw: Vec<f64> = (0..self.null.len())
            .map(|p| {
                norm_sq(&self.nabla[0][p])
                    .max(norm_sq(&self.nabla[1][p]))
                    .sqrt()
            })
            .collect();
        r.push(ResidualEntry::from_pointwise(
            W_KILLING, &pw, mask, tolerance,
        )?);
        let pw: Vec<f64> = self.null.iter().map(|s| norm_sq(s).sqrt()).collect();
        r.push(ResidualEntry::from_pointwise(
            SPINOR_NULL,
            &pw,
            mask,
            tolerance,
        )?);
        Ok(r)
    }
}

pub fn w_killing_residual(
    phi: &SpinorField,
    w: &TensorField,
    geo: &GeometryCache,
) -> Result<WKillingResidual> {
    let ss = slice_spin(phi, geo)?;
    let (big_u, u) = dirac_current(phi, &geo.g)?;
    let mut nabla = ss.nabla.clone();
    for (j, e) in ss.frame.iter().enumerate() {
        for p in 0..phi.len() {
            let x = [e.comps[0][p], e.comps[1][p]];
            let wx = [
                w.comps[0][p] * x[0] + w.comps[1][p] * x[1],
                w.comps[2][p] * x[0] + w.comps[3][p] * x[1],
            ];
            let c = frame_components(&geo.g, &ss.frame, wx, p);
            let wphi = clifford_slice(c, &phi.values[p]);
            nabla[j][p] = axpy(&nabla[j][p], -0.5 * I, &wphi);
        }
    }
    let null = (0..phi.len())
        .map(|p| {
            let c = frame_components(&geo.g, &ss.frame, [big_u.comps[0][p], big_u.comps[1][p]], p);
            let up = clifford_slice(c, &phi.values[p]);
            axpy(&up, -I * u[p], &phi.values[p])
        })
        .collect();
    Ok(WKillingResidual { nabla, null })
}

/// Consequences of the W-Killing equation for `(U_φ, u_φ)` and the Dirac
/// operator, each as a pointwise Euclidean norm of `LHS − RHS`.
pub fn killing_consequence_residuals(
    phi: &SpinorField,
    w: &TensorField,
    geo: &GeometryCache,
    mask: &Mask,
    tolerance: Option<f64>,
) -> Result<ResidualReport> {
    let n = 2;
    let len = phi.len();
    let chart = geo.chart();
    let (big_u, u) = dirac_current(phi, &geo.g)?;
    let g = &geo.g;
    let gu = |p: usize, y: [f64; 2]| -> f64 {
        (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .map(|(a, b)| g.comps[a * n + b][p] * y[a] * big_u.comps[b][p])
            .sum()
    };
    let wcol = |p: usize, j: usize| [w.comps[j][p], w.comps[n + j][p]];
    let du = chart.gradient(&u);
    let mut r = ResidualReport::default();

    // X(u) + g(W(X), U)
    let pw: Vec<f64> = (0..len)
        .map(|p| {
            (0..n)
                .map(|i| (du[i][p] + gu(p, wcol(p, i))).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    r.push(ResidualEntry::from_pointwise(
        KILLING_DU, &pw, mask, tolerance,
    )?);

    // ∇U + u W
    let du_vec = covariant_derivative(geo, &big_u);
    let pw: Vec<f64> = (0..len)
        .map(|p| {
            (0..n * n)
                .map(|c| (du_vec.comps[c][p] + u[p] * w.comps[c][p]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    r.push(ResidualEntry::from_pointwise(
        KILLING_NABLA_U,
        &pw,
        mask,
        tolerance,
    )?);

    // W(U) + grad u, the sign forced by X(u) = −g(W(X), U)
    let pw: Vec<f64> = (0..len)
        .map(|p| {
            (0..n)
                .map(|a| {
                    let wu: f64 = (0..n)
                        .map(|b| w.comps[a * n + b][p] * big_u.comps[b][p])
                        .sum();
                    let grad: f64 = (0..n)
                        .map(|b| geo.ginv.comps[a * n + b][p] * du[b][p])
                        .sum();
                    (wu + grad).powi(2)
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    r.push(ResidualEntry::from_pointwise(
        KILLING_W_U,
        &pw,
        mask,
        tolerance,
    )?);

    // (∇_i W)^a_j at flat index (a, i, j)
    let dw = covariant_derivative(geo, w);
    let nabla_w =
        |p: usize, i: usize, j: usize| [dw.comps[i * n + j][p], dw.comps[(n + i) * n + j][p]];
    let pw: Vec<f64> = (0..len)
        .map(|p| {
            let a = nabla_w(p, 0, 1);
            let b = nabla_w(p, 1, 0);
            gu(p, [a[0] - b[0], a[1] - b[1]]).abs()
        })
        .collect();
    r.push(ResidualEntry::from_pointwise(
        KILLING_DNABLA_W,
        &pw,
        mask,
        tolerance,
    )?);

    // Hess u(X,Y) + g((∇_X W)(Y), U) − u g(W X, W Y)
    let hess = hessian(geo, &u);
    let pw: Vec<f64> = (0..len)
        .map(|p| {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let wi = wcol(p, i);
                    let wj = wcol(p, j);
                    let gww: f64 = (0..n)
                        .flat_map(|a| (0..n).map(move |b| (a, b)))
                        .map(|(a, b)| g.comps[a * n + b][p] * wi[a] * wj[b])
                        .sum();
                    let v = hess.comps[i * n + j][p] + gu(p, nabla_w(p, i, j)) - u[p] * gww;
                    s += v * v;
                }
            }
            s.sqrt()
        })
        .collect();
    r.push(ResidualEntry::from_pointwise(
        KILLING_HESS,
        &pw,
        mask,
        tolerance,
    )?);

    // Dφ + (i/2) tr W φ
    let ss = slice_spin(phi, geo)?;
    let gens = riemannian_generators();
    let tr = endo_trace(w);
    let pw: Vec<f64> = (0..len)
        .map(|p| {
            let mut acc = phi.values[p];
            acc = [acc[0] * (0.5 * I * tr[p]), acc[1] * (0.5 * I * tr[p])];
            for j in 0..n {
                let t = apply(&gens[j], &ss.nabla[j][p]);
                acc = [acc[0] + t[0], acc[1] + t[1]];
            }
            norm_sq(&acc).sqrt()
        })
        .collect();
    r.push(ResidualEntry::from_pointwise(
        KILLING_DIRAC,
        &pw,
        mask,
        tolerance,
    )?);
    Ok(r)
}

/// Orthonormal frame `(T, E₁, E₂)` of an assembled `2+1` block and the spin
/// connection matrices `Ω_μ = ½ Σ_{a<b} ε_a ε_b ḡ(∇̄_μ s_a, s_b) s_a·s_b`.
#[derive(Debug, Clone)]
pub struct BlockSpin {
    pub chart: Arc<Chart>,
    pub slice_len: usize,
    pub levels: usize,
    pub dt: f64,
    pub frame: [TensorField; 3],
    /// `Ω_μ` per block node, indexed `[μ][node]`.
    pub omega: Vec<Vec<Mat2>>,
    /// `V` on the block.
    pub v: TensorField,
    pub u: Vec<f64>,
    pub gbar: TensorField,
}

const EPS: [f64; 3] = [-1.0, 1.0, 1.0];

impl BlockSpin {
    pub fn new(ab: &AssembledBlock, lgeo: &GeometryCache) -> Result<Self> {
        if ab.slice_chart.dim() != 2 {
            return Err(Error::DimensionUnsupported(ab.slice_chart.dim()));
        }
        let chart = ab.chart.clone();
        let n1 = 3;
        let len = chart.len();
        let g = &ab.gbar;
        let mut frame = [
            TensorField::zeros(chart.clone(), Valence::VECTOR),
            TensorField::zeros(chart.clone(), Valence::VECTOR),
            TensorField::zeros(chart.clone(), Valence::VECTOR),
        ];
        for p in 0..len {
            frame[0].comps[0][p] = 1.0 / ab.lambda[p];
            let (a, b, c) = (g.comps[4][p], g.comps[5][p], g.comps[8][p]);
            let (x, y) = frame2(a, b, c);
            frame[1].comps[1][p] = x[0];
            frame[1].comps[2][p] = x[1];
            frame[2].comps[1][p] = y[0];
            frame[2].comps[2][p] = y[1];
        }
        let derivs: Vec<TensorField> = frame
            .iter()
            .map(|s| covariant_derivative(lgeo, s))
            .collect();
        let gens = lorentzian_generators();
        let pairs: Vec<(usize, usize, Mat2)> = [(0, 1), (0, 2), (1, 2)]
            .iter()
            .map(|&(a, b)| (a, b, mat_mul(&gens[a], &gens[b])))
            .collect();
        let omega: Vec<Vec<Mat2>> = (0..n1)
            .map(|mu| {
                (0..len)
                    .into_par_iter()
                    .map(|p| {
                        let mut m = [[ZERO; 2]; 2];
                        for (a, b, sab) in &pairs {
                            let mut c = 0.0;
                            for r in 0..n1 {
                                for s in 0..n1 {
                                    c += g.comps[r * n1 + s][p]
                                        * derivs[*a].comps[r * n1 + mu][p]
                                        * frame[*b].comps[s][p];
                                }
                            }
                            let coef = 0.5 * EPS[*a] * EPS[*b] * c;
                            m = mat_add(&m, &mat_scale(sab, Complex64::new(coef, 0.0)));
                        }
                        m
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            chart,
            slice_len: ab.slice_len(),
            levels: ab.levels,
            dt: ab.chart.spacing(0),
            frame,
            omega,
            v: ab.v.clone(),
            u: ab.u.clone(),
            gbar: ab.gbar.clone(),
        })
    }

    /// `Ω_t` at level position `l + ½` by four-point interpolation.
    fn omega_mid(&self, l: usize, p: usize) -> Mat2 {
        let (start, w): (usize, [f64; 4]) = if l == 0 {
            (0, [5.0 / 16.0, 15.0 / 16.0, -5.0 / 16.0, 1.0 / 16.0])
        } else if l + 2 >= self.levels {
            (
                self.levels - 4,
                [1.0 / 16.0, -5.0 / 16.0, 15.0 / 16.0, 5.0 / 16.0],
            )
        } else {
            (l - 1, [-1.0 / 16.0, 9.0 / 16.0, 9.0 / 16.0, -1.0 / 16.0])
        };
        let mut m = [[ZERO; 2]; 2];
        for (k, wk) in w.iter().enumerate() {
            let node = (start + k) * self.slice_len + p;
            m = mat_add(
                &m,
                &mat_scale(&self.omega[0][node], Complex64::new(*wk, 0.0)),
            );
        }
        m
    }

    /// Solves `∂_tφ + Ω_tφ = 0` along each `t`-line with RK4, starting from
    /// `seed` at level `from`.
    pub fn transport(&self, seed: &[Spinor], from: usize) -> Result<SpinorField> {
        if seed.len() != self.slice_len || from >= self.levels {
            return Err(Error::Shape("spinor seed does not match the block".into()));
        }
        if self.levels < 4 {
            return Err(Error::InvalidSpec(
                "transport needs at least 4 levels".into(),
            ));
        }
        let slen = self.slice_len;
        let levels = self.levels;
        let dt = self.dt;
        let lines: Vec<Vec<Spinor>> = (0..slen)
            .into_par_iter()
            .map(|p| {
                let mut line = vec![[ZERO; 2]; levels];
                line[from] = seed[p];
                let rhs = |m: &Mat2, s: &Spinor| {
                    let r = apply(m, s);
                    [-r[0], -r[1]]
                };
                let step = |s: &Spinor, a0: &Mat2, am: &Mat2, a1: &Mat2, h: f64| -> Spinor {
                    let h = Complex64::new(h, 0.0);
                    let k1 = rhs(a0, s);
                    let k2 = rhs(am, &axpy(s, h * 0.5, &k1));
                    let k3 = rhs(am, &axpy(s, h * 0.5, &k2));
                    let k4 = rhs(a1, &axpy(s, h, &k3));
                    let mut out = *s;
                    for c in 0..2 {
                        out[c] += h / 6.0 * (k1[c] + k2[c] * 2.0 + k3[c] * 2.0 + k4[c]);
                    }
                    out
                };
                let at = |l: usize| &self.omega[0][l * slen + p];
                for l in from..levels - 1 {
                    line[l + 1] = step(&line[l], at(l), &self.omega_mid(l, p), at(l + 1), dt);
                }
                for l in (0..from).rev() {
                    line[l] = step(&line[l + 1], at(l + 1), &self.omega_mid(l, p), at(l), -dt);
                }
                line
            })
            .collect();
        let mut out = SpinorField::zeros(self.chart.clone());
        for (p, line) in lines.iter().enumerate() {
            for (l, s) in line.iter().enumerate() {
                out.values[l * slen + p] = *s;
            }
        }
        Ok(out)
    }

    /// `∇^S̄_{s_a}φ` for each frame vector.
    pub fn nabla(&self, phi: &SpinorField) -> [Vec<Spinor>; 3] {
        let d: Vec<Vec<Spinor>> = (0..3).map(|mu| phi.diff(mu)).collect();
        let mut out: [Vec<Spinor>; 3] = Default::default();
        for (a, s) in self.frame.iter().enumerate() {
            out[a] = (0..phi.len())
                .map(|p| {
                    let mut acc = [ZERO; 2];
                    for mu in 0..3 {
                        let x = s.comps[mu][p];
                        if x == 0.0 {
                            continue;
                        }
                        let om = apply(&self.omega[mu][p], &phi.values[p]);
                        acc[0] += (d[mu][p][0] + om[0]) * x;
                        acc[1] += (d[mu][p][1] + om[1]) * x;
                    }
                    acc
                })
                .collect();
        }
        out
    }

    /// Frame components `ε_a ḡ(Y, s_a)` of a block vector at one node.
    fn frame_components(&self, y: &TensorField, p: usize) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (a, s) in self.frame.iter().enumerate() {
            let mut v = 0.0;
            for r in 0..3 {
                for q in 0..3 {
                    v += self.gbar.comps[r * 3 + q][p] * y.comps[r][p] * s.comps[q][p];
                }
            }
            out[a] = EPS[a] * v;
        }
        out
    }

    /// Dirac current `ḡ(V_φ, X) = −(T̄·X·φ, φ)` in coordinates.
    pub fn dirac_current(&self, phi: &SpinorField) -> Result<TensorField> {
        let gens = lorentzian_generators();
        let mut out = TensorField::zeros(self.chart.clone(), Valence::VECTOR);
        let mut imag: f64 = 0.0;
        for p in 0..phi.len() {
            let s = &phi.values[p];
            for a in 0..3 {
                let c = -inner(&apply(&gens[0], &apply(&gens[a], s)), s);
                imag = imag.max(c.im.abs() / norm_sq(s).max(1.0));
                for mu in 0..3 {
                    out.comps[mu][p] += EPS[a] * c.re * self.frame[a].comps[mu][p];
                }
            }
        }
        if imag > CURRENT_IMAG_TOL {
            return Err(Error::NonRealCurrent { imag });
        }
        Ok(out)
    }

    /// Residuals of a transported spinor: spatial and time parts of
    /// `∇^S̄φ`, `V·φ`, `V_φ − V` and `u − ‖φ‖²`.
    pub fn parallel_spinor_residual(
        &self,
        phi: &SpinorField,
        mask: &Mask,
        tolerance: Option<f64>,
    ) -> Result<ResidualReport> {
        let gens = lorentzian_generators();
        let nab = self.nabla(phi);
        let len = phi.len();
        let mut r = ResidualReport::default();
        let pw: Vec<f64> = (0..len)
            .map(|p| norm_sq(&nab[1][p]).max(norm_sq(&nab[2][p])).sqrt())
            .collect();
        r.push(ResidualEntry::from_pointwise(
            PARALLEL_SPATIAL,
            &pw,
            mask,
            tolerance,
        )?);
        let pw: Vec<f64> = (0..len).map(|p| norm_sq(&nab[0][p]).sqrt()).collect();
        r.push(ResidualEntry::from_pointwise(
            PARALLEL_TIME,
            &pw,
            mask,
            tolerance,
        )?);
        let pw: Vec<f64> = (0..len)
            .map(|p| {
                let c = self.frame_components(&self.v, p);
                let mut acc = [ZERO; 2];
                for a in 0..3 {
                    let t = apply(&gens[a], &phi.values[p]);
                    acc = axpy(&acc, Complex64::new(c[a], 0.0), &t);
                }
                norm_sq(&acc).sqrt()
            })
            .collect();
        r.push(ResidualEntry::from_pointwise(
            V_DOT_PHI, &pw, mask, tolerance,
        )?);
        let vphi = self.dirac_current(phi)?;
        let pw: Vec<f64> = (0..len)
            .map(|p| {
                (0..3)
                    .map(|mu| (vphi.comps[mu][p] - self.v.comps[mu][p]).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        r.push(ResidualEntry::from_pointwise(
            CURRENT_MINUS_V,
            &pw,
            mask,
            tolerance,
        )?);
        let pw: Vec<f64> = (0..len)
            .map(|p| (self.u[p] - norm_sq(&phi.values[p])).abs())
            .collect();
        r.push(ResidualEntry::from_pointwise(
            NORM_MINUS_U,
            &pw,
            mask,
            tolerance,
        )?);
        Ok(r)
    }
}

/// Embeds a slice spinor as the seed of a block transport (identical
/// components under the identification).
pub fn embed_seed(phi0: &SpinorField) -> Vec<Spinor> {
    phi0.values.clone()
}
