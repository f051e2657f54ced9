//! Residuals of the constraint equations on a single slice.

use crate::chart::{interior_mask, Chart, GridFunction, Mask};
use crate::error::Result;
use crate::fields::{pointwise_norm_sq, TensorField, Valence};
use crate::geometry::{
    covariant_derivative, differential, divergence, lower_endomorphism, trace, GeometryCache,
};
use crate::initial_data::InitialData;
use crate::report::{ResidualEntry, ResidualReport};

pub const VECTOR_CONSTRAINT: &str = "vector_constraint";
pub const NORM_CONSTRAINT: &str = "norm_constraint";
pub const CODAZZI: &str = "codazzi";
pub const RICCI_FLAT_HAMILTONIAN: &str = "ricci_flat_hamiltonian";
pub const RICCI_FLAT_MOMENTUM: &str = "ricci_flat_momentum";
pub const W_SYMMETRY: &str = "w_symmetry";

/// Evaluation mask for first-derivative residuals: two nodes away from OPEN
/// boundaries.
pub fn first_order_mask(chart: &Chart) -> Mask {
    interior_mask(chart, 2)
}

/// Evaluation mask for curvature residuals: four nodes away from OPEN
/// boundaries, where composed stencils are all central.
pub fn second_order_mask(chart: &Chart) -> Mask {
    interior_mask(chart, 4)
}

/// `∇U + uW` as an endomorphism `X ↦ ∇_X U + u W(X)`.
pub fn vector_constraint(
    geo: &GeometryCache,
    big_u: &TensorField,
    u: &[f64],
    w: &TensorField,
) -> TensorField {
    let nabla_u = covariant_derivative(geo, big_u);
    let uw = w.scale_by(u);
    nabla_u.add(&uw).expect("both endomorphisms")
}

pub fn vector_constraint_residual(data: &InitialData) -> Result<TensorField> {
    let geo = GeometryCache::new(&data.g)?;
    Ok(vector_constraint(&geo, &data.big_u, &data.u, &data.w))
}

/// `g(U,U) − u²` nodewise.
pub fn norm_constraint(g: &TensorField, big_u: &TensorField, u: &[f64]) -> Vec<f64> {
    g.eval2(big_u, big_u)
        .iter()
        .zip(u)
        .map(|(a, b)| a - b * b)
        .collect()
}

pub fn norm_constraint_residual(data: &InitialData) -> Result<GridFunction> {
    GridFunction::new(
        data.chart.clone(),
        norm_constraint(&data.g, &data.big_u, &data.u),
    )
}

/// `d^∇W` with all slots lowered: `g_{cm}((∇_a W)^m_b − (∇_b W)^m_a)`.
pub fn codazzi_residual(w: &TensorField, geo: &GeometryCache) -> TensorField {
    let n = geo.dim();
    let dw = covariant_derivative(geo, w);
    let mut out = TensorField::zeros(geo.chart().clone(), Valence::new(0, 3));
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            for c in 0..n {
                let dst = &mut out.comps[(a * n + b) * n + c];
                for m in 0..n {
                    let g = &geo.g.comps[c * n + m];
                    let x = &dw.comps[(m * n + a) * n + b];
                    let y = &dw.comps[(m * n + b) * n + a];
                    for p in 0..dst.len() {
                        dst[p] += g[p] * (x[p] - y[p]);
                    }
                }
            }
        }
    }
    out
}

/// `(scal − |II|² + (tr II)², d tr II + div II)`.
pub fn ricci_flat_constraint_residuals(
    geo: &GeometryCache,
    ii: &TensorField,
) -> Result<(Vec<f64>, TensorField)> {
    let norm2 = pointwise_norm_sq(ii, &geo.g, &geo.ginv)?;
    let tr = trace(ii, &geo.ginv);
    let ham = geo
        .scal()
        .iter()
        .zip(norm2.iter().zip(&tr))
        .map(|(s, (q, t))| s - q + t * t)
        .collect();
    let mom = differential(geo.chart(), &tr).add(&divergence(geo, ii))?;
    Ok((ham, mom))
}

/// `g(WX,Y) − g(X,WY)` as a covariant 2-tensor.
pub fn w_symmetry_residual(w: &TensorField, g: &TensorField) -> TensorField {
    let ii = lower_endomorphism(w, g);
    let n = g.dim();
    let mut out = TensorField::zeros(g.chart.clone(), Valence::BILINEAR);
    for a in 0..n {
        for b in 0..n {
            out.comps[a * n + b] = ii.comps[a * n + b]
                .iter()
                .zip(&ii.comps[b * n + a])
                .map(|(x, y)| x - y)
                .collect();
        }
    }
    out
}

/// Tolerances for a [`constraint_report`]; `None` entries are monitored only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintTolerances {
    pub vector: Option<f64>,
    pub norm: Option<f64>,
    pub codazzi: Option<f64>,
    pub hamiltonian: Option<f64>,
    pub momentum: Option<f64>,
    pub w_symmetry: Option<f64>,
}

impl ConstraintTolerances {
    /// `C·h⁴` for the constraints every generator must satisfy; the Codazzi
    /// and Ricci-flat residuals are monitored.
    pub fn truncation(constant: f64, h: f64) -> Self {
        let t = constant * h.powi(4);
        Self {
            vector: Some(t),
            norm: Some(t),
            codazzi: None,
            hamiltonian: None,
            momentum: None,
            w_symmetry: Some(t),
        }
    }
}

fn magnitudes(t: &TensorField, geo: &GeometryCache) -> Result<Vec<f64>> {
    Ok(pointwise_norm_sq(t, &geo.g, &geo.ginv)?
        .into_iter()
        .map(|v| v.max(0.0).sqrt())
        .collect())
}

/// All slice constraint residuals for `(g, W, U, u)`.
pub fn constraint_report_for(
    geo: &GeometryCache,
    w: &TensorField,
    big_u: &TensorField,
    u: &[f64],
    tol: &ConstraintTolerances,
) -> Result<ResidualReport> {
    let chart = geo.chart();
    let m1 = first_order_mask(chart);
    let m2 = second_order_mask(chart);
    let mut r = ResidualReport::default();
    let vc = vector_constraint(geo, big_u, u, w);
    r.push(ResidualEntry::from_pointwise(
        VECTOR_CONSTRAINT,
        &magnitudes(&vc, geo)?,
        &m1,
        tol.vector,
    )?);
    let nc: Vec<f64> = norm_constraint(&geo.g, big_u, u)
        .iter()
        .map(|v| v.abs())
        .collect();
    r.push(ResidualEntry::from_pointwise(
        NORM_CONSTRAINT,
        &nc,
        &m1,
        tol.norm,
    )?);
    let cz = codazzi_residual(w, geo);
    r.push(ResidualEntry::from_pointwise(
        CODAZZI,
        &magnitudes(&cz, geo)?,
        &m1,
        tol.codazzi,
    )?);
    let ii = lower_endomorphism(w, &geo.g);
    let (ham, mom) = ricci_flat_constraint_residuals(geo, &ii)?;
    let ham: Vec<f64> = ham.iter().map(|v| v.abs()).collect();
    r.push(ResidualEntry::from_pointwise(
        RICCI_FLAT_HAMILTONIAN,
        &ham,
        &m2,
        tol.hamiltonian,
    )?);
    r.push(ResidualEntry::from_pointwise(
        RICCI_FLAT_MOMENTUM,
        &magnitudes(&mom, geo)?,
        &m1,
        tol.momentum,
    )?);
    let ws = w_symmetry_residual(w, &geo.g);
    r.push(ResidualEntry::from_pointwise(
        W_SYMMETRY,
        &magnitudes(&ws, geo)?,
        &m1,
        tol.w_symmetry,
    )?);
    Ok(r)
}

pub fn constraint_report(data: &InitialData, tol: &ConstraintTolerances) -> Result<ResidualReport> {
    let geo = GeometryCache::new(&data.g)?;
    constraint_report_for(&geo, &data.w, &data.big_u, &data.u, tol)
}
