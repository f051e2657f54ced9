//! Grid-sampled tensor fields and pointwise multilinear algebra.
//!
//! Components are stored component-major: `comps[c][node]`, where the flat
//! component index `c` enumerates slot indices in row-major order with the
//! contravariant slots first and the covariant slots after them.

use std::sync::Arc;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::chart::{Chart, GridFunction, Mask};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "UPPERCASE")]
pub enum Symmetry {
    None,
    Sym2,
    Antisym2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Valence {
    pub up: usize,
    pub down: usize,
}

impl Valence {
    pub const SCALAR: Valence = Valence { up: 0, down: 0 };
    pub const VECTOR: Valence = Valence { up: 1, down: 0 };
    pub const COVECTOR: Valence = Valence { up: 0, down: 1 };
    pub const ENDOMORPHISM: Valence = Valence { up: 1, down: 1 };
    pub const BILINEAR: Valence = Valence { up: 0, down: 2 };

    pub fn new(up: usize, down: usize) -> Self {
        Self { up, down }
    }

    pub fn rank(self) -> usize {
        self.up + self.down
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    Linf,
    L2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    pub chart: Arc<Chart>,
    pub valence: Valence,
    pub symmetry: Symmetry,
    pub metric: bool,
    pub comps: Vec<Vec<f64>>,
}

/// Number of components of a rank-`rank` tensor in dimension `n`.
pub fn component_count(n: usize, rank: usize) -> usize {
    n.pow(rank as u32)
}

/// Splits a flat component index into slot indices.
pub fn unflatten(mut c: usize, n: usize, rank: usize) -> Vec<usize> {
    let mut idx = vec![0; rank];
    for slot in (0..rank).rev() {
        idx[slot] = c % n;
        c /= n;
    }
    idx
}

pub fn flatten(idx: &[usize], n: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * n + i)
}

impl TensorField {
    pub fn zeros(chart: Arc<Chart>, valence: Valence) -> Self {
        let count = component_count(chart.dim(), valence.rank());
        let comps = vec![vec![0.0; chart.len()]; count];
        Self {
            chart,
            valence,
            symmetry: Symmetry::None,
            metric: false,
            comps,
        }
    }

    pub fn from_components(
        chart: Arc<Chart>,
        valence: Valence,
        symmetry: Symmetry,
        comps: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let count = component_count(chart.dim(), valence.rank());
        if comps.len() != count || comps.iter().any(|c| c.len() != chart.len()) {
            return Err(Error::Shape(format!(
                "expected {count} components of {} nodes",
                chart.len()
            )));
        }
        if comps.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Shape("non-finite component".into()));
        }
        let field = Self {
            chart,
            valence,
            symmetry,
            metric: false,
            comps,
        };
        if symmetry != Symmetry::None {
            if valence.rank() != 2 {
                return Err(Error::Shape("symmetry tags need a valence-2 field".into()));
            }
            let sign = if symmetry == Symmetry::Sym2 {
                1.0
            } else {
                -1.0
            };
            let scale = field.max_abs().max(1.0);
            if field.symmetry_defect(sign) > 1e-12 * scale {
                return Err(Error::Shape(format!("field is not {symmetry:?}")));
            }
        }
        Ok(field)
    }

    pub fn scalar(f: &GridFunction) -> Self {
        Self {
            chart: f.chart.clone(),
            valence: Valence::SCALAR,
            symmetry: Symmetry::None,
            metric: false,
            comps: vec![f.values.clone()],
        }
    }

    pub fn scalar_from(chart: Arc<Chart>, values: Vec<f64>) -> Self {
        Self {
            chart,
            valence: Valence::SCALAR,
            symmetry: Symmetry::None,
            metric: false,
            comps: vec![values],
        }
    }

    /// Symmetric bilinear field flagged as a Riemannian metric; positive
    /// definiteness is checked nodewise with tolerance `1e-12·max|g|`.
    pub fn metric(chart: Arc<Chart>, comps: Vec<Vec<f64>>) -> Result<Self> {
        let mut g = Self::from_components(chart, Valence::BILINEAR, Symmetry::Sym2, comps)?;
        g.check_positive_definite()?;
        g.metric = true;
        Ok(g)
    }

    /// Euclidean metric `δ`.
    pub fn identity_metric(chart: Arc<Chart>) -> Self {
        let n = chart.dim();
        let mut g = Self::zeros(chart, Valence::BILINEAR);
        for i in 0..n {
            g.comps[i * n + i].fill(1.0);
        }
        g.symmetry = Symmetry::Sym2;
        g.metric = true;
        g
    }

    /// Identity endomorphism.
    pub fn identity(chart: Arc<Chart>) -> Self {
        let n = chart.dim();
        let mut t = Self::zeros(chart, Valence::ENDOMORPHISM);
        for i in 0..n {
            t.comps[i * n + i].fill(1.0);
        }
        t
    }

    pub fn check_positive_definite(&self) -> Result<()> {
        let n = self.dim();
        let tol = 1e-12 * self.max_abs();
        let mut m = [0.0; linalg::MAX_DIM * linalg::MAX_DIM];
        for node in 0..self.len() {
            self.fill_matrix(node, &mut m);
            if !linalg::is_positive_definite(&m, n, tol) {
                return Err(Error::NotPositiveDefinite { node });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn len(&self) -> usize {
        self.chart.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chart.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.valence.rank()
    }

    pub fn at(&self, idx: &[usize], node: usize) -> f64 {
        self.comps[flatten(idx, self.dim())][node]
    }

    pub fn comp(&self, idx: &[usize]) -> &[f64] {
        &self.comps[flatten(idx, self.dim())]
    }

    pub fn comp_mut(&mut self, idx: &[usize]) -> &mut Vec<f64> {
        let n = self.dim();
        &mut self.comps[flatten(idx, n)]
    }

    /// Writes the valence-2 component matrix at `node` into `out` (row-major).
    pub fn fill_matrix(&self, node: usize, out: &mut [f64]) {
        debug_assert_eq!(self.rank(), 2);
        for (c, comp) in self.comps.iter().enumerate() {
            out[c] = comp[node];
        }
    }

    pub fn fill_vector(&self, node: usize, out: &mut [f64]) {
        for (c, comp) in self.comps.iter().enumerate() {
            out[c] = comp[node];
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|T_ij − sign·T_ji|` over all nodes (valence 2 only).
    pub fn symmetry_defect(&self, sign: f64) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                let a = &self.comps[i * n + j];
                let b = &self.comps[j * n + i];
                for (x, y) in a.iter().zip(b) {
                    worst = worst.max((x - sign * y).abs());
                }
            }
        }
        worst
    }

    /// Replaces a valence-2 field by its symmetric part; returns the largest
    /// antisymmetric component removed.
    pub fn symmetrize(&mut self) -> f64 {
        let n = self.dim();
        let mut defect: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                for node in 0..self.len() {
                    let a = self.comps[i * n + j][node];
                    let b = self.comps[j * n + i][node];
                    defect = defect.max(0.5 * (a - b).abs());
                    let m = 0.5 * (a + b);
                    self.comps[i * n + j][node] = m;
                    self.comps[j * n + i][node] = m;
                }
            }
        }
        self.symmetry = Symmetry::Sym2;
        defect
    }

    fn same_shape(&self, other: &TensorField) -> Result<()> {
        if self.valence != other.valence || self.chart.len() != other.chart.len() {
            return Err(Error::Shape(format!(
                "valence {:?} vs {:?}",
                self.valence, other.valence
            )));
        }
        Ok(())
    }

    fn derived(&self, comps: Vec<Vec<f64>>) -> Self {
        Self {
            chart: self.chart.clone(),
            valence: self.valence,
            symmetry: self.symmetry,
            metric: false,
            comps,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        self.derived(
            self.comps
                .iter()
                .map(|c| c.iter().map(|v| f(*v)).collect())
                .collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    /// Nodewise product with a scalar field.
    pub fn scale_by(&self, s: &[f64]) -> Self {
        self.derived(
            self.comps
                .iter()
                .map(|c| c.iter().zip(s).map(|(v, w)| v * w).collect())
                .collect(),
        )
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: f64, other: &TensorField) -> Result<Self> {
        self.same_shape(other)?;
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + a * q).collect())
            .collect();
        let mut out = self.derived(comps);
        if self.symmetry != other.symmetry {
            out.symmetry = Symmetry::None;
        }
        Ok(out)
    }

    pub fn add(&self, other: &TensorField) -> Result<Self> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &TensorField) -> Result<Self> {
        self.axpy(-1.0, other)
    }

    /// Pointwise action `W(X)` of an endomorphism on a vector field.
    pub fn apply(&self, x: &TensorField) -> Result<TensorField> {
        if self.valence != Valence::ENDOMORPHISM || x.valence != Valence::VECTOR {
            return Err(Error::Shape(
                "apply needs an endomorphism and a vector".into(),
            ));
        }
        let n = self.dim();
        let mut out = TensorField::zeros(self.chart.clone(), Valence::VECTOR);
        for a in 0..n {
            for b in 0..n {
                let w = &self.comps[a * n + b];
                let xb = &x.comps[b];
                for (o, (p, q)) in out.comps[a].iter_mut().zip(w.iter().zip(xb)) {
                    *o += p * q;
                }
            }
        }
        Ok(out)
    }

    /// Evaluates a covariant 2-tensor on two vector fields nodewise.
    pub fn eval2(&self, x: &TensorField, y: &TensorField) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; self.len()];
        for a in 0..n {
            for b in 0..n {
                let h = &self.comps[a * n + b];
                for node in 0..self.len() {
                    out[node] += h[node] * x.comps[a][node] * y.comps[b][node];
                }
            }
        }
        out
    }

    /// Contracts a covector field with a vector field nodewise.
    pub fn pair(&self, x: &TensorField) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (h, v) in self.comps.iter().zip(&x.comps) {
            for node in 0..out.len() {
                out[node] += h[node] * v[node];
            }
        }
        out
    }

    pub fn values(&self) -> &[f64] {
        &self.comps[0]
    }
}

/// Pointwise inverse `g^{ij}` of a (possibly indefinite) nondegenerate metric.
pub fn metric_inverse(g: &TensorField) -> Result<TensorField> {
    if g.valence != Valence::BILINEAR {
        return Err(Error::Shape("metric must be a covariant 2-tensor".into()));
    }
    let n = g.dim();
    let scale = g.max_abs().max(f64::MIN_POSITIVE).powi(n as i32);
    let mut inv = TensorField::zeros(g.chart.clone(), Valence::new(2, 0));
    let mut m = [0.0; linalg::MAX_DIM * linalg::MAX_DIM];
    for node in 0..g.len() {
        g.fill_matrix(node, &mut m);
        let (mi, det) = linalg::invert(&m, n).ok_or(Error::SingularMetric { node, det: 0.0 })?;
        if det.abs() <= 1e-14 * scale {
            return Err(Error::SingularMetric { node, det });
        }
        for c in 0..n * n {
            inv.comps[c][node] = mi[c];
        }
    }
    inv.symmetry = Symmetry::Sym2;
    inv.symmetrize();
    Ok(inv)
}

/// Contracts slot `slot` of `t` with the first index of the 2-tensor `m`,
/// moving the resulting free index to position `dest` among all slots.
fn contract_slot(
    t: &TensorField,
    m: &TensorField,
    slot: usize,
    dest: usize,
    valence: Valence,
) -> TensorField {
    let n = t.dim();
    let rank = t.rank();
    let count = component_count(n, rank);
    let mut out = TensorField::zeros(t.chart.clone(), valence);
    for c_out in 0..count {
        let idx_out = unflatten(c_out, n, rank);
        // Remove the free index from `dest` and reinsert it at `slot`.
        let free = idx_out[dest];
        let mut rest: Vec<usize> = idx_out.clone();
        rest.remove(dest);
        let target = &mut out.comps[c_out];
        for k in 0..n {
            let mut idx_in = rest.clone();
            idx_in.insert(slot, k);
            let src = &t.comps[flatten(&idx_in, n)];
            let mk = &m.comps[k * n + free];
            for node in 0..target.len() {
                target[node] += src[node] * mk[node];
            }
        }
    }
    out
}

/// Lowers contravariant slot `slot`; the result's new covariant index is the
/// first covariant slot.
pub fn lower_index(t: &TensorField, g: &TensorField, slot: usize) -> Result<TensorField> {
    let v = t.valence;
    if slot >= v.up {
        return Err(Error::SlotOutOfRange {
            slot,
            up: v.up,
            down: v.down,
        });
    }
    let valence = Valence::new(v.up - 1, v.down + 1);
    let mut out = contract_slot(t, g, slot, v.up - 1, valence);
    if out.rank() == 2 && t.symmetry == Symmetry::Sym2 {
        out.symmetry = Symmetry::Sym2;
    }
    Ok(out)
}

/// Raises covariant slot `slot` (counted over all slots); the new
/// contravariant index becomes the last contravariant slot.
pub fn raise_index(t: &TensorField, ginv: &TensorField, slot: usize) -> Result<TensorField> {
    let v = t.valence;
    if slot < v.up || slot >= v.rank() {
        return Err(Error::SlotOutOfRange {
            slot,
            up: v.up,
            down: v.down,
        });
    }
    let valence = Valence::new(v.up + 1, v.down - 1);
    let mut out = contract_slot(t, ginv, slot, v.up, valence);
    if out.rank() == 2 && t.symmetry == Symmetry::Sym2 {
        out.symmetry = Symmetry::Sym2;
    }
    Ok(out)
}

/// Squared pointwise norm `|T|²_g`.
pub fn pointwise_norm_sq(t: &TensorField, g: &TensorField, ginv: &TensorField) -> Result<Vec<f64>> {
    let mut lo = t.clone();
    while lo.valence.up > 0 {
        let slot = lo.valence.up - 1;
        lo = lower_index(&lo, g, slot)?;
    }
    let mut hi = t.clone();
    while hi.valence.down > 0 {
        let slot = hi.valence.up;
        hi = raise_index(&hi, ginv, slot)?;
    }
    let mut out = vec![0.0; t.len()];
    for (a, b) in lo.comps.iter().zip(&hi.comps) {
        for node in 0..out.len() {
            out[node] += a[node] * b[node];
        }
    }
    Ok(out)
}

/// Reduces nodewise non-negative values over a mask: maximum or root mean
/// square, summed in node order.
pub fn reduce(values: &[f64], kind: NormKind, mask: &Mask) -> Result<f64> {
    let count = mask.count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(match kind {
        NormKind::Linf => mask.nodes().fold(0.0, |m, i| m.max(values[i])),
        NormKind::L2 => {
            let s: f64 = mask.nodes().map(|i| values[i] * values[i]).sum();
            (s / count as f64).sqrt()
        }
    })
}

/// `g`-norm of a tensor field over a mask.
pub fn field_norm(t: &TensorField, g: &TensorField, kind: NormKind, mask: &Mask) -> Result<f64> {
    let ginv = metric_inverse(g)?;
    let sq = pointwise_norm_sq(t, g, &ginv)?;
    let pointwise: Vec<f64> = sq.iter().map(|v| v.max(0.0).sqrt()).collect();
    reduce(&pointwise, kind, mask)
}

/// Component-wise (Euclidean) norm, used for residuals of indefinite objects.
pub fn euclidean_pointwise(t: &TensorField) -> Vec<f64> {
    (0..t.len())
        .map(|node| {
            t.comps
                .iter()
                .map(|c| c[node] * c[node])
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// Lapse `λ(t, x)` given as an expression, with optional closed-form
/// overrides for `∂_tλ` and the spatial gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LapseField {
    pub expr: Expr,
    pub dt: Option<Expr>,
    pub grad: Option<Vec<Expr>>,
}

/// Lapse and its derivatives sampled on one time level.
#[derive(Debug, Clone)]
pub struct LapseSample {
    pub t: f64,
    pub lambda: Vec<f64>,
    /// `∂_tλ`
    pub dt: Vec<f64>,
    /// `∂_iλ`, one array per axis.
    pub grad: Vec<Vec<f64>>,
    /// `∂_t∂_iλ`, one array per axis.
    pub dt_grad: Vec<Vec<f64>>,
}

impl LapseField {
    pub fn new(expr: Expr) -> Self {
        Self {
            expr,
            dt: None,
            grad: None,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(Expr::Num(c))
    }

    pub fn is_constant(&self) -> bool {
        self.expr.is_constant()
    }

    pub fn sample(&self, chart: &Arc<Chart>, t: f64) -> Result<LapseSample> {
        let n = chart.dim();
        let len = chart.len();
        let mut x = vec![0.0; n];
        let mut lambda = Vec::with_capacity(len);
        let mut dt = Vec::with_capacity(len);
        for node in 0..len {
            chart.fill_point(node, &mut x);
            lambda.push(self.expr.eval(t, &x));
            dt.push(match &self.dt {
                Some(e) => e.eval(t, &x),
                None => self.expr.d_dt(t, &x),
            });
        }
        let min = lambda.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return Err(Error::NonPositiveLapse { t, min });
        }
        let spatial = self.expr.max_coord() > 0;
        let grad = match &self.grad {
            Some(es) => {
                if es.len() != n {
                    return Err(Error::Shape(format!(
                        "lapse gradient has {} entries for dimension {n}",
                        es.len()
                    )));
                }
                es.iter()
                    .map(|e| {
                        (0..len)
                            .map(|node| {
                                chart.fill_point(node, &mut x);
                                e.eval(t, &x)
                            })
                            .collect()
                    })
                    .collect()
            }
            None if spatial => chart.gradient(&lambda),
            None => vec![vec![0.0; len]; n],
        };
        let dt_grad = if self.expr.uses_time() || self.dt.is_some() {
            chart.gradient(&dt)
        } else {
            vec![vec![0.0; len]; n]
        };
        Ok(LapseSample {
            t,
            lambda,
            dt,
            grad,
            dt_grad,
        })
    }
}
