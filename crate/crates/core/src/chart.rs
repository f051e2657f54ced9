//! Coordinate charts on uniform grids and fourth-order finite differences.
//!
//! Nodes are stored in row-major order: axis 0 varies slowest. PERIODIC axes
//! identify the right endpoint with the left one, OPEN axes include both
//! endpoints and fall back to one-sided five-point stencils within two nodes
//! of the boundary.

use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of grid points per axis.
pub const MIN_POINTS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "UPPERCASE")]
pub enum Boundary {
    Periodic,
    Open,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ChartSpec {
    pub extents: Vec<[f64; 2]>,
    pub points: Vec<usize>,
    pub boundary: Vec<Boundary>,
}

impl ChartSpec {
    pub fn new(extents: Vec<[f64; 2]>, points: Vec<usize>, boundary: Vec<Boundary>) -> Self {
        Self {
            extents,
            points,
            boundary,
        }
    }

    /// `dim`-dimensional periodic box `[0, 2π)^dim` with `n` points per axis.
    pub fn periodic_cube(dim: usize, n: usize) -> Self {
        Self::new(
            vec![[0.0, 2.0 * std::f64::consts::PI]; dim],
            vec![n; dim],
            vec![Boundary::Periodic; dim],
        )
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    /// Same chart with every axis refined to `n` points.
    pub fn with_points(&self, n: usize) -> Self {
        Self {
            points: vec![n; self.dim()],
            ..self.clone()
        }
    }
}

/// A validated chart with precomputed spacings, strides and node coordinates.
#[derive(Debug, Clone)]
pub struct Chart {
    spec: ChartSpec,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    coords: Vec<Vec<f64>>,
    len: usize,
}

impl PartialEq for Chart {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

pub fn build_chart(spec: ChartSpec) -> Result<Arc<Chart>> {
    Chart::new(spec).map(Arc::new)
}

impl Chart {
    pub fn new(spec: ChartSpec) -> Result<Self> {
        let dim = spec.dim();
        if dim == 0 {
            return Err(Error::InvalidSpec("dimension must be at least 1".into()));
        }
        if spec.points.len() != dim || spec.boundary.len() != dim {
            return Err(Error::InvalidSpec(
                "extents, points and boundary must have equal length".into(),
            ));
        }
        let mut spacing = Vec::with_capacity(dim);
        let mut coords = Vec::with_capacity(dim);
        for axis in 0..dim {
            let [a, b] = spec.extents[axis];
            let n = spec.points[axis];
            if n < MIN_POINTS {
                return Err(Error::InvalidSpec(format!(
                    "axis {axis}: {n} points, need at least {MIN_POINTS}"
                )));
            }
            if !(a.is_finite() && b.is_finite()) || b <= a {
                return Err(Error::InvalidSpec(format!(
                    "axis {axis}: degenerate interval [{a}, {b}]"
                )));
            }
            let h = match spec.boundary[axis] {
                Boundary::Periodic => (b - a) / n as f64,
                Boundary::Open => (b - a) / (n - 1) as f64,
            };
            spacing.push(h);
            coords.push((0..n).map(|i| a + i as f64 * h).collect());
        }
        let mut strides = vec![1; dim];
        for axis in (0..dim - 1).rev() {
            strides[axis] = strides[axis + 1] * spec.points[axis + 1];
        }
        let len = spec.points.iter().product();
        Ok(Self {
            spec,
            spacing,
            strides,
            coords,
            len,
        })
    }

    pub fn spec(&self) -> &ChartSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn points(&self, axis: usize) -> usize {
        self.spec.points[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.spacing[axis]
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn boundary(&self, axis: usize) -> Boundary {
        self.spec.boundary[axis]
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn axis_coords(&self, axis: usize) -> &[f64] {
        &self.coords[axis]
    }

    /// Index of `node` along `axis`.
    pub fn axis_index(&self, node: usize, axis: usize) -> usize {
        (node / self.strides[axis]) % self.spec.points[axis]
    }

    pub fn coord(&self, node: usize, axis: usize) -> f64 {
        self.coords[axis][self.axis_index(node, axis)]
    }

    /// Writes the coordinates of `node` into `out[..dim]`.
    pub fn fill_point(&self, node: usize, out: &mut [f64]) {
        for (axis, x) in out.iter_mut().enumerate().take(self.dim()) {
            *x = self.coord(node, axis);
        }
    }

    pub fn point(&self, node: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        self.fill_point(node, &mut p);
        p
    }

    pub fn is_periodic(&self) -> bool {
        self.spec.boundary.iter().all(|b| *b == Boundary::Periodic)
    }

    /// Fourth-order first derivative of `values` along `axis`.
    pub fn diff<T: Sample>(&self, values: &[T], axis: usize) -> Vec<T> {
        assert_eq!(values.len(), self.len, "value count does not match chart");
        assert!(axis < self.dim(), "axis out of range");
        let n = self.spec.points[axis];
        let stride = self.strides[axis];
        let inv = 1.0 / (12.0 * self.spacing[axis]);
        let periodic = self.spec.boundary[axis] == Boundary::Periodic;
        let mut out = vec![T::default(); self.len];
        out.par_iter_mut().enumerate().for_each(|(node, slot)| {
            let i = (node / stride) % n;
            let base = node - i * stride;
            let at = |j: usize| values[base + j * stride];
            let d = if periodic {
                let w = |k: isize| at((i as isize + k).rem_euclid(n as isize) as usize);
                (w(-2) - w(-1) * 8.0) + (w(1) * 8.0 - w(2))
            } else if i >= 2 && i + 2 < n {
                (at(i - 2) - at(i - 1) * 8.0) + (at(i + 1) * 8.0 - at(i + 2))
            } else if i == 0 {
                at(0) * -25.0 + at(1) * 48.0 - at(2) * 36.0 + at(3) * 16.0 - at(4) * 3.0
            } else if i == 1 {
                at(0) * -3.0 - at(1) * 10.0 + at(2) * 18.0 - at(3) * 6.0 + at(4)
            } else if i == n - 1 {
                at(n - 1) * 25.0 - at(n - 2) * 48.0 + at(n - 3) * 36.0 - at(n - 4) * 16.0
                    + at(n - 5) * 3.0
            } else {
                at(n - 1) * 3.0 + at(n - 2) * 10.0 - at(n - 3) * 18.0 + at(n - 4) * 6.0 - at(n - 5)
            };
            *slot = d * inv;
        });
        out
    }

    /// Fourth-order gradient: one derivative array per axis.
    pub fn gradient<T: Sample>(&self, values: &[T]) -> Vec<Vec<T>> {
        (0..self.dim()).map(|a| self.diff(values, a)).collect()
    }
}

/// Scalar types the difference stencils can act on.
pub trait Sample:
    Copy + Send + Sync + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
}

impl Sample for f64 {}
impl Sample for Complex64 {}

/// One real value per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub chart: Arc<Chart>,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(chart: Arc<Chart>, values: Vec<f64>) -> Result<Self> {
        if values.len() != chart.len() {
            return Err(Error::Shape(format!(
                "{} values for a chart with {} nodes",
                values.len(),
                chart.len()
            )));
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Shape(format!("non-finite value at node {node}")));
        }
        Ok(Self { chart, values })
    }

    pub fn from_fn(chart: Arc<Chart>, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut p = vec![0.0; chart.dim()];
        let values = (0..chart.len())
            .map(|node| {
                chart.fill_point(node, &mut p);
                f(&p)
            })
            .collect();
        Self { chart, values }
    }

    pub fn constant(chart: Arc<Chart>, c: f64) -> Self {
        let values = vec![c; chart.len()];
        Self { chart, values }
    }

    pub fn partial_derivative(&self, axis: usize) -> Result<GridFunction> {
        if axis >= self.chart.dim() {
            return Err(Error::Shape(format!(
                "axis {axis} out of range for a {}-dimensional chart",
                self.chart.dim()
            )));
        }
        Ok(Self {
            chart: self.chart.clone(),
            values: self.chart.diff(&self.values, axis),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Boolean grid function selecting nodes for residual evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub values: Vec<bool>,
}

impl Mask {
    pub fn all(chart: &Chart) -> Self {
        Self {
            values: vec![true; chart.len()],
        }
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|b| **b).count()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn and(&self, other: &Mask) -> Mask {
        Mask {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| *a && *b)
                .collect(),
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.then_some(i))
    }
}

/// Nodes at least `width` nodes away from every OPEN boundary.
pub fn interior_mask(chart: &Chart, width: usize) -> Mask {
    interior_mask_axes(chart, &vec![width; chart.dim()])
}

/// Like [`interior_mask`] with a separate width per axis.
pub fn interior_mask_axes(chart: &Chart, widths: &[usize]) -> Mask {
    let values = (0..chart.len())
        .map(|node| {
            (0..chart.dim()).all(|axis| {
                if chart.boundary(axis) == Boundary::Periodic {
                    return true;
                }
                let n = chart.points(axis);
                let i = chart.axis_index(node, axis);
                let w = widths[axis];
                i >= w && i + w < n
            })
        })
        .collect();
    Mask { values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn circle(n: usize) -> Arc<Chart> {
        build_chart(ChartSpec::periodic_cube(1, n)).unwrap()
    }

    fn sin_error(n: usize) -> f64 {
        let c = circle(n);
        let f = GridFunction::from_fn(c.clone(), |x| x[0].sin());
        let df = f.partial_derivative(0).unwrap();
        df.values
            .iter()
            .enumerate()
            .map(|(i, d)| (d - c.coord(i, 0).cos()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn builds_uniform_grids() {
        let c = circle(64);
        assert_eq!(c.len(), 64);
        assert!((c.spacing(0) - 2.0 * PI / 64.0).abs() < 1e-15);

        let c2 = build_chart(ChartSpec::periodic_cube(2, 32)).unwrap();
        assert_eq!(c2.len(), 1024);

        let open = ChartSpec::new(vec![[0.0, 1.0]], vec![4], vec![Boundary::Open]);
        assert!(matches!(build_chart(open), Err(Error::InvalidSpec(_))));

        let degenerate = ChartSpec::new(vec![[1.0, 1.0]], vec![16], vec![Boundary::Open]);
        assert!(matches!(
            build_chart(degenerate),
            Err(Error::InvalidSpec(_))
        ));

        let open9 = build_chart(ChartSpec::new(
            vec![[0.0, 1.0]],
            vec![9],
            vec![Boundary::Open],
        ))
        .unwrap();
        assert!((open9.spacing(0) - 0.125).abs() < 1e-15);
        assert_eq!(open9.coord(8, 0), 1.0);
    }

    #[test]
    fn row_major_layout() {
        let c = build_chart(ChartSpec::new(
            vec![[0.0, 1.0], [0.0, 2.0]],
            vec![8, 10],
            vec![Boundary::Open, Boundary::Periodic],
        ))
        .unwrap();
        assert_eq!(c.stride(0), 10);
        assert_eq!(c.stride(1), 1);
        assert_eq!(c.axis_index(23, 0), 2);
        assert_eq!(c.axis_index(23, 1), 3);
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let c = build_chart(ChartSpec::new(
            vec![[0.0, 1.0], [0.0, 1.0]],
            vec![9, 12],
            vec![Boundary::Open, Boundary::Periodic],
        ))
        .unwrap();
        let f = GridFunction::constant(c, 3.7);
        for axis in 0..2 {
            assert!(f.partial_derivative(axis).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn sine_derivative_accuracy_and_order() {
        let e64 = sin_error(64);
        assert!(e64 <= 1e-5, "error {e64}");
        let order = (sin_error(32) / e64).log2();
        assert!(order >= 3.8, "order {order}");
    }

    #[test]
    fn open_axis_exact_for_quartics() {
        let c = build_chart(ChartSpec::new(
            vec![[-1.0, 2.0]],
            vec![11],
            vec![Boundary::Open],
        ))
        .unwrap();
        let f = GridFunction::from_fn(c.clone(), |x| {
            1.0 - 2.0 * x[0] + 0.5 * x[0].powi(2) + x[0].powi(3) - 0.3 * x[0].powi(4)
        });
        let df = f.partial_derivative(0).unwrap();
        for (i, d) in df.values.iter().enumerate() {
            let x = c.coord(i, 0);
            let exact = -2.0 + x + 3.0 * x * x - 1.2 * x.powi(3);
            assert!((d - exact).abs() < 1e-11, "node {i}: {d} vs {exact}");
        }
    }

    #[test]
    fn mixed_partials_commute_on_periodic_axes() {
        let c = build_chart(ChartSpec::periodic_cube(2, 16)).unwrap();
        let f = GridFunction::from_fn(c.clone(), |x| (x[0] + 2.0 * x[1]).sin() * x[1].cos());
        let a = c.diff(&c.diff(&f.values, 0), 1);
        let b = c.diff(&c.diff(&f.values, 1), 0);
        let diff = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn interior_masks() {
        let periodic = circle(16);
        assert_eq!(interior_mask(&periodic, 3).count(), 16);

        let open = build_chart(ChartSpec::new(
            vec![[0.0, 1.0]],
            vec![9],
            vec![Boundary::Open],
        ))
        .unwrap();
        let m = interior_mask(&open, 2);
        let on: Vec<usize> = m.nodes().collect();
        assert_eq!(on, vec![2, 3, 4, 5, 6]);
        assert_eq!(interior_mask(&open, 5).count(), 0);
    }

    #[test]
    fn complex_values_differentiate_componentwise() {
        let c = circle(32);
        let vals: Vec<Complex64> = (0..32)
            .map(|i| {
                let x = c.coord(i, 0);
                Complex64::new(x.sin(), x.cos())
            })
            .collect();
        let d = c.diff(&vals, 0);
        for (i, z) in d.iter().enumerate() {
            let x = c.coord(i, 0);
            assert!((z.re - x.cos()).abs() < 1e-4);
            assert!((z.im + x.sin()).abs() < 1e-4);
        }
    }
}
