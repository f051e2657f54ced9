//! Named residual norms, tolerances and convergence tables.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::chart::Mask;
use crate::error::Result;
use crate::fields::{reduce, NormKind};

/// Errors at or below this level are treated as exact zeros in convergence
/// tables.
pub const EXACT_ZERO: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ResidualEntry {
    pub name: String,
    pub linf: f64,
    pub l2: f64,
    /// `None` marks a monitored quantity without a pass criterion.
    pub tolerance: Option<f64>,
    pub pass: bool,
}

impl ResidualEntry {
    pub fn new(name: impl Into<String>, linf: f64, l2: f64, tolerance: Option<f64>) -> Self {
        let pass = match tolerance {
            Some(t) => linf <= t,
            None => true,
        };
        Self {
            name: name.into(),
            linf,
            l2,
            tolerance,
            pass,
        }
    }

    /// Reduces nonnegative pointwise magnitudes over `mask`.
    pub fn from_pointwise(
        name: impl Into<String>,
        pointwise: &[f64],
        mask: &Mask,
        tolerance: Option<f64>,
    ) -> Result<Self> {
        let linf = reduce(pointwise, NormKind::Linf, mask)?;
        let l2 = reduce(pointwise, NormKind::L2, mask)?;
        Ok(Self::new(name, linf, l2, tolerance))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ResidualReport {
    pub entries: Vec<ResidualEntry>,
}

impl ResidualReport {
    pub fn push(&mut self, entry: ResidualEntry) {
        self.entries.push(entry);
    }

    pub fn extend(&mut self, other: ResidualReport) {
        self.entries.extend(other.entries);
    }

    pub fn get(&self, name: &str) -> Option<&ResidualEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn linf(&self, name: &str) -> f64 {
        self.get(name).map_or(f64::NAN, |e| e.linf)
    }

    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ResidualEntry> {
        self.entries.iter().filter(|e| !e.pass)
    }

    /// Sets the same tolerance on every entry and recomputes pass flags.
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        for e in &mut self.entries {
            e.tolerance = Some(tol);
            e.pass = e.linf <= tol;
        }
        self
    }
}

/// `log(e_coarse / e_fine) / log(ratio)`.
pub fn observed_order(e_coarse: f64, e_fine: f64, ratio: f64) -> f64 {
    (e_coarse / e_fine).ln() / ratio.ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ConvergenceRow {
    pub points: usize,
    pub h: f64,
    pub error: f64,
    /// Order observed against the previous (coarser) row.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ConvergenceTable {
    pub name: String,
    pub rows: Vec<ConvergenceRow>,
    /// Every error is at rounding level; orders are meaningless.
    pub exact_zero: bool,
}

impl ConvergenceTable {
    /// Builds a table from `(points, h, error)` triples ordered coarse to fine.
    pub fn from_errors(name: impl Into<String>, data: &[(usize, f64, f64)]) -> Self {
        let exact_zero = data.iter().all(|(_, _, e)| *e <= EXACT_ZERO);
        let rows = data
            .iter()
            .enumerate()
            .map(|(i, &(points, h, error))| {
                let order = (i > 0 && !exact_zero).then(|| {
                    let (_, hc, ec) = data[i - 1];
                    observed_order(ec, error, hc / h)
                });
                ConvergenceRow {
                    points,
                    h,
                    error,
                    order,
                }
            })
            .collect();
        Self {
            name: name.into(),
            rows,
            exact_zero,
        }
    }

    /// Smallest observed order, `None` for exact-zero tables.
    pub fn min_order(&self) -> Option<f64> {
        if self.exact_zero {
            return None;
        }
        self.rows.iter().filter_map(|r| r.order).reduce(f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders() {
        assert!((observed_order(16.0, 1.0, 2.0) - 4.0).abs() < 1e-15);
        let t = ConvergenceTable::from_errors(
            "x",
            &[(32, 0.2, 1.6e-3), (64, 0.1, 1e-4), (128, 0.05, 6.25e-6)],
        );
        assert!((t.min_order().unwrap() - 4.0).abs() < 1e-12);
        assert!(t.rows[0].order.is_none());
        let z = ConvergenceTable::from_errors("z", &[(32, 0.2, 0.0), (64, 0.1, 1e-16)]);
        assert!(z.exact_zero && z.min_order().is_none());
    }

    #[test]
    fn pass_flags() {
        let mut r = ResidualReport::default();
        r.push(ResidualEntry::new("a", 1e-3, 1e-4, Some(1e-2)));
        r.push(ResidualEntry::new("b", 1.0, 1.0, None));
        assert!(r.all_pass());
        r.push(ResidualEntry::new("c", 1.0, 1.0, Some(0.5)));
        assert!(!r.all_pass());
        assert_eq!(r.failures().count(), 1);
        let json = serde_json::to_string(&r).unwrap();
        let back: ResidualReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
