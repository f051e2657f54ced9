//! Grid dump format: one line of JSON header, a newline, then little-endian
//! `f64` values, component-major. Complex values are stored as interleaved
//! `(re, im)` pairs.

use std::io::{BufRead, BufReader, Read, Write};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::chart::{build_chart, ChartSpec};
use crate::error::{Error, Result};
use crate::fields::{Symmetry, TensorField, Valence};
use crate::spin::SpinorField;

pub const FORMAT: &str = "pnvflow-grid";
pub const VERSION: u32 = 1;
pub const COMPONENT_ORDER: &str =
    "component-major; row-major slot index, contravariant slots first";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DumpHeader {
    pub format: String,
    pub version: u32,
    pub name: String,
    pub chart: ChartSpec,
    /// `[up, down]` for tensor fields, absent for spinors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valence: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetry: Option<Symmetry>,
    pub component_order: String,
    pub components: usize,
    pub complex: bool,
    pub nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
}

impl DumpHeader {
    /// Number of `f64` values in the payload.
    pub fn value_count(&self) -> usize {
        self.components * self.nodes * if self.complex { 2 } else { 1 }
    }
}

fn write_raw(mut w: impl Write, header: &DumpHeader, values: &[f64]) -> Result<()> {
    if values.len() != header.value_count() {
        return Err(Error::Format(format!(
            "payload has {} values, header expects {}",
            values.len(),
            header.value_count()
        )));
    }
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    let mut buf = Vec::with_capacity(8 * values.len());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_tensor(w: impl Write, name: &str, field: &TensorField, t: Option<f64>) -> Result<()> {
    let header = DumpHeader {
        format: FORMAT.into(),
        version: VERSION,
        name: name.into(),
        chart: field.chart.spec().clone(),
        valence: Some([field.valence.up, field.valence.down]),
        symmetry: Some(field.symmetry),
        component_order: COMPONENT_ORDER.into(),
        components: field.comps.len(),
        complex: false,
        nodes: field.len(),
        t,
    };
    let values: Vec<f64> = field.comps.iter().flatten().copied().collect();
    write_raw(w, &header, &values)
}

pub fn write_spinor(w: impl Write, name: &str, field: &SpinorField, t: Option<f64>) -> Result<()> {
    let header = DumpHeader {
        format: FORMAT.into(),
        version: VERSION,
        name: name.into(),
        chart: field.chart.spec().clone(),
        valence: None,
        symmetry: None,
        component_order: COMPONENT_ORDER.into(),
        components: 2,
        complex: true,
        nodes: field.len(),
        t,
    };
    write_raw(w, &header, &field.interleaved())
}

pub fn read_dump(r: impl Read) -> Result<(DumpHeader, Vec<f64>)> {
    let mut r = BufReader::new(r);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Format("missing header line".into()));
    }
    let header: DumpHeader = serde_json::from_slice(&line)?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(Error::Format(format!(
            "unsupported format {} v{}",
            header.format, header.version
        )));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * header.value_count() {
        return Err(Error::Format(format!(
            "payload has {} bytes, header expects {}",
            bytes.len(),
            8 * header.value_count()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, values))
}

/// Reads a real tensor dump back into a field on a freshly built chart.
pub fn read_tensor(r: impl Read) -> Result<(DumpHeader, TensorField)> {
    let (header, values) = read_dump(r)?;
    let Some([up, down]) = header.valence else {
        return Err(Error::Format(format!(
            "`{}` is not a tensor dump",
            header.name
        )));
    };
    if header.complex {
        return Err(Error::Format(format!(
            "`{}` holds complex values",
            header.name
        )));
    }
    let chart = build_chart(header.chart.clone())?;
    if chart.len() != header.nodes {
        return Err(Error::Format(format!(
            "header lists {} nodes, chart has {}",
            header.nodes,
            chart.len()
        )));
    }
    let comps: Vec<Vec<f64>> = values
        .chunks(header.nodes.max(1))
        .map(<[f64]>::to_vec)
        .collect();
    let field = TensorField::from_components(
        chart,
        Valence::new(up, down),
        header.symmetry.unwrap_or(Symmetry::None),
        comps,
    )?;
    Ok((header, field))
}
