//! GridField serialization: a plain CSV (header row of axis sizes, then one value per line)
//! and a self-describing JSON wrapper.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::field::GridField;
use super::grid::{Stencil, TorusGrid};
use crate::error::{LabError, Result};

/// Writes the CSV form. Values use Rust's shortest round-trip formatting.
pub fn write_field_csv<W: Write>(field: &GridField, mut out: W) -> Result<()> {
    let header: Vec<String> = field.grid().sizes().iter().map(|n| n.to_string()).collect();
    writeln!(out, "{}", header.join(","))?;
    for v in field.values() {
        writeln!(out, "{v:?}")?;
    }
    Ok(())
}

pub fn field_to_csv_string(field: &GridField) -> String {
    let mut buf = Vec::new();
    write_field_csv(field, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("csv output is ascii")
}

/// Reads the CSV form; arity is inferred from the number of values.
pub fn read_field_csv<R: BufRead>(input: R, stencil: Stencil) -> Result<GridField> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| LabError::Config("empty field csv".into()))??;
    let sizes = header
        .split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|e| LabError::Config(format!("bad size '{s}' in header: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let grid = TorusGrid::with_stencil(&sizes, stencil)?;
    let mut values = Vec::with_capacity(grid.len());
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        values.push(t.parse::<f64>().map_err(|e| LabError::Config(format!("bad value '{t}': {e}")))?);
    }
    if values.len() % grid.len() != 0 {
        return Err(LabError::Config(format!("{} values do not fill a grid of {} nodes", values.len(), grid.len())));
    }
    let arity = values.len() / grid.len();
    GridField::new(grid, arity, values)
}

#[derive(Serialize, Deserialize)]
struct GridSpec {
    dim: usize,
    sizes: Vec<usize>,
    #[serde(default)]
    stencil: Stencil,
}

#[derive(Serialize, Deserialize)]
struct FieldJson {
    grid: GridSpec,
    arity: usize,
    values: Vec<f64>,
}

pub fn field_to_json(field: &GridField) -> serde_json::Value {
    let g = field.grid();
    serde_json::to_value(FieldJson {
        grid: GridSpec { dim: g.dim(), sizes: g.sizes().to_vec(), stencil: g.stencil() },
        arity: field.arity(),
        values: field.values().to_vec(),
    })
    .expect("field serializes")
}

pub fn field_from_json(value: &serde_json::Value) -> Result<GridField> {
    let parsed: FieldJson = serde_json::from_value(value.clone())?;
    if parsed.grid.dim != parsed.grid.sizes.len() {
        return Err(LabError::Config("grid.dim disagrees with grid.sizes".into()));
    }
    let grid = TorusGrid::with_stencil(&parsed.grid.sizes, parsed.grid.stencil)?;
    GridField::new(grid, parsed.arity, parsed.values)
}
