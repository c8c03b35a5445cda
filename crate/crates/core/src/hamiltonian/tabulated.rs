use std::f64::consts::PI;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::trig::{TrigPoly, TrigTerm};
use crate::error::{LabError, Result};

/// Nodal potential values on a uniform grid, row-major with axis 0 slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialTable {
    pub sizes: Vec<usize>,
    pub values: Vec<f64>,
}

/// Reads `(x_1, ..., x_n, value)` rows on a uniform grid; an optional header row is skipped.
pub fn read_potential_table<R: Read>(input: R, dim: usize) -> Result<PotentialTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != dim + 1 {
            return Err(LabError::Config(format!(
                "potential table row {} has {} fields, expected {}",
                line + 1,
                rec.len(),
                dim + 1
            )));
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if line == 0 => continue,
            Err(e) => return Err(LabError::Config(format!("potential table row {}: {e}", line + 1))),
        }
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(LabError::Config("potential table has non-finite entries".into()));
    }
    let mut sizes = Vec::with_capacity(dim);
    for a in 0..dim {
        let mut coords: Vec<f64> = rows.iter().map(|r| r[a]).collect();
        coords.sort_by(f64::total_cmp);
        coords.dedup_by(|x, y| (*x - *y).abs() < 1e-9);
        sizes.push(coords.len());
    }
    let total: usize = sizes.iter().product();
    if total == 0 || rows.len() != total {
        return Err(LabError::Config(format!(
            "potential table has {} rows but its coordinates span a {:?} grid",
            rows.len(),
            sizes
        )));
    }
    let mut values = vec![f64::NAN; total];
    for r in &rows {
        let mut flat = 0;
        for a in 0..dim {
            let pos = r[a].rem_euclid(1.0) * sizes[a] as f64;
            let idx = pos.round();
            if (pos - idx).abs() > 1e-6 {
                return Err(LabError::Config(format!("coordinate {} is not on the uniform grid", r[a])));
            }
            flat = flat * sizes[a] + (idx as usize % sizes[a]);
        }
        if !values[flat].is_nan() {
            return Err(LabError::Config("potential table repeats a grid node".into()));
        }
        values[flat] = r[dim];
    }
    Ok(PotentialTable { sizes, values })
}

/// Trigonometric interpolant of a table: reproduces the nodal values and is smooth and
/// exactly periodic in between.
pub fn trig_interpolant(table: &PotentialTable) -> Result<TrigPoly> {
    let dim = table.sizes.len();
    let total: usize = table.sizes.iter().product();
    if dim == 0 || table.values.len() != total {
        return Err(LabError::Config("potential table values do not match its sizes".into()));
    }
    if table.sizes.iter().any(|&n| n < 2) {
        return Err(LabError::Config("potential table needs at least 2 nodes per axis".into()));
    }
    // Wavenumbers per axis: -(N-1)/2 ..= N/2.
    let ranges: Vec<(i64, i64)> = table.sizes.iter().map(|&n| (-((n as i64 - 1) / 2), n as i64 / 2)).collect();
    let in_range = |k: &[i64]| k.iter().zip(&ranges).all(|(&ki, &(lo, hi))| ki >= lo && ki <= hi);
    let node = |flat: usize| -> Vec<f64> {
        let mut r = flat;
        let mut x = vec![0.0; dim];
        for a in (0..dim).rev() {
            x[a] = (r % table.sizes[a]) as f64 / table.sizes[a] as f64;
            r /= table.sizes[a];
        }
        x
    };
    let nodes: Vec<Vec<f64>> = (0..total).map(node).collect();

    let mut poly = TrigPoly::constant(0.0);
    let mut k = ranges.iter().map(|r| r.0).collect::<Vec<_>>();
    loop {
        let is_zero = k.iter().all(|&v| v == 0);
        let neg: Vec<i64> = k.iter().map(|v| -v).collect();
        let paired = in_range(&neg);
        let first_positive = k.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0);
        if is_zero || !paired || first_positive {
            let (mut re, mut im) = (0.0, 0.0);
            for (x, &f) in nodes.iter().zip(&table.values) {
                let th = 2.0 * PI * k.iter().zip(x).map(|(&ki, &xi)| ki as f64 * xi).sum::<f64>();
                re += f * th.cos();
                im -= f * th.sin();
            }
            re /= total as f64;
            im /= total as f64;
            if is_zero {
                poly.constant = re;
            } else {
                let w = if paired { 2.0 } else { 1.0 };
                poly.terms.push(TrigTerm { k: k.clone(), cos: w * re, sin: -w * im });
            }
        }
        // Odometer increment over the wavenumber box.
        let mut a = dim;
        loop {
            if a == 0 {
                return Ok(poly);
            }
            a -= 1;
            if k[a] < ranges[a].1 {
                k[a] += 1;
                break;
            }
            k[a] = ranges[a].0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolant_reproduces_nodes_1d_and_2d() {
        for sizes in [vec![9], vec![10], vec![6, 8]] {
            let total: usize = sizes.iter().product();
            let values: Vec<f64> = (0..total).map(|i| ((i * 37) % 11) as f64 * 0.1).collect();
            let table = PotentialTable { sizes: sizes.clone(), values: values.clone() };
            let p = trig_interpolant(&table).unwrap();
            for (flat, &want) in values.iter().enumerate() {
                let mut r = flat;
                let mut x = vec![0.0; sizes.len()];
                for a in (0..sizes.len()).rev() {
                    x[a] = (r % sizes[a]) as f64 / sizes[a] as f64;
                    r /= sizes[a];
                }
                assert!((p.value(&x) - want).abs() < 1e-12, "{sizes:?} node {flat}");
            }
        }
    }

    #[test]
    fn interpolant_of_a_sampled_cosine_is_that_cosine() {
        let n = 16;
        let values = (0..n).map(|i| 1.0 - (2.0 * PI * i as f64 / n as f64).cos()).collect();
        let p = trig_interpolant(&PotentialTable { sizes: vec![n], values }).unwrap();
        let exact = TrigPoly::cosine_well(1, 1.0);
        for &x in &[0.013, 0.4, 0.77] {
            assert!((p.value(&[x]) - exact.value(&[x])).abs() < 1e-13);
        }
    }

    #[test]
    fn csv_table_with_header_is_read() {
        let text = "x,value\n0.0,1.0\n0.25,2.0\n0.5,3.0\n0.75,4.0\n";
        let t = read_potential_table(text.as_bytes(), 1).unwrap();
        assert_eq!(t.sizes, vec![4]);
        assert_eq!(t.values, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn csv_table_off_grid_is_rejected() {
        let text = "0.0,1.0\n0.3,2.0\n0.5,3.0\n0.75,4.0\n";
        assert!(read_potential_table(text.as_bytes(), 1).is_err());
    }
}
