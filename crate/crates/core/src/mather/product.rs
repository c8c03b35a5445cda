use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_lambda, AtomVisitor, Measure};
use crate::error::{LabError, Result};
use crate::torus::{pairwise_sum, TorusGrid};

/// Symmetric box `[-radius, radius]^n` with an odd number of nodes per axis, so `v = 0` is a
/// node and nodes come in exact `+-` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityGrid {
    pub radius: f64,
    pub sizes: Vec<usize>,
}

impl VelocityGrid {
    pub fn new(radius: f64, sizes: &[usize]) -> Result<Self> {
        let g = VelocityGrid { radius, sizes: sizes.to_vec() };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(LabError::Config(format!("velocity radius must be > 0, got {}", self.radius)));
        }
        if self.sizes.is_empty() {
            return Err(LabError::Config("velocity grid needs at least one axis".into()));
        }
        if let Some(&m) = self.sizes.iter().find(|&&m| m < 3 || m % 2 == 0) {
            return Err(LabError::Config(format!(
                "velocity grid needs an odd number of points >= 3 per axis so that v = 0 is a node, got {m}"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self, axis: usize) -> f64 {
        self.radius / ((self.sizes[axis] - 1) / 2) as f64
    }

    /// Coordinate of node `j` (row-major, axis 0 slowest).
    pub fn node(&self, mut j: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        for a in (0..self.dim()).rev() {
            let m = self.sizes[a];
            let offset = (j % m) as i64 - ((m - 1) / 2) as i64;
            v[a] = offset as f64 * self.step(a);
            j /= m;
        }
        v
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|j| self.node(j)).collect()
    }

    pub fn scaled(&self, lambda: f64) -> VelocityGrid {
        VelocityGrid { radius: lambda * self.radius, sizes: self.sizes.clone() }
    }
}

/// Weights `mu_ij` on `(x_i, v_j)`, stored x-major: `weights[i * vgrid.len() + j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductMeasure {
    pub xgrid: TorusGrid,
    pub vgrid: VelocityGrid,
    pub weights: Vec<f64>,
    pub eps: f64,
}

impl ProductMeasure {
    pub fn new(xgrid: TorusGrid, vgrid: VelocityGrid, weights: Vec<f64>, eps: f64) -> Result<Self> {
        vgrid.validate()?;
        if xgrid.dim() != vgrid.dim() {
            return Err(LabError::Config("position and velocity grids differ in dimension".into()));
        }
        if weights.len() != xgrid.len() * vgrid.len() {
            return Err(LabError::Config(format!(
                "{} weights for {} x {} atoms",
                weights.len(),
                xgrid.len(),
                vgrid.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
            return Err(LabError::Domain(format!("negative or non-finite weight {w}")));
        }
        let total = pairwise_sum(&weights);
        if (total - 1.0).abs() > 1e-12 {
            return Err(LabError::Domain(format!("weights sum to {total}, not 1")));
        }
        Ok(ProductMeasure { xgrid, vgrid, weights, eps })
    }

    /// Equal weight on every atom.
    pub fn uniform(xgrid: TorusGrid, vgrid: VelocityGrid, eps: f64) -> Result<Self> {
        let count = xgrid.len() * vgrid.len();
        Self::new(xgrid, vgrid, vec![1.0 / count as f64; count], eps)
    }

    pub fn to_json(&self, weights_ref: &str) -> serde_json::Value {
        serde_json::json!({
            "eps": self.eps,
            "xgrid": self.xgrid,
            "vgrid": self.vgrid,
            "weights": weights_ref,
        })
    }

    /// Writes `<stem>.json` and `<stem>_weights.csv` (atoms with positive weight only).
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<String>> {
        let csv_name = format!("{stem}_weights.csv");
        let json_name = format!("{stem}.json");
        let mut w = csv::Writer::from_path(dir.join(&csv_name))?;
        let n = self.xgrid.dim();
        let mut header: Vec<String> = Vec::new();
        for prefix in ["x", "v"] {
            if n == 1 {
                header.push(prefix.into());
            } else {
                header.extend((1..=n).map(|a| format!("{prefix}{a}")));
            }
        }
        header.push("weight".into());
        w.write_record(&header)?;
        let mut err = None;
        self.for_each_atom(&mut |x, v, m| {
            let row: Vec<String> = x.iter().chain(v).chain(std::iter::once(&m)).map(|c| format!("{c:?}")).collect();
            if let Err(e) = w.write_record(&row) {
                err.get_or_insert(e);
            }
        });
        if let Some(e) = err {
            return Err(e.into());
        }
        w.flush()?;
        let text = serde_json::to_string_pretty(&self.to_json(&csv_name))?;
        std::fs::write(dir.join(&json_name), text + "\n")?;
        Ok(vec![json_name, csv_name])
    }
}

impl Measure for ProductMeasure {
    fn eps(&self) -> f64 {
        self.eps
    }

    fn for_each_atom(&self, visit: &mut AtomVisitor<'_>) {
        let vnodes = self.vgrid.nodes();
        let mv = vnodes.len();
        for i in 0..self.xgrid.len() {
            let x = self.xgrid.point(i);
            for (j, v) in vnodes.iter().enumerate() {
                let m = self.weights[i * mv + j];
                if m > 0.0 {
                    visit(&x, v, m);
                }
            }
        }
    }

    fn holonomy_vector(&self, eps_test: f64) -> Vec<f64> {
        let n = self.xgrid.dim();
        let vnodes = self.vgrid.nodes();
        let mv = vnodes.len();
        let mut r = vec![0.0; self.xgrid.len()];
        for i in 0..self.xgrid.len() {
            let row = &self.weights[i * mv..(i + 1) * mv];
            let mass = pairwise_sum(row);
            let mut momentum = vec![0.0; n];
            for (a, slot) in momentum.iter_mut().enumerate() {
                let terms: Vec<f64> = row.iter().zip(&vnodes).map(|(w, v)| w * v[a]).collect();
                *slot = pairwise_sum(&terms);
            }
            for (a, &ma) in momentum.iter().enumerate() {
                for (k, w) in self.xgrid.first_derivative_entries(i, a) {
                    r[k] += ma * w;
                }
            }
            for (k, w) in self.xgrid.laplacian_entries(i) {
                r[k] -= eps_test * mass * w;
            }
        }
        r
    }

    fn scaled(&self, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(ProductMeasure {
            xgrid: self.xgrid.clone(),
            vgrid: self.vgrid.scaled(lambda),
            weights: self.weights.clone(),
            eps: lambda * self.eps,
        })
    }
}
