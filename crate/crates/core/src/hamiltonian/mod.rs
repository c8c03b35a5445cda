//! Catalog of Tonelli Hamiltonians on the flat torus.
//!
//! Every entry has the form `H(x, xi) = K(xi) + b(x).xi - V(x)` with a kinetic part `K`
//! (power `s |xi|^q / q` or quadratic `xi.A xi / 2`), an optional drift `b` and a potential
//! `V` normalized to `min V = 0`. Drift and potential are trigonometric polynomials, so all
//! x-derivatives are analytic and periodicity is exact.

mod assumptions;
mod legendre;
mod tabulated;
mod trig;

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{LabError, Result};

pub use assumptions::{check_assumptions, AssumptionReport};
pub use legendre::{convex_conjugate, legendre, LagrangianValue, CONJUGATE_TOL};
pub use tabulated::{read_potential_table, trig_interpolant, PotentialTable};
pub use trig::{TrigPoly, TrigTerm};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "free")]
    Free,
    #[serde(rename = "mechanical_power")]
    MechanicalPower,
    #[serde(rename = "drifted_quadratic")]
    DriftedQuadratic,
    #[serde(rename = "anisotropic_2d")]
    Anisotropic2d,
    #[serde(rename = "custom_tabulated")]
    CustomTabulated,
}

impl Family {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "free" => Ok(Family::Free),
            "mechanical_power" => Ok(Family::MechanicalPower),
            "drifted_quadratic" => Ok(Family::DriftedQuadratic),
            "anisotropic_2d" => Ok(Family::Anisotropic2d),
            "custom_tabulated" => Ok(Family::CustomTabulated),
            other => Err(LabError::Config(format!("unknown Hamiltonian family '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Free => "free",
            Family::MechanicalPower => "mechanical_power",
            Family::DriftedQuadratic => "drifted_quadratic",
            Family::Anisotropic2d => "anisotropic_2d",
            Family::CustomTabulated => "custom_tabulated",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Kinetic {
    /// `scale |xi|^q / q`, `q` even.
    Power { q: u32, scale: f64 },
    /// `xi.A xi / 2` with `A` symmetric, row-major.
    Quadratic { a: Vec<f64> },
}

/// Potential given either as a cosine well `amplitude * sum (1 - cos 2 pi x_k)` or a
/// general trigonometric polynomial.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
enum PotentialSpec {
    Well(CosineWell),
    Trig(TrigPoly),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CosineWell {
    amplitude: f64,
}

impl PotentialSpec {
    fn build(self, dim: usize) -> Result<TrigPoly> {
        match self {
            PotentialSpec::Well(w) => {
                if !w.amplitude.is_finite() {
                    return Err(LabError::Config("non-finite potential amplitude".into()));
                }
                Ok(TrigPoly::cosine_well(dim, w.amplitude))
            }
            PotentialSpec::Trig(t) => {
                t.validate(dim)?;
                Ok(t)
            }
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FreeParams {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MechanicalParams {
    #[serde(default = "default_q")]
    q: u32,
    #[serde(default)]
    potential: Option<PotentialSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DriftedParams {
    #[serde(default = "default_kinetic")]
    kinetic: f64,
    drift: Vec<TrigPoly>,
    #[serde(default)]
    potential: Option<PotentialSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnisotropicParams {
    matrix: [[f64; 2]; 2],
    #[serde(default)]
    potential: Option<PotentialSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TabulatedParams {
    #[serde(default = "default_q")]
    q: u32,
    #[serde(default)]
    potential_csv: Option<String>,
    #[serde(default)]
    table: Option<PotentialTable>,
}

fn default_q() -> u32 {
    2
}

fn default_kinetic() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelJson {
    family: String,
    dim: usize,
    #[serde(default)]
    params: Option<Value>,
}

/// A catalog Hamiltonian. Immutable after construction; all evaluators are pure.
#[derive(Clone, Debug)]
pub struct HamiltonianModel {
    family: Family,
    dim: usize,
    kinetic: Kinetic,
    drift: Option<Vec<TrigPoly>>,
    potential: TrigPoly,
    /// The JSON object this model was built from (or an equivalent one).
    spec: Value,
}

impl HamiltonianModel {
    /// `|xi|^2 / 2`.
    pub fn free(dim: usize) -> Result<Self> {
        Self::from_json(&json!({"family": "free", "dim": dim}))
    }

    /// `|xi|^q / q - V(x)`.
    pub fn mechanical(dim: usize, q: u32, potential: TrigPoly) -> Result<Self> {
        Self::from_json(&json!({
            "family": "mechanical_power",
            "dim": dim,
            "params": {"q": q, "potential": potential},
        }))
    }

    /// `xi^2 / 2 - (1 - cos 2 pi x)`.
    pub fn pendulum() -> Self {
        Self::mechanical(1, 2, TrigPoly::cosine_well(1, 1.0)).expect("pendulum is a valid entry")
    }

    /// `kinetic |xi|^2 / 2 + b(x).xi - V(x)`.
    pub fn drifted_quadratic(dim: usize, kinetic: f64, drift: Vec<TrigPoly>, potential: TrigPoly) -> Result<Self> {
        Self::from_json(&json!({
            "family": "drifted_quadratic",
            "dim": dim,
            "params": {"kinetic": kinetic, "drift": drift, "potential": potential},
        }))
    }

    /// `xi.A xi / 2 - V(x)` in two dimensions.
    pub fn anisotropic_2d(matrix: [[f64; 2]; 2], potential: TrigPoly) -> Result<Self> {
        Self::from_json(&json!({
            "family": "anisotropic_2d",
            "dim": 2,
            "params": {"matrix": matrix, "potential": potential},
        }))
    }

    /// `|xi|^q / q - V(x)` with `V` interpolated from nodal values.
    pub fn tabulated(q: u32, table: PotentialTable) -> Result<Self> {
        let dim = table.sizes.len();
        Self::from_json(&json!({
            "family": "custom_tabulated",
            "dim": dim,
            "params": {"q": q, "table": table},
        }))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        Self::from_json(&v)
    }

    /// Builds a catalog entry from `{"family", "dim", "params"}`.
    ///
    /// Relative `potential_csv` paths are resolved against the working directory.
    pub fn from_json(value: &Value) -> Result<Self> {
        Self::from_json_in(value, None)
    }

    /// As [`from_json`](Self::from_json), resolving relative CSV paths against `base`.
    pub fn from_json_in(value: &Value, base: Option<&Path>) -> Result<Self> {
        let raw: ModelJson =
            serde_json::from_value(value.clone()).map_err(|e| LabError::Config(format!("model: {e}")))?;
        let family = Family::parse(&raw.family)?;
        let dim = raw.dim;
        if dim == 0 {
            return Err(LabError::Config("model dim must be positive".into()));
        }
        let params = raw.params.clone().unwrap_or_else(|| json!({}));
        let parse_err = |e: serde_json::Error| LabError::Config(format!("{} params: {e}", family.name()));
        let zero = || TrigPoly::constant(0.0);
        let (kinetic, drift, potential) = match family {
            Family::Free => {
                let _: FreeParams = serde_json::from_value(params).map_err(parse_err)?;
                (Kinetic::Power { q: 2, scale: 1.0 }, None, zero())
            }
            Family::MechanicalPower => {
                let p: MechanicalParams = serde_json::from_value(params).map_err(parse_err)?;
                check_power(p.q)?;
                let v = match p.potential {
                    Some(s) => s.build(dim)?,
                    None => TrigPoly::cosine_well(dim, 1.0),
                };
                (Kinetic::Power { q: p.q, scale: 1.0 }, None, v)
            }
            Family::DriftedQuadratic => {
                let p: DriftedParams = serde_json::from_value(params).map_err(parse_err)?;
                if !p.kinetic.is_finite() || p.kinetic < 0.0 {
                    return Err(LabError::Config("kinetic coefficient must be finite and >= 0".into()));
                }
                if p.drift.len() != dim {
                    return Err(LabError::Config(format!(
                        "drift has {} components, model dimension is {dim}",
                        p.drift.len()
                    )));
                }
                for b in &p.drift {
                    b.validate(dim)?;
                }
                let v = match p.potential {
                    Some(s) => s.build(dim)?,
                    None => zero(),
                };
                (Kinetic::Power { q: 2, scale: p.kinetic }, Some(p.drift), v)
            }
            Family::Anisotropic2d => {
                if dim != 2 {
                    return Err(LabError::Config("anisotropic_2d requires dim = 2".into()));
                }
                let p: AnisotropicParams = serde_json::from_value(params).map_err(parse_err)?;
                let m = p.matrix;
                if m.iter().flatten().any(|v| !v.is_finite()) || m[0][1] != m[1][0] {
                    return Err(LabError::Config("anisotropic matrix must be finite and symmetric".into()));
                }
                let v = match p.potential {
                    Some(s) => s.build(dim)?,
                    None => TrigPoly::cosine_well(dim, 1.0),
                };
                (Kinetic::Quadratic { a: vec![m[0][0], m[0][1], m[1][0], m[1][1]] }, None, v)
            }
            Family::CustomTabulated => {
                let p: TabulatedParams = serde_json::from_value(params).map_err(parse_err)?;
                check_power(p.q)?;
                let table = match (p.potential_csv, p.table) {
                    (Some(path), None) => {
                        let path = match base {
                            Some(b) if Path::new(&path).is_relative() => b.join(path),
                            _ => Path::new(&path).to_path_buf(),
                        };
                        let file = std::fs::File::open(&path).map_err(|e| {
                            LabError::Config(format!("cannot open potential table {}: {e}", path.display()))
                        })?;
                        read_potential_table(file, dim)?
                    }
                    (None, Some(t)) => t,
                    _ => {
                        return Err(LabError::Config(
                            "custom_tabulated needs exactly one of potential_csv or table".into(),
                        ))
                    }
                };
                if table.sizes.len() != dim {
                    return Err(LabError::Config("potential table dimension mismatch".into()));
                }
                (Kinetic::Power { q: p.q, scale: 1.0 }, None, trig_interpolant(&table)?)
            }
        };
        let potential = normalize_min_zero(potential, dim);
        Ok(HamiltonianModel {
            family,
            dim,
            kinetic,
            drift,
            potential,
            spec: json!({"family": family.name(), "dim": dim, "params": raw.params.unwrap_or_else(|| json!({}))}),
        })
    }

    pub fn to_json(&self) -> Value {
        self.spec.clone()
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The normalized potential (`min V = 0`).
    pub fn potential(&self) -> &TrigPoly {
        &self.potential
    }

    pub fn drift(&self) -> Option<&[TrigPoly]> {
        self.drift.as_deref()
    }

    pub(crate) fn kinetic(&self) -> &Kinetic {
        &self.kinetic
    }

    /// No drift term: `H(x, xi) = K(xi) - V(x)` with `K` even and minimal at 0.
    pub fn is_mechanical(&self) -> bool {
        self.drift.is_none()
    }

    /// Exactly `|xi|^2 / 2 - V(x)`, the setting of the Hopf–Cole transform.
    pub fn is_quadratic_mechanical(&self) -> bool {
        self.drift.is_none() && self.kinetic == Kinetic::Power { q: 2, scale: 1.0 }
    }

    /// `K` strictly convex: positive power coefficient or positive definite matrix.
    pub fn is_strictly_convex(&self) -> bool {
        match &self.kinetic {
            Kinetic::Power { scale, .. } => *scale > 0.0,
            Kinetic::Quadratic { a } => crate::linalg::sym_eigenvalues(self.dim, a)[0] > 0.0,
        }
    }

    /// Power `q` of the kinetic term, if it is of power type.
    pub fn power(&self) -> Option<u32> {
        match self.kinetic {
            Kinetic::Power { q, .. } => Some(q),
            Kinetic::Quadratic { .. } => None,
        }
    }

    pub fn potential_at(&self, x: &[f64]) -> f64 {
        self.potential.value(x)
    }

    fn drift_dot(&self, x: &[f64], xi: &[f64]) -> f64 {
        match &self.drift {
            Some(b) => b.iter().zip(xi).map(|(bc, &xc)| bc.value(x) * xc).sum(),
            None => 0.0,
        }
    }

    /// `H(x, xi)`. Inputs are assumed finite; see [`eval_h`] for the checked entry point.
    pub fn h(&self, x: &[f64], xi: &[f64]) -> f64 {
        let k = match &self.kinetic {
            Kinetic::Power { q, scale } => {
                let r2: f64 = xi.iter().map(|v| v * v).sum();
                scale * r2.powi(*q as i32 / 2) / *q as f64
            }
            Kinetic::Quadratic { a } => {
                let n = self.dim;
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += xi[i] * a[i * n + j] * xi[j];
                    }
                }
                0.5 * s
            }
        };
        k + self.drift_dot(x, xi) - self.potential.value(x)
    }

    /// `D_xi H(x, xi)` into `out`.
    pub fn dxi_h(&self, x: &[f64], xi: &[f64], out: &mut [f64]) {
        let n = self.dim;
        match &self.kinetic {
            Kinetic::Power { q, scale } => {
                let r2: f64 = xi.iter().map(|v| v * v).sum();
                let f = scale * r2.powi((*q as i32 - 2) / 2);
                for (o, &v) in out.iter_mut().zip(xi) {
                    *o = f * v;
                }
            }
            Kinetic::Quadratic { a } => {
                for i in 0..n {
                    out[i] = (0..n).map(|j| a[i * n + j] * xi[j]).sum();
                }
            }
        }
        if let Some(b) = &self.drift {
            for (o, bc) in out.iter_mut().zip(b) {
                *o += bc.value(x);
            }
        }
    }

    /// `D_x H(x, xi)` into `out`.
    pub fn dx_h(&self, x: &[f64], xi: &[f64], out: &mut [f64]) {
        let n = self.dim;
        self.potential.gradient(x, out);
        out.iter_mut().for_each(|v| *v = -*v);
        if let Some(b) = &self.drift {
            let mut g = vec![0.0; n];
            for (bc, &xc) in b.iter().zip(xi) {
                bc.gradient(x, &mut g);
                for (o, gv) in out.iter_mut().zip(&g) {
                    *o += xc * gv;
                }
            }
        }
    }

    /// `D_xi xi H(x, xi)`, row-major `n x n`.
    pub fn d2xi_h(&self, _x: &[f64], xi: &[f64], out: &mut [f64]) {
        let n = self.dim;
        match &self.kinetic {
            Kinetic::Power { q, scale } => {
                let r2: f64 = xi.iter().map(|v| v * v).sum();
                let f = scale * r2.powi((*q as i32 - 2) / 2);
                let g = if *q >= 4 { scale * (*q as f64 - 2.0) * r2.powi((*q as i32 - 4) / 2) } else { 0.0 };
                for i in 0..n {
                    for j in 0..n {
                        out[i * n + j] = g * xi[i] * xi[j] + if i == j { f } else { 0.0 };
                    }
                }
            }
            Kinetic::Quadratic { a } => out[..n * n].copy_from_slice(a),
        }
    }

    /// `D_xx H(x, xi)`, row-major `n x n`.
    pub fn dxx_h(&self, x: &[f64], xi: &[f64], out: &mut [f64]) {
        let n = self.dim;
        self.potential.hessian(x, out);
        out.iter_mut().for_each(|v| *v = -*v);
        if let Some(b) = &self.drift {
            let mut hb = vec![0.0; n * n];
            for (bc, &xc) in b.iter().zip(xi) {
                bc.hessian(x, &mut hb);
                for (o, hv) in out.iter_mut().zip(&hb) {
                    *o += xc * hv;
                }
            }
        }
    }

    /// Mixed derivative: `out[a * n + c] = d^2 H / dx_a dxi_c`.
    pub fn dxxi_h(&self, x: &[f64], _xi: &[f64], out: &mut [f64]) {
        let n = self.dim;
        out[..n * n].iter_mut().for_each(|v| *v = 0.0);
        if let Some(b) = &self.drift {
            let mut g = vec![0.0; n];
            for (c, bc) in b.iter().enumerate() {
                bc.gradient(x, &mut g);
                for a in 0..n {
                    out[a * n + c] = g[a];
                }
            }
        }
    }

    pub(crate) fn check_point(&self, x: &[f64], y: &[f64], what: &str) -> Result<()> {
        if x.len() != self.dim || y.len() != self.dim {
            return Err(LabError::Domain(format!(
                "expected {}-dimensional x and {what}, got {} and {}",
                self.dim,
                x.len(),
                y.len()
            )));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(LabError::Domain(format!("non-finite x or {what}")));
        }
        Ok(())
    }
}

fn check_power(q: u32) -> Result<()> {
    if q < 2 || !q.is_multiple_of(2) {
        return Err(LabError::Config(format!("power q = {q} must be an even integer >= 2")));
    }
    Ok(())
}

/// Shifts `v` so that its minimum over the torus is 0.
///
/// The minimum is located on a fine sample and polished by Newton steps from the best node.
fn normalize_min_zero(v: TrigPoly, dim: usize) -> TrigPoly {
    if v.terms.is_empty() {
        return TrigPoly::constant(0.0);
    }
    let per_axis: usize = match dim {
        1 => 4096,
        2 => 256,
        _ => 32,
    };
    let total = per_axis.pow(dim as u32);
    let mut best = f64::INFINITY;
    let mut best_x = vec![0.0; dim];
    let mut x = vec![0.0; dim];
    for idx in 0..total {
        let mut r = idx;
        for a in (0..dim).rev() {
            x[a] = (r % per_axis) as f64 / per_axis as f64;
            r /= per_axis;
        }
        let val = v.value(&x);
        if val < best {
            best = val;
            best_x.copy_from_slice(&x);
        }
    }
    let mut g = vec![0.0; dim];
    let mut hs = vec![0.0; dim * dim];
    let mut xk = best_x;
    for _ in 0..30 {
        v.gradient(&xk, &mut g);
        v.hessian(&xk, &mut hs);
        let Ok(lu) = crate::linalg::DenseLu::factor(dim, hs.clone()) else {
            break;
        };
        let mut step = g.clone();
        lu.solve_in_place(&mut step);
        let trial: Vec<f64> = xk.iter().zip(&step).map(|(a, s)| a - s).collect();
        let tv = v.value(&trial);
        if !(tv <= best) {
            break;
        }
        best = tv;
        xk = trial;
        if step.iter().all(|s| s.abs() < 1e-15) {
            break;
        }
    }
    v.shifted(-best)
}

/// Checked `H(x, xi)`; `x` is wrapped into the torus.
pub fn eval_h(model: &HamiltonianModel, x: &[f64], xi: &[f64]) -> Result<f64> {
    model.check_point(x, xi, "xi")?;
    Ok(model.h(x, xi))
}

pub fn eval_dxi_h(model: &HamiltonianModel, x: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
    model.check_point(x, xi, "xi")?;
    let mut out = vec![0.0; model.dim()];
    model.dxi_h(x, xi, &mut out);
    Ok(out)
}

pub fn eval_dx_h(model: &HamiltonianModel, x: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
    model.check_point(x, xi, "xi")?;
    let mut out = vec![0.0; model.dim()];
    model.dx_h(x, xi, &mut out);
    Ok(out)
}

pub fn eval_d2xi_h(model: &HamiltonianModel, x: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
    model.check_point(x, xi, "xi")?;
    let n = model.dim();
    let mut out = vec![0.0; n * n];
    model.d2xi_h(x, xi, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_examples() {
        let free = HamiltonianModel::free(1).unwrap();
        assert_eq!(eval_h(&free, &[0.3], &[2.0]).unwrap(), 2.0);

        let pend = HamiltonianModel::pendulum();
        assert_eq!(eval_h(&pend, &[0.0], &[0.0]).unwrap(), 0.0);

        let drifted =
            HamiltonianModel::drifted_quadratic(1, 1.0, vec![TrigPoly::sine(1, 1.0)], TrigPoly::cosine_well(1, 1.0))
                .unwrap();
        let v = drifted.potential_at(&[0.25]);
        assert!((eval_h(&drifted, &[0.25], &[1.0]).unwrap() - (1.5 - v)).abs() < 1e-15);
    }

    #[test]
    fn free_is_x_independent() {
        let free = HamiltonianModel::free(2).unwrap();
        for x in [[0.0, 0.0], [0.3, 0.9], [0.77, 0.11]] {
            assert_eq!(free.h(&x, &[1.0, -2.0]), 2.5);
        }
    }

    #[test]
    fn periodicity_in_x_is_exact() {
        let m =
            HamiltonianModel::drifted_quadratic(1, 1.0, vec![TrigPoly::sine(1, 0.4)], TrigPoly::cosine_well(1, 1.0))
                .unwrap();
        for &x in &[0.125, 0.375, 0.921875] {
            assert_eq!(m.h(&[x], &[0.6]).to_bits(), m.h(&[x + 1.0], &[0.6]).to_bits());
        }
    }

    #[test]
    fn unknown_family_and_fields_are_config_errors() {
        let e = HamiltonianModel::from_json(&json!({"family": "nope", "dim": 1})).unwrap_err();
        assert!(matches!(e, LabError::Config(_)));
        let e = HamiltonianModel::from_json(&json!({
            "family": "mechanical_power", "dim": 1, "params": {"q": 2, "qq": 3}
        }))
        .unwrap_err();
        assert!(matches!(e, LabError::Config(_)));
        let e = HamiltonianModel::from_json(&json!({
            "family": "mechanical_power", "dim": 1, "params": {"q": 3}
        }))
        .unwrap_err();
        assert!(matches!(e, LabError::Config(_)));
    }

    #[test]
    fn non_finite_input_is_a_domain_error() {
        let m = HamiltonianModel::pendulum();
        assert!(matches!(eval_h(&m, &[f64::NAN], &[0.0]), Err(LabError::Domain(_))));
        assert!(matches!(eval_dxi_h(&m, &[0.0], &[f64::INFINITY]), Err(LabError::Domain(_))));
    }

    #[test]
    fn potentials_are_normalized_to_zero_minimum() {
        let shifted = TrigPoly { constant: 3.0, terms: vec![TrigTerm { k: vec![1], cos: 0.3, sin: 0.4 }] };
        let m = HamiltonianModel::mechanical(1, 2, shifted).unwrap();
        // min of 3 + 0.5 cos(2 pi x - phi) is 2.5.
        assert!((m.potential().constant - 0.5).abs() < 1e-14);
    }

    #[test]
    fn json_round_trip_rebuilds_the_same_model() {
        let m = HamiltonianModel::anisotropic_2d([[2.0, 0.5], [0.5, 1.0]], TrigPoly::cosine_well(2, 0.5)).unwrap();
        let again = HamiltonianModel::from_json(&m.to_json()).unwrap();
        let (x, xi) = ([0.2, 0.7], [0.3, -1.1]);
        assert_eq!(m.h(&x, &xi), again.h(&x, &xi));
    }

    #[test]
    fn mixed_and_spatial_derivatives_match_differences() {
        let m = HamiltonianModel::drifted_quadratic(
            2,
            1.0,
            vec![
                TrigPoly { constant: 0.0, terms: vec![TrigTerm { k: vec![1, 1], cos: 0.2, sin: 0.3 }] },
                TrigPoly { constant: 0.1, terms: vec![TrigTerm { k: vec![0, 1], cos: -0.4, sin: 0.0 }] },
            ],
            TrigPoly::cosine_well(2, 0.7),
        )
        .unwrap();
        let x = [0.31, 0.64];
        let xi = [0.8, -0.3];
        let h = 1e-6;
        let mut dx = [0.0; 2];
        let mut dxx = [0.0; 4];
        let mut dxxi = [0.0; 4];
        m.dx_h(&x, &xi, &mut dx);
        m.dxx_h(&x, &xi, &mut dxx);
        m.dxxi_h(&x, &xi, &mut dxxi);
        for a in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            assert!(((m.h(&xp, &xi) - m.h(&xm, &xi)) / (2.0 * h) - dx[a]).abs() < 1e-6);
            let mut gp = [0.0; 2];
            let mut gm = [0.0; 2];
            m.dx_h(&xp, &xi, &mut gp);
            m.dx_h(&xm, &xi, &mut gm);
            let mut fp = [0.0; 2];
            let mut fm = [0.0; 2];
            m.dxi_h(&xp, &xi, &mut fp);
            m.dxi_h(&xm, &xi, &mut fm);
            for c in 0..2 {
                assert!(((gp[c] - gm[c]) / (2.0 * h) - dxx[c * 2 + a]).abs() < 1e-4);
                assert!(((fp[c] - fm[c]) / (2.0 * h) - dxxi[a * 2 + c]).abs() < 1e-6);
            }
        }
    }
}
