use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// One Fourier mode `cos_coeff cos(2 pi k.x) + sin_coeff sin(2 pi k.x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigTerm {
    pub k: Vec<i64>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// Real trigonometric polynomial on the torus.
///
/// Arguments are reduced mod 1 per axis, so `value(x + e_k) == value(x)` bitwise whenever
/// `x + e_k` is itself exact (e.g. at grid nodes).
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigPoly {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub terms: Vec<TrigTerm>,
}

impl TrigPoly {
    pub fn constant(c: f64) -> Self {
        TrigPoly { constant: c, terms: Vec::new() }
    }

    /// `sum_axes amplitude * (1 - cos(2 pi x_a))`.
    pub fn cosine_well(dim: usize, amplitude: f64) -> Self {
        TrigPoly {
            constant: amplitude * dim as f64,
            terms: (0..dim)
                .map(|a| {
                    let mut k = vec![0; dim];
                    k[a] = 1;
                    TrigTerm { k, cos: -amplitude, sin: 0.0 }
                })
                .collect(),
        }
    }

    /// `amplitude * sin(2 pi k x)` in one variable.
    pub fn sine(k: i64, amplitude: f64) -> Self {
        TrigPoly { constant: 0.0, terms: vec![TrigTerm { k: vec![k], cos: 0.0, sin: amplitude }] }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !self.constant.is_finite() {
            return Err(LabError::Config("non-finite constant term".into()));
        }
        for t in &self.terms {
            if t.k.len() != dim {
                return Err(LabError::Config(format!(
                    "Fourier mode {:?} has {} components, model dimension is {dim}",
                    t.k,
                    t.k.len()
                )));
            }
            if !t.cos.is_finite() || !t.sin.is_finite() {
                return Err(LabError::Config("non-finite Fourier coefficient".into()));
            }
        }
        Ok(())
    }

    fn phase(k: &[i64], x: &[f64]) -> f64 {
        // Reduce each k_a x_a mod 1 so that x -> x + e_a gives a bitwise identical argument.
        let s: f64 = k.iter().zip(x).map(|(&ka, &xa)| (ka as f64 * xa.rem_euclid(1.0)).rem_euclid(1.0)).sum();
        2.0 * PI * s
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|t| {
                    let th = Self::phase(&t.k, x);
                    t.cos * th.cos() + t.sin * th.sin()
                })
                .sum::<f64>()
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for t in &self.terms {
            let th = Self::phase(&t.k, x);
            let d = 2.0 * PI * (-t.cos * th.sin() + t.sin * th.cos());
            for (o, &ka) in out.iter_mut().zip(&t.k) {
                *o += d * ka as f64;
            }
        }
    }

    /// Row-major `n x n` Hessian.
    pub fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        out.iter_mut().for_each(|v| *v = 0.0);
        for t in &self.terms {
            let th = Self::phase(&t.k, x);
            let d2 = -(2.0 * PI) * (2.0 * PI) * (t.cos * th.cos() + t.sin * th.sin());
            for a in 0..n {
                for b in 0..n {
                    out[a * n + b] += d2 * (t.k[a] * t.k[b]) as f64;
                }
            }
        }
    }

    pub fn shifted(mut self, s: f64) -> Self {
        self.constant += s;
        self
    }
}
