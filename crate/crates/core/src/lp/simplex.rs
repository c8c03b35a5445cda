//! Revised primal simplex with Bland's rule for `min c.x, A x = b, x >= 0`.
//!
//! The basis inverse is kept dense and updated by elementary row operations, with a fresh
//! factorization every [`REFACTOR_EVERY`] pivots. Rows are equilibrated internally; duals are
//! returned for the caller's unscaled rows.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::DenseLu;
use crate::torus::pairwise_sum;

const REFACTOR_EVERY: usize = 16;
const PIVOT_TOL: f64 = 1e-9;
const TIE_TOL: f64 = 1e-13;
const CANCELLATION_TOL: f64 = 1e-9;
/// Pivots below this fraction of `max |alpha|` are treated as basis-inverse noise.
const RELATIVE_PIVOT_TOL: f64 = 1e-10;
/// Phase-one infeasibility accepted as zero, in equilibrated units.
pub const FEASIBILITY_TOL: f64 = 1e-10;

/// Column-sparse LP in standard equality form.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardForm {
    pub rows: usize,
    /// `columns[j]` lists `(row, coefficient)`.
    pub columns: Vec<Vec<(usize, f64)>>,
    pub cost: Vec<f64>,
    pub rhs: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct SimplexSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// Multipliers `y` with `c - A^T y >= 0` at optimality.
    pub dual: Vec<f64>,
    /// Smallest reduced cost `min_j (c_j - A_j.y)` over all columns.
    pub min_reduced_cost: f64,
    pub iterations: usize,
    /// Phase-one objective at termination, in equilibrated units.
    pub infeasibility: f64,
    /// Rows found linearly dependent on the others.
    pub redundant_rows: usize,
    /// Final basis, in the encoding accepted by [`solve_standard_from`].
    pub basis: Vec<usize>,
}

enum PhaseEnd {
    Optimal,
    Limit,
}

struct Revised {
    m: usize,
    n: usize,
    columns: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    since_refactor: usize,
}

impl Revised {
    fn column(&self, j: usize) -> &[(usize, f64)] {
        &self.columns[j]
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.n
    }

    fn alpha(&self, j: usize) -> Vec<f64> {
        self.alpha_with_magnitude(j).0
    }

    /// `B^-1 A_j` together with `sum_r |B^-1_ir A_rj|`, the scale of its cancellation error.
    fn alpha_with_magnitude(&self, j: usize) -> (Vec<f64>, Vec<f64>) {
        let m = self.m;
        let mut a = vec![0.0; m];
        let mut mag = vec![0.0; m];
        for &(r, v) in self.column(j) {
            for i in 0..m {
                let t = self.binv[i * m + r] * v;
                a[i] += t;
                mag[i] += t.abs();
            }
        }
        (a, mag)
    }

    fn duals(&self, cost: &dyn Fn(usize) -> f64) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for i in 0..m {
            let cb = cost(self.basis[i]);
            if cb != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yr, b) in y.iter_mut().zip(row) {
                    *yr += cb * b;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, cost: &dyn Fn(usize) -> f64, y: &[f64]) -> f64 {
        cost(j) - self.column(j).iter().map(|&(r, v)| y[r] * v).sum::<f64>()
    }

    fn pivot(&mut self, p: usize, j: usize, alpha: &[f64]) -> Result<()> {
        let m = self.m;
        let piv = alpha[p];
        for v in &mut self.binv[p * m..(p + 1) * m] {
            *v /= piv;
        }
        self.xb[p] /= piv;
        let (prow, xp) = (self.binv[p * m..(p + 1) * m].to_vec(), self.xb[p]);
        for i in 0..m {
            let f = alpha[i];
            if i == p || f == 0.0 {
                continue;
            }
            for (b, q) in self.binv[i * m..(i + 1) * m].iter_mut().zip(&prow) {
                *b -= f * q;
            }
            self.xb[i] -= f * xp;
        }
        self.is_basic[self.basis[p]] = false;
        self.basis[p] = j;
        self.is_basic[j] = true;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(())
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut b = vec![0.0; m * m];
        for (i, &j) in self.basis.iter().enumerate() {
            for &(r, v) in &self.columns[j] {
                b[r * m + i] += v;
            }
        }
        self.binv = DenseLu::factor(m, b)?.inverse();
        self.xb = (0..m)
            .map(|i| {
                let row = &self.binv[i * m..(i + 1) * m];
                pairwise_sum(&row.iter().zip(&self.rhs).map(|(a, b)| a * b).collect::<Vec<_>>())
            })
            .collect();
        self.since_refactor = 0;
        Ok(())
    }

    /// Installs `basis` if it is nonsingular and primal feasible with artificials at zero.
    fn try_start(&mut self, basis: &[usize]) -> bool {
        let mut seen = vec![false; self.n + self.m];
        if basis.iter().any(|&j| j >= self.n + self.m || std::mem::replace(&mut seen[j], true)) {
            return false;
        }
        let saved = (self.basis.clone(), self.is_basic.clone(), self.binv.clone(), self.xb.clone());
        self.basis = basis.to_vec();
        self.is_basic = seen;
        let ok = self.refactor().is_ok()
            && self
                .basis
                .iter()
                .zip(&self.xb)
                .all(|(&j, &x)| x >= -FEASIBILITY_TOL && (!self.is_artificial(j) || x <= FEASIBILITY_TOL));
        if !ok {
            (self.basis, self.is_basic, self.binv, self.xb) = saved;
            self.since_refactor = 0;
        }
        ok
    }

    fn run_phase(
        &mut self,
        cost: &dyn Fn(usize) -> f64,
        dual_tol: f64,
        stranded: bool,
        iterations: &mut usize,
        max_iter: usize,
    ) -> Result<PhaseEnd> {
        loop {
            let y = self.duals(cost);
            // Bland: lowest-index improving column enters.
            let entering = (0..self.n).find(|&j| !self.is_basic[j] && self.reduced_cost(j, cost, &y) < -dual_tol);
            let Some(j) = entering else {
                return Ok(PhaseEnd::Optimal);
            };
            if *iterations >= max_iter {
                return Ok(PhaseEnd::Limit);
            }
            let (alpha, mag) = self.alpha_with_magnitude(j);
            let amax = alpha.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = alpha[i];
                // Entries that are mostly cancellation or inverse noise are zero in exact arithmetic.
                if a.abs() <= CANCELLATION_TOL * mag[i] || a.abs() <= RELATIVE_PIVOT_TOL * amax {
                    continue;
                }
                // Artificials left in phase two sit on redundant rows, where alpha is round-off.
                let ratio = if stranded && self.is_artificial(self.basis[i]) {
                    continue;
                } else if a > PIVOT_TOL {
                    self.xb[i].max(0.0) / a
                } else {
                    continue;
                };
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - TIE_TOL * (1.0 + br) {
                            Some((i, ratio))
                        } else if ratio <= br + TIE_TOL * (1.0 + br) && self.basis[i] < self.basis[bi] {
                            Some((i, br.min(ratio)))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
            let Some((p, _)) = leave else {
                return Err(LabError::numerical_with(
                    "LP is unbounded below",
                    vec![format!("column {j} has no blocking row")],
                ));
            };
            self.pivot(p, j, &alpha)?;
            *iterations += 1;
        }
    }
}

/// Solves `min c.x` subject to `A x = b`, `x >= 0`.
pub fn solve_standard(lp: &StandardForm, max_iter: usize) -> Result<SimplexSolution> {
    solve_standard_from(lp, max_iter, None)
}

/// As [`solve_standard`], starting from `start` when it is a nonsingular basis whose basic
/// solution is feasible. Entries `>= n` name the artificial of row `entry - n`. Phase one is
/// skipped for such a start; any other start falls back to the all-artificial basis.
pub fn solve_standard_from(lp: &StandardForm, max_iter: usize, start: Option<&[usize]>) -> Result<SimplexSolution> {
    let m = lp.rows;
    let n = lp.columns.len();
    if lp.cost.len() != n || lp.rhs.len() != m {
        return Err(LabError::Config("LP cost/rhs lengths do not match the matrix".into()));
    }
    // Row scale: unit max-norm, sign chosen so the right-hand side is nonnegative.
    let mut row_max = vec![0.0_f64; m];
    for col in &lp.columns {
        for &(r, v) in col {
            if r >= m {
                return Err(LabError::Config(format!("row index {r} out of range")));
            }
            row_max[r] = row_max[r].max(v.abs());
        }
    }
    let scale: Vec<f64> = (0..m)
        .map(|r| {
            let s = if row_max[r] > 0.0 { 1.0 / row_max[r] } else { 1.0 };
            if lp.rhs[r] < 0.0 {
                -s
            } else {
                s
            }
        })
        .collect();
    let mut columns: Vec<Vec<(usize, f64)>> =
        lp.columns.iter().map(|c| c.iter().map(|&(r, v)| (r, v * scale[r])).collect()).collect();
    columns.extend((0..m).map(|r| vec![(r, 1.0)]));
    let rhs: Vec<f64> = lp.rhs.iter().zip(&scale).map(|(b, s)| b * s).collect();

    let mut identity = vec![0.0; m * m];
    for i in 0..m {
        identity[i * m + i] = 1.0;
    }
    let mut is_basic = vec![false; n + m];
    is_basic[n..].iter_mut().for_each(|b| *b = true);
    let mut t = Revised {
        m,
        n,
        columns,
        rhs: rhs.clone(),
        basis: (n..n + m).collect(),
        is_basic,
        binv: identity,
        xb: rhs,
        since_refactor: 0,
    };

    let mut iterations = 0;
    let warm = match start {
        Some(basis) if basis.len() == m => t.try_start(basis),
        _ => false,
    };
    let end = if warm {
        PhaseEnd::Optimal
    } else {
        let phase1_cost = |j: usize| if j >= n { 1.0 } else { 0.0 };
        let end = t.run_phase(&phase1_cost, 1e-12, false, &mut iterations, max_iter)?;
        t.refactor()?;
        end
    };
    let infeasibility: f64 = (0..m).filter(|&i| t.basis[i] >= n).map(|i| t.xb[i].abs()).sum();
    let finish = |t: &Revised, status: LpStatus, dual: Vec<f64>, min_rc: f64, iterations: usize, redundant: usize| {
        let mut x = vec![0.0; n];
        for (i, &j) in t.basis.iter().enumerate() {
            if j < n {
                x[j] = t.xb[i];
            }
        }
        let dual = dual.iter().zip(&scale).map(|(y, s)| y * s).collect();
        SimplexSolution {
            status,
            x,
            dual,
            min_reduced_cost: min_rc,
            iterations,
            infeasibility,
            redundant_rows: redundant,
            basis: t.basis.clone(),
        }
    };
    if let PhaseEnd::Limit = end {
        return Ok(finish(&t, LpStatus::IterationLimit, vec![0.0; m], f64::NAN, iterations, 0));
    }
    if infeasibility > FEASIBILITY_TOL {
        return Ok(finish(&t, LpStatus::Infeasible, vec![0.0; m], f64::NAN, iterations, 0));
    }

    // Pivot remaining artificials out; those that cannot leave sit on redundant rows.
    let mut redundant = 0;
    for p in 0..m {
        if t.basis[p] < n {
            continue;
        }
        let row = t.binv[p * m..(p + 1) * m].to_vec();
        let candidate = (0..n).filter(|&j| !t.is_basic[j]).find(|&j| {
            let v: f64 = t.column(j).iter().map(|&(r, a)| row[r] * a).sum();
            v.abs() > 1e-7
        });
        match candidate {
            Some(j) => {
                let alpha = t.alpha(j);
                t.pivot(p, j, &alpha)?;
            }
            None => redundant += 1,
        }
    }
    t.refactor()?;

    let cmax = lp.cost.iter().fold(0.0_f64, |a, c| a.max(c.abs()));
    let phase2_cost = |j: usize| if j >= n { 0.0 } else { lp.cost[j] };
    let end = t.run_phase(&phase2_cost, 1e-11 * (1.0 + cmax), true, &mut iterations, max_iter)?;
    t.refactor()?;
    let y = t.duals(&phase2_cost);
    let min_rc = (0..n).map(|j| t.reduced_cost(j, &phase2_cost, &y)).fold(f64::INFINITY, f64::min);
    let status = match end {
        PhaseEnd::Optimal => LpStatus::Optimal,
        PhaseEnd::Limit => LpStatus::IterationLimit,
    };
    let mut sol = finish(&t, status, y, min_rc, iterations, redundant);
    sol.x.iter_mut().for_each(|v| {
        if *v < 0.0 && *v > -1e-12 {
            *v = 0.0;
        }
    });
    Ok(sol)
}
