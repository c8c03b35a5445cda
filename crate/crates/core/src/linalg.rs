//! Direct solvers for the stencil systems that appear in the cell problem.
//!
//! Periodic stencil operators are banded except for the wrap-around couplings and
//! the dense column of the ergodic constant. [`BorderedBandLu`] moves those few
//! "border" unknowns to the end, factors the banded interior with partial pivoting
//! and closes the system through a small dense Schur complement.

use crate::error::{LabError, Result};

/// Square sparse matrix stored as per-row `(column, value)` lists.
#[derive(Clone, Debug)]
pub struct SparseRows {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn new(n: usize) -> Self {
        SparseRows { n, rows: vec![Vec::new(); n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Adds `value` to entry `(row, col)`, merging duplicates.
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        let r = &mut self.rows[row];
        match r.iter_mut().find(|(c, _)| *c == col) {
            Some(e) => e.1 += value,
            None => r.push((col, value)),
        }
    }

    pub fn set_row(&mut self, row: usize, entries: Vec<(usize, f64)>) {
        self.rows[row] = entries;
    }

    pub fn row(&self, row: usize) -> &[(usize, f64)] {
        &self.rows[row]
    }

    pub fn transpose(&self) -> SparseRows {
        let mut t = SparseRows::new(self.n);
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                t.rows[j].push((i, v));
            }
        }
        t
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(j, v)| v * x[j]).sum()).collect()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.rows[row].iter().filter(|(c, _)| *c == col).map(|(_, v)| v).sum()
    }
}

/// Banded LU with partial pivoting (LAPACK `gbtrf` layout).
#[derive(Clone, Debug)]
struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    /// Row `i` stores columns `i - kl ..= i + kl + ku` at offsets `0..ld`.
    ab: Vec<f64>,
    ld: usize,
    piv: Vec<usize>,
}

impl BandLu {
    fn slot(&self, i: usize, j: usize) -> usize {
        // j in [i - kl, i + kl + ku]
        i * self.ld + (j + self.kl - i)
    }

    fn factor(n: usize, kl: usize, ku: usize, entries: &[Vec<(usize, f64)>]) -> Result<Self> {
        let ld = 2 * kl + ku + 1;
        let mut lu = BandLu { n, kl, ku, ab: vec![0.0; n * ld], ld, piv: vec![0; n] };
        for (i, row) in entries.iter().enumerate() {
            for &(j, v) in row {
                let s = lu.slot(i, j);
                lu.ab[s] += v;
            }
        }
        let scale = lu.ab.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let ucols = kl + ku; // fill-in reach to the right of the diagonal
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.ab[lu.slot(k, k)].abs();
            for i in (k + 1)..=last_row {
                let v = lu.ab[lu.slot(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= 1e-14 * scale {
                return Err(LabError::numerical_with(
                    "singular banded block during factorization",
                    vec![format!("pivot {best:e} at column {k}, matrix scale {scale:e}")],
                ));
            }
            lu.piv[k] = p;
            let last_col = (k + ucols).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = lu.slot(k, j);
                    let b = lu.slot(p, j);
                    lu.ab.swap(a, b);
                }
            }
            let pivot = lu.ab[lu.slot(k, k)];
            for i in (k + 1)..=last_row {
                let sik = lu.slot(i, k);
                let m = lu.ab[sik] / pivot;
                lu.ab[sik] = m;
                if m != 0.0 {
                    for j in (k + 1)..=last_col {
                        let skj = lu.slot(k, j);
                        let sij = lu.slot(i, j);
                        lu.ab[sij] -= m * lu.ab[skj];
                    }
                }
            }
        }
        Ok(lu)
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in (k + 1)..=(k + self.kl).min(n - 1) {
                    b[i] -= self.ab[self.slot(i, k)] * bk;
                }
            }
        }
        let ucols = self.kl + self.ku;
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in (k + 1)..=(k + ucols).min(n - 1) {
                s -= self.ab[self.slot(k, j)] * b[j];
            }
            b[k] = s / self.ab[self.slot(k, k)];
        }
    }
}

/// Dense LU with partial pivoting for small systems.
#[derive(Clone, Debug)]
pub struct DenseLu {
    n: usize,
    a: Vec<f64>,
    piv: Vec<usize>,
}

impl DenseLu {
    /// Factors a row-major `n x n` matrix.
    pub fn factor(n: usize, mut a: Vec<f64>) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut piv = vec![0; n];
        for k in 0..n {
            let (p, best) =
                (k..n).map(|i| (i, a[i * n + k].abs())).fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best <= 1e-14 * scale {
                return Err(LabError::numerical_with(
                    "singular dense block",
                    vec![format!("pivot {best:e} at column {k}")],
                ));
            }
            piv[k] = p;
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
            }
            let pivot = a[k * n + k];
            for i in (k + 1)..n {
                let m = a[i * n + k] / pivot;
                a[i * n + k] = m;
                if m != 0.0 {
                    for j in (k + 1)..n {
                        a[i * n + j] -= m * a[k * n + j];
                    }
                }
            }
        }
        Ok(DenseLu { n, a, piv })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        // Factorization swapped whole rows, multipliers included: permute first, then substitute.
        for k in 0..n {
            b.swap(k, self.piv[k]);
        }
        for k in 0..n {
            let bk = b[k];
            for i in (k + 1)..n {
                b[i] -= self.a[i * n + k] * bk;
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in (k + 1)..n {
                s -= self.a[k * n + j] * b[j];
            }
            b[k] = s / self.a[k * n + k];
        }
    }

    /// Explicit inverse, row-major.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|v| *v = 0.0);
            col[j] = 1.0;
            self.solve_in_place(&mut col);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        inv
    }
}

/// Direct solver for a sparse matrix that is banded after moving `border` indices last.
#[derive(Clone, Debug)]
pub struct BorderedBandLu {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    n_int: usize,
    band: Option<BandLu>,
    /// Border-to-interior coupling `C`, sparse rows.
    c_rows: Vec<Vec<(usize, f64)>>,
    /// `A^{-1} B`, one column per border index.
    z_cols: Vec<Vec<f64>>,
    schur: Option<DenseLu>,
}

impl BorderedBandLu {
    pub fn factor(matrix: &SparseRows, border: &[usize]) -> Result<Self> {
        let n = matrix.dim();
        let mut is_border = vec![false; n];
        for &b in border {
            is_border[b] = true;
        }
        let mut perm: Vec<usize> = (0..n).filter(|&i| !is_border[i]).collect();
        let n_int = perm.len();
        let mut border_sorted: Vec<usize> = (0..n).filter(|&i| is_border[i]).collect();
        perm.append(&mut border_sorted);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let m = n - n_int;

        let mut int_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_int];
        let mut b_cols = vec![vec![0.0; n_int]; m];
        let mut c_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        let mut d = vec![0.0; m * m];
        let (mut kl, mut ku) = (0usize, 0usize);
        for (new_i, &old_i) in perm.iter().enumerate() {
            for &(old_j, v) in matrix.row(old_i) {
                let new_j = inv[old_j];
                match (new_i < n_int, new_j < n_int) {
                    (true, true) => {
                        if new_j < new_i {
                            kl = kl.max(new_i - new_j);
                        } else {
                            ku = ku.max(new_j - new_i);
                        }
                        int_rows[new_i].push((new_j, v));
                    }
                    (true, false) => b_cols[new_j - n_int][new_i] += v,
                    (false, true) => c_rows[new_i - n_int].push((new_j, v)),
                    (false, false) => d[(new_i - n_int) * m + (new_j - n_int)] += v,
                }
            }
        }

        let band = if n_int > 0 { Some(BandLu::factor(n_int, kl, ku, &int_rows)?) } else { None };
        let mut z_cols = b_cols;
        if let Some(band) = &band {
            for z in z_cols.iter_mut() {
                band.solve_in_place(z);
            }
        }
        // S = D - C Z
        for (r, crow) in c_rows.iter().enumerate() {
            for (s, z) in z_cols.iter().enumerate() {
                let cz: f64 = crow.iter().map(|&(j, v)| v * z[j]).sum();
                d[r * m + s] -= cz;
            }
        }
        let schur = if m > 0 { Some(DenseLu::factor(m, d)?) } else { None };
        Ok(BorderedBandLu { n, perm, n_int, band, c_rows, z_cols, schur })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let mut y: Vec<f64> = self.perm[..self.n_int].iter().map(|&i| rhs[i]).collect();
        if let Some(band) = &self.band {
            band.solve_in_place(&mut y);
        }
        let mut xb: Vec<f64> = self.perm[self.n_int..].iter().map(|&i| rhs[i]).collect();
        for (r, crow) in self.c_rows.iter().enumerate() {
            xb[r] -= crow.iter().map(|&(j, v)| v * y[j]).sum::<f64>();
        }
        if let Some(s) = &self.schur {
            s.solve_in_place(&mut xb);
        }
        for (s, z) in self.z_cols.iter().enumerate() {
            let xs = xb[s];
            if xs != 0.0 {
                for (yi, zi) in y.iter_mut().zip(z) {
                    *yi -= zi * xs;
                }
            }
        }
        let mut out = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = if new < self.n_int { y[new] } else { xb[new - self.n_int] };
        }
        out
    }
}

/// Solves `matrix x = rhs` once, with one round of iterative refinement.
pub fn solve_bordered(matrix: &SparseRows, border: &[usize], rhs: &[f64]) -> Result<Vec<f64>> {
    let lu = BorderedBandLu::factor(matrix, border)?;
    Ok(refine(matrix, &lu, rhs))
}

/// One step of iterative refinement on top of a factorization.
pub fn refine(matrix: &SparseRows, lu: &BorderedBandLu, rhs: &[f64]) -> Vec<f64> {
    let mut x = lu.solve(rhs);
    let ax = matrix.mul_vec(&x);
    let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let dx = lu.solve(&r);
    for (xi, di) in x.iter_mut().zip(dx) {
        *xi += di;
    }
    x
}

/// Eigenvalues of a small symmetric row-major matrix, ascending (cyclic Jacobi).
pub fn sym_eigenvalues(n: usize, a: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), n * n);
    match n {
        0 => return Vec::new(),
        1 => return vec![a[0]],
        2 => {
            let (p, q, r) = (a[0], 0.5 * (a[1] + a[2]), a[3]);
            let mean = 0.5 * (p + r);
            let rad = (0.25 * (p - r) * (p - r) + q * q).sqrt();
            return vec![mean - rad, mean + rad];
        }
        _ => {}
    }
    let mut m = a.to_vec();
    for _sweep in 0..64 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        if off <= 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn periodic_matrix(n: usize, k: usize, rng: &mut ChaCha8Rng) -> SparseRows {
        let mut m = SparseRows::new(n);
        for i in 0..n {
            m.add(i, i, 10.0 + rng.gen::<f64>());
            for off in 1..=k {
                m.add(i, (i + off) % n, rng.gen_range(-1.0..1.0));
                m.add(i, (i + n - off) % n, rng.gen_range(-1.0..1.0));
            }
        }
        m
    }

    fn residual(m: &SparseRows, x: &[f64], b: &[f64]) -> f64 {
        m.mul_vec(x).iter().zip(b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn periodic_pentadiagonal_with_wrap_border() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40;
        let m = periodic_matrix(n, 2, &mut rng);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let x = solve_bordered(&m, &[38, 39], &b).unwrap();
        assert!(residual(&m, &x, &b) < 1e-13);
    }

    #[test]
    fn dense_border_column_and_row() {
        // Arrow matrix: tridiagonal plus a full last column and row.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 30;
        let mut m = periodic_matrix(n, 1, &mut rng);
        for i in 0..n {
            m.add(i, 0, -1.0);
            m.add(0, i, 0.3);
        }
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let x = solve_bordered(&m, &[0, n - 1], &b).unwrap();
        assert!(residual(&m, &x, &b) < 1e-12);
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        let mut m = SparseRows::new(3);
        m.add(0, 1, 1.0);
        m.add(1, 0, 1.0);
        m.add(2, 2, 2.0);
        let x = solve_bordered(&m, &[], &[2.0, 3.0, 4.0]).unwrap();
        assert_eq!(x, vec![3.0, 2.0, 2.0]);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut m = SparseRows::new(4);
        for i in 0..4 {
            m.add(i, i, 2.0);
            m.add(i, (i + 1) % 4, -1.0);
            m.add(i, (i + 3) % 4, -1.0);
        }
        assert!(BorderedBandLu::factor(&m, &[3]).is_err());
    }

    #[test]
    fn dense_inverse() {
        let a = vec![4.0, 1.0, 2.0, 3.0];
        let inv = DenseLu::factor(2, a).unwrap().inverse();
        let expect = [0.3, -0.1, -0.2, 0.4];
        for (x, e) in inv.iter().zip(expect) {
            assert!((x - e).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_eigenvalues_match_known_spectra() {
        let e = sym_eigenvalues(2, &[2.0, 1.0, 1.0, 2.0]);
        assert!((e[0] - 1.0).abs() < 1e-15 && (e[1] - 3.0).abs() < 1e-15);
        let a = [2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0];
        let e = sym_eigenvalues(3, &a);
        let s2 = 2.0_f64.sqrt();
        for (got, want) in e.iter().zip([2.0 - s2, 2.0, 2.0 + s2]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_lu_with_several_row_swaps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 9;
        let a: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let mut x = b.clone();
        DenseLu::factor(n, a.clone()).unwrap().solve_in_place(&mut x);
        for i in 0..n {
            let ax: f64 = (0..n).map(|j| a[i * n + j] * x[j]).sum();
            assert!((ax - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn bordered_solve_with_pivoting_in_every_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 20;
        let mut m = SparseRows::new(n);
        for i in 0..n {
            for off in 0..=2usize {
                m.add(i, (i + off) % n, rng.gen_range(-1.0..1.0));
                if off > 0 {
                    m.add(i, (i + n - off) % n, rng.gen_range(-1.0..1.0));
                }
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = BorderedBandLu::factor(&m, &[0, 18, 19]).unwrap().solve(&b);
        assert!(residual(&m, &x, &b) < 1e-12);
    }
}
