//! Compressed sparse column matrices and a left-looking sparse LU with
//! partial pivoting (Gilbert–Peierls), used for every hitting-time and
//! stationary-distribution solve.

use crate::error::{Error, Result};

/// Square sparse matrix in compressed sparse column form.
#[derive(Clone, Debug)]
pub struct CscMatrix {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    /// Builds an `n x n` matrix from `(row, col, value)` triplets.
    /// Duplicate entries are summed; explicit zeros are dropped.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(r, c, _) in triplets {
            assert!(r < n && c < n, "triplet ({r}, {c}) outside {n}x{n}");
            counts[c + 1] += 1;
        }
        for c in 0..n {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut rows = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            let slot = next[c];
            rows[slot] = r;
            vals[slot] = v;
            next[c] += 1;
        }

        // sort each column by row and merge duplicates
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        col_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for c in 0..n {
            scratch.clear();
            scratch.extend((counts[c]..counts[c + 1]).map(|p| (rows[p], vals[p])));
            scratch.sort_by_key(|&(r, _)| r);
            let mut i = 0;
            while i < scratch.len() {
                let r = scratch[i].0;
                let mut v = 0.0;
                while i < scratch.len() && scratch[i].0 == r {
                    v += scratch[i].1;
                    i += 1;
                }
                if v != 0.0 {
                    row_idx.push(r);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        CscMatrix {
            n,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for c in 0..self.n {
            let xc = x[c];
            if xc == 0.0 {
                continue;
            }
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[p]] += self.values[p] * xc;
            }
        }
        y
    }

    /// `y = A^T x`
    pub fn mul_vec_transpose(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|c| {
                (self.col_ptr[c]..self.col_ptr[c + 1])
                    .map(|p| self.values[p] * x[self.row_idx[p]])
                    .sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for c in 0..self.n {
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                d[self.row_idx[p]][c] += self.values[p];
            }
        }
        d
    }
}

/// Sparse LU factors with row permutation: `P A = L U`, `L` unit lower.
#[derive(Clone, Debug)]
pub struct SparseLu {
    n: usize,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    u_ptr: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    /// `pinv[row] = k` when original row `row` is the k-th pivot.
    pinv: Vec<usize>,
}

/// Pivots smaller than this (relative to the column's largest entry
/// magnitude and the matrix scale) are treated as exact zeros.
const SINGULAR_PIVOT: f64 = 1e-13;

/// Keep the diagonal as pivot when it is at least this fraction of the
/// column maximum; limits fill without hurting stability on M-matrices.
const DIAGONAL_PREFERENCE: f64 = 0.1;

impl SparseLu {
    pub fn factor(a: &CscMatrix) -> Result<Self> {
        let n = a.n;
        let scale = a.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let mut l_ptr = Vec::with_capacity(n + 1);
        let mut u_ptr = Vec::with_capacity(n + 1);
        let mut l_idx = Vec::new();
        let mut l_val = Vec::new();
        let mut u_idx = Vec::new();
        let mut u_val = Vec::new();
        let mut pinv = vec![usize::MAX; n];

        let mut x = vec![0.0; n];
        let mut marked = vec![usize::MAX; n];
        let mut pattern: Vec<usize> = Vec::with_capacity(n);
        let mut stack: Vec<(usize, usize)> = Vec::new();

        for k in 0..n {
            l_ptr.push(l_idx.len());
            u_ptr.push(u_idx.len());

            // Symbolic: rows reachable from A(:,k) through the columns of L
            // computed so far, in reverse topological order.
            pattern.clear();
            for p in a.col_ptr[k]..a.col_ptr[k + 1] {
                let start = a.row_idx[p];
                if marked[start] == k {
                    continue;
                }
                marked[start] = k;
                stack.push((start, 0));
                while let Some(&mut (node, ref mut child)) = stack.last_mut() {
                    let col = pinv[node];
                    let mut pushed = false;
                    if col != usize::MAX {
                        let end = l_ptr_end(&l_ptr, &l_idx, col);
                        // first entry of an L column is its pivot row itself
                        while l_ptr[col] + 1 + *child < end {
                            let next = l_idx[l_ptr[col] + 1 + *child];
                            *child += 1;
                            if marked[next] != k {
                                marked[next] = k;
                                stack.push((next, 0));
                                pushed = true;
                                break;
                            }
                        }
                    }
                    if !pushed {
                        stack.pop();
                        pattern.push(node);
                    }
                }
            }

            // Numeric: x = L \ A(:,k)
            for &i in &pattern {
                x[i] = 0.0;
            }
            for p in a.col_ptr[k]..a.col_ptr[k + 1] {
                x[a.row_idx[p]] = a.values[p];
            }
            for &j in pattern.iter().rev() {
                let col = pinv[j];
                if col == usize::MAX {
                    continue;
                }
                let xj = x[j];
                if xj == 0.0 {
                    continue;
                }
                let end = l_ptr_end(&l_ptr, &l_idx, col);
                for p in l_ptr[col] + 1..end {
                    x[l_idx[p]] -= l_val[p] * xj;
                }
            }

            // Pivot selection among rows not yet pivotal.
            let mut best = usize::MAX;
            let mut best_abs = -1.0;
            for &i in &pattern {
                if pinv[i] == usize::MAX {
                    let v = x[i].abs();
                    if v > best_abs {
                        best_abs = v;
                        best = i;
                    }
                } else {
                    u_idx.push(pinv[i]);
                    u_val.push(x[i]);
                }
            }
            if best == usize::MAX || best_abs <= SINGULAR_PIVOT * scale {
                return Err(Error::Singular);
            }
            if pinv[k] == usize::MAX
                && marked[k] == k
                && x[k].abs() >= DIAGONAL_PREFERENCE * best_abs
            {
                best = k;
            }
            let pivot = x[best];
            u_idx.push(k);
            u_val.push(pivot);
            pinv[best] = k;
            l_idx.push(best);
            l_val.push(1.0);
            for &i in &pattern {
                if pinv[i] == usize::MAX {
                    l_idx.push(i);
                    l_val.push(x[i] / pivot);
                }
                x[i] = 0.0;
            }
        }
        l_ptr.push(l_idx.len());
        u_ptr.push(u_idx.len());
        for r in l_idx.iter_mut() {
            *r = pinv[*r];
        }
        Ok(SparseLu {
            n,
            l_ptr,
            l_idx,
            l_val,
            u_ptr,
            u_idx,
            u_val,
            pinv,
        })
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = vec![0.0; n];
        for (row, &k) in self.pinv.iter().enumerate() {
            x[k] = b[row];
        }
        // L y = P b
        for j in 0..n {
            let xj = x[j];
            if xj != 0.0 {
                for p in self.l_ptr[j] + 1..self.l_ptr[j + 1] {
                    x[self.l_idx[p]] -= self.l_val[p] * xj;
                }
            }
        }
        // U x = y; the diagonal is the last entry of each column
        for j in (0..n).rev() {
            let last = self.u_ptr[j + 1] - 1;
            x[j] /= self.u_val[last];
            let xj = x[j];
            if xj != 0.0 {
                for p in self.u_ptr[j]..last {
                    x[self.u_idx[p]] -= self.u_val[p] * xj;
                }
            }
        }
        x
    }

    /// Solves `A^T x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut z = b.to_vec();
        // U^T z = b (forward)
        for j in 0..n {
            let last = self.u_ptr[j + 1] - 1;
            let mut s = z[j];
            for p in self.u_ptr[j]..last {
                s -= self.u_val[p] * z[self.u_idx[p]];
            }
            z[j] = s / self.u_val[last];
        }
        // L^T w = z (backward)
        for j in (0..n).rev() {
            let mut s = z[j];
            for p in self.l_ptr[j] + 1..self.l_ptr[j + 1] {
                s -= self.l_val[p] * z[self.l_idx[p]];
            }
            z[j] = s;
        }
        self.pinv.iter().map(|&k| z[k]).collect()
    }
}

#[inline]
fn l_ptr_end(l_ptr: &[usize], l_idx: &[usize], col: usize) -> usize {
    if col + 1 < l_ptr.len() {
        l_ptr[col + 1]
    } else {
        l_idx.len()
    }
}

/// Factors `a`, solves `a x = b`, and applies one step of iterative
/// refinement.
pub fn solve_refined(a: &CscMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let lu = SparseLu::factor(a)?;
    Ok(refine(a, &lu, b))
}

pub(crate) fn refine(a: &CscMatrix, lu: &SparseLu, b: &[f64]) -> Vec<f64> {
    let mut x = lu.solve(b);
    let ax = a.mul_vec(&x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, yi)| bi - yi).collect();
    let d = lu.solve(&r);
    for (xi, di) in x.iter_mut().zip(&d) {
        *xi += di;
    }
    x
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}
