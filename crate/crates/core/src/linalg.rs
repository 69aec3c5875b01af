//! Compressed sparse row matrices on the bilinear 9-point pattern and
//! Jacobi-preconditioned Krylov solvers with eliminated constraints.
//!
//! All solvers take a `free` mask: entries with `free[i] == false` are held
//! at their current value in `x` and their equations are dropped.

use crate::error::{Error, Result};
use crate::geometry::Grid;

#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    /// Zero matrix with the nonzero pattern of bilinear elements on `grid`.
    pub fn q1_pattern(grid: &Grid) -> Self {
        let np = grid.nodes_per_axis() as isize;
        let n = grid.node_count();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(9 * n);
        row_ptr.push(0);
        for j in 0..np {
            for i in 0..np {
                for dj in -1..=1 {
                    for di in -1..=1 {
                        let (ii, jj) = (i + di, j + dj);
                        if ii >= 0 && jj >= 0 && ii < np && jj < np {
                            col_idx.push((jj * np + ii) as usize);
                        }
                    }
                }
                row_ptr.push(col_idx.len());
            }
        }
        let values = vec![0.0; col_idx.len()];
        Csr { n, row_ptr, col_idx, values }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    fn position(&self, r: usize, c: usize) -> usize {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        match self.col_idx[a..b].binary_search(&c) {
            Ok(k) => a + k,
            Err(_) => panic!("entry ({r}, {c}) outside the sparsity pattern"),
        }
    }

    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let k = self.position(r, c);
        self.values[k] += v;
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        match self.col_idx[a..b].binary_search(&c) {
            Ok(k) => self.values[a + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yr = s;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    /// `xᵀ A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.matvec(y))
    }

    /// `a A + b B` for matrices sharing a pattern.
    pub fn combine(&self, a: f64, other: &Csr, b: f64) -> Csr {
        assert_eq!(self.col_idx, other.col_idx, "patterns differ");
        let mut out = self.clone();
        for (v, w) in out.values.iter_mut().zip(&other.values) {
            *v = a * *v + b * w;
        }
        out
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut m: f64 = 0.0;
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                m = m.max((self.values[k] - self.get(c, r)).abs());
            }
        }
        m
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovStats {
    pub iterations: usize,
    /// Final residual relative to the constrained right-hand side.
    pub relative_residual: f64,
}

/// Masked residual `b - A x` restricted to free entries.
fn masked_residual(a: &Csr, b: &[f64], x: &[f64], free: &[bool]) -> Vec<f64> {
    let ax = a.matvec(x);
    b.iter()
        .zip(&ax)
        .zip(free)
        .map(|((bi, axi), &f)| if f { bi - axi } else { 0.0 })
        .collect()
}

fn masked_apply(a: &Csr, v: &[f64], free: &[bool], out: &mut [f64]) {
    a.matvec_into(v, out);
    for (o, &f) in out.iter_mut().zip(free) {
        if !f {
            *o = 0.0;
        }
    }
}

fn jacobi(a: &Csr, free: &[bool]) -> Vec<f64> {
    a.diagonal()
        .iter()
        .zip(free)
        .map(|(&d, &f)| if f && d != 0.0 { 1.0 / d } else { 0.0 })
        .collect()
}

/// Norm of the right-hand side after moving the constrained columns over.
fn effective_rhs_norm(a: &Csr, b: &[f64], x: &[f64], free: &[bool]) -> f64 {
    let fixed: Vec<f64> = x.iter().zip(free).map(|(&v, &f)| if f { 0.0 } else { v }).collect();
    norm(&masked_residual(a, b, &fixed, free))
}

/// Preconditioned conjugate gradients for symmetric positive definite `A`.
pub fn pcg(a: &Csr, b: &[f64], x: &mut [f64], free: &[bool], tol: f64, max_iter: usize) -> Result<KrylovStats> {
    let bnorm = effective_rhs_norm(a, b, x, free);
    if bnorm == 0.0 {
        for (xi, &f) in x.iter_mut().zip(free) {
            if f {
                *xi = 0.0;
            }
        }
        return Ok(KrylovStats { iterations: 0, relative_residual: 0.0 });
    }
    let dinv = jacobi(a, free);
    let mut r = masked_residual(a, b, x, free);
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; x.len()];
    let mut rz = dot(&r, &z);
    let mut rel = norm(&r) / bnorm;
    for it in 0..max_iter {
        if rel <= tol {
            return Ok(KrylovStats { iterations: it, relative_residual: rel });
        }
        masked_apply(a, &p, free, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..x.len() {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..x.len() {
            p[i] = z[i] + beta * p[i];
        }
        rel = norm(&r) / bnorm;
    }
    if rel <= tol {
        return Ok(KrylovStats { iterations: max_iter, relative_residual: rel });
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: rel, last_iterate: x.to_vec() })
}

/// Jacobi-preconditioned BiCGSTAB for general nonsingular `A`.
pub fn bicgstab(
    a: &Csr,
    b: &[f64],
    x: &mut [f64],
    free: &[bool],
    tol: f64,
    max_iter: usize,
) -> Result<KrylovStats> {
    let bnorm = effective_rhs_norm(a, b, x, free);
    if bnorm == 0.0 {
        for (xi, &f) in x.iter_mut().zip(free) {
            if f {
                *xi = 0.0;
            }
        }
        return Ok(KrylovStats { iterations: 0, relative_residual: 0.0 });
    }
    let n = x.len();
    let dinv = jacobi(a, free);
    let mut r = masked_residual(a, b, x, free);
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut zs = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut rel = norm(&r) / bnorm;
    for it in 0..max_iter {
        if rel <= tol {
            return Ok(KrylovStats { iterations: it, relative_residual: rel });
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = dinv[i] * p[i];
        }
        masked_apply(a, &y, free, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 {
            break;
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / bnorm <= tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            r.copy_from_slice(&s);
            rel = norm(&r) / bnorm;
            continue;
        }
        for i in 0..n {
            zs[i] = dinv[i] * s[i];
        }
        masked_apply(a, &zs, free, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            break;
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * y[i] + omega * zs[i];
            r[i] = s[i] - omega * t[i];
        }
        rel = norm(&r) / bnorm;
        if omega == 0.0 {
            break;
        }
    }
    // Recompute to guard against drift of the recursive residual.
    let rel_true = norm(&masked_residual(a, b, x, free)) / bnorm;
    if rel_true <= tol * 10.0 {
        return Ok(KrylovStats { iterations: max_iter, relative_residual: rel_true });
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: rel_true, last_iterate: x.to_vec() })
}
