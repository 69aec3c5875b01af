//! Damped Newton iteration for regularized p-Laplace type residuals on a
//! bilinear grid, shared by the capacity and Zaremba solvers.

use crate::assembly::{assemble_stiffness_with, load_vector, Quadrature};
use crate::error::{Error, Result};
use crate::linalg::{bicgstab, dot, norm, pcg, Csr};
use crate::Mat2;

const ARMIJO_SLOPE: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;
const CURVATURE: f64 = 0.1;
const MAX_EXPANSIONS: usize = 10;
const MAX_SECANT: usize = 30;
pub(crate) const LINEAR_TOL: f64 = 1e-10;
const LINEAR_MAX_ITER: usize = 20_000;

/// How the gradient `ξ` enters the flux.
#[derive(Debug, Clone)]
pub(crate) enum FluxModel {
    /// `ω s(ξ) ξ`, energy density `ω (|ξ|² + ε²)^{p/2} / p`.
    Isotropic(Vec<f64>),
    /// `s(Mξ) M² ξ`, energy density `(|Mξ|² + ε²)^{p/2} / p`.
    Multiplier(Vec<Mat2>),
    /// `s(ξ) A ξ`; not a gradient field unless `p = 2`.
    Anisotropic(Vec<Mat2>),
}

/// `s_ε(ξ) = (|ξ|² + ε²)^{(p-2)/2}` and its companion `(|ξ|² + ε²)^{(p-4)/2}`.
#[inline]
fn powers(n2: f64, p: f64, eps: f64) -> (f64, f64) {
    if p == 2.0 {
        return (1.0, 0.0);
    }
    let b = n2 + eps * eps;
    if b == 0.0 {
        // only reachable with eps = 0; the flux vanishes regardless
        return (0.0, 0.0);
    }
    let s = b.powf(0.5 * (p - 2.0));
    (s, s / b)
}

#[inline]
fn mv(m: &Mat2, x: [f64; 2]) -> [f64; 2] {
    [m[0][0] * x[0] + m[0][1] * x[1], m[1][0] * x[0] + m[1][1] * x[1]]
}

#[inline]
fn n2(x: [f64; 2]) -> f64 {
    x[0] * x[0] + x[1] * x[1]
}

impl FluxModel {
    pub(crate) fn is_symmetric(&self) -> bool {
        !matches!(self, FluxModel::Anisotropic(_))
    }

    pub(crate) fn flux(&self, k: usize, xi: [f64; 2], p: f64, eps: f64) -> [f64; 2] {
        match self {
            FluxModel::Isotropic(w) => {
                let (s, _) = powers(n2(xi), p, eps);
                [w[k] * s * xi[0], w[k] * s * xi[1]]
            }
            FluxModel::Multiplier(m) => {
                let eta = mv(&m[k], xi);
                let (s, _) = powers(n2(eta), p, eps);
                let f = mv(&m[k], eta);
                [s * f[0], s * f[1]]
            }
            FluxModel::Anisotropic(a) => {
                let (s, _) = powers(n2(xi), p, eps);
                let f = mv(&a[k], xi);
                [s * f[0], s * f[1]]
            }
        }
    }

    fn tangent(&self, k: usize, xi: [f64; 2], p: f64, eps: f64) -> Mat2 {
        match self {
            FluxModel::Isotropic(w) => {
                let (s, t) = powers(n2(xi), p, eps);
                let c = (p - 2.0) * t;
                let w = w[k];
                [
                    [w * (s + c * xi[0] * xi[0]), w * c * xi[0] * xi[1]],
                    [w * c * xi[1] * xi[0], w * (s + c * xi[1] * xi[1])],
                ]
            }
            FluxModel::Multiplier(m) => {
                let m = &m[k];
                let eta = mv(m, xi);
                let (s, t) = powers(n2(eta), p, eps);
                let c = (p - 2.0) * t;
                let inner = [
                    [s + c * eta[0] * eta[0], c * eta[0] * eta[1]],
                    [c * eta[1] * eta[0], s + c * eta[1] * eta[1]],
                ];
                mat_mul(&mat_mul(m, &inner), m)
            }
            FluxModel::Anisotropic(a) => {
                let a = &a[k];
                let (s, t) = powers(n2(xi), p, eps);
                let c = (p - 2.0) * t;
                let ax = mv(a, xi);
                [
                    [s * a[0][0] + c * ax[0] * xi[0], s * a[0][1] + c * ax[0] * xi[1]],
                    [s * a[1][0] + c * ax[1] * xi[0], s * a[1][1] + c * ax[1] * xi[1]],
                ]
            }
        }
    }

    /// Regularized energy density shifted to vanish at `ξ = 0`.
    fn density(&self, k: usize, xi: [f64; 2], p: f64, eps: f64) -> f64 {
        let e = |n2: f64| ((n2 + eps * eps).powf(0.5 * p) - eps.powf(p)) / p;
        match self {
            FluxModel::Isotropic(w) => w[k] * e(n2(xi)),
            FluxModel::Multiplier(m) => e(n2(mv(&m[k], xi))),
            FluxModel::Anisotropic(_) => f64::NAN,
        }
    }
}

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

/// Nonlinear system `R(u) = ∫ (flux(∇u) - flux(G))·∇φ = 0` on free nodes.
/// The datum `G` is regularized with the same `ε` as the unknown, so that
/// `G = ∇w` makes `w` an exact solution at every stage.
#[derive(Debug, Clone)]
pub(crate) struct NonlinearSystem<'a> {
    pub quad: &'a Quadrature,
    pub p: f64,
    pub model: FluxModel,
    /// `G` at the Gauss points; `None` for a homogeneous equation.
    pub data: Option<Vec<[f64; 2]>>,
    pub free: Vec<bool>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NewtonOptions {
    pub tol: f64,
    pub max_newton: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonOutcome {
    pub u: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub final_eps: f64,
}

/// `{1e-2, 1e-4, 1e-6}` for `p ≠ 2`, no regularization otherwise.
pub(crate) fn default_schedule(p: f64) -> Vec<f64> {
    if p == 2.0 {
        vec![0.0]
    } else {
        vec![1e-2, 1e-4, 1e-6]
    }
}

impl NonlinearSystem<'_> {
    pub(crate) fn rhs(&self, eps: f64) -> Vec<f64> {
        match &self.data {
            Some(g) => self.internal_force(g, eps),
            None => vec![0.0; self.quad.grid().node_count()],
        }
    }

    fn gradients(&self, u: &[f64]) -> Vec<[f64; 2]> {
        let grid = self.quad.grid();
        let m = grid.cells();
        let mut out = Vec::with_capacity(self.quad.len());
        for cj in 0..m {
            for ci in 0..m {
                let nodes = grid.cell_nodes(ci, cj);
                for g in 0..4 {
                    let gr = self.quad.shape_grads(g);
                    let mut v = [0.0; 2];
                    for a in 1..4 {
                        let du = u[nodes[a]] - u[nodes[0]];
                        v[0] += gr[a][0] * du;
                        v[1] += gr[a][1] * du;
                    }
                    out.push(v);
                }
            }
        }
        out
    }

    /// Internal force `∫ flux(∇u)·∇φ_a` at every node.
    fn internal_force(&self, grads: &[[f64; 2]], eps: f64) -> Vec<f64> {
        let flux: Vec<[f64; 2]> =
            grads.iter().enumerate().map(|(k, &xi)| self.model.flux(k, xi, self.p, eps)).collect();
        load_vector(self.quad, &flux)
    }

    fn residual(&self, force: &[f64], rhs: &[f64]) -> Vec<f64> {
        force
            .iter()
            .zip(rhs)
            .zip(&self.free)
            .map(|((f, b), &fr)| if fr { f - b } else { 0.0 })
            .collect()
    }

    fn energy(&self, u: &[f64], rhs: &[f64], eps: f64) -> f64 {
        let w = self.quad.weight();
        let grads = self.gradients(u);
        let e: f64 = grads.iter().enumerate().map(|(k, &xi)| self.model.density(k, xi, self.p, eps)).sum();
        w * e - dot(rhs, u)
    }

    fn jacobian(&self, grads: &[[f64; 2]], eps: f64) -> Csr {
        let coeff: Vec<Mat2> =
            grads.iter().enumerate().map(|(k, &xi)| self.model.tangent(k, xi, self.p, eps)).collect();
        assemble_stiffness_with(self.quad, &coeff)
    }

    /// Residual norm relative to the size of the forces in play.
    fn relative(&self, res: &[f64], force: &[f64], rhs: &[f64]) -> f64 {
        let scale = norm(rhs).max(norm(force));
        let r = norm(res);
        if scale > 0.0 {
            r / scale
        } else {
            r
        }
    }

    /// Newton with backtracking through the regularization schedule.
    /// Constrained entries of `u0` are kept fixed.
    pub(crate) fn solve(&self, u0: Vec<f64>, schedule: &[f64], opts: NewtonOptions) -> Result<NewtonOutcome> {
        let mut u = u0;
        let mut total = 0usize;
        let mut rel = f64::INFINITY;
        let mut eps = 0.0;
        for &e in schedule {
            eps = e;
            let (iters, r) = self.solve_at(&mut u, eps, opts)?;
            total += iters;
            rel = r;
        }
        Ok(NewtonOutcome { u, iterations: total, relative_residual: rel, final_eps: eps })
    }

    fn solve_at(&self, u: &mut Vec<f64>, eps: f64, opts: NewtonOptions) -> Result<(usize, f64)> {
        let symmetric = self.model.is_symmetric();
        let rhs = self.rhs(eps);
        let mut grads = self.gradients(u);
        let mut force = self.internal_force(&grads, eps);
        let mut res = self.residual(&force, &rhs);
        let mut rel = self.relative(&res, &force, &rhs);
        let mut energy = if symmetric { self.energy(u, &rhs, eps) } else { 0.5 * dot(&res, &res) };
        for it in 0..opts.max_newton {
            if rel <= opts.tol {
                return Ok((it, rel));
            }
            let jac = self.jacobian(&grads, eps);
            let neg_res: Vec<f64> = res.iter().map(|r| -r).collect();
            let mut d = vec![0.0; u.len()];
            let lin = if symmetric {
                pcg(&jac, &neg_res, &mut d, &self.free, LINEAR_TOL, LINEAR_MAX_ITER)
            } else {
                bicgstab(&jac, &neg_res, &mut d, &self.free, LINEAR_TOL, LINEAR_MAX_ITER)
            };
            if let Err(Error::NoConvergence { last_iterate, .. }) = lin {
                // an inexact direction is still usable by the line search
                d = last_iterate;
            }
            let slope = if symmetric { dot(&res, &d) } else { -dot(&res, &res) };
            let mut alpha = if symmetric { self.line_minimum(u, &d, &rhs, slope, eps) } else { 1.0 };
            let mut accepted = false;
            let res_norm = norm(&res);
            for _ in 0..MAX_HALVINGS {
                let trial: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
                let g_t = self.gradients(&trial);
                let f_t = self.internal_force(&g_t, eps);
                let r_t = self.residual(&f_t, &rhs);
                let e_t = if symmetric { self.energy(&trial, &rhs, eps) } else { 0.5 * dot(&r_t, &r_t) };
                let armijo = e_t <= energy + ARMIJO_SLOPE * alpha * slope;
                let flat = (e_t - energy).abs() <= 1e-13 * energy.abs().max(1e-300)
                    && norm(&r_t) < res_norm;
                if armijo || flat {
                    *u = trial;
                    grads = g_t;
                    force = f_t;
                    res = r_t;
                    energy = e_t;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            rel = self.relative(&res, &force, &rhs);
            if !accepted {
                return Err(Error::NoConvergence { iterations: it + 1, residual: rel, last_iterate: u.clone() });
            }
        }
        if rel <= opts.tol {
            return Ok((opts.max_newton, rel));
        }
        Err(Error::NoConvergence { iterations: opts.max_newton, residual: rel, last_iterate: u.clone() })
    }

    /// Step length along `d` for convex energies. Keeps `1` when the full
    /// step nearly minimizes the energy along the line; otherwise locates
    /// the zero of `φ'(α) = R(u + αd)·d` by bracketing and regula falsi.
    fn line_minimum(&self, u: &[f64], d: &[f64], rhs: &[f64], slope: f64, eps: f64) -> f64 {
        if !(slope < 0.0) {
            return 1.0;
        }
        let dphi = |a: f64| {
            let trial: Vec<f64> = u.iter().zip(d).map(|(x, y)| x + a * y).collect();
            dot(&self.residual(&self.internal_force(&self.gradients(&trial), eps), rhs), d)
        };
        let target = CURVATURE * slope.abs();
        let at_one = dphi(1.0);
        if !at_one.is_finite() || at_one.abs() <= target {
            return 1.0;
        }
        let (mut lo, mut flo, mut hi, mut fhi) = (0.0, slope, 1.0, at_one);
        let mut expansions = 0;
        while fhi < 0.0 {
            if expansions == MAX_EXPANSIONS {
                return hi;
            }
            lo = hi;
            flo = fhi;
            hi *= 2.0;
            fhi = dphi(hi);
            if !fhi.is_finite() {
                return lo;
            }
            expansions += 1;
        }
        // Illinois variant of regula falsi on the monotone φ'
        let mut side = 0i8;
        let mut a = hi;
        for _ in 0..MAX_SECANT {
            a = (lo * fhi - hi * flo) / (fhi - flo);
            let fa = dphi(a);
            if !fa.is_finite() {
                return lo.max(f64::MIN_POSITIVE);
            }
            if fa.abs() <= target {
                return a;
            }
            if fa < 0.0 {
                lo = a;
                flo = fa;
                if side == -1 {
                    fhi *= 0.5;
                }
                side = -1;
            } else {
                hi = a;
                fhi = fa;
                if side == 1 {
                    flo *= 0.5;
                }
                side = 1;
            }
        }
        a
    }

    #[cfg(test)]
    pub(crate) fn energy_at(&self, u: &[f64], eps: f64) -> f64 {
        self.energy(u, &self.rhs(eps), eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Cube};

    /// Finite-difference check of the tangent of every flux model.
    #[test]
    fn tangents_match_finite_differences() {
        let m: Mat2 = [[1.3, 0.2], [0.2, 0.7]];
        let models = [
            FluxModel::Isotropic(vec![1.7]),
            FluxModel::Multiplier(vec![m]),
            FluxModel::Anisotropic(vec![m]),
        ];
        for p in [1.5, 3.0] {
            for model in &models {
                let xi = [0.4, -0.9];
                let t = model.tangent(0, xi, p, 1e-2);
                let h = 1e-6;
                for c in 0..2 {
                    let mut xp = xi;
                    let mut xm = xi;
                    xp[c] += h;
                    xm[c] -= h;
                    let (fp, fm) = (model.flux(0, xp, p, 1e-2), model.flux(0, xm, p, 1e-2));
                    for r in 0..2 {
                        let fd = (fp[r] - fm[r]) / (2.0 * h);
                        assert!((fd - t[r][c]).abs() < 1e-6, "{model:?} p={p}");
                    }
                }
            }
        }
    }

    #[test]
    fn flux_is_gradient_of_density() {
        let m: Mat2 = [[1.3, 0.2], [0.2, 0.7]];
        for model in [FluxModel::Isotropic(vec![0.6]), FluxModel::Multiplier(vec![m])] {
            let xi = [0.3, 0.5];
            let f = model.flux(0, xi, 1.5, 1e-3);
            let h = 1e-6;
            for c in 0..2 {
                let mut xp = xi;
                let mut xm = xi;
                xp[c] += h;
                xm[c] -= h;
                let fd = (model.density(0, xp, 1.5, 1e-3) - model.density(0, xm, 1.5, 1e-3)) / (2.0 * h);
                assert!((fd - f[c]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn energy_decreases_along_iterations() {
        let g = build_grid(Cube::unit_square(), 8).unwrap();
        let quad = Quadrature::new(&g);
        let free: Vec<bool> = (0..g.node_count()).map(|k| g.node_ij(k).0 != 0).collect();
        let data: Vec<[f64; 2]> = quad.points().iter().map(|x| [x[1].cos(), x[0]]).collect();
        let sys = NonlinearSystem {
            quad: &quad,
            p: 3.0,
            model: FluxModel::Isotropic(vec![1.0; quad.len()]),
            data: Some(data),
            free,
        };
        let mut u = vec![0.0; g.node_count()];
        let mut last = sys.energy_at(&u, 1e-2);
        for _ in 0..6 {
            let out = sys.solve(u.clone(), &[1e-2], NewtonOptions { tol: 0.0, max_newton: 1 });
            let next = match out {
                Ok(o) => o.u,
                Err(Error::NoConvergence { last_iterate, .. }) => last_iterate,
                Err(e) => panic!("{e}"),
            };
            let e = sys.energy_at(&next, 1e-2);
            assert!(e <= last + 1e-14 * last.abs());
            last = e;
            u = next;
        }
    }
}
