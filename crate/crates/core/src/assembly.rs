//! Gauss quadrature, bilinear fields and weighted operators.
//!
//! Every cell carries four Gauss points ordered `(x, y)` y-major:
//! `(g0, g0), (g1, g0), (g0, g1), (g1, g1)` in cell-local coordinates.
//! Quadrature data is stored cell-major, cells in row order.

use crate::error::{Error, Result};
use crate::geometry::{Cube, Grid};
use crate::linalg::Csr;
use crate::weights::{MatrixWeight, ScalarWeight};
use crate::{Mat2, Point};

/// Two-point Gauss abscissae on `[0, 1]`.
pub const GAUSS_1D: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

/// Shape function values at the four Gauss points, local node order
/// `(0,0), (1,0), (0,1), (1,1)`.
fn shape_values() -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for (g, row) in out.iter_mut().enumerate() {
        let (x, y) = (GAUSS_1D[g % 2], GAUSS_1D[g / 2]);
        *row = [(1.0 - x) * (1.0 - y), x * (1.0 - y), (1.0 - x) * y, x * y];
    }
    out
}

/// Shape function gradients on the unit reference cell.
fn shape_gradients() -> [[[f64; 2]; 4]; 4] {
    let mut out = [[[0.0; 2]; 4]; 4];
    for (g, row) in out.iter_mut().enumerate() {
        let (x, y) = (GAUSS_1D[g % 2], GAUSS_1D[g / 2]);
        *row = [[-(1.0 - y), -(1.0 - x)], [1.0 - y, -x], [-y, 1.0 - x], [y, x]];
    }
    out
}

/// Gauss point layout of a grid.
#[derive(Debug, Clone)]
pub struct Quadrature {
    grid: Grid,
    points: Vec<Point>,
    values: [[f64; 4]; 4],
    grads: [[[f64; 2]; 4]; 4],
}

impl Quadrature {
    pub fn new(grid: &Grid) -> Self {
        let h = grid.h();
        let lo = grid.cube().lower();
        let m = grid.cells();
        let mut points = Vec::with_capacity(4 * m * m);
        for cj in 0..m {
            for ci in 0..m {
                for g in 0..4 {
                    points.push([
                        lo[0] + (ci as f64 + GAUSS_1D[g % 2]) * h,
                        lo[1] + (cj as f64 + GAUSS_1D[g / 2]) * h,
                    ]);
                }
            }
        }
        let inv_h = 1.0 / h;
        let mut grads = shape_gradients();
        for row in grads.iter_mut() {
            for v in row.iter_mut() {
                v[0] *= inv_h;
                v[1] *= inv_h;
            }
        }
        Quadrature { grid: *grid, points, values: shape_values(), grads }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Gauss weight, identical for every point: `h² / 4`.
    pub fn weight(&self) -> f64 {
        let h = self.grid.h();
        0.25 * h * h
    }

    /// Cell `(ci, cj)` of the flat quadrature index `q`.
    #[inline]
    pub fn cell_of(&self, q: usize) -> (usize, usize) {
        let c = q / 4;
        (c % self.grid.cells(), c / self.grid.cells())
    }

    /// Gradients of the four local shape functions at local Gauss point `g`.
    #[inline]
    pub fn shape_grads(&self, g: usize) -> &[[f64; 2]; 4] {
        &self.grads[g]
    }

    pub fn eval_scalar(&self, w: &ScalarWeight) -> Result<Vec<f64>> {
        self.points
            .iter()
            .map(|&x| w.eval(x).map_err(|_| Error::QuadratureSingularity(x)))
            .collect()
    }

    pub fn eval_matrix(&self, w: &MatrixWeight) -> Result<Vec<Mat2>> {
        self.points
            .iter()
            .map(|&x| w.eval(x).map_err(|_| Error::QuadratureSingularity(x)))
            .collect()
    }

    /// Per-point mask selecting cells whose centre lies in the closed cube.
    pub fn cube_mask(&self, cube: &Cube) -> Vec<bool> {
        let h = self.grid.h();
        let lo = self.grid.cube().lower();
        let m = self.grid.cells();
        let mut mask = Vec::with_capacity(self.len());
        for cj in 0..m {
            for ci in 0..m {
                let c = [lo[0] + (ci as f64 + 0.5) * h, lo[1] + (cj as f64 + 0.5) * h];
                let inside = cube.contains_closed(c, 1e-9 * h);
                mask.extend_from_slice(&[inside; 4]);
            }
        }
        mask
    }
}

/// Nodal values of a bilinear field.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl DiscreteField {
    pub fn zeros(grid: &Grid) -> Self {
        DiscreteField { grid: *grid, values: vec![0.0; grid.node_count()] }
    }

    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::param(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.node_count()
            )));
        }
        Ok(DiscreteField { grid: *grid, values })
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(grid: &Grid, f: impl Fn(Point) -> f64) -> Self {
        let values = (0..grid.node_count()).map(|k| f(grid.node_coords(k))).collect();
        DiscreteField { grid: *grid, values }
    }

    /// Values at the Gauss points of `quad`.
    pub fn at_quadpoints(&self, quad: &Quadrature) -> Vec<f64> {
        let m = self.grid.cells();
        let mut out = Vec::with_capacity(quad.len());
        for cj in 0..m {
            for ci in 0..m {
                let nodes = self.grid.cell_nodes(ci, cj);
                for g in 0..4 {
                    let s: f64 = (0..4).map(|a| quad.values[g][a] * self.values[nodes[a]]).sum();
                    out.push(s);
                }
            }
        }
        out
    }

    /// Prolongation onto the uniformly refined grid (exact for bilinears).
    pub fn prolongate(&self) -> DiscreteField {
        let fine = self.grid.refine();
        let m = self.grid.cells();
        let mut v = vec![0.0; fine.node_count()];
        for j in 0..=2 * m {
            for i in 0..=2 * m {
                let (i0, j0) = (i / 2, j / 2);
                let (i1, j1) = ((i + 1) / 2, (j + 1) / 2);
                let c = |a: usize, b: usize| self.values[self.grid.node_index(a, b)];
                v[fine.node_index(i, j)] = 0.25 * (c(i0, j0) + c(i1, j0) + c(i0, j1) + c(i1, j1));
            }
        }
        DiscreteField { grid: fine, values: v }
    }
}

/// A vector value at every Gauss point of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub values: Vec<[f64; 2]>,
}

impl VectorField {
    pub fn from_fn(quad: &Quadrature, f: impl Fn(Point) -> [f64; 2]) -> Self {
        VectorField { grid: quad.grid, values: quad.points.iter().map(|&x| f(x)).collect() }
    }

    pub fn zeros(quad: &Quadrature) -> Self {
        VectorField { grid: quad.grid, values: vec![[0.0; 2]; quad.len()] }
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v[0].hypot(v[1])).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v[0] == 0.0 && v[1] == 0.0)
    }
}

/// Exact gradient of the bilinear interpolant at every Gauss point.
pub fn gradient_at_quadpoints(u: &DiscreteField, quad: &Quadrature) -> VectorField {
    let grid = &u.grid;
    let m = grid.cells();
    let mut out = Vec::with_capacity(quad.len());
    for cj in 0..m {
        for ci in 0..m {
            let nodes = grid.cell_nodes(ci, cj);
            for g in 0..4 {
                let gr = &quad.grads[g];
                // shape gradients sum to zero; differencing keeps constants exact
                let mut v = [0.0; 2];
                for a in 1..4 {
                    let du = u.values[nodes[a]] - u.values[nodes[0]];
                    v[0] += gr[a][0] * du;
                    v[1] += gr[a][1] * du;
                }
                out.push(v);
            }
        }
    }
    VectorField { grid: *grid, values: out }
}

/// `Σ_g w_g |f_g|^s μ_g` over points selected by `mask`.
pub fn integrate_power(quad: &Quadrature, magnitudes: &[f64], mu: &[f64], s: f64, mask: Option<&[bool]>) -> f64 {
    let w = quad.weight();
    let mut total = 0.0;
    for (k, (&f, &m)) in magnitudes.iter().zip(mu).enumerate() {
        if mask.map_or(true, |mk| mk[k]) {
            total += f.abs().powf(s) * m;
        }
    }
    w * total
}

/// A field whose pointwise magnitude enters a weighted norm.
#[derive(Debug, Clone, Copy)]
pub enum NormInput<'a> {
    Nodal(&'a DiscreteField),
    Vector(&'a VectorField),
}

impl NormInput<'_> {
    fn grid(&self) -> &Grid {
        match self {
            NormInput::Nodal(u) => &u.grid,
            NormInput::Vector(v) => &v.grid,
        }
    }

    fn magnitudes(&self, quad: &Quadrature) -> Vec<f64> {
        match self {
            NormInput::Nodal(u) => u.at_quadpoints(quad),
            NormInput::Vector(v) => v.magnitudes(),
        }
    }
}

/// `(∫ |f|^s μ)^{1/s}` with 2x2 Gauss quadrature.
pub fn weighted_norm(f: NormInput<'_>, w: &ScalarWeight, s: f64) -> Result<f64> {
    if !(s >= 1.0) {
        return Err(Error::param(format!("norm exponent {s} must be at least 1")));
    }
    let quad = Quadrature::new(f.grid());
    let mu = quad.eval_scalar(w)?;
    Ok(integrate_power(&quad, &f.magnitudes(&quad), &mu, s, None).powf(1.0 / s))
}

/// `((1/μ(Q_r)) ∫ |f / r|^s μ)^{1/s}` where `Q_r` is the grid cube.
pub fn normalized_norm(f: NormInput<'_>, w: &ScalarWeight, s: f64) -> Result<f64> {
    let quad = Quadrature::new(f.grid());
    let mu = quad.eval_scalar(w)?;
    let r = f.grid().cube().halfwidth;
    let vol = quad.weight() * mu.iter().sum::<f64>();
    if vol <= 0.0 {
        return Err(Error::EmptyRegion);
    }
    let plain = integrate_power(&quad, &f.magnitudes(&quad), &mu, s, None);
    Ok((plain / vol / r.powf(s)).powf(1.0 / s))
}

/// `K_ab = Σ_g w_g ∇φ_a · D_g ∇φ_b` for one coefficient matrix per Gauss
/// point; `D_g` need not be symmetric.
pub fn assemble_stiffness_with(quad: &Quadrature, coeff: &[Mat2]) -> Csr {
    let grid = quad.grid();
    let m = grid.cells();
    let w = quad.weight();
    let mut k = Csr::q1_pattern(grid);
    for cj in 0..m {
        for ci in 0..m {
            let nodes = grid.cell_nodes(ci, cj);
            let base = 4 * (cj * m + ci);
            let mut local = [[0.0; 4]; 4];
            for g in 0..4 {
                let d = &coeff[base + g];
                let gr = &quad.grads[g];
                for b in 0..4 {
                    let db = [d[0][0] * gr[b][0] + d[0][1] * gr[b][1], d[1][0] * gr[b][0] + d[1][1] * gr[b][1]];
                    for a in 0..4 {
                        local[a][b] += w * (gr[a][0] * db[0] + gr[a][1] * db[1]);
                    }
                }
            }
            for a in 0..4 {
                for b in 0..4 {
                    k.add(nodes[a], nodes[b], local[a][b]);
                }
            }
        }
    }
    k
}

/// `M_ab = Σ_g w_g φ_a φ_b c_g`.
pub fn assemble_mass_with(quad: &Quadrature, coeff: &[f64]) -> Csr {
    let grid = quad.grid();
    let m = grid.cells();
    let w = quad.weight();
    let mut mass = Csr::q1_pattern(grid);
    for cj in 0..m {
        for ci in 0..m {
            let nodes = grid.cell_nodes(ci, cj);
            let base = 4 * (cj * m + ci);
            for a in 0..4 {
                for b in 0..4 {
                    let s: f64 = (0..4).map(|g| quad.values[g][a] * quad.values[g][b] * coeff[base + g]).sum();
                    mass.add(nodes[a], nodes[b], w * s);
                }
            }
        }
    }
    mass
}

pub fn assemble_weighted_stiffness(grid: &Grid, w: &MatrixWeight) -> Result<Csr> {
    let quad = Quadrature::new(grid);
    Ok(assemble_stiffness_with(&quad, &quad.eval_matrix(w)?))
}

pub fn assemble_weighted_mass(grid: &Grid, w: &ScalarWeight) -> Result<Csr> {
    let quad = Quadrature::new(grid);
    Ok(assemble_mass_with(&quad, &quad.eval_scalar(w)?))
}

/// `b_a = Σ_g w_g f_g · ∇φ_a`.
pub fn load_vector(quad: &Quadrature, flux: &[[f64; 2]]) -> Vec<f64> {
    let grid = quad.grid();
    let m = grid.cells();
    let w = quad.weight();
    let mut b = vec![0.0; grid.node_count()];
    for cj in 0..m {
        for ci in 0..m {
            let nodes = grid.cell_nodes(ci, cj);
            let base = 4 * (cj * m + ci);
            for g in 0..4 {
                let f = flux[base + g];
                let gr = &quad.grads[g];
                for a in 0..4 {
                    b[nodes[a]] += w * (gr[a][0] * f[0] + gr[a][1] * f[1]);
                }
            }
        }
    }
    b
}

/// `b_a = Σ_g w_g c_g φ_a`.
pub fn load_vector_scalar(quad: &Quadrature, c: &[f64]) -> Vec<f64> {
    let grid = quad.grid();
    let m = grid.cells();
    let w = quad.weight();
    let mut b = vec![0.0; grid.node_count()];
    for cj in 0..m {
        for ci in 0..m {
            let nodes = grid.cell_nodes(ci, cj);
            let base = 4 * (cj * m + ci);
            for g in 0..4 {
                for a in 0..4 {
                    b[nodes[a]] += w * c[base + g] * quad.values[g][a];
                }
            }
        }
    }
    b
}
