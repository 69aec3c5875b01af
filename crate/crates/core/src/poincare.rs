//! Weighted Sobolev-Poincaré constants on cubes, their comparison with
//! capacities, and empirical capacity-density checks for Dirichlet sets.
//!
//! For a grid on `Q_r` and a node set `K` the constant is
//!
//! ```text
//! C = sup_u [⨍ |u/r|^p μ]^{1/p} / [⨍ |∇u|^q μ]^{1/q}
//! ```
//!
//! over bilinear `u` vanishing on `K` and free on `∂Q_r`, averages taken
//! with respect to `μ(Q_r)`.

use rayon::prelude::*;

use crate::assembly::{
    assemble_mass_with, assemble_stiffness_with, gradient_at_quadpoints, integrate_power, load_vector,
    load_vector_scalar, DiscreteField, Quadrature,
};
use crate::capacity::{compute_capacity, CapacityOptions, CapacityProblem};
use crate::error::{Error, Result};
use crate::geometry::{Cube, Grid, NodeSet, SetGeometry};
use crate::linalg::{dot, norm, pcg, Csr};
use crate::weights::{weighted_measure, ScalarWeight};
use crate::{Mat2, Point};

const INNER_TOL: f64 = 1e-12;
const INNER_MAX_ITER: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoincareMethod {
    Eigen,
    CandidateAscent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    ExactDiscrete,
    LowerBound,
}

#[derive(Debug, Clone)]
pub struct PoincareResult {
    pub c: f64,
    pub method: PoincareMethod,
    pub maximizer: DiscreteField,
    pub bound_kind: BoundKind,
    pub iterations: usize,
    /// `‖Su - λMu‖ / ‖Mu‖` for the eigen method, zero otherwise.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincareOptions {
    pub eig_tol: f64,
    pub max_iter: usize,
    pub ascent_iters: usize,
    pub capacity: CapacityOptions,
}

impl Default for PoincareOptions {
    fn default() -> Self {
        PoincareOptions { eig_tol: 1e-8, max_iter: 2000, ascent_iters: 200, capacity: CapacityOptions::default() }
    }
}

#[derive(Debug)]
struct Operators {
    quad: Quadrature,
    mu: Vec<f64>,
    stiffness: Csr,
    mass: Csr,
    mu_q: f64,
}

impl Operators {
    fn new(grid: &Grid, w: &ScalarWeight) -> Result<Self> {
        let quad = Quadrature::new(grid);
        let mu = quad.eval_scalar(w)?;
        let iso: Vec<Mat2> = mu.iter().map(|&v| [[v, 0.0], [0.0, v]]).collect();
        let stiffness = assemble_stiffness_with(&quad, &iso);
        let mass = assemble_mass_with(&quad, &mu);
        let mu_q = quad.weight() * mu.iter().sum::<f64>();
        if mu_q <= 0.0 {
            return Err(Error::EmptyRegion);
        }
        Ok(Operators { quad, mu, stiffness, mass, mu_q })
    }

    fn r(&self) -> f64 {
        self.quad.grid().cube().halfwidth
    }

    /// `log` of the normalized ratio.
    fn log_ratio(&self, u: &[f64], p: f64, q: f64) -> f64 {
        let f = DiscreteField { grid: *self.quad.grid(), values: u.to_vec() };
        let num = integrate_power(&self.quad, &f.at_quadpoints(&self.quad), &self.mu, p, None);
        let grad = gradient_at_quadpoints(&f, &self.quad);
        let den = integrate_power(&self.quad, &grad.magnitudes(), &self.mu, q, None);
        (num / self.mu_q).ln() / p - (den / self.mu_q).ln() / q - self.r().ln()
    }

    /// Gradient of `log_ratio` with respect to nodal values.
    fn log_ratio_gradient(&self, u: &[f64], p: f64, q: f64) -> Vec<f64> {
        let f = DiscreteField { grid: *self.quad.grid(), values: u.to_vec() };
        let vals = f.at_quadpoints(&self.quad);
        let grads = gradient_at_quadpoints(&f, &self.quad).values;
        let spow = |v: f64, e: f64| if v == 0.0 { 0.0 } else { v.abs().powf(e - 2.0) * v };
        let cn: Vec<f64> = vals.iter().zip(&self.mu).map(|(&v, &m)| spow(v, p) * m).collect();
        let cd: Vec<[f64; 2]> = grads
            .iter()
            .zip(&self.mu)
            .map(|(g, &m)| {
                let n = g[0].hypot(g[1]);
                if n == 0.0 {
                    [0.0, 0.0]
                } else {
                    let s = n.powf(q - 2.0) * m;
                    [s * g[0], s * g[1]]
                }
            })
            .collect();
        let num = integrate_power(&self.quad, &vals, &self.mu, p, None);
        let den = integrate_power(&self.quad, &grads.iter().map(|g| g[0].hypot(g[1])).collect::<Vec<_>>(), &self.mu, q, None);
        let gn = load_vector_scalar(&self.quad, &cn);
        let gd = load_vector(&self.quad, &cd);
        gn.iter().zip(&gd).map(|(a, b)| a / num - b / den).collect()
    }
}

fn validate_exponents(p: f64, q: f64) -> Result<()> {
    if !(p > 1.0) {
        return Err(Error::param(format!("p = {p} must exceed 1")));
    }
    if !(q > 1.0 && q <= p) {
        return Err(Error::param(format!("q = {q} must lie in (1, p]")));
    }
    Ok(())
}

/// Smallest generalized eigenpair of `(S, M)` on free nodes by inverse iteration.
fn inverse_iteration(ops: &Operators, free: &[bool], opts: &PoincareOptions) -> Result<(f64, Vec<f64>, usize, f64)> {
    let n = free.len();
    let mut u: Vec<f64> = free.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
    let mask = |v: &mut Vec<f64>| v.iter_mut().zip(free).for_each(|(x, &f)| if !f { *x = 0.0 });
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let b = ops.mass.matvec(&u);
        let mut x = vec![0.0; n];
        pcg(&ops.stiffness, &b, &mut x, free, INNER_TOL, INNER_MAX_ITER)?;
        mask(&mut x);
        let mnorm = ops.mass.bilinear(&x, &x).sqrt();
        u = x.iter().map(|v| v / mnorm).collect();
        let su = ops.stiffness.matvec(&u);
        let mu = ops.mass.matvec(&u);
        let lambda = dot(&su, &u);
        let mut r: Vec<f64> = su.iter().zip(&mu).map(|(a, b)| a - lambda * b).collect();
        mask(&mut r);
        let mut mu_f = mu;
        mask(&mut mu_f);
        residual = norm(&r) / norm(&mu_f);
        if residual <= opts.eig_tol {
            return Ok((lambda, u, it, residual));
        }
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual, last_iterate: u })
}

/// Maximize the ratio from `u0` by stiffness-preconditioned ascent on its log.
fn ascend(ops: &Operators, free: &[bool], p: f64, q: f64, u0: Vec<f64>, iters: usize) -> Result<(f64, Vec<f64>)> {
    let n = free.len();
    let mut u = u0;
    let mut val = ops.log_ratio(&u, p, q);
    if !val.is_finite() {
        return Ok((f64::NEG_INFINITY, u));
    }
    let mut alpha = 0.25;
    for _ in 0..iters {
        let mut g = ops.log_ratio_gradient(&u, p, q);
        g.iter_mut().zip(free).for_each(|(x, &f)| if !f { *x = 0.0 });
        let mut d = vec![0.0; n];
        pcg(&ops.stiffness, &g, &mut d, free, 1e-10, INNER_MAX_ITER)?;
        let dn = norm(&d);
        if dn == 0.0 {
            break;
        }
        let scale = norm(&u) / dn;
        let mut improved = false;
        while alpha > 1e-10 {
            let trial: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + alpha * scale * b).collect();
            let tv = ops.log_ratio(&trial, p, q);
            if tv.is_finite() && tv > val {
                improved = tv - val > 1e-13 * val.abs().max(1.0);
                u = trial;
                val = tv;
                alpha = (2.0 * alpha).min(1.0);
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok((val, u))
}

pub fn poincare_constant(
    grid: &Grid,
    k: &NodeSet,
    w: &ScalarWeight,
    p: f64,
    q: f64,
    opts: &PoincareOptions,
) -> Result<PoincareResult> {
    poincare_impl(grid, k, w, p, q, None, opts)
}

fn poincare_impl(
    grid: &Grid,
    k: &NodeSet,
    w: &ScalarWeight,
    p: f64,
    q: f64,
    potential: Option<&DiscreteField>,
    opts: &PoincareOptions,
) -> Result<PoincareResult> {
    validate_exponents(p, q)?;
    k.validate(grid)?;
    if k.is_empty() {
        return Err(Error::EmptyConstraintSet);
    }
    let exact = p == 2.0 && q == 2.0;
    let (method, bound_kind) = if exact {
        (PoincareMethod::Eigen, BoundKind::ExactDiscrete)
    } else {
        (PoincareMethod::CandidateAscent, BoundKind::LowerBound)
    };
    if k.len() == grid.node_count() {
        return Ok(PoincareResult {
            c: 0.0,
            method,
            maximizer: DiscreteField::zeros(grid),
            bound_kind,
            iterations: 0,
            residual: 0.0,
        });
    }
    let ops = Operators::new(grid, w)?;
    let kmask = k.mask(grid);
    let free: Vec<bool> = kmask.iter().map(|&b| !b).collect();
    let (lambda, eig, iterations, residual) = inverse_iteration(&ops, &free, opts)?;
    let r = grid.cube().halfwidth;
    if exact {
        return Ok(PoincareResult {
            c: 1.0 / (r * lambda.sqrt()),
            method,
            maximizer: DiscreteField { grid: *grid, values: eig },
            bound_kind,
            iterations,
            residual,
        });
    }

    let mut candidates = vec![eig];
    let owned;
    let potential = match potential {
        Some(pot) => Some(pot),
        None => {
            owned = outer_potential(grid, k, w, q, &opts.capacity).ok();
            owned.as_ref()
        }
    };
    if let Some(pot) = potential {
        let restricted: Option<Vec<f64>> = (0..grid.node_count())
            .map(|i| pot.grid.node_at(grid.node_coords(i)).map(|j| if kmask[i] { 0.0 } else { 1.0 - pot.values[j] }))
            .collect();
        if let Some(c) = restricted {
            candidates.push(c);
        }
    }
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for c in candidates {
        let (v, u) = ascend(&ops, &free, p, q, c, opts.ascent_iters)?;
        if v > best.0 {
            best = (v, u);
        }
    }
    Ok(PoincareResult {
        c: best.0.exp(),
        method,
        maximizer: DiscreteField { grid: *grid, values: best.1 },
        bound_kind,
        iterations,
        residual: 0.0,
    })
}

/// The grid on `Q_{2r}` with the same spacing and the same centre.
fn doubled_grid(grid: &Grid) -> Result<Grid> {
    let c = grid.cube();
    Grid::new(Cube { center: c.center, halfwidth: 2.0 * c.halfwidth }, 2 * grid.cells())
}

/// Capacitary potential of `K` in `Q_{2r}` at matched spacing.
fn outer_capacity(grid: &Grid, k: &NodeSet, w: &ScalarWeight, q: f64, opts: &CapacityOptions) -> Result<crate::CapacityResult> {
    let outer = doubled_grid(grid)?;
    let k2 = k.transfer(grid, &outer)?;
    compute_capacity(&CapacityProblem { grid: outer, q, weight: w.clone(), k: k2 }, opts)
}

fn outer_potential(grid: &Grid, k: &NodeSet, w: &ScalarWeight, q: f64, opts: &CapacityOptions) -> Result<DiscreteField> {
    outer_capacity(grid, k, w, q, opts).map(|r| r.potential)
}

#[derive(Debug, Clone)]
pub struct ComparabilityReport {
    pub c: f64,
    pub bound_kind: BoundKind,
    pub capacity: f64,
    /// `μ(Q_{2r})`
    pub mu_q2r: f64,
    /// `C r (Cap / μ(Q_{2r}))^{1/q}`
    pub ratio: f64,
}

/// `C · r · (Cap_{q,μ}(K, Q_{2r}) / μ(Q_{2r}))^{1/q}` with `C` from the
/// grid on `Q_r` and the capacity on the concentric `Q_{2r}` grid at the
/// same spacing (requires an even number of cells).
pub fn comparability_ratio(
    grid: &Grid,
    k: &NodeSet,
    w: &ScalarWeight,
    p: f64,
    q: f64,
    opts: &PoincareOptions,
) -> Result<ComparabilityReport> {
    validate_exponents(p, q)?;
    let cap = outer_capacity(grid, k, w, q, &opts.capacity)?;
    let pr = poincare_impl(grid, k, w, p, q, Some(&cap.potential), opts)?;
    let outer = cap.potential.grid;
    let mu_q2r = weighted_measure(w, outer.cube(), outer.cells())?;
    let r = grid.cube().halfwidth;
    let ratio = pr.c * r * (cap.value / mu_q2r).powf(1.0 / q);
    Ok(ComparabilityReport { c: pr.c, bound_kind: pr.bound_kind, capacity: cap.value, mu_q2r, ratio })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenSample {
    pub center: Point,
    pub r: f64,
    pub cap: f64,
    pub mu_qr: f64,
    /// `r^q Cap / μ(Q_r)`
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenCheckReport {
    pub q: f64,
    pub truncation: f64,
    pub samples: Vec<CenSample>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Empirical lower constant; equals `min_ratio`.
    pub c0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenOptions {
    /// Cells per axis of the capacity grid on `Q_{Mr}(x0)`; even.
    pub cells: usize,
    /// Truncation factor `M` replacing the whole plane by `Q_{Mr}`.
    pub truncation: f64,
    pub capacity: CapacityOptions,
}

impl Default for CenOptions {
    fn default() -> Self {
        CenOptions { cells: 64, truncation: 4.0, capacity: CapacityOptions::default() }
    }
}

/// For every `(x0, r)` compute `r^q Cap_{q,ω}(D ∩ Q_r(x0), Q_{Mr}(x0)) / ω(Q_r(x0))`.
/// The truncated capacity over-estimates the whole-plane capacity.
pub fn verify_cen(
    d: &SetGeometry,
    w: &ScalarWeight,
    q: f64,
    centers: &[Point],
    radii: &[f64],
    opts: &CenOptions,
) -> Result<CenCheckReport> {
    if !(q > 1.0) {
        return Err(Error::param(format!("q = {q} must exceed 1")));
    }
    if !(opts.truncation > 1.0) {
        return Err(Error::param("truncation factor must exceed 1"));
    }
    if opts.cells < 2 || opts.cells % 2 != 0 {
        return Err(Error::InvalidResolution(opts.cells, 2));
    }
    let jobs: Vec<(Point, f64)> = centers.iter().flat_map(|&c| radii.iter().map(move |&r| (c, r))).collect();
    for &(c, r) in &jobs {
        if !(r > 0.0) {
            return Err(Error::param(format!("radius {r} must be positive")));
        }
        let h = 2.0 * opts.truncation * r / opts.cells as f64;
        if d.distance(c) > h * (1.0 + 1e-9) {
            return Err(Error::CenterOffD(c));
        }
    }
    let samples = jobs
        .par_iter()
        .map(|&(center, r)| {
            let outer = Cube::new(center, opts.truncation * r)?;
            let grid = Grid::new(outer, opts.cells)?;
            let window = Cube::new(center, r)?;
            let k = d.mark(&grid, Some(&window));
            let cap = compute_capacity(&CapacityProblem { grid, q, weight: w.clone(), k }, &opts.capacity)?;
            let mu_qr = weighted_measure(w, &window, opts.cells)?;
            Ok(CenSample { center, r, cap: cap.value, mu_qr, ratio: r.powf(q) * cap.value / mu_qr })
        })
        .collect::<Result<Vec<_>>>()?;
    let min_ratio = samples.iter().map(|s| s.ratio).fold(f64::INFINITY, f64::min);
    let max_ratio = samples.iter().map(|s| s.ratio).fold(0.0, f64::max);
    Ok(CenCheckReport { q, truncation: opts.truncation, samples, min_ratio, max_ratio, c0: min_ratio })
}

/// Which constant is subtracted in the mean-zero inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanKind {
    /// `⨍_Q u dx`
    Plain,
    /// `μ(Q)^{-1} ∫_Q u μ dx`
    Weighted,
}

/// Best constant of `[⨍ |(u - A)/r|² μ]^{1/2} ≤ C [⨍ |∇u|² μ]^{1/2}` on the
/// grid cube, `A` the chosen mean of `u`.
#[derive(Debug)]
pub struct MeanZeroPoincare {
    ops: Operators,
    mean: Vec<f64>,
    kind: MeanKind,
}

impl MeanZeroPoincare {
    pub fn new(grid: &Grid, w: &ScalarWeight, kind: MeanKind) -> Result<Self> {
        let ops = Operators::new(grid, w)?;
        let coeff = match kind {
            MeanKind::Plain => vec![1.0; ops.quad.len()],
            MeanKind::Weighted => ops.mu.clone(),
        };
        let vol = ops.quad.weight() * coeff.iter().sum::<f64>();
        let mean = load_vector_scalar(&ops.quad, &coeff).iter().map(|v| v / vol).collect();
        Ok(MeanZeroPoincare { ops, mean, kind })
    }

    pub fn kind(&self) -> MeanKind {
        self.kind
    }

    fn centered(&self, u: &[f64]) -> Vec<f64> {
        let a = dot(&self.mean, u);
        u.iter().map(|v| v - a).collect()
    }

    /// The ratio for one field; zero for constants.
    pub fn ratio(&self, u: &[f64]) -> f64 {
        let den = self.ops.stiffness.bilinear(u, u);
        if den <= 0.0 {
            return 0.0;
        }
        let c = self.centered(u);
        (self.ops.mass.bilinear(&c, &c) / den).sqrt() / self.ops.r()
    }

    /// Power iteration on `S⁺B`, `B = PᵀMP`, `P u = u - A(u)`.
    pub fn constant(&self, tol: f64, max_iter: usize) -> Result<f64> {
        let grid = *self.ops.quad.grid();
        let n = grid.node_count();
        let mut free = vec![true; n];
        free[0] = false;
        let mut u: Vec<f64> = (0..n)
            .map(|k| {
                let x = grid.node_coords(k);
                x[0] + 0.37 * x[1] + 0.1 * (3.0 * x[0]).sin()
            })
            .collect();
        let mut last = 0.0;
        for _ in 0..max_iter {
            let c = self.centered(&u);
            let bc = self.ops.mass.matvec(&c);
            let a = dot(&bc, &vec![1.0; n]);
            let b: Vec<f64> = bc.iter().zip(&self.mean).map(|(v, m)| v - m * a).collect();
            let mut x = vec![0.0; n];
            pcg(&self.ops.stiffness, &b, &mut x, &free, INNER_TOL, INNER_MAX_ITER)?;
            let nx = norm(&x);
            u = x.iter().map(|v| v / nx).collect();
            let val = self.ratio(&u);
            if (val - last).abs() <= tol * val {
                return Ok(val);
            }
            last = val;
        }
        Ok(last)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, interior_set, AxisSegment, CantorSet, InteriorShape};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dirichlet_square_eigen_oracle() {
        let g = build_grid(Cube::new([0.0, 0.0], 0.5).unwrap(), 64).unwrap();
        let res = poincare_constant(&g, &g.boundary_nodes(), &ScalarWeight::one(), 2.0, 2.0, &Default::default())
            .unwrap();
        let exact = 2.0 / (2.0 * std::f64::consts::PI.powi(2)).sqrt();
        assert!((res.c / exact - 1.0).abs() < 0.02);
        assert!(res.residual <= 1e-8);
        assert_eq!(res.bound_kind, BoundKind::ExactDiscrete);
    }

    #[test]
    fn trivial_cases() {
        let g = build_grid(Cube::new([0.0, 0.0], 0.5).unwrap(), 8).unwrap();
        let all = NodeSet::from_indices((0..g.node_count()).collect());
        assert_eq!(poincare_constant(&g, &all, &ScalarWeight::one(), 2.0, 2.0, &Default::default()).unwrap().c, 0.0);
        assert!(matches!(
            poincare_constant(&g, &NodeSet::empty(), &ScalarWeight::one(), 2.0, 2.0, &Default::default()),
            Err(Error::EmptyConstraintSet)
        ));
    }

    #[test]
    fn constant_invariant_under_weight_scaling() {
        let g = build_grid(Cube::new([0.0, 0.0], 1.0).unwrap(), 16).unwrap();
        let k = interior_set(&g, &InteriorShape::SubCube(Cube::new([0.0, 0.0], 0.25).unwrap())).unwrap();
        let w = ScalarWeight::power([0.0, 0.0], 0.5);
        let a = poincare_constant(&g, &k, &w, 2.0, 2.0, &Default::default()).unwrap().c;
        let b = poincare_constant(&g, &k, &w.scaled(2.0), 2.0, 2.0, &Default::default()).unwrap().c;
        assert!((a / b - 1.0).abs() < 1e-9);
    }

    #[test]
    fn larger_k_gives_smaller_constant() {
        let g = build_grid(Cube::new([0.0, 0.0], 1.0).unwrap(), 16).unwrap();
        let small = interior_set(&g, &InteriorShape::SubCube(Cube::new([0.0, 0.0], 0.25).unwrap())).unwrap();
        let big = interior_set(&g, &InteriorShape::SubCube(Cube::new([0.0, 0.0], 0.5).unwrap())).unwrap();
        let w = ScalarWeight::one();
        let a = poincare_constant(&g, &small, &w, 2.0, 2.0, &Default::default()).unwrap().c;
        let b = poincare_constant(&g, &big, &w, 2.0, 2.0, &Default::default()).unwrap().c;
        assert!(b <= a * (1.0 + 1e-6));
    }

    #[test]
    fn ascent_does_not_lose_to_eigenvector() {
        let g = build_grid(Cube::new([0.0, 0.0], 1.0).unwrap(), 16).unwrap();
        let k = interior_set(&g, &InteriorShape::SubCube(Cube::new([0.0, 0.0], 0.5).unwrap())).unwrap();
        let w = ScalarWeight::one();
        let res = poincare_constant(&g, &k, &w, 2.0, 1.5, &Default::default()).unwrap();
        assert_eq!(res.bound_kind, BoundKind::LowerBound);
        let ops = Operators::new(&g, &w).unwrap();
        let free: Vec<bool> = k.mask(&g).iter().map(|&b| !b).collect();
        let (_, eig, _, _) = inverse_iteration(&ops, &free, &Default::default()).unwrap();
        assert!(res.c >= ops.log_ratio(&eig, 2.0, 1.5).exp() * (1.0 - 1e-12));
    }

    #[test]
    fn log_ratio_gradient_matches_finite_differences() {
        let g = build_grid(Cube::new([0.0, 0.0], 1.0).unwrap(), 4).unwrap();
        let ops = Operators::new(&g, &ScalarWeight::power([0.0, 0.0], 0.5)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u: Vec<f64> = (0..g.node_count()).map(|_| rng.gen_range(0.2..1.0)).collect();
        let grad = ops.log_ratio_gradient(&u, 3.0, 1.5);
        for a in [0usize, 7, 12] {
            let mut up = u.clone();
            let mut um = u.clone();
            up[a] += 1e-6;
            um[a] -= 1e-6;
            let fd = (ops.log_ratio(&up, 3.0, 1.5) - ops.log_ratio(&um, 3.0, 1.5)) / 2e-6;
            assert!((fd - grad[a]).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn comparability_is_scale_free_for_unit_weight() {
        let ratios: Vec<f64> = [1.0, 0.5, 0.25]
            .iter()
            .map(|&r| {
                let g = build_grid(Cube::new([0.0, 0.0], r).unwrap(), 16).unwrap();
                let k = interior_set(&g, &InteriorShape::SubCube(Cube::new([0.0, 0.0], r / 2.0).unwrap())).unwrap();
                comparability_ratio(&g, &k, &ScalarWeight::one(), 2.0, 2.0, &Default::default()).unwrap().ratio
            })
            .collect();
        let spread = ratios.iter().cloned().fold(0.0, f64::max) / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread <= 1.2);
        assert!(ratios.iter().all(|&r| r > 0.0 && r.is_finite()));
    }

    #[test]
    fn mean_zero_constant_dominates_random_fields() {
        let g = build_grid(Cube::new([0.0, 0.0], 1.0).unwrap(), 12).unwrap();
        let w = ScalarWeight::power([0.0, 0.0], 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for kind in [MeanKind::Plain, MeanKind::Weighted] {
            let mz = MeanZeroPoincare::new(&g, &w, kind).unwrap();
            let c = mz.constant(1e-13, 5000).unwrap();
            assert!(c > 0.0);
            for _ in 0..200 {
                let u: Vec<f64> = (0..g.node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                assert!(mz.ratio(&u) <= c * (1.0 + 1e-6));
            }
        }
    }

    #[test]
    fn full_edge_is_uniformly_essential() {
        let edge = SetGeometry::Segment(AxisSegment::horizontal(0.0, 0.0, 1.0));
        let rep = verify_cen(
            &edge,
            &ScalarWeight::one(),
            2.0,
            &[[0.5, 0.0]],
            &[0.25, 0.125, 0.0625],
            &CenOptions { cells: 32, ..Default::default() },
        )
        .unwrap();
        assert_eq!(rep.samples.len(), 3);
        assert!(rep.min_ratio > 0.05);
        assert!(rep.max_ratio / rep.min_ratio < 1.0 + 1e-8);
    }

    #[test]
    fn center_must_lie_on_the_set() {
        let cantor = SetGeometry::Cantor {
            set: CantorSet::new(0.47, 3).unwrap(),
            segment: AxisSegment::horizontal(0.0, -0.5, 0.5),
        };
        let err = verify_cen(&cantor, &ScalarWeight::one(), 1.5, &[[0.0, 0.3]], &[0.1], &Default::default());
        assert!(matches!(err, Err(Error::CenterOffD(_))));
    }
}
