//! Weighted variational capacity `Cap_{q,μ}(K, Q)` through the discrete
//! capacitary potential: `φ = 1` on `K`, `φ = 0` on `∂Q`, and
//! `∫_Q |∇φ|^q μ` minimal among such bilinear fields.

use rayon::prelude::*;

use crate::assembly::{gradient_at_quadpoints, integrate_power, DiscreteField, Quadrature};
use crate::error::{Error, Result};
use crate::geometry::{interior_set, Cube, Grid, InteriorShape, NodeSet};
use crate::newton::{default_schedule, FluxModel, NewtonOptions, NonlinearSystem};
use crate::weights::{weighted_measure, ScalarWeight};

#[derive(Debug, Clone)]
pub struct CapacityProblem {
    /// Grid on the outer cube `Q`.
    pub grid: Grid,
    pub q: f64,
    pub weight: ScalarWeight,
    /// Nodes carrying the constraint `φ = 1`.
    pub k: NodeSet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityOptions {
    pub tol: f64,
    pub max_newton: usize,
}

impl Default for CapacityOptions {
    fn default() -> Self {
        CapacityOptions { tol: 1e-9, max_newton: 200 }
    }
}

#[derive(Debug, Clone)]
pub struct CapacityResult {
    pub value: f64,
    pub potential: DiscreteField,
    pub iterations: usize,
    /// Relative residual of the regularized Euler-Lagrange equation.
    pub residual: f64,
}

/// `∫ |∇u|^q μ` of a bilinear field.
pub fn q_energy(u: &DiscreteField, mu: &[f64], q: f64, quad: &Quadrature) -> f64 {
    let grad = gradient_at_quadpoints(u, quad);
    integrate_power(quad, &grad.magnitudes(), mu, q, None)
}

pub fn compute_capacity(prob: &CapacityProblem, opts: &CapacityOptions) -> Result<CapacityResult> {
    let grid = &prob.grid;
    if !(prob.q > 1.0) {
        return Err(Error::param(format!("q = {} must exceed 1", prob.q)));
    }
    prob.k.validate(grid)?;
    if prob.k.is_empty() {
        return Ok(CapacityResult { value: 0.0, potential: DiscreteField::zeros(grid), iterations: 0, residual: 0.0 });
    }
    if prob.k.indices().iter().any(|&k| grid.is_boundary(k)) {
        return Err(Error::OutOfDomain);
    }
    let quad = Quadrature::new(grid);
    let mu = quad.eval_scalar(&prob.weight)?;
    let k_mask = prob.k.mask(grid);
    let free: Vec<bool> = (0..grid.node_count()).map(|i| !k_mask[i] && !grid.is_boundary(i)).collect();
    let u0: Vec<f64> = k_mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let newton = NewtonOptions { tol: opts.tol, max_newton: opts.max_newton };

    let linear = NonlinearSystem {
        quad: &quad,
        p: 2.0,
        model: FluxModel::Isotropic(mu.clone()),
        data: None,
        free: free.clone(),
    };
    let mut out = linear.solve(u0, &default_schedule(2.0), newton)?;
    if prob.q != 2.0 {
        let sys = NonlinearSystem { quad: &quad, p: prob.q, model: FluxModel::Isotropic(mu.clone()), data: None, free };
        let warm = out.iterations;
        out = sys.solve(out.u, &default_schedule(prob.q), newton)?;
        out.iterations += warm;
    }
    let potential = DiscreteField { grid: *grid, values: out.u };
    let value = q_energy(&potential, &mu, prob.q, &quad);
    Ok(CapacityResult { value, potential, iterations: out.iterations, residual: out.relative_residual })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingRow {
    pub r: f64,
    pub m: usize,
    pub capacity: f64,
    /// `μ(Q_{2r})`
    pub mu_q: f64,
    /// `r^q Cap / μ(Q_{2r})`
    pub ratio: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub q: f64,
    pub rows: Vec<ScalingRow>,
    /// Least-squares slope of `log Cap` against `log r`.
    pub slope: f64,
}

/// `Cap_{q,μ}(rK, Q_{2r}(0))` over the given scales with `m` cells per axis
/// at every scale. `shape` describes `K` at `r = 1` and is scaled about the
/// origin.
pub fn capacity_scaling_check(
    shape: &InteriorShape,
    weight: &ScalarWeight,
    q: f64,
    scales: &[f64],
    m: usize,
    opts: &CapacityOptions,
) -> Result<ScalingReport> {
    if scales.len() < 3 {
        return Err(Error::param("at least three scales are required"));
    }
    let rows = scales
        .par_iter()
        .map(|&r| {
            let outer = Cube::new([0.0, 0.0], 2.0 * r)?;
            let grid = Grid::new(outer, m)?;
            let k = interior_set(&grid, &shape.scaled(r))?;
            let res = compute_capacity(&CapacityProblem { grid, q, weight: weight.clone(), k }, opts)?;
            let mu_q = weighted_measure(weight, &outer, m)?;
            Ok(ScalingRow {
                r,
                m,
                capacity: res.value,
                mu_q,
                ratio: res.value * r.powf(q) / mu_q,
                iterations: res.iterations,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.r.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.capacity.ln()).collect();
    Ok(ScalingReport { q, slope: crate::fit_slope(&xs, &ys), rows })
}


#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetClass {
    Negligible,
    Essential,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub class: SetClass,
    /// `Cap · r^q / μ(Q_{2r})`
    pub ratio: f64,
    pub capacity: f64,
}

/// Compare `Cap_{q,μ}(K, Q_{2r}) / μ(Q_{2r})` with `γ r^{-q}`, where the
/// grid covers `Q_{2r}`.
pub fn classify_negligible(
    k: &NodeSet,
    weight: &ScalarWeight,
    q: f64,
    gamma: f64,
    grid: &Grid,
    opts: &CapacityOptions,
) -> Result<Classification> {
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(Error::param(format!("gamma = {gamma} must lie in (0, 1/2)")));
    }
    let r = 0.5 * grid.cube().halfwidth;
    let res = compute_capacity(&CapacityProblem { grid: *grid, q, weight: weight.clone(), k: k.clone() }, opts)?;
    let mu_q = weighted_measure(weight, grid.cube(), grid.cells())?;
    let ratio = res.value * r.powf(q) / mu_q;
    let class = if ratio <= gamma { SetClass::Negligible } else { SetClass::Essential };
    Ok(Classification { class, ratio, capacity: res.value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_weighted_stiffness;
    use crate::geometry::build_grid;
    use crate::weights::{MatrixWeight, WeightForm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn centered_square(grid_r: f64, k_r: f64, m: usize, w: ScalarWeight, q: f64) -> CapacityProblem {
        let grid = build_grid(Cube::new([0.0, 0.0], grid_r).unwrap(), m).unwrap();
        let k = interior_set(&grid, &InteriorShape::SubCube(Cube::new([0.0, 0.0], k_r).unwrap())).unwrap();
        CapacityProblem { grid, q, weight: w, k }
    }

    #[test]
    fn empty_set_has_zero_capacity() {
        let mut p = centered_square(1.0, 0.5, 8, ScalarWeight::one(), 2.0);
        p.k = NodeSet::empty();
        let r = compute_capacity(&p, &CapacityOptions::default()).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.potential.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_in_weight() {
        for q in [2.0, 1.5] {
            let w = ScalarWeight::power([0.0, 0.0], 0.5);
            let a = compute_capacity(&centered_square(1.0, 0.25, 16, w.clone(), q), &CapacityOptions::default())
                .unwrap();
            let b = compute_capacity(&centered_square(1.0, 0.25, 16, w.scaled(3.0), q), &CapacityOptions::default())
                .unwrap();
            assert!((b.value / (3.0 * a.value) - 1.0).abs() < 1e-9, "q={q}");
        }
    }

    #[test]
    fn energy_identity_and_range() {
        let w = ScalarWeight::power([0.0, 0.0], 0.5);
        let p = centered_square(1.0, 0.25, 16, w.clone(), 2.0);
        let r = compute_capacity(&p, &CapacityOptions::default()).unwrap();
        let s = assemble_weighted_stiffness(&p.grid, &MatrixWeight::isotropic(w, WeightForm::Measure)).unwrap();
        let e = s.bilinear(&r.potential.values, &r.potential.values);
        assert!((e / r.value - 1.0).abs() < 1e-10);
        assert!(r.potential.values.iter().all(|&v| (-1e-10..=1.0 + 1e-10).contains(&v)));
    }

    #[test]
    fn truncation_does_not_increase_energy_for_q2() {
        let p = centered_square(1.0, 0.25, 8, ScalarWeight::one(), 2.0);
        let quad = Quadrature::new(&p.grid);
        let mu = quad.eval_scalar(&p.weight).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let vals: Vec<f64> = (0..p.grid.node_count())
                .map(|k| {
                    if p.k.contains(k) {
                        1.0
                    } else if p.grid.is_boundary(k) {
                        0.0
                    } else {
                        rng.gen_range(-0.5..1.5)
                    }
                })
                .collect();
            let u = DiscreteField::new(&p.grid, vals.clone()).unwrap();
            let c = DiscreteField::new(&p.grid, vals.iter().map(|v| v.clamp(0.0, 1.0)).collect()).unwrap();
            assert!(q_energy(&c, &mu, 2.0, &quad) <= q_energy(&u, &mu, 2.0, &quad) + 1e-12);
        }
    }

    #[test]
    fn monotone_in_k() {
        for q in [2.0, 1.5] {
            let small = compute_capacity(&centered_square(1.0, 0.125, 16, ScalarWeight::one(), q), &Default::default())
                .unwrap();
            let big = compute_capacity(&centered_square(1.0, 0.25, 16, ScalarWeight::one(), q), &Default::default())
                .unwrap();
            assert!(small.value <= big.value + 1e-10);
        }
    }

    #[test]
    fn domain_monotonicity_at_matched_h() {
        let a = compute_capacity(&centered_square(1.0, 0.25, 16, ScalarWeight::one(), 2.0), &Default::default())
            .unwrap();
        let b = compute_capacity(&centered_square(2.0, 0.25, 32, ScalarWeight::one(), 2.0), &Default::default())
            .unwrap();
        assert!(b.value <= a.value * 1.03);
    }

    #[test]
    fn scale_invariance_in_the_plane() {
        let rep = capacity_scaling_check(
            &InteriorShape::SubCube(Cube::new([0.0, 0.0], 0.5).unwrap()),
            &ScalarWeight::one(),
            2.0,
            &[1.0, 0.5, 0.25],
            16,
            &Default::default(),
        )
        .unwrap();
        assert!(rep.slope.abs() < 1e-8);
    }

    #[test]
    fn classification_examples() {
        let grid = build_grid(Cube::new([0.0, 0.0], 2.0).unwrap(), 32).unwrap();
        let c = classify_negligible(&NodeSet::empty(), &ScalarWeight::one(), 2.0, 0.1, &grid, &Default::default())
            .unwrap();
        assert_eq!((c.class, c.ratio), (SetClass::Negligible, 0.0));
        let k = interior_set(&grid, &InteriorShape::SubCube(Cube::new([0.0, 0.0], 1.0).unwrap())).unwrap();
        let c = classify_negligible(&k, &ScalarWeight::one(), 2.0, 1e-3, &grid, &Default::default()).unwrap();
        assert_eq!(c.class, SetClass::Essential);
    }

    #[test]
    fn single_node_ratio_decreases_under_refinement() {
        // planar point capacity ~ 2π / ln(R/h): 1/ratio grows by μ(Q_2)·ln2/(2π) per halving
        let step = 16.0 * std::f64::consts::LN_2 / std::f64::consts::TAU;
        let mut inv = Vec::new();
        for m in [8usize, 16, 32, 64] {
            let grid = build_grid(Cube::new([0.0, 0.0], 2.0).unwrap(), m).unwrap();
            let k = interior_set(&grid, &InteriorShape::Points(vec![[0.0, 0.0]])).unwrap();
            let c = classify_negligible(&k, &ScalarWeight::one(), 2.0, 0.07, &grid, &Default::default()).unwrap();
            let expected = if m == 8 { SetClass::Essential } else if m == 64 { SetClass::Negligible } else { c.class };
            assert_eq!(c.class, expected);
            inv.push(1.0 / c.ratio);
        }
        for w in inv.windows(2) {
            assert!(((w[1] - w[0]) / step - 1.0).abs() < 0.02, "{inv:?}");
        }
    }
}
