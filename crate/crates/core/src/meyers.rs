//! Empirical higher integrability: weighted `L^{p+δ}` norms of the gradient
//! under refinement, and local Caccioppoli / reverse Hölder checks on
//! sampled cubes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::assembly::{gradient_at_quadpoints, integrate_power, DiscreteField, Quadrature};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryPartition, Cube, Grid};
use crate::solver::{gradient_powers, solve_zaremba_from, SolveOptions, ZarembaProblem, ZarembaSetup};
use crate::weights::WeightForm;
use crate::Point;

/// Relative change between the two finest levels below which a δ-column
/// counts as stable.
pub const STABILITY_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct MeyersRow {
    pub delta: f64,
    pub m: usize,
    pub n_u: f64,
    pub n_g: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeyersReport {
    pub delta_grid: Vec<f64>,
    pub levels: Vec<usize>,
    /// Rows ordered by level, then δ.
    pub table: Vec<MeyersRow>,
    /// Per δ: ratio changes by less than [`STABILITY_THRESHOLD`] between the
    /// two finest levels.
    pub stable: Vec<bool>,
    /// Per δ: `N_G` is not finite or grows by more than the threshold
    /// between the two finest levels.
    pub data_diverges: Vec<bool>,
    /// `energy_ratio` at each level, for the `δ = 0` consistency check.
    pub energy_ratios: Vec<f64>,
}

impl MeyersReport {
    pub fn row(&self, delta_index: usize, level_index: usize) -> &MeyersRow {
        &self.table[level_index * self.delta_grid.len() + delta_index]
    }

    /// Ratios of one δ-column across levels.
    pub fn column(&self, delta_index: usize) -> Vec<f64> {
        (0..self.levels.len()).map(|l| self.row(delta_index, l).ratio).collect()
    }
}

/// Solve `setup` at each level (warm-starting from the prolongated coarse
/// solution when the level doubles) and tabulate `N_u`, `N_G` per δ.
pub fn meyers_scan(setup: &ZarembaSetup, delta_grid: &[f64], levels: &[usize], opts: &SolveOptions) -> Result<MeyersReport> {
    if delta_grid.is_empty() || levels.is_empty() {
        return Err(Error::param("delta grid and level list must be nonempty"));
    }
    if delta_grid.iter().any(|&d| !(d >= 0.0 && d.is_finite())) {
        return Err(Error::param("deltas must be finite and nonnegative"));
    }
    let mut table = Vec::with_capacity(delta_grid.len() * levels.len());
    let mut energy_ratios = Vec::with_capacity(levels.len());
    let mut prev: Option<DiscreteField> = None;
    for &m in levels {
        let prob = setup.discretize(m)?;
        let start = prev.as_ref().filter(|u| u.grid.cells() * 2 == m).map(|u| u.prolongate());
        let result = solve_zaremba_from(&prob, opts, start.as_ref())?;
        energy_ratios.push(crate::solver::energy_ratio(&prob, &result)?);
        for &delta in delta_grid {
            let (n_u, n_g) = gradient_powers(&prob, &result.u, prob.p + delta, None)?;
            let ratio = if n_g > 0.0 { n_u / n_g } else { f64::NAN };
            table.push(MeyersRow { delta, m, n_u, n_g, ratio });
        }
        prev = Some(result.u);
    }
    let nd = delta_grid.len();
    let nl = levels.len();
    let mut stable = vec![false; nd];
    let mut data_diverges = vec![false; nd];
    for d in 0..nd {
        let fine = &table[(nl - 1) * nd + d];
        data_diverges[d] = !fine.n_g.is_finite();
        if nl >= 2 {
            let coarse = &table[(nl - 2) * nd + d];
            stable[d] = relative_change(coarse.ratio, fine.ratio) < STABILITY_THRESHOLD;
            data_diverges[d] |= fine.n_g > (1.0 + STABILITY_THRESHOLD) * coarse.n_g;
        }
    }
    Ok(MeyersReport {
        delta_grid: delta_grid.to_vec(),
        levels: levels.to_vec(),
        table,
        stable,
        data_diverges,
        energy_ratios,
    })
}

fn relative_change(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (b - a).abs() / a.abs().max(b.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CubePlacement {
    /// The enlarged cube lies in the closed domain and holds no Dirichlet node.
    Interior,
    /// The enlarged cube contains a Dirichlet node.
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalRow {
    pub center: Point,
    pub r: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalEstimateReport {
    pub rows: Vec<LocalRow>,
    /// Largest `lhs / rhs` over the cubes.
    pub constant: f64,
}

impl LocalEstimateReport {
    fn from_rows(rows: Vec<LocalRow>) -> Self {
        let constant = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
        LocalEstimateReport { rows, constant }
    }
}

/// Growth of the empirical constant from `coarse` to `fine`.
pub fn refinement_growth(coarse: &LocalEstimateReport, fine: &LocalEstimateReport) -> f64 {
    if coarse.constant == 0.0 {
        if fine.constant == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        fine.constant / coarse.constant
    }
}

fn placement_ok(b: &BoundaryPartition, big: &Cube, placement: CubePlacement) -> bool {
    let grid = b.grid();
    let slack = 1e-9 * grid.h();
    let touches_d = b.dirichlet().indices().iter().any(|&k| big.contains_closed(grid.node_coords(k), slack));
    match placement {
        CubePlacement::Interior => grid.cube().contains_cube(big, slack) && !touches_d,
        CubePlacement::Dirichlet => touches_d,
    }
}

/// Fixed-seed sample of `count` cubes centred at nodes with radii in
/// `{4h, 8h, 16h}` whose `enlargement`-fold concentric cube satisfies
/// `placement`. Fewer cubes are returned if the grid admits none.
pub fn sample_cubes(b: &BoundaryPartition, placement: CubePlacement, enlargement: f64, count: usize, seed: u64) -> Vec<Cube> {
    let grid = b.grid();
    let h = grid.h();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let radii = [4.0 * h, 8.0 * h, 16.0 * h];
    for _ in 0..count * 200 {
        if out.len() == count {
            break;
        }
        let k = rng.gen_range(0..grid.node_count());
        let r = radii[rng.gen_range(0..radii.len())];
        let cube = Cube { center: grid.node_coords(k), halfwidth: r };
        if placement_ok(b, &cube.scaled(enlargement), placement) {
            out.push(cube);
        }
    }
    out
}

/// Gauss-point data for the local inequalities. Multiplier problems are
/// read through the measure weight `ω̃^p` with gradient size `|M∇u| / ω̃`.
struct LocalData {
    quad: Quadrature,
    mu: Vec<f64>,
    grad: Vec<f64>,
    g: Vec<f64>,
    u: Vec<f64>,
}

impl LocalData {
    fn new(prob: &ZarembaProblem, u: &DiscreteField) -> Result<Self> {
        if u.grid != *prob.grid() {
            return Err(Error::param("solution lives on a different grid"));
        }
        let quad = Quadrature::new(prob.grid());
        let du = gradient_at_quadpoints(u, &quad);
        let (mu, grad, g) = match prob.weight.form {
            WeightForm::Measure => (quad.eval_scalar(&prob.weight.scalar)?, du.magnitudes(), prob.g.magnitudes()),
            WeightForm::Multiplier => {
                let s = quad.eval_scalar(&prob.weight.scalar)?;
                let mats = quad.eval_matrix(&prob.weight)?;
                let size = |vals: &[[f64; 2]]| -> Vec<f64> {
                    vals.iter()
                        .zip(&mats)
                        .zip(&s)
                        .map(|((v, m), &s)| {
                            let n = (m[0][0] * v[0] + m[0][1] * v[1]).hypot(m[1][0] * v[0] + m[1][1] * v[1]);
                            if s > 0.0 {
                                n / s
                            } else {
                                v[0].hypot(v[1])
                            }
                        })
                        .collect()
                };
                let mu = s.iter().map(|v| v.powf(prob.p)).collect();
                (mu, size(&du.values), size(&prob.g.values))
            }
        };
        let uq = u.at_quadpoints(&quad);
        Ok(LocalData { quad, mu, grad, g, u: uq })
    }

    fn measure(&self, mask: &[bool]) -> f64 {
        self.mu.iter().zip(mask).filter(|(_, &m)| m).map(|(w, _)| w).sum::<f64>() * self.quad.weight()
    }
}

fn check_cube(b: &BoundaryPartition, cube: &Cube, enlargement: f64, placement: CubePlacement) -> Result<()> {
    let big = cube.scaled(enlargement);
    let ok = match placement {
        CubePlacement::Interior => b.grid().cube().contains_cube(&big, 1e-9 * b.grid().h()),
        CubePlacement::Dirichlet => placement_ok(b, &big, placement),
    };
    if ok && cube.halfwidth > 0.0 {
        Ok(())
    } else {
        Err(Error::CubeOutOfDomain { center: cube.center, radius: cube.halfwidth })
    }
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else if rhs == 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs
    }
}

/// `∫_{Q_r}|∇u|^p ω` against `∫_{Q_{3r/2}}|(u-λ)/r|^p ω + ∫_{Q_{3r/2}}|G|^p ω`
/// with unit constant. `λ` is the weighted mean of `u` over `Q_{3r/2}` for
/// interior cubes and `0` for cubes meeting the Dirichlet set.
pub fn caccioppoli_check(prob: &ZarembaProblem, u: &DiscreteField, cubes: &[Cube], placement: CubePlacement) -> Result<LocalEstimateReport> {
    for c in cubes {
        check_cube(&prob.boundary, c, 1.5, placement)?;
    }
    let data = LocalData::new(prob, u)?;
    let p = prob.p;
    let rows = cubes
        .par_iter()
        .map(|cube| {
            let inner = data.quad.cube_mask(cube);
            let outer = data.quad.cube_mask(&cube.scaled(1.5));
            let lhs = integrate_power(&data.quad, &data.grad, &data.mu, p, Some(&inner));
            let lambda = match placement {
                CubePlacement::Interior => {
                    let mass = data.measure(&outer);
                    let sum: f64 = (0..data.u.len()).filter(|&k| outer[k]).map(|k| data.u[k] * data.mu[k]).sum::<f64>()
                        * data.quad.weight();
                    if mass > 0.0 {
                        sum / mass
                    } else {
                        0.0
                    }
                }
                CubePlacement::Dirichlet => 0.0,
            };
            let osc: Vec<f64> = data.u.iter().map(|v| (v - lambda) / cube.halfwidth).collect();
            let rhs = integrate_power(&data.quad, &osc, &data.mu, p, Some(&outer))
                + integrate_power(&data.quad, &data.g, &data.mu, p, Some(&outer));
            LocalRow { center: cube.center, r: cube.halfwidth, lhs, rhs, ratio: ratio(lhs, rhs) }
        })
        .collect();
    Ok(LocalEstimateReport::from_rows(rows))
}

/// `(ω(Q_r)^{-1}∫_{Q_r}|∇u|^p ω)^{1/p}` against
/// `(ω(Q_r)^{-1}∫_{Q_{ρr}}|∇u|^q ω)^{1/q} + (ω(Q_r)^{-1}∫_{Q_{ρr}}|G|^p ω)^{1/p}`
/// with `ρ = enlargement` and unit constant.
pub fn reverse_holder_check(
    prob: &ZarembaProblem,
    u: &DiscreteField,
    cubes: &[Cube],
    q_sub: f64,
    enlargement: f64,
) -> Result<LocalEstimateReport> {
    let p = prob.p;
    if !(q_sub > 1.0 && q_sub <= p) {
        return Err(Error::param(format!("q_sub = {q_sub} must lie in (1, p]")));
    }
    if !(enlargement >= 1.0) {
        return Err(Error::param("enlargement factor must be at least 1"));
    }
    for c in cubes {
        check_cube(&prob.boundary, c, enlargement, CubePlacement::Interior)?;
    }
    let data = LocalData::new(prob, u)?;
    let rows = cubes
        .par_iter()
        .map(|cube| {
            let inner = data.quad.cube_mask(cube);
            let outer = data.quad.cube_mask(&cube.scaled(enlargement));
            let mass = data.measure(&inner);
            let avg = |v: f64| if mass > 0.0 { v / mass } else { 0.0 };
            let lhs = avg(integrate_power(&data.quad, &data.grad, &data.mu, p, Some(&inner))).powf(1.0 / p);
            let low = avg(integrate_power(&data.quad, &data.grad, &data.mu, q_sub, Some(&outer))).powf(1.0 / q_sub);
            let g = avg(integrate_power(&data.quad, &data.g, &data.mu, p, Some(&outer))).powf(1.0 / p);
            let rhs = low + g;
            LocalRow { center: cube.center, r: cube.halfwidth, lhs, rhs, ratio: ratio(lhs, rhs) }
        })
        .collect();
    Ok(LocalEstimateReport::from_rows(rows))
}

/// Whether `grid` resolves every cube's enlarged boundary on cell faces.
pub fn cubes_aligned(grid: &Grid, cubes: &[Cube], enlargement: f64) -> bool {
    let h = grid.h();
    let lo = grid.cube().lower();
    let on_face = |x: f64, o: f64| {
        let t = (x - o) / h;
        (t - t.round()).abs() < 1e-8
    };
    cubes.iter().all(|c| {
        [1.0, enlargement].iter().all(|&s| {
            let q = c.scaled(s);
            let (a, b) = (q.lower(), q.upper());
            on_face(a[0], lo[0]) && on_face(a[1], lo[1]) && on_face(b[0], lo[0]) && on_face(b[1], lo[1])
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundarySpec, Edge};
    use crate::solver::{solve_zaremba, FieldSource};
    use crate::weights::{MatrixWeight, ScalarWeight};

    fn setup(weight: ScalarWeight, boundary: BoundarySpec, data: FieldSource) -> ZarembaSetup {
        ZarembaSetup {
            cube: Cube::unit_square(),
            p: 2.0,
            weight: MatrixWeight::isotropic(weight, WeightForm::Measure),
            boundary,
            data,
        }
    }

    #[test]
    fn smooth_gradient_data_is_stable() {
        let s = setup(
            ScalarWeight::one(),
            BoundarySpec::FullBoundary,
            FieldSource::gradient_of(|x| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1])),
        );
        let r = meyers_scan(&s, &[0.0, 0.1, 0.2], &[8, 16], &SolveOptions::default()).unwrap();
        assert!(r.stable.iter().all(|&b| b));
        assert!(r.data_diverges.iter().all(|&b| !b));
        for d in 0..3 {
            for v in r.column(d) {
                assert!((v - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_delta_matches_energy_ratio() {
        let s = setup(
            ScalarWeight::power([0.0, 0.0], 0.5),
            BoundarySpec::Edges(vec![Edge::Left]),
            FieldSource::RandomSmooth { modes: 3, seed: 1, amplitude: 1.0 },
        );
        let r = meyers_scan(&s, &[0.0, 0.05], &[8, 16], &SolveOptions::default()).unwrap();
        for l in 0..2 {
            assert!((r.row(0, l).ratio - r.energy_ratios[l]).abs() < 1e-10);
        }
    }

    #[test]
    fn log_norm_is_convex_in_delta() {
        let s = setup(
            ScalarWeight::power([0.0, 0.0], 0.5),
            BoundarySpec::Checkerboard { period: 0.5, edges: Edge::ALL.to_vec() },
            FieldSource::RandomSmooth { modes: 3, seed: 2, amplitude: 1.0 },
        );
        let deltas: Vec<f64> = (0..6).map(|k| 0.1 * k as f64).collect();
        let r = meyers_scan(&s, &deltas, &[16], &SolveOptions::default()).unwrap();
        let logs: Vec<f64> = (0..deltas.len()).map(|d| r.row(d, 0).n_u.ln()).collect();
        for k in 1..logs.len() - 1 {
            assert!(logs[k] <= 0.5 * (logs[k - 1] + logs[k + 1]) + 1e-8);
        }
    }

    fn linear_problem(m: usize, a: [f64; 2]) -> (ZarembaProblem, DiscreteField) {
        let prob = setup(ScalarWeight::one(), BoundarySpec::Edges(vec![Edge::Left]), FieldSource::Zero)
            .discretize(m)
            .unwrap();
        let u = DiscreteField::interpolate(prob.grid(), |x| a[0] * x[0] + a[1] * x[1] + 0.3);
        (prob, u)
    }

    #[test]
    fn caccioppoli_constant_is_zero() {
        let prob = setup(ScalarWeight::one(), BoundarySpec::Edges(vec![Edge::Left]), FieldSource::Zero)
            .discretize(32)
            .unwrap();
        let u = DiscreteField::interpolate(prob.grid(), |_| 2.0);
        let cubes = [Cube { center: [0.5, 0.5], halfwidth: 0.125 }];
        let r = caccioppoli_check(&prob, &u, &cubes, CubePlacement::Interior).unwrap();
        assert_eq!(r.rows[0].lhs, 0.0);
        assert_eq!(r.constant, 0.0);
    }

    #[test]
    fn caccioppoli_linear_variance() {
        // |a|²(2r)² against (|a|²/r²)(3r)⁴/12 in the a-direction
        for a in [[1.0, 0.0], [0.6, -0.8], [2.0, 1.0]] {
            let (prob, u) = linear_problem(32, a);
            let cubes = [Cube { center: [0.5, 0.5], halfwidth: 0.125 }, Cube { center: [0.625, 0.375], halfwidth: 0.25 }];
            let r = caccioppoli_check(&prob, &u, &cubes, CubePlacement::Interior).unwrap();
            for row in &r.rows {
                assert!((row.ratio - 16.0 / 27.0).abs() < 1e-10, "{}", row.ratio);
            }
        }
    }

    #[test]
    fn reverse_holder_linear() {
        let (prob, u) = linear_problem(32, [0.6, -0.8]);
        let cubes = [Cube { center: [0.5, 0.5], halfwidth: 0.125 }];
        let r = reverse_holder_check(&prob, &u, &cubes, 1.5, 1.0).unwrap();
        assert!((r.rows[0].ratio - 1.0).abs() < 1e-12);
        let r = reverse_holder_check(&prob, &u, &cubes, 2.0, 1.0).unwrap();
        assert!((r.rows[0].ratio - 1.0).abs() < 1e-12);
        let r = reverse_holder_check(&prob, &u, &cubes, 2.0, 2.0).unwrap();
        assert!(r.rows[0].ratio <= 1.0);
    }

    #[test]
    fn out_of_domain_cube_is_refused() {
        let (prob, u) = linear_problem(16, [1.0, 0.0]);
        let cubes = [Cube { center: [0.9, 0.5], halfwidth: 0.125 }];
        assert!(matches!(
            caccioppoli_check(&prob, &u, &cubes, CubePlacement::Interior),
            Err(Error::CubeOutOfDomain { .. })
        ));
        assert!(matches!(reverse_holder_check(&prob, &u, &cubes, 1.5, 2.0), Err(Error::CubeOutOfDomain { .. })));
        let far = [Cube { center: [0.5, 0.5], halfwidth: 0.125 }];
        assert!(matches!(
            caccioppoli_check(&prob, &u, &far, CubePlacement::Dirichlet),
            Err(Error::CubeOutOfDomain { .. })
        ));
    }

    #[test]
    fn sampled_cubes_respect_placement() {
        let prob = setup(ScalarWeight::one(), BoundarySpec::Edges(vec![Edge::Left]), FieldSource::Zero)
            .discretize(64)
            .unwrap();
        let inner = sample_cubes(&prob.boundary, CubePlacement::Interior, 1.5, 20, 7);
        assert_eq!(inner.len(), 20);
        assert!(cubes_aligned(prob.grid(), &inner, 1.5));
        let again = sample_cubes(&prob.boundary, CubePlacement::Interior, 1.5, 20, 7);
        assert_eq!(inner, again);
        let bdry = sample_cubes(&prob.boundary, CubePlacement::Dirichlet, 1.5, 20, 7);
        assert_eq!(bdry.len(), 20);
        assert!(bdry.iter().all(|c| c.scaled(1.5).lower()[0] <= 1e-12));
    }

    #[test]
    fn trivial_solution_local_constants_are_refinement_independent() {
        let s = setup(
            ScalarWeight::one(),
            BoundarySpec::FullBoundary,
            FieldSource::gradient_of(|x| (x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1])) * (1.0 + x[0])),
        );
        let coarse = s.discretize(64).unwrap();
        let cubes = sample_cubes(&coarse.boundary, CubePlacement::Interior, 2.0, 10, 3);
        let mut consts = Vec::new();
        for m in [64usize, 128] {
            let prob = s.discretize(m).unwrap();
            let u = solve_zaremba(&prob, &SolveOptions::default()).unwrap().u;
            consts.push(reverse_holder_check(&prob, &u, &cubes, 1.5, 2.0).unwrap().constant);
        }
        assert!((consts[1] / consts[0] - 1.0).abs() < 0.01, "{consts:?}");
    }
}
