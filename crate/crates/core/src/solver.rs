//! Discrete mixed Dirichlet/Neumann problem
//!
//! ```text
//! -div(|∇u|^{p-2} A ∇u) = -div(|G|^{p-2} A G)     (measure form)
//! -div(|M∇u|^{p-2} M² ∇u) = -div(|MG|^{p-2} M² G)  (multiplier form)
//! ```
//!
//! with `u = 0` on the Dirichlet nodes and the natural condition elsewhere
//! on the boundary. Isotropic and multiplier problems are solved by
//! minimizing the convex energy; anisotropic measure problems with
//! `p ≠ 2` by Newton on the weak form.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{gradient_at_quadpoints, integrate_power, DiscreteField, Quadrature, VectorField};
use crate::error::{Error, Result};
use crate::geometry::{build_grid, mark_dirichlet, BoundaryPartition, BoundarySpec, Cube, Grid};
use crate::linalg::{dot, norm};
use crate::newton::{default_schedule, FluxModel, NewtonOptions, NonlinearSystem};
use crate::weights::{MatrixWeight, WeightForm};
use crate::{Mat2, Point};

pub type VectorFn = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// Where the datum `G` comes from.
#[derive(Clone)]
pub enum FieldSource {
    Zero,
    Constant([f64; 2]),
    /// Closed-form `G(x)` evaluated at the Gauss points.
    Function(VectorFn),
    /// `∇w_h` for the nodal interpolant `w_h` of `w`, set to zero on the
    /// Dirichlet nodes.
    GradientOf(ScalarFn),
    /// Random trigonometric field with `modes²` terms per component.
    RandomSmooth { modes: usize, seed: u64, amplitude: f64 },
}

impl fmt::Debug for FieldSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldSource::Zero => write!(f, "Zero"),
            FieldSource::Constant(c) => write!(f, "Constant({c:?})"),
            FieldSource::Function(_) => write!(f, "Function(..)"),
            FieldSource::GradientOf(_) => write!(f, "GradientOf(..)"),
            FieldSource::RandomSmooth { modes, seed, amplitude } => {
                write!(f, "RandomSmooth {{ modes: {modes}, seed: {seed}, amplitude: {amplitude} }}")
            }
        }
    }
}

impl FieldSource {
    pub fn function(f: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static) -> Self {
        FieldSource::Function(Arc::new(f))
    }

    pub fn gradient_of(w: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        FieldSource::GradientOf(Arc::new(w))
    }

    fn sample(&self, quad: &Quadrature, boundary: &BoundaryPartition) -> VectorField {
        match self {
            FieldSource::Zero => VectorField::zeros(quad),
            FieldSource::Constant(c) => VectorField::from_fn(quad, |_| *c),
            FieldSource::Function(f) => VectorField::from_fn(quad, |x| f(x)),
            FieldSource::GradientOf(w) => {
                let mut wh = DiscreteField::interpolate(quad.grid(), |x| w(x));
                for &k in boundary.dirichlet().indices() {
                    wh.values[k] = 0.0;
                }
                gradient_at_quadpoints(&wh, quad)
            }
            FieldSource::RandomSmooth { modes, seed, amplitude } => {
                let f = random_smooth(*modes, *seed, *amplitude, quad.grid().cube());
                VectorField::from_fn(quad, |x| f(x))
            }
        }
    }
}

/// `G_i(x) = a Σ_{k,l} c_{ikl} cos(π k x̂ + α) cos(π l ŷ + β) / (1 + k + l)`
/// in coordinates `x̂, ŷ ∈ [0, 1]` of the cube.
fn random_smooth(modes: usize, seed: u64, amplitude: f64, cube: &Cube) -> impl Fn(Point) -> [f64; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms = Vec::with_capacity(2 * modes * modes);
    for comp in 0..2 {
        for k in 0..modes {
            for l in 0..modes {
                let c: f64 = rng.gen_range(-1.0..1.0);
                let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let b: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                terms.push((comp, k as f64, l as f64, c / (1.0 + (k + l) as f64), a, b));
            }
        }
    }
    let lo = cube.lower();
    let side = cube.side();
    move |x: Point| {
        let (xh, yh) = ((x[0] - lo[0]) / side, (x[1] - lo[1]) / side);
        let mut g = [0.0; 2];
        for &(comp, k, l, c, a, b) in &terms {
            g[comp] += c * (std::f64::consts::PI * k * xh + a).cos() * (std::f64::consts::PI * l * yh + b).cos();
        }
        [amplitude * g[0], amplitude * g[1]]
    }
}

/// Resolution-independent description of a problem.
#[derive(Debug, Clone)]
pub struct ZarembaSetup {
    pub cube: Cube,
    pub p: f64,
    pub weight: MatrixWeight,
    pub boundary: BoundarySpec,
    pub data: FieldSource,
}

impl ZarembaSetup {
    pub fn discretize(&self, m: usize) -> Result<ZarembaProblem> {
        let grid = build_grid(self.cube, m)?;
        let boundary = mark_dirichlet(&grid, &self.boundary)?;
        let quad = Quadrature::new(&grid);
        let g = self.data.sample(&quad, &boundary);
        ZarembaProblem::new(self.p, self.weight.clone(), boundary, g)
    }
}

#[derive(Debug, Clone)]
pub struct ZarembaProblem {
    pub p: f64,
    pub weight: MatrixWeight,
    pub boundary: BoundaryPartition,
    pub g: VectorField,
}

impl ZarembaProblem {
    pub fn new(p: f64, weight: MatrixWeight, boundary: BoundaryPartition, g: VectorField) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::param(format!("p = {p} must exceed 1")));
        }
        if g.grid != *boundary.grid() {
            return Err(Error::param("datum and boundary partition live on different grids"));
        }
        if g.values.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(Error::param("datum G is not finite at every quadrature point"));
        }
        Ok(ZarembaProblem { p, weight, boundary, g })
    }

    pub fn grid(&self) -> &Grid {
        self.boundary.grid()
    }

    pub fn form(&self) -> WeightForm {
        self.weight.form
    }

    fn free_mask(&self) -> Vec<bool> {
        let d = self.boundary.dirichlet().mask(self.grid());
        d.iter().map(|&b| !b).collect()
    }

    /// Gauss-point data shared by all evaluations.
    fn discrete(&self) -> Result<Discrete> {
        let quad = Quadrature::new(self.grid());
        let omega = quad.eval_scalar(&self.weight.scalar)?;
        let mats = if self.weight.is_isotropic() && self.weight.form == WeightForm::Measure {
            None
        } else {
            Some(quad.eval_matrix(&self.weight)?)
        };
        Ok(Discrete { quad, omega, mats })
    }

    fn model(&self, d: &Discrete) -> FluxModel {
        match (&d.mats, self.weight.form) {
            (None, _) => FluxModel::Isotropic(d.omega.clone()),
            (Some(m), WeightForm::Multiplier) => FluxModel::Multiplier(m.clone()),
            (Some(_), WeightForm::Measure) if self.p == 2.0 => {
                // A ξ = M² ξ with M the symmetric root, which keeps an energy
                let root = self.weight.multiplier_root();
                let roots: Vec<Mat2> = d.quad.points().iter().map(|&x| root.eval(x).unwrap_or([[0.0; 2]; 2])).collect();
                FluxModel::Multiplier(roots)
            }
            (Some(m), WeightForm::Measure) => FluxModel::Anisotropic(m.clone()),
        }
    }

    /// `∫|∇v|^s ω` (measure form) or `∫|M∇v|^s` (multiplier form) of a
    /// Gauss-point vector field.
    fn weighted_power(&self, d: &Discrete, field: &[[f64; 2]], s: f64, mask: Option<&[bool]>) -> f64 {
        match self.weight.form {
            WeightForm::Measure => {
                let mags: Vec<f64> = field.iter().map(|v| v[0].hypot(v[1])).collect();
                integrate_power(&d.quad, &mags, &d.omega, s, mask)
            }
            WeightForm::Multiplier => {
                let mats = d.mats.as_ref().expect("multiplier data");
                let mags: Vec<f64> = field
                    .iter()
                    .zip(mats)
                    .map(|(v, m)| (m[0][0] * v[0] + m[0][1] * v[1]).hypot(m[1][0] * v[0] + m[1][1] * v[1]))
                    .collect();
                integrate_power(&d.quad, &mags, &vec![1.0; mags.len()], s, mask)
            }
        }
    }
}

struct Discrete {
    quad: Quadrature,
    omega: Vec<f64>,
    mats: Option<Vec<Mat2>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_newton: usize,
    /// Regularization schedule; `None` selects `{1e-2, 1e-4, 1e-6}` for
    /// `p ≠ 2` and no regularization for `p = 2`.
    pub eps_schedule: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-10, max_newton: 200, eps_schedule: None }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub u: DiscreteField,
    /// Value of the (unregularized) functional at `u`.
    pub energy: f64,
    pub weighted_grad_norm: f64,
    pub residual_norm: f64,
    pub newton_iterations: usize,
    pub final_eps: f64,
}

pub fn solve_zaremba(prob: &ZarembaProblem, opts: &SolveOptions) -> Result<SolveResult> {
    solve_zaremba_from(prob, opts, None)
}

/// As [`solve_zaremba`], starting Newton from `initial` (its Dirichlet
/// values are replaced by zero).
pub fn solve_zaremba_from(prob: &ZarembaProblem, opts: &SolveOptions, initial: Option<&DiscreteField>) -> Result<SolveResult> {
    if prob.boundary.dirichlet().is_empty() {
        return Err(Error::EmptyDirichletSet);
    }
    let grid = *prob.grid();
    let free = prob.free_mask();
    let mut u0 = match initial {
        Some(f) if f.grid == grid => f.values.clone(),
        Some(_) => return Err(Error::param("initial guess lives on a different grid")),
        None => vec![0.0; grid.node_count()],
    };
    u0.iter_mut().zip(&free).for_each(|(v, &f)| if !f { *v = 0.0 });

    let d = prob.discrete()?;
    let sys = NonlinearSystem {
        quad: &d.quad,
        p: prob.p,
        model: prob.model(&d),
        data: if prob.g.is_zero() { None } else { Some(prob.g.values.clone()) },
        free,
    };
    let schedule = opts.eps_schedule.clone().unwrap_or_else(|| default_schedule(prob.p));
    let out = sys.solve(u0, &schedule, NewtonOptions { tol: opts.tol, max_newton: opts.max_newton })?;
    let u = DiscreteField { grid, values: out.u };
    let grad = gradient_at_quadpoints(&u, &d.quad);
    let weighted_grad_norm = prob.weighted_power(&d, &grad.values, prob.p, None);
    let energy = functional(prob, &d, &grad.values);
    Ok(SolveResult {
        u,
        energy,
        weighted_grad_norm,
        residual_norm: out.relative_residual,
        newton_iterations: out.iterations,
        final_eps: out.final_eps,
    })
}

/// `∫ (1/p)|∇u|^{p-2}⟨A∇u,∇u⟩ - ∫|G|^{p-2}⟨AG,∇u⟩`, or the multiplier analogue.
fn functional(prob: &ZarembaProblem, d: &Discrete, grad: &[[f64; 2]]) -> f64 {
    let p = prob.p;
    let w = d.quad.weight();
    let apply = |k: usize, v: [f64; 2]| -> [f64; 2] {
        match &d.mats {
            None => [d.omega[k] * v[0], d.omega[k] * v[1]],
            Some(m) => {
                let m = &m[k];
                let mv = [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]];
                if prob.weight.form == WeightForm::Multiplier {
                    [m[0][0] * mv[0] + m[0][1] * mv[1], m[1][0] * mv[0] + m[1][1] * mv[1]]
                } else {
                    mv
                }
            }
        }
    };
    let size = |k: usize, v: [f64; 2]| -> f64 {
        match (&d.mats, prob.weight.form) {
            (Some(m), WeightForm::Multiplier) => {
                let m = &m[k];
                (m[0][0] * v[0] + m[0][1] * v[1]).hypot(m[1][0] * v[0] + m[1][1] * v[1])
            }
            _ => v[0].hypot(v[1]),
        }
    };
    let mut total = 0.0;
    for (k, (&du, &g)) in grad.iter().zip(&prob.g.values).enumerate() {
        let au = apply(k, du);
        let ag = apply(k, g);
        let su = size(k, du);
        let sg = size(k, g);
        let pu = if su == 0.0 { 0.0 } else { su.powf(p - 2.0) };
        let pg = if sg == 0.0 { 0.0 } else { sg.powf(p - 2.0) };
        total += pu * (au[0] * du[0] + au[1] * du[1]) / p - pg * (ag[0] * du[0] + ag[1] * du[1]);
    }
    w * total
}

/// `∫|∇u|^p ω / ∫|G|^p ω`, or `∫|M∇u|^p / ∫|MG|^p` in multiplier form.
pub fn energy_ratio(prob: &ZarembaProblem, result: &SolveResult) -> Result<f64> {
    let d = prob.discrete()?;
    let den = prob.weighted_power(&d, &prob.g.values, prob.p, None);
    if den <= 0.0 {
        return Err(Error::ZeroData);
    }
    let grad = gradient_at_quadpoints(&result.u, &d.quad);
    Ok(prob.weighted_power(&d, &grad.values, prob.p, None) / den)
}

/// Pair `(N_u, N_G)` of weighted `L^s` powers of `∇u` and `G`, optionally
/// restricted to the Gauss points selected by `mask`.
pub fn gradient_powers(prob: &ZarembaProblem, u: &DiscreteField, s: f64, mask: Option<&[bool]>) -> Result<(f64, f64)> {
    let d = prob.discrete()?;
    let grad = gradient_at_quadpoints(u, &d.quad);
    Ok((prob.weighted_power(&d, &grad.values, s, mask), prob.weighted_power(&d, &prob.g.values, s, mask)))
}

/// Largest normalized Galerkin residual `|R(u)φ| / ∫|f(G)||∇φ|` over
/// `n_tests` random test fields vanishing on the Dirichlet nodes.
pub fn residual_check(prob: &ZarembaProblem, u: &DiscreteField, eps: f64, n_tests: usize, seed: u64) -> Result<f64> {
    let d = prob.discrete()?;
    let grid = *prob.grid();
    let free = prob.free_mask();
    let model = prob.model(&d);
    let grad = gradient_at_quadpoints(u, &d.quad);
    let flux_u: Vec<[f64; 2]> = grad.values.iter().enumerate().map(|(k, &x)| model.flux(k, x, prob.p, eps)).collect();
    let flux_g: Vec<[f64; 2]> = prob.g.values.iter().enumerate().map(|(k, &x)| model.flux(k, x, prob.p, eps)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_tests {
        let phi: Vec<f64> = free.iter().map(|&f| if f { rng.gen_range(-1.0..1.0) } else { 0.0 }).collect();
        let gphi = gradient_at_quadpoints(&DiscreteField { grid, values: phi }, &d.quad);
        let mut r = 0.0;
        let mut scale = 0.0;
        for ((fu, fg), gp) in flux_u.iter().zip(&flux_g).zip(&gphi.values) {
            r += (fu[0] - fg[0]) * gp[0] + (fu[1] - fg[1]) * gp[1];
            scale += fg[0].hypot(fg[1]) * gp[0].hypot(gp[1]);
        }
        let rel = if scale > 0.0 { (r / scale).abs() } else { r.abs() };
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Relative Euclidean distance between two nodal vectors.
pub fn relative_difference(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let base = norm(a).max(norm(b));
    if base == 0.0 {
        0.0
    } else {
        norm(&diff) / base
    }
}

/// `⟨a, b⟩` helper kept for the acceptance checks.
pub fn inner(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Edge;
    use crate::weights::{AngleField, ScalarWeight};
    use std::f64::consts::PI;

    fn unit_setup(p: f64, weight: MatrixWeight, boundary: BoundarySpec, data: FieldSource) -> ZarembaSetup {
        ZarembaSetup { cube: Cube::unit_square(), p, weight, boundary, data }
    }

    fn iso(w: ScalarWeight) -> MatrixWeight {
        MatrixWeight::isotropic(w, WeightForm::Measure)
    }

    #[test]
    fn zero_data_gives_zero() {
        for p in [1.5, 2.0, 3.0] {
            let prob = unit_setup(p, iso(ScalarWeight::one()), BoundarySpec::FullBoundary, FieldSource::Zero)
                .discretize(8)
                .unwrap();
            let r = solve_zaremba(&prob, &SolveOptions::default()).unwrap();
            assert!(r.u.values.iter().all(|&v| v == 0.0));
            assert_eq!(r.energy, 0.0);
            assert!(matches!(energy_ratio(&prob, &r), Err(Error::ZeroData)));
        }
    }

    #[test]
    fn empty_dirichlet_set_is_refused() {
        let prob = unit_setup(2.0, iso(ScalarWeight::one()), BoundarySpec::Edges(vec![]), FieldSource::Constant([1.0, 0.0]))
            .discretize(4)
            .unwrap();
        assert!(matches!(solve_zaremba(&prob, &SolveOptions::default()), Err(Error::EmptyDirichletSet)));
    }

    #[test]
    fn gradient_data_is_reproduced_for_all_forms() {
        let w = ScalarWeight::power([0.0, 0.0], 0.5);
        let aniso = MatrixWeight::new(w.clone(), AngleField::Constant(0.5), 0.5, 2.0, WeightForm::Measure).unwrap();
        let mult = MatrixWeight::new(w.pow(0.5), AngleField::Constant(0.3), 0.7, 2.0, WeightForm::Multiplier).unwrap();
        for weight in [iso(w.clone()), aniso, mult] {
            for p in [1.5, 2.0, 3.0] {
                let prob = unit_setup(
                    p,
                    weight.clone(),
                    BoundarySpec::Edges(vec![Edge::Left, Edge::Bottom]),
                    FieldSource::gradient_of(|x| (2.0 * x[0]).sin() * (1.0 + x[1] * x[1])),
                )
                .discretize(12)
                .unwrap();
                let r = solve_zaremba(&prob, &SolveOptions::default()).unwrap();
                let wh = {
                    let mut f = DiscreteField::interpolate(prob.grid(), |x| (2.0 * x[0]).sin() * (1.0 + x[1] * x[1]));
                    for &k in prob.boundary.dirichlet().indices() {
                        f.values[k] = 0.0;
                    }
                    f
                };
                let err = r.u.values.iter().zip(&wh.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-6, "{:?} p={p} err={err}", weight.form);
                assert!((energy_ratio(&prob, &r).unwrap() - 1.0).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn one_dimensional_profile() {
        let mut errs = Vec::new();
        for m in [16usize, 32] {
            let prob = unit_setup(
                2.0,
                iso(ScalarWeight::one()),
                BoundarySpec::Edges(vec![Edge::Left]),
                FieldSource::function(|x| [x[0] * x[0], 0.0]),
            )
            .discretize(m)
            .unwrap();
            let r = solve_zaremba(&prob, &SolveOptions::default()).unwrap();
            assert_eq!(r.newton_iterations, 1);
            let g = prob.grid();
            let err = (0..g.node_count())
                .map(|k| (r.u.values[k] - g.node_coords(k)[0].powi(3) / 3.0).abs())
                .fold(0.0, f64::max);
            errs.push(err);
            assert!(prob.boundary.dirichlet().indices().iter().all(|&k| r.u.values[k] == 0.0));
        }
        // bilinears are nodally exact on one-dimensional profiles
        assert!(errs.iter().all(|&e| e < 1e-12), "{errs:?}");
    }

    #[test]
    fn neumann_flux_converges() {
        // one-sided difference at x1 = 1 against g(1) = 1
        let mut errs = Vec::new();
        for m in [8usize, 16, 32] {
            let prob = unit_setup(
                2.0,
                iso(ScalarWeight::one()),
                BoundarySpec::Edges(vec![Edge::Left]),
                FieldSource::function(|x| [x[0] * x[0], 0.0]),
            )
            .discretize(m)
            .unwrap();
            let r = solve_zaremba(&prob, &SolveOptions::default()).unwrap();
            let g = prob.grid();
            let (a, b) = (g.node_index(m, m / 2), g.node_index(m - 1, m / 2));
            errs.push(((r.u.values[a] - r.u.values[b]) / g.h() - 1.0).abs());
        }
        assert!(errs[1] < errs[0] && errs[2] < errs[1]);
        assert!((errs[1] / errs[2]).log2() >= 0.9);
    }

    #[test]
    fn projection_contracts_for_p2() {
        for seed in 0..10 {
            let prob = unit_setup(
                2.0,
                iso(ScalarWeight::power([0.0, 0.0], 0.5)),
                BoundarySpec::Edges(vec![Edge::Left]),
                FieldSource::RandomSmooth { modes: 3, seed, amplitude: 1.0 },
            )
            .discretize(12)
            .unwrap();
            let r = solve_zaremba(&prob, &SolveOptions::default()).unwrap();
            assert!(energy_ratio(&prob, &r).unwrap() <= 1.0 + 1e-8);
        }
    }

    #[test]
    fn measure_and_multiplier_agree_at_p2() {
        let a = MatrixWeight::new(
            ScalarWeight::power([0.0, 0.0], 0.5),
            AngleField::Polar { center: [0.0, 0.0], offset: 0.2 },
            0.4,
            3.0,
            WeightForm::Measure,
        )
        .unwrap();
        let data = FieldSource::RandomSmooth { modes: 3, seed: 4, amplitude: 1.0 };
        let spec = BoundarySpec::Checkerboard { period: 0.5, edges: Edge::ALL.to_vec() };
        let pa = unit_setup(2.0, a.clone(), spec.clone(), data.clone()).discretize(16).unwrap();
        let pm = unit_setup(2.0, a.multiplier_root(), spec, data).discretize(16).unwrap();
        let ua = solve_zaremba(&pa, &SolveOptions::default()).unwrap().u;
        let um = solve_zaremba(&pm, &SolveOptions::default()).unwrap().u;
        let err = ua.values.iter().zip(&um.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8);
    }

    #[test]
    fn solution_independent_of_initial_guess() {
        for p in [1.5, 3.0] {
            let prob = unit_setup(
                p,
                iso(ScalarWeight::power([0.0, 0.0], 0.5)),
                BoundarySpec::Edges(vec![Edge::Left, Edge::Top]),
                FieldSource::RandomSmooth { modes: 2, seed: 1, amplitude: 1.0 },
            )
            .discretize(10)
            .unwrap();
            let opts = SolveOptions::default();
            let a = solve_zaremba(&prob, &opts).unwrap().u;
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let guess = DiscreteField::new(prob.grid(), (0..prob.grid().node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .unwrap();
            let b = solve_zaremba_from(&prob, &opts, Some(&guess)).unwrap().u;
            let err = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(err < 1e-8, "p={p} err={err}");
        }
    }

    #[test]
    fn residual_check_detects_perturbation() {
        let prob = unit_setup(
            3.0,
            iso(ScalarWeight::power([0.0, 0.0], 0.5)),
            BoundarySpec::Edges(vec![Edge::Left]),
            FieldSource::RandomSmooth { modes: 3, seed: 8, amplitude: 1.0 },
        )
        .discretize(12)
        .unwrap();
        let r = solve_zaremba(&prob, &SolveOptions::default()).unwrap();
        let exact = residual_check(&prob, &r.u, r.final_eps, 20, 1).unwrap();
        assert!(exact <= 1e-8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pert = r.u.clone();
        for (k, v) in pert.values.iter_mut().enumerate() {
            if !prob.boundary.dirichlet().contains(k) {
                *v += 1e-2 * rng.gen_range(-1.0..1.0);
            }
        }
        let bad = residual_check(&prob, &pert, r.final_eps, 20, 1).unwrap();
        assert!(bad > 10.0 * 1e-8);
    }

    #[test]
    fn manufactured_dirichlet_solution_converges() {
        let mut errs = Vec::new();
        for m in [16usize, 32] {
            let prob = unit_setup(
                2.0,
                iso(ScalarWeight::one()),
                BoundarySpec::FullBoundary,
                FieldSource::function(|x| [PI * (PI * x[0]).cos() * (PI * x[1]).sin(), PI * (PI * x[0]).sin() * (PI * x[1]).cos()]),
            )
            .discretize(m)
            .unwrap();
            let r = solve_zaremba(&prob, &SolveOptions::default()).unwrap();
            let quad = Quadrature::new(prob.grid());
            let uh = r.u.at_quadpoints(&quad);
            let e2: f64 = uh
                .iter()
                .zip(quad.points())
                .map(|(v, x)| (v - (PI * x[0]).sin() * (PI * x[1]).sin()).powi(2))
                .sum::<f64>()
                * quad.weight();
            errs.push(e2.sqrt());
        }
        assert!((errs[0] / errs[1]).log2() > 1.8);
    }
}
