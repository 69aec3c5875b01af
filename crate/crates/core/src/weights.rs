//! Scalar and matrix weights, weighted measures and Muckenhoupt estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::GAUSS_1D;
use crate::error::{Error, Result};
use crate::geometry::Cube;
use crate::{Mat2, Point};

/// Positive weight `μ(x)` built from constants and radial powers.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarWeight {
    Constant(f64),
    /// `|x - center|^exponent`
    Power { center: Point, exponent: f64 },
    Product(Vec<ScalarWeight>),
}

impl ScalarWeight {
    pub fn one() -> Self {
        ScalarWeight::Constant(1.0)
    }

    pub fn power(center: Point, exponent: f64) -> Self {
        ScalarWeight::Power { center, exponent }
    }

    pub fn eval(&self, x: Point) -> Result<f64> {
        match self {
            ScalarWeight::Constant(c) => Ok(*c),
            ScalarWeight::Power { center, exponent } => {
                let d = (x[0] - center[0]).hypot(x[1] - center[1]);
                if *exponent == 0.0 {
                    Ok(1.0)
                } else if d == 0.0 {
                    if *exponent < 0.0 {
                        Err(Error::SingularEvaluation(x))
                    } else {
                        Ok(0.0)
                    }
                } else {
                    Ok(d.powf(*exponent))
                }
            }
            ScalarWeight::Product(ws) => ws.iter().try_fold(1.0, |acc, w| Ok(acc * w.eval(x)?)),
        }
    }

    /// The weight `μ^t`.
    pub fn pow(&self, t: f64) -> ScalarWeight {
        match self {
            ScalarWeight::Constant(c) => ScalarWeight::Constant(c.powf(t)),
            ScalarWeight::Power { center, exponent } => {
                ScalarWeight::Power { center: *center, exponent: exponent * t }
            }
            ScalarWeight::Product(ws) => ScalarWeight::Product(ws.iter().map(|w| w.pow(t)).collect()),
        }
    }

    /// The weight `c μ`.
    pub fn scaled(&self, c: f64) -> ScalarWeight {
        match self {
            ScalarWeight::Constant(a) => ScalarWeight::Constant(a * c),
            other => ScalarWeight::Product(vec![ScalarWeight::Constant(c), other.clone()]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ScalarWeight::Constant(c) if !(*c > 0.0 && c.is_finite()) => {
                Err(Error::param(format!("constant weight must be positive, got {c}")))
            }
            ScalarWeight::Power { exponent, .. } if !exponent.is_finite() => {
                Err(Error::param("power weight exponent must be finite"))
            }
            ScalarWeight::Product(ws) => ws.iter().try_for_each(|w| w.validate()),
            _ => Ok(()),
        }
    }
}

/// Field of principal directions of a matrix weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AngleField {
    Constant(f64),
    /// Angle of `x - center` plus `offset`.
    Polar { center: Point, offset: f64 },
}

impl AngleField {
    pub fn eval(&self, x: Point) -> f64 {
        match *self {
            AngleField::Constant(t) => t,
            AngleField::Polar { center, offset } => (x[1] - center[1]).atan2(x[0] - center[0]) + offset,
        }
    }
}

/// Whether a matrix weight plays the role of `A` (inside the flux as
/// `|∇u|^{p-2} A ∇u`) or of a multiplier `M` (as `|M∇u|^{p-2} M² ∇u`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightForm {
    Measure,
    Multiplier,
}

/// Symmetric positive definite weight `s(x) R(θ) diag(1, κ) R(θ)ᵀ`; the
/// spectral norm equals the scalar part `s(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixWeight {
    pub scalar: ScalarWeight,
    pub angle: AngleField,
    pub kappa: f64,
    pub lambda_bound: f64,
    pub form: WeightForm,
}

impl MatrixWeight {
    pub fn new(
        scalar: ScalarWeight,
        angle: AngleField,
        kappa: f64,
        lambda_bound: f64,
        form: WeightForm,
    ) -> Result<Self> {
        scalar.validate()?;
        if !(lambda_bound >= 1.0 && lambda_bound.is_finite()) {
            return Err(Error::param(format!("condition bound must be at least 1, got {lambda_bound}")));
        }
        if !(kappa <= 1.0 && kappa * lambda_bound >= 1.0 - 1e-12) {
            return Err(Error::param(format!("kappa = {kappa} must lie in [1/Lambda, 1]")));
        }
        Ok(MatrixWeight { scalar, angle, kappa, lambda_bound, form })
    }

    /// `s(x) Id`.
    pub fn isotropic(scalar: ScalarWeight, form: WeightForm) -> Self {
        MatrixWeight { scalar, angle: AngleField::Constant(0.0), kappa: 1.0, lambda_bound: 1.0, form }
    }

    pub fn is_isotropic(&self) -> bool {
        self.kappa == 1.0
    }

    pub fn eval(&self, x: Point) -> Result<Mat2> {
        let s = self.scalar.eval(x)?;
        Ok(self.shape(x, s, self.kappa))
    }

    fn shape(&self, x: Point, s: f64, kappa: f64) -> Mat2 {
        if kappa == 1.0 {
            return [[s, 0.0], [0.0, s]];
        }
        let t = self.angle.eval(x);
        let (sn, cs) = t.sin_cos();
        let b = s * kappa;
        [
            [s * cs * cs + b * sn * sn, (s - b) * cs * sn],
            [(s - b) * cs * sn, s * sn * sn + b * cs * cs],
        ]
    }

    /// The symmetric square root, as a multiplier-form weight: `M² = A`.
    pub fn multiplier_root(&self) -> MatrixWeight {
        MatrixWeight {
            scalar: self.scalar.pow(0.5),
            angle: self.angle,
            kappa: self.kappa.sqrt(),
            lambda_bound: self.lambda_bound.sqrt(),
            form: WeightForm::Multiplier,
        }
    }
}

/// Spectral condition number of a symmetric positive definite 2x2 matrix.
pub fn condition_number(a: &Mat2) -> f64 {
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    let (hi, lo) = (0.5 * tr + disc, 0.5 * tr - disc);
    hi / lo
}

/// `∫_cube μ dx` by 2x2 Gauss quadrature on `cells × cells` subcells.
pub fn weighted_measure(w: &ScalarWeight, cube: &Cube, cells: usize) -> Result<f64> {
    if cells < 1 {
        return Err(Error::InvalidResolution(cells, 1));
    }
    if cube.halfwidth == 0.0 {
        return Ok(0.0);
    }
    let h = cube.side() / cells as f64;
    let lo = cube.lower();
    let mut total = 0.0;
    for cj in 0..cells {
        for ci in 0..cells {
            total += cell_integral(w, [lo[0] + ci as f64 * h, lo[1] + cj as f64 * h], h)?;
        }
    }
    Ok(total)
}

fn cell_integral(w: &ScalarWeight, corner: Point, h: f64) -> Result<f64> {
    let mut s = 0.0;
    for gy in GAUSS_1D {
        for gx in GAUSS_1D {
            let x = [corner[0] + gx * h, corner[1] + gy * h];
            let v = w.eval(x).map_err(|_| Error::QuadratureSingularity(x))?;
            s += v;
        }
    }
    Ok(0.25 * h * h * s)
}

/// Lower bound for the Muckenhoupt constant over a finite cube family.
#[derive(Debug, Clone, PartialEq)]
pub struct ApEstimate {
    pub value: f64,
    pub p: f64,
    pub cube_count: usize,
    pub max_cube: Cube,
}

/// Estimate `sup_Q (⨍_Q μ)(⨍_Q μ^{-1/(p-1)})^{p-1}` over all dyadic
/// subcubes of `cube` down to side `4h` and `random_samples` random
/// lattice cubes, where `h = side / 2^{depth+2}` is the quadrature cell size.
pub fn ap_constant_estimate(
    w: &ScalarWeight,
    p: f64,
    cube: &Cube,
    depth: usize,
    random_samples: usize,
    seed: u64,
) -> Result<ApEstimate> {
    if !(p > 1.0) {
        return Err(Error::param(format!("p = {p} must exceed 1")));
    }
    if depth < 1 {
        return Err(Error::param("depth must be at least 1"));
    }
    let n = 1usize << (depth + 2);
    let h = cube.side() / n as f64;
    let lo = cube.lower();
    let dual = w.pow(-1.0 / (p - 1.0));

    // Summed-area tables of the per-cell integrals.
    let stride = n + 1;
    let mut sa = vec![0.0; stride * stride];
    let mut sb = vec![0.0; stride * stride];
    for j in 0..n {
        let (mut row_a, mut row_b) = (0.0, 0.0);
        for i in 0..n {
            let corner = [lo[0] + i as f64 * h, lo[1] + j as f64 * h];
            row_a += cell_integral(w, corner, h)?;
            row_b += cell_integral(&dual, corner, h)?;
            sa[(j + 1) * stride + i + 1] = sa[j * stride + i + 1] + row_a;
            sb[(j + 1) * stride + i + 1] = sb[j * stride + i + 1] + row_b;
        }
    }
    let rect = |t: &[f64], i: usize, j: usize, k: usize| {
        t[(j + k) * stride + i + k] - t[j * stride + i + k] - t[(j + k) * stride + i] + t[j * stride + i]
    };
    let quotient = |i: usize, j: usize, k: usize| {
        let vol = (k as f64 * h).powi(2);
        let a = rect(&sa, i, j, k) / vol;
        let b = rect(&sb, i, j, k) / vol;
        a * b.powf(p - 1.0)
    };

    let mut best = (f64::NEG_INFINITY, (0usize, 0usize, n));
    let mut count = 0usize;
    let consider = |i: usize, j: usize, k: usize, best: &mut (f64, (usize, usize, usize))| {
        let v = quotient(i, j, k);
        if v > best.0 {
            *best = (v, (i, j, k));
        }
    };
    for level in 0..=depth {
        let k = n >> level;
        for bj in 0..(1usize << level) {
            for bi in 0..(1usize << level) {
                consider(bi * k, bj * k, k, &mut best);
                count += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random_samples {
        let k = rng.gen_range(4..=n);
        let i = rng.gen_range(0..=n - k);
        let j = rng.gen_range(0..=n - k);
        consider(i, j, k, &mut best);
        count += 1;
    }
    let (value, (i, j, k)) = best;
    let half = 0.5 * k as f64 * h;
    let max_cube = Cube {
        center: [lo[0] + i as f64 * h + half, lo[1] + j as f64 * h + half],
        halfwidth: half,
    };
    Ok(ApEstimate { value, p, cube_count: count, max_cube })
}

/// Two-sided measure comparison between a cube `Q` and a subcube `U`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoublingReport {
    /// `μ(Q) / μ(U)`
    pub lhs: f64,
    /// `[μ]_{A_p} (|Q| / |U|)^p`
    pub rhs: f64,
    pub holds: bool,
    /// Exponent `δ` with `μ(U)/μ(Q) = (|U|/|Q|)^δ`; `None` when `U = Q`.
    pub ub_exponent: Option<f64>,
}

/// Compare `μ(Q)/μ(U)` with `[μ]_{A_p}(|Q|/|U|)^p`. Both measures use
/// `cells` quadrature cells per axis.
pub fn check_strong_doubling(
    w: &ScalarWeight,
    p: f64,
    q: &Cube,
    u: &Cube,
    ap: &ApEstimate,
    cells: usize,
) -> Result<DoublingReport> {
    if u.halfwidth <= 0.0 {
        return Err(Error::EmptyRegion);
    }
    if !q.contains_cube(u, 1e-12 * q.halfwidth) {
        return Err(Error::OutOfDomain);
    }
    let mq = weighted_measure(w, q, cells)?;
    let mu = weighted_measure(w, u, cells)?;
    if mu <= 0.0 {
        return Err(Error::EmptyRegion);
    }
    let vol_ratio = q.volume() / u.volume();
    let lhs = mq / mu;
    let rhs = ap.value * vol_ratio.powf(p);
    let ub_exponent = (vol_ratio > 1.0 + 1e-12).then(|| lhs.ln() / vol_ratio.ln());
    Ok(DoublingReport { lhs, rhs, holds: lhs <= rhs * (1.0 + 1e-12), ub_exponent })
}
