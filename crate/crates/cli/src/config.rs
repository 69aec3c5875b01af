//! Experiment configuration: one TOML file per run.
//!
//! Every section is optional at parse time; subcommands state which ones
//! they need. Unknown keys are rejected.

use std::path::PathBuf;

use serde::Deserialize;
use zaremba_core::geometry::{AxisSegment, CantorSet, InteriorShape, SetGeometry};
use zaremba_core::weights::AngleField;
use zaremba_core::{BoundarySpec, Cube, Edge, FieldSource, MatrixWeight, Point, ScalarWeight, WeightForm};

use crate::expr::Expr;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub domain: Option<DomainConfig>,
    pub weight: Option<WeightConfig>,
    pub boundary: Option<BoundaryConfig>,
    pub exponents: Option<ExponentsConfig>,
    pub solver: Option<SolverConfig>,
    pub data: Option<DataConfig>,
    pub set: Option<SetConfig>,
    pub sweep: Option<SweepConfig>,
    pub ap: Option<ApConfig>,
    pub capacity: Option<CapacityConfig>,
    pub cen: Option<CenConfig>,
    pub cantor: Option<CantorConfig>,
    pub local: Option<LocalConfig>,
}

fn unit_center() -> Point {
    [0.5, 0.5]
}
fn half() -> f64 {
    0.5
}
fn one() -> f64 {
    1.0
}
fn origin() -> Point {
    [0.0, 0.0]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(default = "unit_center")]
    pub center: Point,
    #[serde(default = "half")]
    pub halfwidth: f64,
    #[serde(default = "default_m")]
    pub m: usize,
    /// Cells per axis for refinement studies.
    #[serde(default)]
    pub levels: Vec<usize>,
}

fn default_m() -> usize {
    32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    #[default]
    Constant,
    Power,
    Product,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FormName {
    #[default]
    Measure,
    Multiplier,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorConfig {
    pub center: Point,
    pub exponent: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    #[serde(default)]
    pub kind: WeightKind,
    #[serde(default = "one")]
    pub value: f64,
    #[serde(default = "origin")]
    pub center: Point,
    #[serde(default)]
    pub exponent: f64,
    #[serde(default)]
    pub factors: Vec<FactorConfig>,
    #[serde(default = "one")]
    pub kappa: f64,
    #[serde(default)]
    pub theta: f64,
    /// Orient the eigenframe along the polar angle about `center`, offset
    /// by `theta`.
    #[serde(default)]
    pub polar: bool,
    #[serde(default = "one")]
    pub lambda_bound: f64,
    #[serde(default)]
    pub form: FormName,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig {
            kind: WeightKind::Constant,
            value: 1.0,
            center: origin(),
            exponent: 0.0,
            factors: Vec::new(),
            kappa: 1.0,
            theta: 0.0,
            polar: false,
            lambda_bound: 1.0,
            form: FormName::Measure,
        }
    }
}

impl WeightConfig {
    pub fn scalar(&self) -> ScalarWeight {
        match self.kind {
            WeightKind::Constant => ScalarWeight::Constant(self.value),
            WeightKind::Power => ScalarWeight::power(self.center, self.exponent).scaled(self.value),
            WeightKind::Product => ScalarWeight::Product(
                self.factors.iter().map(|f| ScalarWeight::power(f.center, f.exponent)).collect(),
            )
            .scaled(self.value),
        }
    }

    pub fn matrix(&self) -> zaremba_core::Result<MatrixWeight> {
        let angle = if self.polar {
            AngleField::Polar { center: self.center, offset: self.theta }
        } else {
            AngleField::Constant(self.theta)
        };
        let form = match self.form {
            FormName::Measure => WeightForm::Measure,
            FormName::Multiplier => WeightForm::Multiplier,
        };
        MatrixWeight::new(self.scalar(), angle, self.kappa, self.lambda_bound, form)
    }

    /// Exponent `s` of `|x|^s` when the weight is homogeneous about the origin.
    pub fn homogeneous_exponent(&self) -> Option<f64> {
        match self.kind {
            WeightKind::Constant => Some(0.0),
            WeightKind::Power if self.center == [0.0, 0.0] => Some(self.exponent),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeName {
    Left,
    Right,
    Bottom,
    Top,
}

impl From<EdgeName> for Edge {
    fn from(e: EdgeName) -> Edge {
        match e {
            EdgeName::Left => Edge::Left,
            EdgeName::Right => Edge::Right,
            EdgeName::Bottom => Edge::Bottom,
            EdgeName::Top => Edge::Top,
        }
    }
}

fn all_edges() -> Vec<EdgeName> {
    vec![EdgeName::Left, EdgeName::Right, EdgeName::Bottom, EdgeName::Top]
}

fn bottom() -> EdgeName {
    EdgeName::Bottom
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Full,
    Edges,
    Checkerboard,
    Cantor,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    pub kind: BoundaryKind,
    #[serde(default = "all_edges")]
    pub edges: Vec<EdgeName>,
    pub period: Option<f64>,
    pub lambda: Option<f64>,
    pub level: Option<usize>,
    #[serde(default = "bottom")]
    pub edge: EdgeName,
}

impl BoundaryConfig {
    pub fn spec(&self) -> BoundarySpec {
        match self.kind {
            BoundaryKind::Full => BoundarySpec::FullBoundary,
            BoundaryKind::Edges => BoundarySpec::Edges(self.edges.iter().map(|&e| e.into()).collect()),
            BoundaryKind::Checkerboard => BoundarySpec::Checkerboard {
                period: self.period.unwrap_or(0.5),
                edges: self.edges.iter().map(|&e| e.into()).collect(),
            },
            BoundaryKind::Cantor => BoundarySpec::Cantor {
                lambda: self.lambda.unwrap_or(f64::NAN),
                level: self.level.unwrap_or(0),
                edge: self.edge.into(),
            },
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentsConfig {
    pub p: Option<f64>,
    pub q: Option<f64>,
    #[serde(default)]
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_newton")]
    pub max_newton: usize,
    pub eps_schedule: Option<Vec<f64>>,
}

fn default_tol() -> f64 {
    1e-10
}
fn default_max_newton() -> usize {
    200
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    Zero,
    Constant,
    Expression,
    Gradient,
    Random,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub kind: DataKind,
    #[serde(default)]
    pub value: [f64; 2],
    /// Components of `G` for `kind = "expression"`.
    pub g1: Option<String>,
    pub g2: Option<String>,
    /// Potential `w` for `kind = "gradient"` (`G = ∇w`).
    pub w: Option<String>,
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn default_modes() -> usize {
    3
}

impl DataConfig {
    pub fn source(&self, seed: u64) -> Result<FieldSource, String> {
        let parse = |key: &str, v: &Option<String>| -> Result<Expr, String> {
            let text = v.as_deref().ok_or_else(|| format!("data.{key}: required for kind = {:?}", self.kind))?;
            Expr::parse(text).map_err(|e| format!("data.{key}: {e}"))
        };
        Ok(match self.kind {
            DataKind::Zero => FieldSource::Zero,
            DataKind::Constant => FieldSource::Constant(self.value),
            DataKind::Expression => {
                let (g1, g2) = (parse("g1", &self.g1)?, parse("g2", &self.g2)?);
                FieldSource::function(move |x| [g1.eval(x[0], x[1]), g2.eval(x[0], x[1])])
            }
            DataKind::Gradient => {
                let w = parse("w", &self.w)?;
                FieldSource::gradient_of(move |x| w.eval(x[0], x[1]))
            }
            DataKind::Random => FieldSource::RandomSmooth { modes: self.modes, seed, amplitude: self.amplitude },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    Subcube,
    Points,
    Segment,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetConfig {
    pub kind: SetKind,
    #[serde(default = "origin")]
    pub center: Point,
    #[serde(default = "half")]
    pub halfwidth: f64,
    #[serde(default)]
    pub points: Vec<Point>,
    pub a: Option<Point>,
    pub b: Option<Point>,
}

impl SetConfig {
    pub fn shape(&self) -> InteriorShape {
        match self.kind {
            SetKind::Subcube => InteriorShape::SubCube(Cube { center: self.center, halfwidth: self.halfwidth }),
            SetKind::Points => InteriorShape::Points(self.points.clone()),
            SetKind::Segment => InteriorShape::Segment(self.a.unwrap_or(self.center), self.b.unwrap_or(self.center)),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub scales: Vec<f64>,
    #[serde(default)]
    pub centers: Vec<Point>,
    #[serde(default)]
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApConfig {
    #[serde(default = "default_depths")]
    pub depths: Vec<usize>,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_depths() -> Vec<usize> {
    vec![4]
}
fn default_samples() -> usize {
    50
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityConfig {
    /// Threshold for the negligible/essential classification.
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    Cantor,
    Segment,
    Points,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CenConfig {
    pub geometry: GeometryKind,
    pub lambda: Option<f64>,
    pub level: Option<usize>,
    /// Endpoints of the carrying axis-parallel segment.
    #[serde(default = "segment_start")]
    pub start: Point,
    #[serde(default = "segment_end")]
    pub end: Point,
    #[serde(default)]
    pub points: Vec<Point>,
    /// Indices of level intervals whose left endpoints are used as centres.
    #[serde(default)]
    pub interval_centers: Vec<usize>,
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default = "default_truncation")]
    pub truncation: f64,
}

fn segment_start() -> Point {
    [-0.5, 0.0]
}
fn segment_end() -> Point {
    [0.5, 0.0]
}
fn default_cells() -> usize {
    64
}
fn default_truncation() -> f64 {
    4.0
}

impl CenConfig {
    fn segment(&self) -> Option<AxisSegment> {
        let (a, b) = (self.start, self.end);
        if a[1] == b[1] && a[0] < b[0] {
            Some(AxisSegment::horizontal(a[1], a[0], b[0]))
        } else if a[0] == b[0] && a[1] < b[1] {
            Some(AxisSegment::vertical(a[0], a[1], b[1]))
        } else {
            None
        }
    }

    pub fn geometry(&self) -> Result<SetGeometry, String> {
        let seg = || self.segment().ok_or_else(|| "cen.start/cen.end: must span an axis-parallel segment".to_string());
        Ok(match self.geometry {
            GeometryKind::Cantor => {
                let set = CantorSet::new(self.lambda.unwrap_or(f64::NAN), self.level.unwrap_or(0))
                    .map_err(|e| format!("cen.lambda: {e}"))?;
                SetGeometry::Cantor { set, segment: seg()? }
            }
            GeometryKind::Segment => SetGeometry::Segment(seg()?),
            GeometryKind::Points => SetGeometry::Points(self.points.clone()),
        })
    }

    /// Left endpoints of the selected level intervals, on the segment.
    pub fn interval_points(&self) -> Result<Vec<Point>, String> {
        if self.interval_centers.is_empty() {
            return Ok(Vec::new());
        }
        let seg = self.segment().ok_or_else(|| "cen.start/cen.end: must span an axis-parallel segment".to_string())?;
        let set = CantorSet::new(self.lambda.unwrap_or(f64::NAN), self.level.unwrap_or(0))
            .map_err(|e| format!("cen.lambda: {e}"))?;
        let iv = set.intervals();
        self.interval_centers
            .iter()
            .map(|&i| {
                iv.get(i)
                    .map(|&(a, _)| seg.point_at(seg.from_reference(a)))
                    .ok_or_else(|| format!("cen.interval_centers: index {i} exceeds {} intervals", iv.len()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CantorConfig {
    pub lambda: f64,
    pub level: usize,
    #[serde(default = "bottom")]
    pub edge: EdgeName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalCheck {
    Caccioppoli,
    ReverseHolder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlacementName {
    #[default]
    Interior,
    Dirichlet,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalConfig {
    pub check: LocalCheck,
    #[serde(default)]
    pub placement: PlacementName,
    #[serde(default = "default_cubes")]
    pub cubes: usize,
    pub q_sub: Option<f64>,
    #[serde(default = "default_enlargement")]
    pub enlargement: f64,
}

fn default_cubes() -> usize {
    20
}
fn default_enlargement() -> f64 {
    2.0
}

fn check_lambda(key: &str, lambda: Option<f64>, out: &mut Vec<String>) {
    match lambda {
        Some(l) if l > 0.0 && l < 0.5 => {}
        Some(_) => out.push(format!("{key}: lambda must be in (0, 1/2)")),
        None => out.push(format!("{key}: lambda is required")),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Every constraint violation, without running anything.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if let Some(d) = &self.domain {
            if !(d.halfwidth > 0.0) {
                v.push("domain.halfwidth: halfwidth must be positive".into());
            }
            if d.m < 2 {
                v.push("domain.m: m must be at least 2".into());
            }
            if d.levels.iter().any(|&m| m < 2) {
                v.push("domain.levels: every level must be at least 2".into());
            }
        }
        if let Some(w) = &self.weight {
            if !(w.value > 0.0 && w.value.is_finite()) {
                v.push("weight.value: value must be positive".into());
            }
            if !w.exponent.is_finite() || w.factors.iter().any(|f| !f.exponent.is_finite()) {
                v.push("weight.exponent: exponents must be finite".into());
            }
            if w.kind == WeightKind::Product && w.factors.is_empty() {
                v.push("weight.factors: product weight needs at least one factor".into());
            }
            if !(w.lambda_bound >= 1.0) {
                v.push("weight.lambda_bound: lambda_bound must be at least 1".into());
            }
            if !(w.kappa >= 1.0 / w.lambda_bound && w.kappa <= 1.0) {
                v.push("weight.kappa: kappa must be in [1/lambda_bound, 1]".into());
            }
        }
        if let Some(b) = &self.boundary {
            match b.kind {
                BoundaryKind::Checkerboard => {
                    if !(b.period.unwrap_or(0.5) > 0.0) {
                        v.push("boundary.period: period must be positive".into());
                    }
                }
                BoundaryKind::Cantor => {
                    check_lambda("boundary.lambda", b.lambda, &mut v);
                    if b.level.is_none() {
                        v.push("boundary.level: level is required".into());
                    }
                }
                _ => {}
            }
        }
        if let Some(e) = &self.exponents {
            if let Some(p) = e.p {
                if !(p > 1.0 && p.is_finite()) {
                    v.push("exponents.p: p must exceed 1".into());
                }
            }
            if let Some(q) = e.q {
                if !(q > 1.0 && q.is_finite()) {
                    v.push("exponents.q: q must exceed 1".into());
                } else if let Some(p) = e.p {
                    if q > p {
                        v.push("exponents.q: q must satisfy 1 < q <= p".into());
                    }
                }
            }
            if e.deltas.iter().any(|&d| !(d >= 0.0 && d.is_finite())) {
                v.push("exponents.deltas: deltas must be nonnegative".into());
            }
        }
        if let Some(s) = &self.solver {
            if !(s.tol > 0.0) {
                v.push("solver.tol: tol must be positive".into());
            }
            if let Some(eps) = &s.eps_schedule {
                if eps.is_empty() || eps.iter().any(|&e| !(e >= 0.0 && e.is_finite())) {
                    v.push("solver.eps_schedule: schedule must be a nonempty list of nonnegative values".into());
                }
            }
        }
        if let Some(d) = &self.data {
            if let Err(msg) = d.source(self.seed) {
                v.push(msg);
            }
            if d.kind == DataKind::Random && d.modes == 0 {
                v.push("data.modes: modes must be positive".into());
            }
        }
        if let Some(s) = &self.set {
            match s.kind {
                SetKind::Subcube if !(s.halfwidth > 0.0) => v.push("set.halfwidth: halfwidth must be positive".into()),
                SetKind::Points if s.points.is_empty() => v.push("set.points: at least one point is required".into()),
                SetKind::Segment if s.a.is_none() || s.b.is_none() => {
                    v.push("set.a/set.b: both segment endpoints are required".into())
                }
                _ => {}
            }
        }
        if let Some(s) = &self.sweep {
            if s.scales.iter().any(|&r| !(r > 0.0)) {
                v.push("sweep.scales: scales must be positive".into());
            }
            if s.radii.iter().any(|&r| !(r > 0.0)) {
                v.push("sweep.radii: radii must be positive".into());
            }
        }
        if let Some(c) = &self.capacity {
            if let Some(g) = c.gamma {
                if !(g > 0.0 && g < 0.5) {
                    v.push("capacity.gamma: gamma must be in (0, 1/2)".into());
                }
            }
        }
        if let Some(c) = &self.cen {
            if c.geometry == GeometryKind::Cantor || !c.interval_centers.is_empty() {
                check_lambda("cen.lambda", c.lambda, &mut v);
                if c.level.is_none() {
                    v.push("cen.level: level is required".into());
                }
            }
            if c.cells < 2 || c.cells % 2 != 0 {
                v.push("cen.cells: cells must be even and at least 2".into());
            }
            if !(c.truncation > 1.0) {
                v.push("cen.truncation: truncation must exceed 1".into());
            }
            if c.geometry != GeometryKind::Points && c.segment().is_none() {
                v.push("cen.start/cen.end: must span an axis-parallel segment".into());
            }
        }
        if let Some(c) = &self.cantor {
            check_lambda("cantor.lambda", Some(c.lambda), &mut v);
        }
        if let Some(l) = &self.local {
            if l.cubes == 0 {
                v.push("local.cubes: cubes must be positive".into());
            }
            if !(l.enlargement >= 1.0) {
                v.push("local.enlargement: enlargement must be at least 1".into());
            }
            if let (Some(qs), Some(p)) = (l.q_sub, self.exponents.as_ref().and_then(|e| e.p)) {
                if !(qs > 1.0 && qs <= p) {
                    v.push("local.q_sub: q_sub must satisfy 1 < q_sub <= p".into());
                }
            }
        }
        v
    }
}
