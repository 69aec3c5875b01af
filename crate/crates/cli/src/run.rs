//! One function per subcommand. Each returns the tables it wants written
//! and the scalar results for the summary.

use std::path::PathBuf;
use std::time::Instant;

use serde_json::{json, Map, Value};
use zaremba_core::capacity::{capacity_scaling_check, classify_negligible, compute_capacity, CapacityOptions, CapacityProblem, SetClass};
use zaremba_core::geometry::{build_grid, interior_set, mark_dirichlet, CantorSet, InteriorShape};
use zaremba_core::meyers::{caccioppoli_check, meyers_scan, reverse_holder_check, sample_cubes, CubePlacement};
use zaremba_core::poincare::{comparability_ratio, poincare_constant, verify_cen, BoundKind, CenOptions, PoincareMethod, PoincareOptions};
use zaremba_core::solver::{energy_ratio, solve_zaremba};
use zaremba_core::weights::ap_constant_estimate;
use zaremba_core::{BoundarySpec, Cube, Error, Grid, ScalarWeight, SolveOptions, ZarembaSetup};

use crate::config::{ExperimentConfig, LocalCheck, PlacementName, WeightConfig};
use crate::output::{config_hash, field_table, node_table, num, write_summary, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    /// Check a config and list every violation without computing anything.
    Validate,
    Ap,
    Capacity,
    Scaling,
    Poincare,
    Comparability,
    Cen,
    Cantor,
    Solve,
    Meyers,
    Local,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Validate => "validate",
            Subcommand::Ap => "ap",
            Subcommand::Capacity => "capacity",
            Subcommand::Scaling => "scaling",
            Subcommand::Poincare => "poincare",
            Subcommand::Comparability => "comparability",
            Subcommand::Cen => "cen",
            Subcommand::Cantor => "cantor",
            Subcommand::Solve => "solve",
            Subcommand::Meyers => "meyers",
            Subcommand::Local => "local",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Numerical(Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) | RunError::Io(_) => 3,
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::InvalidLambda(_) | Error::InvalidResolution(..) => {
                RunError::Config(e.to_string())
            }
            e => RunError::Numerical(e),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

type Outcome = (Vec<Table>, Map<String, Value>);

pub struct RunSummary {
    pub path: PathBuf,
    pub summary: Value,
}

fn missing(key: &str) -> RunError {
    RunError::Config(format!("{key}: section or key is required for this subcommand"))
}

/// Read, validate and run one config. `output_override` wins over the
/// config's `output_dir`.
pub fn run(cmd: Subcommand, text: &str, output_override: Option<PathBuf>) -> Result<RunSummary, RunError> {
    let cfg = ExperimentConfig::parse(text).map_err(RunError::Config)?;
    let violations = cfg.validate();
    if !violations.is_empty() {
        return Err(RunError::Config(violations.join("; ")));
    }
    let dir = output_override.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("output"));
    std::fs::create_dir_all(&dir)?;

    let start = Instant::now();
    let (tables, results) = match cmd {
        Subcommand::Validate => (Vec::new(), obj(json!({ "violations": [] }))),
        Subcommand::Ap => ap(&cfg)?,
        Subcommand::Capacity => capacity(&cfg)?,
        Subcommand::Scaling => scaling(&cfg)?,
        Subcommand::Poincare => poincare(&cfg)?,
        Subcommand::Comparability => comparability(&cfg)?,
        Subcommand::Cen => cen(&cfg)?,
        Subcommand::Cantor => cantor(&cfg)?,
        Subcommand::Solve => solve(&cfg)?,
        Subcommand::Meyers => meyers(&cfg)?,
        Subcommand::Local => local(&cfg)?,
    };
    let wall = start.elapsed().as_secs_f64();

    let hash = config_hash(text);
    let outputs = tables.iter().map(|t| t.write(&dir, &hash)).collect::<std::io::Result<Vec<_>>>()?;
    let (path, summary) = write_summary(&dir, cmd.name(), &hash, wall, results, &outputs)?;
    Ok(RunSummary { path, summary })
}

fn domain_cube(cfg: &ExperimentConfig) -> Result<(Cube, usize), RunError> {
    let d = cfg.domain.as_ref().ok_or_else(|| missing("domain"))?;
    Ok((Cube::new(d.center, d.halfwidth)?, d.m))
}

fn domain_grid(cfg: &ExperimentConfig) -> Result<Grid, RunError> {
    let (cube, m) = domain_cube(cfg)?;
    Ok(build_grid(cube, m)?)
}

fn weight(cfg: &ExperimentConfig) -> WeightConfig {
    cfg.weight.clone().unwrap_or_default()
}

fn scalar_weight(cfg: &ExperimentConfig) -> Result<ScalarWeight, RunError> {
    let w = weight(cfg).scalar();
    w.validate()?;
    Ok(w)
}

fn p_exp(cfg: &ExperimentConfig) -> Result<f64, RunError> {
    cfg.exponents.as_ref().and_then(|e| e.p).ok_or_else(|| missing("exponents.p"))
}

/// `q`, falling back to `p`.
fn q_exp(cfg: &ExperimentConfig) -> Result<f64, RunError> {
    let e = cfg.exponents.as_ref().ok_or_else(|| missing("exponents.q"))?;
    e.q.or(e.p).ok_or_else(|| missing("exponents.q"))
}

fn shape(cfg: &ExperimentConfig) -> Result<InteriorShape, RunError> {
    Ok(cfg.set.as_ref().ok_or_else(|| missing("set"))?.shape())
}

fn solve_options(cfg: &ExperimentConfig) -> SolveOptions {
    match &cfg.solver {
        Some(s) => SolveOptions { tol: s.tol, max_newton: s.max_newton, eps_schedule: s.eps_schedule.clone() },
        None => SolveOptions::default(),
    }
}

fn capacity_options(cfg: &ExperimentConfig) -> CapacityOptions {
    match &cfg.solver {
        Some(s) => CapacityOptions { tol: s.tol, max_newton: s.max_newton },
        None => CapacityOptions::default(),
    }
}

fn poincare_options(cfg: &ExperimentConfig) -> PoincareOptions {
    PoincareOptions { capacity: capacity_options(cfg), ..PoincareOptions::default() }
}

fn setup(cfg: &ExperimentConfig) -> Result<ZarembaSetup, RunError> {
    let (cube, _) = domain_cube(cfg)?;
    let data = cfg.data.as_ref().ok_or_else(|| missing("data"))?.source(cfg.seed).map_err(RunError::Config)?;
    Ok(ZarembaSetup {
        cube,
        p: p_exp(cfg)?,
        weight: weight(cfg).matrix()?,
        boundary: cfg.boundary.as_ref().map(|b| b.spec()).unwrap_or(BoundarySpec::FullBoundary),
        data,
    })
}

fn bound_name(b: BoundKind) -> &'static str {
    match b {
        BoundKind::ExactDiscrete => "exact_discrete",
        BoundKind::LowerBound => "lower_bound",
    }
}

fn obj(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("summary results are objects"),
    }
}

fn ap(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let (cube, _) = domain_cube(cfg)?;
    let w = scalar_weight(cfg)?;
    let p = p_exp(cfg)?;
    let ap = cfg.ap.as_ref().ok_or_else(|| missing("ap"))?;
    let mut t = Table::new("ap", &["depth", "p", "estimate", "cube_count", "max_cx", "max_cy", "max_halfwidth"]);
    let mut estimates = Vec::new();
    for &depth in &ap.depths {
        let est = ap_constant_estimate(&w, p, &cube, depth, ap.samples, cfg.seed)?;
        let c = est.max_cube;
        t.push([
            depth.to_string(),
            p.to_string(),
            est.value.to_string(),
            est.cube_count.to_string(),
            c.center[0].to_string(),
            c.center[1].to_string(),
            c.halfwidth.to_string(),
        ]);
        estimates.push(num(est.value));
    }
    Ok((vec![t], obj(json!({ "p": p, "depths": ap.depths, "estimates": estimates }))))
}

fn capacity(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let grid = domain_grid(cfg)?;
    let w = scalar_weight(cfg)?;
    let q = q_exp(cfg)?;
    let k = interior_set(&grid, &shape(cfg)?)?;
    let opts = capacity_options(cfg);
    let res = compute_capacity(&CapacityProblem { grid, q, weight: w.clone(), k: k.clone() }, &opts)?;
    let mut results = obj(json!({
        "q": q,
        "capacity": num(res.value),
        "iterations": res.iterations,
        "residual": num(res.residual),
        "k_nodes": k.len(),
    }));
    if let Some(gamma) = cfg.capacity.as_ref().and_then(|c| c.gamma) {
        let cls = classify_negligible(&k, &w, q, gamma, &grid, &opts)?;
        let class = match cls.class {
            SetClass::Negligible => "negligible",
            SetClass::Essential => "essential",
        };
        results.insert("gamma".into(), num(gamma));
        results.insert("class".into(), json!(class));
        results.insert("class_ratio".into(), num(cls.ratio));
    }
    let tables = vec![field_table("capacity_potential", "phi", &res.potential), node_table("capacity_set", &k, &grid)];
    Ok((tables, results))
}

fn scaling(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let (_, m) = domain_cube(cfg)?;
    let w = scalar_weight(cfg)?;
    let q = q_exp(cfg)?;
    let scales = &cfg.sweep.as_ref().ok_or_else(|| missing("sweep.scales"))?.scales;
    let rep = capacity_scaling_check(&shape(cfg)?, &w, q, scales, m, &capacity_options(cfg))?;
    let s = weight(cfg).homogeneous_exponent();
    let s_text = s.map(|s| s.to_string()).unwrap_or_else(|| "NaN".into());
    let mut t = Table::new("scaling", &["r", "m", "q", "s", "capacity", "mu_Q", "ratio", "iterations"]);
    for row in &rep.rows {
        t.push([
            row.r.to_string(),
            row.m.to_string(),
            q.to_string(),
            s_text.clone(),
            row.capacity.to_string(),
            row.mu_q.to_string(),
            row.ratio.to_string(),
            row.iterations.to_string(),
        ]);
    }
    let expected = s.map(|s| 2.0 - q + s);
    Ok((
        vec![t],
        obj(json!({ "q": q, "s": s, "fitted_slope": num(rep.slope), "expected_slope": expected.map(num) })),
    ))
}

fn poincare(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let grid = domain_grid(cfg)?;
    let w = scalar_weight(cfg)?;
    let (p, q) = (p_exp(cfg)?, q_exp(cfg)?);
    let k = interior_set(&grid, &shape(cfg)?)?;
    let res = poincare_constant(&grid, &k, &w, p, q, &poincare_options(cfg))?;
    let method = match res.method {
        PoincareMethod::Eigen => "eigen",
        PoincareMethod::CandidateAscent => "candidate_ascent",
    };
    Ok((
        vec![field_table("poincare_maximizer", "u", &res.maximizer)],
        obj(json!({
            "p": p,
            "q": q,
            "c": num(res.c),
            "method": method,
            "bound_kind": bound_name(res.bound_kind),
            "iterations": res.iterations,
            "residual": num(res.residual),
        })),
    ))
}

fn comparability(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let (cube, m) = domain_cube(cfg)?;
    let w = scalar_weight(cfg)?;
    let (p, q) = (p_exp(cfg)?, q_exp(cfg)?);
    let sh = shape(cfg)?;
    let opts = poincare_options(cfg);
    // Without a radius sweep the domain itself is Q_r; with one, the shape
    // is given at r = 1 and scaled about the origin.
    let radii = cfg.sweep.as_ref().map(|s| s.radii.clone()).unwrap_or_default();
    let jobs: Vec<(Cube, InteriorShape)> = if radii.is_empty() {
        vec![(cube, sh)]
    } else {
        radii.iter().map(|&r| Ok((Cube::new([0.0, 0.0], r)?, sh.scaled(r)))).collect::<Result<_, Error>>()?
    };
    let mut t = Table::new("comparability", &["r", "m", "p", "q", "c", "capacity", "mu_Q2r", "ratio", "bound_kind"]);
    let mut ratios = Vec::new();
    for (cube, sh) in jobs {
        let grid = build_grid(cube, m)?;
        let k = interior_set(&grid, &sh)?;
        let rep = comparability_ratio(&grid, &k, &w, p, q, &opts)?;
        t.push([
            cube.halfwidth.to_string(),
            m.to_string(),
            p.to_string(),
            q.to_string(),
            rep.c.to_string(),
            rep.capacity.to_string(),
            rep.mu_q2r.to_string(),
            rep.ratio.to_string(),
            bound_name(rep.bound_kind).to_string(),
        ]);
        ratios.push(rep.ratio);
    }
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    Ok((vec![t], obj(json!({ "p": p, "q": q, "min_ratio": num(min), "max_ratio": num(max) }))))
}

fn cen(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let c = cfg.cen.as_ref().ok_or_else(|| missing("cen"))?;
    let w = scalar_weight(cfg)?;
    let q = q_exp(cfg)?;
    let geom = c.geometry().map_err(RunError::Config)?;
    let sweep = cfg.sweep.clone().unwrap_or_default();
    let mut centers = sweep.centers.clone();
    centers.extend(c.interval_points().map_err(RunError::Config)?);
    if centers.is_empty() {
        return Err(missing("sweep.centers or cen.interval_centers"));
    }
    if sweep.radii.is_empty() {
        return Err(missing("sweep.radii"));
    }
    let opts = CenOptions { cells: c.cells, truncation: c.truncation, capacity: capacity_options(cfg) };
    let rep = verify_cen(&geom, &w, q, &centers, &sweep.radii, &opts)?;
    let mut t = Table::new("cen", &["x0_1", "x0_2", "r", "q", "cap", "mu_Qr", "ratio"]);
    for s in &rep.samples {
        t.push([s.center[0], s.center[1], s.r, q, s.cap, s.mu_qr, s.ratio]);
    }
    Ok((
        vec![t],
        obj(json!({
            "q": q,
            "truncation": c.truncation,
            "samples": rep.samples.len(),
            "min_ratio": num(rep.min_ratio),
            "max_ratio": num(rep.max_ratio),
            "c0": num(rep.c0),
        })),
    ))
}

fn cantor(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let c = cfg.cantor.as_ref().ok_or_else(|| missing("cantor"))?;
    let set = CantorSet::new(c.lambda, c.level)?;
    let mut t = Table::new("cantor_intervals", &["index", "start", "end"]);
    for (i, (a, b)) in set.intervals().into_iter().enumerate() {
        t.push([i.to_string(), a.to_string(), b.to_string()]);
    }
    let mut tables = vec![t];
    let mut results = obj(json!({
        "lambda": c.lambda,
        "level": c.level,
        "intervals": 1usize << c.level,
        "total_length": num(set.total_length()),
        "hausdorff_dim": num(set.hausdorff_dim()),
    }));
    if cfg.domain.is_some() {
        let grid = domain_grid(cfg)?;
        let b = mark_dirichlet(&grid, &BoundarySpec::Cantor { lambda: c.lambda, level: c.level, edge: c.edge.into() })?;
        results.insert("dirichlet_nodes".into(), json!(b.dirichlet().len()));
        tables.push(node_table("cantor_dirichlet_nodes", b.dirichlet(), &grid));
    }
    Ok((tables, results))
}

fn solve(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let (_, m) = domain_cube(cfg)?;
    let prob = setup(cfg)?.discretize(m)?;
    let res = solve_zaremba(&prob, &solve_options(cfg))?;
    let ratio = match energy_ratio(&prob, &res) {
        Ok(r) => num(r),
        Err(Error::ZeroData) => Value::Null,
        Err(e) => return Err(e.into()),
    };
    Ok((
        vec![field_table("solve", "u", &res.u), node_table("solve_dirichlet_nodes", prob.boundary.dirichlet(), prob.grid())],
        obj(json!({
            "p": prob.p,
            "m": m,
            "energy": num(res.energy),
            "weighted_grad_norm": num(res.weighted_grad_norm),
            "ratio": ratio,
            "residual_norm": num(res.residual_norm),
            "iterations": res.newton_iterations,
            "final_eps": num(res.final_eps),
        })),
    ))
}

fn meyers(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let d = cfg.domain.as_ref().ok_or_else(|| missing("domain"))?;
    let levels = if d.levels.is_empty() { vec![d.m, 2 * d.m] } else { d.levels.clone() };
    let deltas = cfg.exponents.as_ref().map(|e| e.deltas.clone()).unwrap_or_default();
    if deltas.is_empty() {
        return Err(missing("exponents.deltas"));
    }
    let rep = meyers_scan(&setup(cfg)?, &deltas, &levels, &solve_options(cfg))?;
    let mut t = Table::new("meyers", &["delta", "m", "N_u", "N_G", "ratio", "stable"]);
    for row in &rep.table {
        let di = deltas.iter().position(|&d| d == row.delta).unwrap_or(0);
        t.push([
            row.delta.to_string(),
            row.m.to_string(),
            row.n_u.to_string(),
            row.n_g.to_string(),
            row.ratio.to_string(),
            rep.stable[di].to_string(),
        ]);
    }
    Ok((
        vec![t],
        obj(json!({
            "deltas": deltas,
            "levels": levels,
            "stable": rep.stable,
            "data_diverges": rep.data_diverges,
            "energy_ratios": rep.energy_ratios.iter().map(|&r| num(r)).collect::<Vec<_>>(),
        })),
    ))
}

fn local(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let l = cfg.local.as_ref().ok_or_else(|| missing("local"))?;
    let (_, m) = domain_cube(cfg)?;
    let prob = setup(cfg)?.discretize(m)?;
    let res = solve_zaremba(&prob, &solve_options(cfg))?;
    let placement = match l.placement {
        PlacementName::Interior => CubePlacement::Interior,
        PlacementName::Dirichlet => CubePlacement::Dirichlet,
    };
    let (enlargement, check) = match l.check {
        LocalCheck::Caccioppoli => (1.5, "caccioppoli"),
        LocalCheck::ReverseHolder => (l.enlargement, "reverse_holder"),
    };
    let cubes = sample_cubes(&prob.boundary, placement, enlargement, l.cubes, cfg.seed);
    if cubes.is_empty() {
        return Err(RunError::Config("local.placement: no admissible cubes on this grid".into()));
    }
    let rep = match l.check {
        LocalCheck::Caccioppoli => caccioppoli_check(&prob, &res.u, &cubes, placement)?,
        LocalCheck::ReverseHolder => {
            let q_sub = l.q_sub.or(cfg.exponents.as_ref().and_then(|e| e.q)).ok_or_else(|| missing("local.q_sub"))?;
            reverse_holder_check(&prob, &res.u, &cubes, q_sub, enlargement)?
        }
    };
    let mut t = Table::new("local", &["cube_cx", "cube_cy", "r", "lhs", "rhs", "ratio"]);
    for r in &rep.rows {
        t.push([r.center[0], r.center[1], r.r, r.lhs, r.rhs, r.ratio]);
    }
    Ok((vec![t], obj(json!({ "check": check, "cubes": rep.rows.len(), "constant": num(rep.constant) }))))
}
