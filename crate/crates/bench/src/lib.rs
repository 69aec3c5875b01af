//! Shared fixtures for the kernel benchmarks.

use zaremba_core::assembly::assemble_weighted_stiffness;
use zaremba_core::geometry::{build_grid, interior_set, mark_dirichlet, InteriorShape};
use zaremba_core::linalg::Csr;
use zaremba_core::{
    BoundarySpec, CapacityProblem, Cube, Edge, FieldSource, Grid, MatrixWeight, ScalarWeight, WeightForm, ZarembaSetup,
};

/// `|x|^{1/2}` centred at the lower-left corner of the unit square.
pub fn corner_weight() -> ScalarWeight {
    ScalarWeight::power([0.0, 0.0], 0.5)
}

pub fn unit_grid(m: usize) -> Grid {
    build_grid(Cube::unit_square(), m).expect("valid grid")
}

/// Weighted stiffness matrix on the unit square, a right-hand side and the
/// free mask of a checkerboard Dirichlet split.
pub fn linear_system(m: usize) -> (Csr, Vec<f64>, Vec<bool>) {
    let grid = unit_grid(m);
    let k = assemble_weighted_stiffness(&grid, &MatrixWeight::isotropic(corner_weight(), WeightForm::Measure))
        .expect("weight is finite at Gauss points");
    let b = mark_dirichlet(&grid, &BoundarySpec::Checkerboard { period: 0.25, edges: Edge::ALL.to_vec() })
        .expect("valid split");
    let free: Vec<bool> = b.dirichlet().mask(&grid).iter().map(|&d| !d).collect();
    let rhs = (0..grid.node_count())
        .map(|i| {
            let x = grid.node_coords(i);
            (3.0 * x[0]).sin() * (2.0 * x[1]).cos()
        })
        .collect();
    (k, rhs, free)
}

/// Capacity of the centred half-size square in `Q_2(0)`.
pub fn capacity_problem(m: usize, q: f64) -> CapacityProblem {
    let grid = build_grid(Cube::new([0.0, 0.0], 2.0).expect("positive halfwidth"), m).expect("valid grid");
    let shape = InteriorShape::SubCube(Cube::new([0.0, 0.0], 1.0).expect("positive halfwidth"));
    let k = interior_set(&grid, &shape).expect("shape inside grid");
    CapacityProblem { grid, q, weight: ScalarWeight::power([0.0, 0.0], 0.5), k }
}

pub fn zaremba_setup(p: f64) -> ZarembaSetup {
    ZarembaSetup {
        cube: Cube::unit_square(),
        p,
        weight: MatrixWeight::isotropic(corner_weight(), WeightForm::Measure),
        boundary: BoundarySpec::Checkerboard { period: 0.5, edges: Edge::ALL.to_vec() },
        data: FieldSource::RandomSmooth { modes: 3, seed: 7, amplitude: 1.0 },
    }
}
