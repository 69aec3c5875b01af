//! Numerical tools for mixed Dirichlet/Neumann p-Laplace problems with
//! degenerate weights: weighted capacities, Muckenhoupt constant estimates,
//! capacity-scaled Poincaré constants, Galerkin-Newton solvers and
//! higher-integrability probes, all on uniform bilinear grids in the plane.

pub mod assembly;
pub mod capacity;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod meyers;
mod newton;
pub mod poincare;
pub mod solver;
pub mod weights;

/// A point of the plane.
pub type Point = [f64; 2];

/// A 2x2 matrix stored row-major.
pub type Mat2 = [[f64; 2]; 2];

pub use assembly::{DiscreteField, Quadrature, VectorField};
pub use capacity::{CapacityOptions, CapacityProblem, CapacityResult};
pub use error::{Error, Result};
pub use geometry::{BoundaryPartition, BoundarySpec, CantorSet, Cube, Edge, Grid, NodeSet};
pub use meyers::{LocalEstimateReport, MeyersReport};
pub use poincare::{CenCheckReport, PoincareResult};
pub use solver::{FieldSource, SolveOptions, SolveResult, ZarembaProblem, ZarembaSetup};
pub use weights::{ApEstimate, MatrixWeight, ScalarWeight, WeightForm};

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
