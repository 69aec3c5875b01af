use crate::Point;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("weight is singular at ({}, {})", .0[0], .0[1])]
    SingularEvaluation(Point),

    #[error("quadrature node ({}, {}) hit a weight singularity or zero", .0[0], .0[1])]
    QuadratureSingularity(Point),

    #[error("sub-region has zero volume")]
    EmptyRegion,

    #[error("invalid resolution {0}: at least {1} cells per axis required")]
    InvalidResolution(usize, usize),

    #[error("lambda = {0} must lie in (0, 1/2)")]
    InvalidLambda(f64),

    #[error("shape is not contained in the grid box")]
    OutOfDomain,

    #[error("Dirichlet set is empty; the mixed problem is not uniquely solvable")]
    EmptyDirichletSet,

    #[error("constraint set K is empty; the Poincaré constant is unbounded")]
    EmptyConstraintSet,

    #[error("data field G vanishes identically")]
    ZeroData,

    #[error("cube centered at ({}, {}) with radius {} is outside the admissible region", .center[0], .center[1], .radius)]
    CubeOutOfDomain { center: Point, radius: f64 },

    #[error("center ({}, {}) is farther than one cell from the Dirichlet set", .0[0], .0[1])]
    CenterOffD(Point),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
