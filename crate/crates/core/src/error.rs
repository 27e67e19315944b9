use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dilation factor must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("CR inversion is undefined at the origin")]
    OriginInversion,
    #[error("inverse Cayley transform is undefined at the south pole")]
    SouthPole,
    #[error("point is within two cells of the grid boundary")]
    BoundaryProximity,
    #[error("dimension mismatch: expected n = {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("bubble constant ratio is not constant (relative spread {0:e})")]
    NonConstantRatio(f64),
    #[error("tail exponent {gamma} must exceed the homogeneous dimension {q}")]
    TailExponent { gamma: f64, q: f64 },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("grid needs {need} samples, budget is {budget}")]
    Budget { need: usize, budget: usize },
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("exponent beta = {beta} outside ({lo}, {hi})")]
    BetaRange { beta: f64, lo: f64, hi: f64 },
    #[error("regions {0} and {1} overlap or are closer than 1")]
    Regions(usize, usize),
    #[error("anchor points {0} and {1} coincide")]
    Anchors(usize, usize),
    #[error("no convergence after {0} steps")]
    NoConvergence(usize),
    #[error("minimizer on the boundary of the parameter domain (bump {0})")]
    DomainBoundary(usize),
    #[error("line search collapsed at step {0}")]
    StepCollapse(usize),
    #[error("bump {bump} left its region at step {step}")]
    BumpEscape { bump: usize, step: usize },
    #[error("singular linear system")]
    Singular,
}

pub type Result<T> = std::result::Result<T, Error>;
