use thiserror::Error;

/// Errors raised by the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of a special function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Evaluation at a singular point (zero argument, zero distance).
    #[error("singular argument: {0}")]
    SingularArgument(String),

    /// Invalid numeric or structural parameter.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A mesh of the wrong topology was passed to an operator.
    #[error("topology error: {0}")]
    Topology(String),

    /// Curves overlap, touch, or leave their enclosing box.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Rejection sampling could not place a scatterer.
    #[error("placement failed in box {box_index} after {attempts} attempts")]
    Placement { box_index: usize, attempts: usize },

    /// Interface meshes of adjacent subdomains do not coincide.
    #[error("non-conforming interface: {0}")]
    Conformity(String),

    /// A dense system is singular or too badly conditioned.
    #[error("conditioning error in {context}: condition estimate {estimate:e}")]
    Conditioning { context: String, estimate: f64 },

    /// Boundary partition lookup or dimension mismatch.
    #[error("partition error: {0}")]
    Partition(String),

    /// Operation not defined for the given inputs.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Two independent recovery routes disagree.
    #[error("internal consistency failure: {what} discrepancy {discrepancy:e} exceeds {tolerance:e}")]
    Consistency {
        what: String,
        discrepancy: f64,
        tolerance: f64,
    },

    /// Dense problem exceeds the configured size budget.
    #[error("problem with {requested} unknowns exceeds the dense-solve budget of {budget}")]
    Budget { requested: usize, budget: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
