use thiserror::Error;

/// Errors shared across the algebra, group and walk layers.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("coefficient field mismatch: {0} vs {1}")]
    FieldMismatch(String, String),
    #[error("variable count mismatch: {0} vs {1}")]
    ArityMismatch(usize, usize),
    #[error("matrix size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("division by zero {0}")]
    DivisionByZero(&'static str),
    #[error("matrix is not invertible: zero diagonal entry at {0}")]
    SingularMatrix(usize),
    #[error("unknown generator name: {0}")]
    UnknownGenerator(String),
    #[error("divisor violates the star condition on axis {axis}: {reason}")]
    StarCondition { axis: usize, reason: String },
    #[error("all fingerprint evaluation points are poles after {0} retries")]
    AllPointsPoles(usize),
    #[error("invalid step measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid order: {0}")]
    InvalidOrder(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("relation is a unit, the quotient module is zero")]
    UnitRelation,
    #[error("stage construction infeasible: {0}")]
    StageInfeasible(String),
    #[error("relation failed admissibility sampling: ({0}, {1}) at time {2}")]
    InadmissibleRelation(String, String, usize),
}
