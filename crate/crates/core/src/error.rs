use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("regime `{0}` is already present")]
    DuplicateRegimeId(String),

    #[error("unknown regime `{0}`")]
    UnknownRegime(String),

    #[error("unknown arrow `{0}`")]
    UnknownArrow(String),

    #[error("invalid regime `{id}`: {reason}")]
    InvalidRegime { id: String, reason: String },

    #[error("arrows are not composable: `{first}` ends at `{end}` but `{second}` starts at `{start}`")]
    NonComposable {
        first: String,
        end: String,
        second: String,
        start: String,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("memory state has no field `{0}`")]
    MissingMemoryField(String),

    #[error("delta {0} is outside [0, 1]")]
    OutOfRangeDelta(f64),

    #[error("invalid drift parameters: {0}")]
    InvalidParams(String),

    #[error("inconsistent cost profile: {0}")]
    InconsistentProfile(String),

    #[error("contraction rate {0} is outside (0, 1]")]
    InvalidAlpha(f64),

    #[error("invalid splitting constant {0}; it must be positive and finite")]
    InvalidEpsilon(f64),

    #[error("invalid resolution: {0}")]
    InvalidResolution(String),

    #[error("design matrix is singular; the least-squares minimizer is undefined")]
    SingularDesign,

    #[error("rename is not injective: `{0}` and `{1}` map to `{2}`")]
    NonInjectiveRename(String, String, String),

    #[error("extension does not contain the clause `{0}` of the base theory")]
    NotASuperset(String),

    #[error("morphism is not total: {0}")]
    PartialMap(String),

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("invalid scenario: {}", .0.join("; "))]
    InvalidScenario(Vec<String>),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    InvalidInput(String),
}
