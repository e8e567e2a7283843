use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("variable `{0}` declared twice")]
    DuplicateVariable(String),
    #[error("value `{value}` declared twice for variable `{variable}`")]
    DuplicateValue { variable: String, value: String },
    #[error("undeclared variable `{0}`")]
    UndeclaredVariable(String),
    #[error("unknown value `{value}` for variable `{variable}`")]
    UnknownValue { variable: String, value: String },
    #[error("probability block for `{0}` given more than once")]
    DuplicateProbability(String),
    #[error("variable `{0}` has no probability block")]
    MissingProbability(String),
    #[error("probability block for `{variable}`: expected {expected} rows, found {found}")]
    RowCountMismatch {
        variable: String,
        expected: usize,
        found: usize,
    },
    #[error("probability block for `{variable}`: expected {expected} entries per row, found {found}")]
    VectorLengthMismatch {
        variable: String,
        expected: usize,
        found: usize,
    },
    #[error("probability block for `{variable}`: row is negative or does not sum to 1 (sum {sum})")]
    InvalidDistribution { variable: String, sum: f64 },
    #[error("network graph contains a cycle through `{0}`")]
    Cycle(String),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("value index {value} out of range for variable {variable} (cardinality {cardinality})")]
    ValueOutOfRange {
        variable: usize,
        value: usize,
        cardinality: usize,
    },
    #[error("variable {variable} not in factor scope")]
    NotInScope { variable: usize },
    #[error("evidence is impossible: P(O) = {probability:e}")]
    ImpossibleEvidence { probability: f64 },
    #[error("every likelihood weight was zero over {samples} samples")]
    ZeroWeightTotal { samples: usize },
    #[error("dataset generation stalled: {attempts} consecutive impossible evidence draws")]
    GenerationStalled { attempts: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("model layout does not match network: {0}")]
    LayoutMismatch(String),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {loss}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("sequence lengths differ: {left} vs {right}")]
    AlignmentMismatch { left: usize, right: usize },
    #[error("{0}")]
    InvalidArgument(String),
}
