use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dataset has no observations")]
    EmptyData,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("estimator expects a {expected} dataset, got {found}")]
    ModelMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("design matrix is singular or nearly so (condition estimate {condition:.3e})")]
    SingularDesign { condition: f64 },

    #[error("logistic fit did not converge after {iterations} iterations (max |beta| = {max_abs_beta:.3e}); data are likely separated")]
    Separation {
        iterations: usize,
        max_abs_beta: f64,
    },

    #[error("all responses with positive weight belong to one class")]
    OneClassOnly,

    #[error("column `{0}` is constant and cannot be standardized")]
    ConstantColumn(String),

    #[error(
        "hypothesized value lies outside (or on the boundary of) the convex hull of the points"
    )]
    NotInConvexHull,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("cannot split {n} observations into {k} blocks of at least {min_block}")]
    TooManyBlocks {
        n: usize,
        k: usize,
        min_block: usize,
    },

    #[error("estimation failed on block {block}: {source}")]
    BlockEstimationFailed { block: usize, source: Box<Error> },

    #[error("column {0} of the EL points is constant")]
    DegenerateColumn(usize),

    #[error("resampling aborted after {attempts} failed attempts: {source}")]
    ResampleFailed { attempts: usize, source: Box<Error> },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: response label `{label}` is not covered by the schema")]
    UnmappableLabel { row: usize, label: String },

    #[error("no rows left after dropping {dropped} unparseable rows")]
    EmptyAfterFiltering { dropped: usize },

    #[error("reports do not share a schema: {0}")]
    SchemaMismatch(String),

    #[error("all {0} replicates aborted")]
    AllReplicatesAborted(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
