use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sample size exceeds population ({requested} > {available})")]
    SampleSizeExceedsPopulation { requested: usize, available: usize },

    #[error("sample size must be positive")]
    ZeroSampleSize,

    #[error("entry already set: key {0}")]
    EntryAlreadySet(usize),

    #[error("policy contract violation: {0}")]
    PolicyContract(String),

    #[error("probability mass is not integral (residual {0})")]
    NonIntegralMass(f64),

    #[error("enumeration limit: {n} keys exceeds the maximum of {max}")]
    EnumerationLimit { n: usize, max: usize },

    #[error("empty key set")]
    EmptyKeySet,

    #[error("invalid weight {weight} for key {id}: weights must be positive and finite")]
    InvalidWeight { id: u64, weight: f64 },

    #[error("duplicate key id {0}")]
    DuplicateId(u64),

    #[error("dimension mismatch: expected {expected} coordinates, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("ranges must be disjoint")]
    OverlappingRanges,

    #[error("key {0} lies outside every partition cell")]
    KeyOutsidePartition(u64),

    #[error("invalid hierarchy: {0}")]
    InvalidHierarchy(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("could not place {ranges} non-overlapping ranges after {attempts} attempts; use fewer ranges or a smaller scale")]
    InfeasibleQueries { ranges: usize, attempts: usize },

    #[error("summary file: {0}")]
    SummaryFormat(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad input data rather than bad usage.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::InvalidWeight { .. }
                | Error::DuplicateId(_)
                | Error::DimensionMismatch { .. }
                | Error::InvalidHierarchy(_)
                | Error::SummaryFormat(_)
                | Error::Csv(_)
                | Error::Io(_)
                | Error::EmptyKeySet
                | Error::SampleSizeExceedsPopulation { .. }
        )
    }
}
