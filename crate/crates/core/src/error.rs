use alloc::string::String;

use crate::data::DomainId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    // data model
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: indicator `{column}` has value `{value}`, expected 0, 1 or NA")]
    NonBinaryIndicator { row: usize, column: String, value: String },
    #[error("row {row}: covariate `{column}` is not a finite number")]
    NonFiniteCovariate { row: usize, column: String },
    #[error("row {row}: expected {expected} {what}, found {found}")]
    RecordShape { row: usize, what: &'static str, expected: usize, found: usize },
    #[error("row {row}: design weight must be positive and finite")]
    InvalidWeight { row: usize },
    #[error("row {row}: empty domain code")]
    EmptyDomainCode { row: usize },
    #[error("municipality {muni} appears under departments {first} and {second}")]
    InconsistentHierarchy { muni: DomainId, first: DomainId, second: DomainId },
    #[error("row {row}: survey indicator `{column}` is missing")]
    MissingSurveyValue { row: usize, column: String },
    #[error("dataset has no records")]
    EmptyDataset,
    #[error("covariates differ between survey {survey:?} and census {census:?}")]
    CovariateMismatch { survey: alloc::vec::Vec<String>, census: alloc::vec::Vec<String> },
    #[error("census data inconsistent with indicator spec: {0}")]
    SpecInconsistent(String),

    // indicator algebra
    #[error("invalid indicator spec: {0}")]
    InvalidSpec(String),
    #[error("indicator {index} is missing")]
    MissingIndicatorValue { index: usize },
    #[error("domain has no units")]
    EmptyDomain,

    // glmm
    #[error("design matrix for `{indicator}` is rank deficient")]
    RankDeficientDesign { indicator: String },
    #[error("separation detected for `{indicator}`: coefficient {coefficient} diverges")]
    Separation { indicator: String, coefficient: usize },
    #[error("conditional mode for domain {domain} did not converge")]
    InnerNoConvergence { domain: DomainId },
    #[error("expected {expected} covariates, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("indicator `{indicator}` is not fully observed in the fitting data")]
    IndicatorNotObserved { indicator: String },
    #[error("need at least 2 domains to fit a random intercept, found {0}")]
    InsufficientDomains(usize),
    #[error("unknown domain {0}")]
    UnknownDomain(DomainId),
    #[error("invalid fit configuration: {0}")]
    InvalidFitConfig(String),

    // estimator
    #[error("no fitted model for census-missing indicator {indicator}")]
    FitMissing { indicator: usize },
    #[error("incompatible spec: {0}")]
    IncompatibleSpec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    // uncertainty
    #[error("bootstrap replicate {replicate} failed to refit after retries: {reason}")]
    BootstrapFitFailure { replicate: usize, reason: String },
    #[error("insufficient sample: {0}")]
    InsufficientSample(String),
    #[error("coefficient of variation undefined for a zero estimate")]
    ZeroEstimate,

    // oracle
    #[error("expected {expected} probabilities, got {found}")]
    WrongArity { expected: usize, found: usize },
    #[error("enumeration over {bits} binary outcomes exceeds the 2^24 bound")]
    TooLargeToEnumerate { bits: usize },
    #[error("quadrature underflow in domain {0}")]
    QuadratureUnderflow(DomainId),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    // simulation
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("sample of {requested} exceeds population of {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("{failed} of {total} simulation replicates failed")]
    TooManyFailures { failed: usize, total: usize },
}

impl Error {
    /// Variant name, used as a stable machine-readable error code.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingColumn { .. } => "MissingColumn",
            Error::NonBinaryIndicator { .. } => "NonBinaryIndicator",
            Error::NonFiniteCovariate { .. } => "NonFiniteCovariate",
            Error::RecordShape { .. } => "RecordShape",
            Error::InvalidWeight { .. } => "InvalidWeight",
            Error::EmptyDomainCode { .. } => "EmptyDomainCode",
            Error::InconsistentHierarchy { .. } => "InconsistentHierarchy",
            Error::MissingSurveyValue { .. } => "MissingSurveyValue",
            Error::EmptyDataset { .. } => "EmptyDataset",
            Error::CovariateMismatch { .. } => "CovariateMismatch",
            Error::SpecInconsistent { .. } => "SpecInconsistent",
            Error::InvalidSpec { .. } => "InvalidSpec",
            Error::MissingIndicatorValue { .. } => "MissingIndicatorValue",
            Error::EmptyDomain { .. } => "EmptyDomain",
            Error::RankDeficientDesign { .. } => "RankDeficientDesign",
            Error::Separation { .. } => "Separation",
            Error::InnerNoConvergence { .. } => "InnerNoConvergence",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::IndicatorNotObserved { .. } => "IndicatorNotObserved",
            Error::InsufficientDomains { .. } => "InsufficientDomains",
            Error::UnknownDomain { .. } => "UnknownDomain",
            Error::InvalidFitConfig { .. } => "InvalidFitConfig",
            Error::FitMissing { .. } => "FitMissing",
            Error::IncompatibleSpec { .. } => "IncompatibleSpec",
            Error::InvalidArgument { .. } => "InvalidArgument",
            Error::BootstrapFitFailure { .. } => "BootstrapFitFailure",
            Error::InsufficientSample { .. } => "InsufficientSample",
            Error::ZeroEstimate { .. } => "ZeroEstimate",
            Error::WrongArity { .. } => "WrongArity",
            Error::TooLargeToEnumerate { .. } => "TooLargeToEnumerate",
            Error::QuadratureUnderflow { .. } => "QuadratureUnderflow",
            Error::InvalidProblem { .. } => "InvalidProblem",
            Error::InvalidConfig { .. } => "InvalidConfig",
            Error::SampleTooLarge { .. } => "SampleTooLarge",
            Error::TooManyFailures { .. } => "TooManyFailures",
        }
    }
}
