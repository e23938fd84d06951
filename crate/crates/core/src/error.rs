use thiserror::Error;

/// Errors produced anywhere in the simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed scenario document (JSON syntax or schema), with a locus.
    #[error("{locus}: {message}")]
    Syntax { locus: String, message: String },

    /// The document parsed but a structural invariant does not hold.
    #[error("invalid topology: {0}")]
    Invalid(String),

    #[error("unknown node id `{0}`")]
    UnknownNode(String),

    #[error("wavelength {0} nm is outside the supported range [1250, 1600] nm")]
    WavelengthOutOfRange(f64),

    #[error("{name} = {value} is outside its domain: {expected}")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("decoy intensities must satisfy 0 < nu < mu (mu = {mu}, nu = {nu})")]
    DegenerateDecoy { mu: f64, nu: f64 },

    #[error("PLSu launch power requested for zero active ONTs")]
    NoActiveOnts,

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("calibration: {0}")]
    Calibration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, expected: &'static str) -> Self {
        Error::Domain { name, value, expected }
    }
}
