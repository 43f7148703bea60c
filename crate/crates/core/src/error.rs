use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FtnError {
    #[error("unsupported modulation order {0}: expected an even power of two in 4..=65536")]
    UnsupportedOrder(usize),

    #[error("bit sequence of length {len} is not a multiple of {bits_per_symbol} bits per symbol")]
    BitLength { len: usize, bits_per_symbol: usize },

    #[error("symbol {index} ({re}, {im}) is not a constellation point")]
    NotAConstellationPoint { index: usize, re: f64, im: f64 },

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("power iteration did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error(
        "ISI matrix is ill-conditioned (condition estimate {0:e}); use the whitened model instead"
    )]
    IllConditioned(f64),

    #[error("folded ISI spectrum has spectral zeros (minimum {min:e} below floor {floor:e})")]
    SpectralZeros { min: f64, floor: f64 },

    #[error("spectral factorization did not converge: reconstruction error {0:e}")]
    FactorizationDiverged(f64),

    #[error("ISI model carries no causal factor; run spectral factorization first")]
    MissingFactor,

    #[error("received block kind does not match the requested detection model")]
    ModelMismatch,

    #[error("preconditioning scale {0:e} is too small")]
    DegenerateScale(f64),

    #[error("exhaustive search space {size} exceeds the cap {cap}")]
    SearchSpaceTooLarge { size: u128, cap: u128 },

    #[error("Nyquist detection requires tau = 1, got {0}")]
    NotNyquist(f64),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for FtnError {
    fn from(e: std::io::Error) -> Self {
        FtnError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FtnError>;
