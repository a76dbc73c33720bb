//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by the modulator, the designs and the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("angle {0} rad lies outside the open interval (-pi/2, pi/2)")]
    AngleOutOfRange(f64),
    #[error("spacing ratio d/lambda = {0} lies outside (0, 0.5]")]
    SpacingOutOfRange(f64),
    #[error("array must have at least one antenna")]
    EmptyArray,
    #[error("channel gain must be nonzero")]
    ZeroGain,
    #[error("quantizer input is not finite")]
    NonFinite,
    #[error("quantization level count must be at least 2, got {0}")]
    BadLevelCount(usize),
    #[error("filter order must be at least 1")]
    ZeroOrder,
    #[error("expected a {expected} filter design")]
    DesignKind { expected: &'static str },
    #[error("input shape ({rows}, {cols}) does not match the design")]
    ShapeMismatch { rows: usize, cols: usize },
    #[error("2D coefficient matrix must have a zero entry at (0, 0)")]
    NonZeroOrigin,
    #[error("amplitude must be positive, got {0}")]
    BadAmplitude(f64),
    #[error("M = {m_levels} leaves no amplitude budget: A <= {m_levels} - {norm} requires A <= 0")]
    InfeasibleAmplitude { m_levels: usize, norm: f64 },
    #[error("empty target set")]
    EmptyTargets,
    #[error("target list lengths differ: {0} frequencies vs {1} weights")]
    TargetLengthMismatch(usize, usize),
    #[error("sector bounds reversed: {lo} > {hi}")]
    SectorReversed { lo: f64, hi: f64 },
    #[error("sector [{lo_deg}, {hi_deg}] deg cannot hold {k} users at {sep_deg} deg separation")]
    SectorTooNarrow {
        lo_deg: f64,
        hi_deg: f64,
        k: usize,
        sep_deg: f64,
    },
    #[error("user placement rejection sampling failed after {0} attempts")]
    PlacementFailed(usize),
    #[error("negative noise weight gamma = {0}")]
    NegativeGamma(f64),
    #[error("recovered scale xi = {0} is not positive")]
    NonPositiveXi(f64),
    #[error("all-zero symbol batch: peak normalization undefined")]
    DegenerateInput,
    #[error("effective receive gain is zero for user {0}")]
    ZeroEffectiveGain(usize),
    #[error("solver stopped after {iterations} iterations (residuals {primal:.2e}/{dual:.2e}, gap {gap:.2e})")]
    SolverStalled {
        iterations: usize,
        primal: f64,
        dual: f64,
        gap: f64,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::SolverStalled { .. } | Error::NonPositiveXi(_))
    }
}
