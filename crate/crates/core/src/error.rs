use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("defect table line {line}: {msg} (in `{text}`)")]
    DefectParse { line: usize, msg: String, text: String },

    #[error("quantum defect for l={l} is negative ({delta})")]
    NegativeDefect { l: u32, delta: f64 },

    #[error("invalid state n={n}, l={l}: {msg}")]
    State { n: u32, l: u32, msg: String },

    #[error("state n={n}, l={l} is not bound (E = {energy} >= 0)")]
    Unbound { n: u32, l: u32, energy: f64 },

    #[error("grid too coarse for n={n}, l={l}: {msg}")]
    GridTooCoarse { n: u32, l: u32, msg: String },

    #[error("normalization underflow for n={n}, l={l}")]
    NormUnderflow { n: u32, l: u32 },

    #[error("state (n={n}, l={l}) not in basis")]
    UnknownState { n: u32, l: u32 },

    #[error("operands use different bases: {0}")]
    BasisMismatch(String),

    #[error("radial functions live on different grids")]
    GridMismatch,

    #[error("spherical Bessel order {0} exceeds the supported bound 64")]
    BesselOrder(u32),

    #[error("pulse window {window} a.u. truncates more than 1e-6 of the impulse (tail fraction {tail:.3e})")]
    WindowTooShort { window: f64, tail: f64 },

    #[error("invalid register: {0}")]
    Register(String),

    #[error("invalid probabilities: {0}")]
    Probability(String),

    #[error("invalid binning: {0}")]
    Binning(String),

    #[error("{0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, Error>;
