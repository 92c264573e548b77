//! Test-time concept discovery and product-of-experts composition for
//! diffusion models.
//!
//! Given a single out-of-distribution query, the pipeline recovers density
//! modes of the noisy marginals by score ascent, summarizes each mode as a
//! clean-space diagonal Gaussian expert, greedily selects experts under a
//! submodular coverage objective, composes them into an analytic Gaussian
//! teacher, and samples the teacher through classifier-free guidance. The
//! teacher can optionally be distilled into a frozen denoiser via a low-rank
//! adapter plus a new class embedding.
//!
//! Core numerics are generic over the scalar type ([`scalar::Scalar`], i.e.
//! `f32` or `f64`); `f64` aliases for the main types live at the crate root.

pub mod bench;
pub mod compose;
pub mod discovery;
pub mod distill;
pub mod experiment;
pub mod gmm;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod net;
pub mod opt;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod schedule;
pub mod score;
pub mod train;

use thiserror::Error as ThisError;

/// Crate-wide error type.
#[derive(Debug, ThisError)]
pub enum Error {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("timestep {t} out of range 1..={t_count}")]
    TimestepOutOfRange { t: usize, t_count: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),
    #[error("unknown class id {0}")]
    UnknownClass(usize),
    #[error("no mixture components left after class restriction to {0}")]
    EmptyClassRestriction(usize),
    #[error("conditioning {0} not supported by this model")]
    UnsupportedConditioning(String),
    #[error("non-finite value encountered at {context}, step {step}")]
    NonFinite { context: &'static str, step: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("discovery produced an empty prototype pool (all ascents diverged or were discarded)")]
    EmptyPool,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("empty selection set")]
    EmptySelection,
    #[error("selection size {k} exceeds pool size {m}")]
    SelectionTooLarge { k: usize, m: usize },
    #[error("zero total precision in dimension {0} of the product")]
    ZeroPrecision(usize),
    #[error("metric input too small: need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("covariance not positive semi-definite after regularization (eigenvalue {0})")]
    NotPsd(f64),
    #[error("insufficient class population: need {need}, have {have}")]
    InsufficientPopulation { need: usize, have: usize },
    #[error("checkpoint format: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Crate-wide result alias.
pub type Result<V> = std::result::Result<V, Error>;

// Default-precision aliases for the main pipeline types.
pub type Schedule = schedule::NoiseSchedule<f64>;
pub type Oracle = gmm::GmmDensity<f64>;
pub type Denoiser = net::ToyDenoiser<f64>;
pub type Prototype = discovery::PrototypeExpert<f64>;
pub type Teacher = compose::PoeTeacher<f64>;
pub type Adapter = distill::LoraAdapter<f64>;
