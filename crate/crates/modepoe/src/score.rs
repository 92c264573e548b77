//! The score-model contract shared by the exact mixture oracle and the
//! trainable denoiser.
//!
//! Implementations provide at least one of `eps`/`score`; the other follows
//! from score = -eps / sqrt(1 - alpha_bar_t), so the conversion identity
//! holds by construction for every backend.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::schedule::NoiseSchedule;
use crate::Result;

/// Conditioning signal for a score evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Conditioning {
    /// The reserved null token (unconditional branch).
    Null,
    /// A trained class token.
    ClassToken(usize),
    /// The distilled concept embedding of an adapted model.
    Adapter,
}

impl std::fmt::Display for Conditioning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Conditioning::Null => write!(f, "null"),
            Conditioning::ClassToken(id) => write!(f, "class({id})"),
            Conditioning::Adapter => write!(f, "adapter"),
        }
    }
}

/// Deterministic noise/score evaluator over noisy states.
pub trait ScoreModel<T: Scalar> {
    /// Ambient dimension d.
    fn dim(&self) -> usize;

    /// Noise prediction eps(x_t, t, c).
    fn eps(&self, xt: &[T], t: usize, s: &NoiseSchedule<T>, c: &Conditioning) -> Result<Vec<T>> {
        let score = self.score(xt, t, s, c)?;
        crate::schedule::eps_from_score(&score, t, s)
    }

    /// Score of the noisy marginal, grad_x log p_t(x_t | c).
    fn score(&self, xt: &[T], t: usize, s: &NoiseSchedule<T>, c: &Conditioning) -> Result<Vec<T>> {
        let eps = self.eps(xt, t, s, c)?;
        crate::schedule::score_from_eps(&eps, t, s)
    }
}
