//! Discrete-time diffusion schedule and the elementary maps built on it:
//! forward noising, score/noise conversion, and the posterior-mean
//! (Tweedie) map back to clean space.
//!
//! Timesteps are 1-indexed `1..=T`. Index 0 means "clean data" and is never a
//! valid schedule lookup.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::{Error, Result};

/// Linear-beta discrete diffusion schedule with cached cumulative products.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule<T> {
    t_count: usize,
    beta: Vec<T>,
    alpha_bar: Vec<T>,
}

/// Conventional linear endpoints when a config does not override them.
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 2e-2;

/// Linear beta interpolation over `t_count` steps, with the running product
/// alpha_bar[t] = prod_{s<=t} (1 - beta[s]).
pub fn linear_beta_schedule<T: Scalar>(
    t_count: usize,
    beta_start: T,
    beta_end: T,
) -> Result<NoiseSchedule<T>> {
    if t_count < 2 {
        return Err(Error::InvalidSchedule(format!("need at least 2 timesteps, got {t_count}")));
    }
    if !(beta_start > T::zero() && beta_start <= beta_end && beta_end < T::one()) {
        return Err(Error::InvalidSchedule(format!(
            "beta endpoints must satisfy 0 < start <= end < 1, got ({beta_start}, {beta_end})"
        )));
    }
    let denom = T::of((t_count - 1) as f64);
    let mut beta = Vec::with_capacity(t_count);
    let mut alpha_bar = Vec::with_capacity(t_count);
    let mut prod = T::one();
    for i in 0..t_count {
        let frac = T::of(i as f64) / denom;
        let b = beta_start + (beta_end - beta_start) * frac;
        prod = prod * (T::one() - b);
        beta.push(b);
        alpha_bar.push(prod);
    }
    Ok(NoiseSchedule { t_count, beta, alpha_bar })
}

impl<T: Scalar> NoiseSchedule<T> {
    /// Standard `T=1000` linear schedule.
    pub fn default_linear() -> Self {
        linear_beta_schedule(1000, T::of(DEFAULT_BETA_START), T::of(DEFAULT_BETA_END))
            .expect("default endpoints are valid")
    }

    /// Number of timesteps T.
    pub fn t_count(&self) -> usize {
        self.t_count
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.t_count {
            return Err(Error::TimestepOutOfRange { t, t_count: self.t_count });
        }
        Ok(())
    }

    /// beta_t for a 1-indexed timestep.
    pub fn beta(&self, t: usize) -> Result<T> {
        self.check_t(t)?;
        Ok(self.beta[t - 1])
    }

    /// alpha_bar_t for a 1-indexed timestep.
    pub fn alpha_bar(&self, t: usize) -> Result<T> {
        self.check_t(t)?;
        Ok(self.alpha_bar[t - 1])
    }

    /// sqrt(alpha_bar_t).
    pub fn sqrt_alpha_bar(&self, t: usize) -> Result<T> {
        Ok(self.alpha_bar(t)?.sqrt())
    }

    /// sqrt(1 - alpha_bar_t), the forward kernel bandwidth.
    pub fn bandwidth(&self, t: usize) -> Result<T> {
        Ok((T::one() - self.alpha_bar(t)?).sqrt())
    }
}

fn check_dims<T>(a: &[T], b: &[T]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    Ok(())
}

/// x_t = sqrt(alpha_bar_t) x_0 + sqrt(1 - alpha_bar_t) eps, elementwise.
pub fn forward_noise<T: Scalar>(
    x0: &[T],
    t: usize,
    eps: &[T],
    s: &NoiseSchedule<T>,
) -> Result<Vec<T>> {
    check_dims(x0, eps)?;
    let a = s.sqrt_alpha_bar(t)?;
    let b = s.bandwidth(t)?;
    Ok(x0.iter().zip(eps).map(|(&x, &e)| a * x + b * e).collect())
}

/// score = -eps / sqrt(1 - alpha_bar_t).
pub fn score_from_eps<T: Scalar>(eps_pred: &[T], t: usize, s: &NoiseSchedule<T>) -> Result<Vec<T>> {
    let b = s.bandwidth(t)?;
    if b == T::zero() {
        return Err(Error::InvalidSchedule(format!("alpha_bar at t={t} is 1; score undefined")));
    }
    Ok(eps_pred.iter().map(|&e| -e / b).collect())
}

/// eps = -sqrt(1 - alpha_bar_t) * score; exact inverse of [`score_from_eps`].
pub fn eps_from_score<T: Scalar>(score: &[T], t: usize, s: &NoiseSchedule<T>) -> Result<Vec<T>> {
    let b = s.bandwidth(t)?;
    Ok(score.iter().map(|&v| -v * b).collect())
}

/// Posterior mean of the clean datum:
/// (x_t + (1 - alpha_bar_t) * score) / sqrt(alpha_bar_t).
pub fn tweedie_x0<T: Scalar>(
    xt: &[T],
    score: &[T],
    t: usize,
    s: &NoiseSchedule<T>,
) -> Result<Vec<T>> {
    check_dims(xt, score)?;
    let ab = s.alpha_bar(t)?;
    if ab == T::zero() {
        return Err(Error::InvalidSchedule(format!("alpha_bar at t={t} is 0; Tweedie undefined")));
    }
    let sa = ab.sqrt();
    let w = T::one() - ab;
    Ok(xt.iter().zip(score).map(|(&x, &g)| (x + w * g) / sa).collect())
}
