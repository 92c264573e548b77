//! Classifier-free guided DDIM sampling with the analytic teacher as the
//! conditional branch, plus the trained-class and query-only baselines.

use serde::{Deserialize, Serialize};

use crate::compose::PoeTeacher;
use crate::rng;
use crate::scalar::{mean, Scalar};
use crate::schedule::{forward_noise, NoiseSchedule};
use crate::score::{Conditioning, ScoreModel};
use crate::{Error, Result};

/// How the guidance weight evolves over the reverse trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    /// Constant w0.
    Fixed,
    /// w(t) = min(w0 * mean(var_t), w_max), cancelling the teacher's
    /// implicit precision scaling.
    VarianceAware,
}

/// Sampler settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig<T> {
    /// Base guidance scale.
    pub w0: T,
    /// Cap on the variance-aware weight.
    pub w_max: T,
    pub schedule_mode: ScheduleMode,
    /// Reverse sub-grid size.
    pub ddim_steps: usize,
    /// DDIM stochasticity; only the deterministic 0 is supported.
    pub eta: T,
    /// Clamp range for the predicted clean state at each reverse step; image
    /// runs use (-1, 1), unbounded worlds use None.
    pub x0_clip: Option<(T, T)>,
    pub n_samples: usize,
    pub seed: u64,
}

impl<T: Scalar> GuidanceConfig<T> {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self {
            w0: T::of(1.2),
            w_max: T::of(2.0),
            schedule_mode: ScheduleMode::VarianceAware,
            ddim_steps: 50,
            eta: T::zero(),
            x0_clip: None,
            n_samples,
            seed,
        }
    }

    fn validate(&self, s: &NoiseSchedule<T>) -> Result<()> {
        if self.w0 <= T::zero() {
            return Err(Error::InvalidConfig("w0 must be positive".into()));
        }
        if self.ddim_steps == 0 || self.ddim_steps > s.t_count() {
            return Err(Error::InvalidConfig(format!(
                "ddim_steps {} outside 1..={}",
                self.ddim_steps,
                s.t_count()
            )));
        }
        if self.eta != T::zero() {
            return Err(Error::InvalidConfig("only eta = 0 (deterministic DDIM) is supported".into()));
        }
        if let Some((lo, hi)) = self.x0_clip {
            if lo >= hi {
                return Err(Error::InvalidConfig("x0_clip bounds must satisfy lo < hi".into()));
            }
        }
        Ok(())
    }
}

/// Baseline family and its knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec<T> {
    /// Timesteps the class-scoring loss averages over.
    pub t_eval: Vec<usize>,
    /// Paired noise draws per timestep.
    pub n_eps: usize,
    /// Softmax temperature for the top-k composition.
    pub tau_tk: T,
    /// Isotropic std of the query-only teacher.
    pub sigma_q: T,
}

impl<T: Scalar> BaselineSpec<T> {
    /// Defaults: 10 timesteps uniform in [50, 500] (clamped to the schedule),
    /// 8 paired draws, tau 1.0, sigma 0.1.
    pub fn defaults(s: &NoiseSchedule<T>) -> Self {
        let hi = 500.min(s.t_count());
        let lo = 50.min(hi);
        let n = 10usize;
        let t_eval = (0..n)
            .map(|i| lo + (hi - lo) * i / (n - 1).max(1))
            .collect();
        Self { t_eval, n_eps: 8, tau_tk: T::one(), sigma_q: T::of(0.1) }
    }
}

/// Mean and diagonal variance of the teacher's noisy marginal at t.
pub fn teacher_noisy_params<T: Scalar>(
    teacher: &PoeTeacher<T>,
    t: usize,
    s: &NoiseSchedule<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    let ab = s.alpha_bar(t)?;
    let sa = ab.sqrt();
    let kernel = T::one() - ab;
    let mean_t = teacher.mu.iter().map(|&m| sa * m).collect();
    let var_t = teacher.var.iter().map(|&v| ab * v + kernel).collect();
    Ok((mean_t, var_t))
}

/// Analytic noise prediction of the teacher's noisy marginal:
/// sqrt(1 - alpha_bar) * (x_t - sqrt(alpha_bar) mu) / var_t per dimension.
pub fn teacher_eps<T: Scalar>(
    teacher: &PoeTeacher<T>,
    xt: &[T],
    t: usize,
    s: &NoiseSchedule<T>,
) -> Result<Vec<T>> {
    if xt.len() != teacher.dim() {
        return Err(Error::DimensionMismatch { expected: teacher.dim(), got: xt.len() });
    }
    let b = s.bandwidth(t)?;
    let (mean_t, var_t) = teacher_noisy_params(teacher, t, s)?;
    Ok(xt
        .iter()
        .zip(mean_t.iter().zip(&var_t))
        .map(|(&x, (&m, &v))| b * (x - m) / v)
        .collect())
}

/// Guidance weight at t: w0 in fixed mode, min(w0 * tr(var_t)/d, w_max) in
/// variance-aware mode.
pub fn guidance_weight<T: Scalar>(
    teacher: &PoeTeacher<T>,
    t: usize,
    s: &NoiseSchedule<T>,
    cfg: &GuidanceConfig<T>,
) -> Result<T> {
    match cfg.schedule_mode {
        ScheduleMode::Fixed => Ok(cfg.w0),
        ScheduleMode::VarianceAware => {
            let (_, var_t) = teacher_noisy_params(teacher, t, s)?;
            Ok((cfg.w0 * mean(&var_t)).min(cfg.w_max))
        }
    }
}

/// eps_uncond + w (eps_cond - eps_uncond).
pub fn cfg_compose<T: Scalar>(eps_uncond: &[T], eps_cond: &[T], w: T) -> Vec<T> {
    eps_uncond
        .iter()
        .zip(eps_cond)
        .map(|(&u, &c)| u + w * (c - u))
        .collect()
}

/// Uniform reverse sub-grid over [1, T], descending, always containing 1.
pub fn ddim_timesteps(t_count: usize, steps: usize) -> Vec<usize> {
    let mut ts: Vec<usize> = (0..steps)
        .map(|i| {
            if steps == 1 {
                t_count
            } else {
                1 + ((t_count - 1) * i + (steps - 1) / 2) / (steps - 1)
            }
        })
        .collect();
    ts.dedup();
    ts.reverse();
    ts
}

/// Deterministic DDIM reverse sampler with a classifier-free conditional
/// branch. The unconditional branch is the model's null prediction; the
/// conditional branch and the per-timestep guidance weight are supplied by
/// the caller. Each sample runs on its own RNG stream derived from
/// (seed, sample index).
pub fn ddim_sample<T, M, C, W>(
    model: &M,
    mut cond_eps: C,
    mut weight: W,
    cfg: &GuidanceConfig<T>,
    s: &NoiseSchedule<T>,
) -> Result<Vec<Vec<T>>>
where
    T: Scalar,
    M: ScoreModel<T>,
    C: FnMut(&[T], usize) -> Result<Vec<T>>,
    W: FnMut(usize) -> Result<T>,
{
    cfg.validate(s)?;
    let grid = ddim_timesteps(s.t_count(), cfg.ddim_steps);
    let d = model.dim();
    let mut out = Vec::with_capacity(cfg.n_samples);
    for sample_idx in 0..cfg.n_samples {
        let mut r = rng::substream(cfg.seed, &[0x7361, sample_idx as u64]);
        let mut x: Vec<T> = rng::normal_vec(&mut r, d);
        for (step_idx, &t) in grid.iter().enumerate() {
            let w = weight(t)?;
            let eps_u = model.eps(&x, t, s, &Conditioning::Null)?;
            let eps_hat = if w == T::zero() {
                eps_u
            } else {
                let eps_c = cond_eps(&x, t)?;
                cfg_compose(&eps_u, &eps_c, w)
            };
            let ab = s.alpha_bar(t)?;
            let sa = ab.sqrt();
            let bw = (T::one() - ab).sqrt();
            let t_prev = grid.get(step_idx + 1).copied().unwrap_or(0);
            let (sa_prev, bw_prev) = if t_prev == 0 {
                (T::one(), T::zero())
            } else {
                let abp = s.alpha_bar(t_prev)?;
                (abp.sqrt(), (T::one() - abp).sqrt())
            };
            for i in 0..d {
                let mut x0_pred = (x[i] - bw * eps_hat[i]) / sa;
                if let Some((lo, hi)) = cfg.x0_clip {
                    x0_pred = x0_pred.max(lo).min(hi);
                }
                x[i] = sa_prev * x0_pred + bw_prev * eps_hat[i];
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { context: "ddim reverse step", step: step_idx });
            }
        }
        out.push(x);
    }
    Ok(out)
}

/// Sample the PoE teacher through guided DDIM.
pub fn sample_poe_teacher<T: Scalar, M: ScoreModel<T>>(
    model: &M,
    teacher: &PoeTeacher<T>,
    cfg: &GuidanceConfig<T>,
    s: &NoiseSchedule<T>,
) -> Result<Vec<Vec<T>>> {
    ddim_sample(
        model,
        |x, t| teacher_eps(teacher, x, t, s),
        |t| guidance_weight(teacher, t, s, cfg),
        cfg,
        s,
    )
}

/// Unconditional samples (guidance weight 0).
pub fn sample_unconditional<T: Scalar, M: ScoreModel<T>>(
    model: &M,
    cfg: &GuidanceConfig<T>,
    s: &NoiseSchedule<T>,
) -> Result<Vec<Vec<T>>> {
    ddim_sample(model, |_, _| unreachable!("unconditional branch"), |_| Ok(T::zero()), cfg, s)
}

/// Average paired DDPM loss of the query under each trained class token.
///
/// The same (t, noise) draws are shared across classes so the ranking is a
/// paired comparison; the loss is the per-dimension mean squared error.
pub fn score_trained_classes<T: Scalar, M: ScoreModel<T>>(
    model: &M,
    x_q: &[T],
    classes: &[usize],
    spec: &BaselineSpec<T>,
    s: &NoiseSchedule<T>,
    seed: u64,
) -> Result<Vec<(usize, T)>> {
    if spec.t_eval.is_empty() {
        return Err(Error::InvalidConfig("t_eval must be nonempty".into()));
    }
    let d = x_q.len();
    let mut losses: Vec<(usize, T)> = classes.iter().map(|&c| (c, T::zero())).collect();
    let mut count = T::zero();
    for (ti, &t) in spec.t_eval.iter().enumerate() {
        for j in 0..spec.n_eps {
            let mut r = rng::substream(seed, &[0x6c73, ti as u64, j as u64]);
            let eps: Vec<T> = rng::normal_vec(&mut r, d);
            let xt = forward_noise(x_q, t, &eps, s)?;
            for (ci, &c) in classes.iter().enumerate() {
                let pred = model.eps(&xt, t, s, &Conditioning::ClassToken(c))?;
                let mse = pred
                    .iter()
                    .zip(&eps)
                    .map(|(&p, &e)| (p - e) * (p - e))
                    .sum::<T>()
                    / T::of(d as f64);
                losses[ci].1 += mse;
            }
            count += T::one();
        }
    }
    for l in &mut losses {
        l.1 /= count;
    }
    Ok(losses)
}

/// The k lowest-loss classes, ascending by loss (ties by class id).
pub fn top_k_classes<T: Scalar>(losses: &[(usize, T)], k: usize) -> Vec<(usize, T)> {
    let mut sorted = losses.to_vec();
    sorted.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    sorted.truncate(k);
    sorted
}

/// Conditional branch of the top-k baseline: for k = 1, the plain class
/// conditional; for k > 1, the softmax-weighted composition of class
/// residuals against the null prediction.
pub fn topk_eps<T: Scalar, M: ScoreModel<T>>(
    model: &M,
    xt: &[T],
    t: usize,
    s: &NoiseSchedule<T>,
    top: &[(usize, T)],
    tau_tk: T,
) -> Result<Vec<T>> {
    if top.is_empty() {
        return Err(Error::EmptySelection);
    }
    if top.len() == 1 {
        return model.eps(xt, t, s, &Conditioning::ClassToken(top[0].0));
    }
    // w_k = softmax(-loss_k / tau)
    let scaled: Vec<T> = top.iter().map(|&(_, l)| -l / tau_tk).collect();
    let m = scaled.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = scaled.iter().map(|&v| (v - m).exp()).collect();
    let z: T = exps.iter().copied().sum();
    let eps_u = model.eps(xt, t, s, &Conditioning::Null)?;
    let mut out = eps_u.clone();
    for (&(c, _), &e) in top.iter().zip(&exps) {
        let w = e / z;
        let eps_c = model.eps(xt, t, s, &Conditioning::ClassToken(c))?;
        for i in 0..out.len() {
            out[i] += w * (eps_c[i] - eps_u[i]);
        }
    }
    Ok(out)
}

/// Sample the top-k baseline: the composed class branch under a fixed
/// scalar guidance weight.
pub fn sample_topk<T: Scalar, M: ScoreModel<T>>(
    model: &M,
    top: &[(usize, T)],
    tau_tk: T,
    cfg: &GuidanceConfig<T>,
    s: &NoiseSchedule<T>,
) -> Result<Vec<Vec<T>>> {
    let w = cfg.w0.min(cfg.w_max);
    ddim_sample(model, |x, t| topk_eps(model, x, t, s, top, tau_tk), |_| Ok(w), cfg, s)
}

/// Single-query Gaussian teacher with fixed isotropic variance.
pub fn query_only_teacher<T: Scalar>(x_q: &[T], sigma_q: T) -> Result<PoeTeacher<T>> {
    if sigma_q <= T::zero() {
        return Err(Error::InvalidConfig("sigma_q must be positive".into()));
    }
    Ok(PoeTeacher { mu: x_q.to_vec(), var: vec![sigma_q * sigma_q; x_q.len()] })
}
