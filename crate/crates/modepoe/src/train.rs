//! Backbone training: the standard noise-prediction objective with null-token
//! dropout, optimized by Adam over seeded mini-batches. Bit-reproducible for
//! a fixed seed.

use serde::{Deserialize, Serialize};

use crate::net::{DenoiserArch, DenoiserGrads, ToyDenoiser};
use crate::opt::Adam;
use crate::rng;
use crate::scalar::Scalar;
use crate::schedule::{forward_noise, NoiseSchedule};
use crate::{Error, Result};

/// Optimizer and dropout settings for backbone training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig<T> {
    pub lr: T,
    pub batch: usize,
    pub epochs: usize,
    /// Probability of replacing the class token with the null token.
    pub null_dropout: T,
    pub seed: u64,
}

impl<T: Scalar> TrainerConfig<T> {
    pub fn new(seed: u64) -> Self {
        Self { lr: T::of(1e-3), batch: 32, epochs: 20, null_dropout: T::of(0.1), seed }
    }

    fn validate(&self) -> Result<()> {
        if self.lr <= T::zero() || self.batch == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("trainer sizes must be positive".into()));
        }
        if self.null_dropout < T::zero() || self.null_dropout >= T::one() {
            return Err(Error::InvalidConfig("null_dropout must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Trained model plus its per-epoch loss trace.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: ToyDenoiser<T>,
    /// Per-epoch mean of the per-dimension noise MSE.
    pub loss_trace: Vec<T>,
}

fn flatten_model<T: Scalar>(m: &ToyDenoiser<T>) -> Vec<T> {
    let mut flat = Vec::with_capacity(m.param_count());
    for l in &m.layers {
        flat.extend_from_slice(&l.w.data);
        flat.extend_from_slice(&l.b);
    }
    flat.extend_from_slice(&m.embed.data);
    flat
}

fn unflatten_model<T: Scalar>(flat: &[T], m: &mut ToyDenoiser<T>) {
    let mut off = 0;
    for l in &mut m.layers {
        let wn = l.w.data.len();
        l.w.data.copy_from_slice(&flat[off..off + wn]);
        off += wn;
        let bn = l.b.len();
        l.b.copy_from_slice(&flat[off..off + bn]);
        off += bn;
    }
    m.embed.data.copy_from_slice(&flat[off..]);
}

fn flatten_grads<T: Scalar>(g: &DenoiserGrads<T>) -> Vec<T> {
    let mut flat = Vec::new();
    for l in &g.layers {
        flat.extend_from_slice(&l.w.data);
        flat.extend_from_slice(&l.b);
    }
    flat.extend_from_slice(&g.embed.data);
    flat
}

/// Train a class-conditional epsilon predictor on labeled clean samples.
///
/// Each example draws a fresh (t, noise) pair; the class token is replaced
/// by the null token with probability `null_dropout`.
pub fn train_backbone<T: Scalar>(
    data: &[(Vec<T>, usize)],
    arch: &DenoiserArch,
    s: &NoiseSchedule<T>,
    cfg: &TrainerConfig<T>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for (x, label) in data {
        if x.len() != arch.dim {
            return Err(Error::DimensionMismatch { expected: arch.dim, got: x.len() });
        }
        if *label >= arch.n_classes {
            return Err(Error::UnknownClass(*label));
        }
    }

    let mut model = ToyDenoiser::init(arch.clone(), rng::derive_seed(cfg.seed, &[0x696e]));
    let mut flat = flatten_model(&model);
    let mut adam = Adam::new(cfg.lr, flat.len());
    let mut train_rng = rng::substream(cfg.seed, &[0x7472]);
    let t_count = s.t_count();
    let null_row = arch.n_classes;
    let inv_d = T::one() / T::of(arch.dim as f64);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;

    for _epoch in 0..cfg.epochs {
        let order = rng::shuffled_indices(&mut train_rng, data.len());
        let mut epoch_loss = T::zero();
        for chunk in order.chunks(cfg.batch) {
            let mut grads = DenoiserGrads::zeros_like(&model);
            for &i in chunk {
                let (x0, label) = &data[i];
                let t = rng::uniform_usize(&mut train_rng, 1, t_count);
                let eps: Vec<T> = rng::normal_vec(&mut train_rng, arch.dim);
                let drop: T = rng::uniform(&mut train_rng);
                let row = if drop < cfg.null_dropout { null_row } else { *label };
                let xt = forward_noise(x0, t, &eps, s)?;
                let cache = model.forward_cached(&xt, t, model.embed.row(row), None)?;
                let mut loss = T::zero();
                let d_out: Vec<T> = cache
                    .output
                    .iter()
                    .zip(&eps)
                    .map(|(&o, &e)| {
                        loss += (o - e) * (o - e) * inv_d;
                        T::of(2.0) * (o - e) * inv_d
                    })
                    .collect();
                if !loss.is_finite() {
                    return Err(Error::NonFinite { context: "backbone training loss", step });
                }
                epoch_loss += loss;
                model.backward(&cache, &d_out, None, Some(&mut grads), None, Some(row));
            }
            grads.scale(T::one() / T::of(chunk.len() as f64));
            let flat_grads = flatten_grads(&grads);
            adam.step(&mut flat, &flat_grads);
            unflatten_model(&flat, &mut model);
            step += 1;
        }
        trace.push(epoch_loss / T::of(data.len() as f64));
    }
    Ok(TrainOutcome { model, loss_trace: trace })
}

/// Mean per-dimension noise MSE of a model on one clean example, averaged
/// over a timestep grid with fresh seeded noise; the overfit/quality probe.
pub fn eval_eps_mse<T: Scalar>(
    model: &ToyDenoiser<T>,
    x0: &[T],
    c: &crate::score::Conditioning,
    s: &NoiseSchedule<T>,
    t_grid: &[usize],
    n_draws: usize,
    seed: u64,
) -> Result<T> {
    use crate::score::ScoreModel;
    let d = x0.len();
    let mut total = T::zero();
    let mut count = T::zero();
    for (ti, &t) in t_grid.iter().enumerate() {
        let mut r = rng::substream(seed, &[0x6576, ti as u64]);
        for _ in 0..n_draws {
            let eps: Vec<T> = rng::normal_vec(&mut r, d);
            let xt = forward_noise(x0, t, &eps, s)?;
            let pred = model.eps(&xt, t, s, c)?;
            let mse = pred
                .iter()
                .zip(&eps)
                .map(|(&p, &e)| (p - e) * (p - e))
                .sum::<T>()
                / T::of(d as f64);
            total += mse;
            count += T::one();
        }
    }
    Ok(total / count)
}
