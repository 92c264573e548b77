//! Distill the analytic teacher into the frozen denoiser: a low-rank adapter
//! on every dense layer plus one new class embedding, trained jointly on a
//! fixed pool of teacher-guided samples with the noise-prediction loss and
//! classifier-free dropout on the new embedding.

use serde::{Deserialize, Serialize};

use crate::compose::PoeTeacher;
use crate::linalg::Matrix;
use crate::net::{LoraGrads, ToyDenoiser};
use crate::opt::Adam;
use crate::rng;
use crate::sampler::{ddim_sample, sample_poe_teacher, GuidanceConfig};
use crate::scalar::Scalar;
use crate::schedule::{forward_noise, NoiseSchedule};
use crate::score::{Conditioning, ScoreModel};
use crate::{Error, Result};

/// Low-rank factors for one dense layer: delta W = scale * B A.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraFactor<T> {
    /// r x in, small-random init.
    pub a: Matrix<T>,
    /// out x r, zero init so the adapter starts as the identity delta.
    pub b: Matrix<T>,
}

/// Adapter over every dense layer of a denoiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraAdapter<T> {
    pub factors: Vec<LoraFactor<T>>,
    pub rank: usize,
    pub alpha: T,
}

impl<T: Scalar> LoraAdapter<T> {
    /// Zero-delta init: A ~ N(0, 0.01), B = 0.
    pub fn init(base: &ToyDenoiser<T>, rank: usize, alpha: T, seed: u64) -> Self {
        let mut r = rng::substream(seed, &[0x6c6f]);
        let factors = base
            .layers
            .iter()
            .map(|l| LoraFactor {
                a: Matrix::from_fn(rank, l.w.cols, |_, _| rng::normal::<T, _>(&mut r) * T::of(0.01)),
                b: Matrix::zeros(l.w.rows, rank),
            })
            .collect();
        Self { factors, rank, alpha }
    }

    /// alpha / rank.
    pub fn scale(&self) -> T {
        self.alpha / T::of(self.rank as f64)
    }

    pub fn check_shapes(&self, base: &ToyDenoiser<T>) -> Result<()> {
        if self.factors.len() != base.layers.len() {
            return Err(Error::InvalidConfig(format!(
                "adapter covers {} layers, base has {}",
                self.factors.len(),
                base.layers.len()
            )));
        }
        for (f, l) in self.factors.iter().zip(&base.layers) {
            if f.a.rows != self.rank
                || f.b.cols != self.rank
                || f.a.cols != l.w.cols
                || f.b.rows != l.w.rows
            {
                return Err(Error::InvalidConfig("adapter factor shape mismatch".into()));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.factors.iter().map(|f| f.a.data.len() + f.b.data.len()).sum()
    }
}

/// Distillation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig<T> {
    pub pool_size: usize,
    pub rank: usize,
    pub alpha: T,
    pub lr: T,
    pub epochs: usize,
    pub batch: usize,
    /// Probability of replacing the new embedding with the null token.
    pub cfg_dropout: T,
    pub embed_init_std: T,
    pub seed: u64,
}

impl<T: Scalar> DistillConfig<T> {
    pub fn new(seed: u64) -> Self {
        Self {
            pool_size: 256,
            rank: 8,
            alpha: T::of(16.0),
            lr: T::of(1e-3),
            epochs: 10,
            batch: 16,
            cfg_dropout: T::of(0.1),
            embed_init_std: T::of(0.01),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.pool_size == 0 || self.rank == 0 || self.epochs == 0 || self.batch == 0 {
            return Err(Error::InvalidConfig("distill sizes must be positive".into()));
        }
        if self.lr <= T::zero() || self.alpha <= T::zero() || self.embed_init_std <= T::zero() {
            return Err(Error::InvalidConfig("distill scales must be positive".into()));
        }
        if self.cfg_dropout < T::zero() || self.cfg_dropout >= T::one() {
            return Err(Error::InvalidConfig("cfg_dropout must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Frozen base + adapter + new embedding, used for adapted evaluation.
pub struct AdaptedDenoiser<'a, T> {
    pub base: &'a ToyDenoiser<T>,
    pub adapter: &'a LoraAdapter<T>,
    pub c_new: &'a [T],
}

impl<'a, T: Scalar> AdaptedDenoiser<'a, T> {
    pub fn new(base: &'a ToyDenoiser<T>, adapter: &'a LoraAdapter<T>, c_new: &'a [T]) -> Result<Self> {
        adapter.check_shapes(base)?;
        if c_new.len() != base.arch.width {
            return Err(Error::DimensionMismatch { expected: base.arch.width, got: c_new.len() });
        }
        Ok(Self { base, adapter, c_new })
    }
}

impl<T: Scalar> ScoreModel<T> for AdaptedDenoiser<'_, T> {
    fn dim(&self) -> usize {
        self.base.arch.dim
    }

    fn eps(&self, xt: &[T], t: usize, s: &NoiseSchedule<T>, c: &Conditioning) -> Result<Vec<T>> {
        s.alpha_bar(t)?;
        let emb: &[T] = match c {
            Conditioning::Adapter => self.c_new,
            other => self.base.embed_row(other)?,
        };
        self.base.eps_with(xt, t, emb, Some(self.adapter))
    }
}

/// Adapted forward pass: every dense weight W is replaced by
/// W + scale * B A; `Adapter` conditioning resolves to the new embedding,
/// `Null` to the frozen null row.
pub fn adapted_eps<T: Scalar>(
    base: &ToyDenoiser<T>,
    adapter: &LoraAdapter<T>,
    c_new: &[T],
    xt: &[T],
    t: usize,
    c: &Conditioning,
) -> Result<Vec<T>> {
    let emb: &[T] = match c {
        Conditioning::Adapter => c_new,
        other => base.embed_row(other)?,
    };
    base.eps_with(xt, t, emb, Some(adapter))
}

/// Draw the fixed distillation pool from the guided sampler once.
pub fn generate_pool<T: Scalar, M: ScoreModel<T>>(
    model: &M,
    teacher: &PoeTeacher<T>,
    gcfg: &GuidanceConfig<T>,
    s: &NoiseSchedule<T>,
    n_pool: usize,
) -> Result<Vec<Vec<T>>> {
    let mut cfg = gcfg.clone();
    cfg.n_samples = n_pool;
    sample_poe_teacher(model, teacher, &cfg, s)
}

/// Result of a distillation run.
#[derive(Debug, Clone)]
pub struct DistillOutcome<T> {
    pub adapter: LoraAdapter<T>,
    pub c_new: Vec<T>,
    /// Per-epoch mean of the per-dimension noise MSE.
    pub loss_trace: Vec<T>,
}

fn flatten_params<T: Scalar>(adapter: &LoraAdapter<T>, c_new: &[T]) -> Vec<T> {
    let mut flat = Vec::with_capacity(adapter.param_count() + c_new.len());
    for f in &adapter.factors {
        flat.extend_from_slice(&f.a.data);
        flat.extend_from_slice(&f.b.data);
    }
    flat.extend_from_slice(c_new);
    flat
}

fn unflatten_params<T: Scalar>(flat: &[T], adapter: &mut LoraAdapter<T>, c_new: &mut [T]) {
    let mut off = 0;
    for f in &mut adapter.factors {
        let an = f.a.data.len();
        f.a.data.copy_from_slice(&flat[off..off + an]);
        off += an;
        let bn = f.b.data.len();
        f.b.data.copy_from_slice(&flat[off..off + bn]);
        off += bn;
    }
    c_new.copy_from_slice(&flat[off..]);
}

fn flatten_grads<T: Scalar>(grads: &LoraGrads<T>, c_new_grad: &[T]) -> Vec<T> {
    let mut flat = Vec::new();
    for (ga, gb) in &grads.factors {
        flat.extend_from_slice(&ga.data);
        flat.extend_from_slice(&gb.data);
    }
    flat.extend_from_slice(c_new_grad);
    flat
}

/// Joint Adam optimization of (adapter, new embedding) on the frozen base
/// with the noise-prediction loss over the fixed pool. The base parameters
/// receive no gradients and are never touched.
pub fn distill<T: Scalar>(
    base: &ToyDenoiser<T>,
    pool: &[Vec<T>],
    cfg: &DistillConfig<T>,
    s: &NoiseSchedule<T>,
) -> Result<DistillOutcome<T>> {
    cfg.validate()?;
    if pool.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = base.arch.dim;
    for x in pool {
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
    }
    let mut adapter = LoraAdapter::init(base, cfg.rank, cfg.alpha, rng::derive_seed(cfg.seed, &[1]));
    let mut emb_rng = rng::substream(cfg.seed, &[2]);
    let mut c_new: Vec<T> = (0..base.arch.width)
        .map(|_| rng::normal::<T, _>(&mut emb_rng) * cfg.embed_init_std)
        .collect();

    let mut flat = flatten_params(&adapter, &c_new);
    let mut adam = Adam::new(cfg.lr, flat.len());
    let mut train_rng = rng::substream(cfg.seed, &[3]);
    let t_count = s.t_count();
    let null_row = base.arch.n_classes;
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;

    for _epoch in 0..cfg.epochs {
        let order = rng::shuffled_indices(&mut train_rng, pool.len());
        let mut epoch_loss = T::zero();
        for chunk in order.chunks(cfg.batch) {
            let mut grads = LoraGrads::zeros_like(&adapter);
            let mut c_new_grad = vec![T::zero(); c_new.len()];
            for &i in chunk {
                let x0 = &pool[i];
                let t = rng::uniform_usize(&mut train_rng, 1, t_count);
                let eps: Vec<T> = rng::normal_vec(&mut train_rng, d);
                let drop: T = rng::uniform(&mut train_rng);
                let use_new = drop >= cfg.cfg_dropout;
                let xt = forward_noise(x0, t, &eps, s)?;
                let emb: &[T] = if use_new { &c_new } else { base.embed.row(null_row) };
                let cache = base.forward_cached(&xt, t, emb, Some(&adapter))?;
                let inv_d = T::one() / T::of(d as f64);
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
                    return Err(Error::NonFinite { context: "distillation loss", step });
                }
                epoch_loss += loss;
                let row_grad =
                    base.backward(&cache, &d_out, Some(&adapter), None, Some(&mut grads), None);
                if use_new {
                    for (g, rg) in c_new_grad.iter_mut().zip(&row_grad) {
                        *g += *rg;
                    }
                }
            }
            let scale = T::one() / T::of(chunk.len() as f64);
            let mut flat_grads = flatten_grads(&grads, &c_new_grad);
            for g in &mut flat_grads {
                *g *= scale;
            }
            adam.step(&mut flat, &flat_grads);
            unflatten_params(&flat, &mut adapter, &mut c_new);
            step += 1;
        }
        trace.push(epoch_loss / T::of(pool.len() as f64));
    }
    Ok(DistillOutcome { adapter, c_new, loss_trace: trace })
}

/// Standard classifier-free sampling from the distilled concept: conditional
/// branch is the adapted model on the new embedding, unconditional branch the
/// adapted model on the null token, with a fixed scalar weight.
pub fn sample_distilled<T: Scalar>(
    base: &ToyDenoiser<T>,
    adapter: &LoraAdapter<T>,
    c_new: &[T],
    w: T,
    gcfg: &GuidanceConfig<T>,
    s: &NoiseSchedule<T>,
) -> Result<Vec<Vec<T>>> {
    let model = AdaptedDenoiser::new(base, adapter, c_new)?;
    ddim_sample(&model, |x, t| model.eps(x, t, s, &Conditioning::Adapter), |_| Ok(w), gcfg, s)
}
