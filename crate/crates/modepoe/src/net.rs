//! Small fully-connected noise predictor.
//!
//! Input is the noisy state concatenated with sinusoidal time features; a
//! learned class embedding is added to the first hidden pre-activation. The
//! embedding table carries one reserved null row (the last) for
//! classifier-free dropout. Activation is tanh throughout, output is linear
//! of width d.
//!
//! Forward and reverse passes are hand-rolled so the crate carries no
//! autodiff dependency; the reverse pass optionally accumulates gradients for
//! a low-rank adapter instead of the frozen base weights.

use serde::{Deserialize, Serialize};

use crate::distill::LoraAdapter;
use crate::linalg::Matrix;
use crate::rng;
use crate::scalar::Scalar;
use crate::schedule::NoiseSchedule;
use crate::score::{Conditioning, ScoreModel};
use crate::{Error, Result};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserArch {
    /// Ambient data dimension d.
    pub dim: usize,
    /// Hidden width.
    pub width: usize,
    /// Number of hidden layers.
    pub hidden_layers: usize,
    /// Sinusoidal time feature count (even).
    pub time_feat_dim: usize,
    /// Trained class count (embedding table gets one extra null row).
    pub n_classes: usize,
}

impl DenoiserArch {
    pub fn new(dim: usize, n_classes: usize) -> Self {
        Self { dim, width: 256, hidden_layers: 3, time_feat_dim: 16, n_classes }
    }

    pub fn with_width(mut self, width: usize) -> Self {
        self.width = width;
        self
    }

    pub fn with_hidden_layers(mut self, n: usize) -> Self {
        self.hidden_layers = n;
        self
    }
}

/// Dense layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear<T> {
    pub w: Matrix<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> Linear<T> {
    fn zeros_like(other: &Linear<T>) -> Self {
        Self { w: Matrix::zeros(other.w.rows, other.w.cols), b: vec![T::zero(); other.b.len()] }
    }
}

/// Fully-connected class-conditional epsilon predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyDenoiser<T> {
    pub arch: DenoiserArch,
    /// hidden_layers + 1 entries; the last maps width -> dim.
    pub layers: Vec<Linear<T>>,
    /// (n_classes + 1) x width; last row is the null token.
    pub embed: Matrix<T>,
}

/// Cached activations of one forward pass.
pub struct ForwardCache<T> {
    /// xt concatenated with time features.
    pub input: Vec<T>,
    /// Post-activation of each hidden layer.
    pub hidden: Vec<Vec<T>>,
    /// A*x per layer when an adapter was active.
    pub lora_mids: Option<Vec<Vec<T>>>,
    pub output: Vec<T>,
}

/// Gradient accumulator with the same shapes as the model.
#[derive(Debug, Clone)]
pub struct DenoiserGrads<T> {
    pub layers: Vec<Linear<T>>,
    pub embed: Matrix<T>,
}

impl<T: Scalar> DenoiserGrads<T> {
    pub fn zeros_like(model: &ToyDenoiser<T>) -> Self {
        Self {
            layers: model.layers.iter().map(Linear::zeros_like).collect(),
            embed: Matrix::zeros(model.embed.rows, model.embed.cols),
        }
    }

    pub fn scale(&mut self, s: T) {
        for l in &mut self.layers {
            for w in &mut l.w.data {
                *w *= s;
            }
            for b in &mut l.b {
                *b *= s;
            }
        }
        for e in &mut self.embed.data {
            *e *= s;
        }
    }
}

/// Sinusoidal features of an integer timestep.
pub fn time_features<T: Scalar>(t: usize, dim: usize) -> Vec<T> {
    debug_assert!(dim % 2 == 0, "time feature dim must be even");
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for k in 0..half {
        let freq = (-(k as f64) * (10_000f64).ln() / half as f64).exp();
        let arg = t as f64 * freq;
        out.push(T::of(arg.sin()));
        out.push(T::of(arg.cos()));
    }
    out
}

impl<T: Scalar> ToyDenoiser<T> {
    /// Seeded init: weights N(0, 1/fan_in), biases zero, embeddings N(0, 0.1).
    pub fn init(arch: DenoiserArch, seed: u64) -> Self {
        let mut r = rng::substream(seed, &[0x6e65]);
        let in_dim = arch.dim + arch.time_feat_dim;
        let mut dims = Vec::with_capacity(arch.hidden_layers + 2);
        dims.push(in_dim);
        for _ in 0..arch.hidden_layers {
            dims.push(arch.width);
        }
        dims.push(arch.dim);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let std = T::of(1.0 / (fan_in as f64).sqrt());
                Linear {
                    w: Matrix::from_fn(fan_out, fan_in, |_, _| rng::normal::<T, _>(&mut r) * std),
                    b: vec![T::zero(); fan_out],
                }
            })
            .collect();
        let embed = Matrix::from_fn(arch.n_classes + 1, arch.width, |_, _| {
            rng::normal::<T, _>(&mut r) * T::of(0.1)
        });
        Self { arch, layers, embed }
    }

    /// Total trainable parameter count.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.data.len() + l.b.len()).sum::<usize>()
            + self.embed.data.len()
    }

    /// Embedding row for a conditioning token; `Adapter` is rejected here and
    /// only resolved by an adapted wrapper.
    pub fn embed_row(&self, c: &Conditioning) -> Result<&[T]> {
        match c {
            Conditioning::Null => Ok(self.embed.row(self.arch.n_classes)),
            Conditioning::ClassToken(id) => {
                if *id >= self.arch.n_classes {
                    return Err(Error::UnknownClass(*id));
                }
                Ok(self.embed.row(*id))
            }
            Conditioning::Adapter => {
                Err(Error::UnsupportedConditioning("adapter on base denoiser".into()))
            }
        }
    }

    fn check_input(&self, xt: &[T]) -> Result<()> {
        if xt.len() != self.arch.dim {
            return Err(Error::DimensionMismatch { expected: self.arch.dim, got: xt.len() });
        }
        Ok(())
    }

    fn layer_input<'a>(&self, cache: &'a ForwardCache<T>, i: usize) -> &'a [T] {
        if i == 0 {
            &cache.input
        } else {
            &cache.hidden[i - 1]
        }
    }

    /// Forward pass with cached activations for a later reverse pass.
    pub fn forward_cached(
        &self,
        xt: &[T],
        t: usize,
        emb_row: &[T],
        adapter: Option<&LoraAdapter<T>>,
    ) -> Result<ForwardCache<T>> {
        self.check_input(xt)?;
        if let Some(a) = adapter {
            a.check_shapes(self)?;
        }
        let mut input = Vec::with_capacity(self.arch.dim + self.arch.time_feat_dim);
        input.extend_from_slice(xt);
        input.extend(time_features::<T>(t, self.arch.time_feat_dim));

        let n_layers = self.layers.len();
        let mut hidden: Vec<Vec<T>> = Vec::with_capacity(n_layers - 1);
        let mut lora_mids: Option<Vec<Vec<T>>> = adapter.map(|_| Vec::with_capacity(n_layers));
        let mut cur: Vec<T> = input.clone();
        let mut output = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut pre = layer.w.matvec(&cur);
            if let Some(a) = adapter {
                let f = &a.factors[i];
                let mid = f.a.matvec(&cur);
                let up = f.b.matvec(&mid);
                for (p, u) in pre.iter_mut().zip(&up) {
                    *p += a.scale() * *u;
                }
                lora_mids.as_mut().unwrap().push(mid);
            }
            for (p, b) in pre.iter_mut().zip(&layer.b) {
                *p += *b;
            }
            if i == 0 {
                for (p, e) in pre.iter_mut().zip(emb_row) {
                    *p += *e;
                }
            }
            if i + 1 == n_layers {
                output = pre;
            } else {
                for p in pre.iter_mut() {
                    *p = p.tanh();
                }
                hidden.push(pre.clone());
                cur = pre;
            }
        }
        Ok(ForwardCache { input, hidden, lora_mids, output })
    }

    /// Reverse pass from d(loss)/d(output).
    ///
    /// Accumulates into `base_grads` and/or `lora_grads` when given; returns
    /// the gradient with respect to the first pre-activation, which is also
    /// the gradient of whatever embedding row was added there. When
    /// `emb_row_idx` is set the row gradient is additionally accumulated into
    /// `base_grads.embed`.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        d_out: &[T],
        adapter: Option<&LoraAdapter<T>>,
        mut base_grads: Option<&mut DenoiserGrads<T>>,
        mut lora_grads: Option<&mut LoraGrads<T>>,
        emb_row_idx: Option<usize>,
    ) -> Vec<T> {
        let n_layers = self.layers.len();
        let mut delta: Vec<T> = d_out.to_vec();
        for i in (0..n_layers).rev() {
            // delta is the gradient at layer i's pre-activation
            let x_in = self.layer_input(cache, i);
            if let Some(g) = base_grads.as_deref_mut() {
                g.layers[i].w.add_outer(T::one(), &delta, x_in);
                for (gb, d) in g.layers[i].b.iter_mut().zip(&delta) {
                    *gb += *d;
                }
            }
            if let (Some(a), Some(lg)) = (adapter, lora_grads.as_deref_mut()) {
                let f = &a.factors[i];
                let mid = &cache.lora_mids.as_ref().expect("adapter cache")[i];
                let bt_delta = f.b.tvec(&delta);
                lg.factors[i].1.add_outer(a.scale(), &delta, mid); // dB
                lg.factors[i].0.add_outer(a.scale(), &bt_delta, x_in); // dA
            }
            if i == 0 {
                if let (Some(g), Some(row)) = (base_grads.as_deref_mut(), emb_row_idx) {
                    for (ge, d) in g.embed.row_mut(row).iter_mut().zip(&delta) {
                        *ge += *d;
                    }
                }
                return delta;
            }
            // propagate through the (possibly adapted) weight, then tanh'
            let mut d_in = self.layers[i].w.tvec(&delta);
            if let Some(a) = adapter {
                let f = &a.factors[i];
                let bt_delta = f.b.tvec(&delta);
                let extra = f.a.tvec(&bt_delta);
                for (d, e) in d_in.iter_mut().zip(&extra) {
                    *d += a.scale() * *e;
                }
            }
            let h = &cache.hidden[i - 1];
            for (d, hv) in d_in.iter_mut().zip(h) {
                *d *= T::one() - *hv * *hv;
            }
            delta = d_in;
        }
        unreachable!("loop returns at layer 0")
    }

    /// Plain epsilon prediction (no cache).
    pub fn eps_with(
        &self,
        xt: &[T],
        t: usize,
        emb_row: &[T],
        adapter: Option<&LoraAdapter<T>>,
    ) -> Result<Vec<T>> {
        Ok(self.forward_cached(xt, t, emb_row, adapter)?.output)
    }
}

/// Gradient accumulator for adapter factors; pairs are (dA, dB) per layer.
#[derive(Debug, Clone)]
pub struct LoraGrads<T> {
    pub factors: Vec<(Matrix<T>, Matrix<T>)>,
}

impl<T: Scalar> LoraGrads<T> {
    pub fn zeros_like(adapter: &LoraAdapter<T>) -> Self {
        Self {
            factors: adapter
                .factors
                .iter()
                .map(|f| {
                    (Matrix::zeros(f.a.rows, f.a.cols), Matrix::zeros(f.b.rows, f.b.cols))
                })
                .collect(),
        }
    }
}

impl<T: Scalar> ScoreModel<T> for ToyDenoiser<T> {
    fn dim(&self) -> usize {
        self.arch.dim
    }

    fn eps(&self, xt: &[T], t: usize, s: &NoiseSchedule<T>, c: &Conditioning) -> Result<Vec<T>> {
        s.alpha_bar(t)?; // range check
        let emb = self.embed_row(c)?;
        self.eps_with(xt, t, emb, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::NoiseSchedule;

    fn tiny() -> ToyDenoiser<f64> {
        let arch = DenoiserArch { dim: 3, width: 8, hidden_layers: 2, time_feat_dim: 4, n_classes: 2 };
        ToyDenoiser::init(arch, 9)
    }

    #[test]
    fn deterministic_forward() {
        let m = tiny();
        let s: NoiseSchedule<f64> = NoiseSchedule::default_linear();
        let x = [0.1, -0.2, 0.4];
        let a = m.eps(&x, 10, &s, &Conditioning::ClassToken(0)).unwrap();
        let b = m.eps(&x, 10, &s, &Conditioning::ClassToken(0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn conditioning_changes_output() {
        let m = tiny();
        let s: NoiseSchedule<f64> = NoiseSchedule::default_linear();
        let x = [0.1, -0.2, 0.4];
        let null = m.eps(&x, 10, &s, &Conditioning::Null).unwrap();
        let cls = m.eps(&x, 10, &s, &Conditioning::ClassToken(1)).unwrap();
        assert!(null.iter().zip(&cls).any(|(a, b)| (a - b).abs() > 1e-12));
    }

    #[test]
    fn unknown_class_rejected() {
        let m = tiny();
        let s: NoiseSchedule<f64> = NoiseSchedule::default_linear();
        assert!(matches!(
            m.eps(&[0.0; 3], 5, &s, &Conditioning::ClassToken(7)),
            Err(Error::UnknownClass(7))
        ));
        assert!(m.eps(&[0.0; 3], 5, &s, &Conditioning::Adapter).is_err());
    }

    #[test]
    fn score_identity_by_construction() {
        let m = tiny();
        let s: NoiseSchedule<f64> = NoiseSchedule::default_linear();
        let x = [0.3, 0.0, -0.7];
        let t = 77;
        let eps = m.eps(&x, t, &s, &Conditioning::Null).unwrap();
        let score = m.score(&x, t, &s, &Conditioning::Null).unwrap();
        let b = s.bandwidth(t).unwrap();
        for (e, sc) in eps.iter().zip(&score) {
            assert_eq!(*sc, -*e / b);
        }
    }

    #[test]
    fn param_count_matches_shapes() {
        let m = tiny();
        // layers: 8x7+8, 8x8+8, 3x8+3 ; embed 3x8
        let want = (8 * 7 + 8) + (8 * 8 + 8) + (3 * 8 + 3) + 3 * 8;
        assert_eq!(m.param_count(), want);
    }

    #[test]
    fn base_gradients_match_finite_differences() {
        // scalar loss: 0.5 * ||out - y||^2 against fixed y
        let mut m = tiny();
        let x = [0.25, -0.5, 0.1];
        let t = 40;
        let y = [0.2, 0.2, -0.1];
        let row = 1usize;

        let loss = |m: &ToyDenoiser<f64>| {
            let out = m.eps_with(&x, t, m.embed.row(row), None).unwrap();
            0.5 * out.iter().zip(&y).map(|(o, yv)| (o - yv) * (o - yv)).sum::<f64>()
        };

        let cache = m.forward_cached(&x, t, m.embed.row(row), None).unwrap();
        let d_out: Vec<f64> = cache.output.iter().zip(&y).map(|(o, yv)| o - yv).collect();
        let mut grads = DenoiserGrads::zeros_like(&m);
        m.backward(&cache, &d_out, None, Some(&mut grads), None, Some(row));

        let h = 1e-6;
        // probe a few weights in every tensor
        for li in 0..m.layers.len() {
            for &idx in &[0usize, 3, 7] {
                let orig = m.layers[li].w.data[idx];
                m.layers[li].w.data[idx] = orig + h;
                let lp = loss(&m);
                m.layers[li].w.data[idx] = orig - h;
                let lm = loss(&m);
                m.layers[li].w.data[idx] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let an = grads.layers[li].w.data[idx];
                assert!(
                    (fd - an).abs() <= 1e-6 * fd.abs().max(1e-3),
                    "layer {li} w[{idx}]: fd {fd} vs {an}"
                );
            }
            let orig = m.layers[li].b[0];
            m.layers[li].b[0] = orig + h;
            let lp = loss(&m);
            m.layers[li].b[0] = orig - h;
            let lm = loss(&m);
            m.layers[li].b[0] = orig;
            let fd = (lp - lm) / (2.0 * h);
            assert!((fd - grads.layers[li].b[0]).abs() <= 1e-6 * fd.abs().max(1e-3));
        }
        // embedding row gradient
        for &col in &[0usize, 5] {
            let i = row * m.embed.cols + col;
            let orig = m.embed.data[i];
            m.embed.data[i] = orig + h;
            let lp = loss(&m);
            m.embed.data[i] = orig - h;
            let lm = loss(&m);
            m.embed.data[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let an = grads.embed.data[i];
            assert!((fd - an).abs() <= 1e-6 * fd.abs().max(1e-3), "embed[{col}]: {fd} vs {an}");
        }
    }
}
