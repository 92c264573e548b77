//! Adam optimizer with the standard moment decay rates.

use crate::scalar::Scalar;

/// Adam state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    step_size: T,
    beta1: T,
    beta2: T,
    eps: T,
    m: Vec<T>,
    v: Vec<T>,
    t: u64,
}

impl<T: Scalar> Adam<T> {
    /// Standard settings: beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
    pub fn new(step_size: T, n_params: usize) -> Self {
        Self {
            step_size,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
            t: 0,
        }
    }

    /// One descent step in place; pass the ascent direction negated to maximize.
    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        debug_assert_eq!(params.len(), self.m.len());
        debug_assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let b1t = T::one() - self.beta1.powi(self.t as i32);
        let b2t = T::one() - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (T::one() - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (T::one() - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= self.step_size * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}
