//! Exact diagonal Gaussian-mixture oracle.
//!
//! Serves as ground truth for every stage of the pipeline: the noisy marginal
//! of a mixture under the forward kernel is again a mixture in closed form,
//! so its log-density, score, and posterior mean are all available exactly.

use serde::{Deserialize, Serialize};

use crate::scalar::{log_sum_exp, Scalar};
use crate::schedule::NoiseSchedule;
use crate::score::{Conditioning, ScoreModel};
use crate::{rng, Error, Result};

/// One diagonal Gaussian mixture component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent<T> {
    pub weight: T,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// Diagonal Gaussian mixture with optional per-component class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmDensity<T> {
    components: Vec<GmmComponent<T>>,
    class_of: Option<Vec<usize>>,
    dim: usize,
}

impl<T: Scalar> GmmDensity<T> {
    pub fn new(components: Vec<GmmComponent<T>>) -> Result<Self> {
        Self::with_classes(components, None)
    }

    pub fn with_classes(
        components: Vec<GmmComponent<T>>,
        class_of: Option<Vec<usize>>,
    ) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidMixture("no components".into()));
        }
        let dim = components[0].mean.len();
        let mut wsum = T::zero();
        for c in &components {
            if c.mean.len() != dim || c.var.len() != dim {
                return Err(Error::InvalidMixture("inconsistent component dimensions".into()));
            }
            if c.weight <= T::zero() {
                return Err(Error::InvalidMixture("non-positive weight".into()));
            }
            if c.var.iter().any(|&v| v <= T::zero()) {
                return Err(Error::InvalidMixture("non-positive variance".into()));
            }
            wsum += c.weight;
        }
        if (wsum - T::one()).abs() > T::of(1e-9) {
            return Err(Error::InvalidMixture(format!("weights sum to {wsum}, expected 1")));
        }
        if let Some(ref map) = class_of {
            if map.len() != components.len() {
                return Err(Error::InvalidMixture("class map length mismatch".into()));
            }
        }
        Ok(Self { components, class_of, dim })
    }

    /// Single Gaussian convenience constructor.
    pub fn single(mean: Vec<T>, var: Vec<T>) -> Result<Self> {
        Self::new(vec![GmmComponent { weight: T::one(), mean, var }])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[GmmComponent<T>] {
        &self.components
    }

    pub fn class_of(&self) -> Option<&[usize]> {
        self.class_of.as_deref()
    }

    /// Distinct class ids present in the class map, ascending.
    pub fn classes(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.class_of.iter().flatten().copied().collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// The noisy marginal at timestep t: means scaled by sqrt(alpha_bar),
    /// variances alpha_bar * var + (1 - alpha_bar); weights unchanged.
    pub fn marginal_params(&self, t: usize, s: &NoiseSchedule<T>) -> Result<GmmDensity<T>> {
        let ab = s.alpha_bar(t)?;
        let sa = ab.sqrt();
        let kernel = T::one() - ab;
        let components = self
            .components
            .iter()
            .map(|c| GmmComponent {
                weight: c.weight,
                mean: c.mean.iter().map(|&m| sa * m).collect(),
                var: c.var.iter().map(|&v| ab * v + kernel).collect(),
            })
            .collect();
        Ok(GmmDensity { components, class_of: self.class_of.clone(), dim: self.dim })
    }

    fn component_indices(&self, c: &Conditioning) -> Result<Vec<usize>> {
        match c {
            Conditioning::Null => Ok((0..self.components.len()).collect()),
            Conditioning::ClassToken(id) => {
                let map = self.class_of.as_ref().ok_or(Error::UnknownClass(*id))?;
                let idx: Vec<usize> =
                    (0..self.components.len()).filter(|&i| map[i] == *id).collect();
                if idx.is_empty() {
                    return Err(Error::EmptyClassRestriction(*id));
                }
                Ok(idx)
            }
            Conditioning::Adapter => {
                Err(Error::UnsupportedConditioning("adapter on oracle".into()))
            }
        }
    }

    /// Per-component log weight + log density at x, for a subset of components.
    fn log_terms(&self, x: &[T], idx: &[usize]) -> Vec<T> {
        idx.iter()
            .map(|&i| {
                let c = &self.components[i];
                c.weight.ln() + diag_gaussian_log_density(x, &c.mean, &c.var)
            })
            .collect()
    }

    /// Log-density of the (possibly class-restricted, renormalized) mixture at x.
    pub fn log_density(&self, x: &[T], c: &Conditioning) -> Result<T> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let idx = self.component_indices(c)?;
        let terms = self.log_terms(x, &idx);
        let logw: Vec<T> = idx.iter().map(|&i| self.components[i].weight.ln()).collect();
        Ok(log_sum_exp(&terms) - log_sum_exp(&logw))
    }

    /// Exact score of the mixture at x: responsibility-weighted per-component
    /// scores, computed with log-sum-exp stabilization.
    pub fn score_at(&self, x: &[T], c: &Conditioning) -> Result<Vec<T>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let idx = self.component_indices(c)?;
        let terms = self.log_terms(x, &idx);
        let lse = log_sum_exp(&terms);
        let mut out = vec![T::zero(); self.dim];
        for (k, &i) in idx.iter().enumerate() {
            let resp = (terms[k] - lse).exp();
            let comp = &self.components[i];
            for r in 0..self.dim {
                out[r] += resp * (-(x[r] - comp.mean[r]) / comp.var[r]);
            }
        }
        Ok(out)
    }

    /// Exact posterior mean E[x0 | xt] under the forward kernel at t.
    ///
    /// Each component contributes its conjugate-Gaussian posterior mean,
    /// weighted by its responsibility under the noisy mixture.
    pub fn posterior_mean_x0(
        &self,
        xt: &[T],
        t: usize,
        s: &NoiseSchedule<T>,
        c: &Conditioning,
    ) -> Result<Vec<T>> {
        if xt.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: xt.len() });
        }
        let ab = s.alpha_bar(t)?;
        let sa = ab.sqrt();
        let kernel = T::one() - ab;
        let noisy = self.marginal_params(t, s)?;
        let idx = noisy.component_indices(c)?;
        let terms = noisy.log_terms(xt, &idx);
        let lse = log_sum_exp(&terms);
        let mut out = vec![T::zero(); self.dim];
        for (k, &i) in idx.iter().enumerate() {
            let resp = (terms[k] - lse).exp();
            let comp = &self.components[i];
            for r in 0..self.dim {
                // posterior mean of x0 given xt under a single Gaussian prior
                let num = comp.mean[r] * kernel + sa * comp.var[r] * xt[r];
                let den = kernel + ab * comp.var[r];
                out[r] += resp * (num / den);
            }
        }
        Ok(out)
    }

    /// Draw a clean sample; component chosen by weight, then diagonal normal.
    pub fn sample<R: rand_core::RngCore>(&self, rng_: &mut R) -> Vec<T> {
        let u: T = rng::uniform(rng_);
        let mut acc = T::zero();
        let mut chosen = self.components.len() - 1;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                chosen = i;
                break;
            }
        }
        let c = &self.components[chosen];
        (0..self.dim)
            .map(|r| c.mean[r] + c.var[r].sqrt() * rng::normal::<T, _>(rng_))
            .collect()
    }
}

impl<T: Scalar> ScoreModel<T> for GmmDensity<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn score(&self, xt: &[T], t: usize, s: &NoiseSchedule<T>, c: &Conditioning) -> Result<Vec<T>> {
        self.marginal_params(t, s)?.score_at(xt, c)
    }
}

/// Log density of a diagonal Gaussian.
pub fn diag_gaussian_log_density<T: Scalar>(x: &[T], mean: &[T], var: &[T]) -> T {
    let two_pi = T::of(std::f64::consts::TAU);
    let half = T::of(0.5);
    let mut acc = T::zero();
    for r in 0..x.len() {
        let d = x[r] - mean[r];
        acc += -half * (two_pi * var[r]).ln() - d * d / (T::of(2.0) * var[r]);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{linear_beta_schedule, tweedie_x0, NoiseSchedule};

    fn two_step_alpha_bar(target: f64) -> NoiseSchedule<f64> {
        // (1-b)^2 = target
        let b = 1.0 - target.sqrt();
        let s = linear_beta_schedule(2, b, b).unwrap();
        assert!((s.alpha_bar(2).unwrap() - target).abs() < 1e-12);
        s
    }

    fn mix2(d: usize, sep: f64, var: f64) -> GmmDensity<f64> {
        let mut m1 = vec![0.0; d];
        let mut m2 = vec![0.0; d];
        m1[0] = -sep / 2.0;
        m2[0] = sep / 2.0;
        GmmDensity::new(vec![
            GmmComponent { weight: 0.5, mean: m1, var: vec![var; d] },
            GmmComponent { weight: 0.5, mean: m2, var: vec![var; d] },
        ])
        .unwrap()
    }

    #[test]
    fn marginal_unit_variance_fixed_point() {
        let g = GmmDensity::single(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let s: NoiseSchedule<f64> = NoiseSchedule::default_linear();
        for t in [1, 137, 500, 1000] {
            let m = g.marginal_params(t, &s).unwrap();
            for v in &m.components()[0].var {
                assert!((v - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn marginal_hand_value() {
        let g = mix2(1, 3.0, 0.25);
        let s = two_step_alpha_bar(0.64);
        let m = g.marginal_params(2, &s).unwrap();
        for c in m.components() {
            assert!((c.var[0] - 0.52).abs() < 1e-12);
        }
    }

    #[test]
    fn single_component_score_is_linear() {
        let g = GmmDensity::single(vec![0.5], vec![0.25]).unwrap();
        let s = two_step_alpha_bar(0.64);
        let xt = [1.3];
        let sc = g.score(&xt, 2, &s, &Conditioning::Null).unwrap();
        let want = -(xt[0] - 0.8 * 0.5) / 0.52;
        assert!((sc[0] - want).abs() < 1e-12);
    }

    #[test]
    fn symmetric_midpoint_score_vanishes() {
        let g = mix2(2, 4.0, 0.3);
        let s: NoiseSchedule<f64> = NoiseSchedule::default_linear();
        let sc = g.score(&[0.0, 0.0], 300, &s, &Conditioning::Null).unwrap();
        assert!(sc[0].abs() < 1e-12 && sc[1].abs() < 1e-12);
    }

    #[test]
    fn score_matches_finite_difference_of_log_density() {
        let g = GmmDensity::new(vec![
            GmmComponent { weight: 0.3, mean: vec![0.5, -1.0], var: vec![0.4, 0.9] },
            GmmComponent { weight: 0.7, mean: vec![-0.2, 0.8], var: vec![0.6, 0.2] },
        ])
        .unwrap();
        let s: NoiseSchedule<f64> = NoiseSchedule::default_linear();
        let t = 200;
        let noisy = g.marginal_params(t, &s).unwrap();
        let mut r = rng::stream(17);
        for _ in 0..100 {
            let x: Vec<f64> = rng::normal_vec(&mut r, 2);
            let sc = noisy.score_at(&x, &Conditioning::Null).unwrap();
            let h = 1e-4;
            for dim in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[dim] += h;
                xm[dim] -= h;
                let fd = (noisy.log_density(&xp, &Conditioning::Null).unwrap()
                    - noisy.log_density(&xm, &Conditioning::Null).unwrap())
                    / (2.0 * h);
                let denom = sc[dim].abs().max(1.0);
                assert!(
                    (sc[dim] - fd).abs() / denom < 1e-5,
                    "dim {dim}: {} vs fd {fd}",
                    sc[dim]
                );
            }
        }
    }

    #[test]
    fn class_restriction_selects_components() {
        let g = GmmDensity::with_classes(
            vec![
                GmmComponent { weight: 0.5, mean: vec![-2.0], var: vec![0.1] },
                GmmComponent { weight: 0.5, mean: vec![2.0], var: vec![0.1] },
            ],
            Some(vec![0, 1]),
        )
        .unwrap();
        let s: NoiseSchedule<f64> = NoiseSchedule::default_linear();
        // class 1 restriction behaves like the single right-hand Gaussian
        let sc = g.score(&[2.0 * s.sqrt_alpha_bar(50).unwrap()], 50, &s, &Conditioning::ClassToken(1)).unwrap();
        assert!(sc[0].abs() < 1e-9);
        assert!(matches!(
            g.score(&[0.0], 50, &s, &Conditioning::ClassToken(9)),
            Err(Error::EmptyClassRestriction(9))
        ));
    }

    #[test]
    fn tweedie_with_oracle_score_matches_exact_posterior_mean() {
        let g = GmmDensity::new(vec![
            GmmComponent { weight: 0.4, mean: vec![1.0, 0.0, -0.5], var: vec![0.2, 0.5, 0.8] },
            GmmComponent { weight: 0.6, mean: vec![-1.0, 0.7, 0.3], var: vec![0.6, 0.3, 0.4] },
        ])
        .unwrap();
        let s: NoiseSchedule<f64> = NoiseSchedule::default_linear();
        let mut r = rng::stream(23);
        for &t in &[50, 200, 600] {
            for _ in 0..20 {
                let xt: Vec<f64> = rng::normal_vec(&mut r, 3);
                let sc = g.score(&xt, t, &s, &Conditioning::Null).unwrap();
                let via_tweedie = tweedie_x0(&xt, &sc, t, &s).unwrap();
                let exact = g.posterior_mean_x0(&xt, t, &s, &Conditioning::Null).unwrap();
                for (a, b) in via_tweedie.iter().zip(&exact) {
                    assert!((a - b).abs() < 1e-8, "{a} vs {b} at t={t}");
                }
            }
        }
    }

    #[test]
    fn gaussian_posterior_mean_is_shrinkage() {
        // single N(0, I): E[x0|xt] = sa * xt / (ab + (1-ab)) = sa*xt with var 1
        let g = GmmDensity::single(vec![0.0], vec![1.0]).unwrap();
        let s = two_step_alpha_bar(0.64);
        let xt = [1.7];
        let pm = g.posterior_mean_x0(&xt, 2, &s, &Conditioning::Null).unwrap();
        assert!((pm[0] - 0.8 * 1.7).abs() < 1e-12);
    }

    #[test]
    fn eps_score_identity_holds_for_oracle() {
        let g = mix2(2, 3.0, 0.4);
        let s: NoiseSchedule<f64> = NoiseSchedule::default_linear();
        let xt = [0.3, -0.9];
        let t = 444;
        let sc = g.score(&xt, t, &s, &Conditioning::Null).unwrap();
        let ep = g.eps(&xt, t, &s, &Conditioning::Null).unwrap();
        let b = s.bandwidth(t).unwrap();
        for (scv, epv) in sc.iter().zip(&ep) {
            assert_eq!(*scv, -*epv / b);
        }
    }

    #[test]
    fn rejects_invalid_mixtures() {
        assert!(GmmDensity::<f64>::new(vec![]).is_err());
        assert!(GmmDensity::new(vec![GmmComponent {
            weight: 0.5,
            mean: vec![0.0],
            var: vec![1.0]
        }])
        .is_err());
        assert!(GmmDensity::new(vec![GmmComponent {
            weight: 1.0,
            mean: vec![0.0],
            var: vec![0.0]
        }])
        .is_err());
    }
}
