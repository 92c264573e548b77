//! Product-of-experts composition: per-dimension query log-likelihoods,
//! greedy submodular selection, temperature softmax weights, and the
//! closed-form weighted Gaussian product.

use serde::{Deserialize, Serialize};

use crate::discovery::PrototypeExpert;
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Values below this are clamped before any softmax.
const LOGLIK_CLAMP: f64 = -1e12;

/// Per-prototype, per-dimension log-likelihood of the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLikMatrix<T> {
    /// rows[j][r] = log N(x_q[r]; m_j[r], var_j[r])
    pub rows: Vec<Vec<T>>,
}

impl<T: Scalar> LogLikMatrix<T> {
    pub fn n_prototypes(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

/// Result of greedy selection plus per-dimension softmax weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection<T> {
    /// Selected prototype indices in selection order.
    pub indices: Vec<usize>,
    /// K x d weights; each dimension's column sums to 1 over the selection.
    pub weights: Vec<Vec<T>>,
    pub tau: T,
}

/// Composed diagonal Gaussian teacher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoeTeacher<T> {
    pub mu: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> PoeTeacher<T> {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// ell[j][r] = -0.5 log(2 pi var) - (x_q - m)^2 / (2 var), clamped below.
pub fn per_dim_loglik<T: Scalar>(
    pool: &[PrototypeExpert<T>],
    x_q: &[T],
) -> Result<LogLikMatrix<T>> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let d = x_q.len();
    let two_pi = T::of(std::f64::consts::TAU);
    let half = T::of(0.5);
    let clamp = T::of(LOGLIK_CLAMP);
    let mut rows = Vec::with_capacity(pool.len());
    for p in pool {
        if p.m.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: p.m.len() });
        }
        let row = (0..d)
            .map(|r| {
                let diff = x_q[r] - p.m[r];
                let v = p.var[r];
                (-half * (two_pi * v).ln() - diff * diff / (T::of(2.0) * v)).max(clamp)
            })
            .collect();
        rows.push(row);
    }
    Ok(LogLikMatrix { rows })
}

/// Coverage objective F(S) = sum_r max_{j in S} ell[j][r].
pub fn coverage<T: Scalar>(s_set: &[usize], loglik: &LogLikMatrix<T>) -> Result<T> {
    if s_set.is_empty() {
        return Err(Error::EmptySelection);
    }
    let d = loglik.dim();
    let mut total = T::zero();
    for r in 0..d {
        let mut best = T::neg_infinity();
        for &j in s_set {
            best = best.max(loglik.rows[j][r]);
        }
        total += best;
    }
    Ok(total)
}

/// Marginal gain of adding j given the current per-dimension maxima.
///
/// Computed termwise as sum_r max(ell[j][r] - max_r, 0); identical to
/// F(S + j) - F(S) but exactly monotone under floating point.
fn marginal_gain<T: Scalar>(row: &[T], maxima: &[T]) -> T {
    row.iter()
        .zip(maxima)
        .map(|(&l, &m)| (l - m).max(T::zero()))
        .sum()
}

/// Greedy maximization of the coverage objective: best singleton first, then
/// K-1 rounds of largest marginal gain. Ties break toward the lowest index.
pub fn greedy_select<T: Scalar>(loglik: &LogLikMatrix<T>, k: usize) -> Result<Vec<usize>> {
    let m = loglik.n_prototypes();
    if k == 0 {
        return Err(Error::EmptySelection);
    }
    if k > m {
        return Err(Error::SelectionTooLarge { k, m });
    }
    let d = loglik.dim();

    // best singleton
    let mut best_j = 0;
    let mut best_f = T::neg_infinity();
    for j in 0..m {
        let f: T = loglik.rows[j].iter().copied().sum();
        if f > best_f {
            best_f = f;
            best_j = j;
        }
    }
    let mut selected = vec![best_j];
    let mut maxima: Vec<T> = loglik.rows[best_j].clone();

    for _ in 1..k {
        let mut gain_j = usize::MAX;
        let mut gain = T::neg_infinity();
        for j in 0..m {
            if selected.contains(&j) {
                continue;
            }
            let g = marginal_gain(&loglik.rows[j], &maxima);
            if g > gain {
                gain = g;
                gain_j = j;
            }
        }
        selected.push(gain_j);
        for r in 0..d {
            maxima[r] = maxima[r].max(loglik.rows[gain_j][r]);
        }
    }
    Ok(selected)
}

/// Per-dimension temperature softmax of the selected prototypes'
/// log-likelihoods, with max subtraction for stability.
pub fn composition_weights<T: Scalar>(
    selected: &[usize],
    loglik: &LogLikMatrix<T>,
    tau: T,
) -> Result<Vec<Vec<T>>> {
    if selected.is_empty() {
        return Err(Error::EmptySelection);
    }
    if tau <= T::zero() {
        return Err(Error::InvalidConfig("softmax temperature must be positive".into()));
    }
    let d = loglik.dim();
    let k = selected.len();
    let mut weights = vec![vec![T::zero(); d]; k];
    for r in 0..d {
        let mut best = T::neg_infinity();
        for &j in selected {
            best = best.max(loglik.rows[j][r] / tau);
        }
        let mut z = T::zero();
        for (ki, &j) in selected.iter().enumerate() {
            let e = (loglik.rows[j][r] / tau - best).exp();
            weights[ki][r] = e;
            z += e;
        }
        for w in weights.iter_mut() {
            w[r] /= z;
        }
    }
    Ok(weights)
}

/// Closed-form weighted product of diagonal Gaussian experts:
/// precision[r] = sum_j w[j][r] / var_j[r], mu[r] precision-weighted.
pub fn poe_product<T: Scalar>(
    experts: &[PrototypeExpert<T>],
    weights: &[Vec<T>],
) -> Result<PoeTeacher<T>> {
    if experts.is_empty() {
        return Err(Error::EmptySelection);
    }
    if experts.len() != weights.len() {
        return Err(Error::DimensionMismatch { expected: experts.len(), got: weights.len() });
    }
    let d = experts[0].m.len();
    let tol = T::of(1.0 + 1e-9);
    for r in 0..d {
        let wsum: T = weights.iter().map(|w| w[r]).sum();
        if wsum > tol {
            return Err(Error::InvalidConfig(format!(
                "weights in dimension {r} sum to {wsum}, above 1"
            )));
        }
    }
    let mut mu = vec![T::zero(); d];
    let mut var = vec![T::zero(); d];
    for r in 0..d {
        let mut precision = T::zero();
        let mut weighted_mean = T::zero();
        for (e, w) in experts.iter().zip(weights) {
            precision += w[r] / e.var[r];
            weighted_mean += w[r] * e.m[r] / e.var[r];
        }
        if precision <= T::zero() {
            return Err(Error::ZeroPrecision(r));
        }
        mu[r] = weighted_mean / precision;
        var[r] = T::one() / precision;
    }
    Ok(PoeTeacher { mu, var })
}

/// Full composition: likelihoods, greedy selection of K prototypes, softmax
/// weights at temperature tau, closed-form product.
pub fn compose_teacher<T: Scalar>(
    pool: &[PrototypeExpert<T>],
    x_q: &[T],
    k: usize,
    tau: T,
) -> Result<(PoeTeacher<T>, Selection<T>)> {
    let loglik = per_dim_loglik(pool, x_q)?;
    let indices = greedy_select(&loglik, k.min(pool.len()))?;
    let weights = composition_weights(&indices, &loglik, tau)?;
    let experts: Vec<PrototypeExpert<T>> = indices.iter().map(|&j| pool[j].clone()).collect();
    let teacher = poe_product(&experts, &weights)?;
    Ok((teacher, Selection { indices, weights, tau }))
}
