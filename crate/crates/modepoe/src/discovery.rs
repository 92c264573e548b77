//! Mode discovery: recover density-mode prototypes of the noisy marginals
//! from a single query.
//!
//! For each timestep on a grid, ascent starts are seeded from noised copies
//! of the query (optionally mixed with standard-normal starts), driven uphill
//! by Adam on the unconditional score, deduplicated, summarized by a
//! Hutchinson diagonal-curvature estimate, and pulled back to clean space by
//! inverting the forward convolution.

use serde::{Deserialize, Serialize};

use crate::opt::Adam;
use crate::rng;
use crate::scalar::{l2_dist, l2_norm, Scalar};
use crate::schedule::{forward_noise, NoiseSchedule};
use crate::score::{Conditioning, ScoreModel};
use crate::{Error, Result};

/// How ascent starts are initialized at each timestep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitStrategy {
    /// Every start is a freshly noised copy of the query.
    QueryCentered,
    /// The given fraction of starts are query-noised, the rest standard normal.
    Hybrid { query_fraction: f64 },
}

/// Timestep grid as an inclusive (start, end, step) range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimestepGrid {
    pub start: usize,
    pub end: usize,
    pub step: usize,
}

impl TimestepGrid {
    pub fn new(start: usize, end: usize, step: usize) -> Self {
        Self { start, end, step }
    }

    pub fn timesteps(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut t = self.start;
        while t <= self.end {
            out.push(t);
            t += self.step.max(1);
        }
        out
    }
}

/// Discovery settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentConfig<T> {
    pub t_grid: TimestepGrid,
    /// Ascent starts per timestep.
    pub n_per_t: usize,
    /// Adam iteration cap.
    pub n_iters: usize,
    /// Adam step size.
    pub base_step: T,
    pub init_strategy: InitStrategy,
    /// Convergence threshold on the score norm.
    pub grad_tol: T,
    /// Clean-space merge distance for deduplication.
    pub merge_tol: T,
    /// Hutchinson probe count.
    pub n_probes: usize,
    /// Hutchinson central-difference step.
    pub fd_step: T,
    /// Positivity floor for variances.
    pub var_floor: T,
    pub seed: u64,
}

impl<T: Scalar> AscentConfig<T> {
    /// Defaults sized for ambient dimension d: grid [50, 400, 25], 128 starts,
    /// 150 iterations at step 0.1, hybrid 50/50 init, grad_tol 1e-3 sqrt(d),
    /// merge_tol 0.05 sqrt(d), 4 probes at step 5e-3.
    pub fn for_dim(d: usize, seed: u64) -> Self {
        let sqrt_d = T::of((d as f64).sqrt());
        Self {
            t_grid: TimestepGrid::new(50, 400, 25),
            n_per_t: 128,
            n_iters: 150,
            base_step: T::of(0.1),
            init_strategy: InitStrategy::Hybrid { query_fraction: 0.5 },
            grad_tol: T::of(1e-3) * sqrt_d,
            merge_tol: T::of(0.05) * sqrt_d,
            n_probes: 4,
            fd_step: T::of(5e-3),
            var_floor: T::of(1e-4),
            seed,
        }
    }

    fn validate(&self, s: &NoiseSchedule<T>) -> Result<()> {
        if self.n_per_t == 0 {
            return Err(Error::InvalidConfig("n_per_t must be at least 1".into()));
        }
        if self.base_step <= T::zero() {
            return Err(Error::InvalidConfig("base_step must be positive".into()));
        }
        if self.t_grid.start == 0 || self.t_grid.end > s.t_count() || self.t_grid.start > self.t_grid.end {
            return Err(Error::InvalidConfig(format!(
                "t_grid [{}, {}] outside schedule range 1..={}",
                self.t_grid.start,
                self.t_grid.end,
                s.t_count()
            )));
        }
        Ok(())
    }
}

/// An x_t-space stationary point found by ascent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCandidate<T> {
    pub x_star: Vec<T>,
    pub t: usize,
    pub final_grad_norm: T,
    pub iterations_used: usize,
}

/// A discovered mode pulled to clean space as a diagonal Gaussian expert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeExpert<T> {
    /// Clean-space mean.
    pub m: Vec<T>,
    /// Clean-space diagonal variances (floored positive).
    pub var: Vec<T>,
    pub origin_t: usize,
    pub origin_grad_norm: T,
    /// Set when the curvature estimate had non-concave dimensions.
    pub cov_flagged: bool,
}

/// Diagonal covariance estimate in x_t-space.
#[derive(Debug, Clone, PartialEq)]
pub struct HutchinsonDiag<T> {
    pub cov_t: Vec<T>,
    /// Dimensions whose Hessian diagonal came out non-negative and were floored.
    pub floored_dims: usize,
}

/// Ascent starts at timestep t.
pub fn init_starts<T: Scalar, R: rand_core::RngCore>(
    x_q: &[T],
    t: usize,
    cfg: &AscentConfig<T>,
    s: &NoiseSchedule<T>,
    rng_: &mut R,
) -> Result<Vec<Vec<T>>> {
    let d = x_q.len();
    let n_query = match cfg.init_strategy {
        InitStrategy::QueryCentered => cfg.n_per_t,
        InitStrategy::Hybrid { query_fraction } => {
            (query_fraction * cfg.n_per_t as f64).round() as usize
        }
    };
    let mut starts = Vec::with_capacity(cfg.n_per_t);
    for i in 0..cfg.n_per_t {
        if i < n_query {
            let eps = rng::normal_vec(rng_, d);
            starts.push(forward_noise(x_q, t, &eps, s)?);
        } else {
            starts.push(rng::normal_vec(rng_, d));
        }
    }
    Ok(starts)
}

/// Adam ascent on log p_t from one start; the update direction is the
/// unconditional score.
pub fn ascend_mode<T: Scalar, M: ScoreModel<T>>(
    model: &M,
    x_init: &[T],
    t: usize,
    cfg: &AscentConfig<T>,
    s: &NoiseSchedule<T>,
) -> Result<ModeCandidate<T>> {
    Ok(ascend_mode_traced(model, x_init, t, cfg, s)?.0)
}

/// As [`ascend_mode`] but also returns the score-norm trajectory.
pub fn ascend_mode_traced<T: Scalar, M: ScoreModel<T>>(
    model: &M,
    x_init: &[T],
    t: usize,
    cfg: &AscentConfig<T>,
    s: &NoiseSchedule<T>,
) -> Result<(ModeCandidate<T>, Vec<T>)> {
    let mut x = x_init.to_vec();
    let mut adam = Adam::new(cfg.base_step, x.len());
    let mut norms = Vec::with_capacity(cfg.n_iters + 1);
    let mut grad_norm;
    let mut iters = 0;
    loop {
        let score = model.score(&x, t, s, &Conditioning::Null)?;
        if score.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "mode ascent", step: iters });
        }
        grad_norm = l2_norm(&score);
        norms.push(grad_norm);
        if grad_norm < cfg.grad_tol || iters >= cfg.n_iters {
            break;
        }
        // maximize: Adam descends, so feed the negated score
        let neg: Vec<T> = score.iter().map(|&g| -g).collect();
        adam.step(&mut x, &neg);
        iters += 1;
    }
    Ok((ModeCandidate { x_star: x, t, final_grad_norm: grad_norm, iterations_used: iters }, norms))
}

fn clean_mean<T: Scalar>(c: &ModeCandidate<T>, s: &NoiseSchedule<T>) -> Result<Vec<T>> {
    let sa = s.sqrt_alpha_bar(c.t)?;
    Ok(c.x_star.iter().map(|&v| v / sa).collect())
}

fn lex_less<T: Scalar>(a: &[T], b: &[T]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// Merge candidates of the same timestep whose Tweedie-rescaled means are
/// within `merge_tol`, keeping the lowest-gradient representative. Output is
/// ordered by timestep, then lexicographically by mean.
pub fn dedup_modes<T: Scalar>(
    cands: &[ModeCandidate<T>],
    merge_tol: T,
    s: &NoiseSchedule<T>,
) -> Result<Vec<ModeCandidate<T>>> {
    let mut by_t: Vec<(usize, &ModeCandidate<T>, Vec<T>)> = Vec::with_capacity(cands.len());
    for c in cands {
        by_t.push((c.t, c, clean_mean(c, s)?));
    }
    // best representative first within each timestep
    by_t.sort_by(|x, y| {
        x.0.cmp(&y.0)
            .then(x.1.final_grad_norm.partial_cmp(&y.1.final_grad_norm).unwrap())
            .then_with(|| if lex_less(&x.2, &y.2) { std::cmp::Ordering::Less } else { std::cmp::Ordering::Greater })
    });
    let mut kept: Vec<(usize, ModeCandidate<T>, Vec<T>)> = Vec::new();
    for (t, c, mean) in by_t {
        let dup = kept
            .iter()
            .any(|(kt, _, kmean)| *kt == t && l2_dist(kmean, &mean) <= merge_tol);
        if !dup {
            kept.push((t, c.clone(), mean));
        }
    }
    kept.sort_by(|x, y| {
        x.0.cmp(&y.0).then_with(|| {
            if lex_less(&x.2, &y.2) {
                std::cmp::Ordering::Less
            } else {
                std::cmp::Ordering::Greater
            }
        })
    });
    Ok(kept.into_iter().map(|(_, c, _)| c).collect())
}

/// Diagonal of the local covariance at a mode via Rademacher probes of the
/// score Jacobian: H z ~ [s(x + h z) - s(x - h z)] / 2h, diag(H) ~ mean of
/// z (elementwise) H z, and diag cov = -1/diag(H) floored positive.
pub fn hutchinson_diag_cov<T: Scalar, M: ScoreModel<T>, R: rand_core::RngCore>(
    model: &M,
    mode: &ModeCandidate<T>,
    s: &NoiseSchedule<T>,
    n_probes: usize,
    fd_step: T,
    var_floor: T,
    rng_: &mut R,
) -> Result<HutchinsonDiag<T>> {
    if n_probes == 0 {
        return Err(Error::InvalidConfig("need at least one probe".into()));
    }
    if fd_step <= T::zero() {
        return Err(Error::InvalidConfig("fd_step must be positive".into()));
    }
    let d = mode.x_star.len();
    let mut acc = vec![T::zero(); d];
    for _ in 0..n_probes {
        let z: Vec<T> = rng::rademacher_vec(rng_, d);
        let xp: Vec<T> = mode.x_star.iter().zip(&z).map(|(&x, &zv)| x + fd_step * zv).collect();
        let xm: Vec<T> = mode.x_star.iter().zip(&z).map(|(&x, &zv)| x - fd_step * zv).collect();
        let sp = model.score(&xp, mode.t, s, &Conditioning::Null)?;
        let sm = model.score(&xm, mode.t, s, &Conditioning::Null)?;
        for r in 0..d {
            let hz = (sp[r] - sm[r]) / (T::of(2.0) * fd_step);
            acc[r] += z[r] * hz;
        }
    }
    let n = T::of(n_probes as f64);
    let mut floored = 0usize;
    let cov_t = acc
        .iter()
        .map(|&a| {
            let h_diag = a / n;
            if h_diag < T::zero() {
                (-T::one() / h_diag).max(var_floor)
            } else {
                floored += 1;
                var_floor
            }
        })
        .collect();
    Ok(HutchinsonDiag { cov_t, floored_dims: floored })
}

/// Pull an x_t-space mode and covariance back to clean space: the mean is
/// rescaled by 1/sqrt(alpha_bar), the covariance deconvolved through
/// var = max((cov_t - (1 - alpha_bar)) / alpha_bar, floor).
pub fn pull_to_clean<T: Scalar>(
    mode: &ModeCandidate<T>,
    cov: &HutchinsonDiag<T>,
    s: &NoiseSchedule<T>,
    var_floor: T,
) -> Result<PrototypeExpert<T>> {
    let ab = s.alpha_bar(mode.t)?;
    let sa = ab.sqrt();
    let kernel = T::one() - ab;
    let m = mode.x_star.iter().map(|&v| v / sa).collect();
    let var = cov
        .cov_t
        .iter()
        .map(|&c| ((c - kernel) / ab).max(var_floor))
        .collect();
    Ok(PrototypeExpert {
        m,
        var,
        origin_t: mode.t,
        origin_grad_norm: mode.final_grad_norm,
        cov_flagged: cov.floored_dims > 0,
    })
}

/// End-to-end discovery: per grid timestep, initialize, ascend, discard
/// non-converged candidates (above 10x grad_tol), deduplicate, estimate
/// covariance, and pull to clean space. Deterministic given the seed.
pub fn discover_prototypes<T: Scalar, M: ScoreModel<T>>(
    model: &M,
    x_q: &[T],
    cfg: &AscentConfig<T>,
    s: &NoiseSchedule<T>,
) -> Result<Vec<PrototypeExpert<T>>> {
    cfg.validate(s)?;
    let mut pool = Vec::new();
    for t in cfg.t_grid.timesteps() {
        let mut init_rng = rng::substream(cfg.seed, &[0x5354, t as u64]);
        let starts = init_starts(x_q, t, cfg, s, &mut init_rng)?;
        let mut cands = Vec::new();
        for x0 in &starts {
            match ascend_mode(model, x0, t, cfg, s) {
                Ok(c) => {
                    if c.final_grad_norm <= cfg.grad_tol * T::of(10.0) {
                        cands.push(c);
                    }
                }
                Err(Error::NonFinite { .. }) => continue, // diverged start
                Err(e) => return Err(e),
            }
        }
        let kept = dedup_modes(&cands, cfg.merge_tol, s)?;
        for (i, c) in kept.iter().enumerate() {
            let mut hutch_rng = rng::substream(cfg.seed, &[0x4856, t as u64, i as u64]);
            let cov = hutchinson_diag_cov(
                model,
                c,
                s,
                cfg.n_probes,
                cfg.fd_step,
                cfg.var_floor,
                &mut hutch_rng,
            )?;
            pool.push(pull_to_clean(c, &cov, s, cfg.var_floor)?);
        }
    }
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::{GmmComponent, GmmDensity};
    use crate::schedule::{linear_beta_schedule, tweedie_x0, NoiseSchedule};

    fn sched() -> NoiseSchedule<f64> {
        NoiseSchedule::default_linear()
    }

    fn cfg_2d(seed: u64) -> AscentConfig<f64> {
        let mut c = AscentConfig::for_dim(2, seed);
        c.n_per_t = 16;
        c.n_iters = 400;
        c.grad_tol = 1e-7;
        c.t_grid = TimestepGrid::new(100, 300, 100);
        c
    }

    fn three_modes() -> GmmDensity<f64> {
        GmmDensity::new(vec![
            GmmComponent { weight: 1.0 / 3.0, mean: vec![-6.0, 0.0], var: vec![0.01, 0.01] },
            GmmComponent { weight: 1.0 / 3.0, mean: vec![6.0, 0.0], var: vec![0.01, 0.01] },
            GmmComponent { weight: 1.0 / 3.0, mean: vec![0.0, 6.0], var: vec![0.01, 0.01] },
        ])
        .unwrap()
    }

    #[test]
    fn init_counts_follow_hybrid_fraction() {
        let s = sched();
        let mut cfg = cfg_2d(1);
        cfg.n_per_t = 128;
        cfg.init_strategy = InitStrategy::Hybrid { query_fraction: 0.5 };
        let mut r = rng::stream(2);
        let starts = init_starts(&[0.0, 0.0], 200, &cfg, &s, &mut r).unwrap();
        assert_eq!(starts.len(), 128);
        // with x_q = 0, query-noised starts have scale bandwidth < 1; both
        // halves exist and the set is reproducible
        let mut r2 = rng::stream(2);
        let again = init_starts(&[0.0, 0.0], 200, &cfg, &s, &mut r2).unwrap();
        assert_eq!(starts, again);
    }

    #[test]
    fn query_centered_starts_concentrate_at_low_noise() {
        // at t=1 the bandwidth is 0.01, so starts hug sqrt(ab) x_q
        let s = sched();
        let mut cfg = cfg_2d(1);
        cfg.init_strategy = InitStrategy::QueryCentered;
        cfg.n_per_t = 32;
        let xq = [2.0, -1.0];
        let mut r = rng::stream(3);
        let starts = init_starts(&xq, 1, &cfg, &s, &mut r).unwrap();
        let sa = s.sqrt_alpha_bar(1).unwrap();
        for st in starts {
            assert!(l2_dist(&st, &[sa * xq[0], sa * xq[1]]) < 0.1);
        }
    }

    #[test]
    fn ascent_stays_at_gaussian_mean() {
        let g = GmmDensity::single(vec![1.0, -2.0], vec![0.3, 0.3]).unwrap();
        let s = sched();
        let cfg = cfg_2d(4);
        let t = 200;
        let sa = s.sqrt_alpha_bar(t).unwrap();
        let init = [sa * 1.0, sa * -2.0];
        let c = ascend_mode(&g, &init, t, &cfg, &s).unwrap();
        assert!(c.final_grad_norm < 1e-6);
        assert!(l2_dist(&c.x_star, &init) < 1e-9);
        assert_eq!(c.iterations_used, 0);
    }

    #[test]
    fn ascent_finds_nearest_separated_mode() {
        let g = three_modes();
        let s = sched();
        let cfg = cfg_2d(5);
        let t = 150;
        let sa = s.sqrt_alpha_bar(t).unwrap();
        // start near component 1 (mean [6, 0])
        let init = [sa * 5.0, sa * 0.5];
        let c = ascend_mode(&g, &init, t, &cfg, &s).unwrap();
        let sep = 72.0f64.sqrt(); // min pairwise mode separation
        let target = [sa * 6.0, sa * 0.0];
        assert!(l2_dist(&c.x_star, &target) < 1e-3 * sep, "dist {}", l2_dist(&c.x_star, &target));
    }

    #[test]
    fn score_norm_trace_settles_monotonically() {
        // run to the convergence threshold; the tail of the approach must be
        // monotone (constant-step Adam only cycles below the threshold)
        let g = GmmDensity::single(vec![0.0, 0.0], vec![0.5, 0.5]).unwrap();
        let s = sched();
        let mut cfg = cfg_2d(6);
        cfg.base_step = 0.02;
        cfg.grad_tol = 1e-2;
        cfg.n_iters = 500;
        let (cand, norms) = ascend_mode_traced(&g, &[1.5, -0.5], 200, &cfg, &s).unwrap();
        assert!(cand.final_grad_norm < cfg.grad_tol, "did not converge: {}", cand.final_grad_norm);
        assert!(norms.len() >= 11);
        let tail = &norms[norms.len() - 10..];
        for w in tail.windows(2) {
            assert!(w[1] <= w[0], "tail not settling: {tail:?}");
        }
    }

    #[test]
    fn dedup_merges_identical_and_keeps_distant() {
        let s = sched();
        let c1 = ModeCandidate { x_star: vec![1.0, 1.0], t: 100, final_grad_norm: 1e-6, iterations_used: 5 };
        let c2 = ModeCandidate { x_star: vec![1.0, 1.0], t: 100, final_grad_norm: 1e-5, iterations_used: 9 };
        let merged = dedup_modes(&[c1.clone(), c2.clone()], 0.05, &s).unwrap();
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].final_grad_norm, 1e-6);

        let far = ModeCandidate { x_star: vec![5.0, 5.0], t: 100, final_grad_norm: 1e-6, iterations_used: 5 };
        let both = dedup_modes(&[c1, far], 0.05, &s).unwrap();
        assert_eq!(both.len(), 2);
    }

    #[test]
    fn dedup_keeps_same_position_at_different_timesteps() {
        let s = sched();
        let c1 = ModeCandidate { x_star: vec![1.0, 1.0], t: 100, final_grad_norm: 1e-6, iterations_used: 5 };
        let mut c2 = c1.clone();
        c2.t = 200;
        assert_eq!(dedup_modes(&[c1, c2], 10.0, &s).unwrap().len(), 2);
    }

    #[test]
    fn hutchinson_exact_for_single_gaussian() {
        // marginal variance ab*s2 + (1-ab) = 0.64*0.25 + 0.36 = 0.52
        let b = 1.0 - 0.64f64.sqrt();
        let s = linear_beta_schedule(2, b, b).unwrap();
        let g = GmmDensity::single(vec![0.3, -0.4], vec![0.25, 0.25]).unwrap();
        let t = 2;
        let sa = s.sqrt_alpha_bar(t).unwrap();
        let mode = ModeCandidate {
            x_star: vec![sa * 0.3, sa * -0.4],
            t,
            final_grad_norm: 0.0,
            iterations_used: 0,
        };
        let mut r = rng::stream(8);
        let est = hutchinson_diag_cov(&g, &mode, &s, 4, 5e-3, 1e-4, &mut r).unwrap();
        assert_eq!(est.floored_dims, 0);
        for v in &est.cov_t {
            assert!((v - 0.52).abs() < 1e-6, "{v}");
        }
        // clean-space round trip recovers the data variance
        let p = pull_to_clean(&mode, &est, &s, 1e-4).unwrap();
        for v in &p.var {
            assert!((v - 0.25).abs() / 0.25 < 0.05, "{v}");
        }
        assert!(!p.cov_flagged);
    }

    #[test]
    fn pull_to_clean_floors_pure_noise_width() {
        let s = sched();
        let t = 300;
        let kernel = 1.0 - s.alpha_bar(t).unwrap();
        let mode = ModeCandidate { x_star: vec![0.5], t, final_grad_norm: 0.0, iterations_used: 0 };
        let est = HutchinsonDiag { cov_t: vec![kernel], floored_dims: 0 };
        let p = pull_to_clean(&mode, &est, &s, 1e-4).unwrap();
        assert_eq!(p.var[0], 1e-4);
    }

    #[test]
    fn discovery_recovers_three_modes() {
        let g = three_modes();
        let s = sched();
        let mut cfg = cfg_2d(7);
        cfg.n_per_t = 48;
        cfg.init_strategy = InitStrategy::Hybrid { query_fraction: 0.5 };
        cfg.t_grid = TimestepGrid::new(100, 200, 100);
        // query between the modes so hybrid noise spreads starts across basins
        let xq = [0.0, 2.0];
        let pool = discover_prototypes(&g, &xq, &cfg, &s).unwrap();
        assert!(!pool.is_empty());
        // cluster the clean-space means: expect exactly the three component means
        let mut reps: Vec<Vec<f64>> = Vec::new();
        for p in &pool {
            if !reps.iter().any(|r| l2_dist(r, &p.m) < 0.5) {
                reps.push(p.m.clone());
            }
        }
        assert_eq!(reps.len(), 3, "reps: {reps:?}");
        for mu in [[-6.0, 0.0], [6.0, 0.0], [0.0, 6.0]] {
            assert!(
                reps.iter().any(|r| l2_dist(r, &mu) < 1e-2),
                "missing mode near {mu:?}"
            );
        }

        // same seed, same pool
        let pool2 = discover_prototypes(&g, &xq, &cfg, &s).unwrap();
        assert_eq!(pool, pool2);
    }

    #[test]
    fn tweedie_consistency_at_modes() {
        let g = three_modes();
        let s = sched();
        let cfg = cfg_2d(9);
        let t = 150;
        let sa = s.sqrt_alpha_bar(t).unwrap();
        let c = ascend_mode(&g, &[sa * 6.0 + 0.3, 0.2], t, &cfg, &s).unwrap();
        let est = HutchinsonDiag { cov_t: vec![0.1, 0.1], floored_dims: 0 };
        let p = pull_to_clean(&c, &est, &s, 1e-4).unwrap();
        let score = g.score(&c.x_star, t, &s, &Conditioning::Null).unwrap();
        let tw = tweedie_x0(&c.x_star, &score, t, &s).unwrap();
        let tol = cfg.grad_tol / sa;
        for (a, b) in p.m.iter().zip(&tw) {
            assert!((a - b).abs() <= tol.max(1e-9), "{a} vs {b}");
        }
    }

    #[test]
    fn empty_grid_fails_validation() {
        let g = three_modes();
        let s = sched();
        let mut cfg = cfg_2d(1);
        cfg.t_grid = TimestepGrid::new(0, 100, 25);
        assert!(discover_prototypes(&g, &[0.0, 0.0], &cfg, &s).is_err());
    }
}
