//! Evaluation metrics: k-NN precision/recall over feature sets, the Frechet
//! distance between Gaussian fits, and reference-set construction for the
//! faithfulness/generalization protocol.

use serde::{Deserialize, Serialize};

use crate::linalg::{sym_eigen, Matrix};
use crate::rng;
use crate::scalar::{l2_dist, Scalar};
use crate::{Error, Result};

/// Role a feature set plays in a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetRole {
    Generated,
    FaithfulnessRef,
    GeneralizationRef,
}

impl std::fmt::Display for SetRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SetRole::Generated => write!(f, "generated"),
            SetRole::FaithfulnessRef => write!(f, "faithfulness"),
            SetRole::GeneralizationRef => write!(f, "generalization"),
        }
    }
}

/// N x f matrix of embeddings plus label metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet<T> {
    pub vectors: Vec<Vec<T>>,
    pub class_id: Option<usize>,
    pub role: SetRole,
}

impl<T: Scalar> FeatureSet<T> {
    pub fn new(vectors: Vec<Vec<T>>, role: SetRole) -> Self {
        Self { vectors, class_id: None, role }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }
}

/// Precision/recall of the k-NN manifold estimator, with a degeneracy flag
/// for duplicate-only inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionRecall<T> {
    pub precision: T,
    pub recall: T,
    /// Set when either side's k-NN radii are all zero (duplicate-only points).
    pub degenerate: bool,
}

/// Distance from each point to its k-th nearest neighbor within the same set
/// (self excluded).
fn knn_radii<T: Scalar>(set: &[Vec<T>], k: usize) -> Vec<T> {
    let n = set.len();
    let mut radii = Vec::with_capacity(n);
    for i in 0..n {
        let mut dists: Vec<T> = (0..n)
            .filter(|&j| j != i)
            .map(|j| l2_dist(&set[i], &set[j]))
            .collect();
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        radii.push(dists[k - 1]);
    }
    radii
}

/// Fraction of `points` covered by some ball (center, radius) of the manifold
/// estimate.
fn coverage_fraction<T: Scalar>(points: &[Vec<T>], centers: &[Vec<T>], radii: &[T]) -> T {
    let mut hits = 0usize;
    for p in points {
        let inside = centers
            .iter()
            .zip(radii)
            .any(|(c, &r)| l2_dist(p, c) <= r);
        if inside {
            hits += 1;
        }
    }
    T::of(hits as f64 / points.len() as f64)
}

/// k-NN manifold precision and recall.
///
/// A generated point counts toward precision when it falls inside some
/// reference point's k-th-neighbor ball; recall swaps the roles.
pub fn knn_precision_recall<T: Scalar>(
    gen: &FeatureSet<T>,
    reference: &FeatureSet<T>,
    k: usize,
) -> Result<PrecisionRecall<T>> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    for set in [gen, reference] {
        if set.len() < k + 1 {
            return Err(Error::TooFewPoints { need: k + 1, got: set.len() });
        }
    }
    let ref_radii = knn_radii(&reference.vectors, k);
    let gen_radii = knn_radii(&gen.vectors, k);
    let degenerate = ref_radii.iter().all(|&r| r == T::zero())
        || gen_radii.iter().all(|&r| r == T::zero());
    let precision = coverage_fraction(&gen.vectors, &reference.vectors, &ref_radii);
    let recall = coverage_fraction(&reference.vectors, &gen.vectors, &gen_radii);
    Ok(PrecisionRecall { precision, recall, degenerate })
}

/// Harmonic mean of precision and recall; 0 when both vanish.
pub fn f1<T: Scalar>(precision: T, recall: T) -> T {
    if precision + recall == T::zero() {
        return T::zero();
    }
    T::of(2.0) * precision * recall / (precision + recall)
}

fn mean_and_cov<T: Scalar>(set: &[Vec<T>]) -> (Vec<T>, Matrix<T>) {
    let n = set.len();
    let d = set[0].len();
    let inv_n = T::one() / T::of(n as f64);
    let mut mu = vec![T::zero(); d];
    for x in set {
        for (m, &v) in mu.iter_mut().zip(x) {
            *m += v * inv_n;
        }
    }
    let mut cov = Matrix::zeros(d, d);
    let denom = T::of((n.max(2) - 1) as f64);
    for x in set {
        let centered: Vec<T> = x.iter().zip(&mu).map(|(&v, &m)| v - m).collect();
        for r in 0..d {
            let row = cov.row_mut(r);
            let cr = centered[r];
            for c in 0..d {
                row[c] += cr * centered[c] / denom;
            }
        }
    }
    (mu, cov)
}

/// Symmetric PSD square root via eigendecomposition.
fn sym_sqrt<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let d = a.rows;
    let (eig, v) = sym_eigen(a, 60);
    let tol = T::of(-1e-8);
    let mut out = Matrix::zeros(d, d);
    for (k, &lam) in eig.iter().enumerate() {
        if lam < tol {
            return Err(Error::NotPsd(lam.to_f64().unwrap_or(f64::NAN)));
        }
        let s = lam.max(T::zero()).sqrt();
        for r in 0..d {
            let vr = v.get(r, k) * s;
            let row = out.row_mut(r);
            for c in 0..d {
                row[c] += vr * v.get(c, k);
            }
        }
    }
    Ok(out)
}

/// Frechet distance between Gaussian fits of the two sets:
/// |mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2)), with the covariance
/// diagonals regularized by +1e-6.
pub fn frechet_gaussian<T: Scalar>(gen: &FeatureSet<T>, reference: &FeatureSet<T>) -> Result<T> {
    for set in [gen, reference] {
        if set.len() < 2 {
            return Err(Error::TooFewPoints { need: 2, got: set.len() });
        }
    }
    if gen.feature_dim() != reference.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: reference.feature_dim(),
            got: gen.feature_dim(),
        });
    }
    let d = gen.feature_dim();
    let reg = T::of(1e-6);
    let (mu1, mut s1) = mean_and_cov(&gen.vectors);
    let (mu2, mut s2) = mean_and_cov(&reference.vectors);
    for i in 0..d {
        let v1 = s1.get(i, i) + reg;
        s1.set(i, i, v1);
        let v2 = s2.get(i, i) + reg;
        s2.set(i, i, v2);
    }

    let mean_term: T = mu1
        .iter()
        .zip(&mu2)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();

    // tr((S1 S2)^(1/2)) = tr((sqrt(S1) S2 sqrt(S1))^(1/2)), symmetric form
    let r1 = sym_sqrt(&s1)?;
    let mut inner = Matrix::zeros(d, d);
    // inner = r1 * s2 * r1
    let mut tmp = Matrix::zeros(d, d);
    for r in 0..d {
        for c in 0..d {
            let mut acc = T::zero();
            for k in 0..d {
                acc += r1.get(r, k) * s2.get(k, c);
            }
            tmp.set(r, c, acc);
        }
    }
    for r in 0..d {
        for c in 0..d {
            let mut acc = T::zero();
            for k in 0..d {
                acc += tmp.get(r, k) * r1.get(k, c);
            }
            inner.set(r, c, acc);
        }
    }
    // enforce exact symmetry before the eigensolve
    for r in 0..d {
        for c in (r + 1)..d {
            let avg = (inner.get(r, c) + inner.get(c, r)) * T::of(0.5);
            inner.set(r, c, avg);
            inner.set(c, r, avg);
        }
    }
    let (eig, _) = sym_eigen(&inner, 60);
    let tol = T::of(-1e-8);
    let mut tr_sqrt = T::zero();
    for &lam in &eig {
        if lam < tol {
            return Err(Error::NotPsd(lam.to_f64().unwrap_or(f64::NAN)));
        }
        tr_sqrt += lam.max(T::zero()).sqrt();
    }
    let tr1: T = (0..d).map(|i| s1.get(i, i)).sum();
    let tr2: T = (0..d).map(|i| s2.get(i, i)).sum();
    Ok(mean_term + tr1 + tr2 - T::of(2.0) * tr_sqrt)
}

/// Faithfulness and generalization reference sets for one class.
///
/// Faithfulness is the query set itself; generalization is a seeded draw of
/// `n_ref` other members, disjoint from the queries.
pub fn build_reference_sets<T: Scalar>(
    class_members: &[Vec<T>],
    query_ids: &[usize],
    n_ref: usize,
    seed: u64,
) -> Result<(FeatureSet<T>, FeatureSet<T>)> {
    let others: Vec<usize> = (0..class_members.len())
        .filter(|i| !query_ids.contains(i))
        .collect();
    if others.len() < n_ref {
        return Err(Error::InsufficientPopulation { need: n_ref, have: others.len() });
    }
    let faithfulness = FeatureSet::new(
        query_ids.iter().map(|&i| class_members[i].clone()).collect(),
        SetRole::FaithfulnessRef,
    );
    let mut r = rng::substream(seed, &[0x7265]);
    let order = rng::shuffled_indices(&mut r, others.len());
    let generalization = FeatureSet::new(
        order[..n_ref].iter().map(|&oi| class_members[others[oi]].clone()).collect(),
        SetRole::GeneralizationRef,
    );
    Ok((faithfulness, generalization))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(points: &[[f64; 2]]) -> FeatureSet<f64> {
        FeatureSet::new(points.iter().map(|p| p.to_vec()).collect(), SetRole::Generated)
    }

    #[test]
    fn identical_sets_have_unit_precision_recall() {
        let a = set(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let pr = knn_precision_recall(&a, &a, 3).unwrap();
        assert_eq!(pr.precision, 1.0);
        assert_eq!(pr.recall, 1.0);
    }

    #[test]
    fn far_clusters_have_zero_precision_recall() {
        let a = set(&[[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [0.1, 0.1]]);
        let b = set(&[[100.0, 100.0], [100.1, 100.0], [100.0, 100.1], [100.1, 100.1]]);
        let pr = knn_precision_recall(&a, &b, 3).unwrap();
        assert_eq!(pr.precision, 0.0);
        assert_eq!(pr.recall, 0.0);
    }

    #[test]
    fn six_point_instance_matches_brute_force() {
        // hand instance with k = 1
        let gen = set(&[[0.0, 0.0], [2.0, 0.0], [5.0, 0.0]]);
        let refs = set(&[[0.5, 0.0], [1.5, 0.0], [9.0, 0.0]]);
        // ref radii (k=1): 0.5<->1.5 are mutual nearest (r=1.0 each); 9.0 -> 7.5
        // gen covered? 0.0: |0.0-0.5|=0.5<=1.0 yes; 2.0: |2.0-1.5|=0.5 yes;
        // 5.0: dist to 0.5=4.5>1, to 1.5=3.5>1, to 9=4<=7.5 yes -> precision 1
        // gen radii: 0<->2 r=2 each, 5 -> 3
        // refs covered? 0.5 in ball(0,2) yes; 1.5 in ball(2,2) yes; 9: dist to 5 = 4 > 3 -> no
        let pr = knn_precision_recall(&gen, &refs, 1).unwrap();
        assert!((pr.precision - 1.0).abs() < 1e-15);
        assert!((pr.recall - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn symmetry_under_role_swap() {
        let a = set(&[[0.0, 0.0], [1.0, 0.2], [0.4, 0.8], [2.0, 2.0]]);
        let b = set(&[[0.1, 0.1], [1.2, 0.1], [0.5, 0.9], [1.9, 2.1]]);
        let ab = knn_precision_recall(&a, &b, 2).unwrap();
        let ba = knn_precision_recall(&b, &a, 2).unwrap();
        assert_eq!(ab.precision, ba.recall);
        assert_eq!(ab.recall, ba.precision);
    }

    #[test]
    fn degenerate_duplicate_sets_flagged() {
        let a = set(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]);
        let b = set(&[[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]);
        let pr = knn_precision_recall(&a, &b, 1).unwrap();
        assert!(pr.degenerate);
    }

    #[test]
    fn too_few_points_rejected() {
        let a = set(&[[0.0, 0.0], [1.0, 1.0]]);
        assert!(matches!(
            knn_precision_recall(&a, &a, 3),
            Err(Error::TooFewPoints { need: 4, got: 2 })
        ));
    }

    #[test]
    fn f1_hand_values() {
        assert_eq!(f1(0.5, 0.5), 0.5);
        assert_eq!(f1(0.0, 0.7), 0.0);
        assert_eq!(f1(0.0, 0.0), 0.0);
        assert!((f1(0.895f64, 0.880) - 0.8874).abs() < 5e-5);
    }

    #[test]
    fn frechet_identical_sets_is_zero() {
        let a = set(&[[0.0, 0.0], [1.0, 0.5], [0.3, 1.0], [-0.4, 0.2]]);
        let d = frechet_gaussian(&a, &a).unwrap();
        assert!(d.abs() < 1e-8, "{d}");
    }

    #[test]
    fn frechet_mean_shift_only() {
        // same covariance, shifted mean: distance = |delta|^2
        let base = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, 0.5]];
        let a = set(&base);
        let shifted: Vec<[f64; 2]> = base.iter().map(|p| [p[0] + 2.0, p[1] - 1.0]).collect();
        let b = set(&shifted);
        let d = frechet_gaussian(&a, &b).unwrap();
        assert!((d - 5.0).abs() < 1e-8, "{d}");
    }

    #[test]
    fn frechet_one_dimensional_variances() {
        // variances 1 and 4 with equal means: (1 + 4 - 2 * 2) = 1
        // build sets with exact sample stats: {-1, 1} has sample var 2... use
        // points with sample variance exactly 1 and 4: {-1, 1} var 2 -> scale
        let a = FeatureSet::new(vec![vec![-1.0 / 2f64.sqrt()], vec![1.0 / 2f64.sqrt()]], SetRole::Generated);
        let b = FeatureSet::new(vec![vec![-2.0 / 2f64.sqrt()], vec![2.0 / 2f64.sqrt()]], SetRole::Generated);
        let d = frechet_gaussian(&a, &b).unwrap();
        assert!((d - 1.0).abs() < 1e-5, "{d}");
    }

    #[test]
    fn frechet_permutation_invariant() {
        let a = set(&[[0.0, 0.0], [1.0, 0.5], [0.3, 1.0], [-0.4, 0.2]]);
        let mut swapped = a.vectors.clone();
        swapped.swap(0, 3);
        swapped.swap(1, 2);
        let b = FeatureSet::new(swapped, SetRole::Generated);
        let ab = frechet_gaussian(&a, &b).unwrap();
        assert!(ab.abs() < 1e-10);
    }

    #[test]
    fn frechet_nonnegative_on_random_sets() {
        let mut r = rng::stream(61);
        for _ in 0..20 {
            let mk = |r: &mut crate::rng::Stream| -> FeatureSet<f64> {
                FeatureSet::new(
                    (0..8).map(|_| rng::normal_vec(r, 3)).collect(),
                    SetRole::Generated,
                )
            };
            let a = mk(&mut r);
            let b = mk(&mut r);
            let d = frechet_gaussian(&a, &b).unwrap();
            assert!(d > -1e-9, "{d}");
        }
    }

    #[test]
    fn reference_sets_are_disjoint_and_seeded() {
        let members: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        let queries = [3usize, 7, 11];
        let (faith, general) = build_reference_sets(&members, &queries, 10, 5).unwrap();
        assert_eq!(faith.len(), 3);
        assert_eq!(general.len(), 10);
        for q in &faith.vectors {
            assert!(!general.vectors.contains(q));
        }
        let (_, general2) = build_reference_sets(&members, &queries, 10, 5).unwrap();
        assert_eq!(general.vectors, general2.vectors);
        assert!(build_reference_sets(&members, &queries, 28, 5).is_err());
    }
}
