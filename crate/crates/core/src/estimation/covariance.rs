use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::VarSet;
use crate::mrf::{
    exact_distribution_capped, DiscreteMrf, ExactDistribution, DEFAULT_ENUMERATION_CAP,
};
use crate::sampling::Dataset;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Provenance {
    Standard,
    MissingCorrected { rho: f64 },
    Population,
}

/// A covariance estimate. After missing-data correction the matrix may be
/// indefinite.
#[derive(Clone, Debug)]
pub struct CovarianceEstimate {
    pub matrix: DMatrix<f64>,
    pub provenance: Provenance,
    /// Sample size, `None` at population level.
    pub n: Option<usize>,
    /// Fewer than two samples: the uncorrected matrix has rank at most one.
    pub degenerate: bool,
}

/// Source of first and second moments of product features
/// `f_A(x) = Π_{v∈A} x_v`, either from data or from an exact distribution.
pub trait Moments: Sync {
    fn p(&self) -> usize;
    fn m(&self) -> usize;
    /// `None` for population moments.
    fn sample_size(&self) -> Option<usize>;
    /// Covariance matrix of the features in the given order.
    fn feature_covariance(&self, features: &[VarSet]) -> Result<DMatrix<f64>>;
    /// Covariance of the raw variables.
    fn vertex_covariance(&self) -> Result<DMatrix<f64>>;
    /// `Σ_{a,b} |P(X_s=a, X_t=b) − P(X_s=a) P(X_t=b)|`.
    fn correlation(&self, s: usize, t: usize) -> f64;
}

fn singleton_indices(features: &[VarSet]) -> Option<Vec<usize>> {
    features
        .iter()
        .map(|f| (f.len() == 1).then(|| f.as_slice()[0]))
        .collect()
}

fn check_features(features: &[VarSet], p: usize) -> Result<()> {
    for f in features {
        if f.is_empty() {
            return Err(Error::InvalidInput("empty feature".into()));
        }
        if f.max_vertex().unwrap() >= p {
            return Err(Error::DimensionMismatch(format!(
                "feature {f} out of range for p = {p}"
            )));
        }
    }
    Ok(())
}

fn sub_matrix(full: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| full[(idx[i], idx[j])])
}

/// Moments of a (possibly zero-filled) dataset with the missing-data
/// correction applied cellwise: second moments of `f_A f_B` are divided by
/// `(1−ρ)^{|A∪B|}` and means of `f_A` by `(1−ρ)^{|A|}`.
pub struct SampleMoments<'a> {
    data: &'a Dataset,
    rho: f64,
    vertex: OnceLock<DMatrix<f64>>,
    /// Column bitsets for binary data.
    bits: OnceLock<Vec<Vec<u64>>>,
}

impl<'a> SampleMoments<'a> {
    /// Uses the dataset's recorded erasure rate.
    pub fn new(data: &'a Dataset) -> Self {
        Self::with_rho(data, data.rho())
    }

    pub fn with_rho(data: &'a Dataset, rho: f64) -> Self {
        SampleMoments {
            data,
            rho,
            vertex: OnceLock::new(),
            bits: OnceLock::new(),
        }
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    fn column_bits(&self) -> &Vec<Vec<u64>> {
        self.bits.get_or_init(|| {
            let words = self.data.n().div_ceil(64);
            let mut cols = vec![vec![0u64; words]; self.data.p()];
            for (i, row) in self.data.rows().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    if v != 0 {
                        cols[j][i / 64] |= 1 << (i % 64);
                    }
                }
            }
            cols
        })
    }

    /// Raw moments `(n⁻¹ Σ f_a f_b, n⁻¹ Σ f_a)` before correction.
    fn raw_moments(&self, features: &[VarSet]) -> (DMatrix<f64>, Vec<f64>) {
        let n = self.data.n() as f64;
        let k = features.len();
        if self.data.m() == 2 {
            let cols = self.column_bits();
            let words = self.data.n().div_ceil(64);
            let fbits: Vec<Vec<u64>> = features
                .iter()
                .map(|f| {
                    let mut acc = vec![u64::MAX; words];
                    for v in f.iter() {
                        for (a, c) in acc.iter_mut().zip(&cols[v]) {
                            *a &= c;
                        }
                    }
                    // Bits past n are already zero in the columns.
                    acc
                })
                .collect();
            let counts: Vec<u64> = fbits
                .iter()
                .map(|b| b.iter().map(|w| w.count_ones() as u64).sum())
                .collect();
            let mut second = DMatrix::zeros(k, k);
            for a in 0..k {
                for b in a..k {
                    let c: u64 = fbits[a]
                        .iter()
                        .zip(&fbits[b])
                        .map(|(x, y)| (x & y).count_ones() as u64)
                        .sum();
                    second[(a, b)] = c as f64 / n;
                    second[(b, a)] = second[(a, b)];
                }
            }
            let means = counts.iter().map(|&c| c as f64 / n).collect();
            (second, means)
        } else {
            let f = DMatrix::from_fn(self.data.n(), k, |i, a| {
                let row = self.data.row(i);
                features[a].iter().map(|v| row[v] as f64).product::<f64>()
            });
            let second = f.tr_mul(&f) / n;
            let means = f.row_sum().iter().map(|s| s / n).collect();
            (second, means)
        }
    }

    fn corrected(&self, features: &[VarSet]) -> DMatrix<f64> {
        let (second, mean) = self.raw_moments(features);
        let keep = 1.0 - self.rho;
        let k = features.len();
        let sizes: Vec<i32> = features.iter().map(|f| f.len() as i32).collect();
        DMatrix::from_fn(k, k, |a, b| {
            let union = if a == b {
                sizes[a]
            } else {
                features[a].union(&features[b]).len() as i32
            };
            let scale = 1.0 / (keep.powi(sizes[a]) * keep.powi(sizes[b]));
            second[(a, b)] / keep.powi(union) - scale * mean[a] * mean[b]
        })
    }
}

impl Moments for SampleMoments<'_> {
    fn p(&self) -> usize {
        self.data.p()
    }

    fn m(&self) -> usize {
        self.data.m()
    }

    fn sample_size(&self) -> Option<usize> {
        Some(self.data.n())
    }

    fn feature_covariance(&self, features: &[VarSet]) -> Result<DMatrix<f64>> {
        check_features(features, self.p())?;
        if self.data.n() == 0 {
            return Err(Error::InvalidInput("covariance of an empty dataset".into()));
        }
        match singleton_indices(features) {
            Some(idx) => Ok(sub_matrix(&self.vertex_covariance()?, &idx)),
            None => Ok(self.corrected(features)),
        }
    }

    fn vertex_covariance(&self) -> Result<DMatrix<f64>> {
        if self.data.n() == 0 {
            return Err(Error::InvalidInput("covariance of an empty dataset".into()));
        }
        Ok(self
            .vertex
            .get_or_init(|| {
                let singles: Vec<VarSet> = (0..self.p()).map(VarSet::singleton).collect();
                self.corrected(&singles)
            })
            .clone())
    }

    fn correlation(&self, s: usize, t: usize) -> f64 {
        empirical_correlation(self.data, s, t)
    }
}

/// Moments under an exact distribution.
pub struct PopulationMoments {
    dist: ExactDistribution,
    vertex: OnceLock<DMatrix<f64>>,
}

impl PopulationMoments {
    pub fn new(model: &DiscreteMrf) -> Result<Self> {
        Self::with_cap(model, DEFAULT_ENUMERATION_CAP)
    }

    pub fn with_cap(model: &DiscreteMrf, cap: u128) -> Result<Self> {
        Ok(Self::from_distribution(exact_distribution_capped(
            model, cap,
        )?))
    }

    pub fn from_distribution(dist: ExactDistribution) -> Self {
        PopulationMoments {
            dist,
            vertex: OnceLock::new(),
        }
    }

    pub fn distribution(&self) -> &ExactDistribution {
        &self.dist
    }

    fn exact(&self, features: &[VarSet]) -> DMatrix<f64> {
        let k = features.len();
        let mut second = DMatrix::<f64>::zeros(k, k);
        let mut mean = DVector::<f64>::zeros(k);
        let mut f = vec![0.0; k];
        self.dist.for_each_state(|x, q| {
            for (fa, feat) in f.iter_mut().zip(features) {
                *fa = feat.iter().map(|v| x[v] as f64).product();
            }
            for a in 0..k {
                if f[a] == 0.0 {
                    continue;
                }
                mean[a] += q * f[a];
                for b in a..k {
                    second[(a, b)] += q * f[a] * f[b];
                }
            }
        });
        DMatrix::from_fn(k, k, |a, b| {
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            second[(a, b)] - mean[a] * mean[b]
        })
    }
}

impl Moments for PopulationMoments {
    fn p(&self) -> usize {
        self.dist.p()
    }

    fn m(&self) -> usize {
        self.dist.m()
    }

    fn sample_size(&self) -> Option<usize> {
        None
    }

    fn feature_covariance(&self, features: &[VarSet]) -> Result<DMatrix<f64>> {
        check_features(features, self.p())?;
        match singleton_indices(features) {
            Some(idx) => Ok(sub_matrix(&self.vertex_covariance()?, &idx)),
            None => Ok(self.exact(features)),
        }
    }

    fn vertex_covariance(&self) -> Result<DMatrix<f64>> {
        Ok(self
            .vertex
            .get_or_init(|| {
                let singles: Vec<VarSet> = (0..self.p()).map(VarSet::singleton).collect();
                self.exact(&singles)
            })
            .clone())
    }

    fn correlation(&self, s: usize, t: usize) -> f64 {
        population_correlation(&self.dist, s, t)
    }
}

/// Standard sample covariance `n⁻¹ Σ x_i x_iᵀ − x̄ x̄ᵀ`.
pub fn sample_covariance(data: &Dataset) -> Result<CovarianceEstimate> {
    let matrix = SampleMoments::with_rho(data, 0.0).vertex_covariance()?;
    Ok(CovarianceEstimate {
        matrix,
        provenance: Provenance::Standard,
        n: Some(data.n()),
        degenerate: data.n() < 2,
    })
}

/// Bias-corrected covariance for zero-filled data with erasure rate `rho`.
/// Equals [`sample_covariance`] bit for bit at `rho = 0`.
pub fn corrected_covariance_missing(data: &Dataset, rho: f64) -> Result<CovarianceEstimate> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidRho(rho));
    }
    let matrix = SampleMoments::with_rho(data, rho).vertex_covariance()?;
    Ok(CovarianceEstimate {
        matrix,
        provenance: if rho == 0.0 {
            Provenance::Standard
        } else {
            Provenance::MissingCorrected { rho }
        },
        n: Some(data.n()),
        degenerate: data.n() < 2,
    })
}

/// Predictor covariance and predictor-target cross-covariance for a
/// nodewise regression.
#[derive(Clone, Debug)]
pub struct RegressionPair {
    pub gamma: DMatrix<f64>,
    pub gamma_vec: DVector<f64>,
    pub labels: Vec<VarSet>,
    pub target: usize,
    /// Predictors with zero estimated variance.
    pub constant_columns: Vec<usize>,
    /// `Γ̂` is not positive definite.
    pub singular: bool,
}

impl RegressionPair {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }
}

/// Regression of `X_s` on the product features `features`, none of which
/// may contain `s`.
pub fn nodewise_pair<M: Moments + ?Sized>(
    moments: &M,
    s: usize,
    features: &[VarSet],
) -> Result<RegressionPair> {
    if s >= moments.p() {
        return Err(Error::DimensionMismatch(format!("target {s} out of range")));
    }
    if features.iter().any(|f| f.contains(s)) {
        return Err(Error::InvalidInput(format!(
            "a predictor contains the target {s}"
        )));
    }
    let mut sorted = features.to_vec();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput("duplicate predictor labels".into()));
    }
    let mut all = features.to_vec();
    all.push(VarSet::singleton(s));
    let cov = moments.feature_covariance(&all)?;
    let k = features.len();
    let gamma = cov.view((0, 0), (k, k)).into_owned();
    let gamma_vec = cov.view((0, k), (k, 1)).column(0).into_owned();
    let scale = gamma.diagonal().amax().max(f64::MIN_POSITIVE);
    let constant_columns: Vec<usize> = (0..k)
        .filter(|&i| gamma[(i, i)].abs() <= 1e-12 * scale.max(1.0))
        .collect();
    let singular = !constant_columns.is_empty() || gamma.clone().cholesky().is_none();
    Ok(RegressionPair {
        gamma,
        gamma_vec,
        labels: features.to_vec(),
        target: s,
        constant_columns,
        singular,
    })
}

/// Empirical `r̂_C(s, t)` over all value pairs.
pub fn empirical_correlation(data: &Dataset, s: usize, t: usize) -> f64 {
    let m = data.m();
    if data.n() == 0 {
        return 0.0;
    }
    let mut joint = vec![0usize; m * m];
    for row in data.rows() {
        joint[row[s] as usize * m + row[t] as usize] += 1;
    }
    correlation_from_joint(
        &joint
            .iter()
            .map(|&c| c as f64 / data.n() as f64)
            .collect::<Vec<_>>(),
        m,
    )
}

/// Population `r_C(s, t)` from exact marginals.
pub fn population_correlation(dist: &ExactDistribution, s: usize, t: usize) -> f64 {
    if s == t {
        let m = dist.m();
        let single = dist.marginal(&VarSet::singleton(s));
        let mut joint = vec![0.0; m * m];
        for (a, q) in single.iter().enumerate() {
            joint[a * m + a] = *q;
        }
        return correlation_from_joint(&joint, m);
    }
    let (lo, hi) = if s < t { (s, t) } else { (t, s) };
    let mut joint = dist.marginal(&VarSet::from([lo, hi]));
    let m = dist.m();
    if s > t {
        joint = (0..m * m).map(|i| joint[(i % m) * m + i / m]).collect();
    }
    correlation_from_joint(&joint, m)
}

fn correlation_from_joint(joint: &[f64], m: usize) -> f64 {
    let row: Vec<f64> = (0..m)
        .map(|a| (0..m).map(|b| joint[a * m + b]).sum())
        .collect();
    let col: Vec<f64> = (0..m)
        .map(|b| (0..m).map(|a| joint[a * m + b]).sum())
        .collect();
    (0..m * m)
        .map(|i| (joint[i] - row[i / m] * col[i % m]).abs())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::mrf::exact_distribution;
    use crate::mrf::StatisticBasis;
    use crate::population::generalized_covariance;
    use crate::sampling::{corrupt_missing, exact_sample};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain4_model() -> DiscreteMrf {
        DiscreteMrf::ising(
            &Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap(),
            0.1,
            2.0,
        )
    }

    /// Plain loops, no bitsets.
    fn naive_covariance(data: &Dataset) -> DMatrix<f64> {
        let (n, p) = (data.n() as f64, data.p());
        let mut s = DMatrix::<f64>::zeros(p, p);
        let mut mean = vec![0.0; p];
        for row in data.rows() {
            for i in 0..p {
                mean[i] += row[i] as f64;
                for j in 0..p {
                    s[(i, j)] += row[i] as f64 * row[j] as f64;
                }
            }
        }
        let mean: Vec<f64> = mean.iter().map(|v| v / n).collect();
        DMatrix::from_fn(p, p, |i, j| s[(i, j)] / n - mean[i] * mean[j])
    }

    #[test]
    fn rho_zero_is_bit_identical() {
        let data = exact_sample(&chain4_model(), 997, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let est = corrected_covariance_missing(&data, 0.0).unwrap();
        let naive = naive_covariance(&data);
        assert_eq!(est.matrix, naive);
        assert_eq!(sample_covariance(&data).unwrap().matrix, naive);
    }

    #[test]
    fn ternary_uses_dense_path() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let model = crate::mrf::random_model(
            &g,
            3,
            &crate::mrf::WeightSpec::uniform(-1.0, 1.0),
            &mut ChaCha8Rng::seed_from_u64(2),
        )
        .unwrap();
        let data = exact_sample(&model, 500, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(
            sample_covariance(&data).unwrap().matrix,
            naive_covariance(&data)
        );
    }

    #[test]
    fn single_sample_is_degenerate() {
        let data = Dataset::new(1, 3, 2, vec![1, 0, 1]).unwrap();
        let est = corrected_covariance_missing(&data, 0.0).unwrap();
        assert!(est.degenerate);
        assert_eq!(est.matrix.amax(), 0.0);
    }

    #[test]
    fn missing_correction_is_close_to_population() {
        let model = chain4_model();
        let sigma = PopulationMoments::new(&model)
            .unwrap()
            .vertex_covariance()
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = exact_sample(&model, 100_000, &mut rng).unwrap();
        let z = corrupt_missing(&data, 0.2, &mut rng).unwrap();
        let est = corrected_covariance_missing(&z, 0.2).unwrap();
        assert!((est.matrix - sigma).amax() < 0.02);
        assert!(matches!(
            corrected_covariance_missing(&z, 1.0),
            Err(Error::InvalidRho(_))
        ));
    }

    #[test]
    fn product_feature_correction_matches_population() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let model = DiscreteMrf::ising(&g, 0.1, 0.5);
        let feats = vec![
            VarSet::from([0]),
            VarSet::from([2]),
            VarSet::from([1, 3]),
            VarSet::from([0, 1]),
        ];
        let pop = PopulationMoments::new(&model)
            .unwrap()
            .feature_covariance(&feats)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = exact_sample(&model, 200_000, &mut rng).unwrap();
        let z = corrupt_missing(&data, 0.3, &mut rng).unwrap();
        let est = SampleMoments::new(&z).feature_covariance(&feats).unwrap();
        assert!((est - pop).amax() < 0.02);
    }

    #[test]
    fn population_vertex_covariance_matches_generalized() {
        let model = chain4_model();
        let a = PopulationMoments::new(&model)
            .unwrap()
            .vertex_covariance()
            .unwrap();
        let b = generalized_covariance(&model, &StatisticBasis::vertices(4, 2).unwrap()).unwrap();
        assert!((a - b.matrix()).amax() < 1e-14);
    }

    #[test]
    fn nodewise_pair_is_sub_block() {
        let data = exact_sample(&chain4_model(), 300, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let full = sample_covariance(&data).unwrap().matrix;
        let feats: Vec<VarSet> = [0, 2, 3].into_iter().map(VarSet::singleton).collect();
        let pair = nodewise_pair(&SampleMoments::new(&data), 1, &feats).unwrap();
        for (i, &a) in [0, 2, 3].iter().enumerate() {
            assert_eq!(pair.gamma_vec[i], full[(a, 1)]);
            for (j, &b) in [0, 2, 3].iter().enumerate() {
                assert_eq!(pair.gamma[(i, j)], full[(a, b)]);
            }
        }
        assert!(nodewise_pair(&SampleMoments::new(&data), 1, &[VarSet::from([1, 2])]).is_err());
    }

    #[test]
    fn constant_column_flagged() {
        let data =
            Dataset::from_rows(&[vec![0, 1, 0], vec![1, 1, 1], vec![1, 1, 0]], 3, 2).unwrap();
        let feats = vec![VarSet::singleton(1), VarSet::singleton(2)];
        let pair = nodewise_pair(&SampleMoments::new(&data), 0, &feats).unwrap();
        assert!(pair.singular);
        assert_eq!(pair.constant_columns, vec![0]);
    }

    #[test]
    fn correlation_hand_values() {
        let data = Dataset::from_rows(&[vec![0, 0], vec![1, 1]], 2, 2).unwrap();
        assert!((empirical_correlation(&data, 0, 1) - 1.0).abs() < 1e-15);
        let dist = exact_distribution(&chain4_model()).unwrap();
        let r: Vec<f64> = (1..4)
            .map(|t| population_correlation(&dist, 0, t))
            .collect();
        assert!(r[0] > r[1] && r[1] > r[2]);
        assert!(
            (population_correlation(&dist, 2, 0) - population_correlation(&dist, 0, 2)).abs()
                < 1e-15
        );
    }
}
