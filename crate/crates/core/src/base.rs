//! Multi-class perceptrons and the bagged pool they form.

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seed;

/// Bootstrap redraws allowed before giving up on a class that keeps going missing.
pub const MAX_BOOTSTRAP_RETRIES: usize = 100;

/// A linear classifier with one score function per class.
///
/// Scores are `w_l · x + b_l`; the decision is the arg-max of the
/// calibrated supports, ties going to the lowest class index.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    weights: Array2<f64>,
    biases: Vec<f64>,
    slope: f64,
}

impl LinearClassifier {
    pub fn new(weights: Array2<f64>, biases: Vec<f64>) -> Result<Self> {
        Self::with_slope(weights, biases, 1.0)
    }

    /// `slope` scales raw margins before the logistic/softmax calibration.
    pub fn with_slope(weights: Array2<f64>, biases: Vec<f64>, slope: f64) -> Result<Self> {
        if weights.nrows() < 2 {
            return Err(Error::InvalidParameter(
                "a classifier needs at least two classes".into(),
            ));
        }
        if weights.nrows() != biases.len() {
            return Err(Error::DimensionMismatch {
                expected: weights.nrows(),
                found: biases.len(),
            });
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "non-finite classifier parameter".into(),
            ));
        }
        if !(slope.is_finite() && slope > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "slope must be positive, got {slope}"
            )));
        }
        Ok(Self {
            weights: weights.as_standard_layout().into_owned(),
            biases,
            slope,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.biases.len()
    }

    pub fn n_features(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    /// Raw per-class scores `w_l · x + b_l`.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let x = ArrayView1::from(x);
        self.weights
            .rows()
            .into_iter()
            .zip(&self.biases)
            .map(|(w, b)| w.dot(&x) + b)
            .collect()
    }

    /// Posterior estimates: sigmoid of the signed margin for two classes,
    /// softmax of the scores otherwise.
    pub fn supports(&self, x: &[f64]) -> Vec<f64> {
        let s = self.scores(x);
        if s.len() == 2 {
            let m = self.slope * (s[1] - s[0]);
            vec![sigmoid(-m), sigmoid(m)]
        } else {
            let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut e: Vec<f64> = s.iter().map(|v| (self.slope * (v - max)).exp()).collect();
            let total: f64 = e.iter().sum();
            e.iter_mut().for_each(|v| *v /= total);
            e
        }
    }

    pub fn classify(&self, x: &[f64]) -> usize {
        argmax(&self.supports(x))
    }

    /// Distance from `x` to the nearest boundary between the predicted class
    /// and any other class. Degenerate (zero-normal) boundaries count as 0.
    pub fn decision_distance(&self, x: &[f64]) -> f64 {
        let p = self.classify(x);
        let xv = ArrayView1::from(x);
        let wp = self.weights.row(p);
        (0..self.n_classes())
            .filter(|&q| q != p)
            .map(|q| {
                let diff = &wp - &self.weights.row(q);
                let norm = diff.dot(&diff).sqrt();
                if norm == 0.0 {
                    0.0
                } else {
                    (diff.dot(&xv) + self.biases[p] - self.biases[q]).abs() / norm
                }
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Online perceptron hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerceptronConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Margin scale used when calibrating supports.
    pub slope: f64,
}

impl Default for PerceptronConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 0.1,
            slope: 1.0,
        }
    }
}

/// Multi-class perceptron (Kesler construction): for every misclassified
/// sample the true class row moves towards `x`, the predicted row away.
/// The visiting order is reshuffled each epoch from `seed`.
pub fn train_perceptron(
    data: &Dataset,
    cfg: &PerceptronConfig,
    seed: u64,
) -> Result<LinearClassifier> {
    if cfg.epochs == 0 || !(cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "perceptron needs epochs > 0 and a positive learning rate, got {cfg:?}"
        )));
    }
    if data.class_counts().contains(&0) {
        return Err(Error::InvalidDataset(
            "perceptron training needs every class present".into(),
        ));
    }
    let (l, d) = (data.n_classes(), data.n_features());
    let mut weights = Array2::<f64>::zeros((l, d));
    let mut biases = vec![0.0; l];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = seed::rng(seed);
    let lr = cfg.learning_rate;
    let mut scores = vec![0.0; l];

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let x = data.row_view(i);
            for (c, s) in scores.iter_mut().enumerate() {
                *s = weights.row(c).dot(&x) + biases[c];
            }
            let predicted = argmax(&scores);
            let truth = data.label(i);
            if predicted != truth {
                weights.row_mut(truth).scaled_add(lr, &x);
                weights.row_mut(predicted).scaled_add(-lr, &x);
                biases[truth] += lr;
                biases[predicted] -= lr;
            }
        }
    }
    LinearClassifier::with_slope(weights, biases, cfg.slope)
}

/// A pool of base classifiers together with the bootstrap each was fit on.
#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    members: Vec<LinearClassifier>,
    trained_on: Vec<Vec<usize>>,
}

impl Pool {
    pub fn new(members: Vec<LinearClassifier>) -> Result<Self> {
        let n = members.len();
        Self::with_bootstraps(members, vec![Vec::new(); n])
    }

    pub fn with_bootstraps(
        members: Vec<LinearClassifier>,
        trained_on: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::InvalidParameter(
                "a pool needs at least one member".into(),
            ));
        };
        let (l, d) = (first.n_classes(), first.n_features());
        if let Some(bad) = members
            .iter()
            .find(|m| m.n_classes() != l || m.n_features() != d)
        {
            return Err(Error::InvalidParameter(format!(
                "pool members disagree on shape: {l}x{d} vs {}x{}",
                bad.n_classes(),
                bad.n_features()
            )));
        }
        if trained_on.len() != members.len() {
            return Err(Error::DimensionMismatch {
                expected: members.len(),
                found: trained_on.len(),
            });
        }
        Ok(Self {
            members,
            trained_on,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.members[0].n_classes()
    }

    pub fn n_features(&self) -> usize {
        self.members[0].n_features()
    }

    pub fn members(&self) -> &[LinearClassifier] {
        &self.members
    }

    pub fn member(&self, i: usize) -> &LinearClassifier {
        &self.members[i]
    }

    /// Bootstrap row indices (a multiset) used for each member.
    pub fn trained_on(&self) -> &[Vec<usize>] {
        &self.trained_on
    }

    /// Every member's decision for `x`.
    pub fn decisions(&self, x: &[f64]) -> Vec<usize> {
        self.members.iter().map(|m| m.classify(x)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&PoolDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<PoolDocument>(text)?.try_into()
    }
}

/// Bagging: member `i` is trained on an `N`-row bootstrap drawn with a seed
/// derived from `(seed, i)`. A bootstrap that misses a class is redrawn, at
/// most [`MAX_BOOTSTRAP_RETRIES`] times.
pub fn bagging_pool(
    data: &Dataset,
    pool_size: usize,
    cfg: &PerceptronConfig,
    seed: u64,
) -> Result<Pool> {
    if pool_size == 0 {
        return Err(Error::InvalidParameter(
            "pool size must be at least 1".into(),
        ));
    }
    if data.class_counts().contains(&0) {
        return Err(Error::InvalidDataset(
            "bagging needs every class present".into(),
        ));
    }
    let trained: Vec<(LinearClassifier, Vec<usize>)> = (0..pool_size)
        .into_par_iter()
        .map(|i| {
            let member_seed = seed::derive_seed(seed, i as u64);
            let rows = draw_bootstrap(data, member_seed)?;
            let sample = data.select(&rows);
            let clf = train_perceptron(&sample, cfg, seed::derive_seed(member_seed, u64::MAX))?;
            Ok((clf, rows))
        })
        .collect::<Result<_>>()?;
    let (members, trained_on) = trained.into_iter().unzip();
    Pool::with_bootstraps(members, trained_on)
}

fn draw_bootstrap(data: &Dataset, seed: u64) -> Result<Vec<usize>> {
    let n = data.len();
    let mut rng = seed::rng(seed);
    for _ in 0..=MAX_BOOTSTRAP_RETRIES {
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let mut seen = vec![false; data.n_classes()];
        for &r in &rows {
            seen[data.label(r)] = true;
        }
        if seen.iter().all(|&s| s) {
            return Ok(rows);
        }
    }
    Err(Error::BootstrapExhausted {
        retries: MAX_BOOTSTRAP_RETRIES,
    })
}

const POOL_FORMAT: &str = "metades-pool";
const POOL_VERSION: u32 = 1;

/// On-disk pool layout: row-major parameters, member-major then class-major.
#[derive(Debug, Serialize, Deserialize)]
struct PoolDocument {
    format: String,
    version: u32,
    m: usize,
    d: usize,
    l: usize,
    slopes: Vec<f64>,
    weights: Vec<f64>,
    biases: Vec<f64>,
    trained_on: Vec<Vec<usize>>,
}

impl From<&Pool> for PoolDocument {
    fn from(pool: &Pool) -> Self {
        Self {
            format: POOL_FORMAT.into(),
            version: POOL_VERSION,
            m: pool.len(),
            d: pool.n_features(),
            l: pool.n_classes(),
            slopes: pool.members.iter().map(|c| c.slope).collect(),
            weights: pool
                .members
                .iter()
                .flat_map(|c| c.weights.iter().copied())
                .collect(),
            biases: pool
                .members
                .iter()
                .flat_map(|c| c.biases.iter().copied())
                .collect(),
            trained_on: pool.trained_on.clone(),
        }
    }
}

impl TryFrom<PoolDocument> for Pool {
    type Error = Error;

    fn try_from(doc: PoolDocument) -> Result<Self> {
        if doc.format != POOL_FORMAT || doc.version != POOL_VERSION {
            return Err(Error::InvalidParameter(format!(
                "unsupported pool document {} v{}",
                doc.format, doc.version
            )));
        }
        let (m, d, l) = (doc.m, doc.d, doc.l);
        if doc.weights.len() != m * l * d {
            return Err(Error::DimensionMismatch {
                expected: m * l * d,
                found: doc.weights.len(),
            });
        }
        if doc.biases.len() != m * l || doc.slopes.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m * l,
                found: doc.biases.len(),
            });
        }
        let members = (0..m)
            .map(|i| {
                let w = Array2::from_shape_vec(
                    (l, d),
                    doc.weights[i * l * d..(i + 1) * l * d].to_vec(),
                )
                .expect("length checked");
                LinearClassifier::with_slope(
                    w,
                    doc.biases[i * l..(i + 1) * l].to_vec(),
                    doc.slopes[i],
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Pool::with_bootstraps(members, doc.trained_on)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn binary(w: [f64; 2], b: f64) -> LinearClassifier {
        // class 1 minus class 0 gives the signed hyperplane (w, b)
        LinearClassifier::new(array![[0.0, 0.0], [w[0], w[1]]], vec![0.0, b]).unwrap()
    }

    #[test]
    fn classify_picks_highest_score() {
        let c = LinearClassifier::new(
            array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            vec![0.0; 3],
        )
        .unwrap();
        assert_eq!(c.classify(&[0.1, 0.2, 0.9]), 2);
    }

    #[test]
    fn zero_classifier_ties_to_class_zero() {
        let c = LinearClassifier::new(Array2::zeros((3, 2)), vec![0.0; 3]).unwrap();
        assert_eq!(c.classify(&[4.0, -1.0]), 0);
        assert_eq!(c.decision_distance(&[4.0, -1.0]), 0.0);
    }

    #[test]
    fn supports_on_hyperplane_are_even() {
        let c = binary([1.0, -1.0], 0.0);
        assert_eq!(c.supports(&[2.0, 2.0]), vec![0.5, 0.5]);
        let far = c.supports(&[1e6, 0.0]);
        assert_eq!(far[1], 1.0);
        assert_eq!(far[0], 0.0);
    }

    #[test]
    fn axis_aligned_distance() {
        let c = binary([1.0, 0.0], 0.0);
        assert_eq!(c.decision_distance(&[3.0, 7.0]), 3.0);
        assert_eq!(c.decision_distance(&[0.0, 7.0]), 0.0);
    }

    #[test]
    fn multiclass_distance_uses_nearest_rival_boundary() {
        // predicted class 0 at origin-ish; rivals at x=1 (class 1) and y=3 (class 2)
        let c = LinearClassifier::new(
            array![[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]],
            vec![0.0, -2.0, -6.0],
        )
        .unwrap();
        let x = [0.5, 0.0];
        assert_eq!(c.classify(&x), 0);
        assert_relative_eq!(c.decision_distance(&x), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn perceptron_separates_toy_data() {
        let data = Dataset::new(
            array![[0.0, 0.0], [0.0, 1.0], [3.0, 0.0], [3.0, 1.0]],
            vec![0, 0, 1, 1],
            2,
        )
        .unwrap();
        let c = train_perceptron(&data, &PerceptronConfig::default(), 1).unwrap();
        for i in 0..data.len() {
            assert_eq!(c.classify(data.row(i)), data.label(i));
        }
    }

    #[test]
    fn perceptron_degenerate_features_stay_finite() {
        let data = Dataset::new(Array2::ones((6, 2)), vec![0, 1, 0, 1, 0, 0], 2).unwrap();
        let c = train_perceptron(&data, &PerceptronConfig::default(), 3).unwrap();
        assert!(c.weights().iter().all(|v| v.is_finite()));
        let first = c.classify(data.row(0));
        assert!((0..data.len()).all(|i| c.classify(data.row(i)) == first));
    }

    #[test]
    fn perceptron_rejects_bad_config() {
        let data = Dataset::new(array![[0.0], [1.0]], vec![0, 1], 2).unwrap();
        let cfg = PerceptronConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(train_perceptron(&data, &cfg, 0).is_err());
    }

    fn line_data(n: usize) -> Dataset {
        let features =
            Array2::from_shape_fn(
                (n, 2),
                |(i, j)| if j == 0 { i as f64 } else { (i % 3) as f64 },
            );
        let labels = (0..n).map(|i| usize::from(i >= n / 2)).collect();
        Dataset::new(features, labels, 2).unwrap()
    }

    #[test]
    fn bagging_is_reproducible() {
        let data = line_data(40);
        let cfg = PerceptronConfig {
            epochs: 5,
            ..Default::default()
        };
        let a = bagging_pool(&data, 10, &cfg, 11).unwrap();
        let b = bagging_pool(&data, 10, &cfg, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert!(a.trained_on().iter().all(|rows| rows.len() == 40));
        assert_ne!(a, bagging_pool(&data, 10, &cfg, 12).unwrap());
        assert!(bagging_pool(&data, 0, &cfg, 1).is_err());
    }

    #[test]
    fn single_member_pool_is_a_bootstrap_perceptron() {
        let data = line_data(20);
        let cfg = PerceptronConfig::default();
        let pool = bagging_pool(&data, 1, &cfg, 5).unwrap();
        let rows = &pool.trained_on()[0];
        let member_seed = seed::derive_seed(5, 0);
        let direct = train_perceptron(
            &data.select(rows),
            &cfg,
            seed::derive_seed(member_seed, u64::MAX),
        )
        .unwrap();
        assert_eq!(pool.member(0), &direct);
    }

    #[test]
    fn rare_class_exhausts_bootstrap_retries() {
        // Class 2 is absent after selection, so no bootstrap can cover it.
        let full = Dataset::new(Array2::zeros((6, 1)), vec![0, 1, 2, 0, 1, 2], 3).unwrap();
        let data = full.select(&[0, 1, 3, 4]);
        assert!(matches!(
            draw_bootstrap(&data, 0),
            Err(Error::BootstrapExhausted { .. })
        ));
        assert!(matches!(
            bagging_pool(&data, 1, &PerceptronConfig::default(), 0),
            Err(Error::InvalidDataset(_))
        ));
    }

    #[test]
    fn pool_json_round_trip_is_bit_exact() {
        let data = line_data(30);
        let pool = bagging_pool(&data, 4, &PerceptronConfig::default(), 2).unwrap();
        let back = Pool::from_json(&pool.to_json().unwrap()).unwrap();
        assert_eq!(pool, back);
        for (a, b) in pool.members().iter().zip(back.members()) {
            for (x, y) in a.weights().iter().zip(b.weights()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    fn classifier_strategy() -> impl Strategy<Value = (LinearClassifier, Vec<f64>)> {
        (2usize..5, 1usize..5).prop_flat_map(|(l, d)| {
            (
                prop::collection::vec(-5.0f64..5.0, l * d),
                prop::collection::vec(-5.0f64..5.0, l),
                prop::collection::vec(-10.0f64..10.0, d),
            )
                .prop_map(move |(w, b, x)| {
                    let w = Array2::from_shape_vec((l, d), w).unwrap();
                    (LinearClassifier::new(w, b).unwrap(), x)
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn supports_form_a_distribution((c, x) in classifier_strategy()) {
            let s = c.supports(&x);
            prop_assert!(s.iter().all(|p| (0.0..=1.0).contains(p)));
            prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert_eq!(c.classify(&x), argmax(&s));
        }

        #[test]
        fn distance_is_scale_invariant((c, x) in classifier_strategy(), k in 0.01f64..100.0) {
            let scaled = LinearClassifier::new(c.weights() * k, c.biases().iter().map(|b| b * k).collect()).unwrap();
            let (a, b) = (c.decision_distance(&x), scaled.decision_distance(&x));
            prop_assert!(a >= 0.0);
            if c.classify(&x) == scaled.classify(&x) {
                prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            }
        }

        #[test]
        fn binary_distance_matches_projection(
            w in prop::array::uniform2(-5.0f64..5.0),
            b in -5.0f64..5.0,
            x in prop::array::uniform2(-10.0f64..10.0),
        ) {
            prop_assume!(w[0].abs() + w[1].abs() > 1e-3);
            let c = binary(w, b);
            // orthogonal projection of x onto {y : w.y + b = 0}
            let n2 = w[0] * w[0] + w[1] * w[1];
            let t = (w[0] * x[0] + w[1] * x[1] + b) / n2;
            let y = [x[0] - t * w[0], x[1] - t * w[1]];
            let oracle = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
            prop_assert!((c.decision_distance(&x) - oracle).abs() < 1e-9 * oracle.max(1.0));
        }
    }
}
