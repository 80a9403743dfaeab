//! The meta-classifier: Gaussian Naive Bayes over meta-feature vectors.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dataset::stratified_indices;
use crate::error::{Error, Result};
use crate::metafeatures::{MetaDataset, MetaVector};

/// Anything that turns a meta-feature vector into a competence level in `[0, 1]`.
pub trait CompetenceModel: Send + Sync {
    /// Support for the "competent" meta-class.
    fn competence(&self, features: &[f64]) -> f64;

    fn n_features(&self) -> usize;
}

/// Relative variance floor: `floor = max(RELATIVE_FLOOR * max variance, ABSOLUTE_FLOOR)`.
pub const RELATIVE_FLOOR: f64 = 1e-9;
pub const ABSOLUTE_FLOOR: f64 = 1e-12;

/// Two-class Gaussian Naive Bayes. Index 0 is "incompetent", 1 "competent".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    pub priors: [f64; 2],
    pub means: [Vec<f64>; 2],
    pub variances: [Vec<f64>; 2],
    pub variance_floor: f64,
    pub k: usize,
    pub k_p: usize,
    pub n_features: usize,
    /// Meta-accuracy on the held-out validation portion, if it was non-empty.
    pub validation_accuracy: Option<f64>,
    pub n_train: usize,
    pub n_validation: usize,
}

impl NaiveBayesModel {
    /// Fits priors, means and (population) variances from labelled rows.
    /// Variances are clamped to the floor.
    pub fn fit(rows: &[Vec<f64>], labels: &[bool], k: usize, k_p: usize) -> Result<Self> {
        let n_features = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_features) || labels.len() != rows.len() {
            return Err(Error::DimensionMismatch {
                expected: n_features,
                found: rows
                    .iter()
                    .map(Vec::len)
                    .find(|&l| l != n_features)
                    .unwrap_or(labels.len()),
            });
        }
        let counts = [
            labels.iter().filter(|&&l| !l).count(),
            labels.iter().filter(|&&l| l).count(),
        ];
        match counts {
            [0, _] => return Err(Error::SingleMetaClass { present: 1 }),
            [_, 0] => return Err(Error::SingleMetaClass { present: 0 }),
            _ => {}
        }
        let mut means = [vec![0.0; n_features], vec![0.0; n_features]];
        for (row, &l) in rows.iter().zip(labels) {
            for (m, v) in means[usize::from(l)].iter_mut().zip(row) {
                *m += v;
            }
        }
        for c in 0..2 {
            means[c].iter_mut().for_each(|m| *m /= counts[c] as f64);
        }
        let mut variances = [vec![0.0; n_features], vec![0.0; n_features]];
        for (row, &l) in rows.iter().zip(labels) {
            let c = usize::from(l);
            for ((s, v), m) in variances[c].iter_mut().zip(row).zip(&means[c]) {
                *s += (v - m) * (v - m);
            }
        }
        for c in 0..2 {
            variances[c].iter_mut().for_each(|s| *s /= counts[c] as f64);
        }
        let max_var = variances.iter().flatten().copied().fold(0.0f64, f64::max);
        let variance_floor = (RELATIVE_FLOOR * max_var).max(ABSOLUTE_FLOOR);
        for v in variances.iter_mut().flatten() {
            *v = v.max(variance_floor);
        }
        let n = rows.len() as f64;
        Ok(Self {
            priors: [counts[0] as f64 / n, counts[1] as f64 / n],
            means,
            variances,
            variance_floor,
            k,
            k_p,
            n_features,
            validation_accuracy: None,
            n_train: rows.len(),
            n_validation: 0,
        })
    }

    /// Joint log densities `log P(c) + Σ log N(x_f; μ_cf, σ²_cf)` for both meta-classes.
    pub fn joint_log_likelihoods(&self, x: &[f64]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (c, slot) in out.iter_mut().enumerate() {
            let mut ll = self.priors[c].ln();
            for ((v, m), s2) in x.iter().zip(&self.means[c]).zip(&self.variances[c]) {
                ll -= 0.5 * (2.0 * PI * s2).ln() + (v - m) * (v - m) / (2.0 * s2);
            }
            *slot = ll;
        }
        out
    }

    /// `[P(incompetent | x), P(competent | x)]`, normalised in log space.
    pub fn posteriors(&self, x: &[f64]) -> [f64; 2] {
        let [l0, l1] = self.joint_log_likelihoods(x);
        // P(1|x) = 1 / (1 + exp(l0 - l1)), evaluated on the stable side
        let d = l1 - l0;
        if d.is_nan() {
            return [0.5, 0.5];
        }
        let p1 = if d >= 0.0 {
            1.0 / (1.0 + (-d).exp())
        } else {
            let e = d.exp();
            e / (1.0 + e)
        };
        [1.0 - p1, p1]
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        let [p0, p1] = self.posteriors(x);
        p1 > p0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        let shape_ok = model.n_features == MetaVector::n_features(model.k, model.k_p)
            && model
                .means
                .iter()
                .chain(&model.variances)
                .all(|v| v.len() == model.n_features);
        if !shape_ok {
            return Err(Error::InvalidParameter(
                "model shape does not match K and K_p".into(),
            ));
        }
        Ok(model)
    }
}

impl CompetenceModel for NaiveBayesModel {
    fn competence(&self, features: &[f64]) -> f64 {
        self.posteriors(features)[1]
    }

    fn n_features(&self) -> usize {
        self.n_features
    }
}

/// Trains the meta-classifier on a stratified (by meta-class) `train_fraction`
/// of `meta`, reporting meta-accuracy on the remainder.
pub fn train_meta(meta: &MetaDataset, train_fraction: f64, seed: u64) -> Result<NaiveBayesModel> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction must lie in (0, 1], got {train_fraction}"
        )));
    }
    let labels: Vec<bool> = meta
        .vectors
        .iter()
        .map(|v| {
            v.label.ok_or_else(|| {
                Error::InvalidParameter("meta-training vectors must be labelled".into())
            })
        })
        .collect::<Result<_>>()?;
    let (train_rows, valid_rows) = split_meta(&labels, train_fraction, seed)?;
    let features = |rows: &[usize]| -> Vec<Vec<f64>> {
        rows.iter().map(|&r| meta.vectors[r].features()).collect()
    };
    let train_labels: Vec<bool> = train_rows.iter().map(|&r| labels[r]).collect();
    let mut model = NaiveBayesModel::fit(&features(&train_rows), &train_labels, meta.k, meta.k_p)?;
    model.n_validation = valid_rows.len();
    if !valid_rows.is_empty() {
        let hits = valid_rows
            .iter()
            .filter(|&&r| model.predict(&meta.vectors[r].features()) == labels[r])
            .count();
        model.validation_accuracy = Some(hits as f64 / valid_rows.len() as f64);
    }
    Ok(model)
}

/// Row indices of the training and validation portions, stratified by
/// meta-class. A meta-class with a single vector sends everything to training.
pub fn split_meta(
    labels: &[bool],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let competent = labels.iter().filter(|&&l| l).count();
    let incompetent = labels.len() - competent;
    match (incompetent, competent) {
        (0, _) => return Err(Error::SingleMetaClass { present: 1 }),
        (_, 0) => return Err(Error::SingleMetaClass { present: 0 }),
        _ => {}
    }
    if train_fraction >= 1.0 {
        return Ok(((0..labels.len()).collect(), Vec::new()));
    }
    if competent < 2 || incompetent < 2 {
        log::warn!("a meta-class has fewer than two vectors; training on all of them");
        return Ok(((0..labels.len()).collect(), Vec::new()));
    }
    let classes: Vec<usize> = labels.iter().map(|&l| usize::from(l)).collect();
    let mut parts = stratified_indices(&classes, 2, &[train_fraction, 1.0 - train_fraction], seed)?;
    let valid = parts.pop().expect("two parts");
    let train = parts.pop().expect("two parts");
    Ok((train, valid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vector(f3: f64, noise: f64, label: bool, id: usize) -> MetaVector {
        MetaVector {
            f1: vec![label; 2],
            f2: vec![0.5 + noise, 0.5 - noise],
            f3,
            f4: vec![id.is_multiple_of(2)],
            f5: 1.0 + noise,
            label: Some(label),
            classifier_id: 0,
            sample_id: id,
        }
    }

    fn separable(n: usize) -> MetaDataset {
        let vectors = (0..n)
            .map(|i| {
                let label = i % 2 == 0;
                vector(
                    if label { 1.0 } else { 0.0 },
                    (i % 7) as f64 * 0.01,
                    label,
                    i,
                )
            })
            .collect();
        MetaDataset::new(vectors, 2, 1).unwrap()
    }

    #[test]
    fn separable_feature_gives_perfect_validation() {
        let model = train_meta(&separable(40), 0.75, 3).unwrap();
        assert_eq!(model.validation_accuracy, Some(1.0));
        assert_eq!(model.n_train + model.n_validation, 40);
        assert_eq!(model.n_train, 30);
    }

    #[test]
    fn constant_feature_hits_the_floor() {
        let model = train_meta(&separable(40), 0.75, 3).unwrap();
        // f4 slot is index 5; f1 slots are constant within each class
        assert_eq!(model.variances[1][0], model.variance_floor);
        assert!(model.variance_floor >= ABSOLUTE_FLOOR);
        let p = model.posteriors(&[1.0, 1.0, 0.5, 0.5, 1.0, 1.0, 1.0]);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn single_meta_class_is_rejected() {
        let vectors = (0..10).map(|i| vector(1.0, 0.0, true, i)).collect();
        let meta = MetaDataset::new(vectors, 2, 1).unwrap();
        assert!(matches!(
            train_meta(&meta, 0.75, 0),
            Err(Error::SingleMetaClass { present: 1 })
        ));
    }

    fn symmetric() -> NaiveBayesModel {
        NaiveBayesModel {
            priors: [0.5, 0.5],
            means: [vec![-1.0, 0.0], vec![1.0, 0.0]],
            variances: [vec![1.0, 2.0], vec![1.0, 2.0]],
            variance_floor: ABSOLUTE_FLOOR,
            k: 0,
            k_p: 0,
            n_features: 2,
            validation_accuracy: None,
            n_train: 0,
            n_validation: 0,
        }
    }

    #[test]
    fn symmetric_model_is_indifferent_at_midpoint() {
        assert_eq!(symmetric().competence(&[0.0, 5.0]), 0.5);
        assert!(symmetric().competence(&[1.0, 0.0]) > 0.5);
    }

    #[test]
    fn extreme_inputs_do_not_produce_nan() {
        let m = symmetric();
        for x in [[1e300, 0.0], [-1e300, 0.0], [1e10, -1e10]] {
            let d = m.competence(&x);
            assert!((0.0..=1.0).contains(&d), "{d}");
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let model = train_meta(&separable(40), 0.75, 9).unwrap();
        let back = NaiveBayesModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn training_ignores_row_order() {
        let meta = separable(40);
        let mut rev = meta.clone();
        rev.vectors.reverse();
        // the stratified split shuffles within class, so compare fits on all rows
        let a = train_meta(&meta, 1.0, 0).unwrap();
        let b = train_meta(&rev, 1.0, 0).unwrap();
        let x = meta.vectors[3].features();
        assert!((a.competence(&x) - b.competence(&x)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn posteriors_sum_to_one(
            x in prop::collection::vec(-50.0f64..50.0, 2),
            m in prop::collection::vec(-5.0f64..5.0, 4),
            v in prop::collection::vec(1e-3f64..10.0, 4),
            p in 0.01f64..0.99,
        ) {
            let model = NaiveBayesModel {
                priors: [1.0 - p, p],
                means: [m[..2].to_vec(), m[2..].to_vec()],
                variances: [v[..2].to_vec(), v[2..].to_vec()],
                ..symmetric()
            };
            let [a, b] = model.posteriors(&x);
            prop_assert!((a + b - 1.0).abs() < 1e-9);
        }
    }
}
