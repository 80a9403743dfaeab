#![allow(dead_code)]

use metades_core::base::{LinearClassifier, Pool};
use metades_core::dataset::Dataset;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_member(rng: &mut ChaCha8Rng, l: usize, d: usize) -> LinearClassifier {
    let w = Array2::from_shape_fn((l, d), |_| normal(rng));
    let b = (0..l).map(|_| normal(rng)).collect();
    LinearClassifier::new(w, b).unwrap()
}

pub fn random_pool(rng: &mut ChaCha8Rng, m: usize, l: usize, d: usize) -> Pool {
    Pool::new((0..m).map(|_| random_member(rng, l, d)).collect()).unwrap()
}

/// Gaussian features with every class present.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, l: usize, d: usize) -> Dataset {
    let mut labels: Vec<usize> = (0..n).map(|i| i % l).collect();
    labels.shuffle(rng);
    let x = Array2::from_shape_fn((n, d), |_| normal(rng));
    Dataset::new(x, labels, l).unwrap()
}

/// Two well separated clusters on the first axis: class 0 left, class 1 right.
pub fn two_clusters(rng: &mut ChaCha8Rng, n: usize) -> Dataset {
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let x = Array2::from_shape_fn((n, 2), |(i, j)| {
        let centre = if j == 0 {
            if labels[i] == 0 {
                -2.0
            } else {
                2.0
            }
        } else {
            0.0
        };
        centre + 0.4 * normal(rng)
    });
    Dataset::new(x, labels, 2).unwrap()
}

/// Writes a dataset as CSV with a header and string labels in the last column.
pub fn write_csv(data: &Dataset, path: &std::path::Path) {
    let mut text = String::new();
    let names: Vec<String> = (0..data.n_features()).map(|j| format!("x{j}")).collect();
    text.push_str(&names.join(","));
    text.push_str(",class\n");
    for i in 0..data.len() {
        let row: Vec<String> = data.row(i).iter().map(|v| format!("{v:?}")).collect();
        text.push_str(&row.join(","));
        text.push_str(&format!(",c{}\n", data.label(i)));
    }
    std::fs::write(path, text).unwrap();
}
