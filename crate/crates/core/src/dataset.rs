//! Labelled datasets, CSV ingestion, stratified partitioning and the two
//! bundled synthetic problems.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seed;

/// A feature matrix with dense integer class labels.
///
/// Rows also carry the id they had in the dataset they were cut from, so
/// partitions can always be traced back to the source.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    n_classes: usize,
    feature_names: Option<Vec<String>>,
    row_ids: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset, checking that every value is finite, every label is
    /// below `n_classes` and every class occurs at least once.
    pub fn new(features: Array2<f64>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let data = Self::unchecked_classes(features, labels, n_classes)?;
        let counts = data.class_counts();
        if let Some(missing) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidDataset(format!(
                "class {missing} has no samples"
            )));
        }
        Ok(data)
    }

    fn unchecked_classes(
        features: Array2<f64>,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        if n_classes == 0 {
            return Err(Error::InvalidDataset("n_classes must be positive".into()));
        }
        if features.nrows() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidDataset(format!(
                "label {bad} is not below n_classes = {n_classes}"
            )));
        }
        if let Some(((r, c), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite value at row {r}, column {c}"
            )));
        }
        let features = features.as_standard_layout().into_owned();
        let row_ids = (0..labels.len()).collect();
        Ok(Self {
            features,
            labels,
            n_classes,
            feature_names: None,
            row_ids,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: names.len(),
            });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Row ids in the dataset this one was cut from (identity for fresh data).
    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features
            .row(i)
            .to_slice()
            .expect("features are stored in standard layout")
    }

    pub fn row_view(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.len()).map(move |i| self.row(i))
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// The rows at `rows`, in the given order. Keeps `n_classes` even if a
    /// class ends up absent; row ids refer to the original source.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        let features = self.features.select(ndarray::Axis(0), rows);
        Dataset {
            features,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            n_classes: self.n_classes,
            feature_names: self.feature_names.clone(),
            row_ids: rows.iter().map(|&r| self.row_ids[r]).collect(),
        }
    }

    /// Same rows and labels with a transformed feature matrix.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Dataset> {
        if features.dim() != self.features.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.features.len(),
                found: features.len(),
            });
        }
        let mut out = Self::unchecked_classes(features, self.labels.clone(), self.n_classes)?;
        out.feature_names = self.feature_names.clone();
        out.row_ids = self.row_ids.clone();
        Ok(out)
    }
}

/// Which CSV column holds the class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
    /// The last column of the file.
    Last,
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// Digits select a column index, `last` the final column, anything else a header name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        Ok(if s.eq_ignore_ascii_case("last") {
            LabelColumn::Last
        } else if let Ok(i) = s.parse() {
            LabelColumn::Index(i)
        } else {
            LabelColumn::Name(s.to_string())
        })
    }
}

/// Loads a comma-separated file.
///
/// The first row is a header iff one of its non-label cells is not a
/// number, or the label column is selected by name. Labels are re-encoded
/// as `0..L` in order of first appearance. Row and column numbers in parse
/// errors are 1-based positions in the file.
pub fn load_csv(path: impl AsRef<Path>, label_column: &LabelColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, label_column)
}

pub fn read_csv<R: std::io::Read>(reader: R, label_column: &LabelColumn) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let records = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
    let Some(first) = records.first() else {
        return Err(Error::InvalidDataset("empty file".into()));
    };
    let width = first.len();
    if width < 2 {
        return Err(Error::InvalidDataset(
            "need at least one feature column and a label column".into(),
        ));
    }

    let is_number = |s: &str| s.parse::<f64>().is_ok();
    let (label_idx, has_header) = match label_column {
        LabelColumn::Name(name) => {
            let idx = first
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::InvalidDataset(format!("no header column named {name:?}")))?;
            (idx, true)
        }
        LabelColumn::Index(i) => {
            if *i >= width {
                return Err(Error::InvalidDataset(format!(
                    "label column {i} out of range for {width} columns"
                )));
            }
            let header = first
                .iter()
                .enumerate()
                .any(|(c, cell)| c != *i && !is_number(cell));
            (*i, header)
        }
        LabelColumn::Last => {
            let i = width - 1;
            let header = first
                .iter()
                .enumerate()
                .any(|(c, cell)| c != i && !is_number(cell));
            (i, header)
        }
    };

    let names: Option<Vec<String>> = has_header.then(|| {
        first
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != label_idx)
            .map(|(_, s)| s.to_string())
            .collect()
    });
    let body = if has_header {
        &records[1..]
    } else {
        &records[..]
    };
    let n_features = width - 1;
    let mut values = Vec::with_capacity(body.len() * n_features);
    let mut encoding: HashMap<String, usize> = HashMap::new();
    let mut labels = Vec::with_capacity(body.len());
    let row_offset = if has_header { 2 } else { 1 };

    for (r, rec) in body.iter().enumerate() {
        for (c, cell) in rec.iter().enumerate() {
            if c == label_idx {
                let next = encoding.len();
                labels.push(*encoding.entry(cell.to_string()).or_insert(next));
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    row: r + row_offset,
                    column: c + 1,
                    value: cell.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row: r + row_offset,
                        column: c + 1,
                        value: cell.to_string(),
                    });
                }
                values.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::InvalidDataset("no data rows".into()));
    }
    if encoding.len() < 2 {
        return Err(Error::SingleClass);
    }
    let features = Array2::from_shape_vec((labels.len(), n_features), values)
        .map_err(|e| Error::InvalidDataset(e.to_string()))?;
    let data = Dataset::new(features, labels, encoding.len())?;
    match names {
        Some(n) => data.with_feature_names(n),
        None => Ok(data),
    }
}

/// Per-class row counts for each part: cumulative boundaries rounded per
/// class, then every part bumped to at least one row by taking from the
/// part with the largest surplus.
fn stratum_counts(class_size: usize, fractions: &[f64]) -> Vec<usize> {
    let n = class_size as f64;
    let mut cumulative = 0.0;
    let mut prev = 0usize;
    let mut counts = Vec::with_capacity(fractions.len());
    for (p, f) in fractions.iter().enumerate() {
        cumulative += f;
        let bound = if p + 1 == fractions.len() {
            class_size
        } else {
            ((cumulative * n).round() as usize).clamp(prev, class_size)
        };
        counts.push(bound - prev);
        prev = bound;
    }
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let donor = (0..counts.len())
            .filter(|&p| counts[p] > 1)
            .max_by(|&a, &b| {
                let sa = counts[a] as f64 - fractions[a] * n;
                let sb = counts[b] as f64 - fractions[b] * n;
                sa.total_cmp(&sb).then(b.cmp(&a))
            })
            .expect("class size is at least the number of parts");
        counts[donor] -= 1;
        counts[empty] += 1;
    }
    counts
}

fn validate_fractions(fractions: &[f64]) -> Result<()> {
    if fractions.is_empty() {
        return Err(Error::InvalidParameter("no split fractions given".into()));
    }
    if fractions.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "split fractions must be positive: {fractions:?}"
        )));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "split fractions sum to {total}, not 1"
        )));
    }
    Ok(())
}

/// Splits row indices `0..labels.len()` into stratified parts.
pub(crate) fn stratified_indices(
    labels: &[usize],
    n_classes: usize,
    fractions: &[f64],
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    validate_fractions(fractions)?;
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = seed::rng(seed);
    let mut parts = vec![Vec::new(); fractions.len()];
    for (class, mut rows) in by_class.into_iter().enumerate() {
        if rows.len() < fractions.len() {
            return Err(Error::ClassTooSmall {
                class,
                count: rows.len(),
                parts: fractions.len(),
            });
        }
        rows.shuffle(&mut rng);
        let mut start = 0;
        for (p, count) in stratum_counts(rows.len(), fractions)
            .into_iter()
            .enumerate()
        {
            parts[p].extend_from_slice(&rows[start..start + count]);
            start += count;
        }
    }
    for part in &mut parts {
        part.sort_unstable();
    }
    Ok(parts)
}

/// Stratified random split. Each part keeps the source row order and, per
/// class, holds within one sample of `fraction * class_size` rows.
pub fn stratified_split(data: &Dataset, fractions: &[f64], seed: u64) -> Result<Vec<Dataset>> {
    let parts = stratified_indices(data.labels(), data.n_classes(), fractions, seed)?;
    Ok(parts.iter().map(|rows| data.select(rows)).collect())
}

/// The four disjoint sets of the evaluation protocol.
#[derive(Debug, Clone)]
pub struct Partition {
    /// Pool training set.
    pub train: Dataset,
    /// Meta-training set.
    pub meta_train: Dataset,
    /// Dynamic selection set.
    pub dsel: Dataset,
    pub test: Dataset,
}

impl Partition {
    /// 50/25/25 split into training, selection and test data, then the
    /// training half split 50/50 into pool and meta-training data.
    pub fn protocol(data: &Dataset, seed: u64) -> Result<Self> {
        let mut outer = stratified_split(data, &[0.5, 0.25, 0.25], seed::derive_seed(seed, 0))?;
        let test = outer.pop().expect("three parts");
        let dsel = outer.pop().expect("three parts");
        let training = outer.pop().expect("three parts");
        let mut inner = stratified_split(&training, &[0.5, 0.5], seed::derive_seed(seed, 1))?;
        let meta_train = inner.pop().expect("two parts");
        let train = inner.pop().expect("two parts");
        Ok(Self {
            train,
            meta_train,
            dsel,
            test,
        })
    }

    pub fn parts(&self) -> [&Dataset; 4] {
        [&self.train, &self.meta_train, &self.dsel, &self.test]
    }
}

fn two_class(
    n: usize,
    seed: u64,
    sample: impl Fn(usize, &mut rand_chacha::ChaCha8Rng) -> [f64; 2],
) -> Result<Dataset> {
    if n < 4 {
        return Err(Error::InvalidParameter(format!(
            "synthetic datasets need n >= 4, got {n}"
        )));
    }
    let mut rng = seed::rng(seed);
    let n0 = n.div_ceil(2);
    let mut values = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = usize::from(i >= n0);
        values.extend_from_slice(&sample(class, &mut rng));
        labels.push(class);
    }
    let features = Array2::from_shape_vec((n, 2), values).expect("n x 2 values");
    Dataset::new(features, labels, 2)?.with_feature_names(vec!["x1".into(), "x2".into()])
}

/// Radius of the banana arcs.
pub const BANANA_RADIUS: f64 = 5.0;
/// Standard deviation of the isotropic noise added to banana samples.
pub const BANANA_NOISE: f64 = 1.0;

/// Two interleaved banana-shaped classes.
///
/// Class 0 lies on the arc `r (sin t, cos t)` for `t ~ U(π/8, π/8 + 5π/4)`;
/// class 1 on the arc with `t ~ U(3π/8 - 5π/4, 3π/8)` shifted by
/// `(-3r/4, -3r/4)`. Both get `N(0, σ² I)` noise, with `r = 5`, `σ = 1`.
pub fn generate_banana(n: usize, seed: u64) -> Result<Dataset> {
    generate_banana_with_noise(n, BANANA_NOISE, seed)
}

pub fn generate_banana_with_noise(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise must be >= 0, got {noise}"
        )));
    }
    let gauss = Normal::new(0.0, noise).expect("finite non-negative sd");
    let r = BANANA_RADIUS;
    two_class(n, seed, |class, rng| {
        let u: f64 = rng.random();
        let (t, shift) = if class == 0 {
            (0.125 * PI + u * 1.25 * PI, 0.0)
        } else {
            (0.375 * PI - u * 1.25 * PI, -0.75 * r)
        };
        [
            r * t.sin() + shift + gauss.sample(rng),
            r * t.cos() + shift + gauss.sample(rng),
        ]
    })
}

/// Two classes along parallel parabolic spines with different spreads.
///
/// With `u ~ U(-6, 6)`, class 0 is `(u, 0.12 u²) + N(0, 0.5² I)` and class 1
/// is `(u, 0.12 u² + 2.5) + N(0, 1.0² I)`.
pub fn generate_lithuanian(n: usize, seed: u64) -> Result<Dataset> {
    let narrow = Normal::new(0.0, 0.5).expect("valid sd");
    let wide = Normal::new(0.0, 1.0).expect("valid sd");
    two_class(n, seed, |class, rng| {
        let u: f64 = rng.random_range(-6.0..6.0);
        let spine = 0.12 * u * u;
        if class == 0 {
            [u + narrow.sample(rng), spine + narrow.sample(rng)]
        } else {
            [u + wide.sample(rng), spine + 2.5 + wide.sample(rng)]
        }
    })
}

/// Looks up a bundled generator by name.
pub fn generate(name: &str, n: usize, seed: u64) -> Result<Dataset> {
    match name.to_ascii_lowercase().as_str() {
        "banana" => generate_banana(n, seed),
        "lithuanian" => generate_lithuanian(n, seed),
        other => Err(Error::InvalidParameter(format!(
            "unknown synthetic dataset {other:?} (expected banana or lithuanian)"
        ))),
    }
}
