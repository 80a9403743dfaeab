//! Consensus-based sample selection and meta-feature extraction.
//!
//! For a classifier `c_i` and a sample `x_j` the meta-feature vector holds,
//! in order:
//!
//! * `f1` (K values): 1 where `c_i` labels the k-th feature-space neighbor correctly;
//! * `f2` (K values): the support `c_i` gives to that neighbor's class;
//! * `f3` (1 value): the mean of `f1`, i.e. local accuracy;
//! * `f4` (K_p values): 1 where `c_i` labels the k-th output-profile neighbor correctly;
//! * `f5` (1 value): distance from `x_j` to the decision boundary of `c_i`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::Pool;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::region::{OutputProfile, ProfileNeighborhood, ReferenceSet, RegionOfCompetence};

/// Which class the `f2` posterior is read for.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum PosteriorTarget {
    /// The neighbor's true class.
    #[default]
    TrueClass,
    /// The class the classifier predicts for the neighbor.
    PredictedClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaVector {
    pub f1: Vec<bool>,
    pub f2: Vec<f64>,
    pub f3: f64,
    pub f4: Vec<bool>,
    pub f5: f64,
    /// Meta-class: `Some(true)` when the classifier labels the sample correctly.
    pub label: Option<bool>,
    pub classifier_id: usize,
    pub sample_id: usize,
}

impl MetaVector {
    pub fn n_features(k: usize, k_p: usize) -> usize {
        2 * k + k_p + 2
    }

    pub fn len(&self) -> usize {
        Self::n_features(self.f1.len(), self.f4.len())
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `f1 ∪ f2 ∪ f3 ∪ f4 ∪ f5` as numbers.
    pub fn features(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        self.write_features(&mut out);
        out
    }

    pub fn write_features(&self, out: &mut Vec<f64>) {
        let bit = |b: &bool| if *b { 1.0 } else { 0.0 };
        out.extend(self.f1.iter().map(bit));
        out.extend_from_slice(&self.f2);
        out.push(self.f3);
        out.extend(self.f4.iter().map(bit));
        out.push(self.f5);
    }
}

/// Extraction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaParams {
    /// Region of competence size.
    pub k: usize,
    /// Output-profile neighborhood size.
    pub k_p: usize,
    /// Consensus threshold.
    pub h_c: f64,
    pub posterior_target: PosteriorTarget,
}

impl Default for MetaParams {
    fn default() -> Self {
        Self {
            k: 7,
            k_p: 5,
            h_c: 0.7,
            posterior_target: PosteriorTarget::TrueClass,
        }
    }
}

impl MetaParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k_p == 0 {
            return Err(Error::InvalidParameter(
                "K and K_p must be at least 1".into(),
            ));
        }
        if !(self.h_c > 0.0 && self.h_c <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "consensus threshold must lie in (0, 1], got {}",
                self.h_c
            )));
        }
        Ok(())
    }
}

/// Fraction of votes won by the plurality class of a profile.
pub fn profile_consensus(profile: &OutputProfile, n_classes: usize) -> f64 {
    let mut votes = vec![0usize; n_classes];
    for &e in &profile.entries {
        votes[e] += 1;
    }
    let top = votes.into_iter().max().unwrap_or(0);
    top as f64 / profile.len() as f64
}

/// Degree of consensus of the pool on `x`, in `(0, 1]`.
pub fn consensus_degree(pool: &Pool, x: &[f64]) -> f64 {
    profile_consensus(&crate::region::output_profile(pool, x), pool.n_classes())
}

/// Rows of `data` whose pool consensus is strictly below `h_c`.
pub fn select_meta_training_samples(pool: &Pool, data: &Dataset, h_c: f64) -> Vec<usize> {
    (0..data.len())
        .filter(|&j| consensus_degree(pool, data.row(j)) < h_c)
        .collect()
}

fn select_from_reference(reference: &ReferenceSet, n_classes: usize, h_c: f64) -> Vec<usize> {
    reference
        .profiles()
        .iter()
        .enumerate()
        .filter(|(_, p)| profile_consensus(p, n_classes) < h_c)
        .map(|(j, _)| j)
        .collect()
}

/// Meta-feature vector of pool member `c_index` for query `x`.
///
/// `region` and `profiles` index rows of `reference`. With `true_label`
/// the vector is labelled competent iff the member classifies `x` correctly.
pub fn extract_meta_vector(
    c_index: usize,
    pool: &Pool,
    x: &[f64],
    true_label: Option<usize>,
    region: &RegionOfCompetence,
    reference: &ReferenceSet,
    profiles: &ProfileNeighborhood,
) -> Result<MetaVector> {
    extract_with_target(
        c_index,
        pool,
        x,
        true_label,
        region,
        reference,
        profiles,
        PosteriorTarget::TrueClass,
        0,
    )
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn extract_with_target(
    c_index: usize,
    pool: &Pool,
    x: &[f64],
    true_label: Option<usize>,
    region: &RegionOfCompetence,
    reference: &ReferenceSet,
    profiles: &ProfileNeighborhood,
    target: PosteriorTarget,
    sample_id: usize,
) -> Result<MetaVector> {
    if region.neighbor_ids.len() != region.distances.len() {
        return Err(Error::DimensionMismatch {
            expected: region.neighbor_ids.len(),
            found: region.distances.len(),
        });
    }
    if profiles.profile_ids.len() != profiles.labels.len() {
        return Err(Error::DimensionMismatch {
            expected: profiles.profile_ids.len(),
            found: profiles.labels.len(),
        });
    }
    if c_index >= pool.len() {
        return Err(Error::InvalidParameter(format!(
            "classifier {c_index} outside a pool of {}",
            pool.len()
        )));
    }
    let member = pool.member(c_index);
    let f1: Vec<bool> = region
        .neighbor_ids
        .iter()
        .map(|&k| reference.is_correct(k, c_index))
        .collect();
    let f2: Vec<f64> = region
        .neighbor_ids
        .iter()
        .map(|&k| match target {
            PosteriorTarget::TrueClass => reference.true_class_support(k, c_index),
            PosteriorTarget::PredictedClass => {
                member.supports(reference.data().row(k))[reference.decision(k, c_index)]
            }
        })
        .collect();
    let f3 = if f1.is_empty() {
        0.0
    } else {
        f1.iter().filter(|&&b| b).count() as f64 / f1.len() as f64
    };
    let f4: Vec<bool> = profiles
        .profile_ids
        .iter()
        .zip(&profiles.labels)
        .map(|(&k, &label)| reference.decision(k, c_index) == label)
        .collect();
    let (decision, f5) = {
        let d = member.classify(x);
        (d, member.decision_distance(x))
    };
    Ok(MetaVector {
        f1,
        f2,
        f3,
        f4,
        f5,
        label: true_label.map(|t| t == decision),
        classifier_id: c_index,
        sample_id,
    })
}

/// The labelled meta-training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaDataset {
    pub vectors: Vec<MetaVector>,
    pub k: usize,
    pub k_p: usize,
}

impl MetaDataset {
    pub fn new(vectors: Vec<MetaVector>, k: usize, k_p: usize) -> Result<Self> {
        if let Some(v) = vectors
            .iter()
            .find(|v| v.f1.len() != k || v.f4.len() != k_p)
        {
            return Err(Error::DimensionMismatch {
                expected: MetaVector::n_features(k, k_p),
                found: v.len(),
            });
        }
        Ok(Self { vectors, k, k_p })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn n_features(&self) -> usize {
        MetaVector::n_features(self.k, self.k_p)
    }

    /// Fraction of vectors in the competent meta-class.
    pub fn competent_fraction(&self) -> f64 {
        let competent = self
            .vectors
            .iter()
            .filter(|v| v.label == Some(true))
            .count();
        competent as f64 / self.len().max(1) as f64
    }

    /// One row per vector: features, then `alpha`, `classifier_id`, `sample_id`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = Vec::with_capacity(self.n_features() + 3);
        header.extend((1..=self.k).map(|k| format!("f1_{k}")));
        header.extend((1..=self.k).map(|k| format!("f2_{k}")));
        header.push("f3".into());
        header.extend((1..=self.k_p).map(|k| format!("f4_{k}")));
        header.push("f5".into());
        header.extend(["alpha", "classifier_id", "sample_id"].map(String::from));
        w.write_record(&header)?;
        for v in &self.vectors {
            let mut row: Vec<String> = v.features().iter().map(f64::to_string).collect();
            row.push(match v.label {
                Some(true) => "1".into(),
                Some(false) => "0".into(),
                None => String::new(),
            });
            row.push(v.classifier_id.to_string());
            row.push(v.sample_id.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}

/// Labelled vectors for the given rows of `reference` and every pool member.
/// Regions and profile neighborhoods come from `reference` itself with the
/// sample's own row excluded. Output is ordered by sample, then member.
pub fn build_meta_dataset_for_samples(
    pool: &Pool,
    reference: &ReferenceSet,
    samples: &[usize],
    params: &MetaParams,
) -> Result<MetaDataset> {
    params.validate()?;
    let per_sample: Vec<Vec<MetaVector>> = samples
        .par_iter()
        .map(|&j| {
            let x = reference.data().row(j);
            let region = reference.region(x, params.k, Some(j))?;
            let profiles =
                reference.profile_neighbors(&reference.profiles()[j], params.k_p, Some(j))?;
            let truth = reference.data().label(j);
            (0..pool.len())
                .map(|i| {
                    extract_with_target(
                        i,
                        pool,
                        x,
                        Some(truth),
                        &region,
                        reference,
                        &profiles,
                        params.posterior_target,
                        reference.data().row_ids()[j],
                    )
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    MetaDataset::new(
        per_sample.into_iter().flatten().collect(),
        params.k,
        params.k_p,
    )
}

/// Selects the low-consensus rows of `meta_train` and extracts a labelled
/// vector for each of them and every member.
pub fn build_meta_dataset(
    pool: &Pool,
    meta_train: &Dataset,
    params: &MetaParams,
) -> Result<MetaDataset> {
    let reference = ReferenceSet::build(pool, meta_train.clone())?;
    build_meta_dataset_from_reference(pool, &reference, params)
}

pub fn build_meta_dataset_from_reference(
    pool: &Pool,
    reference: &ReferenceSet,
    params: &MetaParams,
) -> Result<MetaDataset> {
    params.validate()?;
    let selected = select_from_reference(reference, pool.n_classes(), params.h_c);
    if selected.is_empty() {
        return Err(Error::EmptySelection { h_c: params.h_c });
    }
    build_meta_dataset_for_samples(pool, reference, &selected, params)
}
