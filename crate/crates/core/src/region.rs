//! Regions of competence in feature space and neighborhoods in the
//! decision (output-profile) space.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::Pool;
use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// The K nearest reference rows to a query, closest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionOfCompetence {
    pub neighbor_ids: Vec<usize>,
    pub distances: Vec<f64>,
}

impl RegionOfCompetence {
    pub fn len(&self) -> usize {
        self.neighbor_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbor_ids.is_empty()
    }

    /// The `k` closest entries.
    pub fn truncated(&self, k: usize) -> RegionOfCompetence {
        RegionOfCompetence {
            neighbor_ids: self.neighbor_ids[..k].to_vec(),
            distances: self.distances[..k].to_vec(),
        }
    }
}

/// The decisions of every pool member for one sample.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OutputProfile {
    pub entries: Vec<usize>,
}

impl OutputProfile {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of members whose decisions differ.
    pub fn disagreements(&self, other: &OutputProfile) -> usize {
        self.entries
            .iter()
            .zip(&other.entries)
            .filter(|(a, b)| a != b)
            .count()
    }

    /// Euclidean distance between the one-hot expansions of both profiles:
    /// every disagreement contributes 2 to the squared distance.
    pub fn distance(&self, other: &OutputProfile) -> f64 {
        ((2 * self.disagreements(other)) as f64).sqrt()
    }
}

/// The K reference samples whose output profiles are closest to a query's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileNeighborhood {
    pub profile_ids: Vec<usize>,
    /// True class label of each selected reference sample.
    pub labels: Vec<usize>,
    pub distances: Vec<f64>,
}

impl ProfileNeighborhood {
    pub fn len(&self) -> usize {
        self.profile_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profile_ids.is_empty()
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Keeps the `k` smallest `(distance, index)` pairs in ascending order.
fn k_smallest<D: Copy>(
    mut candidates: Vec<(D, usize)>,
    k: usize,
    cmp: impl Fn(&D, &D) -> Ordering,
) -> Vec<(D, usize)> {
    let order = |a: &(D, usize), b: &(D, usize)| cmp(&a.0, &b.0).then(a.1.cmp(&b.1));
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k, order);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(order);
    candidates
}

/// Brute-force K nearest neighbors of `x` among the rows of `reference`.
/// Ties in distance go to the lower row index; `exclude` drops one row.
pub fn knn_region(
    x: &[f64],
    reference: &Dataset,
    k: usize,
    exclude: Option<usize>,
) -> Result<RegionOfCompetence> {
    if x.len() != reference.n_features() {
        return Err(Error::DimensionMismatch {
            expected: reference.n_features(),
            found: x.len(),
        });
    }
    let available = reference.len() - usize::from(exclude.is_some_and(|e| e < reference.len()));
    if k == 0 || available < k {
        return Err(Error::TooFewReferences {
            needed: k.max(1),
            available,
        });
    }
    let candidates: Vec<(f64, usize)> = reference
        .rows()
        .enumerate()
        .filter(|&(i, _)| Some(i) != exclude)
        .map(|(i, row)| (euclidean(x, row), i))
        .collect();
    let nearest = k_smallest(candidates, k, f64::total_cmp);
    Ok(RegionOfCompetence {
        neighbor_ids: nearest.iter().map(|&(_, i)| i).collect(),
        distances: nearest.iter().map(|&(d, _)| d).collect(),
    })
}

pub fn output_profile(pool: &Pool, x: &[f64]) -> OutputProfile {
    OutputProfile {
        entries: pool.decisions(x),
    }
}

/// The `k_p` reference profiles nearest to `query`, ties to the lower index.
pub fn profile_neighbors(
    query: &OutputProfile,
    reference_profiles: &[OutputProfile],
    reference_labels: &[usize],
    k_p: usize,
    exclude: Option<usize>,
) -> Result<ProfileNeighborhood> {
    if reference_profiles.len() != reference_labels.len() {
        return Err(Error::DimensionMismatch {
            expected: reference_profiles.len(),
            found: reference_labels.len(),
        });
    }
    let available = reference_profiles.len()
        - usize::from(exclude.is_some_and(|e| e < reference_profiles.len()));
    if k_p == 0 || available < k_p {
        return Err(Error::TooFewReferences {
            needed: k_p.max(1),
            available,
        });
    }
    let candidates: Vec<(usize, usize)> = reference_profiles
        .iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != exclude)
        .map(|(i, p)| (query.disagreements(p), i))
        .collect();
    let nearest = k_smallest(candidates, k_p, usize::cmp);
    Ok(ProfileNeighborhood {
        profile_ids: nearest.iter().map(|&(_, i)| i).collect(),
        labels: nearest.iter().map(|&(_, i)| reference_labels[i]).collect(),
        distances: nearest
            .iter()
            .map(|&(d, _)| ((2 * d) as f64).sqrt())
            .collect(),
    })
}

/// A labelled reference set with every pool member's behaviour on it
/// precomputed: decisions (output profiles) and the support each member
/// gives to each row's true class.
#[derive(Debug, Clone)]
pub struct ReferenceSet {
    data: Dataset,
    profiles: Vec<OutputProfile>,
    true_class_supports: Vec<Vec<f64>>,
}

impl ReferenceSet {
    pub fn build(pool: &Pool, data: Dataset) -> Result<Self> {
        if data.n_features() != pool.n_features() {
            return Err(Error::DimensionMismatch {
                expected: pool.n_features(),
                found: data.n_features(),
            });
        }
        let (profiles, true_class_supports) = (0..data.len())
            .into_par_iter()
            .map(|j| {
                let x = data.row(j);
                let truth = data.label(j);
                let mut decisions = Vec::with_capacity(pool.len());
                let mut supports = Vec::with_capacity(pool.len());
                for member in pool.members() {
                    let s = member.supports(x);
                    decisions.push(crate::base::argmax(&s));
                    supports.push(s[truth]);
                }
                (OutputProfile { entries: decisions }, supports)
            })
            .unzip();
        Ok(Self {
            data,
            profiles,
            true_class_supports,
        })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn profiles(&self) -> &[OutputProfile] {
        &self.profiles
    }

    /// Decision of pool member `member` on reference row `row`.
    pub fn decision(&self, row: usize, member: usize) -> usize {
        self.profiles[row].entries[member]
    }

    pub fn is_correct(&self, row: usize, member: usize) -> bool {
        self.decision(row, member) == self.data.label(row)
    }

    /// Support member `member` gives to the true class of row `row`.
    pub fn true_class_support(&self, row: usize, member: usize) -> f64 {
        self.true_class_supports[row][member]
    }

    pub fn region(
        &self,
        x: &[f64],
        k: usize,
        exclude: Option<usize>,
    ) -> Result<RegionOfCompetence> {
        knn_region(x, &self.data, k, exclude)
    }

    pub fn profile_neighbors(
        &self,
        query: &OutputProfile,
        k_p: usize,
        exclude: Option<usize>,
    ) -> Result<ProfileNeighborhood> {
        profile_neighbors(query, &self.profiles, self.data.labels(), k_p, exclude)
    }
}
