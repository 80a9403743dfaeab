//! Generalization phase: per-query competence estimation and the three
//! combination rules.
//!
//! * Selection: members with `δ > Υ` vote with equal weight.
//! * Weighting: every member votes with weight `δ`.
//! * Hybrid: members with `δ > Υ` vote with weight `δ`.
//!
//! When no member clears `Υ`, selection and hybrid fall back to the single
//! member with the highest competence.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::{argmax, Pool};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metaclassifier::CompetenceModel;
use crate::metafeatures::{extract_with_target, MetaVector, PosteriorTarget};
use crate::region::{output_profile, ReferenceSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "S")]
    Selection,
    #[serde(rename = "W")]
    Weighting,
    #[serde(rename = "H")]
    Hybrid,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Selection, Mode::Weighting, Mode::Hybrid];

    pub fn method_name(self) -> &'static str {
        match self {
            Mode::Selection => "META-DES.S",
            Mode::Weighting => "META-DES.W",
            Mode::Hybrid => "META-DES.H",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Selection => "S",
            Mode::Weighting => "W",
            Mode::Hybrid => "H",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "S" | "META-DES.S" => Ok(Mode::Selection),
            "W" | "META-DES.W" => Ok(Mode::Weighting),
            "H" | "META-DES.H" => Ok(Mode::Hybrid),
            other => Err(Error::InvalidParameter(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesConfig {
    pub k: usize,
    pub k_p: usize,
    pub h_c: f64,
    /// Competence threshold Υ.
    pub upsilon: f64,
    pub mode: Mode,
    pub posterior_target: PosteriorTarget,
}

impl Default for DesConfig {
    fn default() -> Self {
        Self {
            k: 7,
            k_p: 5,
            h_c: 0.7,
            upsilon: 0.5,
            mode: Mode::Hybrid,
            posterior_target: PosteriorTarget::TrueClass,
        }
    }
}

impl DesConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k_p == 0 {
            return Err(Error::InvalidParameter(
                "K and K_p must be at least 1".into(),
            ));
        }
        for (name, v) in [("h_C", self.h_c), ("upsilon", self.upsilon)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in (0, 1), got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn with_mode(self, mode: Mode) -> Self {
        Self { mode, ..self }
    }
}

/// Competence of every pool member for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetenceProfile {
    pub deltas: Vec<f64>,
    pub query_id: usize,
}

/// Outcome of a dynamic selection rule for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub label: usize,
    /// Members whose votes counted.
    pub selected: Vec<usize>,
    /// Per-member competence estimates behind the choice.
    pub scores: Vec<f64>,
    /// True when the rule's fallback path decided.
    pub fallback: bool,
}

/// One JSON-lines diagnostics record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub method: String,
    pub query: usize,
    pub selected: Vec<usize>,
    pub scores: Vec<f64>,
    pub predicted: usize,
    pub true_label: usize,
    pub fallback: bool,
}

/// Members' decisions and supports for one query sample.
#[derive(Debug, Clone)]
pub struct MemberOutputs {
    pub decisions: Vec<usize>,
    pub supports: Vec<Vec<f64>>,
}

impl MemberOutputs {
    pub fn compute(pool: &Pool, x: &[f64]) -> Self {
        let supports: Vec<Vec<f64>> = pool.members().iter().map(|m| m.supports(x)).collect();
        let decisions = supports.iter().map(|s| argmax(s)).collect();
        Self {
            decisions,
            supports,
        }
    }

    /// Mean posterior per class over the given members.
    pub fn mean_posteriors(&self, members: &[usize]) -> Vec<f64> {
        let l = self.supports.first().map_or(0, Vec::len);
        let mut mean = vec![0.0; l];
        for &i in members {
            for (m, s) in mean.iter_mut().zip(&self.supports[i]) {
                *m += s;
            }
        }
        if !members.is_empty() {
            mean.iter_mut().for_each(|m| *m /= members.len() as f64);
        }
        mean
    }
}

fn resolve(sums: &[f64], tiebreak: Option<&[f64]>) -> usize {
    let best = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..sums.len()).filter(|&c| sums[c] == best).collect();
    match tiebreak {
        Some(post) if tied.len() > 1 => {
            let mut winner = tied[0];
            for &c in &tied[1..] {
                if post[c] > post[winner] {
                    winner = c;
                }
            }
            winner
        }
        _ => tied[0],
    }
}

/// Plurality vote. Vote ties go to the tied class with the highest value in
/// `tiebreak` (mean posterior of the voters), then to the lowest index.
pub fn majority_vote(labels: &[usize], tiebreak: Option<&[f64]>, n_classes: usize) -> usize {
    let mut counts = vec![0.0; n_classes];
    for &l in labels {
        counts[l] += 1.0;
    }
    resolve(&counts, tiebreak)
}

/// Arg-max of summed weights per class, with the same tie rules as [`majority_vote`].
pub fn weighted_majority_vote(
    labels: &[usize],
    weights: &[f64],
    tiebreak: Option<&[f64]>,
    n_classes: usize,
) -> usize {
    let mut sums = vec![0.0; n_classes];
    for (&l, &w) in labels.iter().zip(weights) {
        sums[l] += w;
    }
    resolve(&sums, tiebreak)
}

/// Whole-pool majority vote with posterior tie-breaking.
pub fn pool_majority_vote(outputs: &MemberOutputs, n_classes: usize) -> Decision {
    let all: Vec<usize> = (0..outputs.decisions.len()).collect();
    let post = outputs.mean_posteriors(&all);
    Decision {
        label: majority_vote(&outputs.decisions, Some(&post), n_classes),
        selected: all,
        scores: Vec::new(),
        fallback: false,
    }
}

/// Applies a combination rule to given competences.
pub fn combine(
    mode: Mode,
    upsilon: f64,
    outputs: &MemberOutputs,
    deltas: &[f64],
    n_classes: usize,
) -> Decision {
    let all: Vec<usize> = (0..deltas.len()).collect();
    let selected: Vec<usize> = match mode {
        Mode::Weighting => all,
        Mode::Selection | Mode::Hybrid => {
            (0..deltas.len()).filter(|&i| deltas[i] > upsilon).collect()
        }
    };
    if selected.is_empty() {
        let best = argmax(deltas);
        return Decision {
            label: outputs.decisions[best],
            selected: vec![best],
            scores: deltas.to_vec(),
            fallback: true,
        };
    }
    let labels: Vec<usize> = selected.iter().map(|&i| outputs.decisions[i]).collect();
    let post = outputs.mean_posteriors(&selected);
    let label = match mode {
        Mode::Selection => majority_vote(&labels, Some(&post), n_classes),
        Mode::Weighting | Mode::Hybrid => {
            let weights: Vec<f64> = selected.iter().map(|&i| deltas[i]).collect();
            weighted_majority_vote(&labels, &weights, Some(&post), n_classes)
        }
    };
    Decision {
        label,
        selected,
        scores: deltas.to_vec(),
        fallback: false,
    }
}

/// The trained dynamic selector: pool, meta-classifier and the cached
/// dynamic selection set.
pub struct MetaDes<'a> {
    pub pool: &'a Pool,
    pub model: &'a dyn CompetenceModel,
    pub dsel: &'a ReferenceSet,
    pub cfg: DesConfig,
}

impl<'a> MetaDes<'a> {
    pub fn new(
        pool: &'a Pool,
        model: &'a dyn CompetenceModel,
        dsel: &'a ReferenceSet,
        cfg: DesConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let expected = MetaVector::n_features(cfg.k, cfg.k_p);
        if model.n_features() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: model.n_features(),
            });
        }
        Ok(Self {
            pool,
            model,
            dsel,
            cfg,
        })
    }

    /// `δ_i` for every member: region and profile neighbors from the
    /// selection set (no exclusion), one unlabelled meta-vector per member.
    pub fn competences(&self, x: &[f64], query_id: usize) -> Result<CompetenceProfile> {
        let region = self.dsel.region(x, self.cfg.k, None)?;
        let profile = output_profile(self.pool, x);
        let neighbors = self.dsel.profile_neighbors(&profile, self.cfg.k_p, None)?;
        let mut buf = Vec::with_capacity(self.model.n_features());
        let deltas = (0..self.pool.len())
            .map(|i| {
                let v = extract_with_target(
                    i,
                    self.pool,
                    x,
                    None,
                    &region,
                    self.dsel,
                    &neighbors,
                    self.cfg.posterior_target,
                    query_id,
                )?;
                buf.clear();
                v.write_features(&mut buf);
                Ok(self.model.competence(&buf))
            })
            .collect::<Result<_>>()?;
        Ok(CompetenceProfile { deltas, query_id })
    }

    pub fn classify_query(&self, x: &[f64]) -> Result<Decision> {
        let profile = self.competences(x, 0)?;
        let outputs = MemberOutputs::compute(self.pool, x);
        Ok(combine(
            self.cfg.mode,
            self.cfg.upsilon,
            &outputs,
            &profile.deltas,
            self.pool.n_classes(),
        ))
    }

    /// Decisions of several modes from a single competence estimate.
    pub fn classify_modes(&self, x: &[f64], modes: &[Mode]) -> Result<Vec<Decision>> {
        let profile = self.competences(x, 0)?;
        let outputs = MemberOutputs::compute(self.pool, x);
        Ok(modes
            .iter()
            .map(|&m| {
                combine(
                    m,
                    self.cfg.upsilon,
                    &outputs,
                    &profile.deltas,
                    self.pool.n_classes(),
                )
            })
            .collect())
    }
}

pub fn estimate_competences(
    pool: &Pool,
    model: &dyn CompetenceModel,
    x: &[f64],
    dsel: &ReferenceSet,
    cfg: &DesConfig,
) -> Result<CompetenceProfile> {
    MetaDes::new(pool, model, dsel, *cfg)?.competences(x, 0)
}

pub fn classify_query(
    pool: &Pool,
    model: &dyn CompetenceModel,
    x: &[f64],
    dsel: &ReferenceSet,
    cfg: &DesConfig,
) -> Result<Decision> {
    MetaDes::new(pool, model, dsel, *cfg)?.classify_query(x)
}

/// Accuracy and per-query records of one method on a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub method: String,
    pub accuracy: f64,
    pub records: Vec<QueryRecord>,
}

/// Runs a per-query decision rule over `test` in parallel; records keep test order.
pub fn evaluate_with<F>(method: &str, test: &Dataset, decide: F) -> Result<Evaluation>
where
    F: Fn(&[f64]) -> Result<Decision> + Sync,
{
    let records: Vec<QueryRecord> = (0..test.len())
        .into_par_iter()
        .map(|j| {
            let d = decide(test.row(j))?;
            Ok(QueryRecord {
                method: method.to_string(),
                query: j,
                selected: d.selected,
                scores: d.scores,
                predicted: d.label,
                true_label: test.label(j),
                fallback: d.fallback,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Evaluation {
        method: method.to_string(),
        accuracy: accuracy(&records),
        records,
    })
}

pub(crate) fn accuracy(records: &[QueryRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let hits = records
        .iter()
        .filter(|r| r.predicted == r.true_label)
        .count();
    hits as f64 / records.len() as f64
}

/// Accuracy of one META-DES mode on `test`, using `dsel` as the selection set.
pub fn evaluate(
    pool: &Pool,
    model: &dyn CompetenceModel,
    test: &Dataset,
    dsel: &ReferenceSet,
    cfg: &DesConfig,
) -> Result<Evaluation> {
    let des = MetaDes::new(pool, model, dsel, *cfg)?;
    evaluate_with(cfg.mode.method_name(), test, |x| des.classify_query(x))
}

/// Evaluates several modes, estimating competences once per query.
pub fn evaluate_modes(
    des: &MetaDes<'_>,
    test: &Dataset,
    modes: &[Mode],
) -> Result<Vec<Evaluation>> {
    let per_query: Vec<Vec<Decision>> = (0..test.len())
        .into_par_iter()
        .map(|j| des.classify_modes(test.row(j), modes))
        .collect::<Result<_>>()?;
    Ok(modes
        .iter()
        .enumerate()
        .map(|(m, mode)| {
            let records: Vec<QueryRecord> = per_query
                .iter()
                .enumerate()
                .map(|(j, ds)| QueryRecord {
                    method: mode.method_name().to_string(),
                    query: j,
                    selected: ds[m].selected.clone(),
                    scores: ds[m].scores.clone(),
                    predicted: ds[m].label,
                    true_label: test.label(j),
                    fallback: ds[m].fallback,
                })
                .collect();
            Evaluation {
                method: mode.method_name().to_string(),
                accuracy: accuracy(&records),
                records,
            }
        })
        .collect())
}
