//! Classical dynamic selection rules used for comparison.
//!
//! With θ the K nearest selection-set neighbors of the query and
//! `correct_i(k)` whether member `i` labels neighbor `k` correctly:
//!
//! * KNORA-E: members with `correct_i(k)` for every k in θ vote equally;
//!   K shrinks until some member qualifies (at 0, the whole pool votes).
//! * KNORA-U: member `i` votes with weight `Σ_k correct_i(k)`.
//! * OLA: the single member maximising `mean_k correct_i(k)`.
//! * LCA: the single member maximising accuracy over neighbors whose true
//!   class equals the member's own prediction for the query (0 if none).
//! * MLA: LCA with each neighbor weighted by `1 / (d_k + ε)`.
//! * MCB: OLA restricted to neighbors whose output profile agrees with the
//!   query's on at least a `threshold` fraction of members.
//! * KNOP: KNORA-U over the K most similar output profiles instead of θ.
//!
//! Single-member rules break score ties towards the lower member index.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::base::Pool;
use crate::descore::{
    majority_vote, pool_majority_vote, weighted_majority_vote, Decision, MemberOutputs,
};
use crate::error::{Error, Result};
use crate::region::{
    output_profile, OutputProfile, ProfileNeighborhood, ReferenceSet, RegionOfCompetence,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Baseline {
    #[serde(rename = "KNORA-E")]
    KnoraEliminate,
    #[serde(rename = "KNORA-U")]
    KnoraUnion,
    #[serde(rename = "OLA")]
    Ola,
    #[serde(rename = "LCA")]
    Lca,
    #[serde(rename = "MLA")]
    Mla,
    #[serde(rename = "MCB")]
    Mcb,
    #[serde(rename = "KNOP")]
    Knop,
}

impl Baseline {
    pub const ALL: [Baseline; 7] = [
        Baseline::KnoraEliminate,
        Baseline::KnoraUnion,
        Baseline::Ola,
        Baseline::Lca,
        Baseline::Mla,
        Baseline::Mcb,
        Baseline::Knop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::KnoraEliminate => "KNORA-E",
            Baseline::KnoraUnion => "KNORA-U",
            Baseline::Ola => "OLA",
            Baseline::Lca => "LCA",
            Baseline::Mla => "MLA",
            Baseline::Mcb => "MCB",
            Baseline::Knop => "KNOP",
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Baseline::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown baseline {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Region of competence size.
    pub k: usize,
    /// Output-profile neighborhood size for KNOP.
    pub k_profiles: usize,
    /// Minimum profile agreement for MCB.
    pub mcb_threshold: f64,
    /// Distance offset in MLA weights.
    pub mla_epsilon: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            k: 7,
            k_profiles: 7,
            mcb_threshold: 0.7,
            mla_epsilon: 1e-12,
        }
    }
}

/// Everything the baselines need to know about one query.
pub struct QueryContext {
    pub outputs: MemberOutputs,
    pub profile: OutputProfile,
    pub region: RegionOfCompetence,
    pub profile_neighbors: ProfileNeighborhood,
    n_classes: usize,
}

impl QueryContext {
    pub fn new(pool: &Pool, x: &[f64], dsel: &ReferenceSet, cfg: &BaselineConfig) -> Result<Self> {
        let outputs = MemberOutputs::compute(pool, x);
        let profile = OutputProfile {
            entries: outputs.decisions.clone(),
        };
        debug_assert_eq!(profile, output_profile(pool, x));
        let region = dsel.region(x, cfg.k, None)?;
        let profile_neighbors = dsel.profile_neighbors(&profile, cfg.k_profiles, None)?;
        Ok(Self {
            outputs,
            profile,
            region,
            profile_neighbors,
            n_classes: pool.n_classes(),
        })
    }

    fn n_members(&self) -> usize {
        self.outputs.decisions.len()
    }
}

pub fn decide(
    baseline: Baseline,
    ctx: &QueryContext,
    dsel: &ReferenceSet,
    cfg: &BaselineConfig,
) -> Decision {
    match baseline {
        Baseline::KnoraEliminate => knora_e_rule(ctx, dsel),
        Baseline::KnoraUnion => union_vote(ctx, dsel, &ctx.region.neighbor_ids),
        Baseline::Ola => ola_rule(ctx, dsel, &ctx.region.neighbor_ids, false),
        Baseline::Lca => local_class_accuracy(ctx, dsel, None),
        Baseline::Mla => local_class_accuracy(ctx, dsel, Some(cfg.mla_epsilon)),
        Baseline::Mcb => mcb_rule(ctx, dsel, cfg.mcb_threshold),
        Baseline::Knop => union_vote(ctx, dsel, &ctx.profile_neighbors.profile_ids),
    }
}

fn vote_among(ctx: &QueryContext, members: &[usize]) -> usize {
    let labels: Vec<usize> = members.iter().map(|&i| ctx.outputs.decisions[i]).collect();
    let post = ctx.outputs.mean_posteriors(members);
    majority_vote(&labels, Some(&post), ctx.n_classes)
}

fn knora_e_rule(ctx: &QueryContext, dsel: &ReferenceSet) -> Decision {
    let ids = &ctx.region.neighbor_ids;
    let correct_count =
        |i: usize, k: usize| ids[..k].iter().filter(|&&n| dsel.is_correct(n, i)).count();
    let scores: Vec<f64> = (0..ctx.n_members())
        .map(|i| correct_count(i, ids.len()) as f64)
        .collect();
    for k in (1..=ids.len()).rev() {
        let selected: Vec<usize> = (0..ctx.n_members())
            .filter(|&i| correct_count(i, k) == k)
            .collect();
        if !selected.is_empty() {
            return Decision {
                label: vote_among(ctx, &selected),
                selected,
                scores,
                fallback: k < ids.len(),
            };
        }
    }
    Decision {
        scores,
        fallback: true,
        ..pool_majority_vote(&ctx.outputs, ctx.n_classes)
    }
}

fn union_vote(ctx: &QueryContext, dsel: &ReferenceSet, neighbors: &[usize]) -> Decision {
    let weights: Vec<f64> = (0..ctx.n_members())
        .map(|i| neighbors.iter().filter(|&&n| dsel.is_correct(n, i)).count() as f64)
        .collect();
    let selected: Vec<usize> = (0..ctx.n_members()).filter(|&i| weights[i] > 0.0).collect();
    if selected.is_empty() {
        return Decision {
            scores: weights,
            fallback: true,
            ..pool_majority_vote(&ctx.outputs, ctx.n_classes)
        };
    }
    let post = ctx.outputs.mean_posteriors(&selected);
    Decision {
        label: weighted_majority_vote(&ctx.outputs.decisions, &weights, Some(&post), ctx.n_classes),
        selected,
        scores: weights,
        fallback: false,
    }
}

fn best_single(ctx: &QueryContext, scores: Vec<f64>, fallback: bool) -> Decision {
    let best = crate::base::argmax(&scores);
    Decision {
        label: ctx.outputs.decisions[best],
        selected: vec![best],
        scores,
        fallback,
    }
}

fn ola_rule(
    ctx: &QueryContext,
    dsel: &ReferenceSet,
    neighbors: &[usize],
    fallback: bool,
) -> Decision {
    let scores = (0..ctx.n_members())
        .map(|i| {
            let hits = neighbors.iter().filter(|&&n| dsel.is_correct(n, i)).count();
            hits as f64 / neighbors.len() as f64
        })
        .collect();
    best_single(ctx, scores, fallback)
}

fn local_class_accuracy(ctx: &QueryContext, dsel: &ReferenceSet, epsilon: Option<f64>) -> Decision {
    let ids = &ctx.region.neighbor_ids;
    let scores = (0..ctx.n_members())
        .map(|i| {
            let predicted = ctx.outputs.decisions[i];
            let (mut hit, mut total) = (0.0, 0.0);
            for (&n, &d) in ids.iter().zip(&ctx.region.distances) {
                if dsel.data().label(n) != predicted {
                    continue;
                }
                let w = epsilon.map_or(1.0, |e| 1.0 / (d + e));
                total += w;
                if dsel.is_correct(n, i) {
                    hit += w;
                }
            }
            if total > 0.0 {
                hit / total
            } else {
                0.0
            }
        })
        .collect();
    best_single(ctx, scores, false)
}

fn mcb_rule(ctx: &QueryContext, dsel: &ReferenceSet, threshold: f64) -> Decision {
    let m = ctx.n_members() as f64;
    let filtered: Vec<usize> = ctx
        .region
        .neighbor_ids
        .iter()
        .copied()
        .filter(|&n| {
            let agree = ctx.profile.len() - ctx.profile.disagreements(&dsel.profiles()[n]);
            agree as f64 / m >= threshold
        })
        .collect();
    if filtered.is_empty() {
        ola_rule(ctx, dsel, &ctx.region.neighbor_ids, true)
    } else {
        ola_rule(ctx, dsel, &filtered, false)
    }
}

fn run(
    baseline: Baseline,
    pool: &Pool,
    x: &[f64],
    dsel: &ReferenceSet,
    cfg: &BaselineConfig,
) -> Result<usize> {
    let ctx = QueryContext::new(pool, x, dsel, cfg)?;
    Ok(decide(baseline, &ctx, dsel, cfg).label)
}

fn with_k(k: usize) -> BaselineConfig {
    BaselineConfig {
        k,
        k_profiles: k,
        ..Default::default()
    }
}

pub fn knora_eliminate(pool: &Pool, x: &[f64], dsel: &ReferenceSet, k: usize) -> Result<usize> {
    run(Baseline::KnoraEliminate, pool, x, dsel, &with_k(k))
}

pub fn knora_union(pool: &Pool, x: &[f64], dsel: &ReferenceSet, k: usize) -> Result<usize> {
    run(Baseline::KnoraUnion, pool, x, dsel, &with_k(k))
}

pub fn ola(pool: &Pool, x: &[f64], dsel: &ReferenceSet, k: usize) -> Result<usize> {
    run(Baseline::Ola, pool, x, dsel, &with_k(k))
}

pub fn lca(pool: &Pool, x: &[f64], dsel: &ReferenceSet, k: usize) -> Result<usize> {
    run(Baseline::Lca, pool, x, dsel, &with_k(k))
}

pub fn mla(pool: &Pool, x: &[f64], dsel: &ReferenceSet, k: usize) -> Result<usize> {
    run(Baseline::Mla, pool, x, dsel, &with_k(k))
}

pub fn mcb(
    pool: &Pool,
    x: &[f64],
    dsel: &ReferenceSet,
    k: usize,
    similarity_threshold: f64,
) -> Result<usize> {
    let cfg = BaselineConfig {
        mcb_threshold: similarity_threshold,
        ..with_k(k)
    };
    run(Baseline::Mcb, pool, x, dsel, &cfg)
}

pub fn knop(pool: &Pool, x: &[f64], dsel: &ReferenceSet, k_profiles: usize) -> Result<usize> {
    let cfg = BaselineConfig {
        k: 1,
        k_profiles,
        ..Default::default()
    };
    run(Baseline::Knop, pool, x, dsel, &cfg)
}
