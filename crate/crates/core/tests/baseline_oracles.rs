//! Each baseline against a brute-force reimplementation on random instances.

mod common;

use metades_core::base::Pool;
use metades_core::baselines::{decide, Baseline, BaselineConfig, QueryContext};
use metades_core::dataset::Dataset;
use metades_core::metafeatures::extract_meta_vector;
use metades_core::region::{output_profile, ReferenceSet};
use metades_core::seed::rng;
use rand::Rng;

use common::*;

struct Instance {
    pool: Pool,
    data: Dataset,
    x: Vec<f64>,
    l: usize,
}

fn instances(seed: u64, count: usize) -> Vec<Instance> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| {
            let m = r.random_range(1..=9);
            let l = r.random_range(2..=3);
            let d = r.random_range(1..=3);
            let n = r.random_range(15..=40);
            Instance {
                pool: random_pool(&mut r, m, l, d),
                data: random_dataset(&mut r, n, l, d),
                x: (0..d).map(|_| normal(&mut r)).collect(),
                l,
            }
        })
        .collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn nearest(d: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap().then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Query-level facts every oracle needs, computed with plain loops.
struct Facts {
    decisions: Vec<usize>,
    supports: Vec<Vec<f64>>,
    theta: Vec<usize>,
    theta_d: Vec<f64>,
    correct: Vec<Vec<bool>>,
    ref_profiles: Vec<Vec<usize>>,
}

fn facts(inst: &Instance, k: usize) -> Facts {
    let members = inst.pool.members();
    let n = inst.data.len();
    let d: Vec<f64> = (0..n).map(|i| dist(inst.data.row(i), &inst.x)).collect();
    let theta = nearest(&d, k);
    let ref_profiles: Vec<Vec<usize>> = (0..n)
        .map(|j| {
            members
                .iter()
                .map(|c| c.classify(inst.data.row(j)))
                .collect()
        })
        .collect();
    Facts {
        decisions: members.iter().map(|c| c.classify(&inst.x)).collect(),
        supports: members.iter().map(|c| c.supports(&inst.x)).collect(),
        theta_d: theta.iter().map(|&j| d[j]).collect(),
        correct: (0..members.len())
            .map(|i| {
                (0..n)
                    .map(|j| ref_profiles[j][i] == inst.data.label(j))
                    .collect()
            })
            .collect(),
        theta,
        ref_profiles,
    }
}

/// Weighted plurality over `voters`; ties to the highest mean support of the
/// voters, then the lowest class.
fn vote(f: &Facts, voters: &[usize], weights: &[f64], l: usize) -> usize {
    let mut sums = vec![0.0; l];
    for &i in voters {
        sums[f.decisions[i]] += weights[i];
    }
    let mut mean = vec![0.0; l];
    for &i in voters {
        for (m, s) in mean.iter_mut().zip(&f.supports[i]) {
            *m += s;
        }
    }
    for v in &mut mean {
        *v /= voters.len() as f64;
    }
    let top = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut best: Option<usize> = None;
    for c in 0..l {
        if sums[c] == top && best.is_none_or(|b| mean[c] > mean[b]) {
            best = Some(c);
        }
    }
    best.unwrap()
}

fn single(f: &Facts, scores: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    f.decisions[best]
}

fn run(baseline: Baseline, inst: &Instance, cfg: &BaselineConfig) -> usize {
    let dsel = ReferenceSet::build(&inst.pool, inst.data.clone()).unwrap();
    let ctx = QueryContext::new(&inst.pool, &inst.x, &dsel, cfg).unwrap();
    decide(baseline, &ctx, &dsel, cfg).label
}

fn check(
    baseline: Baseline,
    seed: u64,
    oracle: impl Fn(&Instance, &Facts, &BaselineConfig) -> usize,
) {
    let cfg = BaselineConfig::default();
    for (n, inst) in instances(seed, 300).iter().enumerate() {
        let f = facts(inst, cfg.k);
        assert_eq!(
            run(baseline, inst, &cfg),
            oracle(inst, &f, &cfg),
            "{baseline} instance {n}"
        );
    }
}

fn all_voters(f: &Facts) -> Vec<usize> {
    (0..f.decisions.len()).collect()
}

#[test]
fn knora_eliminate_matches_set_construction() {
    check(Baseline::KnoraEliminate, 1, |inst, f, _| {
        let m = f.decisions.len();
        for k in (1..=f.theta.len()).rev() {
            let oracles: Vec<usize> = (0..m)
                .filter(|&i| f.theta[..k].iter().all(|&j| f.correct[i][j]))
                .collect();
            if !oracles.is_empty() {
                return vote(f, &oracles, &vec![1.0; m], inst.l);
            }
        }
        vote(f, &all_voters(f), &vec![1.0; m], inst.l)
    });
}

fn union_oracle(inst: &Instance, f: &Facts, neighbors: &[usize]) -> usize {
    let m = f.decisions.len();
    let counts: Vec<f64> = (0..m)
        .map(|i| neighbors.iter().filter(|&&j| f.correct[i][j]).count() as f64)
        .collect();
    let voters: Vec<usize> = (0..m).filter(|&i| counts[i] > 0.0).collect();
    if voters.is_empty() {
        vote(f, &all_voters(f), &vec![1.0; m], inst.l)
    } else {
        vote(f, &voters, &counts, inst.l)
    }
}

#[test]
fn knora_union_matches_counting() {
    check(Baseline::KnoraUnion, 2, |inst, f, _| {
        union_oracle(inst, f, &f.theta)
    });
}

#[test]
fn ola_equals_mean_of_neighbor_correctness_feature() {
    let cfg = BaselineConfig::default();
    for inst in instances(3, 200) {
        let dsel = ReferenceSet::build(&inst.pool, inst.data.clone()).unwrap();
        let region = dsel.region(&inst.x, cfg.k, None).unwrap();
        let profiles = dsel
            .profile_neighbors(&output_profile(&inst.pool, &inst.x), 5, None)
            .unwrap();
        let ctx = QueryContext::new(&inst.pool, &inst.x, &dsel, &cfg).unwrap();
        let got = decide(Baseline::Ola, &ctx, &dsel, &cfg);
        for i in 0..inst.pool.len() {
            let v = extract_meta_vector(i, &inst.pool, &inst.x, None, &region, &dsel, &profiles)
                .unwrap();
            let mean_f1 = v.f1.iter().filter(|&&b| b).count() as f64 / v.f1.len() as f64;
            assert_eq!(got.scores[i], mean_f1);
            assert_eq!(got.scores[i], v.f3);
        }
        let f = facts(&inst, cfg.k);
        assert_eq!(got.label, single(&f, &got.scores));
    }
}

fn class_accuracy(inst: &Instance, f: &Facts, weighted: Option<f64>) -> usize {
    let scores: Vec<f64> = (0..f.decisions.len())
        .map(|i| {
            let (mut hit, mut total) = (0.0, 0.0);
            for (pos, &j) in f.theta.iter().enumerate() {
                if inst.data.label(j) == f.decisions[i] {
                    let w = weighted.map_or(1.0, |e| 1.0 / (f.theta_d[pos] + e));
                    total += w;
                    if f.correct[i][j] {
                        hit += w;
                    }
                }
            }
            if total > 0.0 {
                hit / total
            } else {
                0.0
            }
        })
        .collect();
    single(f, &scores)
}

#[test]
fn lca_matches_loop() {
    check(Baseline::Lca, 4, |inst, f, _| class_accuracy(inst, f, None));
}

#[test]
fn mla_matches_loop() {
    check(Baseline::Mla, 5, |inst, f, cfg| {
        class_accuracy(inst, f, Some(cfg.mla_epsilon))
    });
}

#[test]
fn mcb_matches_filtering() {
    check(Baseline::Mcb, 6, |_, f, cfg| {
        let m = f.decisions.len();
        let similar: Vec<usize> = f
            .theta
            .iter()
            .copied()
            .filter(|&j| {
                let agree = (0..m)
                    .filter(|&i| f.ref_profiles[j][i] == f.decisions[i])
                    .count();
                agree as f64 / m as f64 >= cfg.mcb_threshold
            })
            .collect();
        let region = if similar.is_empty() {
            f.theta.clone()
        } else {
            similar
        };
        let scores: Vec<f64> = (0..m)
            .map(|i| {
                region.iter().filter(|&&j| f.correct[i][j]).count() as f64 / region.len() as f64
            })
            .collect();
        single(f, &scores)
    });
}

#[test]
fn knop_matches_profile_neighbors_then_counting() {
    check(Baseline::Knop, 7, |inst, f, cfg| {
        let m = f.decisions.len();
        let disagreements: Vec<f64> = f
            .ref_profiles
            .iter()
            .map(|p| (0..m).filter(|&i| p[i] != f.decisions[i]).count() as f64)
            .collect();
        let phi = nearest(&disagreements, cfg.k_profiles);
        union_oracle(inst, f, &phi)
    });
}
