//! Rank-based comparison statistics: Kruskal–Wallis, Wilcoxon signed-rank
//! and Friedman mean ranks over an accuracy table.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Sample sizes up to this use the exact signed-rank distribution.
pub const WILCOXON_EXACT_MAX_N: usize = 25;

/// 1-based ranks in ascending order; tied values share their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) hold ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &o in &order[i..j] {
            ranks[o] = avg;
        }
        i = j;
    }
    ranks
}

/// Sizes of groups of tied values.
fn tie_sizes(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        out.push(j - i);
        i = j;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kruskal–Wallis H with tie correction; p from χ² with `g - 1` degrees of freedom.
pub fn kruskal_wallis(groups: &[&[f64]]) -> Result<TestResult> {
    if groups.len() < 2 {
        return Err(Error::InvalidParameter(
            "Kruskal-Wallis needs at least two groups".into(),
        ));
    }
    if groups.iter().any(|g| g.is_empty()) {
        return Err(Error::InvalidParameter(
            "Kruskal-Wallis groups must be non-empty".into(),
        ));
    }
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    if pooled.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite observation".into()));
    }
    let n = pooled.len() as f64;
    let ranks = average_ranks(&pooled);
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let h = 12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0);
    let ties: f64 = tie_sizes(&pooled)
        .into_iter()
        .map(|t| (t * t * t - t) as f64)
        .sum();
    let correction = 1.0 - ties / (n * n * n - n);
    if correction <= 0.0 {
        // every observation identical
        return Ok(TestResult {
            statistic: 0.0,
            p_value: 1.0,
        });
    }
    let h = (h / correction).max(0.0);
    let chi = ChiSquared::new((groups.len() - 1) as f64).expect("positive degrees of freedom");
    Ok(TestResult {
        statistic: h,
        p_value: chi.sf(h).clamp(0.0, 1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// The first sample tends to be larger.
    AGreater,
    /// The second sample tends to be larger.
    BGreater,
    NoDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WilcoxonMethod {
    Exact,
    NormalApproximation,
    /// Every difference was zero.
    AllZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// `min(W+, W-)`.
    pub statistic: f64,
    /// Rank sum of positive `b - a` differences.
    pub w_plus: f64,
    pub w_minus: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    /// Two-sided.
    pub p_value: f64,
    pub direction: Direction,
    pub method: WilcoxonMethod,
}

/// Two-sided Wilcoxon signed-rank test on `b - a`, zero differences dropped
/// and tied ranks averaged. Uses the exact permutation distribution of the
/// (possibly tied) ranks for `n <= 25`, otherwise the normal approximation
/// with tie and continuity corrections.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite observation".into()));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| y - x)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            statistic: 0.0,
            w_plus: 0.0,
            w_minus: 0.0,
            n: 0,
            p_value: 1.0,
            direction: Direction::NoDifference,
            method: WilcoxonMethod::AllZero,
        });
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let statistic = w_plus.min(w_minus);
    let direction = if w_plus > w_minus {
        Direction::BGreater
    } else if w_minus > w_plus {
        Direction::AGreater
    } else {
        Direction::NoDifference
    };

    let (p_value, method) = if n <= WILCOXON_EXACT_MAX_N {
        (
            exact_signed_rank_p(&ranks, statistic),
            WilcoxonMethod::Exact,
        )
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let ties: f64 = tie_sizes(&abs)
            .into_iter()
            .map(|t| (t * t * t - t) as f64)
            .sum();
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
        let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
        let normal = Normal::standard();
        (
            (2.0 * normal.sf(z)).min(1.0),
            WilcoxonMethod::NormalApproximation,
        )
    };
    Ok(WilcoxonResult {
        statistic,
        w_plus,
        w_minus,
        n,
        p_value,
        direction,
        method,
    })
}

/// `min(1, 2 P(T <= t))` where `T` is the positive-rank sum under random signs.
fn exact_signed_rank_p(ranks: &[f64], t: f64) -> f64 {
    // doubled ranks are integers even with half-rank ties
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; max + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] > 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let limit = (2.0 * t).round() as usize;
    let tail: f64 = counts[..=limit.min(max)].iter().sum();
    let all = 2f64.powi(ranks.len() as i32);
    (2.0 * tail / all).min(1.0)
}

/// Mean accuracy (percent) of each method on each dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub methods: Vec<String>,
    pub datasets: Vec<String>,
    /// `datasets x methods`.
    pub means: Vec<Vec<f64>>,
    /// Present when every cell carried a standard deviation.
    pub stddevs: Option<Vec<Vec<f64>>>,
}

impl AccuracyTable {
    pub fn new(
        methods: Vec<String>,
        datasets: Vec<String>,
        means: Vec<Vec<f64>>,
        stddevs: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let shape_ok = |m: &Vec<Vec<f64>>| {
            m.len() == datasets.len() && m.iter().all(|row| row.len() == methods.len())
        };
        if !shape_ok(&means) || stddevs.as_ref().is_some_and(|s| !shape_ok(s)) {
            return Err(Error::InvalidParameter(format!(
                "accuracy table must be {} x {}",
                datasets.len(),
                methods.len()
            )));
        }
        if let Some(v) = means.iter().flatten().find(|v| !(0.0..=100.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!(
                "accuracy {v} is outside [0, 100]"
            )));
        }
        Ok(Self {
            methods,
            datasets,
            means,
            stddevs,
        })
    }

    /// Reads a table with methods as columns and datasets as rows. The first
    /// column names the dataset; cells are `mean` or `mean(std)`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() < 2 {
            return Err(Error::InvalidParameter(
                "table needs at least one method column".into(),
            ));
        }
        let methods: Vec<String> = header.iter().skip(1).map(String::from).collect();
        let mut datasets = Vec::new();
        let mut means = Vec::new();
        let mut stds: Vec<Vec<Option<f64>>> = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            datasets.push(rec.get(0).unwrap_or_default().to_string());
            let mut row_m = Vec::with_capacity(methods.len());
            let mut row_s = Vec::with_capacity(methods.len());
            for (c, cell) in rec.iter().enumerate().skip(1) {
                let (m, s) = parse_cell(cell).ok_or_else(|| Error::Parse {
                    row: r + 2,
                    column: c + 1,
                    value: cell.to_string(),
                })?;
                row_m.push(m);
                row_s.push(s);
            }
            means.push(row_m);
            stds.push(row_s);
        }
        let stddevs = stds
            .iter()
            .all(|row| row.iter().all(Option::is_some))
            .then(|| {
                stds.into_iter()
                    .map(|row| row.into_iter().map(Option::unwrap_or_default).collect())
                    .collect()
            });
        Self::new(methods, datasets, means, stddevs)
    }

    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(file)
    }

    pub fn method_index(&self, name: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == name)
    }

    pub fn column(&self, method: usize) -> Vec<f64> {
        self.means.iter().map(|row| row[method]).collect()
    }
}

/// `mean` or `mean(std)` / `mean (std)`.
fn parse_cell(cell: &str) -> Option<(f64, Option<f64>)> {
    let cell = cell.trim();
    match cell.split_once('(') {
        Some((m, rest)) => {
            let s = rest.trim().strip_suffix(')').unwrap_or(rest).trim();
            Some((m.trim().parse().ok()?, Some(s.parse().ok()?)))
        }
        None => Some((cell.parse().ok()?, None)),
    }
}

/// Mean over datasets of each method's rank (1 = highest accuracy, ties averaged).
pub fn friedman_mean_ranks(table: &AccuracyTable) -> Vec<f64> {
    let k = table.methods.len();
    let mut total = vec![0.0; k];
    for row in &table.means {
        let negated: Vec<f64> = row.iter().map(|v| -v).collect();
        for (t, r) in total.iter_mut().zip(average_ranks(&negated)) {
            *t += r;
        }
    }
    let n = table.datasets.len().max(1) as f64;
    total.into_iter().map(|t| t / n).collect()
}

/// Wilcoxon test of `reference` against every other column, as
/// `(method, result)` with `a` = reference and `b` = the other method.
pub fn wilcoxon_against(
    table: &AccuracyTable,
    reference: usize,
) -> Result<Vec<(String, WilcoxonResult)>> {
    let a = table.column(reference);
    (0..table.methods.len())
        .filter(|&m| m != reference)
        .map(|m| {
            Ok((
                table.methods[m].clone(),
                wilcoxon_signed_rank(&a, &table.column(m))?,
            ))
        })
        .collect()
}

/// Kruskal–Wallis over the columns of a table.
pub fn kruskal_columns(table: &AccuracyTable) -> Result<TestResult> {
    let cols: Vec<Vec<f64>> = (0..table.methods.len()).map(|m| table.column(m)).collect();
    let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    kruskal_wallis(&refs)
}
