//! The replicated evaluation protocol: split, overproduce, meta-train,
//! evaluate every requested method, aggregate, and render comparison tables.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::{bagging_pool, PerceptronConfig, Pool};
use crate::baselines::{decide, Baseline, BaselineConfig, QueryContext};
use crate::dataset::{generate, load_csv, Dataset, LabelColumn, Partition};
use crate::descore::{
    accuracy, evaluate_modes, pool_majority_vote, DesConfig, Evaluation, MemberOutputs, MetaDes,
    Mode, QueryRecord,
};
use crate::error::{Error, Result};
use crate::metaclassifier::train_meta;
use crate::metafeatures::{
    build_meta_dataset_for_samples, build_meta_dataset_from_reference, MetaParams, PosteriorTarget,
};
use crate::region::ReferenceSet;
use crate::seed::derive_seed;
use crate::stats::{friedman_mean_ranks, wilcoxon_signed_rank, AccuracyTable, Direction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSource {
    Synthetic { generator: String, n: usize },
    Csv { path: PathBuf, label_column: String },
}

/// A method evaluated by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    MetaDes(Mode),
    Baseline(Baseline),
    /// Plain majority vote of the whole pool.
    MajorityVote,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::MetaDes(m) => m.method_name(),
            Method::Baseline(b) => b.name(),
            Method::MajorityVote => "MV",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Dataset label used in tables.
    pub name: String,
    pub source: DatasetSource,
    pub replications: usize,
    pub seed: u64,
    /// Seed for synthetic data generation.
    pub data_seed: u64,
    pub pool_size: usize,
    pub perceptron: PerceptronConfig,
    pub k: usize,
    pub k_p: usize,
    pub h_c: f64,
    pub upsilon: f64,
    pub posterior_target: PosteriorTarget,
    pub meta_train_fraction: f64,
    pub modes: Vec<Mode>,
    pub baselines: Vec<Baseline>,
    pub majority_vote: bool,
    pub baseline: BaselineConfig,
    /// Min-max scaling fitted on the pool training set.
    pub normalize: bool,
    /// JSON-lines file receiving per-query records.
    pub diagnostics: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "Banana".into(),
            source: DatasetSource::Synthetic {
                generator: "banana".into(),
                n: 1000,
            },
            replications: 20,
            seed: 0,
            data_seed: 0,
            pool_size: 100,
            perceptron: PerceptronConfig::default(),
            k: 7,
            k_p: 5,
            h_c: 0.7,
            upsilon: 0.5,
            posterior_target: PosteriorTarget::TrueClass,
            meta_train_fraction: 0.75,
            modes: Mode::ALL.to_vec(),
            baselines: Baseline::ALL.to_vec(),
            majority_vote: true,
            baseline: BaselineConfig::default(),
            normalize: true,
            diagnostics: None,
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected a boolean, got {v:?}"
        ))),
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_list<T: FromStr<Err = Error>>(v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(T::from_str)
        .collect()
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment. Relative CSV and
    /// diagnostics paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut dataset: Option<String> = None;
        let mut n = 1000usize;
        let mut label_column = "last".to_string();
        let mut name: Option<String> = None;
        let resolve = |p: &str| -> PathBuf {
            let p = PathBuf::from(p);
            match base_dir {
                Some(dir) if p.is_relative() => dir.join(p),
                _ => p,
            }
        };

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let (key, v) = (key.trim().to_ascii_lowercase(), value.trim());
            match key.as_str() {
                "dataset" => dataset = Some(v.to_string()),
                "n" => n = parse_num(&key, v)?,
                "label_column" => label_column = v.to_string(),
                "name" => name = Some(v.to_string()),
                "replications" => cfg.replications = parse_num(&key, v)?,
                "seed" => {
                    cfg.seed = parse_num(&key, v)?;
                    cfg.data_seed = cfg.seed;
                }
                "data_seed" => cfg.data_seed = parse_num(&key, v)?,
                "pool_size" | "m" => cfg.pool_size = parse_num(&key, v)?,
                "epochs" => cfg.perceptron.epochs = parse_num(&key, v)?,
                "learning_rate" => cfg.perceptron.learning_rate = parse_num(&key, v)?,
                "slope" => cfg.perceptron.slope = parse_num(&key, v)?,
                "k" => cfg.k = parse_num(&key, v)?,
                "k_p" => cfg.k_p = parse_num(&key, v)?,
                "h_c" => cfg.h_c = parse_num(&key, v)?,
                "upsilon" => cfg.upsilon = parse_num(&key, v)?,
                "f2_target" => {
                    cfg.posterior_target = match v.to_ascii_lowercase().as_str() {
                        "true" | "true_class" => PosteriorTarget::TrueClass,
                        "predicted" | "predicted_class" => PosteriorTarget::PredictedClass,
                        _ => return Err(Error::Config(format!("f2_target: unknown value {v:?}"))),
                    }
                }
                "meta_train_fraction" => cfg.meta_train_fraction = parse_num(&key, v)?,
                "modes" => cfg.modes = parse_list(v)?,
                "baselines" => {
                    cfg.baselines = match v.to_ascii_lowercase().as_str() {
                        "all" => Baseline::ALL.to_vec(),
                        "none" | "" => Vec::new(),
                        _ => parse_list(v)?,
                    }
                }
                "majority_vote" => cfg.majority_vote = parse_bool(&key, v)?,
                "mcb_threshold" => cfg.baseline.mcb_threshold = parse_num(&key, v)?,
                "knop_k" => cfg.baseline.k_profiles = parse_num(&key, v)?,
                "mla_epsilon" => cfg.baseline.mla_epsilon = parse_num(&key, v)?,
                "normalize" => cfg.normalize = parse_bool(&key, v)?,
                "diagnostics" => cfg.diagnostics = Some(resolve(v)),
                other => return Err(Error::Config(format!("unknown key {other:?}"))),
            }
        }

        let dataset = dataset.unwrap_or_else(|| "banana".into());
        let lower = dataset.to_ascii_lowercase();
        if lower == "banana" || lower == "lithuanian" {
            cfg.source = DatasetSource::Synthetic {
                generator: lower.clone(),
                n,
            };
            let mut title = lower;
            title[..1].make_ascii_uppercase();
            cfg.name = name.unwrap_or(title);
        } else {
            let path = resolve(&dataset);
            cfg.name = name.unwrap_or_else(|| {
                path.file_stem()
                    .map_or_else(|| dataset.clone(), |s| s.to_string_lossy().into_owned())
            });
            cfg.source = DatasetSource::Csv { path, label_column };
        }
        cfg.baseline.k = cfg.k;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.pool_size == 0 {
            return Err(Error::Config("pool_size must be at least 1".into()));
        }
        if self.methods().is_empty() {
            return Err(Error::Config("no methods to evaluate".into()));
        }
        if !(self.meta_train_fraction > 0.0 && self.meta_train_fraction <= 1.0) {
            return Err(Error::Config(
                "meta_train_fraction must lie in (0, 1]".into(),
            ));
        }
        self.des_config(Mode::Hybrid).validate()?;
        self.meta_params().validate()?;
        Ok(())
    }

    pub fn methods(&self) -> Vec<Method> {
        let mut out: Vec<Method> = self.modes.iter().map(|&m| Method::MetaDes(m)).collect();
        out.extend(self.baselines.iter().map(|&b| Method::Baseline(b)));
        if self.majority_vote {
            out.push(Method::MajorityVote);
        }
        out
    }

    pub fn des_config(&self, mode: Mode) -> DesConfig {
        DesConfig {
            k: self.k,
            k_p: self.k_p,
            h_c: self.h_c,
            upsilon: self.upsilon,
            mode,
            posterior_target: self.posterior_target,
        }
    }

    pub fn meta_params(&self) -> MetaParams {
        MetaParams {
            k: self.k,
            k_p: self.k_p,
            h_c: self.h_c,
            posterior_target: self.posterior_target,
        }
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.source {
            DatasetSource::Synthetic { generator, n } => generate(generator, *n, self.data_seed),
            DatasetSource::Csv { path, label_column } => load_csv(
                path,
                &label_column.parse::<LabelColumn>().expect("infallible"),
            ),
        }
    }
}

/// Per-feature min-max scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    min: Vec<f64>,
    range: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(data: &Dataset) -> Self {
        let f = data.features();
        let min: Vec<f64> = f
            .axis_iter(Axis(1))
            .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        let range = f
            .axis_iter(Axis(1))
            .zip(&min)
            .map(|(c, lo)| {
                let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if hi > *lo {
                    hi - lo
                } else {
                    1.0
                }
            })
            .collect();
        Self { min, range }
    }

    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        let f = data.features();
        let scaled =
            Array2::from_shape_fn(f.dim(), |(i, j)| (f[[i, j]] - self.min[j]) / self.range[j]);
        data.with_features(scaled)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaSummary {
    /// Meta-training samples that passed the consensus filter.
    pub selected_samples: usize,
    pub meta_vectors: usize,
    pub competent_fraction: f64,
    pub validation_accuracy: Option<f64>,
    /// True when nothing passed the filter and every sample was used.
    pub used_all_samples: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub replication: usize,
    pub seed: u64,
    /// Accuracy in `[0, 1]`, one per method in [`RunResult::methods`] order.
    pub accuracies: Vec<f64>,
    pub meta: MetaSummary,
    #[serde(skip)]
    pub records: Vec<QueryRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub dataset: String,
    pub config: ExperimentConfig,
    pub methods: Vec<String>,
    pub replications: Vec<ReplicationResult>,
    /// Mean accuracy per method.
    pub mean: Vec<f64>,
    /// Sample standard deviation per method (0 for a single replication).
    pub std: Vec<f64>,
    pub diagnostics_path: Option<PathBuf>,
}

impl RunResult {
    pub fn method_index(&self, name: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == name)
    }

    /// Accuracies of one method across replications.
    pub fn accuracies(&self, method: usize) -> Vec<f64> {
        self.replications
            .iter()
            .map(|r| r.accuracies[method])
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// One replication on an already loaded dataset. Its randomness depends only
/// on `(cfg.seed, replication)`.
pub fn run_replication(
    cfg: &ExperimentConfig,
    data: &Dataset,
    replication: usize,
) -> Result<ReplicationResult> {
    run_replication_inner(cfg, data, replication).map_err(|e| Error::Replication {
        replication,
        source: Box::new(e),
    })
}

fn run_replication_inner(
    cfg: &ExperimentConfig,
    data: &Dataset,
    replication: usize,
) -> Result<ReplicationResult> {
    let seed = derive_seed(cfg.seed, replication as u64);
    let mut parts = Partition::protocol(data, derive_seed(seed, 0))?;
    if cfg.normalize {
        let scaler = MinMaxScaler::fit(&parts.train);
        parts = Partition {
            train: scaler.transform(&parts.train)?,
            meta_train: scaler.transform(&parts.meta_train)?,
            dsel: scaler.transform(&parts.dsel)?,
            test: scaler.transform(&parts.test)?,
        };
    }

    let pool = bagging_pool(
        &parts.train,
        cfg.pool_size,
        &cfg.perceptron,
        derive_seed(seed, 1),
    )?;
    let methods = cfg.methods();
    let dsel = ReferenceSet::build(&pool, parts.dsel.clone())?;

    let mut evaluations: Vec<Evaluation> = Vec::with_capacity(methods.len());
    let mut meta_summary = MetaSummary {
        selected_samples: 0,
        meta_vectors: 0,
        competent_fraction: 0.0,
        validation_accuracy: None,
        used_all_samples: false,
    };

    if !cfg.modes.is_empty() {
        let meta_ref = ReferenceSet::build(&pool, parts.meta_train.clone())?;
        let params = cfg.meta_params();
        let meta = match build_meta_dataset_from_reference(&pool, &meta_ref, &params) {
            Ok(m) => m,
            Err(Error::EmptySelection { h_c }) => {
                log::warn!(
                    "replication {replication}: no meta-training sample below consensus {h_c}; using all {} samples",
                    meta_ref.len()
                );
                meta_summary.used_all_samples = true;
                let all: Vec<usize> = (0..meta_ref.len()).collect();
                build_meta_dataset_for_samples(&pool, &meta_ref, &all, &params)?
            }
            Err(e) => return Err(e),
        };
        meta_summary.selected_samples = meta.len() / pool.len();
        meta_summary.meta_vectors = meta.len();
        meta_summary.competent_fraction = meta.competent_fraction();
        let model = train_meta(&meta, cfg.meta_train_fraction, derive_seed(seed, 2))?;
        meta_summary.validation_accuracy = model.validation_accuracy;
        let des = MetaDes::new(&pool, &model, &dsel, cfg.des_config(Mode::Hybrid))?;
        evaluations.extend(evaluate_modes(&des, &parts.test, &cfg.modes)?);
    }

    if !cfg.baselines.is_empty() || cfg.majority_vote {
        evaluations.extend(evaluate_baselines(cfg, &pool, &dsel, &parts.test)?);
    }

    let mut records = Vec::new();
    let accuracies = methods
        .iter()
        .map(|m| {
            let e = evaluations
                .iter()
                .find(|e| e.method == m.name())
                .expect("every configured method is evaluated");
            e.accuracy
        })
        .collect();
    for m in &methods {
        if let Some(e) = evaluations.iter_mut().find(|e| e.method == m.name()) {
            records.append(&mut e.records);
        }
    }
    Ok(ReplicationResult {
        replication,
        seed,
        accuracies,
        meta: meta_summary,
        records,
    })
}

fn evaluate_baselines(
    cfg: &ExperimentConfig,
    pool: &Pool,
    dsel: &ReferenceSet,
    test: &Dataset,
) -> Result<Vec<Evaluation>> {
    let bcfg = BaselineConfig {
        k: cfg.k,
        ..cfg.baseline
    };
    let mut names: Vec<&'static str> = cfg.baselines.iter().map(|b| b.name()).collect();
    if cfg.majority_vote {
        names.push(Method::MajorityVote.name());
    }
    let per_query: Vec<Vec<QueryRecord>> = (0..test.len())
        .into_par_iter()
        .map(|j| {
            let x = test.row(j);
            let truth = test.label(j);
            let record = |name: &str, d: crate::descore::Decision| QueryRecord {
                method: name.to_string(),
                query: j,
                selected: d.selected,
                scores: d.scores,
                predicted: d.label,
                true_label: truth,
                fallback: d.fallback,
            };
            let mut out = Vec::with_capacity(names.len());
            if !cfg.baselines.is_empty() {
                let ctx = QueryContext::new(pool, x, dsel, &bcfg)?;
                for &b in &cfg.baselines {
                    out.push(record(b.name(), decide(b, &ctx, dsel, &bcfg)));
                }
            }
            if cfg.majority_vote {
                let outputs = MemberOutputs::compute(pool, x);
                out.push(record(
                    Method::MajorityVote.name(),
                    pool_majority_vote(&outputs, pool.n_classes()),
                ));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(names
        .iter()
        .enumerate()
        .map(|(m, name)| {
            let records: Vec<QueryRecord> = per_query.iter().map(|q| q[m].clone()).collect();
            Evaluation {
                method: name.to_string(),
                accuracy: accuracy(&records),
                records,
            }
        })
        .collect())
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every replication (in parallel) and aggregates in replication order.
/// Writes per-query diagnostics when the config names a file.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult> {
    cfg.validate()?;
    let data = cfg.load_dataset()?;
    let replications: Vec<ReplicationResult> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(cfg, &data, r))
        .collect::<Result<_>>()?;
    let methods: Vec<String> = cfg.methods().iter().map(|m| m.name().to_string()).collect();
    let (mean, std) = (0..methods.len())
        .map(|m| {
            let accs: Vec<f64> = replications.iter().map(|r| r.accuracies[m]).collect();
            mean_std(&accs)
        })
        .unzip();
    if let Some(path) = &cfg.diagnostics {
        write_diagnostics(path, &replications)?;
    }
    Ok(RunResult {
        dataset: cfg.name.clone(),
        config: cfg.clone(),
        methods,
        replications,
        mean,
        std,
        diagnostics_path: cfg.diagnostics.clone(),
    })
}

#[derive(Serialize)]
struct DiagnosticLine<'a> {
    replication: usize,
    #[serde(flatten)]
    record: &'a QueryRecord,
}

pub fn write_diagnostics(path: &Path, replications: &[ReplicationResult]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for rep in replications {
        for record in &rep.records {
            serde_json::to_writer(
                &mut out,
                &DiagnosticLine {
                    replication: rep.replication,
                    record,
                },
            )?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(TableFormat::Csv),
            "md" | "markdown" => Ok(TableFormat::Markdown),
            other => Err(Error::InvalidParameter(format!(
                "unknown table format {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TableOptions {
    /// Add a Wilcoxon row comparing every column with this method.
    pub wilcoxon_reference: Option<String>,
    pub friedman_ranks: bool,
}

/// Comparison table in percent: `mean(std)` per dataset and method, plus
/// the optional summary rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub table: AccuracyTable,
    /// Per method: `"n/a"`, or `+`/`-`/`~` with the p-value.
    pub wilcoxon: Option<Vec<String>>,
    pub ranks: Option<Vec<f64>>,
}

/// Collects run results into one table; methods keep first-seen order and
/// missing cells are rejected.
pub fn build_report(results: &[RunResult], opts: &TableOptions) -> Result<Report> {
    let mut methods: Vec<String> = Vec::new();
    for r in results {
        for m in &r.methods {
            if !methods.contains(m) {
                methods.push(m.clone());
            }
        }
    }
    let mut means = Vec::new();
    let mut stds = Vec::new();
    for r in results {
        let mut row_m = Vec::new();
        let mut row_s = Vec::new();
        for m in &methods {
            let i = r.method_index(m).ok_or_else(|| {
                Error::InvalidParameter(format!("{} has no results for {m}", r.dataset))
            })?;
            row_m.push(100.0 * r.mean[i]);
            row_s.push(100.0 * r.std[i]);
        }
        means.push(row_m);
        stds.push(row_s);
    }
    let datasets = results.iter().map(|r| r.dataset.clone()).collect();
    let table = AccuracyTable::new(methods, datasets, means, Some(stds))?;
    let ranks = opts.friedman_ranks.then(|| friedman_mean_ranks(&table));
    let wilcoxon = match &opts.wilcoxon_reference {
        None => None,
        Some(reference) => {
            let r = table
                .method_index(reference)
                .ok_or_else(|| Error::InvalidParameter(format!("no method named {reference}")))?;
            let a = table.column(r);
            let cells = (0..table.methods.len())
                .map(|m| {
                    if m == r {
                        return Ok("n/a".to_string());
                    }
                    let res = wilcoxon_signed_rank(&a, &table.column(m))?;
                    let mark = match (res.p_value < 0.05, res.direction) {
                        (true, Direction::BGreater) => "+",
                        (true, Direction::AGreater) => "-",
                        _ => "~",
                    };
                    Ok(format!("{mark} (p={:.4})", res.p_value))
                })
                .collect::<Result<_>>()?;
            Some(cells)
        }
    };
    Ok(Report {
        table,
        wilcoxon,
        ranks,
    })
}

pub const WILCOXON_ROW: &str = "Wilcoxon signed-rank";
pub const FRIEDMAN_ROW: &str = "Friedman mean rank";

fn cell(mean: f64, std: Option<f64>) -> String {
    match std {
        Some(s) => format!("{mean:.2}({s:.2})"),
        None => format!("{mean:.2}"),
    }
}

pub fn render(report: &Report, format: TableFormat) -> String {
    let t = &report.table;
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["Dataset".to_string()];
    header.extend(t.methods.iter().cloned());
    for (d, name) in t.datasets.iter().enumerate() {
        let mut row = vec![name.clone()];
        for m in 0..t.methods.len() {
            let std = t.stddevs.as_ref().map(|s| s[d][m]);
            row.push(cell(t.means[d][m], std));
        }
        rows.push(row);
    }
    if let Some(w) = &report.wilcoxon {
        let mut row = vec![WILCOXON_ROW.to_string()];
        row.extend(w.iter().cloned());
        rows.push(row);
    }
    if let Some(r) = &report.ranks {
        let mut row = vec![FRIEDMAN_ROW.to_string()];
        row.extend(r.iter().map(|v| format!("{v:.2}")));
        rows.push(row);
    }
    match format {
        TableFormat::Markdown => {
            let line = |cells: &[String]| format!("| {} |\n", cells.join(" | "));
            let mut out = line(&header);
            out.push_str(&line(&vec!["---".to_string(); header.len()]));
            for r in &rows {
                out.push_str(&line(r));
            }
            out
        }
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&header).expect("in-memory write");
            for r in &rows {
                w.write_record(r).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
        }
    }
}

pub fn emit_tables(
    results: &[RunResult],
    format: TableFormat,
    opts: &TableOptions,
) -> Result<String> {
    Ok(render(&build_report(results, opts)?, format))
}

/// Reads the dataset rows of a rendered markdown table back into an
/// accuracy table (summary rows are skipped).
pub fn parse_markdown_table(text: &str) -> Result<AccuracyTable> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| l.starts_with('|'))
        .map(|l| {
            l.trim_matches('|')
                .split('|')
                .map(|c| c.trim().to_string())
                .collect::<Vec<_>>()
        });
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidParameter("no markdown table found".into()))?;
    let mut csv_text = header.join(",");
    csv_text.push('\n');
    for row in lines {
        let first = row.first().map(String::as_str).unwrap_or("");
        if first.starts_with("---") || first == WILCOXON_ROW || first == FRIEDMAN_ROW {
            continue;
        }
        csv_text.push_str(&row.join(","));
        csv_text.push('\n');
    }
    AccuracyTable::from_csv_reader(csv_text.as_bytes())
}
