//! Replication harness: simulate, estimate, aggregate.
//!
//! Replication `i` draws its dataset with seed `derive_seed(master, i, DATA)`
//! and feeds estimator internals from `derive_seed(master, i, GUARD)`, so the
//! per-replication matrix does not depend on scheduling. Aggregation always
//! walks replications in index order.
//!
//! Estimator failures are recorded per label and error kind and excluded from
//! the summaries.

use crate::config::{self, ConfigError};
use crate::data::Dataset;
use crate::dgp::{self, DgpConfig, DgpError};
use crate::estimators::{sample_sd, EstimateError};
use crate::registry::{EstimatorSpec, Output};
use crate::rng::{self, derive_seed};
use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::io::Write;
use thiserror::Error;

pub const DEFAULT_BOOTSTRAP_REPS: usize = 500;
pub const MIN_BOOTSTRAP_REPS: usize = 100;
/// Largest tolerated share of failed bootstrap resamples.
pub const MAX_RESAMPLE_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum MonteCarloError {
    #[error("invalid campaign: {0}")]
    InvalidSpec(String),
    #[error("unknown estimator column `{0}`")]
    UnknownEstimator(String),
    #[error("{failed} of {reps} bootstrap resamples failed (more than 5%); last error: {last}")]
    TooManyResampleFailures {
        failed: usize,
        reps: usize,
        last: String,
    },
    #[error(transparent)]
    Dgp(#[from] DgpError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error("config {0}")]
    Config(#[from] ConfigError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MonteCarloError>;

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSpec {
    /// Template for every replication; its `seed` is replaced per replication.
    pub dgp: DgpConfig,
    pub replications: usize,
    /// `(label, estimator)` pairs; labels must be unique.
    pub estimators: Vec<(String, EstimatorSpec)>,
    /// Bootstrap resamples per replication and estimator; 0 disables.
    pub bootstrap_reps: usize,
    pub master_seed: u64,
    pub parallel: bool,
}

impl CampaignSpec {
    pub fn new(dgp: DgpConfig, replications: usize, master_seed: u64) -> Self {
        Self {
            dgp,
            replications,
            estimators: Vec::new(),
            bootstrap_reps: 0,
            master_seed,
            parallel: true,
        }
    }

    /// Add an estimator parsed from its textual spec.
    pub fn estimator(mut self, label: &str, spec: &str) -> Result<Self> {
        self.estimators.push((label.to_string(), spec.parse()?));
        Ok(self)
    }

    /// Column names: the label for single-output estimators, `label.output`
    /// otherwise.
    pub fn columns(&self) -> Vec<String> {
        self.estimators
            .iter()
            .flat_map(|(label, spec)| {
                let outs = spec.kind.outputs();
                outs.iter().map(move |o| {
                    if outs.len() == 1 {
                        label.clone()
                    } else {
                        format!("{label}.{o}")
                    }
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(MonteCarloError::InvalidSpec(
                "replications must be at least 1".into(),
            ));
        }
        if self.estimators.is_empty() {
            return Err(MonteCarloError::InvalidSpec("no estimators given".into()));
        }
        for (i, (label, _)) in self.estimators.iter().enumerate() {
            if label.is_empty() || label.contains(['.', ',']) {
                return Err(MonteCarloError::InvalidSpec(format!(
                    "label `{label}` may not be empty or contain `.` or `,`"
                )));
            }
            if self.estimators[..i].iter().any(|(l, _)| l == label) {
                return Err(MonteCarloError::InvalidSpec(format!(
                    "duplicate label `{label}`"
                )));
            }
        }
        if self.bootstrap_reps != 0 && self.bootstrap_reps < MIN_BOOTSTRAP_REPS {
            return Err(MonteCarloError::InvalidSpec(format!(
                "bootstrap_reps must be 0 or at least {MIN_BOOTSTRAP_REPS}, got {}",
                self.bootstrap_reps
            )));
        }
        self.dgp.validate()?;
        Ok(())
    }

    /// Parse a campaign config: the simulation keys of
    /// [`DgpConfig::from_config_text`] plus `replications`, `bootstrap_reps`,
    /// `master_seed`, `parallel` and one `estimator.<label> = <spec>` line per
    /// estimator.
    pub fn from_config_text(text: &str) -> Result<Self> {
        let entries = config::parse_key_values(text)?;
        let mut dgp_lines = String::new();
        let mut replications = 1000usize;
        let mut bootstrap_reps = 0usize;
        let mut master_seed = 1u64;
        let mut parallel = true;
        let mut estimators = Vec::new();
        let bad =
            |line: usize, msg: String| MonteCarloError::InvalidSpec(format!("line {line}: {msg}"));
        for (line, k, v) in &entries {
            match k.as_str() {
                "replications" => {
                    replications = v.parse().map_err(|_| {
                        bad(*line, format!("replications must be a count, got `{v}`"))
                    })?
                }
                "bootstrap_reps" => {
                    bootstrap_reps = v.parse().map_err(|_| {
                        bad(*line, format!("bootstrap_reps must be a count, got `{v}`"))
                    })?
                }
                "master_seed" => {
                    master_seed = v.parse().map_err(|_| {
                        bad(
                            *line,
                            format!("master_seed must be a 64-bit integer, got `{v}`"),
                        )
                    })?
                }
                "parallel" => {
                    parallel = v.parse().map_err(|_| {
                        bad(*line, format!("parallel must be true or false, got `{v}`"))
                    })?
                }
                key => match key.strip_prefix("estimator.") {
                    Some(label) => {
                        let spec: EstimatorSpec =
                            v.parse().map_err(|e| bad(*line, format!("{e}")))?;
                        estimators.push((label.to_string(), spec));
                    }
                    None => {
                        dgp_lines.push_str(&format!("{k} = {v}\n"));
                    }
                },
            }
        }
        let spec = CampaignSpec {
            dgp: DgpConfig::from_config_text(&dgp_lines)?,
            replications,
            estimators,
            bootstrap_reps,
            master_seed,
            parallel,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSummary {
    pub mean: Option<f64>,
    /// Sample standard deviation (n - 1 denominator); undefined below two values.
    pub mc_sd: Option<f64>,
    pub n_ok: usize,
    pub n_fail: usize,
    /// Mean bootstrap standard error over replications where it was computed.
    pub mean_boot_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub columns: Vec<String>,
    /// `per_replication[i][j]`: replication `i`, column `j`; `None` on failure.
    pub per_replication: Vec<Vec<Option<f64>>>,
    /// Same shape as `per_replication` when bootstrapping was requested.
    pub bootstrap_se: Option<Vec<Vec<Option<f64>>>>,
    pub summary: Vec<ColumnSummary>,
    /// Estimator label → error kind → count.
    pub failures: BTreeMap<String, BTreeMap<String, usize>>,
    /// Total clamped outcome probabilities across all replications.
    pub clamp_events: usize,
    pub subjects: usize,
}

impl CampaignResult {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| MonteCarloError::UnknownEstimator(name.to_string()))
    }

    pub fn summary_of(&self, name: &str) -> Result<&ColumnSummary> {
        Ok(&self.summary[self.column_index(name)?])
    }

    pub fn replications(&self) -> usize {
        self.per_replication.len()
    }
}

struct ReplicationOutcome {
    values: Vec<Option<f64>>,
    se: Option<Vec<Option<f64>>>,
    failures: Vec<(usize, &'static str)>,
    clamp_events: usize,
}

fn run_replication(spec: &CampaignSpec, index: u64) -> Result<ReplicationOutcome> {
    let mut cfg = spec.dgp.clone();
    cfg.seed = derive_seed(spec.master_seed, index, rng::stream::DATA);
    let sim = dgp::generate(&cfg)?;
    let est_seed = derive_seed(spec.master_seed, index, rng::stream::GUARD);
    let mut values = Vec::new();
    let mut ses = Vec::new();
    let mut failures = Vec::new();
    for (e, (_, est)) in spec.estimators.iter().enumerate() {
        let width = est.kind.outputs().len();
        match est.evaluate(&sim.data, est_seed) {
            Ok(outs) => {
                values.extend(outs.iter().map(|o| Some(o.value)));
                if spec.bootstrap_reps > 0 {
                    let boot_seed = derive_seed(
                        derive_seed(spec.master_seed, index, rng::stream::BOOTSTRAP),
                        e as u64,
                        rng::stream::BOOTSTRAP,
                    );
                    match bootstrap_se_spec(
                        &sim.data,
                        est,
                        spec.bootstrap_reps,
                        boot_seed,
                        est_seed,
                    ) {
                        Ok(se) => ses.extend(se),
                        Err(_) => ses.extend(std::iter::repeat_n(None, width)),
                    }
                }
            }
            Err(err) => {
                values.extend(std::iter::repeat_n(None, width));
                ses.extend(std::iter::repeat_n(None, width));
                failures.push((e, err.kind()));
            }
        }
    }
    Ok(ReplicationOutcome {
        values,
        se: (spec.bootstrap_reps > 0).then_some(ses),
        failures,
        clamp_events: sim.clamp_events,
    })
}

fn summarize(values: impl Iterator<Item = Option<f64>> + Clone) -> (Vec<f64>, usize) {
    let ok: Vec<f64> = values.clone().flatten().collect();
    let fail = values.filter(Option::is_none).count();
    (ok, fail)
}

fn mean_of(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Run every replication. Only an invalid spec is fatal; estimator failures
/// are counted.
pub fn run_campaign(spec: &CampaignSpec) -> Result<CampaignResult> {
    spec.validate()?;
    let indices: Vec<u64> = (0..spec.replications as u64).collect();
    let outcomes: Vec<ReplicationOutcome> = if spec.parallel {
        indices
            .par_iter()
            .map(|&i| run_replication(spec, i))
            .collect::<Result<_>>()?
    } else {
        indices
            .iter()
            .map(|&i| run_replication(spec, i))
            .collect::<Result<_>>()?
    };

    let columns = spec.columns();
    let mut failures: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for o in &outcomes {
        for &(e, kind) in &o.failures {
            *failures
                .entry(spec.estimators[e].0.clone())
                .or_default()
                .entry(kind.to_string())
                .or_default() += 1;
        }
    }
    let per_replication: Vec<Vec<Option<f64>>> =
        outcomes.iter().map(|o| o.values.clone()).collect();
    let bootstrap_se: Option<Vec<Vec<Option<f64>>>> = (spec.bootstrap_reps > 0).then(|| {
        outcomes
            .iter()
            .map(|o| o.se.clone().expect("bootstrap requested"))
            .collect()
    });
    let summary = (0..columns.len())
        .map(|j| {
            let (ok, n_fail) = summarize(per_replication.iter().map(|row| row[j]));
            let mean_boot_se = bootstrap_se
                .as_ref()
                .and_then(|b| mean_of(&b.iter().filter_map(|row| row[j]).collect::<Vec<_>>()));
            ColumnSummary {
                mean: mean_of(&ok),
                mc_sd: sample_sd(&ok),
                n_ok: ok.len(),
                n_fail,
                mean_boot_se,
            }
        })
        .collect();
    Ok(CampaignResult {
        columns,
        per_replication,
        bootstrap_se,
        summary,
        failures,
        clamp_events: outcomes.iter().map(|o| o.clamp_events).sum(),
        subjects: spec.dgp.n * spec.replications,
    })
}

fn resample_indices<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Nonparametric bootstrap standard error of a scalar statistic, resampling
/// whole records with replacement. Failed resamples are dropped; more than 5%
/// failures is an error.
pub fn bootstrap_se<F>(data: &Dataset, statistic: F, reps: usize, seed: u64) -> Result<f64>
where
    F: Fn(&Dataset) -> std::result::Result<f64, EstimateError>,
{
    let se = bootstrap_core(data, |d| statistic(d).map(|v| vec![v]), reps, seed)?;
    Ok(se[0].expect("at least two successful resamples"))
}

/// Bootstrap standard errors for every output of a registered estimator.
pub fn bootstrap_se_spec(
    data: &Dataset,
    spec: &EstimatorSpec,
    reps: usize,
    seed: u64,
    estimator_seed: u64,
) -> Result<Vec<Option<f64>>> {
    bootstrap_core(
        data,
        |d| {
            spec.evaluate(d, estimator_seed)
                .map(|o: Vec<Output>| o.into_iter().map(|o| o.value).collect())
        },
        reps,
        seed,
    )
}

fn bootstrap_core<F>(
    data: &Dataset,
    statistic: F,
    reps: usize,
    seed: u64,
) -> Result<Vec<Option<f64>>>
where
    F: Fn(&Dataset) -> std::result::Result<Vec<f64>, EstimateError>,
{
    if reps < MIN_BOOTSTRAP_REPS {
        return Err(MonteCarloError::InvalidSpec(format!(
            "bootstrap needs at least {MIN_BOOTSTRAP_REPS} resamples, got {reps}"
        )));
    }
    if data.is_empty() {
        return Err(MonteCarloError::InvalidSpec(
            "cannot bootstrap an empty dataset".into(),
        ));
    }
    let mut rng = rng::stream_rng(seed, 0, rng::stream::BOOTSTRAP);
    let mut draws: Vec<Vec<f64>> = Vec::with_capacity(reps);
    let mut failed = 0;
    let mut last = String::new();
    for _ in 0..reps {
        let idx = resample_indices(&mut rng, data.len());
        match statistic(&data.resample(&idx)) {
            Ok(v) => draws.push(v),
            Err(e) => {
                failed += 1;
                last = e.to_string();
            }
        }
    }
    if failed as f64 > MAX_RESAMPLE_FAILURE_RATE * reps as f64 {
        return Err(MonteCarloError::TooManyResampleFailures { failed, reps, last });
    }
    let width = draws.first().map_or(0, Vec::len);
    Ok((0..width)
        .map(|j| sample_sd(&draws.iter().map(|d| d[j]).collect::<Vec<_>>()))
        .collect())
}

/// Successful values of one column as `(replication, value)` in replication order.
pub fn export_distribution(result: &CampaignResult, column: &str) -> Result<Vec<(usize, f64)>> {
    let j = result.column_index(column)?;
    Ok(result
        .per_replication
        .iter()
        .enumerate()
        .filter_map(|(i, row)| row[j].map(|v| (i, v)))
        .collect())
}

/// Per-replication matrix as CSV: a `replication` column then one column per
/// estimator output, with full-precision values and empty cells for failures.
pub fn write_per_replication_csv<W: Write>(writer: W, result: &CampaignResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["replication".to_string()];
    header.extend(result.columns.iter().cloned());
    w.write_record(&header)?;
    for (i, row) in result.per_replication.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(
            row.iter()
                .map(|v| v.map_or(String::new(), |x| x.to_string())),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// JSON summary: `{"summary": {column: {mean, mc_sd, n_ok, n_fail, ...}},
/// "failures": {...}, "metadata": {...}}`.
pub fn summary_json(spec: &CampaignSpec, result: &CampaignResult) -> Value {
    let mut summary = serde_json::Map::new();
    for (name, s) in result.columns.iter().zip(&result.summary) {
        let mut entry = json!({
            "mean": s.mean,
            "mc_sd": s.mc_sd,
            "n_ok": s.n_ok,
            "n_fail": s.n_fail,
        });
        if result.bootstrap_se.is_some() {
            entry["mean_bootstrap_se"] = json!(s.mean_boot_se);
        }
        summary.insert(name.clone(), entry);
    }
    let estimators: BTreeMap<&str, String> = spec
        .estimators
        .iter()
        .map(|(l, e)| (l.as_str(), e.to_string()))
        .collect();
    json!({
        "summary": summary,
        "failures": result.failures,
        "metadata": {
            "model": spec.dgp.model.name(),
            "variant": spec.dgp.variant.to_string(),
            "n": spec.dgp.n,
            "params": spec.dgp.params,
            "replications": spec.replications,
            "master_seed": spec.master_seed,
            "bootstrap_reps": spec.bootstrap_reps,
            "estimators": estimators,
            "failed_replications_excluded_from_summary": true,
            "clamp_events": result.clamp_events,
            "clamp_rate": result.clamp_events as f64 / result.subjects as f64,
        },
    })
}
