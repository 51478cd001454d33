//! Multi-trial experiments: split the data, fit the mixture, calibrate,
//! learn corrections on the merging set, build test-set prediction sets for
//! every method and record coverage and size.
//!
//! A run writes three files to the output directory:
//!
//! * `trials.csv`, one row per trial, method, score kind and `alpha`, with
//!   columns `trial, method, score_kind, alpha, marginal_cov, ws_cov,
//!   delta_cov, mean_size, unbounded_count, m_hat, seed`;
//! * `summary.json`, per-configuration means with 95% normal-approximation
//!   confidence intervals;
//! * `manifest.json`, the resolved configuration, seeds, timings, dropped
//!   rows, `m*` per trial and any failed trials.
//!
//! With a group tagger configured, `groups.csv` holds per-group coverage.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::aggregation::{
    self, ecdf_set, m_precise, m_star, m_targeted, scaled_set, DkwBudget, MergeSample,
};
use crate::data::{
    gen_synthetic_with_noise, load_csv, make_split, CsvSchema, Dataset, FeatureAssignment,
    PiecewiseTask, SplitConfig, SplitMode, Standardizer, SyntheticAssignment, SYNTHETIC_NOISE_SD,
};
use crate::evaluation::{
    group_coverage, marginal_coverage, mean_set_size, ws_coverage, PercentileTagger, PointRecord,
    SlabFamily,
};
use crate::interval::IntervalSet;
use crate::moe::{MoeModel, TrainingSettings};
use crate::pvalue::{CalibratedExpert, PValueProfile};
use crate::score::ScoreKind;
use crate::{Error, Result};

/// Test-set cap used when the configuration leaves it open and the data is
/// generated on the fly.
pub const DEFAULT_SYNTHETIC_TEST_SIZE: usize = 2000;

const SLAB_SEED_SALT: u64 = 0x5eed_51ab_0000_0001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Split conformal on the blended mixture prediction.
    Split,
    /// Weighted aggregation scaled by `m*`, valid at every level.
    WaAll,
    /// Weighted aggregation scaled by the targeted factor for `(0, alpha']`.
    WaTargeted,
    /// Weighted aggregation scaled by the precise factor at `alpha'`.
    WaPrecise,
    /// Weighted aggregation with no correction.
    WaUnscaled,
    /// Threshold on the merge-sample ECDF of the aggregated p-value.
    Ecdf,
    /// As `Ecdf`, widened by the DKW radius.
    EcdfDkw,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Split,
        Method::WaAll,
        Method::WaTargeted,
        Method::WaPrecise,
        Method::WaUnscaled,
        Method::Ecdf,
        Method::EcdfDkw,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Split => "split",
            Method::WaAll => "wa_all",
            Method::WaTargeted => "wa_targeted",
            Method::WaPrecise => "wa_precise",
            Method::WaUnscaled => "wa_unscaled",
            Method::Ecdf => "ecdf",
            Method::EcdfDkw => "ecdf_dkw",
        }
    }

    pub fn needs_merge(&self) -> bool {
        !matches!(self, Method::Split | Method::WaUnscaled)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

fn default_noise() -> f64 {
    SYNTHETIC_NOISE_SD
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum DatasetSpec {
    /// Fresh 16-feature data per trial.
    Synthetic {
        assignment: SyntheticAssignment,
        #[serde(default = "default_noise")]
        noise_sd: f64,
    },
    /// Fresh two-region data per trial, one expert per region.
    Piecewise {
        #[serde(default)]
        task: PiecewiseTask,
    },
    /// A fixed CSV file re-split per trial.
    Csv {
        path: PathBuf,
        schema: CsvSchema,
        /// `{expert: [columns]}` inline, or a path to such a JSON file.
        feature_groups: Value,
        #[serde(default = "default_true")]
        normalize: bool,
        #[serde(default)]
        group_tagger: Option<PercentileTagger>,
    },
}

fn default_methods() -> Vec<Method> {
    vec![
        Method::Split,
        Method::WaTargeted,
        Method::WaPrecise,
        Method::Ecdf,
        Method::EcdfDkw,
    ]
}

fn default_score_kinds() -> Vec<ScoreKind> {
    vec![ScoreKind::AbsResidual, ScoreKind::Cqr]
}

fn default_alphas() -> Vec<f64> {
    vec![0.1]
}

fn default_trials() -> usize {
    200
}

fn default_dkw_delta() -> f64 {
    0.05
}

fn default_ws_delta() -> f64 {
    0.2
}

fn default_n_slabs() -> usize {
    1000
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_score_kinds")]
    pub score_kinds: Vec<ScoreKind>,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    /// Level the targeted and precise corrections aim at; each `alpha` of the
    /// grid when absent.
    #[serde(default)]
    pub alpha_prime: Option<f64>,
    /// Miscoverage of the quantile pair fitted by CQR experts; `alpha_prime`,
    /// else the first `alpha`, when absent.
    #[serde(default)]
    pub cqr_alpha: Option<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default = "default_dkw_delta")]
    pub dkw_delta: f64,
    #[serde(default = "default_ws_delta")]
    pub ws_delta: f64,
    #[serde(default = "default_n_slabs")]
    pub n_slabs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub training: TrainingSettings,
}

fn in_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {v} is outside (0, 1)")))
    }
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetSpec) -> Self {
        Self {
            dataset,
            methods: default_methods(),
            score_kinds: default_score_kinds(),
            alphas: default_alphas(),
            alpha_prime: None,
            cqr_alpha: None,
            trials: default_trials(),
            split: SplitConfig::default(),
            dkw_delta: default_dkw_delta(),
            ws_delta: default_ws_delta(),
            n_slabs: default_n_slabs(),
            seed: 0,
            output_dir: default_output_dir(),
            training: TrainingSettings::default(),
        }
    }

    /// Reads a JSON config. Relative dataset and feature-group paths are
    /// taken relative to the config file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut config: Self = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let DatasetSpec::Csv {
            path: csv_path,
            feature_groups,
            ..
        } = &mut config.dataset
        {
            if csv_path.is_relative() {
                *csv_path = base.join(&*csv_path);
            }
            if let Value::String(groups) = feature_groups {
                let p = Path::new(groups.as_str());
                if p.is_relative() {
                    *groups = base.join(p).to_string_lossy().into_owned();
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if self.score_kinds.is_empty() {
            return Err(Error::Config("no score kinds selected".into()));
        }
        if self.alphas.is_empty() {
            return Err(Error::Config("empty alpha grid".into()));
        }
        for &a in &self.alphas {
            in_unit("alpha", a)?;
        }
        if let Some(a) = self.alpha_prime {
            in_unit("alpha_prime", a)?;
        }
        if let Some(a) = self.cqr_alpha {
            in_unit("cqr_alpha", a)?;
        }
        in_unit("dkw_delta", self.dkw_delta)?;
        if !(self.ws_delta > 0.0 && self.ws_delta <= 1.0) {
            return Err(Error::Config(format!("ws_delta = {} is outside (0, 1]", self.ws_delta)));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        let (_, _, merge) = self.split.sizes();
        if let Some(m) = self.methods.iter().find(|m| m.needs_merge()) {
            if merge == 0 || self.split.mode == SplitMode::NoMerge {
                return Err(Error::Config(format!("method `{m}` needs a merging set")));
            }
        }
        if let DatasetSpec::Synthetic { noise_sd, .. } = self.dataset {
            if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
                return Err(Error::Config(format!("noise_sd = {noise_sd} is invalid")));
            }
        }
        Ok(())
    }

    pub fn resolved_cqr_alpha(&self) -> f64 {
        self.cqr_alpha
            .or(self.alpha_prime)
            .unwrap_or(self.alphas[0])
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }
}

/// Loaded data shared by every trial.
#[derive(Debug, Clone)]
pub struct PreparedData {
    source: Source,
    assignment: FeatureAssignment,
    pub dropped_rows: usize,
}

#[derive(Debug, Clone)]
enum Source {
    Synthetic { noise_sd: f64 },
    Piecewise { task: PiecewiseTask },
    Csv {
        dataset: Dataset,
        normalize: bool,
        tagger: Option<(PercentileTagger, usize)>,
    },
}

impl PreparedData {
    pub fn load(spec: &DatasetSpec) -> Result<Self> {
        match spec {
            DatasetSpec::Synthetic {
                assignment,
                noise_sd,
            } => Ok(Self {
                source: Source::Synthetic {
                    noise_sd: *noise_sd,
                },
                assignment: assignment.assignment(),
                dropped_rows: 0,
            }),
            DatasetSpec::Piecewise { task } => Ok(Self {
                source: Source::Piecewise { task: *task },
                assignment: PiecewiseTask::assignment(),
                dropped_rows: 0,
            }),
            DatasetSpec::Csv {
                path,
                schema,
                feature_groups,
                normalize,
                group_tagger,
            } => {
                let loaded = load_csv(path, schema)?;
                let groups = match feature_groups {
                    Value::String(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
                    other => other.clone(),
                };
                let assignment =
                    FeatureAssignment::from_json(&groups, &loaded.dataset.column_names)?;
                let tagger = group_tagger
                    .as_ref()
                    .map(|t| Ok::<_, Error>((t.clone(), loaded.dataset.column(&t.column)?)))
                    .transpose()?;
                Ok(Self {
                    source: Source::Csv {
                        dataset: loaded.dataset,
                        normalize: *normalize,
                        tagger,
                    },
                    assignment,
                    dropped_rows: loaded.dropped_rows,
                })
            }
        }
    }

    pub fn assignment(&self) -> &FeatureAssignment {
        &self.assignment
    }

    fn trial_dataset(&self, split: &SplitConfig, seed: u64) -> Option<Dataset> {
        let n = split.fitted_rows() + split.test_cap.unwrap_or(DEFAULT_SYNTHETIC_TEST_SIZE);
        match &self.source {
            Source::Synthetic { noise_sd } => Some(gen_synthetic_with_noise(n, seed, *noise_sd)),
            Source::Piecewise { task } => Some(task.generate(n, seed)),
            Source::Csv { .. } => None,
        }
    }
}

/// Inputs and labels of one split, after optional normalization.
struct Part {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl Part {
    fn pairs(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.x.iter().map(Vec::as_slice).zip(self.y.iter().copied())
    }
}

/// One row of `trials.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub method: Method,
    pub score_kind: ScoreKind,
    pub alpha: f64,
    pub marginal_cov: f64,
    pub ws_cov: f64,
    pub delta_cov: f64,
    pub mean_size: f64,
    pub unbounded_count: usize,
    /// Correction factor applied; empty for methods without one.
    pub m_hat: Option<f64>,
    pub seed: u64,
}

/// One row of `groups.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub trial: usize,
    pub method: Method,
    pub score_kind: ScoreKind,
    pub alpha: f64,
    pub group: String,
    pub coverage: f64,
    pub mean_size: f64,
    pub count: usize,
}

/// Per-point outcomes for one method, score kind and level.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub method: Method,
    pub score_kind: ScoreKind,
    pub alpha: f64,
    pub m_hat: Option<f64>,
    pub seed: u64,
    pub records: Vec<PointRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MStarEntry {
    pub trial: usize,
    pub score_kind: ScoreKind,
    pub m_star: f64,
    pub merge_size: usize,
}

#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub trial: usize,
    pub seed: u64,
    pub results: Vec<TrialResult>,
    pub rows: Vec<TrialRow>,
    pub groups: Vec<GroupRow>,
    pub m_star: Vec<MStarEntry>,
    /// Worst-slice evaluations that found no qualifying slab.
    pub ws_fallbacks: usize,
}

/// Runs one trial with seed `config.seed + trial`.
pub fn run_trial(config: &ExperimentConfig, data: &PreparedData, trial: usize) -> Result<TrialOutput> {
    let seed = config.trial_seed(trial);
    let generated = data.trial_dataset(&config.split, seed);
    let dataset = match (&generated, &data.source) {
        (Some(d), _) => d,
        (None, Source::Csv { dataset, .. }) => dataset,
        (None, _) => unreachable!("generated sources always produce data"),
    };
    data.assignment.validate(dataset.dim())?;
    let plan = make_split(dataset.len(), &config.split, seed)?;

    let standardizer = match &data.source {
        Source::Csv { normalize: true, .. } => Some(Standardizer::fit(&dataset.rows, &plan.train_idx)),
        _ => None,
    };
    let part = |idx: &[usize]| {
        let (x, y) = dataset.select(idx);
        let x = match &standardizer {
            Some(s) => s.transform(&x),
            None => x,
        };
        Part { x, y }
    };
    let train = part(&plan.train_idx);
    let cal = part(&plan.cal_idx);
    let merge = part(&plan.merge_idx);
    let cal_merge = part(&plan.cal_and_merge());
    let test = part(&plan.test_idx);
    if test.y.is_empty() {
        return Err(Error::Split {
            available: dataset.len(),
            required: config.split.fitted_rows() + 1,
        });
    }

    let tags: Option<Vec<String>> = match &data.source {
        Source::Csv {
            tagger: Some((tagger, col)),
            ..
        } => {
            let reference: Vec<f64> = plan.train_idx.iter().map(|&i| dataset.rows[i][*col]).collect();
            let values: Vec<f64> = plan.test_idx.iter().map(|&i| dataset.rows[i][*col]).collect();
            Some(tagger.tag(&reference, &values)?)
        }
        _ => None,
    };
    let family = SlabFamily::draw(&test.x, config.n_slabs, seed ^ SLAB_SEED_SALT);

    let mut output = TrialOutput {
        trial,
        seed,
        results: Vec::new(),
        rows: Vec::new(),
        groups: Vec::new(),
        m_star: Vec::new(),
        ws_fallbacks: 0,
    };
    for &kind in &config.score_kinds {
        let parts = Parts {
            train: &train,
            cal: &cal,
            merge: &merge,
            cal_merge: &cal_merge,
            test: &test,
        };
        let results = run_score_kind(config, &data.assignment, kind, seed, &parts, &mut output)?;
        for mut result in results {
            if let Some(tags) = &tags {
                for (r, t) in result.records.iter_mut().zip(tags) {
                    r.group = Some(t.clone());
                }
                for (group, stats) in group_coverage(&result.records)? {
                    output.groups.push(GroupRow {
                        trial,
                        method: result.method,
                        score_kind: kind,
                        alpha: result.alpha,
                        group,
                        coverage: stats.coverage,
                        mean_size: stats.mean_size,
                        count: stats.count,
                    });
                }
            }
            let marginal = marginal_coverage(&result.records)?;
            let ws = ws_coverage(&result.records, &family, config.ws_delta)?;
            output.ws_fallbacks += usize::from(ws.fallback);
            let size = mean_set_size(&result.records)?;
            output.rows.push(TrialRow {
                trial,
                method: result.method,
                score_kind: kind,
                alpha: result.alpha,
                marginal_cov: marginal,
                ws_cov: ws.value,
                delta_cov: marginal - ws.value,
                mean_size: size.mean,
                unbounded_count: size.unbounded_count,
                m_hat: result.m_hat,
                seed,
            });
            output.results.push(result);
        }
    }
    Ok(output)
}

fn record(set: &IntervalSet, y: f64) -> PointRecord {
    PointRecord {
        covered: set.contains(y),
        set_size: set.measure(),
        group: None,
    }
}

/// How one method turns an aggregated profile into a set.
enum Rule {
    Scaled(f64),
    Ecdf(Option<DkwBudget>),
}

struct Parts<'a> {
    train: &'a Part,
    cal: &'a Part,
    merge: &'a Part,
    cal_merge: &'a Part,
    test: &'a Part,
}

fn run_score_kind(
    config: &ExperimentConfig,
    assignment: &FeatureAssignment,
    kind: ScoreKind,
    seed: u64,
    parts: &Parts<'_>,
    output: &mut TrialOutput,
) -> Result<Vec<TrialResult>> {
    let moe = MoeModel::fit(
        &parts.train.x,
        &parts.train.y,
        &assignment.groups,
        kind,
        config.resolved_cqr_alpha(),
        &config.training,
    )?;
    let experts = moe
        .experts
        .iter()
        .map(|e| CalibratedExpert::calibrate(e, parts.cal.pairs()))
        .collect::<Result<Vec<_>>>()?;

    let wa_methods: Vec<Method> = config
        .methods
        .iter()
        .copied()
        .filter(|m| *m != Method::Split)
        .collect();
    let sample = if wa_methods.iter().any(Method::needs_merge) {
        let p_all = parts
            .merge
            .pairs()
            .map(|(x, y)| {
                let p: Vec<f64> = experts.iter().map(|e| e.p_value(x, y)).collect();
                aggregation::weighted_p(&p, &moe.route(x))
            })
            .collect::<Result<Vec<_>>>()?;
        let sample = MergeSample::new(p_all)?;
        output.m_star.push(MStarEntry {
            trial: output.trial,
            score_kind: kind,
            m_star: m_star(&sample).factor,
            merge_size: sample.len(),
        });
        Some(sample)
    } else {
        None
    };

    // (method, alpha, rule) for every aggregated set built per test point
    let mut rules: Vec<(Method, f64, Rule)> = Vec::new();
    for &alpha in &config.alphas {
        let alpha_prime = config.alpha_prime.unwrap_or(alpha);
        for &method in &wa_methods {
            let rule = match (method, &sample) {
                (Method::WaUnscaled, _) => Rule::Scaled(1.0),
                (Method::WaAll, Some(s)) => Rule::Scaled(m_star(s).factor),
                (Method::WaTargeted, Some(s)) => Rule::Scaled(m_targeted(s, alpha_prime)?.factor),
                (Method::WaPrecise, Some(s)) => Rule::Scaled(m_precise(s, alpha_prime)?.factor),
                (Method::Ecdf, Some(_)) => Rule::Ecdf(None),
                (Method::EcdfDkw, Some(s)) => Rule::Ecdf(Some(DkwBudget::new(s.len(), config.dkw_delta)?)),
                _ => unreachable!("merge sample exists for merge-based methods"),
            };
            rules.push((method, alpha, rule));
        }
    }

    let mut records: Vec<Vec<PointRecord>> = vec![Vec::with_capacity(parts.test.y.len()); rules.len()];
    if !rules.is_empty() {
        for (x, y) in parts.test.pairs() {
            let profiles: Vec<PValueProfile> = experts.iter().map(|e| e.profile(x)).collect();
            let p_all = aggregation::aggregate_profile(&profiles, &moe.route(x))?;
            for ((_, alpha, rule), out) in rules.iter().zip(records.iter_mut()) {
                let set = match rule {
                    Rule::Scaled(factor) => scaled_set(&p_all, *factor, *alpha),
                    Rule::Ecdf(dkw) => ecdf_set(
                        &p_all,
                        sample.as_ref().expect("merge sample"),
                        *alpha,
                        dkw.as_ref(),
                    ),
                };
                out.push(record(&set, y));
            }
        }
    }

    let mut results = Vec::new();
    if config.methods.contains(&Method::Split) {
        let blackbox = CalibratedExpert::calibrate(&moe, parts.cal_merge.pairs())?;
        for &alpha in &config.alphas {
            let records = parts
                .test
                .pairs()
                .map(|(x, y)| record(&blackbox.profile(x).threshold_set(alpha), y))
                .collect();
            results.push(TrialResult {
                method: Method::Split,
                score_kind: kind,
                alpha,
                m_hat: None,
                seed,
                records,
            });
        }
    }
    for ((method, alpha, rule), records) in rules.into_iter().zip(records) {
        results.push(TrialResult {
            method,
            score_kind: kind,
            alpha,
            m_hat: match rule {
                Rule::Scaled(f) => Some(f),
                Rule::Ecdf(_) => None,
            },
            seed,
            records,
        });
    }
    Ok(results)
}

/// Mean and 95% normal-approximation interval of one metric. Fields are
/// `None` when the metric is infinite in some trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Self {
                mean: None,
                sd: None,
                ci_low: None,
                ci_high: None,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let half = 1.96 * sd / n.sqrt();
        Self {
            mean: Some(mean),
            sd: Some(sd),
            ci_low: Some(mean - half),
            ci_high: Some(mean + half),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub method: Method,
    pub score_kind: ScoreKind,
    pub alpha: f64,
    pub trials: usize,
    pub marginal_cov: MetricSummary,
    pub ws_cov: MetricSummary,
    pub delta_cov: MetricSummary,
    pub mean_size: MetricSummary,
    /// Trials in which some set was unbounded.
    pub unbounded_trials: usize,
    pub mean_unbounded_count: f64,
    pub m_hat: MetricSummary,
}

impl ConfigSummary {
    pub fn key(&self) -> (Method, ScoreKind, f64) {
        (self.method, self.score_kind, self.alpha)
    }
}

/// Groups rows by method, score kind and `alpha`, in order of first
/// appearance.
pub fn summarize_rows(rows: &[TrialRow]) -> Vec<ConfigSummary> {
    let mut order: Vec<(Method, ScoreKind, u64)> = Vec::new();
    let mut groups: BTreeMap<usize, Vec<&TrialRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.method, r.score_kind, r.alpha.to_bits());
        let pos = order.iter().position(|k| *k == key).unwrap_or_else(|| {
            order.push(key);
            order.len() - 1
        });
        groups.entry(pos).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(pos, rs)| {
            let (method, score_kind, alpha) = order[pos];
            let col = |f: fn(&TrialRow) -> f64| rs.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let m_hat: Vec<f64> = rs.iter().filter_map(|r| r.m_hat).collect();
            ConfigSummary {
                method,
                score_kind,
                alpha: f64::from_bits(alpha),
                trials: rs.len(),
                marginal_cov: MetricSummary::of(&col(|r| r.marginal_cov)),
                ws_cov: MetricSummary::of(&col(|r| r.ws_cov)),
                delta_cov: MetricSummary::of(&col(|r| r.delta_cov)),
                mean_size: MetricSummary::of(&col(|r| r.mean_size)),
                unbounded_trials: rs.iter().filter(|r| r.unbounded_count > 0).count(),
                mean_unbounded_count: rs.iter().map(|r| r.unbounded_count as f64).sum::<f64>()
                    / rs.len() as f64,
                m_hat: MetricSummary::of(&m_hat),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedTrial {
    pub trial: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub version: String,
    pub trial_seeds: Vec<u64>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub elapsed_seconds: f64,
    pub dropped_rows: usize,
    pub resolved_cqr_alpha: f64,
    pub m_star: Vec<MStarEntry>,
    pub ws_fallbacks: usize,
    pub failed_trials: Vec<FailedTrial>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub rows: Vec<TrialRow>,
    pub summary: Vec<ConfigSummary>,
    pub manifest: RunManifest,
}

impl RunReport {
    pub fn succeeded(&self) -> bool {
        self.manifest.failed_trials.is_empty()
    }

    pub fn find(&self, method: Method, score_kind: ScoreKind, alpha: f64) -> Option<&ConfigSummary> {
        self.summary
            .iter()
            .find(|s| s.method == method && s.score_kind == score_kind && s.alpha == alpha)
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Runs every trial in parallel; results come back in trial order.
pub fn run_trials(config: &ExperimentConfig, data: &PreparedData) -> Vec<Result<TrialOutput>> {
    (0..config.trials)
        .into_par_iter()
        .map(|t| {
            run_trial(config, data, t).map_err(|e| Error::Trial {
                trial: t,
                source: Box::new(e),
            })
        })
        .collect()
}

pub const TRIALS_FILE: &str = "trials.csv";
pub const GROUPS_FILE: &str = "groups.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the experiment and writes its files. Failed trials are listed in
/// the manifest; the other trials are still written.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let started_unix = unix_now();
    let clock = Instant::now();
    let data = PreparedData::load(&config.dataset)?;
    fs::create_dir_all(&config.output_dir)?;

    let mut rows = Vec::new();
    let mut groups = Vec::new();
    let mut m_star = Vec::new();
    let mut failed_trials = Vec::new();
    let mut ws_fallbacks = 0;
    for (t, outcome) in run_trials(config, &data).into_iter().enumerate() {
        match outcome {
            Ok(out) => {
                rows.extend(out.rows);
                groups.extend(out.groups);
                m_star.extend(out.m_star);
                ws_fallbacks += out.ws_fallbacks;
            }
            Err(e) => failed_trials.push(FailedTrial {
                trial: t,
                seed: config.trial_seed(t),
                error: e.to_string(),
            }),
        }
    }

    write_csv(&config.output_dir.join(TRIALS_FILE), &rows)?;
    if !groups.is_empty() {
        write_csv(&config.output_dir.join(GROUPS_FILE), &groups)?;
    }
    let summary = summarize_rows(&rows);
    fs::write(
        config.output_dir.join(SUMMARY_FILE),
        serde_json::to_string_pretty(&summary)?,
    )?;
    let manifest = RunManifest {
        config: config.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        trial_seeds: (0..config.trials).map(|t| config.trial_seed(t)).collect(),
        started_unix,
        finished_unix: unix_now(),
        elapsed_seconds: clock.elapsed().as_secs_f64(),
        dropped_rows: data.dropped_rows,
        resolved_cqr_alpha: config.resolved_cqr_alpha(),
        m_star,
        ws_fallbacks,
        failed_trials,
    };
    fs::write(
        config.output_dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(RunReport {
        output_dir: config.output_dir.clone(),
        rows,
        summary,
        manifest,
    })
}

/// Reads `trials.csv` from a finished run.
pub fn read_trials(dir: &Path) -> Result<Vec<TrialRow>> {
    let mut reader = csv::Reader::from_path(dir.join(TRIALS_FILE))?;
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Recomputes `summary.json` from `trials.csv`.
pub fn summarize(dir: &Path) -> Result<Vec<ConfigSummary>> {
    let summary = summarize_rows(&read_trials(dir)?);
    fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
