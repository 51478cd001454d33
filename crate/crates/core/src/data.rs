//! Datasets, synthetic generators, CSV ingestion and train/calibration/merge
//! splits.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::{Error, Result};

/// Dimension of the synthetic regression task.
pub const SYNTHETIC_DIM: usize = 16;
/// Noise standard deviation of the synthetic regression task.
pub const SYNTHETIC_NOISE_SD: f64 = 0.1;

/// Features (row-major) and real labels. Class labels are stored as class
/// indices, with their names in `class_names`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
    pub column_names: Vec<String>,
    pub class_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<f64>, column_names: Vec<String>) -> Result<Self> {
        let d = column_names.len();
        if rows.len() != labels.len() {
            return Err(Error::Config(format!(
                "{} feature rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if d == 0 {
            return Err(Error::Config("a dataset needs at least one feature".into()));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::Config(format!("row {i} has {} values, expected {d}", rows[i].len())));
        }
        let finite = rows.iter().flatten().chain(&labels).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("dataset contains non-finite values".into()));
        }
        Ok(Self {
            rows,
            labels,
            column_names,
            class_names: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.column_names.len()
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.column_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Schema(name.to_string()))
    }

    /// Copies of the rows and labels at `idx`.
    pub fn select(&self, idx: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            idx.iter().map(|&i| self.rows[i].clone()).collect(),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// Writes a header row followed by one row per sample, label last.
    pub fn write_csv(&self, path: &Path, label_name: &str) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.column_names.iter().map(String::as_str).chain([label_name]))?;
        for (row, y) in self.rows.iter().zip(&self.labels) {
            w.write_record(row.iter().chain([y]).map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn numbered_columns(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("x{j}")).collect()
}

/// 16 standard normal features, label = row sum + N(0, 0.1^2) noise.
pub fn gen_synthetic(n: usize, seed: u64) -> Dataset {
    gen_synthetic_with_noise(n, seed, SYNTHETIC_NOISE_SD)
}

/// [`gen_synthetic`] with a chosen noise level; `noise_sd = 0` gives exact
/// row sums.
pub fn gen_synthetic_with_noise(n: usize, seed: u64, noise_sd: f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..SYNTHETIC_DIM).map(|_| rng.sample(StandardNormal)).collect();
        let eps: f64 = rng.sample(StandardNormal);
        labels.push(row.iter().sum::<f64>() + noise_sd * eps);
        rows.push(row);
    }
    Dataset {
        rows,
        labels,
        column_names: numbered_columns(SYNTHETIC_DIM),
        class_names: None,
    }
}

/// A one-dimensional regression task whose two halves follow different
/// lines with different noise levels.
///
/// `x ~ U(-1, 1)` is encoded as `[x 1{x<0}, 1{x<0}, x 1{x>=0}, 1{x>=0}]`, so
/// an expert restricted to columns `[0, 1]` can only model the left half and
/// one restricted to `[2, 3]` only the right half.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseTask {
    pub left_slope: f64,
    pub right_slope: f64,
    pub left_noise_sd: f64,
    pub right_noise_sd: f64,
}

impl Default for PiecewiseTask {
    fn default() -> Self {
        Self {
            left_slope: 3.0,
            right_slope: -3.0,
            left_noise_sd: 0.2,
            right_noise_sd: 1.0,
        }
    }
}

impl PiecewiseTask {
    pub fn encode(x: f64) -> Vec<f64> {
        let left = if x < 0.0 { 1.0 } else { 0.0 };
        vec![x * left, left, x * (1.0 - left), 1.0 - left]
    }

    /// Expert groups `left = [0, 1]`, `right = [2, 3]`.
    pub fn assignment() -> FeatureAssignment {
        FeatureAssignment::new(vec![("left".into(), vec![0, 1]), ("right".into(), vec![2, 3])])
    }

    pub fn generate(&self, n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x: f64 = rng.random_range(-1.0..1.0);
            let eps: f64 = rng.sample(StandardNormal);
            let y = if x < 0.0 {
                self.left_slope * x + self.left_noise_sd * eps
            } else {
                self.right_slope * x + self.right_noise_sd * eps
            };
            rows.push(Self::encode(x));
            labels.push(y);
        }
        Dataset {
            rows,
            labels,
            column_names: vec!["x_left".into(), "left".into(), "x_right".into(), "right".into()],
            class_names: None,
        }
    }
}

/// Which features each expert sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAssignment {
    pub groups: Vec<(String, Vec<usize>)>,
}

impl FeatureAssignment {
    pub fn new(groups: Vec<(String, Vec<usize>)>) -> Self {
        Self { groups }
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::Config("feature assignment has no groups".into()));
        }
        for (name, idx) in &self.groups {
            if idx.is_empty() {
                return Err(Error::Config(format!("expert `{name}` has no features")));
            }
            if let Some(j) = idx.iter().find(|&&j| j >= dim) {
                return Err(Error::Config(format!(
                    "expert `{name}` uses feature {j} but the data has {dim} columns"
                )));
            }
        }
        Ok(())
    }

    /// Resolves a `{expert_name: [column names]}` JSON object against the
    /// dataset's columns. A name that is not a column but prefixes one-hot
    /// columns (`name=value`) selects all of them.
    pub fn from_json(value: &Value, column_names: &[String]) -> Result<Self> {
        let map: &Map<String, Value> = value
            .as_object()
            .ok_or_else(|| Error::Config("feature groups must be a JSON object".into()))?;
        let mut groups = Vec::with_capacity(map.len());
        for (expert, cols) in map {
            let cols = cols.as_array().ok_or_else(|| {
                Error::Config(format!("feature group `{expert}` must be a list of column names"))
            })?;
            let mut idx = Vec::new();
            for c in cols {
                let c = c
                    .as_str()
                    .ok_or_else(|| Error::Config(format!("non-string column in group `{expert}`")))?;
                idx.extend(resolve_column(c, column_names)?);
            }
            groups.push((expert.clone(), idx));
        }
        let a = Self { groups };
        a.validate(column_names.len())?;
        Ok(a)
    }
}

fn resolve_column(name: &str, column_names: &[String]) -> Result<Vec<usize>> {
    if let Some(j) = column_names.iter().position(|c| c == name) {
        return Ok(vec![j]);
    }
    let prefix = format!("{name}=");
    let hits: Vec<usize> = column_names
        .iter()
        .enumerate()
        .filter(|(_, c)| c.starts_with(&prefix))
        .map(|(j, _)| j)
        .collect();
    if hits.is_empty() {
        Err(Error::Schema(name.to_string()))
    } else {
        Ok(hits)
    }
}

/// The four expert feature layouts of the 16-feature synthetic task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SyntheticAssignment {
    /// Expert `k` sees every feature except `4k`.
    F15of16,
    /// Expert `k` sees every feature except `4k..4k+4`.
    F12of16,
    /// Every expert sees features 0-7 plus its own pair from 8-15.
    Share1of2,
    /// The experts partition the features into blocks of four.
    NoOverlap,
}

impl SyntheticAssignment {
    pub const ALL: [SyntheticAssignment; 4] = [
        SyntheticAssignment::F15of16,
        SyntheticAssignment::F12of16,
        SyntheticAssignment::Share1of2,
        SyntheticAssignment::NoOverlap,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SyntheticAssignment::F15of16 => "F15of16",
            SyntheticAssignment::F12of16 => "F12of16",
            SyntheticAssignment::Share1of2 => "Share1of2",
            SyntheticAssignment::NoOverlap => "NoOverlap",
        }
    }

    pub fn assignment(&self) -> FeatureAssignment {
        let groups = (0..4)
            .map(|k| {
                let idx: Vec<usize> = match self {
                    SyntheticAssignment::F15of16 => (0..16).filter(|&j| j != 4 * k).collect(),
                    SyntheticAssignment::F12of16 => (0..16).filter(|&j| j / 4 != k).collect(),
                    SyntheticAssignment::Share1of2 => (0..8).chain([8 + 2 * k, 9 + 2 * k]).collect(),
                    SyntheticAssignment::NoOverlap => (4 * k..4 * k + 4).collect(),
                };
                (format!("expert{k}"), idx)
            })
            .collect();
        FeatureAssignment { groups }
    }
}

impl fmt::Display for SyntheticAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SyntheticAssignment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown feature assignment `{s}`")))
    }
}

/// Which CSV columns to read.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CsvSchema {
    pub label: String,
    /// Feature columns in order; every non-label column when absent.
    #[serde(default)]
    pub features: Option<Vec<String>>,
    /// Feature columns expanded into `name=value` indicator columns.
    #[serde(default)]
    pub categorical: Vec<String>,
    /// Treat the label as a class name rather than a number.
    #[serde(default)]
    pub categorical_label: bool,
}

#[derive(Debug, Clone)]
pub struct LoadedCsv {
    pub dataset: Dataset,
    /// Rows skipped for a missing or unparsable value.
    pub dropped_rows: usize,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "N/A" | "NaN" | "nan" | "?" | "null")
}

fn parse_number(cell: &str) -> Option<f64> {
    if is_missing(cell) {
        return None;
    }
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a headered CSV file. Rows with any missing or non-numeric value in
/// a used column are dropped and counted.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<LoadedCsv> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(name.to_string()))
    };
    let label_col = find(&schema.label)?;
    let feature_names: Vec<String> = match &schema.features {
        Some(f) => f.clone(),
        None => header.iter().filter(|h| **h != schema.label).cloned().collect(),
    };
    let feature_cols = feature_names
        .iter()
        .map(|f| find(f))
        .collect::<Result<Vec<_>>>()?;
    let categorical: Vec<bool> = feature_names
        .iter()
        .map(|f| schema.categorical.contains(f))
        .collect();
    if let Some(c) = schema.categorical.iter().find(|c| !feature_names.contains(c)) {
        return Err(Error::Schema(c.clone()));
    }

    struct Raw {
        cells: Vec<String>,
        label: String,
    }
    let mut raw = Vec::new();
    let mut dropped = 0;
    for record in reader.records() {
        let record = record?;
        let get = |j: usize| record.get(j).unwrap_or("").trim().to_string();
        let cells: Vec<String> = feature_cols.iter().map(|&j| get(j)).collect();
        let label = get(label_col);
        let usable = !is_missing(&label)
            && (schema.categorical_label || parse_number(&label).is_some())
            && cells
                .iter()
                .zip(&categorical)
                .all(|(c, &cat)| if cat { !is_missing(c) } else { parse_number(c).is_some() });
        if usable {
            raw.push(Raw { cells, label });
        } else {
            dropped += 1;
        }
    }
    if raw.is_empty() {
        return Err(Error::EmptyData(path.to_path_buf()));
    }

    // one-hot levels in sorted order
    let levels: Vec<Vec<String>> = categorical
        .iter()
        .enumerate()
        .map(|(j, &cat)| {
            if !cat {
                return Vec::new();
            }
            let set: BTreeSet<&str> = raw.iter().map(|r| r.cells[j].as_str()).collect();
            set.into_iter().map(str::to_string).collect()
        })
        .collect();
    let mut column_names = Vec::new();
    for (j, name) in feature_names.iter().enumerate() {
        if categorical[j] {
            column_names.extend(levels[j].iter().map(|l| format!("{name}={l}")));
        } else {
            column_names.push(name.clone());
        }
    }

    let class_names: Option<Vec<String>> = schema.categorical_label.then(|| {
        let set: BTreeSet<&str> = raw.iter().map(|r| r.label.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    });
    let mut rows = Vec::with_capacity(raw.len());
    let mut labels = Vec::with_capacity(raw.len());
    for r in &raw {
        let mut row = Vec::with_capacity(column_names.len());
        for (j, cell) in r.cells.iter().enumerate() {
            if categorical[j] {
                row.extend(levels[j].iter().map(|l| if l == cell { 1.0 } else { 0.0 }));
            } else {
                row.push(parse_number(cell).expect("checked above"));
            }
        }
        rows.push(row);
        labels.push(match &class_names {
            Some(names) => names.iter().position(|n| *n == r.label).expect("label level") as f64,
            None => parse_number(&r.label).expect("checked above"),
        });
    }
    let mut dataset = Dataset::new(rows, labels, column_names)?;
    dataset.class_names = class_names;
    Ok(LoadedCsv {
        dataset,
        dropped_rows: dropped,
    })
}

/// Per-column z-scoring with statistics from a subset of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    /// Constant columns keep scale 1 so they map to zero.
    pub fn fit(rows: &[Vec<f64>], idx: &[usize]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let n = idx.len().max(1) as f64;
        let mut means = vec![0.0; d];
        for &i in idx {
            for (m, v) in means.iter_mut().zip(&rows[i]) {
                *m += v / n;
            }
        }
        let mut vars = vec![0.0; d];
        for &i in idx {
            for ((s, v), m) in vars.iter_mut().zip(&rows[i]).zip(&means) {
                *s += (v - m).powi(2) / n;
            }
        }
        let scales = vars
            .into_iter()
            .map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
            .collect();
        Self { means, scales }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.means)
            .zip(&self.scales)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform_row(r)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// 50/40/10 train/calibration/merge.
    WithMerge,
    /// 50/50 train/calibration.
    NoMerge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub budget: usize,
    pub mode: SplitMode,
    /// Replaces the merge share; train and calibration sizes stay at their
    /// budget fractions and the merge set is drawn on top.
    pub merge_size: Option<usize>,
    /// Largest test set; all remaining rows when absent.
    pub test_cap: Option<usize>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            budget: 400,
            mode: SplitMode::WithMerge,
            merge_size: None,
            test_cap: Some(2000),
        }
    }
}

impl SplitConfig {
    /// `(train, cal, merge)` sizes.
    pub fn sizes(&self) -> (usize, usize, usize) {
        let train = self.budget / 2;
        match self.mode {
            SplitMode::NoMerge => (train, self.budget - train, 0),
            SplitMode::WithMerge => {
                let cal = self.budget * 2 / 5;
                let merge = self.merge_size.unwrap_or(self.budget - train - cal);
                (train, cal, merge)
            }
        }
    }

    /// Rows consumed before the test set.
    pub fn fitted_rows(&self) -> usize {
        let (a, b, c) = self.sizes();
        a + b + c
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_idx: Vec<usize>,
    pub cal_idx: Vec<usize>,
    pub merge_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub seed: u64,
}

impl SplitPlan {
    /// Calibration and merge indices together: the calibration set of a
    /// method that needs no merging set, on the same training data.
    pub fn cal_and_merge(&self) -> Vec<usize> {
        self.cal_idx.iter().chain(&self.merge_idx).copied().collect()
    }
}

/// Draws a uniformly random split of `0..n_total`.
///
/// The split is a prefix decomposition of one seeded permutation, so a
/// `NoMerge` plan's calibration set equals the calibration and merge sets of
/// the `WithMerge` plan with the same seed and budget.
pub fn make_split(n_total: usize, config: &SplitConfig, seed: u64) -> Result<SplitPlan> {
    let (n_train, n_cal, n_merge) = config.sizes();
    let required = n_train + n_cal + n_merge + 1;
    if n_total < required || n_train == 0 || n_cal == 0 {
        return Err(Error::Split {
            available: n_total,
            required,
        });
    }
    let mut perm: Vec<usize> = (0..n_total).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut rest = perm.as_slice();
    let mut take = |k: usize| {
        let (head, tail) = rest.split_at(k.min(rest.len()));
        rest = tail;
        head.to_vec()
    };
    let train_idx = take(n_train);
    let cal_idx = take(n_cal);
    let merge_idx = take(n_merge);
    let test_idx = take(config.test_cap.unwrap_or(usize::MAX));
    Ok(SplitPlan {
        train_idx,
        cal_idx,
        merge_idx,
        test_idx,
        seed,
    })
}
