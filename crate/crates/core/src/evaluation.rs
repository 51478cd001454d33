//! Coverage and set-size metrics.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Outcome at one test point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub covered: bool,
    /// Lebesgue measure (regression) or label count (classification);
    /// infinite for unbounded sets.
    pub set_size: f64,
    #[serde(default)]
    pub group: Option<String>,
}

fn require_nonempty(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::Config("metrics need at least one test point".into()))
    } else {
        Ok(())
    }
}

pub fn marginal_coverage(records: &[PointRecord]) -> Result<f64> {
    require_nonempty(records.len())?;
    Ok(records.iter().filter(|r| r.covered).count() as f64 / records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetSizeSummary {
    /// Infinite when any set is unbounded.
    pub mean: f64,
    pub unbounded_count: usize,
}

pub fn mean_set_size(records: &[PointRecord]) -> Result<SetSizeSummary> {
    require_nonempty(records.len())?;
    let unbounded_count = records.iter().filter(|r| r.set_size.is_infinite()).count();
    let mean = if unbounded_count > 0 {
        f64::INFINITY
    } else {
        records.iter().map(|r| r.set_size).sum::<f64>() / records.len() as f64
    };
    Ok(SetSizeSummary {
        mean,
        unbounded_count,
    })
}

/// `{x : a <= v.x <= b}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabSpec {
    pub v: Vec<f64>,
    pub a: f64,
    pub b: f64,
}

impl SlabSpec {
    pub fn contains(&self, x: &[f64]) -> bool {
        let t: f64 = self.v.iter().zip(x).map(|(v, x)| v * x).sum();
        self.a <= t && t <= self.b
    }
}

/// Random slabs over a fixed set of test inputs, with their members.
///
/// Drawing once per trial and reusing the family for every method makes
/// worst-slice numbers comparable across methods.
#[derive(Debug, Clone)]
pub struct SlabFamily {
    pub slabs: Vec<SlabSpec>,
    members: Vec<Vec<u32>>,
    n_points: usize,
}

fn empirical_quantile(sorted: &[f64], u: f64) -> f64 {
    let i = ((u * sorted.len() as f64).floor() as usize).min(sorted.len() - 1);
    sorted[i]
}

impl SlabFamily {
    /// Draws `n_slabs` directions uniformly on the unit sphere; each slab's
    /// ends are the empirical quantiles of the projections at two uniform
    /// levels.
    pub fn draw(rows: &[Vec<f64>], n_slabs: usize, seed: u64) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut slabs = Vec::with_capacity(n_slabs);
        if rows.is_empty() || d == 0 {
            return Self {
                slabs,
                members: Vec::new(),
                n_points: rows.len(),
            };
        }
        for _ in 0..n_slabs {
            let v = loop {
                let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    break g.into_iter().map(|x| x / norm).collect::<Vec<f64>>();
                }
            };
            let u1: f64 = rng.random();
            let u2: f64 = rng.random();
            let mut proj: Vec<f64> = rows
                .iter()
                .map(|x| v.iter().zip(x).map(|(v, x)| v * x).sum())
                .collect();
            proj.sort_by(f64::total_cmp);
            let (qa, qb) = (empirical_quantile(&proj, u1), empirical_quantile(&proj, u2));
            slabs.push(SlabSpec {
                v,
                a: qa.min(qb),
                b: qa.max(qb),
            });
        }
        let members = slabs
            .par_iter()
            .map(|s| {
                rows.iter()
                    .enumerate()
                    .filter(|(_, x)| s.contains(x))
                    .map(|(i, _)| i as u32)
                    .collect()
            })
            .collect();
        Self {
            slabs,
            members,
            n_points: rows.len(),
        }
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn members(&self, slab: usize) -> &[u32] {
        &self.members[slab]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WsCoverage {
    pub value: f64,
    /// Slabs holding at least a `delta` fraction of the points.
    pub kept: usize,
    /// No slab qualified and `value` is the marginal coverage.
    pub fallback: bool,
}

/// Minimum coverage over slabs containing at least `delta * n` points.
pub fn ws_coverage(records: &[PointRecord], family: &SlabFamily, delta: f64) -> Result<WsCoverage> {
    require_nonempty(records.len())?;
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Config(format!("slab mass {delta} is outside (0, 1]")));
    }
    if family.n_points != records.len() {
        return Err(Error::Config(format!(
            "slabs were drawn over {} points but {} records were given",
            family.n_points,
            records.len()
        )));
    }
    let min_count = delta * records.len() as f64;
    let (worst, kept) = family
        .members
        .iter()
        .filter(|m| !m.is_empty() && m.len() as f64 >= min_count)
        .map(|m| m.iter().filter(|&&i| records[i as usize].covered).count() as f64 / m.len() as f64)
        .fold((f64::INFINITY, 0usize), |(w, k), c| (w.min(c), k + 1));
    if kept == 0 {
        return Ok(WsCoverage {
            value: marginal_coverage(records)?,
            kept,
            fallback: true,
        });
    }
    Ok(WsCoverage {
        value: worst,
        kept,
        fallback: false,
    })
}

/// Marginal minus worst-slice coverage; negative values are kept.
pub fn delta_coverage(records: &[PointRecord], family: &SlabFamily, delta: f64) -> Result<f64> {
    Ok(marginal_coverage(records)? - ws_coverage(records, family, delta)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub coverage: f64,
    pub mean_size: f64,
    pub count: usize,
}

pub const ALL_GROUPS: &str = "All";

fn group_stats(records: &[&PointRecord]) -> GroupStats {
    let n = records.len() as f64;
    GroupStats {
        coverage: records.iter().filter(|r| r.covered).count() as f64 / n,
        mean_size: records.iter().map(|r| r.set_size).sum::<f64>() / n,
        count: records.len(),
    }
}

/// Per-group coverage and size, plus an `"All"` entry over every record.
/// Untagged records only count towards `"All"`.
pub fn group_coverage(records: &[PointRecord]) -> Result<BTreeMap<String, GroupStats>> {
    require_nonempty(records.len())?;
    let mut by_group: BTreeMap<String, Vec<&PointRecord>> = BTreeMap::new();
    for r in records {
        if let Some(g) = &r.group {
            by_group.entry(g.clone()).or_default().push(r);
        }
    }
    let mut out: BTreeMap<String, GroupStats> =
        by_group.into_iter().map(|(g, rs)| (g, group_stats(&rs))).collect();
    let all: Vec<&PointRecord> = records.iter().collect();
    let mut all_stats = group_stats(&all);
    all_stats.coverage = marginal_coverage(records)?;
    out.insert(ALL_GROUPS.to_string(), all_stats);
    Ok(out)
}

/// Tags rows by whether a column exceeds its empirical `quantile`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileTagger {
    pub column: String,
    pub quantile: f64,
    pub above: String,
    pub below: String,
}

impl PercentileTagger {
    /// Threshold from `reference` values; returns one tag per entry of
    /// `values`.
    pub fn tag(&self, reference: &[f64], values: &[f64]) -> Result<Vec<String>> {
        if reference.is_empty() {
            return Err(Error::Config("percentile tagger needs reference values".into()));
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(Error::Config(format!(
                "tagger quantile {} is outside (0, 1)",
                self.quantile
            )));
        }
        let mut sorted = reference.to_vec();
        sorted.sort_by(f64::total_cmp);
        let threshold = empirical_quantile(&sorted, self.quantile);
        Ok(values
            .iter()
            .map(|&v| if v > threshold { &self.above } else { &self.below }.clone())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(covered: bool, set_size: f64) -> PointRecord {
        PointRecord {
            covered,
            set_size,
            group: None,
        }
    }

    #[test]
    fn marginal_examples() {
        assert_eq!(marginal_coverage(&vec![rec(true, 1.0); 4]).unwrap(), 1.0);
        let mut rs = vec![rec(true, 1.0); 9];
        rs.push(rec(false, 1.0));
        assert_eq!(marginal_coverage(&rs).unwrap(), 0.9);
        assert!(marginal_coverage(&[]).is_err());
    }

    #[test]
    fn set_size_examples() {
        let s = mean_set_size(&[rec(true, 2.0), rec(true, 4.0)]).unwrap();
        assert_eq!(s.mean, 3.0);
        assert_eq!(s.unbounded_count, 0);
        let s = mean_set_size(&[rec(true, 2.0), rec(true, f64::INFINITY)]).unwrap();
        assert_eq!(s.mean, f64::INFINITY);
        assert_eq!(s.unbounded_count, 1);
    }

    fn one_d_fixture() -> (Vec<Vec<f64>>, Vec<PointRecord>) {
        let mut rows = Vec::new();
        let mut records = Vec::new();
        for _ in 0..50 {
            rows.push(vec![-1.0]);
            records.push(rec(false, 1.0));
            rows.push(vec![1.0]);
            records.push(rec(true, 1.0));
        }
        (rows, records)
    }

    #[test]
    fn ws_isolates_uncovered_cluster() {
        let (rows, records) = one_d_fixture();
        let family = SlabFamily::draw(&rows, 1000, 3);
        let ws = ws_coverage(&records, &family, 0.4).unwrap();
        assert!(!ws.fallback);
        assert_eq!(ws.value, 0.0);
        assert_eq!(delta_coverage(&records, &family, 0.4).unwrap(), 0.5);
    }

    #[test]
    fn ws_full_mass_equals_marginal() {
        let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64, (i * 7 % 13) as f64]).collect();
        let records: Vec<PointRecord> = (0..200).map(|i| rec(i % 3 != 0, 1.0)).collect();
        let family = SlabFamily::draw(&rows, 1000, 8);
        let ws = ws_coverage(&records, &family, 1.0).unwrap();
        assert_eq!(ws.value, marginal_coverage(&records).unwrap());
        let all = vec![rec(true, 1.0); 200];
        assert_eq!(ws_coverage(&all, &family, 0.2).unwrap().value, 1.0);
        assert_eq!(delta_coverage(&all, &family, 0.2).unwrap(), 0.0);
    }

    #[test]
    fn ws_is_deterministic_and_bounded() {
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|i| vec![(i as f64).sin(), (i as f64 * 0.3).cos(), i as f64 / 300.0])
            .collect();
        let records: Vec<PointRecord> = (0..300).map(|i| rec(i % 5 != 0 || i > 200, 1.0)).collect();
        let a = ws_coverage(&records, &SlabFamily::draw(&rows, 500, 1), 0.2).unwrap();
        let b = ws_coverage(&records, &SlabFamily::draw(&rows, 500, 1), 0.2).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a.value));
        for s in &SlabFamily::draw(&rows, 50, 2).slabs {
            let norm: f64 = s.v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
            assert!(s.a <= s.b);
        }
        assert!(ws_coverage(&records, &SlabFamily::draw(&rows, 5, 1), 0.0).is_err());
    }

    #[test]
    fn group_examples() {
        let tagged = |covered, g: &str| PointRecord {
            covered,
            set_size: 2.0,
            group: Some(g.to_string()),
        };
        let one = group_coverage(&[tagged(true, "a"), tagged(false, "a")]).unwrap();
        assert_eq!(one["a"], one[ALL_GROUPS]);
        let two = group_coverage(&[tagged(true, "a"), tagged(false, "b")]).unwrap();
        assert_eq!(two["a"].coverage, 1.0);
        assert_eq!(two["b"].coverage, 0.0);
        assert_eq!(two[ALL_GROUPS].coverage, 0.5);
        assert_eq!(two[ALL_GROUPS].count, 2);
    }

    #[test]
    fn percentile_tags() {
        let t = PercentileTagger {
            column: "share".into(),
            quantile: 0.75,
            above: "top".into(),
            below: "rest".into(),
        };
        let reference: Vec<f64> = (1..=100).map(f64::from).collect();
        let tags = t.tag(&reference, &[10.0, 76.0, 77.0]).unwrap();
        assert_eq!(tags, vec!["rest", "rest", "top"]);
    }
}
