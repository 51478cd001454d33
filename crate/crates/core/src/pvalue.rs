//! Split-conformal p-value functions.
//!
//! For calibration scores `R_1..R_n` and a test score `s`, the p-value is
//! `(1 + #{i : s < R_i}) / (n + 1)`. Ties do not count. For a fixed input the
//! p-value is a step function of the candidate label, which
//! [`PValueProfile`] stores exactly: breakpoints, the value on each open
//! piece, and the value at each breakpoint.

use crate::interval::IntervalSet;
use crate::score::ScoreContext;
use crate::{Error, Result};

/// Anything that can produce score contexts for inputs.
pub trait ScoreModel {
    fn score_context(&self, x: &[f64]) -> ScoreContext;
}

impl<T: ScoreModel + ?Sized> ScoreModel for &T {
    fn score_context(&self, x: &[f64]) -> ScoreContext {
        (**self).score_context(x)
    }
}

/// Sorted calibration scores of one expert.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    scores: Vec<f64>,
}

impl Calibration {
    pub fn from_scores(mut scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Config("calibration set is empty".into()));
        }
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::Config(format!("non-finite calibration score {bad}")));
        }
        scores.sort_by(f64::total_cmp);
        Ok(Self { scores })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn n_cal(&self) -> usize {
        self.scores.len()
    }

    /// Smallest value any p-value can take, `1 / (n + 1)`.
    pub fn min_p_value(&self) -> f64 {
        1.0 / (self.n_cal() as f64 + 1.0)
    }

    pub fn p_value_of_score(&self, s: f64) -> f64 {
        let larger = self.scores.len() - self.scores.partition_point(|&r| r <= s);
        (1 + larger) as f64 / (self.n_cal() + 1) as f64
    }

    pub fn p_value(&self, ctx: &ScoreContext, y: f64) -> f64 {
        self.p_value_of_score(ctx.score(y))
    }

    /// Finite label spaces: one p-value per candidate label score.
    pub fn label_p_values(&self, label_scores: &[f64]) -> Vec<f64> {
        label_scores.iter().map(|&s| self.p_value_of_score(s)).collect()
    }

    pub fn profile(&self, ctx: &ScoreContext) -> PValueProfile {
        let cuts = ctx.breakpoints(&self.scores);
        let values = if cuts.is_empty() {
            vec![self.p_value(ctx, ctx.center())]
        } else {
            let last = cuts.len() - 1;
            (0..=cuts.len())
                .map(|j| {
                    let y = match j {
                        0 => cuts[0] - 1.0,
                        j if j > last => cuts[last] + 1.0,
                        j => 0.5 * (cuts[j - 1] + cuts[j]),
                    };
                    self.p_value(ctx, y)
                })
                .collect()
        };
        let at_cut_values = cuts.iter().map(|&c| self.p_value(ctx, c)).collect();
        PValueProfile {
            cuts,
            values,
            at_cut_values,
        }
    }
}

/// A fitted predictor together with its calibration scores.
#[derive(Debug, Clone)]
pub struct CalibratedExpert<M> {
    model: M,
    calibration: Calibration,
}

impl<M: ScoreModel> CalibratedExpert<M> {
    /// Scores every calibration pair with `model`.
    pub fn calibrate<'a, I>(model: M, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [f64], f64)>,
    {
        let scores = rows
            .into_iter()
            .map(|(x, y)| model.score_context(x).score(y))
            .collect();
        Ok(Self {
            calibration: Calibration::from_scores(scores)?,
            model,
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn calibration(&self) -> &Calibration {
        &self.calibration
    }

    pub fn n_cal(&self) -> usize {
        self.calibration.n_cal()
    }

    pub fn p_value(&self, x: &[f64], y: f64) -> f64 {
        self.calibration.p_value(&self.model.score_context(x), y)
    }

    pub fn profile(&self, x: &[f64]) -> PValueProfile {
        self.calibration.profile(&self.model.score_context(x))
    }
}

/// Exact step function `y -> p(y)` for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueProfile {
    cuts: Vec<f64>,
    values: Vec<f64>,
    at_cut_values: Vec<f64>,
}

impl PValueProfile {
    /// Profile with no breakpoints.
    pub fn constant(value: f64) -> Self {
        Self {
            cuts: Vec::new(),
            values: vec![value],
            at_cut_values: Vec::new(),
        }
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at_cut_values(&self) -> &[f64] {
        &self.at_cut_values
    }

    pub fn eval(&self, y: f64) -> f64 {
        let j = self.cuts.partition_point(|&c| c < y);
        if self.cuts.get(j) == Some(&y) {
            self.at_cut_values[j]
        } else {
            self.values[j]
        }
    }

    /// Smallest value attained anywhere.
    pub fn min_value(&self) -> f64 {
        self.values
            .iter()
            .chain(&self.at_cut_values)
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// `{y : keep(p(y))}` as an exact interval set.
    pub fn superlevel_set<F: Fn(f64) -> bool>(&self, keep: F) -> IntervalSet {
        let piece_in: Vec<bool> = self.values.iter().map(|&v| keep(v)).collect();
        let cut_in: Vec<bool> = self.at_cut_values.iter().map(|&v| keep(v)).collect();
        IntervalSet::from_step_membership(&self.cuts, &piece_in, &cut_in)
    }

    /// `{y : p(y) > tau}`.
    pub fn threshold_set(&self, tau: f64) -> IntervalSet {
        self.superlevel_set(|p| p > tau)
    }

    /// Pointwise `sum_k weights[k] * profiles[k]`, over the union of all
    /// breakpoints.
    ///
    /// # Panics
    /// If the slices differ in length or are empty.
    pub fn weighted_sum(profiles: &[PValueProfile], weights: &[f64]) -> PValueProfile {
        assert_eq!(profiles.len(), weights.len(), "one weight per profile");
        assert!(!profiles.is_empty(), "at least one profile");

        let mut cuts: Vec<f64> = profiles.iter().flat_map(|p| p.cuts.iter().copied()).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        let mut values = Vec::with_capacity(cuts.len() + 1);
        let mut at_cut_values = Vec::with_capacity(cuts.len());
        // per profile: number of its own cuts already passed
        let mut idx = vec![0usize; profiles.len()];
        for j in 0..=cuts.len() {
            let piece: f64 = profiles
                .iter()
                .zip(weights)
                .zip(&idx)
                .map(|((p, w), &i)| w * p.values[i])
                .sum();
            values.push(piece);
            if j == cuts.len() {
                break;
            }
            let c = cuts[j];
            let mut at = 0.0;
            for ((p, w), i) in profiles.iter().zip(weights).zip(idx.iter_mut()) {
                if p.cuts.get(*i) == Some(&c) {
                    at += w * p.at_cut_values[*i];
                    *i += 1;
                } else {
                    at += w * p.values[*i];
                }
            }
            at_cut_values.push(at);
        }
        PValueProfile {
            cuts,
            values,
            at_cut_values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::Interval;

    fn cal(scores: &[f64]) -> Calibration {
        Calibration::from_scores(scores.to_vec()).unwrap()
    }

    // Direct count of the defining formula, kept separate from the
    // partition-point implementation.
    fn brute_p(scores: &[f64], s: f64) -> f64 {
        let count = scores.iter().filter(|&&r| s < r).count();
        (1 + count) as f64 / (scores.len() + 1) as f64
    }

    #[test]
    fn p_value_examples() {
        let c = cal(&[1.0, 2.0, 3.0]);
        assert_eq!(c.p_value_of_score(1.5), 0.75);
        assert_eq!(c.p_value_of_score(10.0), 0.25);
        assert_eq!(c.p_value_of_score(-1.0), 1.0);
        // ties do not count
        assert_eq!(c.p_value_of_score(2.0), 0.5);
        for s in [0.0, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5] {
            assert_eq!(c.p_value_of_score(s), brute_p(&[1.0, 2.0, 3.0], s));
        }
    }

    #[test]
    fn rejects_empty_or_nonfinite() {
        assert!(Calibration::from_scores(vec![]).is_err());
        assert!(Calibration::from_scores(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn profile_abs_residual_three_scores() {
        let c = cal(&[1.0, 2.0, 3.0]);
        let prof = c.profile(&ScoreContext::point(0.0));
        assert_eq!(prof.cuts(), &[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
        assert_eq!(prof.values(), &[0.25, 0.5, 0.75, 1.0, 0.75, 0.5, 0.25]);
        assert_eq!(prof.at_cut_values(), &[0.25, 0.5, 0.75, 0.75, 0.5, 0.25]);
        assert_eq!(prof.eval(3.0), 0.25);
        // grid oracle
        for i in 0..=1600 {
            let y = -4.0 + i as f64 * 0.005;
            assert_eq!(prof.eval(y), brute_p(&[1.0, 2.0, 3.0], y.abs()), "y = {y}");
        }
    }

    #[test]
    fn profile_single_score_plateau() {
        let prof = cal(&[1.5]).profile(&ScoreContext::point(2.0));
        assert_eq!(prof.cuts(), &[0.5, 3.5]);
        assert_eq!(prof.values(), &[0.5, 1.0, 0.5]);
    }

    #[test]
    fn profile_cqr_zero_score() {
        let prof = cal(&[0.0]).profile(&ScoreContext::quantiles(0.0, 1.0));
        assert_eq!(prof.cuts(), &[0.0, 1.0]);
        assert_eq!(prof.values(), &[0.5, 1.0, 0.5]);
        assert_eq!(prof.at_cut_values(), &[0.5, 0.5]);
    }

    #[test]
    fn profile_without_breakpoints_is_constant() {
        let prof = cal(&[0.0, 0.0]).profile(&ScoreContext::point(1.0));
        assert!(prof.cuts().is_empty());
        // score 0 at the center ties with every calibration score
        assert_eq!(prof.values(), &[1.0 / 3.0]);
        assert!(prof.threshold_set(0.2).is_full());
    }

    #[test]
    fn threshold_examples() {
        let prof = cal(&[1.0, 2.0, 3.0]).profile(&ScoreContext::point(0.0));
        assert_eq!(prof.threshold_set(0.4).parts(), &[Interval::open(-3.0, 3.0).unwrap()]);
        assert_eq!(prof.threshold_set(0.5).parts(), &[Interval::open(-2.0, 2.0).unwrap()]);
        assert!(prof.threshold_set(1.0).is_empty());
        assert!(prof.threshold_set(0.2).is_full());
    }

    #[test]
    fn weighted_sum_matches_pointwise() {
        let a = cal(&[1.0]).profile(&ScoreContext::point(0.0));
        let b = cal(&[1.0]).profile(&ScoreContext::point(10.0));
        let sum = PValueProfile::weighted_sum(&[a.clone(), b.clone()], &[0.5, 0.5]);
        assert_eq!(sum.cuts(), &[-1.0, 1.0, 9.0, 11.0]);
        for i in 0..=4000 {
            let y = -20.0 + i as f64 * 0.01;
            let direct = 0.5 * a.eval(y) + 0.5 * b.eval(y);
            assert!((sum.eval(y) - direct).abs() < 1e-15, "y = {y}");
        }
        let set = sum.threshold_set(0.45 / 1.0);
        assert!(set.is_full());
        let set = sum.threshold_set(0.5);
        assert_eq!(
            set.parts(),
            &[Interval::open(-1.0, 1.0).unwrap(), Interval::open(9.0, 11.0).unwrap()]
        );
    }

    #[test]
    fn label_p_values_enumerate() {
        let c = cal(&[0.1, 0.4, 0.8, 0.9]);
        assert_eq!(c.label_p_values(&[0.05, 0.5, 0.95]), vec![1.0, 0.6, 0.2]);
    }
}
