//! Nonconformity scores and their inversion in the label.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::interval::{Interval, IntervalSet};
use crate::Error;

/// Which nonconformity score an expert uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    /// `|y - mu(x)|` over a point predictor.
    AbsResidual,
    /// `max(q_lo(x) - y, y - q_hi(x))` over a pair of quantile predictors.
    Cqr,
}

impl ScoreKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScoreKind::AbsResidual => "abs_residual",
            ScoreKind::Cqr => "cqr",
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "abs_residual" => Ok(ScoreKind::AbsResidual),
            "cqr" => Ok(ScoreKind::Cqr),
            other => Err(Error::Config(format!("unknown score kind `{other}`"))),
        }
    }
}

/// Predictor outputs at one fixed input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreContext {
    Point { mu: f64 },
    Quantiles { lo: f64, hi: f64 },
}

impl ScoreContext {
    pub fn point(mu: f64) -> Self {
        ScoreContext::Point { mu }
    }

    /// Crossed quantiles are swapped so that `lo <= hi`.
    pub fn quantiles(lo: f64, hi: f64) -> Self {
        if lo <= hi {
            ScoreContext::Quantiles { lo, hi }
        } else {
            ScoreContext::Quantiles { lo: hi, hi: lo }
        }
    }

    pub fn kind(&self) -> ScoreKind {
        match self {
            ScoreContext::Point { .. } => ScoreKind::AbsResidual,
            ScoreContext::Quantiles { .. } => ScoreKind::Cqr,
        }
    }

    /// A label where the score is smallest.
    pub fn center(&self) -> f64 {
        match *self {
            ScoreContext::Point { mu } => mu,
            ScoreContext::Quantiles { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn score(&self, y: f64) -> f64 {
        match *self {
            ScoreContext::Point { mu } => (y - mu).abs(),
            ScoreContext::Quantiles { lo, hi } => (lo - y).max(y - hi),
        }
    }

    /// Endpoints `(a, b)` of the open sublevel set `{y : score(y) < r}`, or
    /// `None` when it is empty.
    fn sublevel_bounds(&self, r: f64) -> Option<(f64, f64)> {
        let (a, b) = match *self {
            ScoreContext::Point { mu } => (mu - r, mu + r),
            ScoreContext::Quantiles { lo, hi } => (lo - r, hi + r),
        };
        (a < b).then_some((a, b))
    }

    /// `{y : score(y) < r}`, always an open interval or empty.
    pub fn sublevel_set(&self, r: f64) -> IntervalSet {
        self.sublevel_bounds(r)
            .and_then(|(a, b)| Interval::open(a, b))
            .map(|i| IntervalSet::from_intervals([i]))
            .unwrap_or_default()
    }

    /// Labels where the p-value built from `calib_scores` can jump: the finite
    /// endpoints of every nonempty sublevel set, sorted and deduplicated.
    pub fn breakpoints(&self, calib_scores: &[f64]) -> Vec<f64> {
        let mut cuts: Vec<f64> = calib_scores
            .iter()
            .filter_map(|&r| self.sublevel_bounds(r))
            .flat_map(|(a, b)| [a, b])
            .filter(|c| c.is_finite())
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_examples() {
        assert_eq!(ScoreContext::point(2.0).score(3.5), 1.5);
        let cqr = ScoreContext::quantiles(0.0, 1.0);
        assert_eq!(cqr.score(0.5), -0.5);
        assert_eq!(cqr.score(2.0), 1.0);
    }

    #[test]
    fn sublevel_examples() {
        let s = ScoreContext::point(0.0).sublevel_set(3.0);
        assert_eq!(s.parts(), &[Interval::open(-3.0, 3.0).unwrap()]);
        assert!(ScoreContext::point(0.0).sublevel_set(0.0).is_empty());
        let c = ScoreContext::quantiles(0.0, 1.0).sublevel_set(0.5);
        assert_eq!(c.parts(), &[Interval::open(-0.5, 1.5).unwrap()]);
        // negative thresholds shrink the CQR band until it vanishes
        assert!(ScoreContext::quantiles(0.0, 1.0).sublevel_set(-0.5).is_empty());
        assert_eq!(
            ScoreContext::quantiles(0.0, 1.0).sublevel_set(-0.25).parts(),
            &[Interval::open(0.25, 0.75).unwrap()]
        );
    }

    #[test]
    fn breakpoint_examples() {
        let ctx = ScoreContext::point(0.0);
        assert_eq!(ctx.breakpoints(&[1.0, 2.0, 3.0]), vec![-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
        assert_eq!(ctx.breakpoints(&[1.0, 1.0]), vec![-1.0, 1.0]);
        assert_eq!(ctx.breakpoints(&[0.0]), Vec::<f64>::new());
        let cqr = ScoreContext::quantiles(0.0, 1.0);
        assert_eq!(cqr.breakpoints(&[0.5]), vec![-0.5, 1.5]);
        assert_eq!(cqr.breakpoints(&[0.0]), vec![0.0, 1.0]);
        assert_eq!(cqr.breakpoints(&[-0.7]), Vec::<f64>::new());
    }

    #[test]
    fn crossed_quantiles_are_swapped() {
        assert_eq!(
            ScoreContext::quantiles(2.0, 1.0),
            ScoreContext::Quantiles { lo: 1.0, hi: 2.0 }
        );
    }

    #[test]
    fn negative_cqr_scores_only_inside_band() {
        let ctx = ScoreContext::quantiles(-1.0, 2.0);
        for i in 0..=400 {
            let y = -5.0 + i as f64 * 0.025;
            assert_eq!(ctx.score(y) < 0.0, y > -1.0 && y < 2.0, "y = {y}");
        }
    }

    #[test]
    fn kind_strings() {
        assert_eq!("abs_residual".parse::<ScoreKind>().unwrap(), ScoreKind::AbsResidual);
        assert_eq!("cqr".parse::<ScoreKind>().unwrap(), ScoreKind::Cqr);
        assert!("huber".parse::<ScoreKind>().is_err());
        assert_eq!(ScoreKind::Cqr.to_string(), "cqr");
    }
}
