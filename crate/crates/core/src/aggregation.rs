//! Weighted p-value merging and merging-correction factors.
//!
//! The weighted average `p_all(x, y; w) = sum_k w_k p_k(x, y)` is not a valid
//! p-value in general. With weights fixed in advance, thresholding it at
//! `alpha` still covers with probability at least `1 - min{1/max_k w_k, 2} alpha`
//! ([`prop1_factor`]). With data-dependent weights it is rescaled by a
//! correction factor learned from the conservative empirical CDF of `p_all`
//! over a merging set:
//!
//! * [`m_star`] makes `m * p_all` valid at every level,
//! * [`m_targeted`] only for levels up to `alpha'`,
//! * [`m_precise`] only at `alpha'` itself.
//!
//! The rank-based alternatives threshold `F(p_all)` or `F(p_all) + eps`
//! instead ([`ecdf_transform_set`]).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::interval::IntervalSet;
use crate::pvalue::PValueProfile;
use crate::{Error, Result};

/// Absolute tolerance on `sum(w) = 1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Convex combination weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Validates and renormalizes. Weights whose sum is off by more than
    /// [`WEIGHT_SUM_TOLERANCE`] are rejected.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Config("weight vector is empty".into()));
        }
        if let Some(bad) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::Config(format!("invalid weight {bad}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::Config(format!("weights sum to {total}, not 1")));
        }
        Ok(Self(weights.into_iter().map(|w| w / total).collect()))
    }

    /// Numerically stable softmax of `logits`.
    pub fn softmax(logits: &[f64]) -> Self {
        assert!(!logits.is_empty(), "at least one logit");
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exp.iter().sum();
        Self(exp.into_iter().map(|e| e / total).collect())
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k > 0, "at least one weight");
        Self(vec![1.0 / k as f64; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_weight(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    /// Index of the largest weight (first on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &w) in self.0.iter().enumerate() {
            if w > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// `sum_k w_k p_k`.
pub fn weighted_p(p_values: &[f64], w: &WeightVector) -> Result<f64> {
    if p_values.len() != w.len() {
        return Err(Error::Config(format!(
            "{} p-values for {} weights",
            p_values.len(),
            w.len()
        )));
    }
    Ok(p_values.iter().zip(w.as_slice()).map(|(p, w)| p * w).sum())
}

/// Miscoverage inflation for fixed weights: `min{1 / max_k v_k, 2}`.
pub fn prop1_factor(v: &WeightVector) -> f64 {
    (1.0 / v.max_weight()).min(2.0)
}

/// Values of `p_all(X_i, Y_i; W(X_i))` over the merging set.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeSample {
    sorted: Vec<f64>,
}

impl MergeSample {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSample("merge sample is empty".into()));
        }
        if let Some(bad) = values.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return Err(Error::InvalidSample(format!(
                "merge value {bad} is outside (0, 1]"
            )));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { sorted: values })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Sample values in ascending order.
    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    /// Conservative empirical CDF:
    /// `(1{min p <= q} + #{p_i <= q}) / (1 + M)`.
    pub fn conservative_ecdf(&self, q: f64) -> f64 {
        let below = self.sorted.partition_point(|&p| p <= q);
        let extra = usize::from(below > 0);
        (extra + below) as f64 / (1 + self.sorted.len()) as f64
    }

    /// `(F(p_i), p_i)` for every sample point, ascending in `p_i`.
    fn ecdf_points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.sorted.iter().map(|&p| (self.conservative_ecdf(p), p))
    }
}

/// Stand-alone form of [`MergeSample::conservative_ecdf`].
pub fn conservative_ecdf(sample: &MergeSample, q: f64) -> f64 {
    sample.conservative_ecdf(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionVariant {
    /// Valid at every level.
    AllAlpha,
    /// Valid for every level in `(0, alpha']`.
    Targeted,
    /// Valid at `alpha'` only.
    Precise,
}

impl fmt::Display for CorrectionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorrectionVariant::AllAlpha => "all_alpha",
            CorrectionVariant::Targeted => "targeted",
            CorrectionVariant::Precise => "precise",
        })
    }
}

/// A learned scale for the weighted p-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeCorrection {
    pub factor: f64,
    pub variant: CorrectionVariant,
    pub merge_size: usize,
    pub alpha_prime: Option<f64>,
}

impl MergeCorrection {
    /// Factor 1: the weighted average is thresholded as is.
    pub fn identity(merge_size: usize) -> Self {
        Self {
            factor: 1.0,
            variant: CorrectionVariant::AllAlpha,
            merge_size,
            alpha_prime: None,
        }
    }
}

fn check_alpha_prime(alpha_prime: f64) -> Result<()> {
    if alpha_prime > 0.0 && alpha_prime < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha' = {alpha_prime} is outside (0, 1)")))
    }
}

/// `max_i F(p_i) / p_i` over the merge sample.
///
/// `F` is a right-continuous step function jumping only at sample points, so
/// the supremum of `F(t) / t` is attained at one of them.
pub fn m_star(sample: &MergeSample) -> MergeCorrection {
    let factor = sample
        .ecdf_points()
        .map(|(f, p)| f / p)
        .fold(0.0, f64::max);
    MergeCorrection {
        factor,
        variant: CorrectionVariant::AllAlpha,
        merge_size: sample.len(),
        alpha_prime: None,
    }
}

/// Smallest ECDF value at a sample point that reaches `alpha_prime`.
///
/// Always exists for `alpha_prime < 1`: the largest sample point has `F = 1`.
fn first_ecdf_at_least(sample: &MergeSample, alpha_prime: f64) -> (f64, f64) {
    sample
        .ecdf_points()
        .find(|&(f, _)| f >= alpha_prime)
        .expect("conservative ECDF reaches 1 at the largest sample point")
}

/// Correction restricted to levels in `(0, alpha']`.
pub fn m_targeted(sample: &MergeSample, alpha_prime: f64) -> Result<MergeCorrection> {
    check_alpha_prime(alpha_prime)?;
    let (alpha_bar, _) = first_ecdf_at_least(sample, alpha_prime);
    let factor = sample
        .ecdf_points()
        .take_while(|&(f, _)| f <= alpha_bar)
        .map(|(f, p)| f / p)
        .fold(0.0, f64::max);
    Ok(MergeCorrection {
        factor,
        variant: CorrectionVariant::Targeted,
        merge_size: sample.len(),
        alpha_prime: Some(alpha_prime),
    })
}

/// Correction at `alpha'` only: the ratio at the first sample point whose
/// ECDF value reaches `alpha'`.
pub fn m_precise(sample: &MergeSample, alpha_prime: f64) -> Result<MergeCorrection> {
    check_alpha_prime(alpha_prime)?;
    let (f, p) = first_ecdf_at_least(sample, alpha_prime);
    Ok(MergeCorrection {
        factor: f / p,
        variant: CorrectionVariant::Precise,
        merge_size: sample.len(),
        alpha_prime: Some(alpha_prime),
    })
}

/// DKW radius `sqrt(ln(2 / delta) / (2 M))`.
pub fn dkw_epsilon(merge_size: usize, delta: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * merge_size as f64)).sqrt()
}

/// Failure probability and the matching uniform ECDF deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DkwBudget {
    pub delta: f64,
    pub epsilon: f64,
    pub merge_size: usize,
}

impl DkwBudget {
    pub fn new(merge_size: usize, delta: f64) -> Result<Self> {
        if merge_size == 0 {
            return Err(Error::Config("DKW needs a nonempty merge set".into()));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Config(format!("delta = {delta} is outside (0, 1)")));
        }
        Ok(Self {
            delta,
            epsilon: dkw_epsilon(merge_size, delta),
            merge_size,
        })
    }
}

/// Lower coverage bound for the *unscaled* set `{p_all > alpha}` given an
/// observed all-level factor, `1 - (alpha m + eps + delta)`. Informational:
/// the guarantee is stated for the expectation of the factor.
pub fn unscaled_coverage_bound(m_star: f64, alpha: f64, dkw: &DkwBudget) -> f64 {
    1.0 - (alpha * m_star + dkw.epsilon + dkw.delta)
}

fn check_lengths(profiles: &[PValueProfile], w: &WeightVector) -> Result<()> {
    if profiles.is_empty() || profiles.len() != w.len() {
        return Err(Error::Config(format!(
            "{} profiles for {} weights",
            profiles.len(),
            w.len()
        )));
    }
    Ok(())
}

/// The step function `y -> sum_k w_k p_k(x, y)`.
pub fn aggregate_profile(profiles: &[PValueProfile], w: &WeightVector) -> Result<PValueProfile> {
    check_lengths(profiles, w)?;
    Ok(PValueProfile::weighted_sum(profiles, w.as_slice()))
}

/// `{y : factor * p_all(y) > alpha}` for an already aggregated profile.
pub fn scaled_set(p_all: &PValueProfile, factor: f64, alpha: f64) -> IntervalSet {
    p_all.superlevel_set(|p| factor * p > alpha)
}

/// `{y : F(p_all(y)) (+ eps) > alpha}` for an already aggregated profile.
pub fn ecdf_set(
    p_all: &PValueProfile,
    sample: &MergeSample,
    alpha: f64,
    dkw: Option<&DkwBudget>,
) -> IntervalSet {
    let eps = dkw.map_or(0.0, |d| d.epsilon);
    p_all.superlevel_set(|p| sample.conservative_ecdf(p) + eps > alpha)
}

/// Scaled aggregate prediction set `{y : m * sum_k w_k p_k(y) > alpha}`.
///
/// The result is unbounded whenever the corrected minimum of `p_all` already
/// clears `alpha`.
pub fn aggregate_set(
    profiles: &[PValueProfile],
    w: &WeightVector,
    correction: &MergeCorrection,
    alpha: f64,
) -> Result<IntervalSet> {
    let p_all = aggregate_profile(profiles, w)?;
    Ok(scaled_set(&p_all, correction.factor, alpha))
}

/// Unscaled set `{y : sum_k v_k p_k(y) > alpha}`, the fixed-weight construction.
pub fn unscaled_set(profiles: &[PValueProfile], v: &WeightVector, alpha: f64) -> Result<IntervalSet> {
    let p_all = aggregate_profile(profiles, v)?;
    Ok(scaled_set(&p_all, 1.0, alpha))
}

/// Rank-transform sets: `F(p_all) > alpha`, or `F(p_all) + eps > alpha` with
/// a DKW budget.
pub fn ecdf_transform_set(
    profiles: &[PValueProfile],
    w: &WeightVector,
    sample: &MergeSample,
    alpha: f64,
    dkw: Option<&DkwBudget>,
) -> Result<IntervalSet> {
    let p_all = aggregate_profile(profiles, w)?;
    Ok(ecdf_set(&p_all, sample, alpha, dkw))
}

/// Finite label spaces: labels `j` with `factor * sum_k w_k p_k[j] > alpha`.
pub fn aggregate_label_set(
    label_p_values: &[Vec<f64>],
    w: &WeightVector,
    factor: f64,
    alpha: f64,
) -> Result<Vec<usize>> {
    if label_p_values.len() != w.len() {
        return Err(Error::Config(format!(
            "{} experts for {} weights",
            label_p_values.len(),
            w.len()
        )));
    }
    let n_labels = label_p_values.first().map_or(0, Vec::len);
    if label_p_values.iter().any(|p| p.len() != n_labels) {
        return Err(Error::Config("experts disagree on the label count".into()));
    }
    let mut kept = Vec::new();
    let mut column = vec![0.0; w.len()];
    for j in 0..n_labels {
        for (c, p) in column.iter_mut().zip(label_p_values) {
            *c = p[j];
        }
        if factor * weighted_p(&column, w)? > alpha {
            kept.push(j);
        }
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interval::Interval;
    use crate::pvalue::Calibration;
    use crate::score::ScoreContext;

    fn sample(values: &[f64]) -> MergeSample {
        MergeSample::new(values.to_vec()).unwrap()
    }

    fn w(values: &[f64]) -> WeightVector {
        WeightVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn weight_vector_validation() {
        assert!(WeightVector::new(vec![0.5, 0.5 + 1e-12]).is_ok());
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![1.5, -0.5]).is_err());
        assert!(WeightVector::new(vec![]).is_err());
        let u = WeightVector::uniform(4);
        assert_eq!(u.as_slice(), &[0.25; 4]);
        assert_eq!(w(&[0.2, 0.5, 0.3]).argmax(), 1);
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(WeightVector::softmax(&[0.0, 0.0, 0.0, 0.0]).as_slice(), &[0.25; 4]);
        let big = WeightVector::softmax(&[1000.0, 0.0]);
        assert!((big.as_slice()[0] - 1.0).abs() < 1e-15);
        assert!(big.as_slice()[1] >= 0.0 && big.as_slice()[1] < 1e-300);
        let third = WeightVector::softmax(&[2f64.ln(), 0.0]);
        assert!((third.as_slice()[0] - 2.0 / 3.0).abs() < 1e-9);
        assert!((third.as_slice()[1] - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn weighted_p_examples() {
        assert_eq!(weighted_p(&[0.2, 0.6], &w(&[0.5, 0.5])).unwrap(), 0.4);
        assert_eq!(weighted_p(&[0.2, 0.6], &w(&[1.0, 0.0])).unwrap(), 0.2);
        assert!((weighted_p(&[0.25, 1.0], &w(&[0.8, 0.2])).unwrap() - 0.4).abs() < 1e-15);
        assert!(weighted_p(&[0.2], &w(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn inflation_factor_examples() {
        assert_eq!(prop1_factor(&w(&[1.0])), 1.0);
        assert_eq!(prop1_factor(&w(&[0.5, 0.5])), 2.0);
        assert_eq!(prop1_factor(&w(&[0.8, 0.2])), 1.25);
        assert_eq!(prop1_factor(&WeightVector::uniform(5)), 2.0);
    }

    #[test]
    fn conservative_ecdf_examples() {
        let s = sample(&[0.2, 0.5, 0.9]);
        assert_eq!(s.conservative_ecdf(0.5), 0.75);
        assert_eq!(s.conservative_ecdf(0.1), 0.0);
        assert_eq!(s.conservative_ecdf(0.9), 1.0);
        assert_eq!(s.conservative_ecdf(1.0), 1.0);
        assert_eq!(s.conservative_ecdf(0.2), 0.5);
    }

    #[test]
    fn merge_sample_validation() {
        assert!(MergeSample::new(vec![]).is_err());
        assert!(matches!(
            MergeSample::new(vec![0.0, 0.5]),
            Err(Error::InvalidSample(_))
        ));
        assert!(MergeSample::new(vec![1.5]).is_err());
        assert!(MergeSample::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn m_star_examples() {
        assert_eq!(m_star(&sample(&[0.2, 0.5, 0.9])).factor, 2.5);
        assert_eq!(m_star(&sample(&[1.0])).factor, 1.0);
        assert_eq!(m_star(&sample(&[0.5, 0.5])).factor, 2.0);
        let c = m_star(&sample(&[0.2, 0.5, 0.9]));
        assert_eq!(c.variant, CorrectionVariant::AllAlpha);
        assert_eq!(c.merge_size, 3);
        assert_eq!(c.alpha_prime, None);
    }

    #[test]
    fn m_targeted_examples() {
        let s = sample(&[0.2, 0.5, 0.9]);
        assert_eq!(m_targeted(&s, 0.1).unwrap().factor, 2.5);
        assert_eq!(m_targeted(&s, 0.6).unwrap().factor, 2.5);
        assert_eq!(m_targeted(&s, 0.999).unwrap().factor, m_star(&s).factor);
        assert!(m_targeted(&s, 0.0).is_err());
        assert!(m_targeted(&s, 1.0).is_err());
        // restriction binds when the low tail is thin
        let thin = sample(&[0.3, 0.4, 0.45, 0.5, 0.55, 0.6, 0.7, 0.8, 0.9]);
        let t = m_targeted(&thin, 0.2).unwrap().factor;
        assert!(t < m_star(&thin).factor);
        assert!((t - 0.2 / 0.3).abs() < 1e-15);
    }

    #[test]
    fn m_precise_examples() {
        let s = sample(&[0.2, 0.5, 0.9]);
        assert_eq!(m_precise(&s, 0.1).unwrap().factor, 2.5);
        assert_eq!(m_precise(&s, 0.6).unwrap().factor, 1.5);
        let single = m_precise(&sample(&[0.9]), 0.1).unwrap().factor;
        assert!((single - 1.0 / 0.9).abs() < 1e-15);
        assert_eq!(m_precise(&s, 0.6).unwrap().alpha_prime, Some(0.6));
    }

    #[test]
    fn dkw_examples() {
        assert!((dkw_epsilon(40, 0.05) - 0.21474).abs() < 1e-5);
        assert!((dkw_epsilon(160, 0.05) - 0.10737).abs() < 1e-5);
        let near_one = dkw_epsilon(10, 1.0 - 1e-12);
        assert!((near_one - (2f64.ln() / 20.0).sqrt()).abs() < 1e-9);
        let budget = DkwBudget::new(160, 0.05).unwrap();
        assert!((budget.epsilon - dkw_epsilon(160, 0.05)).abs() < 1e-12);
        assert!(DkwBudget::new(0, 0.05).is_err());
        assert!(DkwBudget::new(10, 1.0).is_err());
    }

    #[test]
    fn correction_json() {
        let c = m_targeted(&sample(&[0.2, 0.5, 0.9]), 0.1).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(
            text,
            r#"{"factor":2.5,"variant":"targeted","merge_size":3,"alpha_prime":0.1}"#
        );
        let back: MergeCorrection = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    fn two_expert_profiles() -> Vec<PValueProfile> {
        let cal = Calibration::from_scores(vec![1.0]).unwrap();
        vec![
            cal.profile(&ScoreContext::point(0.0)),
            cal.profile(&ScoreContext::point(10.0)),
        ]
    }

    #[test]
    fn aggregate_two_separated_experts() {
        let profiles = two_expert_profiles();
        let weights = w(&[0.5, 0.5]);
        let id = MergeCorrection::identity(1);
        // p_all is 0.75 near either center and 0.5 elsewhere
        let set = aggregate_set(&profiles, &weights, &id, 0.5).unwrap();
        assert_eq!(
            set.parts(),
            &[Interval::open(-1.0, 1.0).unwrap(), Interval::open(9.0, 11.0).unwrap()]
        );
        assert!(aggregate_set(&profiles, &weights, &id, 0.45).unwrap().is_full());
        let doubled = MergeCorrection {
            factor: 2.0,
            ..id.clone()
        };
        assert!(aggregate_set(&profiles, &weights, &doubled, 0.45).unwrap().is_full());
        assert!(aggregate_set(&profiles, &weights, &id, 0.75).unwrap().is_empty());
        assert!(aggregate_set(&profiles, &w(&[1.0]), &id, 0.5).is_err());
    }

    #[test]
    fn single_expert_reduces_to_split() {
        let cal = Calibration::from_scores(vec![0.3, 1.1, 2.0, 2.5]).unwrap();
        let prof = cal.profile(&ScoreContext::point(1.7));
        for alpha in [0.1, 0.3, 0.5, 0.7] {
            let agg = aggregate_set(
                std::slice::from_ref(&prof),
                &w(&[1.0]),
                &MergeCorrection::identity(1),
                alpha,
            )
            .unwrap();
            assert_eq!(agg, prof.threshold_set(alpha));
        }
    }

    #[test]
    fn ecdf_sets() {
        let profiles = two_expert_profiles();
        let weights = w(&[0.5, 0.5]);
        // F(0.5) = 0.5 and F(0.75) = 1 on this sample
        let s = sample(&[0.5, 0.75, 0.75]);
        let set = ecdf_transform_set(&profiles, &weights, &s, 0.5, None).unwrap();
        assert_eq!(
            set.parts(),
            &[Interval::open(-1.0, 1.0).unwrap(), Interval::open(9.0, 11.0).unwrap()]
        );
        assert!(ecdf_transform_set(&profiles, &weights, &s, 1.0, None)
            .unwrap()
            .is_empty());
        let budget = DkwBudget::new(3, 0.05).unwrap();
        assert!(budget.epsilon > 0.5);
        assert!(ecdf_transform_set(&profiles, &weights, &s, 0.5, Some(&budget))
            .unwrap()
            .is_full());
    }

    #[test]
    fn label_sets() {
        let per_expert = vec![vec![1.0, 0.2, 0.05], vec![0.1, 0.9, 0.05]];
        let kept = aggregate_label_set(&per_expert, &w(&[0.5, 0.5]), 1.0, 0.3).unwrap();
        assert_eq!(kept, vec![0, 1]);
        let kept = aggregate_label_set(&per_expert, &w(&[0.9, 0.1]), 1.0, 0.3).unwrap();
        assert_eq!(kept, vec![0]);
        assert!(aggregate_label_set(&per_expert, &w(&[1.0]), 1.0, 0.3).is_err());
    }

    #[test]
    fn unscaled_bound_is_informational_arithmetic() {
        let budget = DkwBudget::new(160, 0.05).unwrap();
        let b = unscaled_coverage_bound(1.2, 0.1, &budget);
        assert!((b - (1.0 - 0.12 - budget.epsilon - 0.05)).abs() < 1e-15);
    }
}
