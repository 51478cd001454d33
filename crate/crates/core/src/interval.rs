//! Finite unions of real intervals with exact endpoint openness.
//!
//! Regression prediction sets are stored as an [`IntervalSet`]: a sorted list
//! of pairwise disjoint, non-adjacent intervals. Endpoints may be open or
//! closed and may be infinite. Zero-length parts that cannot be merged into a
//! neighbour are dropped, since they carry no Lebesgue measure.

use std::cmp::Ordering;
use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

/// A single interval with possibly infinite endpoints.
///
/// Infinite endpoints are always open. A zero-length interval is only
/// representable as a closed point `[x, x]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
    lo_open: bool,
    hi_open: bool,
}

impl Interval {
    /// Returns `None` when the described set is empty.
    pub fn new(lo: f64, hi: f64, lo_open: bool, hi_open: bool) -> Option<Self> {
        if lo.is_nan() || hi.is_nan() || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
            return None;
        }
        let lo_open = lo_open || lo.is_infinite();
        let hi_open = hi_open || hi.is_infinite();
        match lo.partial_cmp(&hi)? {
            Ordering::Greater => None,
            Ordering::Equal if lo_open || hi_open => None,
            _ => Some(Self {
                lo,
                hi,
                lo_open,
                hi_open,
            }),
        }
    }

    pub fn open(lo: f64, hi: f64) -> Option<Self> {
        Self::new(lo, hi, true, true)
    }

    pub fn closed(lo: f64, hi: f64) -> Option<Self> {
        Self::new(lo, hi, false, false)
    }

    /// The whole real line.
    pub fn full() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
            lo_open: true,
            hi_open: true,
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn lo_open(&self) -> bool {
        self.lo_open
    }

    pub fn hi_open(&self) -> bool {
        self.hi_open
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    /// Lebesgue measure; openness does not matter.
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, y: f64) -> bool {
        let above_lo = if self.lo_open { y > self.lo } else { y >= self.lo };
        let below_hi = if self.hi_open { y < self.hi } else { y <= self.hi };
        above_lo && below_hi
    }

    /// True when `self` (which starts no later than `next`) overlaps or touches
    /// `next` in a way that makes their union a single interval.
    fn joins(&self, next: &Interval) -> bool {
        next.lo < self.hi || (next.lo == self.hi && !(self.hi_open && next.lo_open))
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}, {}{}",
            if self.lo_open { '(' } else { '[' },
            self.lo,
            self.hi,
            if self.hi_open { ')' } else { ']' }
        )
    }
}

/// Normalized finite union of intervals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntervalSet {
    parts: Vec<Interval>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        Self { parts: Vec::new() }
    }

    pub fn full() -> Self {
        Self {
            parts: vec![Interval::full()],
        }
    }

    /// Builds a normalized set from arbitrary, possibly overlapping, intervals.
    pub fn from_intervals<I: IntoIterator<Item = Interval>>(intervals: I) -> Self {
        let mut parts: Vec<Interval> = intervals.into_iter().collect();
        parts.sort_by(|a, b| {
            a.lo.total_cmp(&b.lo)
                .then_with(|| a.lo_open.cmp(&b.lo_open))
        });

        let mut merged: Vec<Interval> = Vec::with_capacity(parts.len());
        for next in parts {
            match merged.last_mut() {
                Some(cur) if cur.joins(&next) => match next.hi.total_cmp(&cur.hi) {
                    Ordering::Greater => {
                        cur.hi = next.hi;
                        cur.hi_open = next.hi_open;
                    }
                    Ordering::Equal => cur.hi_open = cur.hi_open && next.hi_open,
                    Ordering::Less => {}
                },
                _ => merged.push(next),
            }
        }
        merged.retain(|p| !p.is_degenerate());
        Self { parts: merged }
    }

    /// Builds the set described by a step-function membership pattern.
    ///
    /// `cuts` must be strictly increasing. `piece_in[j]` says whether the open
    /// piece between `cuts[j-1]` and `cuts[j]` belongs to the set (with
    /// `-inf`/`+inf` for the outer pieces) and `cut_in[j]` whether the point
    /// `cuts[j]` does.
    pub fn from_step_membership(cuts: &[f64], piece_in: &[bool], cut_in: &[bool]) -> Self {
        assert_eq!(piece_in.len(), cuts.len() + 1, "one membership flag per piece");
        assert_eq!(cut_in.len(), cuts.len(), "one membership flag per cut");
        debug_assert!(cuts.windows(2).all(|w| w[0] < w[1]), "cuts must be strictly increasing");

        let mut parts = Vec::new();
        // (lo, lo_open) of the run currently being extended.
        let mut start: Option<(f64, bool)> = None;
        let left_of = |j: usize| if j == 0 { f64::NEG_INFINITY } else { cuts[j - 1] };

        for j in 0..=cuts.len() {
            // open piece j
            match (piece_in[j], start) {
                (true, None) => start = Some((left_of(j), true)),
                (false, Some((lo, lo_open))) => {
                    // previous atom was cut j-1, which was included
                    parts.extend(Interval::new(lo, left_of(j), lo_open, false));
                    start = None;
                }
                _ => {}
            }
            if j == cuts.len() {
                break;
            }
            // the point cuts[j]
            match (cut_in[j], start) {
                (true, None) => start = Some((cuts[j], false)),
                (false, Some((lo, lo_open))) => {
                    parts.extend(Interval::new(lo, cuts[j], lo_open, true));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some((lo, lo_open)) = start {
            parts.extend(Interval::new(lo, f64::INFINITY, lo_open, true));
        }
        parts.retain(|p| !p.is_degenerate());
        Self { parts }
    }

    pub fn parts(&self) -> &[Interval] {
        &self.parts
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn is_unbounded(&self) -> bool {
        self.parts.iter().any(|p| !p.is_bounded())
    }

    pub fn is_full(&self) -> bool {
        self.parts.len() == 1 && self.parts[0] == Interval::full()
    }

    pub fn union(&self, other: &IntervalSet) -> IntervalSet {
        Self::from_intervals(self.parts.iter().chain(other.parts.iter()).copied())
    }

    /// Total Lebesgue measure, `+inf` when any part is unbounded.
    pub fn measure(&self) -> f64 {
        if self.is_unbounded() {
            return f64::INFINITY;
        }
        self.parts.iter().map(Interval::length).sum()
    }

    pub fn contains(&self, y: f64) -> bool {
        let idx = self.parts.partition_point(|p| p.hi < y);
        self.parts.get(idx).is_some_and(|p| p.contains(y))
    }

    /// Whether every point of `self` also lies in `other`.
    pub fn is_subset_of(&self, other: &IntervalSet) -> bool {
        self.union(other) == *other
    }
}

impl fmt::Display for IntervalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.parts.is_empty() {
            return write!(f, "∅");
        }
        for (i, p) in self.parts.iter().enumerate() {
            if i > 0 {
                write!(f, " ∪ ")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

/// Endpoint encoding for JSON: finite numbers as numbers, infinities as the
/// strings `"-inf"` / `"inf"`.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Endpoint {
    Finite(f64),
    Named(String),
}

impl Endpoint {
    fn encode(x: f64) -> Self {
        if x == f64::INFINITY {
            Endpoint::Named("inf".into())
        } else if x == f64::NEG_INFINITY {
            Endpoint::Named("-inf".into())
        } else {
            Endpoint::Finite(x)
        }
    }

    fn decode(self) -> Result<f64, String> {
        match self {
            Endpoint::Finite(x) => Ok(x),
            Endpoint::Named(s) => match s.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(format!("bad interval endpoint `{other}`")),
            },
        }
    }
}

impl Serialize for IntervalSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.parts.len()))?;
        for p in &self.parts {
            seq.serialize_element(&(
                Endpoint::encode(p.lo),
                Endpoint::encode(p.hi),
                p.lo_open,
                p.hi_open,
            ))?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for IntervalSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let records: Vec<(Endpoint, Endpoint, bool, bool)> = Vec::deserialize(deserializer)?;
        let mut parts = Vec::with_capacity(records.len());
        for (lo, hi, lo_open, hi_open) in records {
            let lo = lo.decode().map_err(de::Error::custom)?;
            let hi = hi.decode().map_err(de::Error::custom)?;
            parts.extend(Interval::new(lo, hi, lo_open, hi_open));
        }
        Ok(Self::from_intervals(parts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open(lo: f64, hi: f64) -> Interval {
        Interval::open(lo, hi).unwrap()
    }

    fn set(parts: &[Interval]) -> IntervalSet {
        IntervalSet::from_intervals(parts.iter().copied())
    }

    #[test]
    fn union_examples() {
        let a = set(&[open(0.0, 1.0)]);
        let b = set(&[open(2.0, 4.0)]);
        assert_eq!(a.union(&b).parts(), &[open(0.0, 1.0), open(2.0, 4.0)]);

        let a = set(&[open(0.0, 2.0)]);
        let b = set(&[open(1.0, 3.0)]);
        assert_eq!(a.union(&b).parts(), &[open(0.0, 3.0)]);

        let u = IntervalSet::empty().union(&set(&[open(0.0, 1.0)]));
        assert_eq!(u.parts(), &[open(0.0, 1.0)]);
    }

    #[test]
    fn measure_examples() {
        assert_eq!(set(&[open(0.0, 1.0), open(2.0, 4.0)]).measure(), 3.0);
        assert_eq!(IntervalSet::empty().measure(), 0.0);
        assert_eq!(set(&[open(f64::NEG_INFINITY, 0.0)]).measure(), f64::INFINITY);
    }

    #[test]
    fn contains_examples() {
        assert!(!set(&[open(0.0, 3.0)]).contains(3.0));
        assert!(set(&[Interval::closed(1.0, 2.0).unwrap()]).contains(1.0));
        assert!(!set(&[open(0.0, 1.0), open(2.0, 4.0)]).contains(1.5));
    }

    #[test]
    fn invalid_intervals_are_rejected() {
        assert!(Interval::new(1.0, 0.0, false, false).is_none());
        assert!(Interval::new(1.0, 1.0, true, false).is_none());
        assert!(Interval::new(f64::NAN, 1.0, false, false).is_none());
        let half = Interval::new(f64::NEG_INFINITY, 0.0, false, false).unwrap();
        assert!(half.lo_open());
    }

    #[test]
    fn open_touching_parts_stay_separate() {
        let s = set(&[open(0.0, 1.0), open(1.0, 2.0)]);
        assert_eq!(s.parts().len(), 2);
        assert!(!s.contains(1.0));

        let closed_join = set(&[open(0.0, 1.0), Interval::new(1.0, 2.0, false, true).unwrap()]);
        assert_eq!(closed_join.parts(), &[open(0.0, 2.0)]);
    }

    #[test]
    fn points_merge_into_neighbours_or_vanish() {
        let p = Interval::closed(1.0, 1.0).unwrap();
        let s = set(&[open(0.0, 1.0), p, open(1.0, 2.0)]);
        assert_eq!(s.parts(), &[open(0.0, 2.0)]);
        assert!(s.contains(1.0));

        let isolated = set(&[open(0.0, 1.0), Interval::closed(5.0, 5.0).unwrap()]);
        assert_eq!(isolated.parts(), &[open(0.0, 1.0)]);
    }

    #[test]
    fn step_membership_tracks_openness() {
        let cuts = [-1.0, 1.0, 2.0];
        // (-inf,-1) out, -1 out, (-1,1) in, 1 in, (1,2) in, 2 out, (2,inf) in
        let s = IntervalSet::from_step_membership(
            &cuts,
            &[false, true, true, true],
            &[false, true, false],
        );
        assert_eq!(
            s.parts(),
            &[open(-1.0, 2.0), Interval::open(2.0, f64::INFINITY).unwrap()]
        );

        let all = IntervalSet::from_step_membership(&cuts, &[true; 4], &[true; 3]);
        assert!(all.is_full());

        let point_only = IntervalSet::from_step_membership(&cuts, &[false; 4], &[true, false, false]);
        assert!(point_only.is_empty());

        let closed_end =
            IntervalSet::from_step_membership(&cuts, &[false, true, false, false], &[true, true, false]);
        assert_eq!(closed_end.parts(), &[Interval::closed(-1.0, 1.0).unwrap()]);
    }

    #[test]
    fn json_encoding() {
        let s = set(&[
            Interval::new(f64::NEG_INFINITY, 0.0, true, false).unwrap(),
            open(2.0, 4.5),
        ]);
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, r#"[["-inf",0.0,true,false],[2.0,4.5,true,true]]"#);
        let back: IntervalSet = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<IntervalSet>(r#"[["nope",1.0,true,true]]"#).is_err());
    }

    #[test]
    fn display() {
        let s = set(&[open(0.0, 1.0), Interval::closed(2.0, 3.0).unwrap()]);
        assert_eq!(s.to_string(), "(0, 1) ∪ [2, 3]");
        assert_eq!(IntervalSet::empty().to_string(), "∅");
    }
}
