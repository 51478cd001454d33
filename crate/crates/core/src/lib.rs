//! Weighted aggregation of conformal prediction sets.
//!
//! Each of `K` predictors is turned into a split-conformal p-value function.
//! The p-value functions are averaged with a weight vector, which may be
//! fixed in advance or produced per input by a router, and the average is
//! thresholded to give a prediction set:
//!
//! * fixed weights `v` give coverage `1 - min{1/max v, 2} * alpha`
//!   ([`aggregation::prop1_factor`]);
//! * data-dependent weights are rescaled by a correction factor learned on a
//!   held-out merging set ([`aggregation::m_star`], [`aggregation::m_targeted`],
//!   [`aggregation::m_precise`]) so the scaled average is again a p-value.
//!
//! Regression prediction sets are exact finite unions of intervals
//! ([`interval::IntervalSet`]), built from the breakpoints of the
//! piecewise-constant p-value functions ([`pvalue::PValueProfile`]).
//!
//! The [`moe`], [`data`], [`evaluation`] and [`experiment`] modules provide a
//! linear mixture-of-experts, synthetic and CSV data, coverage metrics
//! (marginal, worst-slice, group-conditional) and a reproducible multi-trial
//! experiment runner. See the `examples/` directory for one runnable program
//! per capability.

pub mod aggregation;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod interval;
pub mod moe;
pub mod pvalue;
pub mod score;

pub use error::{Error, Result};
