//! Prediction sets are finite unions of intervals with explicit endpoint
//! openness. This shows construction, union, measure and membership.

use wacp::interval::{Interval, IntervalSet};

fn main() {
    let a = IntervalSet::from_intervals([
        Interval::new(0.0, 1.0, false, true).unwrap(),
        Interval::open(3.0, 4.5).unwrap(),
    ]);
    let b = IntervalSet::from_intervals([Interval::closed(1.0, 2.0).unwrap()]);
    let u = a.union(&b);

    println!("a       = {a}");
    println!("b       = {b}");
    println!("a | b   = {u}");
    println!("measure = {}", u.measure());
    for y in [0.0, 1.0, 2.0, 3.0, 4.0] {
        println!("  {y} in a | b: {}", u.contains(y));
    }

    let unbounded = u.union(&IntervalSet::from_intervals([Interval::new(5.0, f64::INFINITY, false, true).unwrap()]));
    println!("with a ray: {unbounded} (measure {})", unbounded.measure());
}
