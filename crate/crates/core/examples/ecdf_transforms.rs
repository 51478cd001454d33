//! Rank-based alternatives to the scalar correction: threshold the merge
//! ECDF of the weighted p-value, optionally with a DKW margin.

use wacp::aggregation::{ecdf_transform_set, DkwBudget, MergeSample, WeightVector};
use wacp::pvalue::Calibration;
use wacp::score::ScoreContext;

fn main() -> wacp::Result<()> {
    let cal = [
        Calibration::from_scores((1..=20).map(|i| 0.1 * i as f64).collect())?,
        Calibration::from_scores((1..=19).map(|i| 0.12 * i as f64).collect())?,
    ];
    let ctx = [ScoreContext::point(0.0), ScoreContext::point(0.5)];
    let profiles: Vec<_> = cal.iter().zip(&ctx).map(|(c, x)| c.profile(x)).collect();
    let w = WeightVector::new(vec![0.7, 0.3])?;
    let merge = MergeSample::new((1..=40).map(|i| i as f64 / 41.0).collect())?;

    for alpha in [0.1, 0.3] {
        println!("alpha {alpha}");
        println!("  ecdf:     {}", ecdf_transform_set(&profiles, &w, &merge, alpha, None)?);
        let dkw = DkwBudget::new(merge.len(), 0.05)?;
        println!(
            "  ecdf-dkw: {} (epsilon {:.3})",
            ecdf_transform_set(&profiles, &w, &merge, alpha, Some(&dkw))?,
            dkw.epsilon
        );
    }
    Ok(())
}
