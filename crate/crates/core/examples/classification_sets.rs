//! Finite label spaces: per-expert p-values for every candidate label are
//! averaged with the router weights and kept where the scaled value clears alpha.

use wacp::aggregation::{aggregate_label_set, WeightVector};
use wacp::pvalue::Calibration;

fn main() -> wacp::Result<()> {
    let labels = ["cat", "dog", "fox"];
    // 1 - probability of the true class on each expert's calibration set
    let cal = [
        Calibration::from_scores(vec![0.05, 0.1, 0.2, 0.3, 0.35, 0.5, 0.6, 0.7, 0.8, 0.9])?,
        Calibration::from_scores(vec![0.1, 0.15, 0.2, 0.25, 0.4, 0.45, 0.55, 0.65, 0.75, 0.95])?,
    ];
    // each expert's scores for the three labels at one test input
    let test_scores = [vec![0.1, 0.5, 0.95], vec![0.3, 0.2, 0.9]];
    let p: Vec<Vec<f64>> = cal.iter().zip(&test_scores).map(|(c, s)| c.label_p_values(s)).collect();
    for (k, pk) in p.iter().enumerate() {
        println!("expert {k} p-values {pk:.3?}");
    }

    let w = WeightVector::new(vec![0.6, 0.4])?;
    for (factor, alpha) in [(1.0, 0.1), (1.0, 0.2), (1.0, 0.6), (1.3, 0.6)] {
        let kept = aggregate_label_set(&p, &w, factor, alpha)?;
        let names: Vec<_> = kept.iter().map(|&j| labels[j]).collect();
        println!("factor {factor}, alpha {alpha}: {names:?}");
    }
    Ok(())
}
