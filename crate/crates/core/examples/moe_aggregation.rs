//! End-to-end weighted aggregation with a mixture of experts: train the
//! experts and router, calibrate each expert, learn the correction on a
//! merge set, then build sets from the router's weights.

use wacp::aggregation::{aggregate_profile, m_targeted, scaled_set, MergeSample};
use wacp::data::{gen_synthetic, SyntheticAssignment};
use wacp::moe::{MoeModel, TrainingSettings};
use wacp::pvalue::CalibratedExpert;
use wacp::score::ScoreKind;

fn main() -> wacp::Result<()> {
    let alpha = 0.1;
    let d = gen_synthetic(1000, 7);
    let groups = SyntheticAssignment::NoOverlap.assignment().groups;
    let moe = MoeModel::fit(&d.rows[..200], &d.labels[..200], &groups, ScoreKind::AbsResidual, alpha, &TrainingSettings::default())?;

    let experts = moe
        .experts
        .iter()
        .map(|e| CalibratedExpert::calibrate(e, (200..360).map(|i| (d.rows[i].as_slice(), d.labels[i]))))
        .collect::<wacp::Result<Vec<_>>>()?;
    let p_all = |i: usize, y: f64| -> f64 {
        let w = moe.route(&d.rows[i]);
        experts.iter().zip(w.as_slice()).map(|(e, wk)| wk * e.p_value(&d.rows[i], y)).sum()
    };

    let merge = MergeSample::new((360..500).map(|i| p_all(i, d.labels[i])).collect())?;
    let correction = m_targeted(&merge, alpha)?;
    println!("merge size {}, learned factor {:.3}", merge.len(), correction.factor);

    let (mut covered, mut size) = (0, 0.0);
    for i in 500..1000 {
        let profiles: Vec<_> = experts.iter().map(|e| e.profile(&d.rows[i])).collect();
        let set = scaled_set(&aggregate_profile(&profiles, &moe.route(&d.rows[i]))?, correction.factor, alpha);
        covered += usize::from(set.contains(d.labels[i]));
        size += set.measure();
    }
    println!("coverage {:.3}, mean size {:.3}", covered as f64 / 500.0, size / 500.0);
    Ok(())
}
