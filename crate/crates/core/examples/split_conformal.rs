//! Split conformal prediction with one linear expert: fit, calibrate, then
//! read a test point's p-value as a step function of the candidate label.

use wacp::data::gen_synthetic;
use wacp::moe::{fit_expert, PinballSettings};
use wacp::pvalue::CalibratedExpert;
use wacp::score::ScoreKind;

fn main() -> wacp::Result<()> {
    let d = gen_synthetic(600, 1);
    let features: Vec<usize> = (0..16).collect();
    let alpha = 0.1;

    for kind in [ScoreKind::AbsResidual, ScoreKind::Cqr] {
        let model = fit_expert("all", &d.rows[..200], &d.labels[..200], &features, kind, alpha, &PinballSettings::default())?;
        let expert = CalibratedExpert::calibrate(model, (200..400).map(|i| (d.rows[i].as_slice(), d.labels[i])))?;

        let mut covered = 0;
        let mut size = 0.0;
        for i in 400..600 {
            let set = expert.profile(&d.rows[i]).threshold_set(alpha);
            covered += usize::from(set.contains(d.labels[i]));
            size += set.measure();
        }
        println!(
            "{:<12} coverage {:.3}  mean length {:.3}",
            kind.as_str(),
            covered as f64 / 200.0,
            size / 200.0
        );
        let x = &d.rows[400];
        println!("  first test point: y = {:.3}, set = {}", d.labels[400], expert.profile(x).threshold_set(alpha));
    }
    Ok(())
}
