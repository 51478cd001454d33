//! Fixed-weight aggregation. Averaging valid p-values with weights `v` and
//! thresholding at alpha keeps miscoverage below `min(1 / max v, 2) * alpha`.

use wacp::aggregation::{prop1_factor, unscaled_set, WeightVector};
use wacp::data::gen_synthetic;
use wacp::moe::{fit_expert, PinballSettings};
use wacp::pvalue::CalibratedExpert;
use wacp::score::ScoreKind;

fn main() -> wacp::Result<()> {
    let alpha = 0.1;
    let (mut misses, mut draws) = (0usize, 0usize);
    for v in [vec![0.5, 0.5], vec![0.8, 0.2]] {
        let v = WeightVector::new(v)?;
        for rep in 0..5 {
            let d = gen_synthetic(900, 100 + rep);
            let fit = |features: Vec<usize>| -> wacp::Result<_> {
                let m = fit_expert("e", &d.rows[..200], &d.labels[..200], &features, ScoreKind::AbsResidual, alpha, &PinballSettings::default())?;
                CalibratedExpert::calibrate(m, (200..400).map(|i| (d.rows[i].as_slice(), d.labels[i])))
            };
            let experts = [fit((0..8).collect())?, fit((8..16).collect())?];
            for i in 400..900 {
                let profiles: Vec<_> = experts.iter().map(|e| e.profile(&d.rows[i])).collect();
                misses += usize::from(!unscaled_set(&profiles, &v, alpha)?.contains(d.labels[i]));
                draws += 1;
            }
        }
        println!(
            "v = {:?}: miscoverage {:.4}, guaranteed at most {:.3}",
            v.as_slice(),
            misses as f64 / draws as f64,
            prop1_factor(&v) * alpha
        );
        (misses, draws) = (0, 0);
    }
    Ok(())
}
