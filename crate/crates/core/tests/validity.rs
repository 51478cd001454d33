use wacp::aggregation::{aggregate_set, MergeCorrection, WeightVector};
use wacp::data::gen_synthetic;
use wacp::moe::{fit_expert, PinballSettings};
use wacp::pvalue::CalibratedExpert;
use wacp::score::ScoreKind;

// Fresh training, calibration and test data per repetition so that the
// check is over the joint draw, as the guarantee is.
fn true_label_p_values(kind: ScoreKind, reps: u64, n_cal: usize, n_test: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for rep in 0..reps {
        let d = gen_synthetic(100 + n_cal + n_test, 9000 + rep);
        let e = fit_expert("e", &d.rows[..100], &d.labels[..100], &[0, 1, 2, 3], kind, 0.2, &PinballSettings::default()).unwrap();
        let cal = (100..100 + n_cal).map(|i| (d.rows[i].as_slice(), d.labels[i]));
        let expert = CalibratedExpert::calibrate(e, cal).unwrap();
        for i in 100 + n_cal..d.len() {
            out.push(expert.p_value(&d.rows[i], d.labels[i]));
        }
    }
    out
}

fn check_validity(p: &[f64]) {
    let n = p.len() as f64;
    for alpha in [0.05, 0.1, 0.2, 0.5] {
        let f = p.iter().filter(|&&v| v <= alpha).count() as f64 / n;
        let se = (alpha * (1.0 - alpha) / n).sqrt();
        assert!(f <= alpha + 3.0 * se, "alpha {alpha}: {f}");
    }
}

#[test]
fn abs_residual_p_values_are_valid() {
    check_validity(&true_label_p_values(ScoreKind::AbsResidual, 50, 50, 200));
}

#[test]
fn cqr_p_values_are_valid() {
    check_validity(&true_label_p_values(ScoreKind::Cqr, 50, 50, 200));
}

#[test]
fn one_expert_aggregate_equals_split_set() {
    let d = gen_synthetic(600, 77);
    let e = fit_expert("only", &d.rows[..200], &d.labels[..200], &[0, 5, 9], ScoreKind::AbsResidual, 0.1, &PinballSettings::default()).unwrap();
    let cal = (200..400).map(|i| (d.rows[i].as_slice(), d.labels[i]));
    let expert = CalibratedExpert::calibrate(e, cal).unwrap();
    let w = WeightVector::uniform(1);
    for i in 400..600 {
        let prof = expert.profile(&d.rows[i]);
        for alpha in [0.05, 0.1, 0.3] {
            let agg = aggregate_set(std::slice::from_ref(&prof), &w, &MergeCorrection::identity(1), alpha).unwrap();
            assert_eq!(agg, prof.threshold_set(alpha));
        }
    }
}
