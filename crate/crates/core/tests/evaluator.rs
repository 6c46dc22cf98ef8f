use proptest::prelude::*;
use rheocast::evaluator::{average_predictions, averaged_metrics, epsilon_metrics, Grouping, Prediction};

fn prediction(c: usize, r: usize, combo: usize, noise: [f64; 3]) -> Prediction {
    let target = [40.0 + c as f64, 200.0 + 10.0 * combo as f64, 50.0 + combo as f64];
    Prediction {
        concrete_id: c,
        run_id: r,
        combination_index: combo,
        reference_ts_min: [9.0 + 30.0 * combo as f64, 11.0 + 30.0 * combo as f64],
        pred: [0, 1, 2].map(|k| target[k] + noise[k]),
        target,
        mask: [true; 3],
    }
}

fn predictions() -> impl Strategy<Value = Vec<Prediction>> {
    prop::collection::vec(
        (0usize..4, 0usize..3, 0usize..3, prop::array::uniform3(-5.0..5.0f64)),
        1..60,
    )
    .prop_map(|v| v.into_iter().map(|(c, r, k, n)| prediction(c, r, k, n)).collect())
}

proptest! {
    #[test]
    fn exact_predictions_score_zero(preds in predictions(), g in 0usize..4) {
        let exact: Vec<Prediction> = preds.into_iter().map(|p| Prediction { pred: p.target, ..p }).collect();
        let m = averaged_metrics(&average_predictions(&exact, Grouping::ALL[g])).unwrap();
        prop_assert_eq!(m.eps_abs, [0.0; 3]);
        prop_assert_eq!(m.eps_rel, [0.0; 3]);
    }

    #[test]
    fn groups_conserve_predictions(preds in predictions(), g in 0usize..4) {
        let avg = average_predictions(&preds, Grouping::ALL[g]);
        for k in 0..3 {
            let groups = avg.outputs[k].len() as f64;
            prop_assert!((avg.mean_group_size[k] * groups - preds.len() as f64).abs() < 1e-9);
            let mut only_k = [false; 3];
            only_k[k] = true;
            prop_assert!(avg.outputs[k].iter().all(|p| p.mask == only_k));
        }
    }

    #[test]
    fn no_grouping_matches_plain_metrics(preds in predictions()) {
        let plain = epsilon_metrics(&preds).unwrap();
        let none = averaged_metrics(&average_predictions(&preds, Grouping::None)).unwrap();
        for k in 0..3 {
            prop_assert!((plain.eps_abs[k] - none.eps_abs[k]).abs() < 1e-9);
            prop_assert!((plain.eps_rel[k] - none.eps_rel[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn averaging_never_hurts_absolute_error_within_a_concrete(
        noise in prop::collection::vec(prop::array::uniform3(-5.0..5.0f64), 2..30),
    ) {
        // One concrete, one reference: the averaged error is |mean noise|,
        // never above the mean |noise|.
        let preds: Vec<Prediction> = noise.iter().map(|&n| prediction(0, 0, 0, n)).collect();
        let single = epsilon_metrics(&preds).unwrap();
        let avg = averaged_metrics(&average_predictions(&preds, Grouping::PerRun)).unwrap();
        for k in 0..3 {
            prop_assert!(avg.eps_abs[k] <= single.eps_abs[k] + 1e-9);
        }
    }
}

#[test]
fn grouping_names_round_trip() {
    for g in Grouping::ALL {
        assert_eq!(Grouping::parse(&g.to_string()).unwrap(), g);
    }
    assert!(Grouping::parse("weekly").is_err());
}
