use proptest::prelude::*;
use rheocast::datapipe::{apply_norm, denorm, Category, MeanStd, NormStats};

fn stats() -> impl Strategy<Value = NormStats> {
    prop::collection::vec((-500.0..500.0f64, 0.01..300.0f64), Category::ALL.len()).prop_map(|v| {
        let mut s = NormStats::default();
        for (c, (mean, std)) in Category::ALL.into_iter().zip(v) {
            s.set(c, MeanStd { mean, std });
        }
        s
    })
}

proptest! {
    #[test]
    fn round_trip(s in stats(), x in -1e4..1e4f64, c in 0usize..7) {
        let c = Category::ALL[c];
        let z = apply_norm(x, &s, c).unwrap();
        prop_assert!((denorm(z, &s, c).unwrap() - x).abs() <= 1e-9 * x.abs().max(1.0));
    }

    #[test]
    fn text_form_is_lossless(s in stats()) {
        let parsed = NormStats::parse(&s.to_text()).unwrap();
        for c in Category::ALL {
            prop_assert_eq!(parsed.get(c).unwrap(), s.get(c).unwrap());
        }
    }
}

#[test]
fn missing_category_is_an_error() {
    let s = NormStats::default();
    assert!(apply_norm(1.0, &s, Category::Mu).is_err());
}
