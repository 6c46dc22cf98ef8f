use proptest::prelude::*;
use rheocast::datapipe::{optical_flow, FlowParams, Grid};

fn shifted(h: usize, w: usize, dx: f64, dy: f64, phase: f64) -> Grid {
    let tau = std::f64::consts::TAU;
    Grid::from_fn(h, w, |y, x| {
        let (x, y) = (x as f64 - dx, y as f64 - dy);
        let v = (tau * (2.0 * x / w as f64 + y / h as f64) + phase).sin()
            + 0.7 * (tau * (3.0 * y / h as f64 - x / w as f64) + 2.0 * phase).sin()
            + 0.5 * (tau * (x / w as f64 + 4.0 * y / h as f64)).cos();
        (0.5 + 0.2 * v) as f32
    })
}

fn interior_median(g: &Grid, margin: usize) -> f64 {
    let (h, w) = g.shape();
    let mut v: Vec<f32> = (margin..h - margin)
        .flat_map(|y| (margin..w - margin).map(move |x| (y, x)))
        .map(|(y, x)| g.get(y, x))
        .collect();
    v.sort_by(f32::total_cmp);
    v[v.len() / 2] as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn recovers_small_translations(dx in -3.0..3.0f64, dy in -3.0..3.0f64, phase in 0.0..6.0f64) {
        let a = shifted(48, 48, 0.0, 0.0, phase);
        let b = shifted(48, 48, dx, dy, phase);
        let f = optical_flow(&a, &b, &FlowParams::default()).unwrap();
        prop_assert!((interior_median(&f.x, 12) - dx).abs() < 0.25, "x {dx}");
        prop_assert!((interior_median(&f.y, 12) - dy).abs() < 0.25, "y {dy}");
    }
}

#[test]
fn identical_frames_have_no_flow() {
    let a = shifted(40, 56, 0.0, 0.0, 1.0);
    let f = optical_flow(&a, &a, &FlowParams::default()).unwrap();
    assert!(f.x.data().iter().chain(f.y.data()).all(|v| v.abs() < 1e-3));
}

#[test]
fn mismatched_shapes_are_rejected() {
    let a = Grid::zeros(32, 32);
    let b = Grid::zeros(32, 40);
    assert!(optical_flow(&a, &b, &FlowParams::default()).is_err());
}
