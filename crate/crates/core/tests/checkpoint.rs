use proptest::prelude::*;
use rheocast::kernels::{Mode, NdArray, OptimizerState};
use rheocast::model::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Batch, Model, ModelConfig};

fn small() -> ModelConfig {
    ModelConfig {
        input_size: (16, 16),
        conv_channels: [2, 3, 3, 4, 4, 4, 4],
        embedding_len: 4,
        fc_sizes: [6, 5, 3],
        ..ModelConfig::desk64()
    }
}

fn batch(cfg: &ModelConfig, n: usize) -> Batch<f32> {
    let (h, w) = cfg.input_size;
    let ramp = |shape: &[usize]| {
        let len: usize = shape.iter().product();
        NdArray::from_vec(shape, (0..len).map(|i| ((i * 37 % 101) as f32 / 50.0) - 1.0).collect()).unwrap()
    };
    Batch {
        images: ramp(&[n, cfg.in_channels, h, w]),
        delta_t: ramp(&[n, 2]),
        mix: ramp(&[n, cfg.mix_dim]),
    }
}

#[test]
fn round_trip_preserves_predictions_and_bytes() {
    let cfg = small();
    let mut model = Model::<f32>::build(&cfg, 3).unwrap();
    let b = batch(&cfg, 3);
    model.forward(&b, Mode::Train).unwrap();
    let opt = OptimizerState::new(5e-3, 0.99, 1e-3).unwrap();
    let bytes = encode_checkpoint(&model, Some(&opt));
    let back = decode_checkpoint::<f32>(&bytes).unwrap();
    assert_eq!(back.model.predict(&b).unwrap(), model.predict(&b).unwrap());
    assert_eq!(encode_checkpoint(&back.model, back.optimizer.as_ref()), bytes);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.rhc");
    save_checkpoint(&path, &model, None).unwrap();
    assert_eq!(load_checkpoint::<f32>(&path).unwrap().model, model);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn damaged_checkpoints_fail_cleanly(cut in 0usize..4000, flip in any::<(usize, u8)>()) {
        let model = Model::<f32>::build(&small(), 1).unwrap();
        let bytes = encode_checkpoint(&model, None);
        let cut = cut % bytes.len();
        prop_assert!(decode_checkpoint::<f32>(&bytes[..cut]).is_err());
        let mut damaged = bytes.clone();
        let i = flip.0 % bytes.len();
        damaged[i] ^= flip.1.max(1);
        // Either detected, or (for payload bytes) decoded to some model.
        let _ = decode_checkpoint::<f32>(&damaged);
    }
}
