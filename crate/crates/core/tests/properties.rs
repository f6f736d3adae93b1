use deshadow::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
use deshadow::image::Image;
use deshadow::metrics::{psnr, total_loss, LossConfig};
use deshadow::model::{infer_unclamped, Ablation, ModelConfig, ParamStore};
use deshadow::pyramid::{decompose, max_levels, reconstruct};
use deshadow::Error;
use proptest::prelude::*;

fn image(h: usize, w: usize, c: usize, seed: u64) -> Image {
    // cheap deterministic hash noise in [0, 1]
    Image::from_fn(h, w, c, |(y, x, k)| {
        let mut v = seed ^ ((y as u64) << 32) ^ ((x as u64) << 16) ^ k as u64;
        v = v.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        v ^= v >> 29;
        (v % 1001) as f32 / 1000.0
    })
    .unwrap()
}

fn tiny() -> ModelConfig {
    ModelConfig {
        levels: 2,
        feature_channels: 4,
        attention_heads: 2,
        maa_stages: 2,
        ..ModelConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn pyramid_shapes_and_roundtrip(h in 4usize..80, w in 4usize..80, c in prop::sample::select(vec![1usize, 3]), seed: u64, l in 0usize..6) {
        let img = image(h, w, c, seed);
        let levels = l.min(max_levels(h, w));
        let pyr = decompose(&img, levels).unwrap();
        prop_assert_eq!(pyr.levels(), levels);
        for (k, band) in pyr.highs().iter().enumerate() {
            prop_assert_eq!(band.dims(), (h.div_ceil(1 << k), w.div_ceil(1 << k)));
        }
        prop_assert_eq!(pyr.low().dims(), (h.div_ceil(1 << levels), w.div_ceil(1 << levels)));
        prop_assert!(reconstruct(&pyr).unwrap().max_abs_diff(&img) < 1e-5);
    }

    #[test]
    fn too_deep_is_an_error(h in 1usize..80, w in 1usize..80) {
        let img = image(h, w, 1, 0);
        let too_deep = decompose(&img, max_levels(h, w) + 1);
        prop_assert!(matches!(too_deep, Err(Error::PyramidTooDeep { .. })), "{:?}", too_deep.err());
    }

    #[test]
    fn loss_is_zero_only_on_the_target(seed: u64, dy in 0usize..16, dx in 0usize..16, eps in 1e-3f32..0.5) {
        let t = image(16, 16, 3, seed);
        let cfg = LossConfig::default();
        prop_assert_eq!(total_loss(&t, &t, &cfg).unwrap().total, 0.0);
        let mut data = t.data().clone();
        data[[dy, dx, 1]] = if data[[dy, dx, 1]] > 0.5 { data[[dy, dx, 1]] - eps } else { data[[dy, dx, 1]] + eps };
        let p = Image::new(data).unwrap();
        prop_assert!(total_loss(&p, &t, &cfg).unwrap().total > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn fresh_models_are_identity_for_every_ablation(seed: u64, h in 16usize..40, w in 16usize..40, which in 0usize..3) {
        let ablation = [Ablation::Full, Ablation::NoAan, Ablation::NoGmft][which];
        let cfg = tiny().with_ablation(ablation);
        let params = ParamStore::init(&ModelConfig { seed, ..cfg.clone() }).unwrap();
        let img = image(h, w, 3, seed);
        let out = infer_unclamped(&img, &params, &cfg).unwrap();
        prop_assert!(out.max_abs_diff(&img.to_tensor()) < 1e-5);
    }

    #[test]
    fn checkpoints_roundtrip_bit_exactly(seed: u64, step in 0usize..10_000) {
        let cfg = ModelConfig { seed, ..tiny() };
        let mut params = ParamStore::init(&cfg).unwrap();
        let names: Vec<String> = params.names().map(String::from).collect();
        for (i, n) in names.iter().enumerate() {
            for (j, v) in params.get_mut(n).unwrap().data.iter_mut().enumerate() {
                *v += ((i * 31 + j) % 17) as f32 * 1e-3 - 8e-3;
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        save_checkpoint(&params, &cfg, &CheckpointMeta { step, metrics: None }, &path).unwrap();
        let (back, back_cfg, meta) = load_checkpoint(&path).unwrap();
        prop_assert_eq!(back_cfg, cfg);
        prop_assert_eq!(meta.step, step);
        for (name, t) in params.iter() {
            let b = back.get(name).unwrap();
            prop_assert_eq!(&b.shape, &t.shape);
            prop_assert!(b.data.iter().zip(&t.data).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}

#[test]
fn psnr_falls_as_noise_grows() {
    let t = image(24, 24, 3, 5);
    let values: Vec<f64> = [0.01f32, 0.05, 0.2]
        .iter()
        .map(|&a| {
            let noisy = t.zip_map(&image(24, 24, 3, 99), |v, n| v + a * (n - 0.5)).unwrap();
            psnr(&noisy, &t).unwrap()
        })
        .collect();
    assert!(values[0] > values[1] && values[1] > values[2], "{values:?}");
}
