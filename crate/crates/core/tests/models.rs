use pix2pix_mt::engine::Tensor;
use pix2pix_mt::models::{
    count_parameters, count_parameters_for, Discriminator, Generator, Scheme, SchemeConfig, Task,
};

#[test]
fn full_size_parameter_counts() {
    for scheme in Scheme::ALL {
        let expected = if scheme.tasks().len() == 1 {
            57_190_084
        } else {
            57_199_303
        };
        assert_eq!(
            count_parameters_for(&SchemeConfig::new(scheme, 512)),
            expected,
            "{scheme}"
        );
    }
}

#[test]
fn counted_and_allocated_parameters_agree() {
    for scheme in Scheme::ALL {
        let cfg = SchemeConfig::new(scheme, 64).with_base_width(4);
        let g = Generator::<f32>::new(cfg, 0).unwrap();
        let d = Discriminator::<f32>::new(cfg, 0).unwrap();
        assert_eq!(count_parameters(&g, &d), count_parameters_for(&cfg));
    }
}

#[test]
fn encoder_depth_by_size() {
    let depth = |n| SchemeConfig::new(Scheme::Mtdg, n).encoder_depth();
    assert_eq!(
        [16, 64, 128, 256, 512, 768].map(depth),
        [3, 5, 6, 8, 8, 8]
    );
}

#[test]
fn invalid_sizes_are_rejected() {
    for n in [0, 8, 40, 100] {
        assert!(SchemeConfig::new(Scheme::Mt, n).validate().is_err(), "{n}");
    }
    assert!(SchemeConfig::new(Scheme::Mt, 64)
        .with_base_width(0)
        .validate()
        .is_err());
}

#[test]
fn task_channel_layout() {
    assert_eq!(Scheme::Mtdg.tasks(), &[Task::Segmentation, Task::BoneSuppression]);
    assert_eq!(Scheme::StBoneD.tasks(), &[Task::BoneSuppression]);
    assert!(Scheme::StSegD.dilated() && !Scheme::Mt.dilated());
    for s in Scheme::ALL {
        assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
    }
    assert!("mtd".parse::<Scheme>().is_err());
}

#[test]
fn precision_cast_preserves_outputs() {
    let cfg = SchemeConfig::new(Scheme::Mtdg, 64).with_base_width(4);
    let g32 = Generator::<f32>::new(cfg, 11).unwrap();
    let g64: Generator<f64> = g32.cast();
    let x32 = Tensor::<f32>::from_vec(
        [1, 3, 64, 64],
        (0..3 * 64 * 64).map(|i| ((i % 97) as f32 / 48.0) - 1.0).collect(),
    )
    .unwrap();
    let y32 = g32.predict(&x32).unwrap();
    let y64 = g64.predict(&x32.cast()).unwrap();
    let worst = y32
        .data()
        .iter()
        .zip(y64.data())
        .map(|(a, b)| (*a as f64 - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn wrong_input_shape_is_rejected() {
    let cfg = SchemeConfig::new(Scheme::Mt, 64).with_base_width(2);
    let g = Generator::<f32>::new(cfg, 0).unwrap();
    assert!(g.predict(&Tensor::zeros([1, 3, 32, 32])).is_err());
    assert!(g.predict(&Tensor::zeros([1, 1, 64, 64])).is_err());
}

#[test]
fn same_seed_same_weights() {
    let cfg = SchemeConfig::new(Scheme::Mtdg, 64).with_base_width(2);
    let a = Generator::<f32>::new(cfg, 5).unwrap();
    let b = Generator::<f32>::new(cfg, 5).unwrap();
    let c = Generator::<f32>::new(cfg, 6).unwrap();
    let values = |g: &Generator<f32>| g.params().iter().flat_map(|p| p.value.clone()).collect::<Vec<_>>();
    assert_eq!(values(&a), values(&b));
    assert_ne!(values(&a), values(&c));
}
