use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxlabel_core::guidance::{compose_input, encode_clicks};
use voxlabel_core::model::{
    gradient_check, load_checkpoint, save_checkpoint, train, GuidanceSchedule, ReferenceModel, TrainConfig,
    TrainMode,
};
use voxlabel_core::synthetic::{sphere_benchmark, SpherePhantom};
use voxlabel_core::volume::{ClickSet, LabelMask, Volume};

#[test]
fn analytic_gradient_matches_central_differences() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [4, 4, 4];
        let v = Volume::from_data(dims, (0..64).map(|_| rng.gen_range(-50.0..150.0)).collect()).unwrap();
        let gt = LabelMask::from_fn(dims, |_, _, _| rng.gen_bool(0.4));
        let clicks = ClickSet {
            positive: vec![dims.map(|d| rng.gen_range(0..d))],
            negative: vec![dims.map(|d| rng.gen_range(0..d))],
        };
        let g = encode_clicks(&clicks, dims, 2.0).unwrap();
        let input = compose_input(&v, Some(&g)).unwrap();
        let m = ReferenceModel::random(seed, 1.0, 0.2);
        let err = gradient_check(&m, &input, &gt);
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

fn small_set(n: usize, seed: u64) -> Vec<(Volume, LabelMask)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| SpherePhantom::random([10, 10, 10], &mut rng).render(rng.gen())).collect()
}

#[test]
fn deepedit_uses_zero_guidance_on_half_the_iterations() {
    for (n, epochs) in [(1, 1), (3, 3), (5, 2), (4, 5)] {
        let data = small_set(n, n as u64);
        let cfg = TrainConfig {
            epochs,
            rng_seed: 9,
            ..Default::default()
        };
        let (m1, r1) = train(&ReferenceModel::zeros(0.2), &data, &cfg, &[]).unwrap();
        let total = n * epochs;
        assert_eq!(r1.zero_guidance.len(), total);
        assert_eq!(r1.zero_guidance_iterations(), total.div_ceil(2));
        let (m2, r2) = train(&ReferenceModel::zeros(0.2), &data, &cfg, &[]).unwrap();
        assert_eq!((m1, r1), (m2, r2));
    }
}

#[test]
fn other_modes() {
    let data = small_set(3, 1);
    let run = |mode, schedule| {
        let cfg = TrainConfig {
            epochs: 4,
            mode,
            schedule,
            rng_seed: 4,
            ..Default::default()
        };
        train(&ReferenceModel::zeros(0.2), &data, &cfg, &[]).unwrap().1
    };
    assert_eq!(run(TrainMode::Automatic, GuidanceSchedule::Alternate).zero_guidance_iterations(), 12);
    assert_eq!(run(TrainMode::Deepgrow, GuidanceSchedule::Alternate).zero_guidance_iterations(), 0);
    let a = run(TrainMode::Deepedit, GuidanceSchedule::Random);
    assert_eq!(a, run(TrainMode::Deepedit, GuidanceSchedule::Random));
    assert!(a.zero_guidance_iterations() > 0 && a.zero_guidance_iterations() < 12);
}

#[test]
fn trained_model_survives_checkpoint() {
    let (tr, val) = sphere_benchmark([12, 12, 12], 3, 1, 2);
    let cfg = TrainConfig {
        epochs: 2,
        ..Default::default()
    };
    let (m, _) = train(&ReferenceModel::zeros(0.2), &tr, &cfg, &val).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("deepedit.lfm");
    save_checkpoint(&path, &m, Some(&cfg)).unwrap();
    let (back, back_cfg) = load_checkpoint(&path).unwrap();
    assert_eq!(back, m);
    assert_eq!(back_cfg, Some(cfg));
    let p1 = m.predict(&val[0].0, None, false, 0).unwrap();
    let p2 = back.predict(&val[0].0, None, false, 0).unwrap();
    assert_eq!(p1, p2);
}
