use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxlabel_core::volume::{connected_components, dice, nifti, resample, Affine, LabelMask, Volume};

fn random_volume(rng: &mut ChaCha8Rng) -> Volume {
    let dims = [rng.gen_range(1..9), rng.gen_range(1..9), rng.gen_range(1..9)];
    let spacing = [rng.gen_range(0.2..4.0), rng.gen_range(0.2..4.0), rng.gen_range(0.2..4.0)];
    let (s, c) = rng.gen_range(-3.0f64..3.0).sin_cos();
    let mut affine: Affine = [
        [c * spacing[0], -s * spacing[1], 0.0, rng.gen_range(-200.0..200.0)],
        [s * spacing[0], c * spacing[1], 0.0, rng.gen_range(-200.0..200.0)],
        [0.0, 0.0, spacing[2], rng.gen_range(-200.0..200.0)],
        [0.0, 0.0, 0.0, 1.0],
    ];
    if rng.gen_bool(0.5) {
        affine[0][0] = -affine[0][0];
        affine[1][0] = -affine[1][0];
    }
    let n = dims.iter().product();
    let data = (0..n)
        .map(|_| match rng.gen_range(0..10) {
            0 => f32::from_bits(rng.gen()),
            1 => -0.0,
            _ => rng.gen_range(-1e4f32..1e4),
        })
        .collect();
    Volume::new(dims, spacing, affine, data).unwrap()
}

#[test]
fn nifti_round_trip_100_volumes() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let v = random_volume(&mut rng);
        for gzip in [false, true] {
            let bytes = nifti::write(&v, gzip);
            assert_eq!(nifti::is_gzip(&bytes), gzip);
            let back = nifti::read(&bytes).unwrap();
            assert_eq!(back.dims(), v.dims());
            let a: Vec<u32> = v.data().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u32> = back.data().iter().map(|x| x.to_bits()).collect();
            assert_eq!(a, b);
            for r in 0..4 {
                for c in 0..4 {
                    let (x, y) = (v.affine()[r][c], back.affine()[r][c]);
                    assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0), "affine[{r}][{c}] {x} vs {y}");
                }
            }
        }
    }
}

#[test]
fn truncated_file_is_rejected() {
    let v = Volume::filled([4, 4, 4], 2.0).unwrap();
    let bytes = nifti::write(&v, false);
    assert!(nifti::read(&bytes[..bytes.len() - 1]).is_err());
    assert!(nifti::read(&bytes[..100]).is_err());
}

fn mask_strategy() -> impl Strategy<Value = LabelMask> {
    (1usize..6, 1usize..6, 1usize..6).prop_flat_map(|(x, y, z)| {
        proptest::collection::vec(0u8..2, x * y * z).prop_map(move |d| LabelMask::new([x, y, z], d).unwrap())
    })
}

proptest! {
    #[test]
    fn dice_is_symmetric_and_bounded(a in mask_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = LabelMask::from_fn(a.dims(), |_, _, _| rng.gen_bool(0.5));
        let d = dice(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, dice(&b, &a).unwrap());
        prop_assert_eq!(dice(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn components_partition_foreground(m in mask_strategy()) {
        let c = connected_components(&m);
        let total: usize = (1..=c.count() as u32).map(|l| c.voxels(l).len()).sum();
        prop_assert_eq!(total, m.count());
        for l in 1..c.count() as u32 {
            prop_assert!(c.voxels(l).len() >= c.voxels(l + 1).len());
        }
        for (i, &l) in c.labels.iter().enumerate() {
            prop_assert_eq!(l != 0, m.is_foreground(i));
        }
    }

    #[test]
    fn resampling_keeps_constants(
        dims in (2usize..7, 2usize..7, 2usize..7),
        sp in (0.5f64..3.0, 0.5f64..3.0, 0.5f64..3.0),
        target in 0.6f64..2.5,
        value in -100.0f32..100.0,
    ) {
        let dims = [dims.0, dims.1, dims.2];
        let v = Volume::with_spacing(dims, [sp.0, sp.1, sp.2], vec![value; dims.iter().product()]).unwrap();
        if let Ok(r) = resample(&v, [target; 3]) {
            prop_assert!(r.data().iter().all(|&x| (x - value).abs() <= 1e-4 * value.abs().max(1.0)));
            for a in 0..3 {
                let extent_in = dims[a] as f64 * [sp.0, sp.1, sp.2][a];
                let extent_out = r.dims()[a] as f64 * r.spacing()[a];
                prop_assert!((extent_in - extent_out).abs() < 1e-9 * extent_in.max(1.0));
            }
        }
    }
}
