use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxlabel_core::graphcut::{refine_prediction, segment_scribbles, EnergyParams};
use voxlabel_core::synthetic::{draw_stroke, SpherePhantom};
use voxlabel_core::volume::{ProbabilityMap, ScribbleMask};

fn random_point(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> [usize; 3] {
    dims.map(|d| rng.gen_range(0..d))
}

#[test]
fn scribbled_voxels_keep_their_label() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..100 {
        let dims = [rng.gen_range(6..16), rng.gen_range(6..16), rng.gen_range(6..16)];
        let phantom = SpherePhantom {
            noise: rng.gen_range(0.0..40.0),
            ..SpherePhantom::random(dims, &mut rng)
        };
        let (v, _) = phantom.render(rng.gen());
        let mut s = ScribbleMask::empty(dims);
        for _ in 0..rng.gen_range(1..4) {
            let (a, b) = (random_point(&mut rng, dims), random_point(&mut rng, dims));
            draw_stroke(&mut s, a, b, rng.gen_range(0..2), ScribbleMask::FOREGROUND);
        }
        for _ in 0..rng.gen_range(1..4) {
            let (a, b) = (random_point(&mut rng, dims), random_point(&mut rng, dims));
            draw_stroke(&mut s, a, b, rng.gen_range(0..2), ScribbleMask::BACKGROUND);
        }
        if s.count(ScribbleMask::FOREGROUND) == 0 || s.count(ScribbleMask::BACKGROUND) == 0 {
            continue;
        }
        let p = EnergyParams {
            lambda_pair: rng.gen_range(0.0..20.0),
            ..Default::default()
        };
        let out = segment_scribbles(&v, &s, &p, 128).unwrap();
        let prob = ProbabilityMap::new(dims, (0..v.len()).map(|_| rng.gen_range(0.0..=1.0)).collect()).unwrap();
        let refined = refine_prediction(&prob, &v, Some(&s), &p).unwrap();
        for (i, &mark) in s.data().iter().enumerate() {
            match mark {
                ScribbleMask::FOREGROUND => {
                    assert!(out.is_foreground(i), "case {case} voxel {i}");
                    assert!(refined.is_foreground(i), "case {case} voxel {i}");
                }
                ScribbleMask::BACKGROUND => {
                    assert!(!out.is_foreground(i), "case {case} voxel {i}");
                    assert!(!refined.is_foreground(i), "case {case} voxel {i}");
                }
                _ => {}
            }
        }
    }
}
