use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxlabel_core::guidance::{simulate_clicks, simulate_clicks_with, ClickSimOptions};
use voxlabel_core::volume::{connected_components, coords, Dims, LabelMask};

/// Union of a few random boxes and balls.
fn random_blobs(rng: &mut ChaCha8Rng, dims: Dims) -> LabelMask {
    let shapes: Vec<([f64; 3], f64, bool)> = (0..rng.gen_range(1..4))
        .map(|_| (dims.map(|d| rng.gen_range(0.0..d as f64)), rng.gen_range(1.0..4.0), rng.gen_bool(0.5)))
        .collect();
    LabelMask::from_fn(dims, |x, y, z| {
        shapes.iter().any(|(c, r, ball)| {
            let d = [x as f64 - c[0], y as f64 - c[1], z as f64 - c[2]];
            if *ball {
                d.iter().map(|v| v * v).sum::<f64>() <= r * r
            } else {
                d.iter().all(|v| v.abs() <= *r)
            }
        })
    })
}

/// Brute-force distance from voxel `i` to the nearest voxel outside
/// `member`, where everything beyond the grid is outside.
fn brute_depth(dims: Dims, member: &[bool], i: usize) -> f64 {
    let p = coords(dims, i).map(|c| c as i64);
    let mut best = f64::INFINITY;
    for z in -1..=dims[2] as i64 {
        for y in -1..=dims[1] as i64 {
            for x in -1..=dims[0] as i64 {
                let q = [x, y, z];
                let inside = (0..3).all(|a| q[a] >= 0 && q[a] < dims[a] as i64);
                let idx = inside.then(|| (x + dims[0] as i64 * (y + dims[1] as i64 * z)) as usize);
                if idx.is_some_and(|j| member[j]) {
                    continue;
                }
                let d2: i64 = (0..3).map(|a| (q[a] - p[a]).pow(2)).sum();
                best = best.min((d2 as f64).sqrt());
            }
        }
    }
    best
}

#[test]
fn perfect_prediction_needs_no_clicks() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let gt = random_blobs(&mut rng, [9, 8, 7]);
        assert!(simulate_clicks(&gt, &gt, 5, 0).unwrap().is_empty());
    }
}

#[test]
fn clicks_sit_at_component_interiors() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dims = [10, 9, 8];
    for case in 0..100 {
        let gt = random_blobs(&mut rng, dims);
        let pred = random_blobs(&mut rng, dims);
        let budget = rng.gen_range(1..8);
        let jitter = case % 2 == 1;
        let clicks = simulate_clicks_with(&pred, &gt, budget, ClickSimOptions { jitter, seed: case }).unwrap();
        assert!(clicks.len() <= budget);

        let fn_mask = LabelMask::from_fn(dims, |x, y, z| gt.get(x, y, z) && !pred.get(x, y, z));
        let fp_mask = LabelMask::from_fn(dims, |x, y, z| !gt.get(x, y, z) && pred.get(x, y, z));
        let fn_c = connected_components(&fn_mask);
        let fp_c = connected_components(&fp_mask);
        assert_eq!(clicks.len(), budget.min(fn_c.count() + fp_c.count()));
        for (list, comps) in [(&clicks.positive, &fn_c), (&clicks.negative, &fp_c)] {
            for (k, c) in list.iter().enumerate() {
                let i = c[0] + dims[0] * (c[1] + dims[1] * c[2]);
                let label = comps.labels[i];
                assert_ne!(label, 0, "case {case}: click {c:?} outside its error region");
                assert_eq!(label, k as u32 + 1, "components are visited largest first");
                let member: Vec<bool> = comps.labels.iter().map(|&l| l == label).collect();
                let deepest = comps
                    .voxels(label)
                    .into_iter()
                    .map(|j| brute_depth(dims, &member, j))
                    .fold(0.0, f64::max);
                assert_eq!(brute_depth(dims, &member, i), deepest, "case {case}: {c:?}");
            }
        }
        let (p, n) = (clicks.positive.len(), clicks.negative.len());
        if fn_c.count() >= budget && fp_c.count() >= budget {
            assert_eq!(p, budget.div_ceil(2));
            assert_eq!(n, budget / 2);
        }
    }
}

#[test]
fn clicks_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gt = random_blobs(&mut rng, [12, 12, 12]);
    let pred = random_blobs(&mut rng, [12, 12, 12]);
    let opts = ClickSimOptions { jitter: true, seed: 5 };
    assert_eq!(
        simulate_clicks_with(&pred, &gt, 6, opts).unwrap(),
        simulate_clicks_with(&pred, &gt, 6, opts).unwrap()
    );
}
