use voxlabel_core::planner::{dataset_stats, plan, plan_with, save_plan, Plan, PlannerConfig, PLAN_FILE};
use voxlabel_core::stats::{percentile_sorted, sorted_copy};
use voxlabel_core::volume::Volume;
use voxlabel_core::Error;

fn ramp() -> Volume {
    Volume::from_data([10, 10, 10], (0..1000).map(|i| i as f32).collect()).unwrap()
}

#[test]
fn ramp_percentiles_match_sort_oracle() {
    let s = dataset_stats([&ramp()]).unwrap();
    let mut values: Vec<f64> = (0..1000).map(f64::from).collect();
    values.reverse();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = 0.995 * 999.0;
    let (lo, hi) = (pos as usize, pos as usize + 1);
    let oracle = values[lo] + (pos - lo as f64) * (values[hi] - values[lo]);
    assert!((s.intensity_p995 - 994.005).abs() < 1e-9);
    assert!((s.intensity_p995 - oracle).abs() < 1e-12);
    assert_eq!(percentile_sorted(&sorted_copy(values), 0.995), s.intensity_p995);
    assert!(s.intensity_p05 <= s.intensity_p995);
}

#[test]
fn normalization_round_trip() {
    let images = [
        ramp(),
        Volume::from_data([6, 5, 4], (0..120).map(|i| ((i * 37) % 101) as f32 * 3.0 - 50.0).collect()).unwrap(),
    ];
    let s = dataset_stats(&images).unwrap();
    let p = plan(&s, 1 << 30).unwrap();
    let z: Vec<f64> = images
        .iter()
        .flat_map(|v| v.data().iter().map(|&x| p.normalization.apply(f64::from(x))))
        .collect();
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let std = (z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!(mean.abs() < 1e-6, "{mean}");
    assert!((std - 1.0).abs() < 1e-6, "{std}");
}

#[test]
fn budget_sweep_is_monotone_and_feasible() {
    let cfg = PlannerConfig::default();
    let floor = cfg.estimated_bytes(1, [16; 3]);
    for dims in [[40, 40, 40], [300, 260, 90], [8, 8, 8], [128, 128, 128]] {
        let v = Volume::filled(dims, 1.0).unwrap();
        let s = dataset_stats([&v]).unwrap();
        let sweep: Vec<u64> = (0..20).map(|k| (floor as f64 * 1.9f64.powi(k)) as u64).collect();
        let plans: Vec<Plan> = sweep.iter().map(|&b| plan(&s, b).unwrap()).collect();
        for (p, &b) in plans.iter().zip(&sweep) {
            assert!(p.estimated_bytes <= b);
            assert_eq!(p.estimated_bytes, cfg.estimated_bytes(p.batch_size, p.roi_size));
            assert!((1..=8).contains(&p.batch_size));
            for a in 0..3 {
                assert!(p.roi_size[a].is_power_of_two() && p.roi_size[a] >= 16);
                assert!(p.roi_size[a] <= s.max_dims[a].next_power_of_two().max(16));
            }
        }
        for w in plans.windows(2) {
            let vol = |p: &Plan| p.roi_size.iter().product::<usize>();
            assert!(vol(&w[0]) <= vol(&w[1]));
            assert!(w[0].batch_size <= w[1].batch_size);
        }
        assert!(matches!(plan(&s, floor - 1), Err(Error::InsufficientBudget(_))));
    }
}

#[test]
fn configurable_overhead() {
    let v = Volume::filled([64, 64, 64], 1.0).unwrap();
    let s = dataset_stats([&v]).unwrap();
    let cfg = PlannerConfig {
        overhead: 1,
        ..Default::default()
    };
    let p = plan_with(&s, 3 * 64 * 64 * 64 * 4, &cfg).unwrap();
    assert_eq!((p.roi_size, p.batch_size), ([64; 3], 1));
}

#[test]
fn plan_file() {
    let dir = tempfile::tempdir().unwrap();
    let s = dataset_stats([&ramp()]).unwrap();
    let p = plan(&s, 1 << 28).unwrap();
    save_plan(dir.path(), &p).unwrap();
    let back: Plan = serde_json::from_slice(&std::fs::read(dir.path().join(PLAN_FILE)).unwrap()).unwrap();
    assert_eq!(back, p);
}
