//! Seeded synthetic phantoms used by tests, benchmarks and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::volume::{Dims, LabelMask, ScribbleMask, Volume};

/// A sphere of intensity `background + contrast` in a `background` field,
/// plus Gaussian noise of standard deviation `noise`.
#[derive(Debug, Clone, Copy)]
pub struct SpherePhantom {
    pub dims: Dims,
    pub center: [f64; 3],
    pub radius: f64,
    pub background: f32,
    pub contrast: f32,
    pub noise: f64,
}

impl SpherePhantom {
    pub fn centered(dims: Dims, radius: f64) -> Self {
        Self {
            dims,
            center: dims.map(|d| (d as f64 - 1.0) / 2.0),
            radius,
            background: 0.0,
            contrast: 100.0,
            noise: 0.0,
        }
    }

    pub fn truth(&self) -> LabelMask {
        let c = self.center;
        let r2 = self.radius * self.radius;
        LabelMask::from_fn(self.dims, |x, y, z| {
            let d = [x as f64 - c[0], y as f64 - c[1], z as f64 - c[2]];
            d.iter().map(|v| v * v).sum::<f64>() <= r2
        })
    }

    pub fn render(&self, seed: u64) -> (Volume, LabelMask) {
        let truth = self.truth();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, self.noise.max(0.0)).expect("finite noise");
        let data = truth
            .data()
            .iter()
            .map(|&fg| {
                let base = self.background + if fg != 0 { self.contrast } else { 0.0 };
                let n = if self.noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                base + n as f32
            })
            .collect();
        (Volume::from_data(self.dims, data).expect("valid dims"), truth)
    }

    /// Randomized phantom: center and radius drawn inside the grid.
    pub fn random(dims: Dims, rng: &mut impl Rng) -> Self {
        let min_dim = dims.iter().copied().min().unwrap_or(1) as f64;
        let radius = rng.gen_range(0.15..0.35) * min_dim;
        let center = dims.map(|d| {
            let d = d as f64;
            rng.gen_range((radius).min(d / 2.0)..=(d - 1.0 - radius).max(d / 2.0))
        });
        Self {
            dims,
            center,
            radius,
            background: 0.0,
            contrast: 100.0,
            noise: 10.0,
        }
    }
}

/// Marks a straight stroke from `a` to `b` (inclusive) with a cubic brush of
/// half-width `brush`.
pub fn draw_stroke(s: &mut ScribbleMask, a: [usize; 3], b: [usize; 3], brush: usize, value: u8) {
    let dims = s.dims();
    let steps = (0..3).map(|i| a[i].abs_diff(b[i])).max().unwrap_or(0).max(1);
    for t in 0..=steps {
        let f = t as f64 / steps as f64;
        let p: [usize; 3] =
            std::array::from_fn(|i| (a[i] as f64 + f * (b[i] as f64 - a[i] as f64)).round() as usize);
        for dz in 0..=2 * brush {
            for dy in 0..=2 * brush {
                for dx in 0..=2 * brush {
                    let q = [p[0] + dx, p[1] + dy, p[2] + dz];
                    if q.iter().zip(dims).all(|(&c, d)| c >= brush && c - brush < d) {
                        s.mark(q[0] - brush, q[1] - brush, q[2] - brush, value);
                    }
                }
            }
        }
    }
}

/// Seeded train/validation split of randomized noisy sphere phantoms.
pub fn sphere_benchmark(
    dims: Dims,
    n_train: usize,
    n_val: usize,
    seed: u64,
) -> (Vec<(Volume, LabelMask)>, Vec<(Volume, LabelMask)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all: Vec<(Volume, LabelMask)> = (0..n_train + n_val)
        .map(|_| {
            let phantom = SpherePhantom::random(dims, &mut rng);
            phantom.render(rng.gen())
        })
        .collect();
    let val = all.split_off(n_train);
    (all, val)
}
