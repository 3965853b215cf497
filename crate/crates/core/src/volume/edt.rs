//! Exact Euclidean distance transform by separable lower-envelope passes
//! (one 1D parabola envelope per axis).

use super::{Dims, LabelMask};

const FAR: f64 = f64::INFINITY;

/// Squared distance from each foreground voxel to the nearest background
/// voxel, in voxel units. Background voxels are 0. With no background at
/// all, foreground voxels are `+inf`.
pub fn edt_squared(m: &LabelMask) -> Vec<f64> {
    let dims = m.dims();
    let mut f: Vec<f64> = m
        .data()
        .iter()
        .map(|&v| if v == 0 { 0.0 } else { FAR })
        .collect();
    let longest = dims.iter().copied().max().unwrap_or(0);
    let mut scratch = Envelope::with_capacity(longest);
    for axis in 0..3 {
        transform_axis(&mut f, dims, axis, &mut scratch);
    }
    f
}

/// Euclidean distance (square root of [`edt_squared`]).
pub fn edt(m: &LabelMask) -> Vec<f64> {
    edt_squared(m).into_iter().map(f64::sqrt).collect()
}

fn transform_axis(f: &mut [f64], dims: Dims, axis: usize, env: &mut Envelope) {
    let n = dims[axis];
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let mut line = vec![0.0; n];
    for start in 0..f.len() {
        // a line starts wherever the axis coordinate is zero
        if (start / stride) % n != 0 {
            continue;
        }
        for (k, v) in line.iter_mut().enumerate() {
            *v = f[start + k * stride];
        }
        env.run(&line);
        for k in 0..n {
            f[start + k * stride] = env.out[k];
        }
    }
}

struct Envelope {
    v: Vec<usize>,
    z: Vec<f64>,
    out: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Self {
            v: vec![0; n],
            z: vec![0.0; n + 1],
            out: vec![0.0; n],
        }
    }

    /// d(q) = min_p (q - p)^2 + f(p)
    fn run(&mut self, f: &[f64]) {
        let n = f.len();
        self.out.clear();
        self.out.resize(n, FAR);
        let Some(first) = f.iter().position(|x| x.is_finite()) else {
            return;
        };
        let mut k = 0usize;
        self.v[0] = first;
        self.z[0] = f64::NEG_INFINITY;
        self.z[1] = f64::INFINITY;
        for q in first + 1..n {
            if !f[q].is_finite() {
                continue;
            }
            // z[0] is -inf, so k never underflows
            let s = loop {
                let p = self.v[k];
                let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
                if s <= self.z[k] {
                    k -= 1;
                } else {
                    break s;
                }
            };
            k += 1;
            self.v[k] = q;
            self.z[k] = s;
            self.z[k + 1] = f64::INFINITY;
        }
        let mut k = 0;
        for q in 0..n {
            while self.z[k + 1] < q as f64 {
                k += 1;
            }
            let p = self.v[k];
            let d = q as f64 - p as f64;
            self.out[q] = d * d + f[p];
        }
    }
}
