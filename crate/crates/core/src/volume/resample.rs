use super::{linear_index, Affine, Dims, LabelMask, Volume};
use crate::error::{Error, Result};

/// Per-axis output size and the input coordinate of each output voxel
/// center: `x_in = (i + 0.5) * scale - 0.5` with `scale = n_in / n_out`, so
/// the covered world extent is unchanged.
struct AxisMap {
    out: usize,
    scale: f64,
    n_in: usize,
}

impl AxisMap {
    fn new(n_in: usize, spacing: f64, target: f64) -> Result<Self> {
        if !(target.is_finite() && target > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "target spacing {target} must be positive"
            )));
        }
        let rounded = (n_in as f64 * spacing / target).round();
        if rounded < 1.0 && n_in > 1 {
            return Err(Error::DegenerateOutput);
        }
        let out = (rounded as usize).max(1);
        Ok(Self {
            out,
            scale: n_in as f64 / out as f64,
            n_in,
        })
    }

    fn source(&self, i: usize) -> f64 {
        let x = (i as f64 + 0.5) * self.scale - 0.5;
        x.clamp(0.0, (self.n_in - 1) as f64)
    }

    /// Lower neighbor and fractional weight of the upper one.
    fn linear(&self, i: usize) -> (usize, usize, f64) {
        let x = self.source(i);
        let lo = x.floor() as usize;
        let hi = (lo + 1).min(self.n_in - 1);
        (lo, hi, x - lo as f64)
    }

    fn nearest(&self, i: usize) -> usize {
        ((self.source(i) + 0.5).floor() as usize).min(self.n_in - 1)
    }
}

fn axis_maps(dims: Dims, spacing: [f64; 3], target: [f64; 3]) -> Result<[AxisMap; 3]> {
    Ok([
        AxisMap::new(dims[0], spacing[0], target[0])?,
        AxisMap::new(dims[1], spacing[1], target[1])?,
        AxisMap::new(dims[2], spacing[2], target[2])?,
    ])
}

fn resampled_geometry(affine: &Affine, spacing: [f64; 3], maps: &[AxisMap; 3]) -> ([f64; 3], Affine) {
    let mut out = *affine;
    let mut sp = spacing;
    for (axis, m) in maps.iter().enumerate() {
        sp[axis] = spacing[axis] * m.scale;
    }
    // New voxel i maps to old coordinate scale*i + (scale-1)/2.
    for r in 0..3 {
        let mut offset = affine[r][3];
        for (c, m) in maps.iter().enumerate() {
            out[r][c] = affine[r][c] * m.scale;
            offset += affine[r][c] * (m.scale - 1.0) / 2.0;
        }
        out[r][3] = offset;
    }
    (sp, out)
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    // a + t (b - a) keeps constant signals exact
    if t == 0.0 {
        a
    } else {
        a + t * (b - a)
    }
}

/// Trilinear resampling of an image to `target_spacing`.
pub fn resample(v: &Volume, target_spacing: [f64; 3]) -> Result<Volume> {
    let dims = v.dims();
    let maps = axis_maps(dims, v.spacing(), target_spacing)?;
    let out_dims = [maps[0].out, maps[1].out, maps[2].out];
    let data = v.data();
    let sample = |x: usize, y: usize, z: usize| f64::from(data[linear_index(dims, x, y, z)]);
    let mut out = Vec::with_capacity(out_dims.iter().product());
    for k in 0..out_dims[2] {
        let (z0, z1, tz) = maps[2].linear(k);
        for j in 0..out_dims[1] {
            let (y0, y1, ty) = maps[1].linear(j);
            for i in 0..out_dims[0] {
                let (x0, x1, tx) = maps[0].linear(i);
                let c00 = lerp(sample(x0, y0, z0), sample(x1, y0, z0), tx);
                let c10 = lerp(sample(x0, y1, z0), sample(x1, y1, z0), tx);
                let c01 = lerp(sample(x0, y0, z1), sample(x1, y0, z1), tx);
                let c11 = lerp(sample(x0, y1, z1), sample(x1, y1, z1), tx);
                let c0 = lerp(c00, c10, ty);
                let c1 = lerp(c01, c11, ty);
                out.push(lerp(c0, c1, tz) as f32);
            }
        }
    }
    let (sp, affine) = resampled_geometry(v.affine(), v.spacing(), &maps);
    Volume::new(out_dims, sp, affine, out)
}

/// Nearest-neighbor resampling of a mask sampled at `spacing`.
pub fn resample_mask(m: &LabelMask, spacing: [f64; 3], target_spacing: [f64; 3]) -> Result<LabelMask> {
    let dims = m.dims();
    let maps = axis_maps(dims, spacing, target_spacing)?;
    let out_dims = [maps[0].out, maps[1].out, maps[2].out];
    let mut out = Vec::with_capacity(out_dims.iter().product());
    for k in 0..out_dims[2] {
        let z = maps[2].nearest(k);
        for j in 0..out_dims[1] {
            let y = maps[1].nearest(j);
            for i in 0..out_dims[0] {
                out.push(m.data()[linear_index(dims, maps[0].nearest(i), y, z)]);
            }
        }
    }
    LabelMask::new(out_dims, out)
}
