//! Click guidance: Gaussian click channels, the three-channel model input, and
//! training-time click simulation from prediction errors.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::volume::{
    connected_components, coords, edt_squared, ensure_same_dims, linear_index, voxel_count, ClickSet,
    Dims, LabelMask, Volume,
};

pub const DEFAULT_SIGMA: f64 = 2.0;

/// Positive and negative click channels, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceChannels {
    pub dims: Dims,
    pub pos: Vec<f32>,
    pub neg: Vec<f32>,
}

impl GuidanceChannels {
    pub fn zeros(dims: Dims) -> Self {
        let n = voxel_count(dims);
        Self {
            dims,
            pos: vec![0.0; n],
            neg: vec![0.0; n],
        }
    }
}

/// Image plus guidance, in that channel order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub dims: Dims,
    pub image: Vec<f32>,
    pub pos: Vec<f32>,
    pub neg: Vec<f32>,
}

impl ModelInput {
    pub fn channels(&self) -> [&[f32]; 3] {
        [&self.image, &self.pos, &self.neg]
    }

    pub fn len(&self) -> usize {
        self.image.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image.is_empty()
    }
}

/// Renders each side of `clicks` as the voxelwise max of truncated Gaussians
/// `exp(-d^2 / (2 sigma^2))`, zero beyond `3 sigma`.
pub fn encode_clicks(clicks: &ClickSet, dims: Dims, sigma: f64) -> Result<GuidanceChannels> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(crate::Error::InvalidParameter(format!("sigma {sigma} must be positive")));
    }
    clicks.validate(dims)?;
    let mut g = GuidanceChannels::zeros(dims);
    for c in &clicks.positive {
        splat(&mut g.pos, dims, *c, sigma);
    }
    for c in &clicks.negative {
        splat(&mut g.neg, dims, *c, sigma);
    }
    Ok(g)
}

fn splat(channel: &mut [f32], dims: Dims, center: [usize; 3], sigma: f64) {
    let cutoff = 3.0 * sigma;
    let r = cutoff.floor() as i64;
    let lo = |a: usize| (center[a] as i64 - r).max(0) as usize;
    let hi = |a: usize| ((center[a] as i64 + r) as usize).min(dims[a] - 1);
    let denom = 2.0 * sigma * sigma;
    for z in lo(2)..=hi(2) {
        for y in lo(1)..=hi(1) {
            for x in lo(0)..=hi(0) {
                let d2 = [x, y, z]
                    .iter()
                    .zip(center)
                    .map(|(&p, c)| (p as f64 - c as f64).powi(2))
                    .sum::<f64>();
                if d2 > cutoff * cutoff {
                    continue;
                }
                let value = (-d2 / denom).exp() as f32;
                let i = linear_index(dims, x, y, z);
                if value > channel[i] {
                    channel[i] = value;
                }
            }
        }
    }
}

/// Standardizes the image (unchanged when constant) and stacks it with the
/// guidance channels; `None` means zero guidance.
pub fn compose_input(v: &Volume, g: Option<&GuidanceChannels>) -> Result<ModelInput> {
    let dims = v.dims();
    let (pos, neg) = match g {
        Some(g) => {
            ensure_same_dims(dims, g.dims)?;
            (g.pos.clone(), g.neg.clone())
        }
        None => (vec![0.0; v.len()], vec![0.0; v.len()]),
    };
    Ok(ModelInput {
        dims,
        image: normalize(v.data()),
        pos,
        neg,
    })
}

fn normalize(data: &[f32]) -> Vec<f32> {
    let n = data.len() as f64;
    let mean = data.iter().map(|&x| f64::from(x)).sum::<f64>() / n;
    let var = data
        .iter()
        .map(|&x| (f64::from(x) - mean).powi(2))
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    if std == 0.0 || !std.is_finite() {
        return data.to_vec();
    }
    data.iter()
        .map(|&x| ((f64::from(x) - mean) / std) as f32)
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ClickSimOptions {
    /// Pick uniformly among a component's EDT-maximal voxels instead of the
    /// lowest-index one.
    pub jitter: bool,
    pub seed: u64,
}

/// Places up to `max_clicks` corrective clicks: one per error component,
/// largest first, alternating false-negative (positive click) and
/// false-positive (negative click) regions. Each click sits at the interior
/// point of its component (EDT argmax, lowest linear index on ties).
pub fn simulate_clicks(pred: &LabelMask, gt: &LabelMask, max_clicks: usize, seed: u64) -> Result<ClickSet> {
    simulate_clicks_with(pred, gt, max_clicks, ClickSimOptions { jitter: false, seed })
}

pub fn simulate_clicks_with(
    pred: &LabelMask,
    gt: &LabelMask,
    max_clicks: usize,
    opts: ClickSimOptions,
) -> Result<ClickSet> {
    ensure_same_dims(gt.dims(), pred.dims())?;
    let dims = gt.dims();
    let region = |want_gt: bool| {
        let bits: Vec<bool> = gt
            .data()
            .iter()
            .zip(pred.data())
            .map(|(&g, &p)| (g != 0) == want_gt && (p != 0) != want_gt)
            .collect();
        LabelMask::from_bools(dims, &bits).expect("same dims")
    };
    let fn_comps = connected_components(&region(true));
    let fp_comps = connected_components(&region(false));

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut clicks = ClickSet::default();
    let (mut next_fn, mut next_fp) = (1u32, 1u32);
    let mut positive_turn = true;
    while clicks.len() < max_clicks {
        let fn_left = (next_fn as usize) <= fn_comps.count();
        let fp_left = (next_fp as usize) <= fp_comps.count();
        if !fn_left && !fp_left {
            break;
        }
        let take_fn = fn_left && (positive_turn || !fp_left);
        if take_fn {
            let voxels = fn_comps.voxels(next_fn);
            clicks.positive.push(interior_point(dims, &voxels, opts.jitter, &mut rng));
            next_fn += 1;
        } else {
            let voxels = fp_comps.voxels(next_fp);
            clicks.negative.push(interior_point(dims, &voxels, opts.jitter, &mut rng));
            next_fp += 1;
        }
        positive_turn = !take_fn;
    }
    Ok(clicks)
}

/// EDT argmax of a component, with everything outside the component
/// (including the region beyond the grid) counted as background.
fn interior_point(dims: Dims, voxels: &[usize], jitter: bool, rng: &mut ChaCha8Rng) -> [usize; 3] {
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for &i in voxels {
        let c = coords(dims, i);
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    // bounding box with a one-voxel background margin
    let bdims = [hi[0] - lo[0] + 3, hi[1] - lo[1] + 3, hi[2] - lo[2] + 3];
    let mut boxed = LabelMask::empty(bdims);
    for &i in voxels {
        let c = coords(dims, i);
        boxed.set(c[0] - lo[0] + 1, c[1] - lo[1] + 1, c[2] - lo[2] + 1, true);
    }
    let d2 = edt_squared(&boxed);
    let to_box = |c: [usize; 3]| linear_index(bdims, c[0] - lo[0] + 1, c[1] - lo[1] + 1, c[2] - lo[2] + 1);
    let best = voxels
        .iter()
        .map(|&i| d2[to_box(coords(dims, i))])
        .fold(f64::NEG_INFINITY, f64::max);
    // `voxels` is ascending, so the first maximum has the lowest index
    let ties: Vec<usize> = voxels
        .iter()
        .copied()
        .filter(|&i| d2[to_box(coords(dims, i))] == best)
        .collect();
    let chosen = if jitter {
        *ties.choose(rng).expect("component is non-empty")
    } else {
        ties[0]
    };
    coords(dims, chosen)
}
